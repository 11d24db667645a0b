//! Seeded train/test partitions.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
            stratified: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Partition {
    /// Indices into the input, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Splits items by class key. Each stratum gets `round(fraction · n)`
/// training members; strata with fewer than two members stay whole in train.
pub fn split<K: Ord + Clone + std::fmt::Display>(keys: &[K], spec: &SplitSpec) -> Result<Partition> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        bail!("train fraction must be in (0, 1), got {}", spec.train_fraction);
    }
    if keys.len() < 2 {
        bail!("need at least 2 entries to split, got {}", keys.len());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut part = Partition::default();
    let strata: Vec<Vec<usize>> = if spec.stratified {
        let mut by_key: BTreeMap<K, Vec<usize>> = BTreeMap::new();
        for (i, k) in keys.iter().enumerate() {
            by_key.entry(k.clone()).or_default().push(i);
        }
        for (k, members) in &by_key {
            if members.len() < 2 {
                part.warnings.push(format!(
                    "class `{k}` has {} member(s); kept whole in train",
                    members.len()
                ));
            }
        }
        by_key.into_values().collect()
    } else {
        vec![(0..keys.len()).collect()]
    };
    for mut members in strata {
        if members.len() < 2 {
            part.train.extend(members);
            continue;
        }
        members.shuffle(&mut rng);
        let n_train = (spec.train_fraction * members.len() as f64).round() as usize;
        let (a, b) = members.split_at(n_train);
        part.train.extend_from_slice(a);
        part.test.extend_from_slice(b);
    }
    part.train.sort_unstable();
    part.test.sort_unstable();
    Ok(part)
}
