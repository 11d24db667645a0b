//! Seeded fixtures shared by the benchmarks.

use dmgcam_core::{DavRecord, Init, Label, Network, NetworkConfig, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform values in `[-1, 1)` from a fixed seed.
pub fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("shape matches data")
}

pub fn tiny_network(size: usize) -> Network<f32> {
    Network::build(NetworkConfig::tiny([3, size, size], 2), Init::HeUniform, 0).expect("tiny config is valid")
}

/// `n` records with random DAV values and severity labels.
pub fn dav_records(n: usize, seed: u64) -> Vec<DavRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = [Label::None, Label::Mild, Label::Severe];
    (0..n)
        .map(|i| {
            DavRecord::new(
                format!("img_{i}"),
                rng.gen_range(0.0..1.0),
                Some(labels[rng.gen_range(0..3)]),
            )
            .expect("finite dav")
        })
        .collect()
}
