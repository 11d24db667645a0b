//! Synthetic damage dataset.
//!
//! Backgrounds are smooth colour gradients with a faint low-frequency wave
//! and pixel noise. Damaged images add one to three speckled rectangles
//! ("rubble") whose union is the ground-truth mask. Severity follows the
//! covered area: mild covers 5–15% of the pixels, severe more than 15% and
//! at most 30%.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dmgcam_core::{BinaryMask, Label};
use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{save_mask, save_rgb};
use crate::manifest::{write_manifest, ManifestEntry};

pub const MILD_AREA: (f64, f64) = (0.05, 0.15);
pub const SEVERE_AREA: (f64, f64) = (0.15, 0.30);

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub count: usize,
    pub size: usize,
    pub seed: u64,
    /// Proportions of none, mild and severe images.
    pub mix: [f64; 3],
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            count: 400,
            size: 64,
            seed: 0,
            mix: [0.5, 0.25, 0.25],
        }
    }
}

pub struct Sample {
    pub image: RgbImage,
    pub mask: BinaryMask,
    pub label: Label,
}

/// Whether an area fraction is admissible for a severity label.
pub fn area_matches(label: Label, fraction: f64) -> bool {
    match label {
        Label::None => fraction == 0.0,
        Label::Mild => (MILD_AREA.0..=MILD_AREA.1).contains(&fraction),
        Label::Severe => fraction > SEVERE_AREA.0 && fraction <= SEVERE_AREA.1,
        _ => false,
    }
}

/// Per-class counts by largest remainder, with every class holding at least
/// one image.
fn quotas(count: usize, mix: [f64; 3]) -> Result<[usize; 3]> {
    if mix.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        bail!("class mix must be positive, got {mix:?}");
    }
    if count < 3 {
        bail!("need at least 3 images for three classes, got {count}");
    }
    let total: f64 = mix.iter().sum();
    let exact: Vec<f64> = mix.iter().map(|m| m / total * count as f64).collect();
    let mut q = [0usize; 3];
    for i in 0..3 {
        q[i] = exact[i].floor() as usize;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut left = count - q.iter().sum::<usize>();
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        q[i] += 1;
        left -= 1;
    }
    for i in 0..3 {
        if q[i] == 0 {
            let donor = (0..3).max_by_key(|&j| q[j]).unwrap_or(0);
            q[donor] -= 1;
            q[i] = 1;
        }
    }
    Ok(q)
}

fn background(rng: &mut ChaCha8Rng, size: usize) -> Vec<[f64; 3]> {
    let c0: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
    let c1: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.3..0.7));
    let theta = rng.gen_range(0.0..2.0 * PI);
    let (dx, dy) = (theta.cos(), theta.sin());
    let (fx, fy) = (rng.gen_range(0.0..1.5), rng.gen_range(0.0..1.5));
    let phase = rng.gen_range(0.0..2.0 * PI);
    let s = size as f64;
    let mut px = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (u, v) = (x as f64 / s - 0.5, y as f64 / s - 0.5);
            let t = (0.5 + (u * dx + v * dy) / 2f64.sqrt()).clamp(0.0, 1.0);
            let wave = 0.04 * (2.0 * PI * (fx * u + fy * v) + phase).sin();
            px.push(std::array::from_fn(|c| {
                c0[c] * (1.0 - t) + c1[c] * t + wave + rng.gen_range(-0.02..0.02)
            }));
        }
    }
    px
}

type Rect = (usize, usize, usize, usize);

fn place_patches(rng: &mut ChaCha8Rng, size: usize, label: Label) -> Vec<Rect> {
    let (lo, hi) = if label == Label::Mild { MILD_AREA } else { SEVERE_AREA };
    let cells = (size * size) as f64;
    for _ in 0..1000 {
        let target = rng.gen_range(lo..hi);
        let k = rng.gen_range(1..=3usize);
        let rects: Vec<Rect> = (0..k)
            .map(|_| {
                let area = target * cells / k as f64;
                let aspect = rng.gen_range(0.5f64..2.0);
                let w = ((area * aspect).sqrt().round() as usize).clamp(2, size);
                let h = ((area / w as f64).round() as usize).clamp(2, size);
                (rng.gen_range(0..=size - h), rng.gen_range(0..=size - w), h, w)
            })
            .collect();
        if area_matches(label, rect_mask(size, &rects).area_fraction()) {
            return rects;
        }
    }
    // Fallback: a single square at the midpoint of the admissible range.
    let side = (((lo + hi) / 2.0 * cells).sqrt().round() as usize).clamp(2, size);
    vec![((size - side) / 2, (size - side) / 2, side, side)]
}

fn rect_mask(size: usize, rects: &[Rect]) -> BinaryMask {
    BinaryMask::from_fn(size, size, |y, x| {
        rects
            .iter()
            .any(|&(r, c, h, w)| y >= r && y < r + h && x >= c && x < c + w)
    })
}

/// One image of the given severity label.
pub fn generate_sample(rng: &mut ChaCha8Rng, size: usize, label: Label) -> Sample {
    let mut px = background(rng, size);
    let mask = if label == Label::None {
        BinaryMask::empty(size, size)
    } else {
        rect_mask(size, &place_patches(rng, size, label))
    };
    for (i, p) in px.iter_mut().enumerate() {
        if mask.data()[i] == BinaryMask::ON {
            let level = if rng.gen_bool(0.5) {
                rng.gen_range(0.85..1.0)
            } else {
                rng.gen_range(0.0..0.15)
            };
            *p = std::array::from_fn(|_| level + rng.gen_range(-0.03..0.03));
        }
    }
    let image = RgbImage::from_fn(size as u32, size as u32, |x, y| {
        let p = px[y as usize * size + x as usize];
        Rgb(std::array::from_fn(|c| (p[c].clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    Sample { image, mask, label }
}

/// Labels in generation order for `spec`.
pub fn label_plan(spec: &SyntheticSpec) -> Result<Vec<Label>> {
    let q = quotas(spec.count, spec.mix)?;
    let mut labels: Vec<Label> = [Label::None, Label::Mild, Label::Severe]
        .iter()
        .zip(q)
        .flat_map(|(&l, n)| std::iter::repeat_n(l, n))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok(labels)
}

/// Writes `images/`, `masks/` and `manifest.csv` under `out`; returns the
/// entries in manifest order.
pub fn generate_synthetic(spec: &SyntheticSpec, out: &Path) -> Result<Vec<ManifestEntry>> {
    if spec.size < 8 {
        bail!("image size must be at least 8, got {}", spec.size);
    }
    let labels = label_plan(spec)?;
    let (img_dir, mask_dir) = (out.join("images"), out.join("masks"));
    for d in [&img_dir, &mask_dir] {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    let mut entries = Vec::with_capacity(labels.len());
    for (i, &label) in labels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let s = generate_sample(&mut rng, spec.size, label);
        let img = img_dir.join(format!("img_{i:04}.ppm"));
        let mask = mask_dir.join(format!("img_{i:04}.pgm"));
        save_rgb(&img, &s.image)?;
        save_mask(&mask, &s.mask)?;
        entries.push(ManifestEntry {
            path: img,
            label,
            mask: Some(mask),
        });
    }
    write_manifest(&out.join("manifest.csv"), &entries)?;
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quotas_cover_count_and_every_class() {
        assert_eq!(quotas(400, [0.5, 0.25, 0.25]).unwrap(), [200, 100, 100]);
        assert_eq!(quotas(3, [0.98, 0.01, 0.01]).unwrap(), [1, 1, 1]);
        let q = quotas(7, [1.0, 1.0, 1.0]).unwrap();
        assert_eq!(q.iter().sum::<usize>(), 7);
        assert!(quotas(2, [1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn masks_follow_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for label in [Label::None, Label::Mild, Label::Severe].into_iter().cycle().take(60) {
            let s = generate_sample(&mut rng, 64, label);
            assert_eq!(s.mask.is_empty(), label == Label::None);
            assert!(
                area_matches(label, s.mask.area_fraction()),
                "{label} {}",
                s.mask.area_fraction()
            );
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let a = generate_sample(&mut ChaCha8Rng::seed_from_u64(3), 32, Label::Severe);
        let b = generate_sample(&mut ChaCha8Rng::seed_from_u64(3), 32, Label::Severe);
        assert_eq!(a.image, b.image);
        assert_eq!(a.mask, b.mask);
    }

    #[test]
    fn writes_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            count: 6,
            size: 16,
            ..Default::default()
        };
        let entries = generate_synthetic(&spec, dir.path()).unwrap();
        assert_eq!(entries.len(), 6);
        let back = crate::manifest::load_manifest(&dir.path().join("manifest.csv"), false).unwrap();
        assert_eq!(back.len(), 6);
        assert!(back.iter().all(|e| e.mask.is_some()));
    }
}
