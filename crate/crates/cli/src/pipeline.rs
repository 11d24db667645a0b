//! Compositions shared by the subcommands.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use dmgcam_core::network::weights;
use dmgcam_core::saliency::{class_activation_map, DetectionMap};
use dmgcam_core::{
    assess, binary_mask, iou, BinaryMask, Dataset, DavRecord, Label, LabelScheme, LayerKind, Network, Preset, Tensor,
    DAMAGE_CLASS,
};

use crate::imaging::{load_image, load_mask, preprocess};
use crate::manifest::ManifestEntry;

/// Loads a weight file for `preset`. The class count comes from the head
/// bias; the input size, when not given, is the smallest square size whose
/// first dense layer matches the stored weights.
pub fn load_network(path: &Path, preset: Preset, input_size: Option<usize>) -> Result<Network> {
    let tensors = weights::read_file(path).with_context(|| format!("cannot load weights {}", path.display()))?;
    let probe = preset.config(preset.default_input_size(), preset.default_classes());
    let head = probe.head_name().ok_or_else(|| anyhow!("preset has no output layer"))?;
    let head_bias = format!("{head}.bias");
    let classes = tensors
        .iter()
        .find(|(n, _)| *n == head_bias)
        .map(|(_, t)| t.len())
        .ok_or_else(|| anyhow!("{}: missing tensor `{head_bias}`", path.display()))?;
    let size = match input_size {
        Some(s) => s,
        None => infer_input_size(preset, classes, &tensors).unwrap_or(preset.default_input_size()),
    };
    Network::from_tensors(preset.config(size, classes), tensors).with_context(|| format!("weights {}", path.display()))
}

fn infer_input_size(preset: Preset, classes: usize, tensors: &[(String, Tensor)]) -> Option<usize> {
    let config = preset.config(preset.default_input_size(), classes);
    let dense = config
        .layers
        .iter()
        .find(|l| matches!(l.kind, LayerKind::Dense { .. }))?;
    let name = format!("{}.weight", dense.name);
    let rows = tensors.iter().find(|(n, _)| *n == name)?.1.shape().first().copied()?;
    (1..=1024).find(|&s| {
        let c = preset.config(s, classes);
        let (Ok(shapes), Some(i)) = (c.output_shapes(), c.layer_index(&dense.name)) else {
            return false;
        };
        i > 0 && shapes[i - 1].numel() == rows
    })
}

pub fn input_size(net: &Network) -> usize {
    net.config().input_shape[1]
}

/// Scheme used for class indices of a `classes`-way network.
pub fn scheme_for(net: &Network) -> Result<LabelScheme> {
    LabelScheme::for_classes(net.num_classes())
        .ok_or_else(|| anyhow!("no label scheme for a {}-class network", net.num_classes()))
}

/// Preprocessed images and class indices of `entries`.
pub fn load_dataset(entries: &[ManifestEntry], size: usize) -> Result<Dataset> {
    let mut images = Vec::with_capacity(entries.len());
    let mut labels = Vec::with_capacity(entries.len());
    for e in entries {
        images.push(preprocess(&load_image(&e.path)?, size)?);
        labels.push(e.label.class_index());
    }
    Ok(Dataset::new(images, labels)?)
}

/// Damage map of one image file, upsampled to `out` (or the input size).
pub fn map_image(net: &Network, path: &Path, out: Option<(usize, usize)>) -> Result<DetectionMap> {
    let size = input_size(net);
    let img = preprocess(&load_image(path)?, size)?;
    let (h, w) = out.unwrap_or((size, size));
    class_activation_map(net, &img, DAMAGE_CLASS, h, w).with_context(|| format!("mapping {}", path.display()))
}

pub fn dav_records(net: &Network, entries: &[ManifestEntry]) -> Result<Vec<DavRecord>> {
    entries
        .iter()
        .map(|e| {
            let d = map_image(net, &e.path, None)?;
            Ok(DavRecord::new(e.id(), assess::dav(&d.grid)?, Some(e.label))?)
        })
        .collect()
}

pub struct IouRow {
    pub id: String,
    pub label: Label,
    pub iou: f64,
}

/// IOU between the thresholded damage map and the reference mask of every
/// entry that has one. The map is upsampled to the mask resolution.
pub fn iou_rows(net: &Network, entries: &[ManifestEntry], fraction: f64, damage_only: bool) -> Result<Vec<IouRow>> {
    let mut rows = Vec::new();
    for e in entries {
        let Some(mask_path) = &e.mask else { continue };
        if damage_only && !e.label.is_damage() {
            continue;
        }
        let reference: BinaryMask = load_mask(mask_path)?;
        let d = map_image(net, &e.path, Some((reference.height(), reference.width())))?;
        let predicted = binary_mask(&d.map, fraction)?;
        rows.push(IouRow {
            id: e.id(),
            label: e.label,
            iou: iou(&predicted, &reference)?,
        });
    }
    if rows.is_empty() {
        bail!("no entries with reference masks to evaluate");
    }
    Ok(rows)
}
