//! Damage localization and severity scoring with gradient-weighted class
//! activation maps.
//!
//! A small, dependency-light CNN engine ([`tensor`], [`network`]) carries a
//! binary damage classifier. [`saliency`] turns the classifier's gradients
//! into a damage detection map, [`assess`] reduces the map to a scalar damage
//! assessment value (DAV) and fits a severity classifier on it, and [`eval`]
//! scores localization against reference masks.

// Range checks are written `!(x > lo)` so NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assess;
pub mod error;
pub mod eval;
pub mod labels;
pub mod network;
pub mod saliency;
pub mod tensor;

pub use assess::{classify_dav, dav, dav_histogram, fit_thresholds, DavHistogram, DavRecord, ThresholdClassifier};
pub use error::{Error, Result};
pub use eval::{accuracy, iou, iou_report, IouReport, MaskPair};
pub use labels::{Label, LabelScheme, DAMAGE_CLASS};
pub use network::{
    build_network, ActivationTrace, Dataset, Init, LayerKind, LayerSpec, Network, NetworkConfig, ParameterStore,
    Preset, TrainConfig, TrainReport,
};
pub use saliency::{
    binary_mask, channel_weights, damage_detection_map, render_heatmap, saliency_grid, BinaryMask, ChannelWeights,
    SaliencyGrid, SaliencyMap,
};
pub use tensor::{Real, Tensor};
