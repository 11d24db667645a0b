//! Localization and classification metrics.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::saliency::BinaryMask;

/// IOU score at or above which a localization counts as a detection.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.4;

/// A predicted and a reference mask of identical dimensions.
#[derive(Clone, Debug)]
pub struct MaskPair<'a> {
    pub predicted: &'a BinaryMask,
    pub reference: &'a BinaryMask,
}

impl<'a> MaskPair<'a> {
    pub fn new(predicted: &'a BinaryMask, reference: &'a BinaryMask) -> Result<Self> {
        let (a, b) = (
            (predicted.height(), predicted.width()),
            (reference.height(), reference.width()),
        );
        if a != b {
            return Err(Error::shape(
                "iou",
                "mask dimensions",
                format!("{}×{}", b.0, b.1),
                format!("{}×{}", a.0, a.1),
            ));
        }
        Ok(MaskPair { predicted, reference })
    }

    pub fn iou(&self) -> f64 {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&p, &r) in self.predicted.data().iter().zip(self.reference.data()) {
            let (p, r) = (p == BinaryMask::ON, r == BinaryMask::ON);
            inter += (p && r) as usize;
            union += (p || r) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Overlap over union of the 255-pixels. Two empty masks score 1.0.
pub fn iou(predicted: &BinaryMask, reference: &BinaryMask) -> Result<f64> {
    Ok(MaskPair::new(predicted, reference)?.iou())
}

#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1 divisor); 0 for a single value.
    pub std: f64,
    pub threshold: f64,
    /// Fraction of values at or above `threshold`.
    pub detection_rate: f64,
}

pub fn iou_report(ious: &[f64], detection_threshold: f64) -> Result<IouReport> {
    if ious.is_empty() {
        return Err(Error::Empty("iou_report values"));
    }
    if let Some(v) = ious.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("iou_report", format!("IOU value {v} outside [0, 1]")));
    }
    let n = ious.len() as f64;
    let mean = ious.iter().sum::<f64>() / n;
    let std = if ious.len() > 1 {
        (ious.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let hits = ious.iter().filter(|&&v| v >= detection_threshold).count();
    Ok(IouReport {
        values: ious.to_vec(),
        mean,
        std,
        threshold: detection_threshold,
        detection_rate: hits as f64 / n,
    })
}

impl IouReport {
    /// `image,iou` rows followed by nothing else; ids default to 1-based indices.
    pub fn write_csv<W: Write>(&self, w: W, ids: Option<&[String]>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["image_id", "iou"])?;
        for (i, v) in self.values.iter().enumerate() {
            let id = ids
                .and_then(|ids| ids.get(i).cloned())
                .unwrap_or_else(|| (i + 1).to_string());
            wtr.write_record([id, format!("{v:.6}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Aligned text table: one row per report, one column per image, then
/// `mean ± std` and the detection rate.
pub fn iou_table(rows: &[(&str, &IouReport)]) -> String {
    let cols = rows.iter().map(|(_, r)| r.values.len()).max().unwrap_or(0);
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(4);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "IOU");
    for i in 1..=cols {
        let _ = write!(out, " {i:>6}");
    }
    let _ = writeln!(out, " {:>15} {:>9}", "Average", "Detected");
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for i in 0..cols {
            match r.values.get(i) {
                Some(v) => {
                    let _ = write!(out, " {v:>6.3}");
                }
                None => {
                    let _ = write!(out, " {:>6}", "");
                }
            }
        }
        let avg = format!("{:.3} ± {:.3}", r.mean, r.std);
        let _ = writeln!(out, " {avg:>15} {:>8.0}%", r.detection_rate * 100.0);
    }
    out
}

/// Fraction of positions where prediction equals reference.
pub fn accuracy<L: PartialEq>(predictions: &[L], references: &[L]) -> Result<f64> {
    if predictions.len() != references.len() {
        return Err(Error::shape("accuracy", "length", references.len(), predictions.len()));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("accuracy inputs"));
    }
    let hits = predictions.iter().zip(references).filter(|(p, r)| p == r).count();
    Ok(hits as f64 / predictions.len() as f64)
}
