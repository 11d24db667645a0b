//! Damage assessment values and the two-threshold severity classifier.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::labels::Label;
use crate::saliency::SaliencyGrid;

#[derive(Clone, Debug, PartialEq)]
pub struct DavRecord {
    pub image_id: String,
    pub dav: f64,
    pub label: Option<Label>,
}

impl DavRecord {
    pub fn new(image_id: impl Into<String>, dav: f64, label: Option<Label>) -> Result<Self> {
        if !(dav >= 0.0) || !dav.is_finite() {
            return Err(Error::invalid(
                "dav_record",
                format!("dav must be finite and >= 0, got {dav}"),
            ));
        }
        Ok(DavRecord {
            image_id: image_id.into(),
            dav,
            label,
        })
    }
}

/// Mean of the saliency grid values.
pub fn dav(grid: &SaliencyGrid) -> Result<f64> {
    let n = grid.values().len();
    if n == 0 {
        return Err(Error::Empty("saliency grid"));
    }
    Ok(grid.values().iter().sum::<f64>() / n as f64)
}

/// Optional rescaling applied to the grid before averaging.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DavNormalization {
    /// The plain grid mean.
    #[default]
    Raw,
    /// Grid divided by its own maximum first (0 for an all-zero grid).
    MaxScaled,
}

pub fn dav_with(grid: &SaliencyGrid, norm: DavNormalization) -> Result<f64> {
    let raw = dav(grid)?;
    Ok(match norm {
        DavNormalization::Raw => raw,
        DavNormalization::MaxScaled => {
            let max = grid.max();
            if max > 0.0 {
                raw / max
            } else {
                0.0
            }
        }
    })
}

/// `dav < c1` → none, `c1 ≤ dav ≤ c2` → mild, `dav > c2` → severe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdClassifier {
    pub c1: f64,
    pub c2: f64,
}

impl ThresholdClassifier {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if c1.is_nan() || c2.is_nan() || c1 > c2 {
            return Err(Error::invalid(
                "threshold_classifier",
                format!("need c1 <= c2, got ({c1}, {c2})"),
            ));
        }
        Ok(ThresholdClassifier { c1, c2 })
    }

    pub fn classify(&self, dav: f64) -> Label {
        classify_dav(self, dav)
    }

    /// `c1,c2` on one line; infinite sentinels are written as `inf`/`-inf`.
    pub fn to_line(&self) -> String {
        format!("{},{}", fmt_threshold(self.c1), fmt_threshold(self.c2))
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::invalid("threshold_file", format!("expected `c1,c2`, got `{}`", line.trim()));
        let (a, b) = line.trim().split_once(',').ok_or_else(bad)?;
        let c1: f64 = a.trim().parse().map_err(|_| bad())?;
        let c2: f64 = b.trim().parse().map_err(|_| bad())?;
        Self::new(c1, c2)
    }
}

fn fmt_threshold(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn classify_dav(clf: &ThresholdClassifier, dav: f64) -> Label {
    if dav < clf.c1 {
        Label::None
    } else if dav <= clf.c2 {
        Label::Mild
    } else {
        Label::Severe
    }
}

/// Candidate thresholds: −∞, the midpoints between consecutive distinct
/// sorted values, +∞. Returned with the distinct values themselves.
pub fn threshold_candidates(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let mut cands = Vec::with_capacity(distinct.len() + 1);
    cands.push(f64::NEG_INFINITY);
    cands.extend(distinct.windows(2).map(|p| p[0] + (p[1] - p[0]) / 2.0));
    cands.push(f64::INFINITY);
    (cands, distinct)
}

/// Grid search over candidate pairs `c1 ≤ c2` for the rule with the fewest
/// training errors. Ties go to the lexicographically smallest `(c1, c2)`.
pub fn fit_thresholds(records: &[DavRecord]) -> Result<(ThresholdClassifier, f64)> {
    if records.is_empty() {
        return Err(Error::Empty("fit_thresholds records"));
    }
    let mut labelled = Vec::with_capacity(records.len());
    for r in records {
        match r.label {
            Some(l @ (Label::Severe | Label::Mild | Label::None)) => labelled.push((r.dav, l)),
            other => {
                return Err(Error::invalid(
                    "fit_thresholds",
                    format!("record `{}` needs a severe/mild/none label, has {other:?}", r.image_id),
                ))
            }
        }
    }
    let values: Vec<f64> = labelled.iter().map(|r| r.0).collect();
    let (cands, distinct) = threshold_candidates(&values);
    let m = distinct.len();

    // Per distinct value, how many records of each class sit there.
    let mut at = vec![[0usize; 3]; m];
    for &(v, l) in &labelled {
        let i = distinct
            .binary_search_by(|d| d.total_cmp(&v))
            .expect("value is in distinct set");
        let k = match l {
            Label::None => 0,
            Label::Mild => 1,
            _ => 2,
        };
        at[i][k] += 1;
    }
    // prefix[j][k]: records of class k among the first j distinct values.
    let mut prefix = vec![[0usize; 3]; m + 1];
    for j in 0..m {
        for k in 0..3 {
            prefix[j + 1][k] = prefix[j][k] + at[j][k];
        }
    }
    let severe_total = prefix[m][2];

    // Candidate a lies between distinct[a-1] and distinct[a]; exactly the
    // first `a` distinct values are below it.
    let mut best = (0usize, 0usize, 0usize);
    let mut found = false;
    for a in 0..=m {
        for b in a..=m {
            let correct = prefix[a][0] + (prefix[b][1] - prefix[a][1]) + (severe_total - prefix[b][2]);
            if !found || correct > best.2 {
                best = (a, b, correct);
                found = true;
            }
        }
    }
    let clf = ThresholdClassifier::new(cands[best.0], cands[best.1])?;
    Ok((clf, best.2 as f64 / records.len() as f64))
}

/// Binned DAV distribution per class over shared edges spanning
/// `[0, max dav]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DavHistogram {
    pub edges: Vec<f64>,
    /// class → per-bin counts
    pub counts: BTreeMap<String, Vec<usize>>,
    /// class → per-bin mass (counts / class total)
    pub densities: BTreeMap<String, Vec<f64>>,
}

pub fn dav_histogram<F>(records: &[DavRecord], bins: usize, class_key: F) -> Result<DavHistogram>
where
    F: Fn(&DavRecord) -> String,
{
    if bins == 0 {
        return Err(Error::invalid("dav_histogram", "need at least one bin"));
    }
    let max = records.iter().map(|r| r.dav).fold(0.0, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let width = hi / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|i| if i == bins { hi } else { i as f64 * width })
        .collect();
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for r in records {
        let bin = ((r.dav / width) as usize).min(bins - 1);
        counts.entry(class_key(r)).or_insert_with(|| vec![0; bins])[bin] += 1;
    }
    let densities = counts
        .iter()
        .map(|(k, c)| {
            let total: usize = c.iter().sum();
            (k.clone(), c.iter().map(|&n| n as f64 / total as f64).collect())
        })
        .collect();
    Ok(DavHistogram {
        edges,
        counts,
        densities,
    })
}

/// Class key using the record label, or `unlabeled`.
pub fn label_key(r: &DavRecord) -> String {
    r.label
        .map_or_else(|| "unlabeled".to_string(), |l| l.as_str().to_string())
}

impl DavHistogram {
    /// CSV with header `bin_lo,bin_hi,class,count,density`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["bin_lo", "bin_hi", "class", "count", "density"])?;
        for (class, counts) in &self.counts {
            let dens = &self.densities[class];
            for (i, (&c, &d)) in counts.iter().zip(dens).enumerate() {
                wtr.write_record([
                    self.edges[i].to_string(),
                    self.edges[i + 1].to_string(),
                    class.clone(),
                    c.to_string(),
                    d.to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// CSV with header `image_id,dav,label` (label empty when unknown).
pub fn write_dav_csv<W: Write>(w: W, records: &[DavRecord], header: bool) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    if header {
        wtr.write_record(["image_id", "dav", "label"])?;
    }
    for r in records {
        wtr.write_record([
            r.image_id.as_str(),
            &r.dav.to_string(),
            r.label.map(Label::as_str).unwrap_or(""),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_dav_csv<R: Read>(r: R) -> Result<Vec<DavRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let id = row
            .get(0)
            .ok_or_else(|| Error::invalid("dav_csv", format!("line {line}: missing image_id")))?;
        let dav: f64 = row
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::invalid("dav_csv", format!("line {line}: bad dav value")))?;
        let label = match row.get(2).unwrap_or("") {
            "" => None,
            s => Some(
                s.parse::<Label>()
                    .map_err(|e| Error::invalid("dav_csv", format!("line {line}: {e}")))?,
            ),
        };
        out.push(DavRecord::new(id, dav, label).map_err(|e| Error::invalid("dav_csv", format!("line {line}: {e}")))?);
    }
    Ok(out)
}
