//! Dataset manifests: CSV with header `path,label[,mask]`.
//!
//! Relative paths are resolved against the directory holding the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use dmgcam_core::{Label, LabelScheme};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: Label,
    pub mask: Option<PathBuf>,
}

impl ManifestEntry {
    /// Identifier used in CSV outputs: the file name of the image.
    pub fn id(&self) -> String {
        self.path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.path.display().to_string())
    }
}

pub fn load_manifest(path: &Path, merge_labels: bool) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read manifest {}", path.display()))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")), merge_labels)
        .with_context(|| format!("manifest {}", path.display()))
}

/// Parses manifest text, resolving relative paths against `base`.
pub fn parse_manifest(text: &str, base: &Path, merge_labels: bool) -> Result<Vec<ManifestEntry>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (path_col, label_col) = match (col("path"), col("label")) {
        (Some(p), Some(l)) => (p, l),
        _ => bail!("line 1: header must contain `path` and `label` columns"),
    };
    let mask_col = col("mask");

    let mut entries = Vec::new();
    let mut scheme: Option<LabelScheme> = None;
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| row.get(i).unwrap_or("");
        let label: Label = field(label_col)
            .parse()
            .map_err(|_| anyhow!("line {line}: unknown label `{}`", field(label_col)))?;
        match scheme {
            None => scheme = Some(label.scheme()),
            Some(s) if s != label.scheme() => {
                bail!("line {line}: label `{label}` mixes binary and severity label sets")
            }
            _ => {}
        }
        if field(path_col).is_empty() {
            bail!("line {line}: empty image path");
        }
        let image = base.join(field(path_col));
        if !image.is_file() {
            bail!("line {line}: image not found: {}", image.display());
        }
        let mask = match mask_col.map(field) {
            Some(m) if !m.is_empty() => {
                let m = base.join(m);
                if !m.is_file() {
                    bail!("line {line}: mask not found: {}", m.display());
                }
                Some(m)
            }
            _ => None,
        };
        entries.push(ManifestEntry {
            path: image,
            label: if merge_labels { label.merged() } else { label },
            mask,
        });
    }
    Ok(entries)
}

/// Writes entries with paths relative to the manifest's directory where
/// possible.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let abs_base = fs::canonicalize(base).ok();
    let rel = |p: &Path| -> String {
        let abs_p = fs::canonicalize(p).ok();
        match (&abs_base, abs_p) {
            (Some(b), Some(q)) => pathdiff::diff_paths(&q, b).unwrap_or(q),
            _ => p.to_path_buf(),
        }
        .to_string_lossy()
        .into_owned()
    };
    let with_masks = entries.iter().any(|e| e.mask.is_some());
    let mut wtr = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    if with_masks {
        wtr.write_record(["path", "label", "mask"])?;
    } else {
        wtr.write_record(["path", "label"])?;
    }
    for e in entries {
        let mut rec = vec![rel(&e.path), e.label.to_string()];
        if with_masks {
            rec.push(e.mask.as_deref().map(rel).unwrap_or_default());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Label scheme shared by all entries (binary if empty).
pub fn scheme_of(entries: &[ManifestEntry]) -> LabelScheme {
    entries.first().map_or(LabelScheme::Binary, |e| e.label.scheme())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        for f in ["a.ppm", "b.ppm", "c.ppm", "m.pgm"] {
            fs::write(dir.path().join(f), b"x").unwrap();
        }
        dir
    }

    #[test]
    fn three_lines_three_entries() {
        let dir = fixture();
        let text = "path,label,mask\na.ppm,severe,m.pgm\nb.ppm,mild,\nc.ppm,none,\n";
        let e = parse_manifest(text, dir.path(), false).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(e[0].mask.as_deref(), Some(dir.path().join("m.pgm").as_path()));
        assert!(e[1].mask.is_none());
    }

    #[test]
    fn unknown_label_names_line() {
        let dir = fixture();
        let text = "path,label\na.ppm,none\nb.ppm,flooded\n";
        let err = parse_manifest(text, dir.path(), false).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("flooded"), "{err}");
    }

    #[test]
    fn missing_image_names_line() {
        let dir = fixture();
        let err = parse_manifest("path,label\nzzz.ppm,none\n", dir.path(), false)
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn merge_mode() {
        let dir = fixture();
        let text = "path,label\na.ppm,severe\nb.ppm,mild\nc.ppm,none\n";
        let labels: Vec<Label> = parse_manifest(text, dir.path(), true)
            .unwrap()
            .into_iter()
            .map(|e| e.label)
            .collect();
        assert_eq!(labels, [Label::Damage, Label::Damage, Label::NoDamage]);
    }

    #[test]
    fn mixed_schemes_rejected() {
        let dir = fixture();
        assert!(parse_manifest("path,label\na.ppm,severe\nb.ppm,damage\n", dir.path(), false).is_err());
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = fixture();
        let text = "path,label,mask\na.ppm,severe,m.pgm\nb.ppm,none,\n";
        let e = parse_manifest(text, dir.path(), false).unwrap();
        let out = dir.path().join("copy.csv");
        write_manifest(&out, &e).unwrap();
        let back = load_manifest(&out, false).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(
            fs::canonicalize(&back[0].path).unwrap(),
            fs::canonicalize(&e[0].path).unwrap()
        );
        assert_eq!(back[1].label, Label::None);
    }

    #[test]
    fn sibling_directory_paths_stay_relative() {
        let dir = fixture();
        let e = parse_manifest(
            "path,label
a.ppm,none
",
            dir.path(),
            false,
        )
        .unwrap();
        let out = dir.path().join("run").join("split.csv");
        fs::create_dir_all(out.parent().unwrap()).unwrap();
        write_manifest(&out, &e).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().nth(1), Some("../a.ppm,none"));
        assert_eq!(load_manifest(&out, false).unwrap().len(), 1);
    }
}
