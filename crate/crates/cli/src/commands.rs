//! Subcommand definitions and their implementations.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmgcam_core::assess::{dav, label_key, read_dav_csv, write_dav_csv};
use dmgcam_core::eval::{iou_table, DEFAULT_DETECTION_THRESHOLD};
use dmgcam_core::saliency::DEFAULT_MASK_FRACTION;
use dmgcam_core::{
    accuracy, binary_mask, dav_histogram, fit_thresholds, iou_report, render_heatmap, DavRecord, Init, Label,
    LabelScheme, Network, Preset, Tensor, ThresholdClassifier, TrainConfig,
};

use crate::imaging::{image_to_tensor, load_image, load_rgb, resize, save_mask, save_rgb, tensor_to_image};
use crate::manifest::{load_manifest, scheme_of, write_manifest, ManifestEntry};
use crate::pipeline::{dav_records, input_size, iou_rows, load_dataset, load_network, map_image, scheme_for};
use crate::split::{split, SplitSpec};
use crate::synth::{generate_synthetic, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(
    name = "dmgcam",
    version,
    about = "Damage detection maps, damage scores and severity classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground-truth masks
    Synth(SynthArgs),
    /// Fine-tune a classifier on a manifest
    Train(TrainArgs),
    /// Class probabilities for images
    Predict(PredictArgs),
    /// Damage detection heatmap for one image
    Map(MapArgs),
    /// Thresholded damage mask for one image
    Mask(MaskArgs),
    /// Damage assessment values for a manifest
    Dav(DavArgs),
    /// Fit the two severity thresholds on labelled DAV records
    FitThresholds(FitArgs),
    /// Classify DAV records with fitted thresholds
    Classify(ClassifyArgs),
    /// IOU of damage masks against reference masks
    EvalIou(EvalIouArgs),
    /// Summary tables from evaluation outputs
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Weight file (DMGW)
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value = "tiny")]
    pub preset: Preset,
    /// Square input size; inferred from the weights when omitted
    #[arg(long)]
    pub input_size: Option<usize>,
}

impl ModelArgs {
    fn load(&self) -> Result<Network> {
        load_network(&self.weights, self.preset, self.input_size)
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 400)]
    pub count: usize,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Proportions of none, mild and severe images
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.5, 0.25, 0.25])]
    pub mix: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output weight file
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "tiny")]
    pub preset: Preset,
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Start from these weights; the head is replaced if the class count differs
    #[arg(long)]
    pub init_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Collapse severe/mild into damage and none into no_damage
    #[arg(long)]
    pub merge_labels: bool,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    /// Plain random split instead of a per-class split
    #[arg(long)]
    pub no_stratify: bool,
    /// Where to write train.csv and test.csv (default: next to the weights)
    #[arg(long)]
    pub split_dir: Option<PathBuf>,
    /// Only train the dense layers
    #[arg(long)]
    pub freeze_conv: bool,
    /// Per-epoch CSV log
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub merge_labels: bool,
    /// CSV output (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    /// Heatmap image (.png or .ppm)
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the thresholded mask
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
    /// Also write the saliency grid as a DMGW tensor
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MASK_FRACTION)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub image: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MASK_FRACTION)]
    pub fraction: f64,
}

#[derive(Debug, Args)]
pub struct DavArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    /// DAV CSV, appended to if it exists
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub merge_labels: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub dav: PathBuf,
    /// Threshold file (`c1,c2`)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub dav: PathBuf,
    #[arg(long)]
    pub thresholds: PathBuf,
    /// CSV output (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalIouArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = DEFAULT_MASK_FRACTION)]
    pub fraction: f64,
    #[arg(long, default_value_t = DEFAULT_DETECTION_THRESHOLD)]
    pub iou_threshold: f64,
    /// Include entries labelled as undamaged
    #[arg(long)]
    pub all: bool,
    /// Per-image IOU CSV
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// IOU CSV as NAME=PATH; one table row each
    #[arg(long = "iou", value_name = "NAME=PATH")]
    pub ious: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_DETECTION_THRESHOLD)]
    pub iou_threshold: f64,
    /// Prediction CSV (with `label` and `predicted` columns) as NAME=PATH
    #[arg(long = "accuracy", value_name = "NAME=PATH")]
    pub accuracies: Vec<String>,
    /// DAV CSV to summarise per class
    #[arg(long)]
    pub dav: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Histogram CSV of the DAV distribution per class
    #[arg(long, requires = "dav")]
    pub hist_out: Option<PathBuf>,
    /// Also write the report text here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::Map(a) => map(a),
        Command::Mask(a) => mask(a),
        Command::Dav(a) => dav_cmd(a),
        Command::FitThresholds(a) => fit(a),
        Command::Classify(a) => classify(a),
        Command::EvalIou(a) => eval_iou(a),
        Command::Report(a) => report(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SyntheticSpec {
        count: a.count,
        size: a.size,
        seed: a.seed,
        mix: [a.mix[0], a.mix[1], a.mix[2]],
    };
    let entries = generate_synthetic(&spec, &a.out)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &entries {
        *counts.entry(e.label.as_str()).or_default() += 1;
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "wrote {} images to {} ({})",
        entries.len(),
        a.out.display(),
        summary.join(" ")
    );
    Ok(())
}

fn subset(entries: &[ManifestEntry], idx: &[usize]) -> Vec<ManifestEntry> {
    idx.iter().map(|&i| entries[i].clone()).collect()
}

fn train(a: TrainArgs) -> Result<()> {
    let entries = load_manifest(&a.manifest, a.merge_labels)?;
    let scheme = scheme_of(&entries);
    let classes = scheme.num_classes();
    let keys: Vec<&str> = entries.iter().map(|e| e.label.as_str()).collect();
    let spec = SplitSpec {
        train_fraction: a.train_fraction,
        seed: a.seed,
        stratified: !a.no_stratify,
    };
    let part = split(&keys, &spec)?;
    for w in &part.warnings {
        eprintln!("warning: {w}");
    }
    let (train_set, test_set) = (subset(&entries, &part.train), subset(&entries, &part.test));
    let split_dir = match &a.split_dir {
        Some(d) => d.clone(),
        None => a.out.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !split_dir.as_os_str().is_empty() {
        fs::create_dir_all(&split_dir)?;
    }
    write_manifest(&split_dir.join("train.csv"), &train_set)?;
    write_manifest(&split_dir.join("test.csv"), &test_set)?;

    let mut net = match &a.init_weights {
        Some(p) => {
            let mut net = load_network(p, a.preset, a.input_size)?;
            if net.num_classes() != classes {
                net.replace_head(classes, a.seed)?;
            }
            net
        }
        None => {
            let size = a.input_size.unwrap_or(a.preset.default_input_size());
            Network::build(a.preset.config(size, classes), Init::HeUniform, a.seed)?
        }
    };
    let size = input_size(&net);
    let train_data = load_dataset(&train_set, size)?;
    let config = TrainConfig {
        learning_rate: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        seed: a.seed,
        dropout_active: true,
        freeze_conv: a.freeze_conv,
    };
    let report = net.fine_tune(&train_data, &config)?;
    let mut log = a.log.as_deref().map(|p| output(Some(p))).transpose()?;
    if let Some(w) = log.as_mut() {
        writeln!(w, "epoch,loss,accuracy")?;
    }
    for e in &report.epochs {
        println!(
            "epoch {:>3}  loss {:.4}  accuracy {:.4}",
            e.epoch + 1,
            e.mean_loss,
            e.accuracy
        );
        if let Some(w) = log.as_mut() {
            writeln!(w, "{},{},{}", e.epoch + 1, e.mean_loss, e.accuracy)?;
        }
    }
    if let Some(w) = log.as_mut() {
        w.flush()?;
    }
    let train_acc = accuracy(&net.classify(&train_data)?, &train_data.labels)?;
    println!("train_accuracy {train_acc:.4}");
    if !test_set.is_empty() {
        let test_data = load_dataset(&test_set, size)?;
        let test_acc = accuracy(&net.classify(&test_data)?, &test_data.labels)?;
        println!("test_accuracy {test_acc:.4}");
    }
    net.save_weights(&a.out)
        .with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("saved {}", a.out.display());
    Ok(())
}

fn predict(a: PredictArgs) -> Result<()> {
    let net = a.model.load()?;
    let scheme = scheme_for(&net)?;
    let size = input_size(&net);
    let entries: Vec<(String, Option<Label>, PathBuf)> = match (&a.manifest, &a.image) {
        (Some(m), _) => load_manifest(m, a.merge_labels)?
            .into_iter()
            .map(|e| (e.id(), Some(e.label), e.path))
            .collect(),
        (None, Some(p)) => vec![(p.display().to_string(), None, p.clone())],
        (None, None) => bail!("give --manifest or --image"),
    };
    let mut wtr = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["image_id".to_string(), "label".into(), "predicted".into()];
    header.extend(scheme.labels().iter().map(|l| format!("p_{l}")));
    wtr.write_record(&header)?;
    let (mut preds, mut refs) = (Vec::new(), Vec::new());
    for (id, label, path) in &entries {
        let img = crate::imaging::preprocess(&load_image(path)?, size)?;
        let probs = net.predict(&img)?;
        let best = (0..probs.len()).fold(0, |b, i| if probs[i] > probs[b] { i } else { b });
        let predicted = scheme
            .from_index(best)
            .ok_or_else(|| anyhow!("class {best} has no label"))?;
        let mut rec = vec![
            id.clone(),
            label.map(|l| l.to_string()).unwrap_or_default(),
            predicted.to_string(),
        ];
        rec.extend(probs.iter().map(|p| format!("{p:.6}")));
        wtr.write_record(&rec)?;
        if let Some(l) = label.filter(|l| l.scheme() == scheme) {
            preds.push(predicted);
            refs.push(l);
        }
    }
    wtr.flush()?;
    if !refs.is_empty() {
        eprintln!("accuracy {:.4} ({} images)", accuracy(&preds, &refs)?, refs.len());
    }
    Ok(())
}

fn map(a: MapArgs) -> Result<()> {
    let net = a.model.load()?;
    let size = input_size(&net);
    let d = map_image(&net, &a.image, None)?;
    let base = tensor_to_image(&resize(&image_to_tensor(&load_rgb(&a.image)?), size)?)?;
    save_rgb(&a.out, &render_heatmap(&d.map, &base)?)?;
    if let Some(p) = &a.mask_out {
        save_mask(p, &binary_mask(&d.map, a.fraction)?)?;
    }
    if let Some(p) = &a.grid_out {
        let t: Tensor<f64> = d.grid.to_tensor();
        dmgcam_core::network::weights::write_file(p, &[("saliency", &t)])?;
    }
    println!("dav {}", dav(&d.grid)?);
    println!("p_damage {:.6}", d.probabilities[0]);
    Ok(())
}

fn mask(a: MaskArgs) -> Result<()> {
    let net = a.model.load()?;
    let d = map_image(&net, &a.image, None)?;
    let m = binary_mask(&d.map, a.fraction)?;
    save_mask(&a.out, &m)?;
    println!("area_fraction {:.6}", m.area_fraction());
    Ok(())
}

fn dav_cmd(a: DavArgs) -> Result<()> {
    let net = a.model.load()?;
    let entries = load_manifest(&a.manifest, a.merge_labels)?;
    let records = dav_records(&net, &entries)?;
    let fresh = fs::metadata(&a.out).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.out)
        .with_context(|| format!("cannot open {}", a.out.display()))?;
    write_dav_csv(BufWriter::new(file), &records, fresh)?;
    for (class, mean) in class_means(&records) {
        println!("mean_dav {class} {mean:.6}");
    }
    Ok(())
}

fn class_means(records: &[DavRecord]) -> Vec<(String, f64)> {
    let mut by: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = by.entry(label_key(r)).or_default();
        e.0 += r.dav;
        e.1 += 1;
    }
    by.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn read_records(path: &Path) -> Result<Vec<DavRecord>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_dav_csv(f).with_context(|| format!("reading {}", path.display()))
}

fn fit(a: FitArgs) -> Result<()> {
    let records = read_records(&a.dav)?;
    if let Some(r) = records
        .iter()
        .find(|r| r.label.map(Label::scheme) != Some(LabelScheme::Severity))
    {
        bail!("record `{}` lacks a severe/mild/none label", r.image_id);
    }
    let (clf, acc) = fit_thresholds(&records)?;
    fs::write(&a.out, format!("{}\n", clf.to_line())).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("thresholds {}", clf.to_line());
    println!("train_accuracy {acc:.4}");
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let records = read_records(&a.dav)?;
    let text = fs::read_to_string(&a.thresholds).with_context(|| format!("cannot read {}", a.thresholds.display()))?;
    let clf = ThresholdClassifier::parse_line(text.lines().next().unwrap_or(""))?;
    let to_stdout = a.out.is_none();
    let mut wtr = csv::Writer::from_writer(output(a.out.as_deref())?);
    wtr.write_record(["image_id", "dav", "label", "predicted"])?;
    let (mut preds, mut refs) = (Vec::new(), Vec::new());
    for r in &records {
        let p = clf.classify(r.dav);
        wtr.write_record([
            r.image_id.as_str(),
            &r.dav.to_string(),
            r.label.map(Label::as_str).unwrap_or(""),
            p.as_str(),
        ])?;
        if let Some(l) = r.label.filter(|l| l.scheme() == LabelScheme::Severity) {
            preds.push(p);
            refs.push(l);
        }
    }
    wtr.flush()?;
    drop(wtr);
    if !refs.is_empty() {
        let line = format!("accuracy {:.4}", accuracy(&preds, &refs)?);
        if to_stdout {
            eprintln!("{line}");
        } else {
            println!("{line}");
        }
    }
    Ok(())
}

fn eval_iou(a: EvalIouArgs) -> Result<()> {
    let net = a.model.load()?;
    let entries = load_manifest(&a.manifest, false)?;
    let rows = iou_rows(&net, &entries, a.fraction, !a.all)?;
    let values: Vec<f64> = rows.iter().map(|r| r.iou).collect();
    let report = iou_report(&values, a.iou_threshold)?;
    if let Some(p) = &a.out {
        let ids: Vec<String> = rows.iter().map(|r| r.id.clone()).collect();
        report.write_csv(BufWriter::new(File::create(p)?), Some(&ids))?;
    }
    println!(
        "images {}  mean_iou {:.4}  std {:.4}  detected {:.4}",
        values.len(),
        report.mean,
        report.std,
        report.detection_rate
    );
    Ok(())
}

fn named_path(s: &str) -> Result<(String, PathBuf)> {
    let (name, path) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected NAME=PATH, got `{s}`"))?;
    Ok((name.to_string(), PathBuf::from(path)))
}

fn read_column(path: &Path, cols: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = cols
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| anyhow!("{}: missing column `{c}`", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        out.push(idx.iter().map(|&i| row.get(i).unwrap_or("").to_string()).collect());
    }
    Ok(out)
}

fn report(a: ReportArgs) -> Result<()> {
    if a.ious.is_empty() && a.accuracies.is_empty() && a.dav.is_none() {
        bail!("nothing to report; give --iou, --accuracy or --dav");
    }
    let mut text = String::new();
    if !a.ious.is_empty() {
        let mut reports = Vec::new();
        for spec in &a.ious {
            let (name, path) = named_path(spec)?;
            let values = read_column(&path, &["iou"])?
                .iter()
                .map(|r| {
                    r[0].parse::<f64>()
                        .with_context(|| format!("{}: bad IOU `{}`", path.display(), r[0]))
                })
                .collect::<Result<Vec<_>>>()?;
            reports.push((name, iou_report(&values, a.iou_threshold)?));
        }
        let rows: Vec<(&str, &_)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
        text.push_str(&iou_table(&rows));
    }
    if !a.accuracies.is_empty() {
        text.push_str(&format!("{:<16} {:>8} {:>8}\n", "Dataset", "Images", "Accuracy"));
        for spec in &a.accuracies {
            let (name, path) = named_path(spec)?;
            let rows = read_column(&path, &["label", "predicted"])?;
            let (refs, preds): (Vec<_>, Vec<_>) = rows.into_iter().map(|r| (r[0].clone(), r[1].clone())).unzip();
            let acc = accuracy(&preds, &refs).with_context(|| format!("{}", path.display()))?;
            text.push_str(&format!("{name:<16} {:>8} {:>7.1}%\n", refs.len(), acc * 100.0));
        }
    }
    if let Some(p) = &a.dav {
        let records = read_records(p)?;
        for (class, mean) in class_means(&records) {
            text.push_str(&format!("mean_dav {class} {mean:.6}\n"));
        }
        if let Some(h) = &a.hist_out {
            let hist = dav_histogram(&records, a.bins, label_key)?;
            hist.write_csv(BufWriter::new(File::create(h)?))?;
        }
    }
    print!("{text}");
    if let Some(p) = &a.out {
        fs::write(p, &text).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}
