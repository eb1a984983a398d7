//! The five pipeline steps as library functions; `main` only parses flags.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use srfe_core::audio::load_canonical;
use srfe_core::dataset::{parse_manifest, stratified_split, ClipRecord, SplitAssignment, SplitFile, CATEGORY_LABELS};
use srfe_core::features::{read_feature_file, write_feature_file, FeatureExtractor, FeatureImage, FeatureKind, SidecarEntry};
use srfe_core::metrics::{confusion_to_csv, EvalReport};
use srfe_core::nn::checkpoint::{load_model, save_model};
use srfe_core::nn::{init_model, train, DataSet, TrainHistory};

use crate::config::{feature_file_name, RunConfig};

#[derive(Debug, Clone, Default)]
pub struct ExtractSummary {
    pub written: usize,
    /// `(audio file, reason)` for every clip that could not be processed.
    pub failures: Vec<(String, String)>,
}

fn read_records(cfg: &RunConfig) -> Result<Vec<ClipRecord>> {
    let records = parse_manifest(&cfg.manifest).with_context(|| format!("reading manifest {}", cfg.manifest.display()))?;
    if records.is_empty() {
        bail!("manifest {} lists no clips", cfg.manifest.display());
    }
    Ok(records)
}

/// Decodes every manifest clip and writes one feature file per requested
/// kind plus a `manifest.jsonl` sidecar in each kind's directory.
pub fn cmd_extract(cfg: &RunConfig) -> Result<ExtractSummary> {
    let records = read_records(cfg)?;
    let kinds = cfg.feature.kinds();
    let extractor = FeatureExtractor::new(cfg.features.clone(), cfg.sample_rate)?;
    for &kind in &kinds {
        fs::create_dir_all(cfg.kind_dir(kind))?;
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build()?;
    info!("extracting {} clip(s) x {} kind(s) on {} worker(s)", records.len(), kinds.len(), pool.current_num_threads());
    let results: Vec<std::result::Result<(), String>> = pool.install(|| {
        records
            .par_iter()
            .map(|rec| {
                let clip = load_canonical(cfg.audio_dir.join(&rec.filename), cfg.sample_rate, cfg.clip_samples())
                    .map_err(|e| e.to_string())?;
                for &kind in &kinds {
                    let img = extractor.extract_image(&clip, kind).map_err(|e| format!("{kind}: {e}"))?;
                    let path = cfg.kind_dir(kind).join(feature_file_name(&rec.filename));
                    write_feature_file(&img, &path).map_err(|e| format!("{}: {e}", path.display()))?;
                }
                Ok(())
            })
            .collect()
    });
    let mut summary = ExtractSummary::default();
    for &kind in &kinds {
        let mut sidecar = String::new();
        for (rec, res) in records.iter().zip(&results) {
            if res.is_ok() {
                let entry = SidecarEntry {
                    source: rec.filename.clone(),
                    kind,
                    class_id: rec.class_id,
                    category_id: rec.category_id,
                    feature_file: feature_file_name(&rec.filename),
                };
                sidecar.push_str(&serde_json::to_string(&entry)?);
                sidecar.push('\n');
            }
        }
        fs::write(cfg.kind_dir(kind).join("manifest.jsonl"), sidecar)?;
    }
    for (rec, res) in records.iter().zip(results) {
        match res {
            Ok(()) => summary.written += kinds.len(),
            Err(reason) => {
                error!("{}: {reason}", rec.filename);
                summary.failures.push((rec.filename.clone(), reason));
            }
        }
    }
    Ok(summary)
}

pub fn cmd_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    let records = read_records(cfg)?;
    let split = stratified_split(&records, cfg.train_fraction, cfg.seed)?;
    if let Some(dir) = cfg.split_file.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    SplitFile::from(&split).write(&cfg.split_file)?;
    info!("split: {} train / {} validation -> {}", split.train.len(), split.validation.len(), cfg.split_file.display());
    Ok(split)
}

struct Loaded {
    images: Vec<Vec<f32>>,
    labels: Vec<usize>,
    height: usize,
    width: usize,
}

fn load_images(cfg: &RunConfig, kind: FeatureKind, records: &[ClipRecord]) -> Result<Loaded> {
    let dir = cfg.kind_dir(kind);
    let mut out = Loaded { images: Vec::with_capacity(records.len()), labels: Vec::new(), height: 0, width: 0 };
    for rec in records {
        let path = dir.join(feature_file_name(&rec.filename));
        if !path.exists() {
            bail!("missing feature file {}", path.display());
        }
        let img: FeatureImage = read_feature_file(&path).with_context(|| format!("reading {}", path.display()))?;
        if img.kind != kind {
            bail!("{} holds {} features, expected {kind}", path.display(), img.kind);
        }
        if out.images.is_empty() {
            (out.height, out.width) = (img.height, img.width);
        } else if (img.height, img.width) != (out.height, out.width) {
            bail!("{} is {}x{}, others are {}x{}", path.display(), img.height, img.width, out.height, out.width);
        }
        if rec.class_id as usize >= cfg.n_classes {
            bail!("{}: class {} outside 0..{}", rec.filename, rec.class_id, cfg.n_classes);
        }
        out.labels.push(rec.class_id as usize);
        out.images.push(img.values);
    }
    Ok(out)
}

fn read_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    let records = read_records(cfg)?;
    let file = SplitFile::read(&cfg.split_file).with_context(|| format!("reading split {}", cfg.split_file.display()))?;
    Ok(file.resolve(&records)?)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub kind: FeatureKind,
    pub history: TrainHistory,
    pub checkpoint: PathBuf,
}

/// Trains one model per requested kind; writes `<kind>.srnn` and
/// `<kind>_history.csv` under the checkpoint directory.
pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<TrainOutcome>> {
    let split = read_split(cfg)?;
    fs::create_dir_all(&cfg.checkpoint_dir)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let mut outcomes = Vec::new();
    for kind in cfg.feature.kinds() {
        let tr = load_images(cfg, kind, &split.train)?;
        let va = load_images(cfg, kind, &split.validation)?;
        if (tr.height, tr.width) != (va.height, va.width) {
            bail!("{kind}: training images {}x{} but validation images {}x{}", tr.height, tr.width, va.height, va.width);
        }
        info!("{kind}: training on {} images of {}x{}", tr.images.len(), tr.height, tr.width);
        let model = init_model(tr.height, tr.width, cfg.n_classes, cfg.seed)?;
        let (best, history) = train(
            model,
            DataSet { images: &tr.images, labels: &tr.labels },
            DataSet { images: &va.images, labels: &va.labels },
            &train_cfg,
            |_| {},
        )?;
        let checkpoint = cfg.checkpoint_path(kind);
        save_model(&best, &checkpoint)?;
        history.save_csv(&cfg.history_path(kind))?;
        if let Some(b) = history.best_record() {
            info!("{kind}: best epoch {} val_loss {:.4} val_acc {:.3}", b.epoch, b.val_loss, b.val_acc);
        }
        outcomes.push(TrainOutcome { kind, history, checkpoint });
    }
    Ok(outcomes)
}

/// Evaluation output for one feature kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: FeatureKind,
    #[serde(flatten)]
    pub report: EvalReport,
}

fn class_names(records: &[ClipRecord], n: usize) -> Vec<String> {
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for r in records {
        names.entry(r.class_id as usize).or_insert_with(|| r.class_name.clone());
    }
    (0..n).map(|i| names.get(&i).cloned().unwrap_or_else(|| format!("class_{i}"))).collect()
}

/// Predicts the validation split with each kind's checkpoint; writes the
/// report JSON and confusion-matrix CSVs.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<FeatureReport>> {
    let records = read_records(cfg)?;
    let split = read_split(cfg)?;
    fs::create_dir_all(&cfg.report_dir)?;
    let mut reports = Vec::new();
    for kind in cfg.feature.kinds() {
        let model = load_model(&cfg.checkpoint_path(kind))
            .with_context(|| format!("loading {}", cfg.checkpoint_path(kind).display()))?;
        let va = load_images(cfg, kind, &split.validation)?;
        if (model.arch.input_height, model.arch.input_width) != (va.height, va.width) {
            bail!(
                "shape mismatch: checkpoint expects {}x{} inputs, {kind} features are {}x{}",
                model.arch.input_height,
                model.arch.input_width,
                va.height,
                va.width
            );
        }
        let refs: Vec<&[f32]> = va.images.iter().map(Vec::as_slice).collect();
        let (pred, _) = model.predict(&refs)?;
        let report = EvalReport::from_labels(&va.labels, &pred, model.arch.n_classes)?;
        info!("{kind}: accuracy {:.3} macro-F1 {:.3}", report.accuracy, report.class_macro.f1);
        let names = class_names(&records, model.arch.n_classes);
        let stem = cfg.report_dir.join(kind.name());
        fs::write(format!("{}_class_confusion.csv", stem.display()), confusion_to_csv(&report.class_confusion, &names))?;
        if let Some(cat) = &report.category_confusion {
            let labels: Vec<String> = CATEGORY_LABELS.iter().map(|s| s.to_string()).collect();
            fs::write(format!("{}_category_confusion.csv", stem.display()), confusion_to_csv(cat, &labels))?;
        }
        let fr = FeatureReport { feature: kind, report };
        fs::write(cfg.report_path(kind), serde_json::to_string_pretty(&fr)?)?;
        reports.push(fr);
    }
    Ok(reports)
}

/// Percent with one decimal.
pub fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

/// Name → CSV text of every table written by [`cmd_report`].
pub type Tables = BTreeMap<String, String>;

/// Builds the heatmap tables: a summary per feature, and when the reports
/// carry category metrics, one feature × category table per metric and one
/// feature × class precision table per category.
pub fn build_tables(reports: &[FeatureReport]) -> Result<Tables> {
    let first = reports.first().ok_or_else(|| anyhow!("no reports given"))?;
    let n_labels = first.report.class_confusion.n_labels;
    if let Some(bad) = reports.iter().find(|r| r.report.class_confusion.n_labels != n_labels) {
        bail!(
            "inconsistent label counts: {} has {} labels, {} has {n_labels}",
            bad.feature,
            bad.report.class_confusion.n_labels,
            first.feature
        );
    }
    let mut tables = Tables::new();
    let mut summary = String::from("feature,accuracy,macro_precision,macro_recall,macro_f1\n");
    for r in reports {
        let m = &r.report.class_macro;
        summary.push_str(&format!("{},{},{},{},{}\n", r.feature, pct(r.report.accuracy), pct(m.precision), pct(m.recall), pct(m.f1)));
    }
    tables.insert("summary.csv".into(), summary);

    let cats: Option<Vec<_>> = reports.iter().map(|r| r.report.category.as_ref()).collect();
    let Some(cats) = cats else {
        info!("reports have no category block ({n_labels} labels); only the summary table is written");
        return Ok(tables);
    };
    let header = format!("feature,{}\n", CATEGORY_LABELS.join(","));
    type Pick = fn(&srfe_core::metrics::CategoryScores) -> f64;
    let metrics: [(&str, Pick); 4] =
        [("accuracy", |c| c.accuracy), ("precision", |c| c.precision), ("recall", |c| c.recall), ("f1", |c| c.f1)];
    for (name, pick) in metrics {
        let mut t = header.clone();
        for (r, c) in reports.iter().zip(&cats) {
            let cells: Vec<String> = c.per_category.iter().map(|s| pct(pick(s))).collect();
            t.push_str(&format!("{},{}\n", r.feature, cells.join(",")));
        }
        tables.insert(format!("category_{name}.csv"), t);
    }
    for (ci, label) in CATEGORY_LABELS.iter().enumerate() {
        let classes: Vec<String> = (ci * 10..ci * 10 + 10).map(|c| c.to_string()).collect();
        let mut t = format!("feature,{}\n", classes.join(","));
        for r in reports {
            let p = r.report.class_precisions();
            let cells: Vec<String> = p[ci * 10..ci * 10 + 10].iter().map(|&v| pct(v)).collect();
            t.push_str(&format!("{},{}\n", r.feature, cells.join(",")));
        }
        tables.insert(format!("class_precision_{label}.csv"), t);
    }
    Ok(tables)
}

/// Reads the given report files (or every `<kind>_report.json` found in
/// the report directory, in canonical kind order) and writes the tables to
/// `out_dir`.
pub fn cmd_report(cfg: &RunConfig, inputs: &[PathBuf], out_dir: &Path) -> Result<Tables> {
    let paths: Vec<PathBuf> = if inputs.is_empty() {
        FeatureKind::ALL.iter().map(|&k| cfg.report_path(k)).filter(|p| p.exists()).collect()
    } else {
        inputs.to_vec()
    };
    if paths.is_empty() {
        bail!("no report files found in {}", cfg.report_dir.display());
    }
    let mut reports = Vec::new();
    for p in &paths {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        reports.push(serde_json::from_str::<FeatureReport>(&text).with_context(|| format!("parsing {}", p.display()))?);
    }
    let tables = build_tables(&reports)?;
    fs::create_dir_all(out_dir)?;
    for (name, body) in &tables {
        fs::write(out_dir.join(name), body)?;
    }
    Ok(tables)
}
