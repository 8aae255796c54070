//! Model zoo: train every (model, imbalance variant) cell per outcome on the
//! development window, evaluate out of time, pick winners, score the latest
//! fully observable cohort and write the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dates::{add_months, ymd};
use crate::error::{Error, Result};
use crate::eval::{fit_isotonic, reliability_curve, IsotonicMap, MetricReport, ReliabilityBin};
use crate::learn::{train, LearnConfig, Model, ModelKind};
use crate::matrix::Matrix;
use crate::panel::{FirmQuarterRow, Outcome, Panel, Split};
use crate::preprocess::{Preprocessor, INDICATOR_SUFFIX};
use crate::resample::{build_variant, DevSet, ImbalanceKind, ImbalanceVariant, DEFAULT_K};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ZooConfig {
    pub models: Vec<ModelKind>,
    pub variants: Vec<ImbalanceKind>,
    pub k_neighbors: usize,
    pub learn: LearnConfig,
}

impl Default for ZooConfig {
    fn default() -> Self {
        ZooConfig {
            models: ModelKind::ALL.to_vec(),
            variants: vec![ImbalanceKind::Weights, ImbalanceKind::SmoteNc],
            k_neighbors: DEFAULT_K,
            learn: LearnConfig::default(),
        }
    }
}

/// Identifies one zoo cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub outcome: Outcome,
    pub variant: ImbalanceKind,
    pub model: ModelKind,
}

impl CellKey {
    /// `<step>_<outcome>_<variant>_<model>_<artifact>.<ext>`
    pub fn file_name(&self, step: &str, artifact: &str, ext: &str) -> String {
        format!("{step}_{}_{}_{}_{artifact}.{ext}", self.outcome, self.variant, self.model)
    }
}

pub fn variant_seed(seed: u64, outcome: Outcome, variant: ImbalanceKind) -> u64 {
    rng::derive_seed(seed, &[rng::tag("variant"), outcome.index() as u64, rng::tag(variant.as_str())])
}

pub fn model_seed(seed: u64, key: &CellKey) -> u64 {
    rng::derive_seed(
        seed,
        &[rng::tag("model"), key.outcome.index() as u64, rng::tag(key.variant.as_str()), rng::tag(key.model.as_str())],
    )
}

/// SMOTE-NC treats only the missingness indicators as categorical.
pub fn categorical_mask(columns: &[String]) -> Vec<bool> {
    columns.iter().map(|c| c.ends_with(INDICATOR_SUFFIX)).collect()
}

fn transform_select(pre: &Preprocessor, rows: &[&FirmQuarterRow], columns: &[String]) -> Result<Matrix> {
    pre.transform(rows)?.select(columns)
}

/// Model-ready development and evaluation matrices for one outcome.
#[derive(Debug, Clone)]
pub struct OutcomeData {
    pub outcome: Outcome,
    pub columns: Vec<String>,
    pub dev: DevSet,
    pub eval_split: Split,
    pub eval_matrix: Matrix,
    pub eval_labels: Vec<bool>,
}

pub fn outcome_data(panel: &Panel, pre: &Preprocessor, outcome: Outcome, columns: &[String]) -> Result<OutcomeData> {
    let dev_rows = panel.evaluable_rows(Split::Dev, outcome);
    if dev_rows.is_empty() {
        return Err(Error::Degenerate(format!("no evaluable development rows for {outcome}")));
    }
    let dev_matrix = transform_select(pre, &dev_rows, columns)?;
    let dev_labels = dev_rows.iter().map(|r| r.label(outcome)).collect();
    let splits: Vec<Split> = dev_rows.iter().map(|r| r.split).collect();
    let dev = DevSet::new(dev_matrix, dev_labels, &splits)?;

    let eval_split = outcome.eval_split();
    let eval_rows = panel.evaluable_rows(eval_split, outcome);
    if eval_rows.is_empty() {
        return Err(Error::Degenerate(format!("no evaluable {eval_split} rows for {outcome}")));
    }
    Ok(OutcomeData {
        outcome,
        columns: columns.to_vec(),
        dev,
        eval_split,
        eval_matrix: transform_select(pre, &eval_rows, columns)?,
        eval_labels: eval_rows.iter().map(|r| r.label(outcome)).collect(),
    })
}

pub fn make_variant(data: &OutcomeData, kind: ImbalanceKind, cfg: &ZooConfig, seed: u64) -> Result<ImbalanceVariant> {
    build_variant(kind, &data.dev, &categorical_mask(&data.columns), cfg.k_neighbors, variant_seed(seed, data.outcome, kind))
}

/// Weighted cells get per-row weights; every other variant trains unweighted.
pub fn train_cell(variant: &ImbalanceVariant, model: ModelKind, learn: &LearnConfig, seed: u64) -> Result<Model> {
    train(model, &variant.matrix, &variant.labels, variant.weights.as_deref(), learn, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub outcome: Outcome,
    pub model: ModelKind,
    pub variant: ImbalanceKind,
    pub eval_split: Split,
    pub n: usize,
    pub base_rate: f64,
    pub auroc: f64,
    pub pr_auc: f64,
    pub brier: f64,
    pub precision_at: BTreeMap<usize, f64>,
}

impl LeaderboardEntry {
    pub fn key(&self) -> CellKey {
        CellKey { outcome: self.outcome, variant: self.variant, model: self.model }
    }
}

pub fn evaluate_cell(model: &Model, key: &CellKey, data: &OutcomeData) -> Result<LeaderboardEntry> {
    let probs = model.predict_proba(&data.eval_matrix)?;
    let m = MetricReport::compute(&probs, &data.eval_labels)?;
    Ok(LeaderboardEntry {
        outcome: key.outcome,
        model: key.model,
        variant: key.variant,
        eval_split: data.eval_split,
        n: m.n,
        base_rate: m.base_rate,
        auroc: m.auroc,
        pr_auc: m.pr_auc,
        brier: m.brier,
        precision_at: m.precision_at,
    })
}

fn ranking_cmp(a: &LeaderboardEntry, b: &LeaderboardEntry) -> std::cmp::Ordering {
    b.pr_auc
        .total_cmp(&a.pr_auc)
        .then(b.auroc.total_cmp(&a.auroc))
        .then(a.model.as_str().cmp(b.model.as_str()))
        .then(a.variant.as_str().cmp(b.variant.as_str()))
}

/// Best PR-AUC, then best AUROC, then the lexicographically smaller
/// (model, variant) name pair.
pub fn select_winner(entries: &[LeaderboardEntry]) -> Option<&LeaderboardEntry> {
    entries.iter().min_by(|a, b| ranking_cmp(a, b))
}

pub fn sort_leaderboard(entries: &mut [LeaderboardEntry]) {
    entries.sort_by(|a, b| a.outcome.cmp(&b.outcome).then_with(|| ranking_cmp(a, b)));
}

pub struct ZooRun {
    pub entries: Vec<LeaderboardEntry>,
    pub models: BTreeMap<CellKey, Model>,
    pub variants: BTreeMap<ImbalanceKind, ImbalanceVariant>,
}

/// Train and evaluate every requested cell for one outcome.
pub fn run_zoo(data: &OutcomeData, cfg: &ZooConfig, seed: u64) -> Result<ZooRun> {
    let mut run = ZooRun { entries: Vec::new(), models: BTreeMap::new(), variants: BTreeMap::new() };
    for &variant in &cfg.variants {
        let v = make_variant(data, variant, cfg, seed)?;
        for &model in &cfg.models {
            let key = CellKey { outcome: data.outcome, variant, model };
            log::info!("training {} / {} / {}", key.outcome, key.variant, key.model);
            let fitted = train_cell(&v, model, &cfg.learn, model_seed(seed, &key))?;
            run.entries.push(evaluate_cell(&fitted, &key, data)?);
            run.models.insert(key, fitted);
        }
        run.variants.insert(variant, v);
    }
    sort_leaderboard(&mut run.entries);
    Ok(run)
}

/// Isotonic map fitted on the model's development-row predictions.
pub fn dev_isotonic(model: &Model, data: &OutcomeData) -> Result<IsotonicMap> {
    let probs = model.predict_proba(data.dev.matrix())?;
    fit_isotonic(&probs, data.dev.labels())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub key: CellKey,
    pub method: String,
    pub bin: usize,
    pub bin_stats: ReliabilityBin,
}

/// Reliability of raw and isotonic-mapped probabilities on the evaluation rows.
pub fn calibration_rows(model: &Model, key: &CellKey, data: &OutcomeData, iso: &IsotonicMap, n_bins: usize) -> Result<Vec<CalibrationRow>> {
    let raw = model.predict_proba(&data.eval_matrix)?;
    let cal = iso.apply(&raw);
    let mut out = Vec::new();
    for (method, probs) in [("raw", raw), ("isotonic", cal)] {
        let bins = reliability_curve(&probs, &data.eval_labels, n_bins.min(probs.len()).max(1))?;
        for (b, s) in bins.into_iter().enumerate() {
            out.push(CalibrationRow { key: *key, method: method.to_string(), bin: b, bin_stats: s });
        }
    }
    Ok(out)
}

/// Latest calendar year whose December 31 plus the horizon is within the panel.
pub fn cohort_year(panel_end: NaiveDate, horizon_months: u32) -> i32 {
    let mut y = panel_end.year();
    while add_months(ymd(y, 12, 31), horizon_months) > panel_end {
        y -= 1;
    }
    y
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRow {
    pub org_id: String,
    pub quarter_end: NaiveDate,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTarget {
    pub org_id: String,
    pub quarter_end: NaiveDate,
    pub p_hat: f64,
    pub rank: usize,
    pub percentile: f64,
}

/// One row per firm (highest score, latest quarter on ties), ranked by
/// descending score.
pub fn rank_and_dedupe(rows: &[ScoredRow]) -> Vec<ScoredTarget> {
    let mut best: BTreeMap<&str, &ScoredRow> = BTreeMap::new();
    for r in rows {
        best.entry(r.org_id.as_str())
            .and_modify(|cur| {
                if r.p_hat > cur.p_hat || (r.p_hat == cur.p_hat && r.quarter_end > cur.quarter_end) {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    let kept: Vec<&ScoredRow> = best.into_values().collect();
    let scores: Vec<f64> = kept.iter().map(|r| r.p_hat).collect();
    let order = crate::eval::ranking_order(&scores);
    let n = kept.len();
    order
        .into_iter()
        .enumerate()
        .map(|(pos, i)| {
            let rank = pos + 1;
            let percentile = if n == 1 { 100.0 } else { 100.0 * (n - rank) as f64 / (n - 1) as f64 };
            ScoredTarget { org_id: kept[i].org_id.clone(), quarter_end: kept[i].quarter_end, p_hat: kept[i].p_hat, rank, percentile }
        })
        .collect()
}

/// Score every firm-quarter of the cohort year with the frozen preprocessing.
pub fn score_cohort(model: &Model, pre: &Preprocessor, panel: &Panel, outcome: Outcome) -> Result<(i32, Vec<ScoredTarget>)> {
    let year = cohort_year(panel.panel_end, outcome.horizon().months());
    let rows: Vec<&FirmQuarterRow> = panel.rows.iter().filter(|r| r.quarter_end.year() == year).collect();
    if rows.is_empty() {
        return Ok((year, Vec::new()));
    }
    let matrix = transform_select(pre, &rows, &model.feature_names)?;
    let probs = model.predict_proba(&matrix)?;
    let scored: Vec<ScoredRow> = rows
        .iter()
        .zip(probs)
        .map(|(r, p)| ScoredRow { org_id: r.org_id.clone(), quarter_end: r.quarter_end, p_hat: p })
        .collect();
    Ok((year, rank_and_dedupe(&scored)))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_leaderboard(path: &Path, entries: &[LeaderboardEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(["outcome", "model", "variant", "eval_split", "n", "base_rate", "auroc", "pr_auc", "brier"]).map_err(e)?;
    for x in entries {
        w.write_record([
            x.outcome.as_str().to_string(),
            x.model.as_str().to_string(),
            x.variant.as_str().to_string(),
            x.eval_split.as_str().to_string(),
            x.n.to_string(),
            fmt(x.base_rate),
            fmt(x.auroc),
            fmt(x.pr_auc),
            fmt(x.brier),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

/// Long-format metrics: one row per (cell, metric).
pub fn write_metrics(path: &Path, entries: &[LeaderboardEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(["outcome", "model", "variant", "eval_split", "metric", "value"]).map_err(e)?;
    for x in entries {
        let mut metrics = vec![
            ("n".to_string(), x.n.to_string()),
            ("base_rate".to_string(), fmt(x.base_rate)),
            ("auroc".to_string(), fmt(x.auroc)),
            ("pr_auc".to_string(), fmt(x.pr_auc)),
            ("brier".to_string(), fmt(x.brier)),
        ];
        metrics.extend(x.precision_at.iter().map(|(k, v)| (format!("precision_at_{k}"), fmt(*v))));
        for (name, value) in metrics {
            w.write_record([x.outcome.as_str(), x.model.as_str(), x.variant.as_str(), x.eval_split.as_str(), &name, &value])
                .map_err(e)?;
        }
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_precision_at_k(path: &Path, entries: &[LeaderboardEntry]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(["outcome", "model", "variant", "eval_split", "k", "precision"]).map_err(e)?;
    for x in entries {
        for (k, v) in &x.precision_at {
            w.write_record([x.outcome.as_str(), x.model.as_str(), x.variant.as_str(), x.eval_split.as_str(), &k.to_string(), &fmt(*v)])
                .map_err(e)?;
        }
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_calibration(path: &Path, rows: &[CalibrationRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(["outcome", "model", "variant", "method", "bin", "mean_prob", "empirical_rate", "count"]).map_err(e)?;
    for r in rows {
        w.write_record([
            r.key.outcome.as_str().to_string(),
            r.key.model.as_str().to_string(),
            r.key.variant.as_str().to_string(),
            r.method.clone(),
            r.bin.to_string(),
            fmt(r.bin_stats.mean_prob),
            fmt(r.bin_stats.empirical_rate),
            r.bin_stats.count.to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn targets_file_name(outcome: Outcome, cohort: i32) -> String {
    format!("targets_{outcome}_{cohort}.csv")
}

pub fn write_targets(path: &Path, targets: &[ScoredTarget]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(["org_id", "quarter_end", "p_hat", "rank", "percentile"]).map_err(e)?;
    for t in targets {
        w.write_record([
            t.org_id.clone(),
            t.quarter_end.format("%Y-%m-%d").to_string(),
            format!("{:.8}", t.p_hat),
            t.rank.to_string(),
            format!("{:.4}", t.percentile),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const MANIFEST_NAME: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    /// Derived per-cell seeds, keyed by `<outcome>/<variant>/<model>`.
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
    /// Input file name to content hash.
    pub inputs: BTreeMap<String, String>,
    pub leaderboard: Vec<LeaderboardEntry>,
    pub winners: BTreeMap<Outcome, CellKey>,
    pub cohorts: BTreeMap<Outcome, i32>,
    /// Every other file under the output directory, by relative path.
    pub outputs: BTreeMap<String, String>,
}

fn list_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            list_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("under root").to_path_buf());
        }
    }
    Ok(())
}

pub struct ManifestInput<'a> {
    pub seed: u64,
    pub config_hash: String,
    pub inputs: &'a [PathBuf],
    pub leaderboard: Vec<LeaderboardEntry>,
    pub winners: BTreeMap<Outcome, CellKey>,
    pub cohorts: BTreeMap<Outcome, i32>,
    /// Files the run claims to have written, relative to `out_dir`.
    pub expected_outputs: Vec<PathBuf>,
}

/// Hash inputs and every file under `out_dir` and write `manifest.json`.
/// A claimed output that does not exist is an integrity error.
pub fn write_manifest(out_dir: &Path, info: ManifestInput<'_>) -> Result<Manifest> {
    for rel in &info.expected_outputs {
        if !out_dir.join(rel).is_file() {
            return Err(Error::Integrity(format!("expected output {} is missing", rel.display())));
        }
    }
    let mut inputs = BTreeMap::new();
    for p in info.inputs {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        inputs.insert(name, sha256_file(p)?);
    }
    let mut files = Vec::new();
    list_files(out_dir, out_dir, &mut files)?;
    let mut outputs = BTreeMap::new();
    for rel in files {
        let name = rel.to_string_lossy().replace('\\', "/");
        if name == MANIFEST_NAME {
            continue;
        }
        outputs.insert(name, sha256_file(&out_dir.join(&rel))?);
    }
    let seeds = info
        .leaderboard
        .iter()
        .map(|e| {
            let k = e.key();
            (format!("{}/{}/{}", k.outcome, k.variant, k.model), model_seed(info.seed, &k))
        })
        .collect();
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: info.seed,
        seeds,
        config_hash: info.config_hash,
        inputs,
        leaderboard: info.leaderboard,
        winners: info.winners,
        cohorts: info.cohorts,
        outputs,
    };
    let path = out_dir.join(MANIFEST_NAME);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
