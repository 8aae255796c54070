//! Command-line driver. Every subcommand reads its inputs from and writes its
//! outputs under `--out`, then rewrites the run manifest.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::DEFAULT_RELIABILITY_BINS;
use crate::explain::{self, ShapOptions, DEFAULT_PDP_GRID, DEFAULT_SHAP_CAP};
use crate::ingest::{self, IngestOptions, InputPaths, StageMap};
use crate::learn::{load_model, save_model, LearnConfig, Model, ModelKind};
use crate::matrix::Matrix;
use crate::panel::{self, default_panel_end, Outcome, Panel};
use crate::preprocess::{self, Preprocessor};
use crate::resample::{ImbalanceKind, DEFAULT_K};
use crate::rng;
use crate::screen::{self, SelectionPolicy, ALWAYS_KEEP};
use crate::synth::{self, SynthConfig};
use crate::zoo::{self, CellKey, LeaderboardEntry, OutcomeData, ZooConfig};

pub const DEFAULT_SEED: u64 = 7;
pub const SEED_ENV: &str = "VS_SEED";

#[derive(Debug, Parser)]
#[command(name = "firmcast", version, about = "Leakage-safe firm-quarter outcome prediction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic event files under <out>/data
    Synth(CommonArgs),
    /// Ingest events, build the panel and fit development-only preprocessing
    Prepare(CommonArgs),
    /// Univariate screening and per-outcome feature selection
    Screen(CommonArgs),
    /// Build imbalance variants on the development window
    Resample(CommonArgs),
    /// Train zoo cells and record their out-of-time metrics
    Train(CommonArgs),
    /// Metrics, precision@K, winners and calibration
    Evaluate(CommonArgs),
    /// SHAP, impurity, permutation and partial dependence for the winners
    Explain(CommonArgs),
    /// Score and rank the latest fully observable cohort
    Score(CommonArgs),
    /// Run synth, prepare, screen, resample, train, evaluate, explain and score
    All(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,
    /// Directory with rounds.csv, patents.csv, exits.csv and firms.csv [default: <out>/data]
    #[arg(long, value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Master seed (falls back to VS_SEED, then 7)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Last observable date, a quarter end (YYYY-MM-DD)
    #[arg(long, value_name = "DATE")]
    pub panel_end: Option<NaiveDate>,
    /// Outcome to run; repeatable [fund_12m, patent_24m, exit_36m]
    #[arg(long = "outcome", value_name = "OUTCOME", value_parser = Outcome::from_str)]
    pub outcomes: Vec<Outcome>,
    /// Imbalance variant; repeatable [weights, ros, smote_nc, borderline_smote, adasyn]
    #[arg(long = "variant", value_name = "VARIANT", value_parser = ImbalanceKind::from_str)]
    pub variants: Vec<ImbalanceKind>,
    /// Model family; repeatable [logistic, tree, forest, gbdt]
    #[arg(long = "model", value_name = "MODEL", value_parser = ModelKind::from_str)]
    pub models: Vec<ModelKind>,
    /// Number of synthetic firms
    #[arg(long, value_name = "N")]
    pub n_firms: Option<usize>,
    /// Worker threads (default: all cores)
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Pinned,
    Top(usize),
}

impl From<Selection> for SelectionPolicy {
    fn from(s: Selection) -> Self {
        match s {
            Selection::Pinned => SelectionPolicy::Pinned,
            Selection::Top(n) => SelectionPolicy::Top(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainConfig {
    pub shap_cap: usize,
    /// Row cap for forest SHAP, which costs far more per row than boosting.
    pub shap_forest_cap: usize,
    /// Forest thinning for SHAP.
    pub shap_forest_trees: Option<usize>,
    pub permutation_repeats: usize,
    pub permutation_cap: usize,
    pub pdp_grid: usize,
    pub pdp_cap: usize,
    /// Partial dependence is written for this many top SHAP features.
    pub pdp_top: usize,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            shap_cap: DEFAULT_SHAP_CAP,
            shap_forest_cap: 2_000,
            shap_forest_trees: Some(50),
            permutation_repeats: 5,
            permutation_cap: 20_000,
            pdp_grid: DEFAULT_PDP_GRID,
            pdp_cap: 5_000,
            pdp_top: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    pub k: usize,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        ResampleConfig { k: DEFAULT_K }
    }
}

/// Everything that determines a run's outputs. `out` and `jobs` do not.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub panel_end: NaiveDate,
    pub outcomes: Vec<Outcome>,
    pub variants: Vec<ImbalanceKind>,
    pub models: Vec<ModelKind>,
    pub selection: Selection,
    pub stage_map: Option<PathBuf>,
    pub synth: SynthConfig,
    pub learn: LearnConfig,
    pub resample: ResampleConfig,
    pub explain: ExplainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let zoo = ZooConfig::default();
        RunConfig {
            seed: None,
            input: None,
            panel_end: default_panel_end(),
            outcomes: Outcome::ALL.to_vec(),
            variants: zoo.variants,
            models: zoo.models,
            selection: Selection::Pinned,
            stage_map: None,
            synth: SynthConfig::default(),
            learn: LearnConfig::default(),
            resample: ResampleConfig::default(),
            explain: ExplainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Config file, then flags, then the seed fallback chain.
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = args.seed {
            cfg.seed = Some(s);
        }
        if cfg.seed.is_none() {
            cfg.seed = Some(match std::env::var(SEED_ENV) {
                Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned integer")))?,
                Err(_) => DEFAULT_SEED,
            });
        }
        if let Some(d) = args.panel_end {
            cfg.panel_end = d;
        }
        if let Some(i) = &args.input {
            cfg.input = Some(i.clone());
        }
        if !args.outcomes.is_empty() {
            cfg.outcomes = dedup(&args.outcomes);
        }
        if !args.variants.is_empty() {
            cfg.variants = dedup(&args.variants);
        }
        if !args.models.is_empty() {
            cfg.models = dedup(&args.models);
        }
        if let Some(n) = args.n_firms {
            cfg.synth.n_firms = n;
        }
        cfg.synth.seed = cfg.seed();
        if cfg.outcomes.is_empty() || cfg.variants.is_empty() || cfg.models.is_empty() {
            return Err(Error::Config("outcomes, variants and models must be non-empty".into()));
        }
        if !crate::dates::is_quarter_end(cfg.panel_end) {
            return Err(Error::Config(format!("panel_end {} is not a quarter end", cfg.panel_end)));
        }
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn zoo(&self) -> ZooConfig {
        ZooConfig {
            models: self.models.clone(),
            variants: self.variants.clone(),
            k_neighbors: self.resample.k,
            learn: self.learn.clone(),
        }
    }

    /// Hash of the canonical JSON form. Input paths are excluded; their
    /// contents are hashed separately.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.input = None;
        c.stage_map = None;
        Ok(zoo::sha256_bytes(serde_json::to_string(&c)?.as_bytes()))
    }
}

fn dedup<T: PartialEq + Copy>(v: &[T]) -> Vec<T> {
    let mut out = Vec::new();
    for x in v {
        if !out.contains(x) {
            out.push(*x);
        }
    }
    out
}

pub const DATA_DIR: &str = "data";
pub const PANEL_FILE: &str = "panel.csv";
pub const PANEL_REPORT_FILE: &str = "panel_report.json";
pub const INGEST_REPORT_FILE: &str = "ingest_report.json";
pub const FEATURE_LIST_FILE: &str = "feature_list.json";
pub const SCREEN_FILE: &str = "screen_report.csv";
pub const SELECTED_FILE: &str = "selected_features.json";
pub const LEADERBOARD_CSV: &str = "leaderboard.csv";
pub const LEADERBOARD_JSON: &str = "leaderboard.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const PRECISION_FILE: &str = "precision_at_k.csv";
pub const CALIBRATION_FILE: &str = "calibration.csv";
pub const WINNERS_FILE: &str = "winners.json";
pub const IMPORTANCE_FILE: &str = "importance.csv";
pub const COHORTS_FILE: &str = "cohorts.json";

/// Run state shared by the steps.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    written: Vec<PathBuf>,
}

impl Run {
    pub fn new(cfg: RunConfig, out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run { cfg, out: out.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn wrote(&mut self, rel: impl Into<PathBuf>) {
        self.written.push(rel.into());
    }

    fn input_dir(&self) -> PathBuf {
        self.cfg.input.clone().unwrap_or_else(|| self.out.join(DATA_DIR))
    }

    fn input_paths(&self) -> InputPaths {
        InputPaths::in_dir(&self.input_dir())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        self.wrote(name);
        Ok(())
    }

    fn read_json<T: for<'de> Deserialize<'de>>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn load_panel(&self) -> Result<Panel> {
        panel::read_panel_csv(&self.path(PANEL_FILE), self.cfg.panel_end)
    }

    fn load_preprocessor(&self) -> Result<Preprocessor> {
        preprocess::load_feature_list(&self.path(FEATURE_LIST_FILE))
    }

    fn selected_columns(&self) -> Result<BTreeMap<Outcome, Vec<String>>> {
        self.read_json(SELECTED_FILE)
    }

    fn outcome_data(&self, panel: &Panel, pre: &Preprocessor, outcome: Outcome) -> Result<OutcomeData> {
        let selected = self.selected_columns()?;
        let cols = selected
            .get(&outcome)
            .ok_or_else(|| Error::MissingArtifact(self.path(SELECTED_FILE)))?;
        zoo::outcome_data(panel, pre, outcome, cols)
    }

    fn leaderboard(&self) -> Result<Vec<LeaderboardEntry>> {
        match self.read_json(LEADERBOARD_JSON) {
            Err(Error::MissingArtifact(_)) => Ok(Vec::new()),
            other => other,
        }
    }

    fn winners(&self) -> Result<BTreeMap<Outcome, CellKey>> {
        self.read_json(WINNERS_FILE)
    }

    fn model_file(key: &CellKey) -> String {
        key.file_name("train", "model", "bin")
    }

    fn load_cell_model(&self, key: &CellKey) -> Result<Model> {
        load_model(&self.path(&Self::model_file(key)))
    }

    // Steps.

    pub fn synth(&mut self) -> Result<()> {
        let (events, report) = synth::generate_events(&self.cfg.synth, self.cfg.panel_end)?;
        let dir = self.out.join(DATA_DIR);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        ingest::write_events(&InputPaths::in_dir(&dir), &events)?;
        for f in ["rounds.csv", "patents.csv", "exits.csv", "firms.csv"] {
            self.wrote(Path::new(DATA_DIR).join(f));
        }
        self.write_json("synth_report.json", &report)?;
        log::info!(
            "synthesized {} rounds, {} patents, {} exits for {} firms",
            events.rounds.len(),
            events.patents.len(),
            events.exits.len(),
            events.firms.len()
        );
        Ok(())
    }

    pub fn prepare(&mut self) -> Result<()> {
        let paths = self.input_paths();
        for p in paths.all() {
            if !p.exists() {
                return Err(Error::MissingArtifact(p.to_path_buf()));
            }
        }
        let stage_map = match &self.cfg.stage_map {
            Some(p) => StageMap::load(p)?,
            None => StageMap::default(),
        };
        let opts = IngestOptions { panel_end: self.cfg.panel_end, stage_map };
        let (events, ingest_report) = ingest::parse_events(&paths, &opts)?;
        self.write_json(INGEST_REPORT_FILE, &ingest_report)?;
        let (panel, report) = panel::build_panel(&events, self.cfg.panel_end)?;
        panel::write_panel_csv(&self.path(PANEL_FILE), &panel)?;
        self.wrote(PANEL_FILE);
        self.write_json(PANEL_REPORT_FILE, &report)?;
        let dev: Vec<_> = panel.rows_in(panel::Split::Dev).collect();
        let pre = preprocess::fit_preprocessor(&dev)?;
        preprocess::save_feature_list(&self.path(FEATURE_LIST_FILE), &pre)?;
        self.wrote(FEATURE_LIST_FILE);
        log::info!("panel has {} rows, {} in development", panel.rows.len(), dev.len());
        Ok(())
    }

    pub fn screen(&mut self) -> Result<()> {
        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let mut all = Vec::new();
        let mut selected = BTreeMap::new();
        for &o in &self.cfg.outcomes {
            let res = screen::screen_outcome(&panel, &pre, o)?;
            let chosen = screen::select_features(&res, o, &ALWAYS_KEEP, self.cfg.selection.into())?;
            selected.insert(o, screen::model_columns(&chosen, &pre));
            all.extend(res);
        }
        screen::write_screen_report(&self.path(SCREEN_FILE), &all)?;
        self.wrote(SCREEN_FILE);
        self.write_json(SELECTED_FILE, &selected)
    }

    pub fn resample(&mut self) -> Result<()> {
        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let zcfg = self.cfg.zoo();
        for &o in &self.cfg.outcomes.clone() {
            let data = self.outcome_data(&panel, &pre, o)?;
            for &v in &zcfg.variants {
                let variant = zoo::make_variant(&data, v, &zcfg, self.cfg.seed())?;
                let summary = VariantSummary {
                    outcome: o,
                    variant: v,
                    rows: variant.n_rows(),
                    positives: variant.positives(),
                    synthetic_rows: variant.n_rows() - data.dev.matrix().n_rows(),
                    fallback: variant.fallback,
                    warnings: variant.warnings.clone(),
                    seed: variant.seed,
                };
                self.write_json(&format!("resample_{o}_{v}_summary.json"), &summary)?;
            }
        }
        Ok(())
    }

    pub fn train(&mut self) -> Result<()> {
        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let zcfg = self.cfg.zoo();
        let mut board = self.leaderboard()?;
        for &o in &self.cfg.outcomes.clone() {
            let data = self.outcome_data(&panel, &pre, o)?;
            let run = zoo::run_zoo(&data, &zcfg, self.cfg.seed())?;
            for (key, model) in &run.models {
                let name = Self::model_file(key);
                save_model(&self.path(&name), model)?;
                self.wrote(name);
            }
            board.retain(|e| !run.models.contains_key(&e.key()));
            board.extend(run.entries);
        }
        zoo::sort_leaderboard(&mut board);
        self.write_leaderboard(&board)
    }

    fn write_leaderboard(&mut self, board: &[LeaderboardEntry]) -> Result<()> {
        zoo::write_leaderboard(&self.path(LEADERBOARD_CSV), board)?;
        self.wrote(LEADERBOARD_CSV);
        self.write_json(LEADERBOARD_JSON, &board)
    }

    pub fn evaluate(&mut self) -> Result<()> {
        let board = self.leaderboard()?;
        if board.is_empty() {
            return Err(Error::MissingArtifact(self.path(LEADERBOARD_JSON)));
        }
        zoo::write_metrics(&self.path(METRICS_FILE), &board)?;
        self.wrote(METRICS_FILE);
        zoo::write_precision_at_k(&self.path(PRECISION_FILE), &board)?;
        self.wrote(PRECISION_FILE);

        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let mut winners = BTreeMap::new();
        let mut calibration = Vec::new();
        for &o in &self.cfg.outcomes {
            let entries: Vec<LeaderboardEntry> = board.iter().filter(|e| e.outcome == o).cloned().collect();
            let Some(w) = zoo::select_winner(&entries) else { continue };
            let key = w.key();
            let model = self.load_cell_model(&key)?;
            let data = self.outcome_data(&panel, &pre, o)?;
            let iso = zoo::dev_isotonic(&model, &data)?;
            calibration.extend(zoo::calibration_rows(&model, &key, &data, &iso, DEFAULT_RELIABILITY_BINS)?);
            winners.insert(o, key);
        }
        zoo::write_calibration(&self.path(CALIBRATION_FILE), &calibration)?;
        self.wrote(CALIBRATION_FILE);
        self.write_json(WINNERS_FILE, &winners)
    }

    pub fn explain(&mut self) -> Result<()> {
        let winners = self.winners()?;
        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let ecfg = self.cfg.explain.clone();
        let seed = self.cfg.seed();
        let mut importance: Vec<ImportanceRow> = Vec::new();
        for &o in &self.cfg.outcomes.clone() {
            let Some(key) = winners.get(&o).copied() else { continue };
            let model = self.load_cell_model(&key)?;
            let data = self.outcome_data(&panel, &pre, o)?;
            let names = model.feature_names.clone();
            let eseed = |what: &str| rng::derive_seed(seed, &[rng::tag(what), o.index() as u64]);
            let mut push = |method: &str, values: Vec<f64>| {
                for (f, v) in names.iter().zip(values) {
                    importance.push(ImportanceRow { key, feature: f.clone(), method: method.into(), value: v, sd: None });
                }
            };

            let mut ranking: Vec<f64> = Vec::new();
            if model.kind().is_tree_based() {
                let cap = match key.model {
                    ModelKind::Forest => ecfg.shap_cap.min(ecfg.shap_forest_cap),
                    _ => ecfg.shap_cap,
                };
                let opts = ShapOptions {
                    sample_cap: cap,
                    max_forest_trees: ecfg.shap_forest_trees,
                    seed: eseed("shap"),
                };
                let attr = explain::tree_shap(&model, &data.eval_matrix, &opts)?;
                let err = attr.max_local_error();
                if err > 1e-9 {
                    return Err(Error::Integrity(format!("SHAP local accuracy off by {err:e} for {o}")));
                }
                let mean_abs = attr.mean_abs();
                let name = key.file_name("explain", "shap_meanabs", "csv");
                write_named_values(&self.path(&name), &names, &mean_abs, "mean_abs_shap")?;
                self.wrote(name);
                ranking = mean_abs.clone();
                push("mean_abs_shap", mean_abs);
            }
            if matches!(key.model, ModelKind::Forest | ModelKind::Tree) {
                push("mdi", explain::mdi_importance(&model)?);
            }

            let (pm, pl) = capped(&data.eval_matrix, &data.eval_labels, ecfg.permutation_cap, eseed("permutation_rows"));
            let perm = explain::permutation_importance(&model, &pm, &pl, ecfg.permutation_repeats, eseed("permutation"))?;
            if ranking.is_empty() {
                ranking = perm.iter().map(|p| p.mean_drop).collect();
            }
            for p in perm {
                importance.push(ImportanceRow {
                    key,
                    feature: p.feature,
                    method: "permutation_ap".into(),
                    value: p.mean_drop,
                    sd: Some(p.sd),
                });
            }

            let (dm, _) = capped(&data.eval_matrix, &data.eval_labels, ecfg.pdp_cap, eseed("pdp_rows"));
            let order = crate::eval::ranking_order(&ranking);
            for &j in order.iter().filter(|&&j| !names[j].ends_with(preprocess::INDICATOR_SUFFIX)).take(ecfg.pdp_top) {
                let pd = explain::partial_dependence(&model, &dm, &names[j], ecfg.pdp_grid)?;
                let name = key.file_name("explain", &format!("pdp_{}", names[j]), "csv");
                write_pdp(&self.path(&name), &pd)?;
                self.wrote(name);
            }
        }
        write_importance(&self.path(IMPORTANCE_FILE), &importance)?;
        self.wrote(IMPORTANCE_FILE);
        Ok(())
    }

    pub fn score(&mut self) -> Result<()> {
        let winners = self.winners()?;
        let panel = self.load_panel()?;
        let pre = self.load_preprocessor()?;
        let mut cohorts = BTreeMap::new();
        for &o in &self.cfg.outcomes.clone() {
            let key = winners.get(&o).ok_or_else(|| Error::MissingArtifact(self.path(WINNERS_FILE)))?;
            let model = self.load_cell_model(key)?;
            let (year, targets) = zoo::score_cohort(&model, &pre, &panel, o)?;
            let name = zoo::targets_file_name(o, year);
            zoo::write_targets(&self.path(&name), &targets)?;
            self.wrote(name);
            cohorts.insert(o, year);
        }
        self.write_json(COHORTS_FILE, &cohorts)
    }

    /// Rewrite the manifest from whatever the output directory holds.
    pub fn finish(&mut self) -> Result<zoo::Manifest> {
        let mut inputs: Vec<PathBuf> = self.input_paths().all().iter().filter(|p| p.exists()).map(|p| p.to_path_buf()).collect();
        if let Some(p) = &self.cfg.stage_map {
            inputs.push(p.clone());
        }
        let leaderboard = self.leaderboard()?;
        let winners = match self.winners() {
            Err(Error::MissingArtifact(_)) => BTreeMap::new(),
            other => other?,
        };
        let cohorts = match self.read_json(COHORTS_FILE) {
            Err(Error::MissingArtifact(_)) => BTreeMap::new(),
            other => other?,
        };
        let config_path = self.path("run_config.json");
        let mut text = serde_json::to_string_pretty(&self.cfg)?;
        text.push('\n');
        fs::write(&config_path, text).map_err(|e| Error::io(&config_path, e))?;
        self.wrote("run_config.json");
        zoo::write_manifest(
            &self.out,
            zoo::ManifestInput {
                seed: self.cfg.seed(),
                config_hash: self.cfg.hash()?,
                inputs: &inputs,
                leaderboard,
                winners,
                cohorts,
                expected_outputs: std::mem::take(&mut self.written),
            },
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VariantSummary {
    outcome: Outcome,
    variant: ImbalanceKind,
    rows: usize,
    positives: usize,
    synthetic_rows: usize,
    fallback: bool,
    warnings: Vec<String>,
    seed: u64,
}

struct ImportanceRow {
    key: CellKey,
    feature: String,
    method: String,
    value: f64,
    sd: Option<f64>,
}

/// Deterministic row subsample for the costlier diagnostics.
fn capped(m: &Matrix, labels: &[bool], cap: usize, seed: u64) -> (Matrix, Vec<bool>) {
    if m.n_rows() <= cap {
        return (m.clone(), labels.to_vec());
    }
    let mut r = rng::stream(seed, &[]);
    let mut idx = rand::seq::index::sample(&mut r, m.n_rows(), cap).into_vec();
    idx.sort_unstable();
    (m.take_rows(&idx), idx.iter().map(|&i| labels[i]).collect())
}

fn write_named_values(path: &Path, names: &[String], values: &[f64], column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["feature", column]).map_err(|e| Error::csv(path, e))?;
    for (n, v) in names.iter().zip(values) {
        w.write_record([n.as_str(), &format!("{v:.8}")]).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_pdp(path: &Path, pd: &explain::PartialDependence) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["feature", "value", "mean_prediction", "note"]).map_err(|e| Error::csv(path, e))?;
    for (v, p) in &pd.points {
        w.write_record([pd.feature.as_str(), &format!("{v}"), &format!("{p:.8}"), pd.note.as_deref().unwrap_or("")])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_importance(path: &Path, rows: &[ImportanceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["outcome", "model", "variant", "feature", "method", "value", "sd"]).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record([
            r.key.outcome.as_str(),
            r.key.model.as_str(),
            r.key.variant.as_str(),
            &r.feature,
            &r.method,
            &format!("{:.8}", r.value),
            &r.sd.map(|s| format!("{s:.8}")).unwrap_or_default(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn execute(command: &Command) -> Result<()> {
    let args = match command {
        Command::Synth(a)
        | Command::Prepare(a)
        | Command::Screen(a)
        | Command::Resample(a)
        | Command::Train(a)
        | Command::Evaluate(a)
        | Command::Explain(a)
        | Command::Score(a)
        | Command::All(a) => a,
    };
    let cfg = RunConfig::resolve(args)?;
    let mut run = Run::new(cfg, &args.out)?;
    let step = |run: &mut Run| -> Result<()> {
        match command {
            Command::Synth(_) => run.synth(),
            Command::Prepare(_) => run.prepare(),
            Command::Screen(_) => run.screen(),
            Command::Resample(_) => run.resample(),
            Command::Train(_) => run.train(),
            Command::Evaluate(_) => run.evaluate(),
            Command::Explain(_) => run.explain(),
            Command::Score(_) => run.score(),
            Command::All(_) => {
                if run.cfg.input.is_none() {
                    run.synth()?;
                }
                run.prepare()?;
                run.screen()?;
                run.resample()?;
                run.train()?;
                run.evaluate()?;
                run.explain()?;
                run.score()
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        step(&mut run)?;
        run.finish().map(|_| ())
    })
}

/// Parse `argv` and run it, returning the process exit status: 0 on success,
/// 2 on usage errors and 1 on any pipeline error.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
