//! In-repo classifiers with per-row weights.
//!
//! Every learner trains on a canonical form of its input: identical
//! (features, label) rows are merged with summed weights and the result is
//! sorted. An integer weight and the same number of duplicated rows therefore
//! produce the same training set, and so does any permutation of the rows.

pub mod forest;
pub mod gbdt;
pub mod logistic;
pub mod tree;

use std::cmp::Ordering;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use gbdt::{fit_gbdt, BoostedModel, GbdtConfig};
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};
pub use tree::{Node, Tree};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Canonical weighted training set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub matrix: Matrix,
    pub labels: Vec<bool>,
    pub weights: Vec<f64>,
}

impl TrainData {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn row_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Merge identical rows and sort. Rows with zero weight are dropped.
pub fn canonicalize(matrix: &Matrix, labels: &[bool], weights: Option<&[f64]>) -> Result<TrainData> {
    let n = matrix.n_rows();
    if labels.len() != n || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::Alignment("labels/weights length differs from matrix rows".into()));
    }
    if matrix.has_missing() {
        return Err(Error::Contract("learners need an imputed, finite matrix".into()));
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    if let Some(i) = (0..n).find(|&i| !(w(i).is_finite() && w(i) >= 0.0)) {
        return Err(Error::Contract(format!("row {i} has invalid weight {}", w(i))));
    }
    let mut order: Vec<usize> = (0..n).filter(|&i| w(i) > 0.0).collect();
    order.par_sort_unstable_by(|&a, &b| row_cmp(matrix.row(a), matrix.row(b)).then(labels[a].cmp(&labels[b])));
    let mut out = TrainData { matrix: Matrix::empty(matrix.columns().to_vec()), labels: Vec::new(), weights: Vec::new() };
    let mut prev: Option<usize> = None;
    for i in order {
        if let Some(p) = prev {
            if labels[p] == labels[i] && row_cmp(matrix.row(p), matrix.row(i)).is_eq() {
                *out.weights.last_mut().unwrap() += w(i);
                continue;
            }
        }
        out.matrix.push_row(matrix.row(i));
        out.labels.push(labels[i]);
        out.weights.push(w(i));
        prev = Some(i);
    }
    if out.labels.is_empty() {
        return Err(Error::Degenerate("no training rows with positive weight".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Forest,
    Gbdt,
    Logistic,
    Tree,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Logistic, ModelKind::Tree, ModelKind::Forest, ModelKind::Gbdt];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Tree => "tree",
            ModelKind::Forest => "forest",
            ModelKind::Gbdt => "gbdt",
        }
    }

    pub fn is_tree_based(self) -> bool {
        matches!(self, ModelKind::Forest | ModelKind::Gbdt | ModelKind::Tree)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_leaf: f64,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: 8, min_leaf: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    pub logistic: LogisticConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub gbdt: GbdtConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Estimator {
    Logistic(LogisticModel),
    Tree(Tree),
    Forest(ForestModel),
    Gbdt(BoostedModel),
}

/// A fitted estimator bound to the column order it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub feature_names: Vec<String>,
    pub estimator: Estimator,
}

pub fn fit_tree(data: &TrainData, cfg: &TreeConfig) -> Tree {
    let ranked = tree::Ranked::new(data);
    let rows: Vec<(usize, f64)> = data.weights.iter().copied().enumerate().collect();
    let params = tree::CartParams { max_depth: cfg.max_depth, min_leaf: cfg.min_leaf, features_per_split: None };
    tree::grow_cart(data, &ranked, &rows, params, None)
}

/// Canonicalize and fit one model kind.
pub fn train(
    kind: ModelKind,
    matrix: &Matrix,
    labels: &[bool],
    weights: Option<&[f64]>,
    cfg: &LearnConfig,
    seed: u64,
) -> Result<Model> {
    let data = canonicalize(matrix, labels, weights)?;
    let estimator = match kind {
        ModelKind::Logistic => Estimator::Logistic(fit_logistic(&data, &cfg.logistic)?),
        ModelKind::Tree => Estimator::Tree(fit_tree(&data, &cfg.tree)),
        ModelKind::Forest => Estimator::Forest(fit_forest(&data, &cfg.forest, seed)),
        ModelKind::Gbdt => Estimator::Gbdt(fit_gbdt(&data, &cfg.gbdt, seed)),
    };
    Ok(Model { feature_names: matrix.columns().to_vec(), estimator })
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self.estimator {
            Estimator::Logistic(_) => ModelKind::Logistic,
            Estimator::Tree(_) => ModelKind::Tree,
            Estimator::Forest(_) => ModelKind::Forest,
            Estimator::Gbdt(_) => ModelKind::Gbdt,
        }
    }

    /// Probability for one row already in model column order.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.estimator {
            Estimator::Logistic(m) => m.predict_row(x),
            Estimator::Tree(t) => t.predict_row(x),
            Estimator::Forest(f) => f.predict_row(x),
            Estimator::Gbdt(g) => g.predict_row(x),
        }
    }

    pub fn predict_proba(&self, matrix: &Matrix) -> Result<Vec<f64>> {
        matrix.check_columns(&self.feature_names)?;
        Ok(self.predict_unchecked(matrix))
    }

    pub(crate) fn predict_unchecked(&self, matrix: &Matrix) -> Vec<f64> {
        let rows: Vec<&[f64]> = matrix.rows().take(matrix.n_rows()).collect();
        rows.par_iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MODEL_MAGIC.to_vec();
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend(bincode::serialize(self)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = MODEL_MAGIC.len() + 4;
        if bytes.len() < header || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err(Error::Serde("not a model file".into()));
        }
        let version = u32::from_le_bytes(bytes[MODEL_MAGIC.len()..header].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::Version { expected: MODEL_VERSION, found: version });
        }
        Ok(bincode::deserialize(&bytes[header..])?)
    }
}

const MODEL_MAGIC: &[u8; 8] = b"FCMODEL\0";
pub const MODEL_VERSION: u32 = 1;

pub fn save_model(path: &Path, model: &Model) -> Result<()> {
    fs::write(path, model.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Model::from_bytes(&bytes)
}
