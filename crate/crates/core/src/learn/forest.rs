use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_cart, CartParams, Ranked, Tree};
use super::TrainData;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: f64,
    /// `None` means floor(sqrt(p)), at least 1.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig { n_trees: 300, max_depth: 12, min_leaf: 20.0, features_per_split: None, bootstrap: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: f64,
    pub features_per_split: usize,
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestModel {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Weighted bootstrap: one draw per training row, each landing on row `i`
/// with probability proportional to its weight. Returns (row, draw count).
fn bootstrap(weights: &[f64], rng: &mut impl Rng) -> Vec<(usize, f64)> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for w in weights {
        total += w;
        cum.push(total);
    }
    let mut counts = vec![0u32; weights.len()];
    for _ in 0..weights.len() {
        let u = rng.gen::<f64>() * total;
        let i = cum.partition_point(|&c| c <= u).min(weights.len() - 1);
        counts[i] += 1;
    }
    counts.into_iter().enumerate().filter(|(_, c)| *c > 0).map(|(i, c)| (i, c as f64)).collect()
}

pub fn fit_forest(data: &TrainData, config: &ForestConfig, seed: u64) -> ForestModel {
    let p = data.matrix.n_cols();
    let mtry = config.features_per_split.unwrap_or(((p as f64).sqrt().floor() as usize).max(1)).clamp(1, p.max(1));
    let ranked = Ranked::new(data);
    let params = CartParams { max_depth: config.max_depth, min_leaf: config.min_leaf, features_per_split: Some(mtry) };
    let all_rows: Vec<(usize, f64)> = data.weights.iter().copied().enumerate().collect();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[rng::tag("forest"), t as u64]);
            let rows = if config.bootstrap { bootstrap(&data.weights, &mut r) } else { all_rows.clone() };
            grow_cart(data, &ranked, &rows, params, Some(&mut r))
        })
        .collect();
    ForestModel {
        trees,
        n_trees: config.n_trees,
        max_depth: config.max_depth,
        min_leaf: config.min_leaf,
        features_per_split: mtry,
        bootstrap: config.bootstrap,
        seed,
    }
}
