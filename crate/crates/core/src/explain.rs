//! Attribution and importance for fitted models: path-dependent TreeSHAP,
//! impurity importance, permutation importance by average precision and
//! partial dependence.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::learn::{Estimator, Model, Node, Tree};
use crate::matrix::Matrix;
use crate::rng;

pub const DEFAULT_SHAP_CAP: usize = 10_000;
pub const DEFAULT_PDP_GRID: usize = 20;

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: isize,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

const EMPTY: PathElement = PathElement { feature: -1, zero_fraction: 0.0, one_fraction: 0.0, pweight: 0.0 };

fn extend_path(path: &mut [PathElement], depth: usize, zero: f64, one: f64, feature: isize) {
    path[depth] = PathElement { feature, zero_fraction: zero, one_fraction: one, pweight: if depth == 0 { 1.0 } else { 0.0 } };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / d1;
        path[i].pweight = zero * path[i].pweight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].pweight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].pweight = path[i].pweight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

fn unwound_path_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].pweight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].pweight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].pweight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct ShapWalk<'a> {
    tree: &'a Tree,
    x: &'a [f64],
    phi: &'a mut [f64],
    scale: f64,
}

fn child_fraction(tree: &Tree, parent: usize, child: usize) -> f64 {
    let pc = tree.nodes[parent].cover();
    if pc > 0.0 {
        tree.nodes[child].cover() / pc
    } else {
        0.5
    }
}

impl ShapWalk<'_> {
    /// On entry `buf[..depth]` holds the parent's path; this call's path is
    /// built right after it and its children use the space beyond.
    fn recurse(&mut self, node: usize, buf: &mut [PathElement], mut depth: usize, zero: f64, one: f64, feature: isize) {
        let (parent, path) = buf.split_at_mut(depth);
        path[..depth].copy_from_slice(parent);
        extend_path(path, depth, zero, one, feature);
        match self.tree.nodes[node] {
            Node::Leaf { value, .. } => {
                for i in 1..=depth {
                    let w = unwound_path_sum(path, depth, i);
                    let el = path[i];
                    self.phi[el.feature as usize] += w * (el.one_fraction - el.zero_fraction) * value * self.scale;
                }
            }
            Node::Split { feature: f, threshold, left, right, missing_goes_left, .. } => {
                let v = self.x[f];
                let go_left = if v.is_nan() { missing_goes_left } else { v <= threshold };
                let (hot, cold) = if go_left { (left, right) } else { (right, left) };
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                if let Some(k) = (1..=depth).find(|&k| path[k].feature == f as isize) {
                    in_zero = path[k].zero_fraction;
                    in_one = path[k].one_fraction;
                    unwind_path(path, depth, k);
                    depth -= 1;
                }
                let hot_zero = child_fraction(self.tree, node, hot);
                let cold_zero = child_fraction(self.tree, node, cold);
                self.recurse(hot, path, depth + 1, hot_zero * in_zero, in_one, f as isize);
                self.recurse(cold, path, depth + 1, cold_zero * in_zero, 0.0, f as isize);
            }
        }
    }
}

/// Add `scale` times the TreeSHAP values of `tree` at `x` into `phi`.
pub fn tree_shap_row(tree: &Tree, x: &[f64], scale: f64, phi: &mut [f64]) {
    let max_depth = tree.depth() + 2;
    let mut buf = vec![EMPTY; (max_depth + 1) * (max_depth + 2)];
    let mut walk = ShapWalk { tree, x, phi, scale };
    walk.recurse(0, &mut buf, 0, 1.0, 1.0, -1);
}

/// Cover-weighted mean leaf value.
pub fn expected_value(tree: &Tree) -> f64 {
    fn go(t: &Tree, i: usize) -> f64 {
        match t.nodes[i] {
            Node::Leaf { value, .. } => value,
            Node::Split { left, right, .. } => child_fraction(t, i, left) * go(t, left) + child_fraction(t, i, right) * go(t, right),
        }
    }
    go(tree, 0)
}

/// Output space of an attribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputSpace {
    Probability,
    Margin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub feature_names: Vec<String>,
    pub space: OutputSpace,
    pub base_value: f64,
    /// Row indices (into the explained matrix) that were attributed.
    pub rows: Vec<usize>,
    pub phi: Vec<Vec<f64>>,
    /// Explained function's output per attributed row.
    pub output: Vec<f64>,
    /// Trees used; fewer than the model holds when the forest was thinned.
    pub trees_used: usize,
}

impl Attribution {
    pub fn mean_abs(&self) -> Vec<f64> {
        let p = self.feature_names.len();
        let n = self.phi.len().max(1) as f64;
        (0..p).map(|j| self.phi.iter().map(|r| r[j].abs()).sum::<f64>() / n).collect()
    }

    /// Largest |base + sum(phi) - output| over attributed rows.
    pub fn max_local_error(&self) -> f64 {
        self.phi
            .iter()
            .zip(&self.output)
            .map(|(phi, out)| (self.base_value + phi.iter().sum::<f64>() - out).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapOptions {
    pub sample_cap: usize,
    /// Uniformly subsample forests down to this many trees.
    pub max_forest_trees: Option<usize>,
    pub seed: u64,
}

impl Default for ShapOptions {
    fn default() -> Self {
        ShapOptions { sample_cap: DEFAULT_SHAP_CAP, max_forest_trees: None, seed: 0 }
    }
}

fn sample_rows(n: usize, cap: usize, seed: u64, what: &str) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    let mut r = rng::stream(seed, &[rng::tag(what)]);
    let mut rows = index::sample(&mut r, n, cap).into_vec();
    rows.sort_unstable();
    rows
}

/// Exact path-dependent TreeSHAP. Forests and single trees are explained in
/// probability space (tree mean), boosted models in margin space.
pub fn tree_shap(model: &Model, matrix: &Matrix, opts: &ShapOptions) -> Result<Attribution> {
    matrix.check_columns(&model.feature_names)?;
    let (trees, scale, offset, space): (Vec<&Tree>, f64, f64, OutputSpace) = match &model.estimator {
        Estimator::Tree(t) => (vec![t], 1.0, 0.0, OutputSpace::Probability),
        Estimator::Forest(f) => {
            let picked: Vec<&Tree> = match opts.max_forest_trees {
                Some(k) if k < f.trees.len() => {
                    let mut r = rng::stream(opts.seed, &[rng::tag("shap-thin")]);
                    let mut idx = index::sample(&mut r, f.trees.len(), k.max(1)).into_vec();
                    idx.sort_unstable();
                    idx.into_iter().map(|i| &f.trees[i]).collect()
                }
                _ => f.trees.iter().collect(),
            };
            let s = 1.0 / picked.len() as f64;
            (picked, s, 0.0, OutputSpace::Probability)
        }
        Estimator::Gbdt(g) => (g.trees.iter().collect(), g.learning_rate, g.base_margin, OutputSpace::Margin),
        Estimator::Logistic(_) => {
            return Err(Error::UnsupportedModel("TreeSHAP needs a tree model; use permutation importance".into()))
        }
    };
    let rows = sample_rows(matrix.n_rows(), opts.sample_cap, opts.seed, "shap-rows");
    let p = matrix.n_cols();
    let base_value = offset + scale * trees.iter().map(|t| expected_value(t)).sum::<f64>();
    let phi: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|&i| {
            let mut phi = vec![0.0; p];
            for t in &trees {
                tree_shap_row(t, matrix.row(i), scale, &mut phi);
            }
            phi
        })
        .collect();
    let output = rows
        .iter()
        .map(|&i| offset + scale * trees.iter().map(|t| t.predict_row(matrix.row(i))).sum::<f64>())
        .collect();
    Ok(Attribution {
        feature_names: model.feature_names.clone(),
        space,
        base_value,
        rows,
        phi,
        output,
        trees_used: trees.len(),
    })
}

/// Impurity decrease per feature, per tree divided by the root cover,
/// averaged over trees and normalized to sum to 1.
pub fn mdi_importance(model: &Model) -> Result<Vec<f64>> {
    let p = model.feature_names.len();
    let trees: Vec<&Tree> = match &model.estimator {
        Estimator::Forest(f) => f.trees.iter().collect(),
        Estimator::Tree(t) => vec![t],
        _ => return Err(Error::UnsupportedModel(format!("impurity importance is defined for forests, not {}", model.kind()))),
    };
    let mut total = vec![0.0; p];
    for t in &trees {
        let root = t.nodes[0].cover();
        if root <= 0.0 {
            continue;
        }
        for (acc, g) in total.iter_mut().zip(t.gain_by_feature(p)) {
            *acc += g / root / trees.len() as f64;
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        for v in &mut total {
            *v /= s;
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationScore {
    pub feature: String,
    pub mean_drop: f64,
    pub sd: f64,
}

/// Drop in average precision when one column is shuffled, per feature.
pub fn permutation_importance(
    model: &Model,
    matrix: &Matrix,
    labels: &[bool],
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<PermutationScore>> {
    if labels.iter().all(|&l| l) || !labels.iter().any(|&l| l) {
        return Err(Error::Degenerate("permutation importance needs both classes".into()));
    }
    let base = eval::pr_auc(&model.predict_proba(matrix)?, labels)?;
    let n_repeats = n_repeats.max(1);
    (0..matrix.n_cols())
        .into_par_iter()
        .map(|j| {
            let col = matrix.column(j);
            let mut shuffled = matrix.clone();
            let drops: Vec<f64> = (0..n_repeats)
                .map(|r| {
                    let mut perm = col.clone();
                    perm.shuffle(&mut rng::stream(seed, &[rng::tag("permutation"), j as u64, r as u64]));
                    for (i, v) in perm.into_iter().enumerate() {
                        shuffled.set(i, j, v);
                    }
                    eval::pr_auc(&model.predict_unchecked(&shuffled), labels).map(|ap| base - ap)
                })
                .collect::<Result<_>>()?;
            let mean = drops.iter().sum::<f64>() / drops.len() as f64;
            let sd = if drops.len() > 1 {
                (drops.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (drops.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            Ok(PermutationScore { feature: matrix.columns()[j].clone(), mean_drop: mean, sd })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialDependence {
    pub feature: String,
    /// (grid value, mean prediction)
    pub points: Vec<(f64, f64)>,
    pub note: Option<String>,
}

/// Linear-interpolation quantiles at `k` evenly spaced levels, deduplicated.
pub fn quantile_grid(values: &[f64], k: usize) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut grid: Vec<f64> = Vec::with_capacity(k);
    if n == 0 {
        return grid;
    }
    for i in 0..k.max(1) {
        let q = if k <= 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
        let h = q * (n - 1) as f64;
        let lo = h.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        let g = v[lo] + (h - lo as f64) * (v[hi] - v[lo]);
        if grid.last() != Some(&g) {
            grid.push(g);
        }
    }
    grid
}

pub fn partial_dependence(model: &Model, matrix: &Matrix, feature: &str, grid_size: usize) -> Result<PartialDependence> {
    matrix.check_columns(&model.feature_names)?;
    let j = matrix
        .column_index(feature)
        .ok_or_else(|| Error::Alignment(format!("feature {feature:?} not in model columns")))?;
    let grid = quantile_grid(&matrix.column(j), grid_size);
    let note = (grid.len() == 1).then(|| format!("{feature} is constant on the evaluated rows"));
    let points = grid
        .par_iter()
        .map(|&v| {
            let mut m = matrix.clone();
            for i in 0..m.n_rows() {
                m.set(i, j, v);
            }
            let preds = model.predict_unchecked(&m);
            (v, preds.iter().sum::<f64>() / preds.len().max(1) as f64)
        })
        .collect();
    Ok(PartialDependence { feature: feature.to_string(), points, note })
}
