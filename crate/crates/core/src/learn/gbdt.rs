//! Histogram gradient boosting with logistic loss and leaf-wise growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{Node, Tree};
use super::{sigmoid, TrainData};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_leaves: usize,
    pub histogram_bins: usize,
    pub l2_leaf: f64,
    /// Minimum training weight in a leaf.
    pub min_leaf: f64,
    /// Minimum hessian mass in a leaf.
    pub min_hessian: f64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_rounds: 400,
            learning_rate: 0.1,
            max_leaves: 31,
            histogram_bins: 64,
            l2_leaf: 1.0,
            min_leaf: 20.0,
            min_hessian: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedModel {
    pub base_margin: f64,
    /// Leaves hold raw margins; the model output scales them by `learning_rate`.
    pub trees: Vec<Tree>,
    pub learning_rate: f64,
    pub n_rounds: usize,
    pub max_leaves: usize,
    pub histogram_bins: usize,
    pub l2_leaf: f64,
    pub seed: u64,
    /// Weighted mean log-loss after each round, starting with the base score.
    pub loss_trace: Vec<f64>,
}

impl BoostedModel {
    pub fn margin_row(&self, x: &[f64]) -> f64 {
        self.base_margin + self.learning_rate * self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin_row(x))
    }
}

/// Per-feature cut points; bin `b` holds values in (cut[b-1], cut[b]].
#[derive(Debug, Clone)]
pub struct Bins {
    pub cuts: Vec<Vec<f64>>,
    /// Column-major bin indices.
    pub codes: Vec<Vec<u8>>,
}

/// Weighted-quantile binning with at most `max_bins` bins per feature. Cut
/// points are midpoints between consecutive distinct values.
pub fn bin_features(data: &TrainData, max_bins: usize) -> Bins {
    let max_bins = max_bins.clamp(2, 256);
    let n = data.n_rows();
    let mut cuts = Vec::new();
    let mut codes = Vec::new();
    for j in 0..data.matrix.n_cols() {
        let col = data.matrix.column(j);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let mut distinct: Vec<(f64, f64)> = Vec::new();
        for &i in &order {
            match distinct.last_mut() {
                Some(d) if d.0 == col[i] => d.1 += data.weights[i],
                _ => distinct.push((col[i], data.weights[i])),
            }
        }
        let mut c: Vec<f64> = Vec::new();
        if distinct.len() <= max_bins {
            c.extend(distinct.windows(2).map(|w| midpoint(w[0].0, w[1].0)));
        } else {
            let total: f64 = distinct.iter().map(|d| d.1).sum();
            let mut cum = 0.0;
            let mut next = 1;
            for k in 0..distinct.len() - 1 {
                cum += distinct[k].1;
                if next < max_bins && cum >= total * next as f64 / max_bins as f64 {
                    c.push(midpoint(distinct[k].0, distinct[k + 1].0));
                    while next < max_bins && cum >= total * next as f64 / max_bins as f64 {
                        next += 1;
                    }
                }
            }
        }
        codes.push(col.iter().map(|&v| c.partition_point(|&cut| cut < v) as u8).collect());
        cuts.push(c);
    }
    Bins { cuts, codes }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

#[derive(Clone, Copy, Default)]
struct Cell {
    g: f64,
    h: f64,
    w: f64,
}

type Hist = Vec<Vec<Cell>>;

fn histogram(bins: &Bins, rows: &[u32], g: &[f64], h: &[f64], w: &[f64]) -> Hist {
    bins.codes
        .par_iter()
        .zip(&bins.cuts)
        .map(|(codes, cuts)| {
            let mut hist = vec![Cell::default(); cuts.len() + 1];
            for &r in rows {
                let r = r as usize;
                let c = &mut hist[codes[r] as usize];
                c.g += g[r];
                c.h += h[r];
                c.w += w[r];
            }
            hist
        })
        .collect()
}

fn subtract(parent: &Hist, child: &Hist) -> Hist {
    parent
        .iter()
        .zip(child)
        .map(|(p, c)| p.iter().zip(c).map(|(a, b)| Cell { g: a.g - b.g, h: a.h - b.h, w: a.w - b.w }).collect())
        .collect()
}

struct Candidate {
    gain: f64,
    feature: usize,
    bin: usize,
}

struct Leaf {
    node: usize,
    rows: Vec<u32>,
    hist: Hist,
    g: f64,
    h: f64,
    w: f64,
    split: Option<Candidate>,
}

fn score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

fn find_split(leaf: &Leaf, cfg: &GbdtConfig) -> Option<Candidate> {
    let parent = score(leaf.g, leaf.h, cfg.l2_leaf);
    let mut best: Option<Candidate> = None;
    for (f, hist) in leaf.hist.iter().enumerate() {
        let (mut gl, mut hl, mut wl) = (0.0, 0.0, 0.0);
        for b in 0..hist.len().saturating_sub(1) {
            gl += hist[b].g;
            hl += hist[b].h;
            wl += hist[b].w;
            let (gr, hr, wr) = (leaf.g - gl, leaf.h - hl, leaf.w - wl);
            if wl < cfg.min_leaf || hl < cfg.min_hessian {
                continue;
            }
            if wr < cfg.min_leaf || hr < cfg.min_hessian {
                break;
            }
            let gain = score(gl, hl, cfg.l2_leaf) + score(gr, hr, cfg.l2_leaf) - parent;
            if gain > 1e-12 && best.as_ref().map_or(true, |c| gain > c.gain) {
                best = Some(Candidate { gain, feature: f, bin: b });
            }
        }
    }
    best
}

fn grow_tree(bins: &Bins, g: &[f64], h: &[f64], w: &[f64], n: usize, cfg: &GbdtConfig) -> (Tree, Vec<(Vec<u32>, f64)>) {
    let rows: Vec<u32> = (0..n as u32).collect();
    let hist = histogram(bins, &rows, g, h, w);
    let (sg, sh, sw) = rows.iter().fold((0.0, 0.0, 0.0), |a, &r| (a.0 + g[r as usize], a.1 + h[r as usize], a.2 + w[r as usize]));
    let mut nodes = vec![Node::Leaf { value: 0.0, cover: sw }];
    let mut root = Leaf { node: 0, rows, hist, g: sg, h: sh, w: sw, split: None };
    root.split = find_split(&root, cfg);
    let mut leaves = vec![root];
    while leaves.len() < cfg.max_leaves {
        // Highest gain first; earliest-created leaf wins a tie.
        let pick = leaves
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.split.as_ref().map(|c| (i, c.gain)))
            .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                Some((_, g0)) if g0 >= gain => acc,
                _ => Some((i, gain)),
            });
        let Some((li, _)) = pick else { break };
        let leaf = leaves.remove(li);
        let cand = leaf.split.as_ref().expect("picked leaf has a split");
        let codes = &bins.codes[cand.feature];
        let (lrows, rrows): (Vec<u32>, Vec<u32>) = leaf.rows.iter().partition(|&&r| codes[r as usize] as usize <= cand.bin);
        let small_left = lrows.len() <= rrows.len();
        let small = histogram(bins, if small_left { &lrows } else { &rrows }, g, h, w);
        let large = subtract(&leaf.hist, &small);
        let (lh, rh) = if small_left { (small, large) } else { (large, small) };
        let sums = |rows: &[u32]| rows.iter().fold((0.0, 0.0, 0.0), |a, &r| (a.0 + g[r as usize], a.1 + h[r as usize], a.2 + w[r as usize]));
        let (lg, lhh, lw) = sums(&lrows);
        let (rg, rhh, rw) = sums(&rrows);
        let (ln, rn) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { value: 0.0, cover: lw });
        nodes.push(Node::Leaf { value: 0.0, cover: rw });
        nodes[leaf.node] = Node::Split {
            feature: cand.feature,
            threshold: bins.cuts[cand.feature][cand.bin],
            left: ln,
            right: rn,
            missing_goes_left: true,
            cover: leaf.w,
            gain: cand.gain,
        };
        for (node, rows, hist, sg, sh, sw) in [(ln, lrows, lh, lg, lhh, lw), (rn, rrows, rh, rg, rhh, rw)] {
            let mut l = Leaf { node, rows, hist, g: sg, h: sh, w: sw, split: None };
            l.split = find_split(&l, cfg);
            leaves.push(l);
        }
    }
    leaves.sort_by_key(|l| l.node);
    let mut out = Vec::with_capacity(leaves.len());
    for l in leaves {
        let value = -l.g / (l.h + cfg.l2_leaf);
        nodes[l.node] = Node::Leaf { value, cover: l.w };
        out.push((l.rows, value));
    }
    (Tree { nodes }, out)
}

fn weighted_logloss(margin: &[f64], data: &TrainData) -> f64 {
    let mut loss = 0.0;
    for i in 0..margin.len() {
        let m = margin[i];
        // log(1 + e^m) - y m, computed stably
        let softplus = if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
        loss += data.weights[i] * (softplus - if data.labels[i] { m } else { 0.0 });
    }
    loss / data.total_weight()
}

pub fn fit_gbdt(data: &TrainData, cfg: &GbdtConfig, seed: u64) -> BoostedModel {
    let n = data.n_rows();
    let pos: f64 = (0..n).filter(|&i| data.labels[i]).map(|i| data.weights[i]).sum();
    let total = data.total_weight();
    let base_margin = if pos <= 0.0 {
        -30.0
    } else if pos >= total {
        30.0
    } else {
        (pos / (total - pos)).ln()
    };
    let bins = bin_features(data, cfg.histogram_bins);
    let mut margin = vec![base_margin; n];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(cfg.n_rounds);
    let mut loss_trace = vec![weighted_logloss(&margin, data)];
    for _ in 0..cfg.n_rounds {
        for i in 0..n {
            let p = sigmoid(margin[i]);
            let w = data.weights[i];
            g[i] = w * (p - if data.labels[i] { 1.0 } else { 0.0 });
            h[i] = w * p * (1.0 - p);
        }
        let (tree, leaves) = grow_tree(&bins, &g, &h, &data.weights, n, cfg);
        for (rows, value) in leaves {
            for r in rows {
                margin[r as usize] += cfg.learning_rate * value;
            }
        }
        trees.push(tree);
        loss_trace.push(weighted_logloss(&margin, data));
    }
    BoostedModel {
        base_margin,
        trees,
        learning_rate: cfg.learning_rate,
        n_rounds: cfg.n_rounds,
        max_leaves: cfg.max_leaves,
        histogram_bins: cfg.histogram_bins,
        l2_leaf: cfg.l2_leaf,
        seed,
        loss_trace,
    }
}
