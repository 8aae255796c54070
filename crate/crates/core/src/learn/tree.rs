//! Binary trees shared by CART, the forest and boosting, plus the exact
//! CART grower.

use rand::seq::index;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainData;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        missing_goes_left: bool,
        /// Training weight reaching this node.
        cover: f64,
        /// Cover-weighted impurity decrease (CART) or loss reduction (boosting).
        gain: f64,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Tree { nodes: vec![Node::Leaf { value, cover }] }
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split { feature, threshold, left, right, missing_goes_left, .. } => {
                    let v = x[feature];
                    let go_left = if v.is_nan() { missing_goes_left } else { v <= threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    /// Per-feature sum of split gains.
    pub fn gain_by_feature(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        for n in &self.nodes {
            if let Node::Split { feature, gain, .. } = n {
                out[*feature] += gain;
            }
        }
        out
    }
}

pub fn gini(pos: f64, total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let p = pos / total;
    2.0 * p * (1.0 - p)
}

/// Per-feature dense ranks of the training values, computed once per
/// training set and shared by every tree grown on it.
#[derive(Debug, Clone)]
pub struct Ranked {
    /// Column-major ranks into `values`.
    ranks: Vec<Vec<u32>>,
    /// Sorted distinct values per feature.
    values: Vec<Vec<f64>>,
}

impl Ranked {
    pub fn new(data: &TrainData) -> Self {
        let n = data.n_rows();
        let p = data.matrix.n_cols();
        let mut ranks = Vec::with_capacity(p);
        let mut values = Vec::with_capacity(p);
        for j in 0..p {
            let col = data.matrix.column(j);
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut r = vec![0u32; n];
            let mut distinct: Vec<f64> = Vec::new();
            for &i in &order {
                if distinct.last().map_or(true, |&last| last != col[i]) {
                    distinct.push(col[i]);
                }
                r[i] = (distinct.len() - 1) as u32;
            }
            ranks.push(r);
            values.push(distinct);
        }
        Ranked { ranks, values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartParams {
    pub max_depth: usize,
    /// Minimum training weight on each side of a split.
    pub min_leaf: f64,
    /// Candidate features per node; `None` means all.
    pub features_per_split: Option<usize>,
}

#[derive(Clone, Copy)]
struct Sample {
    row: u32,
    weight: f64,
    pos: bool,
}

struct Best {
    feature: usize,
    rank: u32,
    threshold: f64,
    decrease: f64,
}

struct Grower<'a> {
    ranked: &'a Ranked,
    params: CartParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
    hist_w: Vec<f64>,
    hist_p: Vec<f64>,
    pairs: Vec<(u32, f64, bool)>,
}

/// Grow a weighted-Gini CART tree on `rows` of the training set given as
/// (row, weight) pairs. `rng` drives per-node feature subsampling.
pub fn grow_cart(
    data: &TrainData,
    ranked: &Ranked,
    rows: &[(usize, f64)],
    params: CartParams,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let max_distinct = ranked.values.iter().map(Vec::len).max().unwrap_or(0);
    let mut samples: Vec<Sample> = rows
        .iter()
        .filter(|(_, w)| *w > 0.0)
        .map(|&(i, w)| Sample { row: i as u32, weight: w, pos: data.labels[i] })
        .collect();
    let mut g = Grower {
        ranked,
        params,
        rng,
        nodes: Vec::new(),
        hist_w: vec![0.0; max_distinct],
        hist_p: vec![0.0; max_distinct],
        pairs: Vec::new(),
    };
    if samples.is_empty() {
        return Tree::leaf(0.0, 0.0);
    }
    g.grow(&mut samples, 0);
    Tree { nodes: g.nodes }
}

impl Grower<'_> {
    fn grow(&mut self, samples: &mut [Sample], depth: usize) -> usize {
        let (w, pos) = samples.iter().fold((0.0, 0.0), |(w, p), s| (w + s.weight, p + if s.pos { s.weight } else { 0.0 }));
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { value: pos / w, cover: w });
        if depth >= self.params.max_depth || pos <= 0.0 || pos >= w || w < 2.0 * self.params.min_leaf || samples.len() < 2 {
            return slot;
        }
        let p = self.ranked.values.len();
        let features: Vec<usize> = match (self.params.features_per_split, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < p => {
                let mut f = index::sample(rng, p, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let parent = w * gini(pos, w);
        let mut best: Option<Best> = None;
        for f in features {
            if let Some(b) = self.best_split(samples, f, w, pos, parent) {
                if best.as_ref().map_or(true, |cur| b.decrease > cur.decrease) {
                    best = Some(b);
                }
            }
        }
        let Some(best) = best else {
            return slot;
        };
        let ranks = &self.ranked.ranks[best.feature];
        let mut k = 0;
        for i in 0..samples.len() {
            if ranks[samples[i].row as usize] <= best.rank {
                samples.swap(i, k);
                k += 1;
            }
        }
        let (l, r) = samples.split_at_mut(k);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            missing_goes_left: true,
            cover: w,
            gain: best.decrease,
        };
        slot
    }

    fn best_split(&mut self, samples: &[Sample], f: usize, w: f64, pos: f64, parent: f64) -> Option<Best> {
        let ranks = &self.ranked.ranks[f];
        let values = &self.ranked.values[f];
        if values.len() < 2 {
            return None;
        }
        // (rank, weight, positive weight) per distinct value present, ascending
        let mut groups: Vec<(u32, f64, f64)> = Vec::new();
        if samples.len() * 4 >= values.len() {
            for s in samples {
                let r = ranks[s.row as usize] as usize;
                self.hist_w[r] += s.weight;
                if s.pos {
                    self.hist_p[r] += s.weight;
                }
            }
            for r in 0..values.len() {
                if self.hist_w[r] > 0.0 {
                    groups.push((r as u32, self.hist_w[r], self.hist_p[r]));
                    self.hist_w[r] = 0.0;
                    self.hist_p[r] = 0.0;
                }
            }
        } else {
            self.pairs.clear();
            self.pairs.extend(samples.iter().map(|s| (ranks[s.row as usize], s.weight, s.pos)));
            self.pairs.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
            for &(r, sw, sp) in &self.pairs {
                let pw = if sp { sw } else { 0.0 };
                match groups.last_mut() {
                    Some(g) if g.0 == r => {
                        g.1 += sw;
                        g.2 += pw;
                    }
                    _ => groups.push((r, sw, pw)),
                }
            }
        }
        let min_leaf = self.params.min_leaf;
        let mut best: Option<Best> = None;
        let (mut lw, mut lp) = (0.0, 0.0);
        for gi in 0..groups.len().saturating_sub(1) {
            lw += groups[gi].1;
            lp += groups[gi].2;
            let rw = w - lw;
            if lw < min_leaf {
                continue;
            }
            if rw < min_leaf {
                break;
            }
            let rp = pos - lp;
            let decrease = parent - lw * gini(lp, lw) - rw * gini(rp, rw);
            if decrease > 1e-12 * w && best.as_ref().map_or(true, |b| decrease > b.decrease) {
                let (a, b) = (values[groups[gi].0 as usize], values[groups[gi + 1].0 as usize]);
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                best = Some(Best { feature: f, rank: groups[gi].0, threshold, decrease });
            }
        }
        best
    }
}
