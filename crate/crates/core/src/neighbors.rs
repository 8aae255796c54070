//! Exact k-nearest-neighbor search for the oversamplers.
//!
//! Distance is squared Euclidean over continuous columns plus a fixed
//! penalty for each mismatching categorical column. The k-d tree only splits
//! on continuous columns; categorical penalties are added when candidates are
//! scored, so pruning bounds stay valid. Ties are broken by row index.

use rayon::prelude::*;

use crate::matrix::Matrix;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
pub struct Metric {
    pub categorical: Vec<bool>,
    /// Added once per categorical mismatch (already squared).
    pub mismatch_penalty: f64,
}

impl Metric {
    pub fn euclidean(n_cols: usize) -> Self {
        Metric { categorical: vec![false; n_cols], mismatch_penalty: 0.0 }
    }

    pub fn distance2(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut d = 0.0;
        for ((x, y), &cat) in a.iter().zip(b).zip(&self.categorical) {
            if cat {
                if x != y {
                    d += self.mismatch_penalty;
                }
            } else {
                let t = x - y;
                d += t * t;
            }
        }
        d
    }
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// k-d tree over a subset of matrix rows.
pub struct KdTree<'a> {
    matrix: &'a Matrix,
    metric: &'a Metric,
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(matrix: &'a Matrix, rows: &[usize], metric: &'a Metric) -> Self {
        let mut tree = KdTree { matrix, metric, ids: rows.to_vec(), nodes: Vec::new() };
        let n = tree.ids.len();
        if n > 0 {
            tree.build_node(0, n);
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { start, end });
        if end - start <= LEAF_SIZE {
            return slot;
        }
        let mut best: Option<(usize, f64)> = None;
        for dim in 0..self.matrix.n_cols() {
            if self.metric.categorical[dim] {
                continue;
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.ids[start..end] {
                let v = self.matrix.get(i, dim);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            let spread = hi - lo;
            if spread > 0.0 && best.map_or(true, |(_, s)| spread > s) {
                best = Some((dim, spread));
            }
        }
        let Some((dim, _)) = best else {
            return slot;
        };
        let mid = start + (end - start) / 2;
        let m = self.matrix;
        self.ids[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            m.get(a, dim).total_cmp(&m.get(b, dim)).then(a.cmp(&b))
        });
        let value = m.get(self.ids[mid], dim);
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[slot] = Node::Split { dim, value, left, right };
        slot
    }

    /// The `k` nearest rows to `query`, skipping row `exclude`, nearest first.
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<usize> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, exclude, &mut best);
        }
        best.into_iter().map(|(_, i)| i).collect()
    }

    fn search(&self, node: usize, q: &[f64], k: usize, exclude: Option<usize>, best: &mut Vec<(f64, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.ids[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = self.metric.distance2(q, self.matrix.row(i));
                    offer(best, k, (d, i));
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, best);
                if best.len() < k || diff * diff <= best.last().unwrap().0 {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

fn offer(best: &mut Vec<(f64, usize)>, k: usize, cand: (f64, usize)) {
    let less = |a: &(f64, usize), b: &(f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    if best.len() == k && !less(&cand, best.last().unwrap()) {
        return;
    }
    let pos = best.iter().position(|b| less(&cand, b)).unwrap_or(best.len());
    best.insert(pos, cand);
    if best.len() > k {
        best.pop();
    }
}

/// For each query row, its `k` nearest rows among `candidates` (the query
/// row itself excluded).
pub fn knn(matrix: &Matrix, candidates: &[usize], queries: &[usize], k: usize, metric: &Metric) -> Vec<Vec<usize>> {
    let tree = KdTree::build(matrix, candidates, metric);
    queries
        .par_iter()
        .map(|&i| tree.nearest(matrix.row(i), k, Some(i)))
        .collect()
}

/// Reference implementation: full scan.
pub fn knn_brute(matrix: &Matrix, candidates: &[usize], queries: &[usize], k: usize, metric: &Metric) -> Vec<Vec<usize>> {
    queries
        .iter()
        .map(|&q| {
            let mut d: Vec<(f64, usize)> = candidates
                .iter()
                .filter(|&&c| c != q)
                .map(|&c| (metric.distance2(matrix.row(q), matrix.row(c)), c))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, i)| i).collect()
        })
        .collect()
}
