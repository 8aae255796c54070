//! Development-only imbalance treatments.
//!
//! Every resampler takes a [`DevSet`], which can only be built from rows
//! tagged with the development split. Evaluation rows therefore never reach
//! weighting or oversampling.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::neighbors::{knn, Metric};
use crate::panel::Split;
use crate::preprocess::median;
use crate::rng;

pub const DEFAULT_K: usize = 5;
pub const WEIGHT_CAP: f64 = 50.0;

/// Training matrix restricted to the development window.
#[derive(Debug, Clone, PartialEq)]
pub struct DevSet {
    matrix: Matrix,
    labels: Vec<bool>,
}

impl DevSet {
    pub fn new(matrix: Matrix, labels: Vec<bool>, splits: &[Split]) -> Result<Self> {
        if matrix.n_rows() != labels.len() || labels.len() != splits.len() {
            return Err(Error::Alignment(format!(
                "{} rows, {} labels, {} split tags",
                matrix.n_rows(),
                labels.len(),
                splits.len()
            )));
        }
        if let Some(s) = splits.iter().find(|s| **s != Split::Dev) {
            return Err(Error::Contract(format!("resampling input contains a {s} row")));
        }
        Ok(DevSet { matrix, labels })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    fn class_rows(&self) -> (Vec<usize>, Vec<usize>) {
        let pos = (0..self.labels.len()).filter(|&i| self.labels[i]).collect::<Vec<_>>();
        let neg = (0..self.labels.len()).filter(|&i| !self.labels[i]).collect::<Vec<_>>();
        (pos, neg)
    }

    /// (minority label, minority rows, majority rows); positives count as the
    /// minority on a tie.
    fn minority(&self) -> (bool, Vec<usize>, Vec<usize>) {
        let (pos, neg) = self.class_rows();
        if pos.len() <= neg.len() {
            (true, pos, neg)
        } else {
            (false, neg, pos)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ImbalanceKind {
    #[serde(rename = "weights")]
    Weights,
    #[serde(rename = "ros")]
    Ros,
    #[serde(rename = "smote_nc")]
    SmoteNc,
    #[serde(rename = "borderline_smote")]
    BorderlineSmote,
    #[serde(rename = "adasyn")]
    Adasyn,
}

impl ImbalanceKind {
    pub const ALL: [ImbalanceKind; 5] = [
        ImbalanceKind::Weights,
        ImbalanceKind::Ros,
        ImbalanceKind::SmoteNc,
        ImbalanceKind::BorderlineSmote,
        ImbalanceKind::Adasyn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ImbalanceKind::Weights => "weights",
            ImbalanceKind::Ros => "ros",
            ImbalanceKind::SmoteNc => "smote_nc",
            ImbalanceKind::BorderlineSmote => "borderline_smote",
            ImbalanceKind::Adasyn => "adasyn",
        }
    }
}

impl fmt::Display for ImbalanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ImbalanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ImbalanceKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown imbalance variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowOrigin {
    /// Copy of development row `i`.
    Real(usize),
    /// Generated row, numbered from 0 within the variant.
    Synthetic(usize),
}

impl RowOrigin {
    /// Identifier that can never collide with a real org_id.
    pub fn row_id(&self) -> String {
        match self {
            RowOrigin::Real(i) => format!("dev:{i}"),
            RowOrigin::Synthetic(j) => format!("synthetic:{j}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceVariant {
    pub kind: ImbalanceKind,
    pub matrix: Matrix,
    pub labels: Vec<bool>,
    /// Per-row training weights; present for the weights variant only.
    pub weights: Option<Vec<f64>>,
    pub categorical_mask: Vec<bool>,
    pub origin: Vec<RowOrigin>,
    pub seed: u64,
    /// Set when the requested method could not run and ROS output was used.
    pub fallback: bool,
    pub warnings: Vec<String>,
}

impl ImbalanceVariant {
    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

/// Positive-class weight N_neg / N_pos capped at 50; negatives weigh 1.
pub fn weights_from_counts(n: usize, positives: usize) -> Result<ClassWeights> {
    if positives == 0 || positives >= n {
        return Err(Error::Degenerate("class weights need both classes".into()));
    }
    let neg = (n - positives) as f64;
    Ok(ClassWeights { positive: (neg / positives as f64).min(WEIGHT_CAP), negative: 1.0 })
}

pub fn inverse_prevalence_weights(labels: &[bool]) -> Result<ClassWeights> {
    let pos = labels.iter().filter(|l| **l).count();
    weights_from_counts(labels.len(), pos)
}

/// Row count after oversampling the minority up to the majority count.
pub fn balanced_size(n: usize, positives: usize) -> usize {
    2 * positives.max(n - positives)
}

fn require_both_classes(dev: &DevSet) -> Result<()> {
    let (pos, neg) = dev.class_rows();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Degenerate("resampling needs both classes".into()));
    }
    Ok(())
}

fn identity_variant(kind: ImbalanceKind, dev: &DevSet, seed: u64) -> ImbalanceVariant {
    ImbalanceVariant {
        kind,
        matrix: dev.matrix.clone(),
        labels: dev.labels.clone(),
        weights: None,
        categorical_mask: vec![false; dev.matrix.n_cols()],
        origin: (0..dev.labels.len()).map(RowOrigin::Real).collect(),
        seed,
        fallback: false,
        warnings: Vec::new(),
    }
}

pub fn weights_variant(dev: &DevSet, seed: u64) -> Result<ImbalanceVariant> {
    let w = inverse_prevalence_weights(&dev.labels)?;
    let mut v = identity_variant(ImbalanceKind::Weights, dev, seed);
    v.weights = Some(dev.labels.iter().map(|&l| if l { w.positive } else { w.negative }).collect());
    Ok(v)
}

/// Duplicate minority rows (with replacement) until both classes have equal
/// counts, then shuffle all rows.
pub fn random_oversample(dev: &DevSet, seed: u64) -> Result<ImbalanceVariant> {
    require_both_classes(dev)?;
    let (_, minority, majority) = dev.minority();
    let mut order: Vec<usize> = (0..dev.labels.len()).collect();
    let mut draw = rng::stream(seed, &[rng::tag("ros")]);
    for _ in 0..majority.len() - minority.len() {
        order.push(minority[draw.gen_range(0..minority.len())]);
    }
    let mut shuffle = rng::stream(seed, &[rng::tag("ros-shuffle")]);
    order.shuffle(&mut shuffle);

    let mut v = identity_variant(ImbalanceKind::Ros, dev, seed);
    v.matrix = dev.matrix.take_rows(&order);
    v.labels = order.iter().map(|&i| dev.labels[i]).collect();
    v.origin = order.into_iter().map(RowOrigin::Real).collect();
    Ok(v)
}

fn interpolate(x: &[f64], nn: &[f64], u: f64, out: &mut [f64]) {
    for j in 0..x.len() {
        let (a, b) = (x[j], nn[j]);
        out[j] = (a + u * (b - a)).clamp(a.min(b), a.max(b));
    }
}

/// Median of the per-column standard deviations over continuous columns of
/// the given rows.
fn median_continuous_sd(m: &Matrix, rows: &[usize], categorical: &[bool]) -> f64 {
    let mut sds: Vec<f64> = (0..m.n_cols())
        .filter(|&j| !categorical[j])
        .map(|j| {
            let n = rows.len() as f64;
            let mean = rows.iter().map(|&i| m.get(i, j)).sum::<f64>() / n;
            (rows.iter().map(|&i| (m.get(i, j) - mean).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    median(&mut sds).unwrap_or(0.0)
}

/// Most frequent value; the smallest value wins a tie.
fn vote(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let (mut best, mut best_n) = (v[0], 0);
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        if j - i > best_n {
            best = v[i];
            best_n = j - i;
        }
        i = j;
    }
    best
}

fn check_no_missing(dev: &DevSet, what: &str) -> Result<()> {
    if dev.matrix.has_missing() {
        return Err(Error::Contract(format!("{what} requires an imputed matrix")));
    }
    Ok(())
}

/// SMOTE for mixed continuous/categorical columns.
///
/// Synthetic continuous coordinates lie on the segment between a minority row
/// and one of its `k` nearest minority neighbors; categorical coordinates take
/// the most frequent value among those neighbors. Each categorical mismatch
/// adds the squared median continuous standard deviation to the distance.
pub fn smote_nc(dev: &DevSet, categorical_mask: &[bool], k: usize, seed: u64) -> Result<ImbalanceVariant> {
    if categorical_mask.len() != dev.matrix.n_cols() {
        return Err(Error::Alignment("categorical mask width differs from matrix".into()));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    check_no_missing(dev, "SMOTE-NC")?;
    require_both_classes(dev)?;
    let (min_label, minority, majority) = dev.minority();
    if minority.len() < 2 {
        return Err(Error::Degenerate("SMOTE-NC needs at least two minority rows".into()));
    }
    let k = k.min(minority.len() - 1);
    let med = median_continuous_sd(&dev.matrix, &minority, categorical_mask);
    let metric = Metric { categorical: categorical_mask.to_vec(), mismatch_penalty: med * med };
    let neighbors = knn(&dev.matrix, &minority, &minority, k, &metric);

    let mut v = identity_variant(ImbalanceKind::SmoteNc, dev, seed);
    v.categorical_mask = categorical_mask.to_vec();
    let n_new = majority.len() - minority.len();
    let p = dev.matrix.n_cols();
    let mut buf = vec![0.0; p];
    for s in 0..n_new {
        let mut r = rng::stream(seed, &[rng::tag("smote_nc"), s as u64]);
        let base = r.gen_range(0..minority.len());
        let nbrs = &neighbors[base];
        let nn = nbrs[r.gen_range(0..nbrs.len())];
        let u: f64 = r.gen();
        let x = dev.matrix.row(minority[base]);
        interpolate(x, dev.matrix.row(nn), u, &mut buf);
        for j in (0..p).filter(|&j| categorical_mask[j]) {
            buf[j] = vote(nbrs.iter().map(|&i| dev.matrix.get(i, j)));
        }
        v.matrix.push_row(&buf);
        v.labels.push(min_label);
        v.origin.push(RowOrigin::Synthetic(s));
    }
    Ok(v)
}

fn fallback_to_ros(kind: ImbalanceKind, dev: &DevSet, seed: u64) -> Result<ImbalanceVariant> {
    let msg = format!("{kind} cannot run on missing values; falling back to random oversampling");
    log::warn!("{msg}");
    let mut v = random_oversample(dev, seed)?;
    v.kind = kind;
    v.fallback = true;
    v.warnings.push(msg);
    Ok(v)
}

fn unchanged_with_warning(kind: ImbalanceKind, dev: &DevSet, seed: u64, msg: String) -> ImbalanceVariant {
    log::warn!("{msg}");
    let mut v = identity_variant(kind, dev, seed);
    v.warnings.push(msg);
    v
}

/// Majority count among each minority row's `k` nearest neighbors in the full
/// set, with the minority rows in index order.
fn majority_neighbor_counts(dev: &DevSet, minority: &[usize], min_label: bool, k: usize) -> Vec<usize> {
    let all: Vec<usize> = (0..dev.labels.len()).collect();
    let metric = Metric::euclidean(dev.matrix.n_cols());
    knn(&dev.matrix, &all, minority, k, &metric)
        .into_iter()
        .map(|nb| nb.iter().filter(|&&i| dev.labels[i] != min_label).count())
        .collect()
}

fn synthesize(
    v: &mut ImbalanceVariant,
    dev: &DevSet,
    base: usize,
    neighbors: &[usize],
    label: bool,
    rng_path: &[u64],
) {
    let mut r = rng::stream(v.seed, rng_path);
    let nn = neighbors[r.gen_range(0..neighbors.len())];
    let u: f64 = r.gen();
    let mut buf = vec![0.0; dev.matrix.n_cols()];
    interpolate(dev.matrix.row(base), dev.matrix.row(nn), u, &mut buf);
    let s = v.labels.len() - dev.labels.len();
    v.matrix.push_row(&buf);
    v.labels.push(label);
    v.origin.push(RowOrigin::Synthetic(s));
}

/// Borderline-SMOTE-1: only minority rows whose neighborhoods are at least
/// half (but not entirely) majority are used as interpolation bases.
pub fn borderline_smote(dev: &DevSet, k: usize, seed: u64) -> Result<ImbalanceVariant> {
    let kind = ImbalanceKind::BorderlineSmote;
    if dev.matrix.has_missing() {
        return fallback_to_ros(kind, dev, seed);
    }
    require_both_classes(dev)?;
    let (min_label, minority, majority) = dev.minority();
    if minority.len() < 2 || k == 0 {
        return Err(Error::Degenerate("Borderline-SMOTE needs at least two minority rows and k >= 1".into()));
    }
    let counts = majority_neighbor_counts(dev, &minority, min_label, k);
    let danger: Vec<usize> = minority
        .iter()
        .zip(&counts)
        .filter(|(_, &m)| 2 * m >= k && m < k)
        .map(|(&i, _)| i)
        .collect();
    if danger.is_empty() {
        return Ok(unchanged_with_warning(kind, dev, seed, "Borderline-SMOTE found no danger rows; input returned unchanged".into()));
    }
    let metric = Metric::euclidean(dev.matrix.n_cols());
    let k_min = k.min(minority.len() - 1);
    let neighbors = knn(&dev.matrix, &minority, &danger, k_min, &metric);
    let mut v = identity_variant(kind, dev, seed);
    for s in 0..majority.len() - minority.len() {
        let pick = rng::stream(seed, &[rng::tag("borderline-base"), s as u64]).gen_range(0..danger.len());
        synthesize(&mut v, dev, danger[pick], &neighbors[pick], min_label, &[rng::tag("borderline"), s as u64]);
    }
    Ok(v)
}

/// ADASYN synthetic budget per minority row: proportional to the majority
/// share of its `k` neighbors, scaled to the class gap and rounded.
pub fn adasyn_budget(dev: &DevSet, k: usize) -> Result<Vec<(usize, usize)>> {
    require_both_classes(dev)?;
    check_no_missing(dev, "ADASYN")?;
    let (min_label, minority, majority) = dev.minority();
    let counts = majority_neighbor_counts(dev, &minority, min_label, k);
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Ok(minority.into_iter().map(|i| (i, 0)).collect());
    }
    let gap = (majority.len() - minority.len()) as f64;
    Ok(minority
        .into_iter()
        .zip(counts)
        .map(|(i, c)| (i, (c as f64 / total as f64 * gap).round() as usize))
        .collect())
}

pub fn adasyn(dev: &DevSet, k: usize, seed: u64) -> Result<ImbalanceVariant> {
    let kind = ImbalanceKind::Adasyn;
    if dev.matrix.has_missing() {
        return fallback_to_ros(kind, dev, seed);
    }
    let (min_label, minority, _) = dev.minority();
    if minority.len() < 2 || k == 0 {
        return Err(Error::Degenerate("ADASYN needs at least two minority rows and k >= 1".into()));
    }
    let budget = adasyn_budget(dev, k)?;
    if budget.iter().all(|(_, g)| *g == 0) {
        return Ok(unchanged_with_warning(kind, dev, seed, "ADASYN found no majority neighbors; input returned unchanged".into()));
    }
    let bases: Vec<usize> = budget.iter().filter(|(_, g)| *g > 0).map(|(i, _)| *i).collect();
    let metric = Metric::euclidean(dev.matrix.n_cols());
    let neighbors = knn(&dev.matrix, &minority, &bases, k.min(minority.len() - 1), &metric);
    let mut v = identity_variant(kind, dev, seed);
    let mut nb = neighbors.iter();
    for &(i, g) in &budget {
        if g == 0 {
            continue;
        }
        let nbrs = nb.next().expect("one neighbor list per base");
        for t in 0..g {
            synthesize(&mut v, dev, i, nbrs, min_label, &[rng::tag("adasyn"), i as u64, t as u64]);
        }
    }
    Ok(v)
}

/// Build any variant; `categorical_mask` is used by SMOTE-NC only.
pub fn build_variant(kind: ImbalanceKind, dev: &DevSet, categorical_mask: &[bool], k: usize, seed: u64) -> Result<ImbalanceVariant> {
    match kind {
        ImbalanceKind::Weights => weights_variant(dev, seed),
        ImbalanceKind::Ros => random_oversample(dev, seed),
        ImbalanceKind::SmoteNc => smote_nc(dev, categorical_mask, k, seed),
        ImbalanceKind::BorderlineSmote => borderline_smote(dev, k, seed),
        ImbalanceKind::Adasyn => adasyn(dev, k, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dev(rows: &[Vec<f64>], labels: &[bool]) -> DevSet {
        let m = Matrix::with_anonymous_columns(rows[0].len(), rows).unwrap();
        DevSet::new(m, labels.to_vec(), &vec![Split::Dev; labels.len()]).unwrap()
    }

    fn labels(pos: usize, neg: usize) -> Vec<bool> {
        (0..pos + neg).map(|i| i < pos).collect()
    }

    #[test]
    fn weights_table_values() {
        let w = weights_from_counts(2_495_444, 439_009).unwrap();
        assert!((w.positive - 2_056_435.0 / 439_009.0).abs() < 1e-12);
        assert_eq!(w.negative, 1.0);
        assert_eq!(weights_from_counts(10, 5).unwrap().positive, 1.0);
        assert_eq!(weights_from_counts(101, 1).unwrap().positive, 50.0);
        assert!(weights_from_counts(10, 0).is_err());
        assert!(inverse_prevalence_weights(&[true, true]).is_err());
    }

    #[test]
    fn balanced_sizes() {
        assert_eq!(balanced_size(2_495_444, 439_009), 4_112_870);
        assert_eq!(balanced_size(2_495_444, 547_553), 3_895_782);
        assert_eq!(balanced_size(2_495_444, 147_395), 4_696_098);
    }

    #[test]
    fn dev_only() {
        let m = Matrix::with_anonymous_columns(1, &[vec![1.0], vec![2.0]]).unwrap();
        let err = DevSet::new(m, vec![true, false], &[Split::Dev, Split::Final]).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn weights_leave_matrix_untouched() {
        let d = dev(&[vec![1.0], vec![2.0], vec![3.0]], &[true, false, false]);
        let v = weights_variant(&d, 1).unwrap();
        assert_eq!(&v.matrix, d.matrix());
        assert_eq!(v.weights.unwrap(), vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn ros_counts_and_determinism() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64]).collect();
        let d = dev(&rows, &labels(3, 9));
        let v = random_oversample(&d, 3).unwrap();
        assert_eq!(v.n_rows(), 18);
        assert_eq!(v.positives(), 9);
        assert!(v.matrix.rows().zip(&v.labels).all(|(r, &l)| l == (r[0] < 3.0)));
        assert_eq!(v, random_oversample(&d, 3).unwrap());

        let bal = dev(&rows, &labels(6, 6));
        let v = random_oversample(&bal, 3).unwrap();
        let mut got: Vec<f64> = v.matrix.column(0);
        got.sort_by(f64::total_cmp);
        assert_eq!(got, (0..12).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn smote_identical_minority_rows() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![5.0, 1.0], vec![6.0, 1.0], vec![7.0, 0.0], vec![8.0, 1.0]];
        let d = dev(&rows, &labels(2, 4));
        let v = smote_nc(&d, &[false, true], 5, 9).unwrap();
        assert_eq!(v.n_rows(), 8);
        for i in 6..8 {
            assert_eq!(v.matrix.row(i), &[1.0, 0.0]);
            assert!(v.labels[i]);
            assert_eq!(v.origin[i], RowOrigin::Synthetic(i - 6));
        }
    }

    #[test]
    fn smote_needs_two_minority_rows() {
        let d = dev(&[vec![1.0], vec![2.0], vec![3.0]], &[true, false, false]);
        assert!(smote_nc(&d, &[false], 5, 1).is_err());
    }

    #[test]
    fn smote_rejects_missing() {
        let d = dev(&[vec![1.0], vec![f64::NAN], vec![3.0], vec![4.0]], &[true, true, false, false]);
        assert!(smote_nc(&d, &[false], 1, 1).is_err());
    }

    #[test]
    fn fallback_on_missing() {
        let rows = vec![vec![1.0], vec![f64::NAN], vec![3.0], vec![4.0], vec![5.0], vec![6.0]];
        let d = dev(&rows, &labels(2, 4));
        for v in [borderline_smote(&d, 3, 1).unwrap(), adasyn(&d, 3, 1).unwrap()] {
            assert!(v.fallback);
            assert_eq!(v.n_rows(), 8);
            assert_eq!(v.positives(), 4);
            let ros = random_oversample(&d, 1).unwrap();
            assert_eq!(v.labels, ros.labels);
        }
    }

    #[test]
    fn borderline_without_danger_is_identity() {
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| vec![100.0 + i as f64]).collect();
        rows.extend((0..8).map(|i| vec![i as f64]));
        let d = dev(&rows, &labels(4, 8));
        let v = borderline_smote(&d, 3, 1).unwrap();
        assert_eq!(v.n_rows(), 12);
        assert_eq!(v.warnings.len(), 1);
        assert!(!v.fallback);
    }

    #[test]
    fn borderline_uses_danger_rows_only() {
        // k=3: the minority row at 1.0 sees {1.1, 1.2, 0.2} (two majority,
        // danger); 0.0, 0.1 and 0.2 see at most one majority row; the
        // cluster near 50 sees none.
        let mut rows: Vec<Vec<f64>> = [0.0, 0.1, 0.2, 1.0, 50.0, 50.1, 50.2].iter().map(|&x| vec![x]).collect();
        rows.extend([1.1, 1.2].iter().map(|&x| vec![x]));
        rows.extend((20..28).map(|x| vec![x as f64]));
        let d = dev(&rows, &labels(7, 10));
        let v = borderline_smote(&d, 3, 2).unwrap();
        assert_eq!(v.n_rows(), 20);
        assert!(v.warnings.is_empty());
        for r in v.matrix.rows().skip(17) {
            assert!((0.0..=1.0).contains(&r[0]), "synthetic row {r:?} not from the danger row");
        }
    }

    /// Minority at 0.0..2.0 and majority at 2.5..5.5 in steps of 0.5. With
    /// k=3 and index tie-breaks, the row at 2.0 sees {1.5, 2.5, 1.0}: one
    /// majority neighbor. The row at 1.5 sees {1.0, 2.0, 0.5}: none. Deeper
    /// rows see none, so the whole gap of 2 goes to the boundary row.
    #[test]
    fn adasyn_budget_concentrates_on_boundary() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 * 0.5]).collect();
        let d = dev(&rows, &labels(5, 7));
        let b = adasyn_budget(&d, 3).unwrap();
        assert_eq!(b, vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 2)]);
        let v = adasyn(&d, 3, 4).unwrap();
        assert_eq!(v.n_rows(), 14);
        for r in v.matrix.rows().skip(12) {
            assert!(r[0] >= 0.5 && r[0] <= 2.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn smote_nc_properties(
            pos in 2usize..12,
            neg in 12usize..40,
            seed in 0u64..1000,
            vals in prop::collection::vec((0.0f64..10.0, 0.0f64..100.0, 0u8..2), 52),
        ) {
            let rows: Vec<Vec<f64>> = vals.iter().take(pos + neg).map(|&(a, b, c)| vec![a, b, c as f64]).collect();
            let d = dev(&rows, &labels(pos, neg));
            let mask = [false, false, true];
            let v = smote_nc(&d, &mask, 5, seed).unwrap();
            prop_assert_eq!(v.n_rows(), 2 * neg);
            prop_assert_eq!(v.positives(), neg);
            prop_assert_eq!(&v, &smote_nc(&d, &mask, 5, seed).unwrap());
            let observed: Vec<f64> = (0..pos).map(|i| rows[i][2]).collect();
            for r in v.matrix.rows().skip(pos + neg) {
                prop_assert!(observed.contains(&r[2]));
                for j in 0..2 {
                    let c: Vec<f64> = (0..pos).map(|i| rows[i][j]).collect();
                    let min = c.iter().cloned().fold(f64::INFINITY, f64::min);
                    let max = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(r[j] >= min && r[j] <= max);
                }
            }
        }
    }
}
