//! Discrimination, calibration and capacity metrics.
//!
//! Wherever ranking matters, rows are ordered by descending score with ties
//! broken by ascending row index, so P@K and average precision are
//! deterministic even on tied scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PRECISION_KS: [usize; 3] = [30, 100, 500];
pub const DEFAULT_RELIABILITY_BINS: usize = 10;

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::Alignment(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| **l).count();
    (pos, labels.len() - pos)
}

/// Row indices by descending score, ascending index among ties.
pub fn ranking_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx
}

/// Probability that a random positive outscores a random negative, ties ½.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("AUROC needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of midranks over positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let tied_pos = idx[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * tied_pos as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Average precision: mean over positives of the precision at their rank.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(Error::Degenerate("average precision needs at least one positive".into()));
    }
    let mut tp = 0usize;
    let mut total = 0.0;
    for (r, &i) in ranking_order(scores).iter().enumerate() {
        if labels[i] {
            tp += 1;
            total += tp as f64 / (r + 1) as f64;
        }
    }
    Ok(total / pos as f64)
}

pub fn brier(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(probs, labels)?;
    if probs.is_empty() {
        return Err(Error::Degenerate("Brier score of an empty sample".into()));
    }
    let sse: f64 = probs
        .iter()
        .zip(labels)
        .map(|(p, &y)| {
            let d = p - if y { 1.0 } else { 0.0 };
            d * d
        })
        .sum();
    Ok(sse / probs.len() as f64)
}

pub fn precision_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64> {
    check_lengths(scores, labels)?;
    if k == 0 || scores.len() < k {
        return Err(Error::Degenerate(format!("precision@{k} needs at least {k} rows, have {}", scores.len())));
    }
    let hits = ranking_order(scores)[..k].iter().filter(|&&i| labels[i]).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub base_rate: f64,
    pub auroc: f64,
    pub pr_auc: f64,
    pub brier: f64,
    /// Only K values no larger than `n` are present.
    pub precision_at: BTreeMap<usize, f64>,
}

impl MetricReport {
    pub fn compute(probs: &[f64], labels: &[bool]) -> Result<Self> {
        let mut precision_at = BTreeMap::new();
        for k in PRECISION_KS {
            if probs.len() >= k {
                precision_at.insert(k, precision_at_k(probs, labels, k)?);
            }
        }
        let (pos, _) = class_counts(labels);
        Ok(MetricReport {
            n: labels.len(),
            base_rate: pos as f64 / labels.len().max(1) as f64,
            auroc: auroc(probs, labels)?,
            pr_auc: pr_auc(probs, labels)?,
            brier: brier(probs, labels)?,
            precision_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub mean_prob: f64,
    pub empirical_rate: f64,
    pub count: usize,
}

/// Equal-count quantile bins by predicted probability. Rows sharing a
/// probability always land in the same bin, so heavy ties give fewer or
/// unequal bins.
pub fn reliability_curve(probs: &[f64], labels: &[bool], n_bins: usize) -> Result<Vec<ReliabilityBin>> {
    check_lengths(probs, labels)?;
    if n_bins == 0 || probs.len() < n_bins {
        return Err(Error::Degenerate(format!("{} rows cannot fill {n_bins} bins", probs.len())));
    }
    let n = probs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));

    let mut bounds = vec![0usize];
    for b in 1..n_bins {
        let mut cut = (b * n + n_bins / 2) / n_bins;
        cut = cut.max(*bounds.last().unwrap());
        while cut > 0 && cut < n && probs[idx[cut]] == probs[idx[cut - 1]] {
            cut += 1;
        }
        bounds.push(cut.min(n));
    }
    bounds.push(n);

    let mut bins = Vec::new();
    for w in bounds.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= lo {
            continue;
        }
        let members = &idx[lo..hi];
        let count = members.len();
        let mean_prob = members.iter().map(|&i| probs[i]).sum::<f64>() / count as f64;
        let empirical_rate = members.iter().filter(|&&i| labels[i]).count() as f64 / count as f64;
        bins.push(ReliabilityBin { mean_prob, empirical_rate, count });
    }
    Ok(bins)
}

/// Weighted pool-adjacent-violators: the non-decreasing sequence closest to
/// `targets` in weighted squared error.
pub fn pav(targets: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(targets.len(), weights.len());
    // blocks of (weighted mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(targets.len());
    for (&y, &w) in targets.iter().zip(weights) {
        blocks.push((y, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, l2) = blocks[blocks.len() - 1];
            let (m1, w1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            let w = w1 + w2;
            blocks.truncate(blocks.len() - 2);
            blocks.push(((m1 * w1 + m2 * w2) / w, w, l1 + l2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, l)| std::iter::repeat(m).take(l))
        .collect()
}

/// Step function from raw scores to calibrated probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    /// Strictly increasing lower score edge of each step.
    pub breakpoints: Vec<f64>,
    /// Non-decreasing calibrated value of each step.
    pub fitted: Vec<f64>,
}

pub fn fit_isotonic(probs: &[f64], labels: &[bool]) -> Result<IsotonicMap> {
    check_lengths(probs, labels)?;
    if probs.is_empty() {
        return Err(Error::Degenerate("isotonic fit on empty sample".into()));
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
    // collapse tied scores into one weighted point
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut ws: Vec<f64> = Vec::new();
    for &i in &idx {
        let y = if labels[i] { 1.0 } else { 0.0 };
        if xs.last() == Some(&probs[i]) {
            let k = xs.len() - 1;
            ys[k] += y;
            ws[k] += 1.0;
        } else {
            xs.push(probs[i]);
            ys.push(y);
            ws.push(1.0);
        }
    }
    for (y, w) in ys.iter_mut().zip(&ws) {
        *y /= w;
    }
    let fitted = pav(&ys, &ws);
    let mut breakpoints = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (x, v) in xs.into_iter().zip(fitted) {
        if values.last() != Some(&v) {
            breakpoints.push(x);
            values.push(v);
        }
    }
    Ok(IsotonicMap { breakpoints, fitted: values })
}

impl IsotonicMap {
    pub fn apply_one(&self, p: f64) -> f64 {
        let k = self.breakpoints.partition_point(|b| *b <= p);
        let v = if k == 0 { self.fitted[0] } else { self.fitted[k - 1] };
        v.clamp(0.0, 1.0)
    }

    pub fn apply(&self, probs: &[f64]) -> Vec<f64> {
        probs.iter().map(|&p| self.apply_one(p)).collect()
    }
}

pub fn apply_isotonic(map: &IsotonicMap, probs: &[f64]) -> Vec<f64> {
    map.apply(probs)
}
