//! Univariate screening on evaluable development rows and per-outcome
//! feature curation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::matrix::Matrix;
use crate::panel::{Outcome, Panel, Split};
use crate::preprocess::Preprocessor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

impl Sign {
    pub fn as_char(self) -> char {
        match self {
            Sign::Positive => '+',
            Sign::Negative => '-',
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    /// Set when either input has zero variance; `value` is then 0.
    pub degenerate: bool,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Correlation {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Correlation { value: 0.0, degenerate: true };
    }
    Correlation { value: (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0), degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedAuc {
    pub raw_auc: f64,
    pub magnitude: f64,
    pub sign: Sign,
    pub prauc_magnitude: f64,
}

/// AUC of the raw feature as a score, folded to [0.5, 1] with its direction.
/// Average precision is computed on the feature oriented by that direction.
pub fn signed_auc(values: &[f64], labels: &[bool]) -> Result<SignedAuc> {
    let raw_auc = eval::auroc(values, labels)?;
    let sign = if raw_auc >= 0.5 { Sign::Positive } else { Sign::Negative };
    let oriented: Vec<f64> = values.iter().map(|v| v * sign.factor()).collect();
    Ok(SignedAuc {
        raw_auc,
        magnitude: raw_auc.max(1.0 - raw_auc),
        sign,
        prauc_magnitude: eval::pr_auc(&oriented, labels)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenResult {
    pub feature: String,
    pub outcome: Outcome,
    pub pearson: f64,
    pub pearson_degenerate: bool,
    pub auc_magnitude: f64,
    pub auc_sign: Sign,
    pub prauc_magnitude: f64,
}

impl ScreenResult {
    pub fn auc_signed(&self) -> f64 {
        self.auc_magnitude * self.auc_sign.factor()
    }
}

/// Screen every column of an imputed matrix against one outcome.
pub fn screen_matrix(matrix: &Matrix, labels: &[bool], outcome: Outcome) -> Result<Vec<ScreenResult>> {
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    (0..matrix.n_cols())
        .into_par_iter()
        .map(|j| {
            let x = matrix.column(j);
            let corr = pearson(&x, &y);
            let auc = signed_auc(&x, labels)?;
            Ok(ScreenResult {
                feature: matrix.columns()[j].clone(),
                outcome,
                pearson: corr.value,
                pearson_degenerate: corr.degenerate,
                auc_magnitude: auc.magnitude,
                auc_sign: auc.sign,
                prauc_magnitude: auc.prauc_magnitude,
            })
        })
        .collect()
}

/// Screen on development rows that are evaluable for `outcome`.
pub fn screen_outcome(panel: &Panel, pre: &Preprocessor, outcome: Outcome) -> Result<Vec<ScreenResult>> {
    let rows = panel.evaluable_rows(Split::Dev, outcome);
    let matrix = pre.transform(&rows)?;
    let labels: Vec<bool> = rows.iter().map(|r| r.label(outcome)).collect();
    screen_matrix(&matrix, &labels, outcome)
}

/// Per-outcome model feature sets, in ranked order.
pub fn pinned_features(outcome: Outcome) -> [&'static str; 16] {
    match outcome {
        Outcome::Fund12m => [
            "age_years",
            "days_since_last_round",
            "rounds_last_4q",
            "cum_investors",
            "funding_last_4q_usd",
            "cum_raised_usd",
            "cum_rounds",
            "total_cites",
            "total_patents",
            "cum_early",
            "rounds_this_q",
            "investors_this_q",
            "raised_this_q_usd",
            "cum_mid",
            "cum_other",
            "cum_late",
        ],
        Outcome::Patent24m => [
            "age_years",
            "total_patents",
            "total_cites",
            "cum_rounds",
            "days_since_last_round",
            "cum_raised_usd",
            "cum_other",
            "cum_investors",
            "cum_early",
            "rounds_last_4q",
            "investors_this_q",
            "cum_mid",
            "rounds_this_q",
            "cum_late",
            "raised_this_q_usd",
            "funding_last_4q_usd",
        ],
        Outcome::Exit36m => [
            "cum_raised_usd",
            "cum_investors",
            "cum_rounds",
            "funding_last_4q_usd",
            "cum_late",
            "days_since_last_round",
            "cum_mid",
            "cum_other",
            "cum_early",
            "rounds_last_4q",
            "total_cites",
            "total_patents",
            "raised_this_q_usd",
            "investors_this_q",
            "rounds_this_q",
            "age_years",
        ],
    }
}

/// Engineered variables kept regardless of screening rank.
pub const ALWAYS_KEEP: [&str; 3] = ["days_since_last_round", "cum_raised_usd", "rounds_last_4q"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionPolicy {
    /// Fixed curated list per outcome.
    Pinned,
    /// Top-N by signed-AUC magnitude, then the always-keep list.
    Top(usize),
}

pub fn select_features(
    results: &[ScreenResult],
    outcome: Outcome,
    always_keep: &[&str],
    policy: SelectionPolicy,
) -> Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let push = |f: &str, out: &mut Vec<String>| {
        if !out.iter().any(|x| x == f) {
            out.push(f.to_string());
        }
    };
    match policy {
        SelectionPolicy::Pinned => {
            for f in pinned_features(outcome) {
                push(f, &mut out);
            }
        }
        SelectionPolicy::Top(n) => {
            let mut ranked: Vec<&ScreenResult> = results.iter().filter(|r| r.outcome == outcome).collect();
            ranked.sort_by(|a, b| b.auc_magnitude.total_cmp(&a.auc_magnitude).then_with(|| a.feature.cmp(&b.feature)));
            for r in ranked.into_iter().take(n) {
                push(&r.feature, &mut out);
            }
        }
    }
    for f in always_keep {
        push(f, &mut out);
    }
    if out.is_empty() {
        return Err(Error::Config(format!("empty feature set for {outcome}")));
    }
    Ok(out)
}

/// Model input columns: the selected features plus every indicator column
/// the preprocessor emits.
pub fn model_columns(selected: &[String], pre: &Preprocessor) -> Vec<String> {
    let mut cols = selected.to_vec();
    for ind in pre.indicator_columns() {
        if !cols.contains(&ind) {
            cols.push(ind);
        }
    }
    cols
}

pub fn write_screen_report(path: &Path, results: &[ScreenResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["feature", "outcome", "pearson", "auc_signed", "prauc_magnitude"])
        .map_err(|e| Error::csv(path, e))?;
    for r in results {
        w.write_record([
            r.feature.clone(),
            r.outcome.as_str().to_string(),
            format!("{:.6}", r.pearson),
            format!("{:.6}", r.auc_signed()),
            format!("{:.6}", r.prauc_magnitude),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
