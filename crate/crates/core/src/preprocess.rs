//! Development-only preprocessing: infinity-to-missing conversion, NA
//! indicators and median imputation, frozen into a persisted feature list.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::panel::{feature_index, FirmQuarterRow, Split, FEATURE_NAMES, N_FEATURES};

pub const FEATURE_LIST_VERSION: u32 = 1;

/// Development missingness at or above this rate earns an indicator column.
pub const NA_INDICATOR_RATE: f64 = 0.10;

/// Always receives an indicator regardless of its missing rate.
pub const FORCED_INDICATOR: &str = "days_since_last_round";

pub const INDICATOR_SUFFIX: &str = "__isna";

pub fn indicator_name(feature: &str) -> String {
    format!("{feature}{INDICATOR_SUFFIX}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedOn {
    pub split: Split,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub version: u32,
    pub feature_order: Vec<String>,
    pub medians: BTreeMap<String, f64>,
    pub na_flagged: Vec<String>,
    pub fitted_on: FittedOn,
}

/// Middle order statistic; mean of the two central ones for even counts.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    })
}

fn is_missing(v: f64) -> bool {
    !v.is_finite()
}

pub fn fit_preprocessor(dev_rows: &[&FirmQuarterRow]) -> Result<Preprocessor> {
    if let Some(r) = dev_rows.iter().find(|r| r.split != Split::Dev) {
        return Err(Error::Contract(format!(
            "preprocessor fit received a {} row ({} {})",
            r.split, r.org_id, r.quarter_end
        )));
    }
    let rate_rows: Vec<&&FirmQuarterRow> = dev_rows.iter().filter(|r| r.evaluable.iter().any(|e| *e)).collect();

    let mut medians = BTreeMap::new();
    let mut na_flagged = Vec::new();
    for (j, name) in FEATURE_NAMES.iter().enumerate() {
        let mut observed: Vec<f64> = dev_rows
            .iter()
            .map(|r| r.features[j])
            .filter(|v| !is_missing(*v))
            .collect();
        let m = median(&mut observed).ok_or_else(|| {
            Error::Config(format!("feature {name} is entirely missing in the development window"))
        })?;
        medians.insert(name.to_string(), m);

        let missing = rate_rows.iter().filter(|r| is_missing(r.features[j])).count();
        let rate = if rate_rows.is_empty() { 0.0 } else { missing as f64 / rate_rows.len() as f64 };
        if rate >= NA_INDICATOR_RATE || *name == FORCED_INDICATOR {
            na_flagged.push(name.to_string());
        }
    }

    let mut feature_order: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    feature_order.extend(na_flagged.iter().map(|f| indicator_name(f)));

    Ok(Preprocessor {
        version: FEATURE_LIST_VERSION,
        feature_order,
        medians,
        na_flagged,
        fitted_on: FittedOn { split: Split::Dev, rows: dev_rows.len() },
    })
}

/// Where each output column takes its value from.
#[derive(Debug, Clone, Copy)]
enum ColumnSource {
    Value { feature: usize, median: f64 },
    Indicator { feature: usize },
}

impl Preprocessor {
    fn column_plan(&self) -> Result<Vec<ColumnSource>> {
        if self.version != FEATURE_LIST_VERSION {
            return Err(Error::Version { expected: FEATURE_LIST_VERSION, found: self.version });
        }
        let mut seen = HashSet::new();
        let mut plan = Vec::with_capacity(self.feature_order.len());
        for name in &self.feature_order {
            if !seen.insert(name.as_str()) {
                return Err(Error::Alignment(format!("feature {name:?} listed twice")));
            }
            if let Some(base) = name.strip_suffix(INDICATOR_SUFFIX) {
                let feature = feature_index(base)
                    .ok_or_else(|| Error::Alignment(format!("indicator {name:?} refers to unknown feature")))?;
                if !self.na_flagged.iter().any(|f| f == base) {
                    return Err(Error::Alignment(format!("indicator {name:?} not in na_flagged")));
                }
                plan.push(ColumnSource::Indicator { feature });
            } else {
                let feature = feature_index(name)
                    .ok_or_else(|| Error::Alignment(format!("unknown feature {name:?} in feature list")))?;
                let median = *self
                    .medians
                    .get(name)
                    .ok_or_else(|| Error::Alignment(format!("no development median for {name:?}")))?;
                plan.push(ColumnSource::Value { feature, median });
            }
        }
        for name in self.medians.keys() {
            if !seen.contains(name.as_str()) {
                return Err(Error::Alignment(format!("feature {name:?} has a median but is missing from feature_order")));
            }
        }
        for f in &self.na_flagged {
            if !seen.contains(indicator_name(f).as_str()) {
                return Err(Error::Alignment(format!("indicator for {f:?} missing from feature_order")));
            }
        }
        Ok(plan)
    }

    /// Imputed matrix with columns in `feature_order`.
    pub fn transform(&self, rows: &[&FirmQuarterRow]) -> Result<Matrix> {
        let raw: Vec<[f64; N_FEATURES]> = rows.iter().map(|r| r.features).collect();
        self.transform_raw(&raw)
    }

    pub fn transform_raw(&self, rows: &[[f64; N_FEATURES]]) -> Result<Matrix> {
        let plan = self.column_plan()?;
        let mut data = Vec::with_capacity(rows.len() * plan.len());
        for r in rows {
            for src in &plan {
                data.push(match *src {
                    ColumnSource::Value { feature, median } => {
                        let v = r[feature];
                        if is_missing(v) {
                            median
                        } else {
                            v
                        }
                    }
                    ColumnSource::Indicator { feature } => {
                        if is_missing(r[feature]) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                });
            }
        }
        Matrix::new(self.feature_order.clone(), data)
    }

    pub fn indicator_columns(&self) -> Vec<String> {
        self.feature_order
            .iter()
            .filter(|c| c.ends_with(INDICATOR_SUFFIX))
            .cloned()
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct VersionOnly {
            version: u32,
        }
        let v: VersionOnly = serde_json::from_str(text)?;
        if v.version != FEATURE_LIST_VERSION {
            return Err(Error::Version { expected: FEATURE_LIST_VERSION, found: v.version });
        }
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_feature_list(path: &Path, pre: &Preprocessor) -> Result<()> {
    std::fs::write(path, pre.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_feature_list(path: &Path) -> Result<Preprocessor> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Preprocessor::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dates::ymd;

    fn row(features: [f64; N_FEATURES], split: Split) -> FirmQuarterRow {
        FirmQuarterRow {
            org_id: "x".into(),
            quarter_end: ymd(2015, 3, 31),
            features,
            labels: [false; 3],
            evaluable: [true; 3],
            split,
        }
    }

    /// `n` dev rows where feature `j` is missing in the first `missing` of them.
    fn dev_rows(n: usize, j: usize, missing: usize) -> Vec<FirmQuarterRow> {
        (0..n)
            .map(|i| {
                let mut f = [1.0; N_FEATURES];
                for (k, v) in f.iter_mut().enumerate() {
                    *v = (i * (k + 1)) as f64;
                }
                if i < missing {
                    f[j] = f64::NAN;
                }
                row(f, Split::Dev)
            })
            .collect()
    }

    fn refs(rows: &[FirmQuarterRow]) -> Vec<&FirmQuarterRow> {
        rows.iter().collect()
    }

    #[test]
    fn indicator_threshold() {
        let age = feature_index("age_years").unwrap();
        let rows = dev_rows(100, age, 24);
        let p = fit_preprocessor(&refs(&rows)).unwrap();
        assert!(p.na_flagged.contains(&"age_years".to_string()));

        let rows = dev_rows(100, age, 6);
        let p = fit_preprocessor(&refs(&rows)).unwrap();
        assert!(!p.na_flagged.contains(&"age_years".to_string()));
        // forced even with zero missingness
        assert_eq!(p.na_flagged, vec![FORCED_INDICATOR.to_string()]);
        assert_eq!(p.feature_order.len(), N_FEATURES + 1);
        assert_eq!(p.feature_order.last().unwrap(), "days_since_last_round__isna");
    }

    #[test]
    fn indicators_follow_base_feature_order() {
        let mut rows = dev_rows(50, 0, 10);
        for r in rows.iter_mut().take(10) {
            r.features[15] = f64::INFINITY;
        }
        let p = fit_preprocessor(&refs(&rows)).unwrap();
        assert_eq!(p.na_flagged, vec!["age_years", "days_since_last_round", "total_cites"]);
    }

    #[test]
    fn entirely_missing_feature_is_fatal() {
        let rows = dev_rows(10, 3, 10);
        let err = fit_preprocessor(&refs(&rows)).unwrap_err();
        assert!(err.to_string().contains("investors_this_q"));
    }

    #[test]
    fn non_dev_rows_rejected() {
        let mut rows = dev_rows(10, 0, 0);
        rows[3].split = Split::Holdout;
        assert!(matches!(fit_preprocessor(&refs(&rows)), Err(Error::Contract(_))));
    }

    #[test]
    fn infinity_is_imputed_and_flagged() {
        let dsl = feature_index("days_since_last_round").unwrap();
        let rows = dev_rows(5, 0, 0);
        let mut p = fit_preprocessor(&refs(&rows)).unwrap();
        p.medians.insert("days_since_last_round".into(), 7.0);
        let mut f = rows[2].features;
        f[dsl] = f64::INFINITY;
        let m = p.transform_raw(&[f, rows[1].features]).unwrap();
        let ind = m.column_index("days_since_last_round__isna").unwrap();
        assert_eq!(m.get(0, dsl), 7.0);
        assert_eq!(m.get(0, ind), 1.0);
        assert_eq!(m.row(1)[..N_FEATURES], rows[1].features);
        assert_eq!(m.get(1, ind), 0.0);
    }

    #[test]
    fn medians_odd_and_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    #[test]
    fn feature_list_round_trip_and_tamper() {
        let rows = dev_rows(20, 1, 5);
        let p = fit_preprocessor(&refs(&rows)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feature_list.json");
        save_feature_list(&path, &p).unwrap();
        let q = load_feature_list(&path).unwrap();
        assert_eq!(p, q);
        assert_eq!(q.to_json().unwrap(), std::fs::read_to_string(&path).unwrap());
        assert_eq!(q.transform(&refs(&rows)).unwrap().columns(), p.feature_order.as_slice());

        let mut edited = q.clone();
        edited.feature_order.retain(|f| f != "cum_rounds");
        assert!(matches!(edited.transform(&refs(&rows)), Err(Error::Alignment(_))));

        let mut unknown = q.clone();
        unknown.feature_order.push("mystery".into());
        assert!(matches!(unknown.transform(&refs(&rows)), Err(Error::Alignment(_))));

        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(Preprocessor::from_json(&text), Err(Error::Version { .. })));
    }
}
