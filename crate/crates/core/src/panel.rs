//! Firm-quarter panel construction.
//!
//! Each firm gets a quarterly calendar from its first observed activity (or
//! founding date) up to the quarter before its exit or the panel end. Every
//! row carries the sixteen engineered features, computed only from events
//! dated on or before the quarter end, and three strictly forward labels.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dates::{add_months, is_quarter_end, next_quarter_end, prev_quarter_end, quarter_end_of, sub_months, ymd};
use crate::error::{Error, Result};
use crate::ingest::{EventSet, ExitEvent, FirmRecord, FundingEvent, PatentGrant, Stage};

pub const N_FEATURES: usize = 16;

/// Contractual column order of the engineered features.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "age_years",
    "days_since_last_round",
    "rounds_this_q",
    "investors_this_q",
    "raised_this_q_usd",
    "rounds_last_4q",
    "funding_last_4q_usd",
    "cum_rounds",
    "cum_investors",
    "cum_raised_usd",
    "cum_early",
    "cum_mid",
    "cum_late",
    "cum_other",
    "total_patents",
    "total_cites",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|f| *f == name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "fund_12m")]
    Fund12m,
    #[serde(rename = "patent_24m")]
    Patent24m,
    #[serde(rename = "exit_36m")]
    Exit36m,
}

impl Outcome {
    pub const ALL: [Outcome; 3] = [Outcome::Fund12m, Outcome::Patent24m, Outcome::Exit36m];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Fund12m => "fund_12m",
            Outcome::Patent24m => "patent_24m",
            Outcome::Exit36m => "exit_36m",
        }
    }

    pub fn horizon(self) -> Horizon {
        match self {
            Outcome::Fund12m => Horizon::M12,
            Outcome::Patent24m => Horizon::M24,
            Outcome::Exit36m => Horizon::M36,
        }
    }

    /// Out-of-time split the outcome is evaluated on: the final window when
    /// its horizon fits there, the holdout window otherwise.
    pub fn eval_split(self) -> Split {
        match self {
            Outcome::Fund12m => Split::Final,
            Outcome::Patent24m | Outcome::Exit36m => Split::Holdout,
        }
    }

    pub fn label_column(self) -> &'static str {
        match self {
            Outcome::Fund12m => "label_fund_12m",
            Outcome::Patent24m => "label_patent_24m",
            Outcome::Exit36m => "label_exit_36m",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown outcome {s:?} (expected fund_12m, patent_24m or exit_36m)")))
    }
}

/// Prediction horizon; only 12, 24 and 36 months exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Horizon {
    M12,
    M24,
    M36,
}

impl Horizon {
    pub fn months(self) -> u32 {
        match self {
            Horizon::M12 => 12,
            Horizon::M24 => 24,
            Horizon::M36 => 36,
        }
    }

    pub fn from_months(months: u32) -> Option<Self> {
        match months {
            12 => Some(Horizon::M12),
            24 => Some(Horizon::M24),
            36 => Some(Horizon::M36),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Split {
    Dev,
    Holdout,
    Final,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Dev => "Dev",
            Split::Holdout => "Holdout",
            Split::Final => "Final",
        }
    }

    /// Split by calendar year; years before 2010 are outside the panel.
    pub fn for_year(year: i32) -> Option<Split> {
        match year {
            ..=2009 => None,
            2010..=2019 => Some(Split::Dev),
            2020..=2021 => Some(Split::Holdout),
            _ => Some(Split::Final),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Dev" => Ok(Split::Dev),
            "Holdout" => Ok(Split::Holdout),
            "Final" => Ok(Split::Final),
            _ => Err(Error::Config(format!("unknown split {s:?}"))),
        }
    }
}

/// One firm-quarter observation. Missing feature values are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmQuarterRow {
    pub org_id: String,
    pub quarter_end: NaiveDate,
    pub features: [f64; N_FEATURES],
    pub labels: [bool; 3],
    pub evaluable: [bool; 3],
    pub split: Split,
}

impl FirmQuarterRow {
    pub fn label(&self, outcome: Outcome) -> bool {
        self.labels[outcome.index()]
    }

    pub fn is_evaluable(&self, outcome: Outcome) -> bool {
        self.evaluable[outcome.index()]
    }

    pub fn feature(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.features[i])
    }
}

/// All events of one firm, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct FirmHistory {
    pub firm: FirmRecord,
    pub rounds: Vec<FundingEvent>,
    pub patents: Vec<PatentGrant>,
    pub exit: Option<ExitEvent>,
}

impl FirmHistory {
    pub fn new(
        firm: FirmRecord,
        mut rounds: Vec<FundingEvent>,
        mut patents: Vec<PatentGrant>,
        exit: Option<ExitEvent>,
    ) -> Self {
        rounds.sort_by(|a, b| a.announced_on.cmp(&b.announced_on).then_with(|| a.round_id.cmp(&b.round_id)));
        patents.sort_by_key(|p| p.grant_date);
        FirmHistory { firm, rounds, patents, exit }
    }

    /// Earliest dated round or patent grant.
    pub fn first_activity(&self) -> Option<NaiveDate> {
        let r = self.rounds.first().map(|r| r.announced_on);
        let p = self.patents.first().map(|p| p.grant_date);
        match (r, p) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Copy of this history without any event dated after `cutoff`.
    pub fn truncated(&self, cutoff: NaiveDate) -> FirmHistory {
        FirmHistory {
            firm: self.firm.clone(),
            rounds: self.rounds.iter().filter(|r| r.announced_on <= cutoff).cloned().collect(),
            patents: self.patents.iter().filter(|p| p.grant_date <= cutoff).cloned().collect(),
            exit: self.exit.clone().filter(|x| x.exit_date <= cutoff),
        }
    }
}

/// Group events per firm, keyed (and therefore ordered) by org_id. Firms
/// that only appear in event files get an empty descriptor record.
pub fn group_by_firm(events: &EventSet) -> BTreeMap<String, FirmHistory> {
    let mut firms: BTreeMap<String, FirmRecord> =
        events.firms.iter().map(|f| (f.org_id.clone(), f.clone())).collect();
    let blank = |org: &str| FirmRecord {
        org_id: org.to_string(),
        founded_on: None,
        industry: String::new(),
        region: String::new(),
    };
    let mut rounds: BTreeMap<String, Vec<FundingEvent>> = BTreeMap::new();
    for r in &events.rounds {
        rounds.entry(r.org_id.clone()).or_default().push(r.clone());
    }
    let mut patents: BTreeMap<String, Vec<PatentGrant>> = BTreeMap::new();
    for p in &events.patents {
        patents.entry(p.org_id.clone()).or_default().push(p.clone());
    }
    let mut exits: BTreeMap<String, ExitEvent> = BTreeMap::new();
    for x in &events.exits {
        match exits.get(&x.org_id) {
            Some(cur) if cur.exit_date <= x.exit_date => {}
            _ => {
                exits.insert(x.org_id.clone(), x.clone());
            }
        }
    }
    for org in rounds.keys().chain(patents.keys()).chain(exits.keys()) {
        if !firms.contains_key(org) {
            firms.insert(org.clone(), blank(org));
        }
    }
    firms
        .into_iter()
        .map(|(org, firm)| {
            let h = FirmHistory::new(
                firm,
                rounds.remove(&org).unwrap_or_default(),
                patents.remove(&org).unwrap_or_default(),
                exits.remove(&org),
            );
            (org, h)
        })
        .collect()
}

/// Quarter-end dates of a firm's calendar. Empty when the firm has neither a
/// founding date nor any activity, starts after `panel_end`, or exits before
/// completing its first quarter.
pub fn build_calendar(history: &FirmHistory, panel_end: NaiveDate) -> Vec<NaiveDate> {
    let start = match (history.firm.founded_on, history.first_activity()) {
        (Some(a), Some(b)) => a.min(b),
        (a, b) => match a.or(b) {
            Some(d) => d,
            None => return Vec::new(),
        },
    };
    let mut end = panel_end;
    if let Some(exit) = &history.exit {
        end = end.min(prev_quarter_end(exit.exit_date));
    }
    let mut out = Vec::new();
    let mut q = quarter_end_of(start);
    while q <= end {
        out.push(q);
        q = next_quarter_end(q);
    }
    out
}

/// Prefix aggregates over a firm's sorted rounds and patents so features at
/// any date are binary searches.
struct FirmIndex<'a> {
    history: &'a FirmHistory,
    round_dates: Vec<NaiveDate>,
    // cumulative after i rounds: count, investors, raised, per-stage counts
    cum_investors: Vec<f64>,
    cum_raised: Vec<f64>,
    cum_stage: Vec<[f64; 4]>,
    patent_dates: Vec<NaiveDate>,
    cum_cites: Vec<f64>,
}

impl<'a> FirmIndex<'a> {
    fn new(history: &'a FirmHistory) -> Self {
        let n = history.rounds.len();
        let mut cum_investors = Vec::with_capacity(n + 1);
        let mut cum_raised = Vec::with_capacity(n + 1);
        let mut cum_stage = Vec::with_capacity(n + 1);
        cum_investors.push(0.0);
        cum_raised.push(0.0);
        cum_stage.push([0.0; 4]);
        for r in &history.rounds {
            cum_investors.push(cum_investors.last().unwrap() + r.investor_count.unwrap_or(0) as f64);
            cum_raised.push(cum_raised.last().unwrap() + r.raised_usd.unwrap_or(0.0));
            let mut s = *cum_stage.last().unwrap();
            s[stage_slot(r.stage)] += 1.0;
            cum_stage.push(s);
        }
        let mut cum_cites = Vec::with_capacity(history.patents.len() + 1);
        cum_cites.push(0.0);
        for p in &history.patents {
            cum_cites.push(cum_cites.last().unwrap() + p.forward_citations as f64);
        }
        FirmIndex {
            history,
            round_dates: history.rounds.iter().map(|r| r.announced_on).collect(),
            cum_investors,
            cum_raised,
            cum_stage,
            patent_dates: history.patents.iter().map(|p| p.grant_date).collect(),
            cum_cites,
        }
    }

    /// Number of rounds dated on or before `d`.
    fn rounds_upto(&self, d: NaiveDate) -> usize {
        self.round_dates.partition_point(|x| *x <= d)
    }

    fn patents_upto(&self, d: NaiveDate) -> usize {
        self.patent_dates.partition_point(|x| *x <= d)
    }

    fn features(&self, q: NaiveDate) -> [f64; N_FEATURES] {
        let n = self.rounds_upto(q);
        let n_q = n - self.rounds_upto(prev_quarter_end(q));
        let n_4q = n - self.rounds_upto(sub_months(q, 12));
        let m = self.patents_upto(q);

        let age = match self.history.firm.founded_on {
            Some(f) if f <= q => years_between(f, q),
            Some(_) => f64::NAN,
            None => {
                let r = self.round_dates.first().filter(|d| **d <= q);
                let p = self.patent_dates.first().filter(|d| **d <= q);
                match r.into_iter().chain(p).min() {
                    Some(d) => years_between(*d, q),
                    None => f64::NAN,
                }
            }
        };
        let days_since = if n > 0 {
            (q - self.round_dates[n - 1]).num_days() as f64
        } else {
            f64::NAN
        };
        let window = |from: usize, cum: &[f64]| cum[n] - cum[n - from];
        let stage = self.cum_stage[n];
        [
            age,
            days_since,
            n_q as f64,
            window(n_q, &self.cum_investors),
            window(n_q, &self.cum_raised),
            n_4q as f64,
            window(n_4q, &self.cum_raised),
            n as f64,
            self.cum_investors[n],
            self.cum_raised[n],
            stage[0],
            stage[1],
            stage[2],
            stage[3],
            m as f64,
            self.cum_cites[m],
        ]
    }

    fn labels(&self, q: NaiveDate, panel_end: NaiveDate) -> ([bool; 3], [bool; 3]) {
        let h12 = add_months(q, 12);
        let h24 = add_months(q, 24);
        let h36 = add_months(q, 36);
        let fund = self.rounds_upto(h12) > self.rounds_upto(q);
        let patent = self.patents_upto(h24) > self.patents_upto(q);
        let exit = self
            .history
            .exit
            .as_ref()
            .map(|x| x.exit_date > q && x.exit_date <= h36)
            .unwrap_or(false);
        ([fund, patent, exit], [h12 <= panel_end, h24 <= panel_end, h36 <= panel_end])
    }
}

fn stage_slot(stage: Stage) -> usize {
    match stage {
        Stage::Early => 0,
        Stage::Mid => 1,
        Stage::Late => 2,
        Stage::Other => 3,
    }
}

fn years_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / 365.25
}

/// Feature vector at `quarter_end` using only events dated on or before it.
pub fn compute_features(history: &FirmHistory, quarter_end: NaiveDate) -> [f64; N_FEATURES] {
    FirmIndex::new(history).features(quarter_end)
}

/// Forward labels and evaluability flags, indexed by [`Outcome::index`].
pub fn attach_labels(history: &FirmHistory, quarter_end: NaiveDate, panel_end: NaiveDate) -> ([bool; 3], [bool; 3]) {
    FirmIndex::new(history).labels(quarter_end, panel_end)
}

/// Tag rows by calendar year of quarter end, dropping rows before 2010.
/// Returns the kept rows and the number dropped.
pub fn assign_splits(rows: Vec<UnsplitRow>) -> (Vec<FirmQuarterRow>, usize) {
    let mut dropped = 0;
    let kept = rows
        .into_iter()
        .filter_map(|r| match Split::for_year(r.quarter_end.year()) {
            Some(split) => Some(FirmQuarterRow {
                org_id: r.org_id,
                quarter_end: r.quarter_end,
                features: r.features,
                labels: r.labels,
                evaluable: r.evaluable,
                split,
            }),
            None => {
                dropped += 1;
                None
            }
        })
        .collect();
    (kept, dropped)
}

/// A labeled row before split assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct UnsplitRow {
    pub org_id: String,
    pub quarter_end: NaiveDate,
    pub features: [f64; N_FEATURES],
    pub labels: [bool; 3],
    pub evaluable: [bool; 3],
}

pub fn firm_rows(history: &FirmHistory, panel_end: NaiveDate) -> Vec<UnsplitRow> {
    let index = FirmIndex::new(history);
    build_calendar(history, panel_end)
        .into_iter()
        .map(|q| {
            let (labels, evaluable) = index.labels(q, panel_end);
            UnsplitRow {
                org_id: history.firm.org_id.clone(),
                quarter_end: q,
                features: index.features(q),
                labels,
                evaluable,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelReport {
    pub firms: usize,
    pub firms_without_calendar: usize,
    pub rows_before_2010: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub panel_end: NaiveDate,
    pub rows: Vec<FirmQuarterRow>,
}

impl Panel {
    pub fn rows_in(&self, split: Split) -> impl Iterator<Item = &FirmQuarterRow> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Rows of `split` whose label for `outcome` is observable.
    pub fn evaluable_rows(&self, split: Split, outcome: Outcome) -> Vec<&FirmQuarterRow> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.is_evaluable(outcome))
            .collect()
    }
}

pub fn default_panel_end() -> NaiveDate {
    ymd(2023, 12, 31)
}

/// Full panel build. Firms are processed independently and merged in
/// (org_id, quarter_end) order.
pub fn build_panel(events: &EventSet, panel_end: NaiveDate) -> Result<(Panel, PanelReport)> {
    if !is_quarter_end(panel_end) {
        return Err(Error::Config(format!("panel_end {panel_end} is not a quarter boundary")));
    }
    let firms: Vec<FirmHistory> = group_by_firm(events).into_values().collect();
    let per_firm: Vec<Vec<UnsplitRow>> = firms.par_iter().map(|h| firm_rows(h, panel_end)).collect();
    let mut report = PanelReport {
        firms: firms.len(),
        firms_without_calendar: per_firm.iter().filter(|r| r.is_empty()).count(),
        ..Default::default()
    };
    let (rows, dropped) = assign_splits(per_firm.into_iter().flatten().collect());
    report.rows_before_2010 = dropped;
    report.rows = rows.len();
    Ok((Panel { panel_end, rows }, report))
}

const LABEL_COLUMNS: [&str; 3] = ["label_fund_12m", "label_patent_24m", "label_exit_36m"];
const EVALUABLE_COLUMNS: [&str; 3] = ["evaluable_12m", "evaluable_24m", "evaluable_36m"];

pub fn panel_header() -> Vec<&'static str> {
    let mut h = vec!["org_id", "quarter_end"];
    h.extend(FEATURE_NAMES);
    h.extend(LABEL_COLUMNS);
    h.extend(EVALUABLE_COLUMNS);
    h.push("split");
    h
}

fn fmt_feature(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn write_panel_csv(path: &Path, panel: &Panel) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(panel_header()).map_err(|e| Error::csv(path, e))?;
    for r in &panel.rows {
        let mut rec: Vec<String> = Vec::with_capacity(2 + N_FEATURES + 7);
        rec.push(r.org_id.clone());
        rec.push(r.quarter_end.to_string());
        rec.extend(r.features.iter().map(|v| fmt_feature(*v)));
        rec.extend(r.labels.iter().map(|b| u8::from(*b).to_string()));
        rec.extend(r.evaluable.iter().map(|b| u8::from(*b).to_string()));
        rec.push(r.split.as_str().to_string());
        w.write_record(&rec).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_panel_csv(path: &Path, panel_end: NaiveDate) -> Result<Panel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != panel_header() {
        return Err(Error::Alignment(format!("{} does not carry the contractual panel columns", path.display())));
    }
    let bad = |line: u64, msg: &str| Error::Schema { path: path.to_path_buf(), message: format!("line {line}: {msg}") };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let quarter_end = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d").map_err(|_| bad(line, "bad quarter_end"))?;
        let mut features = [f64::NAN; N_FEATURES];
        for (i, f) in features.iter_mut().enumerate() {
            let s = &rec[2 + i];
            if !s.is_empty() {
                *f = s.parse().map_err(|_| bad(line, "bad feature value"))?;
            }
        }
        let flag = |i: usize| match &rec[i] {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(line, "bad flag")),
        };
        let base = 2 + N_FEATURES;
        rows.push(FirmQuarterRow {
            org_id: rec[0].to_string(),
            quarter_end,
            features,
            labels: [flag(base)?, flag(base + 1)?, flag(base + 2)?],
            evaluable: [flag(base + 3)?, flag(base + 4)?, flag(base + 5)?],
            split: rec[base + 6].parse()?,
        });
    }
    Ok(Panel { panel_end, rows })
}
