//! Event-file ingestion.
//!
//! Four UTF-8 CSV files with a required header row feed the pipeline:
//!
//! * `rounds.csv`  `org_id,round_id,announced_on,raised_usd,investor_count,investment_type`
//! * `patents.csv` `org_id,grant_date,forward_citations`
//! * `exits.csv`   `org_id,exit_date,kind`
//! * `firms.csv`   `org_id,founded_on,industry,region`
//!
//! Rows with an empty `org_id` are dropped, funding rounds are deduplicated on
//! `round_id` (first occurrence wins) and rows that fail to parse are rejected
//! individually with their line number. Only an unreadable file is fatal.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROUNDS_HEADER: [&str; 6] = [
    "org_id",
    "round_id",
    "announced_on",
    "raised_usd",
    "investor_count",
    "investment_type",
];
pub const PATENTS_HEADER: [&str; 3] = ["org_id", "grant_date", "forward_citations"];
pub const EXITS_HEADER: [&str; 3] = ["org_id", "exit_date", "kind"];
pub const FIRMS_HEADER: [&str; 4] = ["org_id", "founded_on", "industry", "region"];

const DATE_FORMAT: &str = "%Y-%m-%d";

/// Stage bucket of a funding round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Early,
    Mid,
    Late,
    Other,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Early => "early",
            Stage::Mid => "mid",
            Stage::Late => "late",
            Stage::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExitKind {
    #[serde(rename = "IPO")]
    Ipo,
    Acquisition,
}

impl ExitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitKind::Ipo => "IPO",
            ExitKind::Acquisition => "Acquisition",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ipo" => Some(ExitKind::Ipo),
            "acquisition" | "acquired" => Some(ExitKind::Acquisition),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundingEvent {
    pub org_id: String,
    pub round_id: String,
    pub announced_on: NaiveDate,
    pub raised_usd: Option<f64>,
    pub investor_count: Option<u32>,
    pub investment_type: String,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatentGrant {
    pub org_id: String,
    pub grant_date: NaiveDate,
    pub forward_citations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub org_id: String,
    pub exit_date: NaiveDate,
    pub kind: ExitKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub org_id: String,
    pub founded_on: Option<NaiveDate>,
    pub industry: String,
    pub region: String,
}

/// Investment-type to stage lookup table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageMap {
    table: HashMap<String, Stage>,
}

#[derive(Deserialize)]
struct StageMapFile {
    version: u32,
    stages: BTreeMap<String, Stage>,
}

/// The mapping shipped with the crate (`config/stage_map.toml`).
pub const DEFAULT_STAGE_MAP: &str = include_str!("../config/stage_map.toml");

impl StageMap {
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: StageMapFile =
            toml::from_str(text).map_err(|e| Error::Config(format!("stage map: {e}")))?;
        if file.version != 1 {
            return Err(Error::Version { expected: 1, found: file.version });
        }
        let table = file
            .stages
            .into_iter()
            .map(|(k, v)| (normalize_label(&k), v))
            .collect();
        Ok(StageMap { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Total mapping: unknown labels land in [`Stage::Other`].
    pub fn classify(&self, investment_type: &str) -> Stage {
        self.table
            .get(&normalize_label(investment_type))
            .copied()
            .unwrap_or(Stage::Other)
    }
}

impl Default for StageMap {
    fn default() -> Self {
        StageMap::from_toml(DEFAULT_STAGE_MAP).expect("shipped stage map parses")
    }
}

fn normalize_label(label: &str) -> String {
    label
        .trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

/// Classify with the shipped mapping.
pub fn classify_stage(investment_type: &str) -> Stage {
    thread_local! {
        static MAP: StageMap = StageMap::default();
    }
    MAP.with(|m| m.classify(investment_type))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowRejection {
    pub file: String,
    pub line: u64,
    pub reason: String,
}

impl fmt::Display for RowRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.file, self.line, self.reason)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dropped_missing_org: usize,
    pub duplicate_rounds: usize,
    pub duplicate_firms: usize,
    pub superseded_exits: usize,
    pub rejected: Vec<RowRejection>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventSet {
    pub rounds: Vec<FundingEvent>,
    pub patents: Vec<PatentGrant>,
    pub exits: Vec<ExitEvent>,
    pub firms: Vec<FirmRecord>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub panel_end: NaiveDate,
    pub stage_map: StageMap,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            panel_end: NaiveDate::from_ymd_opt(2023, 12, 31).unwrap(),
            stage_map: StageMap::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InputPaths {
    pub rounds: PathBuf,
    pub patents: PathBuf,
    pub exits: PathBuf,
    pub firms: PathBuf,
}

impl InputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        InputPaths {
            rounds: dir.join("rounds.csv"),
            patents: dir.join("patents.csv"),
            exits: dir.join("exits.csv"),
            firms: dir.join("firms.csv"),
        }
    }

    pub fn all(&self) -> [&Path; 4] {
        [&self.rounds, &self.patents, &self.exits, &self.firms]
    }
}

pub fn parse_events(paths: &InputPaths, opts: &IngestOptions) -> Result<(EventSet, IngestReport)> {
    let mut report = IngestReport::default();
    let rounds = parse_rounds(&paths.rounds, opts, &mut report)?;
    let patents = parse_patents(&paths.patents, &mut report)?;
    let exits = parse_exits(&paths.exits, &mut report)?;
    let firms = parse_firms(&paths.firms, &mut report)?;
    Ok((EventSet { rounds, patents, exits, firms }, report))
}

struct Rows {
    path: PathBuf,
    file: String,
    records: Vec<(u64, csv::StringRecord)>,
}

fn read_rows(path: &Path, header: &[&str]) -> Result<Rows> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(std::io::BufReader::new(file));
    let found = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != header {
        return Err(Error::Schema {
            path: path.to_path_buf(),
            message: format!("expected header {:?}, found {:?}", header, found),
        });
    }
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        records.push((line, rec));
    }
    let file = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Rows { path: path.to_path_buf(), file, records })
}

impl Rows {
    fn reject(&self, report: &mut IngestReport, line: u64, reason: String) {
        log::warn!("{}:{}: {}", self.path.display(), line, reason);
        report.rejected.push(RowRejection { file: self.file.clone(), line, reason });
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).map(str::trim).unwrap_or("")
}

fn parse_date(s: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, DATE_FORMAT).map_err(|_| format!("malformed date {s:?}"))
}

fn parse_opt<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Option<T>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("malformed {what} {s:?}"))
    }
}

fn earliest_valid_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(1900, 1, 1).unwrap()
}

fn parse_rounds(path: &Path, opts: &IngestOptions, report: &mut IngestReport) -> Result<Vec<FundingEvent>> {
    let rows = read_rows(path, &ROUNDS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.records.len());
    for (line, rec) in &rows.records {
        let org_id = field(rec, 0);
        if org_id.is_empty() {
            report.dropped_missing_org += 1;
            continue;
        }
        let parsed = (|| {
            let round_id = field(rec, 1);
            if round_id.is_empty() {
                return Err("empty round_id".to_string());
            }
            let announced_on = parse_date(field(rec, 2))?;
            if announced_on < earliest_valid_date() || announced_on > opts.panel_end {
                return Err(format!("announced_on {announced_on} outside [1900-01-01, {}]", opts.panel_end));
            }
            let raised_usd: Option<f64> = parse_opt(field(rec, 3), "raised_usd")?;
            if let Some(v) = raised_usd {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("raised_usd must be a nonnegative amount, got {v}"));
                }
            }
            let investor_count: Option<u32> = parse_opt(field(rec, 4), "investor_count")?;
            let investment_type = field(rec, 5).to_string();
            let stage = opts.stage_map.classify(&investment_type);
            Ok(FundingEvent {
                org_id: org_id.to_string(),
                round_id: round_id.to_string(),
                announced_on,
                raised_usd,
                investor_count,
                investment_type,
                stage,
            })
        })();
        match parsed {
            Ok(ev) => {
                if seen.insert(ev.round_id.clone()) {
                    out.push(ev);
                } else {
                    report.duplicate_rounds += 1;
                }
            }
            Err(reason) => rows.reject(report, *line, reason),
        }
    }
    Ok(out)
}

fn parse_patents(path: &Path, report: &mut IngestReport) -> Result<Vec<PatentGrant>> {
    let rows = read_rows(path, &PATENTS_HEADER)?;
    let mut out = Vec::with_capacity(rows.records.len());
    for (line, rec) in &rows.records {
        let org_id = field(rec, 0);
        if org_id.is_empty() {
            report.dropped_missing_org += 1;
            continue;
        }
        let parsed = (|| {
            let grant_date = parse_date(field(rec, 1))?;
            let forward_citations: u32 = parse_opt(field(rec, 2), "forward_citations")?.unwrap_or(0);
            Ok::<_, String>(PatentGrant { org_id: org_id.to_string(), grant_date, forward_citations })
        })();
        match parsed {
            Ok(p) => out.push(p),
            Err(reason) => rows.reject(report, *line, reason),
        }
    }
    Ok(out)
}

fn parse_exits(path: &Path, report: &mut IngestReport) -> Result<Vec<ExitEvent>> {
    let rows = read_rows(path, &EXITS_HEADER)?;
    let mut earliest: BTreeMap<String, ExitEvent> = BTreeMap::new();
    for (line, rec) in &rows.records {
        let org_id = field(rec, 0);
        if org_id.is_empty() {
            report.dropped_missing_org += 1;
            continue;
        }
        let parsed = (|| {
            let exit_date = parse_date(field(rec, 1))?;
            let kind = ExitKind::parse(field(rec, 2))
                .ok_or_else(|| format!("unknown exit kind {:?}", field(rec, 2)))?;
            Ok::<_, String>(ExitEvent { org_id: org_id.to_string(), exit_date, kind })
        })();
        match parsed {
            Ok(ev) => match earliest.get_mut(&ev.org_id) {
                Some(cur) => {
                    report.superseded_exits += 1;
                    if ev.exit_date < cur.exit_date {
                        *cur = ev;
                    }
                }
                None => {
                    earliest.insert(ev.org_id.clone(), ev);
                }
            },
            Err(reason) => rows.reject(report, *line, reason),
        }
    }
    Ok(earliest.into_values().collect())
}

fn parse_firms(path: &Path, report: &mut IngestReport) -> Result<Vec<FirmRecord>> {
    let rows = read_rows(path, &FIRMS_HEADER)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(rows.records.len());
    for (line, rec) in &rows.records {
        let org_id = field(rec, 0);
        if org_id.is_empty() {
            report.dropped_missing_org += 1;
            continue;
        }
        let founded = field(rec, 1);
        let founded_on = if founded.is_empty() {
            None
        } else {
            match parse_date(founded) {
                Ok(d) => Some(d),
                Err(reason) => {
                    rows.reject(report, *line, reason);
                    continue;
                }
            }
        };
        if !seen.insert(org_id.to_string()) {
            report.duplicate_firms += 1;
            continue;
        }
        out.push(FirmRecord {
            org_id: org_id.to_string(),
            founded_on,
            industry: field(rec, 2).to_string(),
            region: field(rec, 3).to_string(),
        });
    }
    Ok(out)
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rounds(path: &Path, rounds: &[FundingEvent]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(ROUNDS_HEADER).map_err(e)?;
    for r in rounds {
        w.write_record([
            r.org_id.as_str(),
            r.round_id.as_str(),
            &r.announced_on.format(DATE_FORMAT).to_string(),
            &fmt_opt(r.raised_usd),
            &fmt_opt(r.investor_count),
            r.investment_type.as_str(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_patents(path: &Path, patents: &[PatentGrant]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(PATENTS_HEADER).map_err(e)?;
    for p in patents {
        w.write_record([
            p.org_id.as_str(),
            &p.grant_date.format(DATE_FORMAT).to_string(),
            &p.forward_citations.to_string(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_exits(path: &Path, exits: &[ExitEvent]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(EXITS_HEADER).map_err(e)?;
    for x in exits {
        w.write_record([x.org_id.as_str(), &x.exit_date.format(DATE_FORMAT).to_string(), x.kind.as_str()])
            .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_firms(path: &Path, firms: &[FirmRecord]) -> Result<()> {
    let mut w = writer(path)?;
    let e = |err| Error::csv(path, err);
    w.write_record(FIRMS_HEADER).map_err(e)?;
    for f in firms {
        w.write_record([
            f.org_id.as_str(),
            &fmt_opt(f.founded_on.map(|d| d.format(DATE_FORMAT).to_string())),
            f.industry.as_str(),
            f.region.as_str(),
        ])
        .map_err(e)?;
    }
    w.flush().map_err(|err| Error::io(path, err))
}

pub fn write_events(paths: &InputPaths, events: &EventSet) -> Result<()> {
    write_rounds(&paths.rounds, &events.rounds)?;
    write_patents(&paths.patents, &events.patents)?;
    write_exits(&paths.exits, &events.exits)?;
    write_firms(&paths.firms, &events.firms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    fn fixture(dir: &Path, rounds: &str) -> InputPaths {
        write(dir, "rounds.csv", rounds);
        write(dir, "patents.csv", "org_id,grant_date,forward_citations\n");
        write(dir, "exits.csv", "org_id,exit_date,kind\n");
        write(dir, "firms.csv", "org_id,founded_on,industry,region\n");
        InputPaths::in_dir(dir)
    }

    const HEAD: &str = "org_id,round_id,announced_on,raised_usd,investor_count,investment_type\n";

    #[test]
    fn duplicate_round_ids_keep_first() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEAD}a,r1,2015-01-02,100,1,seed\na,r1,2015-01-02,100,1,seed\nb,r2,2016-03-04,,,series_a\n");
        let (ev, rep) = parse_events(&fixture(dir.path(), &body), &IngestOptions::default()).unwrap();
        assert_eq!(ev.rounds.len(), 2);
        assert_eq!(rep.duplicate_rounds, 1);
        assert_eq!(ev.rounds[1].raised_usd, None);
        assert_eq!(ev.rounds[1].stage, Stage::Mid);
    }

    #[test]
    fn empty_org_is_dropped_and_counted() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEAD},r1,2015-01-02,100,1,seed\na,r2,2015-01-02,100,1,seed\n");
        let (ev, rep) = parse_events(&fixture(dir.path(), &body), &IngestOptions::default()).unwrap();
        assert_eq!(ev.rounds.len(), 1);
        assert_eq!(rep.dropped_missing_org, 1);
    }

    #[test]
    fn header_only_files_are_empty() {
        let dir = tempfile::tempdir().unwrap();
        let (ev, rep) = parse_events(&fixture(dir.path(), HEAD), &IngestOptions::default()).unwrap();
        assert_eq!(ev, EventSet::default());
        assert!(rep.rejected.is_empty());
    }

    #[test]
    fn malformed_date_rejects_row_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEAD}a,r1,02/01/2015,100,1,seed\na,r2,2015-01-02,100,1,seed\n");
        let (ev, rep) = parse_events(&fixture(dir.path(), &body), &IngestOptions::default()).unwrap();
        assert_eq!(ev.rounds.len(), 1);
        assert_eq!(rep.rejected.len(), 1);
        assert_eq!(rep.rejected[0].line, 2);
        assert_eq!(rep.rejected[0].file, "rounds.csv");
    }

    #[test]
    fn negative_amount_and_future_date_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!("{HEAD}a,r1,2015-01-02,-5,1,seed\na,r2,2024-01-02,5,1,seed\n");
        let (ev, rep) = parse_events(&fixture(dir.path(), &body), &IngestOptions::default()).unwrap();
        assert!(ev.rounds.is_empty());
        assert_eq!(rep.rejected.len(), 2);
    }

    #[test]
    fn missing_file_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let err = parse_events(&InputPaths::in_dir(dir.path()), &IngestOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn earliest_exit_wins() {
        let dir = tempfile::tempdir().unwrap();
        let paths = fixture(dir.path(), HEAD);
        write(dir.path(), "exits.csv", "org_id,exit_date,kind\na,2019-05-01,IPO\na,2018-01-01,Acquisition\n");
        let (ev, rep) = parse_events(&paths, &IngestOptions::default()).unwrap();
        assert_eq!(ev.exits.len(), 1);
        assert_eq!(ev.exits[0].kind, ExitKind::Acquisition);
        assert_eq!(rep.superseded_exits, 1);
    }

    #[test]
    fn stage_classification() {
        assert_eq!(classify_stage("seed"), Stage::Early);
        assert_eq!(classify_stage("Pre-Seed"), Stage::Early);
        assert_eq!(classify_stage("series_b"), Stage::Mid);
        assert_eq!(classify_stage("series_c"), Stage::Late);
        assert_eq!(classify_stage("Series H"), Stage::Late);
        assert_eq!(classify_stage("grant"), Stage::Other);
        assert_eq!(classify_stage("unknown_xyz"), Stage::Other);
        assert_eq!(classify_stage(""), Stage::Other);
    }

    #[test]
    fn stage_map_version_checked() {
        let err = StageMap::from_toml("version = 2\n[stages]\n").unwrap_err();
        assert!(matches!(err, Error::Version { expected: 1, found: 2 }));
    }
}
