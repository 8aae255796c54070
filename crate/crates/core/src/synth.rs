//! Seeded synthetic event generator with planted signal.
//!
//! Each firm is simulated on a monthly clock from its founding month. Within a
//! month, funding, patenting and exit are drawn from separate per-firm random
//! streams, so firm `i` produces the same history regardless of how many
//! other firms are generated or in what order.

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dates::{add_months, ymd};
use crate::error::{Error, Result};
use crate::ingest::{classify_stage, EventSet, ExitEvent, ExitKind, FirmRecord, FundingEvent, PatentGrant};
use crate::panel::{build_panel, Outcome};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FundingParams {
    /// Monthly hazard far from any recent round.
    pub base_rate: f64,
    /// Multiplicative boost right after a round (or founding), decaying with
    /// time constant `recency_tau_months`.
    pub recency_boost: f64,
    pub recency_tau_months: f64,
    /// Extra hazard per round in the trailing twelve months (capped at four).
    pub momentum_boost: f64,
    pub median_round_usd: f64,
    pub round_size_sigma: f64,
    pub mean_investors: f64,
}

impl Default for FundingParams {
    fn default() -> Self {
        FundingParams {
            base_rate: 0.0015,
            recency_boost: 60.0,
            recency_tau_months: 12.0,
            momentum_boost: 0.5,
            median_round_usd: 1_760_000.0,
            round_size_sigma: 1.2,
            mean_investors: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatentParams {
    /// Share of firms of the innovative type.
    pub innovative_share: f64,
    /// Monthly grant rate of an innovative firm with no stock at founding.
    pub innovative_rate: f64,
    /// Monthly grant rate of every other firm.
    pub background_rate: f64,
    /// Rate is divided by (1 + stock / stock_scale).
    pub stock_scale: f64,
    /// Rate decays as exp(-age / age_scale_years).
    pub age_scale_years: f64,
    pub mean_citations: f64,
}

impl Default for PatentParams {
    fn default() -> Self {
        PatentParams {
            innovative_share: 0.35,
            innovative_rate: 0.05,
            background_rate: 0.0005,
            stock_scale: 15.0,
            age_scale_years: 20.0,
            mean_citations: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExitParams {
    pub base_rate: f64,
    /// Hazard scales with (1 + cum_raised / capital_scale_usd)^capital_power.
    pub capital_scale_usd: f64,
    pub capital_power: f64,
    /// ... and with (1 + cum_investors / investor_scale).
    pub investor_scale: f64,
    pub ipo_share: f64,
}

impl Default for ExitParams {
    fn default() -> Self {
        ExitParams { base_rate: 0.0004, capital_scale_usd: 5_000_000.0, capital_power: 1.3, investor_scale: 10.0, ipo_share: 0.15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceTargets {
    pub fund_12m: f64,
    pub patent_24m: f64,
    pub exit_36m: f64,
}

impl PrevalenceTargets {
    fn get(&self, o: Outcome) -> f64 {
        match o {
            Outcome::Fund12m => self.fund_12m,
            Outcome::Patent24m => self.patent_24m,
            Outcome::Exit36m => self.exit_36m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_firms: usize,
    /// Earliest founding date.
    pub start: NaiveDate,
    /// Simulation end; also the latest possible event date.
    pub end: NaiveDate,
    pub seed: u64,
    pub funding: FundingParams,
    pub patents: PatentParams,
    pub exits: ExitParams,
    pub missing_founded_rate: f64,
    pub missing_amount_rate: f64,
    pub missing_investors_rate: f64,
    /// When set, base rates are rescaled on a pilot run so evaluable-row
    /// prevalence hits these values.
    pub targets: Option<PrevalenceTargets>,
    pub pilot_firms: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_firms: 5_000,
            start: ymd(1998, 1, 1),
            end: ymd(2023, 12, 31),
            seed: 7,
            funding: FundingParams::default(),
            patents: PatentParams::default(),
            exits: ExitParams::default(),
            missing_founded_rate: 0.1,
            missing_amount_rate: 0.15,
            missing_investors_rate: 0.1,
            targets: None,
            pilot_firms: 2_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.end <= self.start {
            return Err(Error::Config(format!("synth end {} is not after start {}", self.end, self.start)));
        }
        let probs = [
            ("patents.innovative_share", self.patents.innovative_share),
            ("exits.ipo_share", self.exits.ipo_share),
            ("missing_founded_rate", self.missing_founded_rate),
            ("missing_amount_rate", self.missing_amount_rate),
            ("missing_investors_rate", self.missing_investors_rate),
        ];
        for (name, v) in probs {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let nonneg = [
            ("funding.base_rate", self.funding.base_rate),
            ("funding.recency_boost", self.funding.recency_boost),
            ("funding.momentum_boost", self.funding.momentum_boost),
            ("funding.mean_investors", self.funding.mean_investors),
            ("funding.round_size_sigma", self.funding.round_size_sigma),
            ("patents.innovative_rate", self.patents.innovative_rate),
            ("patents.background_rate", self.patents.background_rate),
            ("patents.mean_citations", self.patents.mean_citations),
            ("exits.base_rate", self.exits.base_rate),
            ("exits.capital_power", self.exits.capital_power),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        let positive = [
            ("funding.recency_tau_months", self.funding.recency_tau_months),
            ("funding.median_round_usd", self.funding.median_round_usd),
            ("patents.stock_scale", self.patents.stock_scale),
            ("patents.age_scale_years", self.patents.age_scale_years),
            ("exits.capital_scale_usd", self.exits.capital_scale_usd),
            ("exits.investor_scale", self.exits.investor_scale),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(t) = &self.targets {
            for o in Outcome::ALL {
                if !(0.0 < t.get(o) && t.get(o) < 1.0) {
                    return Err(Error::Config(format!("prevalence target for {o} must lie in (0, 1)")));
                }
            }
        }
        Ok(())
    }
}

/// Rate multipliers applied by prevalence calibration, one per outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateScale {
    pub funding: f64,
    pub patents: f64,
    pub exits: f64,
}

impl Default for RateScale {
    fn default() -> Self {
        RateScale { funding: 1.0, patents: 1.0, exits: 1.0 }
    }
}

impl RateScale {
    fn get_mut(&mut self, o: Outcome) -> &mut f64 {
        match o {
            Outcome::Fund12m => &mut self.funding,
            Outcome::Patent24m => &mut self.patents,
            Outcome::Exit36m => &mut self.exits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub scale: RateScale,
    /// Evaluable-row prevalence on the pilot per outcome, after calibration.
    pub pilot_prevalence: Option<[f64; 3]>,
}

const INDUSTRIES: [&str; 6] = ["software", "biotech", "hardware", "fintech", "energy", "consumer"];
const REGIONS: [&str; 5] = ["north_america", "europe", "asia", "latin_america", "other"];
const OTHER_TYPES: [&str; 3] = ["grant", "debt_financing", "convertible_note"];
const SERIES: [&str; 10] = [
    "series_a", "series_b", "series_c", "series_d", "series_e", "series_f", "series_g", "series_h", "series_i", "series_j",
];

fn random_day(r: &mut ChaCha8Rng, year: i32, month: u32) -> NaiveDate {
    let first = ymd(year, month, 1);
    let last = add_months(first, 1).pred_opt().expect("valid date");
    let day = r.gen_range(1..=last.day());
    ymd(year, month, day)
}

fn investment_type(r: &mut ChaCha8Rng, equity_rounds: usize) -> &'static str {
    if r.gen::<f64>() < 0.1 {
        return OTHER_TYPES[r.gen_range(0..OTHER_TYPES.len())];
    }
    match equity_rounds {
        0 => ["pre_seed", "seed", "angel"][r.gen_range(0..3)],
        1 => ["seed", "series_a"][r.gen_range(0..2)],
        k => SERIES[(k - 2).min(SERIES.len() - 1)],
    }
}

struct FirmEvents {
    firm: FirmRecord,
    rounds: Vec<FundingEvent>,
    patents: Vec<PatentGrant>,
    exit: Option<ExitEvent>,
}

fn simulate_firm(cfg: &SynthConfig, scale: &RateScale, i: usize) -> FirmEvents {
    let org_id = format!("firm_{i:06}");
    let stream = |name: &str| rng::stream(cfg.seed, &[rng::tag("firm"), i as u64, rng::tag(name)]);
    let mut attr = stream("attributes");
    let mut fund = stream("funding");
    let mut pat = stream("patents");
    let mut exit_rng = stream("exit");

    let span_days = (cfg.end - cfg.start).num_days().max(1);
    // Founding within the first 90% of the window so every firm gets some history.
    let founded = cfg.start + chrono::Duration::days(attr.gen_range(0..(span_days * 9 / 10).max(1)));
    let innovative = attr.gen::<f64>() < cfg.patents.innovative_share;
    let firm = FirmRecord {
        org_id: org_id.clone(),
        founded_on: (attr.gen::<f64>() >= cfg.missing_founded_rate).then_some(founded),
        industry: INDUSTRIES[attr.gen_range(0..INDUSTRIES.len())].to_string(),
        region: REGIONS[attr.gen_range(0..REGIONS.len())].to_string(),
    };

    let f = &cfg.funding;
    let size = LogNormal::new(f.median_round_usd.ln(), f.round_size_sigma).expect("validated sigma");
    let investors = Poisson::new(f.mean_investors.max(1e-9)).expect("positive mean");
    let citations = Poisson::new(cfg.patents.mean_citations.max(1e-9)).expect("positive mean");

    let mut rounds: Vec<FundingEvent> = Vec::new();
    let mut patents: Vec<PatentGrant> = Vec::new();
    let mut exit = None;
    let mut round_months: Vec<i64> = Vec::new();
    let mut equity_rounds = 0;
    let (mut cum_raised, mut cum_investors) = (0.0, 0.0);
    let mut month_index: i64 = 0;
    let mut month = ymd(founded.year(), founded.month(), 1);
    while month <= cfg.end {
        let last_event = round_months.last().copied().unwrap_or(0);
        let since = (month_index - last_event) as f64;
        let recent = round_months.iter().filter(|&&m| month_index - m < 12).count().min(4) as f64;
        let hazard = scale.funding
            * f.base_rate
            * (1.0 + f.recency_boost * (-since / f.recency_tau_months).exp())
            * (1.0 + f.momentum_boost * recent);
        if fund.gen::<f64>() < hazard.min(1.0) {
            let date = random_day(&mut fund, month.year(), month.month());
            if date <= cfg.end && date >= founded {
                let kind = investment_type(&mut fund, equity_rounds);
                if !OTHER_TYPES.contains(&kind) {
                    equity_rounds += 1;
                }
                let amount = size.sample(&mut fund).round();
                let n_inv = 1 + investors.sample(&mut fund) as u32;
                cum_raised += amount;
                cum_investors += n_inv as f64;
                let raised_usd = (fund.gen::<f64>() >= cfg.missing_amount_rate).then_some(amount);
                let investor_count = (fund.gen::<f64>() >= cfg.missing_investors_rate).then_some(n_inv);
                rounds.push(FundingEvent {
                    org_id: org_id.clone(),
                    round_id: format!("{org_id}_r{}", rounds.len() + 1),
                    announced_on: date,
                    raised_usd,
                    investor_count,
                    investment_type: kind.to_string(),
                    stage: classify_stage(kind),
                });
                round_months.push(month_index);
            }
        }

        let p = &cfg.patents;
        let age_years = month_index as f64 / 12.0;
        let type_rate = if innovative { p.innovative_rate } else { p.background_rate };
        let rate = scale.patents * type_rate / (1.0 + patents.len() as f64 / p.stock_scale) * (-age_years / p.age_scale_years).exp();
        if pat.gen::<f64>() < rate.min(1.0) {
            let date = random_day(&mut pat, month.year(), month.month());
            if date <= cfg.end && date >= founded {
                patents.push(PatentGrant { org_id: org_id.clone(), grant_date: date, forward_citations: citations.sample(&mut pat) as u32 });
            }
        }

        let e = &cfg.exits;
        let exit_hazard = scale.exits
            * e.base_rate
            * (1.0 + cum_raised / e.capital_scale_usd).powf(e.capital_power)
            * (1.0 + cum_investors / e.investor_scale);
        if exit_rng.gen::<f64>() < exit_hazard.min(1.0) {
            let date = random_day(&mut exit_rng, month.year(), month.month());
            if date <= cfg.end && date >= founded {
                let kind = if exit_rng.gen::<f64>() < e.ipo_share { ExitKind::Ipo } else { ExitKind::Acquisition };
                exit = Some(ExitEvent { org_id: org_id.clone(), exit_date: date, kind });
                // Nothing can happen after the exit date.
                rounds.retain(|r| r.announced_on <= date);
                patents.retain(|g| g.grant_date <= date);
                break;
            }
        }
        month = add_months(month, 1);
        month_index += 1;
    }
    FirmEvents { firm, rounds, patents, exit }
}

fn generate_scaled(cfg: &SynthConfig, scale: &RateScale, n_firms: usize) -> EventSet {
    let firms: Vec<FirmEvents> = (0..n_firms).into_par_iter().map(|i| simulate_firm(cfg, scale, i)).collect();
    let mut out = EventSet::default();
    for f in firms {
        out.firms.push(f.firm);
        out.rounds.extend(f.rounds);
        out.patents.extend(f.patents);
        out.exits.extend(f.exit);
    }
    out
}

/// Prevalence of each outcome over evaluable panel rows.
pub fn evaluable_prevalence(events: &EventSet, panel_end: NaiveDate) -> Result<[f64; 3]> {
    let (panel, _) = build_panel(events, panel_end)?;
    let mut out = [0.0; 3];
    for o in Outcome::ALL {
        let (mut n, mut pos) = (0usize, 0usize);
        for r in panel.rows.iter().filter(|r| r.is_evaluable(o)) {
            n += 1;
            pos += r.label(o) as usize;
        }
        out[o.index()] = if n == 0 { 0.0 } else { pos as f64 / n as f64 };
    }
    Ok(out)
}

/// Rescale base rates by bisection (in log space) on a pilot of the first
/// `pilot_firms` firms until each outcome's prevalence matches its target.
/// Outcomes interact through exits, so two coordinate sweeps are made.
pub fn calibrate(cfg: &SynthConfig, targets: &PrevalenceTargets, panel_end: NaiveDate) -> Result<(RateScale, [f64; 3])> {
    let pilot = cfg.pilot_firms.min(cfg.n_firms).max(1);
    let mut scale = RateScale::default();
    for _sweep in 0..2 {
        for o in [Outcome::Exit36m, Outcome::Patent24m, Outcome::Fund12m] {
            let target = targets.get(o);
            let (mut lo, mut hi) = ((1.0f64 / 50.0).ln(), 50f64.ln());
            for _ in 0..14 {
                let mid = 0.5 * (lo + hi);
                *scale.get_mut(o) = mid.exp();
                let prev = evaluable_prevalence(&generate_scaled(cfg, &scale, pilot), panel_end)?[o.index()];
                if prev < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            *scale.get_mut(o) = (0.5 * (lo + hi)).exp();
        }
    }
    let achieved = evaluable_prevalence(&generate_scaled(cfg, &scale, pilot), panel_end)?;
    Ok((scale, achieved))
}

/// Generate the four event tables. Pure function of the configuration.
pub fn generate_events(cfg: &SynthConfig, panel_end: NaiveDate) -> Result<(EventSet, SynthReport)> {
    cfg.validate()?;
    let (scale, pilot_prevalence) = match &cfg.targets {
        Some(t) => {
            let (s, p) = calibrate(cfg, t, panel_end)?;
            (s, Some(p))
        }
        None => (RateScale::default(), None),
    };
    Ok((generate_scaled(cfg, &scale, cfg.n_firms), SynthReport { scale, pilot_prevalence }))
}
