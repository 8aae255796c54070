use std::fs;

use firmcast::ingest::{write_events, InputPaths};
use firmcast::panel::{build_panel, default_panel_end, Outcome, Split};
use firmcast::preprocess::{self, fit_preprocessor};
use firmcast::screen::screen_outcome;
use firmcast::synth::{evaluable_prevalence, generate_events, PrevalenceTargets, SynthConfig};

fn days_since_auc(cfg: &SynthConfig) -> f64 {
    let end = default_panel_end();
    let (events, _) = generate_events(cfg, end).unwrap();
    let (panel, _) = build_panel(&events, end).unwrap();
    let dev: Vec<_> = panel.rows_in(Split::Dev).collect();
    let pre = fit_preprocessor(&dev).unwrap();
    screen_outcome(&panel, &pre, Outcome::Fund12m)
        .unwrap()
        .into_iter()
        .find(|r| r.feature == "days_since_last_round")
        .unwrap()
        .auc_signed()
}

#[test]
fn same_seed_gives_identical_files() {
    let _g = crate::serial();
    let cfg = SynthConfig { n_firms: 300, seed: 42, ..SynthConfig::default() };
    let dir = tempfile::tempdir().unwrap();
    for sub in ["a", "b"] {
        let d = dir.path().join(sub);
        fs::create_dir_all(&d).unwrap();
        let (events, _) = generate_events(&cfg, default_panel_end()).unwrap();
        write_events(&InputPaths::in_dir(&d), &events).unwrap();
    }
    for f in ["rounds.csv", "patents.csv", "exits.csv", "firms.csv"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn planted_recency_signal_has_negative_sign() {
    let _g = crate::serial();
    let auc = days_since_auc(&SynthConfig::default());
    assert!(auc < -0.55, "signed AUC {auc}");
}

#[test]
fn no_recency_means_no_signal() {
    let _g = crate::serial();
    let mut cfg = SynthConfig::default();
    cfg.funding.recency_boost = 0.0;
    cfg.funding.momentum_boost = 0.0;
    let auc = days_since_auc(&cfg);
    assert!(auc.abs() - 0.5 <= 0.03, "signed AUC {auc}");
}

#[test]
fn prevalence_targets_are_met() {
    let _g = crate::serial();
    let targets = PrevalenceTargets { fund_12m: 0.18, patent_24m: 0.12, exit_36m: 0.06 };
    let cfg = SynthConfig { targets: Some(targets), ..SynthConfig::default() };
    let (events, report) = generate_events(&cfg, default_panel_end()).unwrap();
    assert!(report.pilot_prevalence.is_some());
    let got = evaluable_prevalence(&events, default_panel_end()).unwrap();
    for (g, want) in got.iter().zip([0.18, 0.12, 0.06]) {
        assert!((g - want).abs() <= 0.02, "prevalence {got:?}");
    }
}

#[test]
fn median_round_size_near_target() {
    let _g = crate::serial();
    let (events, _) = generate_events(&SynthConfig::default(), default_panel_end()).unwrap();
    let mut sizes: Vec<f64> = events.rounds.iter().filter_map(|r| r.raised_usd).collect();
    let med = preprocess::median(&mut sizes).unwrap();
    assert!((med / 1_760_000.0 - 1.0).abs() <= 0.2, "median {med}");
}
