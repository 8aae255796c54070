//! Acceptance criteria plus the command-line and synthetic-data suites. Each
//! criterion prints one PASS/FAIL line and then asserts. All tests share a
//! lock so the end-to-end timing is not disturbed by the others running on
//! the same cores.

mod cli;
mod synth_properties;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use firmcast::cli::run_command;
use firmcast::dates::{add_months, ymd};
use firmcast::eval::{self, fit_isotonic, pav};
use firmcast::explain::{self, expected_value, tree_shap_row, ShapOptions};
use firmcast::learn::tree::{Node, Tree};
use firmcast::learn::{load_model, train, LearnConfig, ModelKind};
use firmcast::matrix::Matrix;
use firmcast::panel::{self, compute_features, group_by_firm, Outcome, Panel, Split};
use firmcast::preprocess;
use firmcast::resample::{self, balanced_size, inverse_prevalence_weights, DevSet};
use firmcast::screen::{self, SelectionPolicy, ALWAYS_KEEP};
use firmcast::synth::{self, SynthConfig};
use firmcast::zoo::{self, select_winner, CellKey, LeaderboardEntry};

static LOCK: Mutex<()> = Mutex::new(());

pub(crate) fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u32, name: &str, pass: bool, detail: &str) {
    // Written past the test harness capture so passing criteria report too.
    let line = format!("criterion {n:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

fn labels_from_counts(n: usize, pos: usize) -> Vec<bool> {
    (0..n).map(|i| i < pos).collect()
}

// Class counts for the three outcomes on the full reference panel.
const N_TOTAL: usize = 2_495_444;
const POSITIVES: [usize; 3] = [439_009, 547_553, 147_395];

#[test]
fn criterion_01_weight_arithmetic() {
    let _g = serial();
    let expected = [4.69, 3.56, 15.93];
    let mut pass = true;
    let mut detail = Vec::new();
    for (pos, want) in POSITIVES.iter().zip(expected) {
        let w = inverse_prevalence_weights(&labels_from_counts(N_TOTAL, *pos)).unwrap();
        let ok = (w.positive - want).abs() <= 0.005 && w.negative == 1.0;
        pass &= ok;
        detail.push(format!("{:.4} vs {want}{}", w.positive, if ok { "" } else { " OUT" }));
    }
    verdict(1, "inverse-prevalence weights", pass, &detail.join(", "));
}

fn random_devset(n: usize, pos_rate: f64, seed: u64) -> (DevSet, Vec<bool>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            vec![
                r.gen_range(-3.0..3.0),
                r.gen_range(0.0..100.0),
                r.gen::<f64>(),
                f64::from(r.gen_bool(0.2) as u8),
                f64::from(r.gen_bool(0.5) as u8),
            ]
        })
        .collect();
    let labels: Vec<bool> = (0..n).map(|_| r.gen_bool(pos_rate)).collect();
    let cols = ["a", "b", "c", "a__isna", "b__isna"].map(String::from).to_vec();
    let m = Matrix::from_rows(cols, &rows).unwrap();
    let dev = DevSet::new(m, labels, &vec![Split::Dev; n]).unwrap();
    (dev, vec![false, false, false, true, true])
}

#[test]
fn criterion_02_smote_sizing() {
    let _g = serial();
    let expected = [4_112_870, 3_895_782, 4_696_098];
    let mut pass = true;
    let mut detail = Vec::new();
    for (pos, want) in POSITIVES.iter().zip(expected) {
        let got = balanced_size(N_TOTAL, *pos);
        pass &= got == want;
        detail.push(format!("{got}"));
    }
    let t = Instant::now();
    for (n, rate, seed) in [(2_000, 0.1, 1), (20_000, 0.07, 2), (50_000, 0.15, 3)] {
        let (dev, mask) = random_devset(n, rate, seed);
        let v = resample::smote_nc(&dev, &mask, resample::DEFAULT_K, seed).unwrap();
        let pos = v.positives();
        let neg = v.n_rows() - pos;
        let ok = pos.abs_diff(neg) <= 1 && v.n_rows() == balanced_size(n, dev.labels().iter().filter(|&&l| l).count());
        pass &= ok;
        detail.push(format!("n={n}: {pos}/{neg}"));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 60.0;
    detail.push(format!("{secs:.1}s"));
    verdict(2, "balanced SMOTE-NC size", pass, &detail.join(", "));
}

fn brute_auroc(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                pairs += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

/// Rows ranked at or above row i: higher score, or equal score and lower index.
fn at_or_above(s: &[f64], i: usize) -> Vec<usize> {
    (0..s.len()).filter(|&j| s[j] > s[i] || (s[j] == s[i] && j <= i)).collect()
}

fn brute_ap(s: &[f64], y: &[bool]) -> f64 {
    let pos: Vec<usize> = (0..s.len()).filter(|&i| y[i]).collect();
    pos.iter()
        .map(|&i| {
            let above = at_or_above(s, i);
            above.iter().filter(|&&j| y[j]).count() as f64 / above.len() as f64
        })
        .sum::<f64>()
        / pos.len() as f64
}

fn brute_precision_at(s: &[f64], y: &[bool], k: usize) -> f64 {
    let top: Vec<usize> = (0..s.len()).filter(|&i| at_or_above(s, i).len() <= k).collect();
    top.iter().filter(|&&i| y[i]).count() as f64 / k as f64
}

#[test]
fn criterion_03_metric_oracles() {
    let _g = serial();
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    while instances < 500 {
        let n = r.gen_range(2..=200);
        let levels = r.gen_range(2..50);
        let s: Vec<f64> = (0..n).map(|_| r.gen_range(0..levels) as f64 / levels as f64).collect();
        let y: Vec<bool> = (0..n).map(|_| r.gen_bool(0.3)).collect();
        if y.iter().all(|&v| v) || !y.iter().any(|&v| v) {
            continue;
        }
        let k = r.gen_range(1..=n);
        worst = worst
            .max((eval::auroc(&s, &y).unwrap() - brute_auroc(&s, &y)).abs())
            .max((eval::pr_auc(&s, &y).unwrap() - brute_ap(&s, &y)).abs())
            .max((eval::precision_at_k(&s, &y, k).unwrap() - brute_precision_at(&s, &y, k)).abs());
        instances += 1;
    }
    let s = [0.1, 0.4, 0.35, 0.8];
    let y = [false, false, true, true];
    let auc = eval::auroc(&s, &y).unwrap();
    let ap = eval::pr_auc(&s, &y).unwrap();
    let pass = worst <= 1e-12 && auc == 0.75 && (ap - 0.8333).abs() < 5e-5;
    verdict(3, "metric oracles", pass, &format!("max |Δ| {worst:e} over {instances}; worked AUROC {auc}, AP {ap:.4}"));
}

fn random_tree(r: &mut ChaCha8Rng, p: usize, max_depth: usize) -> Tree {
    fn grow(r: &mut ChaCha8Rng, nodes: &mut Vec<Node>, p: usize, depth: usize, cover: f64) -> usize {
        let id = nodes.len();
        if depth == 0 || r.gen_bool(0.2) {
            nodes.push(Node::Leaf { value: r.gen_range(-2.0..2.0), cover });
            return id;
        }
        nodes.push(Node::Leaf { value: 0.0, cover });
        let frac = r.gen_range(0.05..0.95);
        let left = grow(r, nodes, p, depth - 1, cover * frac);
        let right = grow(r, nodes, p, depth - 1, cover * (1.0 - frac));
        nodes[id] = Node::Split {
            feature: r.gen_range(0..p),
            threshold: r.gen_range(0..5) as f64,
            left,
            right,
            missing_goes_left: r.gen_bool(0.5),
            cover,
            gain: 0.0,
        };
        id
    }
    let mut nodes = Vec::new();
    let root_cover = r.gen_range(10.0..1000.0);
    grow(r, &mut nodes, p, max_depth, root_cover);
    Tree { nodes }
}

/// Expected output given the features in `known`, averaging unknown splits by cover.
fn cond_exp(t: &Tree, i: usize, x: &[f64], known: u32) -> f64 {
    match t.nodes[i] {
        Node::Leaf { value, .. } => value,
        Node::Split { feature, threshold, left, right, missing_goes_left, cover, .. } => {
            if known & (1 << feature) != 0 {
                let v = x[feature];
                let go_left = if v.is_nan() { missing_goes_left } else { v <= threshold };
                cond_exp(t, if go_left { left } else { right }, x, known)
            } else {
                let (cl, cr) = (t.nodes[left].cover(), t.nodes[right].cover());
                debug_assert!((cl + cr - cover).abs() < 1e-9 * cover);
                (cl * cond_exp(t, left, x, known) + cr * cond_exp(t, right, x, known)) / (cl + cr)
            }
        }
    }
}

fn brute_shapley(t: &Tree, x: &[f64], p: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=p).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    let values: Vec<f64> = (0..1u32 << p).map(|s| cond_exp(t, 0, x, s)).collect();
    (0..p)
        .map(|j| {
            let mut phi = 0.0;
            for s in 0..1u32 << p {
                if s & (1 << j) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = fact[size] * fact[p - size - 1] / fact[p];
                phi += w * (values[(s | (1 << j)) as usize] - values[s as usize]);
            }
            phi
        })
        .collect()
}

fn small_run_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.toml");
    fs::write(
        &path,
        "[synth]\nn_firms = 700\n\n[learn.forest]\nn_trees = 40\n\n[learn.gbdt]\nn_rounds = 80\n\n[explain]\nshap_cap = 1500\npermutation_repeats = 2\npermutation_cap = 3000\npdp_cap = 1000\n",
    )
    .unwrap();
    path
}

fn run_all(out: &Path, extra: &[&str]) -> i32 {
    let mut argv = vec!["firmcast", "all", "--seed", "7", "--out", out.to_str().unwrap()];
    argv.extend_from_slice(extra);
    run_command(argv)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

struct RunView {
    panel: Panel,
    pre: preprocess::Preprocessor,
    selected: BTreeMap<Outcome, Vec<String>>,
    board: Vec<LeaderboardEntry>,
}

fn open_run(out: &Path) -> RunView {
    RunView {
        panel: panel::read_panel_csv(&out.join("panel.csv"), panel::default_panel_end()).unwrap(),
        pre: preprocess::load_feature_list(&out.join("feature_list.json")).unwrap(),
        selected: read_json(&out.join("selected_features.json")),
        board: read_json(&out.join("leaderboard.json")),
    }
}

fn model_path(out: &Path, key: &CellKey) -> std::path::PathBuf {
    out.join(key.file_name("train", "model", "bin"))
}

#[test]
fn criterion_04_treeshap_exactness() {
    let _g = serial();
    let t = Instant::now();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    let mut rows_checked = 0;
    for _ in 0..100 {
        let p = r.gen_range(1..=12);
        let depth = r.gen_range(1..=3);
        let tree = random_tree(&mut r, p, depth);
        for _ in 0..5 {
            let x: Vec<f64> = (0..p)
                .map(|_| if r.gen_bool(0.1) { f64::NAN } else { r.gen_range(0..6) as f64 - 0.5 * r.gen_range(0..2) as f64 })
                .collect();
            let mut phi = vec![0.0; p];
            tree_shap_row(&tree, &x, 1.0, &mut phi);
            let oracle = brute_shapley(&tree, &x, p);
            for j in 0..p {
                worst = worst.max((phi[j] - oracle[j]).abs());
            }
            let local = (expected_value(&tree) + phi.iter().sum::<f64>() - tree.predict_row(&x)).abs();
            worst = worst.max(local);
            rows_checked += 1;
        }
    }

    // Local accuracy on every attributed row of an end-to-end run's winners.
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run_config(dir.path());
    let out = dir.path().join("run");
    let status = run_all(&out, &["--config", cfg.to_str().unwrap()]);
    let view = open_run(&out);
    let winners: BTreeMap<Outcome, CellKey> = read_json(&out.join("winners.json"));
    let mut run_worst: f64 = 0.0;
    let mut run_rows = 0;
    for o in Outcome::ALL {
        let tree_entries: Vec<LeaderboardEntry> =
            view.board.iter().filter(|e| e.outcome == o && e.model.is_tree_based()).cloned().collect();
        let mut keys: Vec<CellKey> = winners.get(&o).copied().into_iter().collect();
        keys.extend(select_winner(&tree_entries).map(|e| e.key()));
        for key in keys.into_iter().filter(|k| k.model.is_tree_based()) {
            let model = load_model(&model_path(&out, &key)).unwrap();
            let data = zoo::outcome_data(&view.panel, &view.pre, o, &view.selected[&o]).unwrap();
            let attr = explain::tree_shap(&model, &data.eval_matrix, &ShapOptions { sample_cap: 1500, max_forest_trees: None, seed: 1 }).unwrap();
            run_worst = run_worst.max(attr.max_local_error());
            run_rows += attr.phi.len();
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = status == 0 && worst <= 1e-9 && run_worst <= 1e-9 && run_rows > 0 && secs < 300.0;
    verdict(
        4,
        "TreeSHAP exactness",
        pass,
        &format!("oracle max |Δ| {worst:e} on {rows_checked} rows; run local error {run_worst:e} on {run_rows} rows; {secs:.0}s"),
    );
}

/// Exhaustive isotonic fit: every split into contiguous blocks, each block
/// set to its weighted mean, keeping the best non-decreasing candidate.
fn brute_isotonic(y: &[f64], w: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0..1u32 << (n - 1) {
        let mut fit = vec![0.0; n];
        let mut start = 0;
        for end in 1..=n {
            if end == n || cuts & (1 << (end - 1)) != 0 {
                let ws: f64 = w[start..end].iter().sum();
                let m = (start..end).map(|i| y[i] * w[i]).sum::<f64>() / ws;
                fit[start..end].iter_mut().for_each(|v| *v = m);
                start = end;
            }
        }
        if fit.windows(2).any(|p| p[0] > p[1] + 1e-15) {
            continue;
        }
        let sse: f64 = (0..n).map(|i| w[i] * (y[i] - fit[i]).powi(2)).sum();
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, fit));
        }
    }
    best.unwrap().1
}

#[test]
fn criterion_05_isotonic_oracle() {
    let _g = serial();
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    let mut mean_err: f64 = 0.0;
    for _ in 0..200 {
        let n = r.gen_range(1..=8);
        let y: Vec<f64> = (0..n).map(|_| r.gen::<f64>()).collect();
        let w: Vec<f64> = (0..n).map(|_| r.gen_range(0.5..3.0)).collect();
        let fit = pav(&y, &w);
        let oracle = brute_isotonic(&y, &w);
        for i in 0..n {
            worst = worst.max((fit[i] - oracle[i]).abs());
        }
        monotone &= fit.windows(2).all(|p| p[0] <= p[1]);
        let ws: f64 = w.iter().sum();
        let m_fit = fit.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / ws;
        let m_y = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / ws;
        mean_err = mean_err.max((m_fit - m_y).abs());
    }
    let mut brier_ok = true;
    for _ in 0..200 {
        let n = r.gen_range(5..300);
        let probs: Vec<f64> = (0..n).map(|_| (r.gen_range(0..20) as f64) / 20.0).collect();
        let labels: Vec<bool> = probs.iter().map(|&p| r.gen_bool((p * 0.6 + 0.1).min(1.0))).collect();
        let map = fit_isotonic(&probs, &labels).unwrap();
        let cal = map.apply(&probs);
        brier_ok &= eval::brier(&cal, &labels).unwrap() <= eval::brier(&probs, &labels).unwrap() + 1e-12;
        monotone &= map.fitted.windows(2).all(|p| p[0] <= p[1]);
    }
    let pass = worst <= 1e-6 && monotone && mean_err <= 1e-12 && brier_ok;
    verdict(
        5,
        "isotonic oracle",
        pass,
        &format!("max |Δ| {worst:e}, monotone {monotone}, mean drift {mean_err:e}, refit Brier never worse {brier_ok}"),
    );
}

fn small_panel(n_firms: usize, seed: u64) -> (firmcast::ingest::EventSet, Panel) {
    let cfg = SynthConfig { n_firms, seed, ..SynthConfig::default() };
    let (events, _) = synth::generate_events(&cfg, panel::default_panel_end()).unwrap();
    let (p, _) = panel::build_panel(&events, panel::default_panel_end()).unwrap();
    (events, p)
}

fn small_learn() -> LearnConfig {
    let mut l = LearnConfig::default();
    l.forest.n_trees = 15;
    l.gbdt.n_rounds = 25;
    l
}

/// Everything fitted on Dev for every outcome, variant and model, as bytes.
fn fitted_state(p: &Panel) -> Vec<Vec<u8>> {
    let dev: Vec<_> = p.rows_in(Split::Dev).collect();
    let pre = preprocess::fit_preprocessor(&dev).unwrap();
    let mut state = vec![pre.to_json().unwrap().into_bytes()];
    let zcfg = zoo::ZooConfig { learn: small_learn(), ..zoo::ZooConfig::default() };
    for o in Outcome::ALL {
        let res = screen::screen_outcome(p, &pre, o).unwrap();
        let cols = screen::model_columns(&screen::select_features(&res, o, &ALWAYS_KEEP, SelectionPolicy::Pinned).unwrap(), &pre);
        let data = zoo::outcome_data(p, &pre, o, &cols).unwrap();
        for &v in &zcfg.variants {
            let variant = zoo::make_variant(&data, v, &zcfg, 7).unwrap();
            state.push(variant.matrix.data().iter().flat_map(|x| x.to_bits().to_le_bytes()).collect());
            state.push(variant.labels.iter().map(|&b| b as u8).collect());
            for &m in &zcfg.models {
                let key = CellKey { outcome: o, variant: v, model: m };
                let model = zoo::train_cell(&variant, m, &zcfg.learn, zoo::model_seed(7, &key)).unwrap();
                state.push(model.to_bytes().unwrap());
            }
        }
    }
    state
}

#[test]
fn criterion_06_leakage_suite() {
    let _g = serial();
    let (events, p) = small_panel(400, 11);

    // (a) mutate every Holdout/Final row
    let base = fitted_state(&p);
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let mut mutated = p.clone();
    let mut n_mutated = 0;
    for row in mutated.rows.iter_mut().filter(|row| row.split != Split::Dev) {
        for f in row.features.iter_mut() {
            *f = if r.gen_bool(0.2) { f64::NAN } else { r.gen_range(-1e6..1e6) };
        }
        for l in row.labels.iter_mut() {
            *l = r.gen_bool(0.5);
        }
        n_mutated += 1;
    }
    let a_ok = n_mutated > 0 && fitted_state(&mutated) == base;

    // (b) events after a row's quarter end never change its features
    let mut b_rows = 0;
    let mut b_ok = true;
    for history in group_by_firm(&events).values() {
        for q in panel::build_calendar(history, p.panel_end) {
            let full = compute_features(history, q);
            let cut = compute_features(&history.truncated(q), q);
            b_ok &= full.iter().zip(&cut).all(|(a, b)| a.to_bits() == b.to_bits());
            if let Some(last) = history.rounds.iter().position(|e| e.announced_on > q) {
                let mut h = history.clone();
                h.rounds.remove(last);
                let one = compute_features(&h, q);
                b_ok &= full.iter().zip(&one).all(|(a, b)| a.to_bits() == b.to_bits());
            }
            b_rows += 1;
        }
    }

    // (c) evaluable flags follow quarter_end + h <= panel_end for every row
    let mut c_ok = true;
    let mut c_rows = 0;
    for row in &p.rows {
        for o in Outcome::ALL {
            c_ok &= row.is_evaluable(o) == (add_months(row.quarter_end, o.horizon().months()) <= p.panel_end);
        }
        c_rows += 1;
    }
    let years: std::collections::BTreeSet<i32> = p.rows.iter().map(|r| chrono::Datelike::year(&r.quarter_end)).collect();
    c_ok &= (2010..=2023).all(|y| years.contains(&y));
    // rule table itself, independent of any firm
    for y in 2010..=2023 {
        for m in [3, 6, 9, 12] {
            let q = firmcast::dates::quarter_end_of(ymd(y, m, 1));
            for o in Outcome::ALL {
                let want = add_months(q, o.horizon().months()) <= ymd(2023, 12, 31);
                let evaluable = y <= 2023 - (o.horizon().months() / 12) as i32;
                c_ok &= want == evaluable;
            }
        }
    }

    verdict(
        6,
        "leakage suite",
        a_ok && b_ok && c_ok,
        &format!("(a) {n_mutated} rows mutated, fits identical {a_ok}; (b) {b_rows} rows {b_ok}; (c) {c_rows} rows {c_ok}"),
    );
}

#[test]
fn criterion_07_planted_signal_recovery() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("default");
    let t = Instant::now();
    let status = run_all(&out, &[]);
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    assert_eq!(status, 0, "default run failed");
    let view = open_run(&out);
    let mut pass = minutes <= 15.0;
    let mut detail = vec![format!("{minutes:.1} min")];
    for o in Outcome::ALL {
        let ensemble: Vec<LeaderboardEntry> = view
            .board
            .iter()
            .filter(|e| e.outcome == o && matches!(e.model, ModelKind::Forest | ModelKind::Gbdt))
            .cloned()
            .collect();
        let w = select_winner(&ensemble).expect("ensemble cells trained");
        let ok = w.auroc >= 0.75 && w.pr_auc >= 2.0 * w.base_rate;
        pass &= ok;
        detail.push(format!("{o} {}/{} AUROC {:.3} PR-AUC {:.3} base {:.3}", w.model, w.variant, w.auroc, w.pr_auc, w.base_rate));
        if o == Outcome::Fund12m {
            let model = load_model(&model_path(&out, &w.key())).unwrap();
            let data = zoo::outcome_data(&view.panel, &view.pre, o, &view.selected[&o]).unwrap();
            let opts = ShapOptions { sample_cap: 2000, max_forest_trees: Some(50), seed: 7 };
            let attr = explain::tree_shap(&model, &data.eval_matrix, &opts).unwrap();
            let mean_abs = attr.mean_abs();
            let top3: Vec<&str> = eval::ranking_order(&mean_abs)[..3].iter().map(|&j| attr.feature_names[j].as_str()).collect();
            let has = top3.contains(&"days_since_last_round");
            pass &= has && attr.max_local_error() <= 1e-9;
            detail.push(format!("fund top-3 |SHAP| {top3:?}"));
        }
    }
    verdict(7, "planted-signal recovery", pass, &detail.join("; "));
}

#[test]
fn criterion_08_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sa = run_all(&a, &["--config", cfg.to_str().unwrap(), "--jobs", "1"]);
    let sb = run_all(&b, &["--config", cfg.to_str().unwrap(), "--jobs", "2"]);
    let mut files = vec!["leaderboard.csv".to_string(), "manifest.json".to_string()];
    let mut targets: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("targets_"))
        .collect();
    targets.sort();
    let n_targets = targets.len();
    files.extend(targets);
    let same = files.iter().all(|f| fs::read(a.join(f)).ok().is_some_and(|x| Some(x) == fs::read(b.join(f)).ok()));
    let pass = sa == 0 && sb == 0 && n_targets == 3 && same;
    verdict(8, "determinism", pass, &format!("{} files compared ({n_targets} target lists), byte-identical {same}", files.len()));
}

fn entry(model: ModelKind, variant: resample::ImbalanceKind, pr_auc: f64, auroc: f64) -> LeaderboardEntry {
    LeaderboardEntry {
        outcome: Outcome::Fund12m,
        model,
        variant,
        eval_split: Split::Final,
        n: 1000,
        base_rate: 0.1,
        auroc,
        pr_auc,
        brier: 0.09,
        precision_at: BTreeMap::new(),
    }
}

#[test]
fn criterion_09_selection_rule() {
    let _g = serial();
    use firmcast::resample::ImbalanceKind::*;
    use ModelKind::*;
    let mut pass = true;
    let b = [entry(Forest, Weights, 0.22, 0.70), entry(Gbdt, SmoteNc, 0.18, 0.95)];
    pass &= select_winner(&b).unwrap().model == Forest;
    let b = [entry(Gbdt, Weights, 0.30, 0.81), entry(Forest, Weights, 0.30, 0.79)];
    pass &= select_winner(&b).unwrap().model == Gbdt;
    let b = [entry(Gbdt, Weights, 0.30, 0.79), entry(Forest, Weights, 0.30, 0.81)];
    pass &= select_winner(&b).unwrap().model == Forest;
    let b = [entry(Tree, Weights, 0.3, 0.8), entry(Gbdt, Weights, 0.3, 0.8), entry(Gbdt, SmoteNc, 0.3, 0.8)];
    let w = select_winner(&b).unwrap();
    pass &= (w.model, w.variant) == (Gbdt, SmoteNc);
    // order independence
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut board: Vec<LeaderboardEntry> = Vec::new();
    for m in ModelKind::ALL {
        for v in [Weights, SmoteNc] {
            board.push(entry(m, v, r.gen_range(0..4) as f64 / 10.0, r.gen_range(0..3) as f64 / 10.0));
        }
    }
    let first = select_winner(&board).unwrap().key();
    for _ in 0..50 {
        use rand::seq::SliceRandom;
        board.shuffle(&mut r);
        pass &= select_winner(&board).unwrap().key() == first;
    }
    verdict(9, "selection rule", pass, "strict PR-AUC, AUROC tie-break, name tie-break, order independence");
}

#[test]
fn criterion_10_weight_duplication_equivalence() {
    let _g = serial();
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let n = 80;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| r.gen_range(0..8) as f64).collect()).collect();
    let labels: Vec<bool> = rows.iter().map(|x| r.gen_bool(if x[0] + x[1] > 7.0 { 0.7 } else { 0.2 })).collect();
    let weights: Vec<f64> = (0..n).map(|_| r.gen_range(1..=3) as f64).collect();
    let mut dup_rows = Vec::new();
    let mut dup_labels = Vec::new();
    for i in 0..n {
        for _ in 0..weights[i] as usize {
            dup_rows.push(rows[i].clone());
            dup_labels.push(labels[i]);
        }
    }
    let m = Matrix::with_anonymous_columns(4, &rows).unwrap();
    let d = Matrix::with_anonymous_columns(4, &dup_rows).unwrap();
    let mut cfg = small_learn();
    cfg.tree.min_leaf = 5.0;
    cfg.forest.min_leaf = 5.0;
    cfg.gbdt.min_leaf = 5.0;
    let mut pass = true;
    let mut detail = Vec::new();
    for kind in ModelKind::ALL {
        let a = train(kind, &m, &labels, Some(&weights), &cfg, 3).unwrap();
        let b = train(kind, &d, &dup_labels, None, &cfg, 3).unwrap();
        let ok = match (&a.estimator, &b.estimator) {
            (firmcast::learn::Estimator::Logistic(x), firmcast::learn::Estimator::Logistic(y)) => {
                let delta = x
                    .coefficients
                    .iter()
                    .zip(&y.coefficients)
                    .map(|(p, q)| (p - q).abs())
                    .fold((x.intercept - y.intercept).abs(), f64::max);
                detail.push(format!("logistic |Δ| {delta:e}"));
                delta <= 1e-6
            }
            _ => {
                let same = a.to_bytes().unwrap() == b.to_bytes().unwrap();
                detail.push(format!("{kind} identical {same}"));
                same
            }
        };
        pass &= ok;
    }
    verdict(10, "weight/duplication equivalence", pass, &detail.join(", "));
}
