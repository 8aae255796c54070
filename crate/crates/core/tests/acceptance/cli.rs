use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;

use firmcast::cli::run_command;
use firmcast::zoo::{LeaderboardEntry, Manifest};

const BIN: &str = env!("CARGO_BIN_EXE_firmcast");

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn help(args: &[&str]) -> String {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn help_matches_golden_files() {
    let _g = crate::serial();
    assert_eq!(help(&["--help"]), golden("help.txt"));
    let all = help(&["all", "--help"]);
    assert_eq!(all, golden("help_all.txt"));
    for flag in ["--config", "--out", "--input", "--seed", "--panel-end", "--outcome", "--variant", "--model", "--n-firms", "--jobs", "--help"] {
        assert!(all.contains(flag), "{flag} missing from help");
    }
}

#[test]
fn usage_errors_exit_two() {
    let _g = crate::serial();
    assert_eq!(run_command(["firmcast", "train", "--bogus"]), 2);
    assert_eq!(run_command(["firmcast", "frobnicate"]), 2);
    assert_eq!(run_command(["firmcast", "train", "--model", "svm"]), 2);
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> T {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn step_by_step_single_cell() {
    let _g = crate::serial();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 5\n[synth]\nn_firms = 400\n[learn.forest]\nn_trees = 20\n").unwrap();
    let c = cfg.to_str().unwrap();

    assert_eq!(run_command(["firmcast", "score", "--config", c, "--out", o]), 1);

    for step in ["synth", "prepare", "screen", "resample"] {
        assert_eq!(run_command(["firmcast", step, "--config", c, "--out", o]), 0, "{step}");
    }
    assert_eq!(run_command(["firmcast", "score", "--config", c, "--out", o]), 1);

    let train = ["firmcast", "train", "--config", c, "--out", o, "--outcome", "exit_36m", "--variant", "weights", "--model", "forest"];
    assert_eq!(run_command(train), 0);
    let board: Vec<LeaderboardEntry> = read(&out.join("leaderboard.json"));
    assert_eq!(board.len(), 1);
    assert_eq!(board[0].eval_split.as_str(), "Holdout");
    assert!(out.join("train_exit_36m_weights_forest_model.bin").is_file());

    let manifest: Manifest = read(&out.join("manifest.json"));
    assert_eq!(manifest.seed, 5);
    assert_eq!(manifest.leaderboard.len(), 1);
    let mut listed: BTreeSet<String> = manifest.outputs.keys().cloned().collect();
    listed.insert("manifest.json".into());
    assert_eq!(listed, files_under(&out));
    assert_eq!(manifest.inputs.len(), 4);

    // Retraining the same cell replaces its entry rather than duplicating it.
    assert_eq!(run_command(train), 0);
    let board: Vec<LeaderboardEntry> = read(&out.join("leaderboard.json"));
    assert_eq!(board.len(), 1);

    let scoped = ["--config", c, "--out", o, "--outcome", "exit_36m"];
    for step in ["evaluate", "explain", "score"] {
        let mut argv = vec!["firmcast", step];
        argv.extend(scoped);
        assert_eq!(run_command(argv), 0, "{step}");
    }
    assert!(out.join("targets_exit_36m_2020.csv").is_file());
    let manifest: Manifest = read(&out.join("manifest.json"));
    assert_eq!(manifest.cohorts.values().copied().collect::<Vec<_>>(), vec![2020]);
}

#[test]
fn seed_comes_from_flag_then_environment() {
    let _g = crate::serial();
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str, extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(BIN);
        cmd.args(["synth", "--n-firms", "30", "--out"]).arg(dir.path().join(out)).args(extra);
        cmd.env_remove("VS_SEED").env("RUST_LOG", "off");
        if let Some(v) = env {
            cmd.env("VS_SEED", v);
        }
        assert!(cmd.status().unwrap().success());
        let m: Manifest = read(&dir.path().join(out).join("manifest.json"));
        m
    };
    assert_eq!(run("a", &[], None).seed, 7);
    let env = run("b", &[], Some("13"));
    assert_eq!(env.seed, 13);
    assert_eq!(run("c", &["--seed", "21"], Some("13")).seed, 21);

    let again = run("d", &[], Some("13"));
    assert_eq!(env, again);
    let other = run("e", &[], Some("14"));
    assert_ne!(env.outputs, other.outputs);
    assert_eq!(env.outputs.keys().collect::<Vec<_>>(), other.outputs.keys().collect::<Vec<_>>());
}

#[test]
fn bad_config_is_a_contract_error() {
    let _g = crate::serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = dir.path().join("o");
    assert_eq!(run_command(["firmcast", "synth", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 1);
    assert_eq!(run_command(["firmcast", "synth", "--panel-end", "2023-11-30", "--out", out.to_str().unwrap()]), 1);
}
