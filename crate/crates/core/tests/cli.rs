use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nosb::boundary::{Boundary, Interpolation, LatentGrid, TabularBoundary};
use nosb::run::LoadedBoundary;
use tempfile::TempDir;

const BASE: &str = r#"
seed = 3

[market]
spot = [100.0]
rate = 0.05
dividend = [0.1]
vol = [0.2]

[grid]
n_dates = 4

[simulate]
n_paths = 2000

[oracle]
steps_per_interval = 20

[train]
iterations = 5
batch_size = 256
hidden = [8]
eps = 0.5
eval_paths = 5000

[metrics]
modulus_paths = 2000

[convergence]
eps = [0.1]
eps_paths = 5000
paths = [5000]
"#;

fn nosb(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nosb"))
        .args(args)
        .current_dir(dir)
        .env_remove("NOSB_THREADS")
        .output()
        .unwrap()
}

fn run_ok(args: &[&str], dir: &Path) -> Output {
    let out = nosb(args, dir);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// `BASE` with a `key = value` line added to (or replacing one in) `[section]`.
fn with(section: &str, line: &str) -> String {
    let key = line.split('=').next().unwrap().trim();
    let mut out = Vec::new();
    let mut current = String::new();
    let mut done = false;
    for l in BASE.lines() {
        if l.starts_with('[') {
            if current == section && !done {
                out.push(line.to_string());
                done = true;
            }
            current = l.trim_matches(|c| c == '[' || c == ']').to_string();
        }
        if current == section && l.split('=').next().map(str::trim) == Some(key) {
            if !done {
                out.push(line.to_string());
                done = true;
            }
            continue;
        }
        out.push(l.to_string());
    }
    if !done {
        if current != section {
            out.push(format!("[{section}]"));
        }
        out.push(line.to_string());
    }
    out.join("\n")
}

fn headline(dir: &Path) -> BTreeMap<String, String> {
    let mut r = csv::Reader::from_path(dir.join("headline.csv")).unwrap();
    r.records().map(|rec| {
        let rec = rec.unwrap();
        (rec[0].to_string(), rec[1].to_string())
    })
    .collect()
}

fn value(dir: &Path, key: &str) -> f64 {
    headline(dir)[key].parse().unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        // wall clock, and the destination itself
        .filter(|e| !["timing.csv", "resolved_config.toml"].contains(&&*e.file_name().to_string_lossy()))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let cfg = cfg.to_str().unwrap();
    run_ok(&["simulate", "--config", cfg, "--out", "a"], tmp.path());
    run_ok(&["simulate", "--config", cfg, "--out", "b"], tmp.path());
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("b")));
    run_ok(&["simulate", "--config", cfg, "--out", "c", "--seed", "4"], tmp.path());
    assert_ne!(
        fs::read(tmp.path().join("a/path_stats.csv")).unwrap(),
        fs::read(tmp.path().join("c/path_stats.csv")).unwrap()
    );
    // the thread count never changes results
    let out = Command::new(env!("CARGO_BIN_EXE_nosb"))
        .args(["simulate", "--config", cfg, "--out", "d"])
        .current_dir(tmp.path())
        .env("NOSB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(files(&tmp.path().join("a")), files(&tmp.path().join("d")));
}

#[test]
fn zero_vol_paths_have_zero_spread() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", &with("market", "vol = [0.0]"));
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    let (header, rows) = read_csv(&tmp.path().join("o/path_stats.csv"));
    let std_cols: Vec<usize> = header.iter().enumerate().filter(|(_, h)| h.ends_with("_std")).map(|(i, _)| i).collect();
    assert!(std_cols.len() >= 2);
    for row in &rows {
        for &c in &std_cols {
            assert_eq!(row[c].parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn driftless_terminal_mean() {
    let tmp = TempDir::new().unwrap();
    let text = with("market", "rate = 0.0").replace("dividend = [0.1]", "dividend = [0.0]");
    let cfg = write_config(tmp.path(), "c.toml", &with_in(&text, "simulate", "n_paths = 200000"));
    run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    let (header, rows) = read_csv(&tmp.path().join("o/path_stats.csv"));
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let last = rows.last().unwrap();
    let mean: f64 = last[col("alpha_mean")].parse().unwrap();
    let se: f64 = last[col("alpha_stderr")].parse().unwrap();
    assert!((mean - 100.0).abs() < 3.0 * se, "{mean} +- {se}");
    assert_eq!(value(&tmp.path().join("o"), "terminal_alpha_mean"), mean);
}

fn with_in(text: &str, section: &str, line: &str) -> String {
    let key = line.split('=').next().unwrap().trim();
    let header = format!("[{section}]");
    let mut out = Vec::new();
    let mut current = String::new();
    for l in text.lines() {
        if l.starts_with('[') {
            current = l.to_string();
        }
        if current == header && l.split('=').next().map(str::trim) == Some(key) {
            out.push(line.to_string());
        } else {
            out.push(l.to_string());
        }
    }
    out.join("\n")
}

#[test]
fn oracle_single_date_and_brute_force() {
    let tmp = TempDir::new().unwrap();
    let one = with("grid", "n_dates = 1").replace("spot = [100.0]", "spot = [110.0]");
    let cfg = write_config(tmp.path(), "one.toml", &one);
    run_ok(&["oracle", "--config", cfg.to_str().unwrap(), "--out", "one"], tmp.path());
    assert_eq!(value(&tmp.path().join("one"), "oracle_value"), 10.0);

    let three = with_in(&with("grid", "n_dates = 3"), "oracle", "steps_per_interval = 1");
    let cfg = write_config(tmp.path(), "three.toml", &three);
    run_ok(&["oracle", "--config", cfg.to_str().unwrap(), "--out", "three"], tmp.path());
    let dir = tmp.path().join("three");
    assert!((value(&dir, "brute_force_value") - value(&dir, "oracle_value")).abs() <= 1e-12);
    assert!(value(&dir, "brute_force_dp_gap") <= 1e-12);
}

#[test]
fn oracle_boundary_reloads() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    run_ok(&["oracle", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    let path = tmp.path().join("o/oracle_boundary.csv");
    let table = TabularBoundary::load(&path, Interpolation::Nearest).unwrap();
    let loaded = LoadedBoundary::load(&path).unwrap();
    assert_eq!(loaded.n_dates(), 4);
    for d in 0..4 {
        assert_eq!(loaded.value(d, &[1.0]), table.value(d, &[1.0]));
    }
    let mut again = Vec::new();
    table.write_csv(&mut again).unwrap();
    assert_eq!(again, fs::read(&path).unwrap());
}

#[test]
fn train_artifacts_and_round_trip() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    let out = run_ok(&["train", "--config", cfg.to_str().unwrap(), "--out", "a"], tmp.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("value = "));
    let a = tmp.path().join("a");
    for f in ["theta.txt", "train_log.csv", "timing.csv", "trained_boundary.csv", "resolved_config.toml", "summary.json"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let h = headline(&a);
    let gap: f64 = h["gap"].parse().unwrap();
    let oracle: f64 = h["oracle_value"].parse().unwrap();
    let v: f64 = h["value"].parse().unwrap();
    assert_eq!(gap, oracle - v);
    assert_eq!(read_csv(&a.join("train_log.csv")).1.len(), 5);

    run_ok(&["train", "--config", cfg.to_str().unwrap(), "--out", "b"], tmp.path());
    assert_eq!(files(&a), files(&tmp.path().join("b")));

    // the emitted config alone reproduces the run
    let resolved = a.join("resolved_config.toml");
    run_ok(&["train", "--config", resolved.to_str().unwrap(), "--out", "c"], tmp.path());
    assert_eq!(files(&a), files(&tmp.path().join("c")));
}

#[test]
fn summary_matches_headline_bit_for_bit() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BASE);
    run_ok(&["convergence-study", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    let dir = tmp.path().join("o");
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["command"], "convergence-study");
    let h = headline(&dir);
    let json = summary["headline"].as_object().unwrap();
    assert_eq!(json.len(), h.len());
    for (k, v) in json {
        let csv_value: f64 = h[k].parse().unwrap();
        match v.as_f64() {
            Some(x) => assert_eq!(x.to_bits(), csv_value.to_bits(), "{k}"),
            None => assert!(!csv_value.is_finite()),
        }
    }
    let artifacts: Vec<&str> = summary["artifacts"].as_array().unwrap().iter().map(|a| a.as_str().unwrap()).collect();
    for a in &artifacts {
        assert!(dir.join(a).exists(), "{a}");
    }
    // single-width, single-count sweeps
    assert_eq!(read_csv(&dir.join("eps_sweep.csv")).1.len(), 1);
    assert_eq!(read_csv(&dir.join("paths_sweep.csv")).1.len(), 1);
    let (header, rows) = read_csv(&dir.join("eps_sweep.csv"));
    let col = |n: &str| header.iter().position(|x| x == n).unwrap();
    let gap: f64 = rows[0][col("gap")].parse().unwrap();
    let bound: f64 = rows[0][col("bound")].parse().unwrap();
    let se: f64 = rows[0][col("stderr")].parse().unwrap();
    assert!(gap.abs() <= bound + 3.0 * se);
}

#[test]
fn metrics_between_boundary_files() {
    let tmp = TempDir::new().unwrap();
    let grid = LatentGrid::uniform_1d(1.0, 2.0, 21).unwrap();
    let times = vec![0.0, 0.5, 1.0];
    let values: Vec<f64> = (0..63).map(|i| 100.0 + (i as f64 * 0.37).sin()).collect();
    let f = TabularBoundary::new(grid, times, values, Interpolation::Nearest).unwrap();
    f.save(tmp.path().join("f.csv")).unwrap();
    f.map(|v| v + 2.5).save(tmp.path().join("g.csv")).unwrap();
    let text = BASE
        .replace("spot = [100.0]", "spot = [100.0, 100.0]")
        .replace("dividend = [0.1]", "dividend = [0.1, 0.1]")
        .replace("vol = [0.2]", "vol = [0.2, 0.2]")
        .replace("n_dates = 4", "n_dates = 3");
    let text = format!("{text}\n[payoff]\nkind = \"min_call\"\n");
    let cfg = write_config(tmp.path(), "c.toml", &text);
    run_ok(&["metrics", "--config", cfg.to_str().unwrap(), "--out", "o", "f.csv", "f.csv", "g.csv"], tmp.path());
    let dir = tmp.path().join("o");
    let (header, rows) = read_csv(&dir.join("distances.csv"));
    let col = |n: &str| header.iter().position(|x| x == n).unwrap();
    for row in &rows {
        let sup: f64 = row[col("sup")].parse().unwrap();
        let hd: f64 = row[col("hausdorff")].parse().unwrap();
        if row[col("left")] == row[col("right")] {
            assert_eq!((sup, hd), (0.0, 0.0));
        } else if row[col("left")].contains("g.csv") || row[col("right")].contains("g.csv") {
            assert!((sup - 2.5).abs() < 1e-12);
        }
    }
    let (header, rows) = read_csv(&dir.join("profiles.csv"));
    let col = |n: &str| header.iter().position(|x| x == n).unwrap();
    let mut seen = 0;
    for row in &rows {
        let v: f64 = row[col("value")].parse().unwrap();
        let pair = (row[col("left")].contains("g.csv"), row[col("right")].contains("g.csv"));
        if pair.0 != pair.1 {
            assert!((v - 2.5).abs() < 1e-12);
            seen += 1;
        } else {
            assert_eq!(v, 0.0);
        }
    }
    assert!(seen > 0);
    assert!(dir.join("regularization.csv").exists());
    assert!(dir.join("modulus.csv").exists());
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    let bad = write_config(tmp.path(), "bad.toml", &format!("{BASE}\nunknown_key = 1\n"));
    assert_eq!(nosb(&["simulate", "--config", bad.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    let neg = write_config(tmp.path(), "neg.toml", &with("market", "vol = [-0.2]"));
    assert_eq!(nosb(&["oracle", "--config", neg.to_str().unwrap()], tmp.path()).status.code(), Some(2));
    assert_eq!(nosb(&["bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(nosb(&["simulate", "--config", "missing.toml"], tmp.path()).status.code(), Some(4));

    fs::write(tmp.path().join("plain"), "x").unwrap();
    let ok = write_config(tmp.path(), "ok.toml", BASE);
    let code = nosb(&["simulate", "--config", ok.to_str().unwrap(), "--out", "plain/sub"], tmp.path()).status.code();
    assert_eq!(code, Some(4));

    let diverge = BASE.replace("eps = 0.5", "eps = 0.5\ndivergence_threshold = 1e-12\ndivergence_patience = 1");
    let cfg = write_config(tmp.path(), "div.toml", &diverge);
    assert_eq!(nosb(&["train", "--config", cfg.to_str().unwrap(), "--out", "d"], tmp.path()).status.code(), Some(3));

    let out = Command::new(env!("CARGO_BIN_EXE_nosb"))
        .args(["simulate", "--config", ok.to_str().unwrap(), "--out", "t"])
        .current_dir(tmp.path())
        .env("NOSB_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
