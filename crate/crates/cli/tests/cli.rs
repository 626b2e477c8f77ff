use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ifest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifest"))
        .args(args)
        .env("IFEST_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn gen(dir: &Path, name: &str, dist: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let o = ifest(&[
        "gen",
        "--dist",
        dist,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    path
}

#[test]
fn gen_is_deterministic_and_in_range() {
    let a = ifest(&["gen", "--dist", "uniform", "--n", "5", "--seed", "7"]);
    let b = ifest(&["gen", "--dist", "uniform", "--n", "5", "--seed", "7"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);

    let o = ifest(&["gen", "--dist", "f1xuniform", "--n", "100"]);
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 100);
    assert!(rows.iter().all(|r| r.len() == 2 && r.iter().all(|v| (0.0..=1.0).contains(v))));

    assert_eq!(code(&ifest(&["gen", "--dist", "nonsense", "--n", "5"])), 2);
}

#[test]
fn estimate_entropy_of_uniform() {
    let dir = TempDir::new().unwrap();
    let u = gen(dir.path(), "u.csv", "uniform", 2000, 1);
    let o = ifest(&[
        "estimate",
        "--functional",
        "shannon_entropy",
        "--x",
        u.to_str().unwrap(),
        "--method",
        "loo",
        "--seed",
        "1",
        "--json",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!(value.abs() <= 0.05, "{value}");
    assert_eq!(v["method"], "loo");
    assert_eq!(v["functional"], "shannon_entropy");
    assert!(v["ci"].is_array());
    assert_eq!(v["seed"], 1);
}

#[test]
fn estimate_exit_codes() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "a.csv", "f2", 200, 2);
    let a = a.to_str().unwrap();

    let o = ifest(&["estimate", "--functional", "kl", "--x", a]);
    assert_eq!(code(&o), 3);

    let o = ifest(&["estimate", "--functional", "tsallis_div", "--alpha", "1", "--x", a, "--y", a]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpha must not be 0 or 1"));

    let o = ifest(&["estimate", "--functional", "hellinger", "--x", a, "--y", a, "--ci", "0.9"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("DEGENERATE"));

    let missing = dir.path().join("missing.csv");
    let o = ifest(&["estimate", "--functional", "shannon_entropy", "--x", missing.to_str().unwrap()]);
    assert_eq!(code(&o), 2);

    assert_eq!(code(&ifest(&["estimate", "--functional", "bogus", "--x", a])), 2);
    assert_eq!(code(&ifest(&["estimate"])), 2);
}

#[test]
fn estimate_rescales_out_of_range_data() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("wide.csv");
    let data: String = (0..300).map(|i| format!("{}\n", (i as f64 * 0.37).sin() * 10.0)).collect();
    std::fs::write(&path, data).unwrap();
    let p = path.to_str().unwrap();
    let o = ifest(&["estimate", "--functional", "shannon_entropy", "--x", p]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--rescale"));
    let o = ifest(&["estimate", "--functional", "shannon_entropy", "--x", p, "--rescale"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn bench_row_contract() {
    let o = ifest(&[
        "bench",
        "--functional",
        "shannon_entropy",
        "--dist",
        "f1",
        "--n-list",
        "50,100",
        "--trials",
        "2",
        "--seed",
        "3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "functional,method,n,m,trial,estimate,truth,abs_error,seconds");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    for method in ["ds", "loo", "plugin"] {
        assert_eq!(rows.iter().filter(|r| r[1] == method).count(), 4);
    }
    assert!(rows.iter().all(|r| r[0] == "shannon_entropy" && r[3] == "0" && r[8] == "0"));

    let o = ifest(&["bench", "--functional", "shannon_entropy", "--dist", "f1", "--trials", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn qq_single_trial_and_degenerate_pair() {
    let o = ifest(&[
        "qq",
        "--functional",
        "kl",
        "--dist",
        "f2",
        "--dist2",
        "uniform",
        "--n",
        "200",
        "--trials",
        "1",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].split(',').any(|c| c == "z"));

    let o = ifest(&[
        "qq",
        "--functional",
        "tsallis_div",
        "--alpha",
        "0.75",
        "--dist",
        "f2",
        "--dist2",
        "f2",
        "--n",
        "100",
        "--trials",
        "2",
    ]);
    assert_eq!(code(&o), 4);
}

fn matrix(o: &Output) -> Vec<Vec<f64>> {
    stdout(o)
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn affinity_examples() {
    let dir = TempDir::new().unwrap();
    let f = gen(dir.path(), "f.csv", "f2", 1000, 4);
    let u = gen(dir.path(), "u.csv", "uniform", 1000, 5);
    let (f, u) = (f.to_str().unwrap(), u.to_str().unwrap());

    let same = ifest(&["affinity", "--inputs", &format!("{f},{f}")]);
    assert_eq!(code(&same), 0, "{}", String::from_utf8_lossy(&same.stderr));
    let a = matrix(&same);
    assert!((0.9..=1.0).contains(&a[0][1]), "{}", a[0][1]);

    let o = ifest(&["affinity", "--inputs", &format!("{f},{u}")]);
    let a = matrix(&o);
    assert_eq!(a[0][0], 1.0);
    assert_eq!(a[0][1], a[1][0]);
    assert!(a[0][1] < 1.0, "{}", a[0][1]);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0.1\nnot-a-number\n").unwrap();
    let o = ifest(&["affinity", "--inputs", &format!("{f},{}", bad.to_str().unwrap())]);
    assert_eq!(code(&o), 2);
    let o = ifest(&["affinity", "--inputs", &format!("{f},{}", dir.path().join("none.csv").display())]);
    assert_eq!(code(&o), 2);
}
