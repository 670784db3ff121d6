use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn salsa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_salsa"))
        .current_dir(dir)
        .env_remove("SALSA_THREADS")
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    let tok = text
        .split_whitespace()
        .find_map(|t| t.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"));
    tok.parse().unwrap()
}

#[test]
fn synth_writes_files_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["synth", "--gen", "bumps-additive", "--D", "15", "--d", "3", "--n", "500", "--seed", "1", "--out", "a.csv"];
    let o = salsa(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n=500 D=15"));
    let first = fs::read(dir.path().join("a.csv")).unwrap();
    let meta = fs::read_to_string(dir.path().join("a.csv.meta")).unwrap();
    assert!(meta.contains("seed=1") && meta.contains("rng=splitmix64-rowstream-v1"));
    let o = salsa(dir.path(), &args);
    assert!(o.status.success());
    assert_eq!(first, fs::read(dir.path().join("a.csv")).unwrap());
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("# meta: "));
    assert_eq!(text.lines().count(), 502);
}

#[test]
fn synth_spam_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["synth", "--gen", "spam-setting2", "--n", "60", "--seed", "7", "--out", "s.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let header = csv.lines().nth(1).unwrap();
    assert_eq!(header.split(',').count(), 51);
    let truth = fs::read_to_string(dir.path().join("s.csv.truth")).unwrap();
    let groups: Vec<&str> = truth.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(groups, vec!["0", "1", "2", "3", "4 5", "6 7", "8 9", "10 11"]);
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["synth", "--gen", "bumps-additive", "--D", "5", "--d", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--n"));
    let o = salsa(dir.path(), &["synth", "--gen", "nope", "--n", "5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--gen"));
    let o = salsa(dir.path(), &["diag", "--s", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = salsa(dir.path(), &["bench", "--D-grid", "4", "--d-grid", "8"]);
    assert_eq!(o.status.code(), Some(2));
}

fn make_data(dir: &Path, n: &str) {
    let o = salsa(dir, &["synth", "--gen", "bumps-additive", "--D", "4", "--d", "2", "--n", n, "--seed", "3", "--noise", "0.5", "--out", "train.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn fit_then_predict_reproduces_training_mse() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path(), "80");
    let o = salsa(dir.path(), &["fit", "--data", "train.csv", "--d", "2", "--lambda", "1e-3", "--model", "m.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let train_mse = field(&stdout(&o), "train_mse");
    let o = salsa(dir.path(), &["predict", "--model", "m.txt", "--data", "train.csv", "--target", "y", "--out", "p.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pred_mse = field(&stdout(&o), "mse");
    assert!((pred_mse - train_mse).abs() <= 1e-10 * (1.0 + train_mse));
    let p = fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert_eq!(p.lines().nth(1), Some("prediction"));
    assert_eq!(p.lines().count(), 82);

    // feature-only file with the wrong width
    fs::write(dir.path().join("bad.csv"), "a,b\n1,2\n").unwrap();
    let o = salsa(dir.path(), &["predict", "--model", "m.txt", "--data", "bad.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"));
}

#[test]
fn saved_model_predicts_identically_twice() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path(), "50");
    let o = salsa(dir.path(), &["fit", "--data", "train.csv", "--d", "2", "--lambda", "1e-2", "--model", "m.txt"]);
    assert!(o.status.success());
    for out in ["p1.csv", "p2.csv"] {
        let o = salsa(dir.path(), &["predict", "--model", "m.txt", "--data", "train.csv", "--target", "y", "--out", out]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(dir.path().join("p1.csv")).unwrap(), fs::read(dir.path().join("p2.csv")).unwrap());
    let m = fs::read_to_string(dir.path().join("m.txt")).unwrap();
    assert!(m.starts_with("salsa-model\nformat_version 1\n"));
}

#[test]
fn cv_report_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path(), "60");
    let args = ["cv", "--data", "train.csv", "--folds", "3", "--seed", "4", "--grid-size", "5", "--out", "r1.csv"];
    let o = salsa(dir.path(), &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let evaluated = out.split("evaluated_orders=[").nth(1).unwrap().split(']').next().unwrap();
    let n_orders = evaluated.split(',').count();
    let report = fs::read_to_string(dir.path().join("r1.csv")).unwrap();
    assert_eq!(report.lines().count(), 2 + 5 * n_orders);
    let mut args2 = args;
    args2[10] = "r2.csv";
    assert!(salsa(dir.path(), &args2).status.success());
    assert_eq!(report, fs::read_to_string(dir.path().join("r2.csv")).unwrap());

    let o = salsa(dir.path(), &["cv", "--data", "train.csv", "--folds", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags_and_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "gen=bumps-additive\nD=4\nd=2\nn=30\nseed=9\nout=c.csv\n").unwrap();
    let o = salsa(dir.path(), &["--config", "run.cfg", "synth", "--n", "40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("n=40 D=4"));
    fs::write(dir.path().join("bad.cfg"), "gen=bumps-additive\nwat=1\nn=3\n").unwrap();
    let o = salsa(dir.path(), &["--config", "bad.cfg", "synth"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn diag_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["diag", "--kind", "polynomial", "--s", "2", "--d", "2", "--out", "poly.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let band = field(&stdout(&o), "band_factor");
    assert!((1.0..=3.0).contains(&band));
    let t = fs::read_to_string(dir.path().join("poly.csv")).unwrap();
    assert!(t.lines().nth(1).unwrap().contains("ratio"));

    let o = salsa(dir.path(), &["diag", "--kind", "gaussian", "--out", "g.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    for line in t.lines().skip(2) {
        let cells: Vec<&str> = line.split(',').collect();
        let n: f64 = cells[0].parse().unwrap();
        let lambda: f64 = cells[1].parse().unwrap();
        assert_eq!(lambda, 1.0 / n);
    }
}

#[test]
fn shrink_solvers_agree_and_report_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["synth", "--gen", "spam-setting2", "--n", "80", "--seed", "2", "--out", "s.csv"]);
    assert!(o.status.success());
    let common = ["shrink", "--data", "s.csv", "--groups", "singletons", "--lambda1", "0.01", "--lambda2", "5", "--tol", "1e-10", "--max-iter", "20000"];
    let mut a: Vec<&str> = common.to_vec();
    a.extend(["--solver", "proxgrad", "--accel", "--out-trace", "t1.csv"]);
    let o = salsa(dir.path(), &a);
    assert!(o.status.success(), "{}", stderr(&o));
    let f1 = field(&stdout(&o), "objective");
    let mut b: Vec<&str> = common.to_vec();
    b.extend(["--solver", "bcgd", "--out-trace", "t2.csv"]);
    let o = salsa(dir.path(), &b);
    assert!(o.status.success(), "{}", stderr(&o));
    let f2 = field(&stdout(&o), "objective");
    assert!((f1 - f2).abs() <= 1e-4 * f1.abs(), "{f1} vs {f2}");

    let o = salsa(dir.path(), &["shrink", "--data", "s.csv", "--groups", "screened", "--decoys", "10", "--truth", "s.csv.truth", "--path", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.contains("tpr=")).count(), 4);

    let o = salsa(dir.path(), &["shrink", "--data", "s.csv", "--solver", "newton", "--lambda2", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shrink_strict_iteration_limit_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["synth", "--gen", "spam-setting2", "--n", "40", "--seed", "5", "--out", "s.csv"]);
    assert!(o.status.success());
    let base = ["shrink", "--data", "s.csv", "--groups", "singletons", "--lambda2", "0.5", "--solver", "subgradient", "--max-iter", "3"];
    let o = salsa(dir.path(), &base);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    let mut strict = base.to_vec();
    strict.push("--strict");
    assert_eq!(salsa(dir.path(), &strict).status.code(), Some(3));
}

#[test]
fn bench_single_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = salsa(dir.path(), &["bench", "--n-grid", "30", "--D-grid", "8", "--d-grid", "2", "--reps", "1", "--calls", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let t = fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    assert_eq!(t.lines().count(), 3);
}

#[test]
fn threads_flag_and_env_do_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    make_data(dir.path(), "40");
    let o = salsa(dir.path(), &["--threads", "2", "fit", "--data", "train.csv", "--d", "2", "--lambda", "1e-3", "--model", "a.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_salsa"))
        .current_dir(dir.path())
        .env("SALSA_THREADS", "3")
        .args(["fit", "--data", "train.csv", "--d", "2", "--lambda", "1e-3", "--model", "b.txt"])
        .output()
        .unwrap();
    assert!(o.status.success());
    let o = salsa(dir.path(), &["fit", "--data", "train.csv", "--d", "2", "--lambda", "1e-3", "--model", "c.txt"]);
    assert!(o.status.success());
    let a = fs::read(dir.path().join("a.txt")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.txt")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("c.txt")).unwrap());
}
