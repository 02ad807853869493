use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use upsa_core::data::read_returns_csv;
use upsa_core::report::{
    read_cumulative, read_mcs, read_sharpe_series, read_summary, read_sweep, read_tests,
    read_weights,
};
use upsa_core::LoadOptions;

fn upsa(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upsa"))
        .args(args)
        .current_dir(cwd)
        .env_remove("UPSA_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_panel(dir: &Path, n: usize, months: usize, seed: u64) -> PathBuf {
    let out = upsa(
        &[
            "synth",
            "--n",
            &n.to_string(),
            "--months",
            &months.to_string(),
            "--drift",
            "0.02",
            "--seed",
            &seed.to_string(),
            "--output",
            "panel.csv",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    dir.join("panel.csv")
}

fn open(dir: &Path, name: &str) -> File {
    File::open(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_reader(open(dir, "manifest.json")).unwrap()
}

#[test]
fn backtest_writes_every_artifact_and_they_parse() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 6, 110, 4);
    let out = upsa(
        &[
            "backtest",
            "--data",
            "panel.csv",
            "--t-is",
            "24",
            "--grid-n",
            "6",
            "--out",
            "run",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let run = dir.join("run");

    let summary = read_summary(open(&run, "summary.csv")).unwrap();
    let names: Vec<&str> = summary.iter().map(|r| r.estimator.as_str()).collect();
    assert_eq!(names, ["UPSA", "AvgUPSA", "AO", "UPSA-AO", "AvgUPSA-AO"]);
    let n_dates = summary[0].n_dates;
    assert!(n_dates > 30);

    let sharpe = read_sharpe_series(open(&run, "sharpe_series.csv")).unwrap();
    assert_eq!(sharpe.len(), 5 * n_dates);
    for name in ["UPSA", "AvgUPSA", "UPSA-AO", "AvgUPSA-AO"] {
        let (dates, w) = read_weights(open(&run, &format!("weights_{name}.csv"))).unwrap();
        assert_eq!((dates.len(), w.nrows(), w.ncols()), (n_dates, n_dates, 6));
    }
    assert!(!run.join("weights_AO.csv").exists());
    assert_eq!(read_tests(open(&run, "tests.csv")).unwrap().len(), 7);
    let mcs = read_mcs(open(&run, "mcs.csv")).unwrap();
    assert_eq!(mcs.len(), 5);
    assert!(mcs.iter().any(|r| r.survivor));
    assert!(!read_cumulative(open(&run, "cumulative_returns.csv"))
        .unwrap()
        .is_empty());

    let m = manifest(&run);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["command"], "backtest");
    assert_eq!(m["config"]["t_is"], 24);
    assert_eq!(m["dataset"]["sha256"].as_str().unwrap().len(), 64);
    let files: Vec<&str> = m["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f.as_str().unwrap())
        .collect();
    for f in &files {
        assert!(run.join(f).exists(), "{f}");
    }
    assert!(files.contains(&"summary.csv") && files.contains(&"mcs.csv"));
}

#[test]
fn single_estimator_gives_single_summary_row() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 5, 90, 1);
    let out = upsa(
        &[
            "backtest",
            "--data",
            "panel.csv",
            "--t-is",
            "24",
            "--estimators",
            "ao",
            "--out",
            "o",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = read_summary(open(&dir.join("o"), "summary.csv")).unwrap();
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0].estimator, "AO");
    assert_eq!(summary[0].weight_turnover, None);
}

#[test]
fn oracle_cache_is_reused_with_identical_results() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 5, 90, 2);
    let run = |out: &str| {
        let o = upsa(
            &[
                "backtest",
                "--data",
                "panel.csv",
                "--t-is",
                "24",
                "--grid-n",
                "4",
                "--estimators",
                "ao,upsa-ao",
                "--oracle-cache",
                "cache",
                "--out",
                out,
            ],
            dir,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(dir.join(out).join("sharpe_series.csv")).unwrap()
    };
    let first = run("a");
    assert_eq!(std::fs::read_dir(dir.join("cache")).unwrap().count(), 1);
    let second = run("b");
    assert_eq!(first, second);
    let notes = manifest(&dir.join("b"))["notes"].to_string();
    assert!(notes.contains("read from"), "{notes}");
}

#[test]
fn missing_data_file_exits_3_and_names_the_path() {
    let tmp = tempfile::tempdir().unwrap();
    let out = upsa(
        &["backtest", "--data", "no_such_panel.csv", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("no_such_panel.csv"));
    assert_eq!(manifest(&tmp.path().join("o"))["status"], "failed");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 4, 60, 0);
    for args in [
        vec!["sweep", "--data", "panel.csv", "--grid-lo", ""],
        vec!["sweep", "--data", "panel.csv", "--window", ""],
        vec!["backtest", "--data", "panel.csv", "--estimators", "bogus"],
        vec!["backtest", "--data", "panel.csv", "--t-oos", "1"],
        vec!["backtest", "--data", "panel.csv", "--grid-lo", "1.0"],
        vec!["backtest", "--data", "panel.csv", "--mcs-alpha", "1.5"],
        vec!["backtest", "--data", "panel.csv", "--eval-start", "1990"],
        vec!["backtest", "--data", "panel.csv", "--threads", "0"],
        vec!["synth", "--n", "1", "--months", "100"],
        vec!["synth", "--n", "4", "--months", "10"],
        vec!["backtest"],
        vec!["sweep", "--data", "panel.csv"],
    ] {
        let out = upsa(&args, dir);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn config_file_is_read_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 4, 80, 5);
    std::fs::write(
        dir.join("run.toml"),
        "t_is = 36\nestimators = [\"sample\", \"ao\"]\nout_dir = \"from_file\"\n",
    )
    .unwrap();
    let out = upsa(
        &[
            "backtest",
            "--data",
            "panel.csv",
            "--config",
            "run.toml",
            "--t-is",
            "24",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(&dir.join("from_file"));
    assert_eq!(m["config"]["t_is"], 24);
    let summary = read_summary(open(&dir.join("from_file"), "summary.csv")).unwrap();
    assert_eq!(summary.len(), 2);
    assert_eq!(summary[0].estimator, "SampleCov");
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 4, 70, 6);
    let out = Command::new(env!("CARGO_BIN_EXE_upsa"))
        .args([
            "backtest",
            "--data",
            "panel.csv",
            "--t-is",
            "24",
            "--estimators",
            "sample",
        ])
        .current_dir(dir)
        .env("UPSA_OUT_DIR", "env_out")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.join("env_out").join("summary.csv").exists());
}

#[test]
fn window_sweep_expands_inclusive_range() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 4, 100, 7);
    let out = upsa(
        &[
            "sweep",
            "--data",
            "panel.csv",
            "--window",
            "24..48:12",
            "--estimators",
            "sample,ao",
            "--out",
            "s",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = read_sweep(open(&dir.join("s"), "sweep_window.csv")).unwrap();
    assert_eq!(table.values, vec![24.0, 36.0, 48.0]);
    assert_eq!(table.n_dates[0], table.n_dates[1] + 12);
    assert_eq!(table.estimators, ["SampleCov", "AO"]);
}

#[test]
fn grid_sweep_writes_named_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    synth_panel(dir, 4, 80, 8);
    let out = upsa(
        &[
            "sweep",
            "--data",
            "panel.csv",
            "--t-is",
            "24",
            "--grid-n",
            "4",
            "--estimators",
            "upsa,ao",
            "--grid-lo",
            "1e-8,1e-4",
            "--name",
            "lo",
            "--out",
            "s",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let table = read_sweep(open(&dir.join("s"), "sweep_lo.csv")).unwrap();
    assert_eq!(table.values, vec![1e-8, 1e-4]);
    let ao = table.column("AO").unwrap();
    assert_eq!(ao[0], ao[1]);
}

#[test]
fn synth_is_deterministic_and_loadable() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let a = std::fs::read(synth_panel(dir, 7, 50, 9)).unwrap();
    let b = std::fs::read(synth_panel(dir, 7, 50, 9)).unwrap();
    assert_eq!(a, b);
    let loaded = read_returns_csv(a.as_slice(), &LoadOptions::default()).unwrap();
    assert_eq!((loaded.panel.len(), loaded.panel.n_assets()), (50, 7));
    let m: serde_json::Value = serde_json::from_reader(open(dir, "panel.manifest.json")).unwrap();
    assert_eq!(m["status"], "complete");
    assert_eq!(m["config"]["n"], 7);
}
