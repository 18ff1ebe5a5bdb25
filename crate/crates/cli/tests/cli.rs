use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sumprod_cli::commands::RunReport;
use sumprod_cli::RunManifest;
use sumprod_core::experiments::{self, SweepReport};
use sumprod_core::{Executor, ModelKind};

fn sumprod(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sumprod"))
        .args(args)
        .env("SUMPROD_OUT_DIR", dir)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    entries.sort();
    entries
}

#[test]
fn run_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = sumprod(
        dir.path(),
        &["run", "--model", "sumprod", "--n", "10", "--k", "5", "--dist", "r:10", "--q", "2000", "--seed", "42", "--out", "json"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: RunReport = serde_json::from_slice(&fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!((report.config.n, report.config.k, report.config.q, report.config.seed), (10, 5, 2000, 42));
    assert_eq!(report.row.n, 2000);
    let manifest = RunManifest::from_json(&fs::read_to_string(dir.path().join("run.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.scenario, report.config);
    assert_eq!(manifest.outputs, vec!["run.json".to_string()]);
    assert_eq!(manifest.timestamp, "2023-11-14T22:13:20Z");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&sumprod(p, &["run", "--no-such-flag"])), 2);
    assert_eq!(code(&sumprod(p, &["frobnicate"])), 2);
    assert_eq!(code(&sumprod(p, &["--help"])), 0);

    let bad = sumprod(p, &["run", "--dist", "beta:0,-1", "--q", "10"]);
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("`A`"), "{}", stderr(&bad));
    assert_eq!(code(&sumprod(p, &["run", "--n", "ten"])), 3);
    assert_eq!(code(&sumprod(p, &["run", "--model", "prod", "--n", "3", "--m", "4", "--q", "10"])), 3);
    assert_eq!(code(&sumprod(p, &["run", "--threads", "0", "--q", "10"])), 3);
    assert_eq!(code(&sumprod(p, &["reproduce", "fig9", "--calibrate"])), 2);

    let cfg = p.join("bad.conf");
    fs::write(&cfg, "q = 10\ncolour = red\n").unwrap();
    assert_eq!(code(&sumprod(p, &["run", "--config", cfg.to_str().unwrap()])), 2);
    assert_eq!(code(&sumprod(p, &["run", "--config", p.join("missing.conf").to_str().unwrap()])), 4);

    let blocker = p.join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("sub");
    assert_eq!(code(&sumprod(p, &["run", "--q", "10", "--out-dir", out.to_str().unwrap()])), 4);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "# small run\nmodel = prod\nn = 4\nk = 2\nq = 300\nout = json\n").unwrap();
    let out = sumprod(dir.path(), &["run", "--config", cfg.to_str().unwrap(), "--k", "3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: RunReport = serde_json::from_slice(&fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(report.config.model, ModelKind::Prod);
    assert_eq!((report.config.n, report.config.k, report.config.q), (4, 3, 300));
}

#[test]
fn reruns_and_thread_counts_are_byte_identical() {
    let cases: [&[&str]; 3] = [
        &["sweep", "--vary", "n", "--values", "3,6", "--k", "2", "--q", "400", "--seed", "9", "--dist", "l:1,1"],
        &["reproduce", "fig7", "--q", "300", "--seed", "4"],
        &["run", "--model", "cluster", "--n", "6", "--clusters", "2,4", "--q", "500", "--cdf"],
    ];
    for args in cases {
        let outputs: Vec<_> = ["1", "1", "8"]
            .iter()
            .map(|threads| {
                let dir = tempfile::tempdir().unwrap();
                let mut full = args.to_vec();
                full.extend(["--threads", threads]);
                let out = sumprod(dir.path(), &full);
                assert_eq!(code(&out), 0, "{}", stderr(&out));
                files(dir.path())
            })
            .collect();
        assert!(!outputs[0].is_empty());
        assert_eq!(outputs[0], outputs[1], "rerun differs for {args:?}");
        assert_eq!(outputs[0], outputs[2], "thread count changes output for {args:?}");
    }
}

#[test]
fn table2_shape_and_manifest_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let out = sumprod(dir.path(), &["reproduce", "table2", "--seed", "1", "--out", "csv", "--q", "200"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "model,dist,param_name,param_value,std_db,ks,n,seed");
    assert_eq!(lines.len(), 31);

    let manifest = RunManifest::from_json(&fs::read_to_string(dir.path().join("table2.manifest.json")).unwrap()).unwrap();
    let grid = manifest.grid.clone().expect("sweep manifest has a grid");
    assert_eq!(grid.values, vec![1, 5, 10, 20, 40]);
    assert_eq!(manifest.master_seed, 1);
    let report = experiments::sweep(&manifest.scenario, grid, &Executor::sequential()).unwrap();
    assert_eq!(report.rows.len(), 30);
    for (line, row) in lines[1..].iter().zip(&report.rows) {
        let formatted = format!("{:.6},{:.6}", row.std_db, row.ks);
        assert!(line.contains(&formatted), "{line} vs {formatted}");
    }
}

#[test]
fn json_report_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = sumprod(dir.path(), &["reproduce", "fig9", "--ks", "1,3", "--q", "200", "--out", "json", "--seed", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let parsed: SweepReport = serde_json::from_slice(&fs::read(dir.path().join("fig9.json")).unwrap()).unwrap();
    let base = experiments::distribution_sweep_base(5).with_q(200);
    let expected = experiments::sweep_distributions(&base, &experiments::distribution_grid(), &[1, 3], &Executor::sequential())
        .unwrap();
    assert_eq!(parsed, expected);
}

#[test]
fn calibration_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = sumprod(dir.path(), &["reproduce", "table3", "--q", "100", "--calibrate", "--calibration-q", "100"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("table3_calibration.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert_eq!(text.lines().filter(|l| l.contains(",true,")).count(), 1);
    let manifest = RunManifest::from_json(&fs::read_to_string(dir.path().join("table3.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.outputs, vec!["table3.csv".to_string(), "table3_calibration.csv".to_string()]);
    assert_eq!(manifest.scenario.k, 5);
}
