use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fearh(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fearh"))
        .args(args)
        .current_dir(dir)
        .env_remove("FEARH_SEED")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

// Small, fast synthetic problem.
const SMALL: &[&str] = &[
    "--synthetic", "--samples", "400", "--features", "12", "--owners", "3",
    "--max-cycles", "4", "--threads", "2",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL.iter().copied()).collect()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_data_writes_requested_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["gen-data", "--samples", "200", "--features", "7", "--seed", "5"];
    assert_eq!(code(&fearh(&[&args[..], &["--output", "a.csv"]].concat(), dir.path())), 0);
    assert_eq!(code(&fearh(&[&args[..], &["--output", "b.csv"]].concat(), dir.path())), 0);
    let a = std::fs::read_to_string(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 201);
    assert_eq!(a.lines().next().unwrap().split(',').count(), 8);
    assert!(a.lines().next().unwrap().ends_with(",label"));
}

#[test]
fn gen_data_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fearh(&["gen-data", "--prevalence", "1.5"], dir.path())), 2);
    let out = fearh(&["gen-data", "--samples", "10", "--output", "missing/dir/x.csv"], dir.path());
    assert_eq!(code(&out), 2);
}

#[test]
fn run_writes_result_and_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["run", "--mode", "fearh", "--out", "o"]), dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("o/result.json"));
    assert_eq!(json["mode"], "fearh");
    assert_eq!(json["n_owners"], 3);
    let auc = json["test_auroc_mean"].as_f64().unwrap();
    assert!(auc.is_finite() && (0.0..=1.0).contains(&auc));
    assert_eq!(json["layer_sizes"], serde_json::json!([12, 4, 2, 1]));
    assert_eq!(json["final_params"].as_array().unwrap().len(), 12 * 4 + 4 + 4 * 2 + 2 + 2 + 1);

    let cycles = std::fs::read_to_string(dir.path().join("o/cycles.csv")).unwrap();
    let mut lines = cycles.lines();
    assert_eq!(lines.next(), Some("cycle_index,mean_validation_auroc"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len() as u64, json["cycles_completed"].as_u64().unwrap());
    for row in rows {
        let v: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite());
    }
}

#[test]
fn centralized_warns_about_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["run", "--mode", "centralized", "--gamma", "0.3"]), dir.path());
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gamma"));
    assert_eq!(read_json(&dir.path().join("result.json"))["gamma"], Value::Null);
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fearh(&["run", "--synthetic", "--owners", "0"], dir.path())), 2);
    assert_eq!(code(&fearh(&["run"], dir.path())), 2);
    assert_eq!(code(&fearh(&["run", "--synthetic", "--gamma", "1.5"], dir.path())), 2);
    assert_eq!(code(&fearh(&["run", "--synthetic", "--threads", "0"], dir.path())), 2);
    assert_eq!(code(&fearh(&["run", "--data", "nope.csv"], dir.path())), 2);
    assert_eq!(code(&fearh(&["bogus"], dir.path())), 2);
    assert_eq!(code(&fearh(&["--help"], dir.path())), 0);
}

#[test]
fn malformed_csv_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "a,b,label\n0,1,1\n0,2,0\n").unwrap();
    let out = fearh(&["run", "--data", "bad.csv"], dir.path());
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}

#[test]
fn single_class_everywhere_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("a,b,label\n");
    for i in 0..60 {
        csv.push_str(&format!("{},{},0\n", i % 2, (i / 2) % 2));
    }
    std::fs::write(dir.path().join("neg.csv"), csv).unwrap();
    let out = fearh(&["run", "--data", "neg.csv", "--owners", "2", "--max-cycles", "2"], dir.path());
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"synthetic": true, "gama": 0.2}"#).unwrap();
    assert_eq!(code(&fearh(&["run", "--config", "c.json"], dir.path())), 2);
}

#[test]
fn flags_override_config_and_config_overrides_env() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"synthetic": true, "samples": 400, "features": 12, "owners": 3,
            "max_cycles": 2, "gamma": 0.2, "seed": 9, "out": "from_file"}"#,
    )
    .unwrap();
    let out = fearh(&["run", "--config", "c.json", "--gamma", "0.4"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("from_file/result.json"));
    assert_eq!(json["gamma"].as_f64(), Some(0.4));
    assert_eq!(json["master_seed"], 9);

    let out = Command::new(env!("CARGO_BIN_EXE_fearh"))
        .args(with_small(&["run", "--out", "env"]))
        .current_dir(dir.path())
        .env("FEARH_SEED", "77")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(read_json(&dir.path().join("env/result.json"))["master_seed"], 77);
}

#[test]
fn logistic_model_has_single_layer() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["run", "--model", "logistic"]), dir.path());
    assert_eq!(code(&out), 0);
    let json = read_json(&dir.path().join("result.json"));
    assert_eq!(json["model"], "logistic");
    assert_eq!(json["layer_sizes"], serde_json::json!([12, 1]));
    assert_eq!(json["final_params"].as_array().unwrap().len(), 13);
}

#[test]
fn csv_input_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ["gen-data", "--samples", "300", "--features", "9", "--seed", "1", "--output", "d.csv"];
    assert_eq!(code(&fearh(&gen, dir.path())), 0);
    let out = fearh(&["run", "--data", "d.csv", "--owners", "2", "--max-cycles", "3"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&dir.path().join("result.json"))["layer_sizes"][0], 9);
}

#[test]
fn compare_lists_three_methods() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["compare"]), dir.path());
    assert_eq!(code(&out), 0);
    let table = std::fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "method,auroc,aupr");
    let methods: Vec<_> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["centralized", "fedavg", "fearh"]);
    for line in &lines[1..] {
        for v in line.split(',').skip(1) {
            assert!(v.parse::<f64>().unwrap().is_finite());
        }
    }
}

#[test]
fn sweep_default_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["sweep"]), dir.path());
    assert_eq!(code(&out), 0);
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "gamma,seed,auroc,aupr");
    assert_eq!(lines.len(), 1 + 15);
    assert!(lines[1].starts_with("0.100000,0,"));
}

#[test]
fn sweep_explicit_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["sweep", "--gammas", "0.0,1.0", "--seeds", "4"]), dir.path());
    assert_eq!(code(&out), 0);
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn stats_reports_per_run_cycles() {
    let dir = tempfile::tempdir().unwrap();
    let out = fearh(&with_small(&["stats", "--repeats", "5"]), dir.path());
    assert_eq!(code(&out), 0);
    let table = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "run_index,cycles");
    assert_eq!(lines.len(), 6);
    for line in &lines[1..] {
        let cycles: usize = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!((1..=4).contains(&cycles));
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("mean_cycles") && stdout.contains("/5"));
}
