use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clustersdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const TWO_CLUSTERS: &str = r#"{"dim": 2, "clusters": [
    {"mean": [0, 0], "cov": [[1, 0], [0, 1]], "size": 15},
    {"mean": [10, 0], "cov": [[1, 0], [0, 1]], "size": 15}]}"#;

const BLOCKS_2_3: &str = "1,1,0,0,0\n1,1,0,0,0\n0,0,1,1,1\n0,0,1,1,1\n0,0,1,1,1\n";

#[test]
fn help_lists_flags_and_bad_usage_exits_1() {
    let o = run(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["generate", "solve", "embed-cluster", "experiment"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    let o = run(&["solve", "--help"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for flag in ["--data", "--lambda", "--h0", "--affinity", "--a", "--seed", "--out", "--format"] {
        assert!(text.contains(flag), "{flag} missing from solve help");
    }
    assert_eq!(code(&run(&["solve", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
}

#[test]
fn generate_is_reproducible_and_reports_separation() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", TWO_CLUSTERS);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let o = run(&["generate", "--spec", p(&spec), "--seed", "7", "--out", p(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["n"], 30);
    assert_eq!(report["k"], 2);
    assert_eq!(report["lambda0"], 450.0);
    let sep = &report["separation"];
    assert!(sep["p"].as_f64().unwrap() > sep["q"].as_f64().unwrap());
    assert!(sep["t0"].as_f64().is_some());
    assert_eq!(code(&run(&["generate", "--spec", p(&spec), "--seed", "7", "--out", p(&b)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let flat = write(dir.path(), "flat.json", r#"{"dim": 2, "clusters": [{"mean": [1, 2], "cov": [[0, 0], [0, 0]], "size": 4}]}"#);
    let c = dir.path().join("c.csv");
    assert_eq!(code(&run(&["generate", "--spec", p(&flat), "--out", p(&c)])), 0);
    let text = std::fs::read_to_string(&c).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| *r == "1,2,1"));

    let bad = write(dir.path(), "bad.json", r#"{"dim": 2, "clusters": []}"#);
    let o = run(&["generate", "--spec", p(&bad), "--out", p(&c)]);
    assert_eq!(code(&o), 1);
    assert!(!stderr(&o).is_empty());
}

#[test]
fn solve_block_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "blocks.csv", BLOCKS_2_3);
    let out = dir.path().join("run");
    let o = run(&["solve", "--matrix", p(&m), "--lambda", "13", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("run_diagnostics.json")).unwrap()).unwrap();
    let primal = diag["diagnostics"]["primal_value"].as_f64().unwrap();
    assert!((primal - 13.0).abs() <= 1e-2, "{primal}");
    assert!(dir.path().join("run_zhat.csv").exists());

    let o = run(&["solve", "--matrix", p(&m), "--lambda", "13", "--format", "bin", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let bin = std::fs::read(dir.path().join("run_zhat.bin")).unwrap();
    assert_eq!(bin.len(), 8 + 25 * 8);

    let o = run(&["solve", "--matrix", p(&m), "--lambda", "26", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    let o = run(&["solve", "--matrix", p(&m), "--lambda", "4", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    let o = run(&["solve", "--data", "/nonexistent/input.csv", "--lambda", "13", "--out", p(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/input.csv"));
}

#[test]
fn solve_from_data_with_config_and_auto_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(dir.path(), "spec.json", TWO_CLUSTERS);
    let data = dir.path().join("data.csv");
    assert_eq!(code(&run(&["generate", "--spec", p(&spec), "--seed", "1", "--out", p(&data)])), 0);
    let out = dir.path().join("auto");
    let o = run(&["solve", "--data", p(&data), "--lambda", "auto", "--out", p(&out)]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("auto_diagnostics.json")).unwrap()).unwrap();
    let table = diag["lambda_selection"].as_array().unwrap();
    assert_eq!(table.len(), 8);
    let chosen = diag["lambda"].as_f64().unwrap();
    assert!(table.iter().any(|r| r["lambda"].as_f64() == Some(chosen)));
    assert!((30.0..=900.0).contains(&chosen));

    // a config document supplies flags; the command line overrides it
    let cfg = write(
        dir.path(),
        "solve.json",
        &format!(r#"{{"data": "{}", "lambda": "450", "max-iter": 300, "seed": 3}}"#, p(&data)),
    );
    let out = dir.path().join("cfg");
    let o = run(&["solve", "--config", p(&cfg), "--lambda", "400", "--out", p(&out)]);
    assert!(matches!(code(&o), 0 | 2), "{}", stderr(&o));
    let diag: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("cfg_diagnostics.json")).unwrap()).unwrap();
    assert_eq!(diag["lambda"], 400.0);
    assert_eq!(diag["config"]["max-iter"], 300);
    let bad = write(dir.path(), "bad.json", r#"{"lamda": 3}"#);
    assert_eq!(code(&run(&["solve", "--config", p(&bad), "--out", p(&out)])), 1);
}

#[test]
fn embed_cluster_on_cluster_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let z = write(dir.path(), "z.csv", BLOCKS_2_3);
    let out = dir.path().join("e");
    let o = run(&["embed-cluster", "--zhat", p(&z), "--k", "auto", "--method", "threshold", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let labels = std::fs::read_to_string(dir.path().join("e_labels.csv")).unwrap();
    assert_eq!(labels, "label\n1\n1\n2\n2\n2\n");
    let emb = std::fs::read_to_string(dir.path().join("e_embedding.csv")).unwrap();
    assert!(emb.starts_with("dim_1,dim_2,label\n"));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("e_report.json")).unwrap()).unwrap();
    assert_eq!(report["k_hat"], 2);

    let o = run(&["embed-cluster", "--zhat", p(&z), "--k", "1", "--method", "mst", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let labels = std::fs::read_to_string(dir.path().join("e_labels.csv")).unwrap();
    assert_eq!(labels, "label\n1\n1\n1\n1\n1\n");

    let o = run(&["embed-cluster", "--zhat", p(&z), "--method", "mst", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let labels = std::fs::read_to_string(dir.path().join("e_labels.csv")).unwrap();
    assert_eq!(labels, "label\n1\n1\n2\n2\n2\n");

    let rect = write(dir.path(), "rect.csv", "1,0,0\n0,1,0\n");
    let o = run(&["embed-cluster", "--zhat", p(&rect), "--out", p(&out)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn experiments_write_reproducible_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "rec.json",
        r#"{"spec": {"dim": 2, "clusters": [
            {"mean": [0, 0], "cov": [[1, 0], [0, 1]], "size": 5},
            {"mean": [10, 0], "cov": [[1, 0], [0, 1]], "size": 5}]},
           "trials": 3, "base_seed": 2}"#,
    );
    for sub in ["r1", "r2"] {
        let o = run(&["experiment", "--kind", "recovery", "--config", p(&cfg), "--out", p(&dir.path().join(sub))]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("r1/trials.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("r2/trials.csv")).unwrap());
    let mut rd = csv::Reader::from_reader(a.as_slice());
    let headers = rd.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "pi_n").unwrap();
    for rec in rd.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 0.0);
    }

    let zero = write(
        dir.path(),
        "conc.json",
        r#"{"spec": {"dim": 1, "clusters": [
            {"mean": [0], "cov": [[0]], "size": 3},
            {"mean": [2], "cov": [[0]], "size": 3}]},
           "trials": 4}"#,
    );
    let o = run(&["experiment", "--kind", "concentration", "--config", p(&zero), "--out", p(&dir.path().join("c"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read(dir.path().join("c/trials.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_slice());
    let col = rd.headers().unwrap().iter().position(|h| h == "inf1_normalized").unwrap();
    for rec in rd.records() {
        assert_eq!(rec.unwrap()[col].parse::<f64>().unwrap(), 0.0);
    }

    let o = run(&["experiment", "--kind", "bogus", "--config", p(&zero), "--out", p(&dir.path().join("x"))]);
    assert_eq!(code(&o), 1);
    let msg = stderr(&o);
    for kind in ["recovery", "concentration", "sparsity"] {
        assert!(msg.contains(kind), "{msg}");
    }
}
