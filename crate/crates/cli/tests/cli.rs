use std::process::{Command, Output};

use serde_json::Value;

fn qcfg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcfg")).args(args).output().expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = qcfg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json output")
}

fn log_z(args: &[&str]) -> f64 {
    json(args)["log_z"].as_f64().expect("finite log_z")
}

#[test]
fn low_rank_models_agree_with_composed_vanilla() {
    let base = ["inside", "--tree", "((a b) (c d))", "--target", "1,4 2", "--vocab", "6", "--seed", "5"];
    let with = |extra: &[&'static str]| -> Vec<&'static str> { [base.as_slice(), extra].concat() };
    let p = log_z(&with(&["--model", "p"]));
    let pv = log_z(&with(&["--model", "vanilla", "--family", "p"]));
    assert!((p - pv).abs() < 1e-9, "{p} vs {pv}");
    let e = log_z(&with(&["--model", "e-rank"]));
    let en = log_z(&with(&["--model", "e-naive"]));
    let ep = log_z(&with(&["--model", "e-pure"]));
    let ev = log_z(&with(&["--model", "vanilla", "--family", "e"]));
    for z in [en, ep, ev] {
        assert!((e - z).abs() < 1e-9, "{e} vs {z}");
    }
    let out = qcfg(&with(&["--model", "p", "--family", "e"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn grammar_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("g");
    let prefix = prefix.to_str().unwrap();
    let tree = ["--tree", "((a b) c)", "--seed", "2"];
    let header = json(&[&["gen-grammar", "--family", "p", "--out", prefix], tree.as_slice()].concat());
    assert_eq!(header["tree"], "((a b) c)");
    let from_file = log_z(&[&["inside", "--model", "p", "--grammar", prefix, "--target", "0,1,2"], tree.as_slice()].concat());
    let fresh = log_z(&[&["inside", "--model", "p", "--target", "0,1,2"], tree.as_slice()].concat());
    assert_eq!(from_file, fresh);
    let other = qcfg(&["inside", "--model", "p", "--grammar", prefix, "--tree", "(a (b c))", "--target", "0,1"]);
    assert!(!other.status.success());
}

#[test]
fn masks_only_lower_log_z() {
    let base = ["inside", "--random-tree", "4", "--seed", "9", "--target-len", "4", "--vocab", "5"];
    let mut prev = log_z(&base);
    for mask in ["basic", "descendant"] {
        let z = json(&[base.as_slice(), &["--mask", mask]].concat())["log_z"].as_f64().unwrap_or(f64::NEG_INFINITY);
        assert!(z <= prev + 1e-12, "{mask}: {z} > {prev}");
        prev = z;
    }
}

#[test]
fn sampling_is_seeded() {
    let args = ["sample", "--tree", "((a b) c)", "--target", "0,1,2", "--vocab", "3", "--count", "5", "--seed", "11"];
    let a = json(&args);
    let b = json(&args);
    assert_eq!(a["samples"], b["samples"]);
    assert_eq!(a["samples"].as_array().unwrap().len(), 5);
    let mut other = args;
    other[10] = "12";
    assert_ne!(a["samples"], json(&other)["samples"]);
}

#[test]
fn pr_solve_tight_bound_activates_a_multiplier() {
    let v = json(&["pr-solve", "--tight", "--u", "1", "--seed", "3"]);
    assert_eq!(v["converged"], true);
    let lambda: Vec<f64> = v["lambda"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!(lambda.iter().any(|&l| l > 0.0));
    let counts = v["expected_counts"].as_array().unwrap();
    for (c, x) in counts.iter().zip(v["xi"].as_array().unwrap()) {
        assert!(c.as_f64().unwrap() <= x.as_f64().unwrap() + 1e-3);
    }
    let slack = json(&["pr-solve", "--tree", "(a b)", "--target", "0,1", "--vocab", "2", "--u", "10"]);
    assert!(slack["lambda"].as_array().unwrap().iter().all(|l| l.as_f64() == Some(0.0)));
    assert!(slack["kl"].as_f64().unwrap().abs() < 1e-9);
}

#[test]
fn reward_table_csv() {
    let out = qcfg(&["reward-table", "--max-d", "3"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["d,zeta", "1,0.367879441171", "2,0.270670566473", "3,0.149361205104", "inf,0"]);
}

#[test]
fn verify_exit_codes() {
    let ok = qcfg(&["verify", "--scope", "rank", "--seeds", "3"]);
    assert_eq!(ok.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["ok"], true);
    assert_eq!(report["properties"][0]["instances"], 3);
    let bad = qcfg(&["verify", "--scope", "p-model", "--seeds", "3", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# inside settings\ntree = ((a b) c)\ntarget = 0,1,2\nvocab = 4\nseed = 1\nmodel = p\n").unwrap();
    let cfg = cfg.to_str().unwrap();
    let from_file = log_z(&["inside", "--config", cfg]);
    let explicit = log_z(&["inside", "--tree", "((a b) c)", "--target", "0,1,2", "--vocab", "4", "--seed", "1", "--model", "p"]);
    assert_eq!(from_file, explicit);
    let overridden = log_z(&["inside", "--config", cfg, "--seed", "2"]);
    let direct = log_z(&["inside", "--tree", "((a b) c)", "--target", "0,1,2", "--vocab", "4", "--seed", "2", "--model", "p"]);
    assert_eq!(overridden, direct);
    assert_ne!(overridden, from_file);
}

#[test]
fn benchmark_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = qcfg(&[
        "benchmark", "--lengths", "4,6", "--models", "e-rank,p", "--lowrank-scale", "10", "--vocab", "100", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("model,length,time_s,mem_bytes,slope\n"));
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().skip(1).all(|l| !l.split(',').nth(3).unwrap().is_empty()));
}

#[test]
fn bad_input_is_reported() {
    for args in [
        vec!["inside", "--tree", "((a b) c", "--target", "0,1"],
        vec!["inside", "--tree", "(a b)", "--target", "0,x"],
        vec!["inside", "--target", "0,1"],
        vec!["inside", "--tree", "(a b)", "--target", "0,99", "--vocab", "3"],
    ] {
        let out = qcfg(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn gen_instance_is_deterministic() {
    let args = ["gen-instance", "--random-tree", "5", "--seed", "4", "--target-len", "6"];
    let a = json(&args);
    assert_eq!(a, json(&args));
    assert_eq!(a["spans"].as_array().unwrap().len(), 9);
    assert_eq!(a["target"].as_array().unwrap().len(), 6);
}
