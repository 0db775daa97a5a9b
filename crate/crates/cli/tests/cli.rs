use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const JC: &str = r#"{"kappa": 4, "pi": [0.25, 0.25, 0.25, 0.25],
  "exchangeabilities": [[0,1,1,1],[1,0,1,1],[1,1,0,1],[1,1,1,0]],
  "alpha": 0.7, "edge_lengths": {"a": 0.1, "b": 0.2, "c": 0.3}}"#;

const K2P: &str = r#"{"kappa": 4, "pi": [0.25, 0.25, 0.25, 0.25],
  "exchangeabilities": [[0,1,4,1],[1,0,1,4],[4,1,0,1],[1,4,1,0]],
  "alpha": 1.0, "edge_lengths": {"a": 0.1, "b": 0.2, "c": 0.3}}"#;

const GENERIC: &str = r#"{"kappa": 4, "pi": [0.1, 0.2, 0.3, 0.4],
  "exchangeabilities": [[0,1.3,0.4,2.2],[1.3,0,0.9,0.5],[0.4,0.9,0,3.1],[2.2,0.5,3.1,0]],
  "alpha": 1.7, "edge_lengths": {"a": 0.05, "b": 0.4, "c": 0.9}}"#;

fn run(args: &[&str]) -> Output {
    run_env(args, None)
}

fn run_env(args: &[&str], tol: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gtrident"));
    cmd.args(args).env_remove("GTRIDENT_TOL");
    if let Some(t) = tol {
        cmd.env("GTRIDENT_TOL", t);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

#[test]
fn forward_then_recover_reproduces_jc() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "jc.json", JC);
    let p = path(d.path(), "p.json");
    let o = run(&["forward", "--model", &model, "--out", &p, "--oracle"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout_json(&o);
    assert!((s["sum"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!(s["oracle_max_deviation"].as_f64().unwrap() < 1e-10);

    let r = path(d.path(), "r.json");
    assert_eq!(code(&run(&["recover", "--input", &p, "--out", &r])), 0);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&r).unwrap()).unwrap();
    assert!((v["alpha"].as_f64().unwrap() - 0.7).abs() < 1e-9);
    for (k, want) in [("a", 0.1), ("b", 0.2), ("c", 0.3)] {
        assert!((v["edge_lengths"][k].as_f64().unwrap() - want).abs() < 1e-9);
    }
    assert_eq!(v["regime"]["type"], "case_a1");
    assert!(v["beta_solver"]["iterations"].as_u64().unwrap() > 0);
    assert!(v["regime"]["permutation"].is_array() && v["regime"]["column_signs"].is_array());
}

#[test]
fn outputs_are_byte_identical_on_rerun() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "g.json", GENERIC);
    let mut seen = Vec::new();
    for name in ["p1.bin", "p2.bin"] {
        let p = path(d.path(), name);
        assert_eq!(code(&run(&["forward", "--model", &model, "--out", &p, "--binary"])), 0);
        let r = path(d.path(), &format!("{name}.json"));
        assert_eq!(code(&run(&["recover", "--input", &p, "--out", &r])), 0);
        seen.push((std::fs::read(&p).unwrap(), std::fs::read(&r).unwrap()));
    }
    assert_eq!(seen[0], seen[1]);
    let a = run(&["roundtrip", "--seed", "5", "--trials", "5"]);
    let b = run(&["roundtrip", "--seed", "5", "--trials", "5"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn quartet_recovery_writes_newick() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "g.json", GENERIC);
    let p = path(d.path(), "p4.json");
    let tree = "((a:0.1,b:0.2):0.15,c:0.3,d:0.25);";
    assert_eq!(code(&run(&["forward", "--model", &model, "--tree", tree, "--out", &p])), 0);
    let out = path(d.path(), "r4.json");
    let o = run(&["recover", "--input", &p, "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let nwk = std::fs::read_to_string(d.path().join("r4.nwk")).unwrap();
    let got = gtrident::forward::LabeledTree::from_newick(nwk.trim()).unwrap();
    let want = gtrident::forward::LabeledTree::from_newick(tree).unwrap();
    assert!(gtrident::assembly::same_topology(&got, &want));
    for (split, len) in want.splits() {
        assert!((got.splits()[&split] - len).abs() < 1e-8);
    }
}

#[test]
fn input_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    let model = write(d.path(), "jc.json", JC);
    let x = path(d.path(), "x.json");
    assert_eq!(code(&run(&["forward", "--model", &model, "--t", "0,0,0.3", "--out", &x])), 1);

    let mut p = vec![1.0 / 64.0; 64];
    p[0] += 0.01;
    p[1] -= 0.03;
    p[2] += 0.02;
    let bad = serde_json::json!({"kappa": 4, "taxa": ["a", "b", "c"], "p": p}).to_string();
    let bad = write(d.path(), "bad.json", &bad);
    let o = run(&["recover", "--input", &bad, "--out", &x]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    let garbage = write(d.path(), "garbage.json", "{not json");
    assert_eq!(code(&run(&["recover", "--input", &garbage, "--out", &x])), 1);
    assert_eq!(code(&run(&["roundtrip", "--trials", "0"])), 1);
    assert_eq!(code(&run(&["roundtrip", "--regime", "jc", "--kappa", "3"])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);
    assert_eq!(code(&run_env(&["roundtrip", "--trials", "1"], Some("abc"))), 1);
}

#[test]
fn missing_file_exits_three() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["recover", "--input", &path(d.path(), "missing.json"), "--out", &path(d.path(), "x.json")]);
    assert_eq!(code(&o), 3);
}

#[test]
fn binary_symmetric_exits_two_with_diagnostic() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["counterexample", "binary-nonident", "--out-dir", &path(d.path(), "bn")]);
    assert_eq!(code(&o), 0);
    let s = stdout_json(&o);
    assert!(s["max_tensor_diff"].as_f64().unwrap() < 1e-12);
    let t_alt: Vec<f64> = serde_json::from_value(s["t_alt"].clone()).unwrap();
    assert!((t_alt[0] - 0.3).abs() > 1e-3);

    let models: Vec<String> = serde_json::from_value(s["models"].clone()).unwrap();
    let tensors: Vec<Vec<f64>> = models
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let p = path(d.path(), &format!("b{i}.json"));
            assert_eq!(code(&run(&["forward", "--model", m, "--out", &p])), 0);
            let v: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
            serde_json::from_value(v["p"].clone()).unwrap()
        })
        .collect();
    assert!(tensors[0].iter().zip(&tensors[1]).all(|(a, b)| (a - b).abs() < 1e-12));

    let o = run(&["recover", "--input", &path(d.path(), "b0.json"), "--out", &path(d.path(), "x.json")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-identifiable (kappa=2 symmetric)"));

    let o = run(&[
        "counterexample",
        "binary-nonident",
        "--t",
        "0,0.5,0.5",
        "--alpha-alt",
        "0.5",
        "--out-dir",
        &path(d.path(), "bn2"),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(stdout_json(&o)["outcome"], "infeasible");
}

#[test]
fn roundtrip_regimes_report_their_paths() {
    for (regime, want) in
        [("jc", "case_a1"), ("k2p", "case_a1"), ("k3p", "case_a1"), ("case-a2", "case_a2"), ("case-b", "case_b")]
    {
        let o = run(&["roundtrip", "--regime", regime, "--trials", "4", "--seed", "11"]);
        assert_eq!(code(&o), 0, "{regime}: {}", String::from_utf8_lossy(&o.stderr));
        let csv = String::from_utf8(o.stdout).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("trial,seed,regime"));
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[5], want, "{line}");
            assert_eq!(*cols.last().unwrap(), "ok");
        }
    }
    for kappa in ["2", "3", "5"] {
        assert_eq!(code(&run(&["roundtrip", "--kappa", kappa, "--trials", "10"])), 0, "kappa {kappa}");
    }
    // an absurd tolerance override makes every trial fail
    assert_eq!(code(&run_env(&["roundtrip", "--trials", "2"], Some("1e-30"))), 2);
}

#[test]
fn classify_models() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["classify", "--model", &write(d.path(), "jc.json", JC)]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_eq!(v["regime"]["type"], "case_a1");
    assert!((v["regime"]["b"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!((v["regime"]["c"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert_eq!(v["inequalities_hold"], true);
    assert_eq!(v["nonzero_triple"], serde_json::json!([1, 2, 3]));

    let v = stdout_json(&run(&["classify", "--model", &write(d.path(), "k2p.json", K2P)]));
    assert!(v["regime"]["type"].as_str().unwrap().starts_with("case_a"));
    let v = stdout_json(&run(&["classify", "--model", &write(d.path(), "g.json", GENERIC)]));
    assert_eq!(v["regime"]["type"], "generic");
}

#[test]
fn counterexamples() {
    let d = tempfile::tempdir().unwrap();
    let csv = path(d.path(), "curve.csv");
    let o = run(&["counterexample", "rogers-curve", "--tau1", "1", "--tau2", "2", "--out", &csv]);
    assert_eq!(code(&o), 0);
    assert!(stdout_json(&o)["inflections"].as_u64().unwrap() >= 3);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("fx_tau1,fx_tau2\n"));
    assert_eq!(text.lines().count(), 401);

    let o = run(&["counterexample", "rogers-curve", "--graph", "--out", &csv]);
    assert_eq!(stdout_json(&o)["inflections"], 1);
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("x,fx\n"));

    let v = stdout_json(&run(&["counterexample", "phi", "--x", "0", "--y", "0"]));
    assert_eq!(v["fiber"], "line");
    let v = stdout_json(&run(&["counterexample", "phi", "--x", "2", "--y", "6"]));
    assert_eq!((v["fiber"].as_str().unwrap(), v["b"].as_f64().unwrap()), ("unique", 3.0));
    let v = stdout_json(&run(&["counterexample", "phi", "--x", "0", "--y", "-1"]));
    assert_eq!(v["fiber"], "empty");
}
