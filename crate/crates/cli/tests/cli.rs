use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qadd_core::cqa::{cqa, SolverOptions};
use qadd_core::matcore::random_density;
use qadd_core::{DensityMatrix, MatrixRecord, Solver, StateKind};
use serde_json::Value;
use tempfile::TempDir;

fn qadd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qadd"))
        .args(args)
        .env_remove("QADD_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_state(dir: &TempDir, name: &str, rho: &DensityMatrix) -> PathBuf {
    let path = dir.path().join(name);
    let rec = MatrixRecord::from_matrix(rho.matrix()).unwrap();
    std::fs::write(&path, serde_json::to_string(&rec).unwrap()).unwrap();
    path
}

fn write_raw(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("bad json ({e}): {text}"))
}

#[test]
fn cqa_of_diagonal_state_is_zero() {
    let dir = TempDir::new().unwrap();
    let f = write_state(&dir, "diag.json", &DensityMatrix::diagonal(&[0.2, 0.3, 0.5]).unwrap());
    let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.3"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(json(&stdout(&out))["value"].as_f64(), Some(0.0));
}

#[test]
fn cqa_of_plus_matches_library_grid() {
    let dir = TempDir::new().unwrap();
    let plus = DensityMatrix::plus();
    let f = write_state(&dir, "plus.json", &plus);
    let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5", "--solver", "grid"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&stdout(&out));
    let lib = cqa(&plus, 0.5, &SolverOptions::new(Solver::Grid)).unwrap();
    assert_eq!(v["value"].as_f64(), Some(lib.value));
    assert_eq!(v["solver"], "grid");
    let minimizer: Vec<f64> = serde_json::from_value(v["minimizer"].clone()).unwrap();
    assert_eq!(minimizer, lib.minimizer.weights());

    let bits = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5", "--solver", "grid", "--log-base", "bits"]);
    assert_eq!(json(&stdout(&bits))["value"].as_f64(), Some(lib.value / std::f64::consts::LN_2));
}

#[test]
fn cqa_in_observable_basis() {
    let dir = TempDir::new().unwrap();
    let f = write_state(&dir, "plus.json", &DensityMatrix::plus());
    let x = write_raw(&dir, "x.json", r#"{"dim":2,"re":[0,1,1,0],"im":[0,0,0,0]}"#);
    let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5", "--basis", p(&x)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let v = json(&stdout(&out));
    assert!(v["value"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(v["degenerate_basis"], false);
}

#[test]
fn invalid_state_files_exit_2() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("malformed.json", r#"{"dim": 2, "re": [1, 0"#, "parsing"),
        ("short.json", r#"{"dim":2,"re":[1,0,0],"im":[0,0,0,0]}"#, "not a valid density matrix"),
        ("negative.json", r#"{"dim":2,"re":[1.5,0,0,-0.5],"im":[0,0,0,0]}"#, "not a valid density matrix"),
        ("trace.json", r#"{"dim":2,"re":[0.6,0,0,0.6],"im":[0,0,0,0]}"#, "not a valid density matrix"),
        ("nonherm.json", r#"{"dim":2,"re":[0.5,0.1,0,0.5],"im":[0,0,0,0]}"#, "not a valid density matrix"),
    ];
    for (name, text, msg) in cases {
        let f = write_raw(&dir, name, text);
        let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5"]);
        assert_eq!(code(&out), 2, "{name}");
        assert!(stderr(&out).contains(msg), "{name}: {}", stderr(&out));
    }
    let missing = qadd(&["cqa", "--state", "/nonexistent/state.json", "--alpha", "0.5"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn state_files_within_tolerance_are_accepted() {
    let dir = TempDir::new().unwrap();
    let f = write_raw(&dir, "loose.json", r#"{"dim":2,"re":[0.5000001,0.5,0.5,0.5],"im":[0,0,0,0]}"#);
    let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn solver_non_convergence_exits_3() {
    let dir = TempDir::new().unwrap();
    let f = write_state(&dir, "pure.json", &random_density(3, StateKind::PureHaar, 4).unwrap());
    let out = qadd(&["cqa", "--state", p(&f), "--alpha", "0.5", "--max-evals", "3"]);
    assert_eq!(code(&out), 3, "{}", stdout(&out));
    assert_eq!(json(&stdout(&out))["converged"], false);
}

#[test]
fn state_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("s.json");
    let out = qadd(&["state", "--dim", "3", "--kind", "ginibre_mixed", "--seed", "5", "--out", p(&f)]);
    assert_eq!(code(&out), 0);
    let rec: MatrixRecord = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    let back = rec.to_matrix().unwrap();
    let lib = random_density(3, StateKind::GinibreMixed, 5).unwrap();
    let worst = back.iter().zip(lib.matrix().iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst <= 1e-15, "{worst}");
}

#[test]
fn check_reverse_ep_passes() {
    let out = qadd(&["check", "reverse_ep", "--dims", "2,3", "--n", "200", "--seed", "7"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = json(&stdout(&out));
    assert_eq!(report["theorem_id"], "reverse_ep");
    assert_eq!(report["n_pass"].as_u64(), Some(400));
    assert!(stderr(&out).starts_with("PASS reverse_ep worst_margin="));
}

#[test]
fn check_corollary_on_diagonal_states_has_zero_margins() {
    let out = qadd(&["check", "corollary", "--kind", "diagonal", "--dims", "2,3,4", "--n", "30", "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("instance_seed,dim,alpha,margin,status"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 90);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3].parse::<f64>().unwrap(), 0.0, "{row}");
        assert_eq!(cols[4], "pass");
    }
}

#[test]
fn check_exit_codes() {
    assert_eq!(code(&qadd(&["check", "nosuch"])), 2);
    assert_eq!(code(&qadd(&["check", "epi", "--dims", "1"])), 2);
    assert_eq!(code(&qadd(&["check", "epi", "--kind", "bogus"])), 2);
    assert_eq!(code(&qadd(&["check", "epi", "--solver", "bogus"])), 2);
    assert_eq!(code(&qadd(&["check", "upper_bound_cr", "--dims", "5", "--solver", "grid", "--grid-step", "0.001"])), 2);
    // independent Kraus permutations break the commutation
    let lemma = qadd(&["check", "lemma_sio", "--dims", "3", "--n", "40"]);
    assert_eq!(code(&lemma), 1);
    assert!(stderr(&lemma).starts_with("FAIL lemma_sio"));
}

#[test]
fn check_reports_are_deterministic_across_workers_and_seed_sources() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str, extra: &[&str], env_seed: Option<&str>| {
        let path = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_qadd"));
        cmd.args(["check", "upper_bound_l1", "--dims", "2,3", "--n", "10", "--alpha", "0.2,0.7", "--out", p(&path)]);
        cmd.args(extra);
        cmd.env_remove("QADD_SEED");
        if let Some(s) = env_seed {
            cmd.env("QADD_SEED", s);
        }
        let out = cmd.output().unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        assert!(stdout(&out).starts_with("PASS upper_bound_l1"));
        let mut v = json(&std::fs::read_to_string(path).unwrap());
        v.as_object_mut().unwrap().remove("runtime_ms");
        v
    };
    let a = run("a.json", &["--seed", "11", "--workers", "1"], None);
    let b = run("b.json", &["--seed", "11", "--workers", "3"], None);
    let c = run("c.json", &[], Some("11"));
    let d = run("d.json", &["--seed", "12"], None);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}

#[test]
fn replay_reproduces_reported_worst_margin() {
    let out = qadd(&["check", "epi", "--dims", "3", "--n", "25", "--alpha", "0.35", "--seed", "3"]);
    assert_eq!(code(&out), 0);
    let report = json(&stdout(&out));
    let seed = report["worst_instance_seed"].as_u64().unwrap().to_string();
    let dump = qadd(&["replay", "epi", "--instance-seed", &seed, "--dim", "3", "--alpha", "0.35"]);
    assert_eq!(code(&dump), 0, "{}", stderr(&dump));
    let dump = json(&stdout(&dump));
    assert_eq!(dump["margin"], report["worst_margin"]);
    for key in ["rho", "sigma", "added", "mixture"] {
        assert!(dump["matrices"][key]["re"].is_array(), "{key}");
    }
    assert!(dump["quantities"]["entropy_added"].is_number());
    assert!(dump["quantities"]["entropy_mixture"].is_number());
    assert_eq!(code(&qadd(&["replay", "nosuch", "--instance-seed", "1", "--dim", "2", "--alpha", "0.5"])), 2);
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn sweep_cqa_endpoints_vanish() {
    let dir = TempDir::new().unwrap();
    let f = write_state(&dir, "s.json", &random_density(2, StateKind::PureHaar, 9).unwrap());
    let out = qadd(&["sweep", "cqa", "--state", p(&f), "--solver", "grid"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(header, ["instance_seed", "dim", "alpha", "cqa", "converged"]);
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
    assert_eq!(rows[10][3].parse::<f64>().unwrap(), 0.0);
    // 17 significant digits
    assert_eq!(rows[1][2], "1.0000000000000001e-1");
}

#[test]
fn sweep_bound_gap_is_nonnegative() {
    let out = qadd(&["sweep", "bound_gap", "--dims", "2,3", "--n", "5", "--kind", "pure_haar", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&stdout(&out));
    assert_eq!(header, ["instance_seed", "dim", "alpha", "cqa", "bound_cr", "gap"]);
    assert_eq!(rows.len(), 10 * 11);
    for row in rows {
        let cqa: f64 = row[3].parse().unwrap();
        let bound: f64 = row[4].parse().unwrap();
        let gap: f64 = row[5].parse().unwrap();
        assert!(gap >= -1e-6);
        assert!((gap - (bound - cqa)).abs() <= 1e-15);
    }
}

#[test]
fn sweep_uncertainty_margin_columns() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("u.csv");
    let out = qadd(&[
        "sweep",
        "uncertainty_margin",
        "--n",
        "4",
        "--kind",
        "pure_haar",
        "--alpha",
        "0.25,0.5",
        "--solver",
        "grid",
        "--out",
        p(&out_path),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let (header, rows) = csv_rows(&std::fs::read_to_string(out_path).unwrap());
    assert_eq!(
        header,
        ["instance_seed", "dim", "alpha", "lhs", "rhs_paper", "rhs_derived", "margin_paper", "margin_derived"]
    );
    assert_eq!(rows.len(), 8);
    for row in rows {
        let derived: f64 = row[7].parse().unwrap();
        assert!(derived >= -1e-6);
    }
    assert_eq!(code(&qadd(&["sweep", "cqa", "--alpha", "1.2"])), 2);
}
