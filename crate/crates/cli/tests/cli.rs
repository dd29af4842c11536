use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn afvm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_afvm"))
        .args(args)
        .output()
        .expect("failed to start afvm")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn rejects_theta_out_of_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = afvm(&["--theta", "1.5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta must lie in (0,1]"), "{}", stderr(&o));
    assert!(!out.join("records.csv").exists());
}

#[test]
fn rejects_theta_prime_above_theta() {
    let o = afvm(&["--theta", "0.3", "--theta-prime", "0.6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("theta-prime"));
}

#[test]
fn rejects_unknown_problem() {
    let o = afvm(&["--problem", "no-such-problem"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn uniform_requires_levels() {
    let o = afvm(&["--mode", "uniform"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--levels"));
}

fn read_records(dir: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(dir.join("records.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn uniform_run_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = afvm(&[
        "--problem",
        "square-smooth",
        "--mode",
        "uniform",
        "--levels",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (header, rows) = read_records(dir.path());
    assert_eq!(
        header,
        "level,n_elements,n_nodes,eta,osc,energy_error,fem_energy_error,ratio_card,\
         osc_fraction_eta,sigma,solve_iters,wall_ms_solve,wall_ms_estimate,wall_ms_refine"
    );
    assert_eq!(rows.len(), 4);
    let elements: Vec<usize> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    for w in elements.windows(2) {
        assert_eq!(w[1], 4 * w[0]);
    }

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], "uniform");
    assert_eq!(summary["levels"], 4);
    assert!(summary["checks"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn records_are_reproducible_without_timings() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = afvm(&[
            "--problem",
            "lshape-singular",
            "--max-elements",
            "400",
            "--no-timings",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let ra = fs::read(a.path().join("records.csv")).unwrap();
    let rb = fs::read(b.path().join("records.csv")).unwrap();
    assert_eq!(ra, rb);
    assert!(!ra.contains(&b'\r'));
}

#[test]
fn custom_config_with_matrix_dump() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("problem.json");
    fs::write(
        &config,
        r#"{
  "label": "unit-square-poly",
  "mesh": {
    "vertices": [[0,0],[1,0],[1,1],[0,1]],
    "elements": [[0,1,2],[0,2,3]]
  },
  "coefficient": [[2, 0], [0, "1 + x2^2"]],
  "source": "derived",
  "exact": "x1*(1-x1)*x2*(1-x2)"
}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = afvm(&[
        "--problem",
        config.to_str().unwrap(),
        "--max-elements",
        "300",
        "--matrix-dump",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_records(&out);
    assert!(rows.len() >= 3);
    // exact solution given, so the energy error column is populated
    assert!(rows.iter().all(|r| r[5].parse::<f64>().unwrap().is_finite()));

    let dump = fs::read_to_string(out.join("fvm_matrix.txt")).unwrap();
    assert!(dump.starts_with('%'));
}

#[test]
fn malformed_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"mesh": 3}"#).unwrap();
    let o = afvm(&["--problem", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
