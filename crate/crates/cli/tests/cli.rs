use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mexec_cli::table::Table;
use mexec_cli::Scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mexec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios").join(name).display().to_string()
}

fn doc_scenarios() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/scenarios");
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    out.sort();
    out
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn cost_of(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().find(|l| l.starts_with(key)).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split('=').nth(1).unwrap().trim().parse().unwrap()
}

fn header_cost(t: &Table) -> f64 {
    t.comments[0].strip_prefix("optimal_cost = ").unwrap().parse().unwrap()
}

#[test]
fn doc_scenarios_round_trip_and_validate() {
    for path in doc_scenarios() {
        let text = std::fs::read_to_string(&path).unwrap();
        let s = Scenario::from_json(&text).unwrap();
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s, "{}", path.display());
        s.to_spec().unwrap();
    }
}

#[test]
fn solve_reproduces_crossing_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig3.csv");
    let o = run(&["solve", &scenario("fig3.json"), out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let t = Table::read(&out).unwrap();
    assert_eq!(t.header, ["t", "X_1", "X_2", "D_1", "D_2", "H_1", "H_2"]);
    assert_eq!(t.rows.len(), 1002);
    assert_eq!(t.rows[0][1], 100.0);
    assert_eq!(format!("{:.4}", t.rows[1][2]), "-6.6667");
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(!text.contains('\r'));
}

#[test]
fn zero_resilience_closes_immediately() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "s.json",
        r#"{"n": 2, "T": 1.0, "O": [[1.0, 0.0], [0.0, 1.0]], "lambda0": [1.0, 2.0], "mu": [1.0, 0.5],
            "rho": [[0.0, 0.0], [0.0, 0.0]], "x0": [10.0, -4.0], "grid_steps": 50}"#,
    );
    let out = dir.path().join("o.csv");
    assert!(run(&["solve", &s, out.to_str().unwrap()]).status.success());
    let t = Table::read(&out).unwrap();
    for row in &t.rows[1..t.rows.len() - 1] {
        assert!(row[1].abs() < 1e-8 && row[2].abs() < 1e-8);
    }
}

#[test]
fn constant_deviation_in_ow_setting() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    assert!(run(&["solve", "--grid", "200", &scenario("non_commuting.json"), out.to_str().unwrap()]).status.success());
    let t = Table::read(&out).unwrap();
    let first = t.rows[1].clone();
    for row in &t.rows[1..t.rows.len() - 1] {
        assert!((row[3] - first[3]).abs() < 1e-6 && (row[4] - first[4]).abs() < 1e-6);
    }
}

#[test]
fn exit_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let out = out.to_str().unwrap();
    assert_eq!(run(&["solve", &scenario("indefinite_kappa.json"), out]).status.code(), Some(2));
    assert_eq!(run(&["solve", "--force", &scenario("indefinite_kappa.json"), out]).status.code(), Some(3));
    let bad = write(dir.path(), "bad.json", r#"{"n": 1, "T": 1.0, "O": [[1.0]], "lambda0": [1.0], "rho": [[1.0]], "x0": [1.0], "typo": 0}"#);
    assert_eq!(run(&["solve", &bad, out]).status.code(), Some(4));
    let shape = write(dir.path(), "shape.json", r#"{"n": 2, "T": 1.0, "O": [[1.0]], "lambda0": [1.0], "rho": [[1.0]], "x0": [1.0]}"#);
    assert_eq!(run(&["check", &shape]).status.code(), Some(4));
    assert_eq!(run(&["check", &scenario("non_commuting.json")]).status.code(), Some(0));
    assert_eq!(run(&["check", &scenario("indefinite_kappa.json")]).status.code(), Some(2));
}

#[test]
fn simulate_without_volatility_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let solved = dir.path().join("solve.csv");
    let sim = dir.path().join("sim");
    assert!(run(&["solve", "--grid", "100", &scenario("fig4_fig5.json"), solved.to_str().unwrap()]).status.success());
    assert!(run(&["simulate", "--grid", "100", &scenario("fig4_fig5.json"), sim.to_str().unwrap()]).status.success());
    assert_eq!(std::fs::read(&solved).unwrap(), std::fs::read(sim.join("path_00000.csv")).unwrap());
}

#[test]
fn simulate_is_reproducible_and_random() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let o = run(&["simulate", "--grid", "100", "--paths", "3", &scenario("fig8.json"), d.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for i in 0..3 {
        let name = format!("path_{i:05}.csv");
        assert_eq!(std::fs::read(a.join(&name)).unwrap(), std::fs::read(b.join(&name)).unwrap());
    }
    let t = Table::read(&a.join("path_00000.csv")).unwrap();
    assert!(t.comments.iter().any(|c| c == "seed = 2024"));
    let d1: Vec<f64> = t.rows[1..t.rows.len() - 1].iter().map(|r| r[3]).collect();
    let spread = d1.iter().cloned().fold(f64::MIN, f64::max) - d1.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread > 1e-3, "deviation should move along a random path");
    let other = Table::read(&a.join("path_00001.csv")).unwrap();
    assert_ne!(t.rows, other.rows);
}

#[test]
fn optimal_plan_costs_its_analytic_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let s = scenario("targets.json");
    assert!(run(&["solve", &s, out.to_str().unwrap()]).status.success());
    let analytic = header_cost(&Table::read(&out).unwrap());
    let o = run(&["cost", &s, out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let total = cost_of(&o, "total_cost");
    assert!((total - analytic).abs() < 1e-4 * analytic.abs(), "{total} vs {analytic}");

    let mut t = Table::read(&out).unwrap();
    for row in &mut t.rows[300..400] {
        row[1] += 5.0;
    }
    let bumped = dir.path().join("bumped.csv");
    t.write(&bumped).unwrap();
    let worse = cost_of(&run(&["cost", &s, bumped.to_str().unwrap()]), "total_cost");
    assert!(worse > total);
}

#[test]
fn empty_plan_costs_zero() {
    let dir = tempfile::tempdir().unwrap();
    let s = write(
        dir.path(),
        "s.json",
        r#"{"n": 2, "T": 1.0, "O": [[1.0, 0.0], [0.0, 1.0]], "lambda0": [1.0, 1.0], "rho": [[1.0, 0.0], [0.0, 1.0]],
            "Xi": [[1.0, 0.0], [0.0, 1.0]], "x0": [0.0, 0.0], "grid_steps": 4}"#,
    );
    let plan = write(
        dir.path(),
        "p.csv",
        "t,X_1,X_2\n0,0,0\n0,0,0\n0.25,0,0\n0.5,0,0\n0.75,0,0\n1,0,0\n",
    );
    let o = run(&["cost", &s, &plan]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(cost_of(&o, "total_cost"), 0.0);
    let short = write(dir.path(), "short.csv", "t,X_1,X_2\n0,0,0\n1,0,0\n");
    assert_eq!(run(&["cost", &s, &short]).status.code(), Some(1));
}

#[test]
fn examples_have_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for id in ["fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "asym", "blowup"] {
        let o = run(&["example", "--grid", "200", id, d]);
        assert!(o.status.success(), "{id}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let fig3 = Table::read(&dir.path().join("fig3.csv")).unwrap();
    let x2: Vec<(f64, f64)> = fig3.rows[1..fig3.rows.len() - 1].iter().map(|r| (r[0], r[2])).collect();
    let cross = x2.windows(2).find(|w| w[0].1 * w[1].1 <= 0.0).unwrap();
    assert!(cross[0].0 <= 0.5 && cross[1].0 >= 0.5);

    let blowup = Table::read(&dir.path().join("blowup.csv")).unwrap();
    for r in &blowup.rows {
        assert!((r[1] + 0.1 * r[0] * r[0]).abs() < 1e-9);
    }
    let asym = Table::read(&dir.path().join("asym.csv")).unwrap();
    assert!(asym.rows.iter().all(|r| r[1] == asym.rows[0][1]));

    let fig1 = Table::read(&dir.path().join("fig1.csv")).unwrap();
    assert_eq!(fig1.header.len(), 9);
    assert_eq!(fig1.rows[0][1], 3.0);
    let fig2 = Table::read(&dir.path().join("fig2.csv")).unwrap();
    assert_eq!(&fig2.rows[0][1..], &[10.0, 0.0]);
}

#[test]
fn examples_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert!(run(&["example", "--grid", "100", "fig8", d.to_str().unwrap()]).status.success());
    }
    assert_eq!(std::fs::read(a.join("fig8.csv")).unwrap(), std::fs::read(b.join("fig8.csv")).unwrap());
}
