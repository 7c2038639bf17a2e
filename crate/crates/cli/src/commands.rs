//! The `mexec` subcommands as library functions.

use std::fmt;
use std::path::{Path, PathBuf};

use mexec_core::checks::{assumption_audit, AuditReport};
use mexec_core::lindyn::{cost_quadratic_form, deviation_of_plan, pathwise_cost, risk_cost, ExecutionPlan};
use mexec_core::montecarlo::{
    asymmetric_roundtrip, blowup_demo, brownian_path, mc_cost, path_cost, SimConfig, StrategyRule,
};
use mexec_core::optimal::{build_pipeline, OptimalSolution, Pipeline, SolutionMode};
use mexec_core::par::map_indexed;
use mexec_core::{derive_coefficients, presets, CoefficientSet, ExecError, Mat, MarketSpec, Vector};

use crate::error::CliError;
use crate::scenario::Scenario;
use crate::table::{number, Table};

/// Command-line overrides of scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub force: bool,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

const DEFAULT_COST_PATHS: usize = 1000;
const FIG8_SEED: u64 = 2024;

pub fn load(path: &Path, ov: &Overrides) -> Result<(Scenario, MarketSpec), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let scenario = Scenario::from_json(&text)?;
    let mut spec = scenario.to_spec()?;
    if let Some(g) = ov.grid {
        if g == 0 {
            return Err(CliError::Schema("--grid must be positive".into()));
        }
        spec.grid_steps = g;
    }
    Ok((scenario, spec))
}

fn sim_settings(scenario: &Scenario, ov: &Overrides, default_paths: usize) -> (usize, u64) {
    let paths = ov.paths.or(scenario.sim.as_ref().map(|s| s.n_paths)).unwrap_or(default_paths);
    let seed = ov.seed.or(scenario.sim.as_ref().map(|s| s.seed)).unwrap_or(0);
    (paths, seed)
}

fn audit_gate(spec: &MarketSpec, coeffs: &CoefficientSet, force: bool) -> Result<(), CliError> {
    let report = assumption_audit(spec, coeffs);
    if report.passes_hard_checks() || force {
        return Ok(());
    }
    let names: Vec<&str> = report.hard_failures().map(|e| e.name).collect();
    Err(CliError::Audit(names.join(", ")))
}

fn solve_pipeline(spec: &MarketSpec, force: bool) -> Result<(CoefficientSet, Pipeline), CliError> {
    let coeffs = derive_coefficients(spec)?;
    audit_gate(spec, &coeffs, force)?;
    let pipeline = build_pipeline(&coeffs, SolutionMode::for_coefficients(&coeffs))?;
    Ok((coeffs, pipeline))
}

fn labels(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |k| format!("{prefix}_{k}"))
}

/// `t, X_1..X_n, D_1..D_n, H_1..H_n`: the first row holds the values just
/// before time zero, then one row per grid node, then the terminal values.
pub fn strategy_table(spec: &MarketSpec, sol: &OptimalSolution) -> Table {
    let n = spec.assets;
    let header = std::iter::once("t".to_string()).chain(labels("X", n)).chain(labels("D", n)).chain(labels("H", n));
    let mut table = Table::new(header.collect());
    table.comments.push(format!("optimal_cost = {}", number(sol.cost)));
    let steps = sol.plan.steps();
    let dt = spec.horizon / steps as f64;
    let row = |t: f64, x: &Vector, d: &Vector, h: &Vector| {
        std::iter::once(t).chain(x.iter().copied()).chain(d.iter().copied()).chain(h.iter().copied()).collect()
    };
    table.rows.push(row(0.0, &sol.plan.x_pre, &sol.deviation.d_pre, &sol.hidden.values[0]));
    for i in 0..steps {
        table.rows.push(row(i as f64 * dt, &sol.plan.values[i], &sol.deviation.values[i], &sol.hidden.values[i]));
    }
    table.rows.push(row(spec.horizon, &sol.plan.terminal, &sol.deviation.terminal, &sol.hidden.values[steps]));
    table
}

/// Solves a deterministic scenario and writes the strategy CSV. Returns the
/// analytic optimal cost.
pub fn cmd_solve(scenario: &Path, out: &Path, ov: &Overrides) -> Result<f64, CliError> {
    let (_, spec) = load(scenario, ov)?;
    if spec.has_volatility() {
        return Err(CliError::Exec(ExecError::Unsupported(
            "volatile eigenvalues give random strategies; use `simulate`".into(),
        )));
    }
    let (coeffs, pipeline) = solve_pipeline(&spec, ov.force)?;
    let sol = pipeline.strategy(&spec, &coeffs, None)?;
    strategy_table(&spec, &sol).write(out)?;
    Ok(sol.cost)
}

/// Writes one strategy CSV per simulated path into `out_dir`. Without
/// eigenvalue volatility a single file identical to `solve` output is
/// written.
pub fn cmd_simulate(scenario: &Path, out_dir: &Path, ov: &Overrides) -> Result<Vec<PathBuf>, CliError> {
    let (scn, spec) = load(scenario, ov)?;
    let (coeffs, pipeline) = solve_pipeline(&spec, ov.force)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    if !coeffs.is_stochastic() {
        let sol = pipeline.strategy(&spec, &coeffs, None)?;
        let path = out_dir.join("path_00000.csv");
        strategy_table(&spec, &sol).write(&path)?;
        return Ok(vec![path]);
    }
    let (n_paths, seed) = sim_settings(&scn, ov, 1);
    let grid = coeffs.grid();
    let tables = map_indexed(n_paths, None, |i| -> Result<Table, CliError> {
        let w = brownian_path(grid, spec.factors, seed, i as u64);
        let sol = pipeline.strategy(&spec, &coeffs, Some(&w))?;
        let realized = path_cost(&spec, &coeffs, StrategyRule::Feedback(&pipeline.rule), Some(&w))?;
        let mut t = strategy_table(&spec, &sol);
        t.comments.push(format!("seed = {seed}"));
        t.comments.push(format!("path = {i}"));
        t.comments.push(format!("path_cost = {}", number(realized)));
        Ok(t)
    })?;
    let mut written = Vec::with_capacity(n_paths);
    for (i, t) in tables.into_iter().enumerate() {
        let path = out_dir.join(format!("path_{i:05}.csv"));
        t?.write(&path)?;
        written.push(path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// Block-trade cost; `None` for random impact.
    pub pathwise: Option<f64>,
    /// Deviation quadratic form; `None` for random impact.
    pub quadratic_form: Option<f64>,
    pub risk: f64,
    /// Expected pathwise cost plus risk.
    pub total: f64,
    /// Monte Carlo standard error of `total`, random impact only.
    pub stderr: Option<f64>,
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = self.pathwise {
            writeln!(f, "pathwise_cost = {}", number(p))?;
        }
        if let Some(q) = self.quadratic_form {
            writeln!(f, "quadratic_form_cost = {}", number(q))?;
        }
        writeln!(f, "risk_cost = {}", number(self.risk))?;
        write!(f, "total_cost = {}", number(self.total))?;
        if let Some(s) = self.stderr {
            write!(f, "\nstderr = {}", number(s))?;
        }
        Ok(())
    }
}

/// Reads the `t` and `X_k` columns of a strategy CSV as an execution plan.
pub fn read_plan(path: &Path, spec: &MarketSpec) -> Result<ExecutionPlan, CliError> {
    let table = Table::read(path)?;
    let n = spec.assets;
    let steps = spec.grid_steps;
    let missing = |c: &str| CliError::Csv(format!("{}: missing column {c}", path.display()));
    let t_col = table.column("t").ok_or_else(|| missing("t"))?;
    let x_cols = labels("X", n).map(|c| table.column(&c).ok_or_else(|| missing(&c))).collect::<Result<Vec<_>, _>>()?;
    if table.rows.len() != steps + 2 {
        return Err(CliError::Csv(format!(
            "{}: {} rows, expected {} for a {steps}-step grid",
            path.display(),
            table.rows.len(),
            steps + 2
        )));
    }
    if table.rows.iter().any(|r| r.len() != table.header.len()) {
        return Err(CliError::Csv(format!("{}: ragged rows", path.display())));
    }
    let dt = spec.horizon / steps as f64;
    let tol = 1e-9 * spec.horizon;
    let expected = |k: usize| match k {
        0 => 0.0,
        k if k <= steps => (k - 1) as f64 * dt,
        _ => spec.horizon,
    };
    for (k, row) in table.rows.iter().enumerate() {
        if (row[t_col] - expected(k)).abs() > tol {
            return Err(CliError::Csv(format!("{}: row {k} has t = {}, expected {}", path.display(), row[t_col], expected(k))));
        }
    }
    let x = |k: usize| Vector::from_iterator(n, x_cols.iter().map(|&c| table.rows[k][c]));
    let plan = ExecutionPlan { x_pre: x(0), values: (1..=steps).map(x).collect(), terminal: x(steps + 1) };
    if (&plan.x_pre - &spec.x0).amax() > 1e-9 * (1.0 + spec.x0.amax()) {
        return Err(CliError::Csv(format!("{}: initial position differs from the scenario's x0", path.display())));
    }
    Ok(plan)
}

/// Cost of a user-supplied plan.
pub fn cmd_cost(scenario: &Path, plan_csv: &Path, ov: &Overrides) -> Result<CostReport, CliError> {
    let (scn, spec) = load(scenario, ov)?;
    let coeffs = derive_coefficients(&spec)?;
    let plan = read_plan(plan_csv, &spec)?;
    let risk = risk_cost(&coeffs, &plan)?;
    if !coeffs.is_stochastic() {
        let pathwise = pathwise_cost(&spec, &coeffs, &plan, None)?;
        let quadratic = cost_quadratic_form(&spec, &coeffs, &plan, None)?;
        return Ok(CostReport {
            pathwise: Some(pathwise),
            quadratic_form: Some(quadratic),
            risk,
            total: pathwise + risk,
            stderr: None,
        });
    }
    let (n_paths, seed) = sim_settings(&scn, ov, DEFAULT_COST_PATHS);
    let est = mc_cost(&spec, &coeffs, StrategyRule::Fixed(&plan), &SimConfig::new(n_paths, seed, spec.grid_steps))?;
    Ok(CostReport { pathwise: None, quadratic_form: None, risk, total: est.mean, stderr: Some(est.stderr) })
}

pub fn cmd_check(scenario: &Path, ov: &Overrides) -> Result<AuditReport, CliError> {
    let (_, spec) = load(scenario, ov)?;
    let coeffs = derive_coefficients(&spec)?;
    Ok(assumption_audit(&spec, &coeffs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Example {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Asym,
    Blowup,
}

impl Example {
    pub const ALL: [Example; 10] = [
        Example::Fig1,
        Example::Fig2,
        Example::Fig3,
        Example::Fig4,
        Example::Fig5,
        Example::Fig6,
        Example::Fig7,
        Example::Fig8,
        Example::Asym,
        Example::Blowup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Fig1 => "fig1",
            Example::Fig2 => "fig2",
            Example::Fig3 => "fig3",
            Example::Fig4 => "fig4",
            Example::Fig5 => "fig5",
            Example::Fig6 => "fig6",
            Example::Fig7 => "fig7",
            Example::Fig8 => "fig8",
            Example::Asym => "asym",
            Example::Blowup => "blowup",
        }
    }
}

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

fn tag(x: f64) -> String {
    if x < 0.0 {
        format!("m{}", -x)
    } else {
        format!("{x}")
    }
}

/// Deviation after a single block trade at time zero, held to the horizon.
fn block_trade_deviation(rho3: f64, trade: &Vector, steps: usize) -> Result<Vec<Vector>, CliError> {
    let spec = presets::cross_resilience(2.0, rho3, 5.0).with_position(Vector::zeros(2)).with_grid(steps);
    let coeffs = derive_coefficients(&spec)?;
    let plan = ExecutionPlan { x_pre: Vector::zeros(2), values: vec![trade.clone(); steps], terminal: trade.clone() };
    let dev = deviation_of_plan(&spec, &coeffs, &plan, None)?;
    let mut out = dev.values;
    out.push(dev.lefts[steps - 1].clone());
    Ok(out)
}

fn example_table(id: Example, ov: &Overrides) -> Result<Table, CliError> {
    let steps = ov.grid.unwrap_or(match id {
        Example::Fig1 | Example::Fig2 => 500,
        _ => 1000,
    });
    if steps == 0 {
        return Err(CliError::Schema("--grid must be positive".into()));
    }
    let solved = |spec: MarketSpec| -> Result<Table, CliError> {
        let spec = spec.with_grid(steps);
        let (coeffs, pipeline) = solve_pipeline(&spec, true)?;
        Ok(strategy_table(&spec, &pipeline.strategy(&spec, &coeffs, None)?))
    };
    let times = |horizon: f64| (0..=steps).map(move |i| i as f64 * horizon / steps as f64);
    let table = match id {
        Example::Fig1 => {
            let trades = [v2(3.0, 1.0), v2(1.0, 3.0), v2(3.0, -1.0), v2(1.0, -3.0)];
            let mut header = vec!["t".to_string()];
            let mut columns = Vec::new();
            for trade in &trades {
                for rho3 in [0.0, 1.0] {
                    header.push(format!("D1_{}_{}_rho3_{rho3}", tag(trade[0]), tag(trade[1])));
                    columns.push(block_trade_deviation(rho3, trade, steps)?);
                }
            }
            let mut t = Table::new(header);
            t.comments.push("deviation in asset 1 after a block trade at t = 0; rho1 = 2, gamma = I".into());
            for (i, s) in times(5.0).enumerate() {
                t.rows.push(std::iter::once(s).chain(columns.iter().map(|c| c[i][0])).collect());
            }
            t
        }
        Example::Fig2 => {
            let dev = block_trade_deviation(1.0, &v2(10.0, 0.0), steps)?;
            let mut t = Table::new(vec!["t".into(), "D_1".into(), "D_2".into()]);
            t.comments.push("block buy (10, 0) at t = 0; rho1 = 2, rho3 = 1, gamma = I".into());
            for (i, s) in times(5.0).enumerate() {
                t.rows.push(vec![s, dev[i][0], dev[i][1]]);
            }
            t
        }
        Example::Fig3 => solved(presets::crossing_zero(1.0, 100.0, 2.0, 2.0, -1.0))?,
        Example::Fig4 | Example::Fig5 => solved(presets::cross_risk())?,
        Example::Fig6 | Example::Fig7 => solved(presets::cross_impact())?,
        Example::Fig8 => {
            let seed = ov.seed.unwrap_or(FIG8_SEED);
            let spec = presets::stochastic_impact().with_grid(steps);
            let (coeffs, pipeline) = solve_pipeline(&spec, true)?;
            let w = brownian_path(coeffs.grid(), spec.factors, seed, 0);
            let mut t = strategy_table(&spec, &pipeline.strategy(&spec, &coeffs, Some(&w))?);
            t.comments.push(format!("seed = {seed}"));
            t.comments.push("path = 0".into());
            t
        }
        Example::Asym => {
            let shares = 10.0;
            let gt = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
            let mut t = Table::new(vec!["h".into(), "cost_rho_zero".into(), "cost_rho_identity".into()]);
            t.comments.push(format!("asymmetric round trip of {shares} shares, impact [[1, 1], [0, 1]]"));
            for h in [0.1, 0.05, 0.01, 0.001] {
                let a = asymmetric_roundtrip(&gt, &Mat::zeros(2, 2), shares, h)?;
                let b = asymmetric_roundtrip(&gt, &Mat::identity(2, 2), shares, h)?;
                t.rows.push(vec![h, a, b]);
            }
            t
        }
        Example::Blowup => {
            let horizon = 0.2;
            let mut t = Table::new(vec!["k".into(), "cost".into()]);
            t.comments.push(format!("indefinite kappa, T = {horizon}, x = 0"));
            for k in 0..=10 {
                let k = k as f64;
                t.rows.push(vec![k, blowup_demo(horizon, k, &Vector::zeros(2))?]);
            }
            t
        }
    };
    Ok(table)
}

/// Writes `<out_dir>/<id>.csv` for a built-in example.
pub fn cmd_example(id: Example, out_dir: &Path, ov: &Overrides) -> Result<PathBuf, CliError> {
    let table = example_table(id, ov)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let path = out_dir.join(format!("{}.csv", id.name()));
    table.write(&path)?;
    Ok(path)
}
