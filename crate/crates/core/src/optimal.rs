//! Optimal execution: feedback rule, optimal state, strategy, deviation and
//! cost, plus closed-form oracles for the Obizhaeva-Wang subsetting.

use crate::error::{ExecError, Result};
use crate::grid::Grid;
use crate::lindyn::{check_brownian, hidden_start, DeviationPath, ExecutionPlan, HiddenState};
use crate::linalg::{self, identity, quad, Mat, Vector};
use crate::model::{derive_coefficients, CoefficientSet, MarketSpec};
use crate::montecarlo::simulate_lambda;
use crate::paths::BrownianPath;
use crate::riccati::{
    solve_riccati, solve_riccati_hat, solve_targets, theta, theta_hat, DriverKind, FeedbackGain, RiccatiSolution,
    TargetSolution,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolutionMode {
    /// `ξ = 0`, `ζ = 0`: plain Riccati equation and gain `θ`.
    ZeroTarget,
    /// `F`-transformed equations with targets.
    GeneralTarget,
}

impl SolutionMode {
    /// Zero-target mode when both targets vanish on the grid.
    pub fn for_coefficients(coeffs: &CoefficientSet) -> Self {
        let len = coeffs.grid().half_len();
        let zero = coeffs.terminal_target().iter().all(|&v| v == 0.0)
            && (0..len).all(|j| coeffs.running_target(j).iter().all(|&v| v == 0.0));
        if zero {
            SolutionMode::ZeroTarget
        } else {
            SolutionMode::GeneralTarget
        }
    }
}

/// Affine feedback `u = K𝓗 + k⁰` at the nodes and the cell midpoints.
#[derive(Debug, Clone)]
pub struct FeedbackRule {
    pub gain: FeedbackGain,
    pub offset: Vec<Vector>,
    pub offset_mids: Vec<Vector>,
}

impl FeedbackRule {
    /// `K = θ`, `k⁰ = 0`.
    pub fn zero_target(theta: FeedbackGain) -> Self {
        let n = theta.nodes[0].nrows();
        let offset = vec![Vector::zeros(n); theta.nodes.len()];
        let offset_mids = vec![Vector::zeros(n); theta.mids.len()];
        Self { gain: theta, offset, offset_mids }
    }

    /// `K = θ̂ + F`, `k⁰ = Fγ^{1/2}ζ − θ̂⁰`.
    pub fn general(coeffs: &CoefficientSet, f: &[Mat], theta_hat: &FeedbackGain, targets: &TargetSolution) -> Self {
        let steps = coeffs.grid().steps();
        let k0 = |j: usize, t0: &Vector| &f[j] * (coeffs.gamma_power(j, 0.5) * coeffs.running_target(j)) - t0;
        Self {
            gain: FeedbackGain {
                nodes: (0..=steps).map(|i| &theta_hat.nodes[i] + &f[2 * i]).collect(),
                mids: (0..steps).map(|i| &theta_hat.mids[i] + &f[2 * i + 1]).collect(),
            },
            offset: (0..=steps).map(|i| k0(2 * i, &targets.theta0[i])).collect(),
            offset_mids: (0..steps).map(|i| k0(2 * i + 1, &targets.theta0_mid[i])).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.gain.mids.len()
    }

    pub fn control(&self, i: usize, h: &Vector) -> Vector {
        &self.gain.nodes[i] * h + &self.offset[i]
    }
}

/// Builds the feedback rule belonging to a Riccati solution.
pub fn feedback_rule(
    coeffs: &CoefficientSet,
    riccati: &RiccatiSolution,
    targets: Option<&TargetSolution>,
) -> Result<FeedbackRule> {
    match riccati.kind() {
        DriverKind::Plain => {
            if targets.is_some() {
                return Err(ExecError::Config("target solution given for a zero-target Riccati solution".into()));
            }
            Ok(FeedbackRule::zero_target(theta(coeffs, riccati)?))
        }
        DriverKind::Hat => {
            let targets =
                targets.ok_or_else(|| ExecError::Config("transformed Riccati solution needs a target solution".into()))?;
            let f = coeffs.f()?;
            let th = theta_hat(coeffs, f, riccati)?;
            Ok(FeedbackRule::general(coeffs, f, &th, targets))
        }
    }
}

/// Optimal hidden deviation under a feedback rule: RK4 without a Brownian
/// path, Euler-Maruyama with one.
pub fn optimal_state(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    rule: &FeedbackRule,
    w: Option<&BrownianPath>,
) -> Result<HiddenState> {
    let grid = coeffs.grid();
    let steps = grid.steps();
    if rule.steps() != steps {
        return Err(ExecError::Shape(format!("feedback rule has {} cells, expected {steps}", rule.steps())));
    }
    let h = grid.dt();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(hidden_start(spec, coeffs));
    match w {
        None => {
            if coeffs.is_stochastic() {
                return Err(ExecError::Config("volatile eigenvalues need Brownian increments".into()));
            }
            let f = |j: usize, k: &Mat, k0: &Vector, x: &Vector| coeffs.a(j) * x + coeffs.b(j) * (k * x + k0);
            for i in 0..steps {
                let x = &values[i];
                let (km, k0m) = (&rule.gain.mids[i], &rule.offset_mids[i]);
                let k1 = f(2 * i, &rule.gain.nodes[i], &rule.offset[i], x);
                let k2 = f(2 * i + 1, km, k0m, &(x + &k1 * (h / 2.0)));
                let k3 = f(2 * i + 1, km, k0m, &(x + &k2 * (h / 2.0)));
                let k4 = f(2 * i + 2, &rule.gain.nodes[i + 1], &rule.offset[i + 1], &(x + &k3 * h));
                values.push(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
            }
        }
        Some(w) => {
            check_brownian(w, grid, coeffs.factors())?;
            for i in 0..steps {
                let j = 2 * i;
                let x = &values[i];
                let u = rule.control(i, x);
                let mut next = x + (coeffs.a(j) * x + coeffs.b(j) * &u) * h;
                let arg = x - &u * 2.0;
                for (k, c) in coeffs.c(j).iter().enumerate() {
                    next += c * &arg * w.increments[i][k];
                }
                values.push(next);
            }
        }
    }
    if values.iter().any(|v| !linalg::is_finite_vec(v)) {
        return Err(ExecError::NumericDomain { what: "optimal state", time: grid.horizon() });
    }
    Ok(HiddenState { values })
}

/// Optimal state, strategy, deviation and analytic cost.
#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub hidden: HiddenState,
    /// `X*` sampled at the left node of every cell.
    pub plan: ExecutionPlan,
    /// `X*` sampled at cell midpoints. The better staircase approximation
    /// when the plan is fed back into the cost functional.
    pub plan_mid: ExecutionPlan,
    pub deviation: DeviationPath,
    /// `u*(tᵢ)` for `i = 0..=N`.
    pub controls: Vec<Vector>,
    pub cost: f64,
    pub mode: SolutionMode,
}

/// Assembles `X* = γ^{-1/2}(u* − 𝓗*)` and `D* = γ^{1/2}u*`.
///
/// With a Brownian path the eigenvalues are simulated from the same path
/// and the state is integrated by Euler-Maruyama.
pub fn optimal_strategy(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    riccati: &RiccatiSolution,
    targets: Option<&TargetSolution>,
    w: Option<&BrownianPath>,
) -> Result<OptimalSolution> {
    let rule = feedback_rule(coeffs, riccati, targets)?;
    let hidden = optimal_state(spec, coeffs, &rule, w)?;
    let grid = coeffs.grid();
    let steps = grid.steps();
    let eigen: Vec<Vector> = match w {
        Some(w) => simulate_lambda(spec, w)?.values,
        None => (0..=steps).map(|i| coeffs.eigen(2 * i).clone()).collect(),
    };
    let controls: Vec<Vector> = (0..=steps).map(|i| rule.control(i, &hidden.values[i])).collect();
    let half = |i: usize| coeffs.gamma_power_of(&eigen[i], 0.5);
    let mhalf = |i: usize| coeffs.gamma_power_of(&eigen[i], -0.5);

    let values: Vec<Vector> = (0..steps).map(|i| mhalf(i) * (&controls[i] - &hidden.values[i])).collect();

    let dev_nodes: Vec<Vector> = (0..=steps).map(|i| half(i) * &controls[i]).collect();
    let (mids, mid_values): (Vec<Vector>, Vec<Vector>) = match w {
        None => (0..steps)
            .map(|i| {
                let hm = hidden_mid(coeffs, &rule, &hidden, i);
                let um = &rule.gain.mids[i] * &hm + &rule.offset_mids[i];
                let xm = coeffs.gamma_power(2 * i + 1, -0.5) * (&um - &hm);
                (coeffs.gamma_power(2 * i + 1, 0.5) * um, xm)
            })
            .unzip(),
        Some(_) => (0..steps)
            .map(|i| {
                let next = if i + 1 < steps {
                    mhalf(i + 1) * (&controls[i + 1] - &hidden.values[i + 1])
                } else {
                    values[i].clone()
                };
                ((&dev_nodes[i] + &dev_nodes[i + 1]) * 0.5, (&values[i] + next) * 0.5)
            })
            .unzip(),
    };
    let plan_mid = ExecutionPlan { x_pre: spec.x0.clone(), values: mid_values, terminal: spec.terminal_target.clone() };
    let plan = ExecutionPlan { x_pre: spec.x0.clone(), values, terminal: spec.terminal_target.clone() };
    let gt_half = half(steps);
    let terminal = &gt_half * (&hidden.values[steps] + &gt_half * &spec.terminal_target);
    let deviation = DeviationPath {
        d_pre: spec.d0.clone(),
        values: dev_nodes[..steps].to_vec(),
        mids,
        lefts: dev_nodes[1..].to_vec(),
        terminal,
    };
    let cost = optimal_cost(spec, coeffs, riccati, targets)?;
    let mode = match riccati.kind() {
        DriverKind::Plain => SolutionMode::ZeroTarget,
        DriverKind::Hat => SolutionMode::GeneralTarget,
    };
    Ok(OptimalSolution { hidden, plan, plan_mid, deviation, controls, cost, mode })
}

fn hidden_mid(coeffs: &CoefficientSet, rule: &FeedbackRule, hs: &HiddenState, i: usize) -> Vector {
    let slope = |k: usize| {
        let x = &hs.values[k];
        coeffs.a(2 * k) * x + coeffs.b(2 * k) * rule.control(k, x)
    };
    let h = coeffs.grid().dt();
    (&hs.values[i] + &hs.values[i + 1]) * 0.5 + (slope(i) - slope(i + 1)) * (h / 8.0)
}

/// Analytic optimal cost from the Riccati (and target) solution.
pub fn optimal_cost(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    riccati: &RiccatiSolution,
    targets: Option<&TargetSolution>,
) -> Result<f64> {
    let h0 = hidden_start(spec, coeffs);
    let base = quad(riccati.value(0), &h0) - 0.5 * quad(&coeffs.gamma_power(0, -1.0), &spec.d0);
    let cost = match (riccati.kind(), targets) {
        (DriverKind::Plain, None) => base,
        (DriverKind::Hat, Some(t)) => base - 2.0 * h0.dot(&t.psi[0]) + t.v0,
        (DriverKind::Plain, Some(_)) => {
            return Err(ExecError::Config("target solution given for a zero-target Riccati solution".into()))
        }
        (DriverKind::Hat, None) => {
            return Err(ExecError::Config("transformed Riccati solution needs a target solution".into()))
        }
    };
    if !cost.is_finite() {
        return Err(ExecError::NumericDomain { what: "optimal cost", time: 0.0 });
    }
    Ok(cost)
}

/// All pieces of a solve.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub mode: SolutionMode,
    pub riccati: RiccatiSolution,
    pub targets: Option<TargetSolution>,
    pub rule: FeedbackRule,
}

/// Solves the backward equations for the requested mode.
pub fn build_pipeline(coeffs: &CoefficientSet, mode: SolutionMode) -> Result<Pipeline> {
    match mode {
        SolutionMode::ZeroTarget => {
            let riccati = solve_riccati(coeffs)?;
            let rule = FeedbackRule::zero_target(theta(coeffs, &riccati)?);
            Ok(Pipeline { mode, riccati, targets: None, rule })
        }
        SolutionMode::GeneralTarget => {
            let f = coeffs.f()?;
            let riccati = solve_riccati_hat(coeffs, f)?;
            let th = theta_hat(coeffs, f, &riccati)?;
            let targets = solve_targets(coeffs, f, &riccati, &th)?;
            let rule = FeedbackRule::general(coeffs, f, &th, &targets);
            Ok(Pipeline { mode, riccati, targets: Some(targets), rule })
        }
    }
}

impl Pipeline {
    pub fn strategy(
        &self,
        spec: &MarketSpec,
        coeffs: &CoefficientSet,
        w: Option<&BrownianPath>,
    ) -> Result<OptimalSolution> {
        optimal_strategy(spec, coeffs, &self.riccati, self.targets.as_ref(), w)
    }

    pub fn cost(&self, spec: &MarketSpec, coeffs: &CoefficientSet) -> Result<f64> {
        optimal_cost(spec, coeffs, &self.riccati, self.targets.as_ref())
    }
}

/// Derives the coefficients, picks the mode from the targets and solves.
pub fn solve(spec: &MarketSpec) -> Result<OptimalSolution> {
    let coeffs = derive_coefficients(spec)?;
    let pipeline = build_pipeline(&coeffs, SolutionMode::for_coefficients(&coeffs))?;
    pipeline.strategy(spec, &coeffs, None)
}

/// Closed-form optimal plan for two assets with `γ = I` and
/// `ρ = [[ρ₁, ρ₃], [ρ₃, ρ₂]]`, starting from `x = (x₁, 0)`, `d = 0`.
pub fn crossing_zero_oracle(horizon: f64, x1: f64, rho1: f64, rho2: f64, rho3: f64, grid: Grid) -> Result<ExecutionPlan> {
    if !(rho1 > 0.0 && rho1 * rho2 > rho3 * rho3) {
        return Err(ExecError::Domain("resilience must be positive definite".into()));
    }
    if (grid.horizon() - horizon).abs() > 1e-12 * horizon {
        return Err(ExecError::Shape("grid horizon differs from T".into()));
    }
    let t = horizon;
    let den = (2.0 + t * rho1) * (2.0 + t * rho2) - t * t * rho3 * rho3;
    let f = |s: f64| {
        let x1s = ((1.0 + (t - s) * rho1) * (2.0 + t * rho2) - t * (t - s) * rho3 * rho3) * x1 / den;
        let x2s = (t - 2.0 * s) * rho3 * x1 / den;
        Vector::from_vec(vec![x1s, x2s])
    };
    Ok(ExecutionPlan::from_fn(grid, Vector::from_vec(vec![x1, 0.0]), f, Vector::zeros(2)))
}

/// Closed-form Obizhaeva-Wang strategy and deviation for constant `γ` and
/// `ρ`, zero risk and zero targets.
pub fn ow_closed_form_strategy(
    gamma: &Mat,
    rho: &Mat,
    x: &Vector,
    d: &Vector,
    grid: Grid,
) -> Result<(ExecutionPlan, DeviationPath)> {
    let (o, lam) = linalg::eigen_frame(gamma);
    if lam.iter().any(|&l| l <= 0.0) {
        return Err(ExecError::Domain("impact must be positive definite".into()));
    }
    let n = x.len();
    let half = linalg::frame_conjugate(&o, &lam.map(f64::sqrt));
    let mhalf = linalg::frame_conjugate(&o, &lam.map(|l| l.powf(-0.5)));
    let g = &mhalf * rho * &half;
    let b = -&g;
    let r = (&g + g.transpose()) * 0.5;
    let rinv_bt = linalg::solve(&r, &b.transpose()).ok_or_else(|| ExecError::Domain("κ is singular".into()))?;
    let m = &b * &rinv_bt;
    let t = grid.horizon();
    let k = identity(n) + &m * (0.5 * t);
    let kinv = linalg::solve(&k, &identity(n)).ok_or_else(|| ExecError::Domain("I + TBR⁻¹Bᵀ/2 singular".into()))?;
    let h0 = &mhalf * d - &half * x;
    let level = &mhalf * (&rinv_bt * &kinv + identity(n) * 2.0) * &h0 * -0.5;
    let rate = &mhalf * &m * &kinv * &h0 * 0.5;
    let plan = ExecutionPlan::from_fn(grid, x.clone(), |s| &level + &rate * s, Vector::zeros(n));
    let dconst = &half * &rinv_bt * &kinv * &h0 * -0.5;
    let steps = grid.steps();
    let dev = DeviationPath {
        d_pre: d.clone(),
        values: vec![dconst.clone(); steps],
        mids: vec![dconst.clone(); steps],
        lefts: vec![dconst; steps],
        terminal: &half * &kinv * &h0,
    };
    Ok((plan, dev))
}

/// `X*(s) = (I + (T − s)ρ)(2I + Tρ)⁻¹(x − γ⁻¹d)` for symmetric `ρ` commuting
/// with `γ`.
pub fn ow_commuting_plan(gamma: &Mat, rho: &Mat, x: &Vector, d: &Vector, grid: Grid) -> Result<ExecutionPlan> {
    let n = x.len();
    let t = grid.horizon();
    let target = x - linalg::solve_vec(gamma, d).ok_or_else(|| ExecError::Domain("impact is singular".into()))?;
    let base = linalg::solve_vec(&(identity(n) * 2.0 + rho * t), &target)
        .ok_or_else(|| ExecError::Domain("2I + Tρ is singular".into()))?;
    Ok(ExecutionPlan::from_fn(grid, x.clone(), |s| (identity(n) + rho * (t - s)) * &base, Vector::zeros(n)))
}
