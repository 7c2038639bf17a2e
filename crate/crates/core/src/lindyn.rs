//! Deviation dynamics, execution costs, the hidden-deviation state and the
//! strategy/control bijection.
//!
//! Strategies are piecewise constant with block trades at grid nodes, so the
//! Stieltjes integrals in the deviation and the pathwise cost are finite sums.

use crate::error::{ExecError, Result};
use crate::grid::Grid;
use crate::linalg::{self, identity, quad, Mat, Vector};
use crate::model::{CoefficientSet, MarketSpec, TimeFn};
use crate::paths::{BrownianPath, LambdaPath};

/// `ν` and `ν⁻¹` with `dν = νρ ds`, `dν⁻¹ = −ρν⁻¹ ds`, `ν(0) = I`, sampled on
/// the half-grid.
#[derive(Debug, Clone)]
pub struct Resolvent {
    grid: Grid,
    nu: Vec<Mat>,
    nu_inv: Vec<Mat>,
}

impl Resolvent {
    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn nu(&self, i: usize) -> &Mat {
        &self.nu[2 * i]
    }
    pub fn nu_inv(&self, i: usize) -> &Mat {
        &self.nu_inv[2 * i]
    }
    pub fn nu_half(&self, j: usize) -> &Mat {
        &self.nu[j]
    }
    pub fn nu_inv_half(&self, j: usize) -> &Mat {
        &self.nu_inv[j]
    }
    /// `maxᵢ ‖ν(tᵢ)ν⁻¹(tᵢ) − I‖_F`.
    pub fn max_inverse_defect(&self) -> f64 {
        let n = self.nu[0].nrows();
        self.nu
            .iter()
            .zip(&self.nu_inv)
            .map(|(a, b)| (a * b - identity(n)).norm())
            .fold(0.0, f64::max)
    }
}

/// Resolvent of a constant resilience matrix by matrix exponentials.
pub fn constant_resolvent(rho: &Mat, grid: Grid) -> Result<Resolvent> {
    let len = grid.half_len();
    let mut nu = Vec::with_capacity(len);
    let mut nu_inv = Vec::with_capacity(len);
    for j in 0..len {
        let t = grid.half_time(j);
        let (a, b) = ((rho * t).exp(), (rho * -t).exp());
        if !(linalg::is_finite_mat(&a) && linalg::is_finite_mat(&b)) {
            return Err(ExecError::NumericDomain { what: "resolvent", time: t });
        }
        nu.push(a);
        nu_inv.push(b);
    }
    Ok(Resolvent { grid, nu, nu_inv })
}

/// Integrates the resolvent with classical RK4 on the half-grid.
pub fn resolvent(rho: &TimeFn<Mat>, grid: Grid) -> Result<Resolvent> {
    let n = rho.eval(0.0).nrows();
    let len = grid.half_len();
    let mut nu = Vec::with_capacity(len);
    let mut nu_inv = Vec::with_capacity(len);
    nu.push(identity(n));
    nu_inv.push(identity(n));
    let h = grid.dt() / 2.0;
    for j in 0..len - 1 {
        let t = grid.half_time(j);
        let (r0, r1, r2) = (rho.eval(t), rho.eval(t + h / 2.0), rho.eval(grid.half_time(j + 1)));
        let v = &nu[j];
        let k1 = v * &r0;
        let k2 = (v + &k1 * (h / 2.0)) * &r1;
        let k3 = (v + &k2 * (h / 2.0)) * &r1;
        let k4 = (v + &k3 * h) * &r2;
        let next = v + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let w = &nu_inv[j];
        let l1 = -(&r0 * w);
        let l2 = -(&r1 * (w + &l1 * (h / 2.0)));
        let l3 = -(&r1 * (w + &l2 * (h / 2.0)));
        let l4 = -(&r2 * (w + &l3 * h));
        let next_inv = w + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
        if !(linalg::is_finite_mat(&next) && linalg::is_finite_mat(&next_inv)) {
            return Err(ExecError::NumericDomain { what: "resolvent", time: grid.half_time(j + 1) });
        }
        nu.push(next);
        nu_inv.push(next_inv);
    }
    Ok(Resolvent { grid, nu, nu_inv })
}

/// Position path: `X(0−) = x_pre`, `X = values[i]` on `[tᵢ, tᵢ₊₁)`, `X(T) = terminal`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionPlan {
    pub x_pre: Vector,
    pub values: Vec<Vector>,
    pub terminal: Vector,
}

impl ExecutionPlan {
    pub fn steps(&self) -> usize {
        self.values.len()
    }

    /// Close to `target` at time zero and hold it.
    pub fn immediate(x: &Vector, target: &Vector, steps: usize) -> Self {
        Self { x_pre: x.clone(), values: vec![target.clone(); steps], terminal: target.clone() }
    }

    /// Samples `f` at the left end of every cell.
    pub fn from_fn(grid: Grid, x_pre: Vector, f: impl Fn(f64) -> Vector, terminal: Vector) -> Self {
        let values = (0..grid.steps()).map(|i| f(grid.time(i))).collect();
        Self { x_pre, values, terminal }
    }

    /// Block trade `ΔX(tᵢ)` for `i = 0..=N`.
    pub fn jump(&self, i: usize) -> Vector {
        let n = self.values.len();
        if i == 0 {
            &self.values[0] - &self.x_pre
        } else if i < n {
            &self.values[i] - &self.values[i - 1]
        } else {
            &self.terminal - &self.values[n - 1]
        }
    }

    pub fn check_shape(&self, assets: usize, steps: usize) -> Result<()> {
        if self.values.len() != steps {
            return Err(ExecError::Shape(format!("plan has {} grid values, expected {steps}", self.values.len())));
        }
        let all = std::iter::once(&self.x_pre).chain(&self.values).chain(std::iter::once(&self.terminal));
        for v in all {
            if v.len() != assets {
                return Err(ExecError::Shape(format!("plan vector of length {}, expected {assets}", v.len())));
            }
            if !linalg::is_finite_vec(v) {
                return Err(ExecError::Domain("plan has non-finite entries".into()));
            }
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            x_pre: &self.x_pre * c,
            values: self.values.iter().map(|v| v * c).collect(),
            terminal: &self.terminal * c,
        }
    }
}

/// Deviation of a plan: right values at the nodes, values at the cell
/// midpoints and left limits at the right ends of the cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationPath {
    pub d_pre: Vector,
    pub values: Vec<Vector>,
    pub mids: Vec<Vector>,
    pub lefts: Vec<Vector>,
    pub terminal: Vector,
}

impl DeviationPath {
    /// `D(tᵢ−)` for `i = 0..=N`.
    pub fn left_at(&self, i: usize) -> &Vector {
        if i == 0 {
            &self.d_pre
        } else {
            &self.lefts[i - 1]
        }
    }
}

/// `D(r) = ν⁻¹(r)(d + Σ_{tₖ ≤ r} ν(tₖ)γ(tₖ)ΔX(tₖ))` for an arbitrary (possibly
/// asymmetric) impact matrix at each node.
pub fn deviation_with_impact(
    impact: &[Mat],
    res: &Resolvent,
    d: &Vector,
    plan: &ExecutionPlan,
) -> Result<DeviationPath> {
    let steps = res.grid().steps();
    plan.check_shape(d.len(), steps)?;
    if impact.len() != steps + 1 {
        return Err(ExecError::Shape(format!("{} impact matrices for {steps} steps", impact.len())));
    }
    let mut acc = d.clone();
    let mut values = Vec::with_capacity(steps);
    let mut mids = Vec::with_capacity(steps);
    let mut lefts = Vec::with_capacity(steps);
    for i in 0..steps {
        acc += res.nu(i) * (&impact[i] * plan.jump(i));
        values.push(res.nu_inv(i) * &acc);
        mids.push(res.nu_inv_half(2 * i + 1) * &acc);
        lefts.push(res.nu_inv(i + 1) * &acc);
    }
    acc += res.nu(steps) * (&impact[steps] * plan.jump(steps));
    let terminal = res.nu_inv(steps) * &acc;
    Ok(DeviationPath { d_pre: d.clone(), values, mids, lefts, terminal })
}

/// `Σᵢ D(tᵢ−)ᵀΔX(tᵢ) + ½ ΔX(tᵢ)ᵀγ(tᵢ)ΔX(tᵢ)`.
pub fn pathwise_cost_with_impact(impact: &[Mat], res: &Resolvent, d: &Vector, plan: &ExecutionPlan) -> Result<f64> {
    let dev = deviation_with_impact(impact, res, d, plan)?;
    Ok(pathwise_from_deviation(impact, &dev, plan))
}

fn pathwise_from_deviation(impact: &[Mat], dev: &DeviationPath, plan: &ExecutionPlan) -> f64 {
    (0..impact.len())
        .map(|i| {
            let dx = plan.jump(i);
            dev.left_at(i).dot(&dx) + 0.5 * quad(&impact[i], &dx)
        })
        .sum()
}

/// Eigenvalues at the nodes: from the path if given, else deterministic.
fn node_eigen(coeffs: &CoefficientSet, lambda: Option<&LambdaPath>) -> Result<Vec<Vector>> {
    let steps = coeffs.grid().steps();
    match lambda {
        Some(path) => {
            if path.values.len() != steps + 1 {
                return Err(ExecError::Shape(format!(
                    "eigenvalue path has {} nodes, expected {}",
                    path.values.len(),
                    steps + 1
                )));
            }
            Ok(path.values.clone())
        }
        None => {
            if coeffs.is_stochastic() {
                return Err(ExecError::Config("stochastic eigenvalues need a simulated eigenvalue path".into()));
            }
            Ok((0..=steps).map(|i| coeffs.eigen(2 * i).clone()).collect())
        }
    }
}

fn node_impacts(coeffs: &CoefficientSet, eigen: &[Vector]) -> Vec<Mat> {
    eigen.iter().map(|l| coeffs.gamma_power_of(l, 1.0)).collect()
}

pub fn deviation_of_plan(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    plan: &ExecutionPlan,
    lambda: Option<&LambdaPath>,
) -> Result<DeviationPath> {
    let eigen = node_eigen(coeffs, lambda)?;
    deviation_with_impact(&node_impacts(coeffs, &eigen), coeffs.resolvent(), &spec.d0, plan)
}

pub fn pathwise_cost(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    plan: &ExecutionPlan,
    lambda: Option<&LambdaPath>,
) -> Result<f64> {
    let eigen = node_eigen(coeffs, lambda)?;
    pathwise_cost_with_impact(&node_impacts(coeffs, &eigen), coeffs.resolvent(), &spec.d0, plan)
}

/// `½D(T)ᵀγ⁻¹(T)D(T) − ½dᵀγ⁻¹(0)d + ∫Dᵀγ^{-1/2}κγ^{-1/2}D ds`, the κ
/// integral by the trapezoid rule on each cell.
pub fn cost_quadratic_form(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    plan: &ExecutionPlan,
    lambda: Option<&LambdaPath>,
) -> Result<f64> {
    let eigen = node_eigen(coeffs, lambda)?;
    let dev = deviation_with_impact(&node_impacts(coeffs, &eigen), coeffs.resolvent(), &spec.d0, plan)?;
    Ok(quadratic_form_from_deviation(coeffs, &eigen, &dev))
}

pub(crate) fn quadratic_form_from_deviation(coeffs: &CoefficientSet, eigen: &[Vector], dev: &DeviationPath) -> f64 {
    let grid = coeffs.grid();
    let steps = grid.steps();
    let weight: Vec<Mat> = (0..=steps)
        .map(|i| {
            let gm = coeffs.gamma_power_of(&eigen[i], -0.5);
            &gm * coeffs.kappa(2 * i) * &gm
        })
        .collect();
    let h = grid.dt();
    let running: f64 = (0..steps)
        .map(|i| 0.5 * h * (quad(&weight[i], &dev.values[i]) + quad(&weight[i + 1], &dev.lefts[i])))
        .sum();
    let g_inv_t = coeffs.gamma_power_of(&eigen[steps], -1.0);
    let g_inv_0 = coeffs.gamma_power_of(&eigen[0], -1.0);
    0.5 * quad(&g_inv_t, &dev.terminal) - 0.5 * quad(&g_inv_0, &dev.d_pre) + running
}

/// `∫(X − ζ)ᵀΞ(X − ζ) ds`, Simpson's rule on every cell.
pub fn risk_cost(coeffs: &CoefficientSet, plan: &ExecutionPlan) -> Result<f64> {
    let grid = coeffs.grid();
    plan.check_shape(coeffs.assets(), grid.steps())?;
    let h = grid.dt();
    let term = |j: usize, x: &Vector| {
        let e = x - coeffs.running_target(j);
        quad(coeffs.risk(j), &e)
    };
    Ok((0..grid.steps())
        .map(|i| {
            let x = &plan.values[i];
            h / 6.0 * (term(2 * i, x) + 4.0 * term(2 * i + 1, x) + term(2 * i + 2, x))
        })
        .sum())
}

/// Finite-variation cost `J^fv = C + ∫(X − ζ)ᵀΞ(X − ζ)`.
pub fn fv_cost(spec: &MarketSpec, coeffs: &CoefficientSet, plan: &ExecutionPlan) -> Result<f64> {
    Ok(pathwise_cost(spec, coeffs, plan, None)? + risk_cost(coeffs, plan)?)
}

/// Control sampled at the start, midpoint and right-end left limit of every
/// cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub starts: Vec<Vector>,
    pub mids: Vec<Vector>,
    pub ends: Vec<Vector>,
}

impl ControlPath {
    pub fn piecewise_constant(values: Vec<Vector>) -> Self {
        Self { starts: values.clone(), mids: values.clone(), ends: values }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> Vector) -> Self {
        let steps = grid.steps();
        Self {
            starts: (0..steps).map(|i| f(grid.time(i))).collect(),
            mids: (0..steps).map(|i| f(grid.half_time(2 * i + 1))).collect(),
            ends: (0..steps).map(|i| f(grid.time(i + 1))).collect(),
        }
    }

    pub fn steps(&self) -> usize {
        self.starts.len()
    }
}

/// Hidden deviation `𝓗` at the nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState {
    pub values: Vec<Vector>,
}

/// `𝓗(0) = γ^{-1/2}(0)d − γ^{1/2}(0)x`.
pub fn hidden_start(spec: &MarketSpec, coeffs: &CoefficientSet) -> Vector {
    coeffs.gamma_power(0, -0.5) * &spec.d0 - coeffs.gamma_power(0, 0.5) * &spec.x0
}

/// Solves `d𝓗 = (𝒜𝓗 + ℬu)ds + Σ𝒞ᵏ(𝓗 − 2u)dWₖ`.
///
/// RK4 when no Brownian path is given (requires `𝒞 ≡ 0`), Euler-Maruyama with
/// left-point coefficients otherwise.
pub fn hidden_state(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    u: &ControlPath,
    w: Option<&BrownianPath>,
) -> Result<HiddenState> {
    let grid = coeffs.grid();
    let steps = grid.steps();
    if u.steps() != steps {
        return Err(ExecError::Shape(format!("control has {} cells, expected {steps}", u.steps())));
    }
    let h = grid.dt();
    let mut values = Vec::with_capacity(steps + 1);
    values.push(hidden_start(spec, coeffs));
    match w {
        None => {
            if coeffs.is_stochastic() {
                return Err(ExecError::Config("volatile eigenvalues need Brownian increments".into()));
            }
            for i in 0..steps {
                let f = |j: usize, x: &Vector, v: &Vector| coeffs.a(j) * x + coeffs.b(j) * v;
                let x = &values[i];
                let k1 = f(2 * i, x, &u.starts[i]);
                let k2 = f(2 * i + 1, &(x + &k1 * (h / 2.0)), &u.mids[i]);
                let k3 = f(2 * i + 1, &(x + &k2 * (h / 2.0)), &u.mids[i]);
                let k4 = f(2 * i + 2, &(x + &k3 * h), &u.ends[i]);
                let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
                values.push(next);
            }
        }
        Some(w) => {
            check_brownian(w, grid, coeffs.factors())?;
            for i in 0..steps {
                let j = 2 * i;
                let x = &values[i];
                let ui = &u.starts[i];
                let mut next = x + (coeffs.a(j) * x + coeffs.b(j) * ui) * h;
                let noise_arg = x - ui * 2.0;
                for (k, c) in coeffs.c(j).iter().enumerate() {
                    next += c * &noise_arg * w.increments[i][k];
                }
                values.push(next);
            }
        }
    }
    if values.iter().any(|v| !linalg::is_finite_vec(v)) {
        return Err(ExecError::NumericDomain { what: "hidden state", time: grid.horizon() });
    }
    Ok(HiddenState { values })
}

pub(crate) fn check_brownian(w: &BrownianPath, grid: Grid, factors: usize) -> Result<()> {
    if w.increments.len() != grid.steps() || w.factors() != factors {
        return Err(ExecError::Shape(format!(
            "Brownian path has {} increments of dimension {}, expected {} of dimension {factors}",
            w.increments.len(),
            w.factors(),
            grid.steps()
        )));
    }
    Ok(())
}

fn require_deterministic(coeffs: &CoefficientSet, what: &str) -> Result<()> {
    if coeffs.is_stochastic() {
        Err(ExecError::Unsupported(format!("{what} requires zero eigenvalue volatility")))
    } else {
        Ok(())
    }
}

/// `φ(X) = γ^{-1/2}D^X`.
pub fn phi(spec: &MarketSpec, coeffs: &CoefficientSet, plan: &ExecutionPlan) -> Result<ControlPath> {
    require_deterministic(coeffs, "phi")?;
    let dev = deviation_of_plan(spec, coeffs, plan, None)?;
    let steps = coeffs.grid().steps();
    let g = |j: usize| coeffs.gamma_power(j, -0.5);
    Ok(ControlPath {
        starts: (0..steps).map(|i| g(2 * i) * &dev.values[i]).collect(),
        mids: (0..steps).map(|i| g(2 * i + 1) * &dev.mids[i]).collect(),
        ends: (0..steps).map(|i| g(2 * i + 2) * &dev.lefts[i]).collect(),
    })
}

/// `φ̄(u) = γ^{-1/2}(u − 𝓗ᵘ)` on the interior nodes, `X(0−) = x`, `X(T) = ξ`.
pub fn phi_bar(spec: &MarketSpec, coeffs: &CoefficientSet, u: &ControlPath) -> Result<ExecutionPlan> {
    require_deterministic(coeffs, "phi_bar")?;
    let hs = hidden_state(spec, coeffs, u, None)?;
    let values = (0..coeffs.grid().steps())
        .map(|i| coeffs.gamma_power(2 * i, -0.5) * (&u.starts[i] - &hs.values[i]))
        .collect();
    Ok(ExecutionPlan { x_pre: spec.x0.clone(), values, terminal: spec.terminal_target.clone() })
}

/// `𝐝(X, X̃) = (∫(D − D̃)ᵀγ⁻¹(D − D̃) ds)^{1/2}`, Simpson on every cell.
pub fn metric(spec: &MarketSpec, coeffs: &CoefficientSet, a: &ExecutionPlan, b: &ExecutionPlan) -> Result<f64> {
    require_deterministic(coeffs, "metric")?;
    let da = deviation_of_plan(spec, coeffs, a, None)?;
    let db = deviation_of_plan(spec, coeffs, b, None)?;
    let grid = coeffs.grid();
    let h = grid.dt();
    let term = |j: usize, x: &Vector, y: &Vector| quad(&coeffs.gamma_power(j, -1.0), &(x - y));
    let sq: f64 = (0..grid.steps())
        .map(|i| {
            h / 6.0
                * (term(2 * i, &da.values[i], &db.values[i])
                    + 4.0 * term(2 * i + 1, &da.mids[i], &db.mids[i])
                    + term(2 * i + 2, &da.lefts[i], &db.lefts[i]))
        })
        .sum();
    Ok(sq.max(0.0).sqrt())
}

/// Finite-variation approximations of `φ̄(u)`: for each level `L` the control
/// is replaced by its averages over `L` equal blocks of cells and mapped back
/// through `φ̄`.
pub fn fv_approximate(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    u: &ControlPath,
    levels: &[usize],
) -> Result<Vec<ExecutionPlan>> {
    require_deterministic(coeffs, "fv_approximate")?;
    let steps = coeffs.grid().steps();
    if u.steps() != steps {
        return Err(ExecError::Shape(format!("control has {} cells, expected {steps}", u.steps())));
    }
    // With constant O the projection onto piecewise constants commutes with
    // the eigenframe rotation, so averaging u directly is the same as
    // averaging Ou.
    let cell_mean: Vec<Vector> =
        (0..steps).map(|i| (&u.starts[i] + &u.mids[i] * 4.0 + &u.ends[i]) / 6.0).collect();
    levels
        .iter()
        .map(|&level| {
            if level == 0 || level > steps {
                return Err(ExecError::Config(format!("level {level} outside 1..={steps}")));
            }
            let mut values = Vec::with_capacity(steps);
            for b in 0..level {
                let (lo, hi) = (b * steps / level, (b + 1) * steps / level);
                let avg = cell_mean[lo..hi].iter().fold(Vector::zeros(spec.assets), |acc, v| acc + v)
                    / (hi - lo) as f64;
                values.extend(std::iter::repeat_n(avg, hi - lo));
            }
            phi_bar(spec, coeffs, &ControlPath::piecewise_constant(values))
        })
        .collect()
}
