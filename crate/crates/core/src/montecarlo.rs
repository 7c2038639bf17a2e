//! Eigenvalue and state simulation, Monte Carlo execution costs and the
//! two adversarial demonstrations (asymmetric impact, indefinite κ).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ExecError, Result};
use crate::grid::Grid;
use crate::lindyn::{constant_resolvent, pathwise_cost_with_impact, ExecutionPlan};
use crate::linalg::{self, quad, Mat, Vector};
use crate::model::{CoefficientSet, MarketSpec};
use crate::optimal::{optimal_state, FeedbackRule};
use crate::par::{map_indexed, pairwise_sum};
use crate::paths::{BrownianPath, LambdaPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub seed: u64,
    /// Must equal the grid of the coefficient set the rule was built on.
    pub grid_steps: usize,
    /// `Some(1)` runs sequentially; `None` uses the global thread pool.
    pub workers: Option<usize>,
}

impl SimConfig {
    pub fn new(n_paths: usize, seed: u64, grid_steps: usize) -> Self {
        Self { n_paths, seed, grid_steps, workers: None }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl MCEstimate {
    /// Mean and `sd/√n` with pairwise summation; identical samples give an
    /// exact mean and zero error.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if xs.iter().all(|&x| x == xs[0]) {
            return Self { mean: xs[0], stderr: 0.0, n_paths: n };
        }
        let mean = pairwise_sum(xs) / n as f64;
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if n > 1 { pairwise_sum(&dev) / (n - 1) as f64 } else { 0.0 };
        Self { mean, stderr: (var / n as f64).sqrt(), n_paths: n }
    }
}

/// Brownian increments for path `index`; the stream depends only on
/// `(seed, index)`.
pub fn brownian_path(grid: Grid, factors: usize, seed: u64, index: u64) -> BrownianPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let sd = grid.dt().sqrt();
    let increments = (0..grid.steps())
        .map(|_| Vector::from_fn(factors, |_, _| sd * rng.sample::<f64, _>(StandardNormal)))
        .collect();
    BrownianPath { grid, increments }
}

/// Exact log-scheme for `dλⱼ = λⱼμⱼ ds + Σₖλⱼσⱼₖ dWₖ` on the nodes of the
/// path's grid. The drift is integrated exactly, the volatility is taken at
/// the left end of each cell.
pub fn simulate_lambda(spec: &MarketSpec, w: &BrownianPath) -> Result<LambdaPath> {
    let grid = w.grid;
    if w.factors() != spec.factors {
        return Err(ExecError::Shape(format!("Brownian dimension {} but spec has {}", w.factors(), spec.factors)));
    }
    let h = grid.dt();
    let mut log = spec.lambda0.map(f64::ln);
    let mut values = Vec::with_capacity(grid.steps() + 1);
    values.push(spec.lambda0.clone());
    for i in 0..grid.steps() {
        let (t0, t1) = (grid.time(i), grid.time(i + 1));
        let sigma = spec.vol.eval(t0);
        let ito = sigma.map(|s| s * s).column_sum() * (0.5 * h);
        log += spec.drift.integrate(t0, t1) - ito + &sigma * &w.increments[i];
        values.push(log.map(f64::exp));
    }
    Ok(LambdaPath { grid, values })
}

/// How positions are chosen along a simulated path.
#[derive(Debug, Clone, Copy)]
pub enum StrategyRule<'a> {
    Fixed(&'a ExecutionPlan),
    Feedback(&'a FeedbackRule),
}

/// Cost of one path: pathwise cost plus risk for fixed plans, the
/// quadratic-form representation for feedback rules.
pub fn path_cost(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    rule: StrategyRule<'_>,
    w: Option<&BrownianPath>,
) -> Result<f64> {
    let grid = coeffs.grid();
    let steps = grid.steps();
    let eigen: Vec<Vector> = match w {
        Some(w) => simulate_lambda(spec, w)?.values,
        None => (0..=steps).map(|i| coeffs.eigen(2 * i).clone()).collect(),
    };
    let h = grid.dt();
    match rule {
        StrategyRule::Fixed(plan) => {
            let impact: Vec<Mat> = eigen.iter().map(|l| coeffs.gamma_power_of(l, 1.0)).collect();
            let c = pathwise_cost_with_impact(&impact, coeffs.resolvent(), &spec.d0, plan)?;
            let risk = crate::lindyn::risk_cost(coeffs, plan)?;
            Ok(c + risk)
        }
        StrategyRule::Feedback(fr) => {
            let hs = optimal_state(spec, coeffs, fr, w)?;
            let integrand = |i: usize| {
                let u = fr.control(i, &hs.values[i]);
                let x = coeffs.gamma_power_of(&eigen[i], -0.5) * (&u - &hs.values[i]);
                let e = x - coeffs.running_target(2 * i);
                quad(coeffs.kappa(2 * i), &u) + quad(coeffs.risk(2 * i), &e)
            };
            let vals: Vec<f64> = (0..=steps).map(integrand).collect();
            let running: f64 = (0..steps).map(|i| 0.5 * h * (vals[i] + vals[i + 1])).sum();
            let gt_half = coeffs.gamma_power_of(&eigen[steps], 0.5);
            let dt = &gt_half * (&hs.values[steps] + &gt_half * coeffs.terminal_target());
            let terminal = 0.5 * quad(&coeffs.gamma_power_of(&eigen[steps], -1.0), &dt);
            let initial = 0.5 * quad(&coeffs.gamma_power_of(&eigen[0], -1.0), &spec.d0);
            Ok(terminal + running - initial)
        }
    }
}

fn check_config(coeffs: &CoefficientSet, config: &SimConfig) -> Result<()> {
    if config.n_paths == 0 {
        return Err(ExecError::Config("n_paths must be at least 1".into()));
    }
    if config.grid_steps != coeffs.grid().steps() {
        return Err(ExecError::Config(format!(
            "simulation grid {} differs from coefficient grid {}",
            config.grid_steps,
            coeffs.grid().steps()
        )));
    }
    Ok(())
}

fn per_path<F>(coeffs: &CoefficientSet, config: &SimConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(Option<&BrownianPath>) -> Result<f64> + Sync + Send,
{
    check_config(coeffs, config)?;
    if !coeffs.is_stochastic() {
        let v = f(None)?;
        if !v.is_finite() {
            return Err(ExecError::NonFinitePath { path: 0 });
        }
        return Ok(vec![v; config.n_paths]);
    }
    let grid = coeffs.grid();
    let factors = coeffs.factors();
    let results = map_indexed(config.n_paths, config.workers, |i| {
        let w = brownian_path(grid, factors, config.seed, i as u64);
        f(Some(&w))
    })?;
    results
        .into_iter()
        .enumerate()
        .map(|(i, r)| match r {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) | Err(ExecError::NumericDomain { .. }) => Err(ExecError::NonFinitePath { path: i }),
            Err(e) => Err(e),
        })
        .collect()
}

/// Monte Carlo estimate of the expected execution cost of a rule.
///
/// With zero eigenvalue volatility the cost is deterministic and the
/// estimate has zero standard error.
pub fn mc_cost(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    rule: StrategyRule<'_>,
    config: &SimConfig,
) -> Result<MCEstimate> {
    let xs = per_path(coeffs, config, |w| path_cost(spec, coeffs, rule, w))?;
    Ok(MCEstimate::from_samples(&xs))
}

/// Estimate of `cost(a) − cost(b)` with common random numbers.
pub fn mc_cost_difference(
    spec: &MarketSpec,
    coeffs: &CoefficientSet,
    a: StrategyRule<'_>,
    b: StrategyRule<'_>,
    config: &SimConfig,
) -> Result<MCEstimate> {
    let xs = per_path(coeffs, config, |w| Ok(path_cost(spec, coeffs, a, w)? - path_cost(spec, coeffs, b, w)?))?;
    Ok(MCEstimate::from_samples(&xs))
}

/// Round trip that buys `N` of asset 1, buys `a` of asset 2, sells asset 1
/// and sells asset 2 at times `0, h, 2h, 3h` under a constant, possibly
/// asymmetric impact matrix `γ̃`, with `a = sign(γ̃₁₂ − γ̃₂₁)`.
pub fn asymmetric_roundtrip(gamma_tilde: &Mat, rho: &Mat, n_shares: f64, h: f64) -> Result<f64> {
    if gamma_tilde.shape() != (2, 2) || rho.shape() != (2, 2) {
        return Err(ExecError::Shape("round trip needs 2x2 impact and resilience".into()));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(ExecError::Precondition(format!("spacing must be positive, got {h}")));
    }
    let skew = gamma_tilde[(0, 1)] - gamma_tilde[(1, 0)];
    if skew == 0.0 {
        return Err(ExecError::DegenerateInput("impact matrix is symmetric".into()));
    }
    let a = skew.signum();
    let grid = Grid::new(3.0 * h, 3)?;
    let res = constant_resolvent(rho, grid)?;
    let v = |x: f64, y: f64| Vector::from_vec(vec![x, y]);
    let plan = ExecutionPlan {
        x_pre: v(0.0, 0.0),
        values: vec![v(n_shares, 0.0), v(n_shares, a), v(0.0, a)],
        terminal: v(0.0, 0.0),
    };
    pathwise_cost_with_impact(&vec![gamma_tilde.clone(); 4], &res, &v(0.0, 0.0), &plan)
}

/// Pathwise cost of the strategy that trades `kγ⁻¹e₁` at time zero, trades
/// at the constant rate `kγ⁻¹ρe₁` on `(0, T)` and closes at `T`, in the
/// market `γ = [[2,1],[1,1]]`, `ρ = [[1,2],[2,5]]` with `d = 0`.
pub fn blowup_demo(horizon: f64, k: f64, x: &Vector) -> Result<f64> {
    if !(horizon > 0.0 && horizon < 0.4) {
        return Err(ExecError::Precondition(format!("horizon must lie in (0, 2/5), got {horizon}")));
    }
    if x.len() != 2 {
        return Err(ExecError::Shape("position must have two assets".into()));
    }
    let gamma = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
    let rho = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
    let e1 = Vector::from_vec(vec![1.0, 0.0]);
    let gamma_inv = linalg::solve(&gamma, &linalg::identity(2)).ok_or(ExecError::Domain("singular γ".into()))?;
    let jump0 = &gamma_inv * &e1 * k;
    let rate = &gamma_inv * &rho * &e1 * k;

    let mut cost = 0.5 * quad(&gamma, &jump0);
    let mut d = &gamma * &jump0;
    // dD = (−ρD + γẊ)ds, dC = DᵀẊ ds, integrated by RK4
    let steps = 1000;
    let dt = horizon / steps as f64;
    let push = &gamma * &rate;
    let f = |dv: &Vector| (-(&rho * dv) + &push, dv.dot(&rate));
    for _ in 0..steps {
        let (k1, c1) = f(&d);
        let (k2, c2) = f(&(&d + &k1 * (dt / 2.0)));
        let (k3, c3) = f(&(&d + &k2 * (dt / 2.0)));
        let (k4, c4) = f(&(&d + &k3 * dt));
        d += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        cost += dt / 6.0 * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
    }
    let x_end = x + &jump0 + &rate * horizon;
    let close = -x_end;
    cost += d.dot(&close) + 0.5 * quad(&gamma, &close);
    Ok(cost)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::model::TimeFn;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn brownian_stream_is_keyed() {
        let g = Grid::new(1.0, 16).unwrap();
        let a = brownian_path(g, 2, 7, 3);
        assert_eq!(a, brownian_path(g, 2, 7, 3));
        assert_ne!(a, brownian_path(g, 2, 7, 4));
        assert_ne!(a, brownian_path(g, 2, 8, 3));
        let w = a.levels();
        assert_eq!(w.len(), 17);
        assert_eq!(w[0], Vector::zeros(2));
    }

    #[test]
    fn lambda_without_volatility() {
        let spec = MarketSpec::new(identity(2), v(&[1.0, 2.0]), identity(2), 1.0)
            .with_drift(TimeFn::Constant(v(&[0.5, -1.0])))
            .with_grid(8);
        let w = brownian_path(spec.grid().unwrap(), 1, 1, 0);
        let l = simulate_lambda(&spec, &w).unwrap();
        assert!((l.values[8][0] - 0.5f64.exp()).abs() < 1e-14);
        assert!((l.values[8][1] - 2.0 * (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn lambda_matches_exponential_of_brownian() {
        let spec = MarketSpec::new(identity(1), v(&[1.0]), identity(1), 1.0)
            .with_vol(TimeFn::Constant(Mat::from_element(1, 1, 1.0)), 1)
            .with_grid(10);
        let w = brownian_path(spec.grid().unwrap(), 1, 3, 5);
        let l = simulate_lambda(&spec, &w).unwrap();
        let lv = w.levels();
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            assert!((l.values[i][0] - (lv[i][0] - s / 2.0).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn blowup_values() {
        let zero = v(&[0.0, 0.0]);
        for k in [1.0, 10.0, 40.0] {
            assert!((blowup_demo(0.2, k, &zero).unwrap() + 0.1 * k * k).abs() < 1e-9 * k * k.max(1.0));
        }
        assert_eq!(blowup_demo(0.2, 0.0, &zero).unwrap(), 0.0);
        assert!(matches!(blowup_demo(0.4, 1.0, &zero), Err(ExecError::Precondition(_))));
        // general x: sum of the three closed-form pieces
        let (t, k) = (0.3, 5.0);
        let x = v(&[1.5, -0.5]);
        let want = k * k / 2.0 - t * k * k
            + k * k / 2.0 * (5.0 * t * t - 1.0)
            + k / 2.0 * (2.0 * t * x[0] + 4.0 * t * x[1])
            + 0.5 * (2.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + x[1] * x[1]);
        assert!((blowup_demo(t, k, &x).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn roundtrip_zero_resilience() {
        let gt = Mat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let z = Mat::zeros(2, 2);
        assert!((asymmetric_roundtrip(&gt, &z, 10.0, 0.1).unwrap() + 10.0).abs() < 1e-12);
        assert!((asymmetric_roundtrip(&gt.transpose(), &z, 10.0, 0.1).unwrap() + 10.0).abs() < 1e-12);
        assert!(matches!(asymmetric_roundtrip(&identity(2), &z, 1.0, 0.1), Err(ExecError::DegenerateInput(_))));
    }

    #[test]
    fn deterministic_mc_has_zero_stderr() {
        let spec = MarketSpec::new(identity(1), v(&[1.0]), identity(1), 1.0).with_position(v(&[2.0])).with_grid(10);
        let c = crate::model::derive_coefficients(&spec).unwrap();
        let plan = ExecutionPlan::immediate(&spec.x0, &v(&[0.0]), 10);
        let est = mc_cost(&spec, &c, StrategyRule::Fixed(&plan), &SimConfig::new(5, 1, 10)).unwrap();
        assert_eq!(est.stderr, 0.0);
        assert_eq!(est.n_paths, 5);
        assert!((est.mean - 2.0).abs() < 1e-15);
        assert!(mc_cost(&spec, &c, StrategyRule::Fixed(&plan), &SimConfig::new(5, 1, 11)).is_err());
    }
}
