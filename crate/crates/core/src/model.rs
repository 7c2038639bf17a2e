//! Market specification and the LQ coefficients derived from it.

use std::fmt;
use std::sync::Arc;

use crate::error::{ExecError, Result};
use crate::grid::Grid;
use crate::lindyn::{resolvent, Resolvent};
use crate::linalg::{self, asymmetry, frame_conjugate, identity, min_eigenvalue, symmetrize, Mat, Vector};
use crate::paths::LambdaPath;

/// Orthogonality tolerance for the eigenframe.
pub const ORTHO_TOL: f64 = 1e-12;
/// Symmetry tolerance for the risk matrix.
pub const XI_SYM_TOL: f64 = 1e-12;
/// Positive-definiteness floor used when forming `F = ℛ⁻¹𝒬`.
pub const DELTA_F: f64 = 1e-9;

/// A deterministic function of time.
#[derive(Clone)]
pub enum TimeFn<T> {
    Constant(T),
    /// Piecewise constant: `values[k]` on `[times[k], times[k+1])`, `values[0]`
    /// before `times[0]` and the last value after the last knot.
    Piecewise { times: Vec<f64>, values: Vec<T> },
    Func(Arc<dyn Fn(f64) -> T + Send + Sync>),
}

impl<T: Clone> TimeFn<T> {
    pub fn func(f: impl Fn(f64) -> T + Send + Sync + 'static) -> Self {
        TimeFn::Func(Arc::new(f))
    }

    pub fn piecewise(times: Vec<f64>, values: Vec<T>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(ExecError::InvalidSpec(
                "piecewise table needs matching, non-empty times and values".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[0] < w[1])) || times.iter().any(|t| !t.is_finite()) {
            return Err(ExecError::InvalidSpec("piecewise times must be finite and strictly increasing".into()));
        }
        Ok(TimeFn::Piecewise { times, values })
    }

    pub fn eval(&self, t: f64) -> T {
        match self {
            TimeFn::Constant(v) => v.clone(),
            TimeFn::Piecewise { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                values[k.saturating_sub(1)].clone()
            }
            TimeFn::Func(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, TimeFn::Constant(_))
    }
}

impl<T: fmt::Debug> fmt::Debug for TimeFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeFn::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            TimeFn::Piecewise { times, values } => f
                .debug_struct("Piecewise")
                .field("times", times)
                .field("values", values)
                .finish(),
            TimeFn::Func(_) => f.write_str("Func(..)"),
        }
    }
}

impl TimeFn<Vector> {
    /// `∫_a^b f(s) ds`, exact for constant and piecewise tables.
    pub fn integrate(&self, a: f64, b: f64) -> Vector {
        match self {
            TimeFn::Constant(v) => v * (b - a),
            TimeFn::Piecewise { times, values } => {
                let mut acc = values[0].clone() * 0.0;
                let mut lo = a;
                while lo < b {
                    let k = times.partition_point(|&s| s <= lo);
                    let hi = times.get(k).copied().unwrap_or(f64::INFINITY).min(b);
                    acc += &values[k.saturating_sub(1)] * (hi - lo);
                    lo = hi;
                }
                acc
            }
            TimeFn::Func(f) => simpson(f.as_ref(), a, b, 64),
        }
    }
}

fn simpson(f: &dyn Fn(f64) -> Vector, a: f64, b: f64, panels: usize) -> Vector {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(a + i as f64 * h) * w;
    }
    acc * (h / 3.0)
}

/// A complete problem instance.
///
/// Price impact is `γ(t) = Oᵀ diag(λ(t)) O` with
/// `dλⱼ = λⱼ μⱼ dt + Σₖ λⱼ σⱼₖ dWₖ`. Everything else is deterministic.
#[derive(Debug, Clone)]
pub struct MarketSpec {
    pub assets: usize,
    pub factors: usize,
    pub horizon: f64,
    pub frame: Mat,
    pub lambda0: Vector,
    pub drift: TimeFn<Vector>,
    pub vol: TimeFn<Mat>,
    pub resilience: TimeFn<Mat>,
    pub risk: TimeFn<Mat>,
    pub terminal_target: Vector,
    pub running_target: TimeFn<Vector>,
    pub x0: Vector,
    pub d0: Vector,
    pub grid_steps: usize,
}

impl MarketSpec {
    /// A spec with the given frame and eigenvalues, constant resilience and
    /// everything else zero. One Brownian factor, 1000 grid steps.
    pub fn new(frame: Mat, lambda0: Vector, resilience: Mat, horizon: f64) -> Self {
        let n = lambda0.len();
        Self {
            assets: n,
            factors: 1,
            horizon,
            frame,
            lambda0,
            drift: TimeFn::Constant(Vector::zeros(n)),
            vol: TimeFn::Constant(Mat::zeros(n, 1)),
            resilience: TimeFn::Constant(resilience),
            risk: TimeFn::Constant(Mat::zeros(n, n)),
            terminal_target: Vector::zeros(n),
            running_target: TimeFn::Constant(Vector::zeros(n)),
            x0: Vector::zeros(n),
            d0: Vector::zeros(n),
            grid_steps: 1000,
        }
    }

    /// Spec with constant symmetric impact `gamma`, split into its eigenframe.
    pub fn from_impact(gamma: &Mat, resilience: Mat, horizon: f64) -> Self {
        let (o, l) = linalg::eigen_frame(gamma);
        Self::new(o, l, resilience, horizon)
    }

    pub fn with_position(mut self, x0: Vector) -> Self {
        self.x0 = x0;
        self
    }

    pub fn with_deviation(mut self, d0: Vector) -> Self {
        self.d0 = d0;
        self
    }

    pub fn with_grid(mut self, steps: usize) -> Self {
        self.grid_steps = steps;
        self
    }

    pub fn with_drift(mut self, drift: TimeFn<Vector>) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_vol(mut self, vol: TimeFn<Mat>, factors: usize) -> Self {
        self.vol = vol;
        self.factors = factors;
        self
    }

    pub fn with_risk(mut self, risk: TimeFn<Mat>) -> Self {
        self.risk = risk;
        self
    }

    pub fn with_targets(mut self, terminal: Vector, running: TimeFn<Vector>) -> Self {
        self.terminal_target = terminal;
        self.running_target = running;
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.horizon, self.grid_steps)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.assets;
        let bad = |msg: String| Err(ExecError::InvalidSpec(msg));
        if n == 0 || self.factors == 0 {
            return bad("asset and factor counts must be positive".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.grid_steps < 2 {
            return bad("grid_steps must be at least 2".into());
        }
        if self.frame.shape() != (n, n) {
            return Err(ExecError::Shape(format!("frame is {:?}, expected {n}x{n}", self.frame.shape())));
        }
        for (name, v) in [
            ("lambda0", &self.lambda0),
            ("xi", &self.terminal_target),
            ("x0", &self.x0),
            ("d0", &self.d0),
        ] {
            if v.len() != n {
                return Err(ExecError::Shape(format!("{name} has length {}, expected {n}", v.len())));
            }
            if !linalg::is_finite_vec(v) {
                return bad(format!("{name} has non-finite entries"));
            }
        }
        let ortho = (self.frame.transpose() * &self.frame - identity(n)).norm();
        if ortho > ORTHO_TOL {
            return bad(format!("frame is not orthogonal: |OᵀO − I| = {ortho:e}"));
        }
        if self.lambda0.iter().any(|&l| l <= 0.0) {
            return bad("initial eigenvalues must be strictly positive".into());
        }
        let grid = self.grid()?;
        for j in 0..grid.half_len() {
            let t = grid.half_time(j);
            self.check_sample(t)?;
        }
        Ok(())
    }

    fn check_sample(&self, t: f64) -> Result<()> {
        let n = self.assets;
        let shape = |name: &str, got: (usize, usize), want: (usize, usize)| {
            if got != want {
                Err(ExecError::Shape(format!("{name} at t = {t} is {got:?}, expected {want:?}")))
            } else {
                Ok(())
            }
        };
        let mu = self.drift.eval(t);
        shape("mu", (mu.len(), 1), (n, 1))?;
        let sigma = self.vol.eval(t);
        shape("sigma", sigma.shape(), (n, self.factors))?;
        let rho = self.resilience.eval(t);
        shape("rho", rho.shape(), (n, n))?;
        let xi = self.risk.eval(t);
        shape("Xi", xi.shape(), (n, n))?;
        let zeta = self.running_target.eval(t);
        shape("zeta", (zeta.len(), 1), (n, 1))?;
        if !(linalg::is_finite_vec(&mu)
            && linalg::is_finite_mat(&sigma)
            && linalg::is_finite_mat(&rho)
            && linalg::is_finite_mat(&xi)
            && linalg::is_finite_vec(&zeta))
        {
            return Err(ExecError::InvalidSpec(format!("non-finite coefficient at t = {t}")));
        }
        let asym = asymmetry(&xi);
        if asym > XI_SYM_TOL {
            return Err(ExecError::InvalidSpec(format!("Xi not symmetric at t = {t}: {asym:e}")));
        }
        Ok(())
    }

    /// True if some eigenvalue volatility is non-zero on the half-grid.
    pub fn has_volatility(&self) -> bool {
        match self.grid() {
            Ok(grid) => (0..grid.half_len()).any(|j| self.vol.eval(grid.half_time(j)).iter().any(|&s| s != 0.0)),
            Err(_) => false,
        }
    }

    /// Deterministic eigenvalues `λⱼ(0)·exp(∫₀ᵗ μⱼ)`.
    pub fn deterministic_eigen(&self, t: f64) -> Vector {
        let integral = self.drift.integrate(0.0, t);
        self.lambda0.component_mul(&integral.map(f64::exp))
    }
}

fn eigen_power(frame: &Mat, eigen: &Vector, alpha: f64) -> Mat {
    frame_conjugate(frame, &eigen.map(|l| l.powf(alpha)))
}

/// `γ^α(t) = Oᵀ diag(λ(t)^α) O`.
///
/// Without an eigenvalue path the spec must have zero volatility.
pub fn gamma_power(spec: &MarketSpec, t: f64, lambda: Option<&LambdaPath>, alpha: f64) -> Result<Mat> {
    let eigen = match lambda {
        Some(path) => path.at(t).clone(),
        None => {
            if spec.has_volatility() {
                return Err(ExecError::Config(
                    "stochastic eigenvalues need a simulated eigenvalue path".into(),
                ));
            }
            spec.deterministic_eigen(t)
        }
    };
    if eigen.iter().any(|l| !l.is_finite() || *l <= 0.0) {
        return Err(ExecError::NumericDomain { what: "eigenvalue", time: t });
    }
    Ok(eigen_power(&spec.frame, &eigen, alpha))
}

/// Grid-sampled LQ coefficients of a market.
///
/// Every path is sampled on the half-grid, index `j` at time `j·T/(2N)`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    grid: Grid,
    frame: Mat,
    eigen: Vec<Vector>,
    a: Vec<Mat>,
    b: Vec<Mat>,
    c: Vec<Vec<Mat>>,
    cc: Vec<Mat>,
    q: Vec<Mat>,
    kappa: Vec<Mat>,
    r: Vec<Mat>,
    rho: Vec<Mat>,
    risk: Vec<Mat>,
    running: Vec<Vector>,
    terminal: Vector,
    stochastic: bool,
    resolvent: Resolvent,
    f: std::result::Result<Vec<Mat>, ExecError>,
}

impl CoefficientSet {
    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn assets(&self) -> usize {
        self.frame.nrows()
    }
    pub fn factors(&self) -> usize {
        self.c[0].len()
    }
    pub fn frame(&self) -> &Mat {
        &self.frame
    }
    /// Whether the eigenvalues carry Brownian noise.
    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }
    pub fn resolvent(&self) -> &Resolvent {
        &self.resolvent
    }
    pub fn a(&self, j: usize) -> &Mat {
        &self.a[j]
    }
    pub fn b(&self, j: usize) -> &Mat {
        &self.b[j]
    }
    pub fn c(&self, j: usize) -> &[Mat] {
        &self.c[j]
    }
    /// `Σₖ 𝒞ᵏ𝒞ᵏ`.
    pub fn cc(&self, j: usize) -> &Mat {
        &self.cc[j]
    }
    pub fn q(&self, j: usize) -> &Mat {
        &self.q[j]
    }
    pub fn kappa(&self, j: usize) -> &Mat {
        &self.kappa[j]
    }
    pub fn r(&self, j: usize) -> &Mat {
        &self.r[j]
    }
    pub fn rho(&self, j: usize) -> &Mat {
        &self.rho[j]
    }
    pub fn risk(&self, j: usize) -> &Mat {
        &self.risk[j]
    }
    pub fn running_target(&self, j: usize) -> &Vector {
        &self.running[j]
    }
    pub fn terminal_target(&self) -> &Vector {
        &self.terminal
    }
    /// Deterministic eigenvalues (drift only) at half-index `j`.
    pub fn eigen(&self, j: usize) -> &Vector {
        &self.eigen[j]
    }
    /// `γ^α` along the deterministic eigenvalue path.
    pub fn gamma_power(&self, j: usize, alpha: f64) -> Mat {
        eigen_power(&self.frame, &self.eigen[j], alpha)
    }
    /// `γ^α` for arbitrary eigenvalues in this frame.
    pub fn gamma_power_of(&self, eigen: &Vector, alpha: f64) -> Mat {
        eigen_power(&self.frame, eigen, alpha)
    }
    /// The `F` path with `ℛF = 𝒬`, or the reason none exists.
    pub fn f(&self) -> Result<&[Mat]> {
        self.f.as_deref().map_err(Clone::clone)
    }
    /// True if `𝒬` vanishes on the whole grid.
    pub fn q_is_zero(&self) -> bool {
        self.q.iter().all(|q| q.iter().all(|&v| v == 0.0))
    }
}

/// Samples and assembles `𝒜, ℬ, 𝒞ᵏ, 𝒬, κ, ℛ` and `F` on the half-grid.
pub fn derive_coefficients(spec: &MarketSpec) -> Result<CoefficientSet> {
    spec.validate()?;
    let grid = spec.grid()?;
    let n = spec.assets;
    let frame = spec.frame.clone();
    let ot = frame.transpose();
    let len = grid.half_len();

    let mut eigen = Vec::with_capacity(len);
    let mut cum = Vector::zeros(n);
    for j in 0..len {
        if j > 0 {
            cum += spec.drift.integrate(grid.half_time(j - 1), grid.half_time(j));
        }
        let lam = spec.lambda0.component_mul(&cum.map(f64::exp));
        if lam.iter().any(|l| !l.is_finite() || *l <= 0.0) {
            return Err(ExecError::NumericDomain { what: "eigenvalue", time: grid.half_time(j) });
        }
        eigen.push(lam);
    }

    let stochastic = spec.has_volatility();
    let mut out = CoefficientSet {
        grid,
        frame: frame.clone(),
        eigen: Vec::new(),
        a: Vec::with_capacity(len),
        b: Vec::with_capacity(len),
        c: Vec::with_capacity(len),
        cc: Vec::with_capacity(len),
        q: Vec::with_capacity(len),
        kappa: Vec::with_capacity(len),
        r: Vec::with_capacity(len),
        rho: Vec::with_capacity(len),
        risk: Vec::with_capacity(len),
        running: Vec::with_capacity(len),
        terminal: spec.terminal_target.clone(),
        stochastic,
        resolvent: resolvent(&spec.resilience, grid)?,
        f: Ok(Vec::new()),
    };

    for (j, lam) in eigen.iter().enumerate() {
        let t = grid.half_time(j);
        let mu = spec.drift.eval(t);
        let sigma = spec.vol.eval(t);
        let rho = spec.resilience.eval(t);
        let xi = spec.risk.eval(t);

        if stochastic {
            deterministic_guard(&frame, &sigma, &rho, &xi, t)?;
        }

        let half = eigen_power(&frame, lam, 0.5);
        let mhalf = eigen_power(&frame, lam, -0.5);

        let ck: Vec<Mat> = (0..spec.factors)
            .map(|k| &ot * Mat::from_diagonal(&sigma.column(k).into_owned()) * &frame * 0.5)
            .collect();
        let sc = ck.iter().fold(Mat::zeros(n, n), |acc, c| acc + c * c);
        let omu = &ot * Mat::from_diagonal(&mu) * &frame;

        let g = &mhalf * &rho * &half;
        if !linalg::is_finite_mat(&g) {
            return Err(ExecError::IllConditionedImpact { time: t });
        }
        let a = symmetrize(&(&omu * 0.5 - &sc * 0.5));
        let b = -&g - &omu + &sc * 2.0;
        let kappa = symmetrize(&(&omu * 0.5 - &sc * 2.0 + (&g + g.transpose()) * 0.5));
        let q = symmetrize(&(&mhalf * &xi * &mhalf));
        let r = &q + &kappa;

        out.a.push(a);
        out.b.push(b);
        out.c.push(ck);
        out.cc.push(sc);
        out.q.push(q);
        out.kappa.push(kappa);
        out.r.push(r);
        out.rho.push(rho);
        out.risk.push(xi);
        out.running.push(spec.running_target.eval(t));
    }
    out.eigen = eigen;
    out.f = choose_f(&out);
    Ok(out)
}

fn deterministic_guard(frame: &Mat, sigma: &Mat, rho: &Mat, xi: &Mat, t: f64) -> Result<()> {
    if xi.iter().any(|&v| v != 0.0) {
        return Err(ExecError::StochasticCoefficients(format!(
            "non-zero risk matrix with stochastic eigenvalues at t = {t}"
        )));
    }
    let rt = frame * rho * frame.transpose();
    let scale = 1.0 + rt.norm();
    let n = rt.nrows();
    for i in 0..n {
        for k in 0..n {
            if i != k && rt[(i, k)].abs() > 1e-12 * scale {
                let diff = (sigma.row(i) - sigma.row(k)).norm();
                if diff > 1e-14 {
                    return Err(ExecError::StochasticCoefficients(format!(
                        "resilience couples eigen-directions {i} and {k} with different volatilities at t = {t}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// `F = ℛ⁻¹𝒬` on the half-grid, or `F = 0` when `𝒬 ≡ 0`.
pub fn choose_f(coeffs: &CoefficientSet) -> Result<Vec<Mat>> {
    let n = coeffs.assets();
    let len = coeffs.grid.half_len();
    if coeffs.q_is_zero() {
        return Ok(vec![Mat::zeros(n, n); len]);
    }
    let mut out = Vec::with_capacity(len);
    for j in 0..len {
        let t = coeffs.grid.half_time(j);
        let r = &coeffs.r[j];
        let min_eig = min_eigenvalue(r);
        if min_eig < DELTA_F {
            return Err(ExecError::NoValidF { time: t, min_eig });
        }
        let f = linalg::solve(r, &coeffs.q[j]).ok_or(ExecError::NoValidF { time: t, min_eig })?;
        let resid = (r * &f - &coeffs.q[j]).norm();
        if resid > 1e-8 * (1.0 + coeffs.q[j].norm()) {
            return Err(ExecError::NoValidF { time: t, min_eig });
        }
        out.push(f);
    }
    Ok(out)
}
