//! Backward matrix Riccati and linear target equations for deterministic
//! coefficient paths.
//!
//! With deterministic coefficients the martingale parts of the backward
//! equations vanish, so `𝒴` solves a matrix Riccati ODE with `𝒴(T) = ½I`,
//! integrated backwards by RK4 on the grid.

use crate::error::{ExecError, Result};
use crate::grid::Grid;
use crate::linalg::{self, asymmetry, identity, min_eigenvalue, quad, symmetrize, Mat, Vector};
use crate::model::{derive_coefficients, CoefficientSet, MarketSpec};

/// Definiteness floor for `ℛ + 4Σ𝒞ᵏ𝒴𝒞ᵏ`.
pub const EPS_PD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriverKind {
    /// Zero-target equation.
    Plain,
    /// Equation after the `F`-transformation.
    Hat,
}

#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    grid: Grid,
    kind: DriverKind,
    values: Vec<Mat>,
    slopes: Vec<Mat>,
    min_block_eig: f64,
    max_asymmetry: f64,
}

impl RiccatiSolution {
    pub fn grid(&self) -> Grid {
        self.grid
    }
    pub fn kind(&self) -> DriverKind {
        self.kind
    }
    /// `𝒴(tᵢ)`.
    pub fn value(&self, i: usize) -> &Mat {
        &self.values[i]
    }
    pub fn values(&self) -> &[Mat] {
        &self.values
    }
    /// `d𝒴/ds` at `tᵢ`.
    pub fn slope(&self, i: usize) -> &Mat {
        &self.slopes[i]
    }
    /// Cubic Hermite value at the midpoint of cell `i`.
    pub fn mid(&self, i: usize) -> Mat {
        hermite_mid(&self.values[i], &self.values[i + 1], &self.slopes[i], &self.slopes[i + 1], self.grid.dt())
    }
    /// Smallest eigenvalue of `ℛ + 4Σ𝒞ᵏ𝒴𝒞ᵏ` seen by any RK stage.
    pub fn min_block_eig(&self) -> f64 {
        self.min_block_eig
    }
    /// Largest `‖𝒴 − 𝒴ᵀ‖_F` observed before re-symmetrizing a step.
    pub fn max_asymmetry(&self) -> f64 {
        self.max_asymmetry
    }
}

fn hermite_mid<T>(y0: &T, y1: &T, d0: &T, d1: &T, h: f64) -> T
where
    for<'a> &'a T: std::ops::Add<&'a T, Output = T> + std::ops::Sub<&'a T, Output = T>,
    T: std::ops::Mul<f64, Output = T> + std::ops::Add<T, Output = T>,
{
    (y0 + y1) * 0.5 + (d0 - d1) * (h / 8.0)
}

/// Evaluates the Riccati driver and its inverted block at half-index `j`.
struct Driver<'a> {
    coeffs: &'a CoefficientSet,
    f: Option<&'a [Mat]>,
}

impl Driver<'_> {
    fn cyc(&self, j: usize, y: &Mat) -> Mat {
        let n = y.nrows();
        self.coeffs.c(j).iter().fold(Mat::zeros(n, n), |acc, c| acc + c * y * c)
    }

    /// `ℛ + 4Σ𝒞ᵏ𝒴𝒞ᵏ`, checked against the definiteness floor.
    fn block(&self, j: usize, cyc: &Mat) -> Result<(Mat, f64)> {
        let m = self.coeffs.r(j) + cyc * 4.0;
        let min_eig = min_eigenvalue(&m);
        if !(min_eig >= EPS_PD) {
            return Err(ExecError::SingularDriver {
                time: self.coeffs.grid().half_time(j),
                min_eig,
                floor: EPS_PD,
            });
        }
        Ok((m, min_eig))
    }

    /// Right factor `S` such that the gain is `−M⁻¹S`.
    fn s(&self, j: usize, y: &Mat, cyc: &Mat) -> Mat {
        let bty = self.coeffs.b(j).transpose() * y;
        match self.f {
            None => bty - self.coeffs.q(j) - cyc * 2.0,
            Some(f) => {
                let e = identity(y.nrows()) - &f[j] * 2.0;
                bty - cyc * &e * 2.0
            }
        }
    }

    fn gain(&self, j: usize, y: &Mat) -> Result<Mat> {
        let cyc = self.cyc(j, y);
        let (m, min_eig) = self.block(j, &cyc)?;
        let s = self.s(j, y, &cyc);
        linalg::solve(&m, &s).map(|k| -k).ok_or(ExecError::SingularDriver {
            time: self.coeffs.grid().half_time(j),
            min_eig,
            floor: EPS_PD,
        })
    }

    /// Returns `(g, min_eig)` where `d𝒴/ds = −g`.
    fn eval(&self, j: usize, y: &Mat) -> Result<(Mat, f64)> {
        let c = self.coeffs;
        let n = y.nrows();
        let cyc = self.cyc(j, y);
        let (m, min_eig) = self.block(j, &cyc)?;
        let s = self.s(j, y, &cyc);
        let k = linalg::solve(&m, &s).ok_or(ExecError::SingularDriver {
            time: c.grid().half_time(j),
            min_eig,
            floor: EPS_PD,
        })?;
        let g = match self.f {
            None => y * c.a(j) + c.a(j) * y + c.q(j) + &cyc - s.transpose() * k,
            Some(f) => {
                let fj = &f[j];
                let e = identity(n) - fj * 2.0;
                let abf = c.a(j) + c.b(j) * fj;
                let noise = c.c(j).iter().fold(Mat::zeros(n, n), |acc, ck| {
                    acc + e.transpose() * ck * y * ck * &e
                });
                y * &abf + abf.transpose() * y + c.q(j) * (identity(n) - fj) + noise - s.transpose() * k
            }
        };
        if !linalg::is_finite_mat(&g) {
            return Err(ExecError::NumericDomain { what: "Riccati driver", time: c.grid().half_time(j) });
        }
        Ok((g, min_eig))
    }
}

fn integrate(driver: &Driver, kind: DriverKind) -> Result<RiccatiSolution> {
    let grid = driver.coeffs.grid();
    let steps = grid.steps();
    let n = driver.coeffs.assets();
    let h = grid.dt();
    let mut values = vec![Mat::zeros(n, n); steps + 1];
    let mut slopes = vec![Mat::zeros(n, n); steps + 1];
    let mut min_block = f64::INFINITY;
    let mut max_asym: f64 = 0.0;
    values[steps] = identity(n) * 0.5;
    let (g_end, e) = driver.eval(2 * steps, &values[steps])?;
    slopes[steps] = -g_end.clone();
    min_block = min_block.min(e);
    let mut k1 = g_end;
    for i in (0..steps).rev() {
        let y = &values[i + 1];
        let (k2, e2) = driver.eval(2 * i + 1, &(y + &k1 * (h / 2.0)))?;
        let (k3, e3) = driver.eval(2 * i + 1, &(y + &k2 * (h / 2.0)))?;
        let (k4, e4) = driver.eval(2 * i, &(y + &k3 * h))?;
        let next = y + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        max_asym = max_asym.max(asymmetry(&next));
        let next = symmetrize(&next);
        let (g, e0) = driver.eval(2 * i, &next)?;
        min_block = min_block.min(e2).min(e3).min(e4).min(e0);
        slopes[i] = -g.clone();
        values[i] = next;
        k1 = g;
    }
    Ok(RiccatiSolution { grid, kind, values, slopes, min_block_eig: min_block, max_asymmetry: max_asym })
}

/// Zero-target Riccati equation.
pub fn solve_riccati(coeffs: &CoefficientSet) -> Result<RiccatiSolution> {
    integrate(&Driver { coeffs, f: None }, DriverKind::Plain)
}

/// Riccati equation after the `F`-transformation; `f` is sampled on the
/// half-grid.
pub fn solve_riccati_hat(coeffs: &CoefficientSet, f: &[Mat]) -> Result<RiccatiSolution> {
    check_f(coeffs, f)?;
    integrate(&Driver { coeffs, f: Some(f) }, DriverKind::Hat)
}

fn check_f(coeffs: &CoefficientSet, f: &[Mat]) -> Result<()> {
    if f.len() != coeffs.grid().half_len() {
        return Err(ExecError::Shape(format!("F has {} samples, expected {}", f.len(), coeffs.grid().half_len())));
    }
    Ok(())
}

/// Feedback gain at the nodes and at the cell midpoints.
#[derive(Debug, Clone)]
pub struct FeedbackGain {
    pub nodes: Vec<Mat>,
    pub mids: Vec<Mat>,
}

fn gains(driver: &Driver, y: &RiccatiSolution) -> Result<FeedbackGain> {
    let steps = y.grid().steps();
    let nodes = (0..=steps).map(|i| driver.gain(2 * i, y.value(i))).collect::<Result<_>>()?;
    let mids = (0..steps).map(|i| driver.gain(2 * i + 1, &y.mid(i))).collect::<Result<_>>()?;
    Ok(FeedbackGain { nodes, mids })
}

/// `θ = −(ℛ + 4Σ𝒞ᵏ𝒴𝒞ᵏ)⁻¹(ℬᵀ𝒴 − 𝒬 − 2Σ𝒞ᵏ𝒴𝒞ᵏ)`.
pub fn theta(coeffs: &CoefficientSet, y: &RiccatiSolution) -> Result<FeedbackGain> {
    gains(&Driver { coeffs, f: None }, y)
}

/// `θ̂ = −(ℛ + 4Σ𝒞ᵏ𝒴̂𝒞ᵏ)⁻¹(ℬᵀ𝒴̂ − 2Σ𝒞ᵏ𝒴̂𝒞ᵏ(I − 2F))`.
pub fn theta_hat(coeffs: &CoefficientSet, f: &[Mat], yhat: &RiccatiSolution) -> Result<FeedbackGain> {
    check_f(coeffs, f)?;
    gains(&Driver { coeffs, f: Some(f) }, yhat)
}

/// Solution of the linear target equation.
#[derive(Debug, Clone)]
pub struct TargetSolution {
    pub psi: Vec<Vector>,
    pub psi_mid: Vec<Vector>,
    pub theta0: Vec<Vector>,
    pub theta0_mid: Vec<Vector>,
    pub v0: f64,
}

struct TargetTerms<'a> {
    coeffs: &'a CoefficientSet,
    f: &'a [Mat],
}

impl TargetTerms<'_> {
    fn z(&self, j: usize) -> Vector {
        self.coeffs.gamma_power(j, 0.5) * self.coeffs.running_target(j)
    }

    /// `Σ𝒞ᵏ(2𝒴𝒞ᵏFz)` and the per-factor vectors `𝒞ᵏFz`.
    fn noise(&self, j: usize, y: &Mat, z: &Vector) -> (Vector, Vec<Vector>) {
        let fz = &self.f[j] * z;
        let cfz: Vec<Vector> = self.coeffs.c(j).iter().map(|c| c * &fz).collect();
        let n = z.len();
        let sum = self
            .coeffs
            .c(j)
            .iter()
            .zip(&cfz)
            .fold(Vector::zeros(n), |acc, (c, v)| acc + c * (y * v) * 2.0);
        (sum, cfz)
    }

    /// `d ψ̂/ds = −f̂`.
    fn drive(&self, j: usize, psi: &Vector, y: &Mat, th: &Mat) -> Vector {
        let c = self.coeffs;
        let n = psi.len();
        let fj = &self.f[j];
        let z = self.z(j);
        let k = fj + th;
        let lin = (c.a(j) + c.b(j) * &k).transpose() * psi;
        let e = identity(n) - &k * 2.0;
        let fz = fj * &z;
        let noise = c.c(j).iter().fold(Vector::zeros(n), |acc, ck| {
            acc + e.transpose() * ck * (y * (ck * &fz)) * 2.0
        });
        lin + noise - c.q(j) * (identity(n) - fj) * &z - y * (c.b(j) * &fz)
    }

    fn theta0(&self, j: usize, psi: &Vector, y: &Mat) -> Result<(Vector, Mat)> {
        let c = self.coeffs;
        let n = psi.len();
        let cyc = c.c(j).iter().fold(Mat::zeros(n, n), |acc, ck| acc + ck * y * ck);
        let m = c.r(j) + cyc * 4.0;
        let min_eig = min_eigenvalue(&m);
        let singular = ExecError::SingularDriver { time: c.grid().half_time(j), min_eig, floor: EPS_PD };
        if !(min_eig >= EPS_PD) {
            return Err(singular);
        }
        let z = self.z(j);
        let (noise, _) = self.noise(j, y, &z);
        let rhs = c.b(j).transpose() * psi - noise * 2.0;
        let t0 = linalg::solve_vec(&m, &rhs).ok_or(singular)?;
        Ok((-t0, m))
    }

    fn v0_integrand(&self, j: usize, psi: &Vector, y: &Mat) -> Result<(f64, Vector)> {
        let c = self.coeffs;
        let n = psi.len();
        let fj = &self.f[j];
        let z = self.z(j);
        let (t0, m) = self.theta0(j, psi, y)?;
        let (_, cfz) = self.noise(j, y, &z);
        let risk = z.dot(&(c.q(j) * (identity(n) - fj) * &z));
        let cross = -2.0 * (c.b(j) * fj * &z).dot(psi);
        let noise: f64 = cfz.iter().map(|v| 4.0 * quad(y, v)).sum();
        Ok((risk + cross + noise - quad(&m, &t0), t0))
    }
}

/// Linear target equation for `ψ̂`, the offset `θ̂⁰` and the constant `V̂⁰`.
pub fn solve_targets(
    coeffs: &CoefficientSet,
    f: &[Mat],
    yhat: &RiccatiSolution,
    theta_hat: &FeedbackGain,
) -> Result<TargetSolution> {
    check_f(coeffs, f)?;
    let grid = coeffs.grid();
    let steps = grid.steps();
    let h = grid.dt();
    let n = coeffs.assets();
    let terms = TargetTerms { coeffs, f };
    let gt_half = coeffs.gamma_power(2 * steps, 0.5);
    let gxi = &gt_half * coeffs.terminal_target();

    let mut psi = vec![Vector::zeros(n); steps + 1];
    let mut slopes = vec![Vector::zeros(n); steps + 1];
    psi[steps] = &gxi * -0.5;
    let mut k1 = terms.drive(2 * steps, &psi[steps], yhat.value(steps), &theta_hat.nodes[steps]);
    slopes[steps] = -k1.clone();
    for i in (0..steps).rev() {
        let p = &psi[i + 1];
        let ym = yhat.mid(i);
        let tm = &theta_hat.mids[i];
        let k2 = terms.drive(2 * i + 1, &(p + &k1 * (h / 2.0)), &ym, tm);
        let k3 = terms.drive(2 * i + 1, &(p + &k2 * (h / 2.0)), &ym, tm);
        let k4 = terms.drive(2 * i, &(p + &k3 * h), yhat.value(i), &theta_hat.nodes[i]);
        let next = p + (&k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !linalg::is_finite_vec(&next) {
            return Err(ExecError::NumericDomain { what: "target solution", time: grid.time(i) });
        }
        k1 = terms.drive(2 * i, &next, yhat.value(i), &theta_hat.nodes[i]);
        slopes[i] = -k1.clone();
        psi[i] = next;
    }
    let psi_mid: Vec<Vector> =
        (0..steps).map(|i| hermite_mid(&psi[i], &psi[i + 1], &slopes[i], &slopes[i + 1], h)).collect();

    let mut theta0 = Vec::with_capacity(steps + 1);
    let mut node_vals = Vec::with_capacity(steps + 1);
    for (i, p) in psi.iter().enumerate() {
        let (v, t0) = terms.v0_integrand(2 * i, p, yhat.value(i))?;
        node_vals.push(v);
        theta0.push(t0);
    }
    let mut theta0_mid = Vec::with_capacity(steps);
    let mut integral = 0.0;
    for i in 0..steps {
        let (vm, t0) = terms.v0_integrand(2 * i + 1, &psi_mid[i], &yhat.mid(i))?;
        theta0_mid.push(t0);
        integral += h / 6.0 * (node_vals[i] + 4.0 * vm + node_vals[i + 1]);
    }
    let v0 = 0.5 * gxi.norm_squared() + integral;
    Ok(TargetSolution { psi, psi_mid, theta0, theta0_mid, v0 })
}

/// `𝒴(s) = ½(I + ½(T − s)ℬℛ⁻¹ℬᵀ)⁻¹` for constant `ℬ` and `ℛ`.
pub fn ow_closed_form(b: &Mat, r: &Mat, grid: Grid) -> Result<RiccatiSolution> {
    let n = b.nrows();
    let min_r = min_eigenvalue(r);
    if !(min_r > 0.0) {
        return Err(ExecError::Domain(format!("R is not positive definite (min eigenvalue {min_r:e})")));
    }
    let rinv_bt = linalg::solve(r, &b.transpose())
        .ok_or_else(|| ExecError::Domain("R is singular".into()))?;
    let m = symmetrize(&(b * rinv_bt));
    let mut values = Vec::with_capacity(grid.steps() + 1);
    let mut slopes = Vec::with_capacity(grid.steps() + 1);
    for i in 0..=grid.steps() {
        let s = grid.time(i);
        let k = identity(n) + &m * (0.5 * (grid.horizon() - s));
        let kinv = linalg::solve(&k, &identity(n))
            .ok_or_else(|| ExecError::Domain(format!("I + (T − s)BR⁻¹Bᵀ/2 singular at s = {s}")))?;
        let y = symmetrize(&(kinv * 0.5));
        slopes.push(&y * &m * &y);
        values.push(y);
    }
    Ok(RiccatiSolution {
        grid,
        kind: DriverKind::Plain,
        values,
        slopes,
        min_block_eig: min_r,
        max_asymmetry: 0.0,
    })
}

/// `maxᵢ ‖𝒴_N(tᵢ) − 𝒴_{2N}(tᵢ)‖_F` over the coarse nodes.
pub fn step_halving_defect(spec: &MarketSpec) -> Result<f64> {
    let coarse = solve_riccati(&derive_coefficients(spec)?)?;
    let fine_spec = spec.clone().with_grid(2 * spec.grid_steps);
    let fine = solve_riccati(&derive_coefficients(&fine_spec)?)?;
    Ok((0..=spec.grid_steps)
        .map(|i| (coarse.value(i) - fine.value(2 * i)).norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TimeFn;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn zero_resilience_with_drift_gives_half_identity() {
        let spec = MarketSpec::new(identity(2), v(&[1.0, 2.0]), Mat::zeros(2, 2), 1.0)
            .with_drift(TimeFn::Constant(v(&[0.5, 1.0])))
            .with_grid(50);
        let c = derive_coefficients(&spec).unwrap();
        let y = solve_riccati(&c).unwrap();
        for yi in y.values() {
            assert!((yi - identity(2) * 0.5).norm() < 1e-14);
        }
        let th = theta(&c, &y).unwrap();
        assert!(th.nodes.iter().all(|t| (t - identity(2)).norm() < 1e-13));
    }

    #[test]
    fn all_zero_spec_is_singular() {
        let spec = MarketSpec::new(identity(2), v(&[1.0, 1.0]), Mat::zeros(2, 2), 1.0).with_grid(10);
        let c = derive_coefficients(&spec).unwrap();
        assert!(matches!(solve_riccati(&c), Err(ExecError::SingularDriver { .. })));
    }

    #[test]
    fn scalar_resilience_closed_form() {
        let gamma = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let spec = MarketSpec::from_impact(&gamma, identity(2) * 2.0, 1.0).with_grid(100);
        let c = derive_coefficients(&spec).unwrap();
        let y = solve_riccati(&c).unwrap();
        for i in 0..=100 {
            let s = c.grid().time(i);
            let want = identity(2) / (2.0 + (1.0 - s) * 2.0);
            assert!((y.value(i) - want).norm() < 1e-10);
        }
        assert_eq!(y.value(100), &(identity(2) * 0.5));
        assert!(y.max_asymmetry() <= 1e-9);
    }

    #[test]
    fn closed_form_terminal_and_start() {
        let grid = Grid::new(1.5, 30).unwrap();
        let r = identity(2) * 3.0;
        let b = -&r;
        let y = ow_closed_form(&b, &r, grid).unwrap();
        assert!((y.value(30) - identity(2) * 0.5).norm() < 1e-15);
        assert!((y.value(0) - identity(2) / (2.0 + 1.5 * 3.0)).norm() < 1e-14);
        assert!(ow_closed_form(&b, &-r, grid).is_err());
    }

    #[test]
    fn hat_equals_plain_without_risk() {
        let gamma = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0]);
        let rho = Mat::from_row_slice(2, 2, &[3.0, 0.5, -0.2, 2.0]);
        let spec = MarketSpec::from_impact(&gamma, rho, 1.0)
            .with_drift(TimeFn::Constant(v(&[0.3, -0.1])))
            .with_grid(40);
        let c = derive_coefficients(&spec).unwrap();
        let f = c.f().unwrap();
        let a = solve_riccati(&c).unwrap();
        let b = solve_riccati_hat(&c, f).unwrap();
        for i in 0..=40 {
            assert!((a.value(i) - b.value(i)).norm() < 1e-14);
        }
        let ta = theta(&c, &a).unwrap();
        let tb = theta_hat(&c, f, &b).unwrap();
        assert!((&ta.nodes[0] - &tb.nodes[0]).norm() < 1e-13);
        let tgt = solve_targets(&c, f, &b, &tb).unwrap();
        assert!(tgt.psi.iter().all(|p| p.norm() == 0.0));
        assert!(tgt.theta0.iter().all(|p| p.norm() == 0.0));
        assert_eq!(tgt.v0, 0.0);
    }

    #[test]
    fn scalar_target_closed_form() {
        // n = 1, γ = 1, ρ = 1, Ξ = 1, ζ constant: 𝒬 = 1, κ = 1, ℛ = 2, F = ½,
        // Ŷ solves a scalar Riccati ODE and ψ̂ a scalar linear ODE.
        let zeta = 0.7;
        let spec = MarketSpec::new(identity(1), v(&[1.0]), identity(1), 1.0)
            .with_risk(TimeFn::Constant(identity(1)))
            .with_targets(v(&[0.0]), TimeFn::Constant(v(&[zeta])))
            .with_grid(400);
        let c = derive_coefficients(&spec).unwrap();
        let f = c.f().unwrap();
        let y = solve_riccati_hat(&c, f).unwrap();
        let th = theta_hat(&c, f, &y).unwrap();
        let tg = solve_targets(&c, f, &y, &th).unwrap();
        // Scalar: A = 0, B = −1, F = ½, C = 0, Q = 1, R = 2.
        // ĝ = −Y + ½ − Y²/2, θ̂ = Y/2, f̂ = (−½ − Y/2)ψ − ½ζ + Yζ/2.
        // Oracle: integrate both scalar ODEs with a fine RK4.
        let (mut yy, mut pp) = (0.5f64, 0.0f64);
        let steps = 20000;
        let h = 1.0 / steps as f64;
        let rhs = |y: f64, p: f64| {
            let g = -y + 0.5 - y * y / 2.0;
            let fh = (-0.5 - y / 2.0) * p - 0.5 * zeta + y * zeta / 2.0;
            (g, fh)
        };
        for _ in 0..steps {
            let (a1, b1) = rhs(yy, pp);
            let (a2, b2) = rhs(yy + h / 2.0 * a1, pp + h / 2.0 * b1);
            let (a3, b3) = rhs(yy + h / 2.0 * a2, pp + h / 2.0 * b2);
            let (a4, b4) = rhs(yy + h * a3, pp + h * b3);
            yy += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
            pp += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        }
        assert!((y.value(0)[(0, 0)] - yy).abs() < 1e-10);
        assert!((tg.psi[0][0] - pp).abs() < 1e-10);
        assert!(tg.v0.is_finite());
    }
}
