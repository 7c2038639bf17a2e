//! Definiteness classification and assumption audits.

use std::fmt;

use crate::error::{ExecError, Result};
use crate::linalg::{self, identity, min_eigenvalue, sym_eigenvalues, Mat};
use crate::model::{CoefficientSet, MarketSpec, ORTHO_TOL, XI_SYM_TOL};

/// Eigenvalue threshold separating PD / PSD / indefinite.
pub const DEFINITENESS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Definiteness {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

impl Definiteness {
    pub fn classify(min_eig: f64) -> Self {
        if min_eig > DEFINITENESS_TOL {
            Definiteness::PositiveDefinite
        } else if min_eig < -DEFINITENESS_TOL {
            Definiteness::Indefinite
        } else {
            Definiteness::PositiveSemidefinite
        }
    }
}

/// Grid infimum of an eigenvalue scan and where it was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenScan {
    pub min_eig: f64,
    pub time: f64,
}

fn scan(coeffs: &CoefficientSet, m: impl Fn(usize) -> Mat) -> EigenScan {
    let grid = coeffs.grid();
    (0..grid.half_len())
        .map(|j| EigenScan { min_eig: min_eigenvalue(&m(j)), time: grid.half_time(j) })
        .fold(EigenScan { min_eig: f64::INFINITY, time: 0.0 }, |a, b| if b.min_eig < a.min_eig { b } else { a })
}

/// Classifies `κ` by its smallest eigenvalue over the grid.
pub fn kappa_definiteness(coeffs: &CoefficientSet) -> (Definiteness, EigenScan) {
    let s = scan(coeffs, |j| coeffs.kappa(j).clone());
    (Definiteness::classify(s.min_eig), s)
}

/// Eigenvalue-ratio criterion
/// `(√(ηₙ(γ)/η₁(γ)) − 1)(√(ηₙ(ρ)/η₁(ρ)) − 1) < 2`.
///
/// `true` guarantees that `κ = ½γ^{-1/2}(ργ + γρ)γ^{-1/2}` is positive
/// definite; `false` is inconclusive.
pub fn conley(rho: &Mat, gamma: &Mat) -> Result<bool> {
    Ok(conley_product(rho, gamma)? < 2.0)
}

/// The left-hand side of the Conley criterion.
pub fn conley_product(rho: &Mat, gamma: &Mat) -> Result<f64> {
    let ratio = |m: &Mat, name: &str| -> Result<f64> {
        if m.nrows() != m.ncols() || linalg::asymmetry(m) > 1e-12 * (1.0 + m.norm()) {
            return Err(ExecError::Domain(format!("{name} must be square and symmetric")));
        }
        let e = sym_eigenvalues(m);
        let (lo, hi) = (e[0], e[e.len() - 1]);
        if !(lo > 0.0) {
            return Err(ExecError::Domain(format!("{name} is not positive definite")));
        }
        Ok((hi / lo).sqrt() - 1.0)
    };
    Ok(ratio(gamma, "gamma")? * ratio(rho, "rho")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for CheckStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::NotApplicable => "n/a",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Hard checks gate the solver.
    pub hard: bool,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn hard_failures(&self) -> impl Iterator<Item = &AuditEntry> {
        self.entries.iter().filter(|e| e.hard && e.status == CheckStatus::Fail)
    }

    pub fn passes_hard_checks(&self) -> bool {
        self.hard_failures().next().is_none()
    }

    pub fn get(&self, name: &str) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

impl fmt::Display for AuditReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let kind = if e.hard { "hard" } else { "info" };
            writeln!(f, "{:<28} {:<5} {:<5} {}", e.name, kind, e.status, e.witness)?;
        }
        Ok(())
    }
}

/// Names of all registered checks, in report order.
pub const CHECKS: [&str; 11] = [
    "frame_orthogonal",
    "risk_symmetric",
    "conjugated_resilience_bounded",
    "q_psd",
    "r_psd",
    "kappa_pd",
    "r_uniformly_pd",
    "diffusion_uniformly_pd",
    "convexity_sufficient",
    "q_one_minus_f_psd",
    "eigen_resilience_condition",
];

fn entry(name: &'static str, hard: bool, ok: bool, witness: String) -> AuditEntry {
    let status = if ok { CheckStatus::Pass } else { CheckStatus::Fail };
    AuditEntry { name, status, hard, witness }
}

fn na(name: &'static str, hard: bool, witness: &str) -> AuditEntry {
    AuditEntry { name, status: CheckStatus::NotApplicable, hard, witness: witness.into() }
}

fn psd_entry(name: &'static str, hard: bool, s: EigenScan, strict: bool) -> AuditEntry {
    let ok = if strict { s.min_eig > DEFINITENESS_TOL } else { s.min_eig >= -DEFINITENESS_TOL };
    entry(name, hard, ok, format!("min eigenvalue {:.6e} at t = {}", s.min_eig, s.time))
}

/// Grid-level audit of the standing assumptions. Side-effect free.
pub fn assumption_audit(spec: &MarketSpec, coeffs: &CoefficientSet) -> AuditReport {
    let grid = coeffs.grid();
    let n = coeffs.assets();
    let mut out = Vec::with_capacity(CHECKS.len());

    let ortho = (spec.frame.transpose() * &spec.frame - identity(n)).norm();
    out.push(entry(CHECKS[0], true, ortho <= ORTHO_TOL, format!("|OᵀO − I| = {ortho:.3e}")));

    let asym = (0..grid.half_len()).map(|j| linalg::asymmetry(coeffs.risk(j))).fold(0.0, f64::max);
    out.push(entry(CHECKS[1], true, asym <= XI_SYM_TOL, format!("max |Ξ − Ξᵀ| = {asym:.3e}")));

    let mut worst: f64 = 0.0;
    let mut finite = true;
    for j in 0..grid.half_len() {
        let g = coeffs.gamma_power(j, -0.5) * coeffs.rho(j) * coeffs.gamma_power(j, 0.5);
        finite &= linalg::is_finite_mat(&g);
        worst = worst.max(g.norm());
    }
    out.push(entry(CHECKS[2], true, finite && worst.is_finite(), format!("max |γ^(-1/2)ργ^(1/2)| = {worst:.6e}")));

    out.push(psd_entry(CHECKS[3], true, scan(coeffs, |j| coeffs.q(j).clone()), false));
    let r_scan = scan(coeffs, |j| coeffs.r(j).clone());
    out.push(psd_entry(CHECKS[4], true, r_scan, false));
    out.push(psd_entry(CHECKS[5], false, kappa_definiteness(coeffs).1, true));
    out.push(psd_entry(CHECKS[6], false, r_scan, true));

    let r_ok = r_scan.min_eig > DEFINITENESS_TOL;
    let diff_ok = if coeffs.is_stochastic() {
        let s = scan(coeffs, |j| coeffs.cc(j) * 4.0);
        let e = psd_entry(CHECKS[7], false, s, true);
        let ok = e.status == CheckStatus::Pass;
        out.push(e);
        ok
    } else {
        out.push(na(CHECKS[7], false, "no eigenvalue volatility"));
        false
    };
    out.push(entry(
        CHECKS[8],
        true,
        r_ok || diff_ok,
        if r_ok || diff_ok { "a sufficient condition holds".into() } else { "neither R nor 4ΣCC is uniformly positive definite".into() },
    ));

    match coeffs.f() {
        Ok(f) => {
            let s = scan(coeffs, |j| coeffs.q(j) * (identity(n) - &f[j]));
            out.push(psd_entry(CHECKS[9], false, s, false));
        }
        Err(e) => out.push(na(CHECKS[9], false, &e.to_string())),
    }

    out.push(eigen_resilience(spec, coeffs));
    AuditReport { entries: out }
}

/// `2ρ̃ⱼ + μⱼ − Σₖσⱼₖ² > 0` when `ρ` is diagonal in the eigenframe.
fn eigen_resilience(spec: &MarketSpec, coeffs: &CoefficientSet) -> AuditEntry {
    let name = CHECKS[10];
    let grid = coeffs.grid();
    let o = coeffs.frame();
    let mut worst = f64::INFINITY;
    let mut at = 0.0;
    for j in 0..grid.half_len() {
        let t = grid.half_time(j);
        let rt = o * coeffs.rho(j) * o.transpose();
        let off = rt.iter().map(|v| v.abs()).sum::<f64>() - rt.diagonal().iter().map(|v| v.abs()).sum::<f64>();
        if off > 1e-12 * (1.0 + rt.norm()) {
            return na(name, false, "resilience not diagonal in the eigenframe");
        }
        let mu = spec.drift.eval(t);
        let sigma = spec.vol.eval(t);
        for k in 0..rt.nrows() {
            let v = 2.0 * rt[(k, k)] + mu[k] - sigma.row(k).norm_squared();
            if v < worst {
                worst = v;
                at = t;
            }
        }
    }
    entry(name, false, worst > 0.0, format!("min 2ρ̃ + μ − |σ|² = {worst:.6e} at t = {at}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vector;
    use crate::model::{derive_coefficients, TimeFn};

    fn coupled() -> Mat {
        Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])
    }

    #[test]
    fn conley_examples() {
        let rho_good = Mat::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 5.0]);
        let rho_bad = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        assert!(conley(&rho_good, &coupled()).unwrap());
        assert!(!conley(&rho_bad, &coupled()).unwrap());
        // eigenvalue arithmetic: γ: (3 ± √5)/2, ρ: 3 ± 2√2
        let s5 = 5f64.sqrt();
        let rg = ((3.0 + s5) / (3.0 - s5)).sqrt() - 1.0;
        let rr = ((3.0 + 2.0 * 2f64.sqrt()) / (3.0 - 2.0 * 2f64.sqrt())).sqrt() - 1.0;
        assert!((conley_product(&rho_bad, &coupled()).unwrap() - rg * rr).abs() < 1e-12);
        assert!((rg * rr - 7.8).abs() < 0.05);
        assert!(conley(&identity(2), &coupled()).unwrap());
        assert!(conley(&-identity(2), &coupled()).is_err());
    }

    #[test]
    fn kappa_classes() {
        let rho_bad = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
        let c = derive_coefficients(&MarketSpec::from_impact(&coupled(), rho_bad, 0.2).with_grid(4)).unwrap();
        assert_eq!(kappa_definiteness(&c).0, Definiteness::Indefinite);
        let c = derive_coefficients(&MarketSpec::from_impact(&coupled(), identity(2) * 2.0, 1.0).with_grid(4)).unwrap();
        assert_eq!(kappa_definiteness(&c).0, Definiteness::PositiveDefinite);
        let c = derive_coefficients(&MarketSpec::new(identity(2), Vector::from_vec(vec![1.0, 1.0]), Mat::zeros(2, 2), 1.0).with_grid(4))
            .unwrap();
        let (d, s) = kappa_definiteness(&c);
        assert_eq!(d, Definiteness::PositiveSemidefinite);
        assert_eq!(s.min_eig, 0.0);
    }

    #[test]
    fn zero_spec_audit() {
        let spec = MarketSpec::new(identity(2), Vector::from_vec(vec![1.0, 1.0]), Mat::zeros(2, 2), 1.0).with_grid(4);
        let c = derive_coefficients(&spec).unwrap();
        let r = assumption_audit(&spec, &c);
        assert_eq!(r.entries.len(), CHECKS.len());
        for (e, name) in r.entries.iter().zip(CHECKS) {
            assert_eq!(e.name, name);
        }
        assert_eq!(r.get("q_psd").unwrap().status, CheckStatus::Pass);
        assert_eq!(r.get("r_uniformly_pd").unwrap().status, CheckStatus::Fail);
        assert!(!r.passes_hard_checks());
        assert_eq!(r, assumption_audit(&spec, &c));
    }

    #[test]
    fn eigen_resilience_condition_on_drifting_market() {
        let o = Mat::from_row_slice(2, 2, &[3.0, 4.0, -4.0, 3.0]) / 5.0;
        let spec = MarketSpec::new(o, Vector::from_vec(vec![1.0, 1.0]), identity(2), 1.0)
            .with_drift(TimeFn::Constant(Vector::from_vec(vec![3.0, 1.0])))
            .with_grid(10);
        let c = derive_coefficients(&spec).unwrap();
        let r = assumption_audit(&spec, &c);
        let e = r.get("eigen_resilience_condition").unwrap();
        assert_eq!(e.status, CheckStatus::Pass);
        assert!(e.witness.contains("3.000000e0"));
        assert!(r.passes_hard_checks());
    }
}
