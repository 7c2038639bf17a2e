//! Ready-made markets: the worked examples used by the CLI, the
//! acceptance suite and the benchmarks.

use crate::linalg::{identity, Mat, Vector};
use crate::model::{MarketSpec, TimeFn};

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

/// `γ = [[2,1],[1,1]]`, shared by several examples.
pub fn coupled_impact() -> Mat {
    Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.0])
}

/// Frame `(1/5)[[3,4],[−4,3]]`.
pub fn rotated_frame() -> Mat {
    Mat::from_row_slice(2, 2, &[3.0, 4.0, -4.0, 3.0]) / 5.0
}

/// Unit impact with symmetric cross-resilience `[[ρ₁, ρ₃], [ρ₃, ρ₁]]`.
pub fn cross_resilience(rho1: f64, rho3: f64, horizon: f64) -> MarketSpec {
    let rho = Mat::from_row_slice(2, 2, &[rho1, rho3, rho3, rho1]);
    MarketSpec::new(identity(2), v2(1.0, 1.0), rho, horizon)
}

/// Positive definite `γ` and `ρ` whose `κ` is indefinite.
pub fn indefinite_kappa(horizon: f64) -> MarketSpec {
    let rho = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 5.0]);
    MarketSpec::from_impact(&coupled_impact(), rho, horizon).with_position(v2(100.0, 0.0))
}

/// Non-commuting `γ` and `ρ` with positive definite `κ`.
pub fn non_commuting() -> MarketSpec {
    let rho = Mat::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 5.0]);
    MarketSpec::from_impact(&coupled_impact(), rho, 1.0).with_position(v2(100.0, -30.0))
}

/// Scalar resilience `ρ̃I` with a general impact matrix.
pub fn scalar_resilience(gamma: &Mat, rho: f64, horizon: f64, x: Vector) -> MarketSpec {
    let n = gamma.nrows();
    MarketSpec::from_impact(gamma, identity(n) * rho, horizon).with_position(x)
}

/// Unit impact, resilience `[[ρ₁, ρ₃], [ρ₃, ρ₂]]`, position `(x₁, 0)`.
pub fn crossing_zero(horizon: f64, x1: f64, rho1: f64, rho2: f64, rho3: f64) -> MarketSpec {
    let rho = Mat::from_row_slice(2, 2, &[rho1, rho3, rho3, rho2]);
    MarketSpec::new(identity(2), v2(1.0, 1.0), rho, horizon).with_position(v2(x1, 0.0))
}

/// Unit impact, `ρ = 3I`, correlated risk `[[1, ½], [½, 1]]`, `x = (100, 0)`.
pub fn cross_risk() -> MarketSpec {
    MarketSpec::new(identity(2), v2(1.0, 1.0), identity(2) * 3.0, 1.0)
        .with_risk(TimeFn::Constant(Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0])))
        .with_position(v2(100.0, 0.0))
}

/// Rotated frame with drifts `(3, 1)`, `ρ = I`, `x = (100, 0)`.
pub fn cross_impact() -> MarketSpec {
    MarketSpec::new(rotated_frame(), v2(1.0, 1.0), identity(2), 1.0)
        .with_drift(TimeFn::Constant(v2(3.0, 1.0)))
        .with_position(v2(100.0, 0.0))
}

/// `cross_impact` with both eigenvalues driven by one Brownian motion of
/// unit volatility.
pub fn stochastic_impact() -> MarketSpec {
    cross_impact().with_vol(TimeFn::Constant(Mat::from_row_slice(2, 1, &[1.0, 1.0])), 1)
}

/// Risk, cross-impact and non-zero targets together.
pub fn targeted() -> MarketSpec {
    let rho = Mat::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
    MarketSpec::new(rotated_frame(), v2(1.0, 2.0), rho, 1.0)
        .with_drift(TimeFn::Constant(v2(0.5, -0.3)))
        .with_risk(TimeFn::Constant(Mat::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])))
        .with_targets(v2(10.0, -5.0), TimeFn::func(|t| v2(40.0 * (1.0 - t), 10.0 * t)))
        .with_position(v2(100.0, 20.0))
        .with_deviation(v2(5.0, 0.0))
}
