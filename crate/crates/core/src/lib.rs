//! Multi-asset optimal trade execution with matrix-valued transient price
//! impact and resilience.
//!
//! The price impact is `γ(t) = Oᵀ diag(λ(t)) O` with a fixed orthogonal frame
//! `O` and (possibly stochastic) geometric eigenvalue dynamics. Deviations
//! revert through a resilience matrix `ρ(t)`, and a quadratic risk term with
//! running and terminal targets may be added. The crate turns such a market
//! into a linear-quadratic control problem on the hidden deviation
//! `𝓗 = γ^{-1/2} D − γ^{1/2} X`, solves the associated backward Riccati
//! equations for deterministic coefficient paths and assembles the optimal
//! execution strategy, its deviation and its cost.
//!
//! Module map:
//!
//! * [`model`]: market specification and the derived LQ coefficients.
//! * [`lindyn`]: deviation dynamics, execution costs, hidden-deviation state
//!   and the strategy/control bijection.
//! * [`riccati`]: backward matrix Riccati and linear target equations.
//! * [`optimal`]: optimal feedback strategies, deviations and costs.
//! * [`montecarlo`]: eigenvalue/state simulation and Monte Carlo costs.
//! * [`checks`]: definiteness classification and assumption audits.
//! * [`presets`]: ready-made markets used by the CLI and the test-suite.

// `!(a > b)` is used on purpose so that NaN fails the test.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod lindyn;
pub mod model;
pub mod montecarlo;
pub mod optimal;
pub mod par;
pub mod paths;
pub mod presets;
pub mod riccati;

pub use error::{ExecError, Result};
pub use grid::Grid;
pub use linalg::{Mat, Vector};
pub use model::{derive_coefficients, CoefficientSet, MarketSpec, TimeFn};
