//! Sampled random inputs shared by the solver and the simulator.

use crate::grid::Grid;
use crate::linalg::Vector;

/// Brownian increments `ΔW(tᵢ) = W(tᵢ₊₁) − W(tᵢ)`, one `m`-vector per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: Grid,
    pub increments: Vec<Vector>,
}

impl BrownianPath {
    pub fn factors(&self) -> usize {
        self.increments.first().map_or(0, |v| v.len())
    }

    /// `W(tᵢ)` for `i = 0..=N`, starting from `W(0) = 0`.
    pub fn levels(&self) -> Vec<Vector> {
        let m = self.factors();
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut w = Vector::zeros(m);
        out.push(w.clone());
        for dw in &self.increments {
            w += dw;
            out.push(w.clone());
        }
        out
    }
}

/// Eigenvalue trajectory `λ(tᵢ)` on the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaPath {
    pub grid: Grid,
    pub values: Vec<Vector>,
}

impl LambdaPath {
    /// Left-continuous piecewise-constant lookup.
    pub fn at(&self, t: f64) -> &Vector {
        &self.values[self.grid.node_at_or_before(t)]
    }
}
