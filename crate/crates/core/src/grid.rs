use crate::error::{ExecError, Result};

/// Uniform time grid `tᵢ = i·T/N` on `[0, T]`.
///
/// Coefficients are sampled on the half-grid `j·T/(2N)`, `j = 0..=2N`, so
/// that fourth-order Runge-Kutta stages see exact midpoint values. Node `i`
/// sits at half-index `2i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ExecError::InvalidSpec(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(ExecError::InvalidSpec("grid needs at least one step".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            self.horizon * i as f64 / self.steps as f64
        }
    }

    pub fn half_time(&self, j: usize) -> f64 {
        if j == 2 * self.steps {
            self.horizon
        } else {
            self.horizon * j as f64 / (2 * self.steps) as f64
        }
    }

    pub fn half_len(&self) -> usize {
        2 * self.steps + 1
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.time(i))
    }

    /// Index of the cell `[tᵢ, tᵢ₊₁)` containing `t`, clamped to the grid.
    pub fn cell_of(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let i = (t / self.dt()).floor() as usize;
        i.min(self.steps - 1)
    }

    /// Node index at or left of `t`, in `0..=N`.
    pub fn node_at_or_before(&self, t: f64) -> usize {
        if t >= self.horizon {
            return self.steps;
        }
        let i = (t / self.dt() + 1e-9).floor();
        (i.max(0.0) as usize).min(self.steps)
    }
}
