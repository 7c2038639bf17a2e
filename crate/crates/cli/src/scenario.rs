//! JSON scenario files.
//!
//! Matrices are arrays of rows. Time-dependent fields are either a constant
//! or a piecewise-constant table `{"times": [...], "values": [...]}` where
//! `values[k]` holds on `[times[k], times[k+1])`.

use mexec_core::{Mat, MarketSpec, TimeFn, Vector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series<T> {
    Constant(T),
    Table(Table<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table<T> {
    pub times: Vec<f64>,
    pub values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    #[serde(default = "one")]
    pub m: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "O")]
    pub frame: Rows,
    pub lambda0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Series<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Series<Rows>>,
    pub rho: Series<Rows>,
    #[serde(rename = "Xi", default, skip_serializing_if = "Option::is_none")]
    pub risk: Option<Series<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Series<Vec<f64>>>,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSettings>,
}

fn one() -> usize {
    1
}

fn schema(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

fn vector(name: &str, v: &[f64], len: usize) -> Result<Vector, CliError> {
    if v.len() != len {
        return Err(schema(format!("{name}: expected {len} entries, got {}", v.len())));
    }
    Ok(Vector::from_column_slice(v))
}

fn matrix(name: &str, rows: &Rows, nrows: usize, ncols: usize) -> Result<Mat, CliError> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(schema(format!("{name}: expected a {nrows}x{ncols} array of rows")));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn series<T, U: Clone>(
    name: &str,
    s: &Series<T>,
    convert: impl Fn(&str, &T) -> Result<U, CliError>,
) -> Result<TimeFn<U>, CliError> {
    match s {
        Series::Constant(v) => Ok(TimeFn::Constant(convert(name, v)?)),
        Series::Table(t) => {
            let values = t.values.iter().map(|v| convert(name, v)).collect::<Result<Vec<_>, _>>()?;
            TimeFn::piecewise(t.times.clone(), values).map_err(|e| schema(format!("{name}: {e}")))
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Builds and validates the market spec.
    pub fn to_spec(&self) -> Result<MarketSpec, CliError> {
        let (n, m) = (self.n, self.m);
        if n == 0 || m == 0 {
            return Err(schema("n and m must be positive"));
        }
        let vec_n = |name: &str, v: &Vec<f64>| vector(name, v, n);
        let mat_nn = |name: &str, r: &Rows| matrix(name, r, n, n);
        let mut spec = MarketSpec::new(
            matrix("O", &self.frame, n, n)?,
            vector("lambda0", &self.lambda0, n)?,
            Mat::zeros(n, n),
            self.horizon,
        );
        spec.resilience = series("rho", &self.rho, mat_nn)?;
        if let Some(mu) = &self.mu {
            spec.drift = series("mu", mu, vec_n)?;
        }
        spec.factors = m;
        spec.vol = match &self.sigma {
            Some(s) => series("sigma", s, |name, r| matrix(name, r, n, m))?,
            None => TimeFn::Constant(Mat::zeros(n, m)),
        };
        if let Some(xi) = &self.risk {
            spec.risk = series("Xi", xi, mat_nn)?;
        }
        if let Some(xi) = &self.xi {
            spec.terminal_target = vector("xi", xi, n)?;
        }
        if let Some(zeta) = &self.zeta {
            spec.running_target = series("zeta", zeta, vec_n)?;
        }
        spec.x0 = vector("x0", &self.x0, n)?;
        if let Some(d0) = &self.d0 {
            spec.d0 = vector("d0", d0, n)?;
        }
        if let Some(steps) = self.grid_steps {
            spec.grid_steps = steps;
        }
        spec.validate().map_err(|e| schema(e.to_string()))?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"n": 1, "T": 1.0, "O": [[1.0]], "lambda0": [1.0], "rho": [[1.0]], "x0": [1.0]}"#;

    #[test]
    fn minimal_scenario_uses_defaults() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        assert_eq!(s.m, 1);
        let spec = s.to_spec().unwrap();
        assert_eq!(spec.grid_steps, 1000);
        assert_eq!(spec.d0[0], 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"x0\"", "\"extra\": 1, \"x0\"");
        assert!(matches!(Scenario::from_json(&text), Err(CliError::Schema(_))));
    }

    #[test]
    fn tables_become_piecewise_functions() {
        let text = MINIMAL.replace(r#""rho": [[1.0]]"#, r#""rho": {"times": [0.0, 0.5], "values": [[[1.0]], [[3.0]]]}"#);
        let spec = Scenario::from_json(&text).unwrap().to_spec().unwrap();
        assert_eq!(spec.resilience.eval(0.25)[(0, 0)], 1.0);
        assert_eq!(spec.resilience.eval(0.75)[(0, 0)], 3.0);
    }

    #[test]
    fn wrong_shapes_are_schema_errors() {
        let text = MINIMAL.replace(r#""x0": [1.0]"#, r#""x0": [1.0, 2.0]"#);
        assert!(matches!(Scenario::from_json(&text).unwrap().to_spec(), Err(CliError::Schema(_))));
    }
}
