//! Encoding between optimizer coordinates and natural hyperparameter values.
//!
//! The optimizer works in a box `[-1.1, 1.1]^8`. Parameters that need fine
//! resolution near zero are stretched: `sigma_res` and `epsilon` through
//! `x -> e^{-50x}`, the weight scales and bias through `x -> 2x|x|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reservoir::{Hyperparameters, Topology};

pub const BOUND: f64 = 1.1;
pub const LOG_RATE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `v = e^{-50x}`
    LogExp,
    /// `v = 2x|x|`
    SignedSquare,
    Identity,
}

impl Transform {
    pub fn decode(self, x: f64) -> f64 {
        match self {
            Transform::LogExp => (-LOG_RATE * x).exp(),
            Transform::SignedSquare => 2.0 * x * x.abs(),
            Transform::Identity => x,
        }
    }

    pub fn encode(self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::NonFinite("hyperparameter value"));
        }
        match self {
            Transform::LogExp if v <= 0.0 => Err(Error::InvalidArgument(format!(
                "{v} is not representable in log space"
            ))),
            Transform::LogExp => Ok(-v.ln() / LOG_RATE),
            Transform::SignedSquare => Ok(v.signum() * (v.abs() / 2.0).sqrt()),
            Transform::Identity => Ok(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
    pub lower: f64,
    pub upper: f64,
    /// Initial optimizer step size for this coordinate.
    pub step: f64,
}

/// Encoded optimizer coordinates, one per hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchPoint(pub Vec<f64>);

impl SearchPoint {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub specs: Vec<ParamSpec>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        let table = [
            ("sigma_res", Transform::LogExp, 0.01),
            ("mu_res", Transform::SignedSquare, 0.05),
            ("omega_in", Transform::SignedSquare, 0.05),
            ("omega_fb", Transform::SignedSquare, 0.01),
            ("sparsity", Transform::Identity, 0.05),
            ("gamma", Transform::Identity, 0.05),
            ("mu_b", Transform::SignedSquare, 0.05),
            ("epsilon", Transform::LogExp, 0.05),
        ];
        SearchSpace {
            specs: table
                .into_iter()
                .map(|(name, transform, step)| ParamSpec {
                    name: name.into(),
                    transform,
                    lower: -BOUND,
                    upper: BOUND,
                    step,
                })
                .collect(),
        }
    }
}

impl SearchSpace {
    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    /// Checks that the table names each hyperparameter exactly once.
    pub fn validate(&self) -> Result<()> {
        if self.specs.len() != 8 {
            return Err(Error::Config(format!(
                "search space needs 8 parameters, got {}",
                self.specs.len()
            )));
        }
        let mut seen = [false; 8];
        for spec in &self.specs {
            let i = Hyperparameters::index_of(&spec.name)?;
            if seen[i] {
                return Err(Error::Config(format!("parameter `{}` listed twice", spec.name)));
            }
            seen[i] = true;
            if !(spec.lower < spec.upper) || !spec.lower.is_finite() || !spec.upper.is_finite() {
                return Err(Error::Config(format!("bad bounds for `{}`", spec.name)));
            }
            if !(spec.step > 0.0) {
                return Err(Error::Config(format!("step for `{}` must be > 0", spec.name)));
            }
        }
        Ok(())
    }

    pub fn initial_steps(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.step).collect()
    }

    /// Clamps each coordinate into its bounds.
    pub fn clamp(&self, point: &SearchPoint) -> SearchPoint {
        SearchPoint(
            point
                .0
                .iter()
                .zip(&self.specs)
                .map(|(&x, s)| if x.is_nan() { 0.0 } else { x.clamp(s.lower, s.upper) })
                .collect(),
        )
    }

    /// Clamps, then maps every coordinate to its natural value. Sparsity is
    /// kept in `[0, 1]` and the weight half-ranges are made nonnegative.
    pub fn decode(&self, point: &SearchPoint) -> Result<Hyperparameters> {
        if point.0.len() != self.specs.len() {
            return Err(Error::LengthMismatch {
                left: point.0.len(),
                right: self.specs.len(),
            });
        }
        let clamped = self.clamp(point);
        let mut values = [0.0; 8];
        for (spec, &x) in self.specs.iter().zip(&clamped.0) {
            values[Hyperparameters::index_of(&spec.name)?] = spec.transform.decode(x);
        }
        let mut hp = Hyperparameters::from_array(values);
        hp.sparsity = hp.sparsity.clamp(0.0, 1.0);
        hp.omega_in = hp.omega_in.abs();
        hp.omega_fb = hp.omega_fb.abs();
        Ok(hp)
    }

    pub fn encode(&self, hp: &Hyperparameters) -> Result<SearchPoint> {
        let values = hp.to_array();
        let mut coords = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            let v = values[Hyperparameters::index_of(&spec.name)?];
            let x = spec.transform.encode(v)?;
            if x < spec.lower || x > spec.upper {
                return Err(Error::InvalidArgument(format!(
                    "{} = {v} encodes to {x}, outside [{}, {}]",
                    spec.name, spec.lower, spec.upper
                )));
            }
            coords.push(x);
        }
        Ok(SearchPoint(coords))
    }

    pub fn initial_point(&self, topology: Topology) -> Result<SearchPoint> {
        self.encode(&initial_hyperparameters(topology))
    }
}

pub const INITIAL_SPARSITY: f64 = 0.1;

/// Hand-picked starting configuration; `sigma_res = 1 / (2k)` with `k` the
/// expected in-degree at the initial sparsity.
pub fn initial_hyperparameters(topology: Topology) -> Hyperparameters {
    let k = topology.average_in_degree(INITIAL_SPARSITY);
    Hyperparameters {
        sigma_res: if k > 0.0 { 1.0 / (2.0 * k) } else { 1.0 },
        mu_res: 0.0,
        omega_in: 0.02,
        omega_fb: 0.0,
        sparsity: INITIAL_SPARSITY,
        gamma: 0.9,
        mu_b: 0.0,
        epsilon: 4.5e-5,
    }
}
