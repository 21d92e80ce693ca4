//! Benchmark task generators: NARMA10 and Mackey-Glass.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NARMA_DEFAULT_ATTEMPTS: usize = 100;

/// Mackey-Glass Euler step size.
pub const MG_DELTA: f64 = 0.1;
/// Raw Euler steps per emitted sample.
pub const MG_SUBSAMPLE: usize = 10;
pub const MG_HISTORY: f64 = 1.2;
/// Subsampled points discarded before the task window begins.
pub const MG_TRANSIENT: usize = 1000;
/// The seed picks an extra start offset below this bound so different seeds
/// see different stretches of the attractor.
pub const MG_MAX_OFFSET: usize = 2000;

/// Which benchmark a task comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Benchmark {
    Narma10,
    MackeyGlass { tau: u32 },
}

impl Benchmark {
    pub fn name(&self) -> String {
        match self {
            Benchmark::Narma10 => "narma10".into(),
            Benchmark::MackeyGlass { tau } => format!("mg{tau}"),
        }
    }

    /// Feedback is useful for NARMA10; for one-step MG prediction the input
    /// already carries the previous target.
    pub fn default_feedback(&self) -> bool {
        matches!(self, Benchmark::Narma10)
    }

    pub fn generate(&self, length: usize, seed: u64) -> Result<Task> {
        match *self {
            Benchmark::Narma10 => gen_narma10(length, seed),
            Benchmark::MackeyGlass { tau } => gen_mackey_glass(tau, length, seed),
        }
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    /// Accepts `narma10` or `mg<tau>` (e.g. `mg17`).
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        if lower == "narma10" {
            return Ok(Benchmark::Narma10);
        }
        if let Some(tau) = lower.strip_prefix("mg").and_then(|t| t.parse::<u32>().ok()) {
            if tau >= 1 {
                return Ok(Benchmark::MackeyGlass { tau });
            }
        }
        Err(Error::InvalidArgument(format!(
            "unknown benchmark `{s}`; expected narma10 or mg<tau> (mg17, mg30)"
        )))
    }
}

impl TryFrom<String> for Benchmark {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Benchmark> for String {
    fn from(b: Benchmark) -> String {
        b.name()
    }
}

/// Maps series values into the network's operating range and back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    /// `v -> tanh(v - 1)`, inverse `v -> atanh(v) + 1`.
    TanhShift,
}

impl OutputTransform {
    pub fn forward(&self, v: f64) -> f64 {
        match self {
            OutputTransform::TanhShift => (v - 1.0).tanh(),
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        match self {
            OutputTransform::TanhShift => v.atanh() + 1.0,
        }
    }

    /// Inverse with the argument clamped into the open domain of `atanh`.
    pub fn inverse_clamped(&self, v: f64) -> f64 {
        const LIM: f64 = 1.0 - 1e-12;
        self.inverse(v.clamp(-LIM, LIM))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub name: String,
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: Option<u64>,
    pub tau: Option<u32>,
    pub output_transform: Option<OutputTransform>,
}

impl Task {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Writes `u,y` rows preceded by `#`-comment metadata.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# name={}", self.name);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "# seed={seed}");
        }
        if let Some(tau) = self.tau {
            let _ = writeln!(s, "# tau={tau}");
        }
        if let Some(OutputTransform::TanhShift) = self.output_transform {
            let _ = writeln!(s, "# output_transform=tanh_shift");
        }
        s.push_str("u,y\n");
        for (u, y) in self.u.iter().zip(&self.y) {
            let _ = writeln!(s, "{u:?},{y:?}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Task> {
        let mut task = Task {
            name: String::new(),
            u: Vec::new(),
            y: Vec::new(),
            seed: None,
            tau: None,
            output_transform: None,
        };
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::InvalidArgument(format!("line {}: {what}", lineno + 1));
            if let Some(meta) = line.strip_prefix('#') {
                let Some((key, value)) = meta.trim().split_once('=') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "name" => task.name = value.to_string(),
                    "seed" => task.seed = Some(value.parse().map_err(|_| bad("bad seed"))?),
                    "tau" => task.tau = Some(value.parse().map_err(|_| bad("bad tau"))?),
                    "output_transform" if value == "tanh_shift" => {
                        task.output_transform = Some(OutputTransform::TanhShift)
                    }
                    _ => {}
                }
                continue;
            }
            if !saw_header {
                if line != "u,y" {
                    return Err(bad("expected header `u,y`"));
                }
                saw_header = true;
                continue;
            }
            let (u, y) = line.split_once(',').ok_or_else(|| bad("expected two columns"))?;
            task.u.push(u.trim().parse().map_err(|_| bad("bad u value"))?);
            task.y.push(y.trim().parse().map_err(|_| bad("bad y value"))?);
        }
        if !saw_header {
            return Err(Error::InvalidArgument("missing `u,y` header".into()));
        }
        Ok(task)
    }
}

/// NARMA10 recurrence driven by `u`.
///
/// Returns `y` of length `u.len() + 1` with `y[0] = 0` and
/// `y[t+1] = 0.3 y[t] + 0.05 y[t] Σ_{i=0..9} y[t-i] + 1.5 u[t-10] u[t] + 0.1`,
/// treating indices before the start as zero.
pub fn narma10_series(u: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; u.len() + 1];
    for t in 0..u.len() {
        let window: f64 = y[t.saturating_sub(9)..=t].iter().sum();
        let u_lag = if t >= 10 { u[t - 10] } else { 0.0 };
        y[t + 1] = 0.3 * y[t] + 0.05 * y[t] * window + 1.5 * u_lag * u[t] + 0.1;
    }
    y
}

/// NARMA10 task with inputs `u(t) ~ U(0, 0.5)` and targets `y(t+1)`, so the
/// target at step `t` depends on inputs up to `t`.
///
/// Sequences whose target leaves `[-1, 1]` are discarded and redrawn from the
/// same generator, at most [`NARMA_DEFAULT_ATTEMPTS`] times.
pub fn gen_narma10(length: usize, seed: u64) -> Result<Task> {
    gen_narma10_with_attempts(length, seed, NARMA_DEFAULT_ATTEMPTS)
}

pub fn gen_narma10_with_attempts(length: usize, seed: u64, max_attempts: usize) -> Result<Task> {
    if length < 11 {
        return Err(Error::InvalidArgument(format!(
            "NARMA10 needs length >= 11, got {length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..max_attempts {
        let u: Vec<f64> = (0..length).map(|_| 0.5 * rng.random::<f64>()).collect();
        let y = narma10_series(&u);
        if y.iter().all(|v| v.abs() <= 1.0) {
            return Ok(Task {
                name: "narma10".into(),
                u,
                y: y[1..].to_vec(),
                seed: Some(seed),
                tau: None,
                output_transform: None,
            });
        }
    }
    Err(Error::NarmaUnbounded(max_attempts))
}

/// One Euler step of the discretized Mackey-Glass equation.
pub fn mackey_glass_step(current: f64, delayed: f64) -> f64 {
    current + MG_DELTA * (0.2 * delayed / (1.0 + delayed.powi(10)) - 0.1 * current)
}

/// Raw (not subsampled) Euler trajectory starting from a constant history.
///
/// The returned vector begins with the present value followed by `steps`
/// integrated values.
pub fn mackey_glass_raw(tau: u32, history: f64, steps: usize) -> Vec<f64> {
    let delay = (tau as f64 / MG_DELTA).round() as usize;
    let mut buf = vec![history; delay + 1];
    buf.reserve(steps);
    for t in delay..delay + steps {
        let next = mackey_glass_step(buf[t], buf[t - delay]);
        buf.push(next);
    }
    buf.split_off(delay)
}

/// One-step-ahead Mackey-Glass prediction task in the `tanh(v - 1)` domain.
///
/// The raw series is integrated from a constant history of 1.2, subsampled
/// every tenth step, and the first [`MG_TRANSIENT`] points plus a seed-chosen
/// offset are discarded.
pub fn gen_mackey_glass(tau: u32, length: usize, seed: u64) -> Result<Task> {
    if tau == 0 {
        return Err(Error::InvalidArgument("tau must be positive".into()));
    }
    if length < 2 {
        return Err(Error::InvalidArgument(format!(
            "Mackey-Glass needs length >= 2, got {length}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..MG_MAX_OFFSET);
    let skip = MG_TRANSIENT + offset;
    let samples = skip + length + 1;
    let raw = mackey_glass_raw(tau, MG_HISTORY, (samples - 1) * MG_SUBSAMPLE);
    let transform = OutputTransform::TanhShift;
    let series: Vec<f64> = raw
        .iter()
        .step_by(MG_SUBSAMPLE)
        .skip(skip)
        .map(|&v| transform.forward(v))
        .collect();
    debug_assert_eq!(series.len(), length + 1);
    Ok(Task {
        name: format!("mg{tau}"),
        u: series[..length].to_vec(),
        y: series[1..].to_vec(),
        seed: Some(seed),
        tau: Some(tau),
        output_transform: Some(transform),
    })
}
