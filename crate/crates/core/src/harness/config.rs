use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::error::{Error, Result};
use crate::reservoir::Topology;
use crate::search_space::SearchSpace;

/// Full description of one tuning experiment, loaded from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: Topology,
    /// `narma10`, `mg17`, `mg30`, or any `mg<tau>`.
    pub task: Benchmark,
    #[serde(default = "defaults::washout")]
    pub washout: usize,
    #[serde(default = "defaults::train")]
    pub train: usize,
    #[serde(default = "defaults::test")]
    pub test: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default = "defaults::evaluations")]
    pub evaluations: usize,
    #[serde(default = "defaults::reevaluations")]
    pub reevaluations: usize,
    /// Defaults to on for NARMA10 and off for Mackey-Glass.
    #[serde(default)]
    pub feedback: Option<bool>,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default = "defaults::jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub population_size: Option<usize>,
    #[serde(default)]
    pub search_space: SearchSpace,
}

mod defaults {
    pub fn washout() -> usize {
        1000
    }
    pub fn train() -> usize {
        5000
    }
    pub fn test() -> usize {
        5000
    }
    pub fn trials() -> usize {
        10
    }
    pub fn evaluations() -> usize {
        5000
    }
    pub fn reevaluations() -> usize {
        100
    }
    pub fn jobs() -> usize {
        1
    }
}

impl ExperimentConfig {
    /// Protocol defaults for the given network and task.
    pub fn new(topology: Topology, task: Benchmark) -> Self {
        ExperimentConfig {
            topology,
            task,
            washout: defaults::washout(),
            train: defaults::train(),
            test: defaults::test(),
            trials: defaults::trials(),
            evaluations: defaults::evaluations(),
            reevaluations: defaults::reevaluations(),
            feedback: None,
            seed: 0,
            jobs: defaults::jobs(),
            population_size: None,
            search_space: SearchSpace::default(),
        }
    }

    pub fn feedback_enabled(&self) -> bool {
        self.feedback.unwrap_or_else(|| self.task.default_feedback())
    }

    pub fn total_length(&self) -> usize {
        self.washout + self.train + self.test
    }

    pub fn validate(&self) -> Result<()> {
        if self.topology.n == 0 {
            return Err(Error::Config("topology.n must be >= 1".into()));
        }
        for (name, v) in [
            ("washout", self.washout),
            ("train", self.train),
            ("test", self.test),
            ("trials", self.trials),
            ("evaluations", self.evaluations),
            ("reevaluations", self.reevaluations),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if let Some(p) = self.population_size {
            if p < 4 {
                return Err(Error::Config("population_size must be >= 4".into()));
            }
        }
        if self.trials > 4096 {
            return Err(Error::Config("at most 4096 trials are supported".into()));
        }
        self.search_space.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::TopologyKind;

    #[test]
    fn minimal_toml_uses_protocol_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            task = "narma10"
            [topology]
            kind = "sparse"
            n = 500
            "#,
        )
        .unwrap();
        assert_eq!((cfg.washout, cfg.train, cfg.test), (1000, 5000, 5000));
        assert_eq!((cfg.trials, cfg.evaluations, cfg.reevaluations), (10, 5000, 100));
        assert!(cfg.feedback_enabled());
        assert_eq!(cfg.search_space, SearchSpace::default());
    }

    #[test]
    fn mackey_glass_defaults_to_no_feedback() {
        let cfg = ExperimentConfig::new(
            Topology::new(TopologyKind::Ring, 10).unwrap(),
            Benchmark::MackeyGlass { tau: 17 },
        );
        assert!(!cfg.feedback_enabled());
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ExperimentConfig::new(
            Topology::new(TopologyKind::Chain, 50).unwrap(),
            Benchmark::MackeyGlass { tau: 30 },
        );
        cfg.feedback = Some(true);
        cfg.population_size = Some(12);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid() {
        let bad = [
            "task = \"narma10\"\n[topology]\nkind = \"sparse\"\nn = 0\n",
            "task = \"lorenz\"\n[topology]\nkind = \"sparse\"\nn = 5\n",
            "task = \"narma10\"\ntrials = 0\n[topology]\nkind = \"sparse\"\nn = 5\n",
            "task = \"narma10\"\ntypo = 1\n[topology]\nkind = \"sparse\"\nn = 5\n",
        ];
        for text in bad {
            assert!(ExperimentConfig::from_toml(text).is_err(), "{text}");
        }
    }
}
