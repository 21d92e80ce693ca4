//! Echo state networks with active CMA-ES hyperparameter tuning.
//!
//! The crate covers the reservoir model and its least-squares readout, the
//! NARMA10 and Mackey-Glass benchmarks, the encoded search space, the
//! optimizer, and a harness that runs complete tuning experiments and
//! sensitivity scans.

pub mod benchmarks;
pub mod cmaes;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod parallel;
pub mod readout;
pub mod reservoir;
pub mod search_space;

pub use benchmarks::{Benchmark, Task};
pub use cmaes::{CmaEs, OptimizerConfig};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, TrialResult};
pub use parallel::Executor;
pub use reservoir::{build_reservoir, EsnNetwork, Hyperparameters, Topology, TopologyKind};
pub use search_space::{SearchPoint, SearchSpace};
