//! Fitness definition, tuning trials, experiments and parameter scans.

mod config;
mod output;
mod scan;
pub mod seeds;

pub use config::ExperimentConfig;
pub use output::{
    read_summaries, render_report, render_welch_matrix, trace_csv, write_summaries, ReportEntry,
};
pub use scan::{scan_lengths, scan_parameter, LengthKind, ScanRow, ScanTable};
pub use seeds::Purpose;

use serde::{Deserialize, Serialize};

use crate::benchmarks::{Benchmark, Task};
use crate::cmaes::{CmaEs, GenerationRecord, OptimizerConfig};
use crate::error::{Error, Result};
use crate::metrics::{self, WelchTest};
use crate::parallel::Executor;
use crate::readout::fit_readout;
use crate::reservoir::{build_reservoir, EsnNetwork, Hyperparameters, Topology};
use crate::search_space::{initial_hyperparameters, SearchPoint};

/// Fitness assigned to diverged or non-finite evaluations. Finite errors
/// are capped at the same value so the penalty is never outranked.
pub const PENALTY: f64 = 1e6;

/// Everything needed to score one network except its weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub topology: Topology,
    pub task: Benchmark,
    pub washout: usize,
    pub train: usize,
    pub test: usize,
    pub feedback: bool,
}

impl Protocol {
    pub fn total_length(&self) -> usize {
        self.washout + self.train + self.test
    }

    fn check(&self) -> Result<()> {
        if self.train == 0 || self.test == 0 {
            return Err(Error::InvalidArgument("train and test lengths must be >= 1".into()));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn protocol(&self) -> Protocol {
        Protocol {
            topology: self.topology,
            task: self.task,
            washout: self.washout,
            train: self.train,
            test: self.test,
            feedback: self.feedback_enabled(),
        }
    }
}

/// Test-phase errors of one network on one data realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// In the network's operating range (transformed for Mackey-Glass).
    pub mse: f64,
    pub nmse: f64,
    pub nrmse: f64,
    /// Mackey-Glass only: error after mapping back to the original series.
    pub original_mse: Option<f64>,
    pub diverged: bool,
}

impl Evaluation {
    fn failed() -> Self {
        Evaluation {
            mse: f64::NAN,
            nmse: f64::NAN,
            nrmse: f64::NAN,
            original_mse: None,
            diverged: true,
        }
    }

    /// Penalized, finite objective value.
    pub fn fitness(&self) -> f64 {
        if self.diverged || !self.mse.is_finite() {
            PENALTY
        } else {
            self.mse.min(PENALTY)
        }
    }
}

/// Hyperparameters as actually used: feedback weights vanish when feedback is off.
pub fn effective_hyperparameters(hp: &Hyperparameters, feedback: bool) -> Hyperparameters {
    let mut hp = *hp;
    if !feedback {
        hp.omega_fb = 0.0;
    }
    hp
}

/// Trains the readout of `net` on the washout and train part of `task`
/// under teacher forcing, then scores the test part.
///
/// With feedback the test phase runs on the network's own output; without
/// it the feedback weights are zero and the same loop is open-loop.
pub fn train_and_test(net: &mut EsnNetwork, task: &Task, protocol: &Protocol) -> Result<Evaluation> {
    let fit_len = protocol.washout + protocol.train;
    if task.len() != fit_len + protocol.test {
        return Err(Error::LengthMismatch {
            left: task.len(),
            right: fit_len + protocol.test,
        });
    }
    let record = net.run_teacher_forced(&task.u[..fit_len], &task.y[..fit_len], protocol.washout)?;
    if record.diverged {
        return Ok(Evaluation::failed());
    }
    let w_out = fit_readout(&record.activations, &task.y[protocol.washout..fit_len])?;
    net.set_readout(w_out)?;
    let predicted = net.predict_free_running(&task.u[fit_len..])?;
    let target = &task.y[fit_len..];
    if net.diverged() || predicted.iter().any(|v| !v.is_finite()) {
        return Ok(Evaluation::failed());
    }
    let mse = metrics::mse(target, &predicted)?;
    let nmse = metrics::nmse(target, &predicted).unwrap_or(f64::NAN);
    let original_mse = match task.output_transform {
        Some(t) => {
            let a: Vec<f64> = target.iter().map(|&v| t.inverse_clamped(v)).collect();
            let b: Vec<f64> = predicted.iter().map(|&v| t.inverse_clamped(v)).collect();
            Some(metrics::mse(&a, &b)?)
        }
        None => None,
    };
    Ok(Evaluation {
        mse,
        nmse,
        nrmse: nmse.sqrt(),
        original_mse,
        diverged: false,
    })
}

/// Builds a fresh network for `hp` and scores it on fresh data, both drawn
/// from `eval_seed`.
pub fn evaluate_hyperparameters(hp: &Hyperparameters, protocol: &Protocol, eval_seed: u64) -> Result<Evaluation> {
    protocol.check()?;
    let hp = effective_hyperparameters(hp, protocol.feedback);
    let task = protocol.task.generate(protocol.total_length(), eval_seed)?;
    let mut net = build_reservoir(protocol.topology, &hp, seeds::reservoir_seed(eval_seed))?;
    train_and_test(&mut net, &task, protocol)
}

/// Scores an existing network (fixed reservoir, input and feedback weights)
/// after retraining its readout on fresh data drawn from `eval_seed`.
pub fn evaluate_network(net: &EsnNetwork, protocol: &Protocol, eval_seed: u64) -> Result<Evaluation> {
    protocol.check()?;
    let task = protocol.task.generate(protocol.total_length(), eval_seed)?;
    let mut net = net.clone();
    net.reseed_noise(seeds::reservoir_seed(eval_seed));
    train_and_test(&mut net, &task, protocol)
}

/// Penalized objective for hyperparameters; never fails.
pub fn hyperparameter_fitness(hp: &Hyperparameters, protocol: &Protocol, eval_seed: u64) -> f64 {
    evaluate_hyperparameters(hp, protocol, eval_seed).map_or(PENALTY, |e| e.fitness())
}

/// Penalized objective for an encoded search point; never fails.
pub fn fitness(point: &SearchPoint, cfg: &ExperimentConfig, eval_seed: u64) -> f64 {
    match cfg.search_space.decode(point) {
        Ok(hp) => hyperparameter_fitness(&hp, &cfg.protocol(), eval_seed),
        Err(_) => PENALTY,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub master: u64,
    pub trial: usize,
    pub optimizer: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub topology: Topology,
    pub task: Benchmark,
    pub feedback: bool,
    pub best_point: SearchPoint,
    pub best_hyperparameters: Hyperparameters,
    /// Fitness of the best point during the search.
    pub search_fitness: f64,
    pub generations: usize,
    pub evaluations: usize,
    /// Penalized test MSE of each re-evaluation on fresh data.
    pub reevaluation_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Sample standard deviation of `reevaluation_mse`.
    pub std_mse: f64,
    /// Mackey-Glass only: mean error in the original series domain.
    pub mean_original_mse: Option<f64>,
    /// File name of the per-generation trace.
    pub trace_file: String,
    pub seeds: TrialSeeds,
    #[serde(skip)]
    pub trace: Vec<GenerationRecord>,
}

impl TrialResult {
    pub fn trace_file_name(trial: usize) -> String {
        format!("trace_trial_{trial:03}.csv")
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = metrics::mean(v);
    let s = if v.len() > 1 { metrics::sample_variance(v).sqrt() } else { 0.0 };
    (m, s)
}

/// Re-evaluates `hp` `count` times on fresh seeds of the given purpose.
pub fn reevaluate(
    hp: &Hyperparameters,
    cfg: &ExperimentConfig,
    purpose: Purpose,
    trial: usize,
    count: usize,
    exec: &Executor,
) -> Result<Vec<Evaluation>> {
    let protocol = cfg.protocol();
    let seeds = (0..count)
        .map(|i| seeds::derive(cfg.seed, purpose, trial as u64, 0, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(exec.map(&seeds, |&s| {
        evaluate_hyperparameters(hp, &protocol, s).unwrap_or_else(|_| Evaluation::failed())
    }))
}

fn penalized(evals: &[Evaluation]) -> Vec<f64> {
    evals.iter().map(Evaluation::fitness).collect()
}

/// Mean and std of the untuned starting configuration over `count` fresh
/// realizations.
pub fn baseline(cfg: &ExperimentConfig, count: usize, exec: &Executor) -> Result<Vec<f64>> {
    let hp = initial_hyperparameters(cfg.topology);
    Ok(penalized(&reevaluate(&hp, cfg, Purpose::Baseline, 0, count, exec)?))
}

/// One optimizer run from the standard starting point, followed by fresh
/// re-evaluations of the best point seen.
pub fn run_trial(cfg: &ExperimentConfig, trial: usize, exec: &Executor) -> Result<TrialResult> {
    cfg.validate()?;
    let space = &cfg.search_space;
    let optimizer_seed = seeds::derive(cfg.seed, Purpose::Optimizer, trial as u64, 0, 0)?;
    let mut oc = OptimizerConfig::new(
        space.initial_point(cfg.topology)?.0,
        space.initial_steps(),
        cfg.evaluations,
        optimizer_seed,
    );
    oc.population_size = cfg.population_size;
    let mut es = CmaEs::new(&oc)?;

    let mut trace = Vec::new();
    while !es.terminated() {
        let candidates = es.ask()?;
        let keys = (0..candidates.len())
            .map(|i| seeds::derive(cfg.seed, Purpose::Search, trial as u64, es.generation() as u64, i as u64))
            .collect::<Result<Vec<_>>>()?;
        let jobs: Vec<(SearchPoint, u64)> = candidates
            .iter()
            .zip(keys)
            .map(|(c, k)| (SearchPoint(c.clone()), k))
            .collect();
        let values = exec.map(&jobs, |(p, k)| fitness(p, cfg, *k));
        trace.push(es.tell(&candidates, &values)?);
    }

    let (best, search_fitness) = es.recommend()?;
    let best_point = space.clamp(&SearchPoint(best));
    let best_hyperparameters = effective_hyperparameters(&space.decode(&best_point)?, cfg.feedback_enabled());
    let evals = reevaluate(&best_hyperparameters, cfg, Purpose::Reevaluation, trial, cfg.reevaluations, exec)?;
    let reevaluation_mse = penalized(&evals);
    let (mean_mse, std_mse) = mean_std(&reevaluation_mse);
    let mean_original_mse = match cfg.task {
        Benchmark::MackeyGlass { .. } => {
            let v: Vec<f64> = evals
                .iter()
                .map(|e| e.original_mse.filter(|m| m.is_finite()).map_or(PENALTY, |m| m.min(PENALTY)))
                .collect();
            Some(metrics::mean(&v))
        }
        Benchmark::Narma10 => None,
    };

    Ok(TrialResult {
        trial,
        topology: cfg.topology,
        task: cfg.task,
        feedback: cfg.feedback_enabled(),
        best_point,
        best_hyperparameters,
        search_fitness,
        generations: es.generation(),
        evaluations: es.evaluations(),
        reevaluation_mse,
        mean_mse,
        std_mse,
        mean_original_mse,
        trace_file: TrialResult::trace_file_name(trial),
        seeds: TrialSeeds {
            master: cfg.seed,
            trial,
            optimizer: optimizer_seed,
        },
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trials: Vec<TrialResult>,
    /// Index into `trials` of the trial with the lowest mean re-evaluated MSE.
    pub best_trial: usize,
}

impl ExperimentReport {
    pub fn best(&self) -> &TrialResult {
        &self.trials[self.best_trial]
    }

    pub fn entry(&self) -> ReportEntry {
        ReportEntry::from_trial(self.best())
    }
}

/// Index of the trial with the lowest mean; earlier trials win ties.
pub fn best_trial_index(trials: &[TrialResult]) -> Option<usize> {
    (0..trials.len()).min_by(|&a, &b| trials[a].mean_mse.total_cmp(&trials[b].mean_mse))
}

pub fn run_experiment(cfg: &ExperimentConfig, exec: &Executor) -> Result<ExperimentReport> {
    cfg.validate()?;
    let trials = (0..cfg.trials)
        .map(|t| run_trial(cfg, t, exec))
        .collect::<Result<Vec<_>>>()?;
    let best_trial = best_trial_index(&trials).expect("trials >= 1");
    Ok(ExperimentReport { trials, best_trial })
}

/// Pairwise Welch tests between labelled result sets; the diagonal compares
/// each set with itself. Entries are `None` when a test is undefined.
pub fn welch_matrix(sets: &[(String, Vec<f64>)]) -> Vec<Vec<Option<WelchTest>>> {
    sets.iter()
        .map(|(_, a)| sets.iter().map(|(_, b)| metrics::welch_t_test(a, b).ok()).collect())
        .collect()
}

/// Best trained network for a tuned configuration: reservoir and readout
/// drawn from a dedicated seed.
pub fn build_trained_network(hp: &Hyperparameters, cfg: &ExperimentConfig, trial: usize) -> Result<EsnNetwork> {
    let protocol = cfg.protocol();
    let seed = seeds::derive(cfg.seed, Purpose::Evaluate, trial as u64, 0, 0)?;
    let hp = effective_hyperparameters(hp, protocol.feedback);
    let task = protocol.task.generate(protocol.total_length(), seed)?;
    let mut net = build_reservoir(protocol.topology, &hp, seeds::reservoir_seed(seed))?;
    train_and_test(&mut net, &task, &protocol)?;
    net.reset();
    Ok(net)
}
