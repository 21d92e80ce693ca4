//! `esn-tune` command-line front end.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 when a
//! computation or write fails after the inputs were accepted.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use esn_tune::benchmarks::Benchmark;
use esn_tune::harness::{
    self, seeds, ExperimentConfig, LengthKind, Protocol, Purpose, ReportEntry, ScanTable, TrialResult,
};
use esn_tune::search_space::initial_hyperparameters;
use esn_tune::{EsnNetwork, Executor, Hyperparameters, Topology, TopologyKind};

#[derive(Parser)]
#[command(name = "esn-tune", version, about = "Tune echo state network hyperparameters with active CMA-ES")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full tuning protocol and write summaries, traces, report and networks.
    Tune(TuneArgs),
    /// Re-evaluate a saved network on fresh data.
    Evaluate(EvaluateArgs),
    /// Scan one hyperparameter or protocol length around a base configuration.
    Scan(ScanArgs),
    /// Export a benchmark sequence as CSV.
    GenBench(GenBenchArgs),
    /// Record reservoir activations as a steps-by-neurons CSV matrix.
    DumpActivity(DumpArgs),
    /// Aggregate JSON-lines trial summaries into a report table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Overrides the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Network JSON written by `tune`.
    #[arg(long)]
    network: PathBuf,
    /// Experiment config supplying task and lengths.
    #[arg(long, conflicts_with = "task")]
    config: Option<PathBuf>,
    /// Task name when no config is given (`narma10`, `mg17`, ...).
    #[arg(long)]
    task: Option<Benchmark>,
    #[arg(long, default_value_t = 1000)]
    washout: usize,
    #[arg(long, default_value_t = 5000)]
    train: usize,
    #[arg(long, default_value_t = 5000)]
    test: usize,
    /// Free-running feedback in the test phase; defaults to the task default.
    #[arg(long)]
    feedback: Option<bool>,
    #[arg(long, default_value_t = 100)]
    repeats: usize,
    /// Draw a new reservoir per repeat instead of keeping the saved weights.
    #[arg(long)]
    fresh_reservoir: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON file with hyperparameters, a saved network, or trial summaries.
    /// Defaults to the untuned starting configuration.
    #[arg(long)]
    base: Option<PathBuf>,
    /// A hyperparameter name, `washout` or `train`.
    #[arg(long)]
    param: String,
    /// Comma-separated values or `start:step:stop`.
    #[arg(long, allow_hyphen_values = true)]
    grid: String,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Output CSV file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct GenBenchArgs {
    /// `narma10`, `mg`, or `mg<tau>`.
    benchmark: String,
    #[arg(long)]
    length: usize,
    /// Delay for Mackey-Glass when the name carries none.
    #[arg(long, default_value_t = 17)]
    tau: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    /// Saved network; otherwise one is built from `--topology` and `--neurons`.
    #[arg(long, conflicts_with_all = ["topology", "neurons"])]
    network: Option<PathBuf>,
    #[arg(long, default_value = "sparse")]
    topology: TopologyKind,
    #[arg(long, default_value_t = 50)]
    neurons: usize,
    /// Hyperparameters JSON for a built network; defaults to the starting configuration.
    #[arg(long)]
    hyperparameters: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// `pulse` (a unit input at step 0, then zeros) or a task name.
    #[arg(long, default_value = "pulse")]
    input: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// JSON-lines summary files written by `tune`.
    #[arg(required = true)]
    summaries: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure class, mapped to the exit status.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Tune(a) => cmd_tune(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Scan(a) => cmd_scan(a),
        Command::GenBench(a) => cmd_gen_bench(a),
        Command::DumpActivity(a) => cmd_dump_activity(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, common: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).usage()?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(jobs) = common.jobs {
        cfg.jobs = jobs;
    }
    Ok(cfg)
}

fn executor(jobs: usize) -> Result<Executor, Failure> {
    Executor::new(jobs).runtime()
}

/// Writes to `path`, or to stdout when `None`.
fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).runtime(),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing stdout").runtime(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    emit(Some(path), text)
}

fn cmd_tune(a: TuneArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, &a.common)?;
    let exec = executor(cfg.jobs)?;
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .runtime()?;
    write_file(&a.out.join("config.toml"), &cfg.to_toml().runtime()?)?;

    let report = harness::run_experiment(&cfg, &exec).runtime()?;
    for t in &report.trials {
        write_file(&a.out.join(&t.trace_file), &harness::trace_csv(t))?;
        let net = harness::build_trained_network(&t.best_hyperparameters, &cfg, t.trial).runtime()?;
        net.save(&a.out.join(format!("network_trial_{:03}.json", t.trial))).runtime()?;
    }
    harness::write_summaries(&a.out.join("summaries.jsonl"), &report.trials).runtime()?;

    let mut text = format!(
        "# task={} topology={} n={} feedback={} seed={}\n# reported trial={} of {}\n\n",
        cfg.task.name(),
        cfg.topology.kind,
        cfg.topology.n,
        cfg.feedback_enabled(),
        cfg.seed,
        report.best_trial,
        report.trials.len()
    );
    text.push_str(&harness::render_report(&[report.entry()]));
    write_file(&a.out.join("report.md"), &text)?;
    print!("{text}");
    Ok(())
}

fn evaluation_seeds(master: u64, repeats: usize) -> Result<Vec<u64>, Failure> {
    (0..repeats)
        .map(|i| seeds::derive(master, Purpose::Evaluate, 0, 1, i as u64))
        .collect::<Result<_, _>>()
        .usage()
}

fn summary_line(name: &str, values: &[f64]) -> String {
    let (m, s) = harness::mean_std(values);
    format!("{name},{m:e},{s:e}\n")
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let net = EsnNetwork::load(&a.network)
        .with_context(|| format!("loading network {}", a.network.display()))
        .usage()?;
    let (protocol, seed, jobs) = match &a.config {
        Some(path) => {
            let cfg = load_config(path, &a.common)?;
            let mut p = cfg.protocol();
            if p.topology != net.topology() {
                return Err(Failure::Usage(anyhow!(
                    "network topology {} n={} differs from the config",
                    net.topology().kind,
                    net.topology().n
                )));
            }
            if let Some(fb) = a.feedback {
                p.feedback = fb;
            }
            (p, cfg.seed, cfg.jobs)
        }
        None => {
            let task = a
                .task
                .ok_or_else(|| Failure::Usage(anyhow!("either --config or --task is required")))?;
            let p = Protocol {
                topology: net.topology(),
                task,
                washout: a.washout,
                train: a.train,
                test: a.test,
                feedback: a.feedback.unwrap_or_else(|| task.default_feedback()),
            };
            (p, a.common.seed.unwrap_or(0), a.common.jobs.unwrap_or(1))
        }
    };
    if a.repeats == 0 {
        return Err(Failure::Usage(anyhow!("--repeats must be >= 1")));
    }
    if protocol.train == 0 || protocol.test == 0 {
        return Err(Failure::Usage(anyhow!("train and test lengths must be >= 1")));
    }
    let exec = executor(jobs)?;
    let seeds = evaluation_seeds(seed, a.repeats)?;
    let hp = harness::effective_hyperparameters(net.hyperparameters(), protocol.feedback);
    let evals = exec.map(&seeds, |&s| {
        let r = if a.fresh_reservoir {
            harness::evaluate_hyperparameters(&hp, &protocol, s)
        } else {
            harness::evaluate_network(&net, &protocol, s)
        };
        r.ok()
    });

    let ok: Vec<_> = evals.iter().flatten().filter(|e| e.fitness() < harness::PENALTY).collect();
    let mse: Vec<f64> = evals.iter().map(|e| e.map_or(harness::PENALTY, |e| e.fitness())).collect();
    let nmse: Vec<f64> = ok.iter().map(|e| e.nmse).collect();
    let nrmse: Vec<f64> = ok.iter().map(|e| e.nrmse).collect();

    let mut text = format!(
        "# network={}\n# task={} washout={} train={} test={} feedback={}\n# repeats={} seed={} failed={}\n",
        a.network.display(),
        protocol.task.name(),
        protocol.washout,
        protocol.train,
        protocol.test,
        protocol.feedback,
        a.repeats,
        seed,
        a.repeats - ok.len()
    );
    text.push_str("# nrmse mean is the square root of the nmse mean; its std is over repeats\n");
    text.push_str("metric,mean,std\n");
    text.push_str(&summary_line("mse", &mse));
    if !ok.is_empty() {
        text.push_str(&summary_line("nmse", &nmse));
        let (m, _) = harness::mean_std(&nmse);
        let (_, s) = harness::mean_std(&nrmse);
        text.push_str(&format!("nrmse,{:e},{s:e}\n", m.sqrt()));
        let orig: Vec<f64> = ok.iter().filter_map(|e| e.original_mse).collect();
        if orig.len() == ok.len() {
            text.push_str(&summary_line("mse_original", &orig));
        }
    }
    print!("{text}");
    Ok(())
}

/// Parses `a,b,c` or an inclusive `start:step:stop` range.
fn parse_grid(s: &str) -> anyhow::Result<Vec<f64>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    if let Some((start, rest)) = s.split_once(':') {
        let (step, stop) = rest.split_once(':').context("range grid must be start:step:stop")?;
        let (start, step, stop): (f64, f64, f64) = (start.trim().parse()?, step.trim().parse()?, stop.trim().parse()?);
        if !(step > 0.0) || stop < start {
            bail!("range grid needs step > 0 and stop >= start");
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| start + i as f64 * step).collect());
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().with_context(|| format!("bad grid value `{v}`")))
        .collect()
}

fn load_base(path: &Path) -> anyhow::Result<Hyperparameters> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(hp) = serde_json::from_str::<Hyperparameters>(&text) {
        return Ok(hp);
    }
    if let Ok(net) = EsnNetwork::from_json(&text) {
        return Ok(*net.hyperparameters());
    }
    let trials: Vec<TrialResult> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .with_context(|| format!("{}: not hyperparameters, a network, or trial summaries", path.display()))?;
    let best = harness::best_trial_index(&trials).context("summary file is empty")?;
    Ok(trials[best].best_hyperparameters)
}

fn cmd_scan(a: ScanArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, &a.common)?;
    let grid = parse_grid(&a.grid).usage()?;
    let base = match &a.base {
        Some(p) => load_base(p).usage()?,
        None => initial_hyperparameters(cfg.topology),
    };
    if a.repeats == 0 {
        return Err(Failure::Usage(anyhow!("--repeats must be >= 1")));
    }
    let exec = executor(cfg.jobs)?;
    let table: ScanTable = match a.param.parse::<LengthKind>() {
        Ok(kind) => {
            let lengths = grid
                .iter()
                .map(|&v| {
                    if v >= 0.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(anyhow!("{} grid values must be nonnegative integers, got {v}", a.param))
                    }
                })
                .collect::<anyhow::Result<Vec<_>>>()
                .usage()?;
            harness::scan_lengths(&base, kind, &lengths, &cfg, a.repeats, &exec).usage()?
        }
        Err(_) => {
            if let Err(e) = Hyperparameters::index_of(&a.param) {
                return Err(Failure::Usage(anyhow!("{e}, washout, train")));
            }
            harness::scan_parameter(&base, &a.param, &grid, &cfg, a.repeats, &exec).usage()?
        }
    };
    let mut text = format!("# task={} topology={} n={} seed={}\n", cfg.task.name(), cfg.topology.kind, cfg.topology.n, cfg.seed);
    text.push_str(&table.to_csv());
    emit(a.out.as_deref(), &text)
}

fn parse_benchmark(name: &str, tau: u32) -> anyhow::Result<Benchmark> {
    if name == "mg" {
        return Ok(Benchmark::MackeyGlass { tau });
    }
    name.parse().map_err(|e| anyhow!("{e}"))
}

fn cmd_gen_bench(a: GenBenchArgs) -> Result<(), Failure> {
    let bench = parse_benchmark(&a.benchmark, a.tau).usage()?;
    let task = bench.generate(a.length, a.seed).usage()?;
    emit(a.out.as_deref(), &task.to_csv())
}

fn cmd_dump_activity(a: DumpArgs) -> Result<(), Failure> {
    let mut net = match &a.network {
        Some(p) => EsnNetwork::load(p)
            .with_context(|| format!("loading network {}", p.display()))
            .usage()?,
        None => {
            let topology = Topology::new(a.topology, a.neurons).usage()?;
            let hp = match &a.hyperparameters {
                Some(p) => {
                    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).usage()?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display())).usage()?
                }
                None => initial_hyperparameters(topology),
            };
            esn_tune::build_reservoir(topology, &hp, a.seed).usage()?
        }
    };
    let u: Vec<f64> = if a.input == "pulse" {
        (0..a.steps).map(|t| if t == 0 { 1.0 } else { 0.0 }).collect()
    } else {
        let bench = parse_benchmark(&a.input, 17).usage()?;
        bench.generate(a.steps.max(11), a.seed).usage()?.u[..a.steps].to_vec()
    };
    let m = net.dump_activations(&u);
    let mut text = format!(
        "# topology={} n={} steps={} input={}\n",
        net.topology().kind,
        net.topology().n,
        a.steps,
        a.input
    );
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("a{j}")).collect();
    text.push_str(&header.join(","));
    text.push('\n');
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let mut entries: Vec<ReportEntry> = Vec::new();
    for path in &a.summaries {
        let trials = harness::read_summaries(path).usage()?;
        let best = harness::best_trial_index(&trials)
            .ok_or_else(|| Failure::Usage(anyhow!("{}: no trials", path.display())))?;
        entries.push(ReportEntry::from_trial(&trials[best]));
    }
    let mut text = harness::render_report(&entries);

    let mut tasks: Vec<(String, bool)> = Vec::new();
    for e in &entries {
        if !tasks.contains(&(e.task.clone(), e.feedback)) {
            tasks.push((e.task.clone(), e.feedback));
        }
    }
    for (task, fb) in tasks {
        let sets: Vec<(String, Vec<f64>)> = entries
            .iter()
            .filter(|e| e.task == task && e.feedback == fb)
            .map(|e| (e.row_label(), e.samples.clone()))
            .collect();
        if sets.len() < 2 {
            continue;
        }
        let labels: Vec<String> = sets.iter().map(|s| s.0.clone()).collect();
        text.push_str(&format!("\nWelch's t-test, {task}{}\n\n", if fb { " with feedback" } else { "" }));
        text.push_str(&harness::render_welch_matrix(&labels, &harness::welch_matrix(&sets)));
    }
    emit(a.out.as_deref(), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("").unwrap(), Vec::<f64>::new());
        assert_eq!(parse_grid("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        let r = parse_grid("0:0.001:0.02").unwrap();
        assert_eq!(r.len(), 21);
        assert!((r[20] - 0.02).abs() < 1e-15);
        assert!(parse_grid("1:0:2").is_err());
        assert!(parse_grid("x").is_err());
    }

    #[test]
    fn benchmark_names() {
        assert_eq!(parse_benchmark("mg", 30).unwrap(), Benchmark::MackeyGlass { tau: 30 });
        assert_eq!(parse_benchmark("mg17", 30).unwrap(), Benchmark::MackeyGlass { tau: 17 });
        assert!(parse_benchmark("lorenz", 30).is_err());
    }
}
