use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kraus_feedback::channels::load_channel_spec;
use kraus_feedback::experiments::{
    self, AdAdvantageConfig, ConjectureConfig, CustomConfig, DephasingConfig, Prop1Config, ResultTable,
};
use kraus_feedback::fidelity::{Method, Strategy};
use kraus_feedback::linalg::RngSeed;
use kraus_feedback::optimizer::OptimizerConfig;
use kraus_feedback::Error;

#[derive(Parser)]
#[command(name = "kfb", version, about = "Fidelity of Markovian and Bayesian feedback on quantum channels")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    format: Format,
    /// Write results here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Leave out the generation timestamp, for byte-identical reruns.
    #[arg(long, global = true)]
    no_timestamp: bool,
    /// Lift the brute-force size guard.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads (default: all cores).
    #[arg(long, env = "KFB_THREADS", global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Clone)]
struct Search {
    /// Base seed for Haar sampling.
    #[arg(long, default_value_t = RngSeed::default().0)]
    seed: u64,
    /// Haar samples per search.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
    /// Skip the Givens-rotation polish of the best samples.
    #[arg(long)]
    no_refine: bool,
}

impl Search {
    fn config(&self, force: bool) -> OptimizerConfig {
        OptimizerConfig { force, ..OptimizerConfig::haar(self.budget, RngSeed(self.seed)).with_refine(!self.no_refine) }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Both,
    Markovian,
    Bayesian,
}

#[derive(Subcommand)]
enum Command {
    /// Rank-two qubit channels: best single-step measurement over the rotation family.
    Prop1 {
        /// Step of the theta and phi grids over [0, pi], in units of pi.
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
    },
    /// Sampled max F_n against max F'_n on the qubit mixture grid.
    Conjecture {
        /// Step of the interior lambda grid.
        #[arg(long, default_value_t = 0.25)]
        grid_step: f64,
        /// Step of the four angle grids over [0, pi], in units of pi.
        #[arg(long, default_value_t = 0.25)]
        angle_step: f64,
        /// Feedback steps n.
        #[arg(short, long, default_value_t = 2)]
        n: usize,
        /// The full grid: lambda in [0, 1] at 0.05, angles at pi/50.
        #[arg(long)]
        full: bool,
        /// Evaluate only grid points with index = I mod K, given as I/K.
        #[arg(long, value_parser = parse_shard)]
        shard: Option<(usize, usize)>,
        #[command(flatten)]
        search: Search,
    },
    /// Qutrit dephasing, where Bayesian feedback should bring nothing.
    Dephasing {
        #[arg(long, default_value_t = 0.1)]
        grid_step: f64,
        #[arg(long, default_value_t = 6)]
        n_max: usize,
    },
    /// Qutrit amplitude damping, F'_n - F_n over p and n.
    AdAdvantage {
        #[arg(long, default_value_t = 0.05)]
        grid_step: f64,
        #[arg(long, default_value_t = 8)]
        n_max: usize,
    },
    /// Evaluate a channel-spec file for n = 1..N.
    Custom {
        spec: PathBuf,
        #[arg(short, long, default_value_t = 1)]
        n: usize,
        #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
        strategy: StrategyArg,
        /// Markovian evaluation method; Bayesian values are always brute force.
        #[arg(long, default_value_t = Method::Brute, value_parser = parse_method)]
        method: Method,
        /// Search for the best stationary mixing first.
        #[arg(long)]
        optimize: bool,
        #[command(flatten)]
        search: Search,
    },
    /// Check a channel-spec file for trace preservation.
    Validate { spec: PathBuf },
}

fn parse_shard(s: &str) -> Result<(usize, usize), String> {
    let (i, k) = s.split_once('/').ok_or("expected I/K")?;
    let i = i.parse().map_err(|_| format!("bad shard index {i:?}"))?;
    let k: usize = k.parse().map_err(|_| format!("bad shard count {k:?}"))?;
    if k == 0 || i >= k {
        return Err(format!("shard {i}/{k} out of range"));
    }
    Ok((i, k))
}

fn parse_method(s: &str) -> Result<Method, String> {
    match s {
        "brute" => Ok(Method::Brute),
        "transfer" => Ok(Method::Transfer),
        _ => Err(format!("unknown method {s:?} (brute, transfer)")),
    }
}

enum Failure {
    Lib(Error),
    Checks(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Csv(_) => 3,
        Error::Resource(_) => 4,
        _ => 2,
    }
}

struct Output {
    format: Format,
    timestamp: Option<String>,
    sink: Box<dyn Write>,
}

impl Output {
    fn open(global: &Global) -> Result<Self, Failure> {
        let sink: Box<dyn Write> = match &global.out {
            Some(path) => Box::new(BufWriter::new(create(path)?)),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        };
        let timestamp = (!global.no_timestamp).then(|| chrono::Utc::now().to_rfc3339());
        Ok(Output { format: global.format, timestamp, sink })
    }

    fn table(mut self, table: &ResultTable) -> Result<(), Failure> {
        let ts = self.timestamp.as_deref();
        match self.format {
            Format::Csv => experiments::write_csv(table, &mut self.sink, ts)?,
            Format::Json => experiments::write_json(table, &mut self.sink, ts)?,
        }
        self.sink.flush()?;
        report_checks(table)
    }
}

fn create(path: &Path) -> Result<File, Error> {
    File::create(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn report_checks(table: &ResultTable) -> Result<(), Failure> {
    let mut failed = Vec::new();
    for c in &table.checks {
        let status = if c.passed { "PASS" } else if c.hard { "FAIL" } else { "WARN" };
        eprintln!("{status} {}: {}", c.name, c.detail);
        if c.hard && !c.passed {
            failed.push(c.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(failed))
    }
}

fn conjecture(global: &Global, cfg: ConjectureConfig) -> Result<(), Failure> {
    let out = Output::open(global)?;
    if matches!(out.format, Format::Json) {
        return out.table(&experiments::run_qubit_conjecture(&cfg)?);
    }
    // CSV rows are streamed so that long runs can be inspected or sharded;
    // the summary lines follow the rows.
    let Output { timestamp, mut sink, .. } = out;
    let mut table = experiments::conjecture_table_header();
    experiments::write_csv_header(&table, &mut sink, timestamp.as_deref())?;
    let mut gap: f64 = 0.0;
    let mut min_diff = f64::INFINITY;
    let points = experiments::stream_qubit_conjecture(&cfg, |row| {
        let d = row.diff.unwrap_or(0.0);
        gap = gap.max(d.abs());
        min_diff = min_diff.min(d);
        experiments::write_csv_row(&row, &mut sink)?;
        sink.flush()?;
        Ok(())
    })?;
    experiments::summarize_conjecture(&mut table, points, gap);
    experiments::write_csv_metadata(&table, &mut sink)?;
    sink.flush()?;
    if points > 0 {
        eprintln!("{points} points, min F'_n - F_n = {min_diff:e}");
    }
    report_checks(&table)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    if let Some(threads) = g.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Prop1 { grid_step } => {
            let table = experiments::run_prop1_rank2(&Prop1Config { angle_step: grid_step * PI })?;
            Output::open(g)?.table(&table)
        }
        Command::Conjecture { grid_step, angle_step, n, full, shard, search } => {
            let base = if *full {
                ConjectureConfig::full()
            } else {
                ConjectureConfig {
                    lambdas: experiments::grid(*grid_step, 1.0 - grid_step, *grid_step)?,
                    angles: experiments::grid(0.0, PI, angle_step * PI)?,
                    ..ConjectureConfig::coarse()
                }
            };
            conjecture(g, ConjectureConfig { optimizer: search.config(g.force), steps: *n, shard: *shard, ..base })
        }
        Command::Dephasing { grid_step, n_max } => {
            let cfg = DephasingConfig { gammas: experiments::grid(0.0, 3.0, *grid_step)?, n_max: *n_max };
            Output::open(g)?.table(&experiments::run_dephasing_null(&cfg)?)
        }
        Command::AdAdvantage { grid_step, n_max } => {
            let cfg = AdAdvantageConfig { p_step: *grid_step, n_max: *n_max };
            Output::open(g)?.table(&experiments::run_ad_advantage(&cfg)?)
        }
        Command::Custom { spec, n, strategy, method, optimize, search } => {
            let spec = load_channel_spec(spec)?;
            let strategies = match strategy {
                StrategyArg::Both => vec![Strategy::Markovian, Strategy::Bayesian],
                StrategyArg::Markovian => vec![Strategy::Markovian],
                StrategyArg::Bayesian => vec![Strategy::Bayesian],
            };
            let cfg = CustomConfig {
                steps: *n,
                strategies,
                method: *method,
                force: g.force,
                optimizer: optimize.then(|| search.config(g.force)),
            };
            Output::open(g)?.table(&experiments::run_custom(&spec, &cfg)?)
        }
        Command::Validate { spec } => {
            let spec = load_channel_spec(spec)?;
            let report = spec.validate()?;
            let mut out = Output::open(g)?;
            let status = if report.is_valid() { "valid" } else { "invalid" };
            match out.format {
                Format::Csv => writeln!(
                    out.sink,
                    "family,deviation,tolerance,status\n{},{:e},{:e},{status}",
                    spec.family_name(),
                    report.deviation,
                    report.tolerance
                )?,
                Format::Json => writeln!(
                    out.sink,
                    "{{\"family\": \"{}\", \"deviation\": {:e}, \"tolerance\": {:e}, \"status\": \"{status}\"}}",
                    spec.family_name(),
                    report.deviation,
                    report.tolerance
                )?,
            }
            out.sink.flush()?;
            if report.is_valid() {
                Ok(())
            } else {
                Err(Error::Validation { deviation: report.deviation, tolerance: report.tolerance }.into())
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Checks(names)) => {
            eprintln!("error: hard checks failed: {}", names.join(", "));
            ExitCode::from(1)
        }
    }
}
