//! `sbo` command-line front end.
//!
//! Subcommands: `run` (one optimization realization), `bench` (repeated
//! realizations with statistics), `landscape` (objective grid CSV),
//! `kinematics` (fish midline snapshot CSV).

use std::fs;
use std::io::Write as _;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sbo_core::evaluator::{external_problem, EvaluatorMode, EvaluatorSpec};
use sbo_core::harness::{run_benchmark, ErrorMetric};
use sbo_core::optimizer::optimize_with;
use sbo_core::problems;
use sbo_core::{Error, Mode, OptimizeError, Problem, RunRecord, SboConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_OPTIMIZATION: u8 = 4;
const EXIT_EVALUATOR: u8 = 5;

#[derive(Parser)]
#[command(
    name = "sbo",
    about = "Strictly feasible surrogate-based optimization",
    after_help = "Exit codes:\n  \
        0  success\n  \
        2  invalid flags or configuration\n  \
        3  file I/O failure\n  \
        4  optimization failure (infeasible region, resample budget exhausted)\n  \
        5  external evaluator failure (timeout, protocol, child exit)"
)]
struct Cli {
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Execute one optimization realization and write its full record.
    Run(RunArgs),
    /// Run N independent realizations and report aggregate statistics.
    Bench(BenchArgs),
    /// Emit a rectilinear objective-landscape grid as CSV.
    Landscape(LandscapeArgs),
    /// Emit fish midline snapshots over one tail-beat period as CSV.
    Kinematics(KinematicsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ProblemKind {
    Rosenbrock,
    Rastrigin,
    /// Fish constraints and bounds with an external objective command.
    FishExternal,
    /// Box-constrained external objective command.
    External,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CliMode {
    Strict,
    Penalty,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Mode {
        match m {
            CliMode::Strict => Mode::StrictFeasible,
            CliMode::Penalty => Mode::PenaltyBaseline,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CliEvaluatorMode {
    PerCall,
    Persistent,
}

/// Fully resolved configuration of one `run` invocation; echoed verbatim
/// into the run-record file so any run can be reproduced from its output.
#[derive(Clone, Serialize, Deserialize)]
struct RunConfig {
    problem: ProblemKind,
    seed: u64,
    mode: CliMode,
    start: Option<Vec<f64>>,
    rastrigin_seed: u64,
    command: Option<String>,
    timeout_secs: f64,
    evaluator_mode: CliEvaluatorMode,
    sbo: SboConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Rosenbrock,
            seed: 0,
            mode: CliMode::Strict,
            start: None,
            rastrigin_seed: 42,
            command: None,
            timeout_secs: 60.0,
            evaluator_mode: CliEvaluatorMode::PerCall,
            sbo: SboConfig::default(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    #[arg(long, value_enum)]
    problem: Option<ProblemKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    /// Feasible start point, comma-separated (e.g. 0.2,0.3). Rejected if
    /// infeasible.
    #[arg(long)]
    start: Option<String>,
    /// Absolute tolerance on |best_f - known_optimum|.
    #[arg(long)]
    tol: Option<f64>,
    /// Relative-change stopping tolerance (black-box rule).
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    /// Seed of the Rastrigin instance (shift and rotation).
    #[arg(long)]
    rastrigin_seed: Option<u64>,
    /// External evaluator command (program and arguments).
    #[arg(long)]
    command: Option<String>,
    #[arg(long)]
    timeout_secs: Option<f64>,
    #[arg(long, value_enum)]
    evaluator_mode: Option<CliEvaluatorMode>,
    /// Output file for the run record (JSON); stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "rosenbrock")]
    problem: ProblemKind,
    /// Number of realizations.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Base seed; realization i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Modes to benchmark.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "strict")]
    modes: Vec<CliMode>,
    /// Error metric; defaults to absolute for Rosenbrock and relative for
    /// Rastrigin.
    #[arg(long, value_enum)]
    metric: Option<CliMetric>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    rastrigin_seed: Option<u64>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output file for the CSV report; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Also print the aligned text table.
    #[arg(long)]
    table: bool,
}

#[derive(Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CliMetric {
    Absolute,
    Relative,
}

#[derive(Args)]
struct LandscapeArgs {
    #[arg(long, value_enum, default_value = "rosenbrock")]
    problem: ProblemKind,
    /// Grid nodes per dimension.
    #[arg(long, default_value_t = 201)]
    grid: usize,
    #[arg(long)]
    rastrigin_seed: Option<u64>,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

#[derive(Args)]
struct KinematicsArgs {
    /// Linear amplitude coefficient.
    #[arg(long, allow_hyphen_values = true)]
    x1: f64,
    /// Quadratic amplitude coefficient.
    #[arg(long, allow_hyphen_values = true)]
    x2: f64,
    /// Points per midline polyline.
    #[arg(long, default_value_t = 101)]
    points: usize,
    #[arg(long)]
    out: Option<std::path::PathBuf>,
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::EvaluatorTimeout { .. } | Error::Protocol { .. } | Error::ChildFailure { .. } => {
                EXIT_EVALUATOR
            }
            Error::InfeasibleRegion { .. } | Error::ResampleExhausted { .. } | Error::Fit(_) => {
                EXIT_OPTIMIZATION
            }
            Error::Io(_) => EXIT_IO,
            _ => EXIT_CONFIG,
        };
        CliError::new(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        CliCommand::Run(args) => cmd_run(args),
        CliCommand::Bench(args) => cmd_bench(args),
        CliCommand::Landscape(args) => cmd_landscape(args),
        CliCommand::Kinematics(args) => cmd_kinematics(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn parse_point(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|e| CliError::new(EXIT_CONFIG, format!("invalid point {text:?}: {e}")))
}

fn build_problem(config: &RunConfig) -> Result<Problem, CliError> {
    let evaluator_spec = |config: &RunConfig| -> Result<EvaluatorSpec, CliError> {
        let command = config.command.clone().ok_or_else(|| {
            CliError::new(EXIT_CONFIG, "--command is required for external problems")
        })?;
        let mode = match config.evaluator_mode {
            CliEvaluatorMode::PerCall => EvaluatorMode::PerCall,
            CliEvaluatorMode::Persistent => EvaluatorMode::Persistent,
        };
        EvaluatorSpec::new(command, Duration::from_secs_f64(config.timeout_secs), mode)
            .map_err(CliError::from)
    };
    Ok(match config.problem {
        ProblemKind::Rosenbrock => problems::rosenbrock_problem(Default::default(), None),
        ProblemKind::Rastrigin => problems::rastrigin_problem(
            problems::RastriginInstance::seeded(config.rastrigin_seed),
            None,
        ),
        ProblemKind::FishExternal => {
            let spec = evaluator_spec(config)?;
            let template = problems::fish_constraint_problem(None);
            external_problem(spec, template.bounds.clone(), template.constraints.clone(), "fish")
        }
        ProblemKind::External => {
            let spec = evaluator_spec(config)?;
            let bounds = problems::default_analytic_bounds();
            external_problem(spec, bounds, sbo_core::ConstraintSet::empty(), "external")
        }
    })
}

fn resolve_run_config(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::new(EXIT_CONFIG, format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(p) = args.problem {
        config.problem = p;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(m) = args.mode {
        config.mode = m;
    }
    if let Some(start) = &args.start {
        config.start = Some(parse_point(start)?);
    }
    if let Some(t) = args.tol {
        config.sbo.msrs.absolute_tolerance = Some(t);
    }
    if let Some(t) = args.rel_tol {
        config.sbo.msrs.relative_change_tolerance = Some(t);
    }
    if let Some(k) = args.k_max {
        config.sbo.msrs.k_max = k;
    }
    if let Some(s) = args.rastrigin_seed {
        config.rastrigin_seed = s;
    }
    if let Some(c) = &args.command {
        config.command = Some(c.clone());
    }
    if let Some(t) = args.timeout_secs {
        config.timeout_secs = t;
    }
    if let Some(m) = args.evaluator_mode {
        config.evaluator_mode = m;
    }
    config.sbo.msrs.mode = Mode::from(config.mode);
    // black-box problems default to the relative-change stopping rule
    if matches!(config.problem, ProblemKind::FishExternal | ProblemKind::External)
        && config.sbo.msrs.relative_change_tolerance.is_none()
    {
        config.sbo.msrs.relative_change_tolerance = Some(1e-6);
    }
    Ok(config)
}

/// Run-record file layout: the resolved config followed by the record.
#[derive(Serialize, Deserialize)]
struct RunOutput {
    config: RunConfig,
    record: RunRecord,
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let config = resolve_run_config(&args)?;
    let problem = build_problem(&config)?;
    let record = optimize_with(
        &problem,
        &config.sbo,
        config.seed,
        config.start.as_deref(),
        &mut |p| {
            eprintln!("iteration {:4}  evaluations {:4}  best_f {:.6e}", p.iteration, p.evaluations, p.best_f);
        },
    )
    .map_err(|e| match e {
        OptimizeError::InitialDesign(inner) | OptimizeError::Config(inner) => CliError::from(inner),
        OptimizeError::InfeasibleStart => CliError::new(EXIT_CONFIG, e.to_string()),
        OptimizeError::Aborted { source, .. } => CliError::from(source),
    })?;
    let output = RunOutput { config, record };
    let text = serde_json::to_string_pretty(&output)
        .map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
    write_output(args.out.as_deref(), &text)
}

fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    let config = RunConfig {
        problem: args.problem,
        rastrigin_seed: args.rastrigin_seed.unwrap_or(42),
        ..Default::default()
    };
    let problem = build_problem(&config)?;
    let mut sbo = SboConfig::default();
    if let Some(t) = args.tol {
        sbo.msrs.absolute_tolerance = Some(t);
    }
    if let Some(k) = args.k_max {
        sbo.msrs.k_max = k;
    }
    let metric = match args.metric {
        Some(CliMetric::Absolute) => ErrorMetric::Absolute,
        Some(CliMetric::Relative) => ErrorMetric::Relative,
        None => match args.problem {
            ProblemKind::Rastrigin => ErrorMetric::Relative,
            _ => ErrorMetric::Absolute,
        },
    };
    let modes: Vec<Mode> = args.modes.iter().map(|&m| Mode::from(m)).collect();
    let report = run_benchmark(&problem, &sbo, &modes, args.n, args.seed, metric, args.jobs)
        .map_err(CliError::from)?;
    if args.table {
        print!("{}", report.to_table());
    }
    write_output(args.out.as_deref(), &report.to_csv())
}

fn cmd_landscape(args: LandscapeArgs) -> Result<(), CliError> {
    let config = RunConfig {
        problem: args.problem,
        rastrigin_seed: args.rastrigin_seed.unwrap_or(42),
        ..Default::default()
    };
    if matches!(args.problem, ProblemKind::FishExternal | ProblemKind::External) {
        return Err(CliError::new(
            EXIT_CONFIG,
            "landscape emission is available for the analytical problems only",
        ));
    }
    let problem = build_problem(&config)?;
    let csv = problems::landscape_csv(&problem, args.grid).map_err(CliError::from)?;
    write_output(args.out.as_deref(), &csv)
}

fn cmd_kinematics(args: KinematicsArgs) -> Result<(), CliError> {
    if args.points < 2 {
        return Err(CliError::new(EXIT_CONFIG, "--points must be at least 2"));
    }
    let kin = problems::FishKinematics::new(args.x1, args.x2);
    let csv = problems::kinematics_csv(&kin, args.points);
    write_output(args.out.as_deref(), &csv)
}

fn write_output(path: Option<&std::path::Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text)
            .map_err(|e| CliError::new(EXIT_IO, format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::new(EXIT_IO, e.to_string()))
        }
    }
}
