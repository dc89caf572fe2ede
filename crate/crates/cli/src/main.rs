use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fgwmixup::augment::{augment_dataset, AugmentConfig, SizePolicy};
use fgwmixup::bench::{run_infeasibility, run_timing, BenchOptions};
use fgwmixup::fgw::{solve_fgw_relaxed, solve_fgw_strict, Coupling, FgwConfig};
use fgwmixup::io::{load_tudataset, save_dataset, Dataset, FeatureKind, OutputFormat};
use fgwmixup::synth::{sbm_corpus, SbmSpec};
use fgwmixup::Error;

/// FGW distances, FGW-barycenter graph mixup and solver benchmarks.
#[derive(Debug, Parser)]
#[command(name = "fgwmixup", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Augment a dataset with FGW mixup graphs.
    Augment(AugmentArgs),
    /// FGW distance between two graphs of a dataset.
    Distance(DistanceArgs),
    /// Compare strict and relaxed solvers on random pairs.
    BenchInfeasibility(InfeasibilityArgs),
    /// Compare strict and accelerated mixup on random pairs.
    BenchTiming(TimingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Solver {
    Strict,
    Accel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Tud,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Policy {
    Adaptive,
    FixedMedian,
    HalfMedian,
    DoubleMedian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Init {
    /// Identity when both indices match, product coupling otherwise.
    Auto,
    Product,
    Identity,
}

#[derive(Debug, Args)]
struct Source {
    /// Directory holding the TUDataset files.
    #[arg(long, value_name = "DIR", conflicts_with = "synthetic", requires = "name")]
    data: Option<PathBuf>,
    /// Dataset name (file prefix).
    #[arg(long, value_name = "DS")]
    name: Option<String>,
    /// Use a seeded synthetic two-class corpus of N graphs instead of files.
    #[arg(long, value_name = "N")]
    synthetic: Option<usize>,
    /// Seed of the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    synthetic_seed: u64,
    /// Key=value file; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverArgs {
    #[arg(long, default_value_t = 0.95)]
    alpha: f64,
    /// Mirror-descent step size.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 300)]
    max_inner_iters: usize,
    #[arg(long, default_value_t = 5e-4)]
    inner_tol: f64,
}

impl SolverArgs {
    fn config(&self) -> FgwConfig {
        FgwConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            max_inner_iters: self.max_inner_iters,
            inner_tol: self.inner_tol,
            ..FgwConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct MixupArgs {
    /// Shape of the Beta(k, k) mixing-weight distribution.
    #[arg(long, default_value_t = 0.2)]
    beta_k: f64,
    #[arg(long, value_enum, default_value_t = Policy::Adaptive)]
    size_policy: Policy,
    #[arg(long, default_value_t = 200)]
    outer_max_iters: usize,
    #[arg(long, default_value_t = 5e-4)]
    outer_tol: f64,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[command(flatten)]
    mixup: MixupArgs,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Mixup graphs as a fraction of the dataset size.
    #[arg(long, default_value_t = 0.25)]
    ratio: f64,
    #[arg(long, value_enum, default_value_t = Solver::Accel)]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Tud)]
    format: Format,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Args)]
struct DistanceArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[arg(long)]
    i: usize,
    #[arg(long)]
    j: usize,
    #[arg(long, value_enum, default_value_t = Solver::Strict)]
    solver: Solver,
    #[arg(long, value_enum, default_value_t = Init::Auto)]
    init: Init,
}

#[derive(Debug, Args)]
struct InfeasibilityArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Fill the time columns (the report is then no longer reproducible byte for byte).
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    record_time: bool,
    /// Report directory.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TimingArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    solver_args: SolverArgs,
    #[command(flatten)]
    mixup: MixupArgs,
    #[arg(long, default_value_t = 50)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Core(Error::Config(_)) => EXIT_USAGE,
            Failure::Core(Error::Solver(_)) => EXIT_SOLVER,
            Failure::Core(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
fn read_config(path: &Path) -> Result<BTreeMap<String, String>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Core(Error::Io { path: path.to_path_buf(), source: e }))?;
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "{}:{}: expected key=value, got `{line}`",
                path.display(),
                k + 1
            )));
        };
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            return Err(Failure::Usage(format!("{}: nested config files are not supported", path.display())));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}

fn config_path(argv: &[String]) -> Option<PathBuf> {
    argv.iter().enumerate().find_map(|(k, a)| {
        if a == "--config" {
            argv.get(k + 1).map(PathBuf::from)
        } else {
            a.strip_prefix("--config=").map(PathBuf::from)
        }
    })
}

fn flag_given(argv: &[String], key: &str) -> bool {
    let flag = format!("--{key}");
    argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
}

/// Expands `argv` with the `--config` entries whose flags are absent from
/// the command line, inserted right after the subcommand.
fn expand_config(argv: &[String]) -> Result<Vec<String>, Failure> {
    let Some(path) = config_path(argv) else {
        return Ok(argv.to_vec());
    };
    let entries = read_config(&path)?;
    let sub_pos = argv
        .iter()
        .skip(1)
        .position(|a| !a.starts_with('-'))
        .map_or(1, |p| p + 1);
    let mut expanded: Vec<String> = argv[..=sub_pos.min(argv.len() - 1)].to_vec();
    for (key, value) in &entries {
        if !flag_given(argv, key) {
            expanded.push(format!("--{key}={value}"));
        }
    }
    expanded.extend_from_slice(&argv[(sub_pos + 1).min(argv.len())..]);
    Ok(expanded)
}

fn load(source: &Source) -> Result<Dataset, Failure> {
    match (&source.data, source.synthetic) {
        (Some(dir), None) => {
            let name = source
                .name
                .as_deref()
                .ok_or_else(|| Failure::Usage("--data needs --name".into()))?;
            Ok(load_tudataset(dir, name)?)
        }
        (None, Some(n)) => {
            let spec = SbmSpec {
                num_graphs: n,
                ..SbmSpec::default()
            };
            let graphs = sbm_corpus(&spec, source.synthetic_seed)?;
            let name = source.name.clone().unwrap_or_else(|| "SYNTH".into());
            Ok(Dataset::new(name, graphs, spec.num_classes, FeatureKind::NodeLabelsOnehot)?)
        }
        _ => Err(Failure::Usage("pass either --data DIR --name DS or --synthetic N".into())),
    }
}

fn size_policy(p: Policy) -> SizePolicy {
    match p {
        Policy::Adaptive => SizePolicy::Adaptive,
        Policy::FixedMedian => SizePolicy::FixedMedian,
        Policy::HalfMedian => SizePolicy::HalfMedian,
        Policy::DoubleMedian => SizePolicy::DoubleMedian,
    }
}

fn augment_config(solver: &SolverArgs, mixup: &MixupArgs) -> AugmentConfig {
    AugmentConfig {
        beta_k: mixup.beta_k,
        size_policy: size_policy(mixup.size_policy),
        fgw: solver.config(),
        outer_max_iters: mixup.outer_max_iters,
        outer_tol: mixup.outer_tol,
        ..AugmentConfig::default()
    }
}

fn log_config<T: std::fmt::Debug>(command: &str, args: &T) {
    log::info!("{command} resolved configuration: {args:#?}");
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Augment(args) => {
            log_config("augment", &args);
            let ds = load(&args.source)?;
            let cfg = AugmentConfig {
                mixup_ratio: args.ratio,
                accelerated: args.solver == Solver::Accel,
                seed: args.seed,
                workers: args.workers,
                ..augment_config(&args.solver_args, &args.mixup)
            };
            log::info!("augment config: {}", serde_json::to_string(&cfg).unwrap_or_default());
            let out = augment_dataset(&ds.graphs, ds.class_count, &cfg)?;
            let format = match args.format {
                Format::Tud => OutputFormat::Tud,
                Format::Jsonl => OutputFormat::Jsonl,
            };
            let paths = save_dataset(&out, &args.out, &ds.name, format)?;
            println!(
                "wrote {} graphs ({} mixups) to {}",
                out.len(),
                out.len() - ds.len(),
                args.out.display()
            );
            for p in paths {
                log::info!("wrote {}", p.display());
            }
        }
        Command::Distance(args) => {
            log_config("distance", &args);
            let ds = load(&args.source)?;
            let get = |k: usize| {
                ds.graphs.get(k).ok_or_else(|| {
                    Failure::Usage(format!("graph index {k} out of range (dataset has {})", ds.len()))
                })
            };
            let (g1, g2) = (get(args.i)?, get(args.j)?);
            let identity = match args.init {
                Init::Auto => args.i == args.j,
                Init::Identity => true,
                Init::Product => false,
            };
            let init = if identity {
                if g1.num_nodes() != g2.num_nodes() {
                    return Err(Failure::Usage("identity init needs graphs of equal size".into()));
                }
                Some(Coupling::identity(g1.mu()))
            } else {
                None
            };
            let cfg = args.solver_args.config();
            let sol = match args.solver {
                Solver::Strict => solve_fgw_strict(g1, g2, &cfg, init.as_ref())?,
                Solver::Accel => solve_fgw_relaxed(g1, g2, &cfg, init.as_ref())?,
            };
            println!("fgw {}", sol.value);
            println!("row_marginal_error {:e}", sol.coupling.row_marginal_error());
            println!("col_marginal_error {:e}", sol.coupling.col_marginal_error());
            println!("iterations {}", sol.trace.iterations_used);
            println!("converged {}", sol.trace.converged);
        }
        Command::BenchInfeasibility(args) => {
            log_config("bench-infeasibility", &args);
            let ds = load(&args.source)?;
            let opts = BenchOptions {
                seed: args.seed,
                workers: args.workers,
                record_time: args.record_time,
            };
            let report = run_infeasibility(&ds.graphs, args.pairs, &args.solver_args.config(), &opts)?;
            write_reports(&args.out, "infeasibility", |csv, json| {
                report.write_csv(csv)?;
                report.write_json(json)
            })?;
            println!(
                "pairs {} mae {} mape {} mape_excluded {} mean_fgw {} mean_fgw_star {} t_diff {} failures {}",
                report.per_pair.len(),
                report.mae,
                report.mape,
                report.mape_excluded,
                report.mean_fgw,
                report.mean_fgw_star,
                report.t_diff,
                report.failures
            );
        }
        Command::BenchTiming(args) => {
            log_config("bench-timing", &args);
            let ds = load(&args.source)?;
            let opts = BenchOptions {
                seed: args.seed,
                workers: args.workers,
                record_time: true,
            };
            let cfg = augment_config(&args.solver_args, &args.mixup);
            let report = run_timing(&ds.graphs, args.pairs, &cfg, &opts)?;
            write_reports(&args.out, "timing", |csv, json| {
                report.write_csv(csv)?;
                report.write_json(json)
            })?;
            println!(
                "pairs {} outer_strict {} outer_accel {} iteration_speedup {} time_strict_s {} time_accel_s {} time_speedup {} failures {}",
                report.per_pair.len(),
                report.strict.mean_outer_iters,
                report.accelerated.mean_outer_iters,
                report.iteration_speedup,
                report.strict.mean_mixup_time_s,
                report.accelerated.mean_mixup_time_s,
                report.time_speedup,
                report.failures
            );
        }
    }
    Ok(())
}

fn write_reports(
    dir: &Path,
    stem: &str,
    write: impl FnOnce(&Path, &Path) -> fgwmixup::Result<()>,
) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Core(Error::Io { path: dir.to_path_buf(), source: e }))?;
    let csv = dir.join(format!("{stem}.csv"));
    let json = dir.join(format!("{stem}.json"));
    write(&csv, &json)?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .parse_filters(&std::env::var("FGWMIXUP_LOG").unwrap_or_else(|_| "warn".into()))
        .format_timestamp(None)
        .init();
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_config(&argv) {
        Ok(argv) => argv,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
