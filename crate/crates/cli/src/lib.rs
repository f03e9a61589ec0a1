//! Command-line front end: set-probability queries, estimator checks,
//! variance sweeps and optimization runs on the Bernoulli toy.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sworgrad::checks::{run_checks, CheckConfig};
use sworgrad::distributions::DEFAULT_ENUMERATION_CAP;
use sworgrad::experiment::{optimize, variance_sweep, BernoulliToy, GradientSource, OptConfig, SweepConfig};
use sworgrad::setprob::{log_p_set, loo_ratios, IntegralConfig, NodeRule};
use sworgrad::{Backend, DistSpec, SetProbConfig};

/// Version of the JSON documents written by every subcommand.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "sworgrad", version, about = "Gradient estimators based on sampling without replacement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Probability that a Gumbel-top-k sample equals a given set.
    Probset(ProbsetArgs),
    /// Check the estimator identities on random instances against enumeration.
    Check(CheckArgs),
    /// Empirical gradient variance on the Bernoulli toy.
    Variance(VarianceArgs),
    /// Gradient descent on the Bernoulli toy.
    Optimize(OptimizeArgs),
}

#[derive(Debug, Args)]
struct IntegralArgs {
    /// Trapezoid nodes of the integral backend.
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    /// Shift of the uniform node rule.
    #[arg(long = "a", default_value_t = 5.0)]
    a: f64,
    /// Node placement: log-log or uniform.
    #[arg(long, default_value = "log-log")]
    rule: NodeRule,
}

impl IntegralArgs {
    fn config(&self) -> Result<IntegralConfig, String> {
        if self.nodes < 2 {
            return Err("--nodes must be at least 2".into());
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err("--a must be positive".into());
        }
        Ok(IntegralConfig { nodes: self.nodes, shift: self.a, rule: self.rule })
    }
}

#[derive(Debug, Args)]
struct ProbsetArgs {
    /// Distribution as JSON (probabilities, {"logits": [..]} or {"dims": [[..], ..]}), or @path.
    #[arg(long)]
    dist: String,
    /// Comma-separated element indices.
    #[arg(long, value_delimiter = ',', required = true)]
    set: Vec<usize>,
    /// Elements removed from the domain before sampling.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<usize>,
    /// Force a backend: naive, exact or integral.
    #[arg(long)]
    backend: Option<Backend>,
    /// Largest set handled by inclusion-exclusion when no backend is forced.
    #[arg(long, default_value_t = sworgrad::setprob::EXACT_MAX_K)]
    exact_max_k: usize,
    /// Also report the leave-one-out ratios.
    #[arg(long)]
    ratios: bool,
    #[command(flatten)]
    integral: IntegralArgs,
    /// Accepted for uniformity; the query is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    /// Domain sizes to draw from.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    n: Vec<usize>,
    /// Sample sizes to draw from.
    #[arg(long, value_delimiter = ',', default_value = "2,3")]
    k: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    integral: IntegralArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VarianceArgs {
    /// JSON sweep config: {estimators, k, eta, replications, seed, out}.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config replication count.
    #[arg(long)]
    replications: Option<usize>,
    /// Overrides the config output path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OptimizeArgs {
    /// "exact" or an estimator id.
    #[arg(long, default_value = "exact")]
    estimator: GradientSource,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Step size.
    #[arg(long, default_value_t = sworgrad::experiment::DEFAULT_STEP_SIZE)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Initial parameter.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    eta0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Versioned<T: Serialize> {
    schema_version: u32,
    #[serde(flatten)]
    body: T,
}

#[derive(Serialize)]
struct ProbsetReport {
    set: Vec<usize>,
    excluded: Vec<usize>,
    backend: Backend,
    fell_back: bool,
    log_p: f64,
    p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    ratios: Option<Vec<(usize, f64)>>,
}

enum Failure {
    Invalid(String),
    ChecksFailed(String),
}

impl From<sworgrad::Error> for Failure {
    fn from(e: sworgrad::Error) -> Self {
        Failure::Invalid(e.to_string())
    }
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 on success, 1 on invalid input, 2 when a check fails.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_INVALID;
    }
    let result = match cli.command {
        Command::Probset(args) => probset(args),
        Command::Check(args) => check(args),
        Command::Variance(args) => variance(args),
        Command::Optimize(args) => optimize_cmd(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
        Err(Failure::ChecksFailed(msg)) => {
            eprintln!("{msg}");
            EXIT_CHECK_FAILED
        }
    }
}

/// Caps the worker pool at `SWORGRAD_THREADS` when set.
fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("SWORGRAD_THREADS") else { return Ok(()) };
    let threads: usize = value
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("SWORGRAD_THREADS must be a positive integer, got '{value}'"))?;
    // a pool built earlier in the same process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn read_arg(value: &str) -> Result<String, Failure> {
    match value.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("reading {path}: {e}"))),
        None => Ok(value.to_string()),
    }
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Invalid(format!("writing {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Failure::Invalid(e.to_string()))
        }
    }
}

fn to_json<T: Serialize>(body: T) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(&Versioned { schema_version: SCHEMA_VERSION, body })
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn probset(args: ProbsetArgs) -> Result<(), Failure> {
    let dist = DistSpec::parse(&read_arg(&args.dist)?)?.to_categorical(DEFAULT_ENUMERATION_CAP)?;
    let cfg = SetProbConfig {
        backend: args.backend,
        exact_max_k: args.exact_max_k,
        integral: args.integral.config().map_err(Failure::Invalid)?,
        ..SetProbConfig::default()
    };
    let result = log_p_set(&dist, &args.set, &args.exclude, &cfg)?;
    let ratios = if args.ratios {
        if !args.exclude.is_empty() {
            return Err(Failure::Invalid("--ratios does not support --exclude".into()));
        }
        let lr = loo_ratios(&dist, &args.set, 1, &cfg)?;
        Some(lr.elements.into_iter().zip(lr.ratios).collect())
    } else {
        None
    };
    let mut set = args.set;
    set.sort_unstable();
    let mut excluded = args.exclude;
    excluded.sort_unstable();
    let report = ProbsetReport {
        set,
        excluded,
        backend: result.backend,
        fell_back: result.fell_back,
        log_p: result.log_p,
        p: result.log_p.exp(),
        ratios,
    };
    emit(args.out.as_ref(), &to_json(report)?)
}

fn check(args: CheckArgs) -> Result<(), Failure> {
    let cfg = CheckConfig {
        ns: args.n,
        ks: args.k,
        cases: args.cases,
        seed: args.seed,
        integral: args.integral.config().map_err(Failure::Invalid)?,
    };
    let report = run_checks(&cfg)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Invalid(e.to_string()))?;
    text.push('\n');
    emit(args.out.as_ref(), &text)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::ChecksFailed(format!("failed checks: {}", failed.join(", "))))
    }
}

fn variance(args: VarianceArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Failure::Invalid(format!("reading {}: {e}", args.config.display())))?;
    let mut cfg = SweepConfig::from_json(&text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    let out = args.out.or_else(|| cfg.out.as_ref().map(PathBuf::from));
    let report = variance_sweep(&cfg)?;
    emit(out.as_ref(), &report.to_csv_string()?)
}

fn optimize_cmd(args: OptimizeArgs) -> Result<(), Failure> {
    let cfg = OptConfig {
        source: args.estimator,
        k: args.k,
        step_size: args.lr,
        steps: args.steps,
        seed: args.seed,
        eta0: args.eta0,
    };
    let run = optimize(&BernoulliToy::default(), &cfg)?;
    emit(args.out.as_ref(), &to_json(run)?)
}
