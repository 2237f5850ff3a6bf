//! The `posi` command-line tool.
//!
//! [`run`] parses arguments, runs one command inside its own thread pool and
//! writes a single report. Exit codes: 0 success, 1 usage or validation
//! error, 2 bad input data, 3 a well-formed request that cannot be met for
//! the given design.

mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use posi::design::{DirectionSet, LoadOptions, DEFAULT_DEDUP_TOLERANCE};
use posi::inference::{
    coverage_experiment, posi_intervals, spar1_select, spar_select, ForwardStepwise, LargestR2, Selector, Spar, Spar1,
    TargetSpec,
};
use posi::special::{
    default_a_grid, default_c_grid, exchangeable_ratio_table, rate_function_max, worst_posi1_table,
};
use posi::structure::{orthogonality_census, verify_duality};
use posi::{
    asymptotic_cap_constant, canonicalize, cap_bonferroni_bound, direction_stream, load_design, orth_k, posi1_k,
    posi_k, scheffe_k, CanonicalDesign, CanonicalForm, ConstantEstimate, DedupMode, ErrorModel, McConfig, ModelId,
    ModelUniverse, PosiError,
};

pub use output::Format;

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Above this many directions the orthogonality census (quadratic) is skipped.
const CENSUS_LIMIT: usize = 4096;

#[derive(Parser, Debug)]
#[command(name = "posi", version, about = "Post-selection inference constants for linear regression")]
struct Cli {
    /// Worker threads, or `auto`. Results do not depend on this.
    #[arg(long, global = true, default_value = "auto")]
    threads: Threads,

    #[arg(long, global = true, value_enum, default_value = "json")]
    output: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug)]
enum Threads {
    Auto,
    Count(usize),
}

impl FromStr for Threads {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Threads::Auto),
            _ => match s.parse::<usize>() {
                Ok(n) if n > 0 => Ok(Threads::Count(n)),
                _ => Err(format!("expected a positive integer or `auto`, got {s:?}")),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormArg {
    Triangular,
    Symmetric,
}

#[derive(Args, Debug)]
struct DesignArgs {
    /// Design table, comma- or whitespace-separated.
    #[arg(long)]
    design: PathBuf,
    /// First line holds column names.
    #[arg(long)]
    header: bool,
    /// Prepend a column of ones.
    #[arg(long)]
    intercept: bool,
    #[arg(long, value_enum, default_value = "triangular")]
    form: FormArg,
    /// Relative singular-value cutoff for the numerical rank.
    #[arg(long)]
    rank_tol: Option<f64>,
}

#[derive(Args, Debug)]
struct McArgs {
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Error degrees of freedom, or `inf` for known σ.
    #[arg(long, default_value = "inf")]
    df: ErrorModel,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model universe, e.g. `all`, `size<=3`, `forced=1,2 & size<=4`.
    #[arg(long, default_value = "all")]
    universe: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SelectorArg {
    Spar,
    Spar1,
    Forward,
    LargestR2,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// PoSI constant by Monte Carlo.
    K {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        mc: McArgs,
    },
    /// PoSI1 constant protecting one predictor.
    K1 {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        mc: McArgs,
        /// 1-based predictor index.
        #[arg(long)]
        predictor: usize,
    },
    /// Scheffé constant √(d F).
    Scheffe {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "inf")]
        df: ErrorModel,
    },
    /// Constant of an orthogonal design.
    Orth {
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "inf")]
        df: ErrorModel,
    },
    /// Sphere-cap union bound for a direction count.
    Bound {
        #[arg(long)]
        p: usize,
        /// Defaults to p.
        #[arg(long)]
        d: Option<usize>,
        /// Defaults to p·2^(p−1).
        #[arg(long)]
        direction_count: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Simultaneous intervals for one submodel.
    Intervals {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Response, one value per line.
        #[arg(long)]
        response: PathBuf,
        /// Estimated from the full-model residuals when n > d.
        #[arg(long)]
        sigma_hat: Option<f64>,
        /// 1-based predictors, e.g. `1,3,4`.
        #[arg(long)]
        model: String,
        /// Use this constant instead of a Monte-Carlo one.
        #[arg(long)]
        k: Option<f64>,
        /// True mean vector, to report target coverage.
        #[arg(long)]
        mu: Option<PathBuf>,
    },
    /// Significance hunting: the model with the largest |t|.
    Spar {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value = "all")]
        universe: String,
        #[arg(long)]
        response: PathBuf,
        #[arg(long)]
        sigma_hat: Option<f64>,
        /// Restrict to one 1-based predictor (SPAR1).
        #[arg(long)]
        predictor: Option<usize>,
    },
    /// Family-wise coverage of a selection rule by simulation.
    Coverage {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        mc: McArgs,
        #[arg(long, value_enum, default_value = "spar")]
        selector: SelectorArg,
        /// 1-based predictor for `spar1`.
        #[arg(long)]
        predictor: Option<usize>,
        /// Steps for `forward`.
        #[arg(long, default_value_t = 1)]
        steps: usize,
        /// Model size for `largest-r2`.
        #[arg(long, default_value_t = 1)]
        size: usize,
        #[arg(long, default_value_t = 1000)]
        replications: usize,
        /// True mean vector, one value per line.
        #[arg(long)]
        mu: PathBuf,
        /// Use this constant instead of a Monte-Carlo one.
        #[arg(long)]
        k: Option<f64>,
        /// Include the per-replication log.
        #[arg(long)]
        log: bool,
    },
    /// Direction count, orthogonality census and duality check.
    Analyze {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value = "all")]
        universe: String,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Tables for the exchangeable and worst-case PoSI1 families.
    Family {
        #[command(subcommand)]
        family: Family,
    },
}

#[derive(Subcommand, Debug)]
enum Family {
    /// sup over a of K(I + aE) / √(2 log p).
    Exchangeable {
        #[arg(long, value_delimiter = ',', default_value = "5,8,11")]
        p: Vec<usize>,
        /// Points of the log grid on [0.01, 100]; a = 0 is always added.
        #[arg(long, default_value_t = 17)]
        a_points: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 20_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// K1 / √p of the worst-case PoSI1 design over a c-grid.
    WorstPosi1 {
        #[arg(long, default_value_t = 2000)]
        p: usize,
        /// Grid levels k with c² = (1 − 10^−k)/(p − 1).
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 20_000)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Maximizer of φ(Φ⁻¹(r)) / √(1 − r).
    RateFunction,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    /// Unreadable input file.
    Input(String),
    Core(PosiError),
}

impl From<PosiError> for CliError {
    fn from(e: PosiError) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Core(e) if e.is_data_error() => 2,
            CliError::Core(e) if e.is_infeasible() => 3,
            CliError::Core(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) => f.write_str(m),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Runs the tool with `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut (dyn Write + Send)) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let pool = match cli.threads {
        Threads::Auto => rayon::ThreadPoolBuilder::new(),
        Threads::Count(n) => rayon::ThreadPoolBuilder::new().num_threads(n),
    }
    .build();
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start thread pool: {e}");
            return 1;
        }
    };
    let threads = pool.current_num_threads();
    let result = pool.install(|| dispatch(cli.command, threads, err));
    match result {
        Ok(report) => match output::render(&report, cli.output, out) {
            Ok(()) => 0,
            Err(e) => {
                let _ = writeln!(err, "error: {e}");
                2
            }
        },
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, threads: usize, err: &mut dyn Write) -> CliResult<Value> {
    match command {
        Command::K { design, mc } => {
            let x = read_design(&design)?;
            let u = parse_universe(&mc.universe)?;
            warn_large(&x, &u, mc.mc_samples, threads, err);
            let est = posi_k(&x, &u, &mc_config(&mc))?;
            Ok(estimate_report(&est, x.cols(), json!({})))
        }
        Command::K1 { design, mc, predictor } => {
            let x = read_design(&design)?;
            let u = parse_universe(&mc.universe)?;
            let j = predictor_index(predictor, x.cols())?;
            warn_large(&x, &u, mc.mc_samples, threads, err);
            let est = posi1_k(&x, &u, j, &mc_config(&mc))?;
            Ok(estimate_report(&est, x.cols(), json!({})))
        }
        Command::Scheffe { d, alpha, df } => {
            let est = scheffe_k(alpha, d, df)?;
            Ok(estimate_report(&est, d, json!({})))
        }
        Command::Orth { d, alpha, df } => {
            let est = orth_k(alpha, d, df)?;
            Ok(estimate_report(&est, d, json!({})))
        }
        Command::Bound { p, d, direction_count, alpha } => bound(p, d, direction_count, alpha),
        Command::Intervals { design, mc, response, sigma_hat, model, k, mu } => {
            intervals(&design, &mc, &response, sigma_hat, &model, k, mu.as_deref(), threads, err)
        }
        Command::Spar { design, universe, response, sigma_hat, predictor } => {
            let x = read_design(&design)?;
            let u = parse_universe(&universe)?;
            warn_large(&x, &u, 0, threads, err);
            let (y, sigma, df) = response_and_sigma(&x, &response, sigma_hat, None)?;
            let sel = match predictor {
                Some(j) => spar1_select(&x, &y, sigma, &u, predictor_index(j, x.cols())?)?,
                None => spar_select(&x, &y, sigma, &u)?,
            };
            let head = header(Header {
                df: Some(df),
                d: Some(x.rank()),
                p: Some(x.cols()),
                universe: Some(u.to_string()),
                ..Header::default()
            });
            Ok(output::merge(
                head,
                json!({
                    "model": sel.model,
                    "predictor": sel.predictor + 1,
                    "statistic": sel.statistic,
                    "sigma_hat": sigma,
                }),
            ))
        }
        Command::Coverage { design, mc, selector, predictor, steps, size, replications, mu, k, log } => {
            let x = read_design(&design)?;
            let u = parse_universe(&mc.universe)?;
            warn_large(&x, &u, mc.mc_samples, threads, err);
            let selector: Box<dyn Selector> = match selector {
                SelectorArg::Spar => Box::new(Spar),
                SelectorArg::Spar1 => {
                    let j = predictor.ok_or_else(|| CliError::Usage("`spar1` needs --predictor".into()))?;
                    Box::new(Spar1(predictor_index(j, x.cols())?))
                }
                SelectorArg::Forward => Box::new(ForwardStepwise { steps }),
                SelectorArg::LargestR2 => Box::new(LargestR2 { size }),
            };
            let mean = x.reduce_response(&read_vector(&mu)?)?;
            let est = match k {
                Some(k) => ConstantEstimate::fixed(k, mc.alpha, mc.df, x.rank()),
                None => posi_k(&x, &u, &mc_config(&mc))?,
            };
            let mc_seed = mc.seed;
            let report =
                coverage_experiment(&x, &u, selector.as_ref(), &TargetSpec::Mean(mean), mc.df, &est, replications, mc_seed)?;
            let mut body = serde_json::to_value(&report).map_err(|e| CliError::Usage(e.to_string()))?;
            if let Value::Object(map) = &mut body {
                map.shift_remove("K");
                map.shift_remove("alpha");
                map.shift_remove("seed");
                let entries = map.shift_remove("log");
                map.insert("simulation_seed".into(), json!(mc_seed));
                if log {
                    map.insert("rows".into(), entries.unwrap_or(Value::Null));
                }
            }
            Ok(estimate_report(&est, x.cols(), body))
        }
        Command::Analyze { design, universe, tolerance } => analyze(&design, &universe, tolerance, threads, err),
        Command::Family { family } => family_report(family),
    }
}

#[derive(Default)]
struct Header {
    k: Option<f64>,
    alpha: Option<f64>,
    df: Option<ErrorModel>,
    mc_samples: usize,
    mc_standard_error: Option<f64>,
    seed: Option<u64>,
    d: Option<usize>,
    p: Option<usize>,
    direction_count: Option<usize>,
    universe: Option<String>,
}

fn header(h: Header) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("K".into(), json!(h.k));
    m.insert("alpha".into(), json!(h.alpha));
    m.insert("df".into(), json!(h.df));
    m.insert("mc_samples".into(), json!(h.mc_samples));
    m.insert("mc_standard_error".into(), json!(h.mc_standard_error));
    m.insert("seed".into(), json!(h.seed));
    m.insert("d".into(), json!(h.d));
    m.insert("p".into(), json!(h.p));
    m.insert("direction_count".into(), json!(h.direction_count));
    m.insert("universe".into(), json!(h.universe));
    m.insert("tool_version".into(), json!(TOOL_VERSION));
    m
}

fn estimate_report(est: &ConstantEstimate, p: usize, body: Value) -> Value {
    let head = header(Header {
        k: Some(est.k),
        alpha: Some(est.alpha),
        df: Some(est.df),
        mc_samples: est.mc_samples,
        mc_standard_error: Some(est.mc_standard_error),
        seed: est.seed,
        d: Some(est.d),
        p: Some(p),
        direction_count: Some(est.direction_count),
        universe: est.universe.as_ref().map(ToString::to_string),
    });
    let mut extra = Map::new();
    extra.insert("method".into(), json!(est.method));
    if let Some(j) = est.predictor {
        extra.insert("predictor".into(), json!(j));
    }
    output::merge(head, output::merge(extra, body))
}

fn mc_config(mc: &McArgs) -> McConfig {
    McConfig::new(mc.alpha, mc.df, mc.mc_samples, mc.seed)
}

fn parse_universe(spec: &str) -> CliResult<ModelUniverse> {
    ModelUniverse::parse(spec).map_err(|e| CliError::Usage(e.to_string()))
}

fn predictor_index(j: usize, p: usize) -> CliResult<usize> {
    if j == 0 || j > p {
        return Err(CliError::Usage(format!("predictor {j} out of range 1..={p}")));
    }
    Ok(j - 1)
}

fn read_design(args: &DesignArgs) -> CliResult<CanonicalDesign> {
    let file = open(&args.design)?;
    let options = LoadOptions { header: args.header, intercept: args.intercept, rank_tolerance: args.rank_tol };
    let x = load_design(BufReader::new(file), options)?;
    let form = match args.form {
        FormArg::Triangular => CanonicalForm::UpperTriangular,
        FormArg::Symmetric => CanonicalForm::Symmetric,
    };
    Ok(canonicalize(&x, form)?)
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Input(format!("cannot open {}: {e}", path.display())))
}

/// One number per line; blank lines are ignored.
fn read_vector(path: &Path) -> CliResult<Vec<f64>> {
    let file = open(path)?;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(PosiError::from)?;
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| PosiError::NonNumeric { row: i + 1, col: 1, cell: cell.to_string() })?;
        if !v.is_finite() {
            return Err(PosiError::NonFinite { row: i + 1, col: 1 }.into());
        }
        values.push(v);
    }
    Ok(values)
}

/// Canonical response and `σ̂`. Without `--sigma-hat`, `σ̂² = RSS / (n − d)`
/// from the full model, with `n − d` error degrees of freedom.
fn response_and_sigma(
    x: &CanonicalDesign,
    path: &Path,
    sigma_hat: Option<f64>,
    df: Option<ErrorModel>,
) -> CliResult<(Vec<f64>, f64, ErrorModel)> {
    let y = read_vector(path)?;
    let reduced = x.reduce_response(&y)?;
    match sigma_hat {
        Some(s) => Ok((reduced, s, df.unwrap_or_default())),
        None => {
            let n = y.len();
            let d = x.rank();
            if n <= d {
                return Err(CliError::Usage(format!("--sigma-hat is required when n = {n} does not exceed d = {d}")));
            }
            let rss = (y.iter().map(|v| v * v).sum::<f64>() - reduced.iter().map(|v| v * v).sum::<f64>()).max(0.0);
            let residual_df = ErrorModel::estimated((n - d) as u32)?;
            if let Some(given) = df.filter(|g| *g != ErrorModel::Known && *g != residual_df) {
                return Err(CliError::Usage(format!(
                    "--df {given} conflicts with the {} residual degrees of freedom",
                    n - d
                )));
            }
            Ok((reduced, (rss / (n - d) as f64).sqrt(), residual_df))
        }
    }
}

/// Warns when the unrestricted universe is large enough to take a while.
fn warn_large(x: &CanonicalDesign, u: &ModelUniverse, samples: usize, threads: usize, err: &mut dyn Write) {
    let p = x.cols();
    if p <= 16 || u.to_string() != "all" {
        return;
    }
    let count = p as f64 * 2f64.powi(p as i32 - 1);
    let work = count * x.rank() as f64 * (p as f64 + samples as f64);
    // Roughly 1e9 multiply-adds per second per thread.
    let seconds = work / (1e9 * threads.max(1) as f64);
    let _ = writeln!(
        err,
        "warning: p = {p} with universe `all`: about {count:.3e} directions, projected time {seconds:.0} s"
    );
}

fn bound(p: usize, d: Option<usize>, direction_count: Option<usize>, alpha: f64) -> CliResult<Value> {
    if p == 0 || p > 63 {
        return Err(CliError::Usage(format!("p = {p} outside 1..=63")));
    }
    let d = d.unwrap_or(p);
    let count = direction_count.unwrap_or(p << (p - 1));
    let est = cap_bonferroni_bound(count, d, alpha)?;
    let scheffe = scheffe_k(alpha, d, ErrorModel::Known)?.k;
    let a = (count as f64).powf(1.0 / d as f64);
    let body = json!({
        "K_over_sqrt_d": est.k / (d as f64).sqrt(),
        "scheffe_K": scheffe,
        "growth_base": a,
        "asymptotic_K_over_sqrt_d": if a > 1.0 { Some(asymptotic_cap_constant(a)?) } else { None },
        "asymptotic_K_over_sqrt_d_for_p_2_pow_p": asymptotic_cap_constant(2.0)?,
    });
    Ok(estimate_report(&est, p, body))
}

#[allow(clippy::too_many_arguments)]
fn intervals(
    design: &DesignArgs,
    mc: &McArgs,
    response: &Path,
    sigma_hat: Option<f64>,
    model: &str,
    k: Option<f64>,
    mu: Option<&Path>,
    threads: usize,
    err: &mut dyn Write,
) -> CliResult<Value> {
    let x = read_design(design)?;
    let u = parse_universe(&mc.universe)?;
    let m = ModelId::parse_one_based(model).ok_or_else(|| CliError::Usage(format!("bad model list {model:?}")))?;
    if !m.is_subset_of(ModelId::full(x.cols())) {
        return Err(CliError::Usage(format!("model {m} has predictors beyond p = {}", x.cols())));
    }
    let (y, sigma, df) = response_and_sigma(&x, response, sigma_hat, Some(mc.df))?;
    let est = match k {
        Some(k) => ConstantEstimate::fixed(k, mc.alpha, df, x.rank()),
        None => {
            warn_large(&x, &u, mc.mc_samples, threads, err);
            posi_k(&x, &u, &McConfig::new(mc.alpha, df, mc.mc_samples, mc.seed))?
        }
    };
    let target = match mu {
        Some(path) => Some(TargetSpec::Mean(x.reduce_response(&read_vector(path)?)?)),
        None => None,
    };
    let rep = posi_intervals(&x, &y, sigma, df, m, &est, target.as_ref())?;
    let body = json!({
        "model": rep.model,
        "sigma_hat": rep.sigma_hat,
        "all_cover": rep.all_cover(),
        "rows": rep.rows,
    });
    Ok(estimate_report(&est, x.cols(), body))
}

fn analyze(design: &DesignArgs, universe: &str, tolerance: f64, threads: usize, err: &mut dyn Write) -> CliResult<Value> {
    let x = read_design(design)?;
    let u = parse_universe(universe)?;
    warn_large(&x, &u, 0, threads, err);
    let stream = direction_stream(&x, &u);
    let set: DirectionSet = stream.collect(DedupMode::UpToSign(DEFAULT_DEDUP_TOLERANCE))?;
    let census = (set.len() <= CENSUS_LIMIT).then(|| {
        let c = orthogonality_census(&set, tolerance);
        json!({"histogram": c.histogram, "orthogonal_pairs": c.orthogonal_pairs})
    });
    let duality = if x.is_classical() && u.to_string() == "all" {
        serde_json::to_value(verify_duality(&x, 1e-8)?).map_err(|e| CliError::Usage(e.to_string()))?
    } else {
        Value::Null
    };
    let head = header(Header {
        d: Some(x.rank()),
        p: Some(x.cols()),
        direction_count: Some(set.len()),
        universe: Some(u.to_string()),
        ..Header::default()
    });
    Ok(output::merge(
        head,
        json!({
            "emitted": set.emitted(),
            "skipped_degenerate": set.skipped_degenerate(),
            "census": census,
            "duality": duality,
        }),
    ))
}

fn family_report(family: Family) -> CliResult<Value> {
    match family {
        Family::Exchangeable { p, a_points, alpha, mc_samples, seed } => {
            let grid = default_a_grid(a_points);
            let table = exchangeable_ratio_table(&p, &grid, alpha, mc_samples, seed)?;
            let rows: Vec<Value> = table
                .iter()
                .flat_map(|row| {
                    let scale = (2.0 * (row.p as f64).ln()).sqrt();
                    row.cells.iter().map(move |c| {
                        json!({"p": row.p, "a": c.a, "K": c.k, "mc_standard_error": c.mc_standard_error, "ratio": c.k / scale})
                    })
                })
                .collect();
            let summary: Vec<Value> = table
                .iter()
                .map(|r| {
                    json!({"p": r.p, "best_a": r.best_a, "K": r.k_max, "mc_standard_error": r.k_max_standard_error,
                           "ratio": r.ratio, "orth_ratio": r.orth_ratio})
                })
                .collect();
            let head = header(Header {
                alpha: Some(alpha),
                df: Some(ErrorModel::Known),
                mc_samples,
                seed: Some(seed),
                universe: Some("all".into()),
                ..Header::default()
            });
            Ok(output::merge(head, json!({"family": "exchangeable", "summary": summary, "rows": rows})))
        }
        Family::WorstPosi1 { p, levels, alpha, mc_samples, seed } => {
            if p < 2 {
                return Err(CliError::Usage("worst-posi1 needs p >= 2".into()));
            }
            let grid = default_c_grid(p, levels);
            let table = worst_posi1_table(p, &grid, alpha, mc_samples, seed)?;
            let best = table
                .cells
                .iter()
                .max_by(|a, b| a.k1.total_cmp(&b.k1))
                .ok_or_else(|| CliError::Usage("empty c-grid".into()))?;
            let head = header(Header {
                k: Some(best.k1),
                alpha: Some(alpha),
                df: Some(ErrorModel::Known),
                mc_samples,
                mc_standard_error: Some(best.mc_standard_error),
                seed: Some(seed),
                d: Some(p),
                p: Some(p),
                direction_count: (p <= 64).then(|| 1usize << (p - 1)),
                universe: Some("all".into()),
            });
            let rows: Vec<Value> = table
                .cells
                .iter()
                .map(|c| {
                    json!({"c": c.c, "c2_times_p_minus_1": c.c * c.c * (p as f64 - 1.0), "K1": c.k1,
                           "K1_over_sqrt_p": c.k1_over_sqrt_p, "mc_standard_error": c.mc_standard_error,
                           "mean_optimal_fraction": c.mean_optimal_fraction})
                })
                .collect();
            Ok(output::merge(
                head,
                json!({"family": "worst-posi1", "predictor": p, "sup_K1_over_sqrt_p": table.sup_k1_over_sqrt_p, "rows": rows}),
            ))
        }
        Family::RateFunction => {
            let (r, f) = rate_function_max();
            Ok(output::merge(header(Header::default()), json!({"r_star": r, "f_max": f})))
        }
    }
}
