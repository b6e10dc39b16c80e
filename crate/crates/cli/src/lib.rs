//! `excs`: generate, verify, sense, recover and check from the command line.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 when a
//! verification or bound check fails.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use expander_cs::bounds::{self, suite, BoundReport};
use expander_cs::channel::{sample_poisson, Measurement, SensingMatrix, Signal};
use expander_cs::experiment::{self, ExperimentConfig};
use expander_cs::expander::{cover_set, generate_graph, verify_expansion, ExpanderGraph, ExpanderParams, VerifyMode};
use expander_cs::io::{read_counts, read_reals, write_values};
use expander_cs::recon::{default_lambda, shift_to_gamma, solve_map, Penalty, ReconConfig};
use expander_cs::tv::{tv_norm, tv_norm_isotropic, Image2D};
use expander_cs::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "excs", version, about = "Poisson compressed sensing with expander graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a random left-regular bipartite graph (.exg)
    Gen(GenArgs),
    /// Check (k, ε) expansion and print a certificate as JSON
    Verify(VerifyArgs),
    /// Compute a greedy cover set and print it as JSON
    Cover(CoverArgs),
    /// Draw Poisson measurements of a signal
    Sense(SenseArgs),
    /// Reconstruct a signal from measurements
    Recover(RecoverArgs),
    /// Evaluate recovery inequalities, one JSON line per report
    Bounds(BoundsArgs),
    /// Total-variation seminorm of an image
    Tvnorm(TvArgs),
    /// Run a sparsity/intensity sweep from a JSON config
    Experiment(ExperimentArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expansion target recorded for validation only
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value = "exact")]
    mode: VerifyMode,
    /// Subset budget: the enumeration cap (exact) or sample count (sampled)
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the certificate to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoverArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SenseArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    signal: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Shift parameter, or `auto` for 0.01/(max(k,1)·ln n)
    #[arg(long, default_value = "auto")]
    lambda: String,
    /// ℓ1 weight as `l1:<tau>`
    #[arg(long, default_value = "l1:0.01")]
    penalty: String,
    /// Sparsity, used by `--lambda auto` and the regime warning
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Check {
    Theorem1,
    Lemma1,
    Kl,
    Hellinger,
    Band,
    Becca,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Run the full randomized battery
    #[arg(long, conflicts_with = "check")]
    suite: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Evaluate a single inequality on file inputs
    #[arg(long, value_enum)]
    check: Option<Check>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    u: Option<PathBuf>,
    #[arg(long)]
    v: Option<PathBuf>,
    /// Truth α*
    #[arg(long)]
    alpha: Option<PathBuf>,
    /// Unshifted candidate f; repeat for becca
    #[arg(long)]
    f: Vec<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    g: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    penalty: Option<String>,
    /// Distance multiplier for becca
    #[arg(long, default_value_t = 1.0)]
    c: f64,
}

#[derive(Args, Debug)]
struct TvArgs {
    #[arg(long)]
    image: PathBuf,
    /// Sum of per-pixel gradient magnitudes instead of one global root
    #[arg(long)]
    isotropic: bool,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `out_dir` from the config
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (program name first) and runs one subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn json_line(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::Internal(e.to_string()))?;
    writeln!(out, "{text}")?;
    Ok(())
}

fn need<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParams(format!("--{flag} is required for this check")))
}

fn read_signal(path: &Path) -> Result<Signal> {
    Signal::new(read_reals(path)?)
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Gen(a) => {
            let params = ExpanderParams::new(a.n, a.m, a.d, a.epsilon, a.k)?;
            generate_graph(&params, a.seed)?.write_exg(&a.out)?;
            Ok(EXIT_OK)
        }
        Command::Verify(a) => {
            let g = ExpanderGraph::read_exg(&a.graph)?;
            let cert = verify_expansion(&g, a.k, a.epsilon, a.mode, a.budget, a.seed)?;
            json_line(out, &cert)?;
            if let Some(path) = a.out {
                let text = serde_json::to_string_pretty(&cert).map_err(|e| Error::Internal(e.to_string()))?;
                fs::write(path, text + "\n")?;
            }
            Ok(if cert.passed() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Cover(a) => {
            let cover = cover_set(&ExpanderGraph::read_exg(&a.graph)?)?;
            json_line(out, &cover)?;
            if let Some(path) = a.out {
                let mut f = fs::File::create(path)?;
                json_line(&mut f, &cover)?;
            }
            Ok(EXIT_OK)
        }
        Command::Sense(a) => {
            let phi = SensingMatrix::new(ExpanderGraph::read_exg(&a.graph)?);
            let y = sample_poisson(&phi.apply_signal(&read_signal(&a.signal)?)?, a.seed);
            write_values(&a.out, y.counts())?;
            Ok(EXIT_OK)
        }
        Command::Recover(a) => recover(a, out, err),
        Command::Bounds(a) => bounds_cmd(a, out),
        Command::Tvnorm(a) => {
            let img = Image2D::read(&a.image)?;
            let v = if a.isotropic { tv_norm_isotropic(&img) } else { tv_norm(&img) };
            writeln!(out, "{v}")?;
            Ok(EXIT_OK)
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::read(&a.config)?;
            if let Some(dir) = a.out {
                cfg.out_dir = dir;
            }
            let result = experiment::run_experiment(&cfg)?;
            experiment::write_outputs(&result, &cfg.out_dir)?;
            for row in &result.summary {
                json_line(out, row)?;
            }
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct RecoverSummary {
    x_hat_file: String,
    f_hat_file: String,
    objective_trace_file: String,
    iters: usize,
    converged: bool,
    lambda: f64,
    penalty: String,
}

fn recover(a: RecoverArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let g = ExpanderGraph::read_exg(&a.graph)?;
    let y = Measurement::new(read_counts(&a.y)?);
    let lambda = match a.lambda.as_str() {
        "auto" => default_lambda(g.n(), a.k),
        v => v.parse().map_err(|_| Error::Parse(format!("bad --lambda {v:?}")))?,
    };
    let penalty: Penalty = a.penalty.parse()?;
    let cover = cover_set(&g)?;
    let cfg = ReconConfig { lambda, penalty, max_iters: a.max_iters, tol: a.tol };
    if let Some(msg) = cfg.regime_warning(a.k.unwrap_or(1), g.n()) {
        writeln!(err, "warning: {msg}")?;
    }
    let r = solve_map(&SensingMatrix::new(g), &y, &cfg, &cover)?;
    fs::create_dir_all(&a.out)?;
    write_values(a.out.join("x_hat.txt"), &r.x_hat)?;
    write_values(a.out.join("f_hat.txt"), &r.f_hat)?;
    write_values(a.out.join("objective_trace.txt"), &r.objective_trace)?;
    let summary = RecoverSummary {
        x_hat_file: "x_hat.txt".into(),
        f_hat_file: "f_hat.txt".into(),
        objective_trace_file: "objective_trace.txt".into(),
        iters: r.iters,
        converged: r.converged,
        lambda,
        penalty: penalty.to_string(),
    };
    let mut f = fs::File::create(a.out.join("result.json"))?;
    json_line(&mut f, &summary)?;
    json_line(out, &summary)?;
    Ok(EXIT_OK)
}

fn bounds_cmd(a: BoundsArgs, out: &mut dyn Write) -> Result<i32> {
    if a.suite {
        let cfg = suite::SuiteConfig { seed: a.seed, ..Default::default() };
        let lines = suite::run_suite(&cfg)?;
        for line in &lines {
            json_line(out, line)?;
        }
        return Ok(if lines.iter().all(|l| l.pass) { EXIT_OK } else { EXIT_FAILED });
    }
    let Some(check) = a.check else {
        return Err(Error::InvalidParams("give --suite or --check <name>".into()));
    };
    let graph = || -> Result<ExpanderGraph> { ExpanderGraph::read_exg(need(a.graph.as_ref(), "graph")?) };
    let first_f = || -> Result<Signal> { read_signal(need(a.f.first(), "f")?) };
    let report: BoundReport = match check {
        Check::Theorem1 => bounds::theorem1_bound(
            &graph()?,
            &read_reals(need(a.u.as_ref(), "u")?)?,
            &read_reals(need(a.v.as_ref(), "v")?)?,
            need(a.k, "k")?,
            need(a.epsilon, "epsilon")?,
            a.delta,
        )?,
        Check::Lemma1 | Check::Kl => {
            let g = graph()?;
            let cover = cover_set(&g)?;
            let lambda = need(a.lambda, "lambda")?;
            let x = shift_to_gamma(&first_f()?, lambda, &cover)?;
            let alpha = read_signal(need(a.alpha.as_ref(), "alpha")?)?;
            let phi = SensingMatrix::new(g);
            if matches!(check, Check::Lemma1) {
                bounds::lemma1_check(&phi, &alpha, &x, lambda)?
            } else {
                bounds::lemma3_kl_bound(&phi, &alpha, &x, lambda)?
            }
        }
        Check::Hellinger => bounds::hellinger_identity_check(need(a.g, "g")?, need(a.h, "h")?, 1e-6)?,
        Check::Band => {
            let g = graph()?;
            let cover = cover_set(&g)?;
            let band = bounds::measurement_band(&SensingMatrix::new(g), &first_f()?, need(a.lambda, "lambda")?, &cover)?;
            json_line(out, &band)?;
            return Ok(if band.pass { EXIT_OK } else { EXIT_FAILED });
        }
        Check::Becca => {
            let alpha = read_reals(need(a.alpha.as_ref(), "alpha")?)?;
            let theta = a.f.iter().map(|p| read_signal(p)).collect::<Result<Vec<_>>>()?;
            let penalty: Penalty = need(a.penalty.as_deref(), "penalty")?.parse()?;
            let n = alpha.len();
            let value = bounds::becca_order(&alpha, &theta, &penalty, need(a.k, "k")?, n, a.c)?;
            json_line(out, &serde_json::json!({ "name": "becca_order", "value": value }))?;
            return Ok(EXIT_OK);
        }
    };
    json_line(out, &report)?;
    Ok(if report.pass { EXIT_OK } else { EXIT_FAILED })
}
