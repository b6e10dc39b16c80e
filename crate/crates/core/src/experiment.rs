//! Sparsity/intensity sweep: recover random spike trains from Poisson
//! counts and tabulate the normalized ℓ1 error.
//!
//! Each `(k, I, trial)` cell draws a uniformly random support of size `k`,
//! gives every spike intensity `I`, draws `y ~ Poisson(Φα*)` and runs the
//! continuous decoder. All randomness comes from streams derived from
//! `(seed, k, I, trial)`, so results do not depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_poisson_with, SensingMatrix, Signal};
use crate::error::{Error, Result};
use crate::expander::{cover_set, generate_graph, CoverSet, ExpanderParams};
use crate::par;
use crate::recon::{default_lambda, solve_map, Penalty, ReconConfig};
use crate::rng::{derive_stream, stream_rng};

pub const TRIALS_HEADER: [&str; 6] = ["k", "I", "trial", "normalized_l1_error", "iters", "wall_time_ms"];
pub const SUMMARY_HEADER: [&str; 5] = ["k", "I", "mean_error", "stderr", "trials"];

const PILOT_TAG: u64 = u64::MAX;
/// Multipliers of the base ℓ1 weight tried on the pilot trial.
pub const TAU_MULTIPLIERS: [f64; 3] = [0.1, 1.0, 10.0];

fn default_penalty() -> String {
    "l1:auto".into()
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub k_list: Vec<usize>,
    pub intensity_list: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub lambda: Option<f64>,
    /// `l1:auto` picks τ on a pilot trial; `l1:<w>` fixes it.
    #[serde(default = "default_penalty")]
    pub penalty: String,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TauRule {
    Pilot,
    Fixed(f64),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        ExpanderParams::new(self.n, self.m, self.d, 0.25, 1)?;
        if self.k_list.is_empty() || self.intensity_list.is_empty() {
            return bad("k_list and intensity_list must be nonempty".into());
        }
        if let Some(&k) = self.k_list.iter().find(|&&k| k == 0 || k > self.n / 2) {
            return bad(format!("k = {k} outside 1..={}", self.n / 2));
        }
        if let Some(&i) = self.intensity_list.iter().find(|&&i| !(i > 0.0 && i.is_finite())) {
            return bad(format!("intensity {i} must be > 0"));
        }
        if self.trials == 0 {
            return bad("trials must be >= 1".into());
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda must be > 0, got {l}"));
            }
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return bad("tol and max_iters must be positive".into());
        }
        self.tau_rule().map(|_| ())
    }

    fn tau_rule(&self) -> Result<TauRule> {
        if self.penalty == "l1:auto" {
            return Ok(TauRule::Pilot);
        }
        match self.penalty.parse::<Penalty>()? {
            Penalty::L1 { weight } => Ok(TauRule::Fixed(weight)),
            other => Err(Error::InvalidParams(format!(
                "experiments need an l1 penalty, got {other}"
            ))),
        }
    }

    fn lambda_for(&self, k: usize) -> f64 {
        self.lambda.unwrap_or_else(|| default_lambda(self.n, Some(k)))
    }
}

/// Base ℓ1 weight for a measurement vector with mean count `mean_y`.
///
/// The likelihood gradient on a coordinate has noise of order
/// `1/√(counts)`, and a weight `τ` shrinks an isolated spike by `1/(1+2τ)`,
/// so the base weight falls with the count level.
pub fn tau_base(mean_y: f64) -> f64 {
    0.05 / (1.0 + mean_y).sqrt()
}

pub fn tau_grid(mean_y: f64) -> [f64; 3] {
    TAU_MULTIPLIERS.map(|c| c * tau_base(mean_y))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub k: usize,
    #[serde(rename = "I")]
    pub intensity: f64,
    pub trial: usize,
    pub normalized_l1_error: f64,
    pub iters: usize,
    pub wall_time_ms: f64,
    /// Same error measured on the unshifted estimate.
    #[serde(skip)]
    pub f_hat_error: f64,
    #[serde(skip)]
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub k: usize,
    #[serde(rename = "I")]
    pub intensity: f64,
    pub mean_error: f64,
    pub stderr: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotRow {
    pub k: usize,
    #[serde(rename = "I")]
    pub intensity: f64,
    pub tau: f64,
    pub pilot_error: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub trials: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
    pub pilot: Vec<PilotRow>,
}

/// Everything shared by the trials of one experiment.
struct Bench<'a> {
    cfg: &'a ExperimentConfig,
    phi: SensingMatrix,
    cover: CoverSet,
}

struct Outcome {
    error: f64,
    f_hat_error: f64,
    iters: usize,
    converged: bool,
}

fn rel_l1(truth: &[f64], est: &[f64]) -> f64 {
    let diff: f64 = truth.iter().zip(est).map(|(a, b)| (a - b).abs()).sum();
    diff / truth.iter().sum::<f64>()
}

impl Bench<'_> {
    fn instance(&self, k: usize, intensity: f64, stream: u64) -> Result<(Signal, crate::channel::Measurement)> {
        let mut rng = stream_rng(self.cfg.seed, stream);
        let mut alpha = vec![0.0; self.cfg.n];
        for i in index::sample(&mut rng, self.cfg.n, k) {
            alpha[i] = intensity;
        }
        let alpha = Signal::new(alpha)?;
        let y = sample_poisson_with(&self.phi.apply_signal(&alpha)?, &mut rng);
        Ok((alpha, y))
    }

    fn run(&self, k: usize, intensity: f64, stream: u64, tau: f64) -> Result<Outcome> {
        let (alpha, y) = self.instance(k, intensity, stream)?;
        let rcfg = ReconConfig {
            max_iters: self.cfg.max_iters,
            tol: self.cfg.tol,
            ..ReconConfig::new(self.cfg.lambda_for(k), tau)
        };
        let r = solve_map(&self.phi, &y, &rcfg, &self.cover)?;
        Ok(Outcome {
            error: rel_l1(&alpha, &r.x_hat),
            f_hat_error: rel_l1(&alpha, &r.f_hat),
            iters: r.iters,
            converged: r.converged,
        })
    }

    fn mean_count(&self, k: usize, intensity: f64, stream: u64) -> Result<f64> {
        let (_, y) = self.instance(k, intensity, stream)?;
        Ok(y.total() as f64 / y.len() as f64)
    }
}

fn cell_stream(k: usize, intensity: f64, trial: u64) -> u64 {
    derive_stream(&[k as u64, intensity.to_bits(), trial])
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let params = ExpanderParams::new(cfg.n, cfg.m, cfg.d, 0.25, 1)?;
    let graph = generate_graph(&params, cfg.seed)?;
    let cover = cover_set(&graph)?;
    let bench = Bench { cfg, phi: SensingMatrix::new(graph), cover };

    let cells: Vec<(usize, f64)> = cfg
        .k_list
        .iter()
        .flat_map(|&k| cfg.intensity_list.iter().map(move |&i| (k, i)))
        .collect();

    let mut pilot = Vec::new();
    let mut taus = Vec::with_capacity(cells.len());
    for &(k, intensity) in &cells {
        match cfg.tau_rule()? {
            TauRule::Fixed(t) => taus.push(t),
            TauRule::Pilot => {
                let stream = cell_stream(k, intensity, PILOT_TAG);
                let grid = tau_grid(bench.mean_count(k, intensity, stream)?);
                let errors = par::map_range(grid.len(), |g| bench.run(k, intensity, stream, grid[g]))
                    .into_iter()
                    .map(|o| o.map(|o| o.error))
                    .collect::<Result<Vec<_>>>()?;
                let best = (0..grid.len())
                    .min_by(|&a, &b| errors[a].total_cmp(&errors[b]))
                    .expect("grid is nonempty");
                for (g, (&tau, &pilot_error)) in grid.iter().zip(&errors).enumerate() {
                    pilot.push(PilotRow { k, intensity, tau, pilot_error, selected: g == best });
                }
                taus.push(grid[best]);
            }
        }
    }

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let outcomes = par::map_range(jobs.len(), |j| {
        let (c, t) = jobs[j];
        let (k, intensity) = cells[c];
        let start = Instant::now();
        let o = bench.run(k, intensity, cell_stream(k, intensity, t as u64), taus[c])?;
        Ok(TrialRecord {
            k,
            intensity,
            trial: t,
            normalized_l1_error: o.error,
            iters: o.iters,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
            f_hat_error: o.f_hat_error,
            converged: o.converged,
        })
    });
    let trials = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let summary = cells
        .iter()
        .enumerate()
        .map(|(c, &(k, intensity))| {
            let errs: Vec<f64> = trials[c * cfg.trials..(c + 1) * cfg.trials]
                .iter()
                .map(|r| r.normalized_l1_error)
                .collect();
            let (mean_error, stderr) = crate::bounds::mean_and_stderr(&errs);
            SummaryRow { k, intensity, mean_error, stderr, trials: cfg.trials }
        })
        .collect();
    Ok(ExperimentOutput { trials, summary, pilot })
}

#[derive(Serialize)]
struct FHatRow {
    k: usize,
    #[serde(rename = "I")]
    intensity: f64,
    trial: usize,
    normalized_l1_error_f_hat: f64,
    converged: bool,
}

/// Writes `trials.csv`, `summary.csv`, `pilot.csv` and `f_hat_errors.csv`
/// into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    for r in &out.trials {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    for r in &out.summary {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(dir.join("pilot.csv"))?;
    w.write_record(["k", "I", "tau", "pilot_error", "selected"])?;
    for r in &out.pilot {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("f_hat_errors.csv"))?;
    for r in &out.trials {
        w.serialize(FHatRow {
            k: r.k,
            intensity: r.intensity,
            trial: r.trial,
            normalized_l1_error_f_hat: r.f_hat_error,
            converged: r.converged,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Per `k`, whether the mean error never increases with intensity, allowing
/// one increase no larger than the larger of the two standard errors.
/// Rows are taken in ascending intensity.
pub fn monotone_in_intensity(summary: &[SummaryRow]) -> Vec<(usize, bool)> {
    let mut ks: Vec<usize> = summary.iter().map(|r| r.k).collect();
    ks.dedup();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let mut rows: Vec<&SummaryRow> = summary.iter().filter(|r| r.k == k).collect();
            rows.sort_by(|a, b| a.intensity.total_cmp(&b.intensity));
            let mut inversions = 0;
            let mut ok = true;
            for w in rows.windows(2) {
                let rise = w[1].mean_error - w[0].mean_error;
                if rise > 0.0 {
                    inversions += 1;
                    ok &= rise <= w[0].stderr.max(w[1].stderr);
                }
            }
            (k, ok && inversions <= 1)
        })
        .collect()
}
