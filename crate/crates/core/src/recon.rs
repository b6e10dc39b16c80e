//! Penalized maximum-a-posteriori reconstruction.
//!
//! Candidates live in the shifted family `Γ = {f + λ·I_Λ}`, where `Λ` is a
//! cover set, so every candidate has strictly positive measurement means
//! `Φx ⪰ λ/d` and the Poisson likelihood never degenerates. The decoder
//! minimizes
//!
//! ```text
//! Σ_j (Φx)_j − y_j ln (Φx)_j + 2·pen(x)
//! ```
//!
//! either over an explicit finite family (exhaustively) or over all
//! nonnegative `f` with an ℓ1 penalty (proximal gradient).

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::channel::{neg_log_likelihood, Measurement, SensingMatrix, Signal};
use crate::error::{check_len, Error, Result};
use crate::expander::CoverSet;
use crate::par;

/// Tolerance on `‖f‖₁ = 1` for enumerated candidates.
pub const NORM_TOL: f64 = 1e-9;

/// Prior code length `pen(·)` over candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Penalty {
    /// `τ·‖x‖₁`.
    L1 { weight: f64 },
    /// `(‖x‖₀ + 1)·ln(2n) + ‖x‖₀·B·ln 2` for `B`-bit quantized amplitudes.
    SupportCode { bits: u32 },
    /// The same code length for every candidate, e.g. `ln |Γ|`.
    Uniform { value: f64 },
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::L1 { weight } if !(weight > 0.0 && weight.is_finite()) => Err(
                Error::InvalidParams(format!("l1 weight must be finite and > 0, got {weight}")),
            ),
            Penalty::Uniform { value } if !(value >= 0.0 && value.is_finite()) => Err(
                Error::InvalidParams(format!("uniform penalty must be finite and >= 0, got {value}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Penalty::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            Penalty::SupportCode { bits } => {
                let nnz = x.iter().filter(|&&v| v != 0.0).count() as f64;
                let n = x.len() as f64;
                (nnz + 1.0) * (2.0 * n).ln() + nnz * bits as f64 * std::f64::consts::LN_2
            }
            Penalty::Uniform { value } => value,
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::L1 { weight } => write!(f, "l1:{weight}"),
            Penalty::SupportCode { bits } => write!(f, "support:{bits}"),
            Penalty::Uniform { value } => write!(f, "uniform:{value}"),
        }
    }
}

impl FromStr for Penalty {
    type Err = Error;

    /// `l1:<weight>`, `support:<bits>` or `uniform:<value>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("penalty {s:?} must look like kind:value")))?;
        let num = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad penalty argument {a:?}")))
        };
        let p = match kind {
            "l1" => Penalty::L1 { weight: num(arg)? },
            "support" => Penalty::SupportCode {
                bits: arg
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad bit count {arg:?}")))?,
            },
            "uniform" => Penalty::Uniform { value: num(arg)? },
            _ => return Err(Error::Parse(format!("unknown penalty kind {kind:?}"))),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Kraft sum of the support-code penalty over every `B`-bit quantized
/// signal of length `n`.
///
/// Walks all `2^n` supports; each support of size `s` stands for
/// `2^(B·s)` candidates (one per choice of nonzero levels), all with the
/// same code length.
pub fn support_code_kraft_sum(n: usize, bits: u32) -> f64 {
    assert!(n < 32, "support enumeration limited to n < 32");
    let pen = Penalty::SupportCode { bits };
    let level_count = 2f64.powi(bits as i32);
    let per_support = par::map_range(1usize << n, |mask| {
        let x: Vec<f64> = (0..n).map(|i| ((mask >> i) & 1) as f64).collect();
        let s = mask.count_ones() as i32;
        level_count.powi(s) * (-pen.value(&x)).exp()
    });
    per_support.iter().sum()
}

/// `x = f + λ·I_Λ`.
pub fn shift_to_gamma(f: &Signal, lambda: f64, cover: &CoverSet) -> Result<Signal> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
    }
    check_len(cover.n(), f.len())?;
    let mut x = f.to_vec();
    for &i in cover.indices() {
        x[i] += lambda;
    }
    Signal::new(x)
}

/// Enumerated candidate family `Θ` together with its shift.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    theta: Vec<Signal>,
    lambda: f64,
    cover: CoverSet,
}

impl CandidateSet {
    /// Every candidate must be nonnegative with unit ℓ1 norm.
    pub fn new(theta: Vec<Signal>, lambda: f64, cover: CoverSet) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidParams("candidate set is empty".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParams(format!("lambda must be > 0, got {lambda}")));
        }
        for (i, f) in theta.iter().enumerate() {
            check_len(cover.n(), f.len())?;
            if (f.l1() - 1.0).abs() > NORM_TOL {
                return Err(Error::Precondition(format!(
                    "candidate {i} has l1 norm {}, expected 1",
                    f.l1()
                )));
            }
        }
        Ok(Self { theta, lambda, cover })
    }

    pub fn theta(&self) -> &[Signal] {
        &self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cover(&self) -> &CoverSet {
        &self.cover
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// The shifted members `f + λ·I_Λ`, in candidate order.
    pub fn gamma(&self) -> Vec<Signal> {
        self.theta
            .iter()
            .map(|f| shift_to_gamma(f, self.lambda, &self.cover).expect("validated on construction"))
            .collect()
    }

    /// `Σ_Θ e^(−pen(f))`.
    pub fn kraft_sum(&self, penalty: &Penalty) -> f64 {
        self.theta.iter().map(|f| (-penalty.value(f)).exp()).sum()
    }

    /// Fails with [`Error::Kraft`] when the sum exceeds one.
    pub fn check_kraft(&self, penalty: &Penalty) -> Result<()> {
        let sum = self.kraft_sum(penalty);
        if sum > 1.0 + 1e-12 {
            Err(Error::Kraft { sum })
        } else {
            Ok(())
        }
    }
}

/// `neg_log_likelihood(Φx, y) + 2·pen(x)`.
pub fn map_objective(
    phi: &SensingMatrix,
    y: &Measurement,
    x: &Signal,
    penalty: &Penalty,
) -> Result<f64> {
    check_len(phi.m(), y.len())?;
    let means = phi.apply(x)?;
    Ok(neg_log_likelihood(&means, y)? + 2.0 * penalty.value(x))
}

/// Default shift `λ = 0.01 / (max(k, 1)·ln n)`.
pub fn default_lambda(n: usize, k: Option<usize>) -> f64 {
    0.01 / (k.unwrap_or(1).max(1) as f64 * (n as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReconConfig {
    pub lambda: f64,
    /// Must be [`Penalty::L1`] for the continuous solver.
    pub penalty: Penalty,
    pub max_iters: usize,
    /// Relative objective change that stops the iteration.
    pub tol: f64,
}

impl ReconConfig {
    pub fn new(lambda: f64, tau: f64) -> Self {
        Self { lambda, penalty: Penalty::L1 { weight: tau }, max_iters: 2000, tol: 1e-8 }
    }

    /// A message when `λ·k·ln n` is not small (outside `λ ≪ 1/(k log n)`).
    pub fn regime_warning(&self, k: usize, n: usize) -> Option<String> {
        let v = self.lambda * k as f64 * (n as f64).ln();
        (v >= 0.1).then(|| format!("lambda*k*ln(n) = {v:.3} is not << 1"))
    }

    fn tau(&self) -> Result<f64> {
        self.penalty.validate()?;
        match self.penalty {
            Penalty::L1 { weight } => Ok(weight),
            other => Err(Error::InvalidParams(format!(
                "continuous solver needs an l1 penalty, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconResult {
    /// The Γ member `f̂ + λ·I_Λ`.
    pub x_hat: Signal,
    pub f_hat: Signal,
    pub objective_trace: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Index into Θ for enumerated solves.
    pub candidate: Option<usize>,
}

/// Smooth part of the decoder objective in the unshifted variable `f`:
/// `L(f) = Σ_j μ_j − y_j ln μ_j` with `μ = Φf + b` and background
/// `b = Φ(λ·I_Λ)`.
pub struct PoissonObjective<'a> {
    phi: &'a SensingMatrix,
    y: Vec<f64>,
    background: Vec<f64>,
}

impl<'a> PoissonObjective<'a> {
    pub fn new(phi: &'a SensingMatrix, y: &Measurement, lambda: f64, cover: &CoverSet) -> Result<Self> {
        check_len(phi.m(), y.len())?;
        check_len(phi.n(), cover.n())?;
        let shift: Vec<f64> = cover.indicator().iter().map(|v| v * lambda).collect();
        Ok(Self {
            phi,
            y: y.counts().iter().map(|&c| c as f64).collect(),
            background: phi.apply(&shift)?,
        })
    }

    pub fn background(&self) -> &[f64] {
        &self.background
    }

    fn means_into(&self, f: &[f64], mu: &mut [f64]) {
        self.phi.apply_into(f, mu);
        for (m, b) in mu.iter_mut().zip(&self.background) {
            *m += b;
        }
    }

    fn value_at_means(&self, mu: &[f64]) -> f64 {
        mu.iter()
            .zip(&self.y)
            .map(|(&m, &y)| if y == 0.0 { m } else { m - y * m.ln() })
            .sum()
    }

    pub fn value(&self, f: &[f64]) -> f64 {
        let mut mu = vec![0.0; self.phi.m()];
        self.means_into(f, &mut mu);
        self.value_at_means(&mu)
    }

    /// `Φᵀ(1 − y ⊘ μ)`.
    pub fn gradient(&self, f: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; self.phi.m()];
        self.means_into(f, &mut mu);
        let mut g = vec![0.0; self.phi.n()];
        self.gradient_at_means(&mu, &mut g);
        g
    }

    fn gradient_at_means(&self, mu: &[f64], out: &mut [f64]) {
        let r: Vec<f64> = mu.iter().zip(&self.y).map(|(&m, &y)| 1.0 - y / m).collect();
        self.phi.adjoint_into(&r, out);
    }
}

/// Sufficient-decrease constant of the backtracking test.
const SIGMA: f64 = 1e-5;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;
/// Consecutive small relative changes needed to stop; a single short BB
/// step can change the objective very little far from the optimum.
const PATIENCE: usize = 5;

/// Continuous MAP decoder.
///
/// Proximal gradient on `F(f) = L(f) + 2τ‖f‖₁` over `f ⪰ 0`: the proximal
/// step soft-thresholds by `2τt` and projects onto the nonnegative orthant.
/// Each iteration starts from a Barzilai–Borwein step and halves it until
/// `F(z) ≤ F(f) − σ/(2t)·‖z − f‖²`, so the objective trace never increases.
/// Starts from the backprojection `Φᵀy`. Stops once the relative objective
/// change stays below `tol` for several consecutive iterations.
pub fn solve_map(
    phi: &SensingMatrix,
    y: &Measurement,
    cfg: &ReconConfig,
    cover: &CoverSet,
) -> Result<ReconResult> {
    let tau = cfg.tau()?;
    if !(cfg.lambda > 0.0 && cfg.lambda.is_finite()) {
        return Err(Error::InvalidParams(format!("lambda must be > 0, got {}", cfg.lambda)));
    }
    let obj = PoissonObjective::new(phi, y, cfg.lambda, cover)?;
    let (n, m) = (phi.n(), phi.m());
    let penalty = |f: &[f64]| 2.0 * tau * f.iter().sum::<f64>();

    let mut f = phi.adjoint(&obj.y)?;
    f.iter_mut().for_each(|v| *v = v.max(0.0));
    let mut mu = vec![0.0; m];
    obj.means_into(&f, &mut mu);
    let mut value = obj.value_at_means(&mu) + penalty(&f);
    if !value.is_finite() {
        return Err(Error::Internal(format!("objective at the start point is {value}")));
    }
    let mut grad = vec![0.0; n];
    obj.gradient_at_means(&mu, &mut grad);

    let mut trace = vec![value];
    let mut step = 1.0;
    let mut z = vec![0.0; n];
    let mut mu_z = vec![0.0; m];
    let mut grad_z = vec![0.0; n];
    let mut converged = false;
    let mut iters = 0;
    let mut quiet = 0;

    while iters < cfg.max_iters {
        iters += 1;
        let (z_value, moved) = loop {
            for i in 0..n {
                z[i] = (f[i] - step * (grad[i] + 2.0 * tau)).max(0.0);
            }
            let moved: f64 = z.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            if moved == 0.0 {
                break (value, 0.0);
            }
            obj.means_into(&z, &mut mu_z);
            let z_value = obj.value_at_means(&mu_z) + penalty(&z);
            if z_value <= value - SIGMA / (2.0 * step) * moved {
                break (z_value, moved);
            }
            step *= 0.5;
            if step < STEP_MIN {
                break (value, 0.0);
            }
        };
        if moved == 0.0 {
            // fixed point of the proximal map, or no decrease at any step
            converged = true;
            break;
        }
        obj.gradient_at_means(&mu_z, &mut grad_z);

        let mut ss = 0.0;
        let mut sr = 0.0;
        for i in 0..n {
            let s = z[i] - f[i];
            ss += s * s;
            sr += s * (grad_z[i] - grad[i]);
        }
        step = if sr > 0.0 { (ss / sr).clamp(STEP_MIN, STEP_MAX) } else { (step * 2.0).min(STEP_MAX) };

        let change = (value - z_value).abs() / value.abs().max(1.0);
        std::mem::swap(&mut f, &mut z);
        std::mem::swap(&mut mu, &mut mu_z);
        std::mem::swap(&mut grad, &mut grad_z);
        value = z_value;
        trace.push(value);
        quiet = if change < cfg.tol { quiet + 1 } else { 0 };
        if quiet >= PATIENCE {
            converged = true;
            break;
        }
    }

    let f_hat = Signal::new(f)?;
    let x_hat = shift_to_gamma(&f_hat, cfg.lambda, cover)?;
    Ok(ReconResult { x_hat, f_hat, objective_trace: trace, iters, converged, candidate: None })
}

/// Exhaustive MAP decoder over `Γ`. Ties go to the lowest candidate index.
///
/// The penalty is charged on the unshifted candidate `f` (the shift is
/// common to all members, so this is the same prior over `Γ`).
pub fn solve_map_enumerated(
    phi: &SensingMatrix,
    y: &Measurement,
    set: &CandidateSet,
    penalty: &Penalty,
) -> Result<ReconResult> {
    check_len(phi.m(), y.len())?;
    check_len(phi.n(), set.cover().n())?;
    let gamma = set.gamma();
    let values = par::map_range(gamma.len(), |c| -> Result<f64> {
        let means = phi.apply(&gamma[c])?;
        Ok(neg_log_likelihood(&means, y)? + 2.0 * penalty.value(&set.theta()[c]))
    });
    let mut best: Option<(usize, f64)> = None;
    for (c, v) in values.into_iter().enumerate() {
        let v = v?;
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((c, v));
        }
    }
    let (c, v) = best.expect("candidate set is nonempty");
    Ok(ReconResult {
        x_hat: gamma[c].clone(),
        f_hat: set.theta()[c].clone(),
        objective_trace: vec![v],
        iters: gamma.len(),
        converged: true,
        candidate: Some(c),
    })
}
