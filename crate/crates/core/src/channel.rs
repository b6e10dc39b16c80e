//! The normalized sensing operator and the Poisson observation channel.
//!
//! `Φ = A/d` maps a nonnegative signal to nonnegative measurement means, and
//! each measurement is an independent Poisson count with that mean. A zero
//! mean yields a zero count with probability one.
//!
//! The likelihood and divergence functions use the convention `0·ln 0 = 0`
//! and return `f64::INFINITY` (not an error) when a positive count or
//! positive mean meets a zero model mean.

use std::ops::Deref;

use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{check_len, Error, Result};
use crate::expander::ExpanderGraph;
use crate::par;
use crate::rng::{stream_rng, StreamRng};

fn validate_nonneg(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite() || *v < 0.0) {
        Some(i) => Err(Error::Domain(format!(
            "{what} entry {i} is {} (must be finite and >= 0)",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// A nonnegative, finite signal of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal(Vec<f64>);

impl Signal {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_nonneg(&values, "signal")?;
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn l1(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Signal {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonnegative Poisson means, one per measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct Intensity(Vec<f64>);

impl Intensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_nonneg(&values, "intensity")?;
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Intensity {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Observed counts `y`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Measurement(Vec<u64>);

impl Measurement {
    pub fn new(counts: Vec<u64>) -> Self {
        Self(counts)
    }

    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

/// `Φ = A/d` with both column and row adjacency for fast products.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    graph: ExpanderGraph,
    row_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SensingMatrix {
    pub fn new(graph: ExpanderGraph) -> Self {
        let rows = graph.rows();
        let mut row_ptr = Vec::with_capacity(graph.m() + 1);
        let mut row_idx = Vec::with_capacity(graph.n() * graph.d());
        row_ptr.push(0);
        for r in rows {
            row_idx.extend(r);
            row_ptr.push(row_idx.len());
        }
        Self { graph, row_ptr, row_idx }
    }

    pub fn graph(&self) -> &ExpanderGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn m(&self) -> usize {
        self.graph.m()
    }

    pub fn d(&self) -> usize {
        self.graph.d()
    }

    /// `(Φx)_j = (Σ_{i ∈ N(j)} x_i) / d`, summed in ascending `i`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n(), x.len())?;
        let mut out = vec![0.0; self.m()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    pub fn apply_signal(&self, x: &Signal) -> Result<Intensity> {
        Ok(Intensity(self.apply(x)?))
    }

    pub(crate) fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d() as f64;
        par::fill(out, |j| {
            let s: f64 = self.row_idx[self.row_ptr[j]..self.row_ptr[j + 1]]
                .iter()
                .map(|&i| x[i])
                .sum();
            s / d
        });
    }

    /// `(Φᵀr)_i = (Σ_{j ∈ N(i)} r_j) / d`.
    pub fn adjoint(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_len(self.m(), r.len())?;
        let mut out = vec![0.0; self.n()];
        self.adjoint_into(r, &mut out);
        Ok(out)
    }

    pub(crate) fn adjoint_into(&self, r: &[f64], out: &mut [f64]) {
        let d = self.d() as f64;
        par::fill(out, |i| self.graph.column(i).iter().map(|&j| r[j]).sum::<f64>() / d);
    }
}

/// One Poisson draw with mean `mu` (assumed finite and nonnegative).
///
/// Sequential-search inversion below 30, Hörmann's transformed rejection
/// (PTRS) above.
pub fn poisson_draw<R: Rng + ?Sized>(rng: &mut R, mu: f64) -> u64 {
    if mu <= 0.0 {
        return 0;
    }
    if mu < 30.0 {
        let u: f64 = rng.random();
        let mut p = (-mu).exp();
        let mut cdf = p;
        let mut k = 0u64;
        // The cap only matters when rounding leaves cdf just below u.
        while u > cdf && k < 1000 {
            k += 1;
            p *= mu / k as f64;
            cdf += p;
        }
        return k;
    }
    let sq = mu.sqrt();
    let log_mu = mu.ln();
    let b = 0.931 + 2.53 * sq;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mu + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mu + k * log_mu - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Independent Poisson counts, one per mean, from stream 0 of `seed`.
pub fn sample_poisson(means: &Intensity, seed: u64) -> Measurement {
    sample_poisson_with(means, &mut stream_rng(seed, 0))
}

pub fn sample_poisson_with(means: &Intensity, rng: &mut StreamRng) -> Measurement {
    Measurement(means.iter().map(|&mu| poisson_draw(rng, mu)).collect())
}

/// `Σ_j μ_j − y_j ln μ_j`; infinite when some `y_j > 0` has `μ_j = 0`.
pub fn neg_log_likelihood(means: &[f64], y: &Measurement) -> Result<f64> {
    check_len(means.len(), y.len())?;
    let mut total = 0.0;
    for (&mu, &count) in means.iter().zip(y.counts()) {
        if count == 0 {
            total += mu;
        } else if mu <= 0.0 {
            return Ok(f64::INFINITY);
        } else {
            total += mu - count as f64 * mu.ln();
        }
    }
    Ok(total)
}

/// `KL(Poisson(g) ‖ Poisson(h)) = Σ_j g_j ln(g_j/h_j) + h_j − g_j`.
pub fn poisson_kl(g: &[f64], h: &[f64]) -> Result<f64> {
    check_len(g.len(), h.len())?;
    validate_nonneg(g, "g")?;
    validate_nonneg(h, "h")?;
    let mut total = 0.0;
    for (&gj, &hj) in g.iter().zip(h) {
        if gj == 0.0 {
            total += hj;
        } else if hj == 0.0 {
            return Ok(f64::INFINITY);
        } else {
            total += gj * (gj / hj).ln() + hj - gj;
        }
    }
    Ok(total)
}

/// `Σ_j (√g_j − √h_j)²`, which equals `−2 ln Σ_y √(p(y|g) p(y|h))` for
/// independent Poisson coordinates.
pub fn hellinger_affinity_term(g: &[f64], h: &[f64]) -> Result<f64> {
    check_len(g.len(), h.len())?;
    validate_nonneg(g, "g")?;
    validate_nonneg(h, "h")?;
    Ok(g.iter()
        .zip(h)
        .map(|(&a, &b)| {
            let t = a.sqrt() - b.sqrt();
            t * t
        })
        .sum())
}
