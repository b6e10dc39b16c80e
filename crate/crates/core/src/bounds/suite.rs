//! The full randomized battery behind `excs bounds --suite`.
//!
//! Theorem checks run only on graphs whose expansion was certified by exact
//! enumeration. Each line aggregates one family of checks and carries the
//! report with the smallest slack.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::Serialize;

use super::*;
use crate::expander::{
    collision_analysis, cover_set, generate_graph, rip1_check, tightest_epsilon, verify_expansion,
    ExpanderParams, VerifyMode,
};
use crate::recon::{shift_to_gamma, support_code_kraft_sum};
use crate::rng::StreamRng;

const CERT_BUDGET: u64 = 1 << 22;

/// A graph with an exact `(k, ε)` certificate.
#[derive(Debug, Clone)]
pub struct CertifiedGraph {
    pub graph: ExpanderGraph,
    pub k: usize,
    pub epsilon: f64,
}

fn certify(graph: ExpanderGraph, k: usize) -> Result<CertifiedGraph> {
    let epsilon = tightest_epsilon(&graph, k, CERT_BUDGET)? + 1e-9;
    let cert = verify_expansion(&graph, k, epsilon, VerifyMode::Exact, CERT_BUDGET, 0)?;
    if !cert.passed() {
        return Err(Error::Internal(format!("tightest epsilon {epsilon} did not certify")));
    }
    Ok(CertifiedGraph { graph, k, epsilon })
}

// GF(4) = {0, 1, a, a+1} with a² = a + 1; addition is xor.
const GF4_MUL: [[usize; 4]; 4] = [[0, 0, 0, 0], [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2]];

/// Left nodes are `n` of the 20 lines of the affine plane over GF(4), right
/// nodes its 16 points (relabelled at random). Two lines share at most one
/// point, so every pair of left nodes has at least 7 neighbors.
pub fn affine_plane_graph(n: usize, seed: u64) -> Result<ExpanderGraph> {
    if !(17..=20).contains(&n) {
        return Err(Error::InvalidParams(format!("need 17 <= n <= 20, got {n}")));
    }
    let mut lines: Vec<Vec<usize>> = Vec::with_capacity(20);
    for slope in 0..4 {
        for icpt in 0..4 {
            lines.push((0..4).map(|x| 4 * x + (GF4_MUL[slope][x] ^ icpt)).collect());
        }
    }
    for c in 0..4 {
        lines.push((0..4).map(|y| 4 * c + y).collect());
    }
    let mut rng = stream_rng(seed, derive_stream(&[0x6167_3234]));
    let mut labels: Vec<usize> = (0..16).collect();
    labels.shuffle(&mut rng);
    lines.shuffle(&mut rng);
    let columns = lines[..n]
        .iter()
        .map(|l| l.iter().map(|&p| labels[p]).collect())
        .collect();
    ExpanderGraph::from_columns(16, 4, columns)
}

/// Small random and affine-plane graphs for the RIP, collision and lemma
/// suites, each certified at its tightest `ε` (all below 1/2) and each with
/// a cover set.
pub fn rip_graphs(seed: u64) -> Result<Vec<CertifiedGraph>> {
    let shapes = [(24, 16, 4, 2), (24, 16, 4, 3), (20, 16, 4, 3), (16, 12, 3, 2), (12, 8, 2, 2), (18, 12, 3, 3)];
    let mut out = Vec::new();
    for (s, &(n, m, d, k)) in shapes.iter().enumerate() {
        let params = ExpanderParams::new(n, m, d, 0.25, k)?;
        let mut attempt = 0u64;
        loop {
            let g = generate_graph(&params, derive_stream(&[seed, s as u64, attempt]))?;
            let coverable = cover_set(&g).is_ok();
            let c = certify(g, k)?;
            if coverable && c.epsilon < 0.45 {
                out.push(c);
                break;
            }
            attempt += 1;
            if attempt > 1000 {
                return Err(Error::Internal(format!("no certifiable graph of shape {n}x{m}x{d}")));
            }
        }
    }
    for (i, (n, k)) in [(20, 2), (17, 3)].into_iter().enumerate() {
        out.push(certify(affine_plane_graph(n, derive_stream(&[seed, 100 + i as u64]))?, k)?);
    }
    Ok(out)
}

/// Affine-plane graphs certified as `(2, 1/8 + 1e-9)`-expanders, for the
/// `k = 1` approximation bound.
pub fn theorem1_graphs(seed: u64) -> Result<Vec<CertifiedGraph>> {
    (17..=20)
        .map(|n| {
            let c = certify(affine_plane_graph(n, derive_stream(&[seed, 200 + n as u64]))?, 2)?;
            debug_assert!(c.epsilon < 1.0 / 6.0);
            Ok(CertifiedGraph { k: 1, ..c })
        })
        .collect()
}

/// Basis of `ker A` from the reduced row echelon form.
pub fn kernel_basis(g: &ExpanderGraph) -> Vec<Vec<f64>> {
    let (m, n) = (g.m(), g.n());
    let mut a = vec![vec![0.0f64; n]; m];
    for i in 0..n {
        for &j in g.column(i) {
            a[j][i] = 1.0;
        }
    }
    let mut pivots = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let Some(p) = (row..m).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())) else {
            break;
        };
        if a[p][col].abs() < 1e-10 {
            continue;
        }
        a.swap(row, p);
        let piv = a[row][col];
        a[row].iter_mut().for_each(|v| *v /= piv);
        for r in 0..m {
            if r != row && a[r][col] != 0.0 {
                let factor = a[r][col];
                for c in 0..n {
                    a[r][c] -= factor * a[row][c];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    free.iter()
        .map(|&fc| {
            let mut v = vec![0.0; n];
            v[fc] = 1.0;
            for (r, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[r][fc];
            }
            v
        })
        .collect()
}

fn magnitude(rng: &mut StreamRng) -> f64 {
    match rng.random_range(0..3) {
        0 => rng.random_range(0.1..1.0),
        1 => (-rng.random::<f64>().max(1e-300).ln()).max(1e-3),
        _ => 10f64.powf(rng.random_range(-3.0..3.0)),
    }
}

/// A signed vector with between one and `k` nonzeros.
pub fn random_sparse(rng: &mut StreamRng, n: usize, k: usize) -> Vec<f64> {
    let s = rng.random_range(1..=k.min(n));
    let mut x = vec![0.0; n];
    let equal = rng.random_bool(0.2);
    let base = magnitude(rng);
    for i in index::sample(rng, n, s) {
        let mag = if equal { base } else { magnitude(rng) };
        x[i] = if rng.random_bool(0.5) { mag } else { -mag };
    }
    x
}

fn random_nonneg(rng: &mut StreamRng, n: usize, max_support: usize) -> Vec<f64> {
    let s = rng.random_range(1..=max_support.min(n));
    let mut x = vec![0.0; n];
    for i in index::sample(rng, n, s) {
        x[i] = magnitude(rng);
    }
    x
}

fn normalized(mut x: Vec<f64>, norm: f64) -> Vec<f64> {
    let s = l1(&x);
    x.iter_mut().for_each(|v| *v *= norm / s);
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Deterministic,
    MonteCarlo,
}

/// One aggregated family of checks.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteLine {
    pub name: String,
    pub kind: CheckKind,
    pub trials: usize,
    pub violations: usize,
    pub pass: bool,
    /// Report with the smallest slack.
    pub worst: Option<BoundReport>,
}

struct Tally {
    line: SuiteLine,
}

impl Tally {
    fn new(name: &str, kind: CheckKind) -> Self {
        Self {
            line: SuiteLine { name: name.into(), kind, trials: 0, violations: 0, pass: true, worst: None },
        }
    }

    fn add(&mut self, r: BoundReport) {
        self.line.trials += 1;
        if !r.pass {
            self.line.violations += 1;
            self.line.pass = false;
        }
        if self.line.worst.as_ref().is_none_or(|w| r.slack < w.slack) {
            self.line.worst = Some(r);
        }
    }

    fn finish(self) -> SuiteLine {
        self.line
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Random sparse vectors per graph for the RIP and collision checks.
    pub vectors_per_graph: usize,
    pub theorem1_trials: usize,
    pub lemma_trials: usize,
    pub mc_draws: usize,
    pub mc_seeds: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            vectors_per_graph: 1000,
            theorem1_trials: 500,
            lemma_trials: 1000,
            mc_draws: 2000,
            mc_seeds: 3,
        }
    }
}

fn ctx_for(c: &CertifiedGraph) -> BoundContext {
    BoundContext {
        epsilon: Some(c.epsilon),
        d: Some(c.graph.d()),
        k: Some(c.k),
        m: Some(c.graph.m()),
        n: Some(c.graph.n()),
        ..Default::default()
    }
}

/// RIP-1 lower and upper sides and the collision-weight bound on `k`-sparse
/// vectors.
pub fn rip_and_collision(cfg: &SuiteConfig) -> Result<[SuiteLine; 3]> {
    let graphs = rip_graphs(cfg.seed)?;
    let mut lower = Tally::new("rip1_lower", CheckKind::Deterministic);
    let mut upper = Tally::new("rip1_upper", CheckKind::Deterministic);
    let mut coll = Tally::new("collision_weight", CheckKind::Deterministic);
    for (gi, c) in graphs.iter().enumerate() {
        let g = &c.graph;
        let d = g.d() as f64;
        let results = par::map_range(cfg.vectors_per_graph, |t| -> Result<_> {
            let mut rng = stream_rng(cfg.seed, derive_stream(&[1, gi as u64, t as u64]));
            let x = random_sparse(&mut rng, g.n(), c.k);
            let rip = rip1_check(g, &x, c.k, c.epsilon)?;
            let ca = collision_analysis(g, &x)?;
            Ok((rip, ca, l1(&x)))
        });
        for r in results {
            let (rip, ca, norm) = r?;
            let ctx = ctx_for(c);
            let lo = rip.lower.ok_or_else(|| Error::Internal("sparse vector reported dense".into()))?;
            lower.add(BoundReport::new("rip1_lower", lo, rip.mid, ctx.clone()));
            upper.add(BoundReport::new("rip1_upper", rip.mid, rip.upper, ctx.clone()));
            let mut r = BoundReport::new("collision_weight", ca.collision_weight, c.epsilon * d * norm, ctx);
            if !ca.prefix_bound_holds(c.k, c.epsilon, g.d()) {
                r.pass = false;
            }
            coll.add(r);
        }
    }
    Ok([lower.finish(), upper.finish(), coll.finish()])
}

/// Random `(u, v, Δ)` with `‖u‖₁ ≥ ‖v‖₁ − Δ`, cycling through dense
/// perturbations, kernel directions of `A`, and norm-matched swaps.
pub fn theorem1_triple(
    rng: &mut StreamRng,
    g: &ExpanderGraph,
    k: usize,
    kernel: &[Vec<f64>],
    kind: usize,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = g.n();
    let noise = |rng: &mut StreamRng, scale: f64| -> Vec<f64> {
        (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()
    };
    let (u, v) = match kind % 4 {
        0 => {
            let mut u = random_sparse(rng, n, k);
            let scale = 0.1 * l1(&u) / n as f64;
            for (ui, e) in u.iter_mut().zip(noise(rng, scale)) {
                *ui += e;
            }
            let v = noise(rng, 2.0 * l1(&u) / n as f64);
            (u, v)
        }
        1 if !kernel.is_empty() => {
            let u = random_sparse(rng, n, k);
            let mut w = vec![0.0; n];
            for b in kernel {
                let c = rng.random_range(-1.0..1.0);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi += c * bi);
            }
            let t = rng.random_range(0.01..2.0) * l1(&u) / l1(&w).max(1e-300);
            let v = u.iter().zip(&w).map(|(a, b)| a + t * b).collect();
            (u, v)
        }
        2 => {
            let u = noise(rng, 1.0);
            let v = normalized(random_sparse(rng, n, k), l1(&u));
            (u, v)
        }
        _ => {
            let u = random_sparse(rng, n, k);
            let scale = rng.random_range(1e-3..0.5) * l1(&u) / n as f64;
            let v = u.iter().zip(noise(rng, scale)).map(|(a, b)| a + b).collect();
            (u, v)
        }
    };
    let gap = (l1(&v) - l1(&u)).max(0.0);
    let delta = if rng.random_bool(0.5) { gap } else { gap + rng.random_range(0.0..0.5) * l1(&u) };
    (u, v, delta)
}

pub fn theorem1_suite(cfg: &SuiteConfig) -> Result<SuiteLine> {
    let graphs = theorem1_graphs(cfg.seed)?;
    let kernels: Vec<_> = graphs.iter().map(|c| kernel_basis(&c.graph)).collect();
    let reports = par::map_range(cfg.theorem1_trials, |t| {
        let gi = t % graphs.len();
        let c = &graphs[gi];
        let mut rng = stream_rng(cfg.seed, derive_stream(&[3, t as u64]));
        let (u, v, delta) = theorem1_triple(&mut rng, &c.graph, c.k, &kernels[gi], t / graphs.len());
        theorem1_bound(&c.graph, &u, &v, c.k, c.epsilon, delta)
    });
    let mut tally = Tally::new("theorem1_l1_approximation", CheckKind::Deterministic);
    for r in reports {
        tally.add(r?);
    }
    Ok(tally.finish())
}

/// A random truth with `‖α*‖₁ ≤ 1`, a unit-norm candidate and a shift.
pub fn lemma_instance(rng: &mut StreamRng, n: usize) -> (Signal, Signal, f64) {
    let lambda = 10f64.powf(rng.random_range(-3.0..-1.0));
    let alpha = normalized(random_nonneg(rng, n, n), rng.random_range(0.05..=1.0));
    let f = match rng.random_range(0..3) {
        0 => normalized(random_nonneg(rng, n, n), 1.0),
        1 => normalized(alpha.clone(), 1.0),
        _ => {
            let p: Vec<f64> = alpha.iter().map(|a| (a + 0.1 * rng.random::<f64>() / n as f64).max(0.0)).collect();
            normalized(p, 1.0)
        }
    };
    (Signal::new(alpha).expect("nonneg"), Signal::new(f).expect("nonneg"), lambda)
}

/// Measurement/Hellinger and KL/ℓ1 checks plus the `‖Φx‖₁` bracket on
/// shifted candidates.
pub fn lemma_suites(cfg: &SuiteConfig) -> Result<[SuiteLine; 3]> {
    let graphs = rip_graphs(cfg.seed)?;
    let setups: Vec<_> = graphs
        .iter()
        .map(|c| Ok((SensingMatrix::new(c.graph.clone()), cover_set(&c.graph)?)))
        .collect::<Result<_>>()?;
    let results = par::map_range(cfg.lemma_trials, |t| -> Result<_> {
        let gi = t % setups.len();
        let (phi, cover) = &setups[gi];
        let mut rng = stream_rng(cfg.seed, derive_stream(&[5, t as u64]));
        let (alpha, f, lambda) = lemma_instance(&mut rng, phi.n());
        let x = shift_to_gamma(&f, lambda, cover)?;
        let l1r = lemma1_check(phi, &alpha, &x, lambda)?;
        let klr = lemma3_kl_bound(phi, &alpha, &x, lambda)?;
        let band = measurement_band(phi, &f, lambda, cover)?;
        let ctx = BoundContext { lambda: Some(lambda), m: Some(phi.m()), d: Some(phi.d()), ..Default::default() };
        let mut br = BoundReport::new("measurement_band", band.value, band.upper, ctx);
        br.pass &= band.pass;
        Ok((l1r, klr, br))
    });
    let mut l1t = Tally::new("lemma1_measurement_hellinger", CheckKind::Deterministic);
    let mut klt = Tally::new("lemma_kl_l1", CheckKind::Deterministic);
    let mut bt = Tally::new("measurement_band", CheckKind::Deterministic);
    for r in results {
        let (a, b, c) = r?;
        l1t.add(a);
        klt.add(b);
        bt.add(c);
    }
    Ok([l1t.finish(), klt.finish(), bt.finish()])
}

pub const HELLINGER_GRID: [f64; 10] = [0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 35.0, 50.0];

pub fn hellinger_suite() -> Result<SuiteLine> {
    let mut tally = Tally::new("hellinger_identity", CheckKind::Deterministic);
    for &g in &HELLINGER_GRID {
        for &h in &HELLINGER_GRID {
            tally.add(hellinger_identity_check(g, h, 1e-6)?);
        }
    }
    Ok(tally.finish())
}

pub fn kraft_suite() -> SuiteLine {
    let mut tally = Tally::new("support_code_kraft", CheckKind::Deterministic);
    for n in 1..=10 {
        for bits in 0..=3 {
            let ctx = BoundContext { n: Some(n), ..Default::default() };
            tally.add(BoundReport::new("support_code_kraft", support_code_kraft_sum(n, bits), 1.0, ctx));
        }
    }
    tally.finish()
}

/// An `n = 12, m = 8, d = 3` instance with eight unit-norm candidates.
/// Variant 0 puts a perturbed candidate in the truth and charges `ln 8`
/// per candidate; variant 1 uses an unrelated 2-sparse truth and the
/// support-code penalty.
pub struct McInstance {
    pub phi: SensingMatrix,
    pub alpha_star: Signal,
    pub set: CandidateSet,
    pub penalty: Penalty,
    pub k: usize,
}

impl McInstance {
    pub fn setup(&self) -> McSetup<'_> {
        McSetup { phi: &self.phi, alpha_star: &self.alpha_star, set: &self.set, penalty: &self.penalty }
    }
}

pub fn mc_instance(seed: u64, variant: usize) -> Result<McInstance> {
    let params = ExpanderParams::new(12, 8, 3, 0.25, 1)?;
    let (g, cover) = (0u64..)
        .find_map(|attempt| {
            let g = generate_graph(&params, derive_stream(&[seed, 7, variant as u64, attempt])).ok()?;
            let cover = cover_set(&g).ok()?;
            Some((g, cover))
        })
        .expect("some draw covers every row");
    let mut rng = stream_rng(seed, derive_stream(&[8, variant as u64]));
    let theta: Vec<Signal> = (0..8)
        .map(|_| Signal::new(normalized(random_nonneg(&mut rng, 12, 3), 1.0)).expect("nonneg"))
        .collect();
    let (alpha, penalty) = if variant.is_multiple_of(2) {
        let p: Vec<f64> = theta[0].iter().map(|v| v + 0.02 * rng.random::<f64>()).collect();
        (normalized(p, 1.0), Penalty::Uniform { value: 8f64.ln() })
    } else {
        (normalized(random_nonneg(&mut rng, 12, 2), 1.0), Penalty::SupportCode { bits: 2 })
    };
    Ok(McInstance {
        phi: SensingMatrix::new(g),
        alpha_star: Signal::new(alpha).expect("nonneg"),
        set: CandidateSet::new(theta, 0.01, cover)?,
        penalty,
        k: 2,
    })
}

pub fn monte_carlo_suites(cfg: &SuiteConfig) -> Result<[SuiteLine; 3]> {
    let mut oracle = Tally::new("lemma_oracle_inequality", CheckKind::MonteCarlo);
    let mut meas = Tally::new("lemma_measurement_error", CheckKind::MonteCarlo);
    let mut fin = Tally::new("final_theorem_signal_error", CheckKind::MonteCarlo);
    for s in 0..cfg.mc_seeds {
        for variant in 0..2 {
            let inst = mc_instance(cfg.seed, variant)?;
            let setup = inst.setup();
            let draw_seed = derive_stream(&[cfg.seed, 9, s as u64, variant as u64]);
            oracle.add(lemma2_oracle_mc(&setup, cfg.mc_draws, draw_seed)?);
            meas.add(lemma4_measurement_bound_mc(&setup, cfg.mc_draws, draw_seed)?);
            fin.add(final_theorem_mc(&setup, inst.k, cfg.mc_draws, draw_seed)?);
        }
    }
    Ok([oracle.finish(), meas.finish(), fin.finish()])
}

/// Every family, in a fixed order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<SuiteLine>> {
    let mut lines = Vec::new();
    lines.extend(rip_and_collision(cfg)?);
    lines.push(theorem1_suite(cfg)?);
    lines.push(hellinger_suite()?);
    lines.extend(lemma_suites(cfg)?);
    lines.extend(monte_carlo_suites(cfg)?);
    lines.push(kraft_suite());
    Ok(lines)
}
