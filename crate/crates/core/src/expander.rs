//! Left-regular bipartite expander graphs.
//!
//! A graph has `n` left (variable) nodes, `m` right (check) nodes and every
//! left node has exactly `d` distinct right neighbors. It is a
//! `(k, ε)`-expander when every left subset `S` with `|S| ≤ k` has
//! `|N(S)| > (1 − ε)·d·|S|` right neighbors.
//!
//! Text format (`.exg`): the first line is `n m d`, followed by one line per
//! left node holding its `d` sorted neighbor indices.

use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::par;
use crate::rng::{derive_stream, stream_rng};

/// Absolute tolerance used by the bound checks in this module.
pub const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpanderParams {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub epsilon: f64,
    pub k: usize,
}

impl ExpanderParams {
    pub fn new(n: usize, m: usize, d: usize, epsilon: f64, k: usize) -> Result<Self> {
        let p = Self { n, m, d, epsilon, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.d == 0 || self.d > self.m {
            return bad(format!("need 1 <= d <= m, got d={} m={}", self.d, self.m));
        }
        if self.m >= self.n {
            return bad(format!("need m < n, got m={} n={}", self.m, self.n));
        }
        if self.k == 0 || 2 * self.k > self.n {
            return bad(format!("need 1 <= k <= n/2, got k={} n={}", self.k, self.n));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("need epsilon in (0, 1/2), got {}", self.epsilon));
        }
        Ok(())
    }
}

/// A `d`-left-regular bipartite graph in canonical (sorted-column) form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpanderGraph {
    n: usize,
    m: usize,
    d: usize,
    /// Row-major `n × d` neighbor table; each row sorted ascending.
    adj: Vec<usize>,
}

impl ExpanderGraph {
    /// Builds a graph from explicit neighbor lists, sorting each column.
    ///
    /// Every column must hold exactly `d` distinct indices below `m`.
    /// Duplicate columns across left nodes are allowed.
    pub fn from_columns(m: usize, d: usize, columns: Vec<Vec<usize>>) -> Result<Self> {
        if d == 0 || d > m {
            return Err(Error::InvalidParams(format!(
                "need 1 <= d <= m, got d={d} m={m}"
            )));
        }
        let n = columns.len();
        let mut adj = Vec::with_capacity(n * d);
        for (i, mut col) in columns.into_iter().enumerate() {
            if col.len() != d {
                return Err(Error::InvalidParams(format!(
                    "column {i} has {} entries, expected {d}",
                    col.len()
                )));
            }
            col.sort_unstable();
            if col.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParams(format!("column {i} repeats a neighbor")));
            }
            if let Some(&j) = col.last().filter(|&&j| j >= m) {
                return Err(Error::InvalidParams(format!(
                    "column {i} references right node {j} >= m={m}"
                )));
            }
            adj.extend_from_slice(&col);
        }
        Ok(Self { n, m, d, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sorted neighbors of left node `i`.
    pub fn column(&self, i: usize) -> &[usize] {
        &self.adj[i * self.d..(i + 1) * self.d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[usize]> {
        self.adj.chunks_exact(self.d)
    }

    /// Number of left neighbors of each right node.
    pub fn right_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.m];
        for &j in &self.adj {
            deg[j] += 1;
        }
        deg
    }

    /// Left neighbors of every right node, each list ascending.
    pub fn rows(&self) -> Vec<Vec<usize>> {
        let mut rows = vec![Vec::new(); self.m];
        for (i, col) in self.columns().enumerate() {
            for &j in col {
                rows[j].push(i);
            }
        }
        rows
    }

    /// `|N(S)|` for a set of distinct left nodes.
    pub fn neighborhood_size(&self, subset: &[usize]) -> usize {
        let mut seen = vec![false; self.m];
        let mut count = 0;
        for &i in subset {
            for &j in self.column(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                }
            }
        }
        count
    }

    /// Unnormalized product `A x` (0/1 adjacency).
    pub fn adjacency_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n, x.len())?;
        let mut out = vec![0.0; self.m];
        for (col, &xi) in self.columns().zip(x) {
            for &j in col {
                out[j] += xi;
            }
        }
        Ok(out)
    }

    pub fn read_exg(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn write_exg(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_string())?;
        Ok(())
    }
}

impl fmt::Display for ExpanderGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {} {}", self.n, self.m, self.d)?;
        for col in self.columns() {
            let mut first = true;
            for j in col {
                if !first {
                    f.write_str(" ")?;
                }
                write!(f, "{j}")?;
                first = false;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl FromStr for ExpanderGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty graph file".into()))?;
        let nums = parse_usizes(header)?;
        let [n, m, d] = nums[..] else {
            return Err(Error::Parse(format!("bad header {header:?}, expected `n m d`")));
        };
        let mut columns = Vec::with_capacity(n);
        for line in lines.by_ref().take(n) {
            columns.push(parse_usizes(line)?);
        }
        if columns.len() != n {
            return Err(Error::Parse(format!(
                "expected {n} column lines, found {}",
                columns.len()
            )));
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after the last column".into()));
        }
        Self::from_columns(m, d, columns).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn parse_usizes(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("not a nonnegative integer: {t:?}")))
        })
        .collect()
}

/// Samples a graph whose columns are independent uniform `d`-subsets of `[0, m)`.
pub fn generate_graph(params: &ExpanderParams, seed: u64) -> Result<ExpanderGraph> {
    params.validate()?;
    let mut rng = stream_rng(seed, derive_stream(&[0x67_7261_7068]));
    let columns = (0..params.n)
        .map(|_| sample(&mut rng, params.m, params.d).into_vec())
        .collect();
    ExpanderGraph::from_columns(params.m, params.d, columns)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerifyMode {
    Exact,
    Sampled,
}

impl FromStr for VerifyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "sampled" => Ok(Self::Sampled),
            _ => Err(Error::Parse(format!("unknown mode {s:?} (exact|sampled)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Witness {
    pub subset: Vec<usize>,
    pub neighbors: usize,
}

/// Outcome of an expansion check.
///
/// Only an exact-mode pass is a proof; `proof` is false for every other
/// outcome, including a sampled pass.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpansionCertificate {
    pub mode: VerifyMode,
    pub k: usize,
    pub epsilon: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub subsets_checked: u64,
    pub proof: bool,
}

impl ExpansionCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// `Σ_{s=1..k} C(n, s)`, saturating.
pub fn subsets_up_to(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for s in 1..=k.min(n) {
        binom = binom.saturating_mul((n - s + 1) as u128) / s as u128;
        total = total.saturating_add(binom);
    }
    total
}

fn expands(neighbors: usize, size: usize, d: usize, epsilon: f64) -> bool {
    neighbors as f64 > (1.0 - epsilon) * (d * size) as f64
}

/// Incremental neighborhood bookkeeping for subset enumeration.
struct Cover<'g> {
    g: &'g ExpanderGraph,
    hits: Vec<u32>,
    size: usize,
}

impl<'g> Cover<'g> {
    fn new(g: &'g ExpanderGraph) -> Self {
        Self { g, hits: vec![0; g.m], size: 0 }
    }

    fn push(&mut self, i: usize) {
        for &j in self.g.column(i) {
            if self.hits[j] == 0 {
                self.size += 1;
            }
            self.hits[j] += 1;
        }
    }

    fn pop(&mut self, i: usize) {
        for &j in self.g.column(i) {
            self.hits[j] -= 1;
            if self.hits[j] == 0 {
                self.size -= 1;
            }
        }
    }
}

/// Visits all `size`-subsets whose smallest element is `first`, in
/// lexicographic order. The visitor returns `false` to stop early.
fn visit_subsets_from<F>(g: &ExpanderGraph, first: usize, size: usize, visit: &mut F) -> bool
where
    F: FnMut(&[usize], usize) -> bool,
{
    fn rec<F>(
        cover: &mut Cover<'_>,
        subset: &mut Vec<usize>,
        start: usize,
        remaining: usize,
        visit: &mut F,
    ) -> bool
    where
        F: FnMut(&[usize], usize) -> bool,
    {
        if remaining == 0 {
            return visit(subset, cover.size);
        }
        let n = cover.g.n;
        for i in start..=(n - remaining) {
            cover.push(i);
            subset.push(i);
            let go_on = rec(cover, subset, i + 1, remaining - 1, visit);
            subset.pop();
            cover.pop(i);
            if !go_on {
                return false;
            }
        }
        true
    }

    if size == 0 || first + size > g.n {
        return true;
    }
    let mut cover = Cover::new(g);
    let mut subset = vec![first];
    cover.push(first);
    rec(&mut cover, &mut subset, first + 1, size - 1, visit)
}

/// Checks the expansion condition for every subset of size `1..=k`
/// (exact) or for `budget` uniform subsets per size (sampled).
///
/// Exact mode refuses to run when more than `budget` subsets would be
/// enumerated. The reported witness is the first failing subset in
/// (size, lexicographic) order for exact mode and in (size, sample) order for
/// sampled mode, independent of thread count.
pub fn verify_expansion(
    g: &ExpanderGraph,
    k: usize,
    epsilon: f64,
    mode: VerifyMode,
    budget: u64,
    seed: u64,
) -> Result<ExpansionCertificate> {
    if k == 0 || k > g.n {
        return Err(Error::InvalidParams(format!("need 1 <= k <= n, got k={k}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParams(format!("need epsilon in (0, 1), got {epsilon}")));
    }
    let (checked, witness) = match mode {
        VerifyMode::Exact => {
            let needed = subsets_up_to(g.n, k);
            if needed > budget as u128 {
                return Err(Error::EnumerationCap { needed, budget: budget as u128 });
            }
            exact_search(g, k, epsilon)
        }
        VerifyMode::Sampled => sampled_search(g, k, epsilon, budget, seed),
    };
    let verdict = if witness.is_some() { Verdict::Fail } else { Verdict::Pass };
    Ok(ExpansionCertificate {
        mode,
        k,
        epsilon,
        verdict,
        witness,
        subsets_checked: checked,
        proof: mode == VerifyMode::Exact && verdict == Verdict::Pass,
    })
}

fn exact_search(g: &ExpanderGraph, k: usize, epsilon: f64) -> (u64, Option<Witness>) {
    let mut checked = 0u64;
    for size in 1..=k {
        let per_first = par::map_range(g.n, |first| {
            let mut count = 0u64;
            let mut found = None;
            visit_subsets_from(g, first, size, &mut |s: &[usize], nb| {
                count += 1;
                if expands(nb, size, g.d, epsilon) {
                    true
                } else {
                    found = Some(Witness { subset: s.to_vec(), neighbors: nb });
                    false
                }
            });
            (count, found)
        });
        for (count, found) in per_first {
            checked += count;
            if found.is_some() {
                return (checked, found);
            }
        }
    }
    (checked, None)
}

const SAMPLE_CHUNK: u64 = 256;

fn sampled_search(
    g: &ExpanderGraph,
    k: usize,
    epsilon: f64,
    budget: u64,
    seed: u64,
) -> (u64, Option<Witness>) {
    let mut checked = 0u64;
    for size in 1..=k {
        let chunks = budget.div_ceil(SAMPLE_CHUNK) as usize;
        let per_chunk = par::map_range(chunks, |c| {
            let mut rng = stream_rng(seed, derive_stream(&[size as u64, c as u64]));
            let lo = c as u64 * SAMPLE_CHUNK;
            let hi = (lo + SAMPLE_CHUNK).min(budget);
            let mut count = 0u64;
            for _ in lo..hi {
                let mut s = sample(&mut rng, g.n, size).into_vec();
                s.sort_unstable();
                count += 1;
                let nb = g.neighborhood_size(&s);
                if !expands(nb, size, g.d, epsilon) {
                    return (count, Some(Witness { subset: s, neighbors: nb }));
                }
            }
            (count, None)
        });
        for (count, found) in per_chunk {
            checked += count;
            if found.is_some() {
                return (checked, found);
            }
        }
    }
    (checked, None)
}

/// Smallest slack the graph achieves over all subsets of size `1..=k`:
/// `max_S (1 − |N(S)| / (d|S|))`.
///
/// The graph is a `(k, ε)`-expander for every `ε` strictly above this value.
/// Subject to the same enumeration cap as exact verification.
pub fn tightest_epsilon(g: &ExpanderGraph, k: usize, budget: u64) -> Result<f64> {
    if k == 0 || k > g.n {
        return Err(Error::InvalidParams(format!("need 1 <= k <= n, got k={k}")));
    }
    let needed = subsets_up_to(g.n, k);
    if needed > budget as u128 {
        return Err(Error::EnumerationCap { needed, budget: budget as u128 });
    }
    let mut worst = 0.0f64;
    for size in 1..=k {
        let per_first = par::map_range(g.n, |first| {
            let mut min_nb = usize::MAX;
            visit_subsets_from(g, first, size, &mut |_: &[usize], nb| {
                min_nb = min_nb.min(nb);
                true
            });
            min_nb
        });
        if let Some(&nb) = per_first.iter().min().filter(|&&nb| nb != usize::MAX) {
            worst = worst.max(1.0 - nb as f64 / (g.d * size) as f64);
        }
    }
    Ok(worst)
}

/// A set `Λ` of left nodes whose neighborhood is every right node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverSet {
    n: usize,
    indices: Vec<usize>,
}

impl CoverSet {
    /// Validates that `indices` covers every right node of `g`.
    pub fn from_indices(g: &ExpanderGraph, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&i) = indices.iter().find(|&&i| i >= g.n) {
            return Err(Error::InvalidParams(format!("cover index {i} >= n")));
        }
        let mut covered = vec![false; g.m];
        for &i in &indices {
            for &j in g.column(i) {
                covered[j] = true;
            }
        }
        if let Some(j) = covered.iter().position(|&c| !c) {
            return Err(Error::Precondition(format!("right node {j} is not covered")));
        }
        Ok(Self { n: g.n, indices })
    }

    /// Sorted member indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// The 0/1 indicator vector `I_Λ`.
    pub fn indicator(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.n];
        for &i in &self.indices {
            v[i] = 1.0;
        }
        v
    }
}

/// Greedy set cover: repeatedly take the left node covering the most
/// uncovered right nodes, lowest index first on ties.
pub fn cover_set(g: &ExpanderGraph) -> Result<CoverSet> {
    if let Some(node) = g.right_degrees().iter().position(|&deg| deg == 0) {
        return Err(Error::Uncoverable { node });
    }
    let mut covered = vec![false; g.m];
    let mut remaining = g.m;
    // Lazy max-heap of (stale gain, lowest index first). Gains only shrink,
    // so a popped entry whose recomputed gain is unchanged is a true maximum.
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> =
        (0..g.n).map(|i| (g.d, Reverse(i))).collect();
    let mut picked = Vec::new();
    while remaining > 0 {
        let (stale, Reverse(i)) = heap.pop().expect("cover exists when no right node is isolated");
        let gain = g.column(i).iter().filter(|&&j| !covered[j]).count();
        if gain == 0 {
            continue;
        }
        if gain < stale {
            heap.push((gain, Reverse(i)));
            continue;
        }
        for &j in g.column(i) {
            if !covered[j] {
                covered[j] = true;
                remaining -= 1;
            }
        }
        picked.push(i);
    }
    picked.sort_unstable();
    Ok(CoverSet { n: g.n, indices: picked })
}

/// Collision edges of a signal ordered by non-increasing magnitude.
///
/// With left nodes visited in `permutation` order, an edge `(i, j)` is a
/// collision edge when an earlier node already reached right node `j`.
/// `prefix_counts[p]` is the number of collision edges among the first
/// `p + 1` nodes of the ordering.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionAnalysis {
    pub permutation: Vec<usize>,
    /// `(left, right)` pairs.
    pub collision_edges: Vec<(usize, usize)>,
    pub prefix_counts: Vec<usize>,
    /// `Σ_{(i,j) ∈ E₂} |x_i|`.
    pub collision_weight: f64,
}

impl CollisionAnalysis {
    /// `a_{k'} ≤ ε·d·k'` for every `k' ≤ k`.
    pub fn prefix_bound_holds(&self, k: usize, epsilon: f64, d: usize) -> bool {
        self.prefix_counts
            .iter()
            .take(k)
            .enumerate()
            .all(|(p, &a)| a as f64 <= epsilon * (d * (p + 1)) as f64 + BOUND_TOL)
    }
}

pub fn collision_analysis(g: &ExpanderGraph, x: &[f64]) -> Result<CollisionAnalysis> {
    check_len(g.n, x.len())?;
    let mut permutation: Vec<usize> = (0..g.n).collect();
    // Stable sort keeps ascending index order among equal magnitudes.
    permutation.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()));

    let mut touched = vec![false; g.m];
    let mut collision_edges = Vec::new();
    let mut prefix_counts = Vec::with_capacity(g.n);
    let mut collision_weight = 0.0;
    for &i in &permutation {
        for &j in g.column(i) {
            if touched[j] {
                collision_edges.push((i, j));
                collision_weight += x[i].abs();
            }
        }
        for &j in g.column(i) {
            touched[j] = true;
        }
        prefix_counts.push(collision_edges.len());
    }
    Ok(CollisionAnalysis { permutation, collision_edges, prefix_counts, collision_weight })
}

/// The three terms of `(1−2ε)d‖x‖₁ ≤ ‖Ax‖₁ ≤ d‖x‖₁`.
///
/// `lower` is `None` when `x` is not `k`-sparse; the upper bound holds for
/// every signal and is always reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rip1Report {
    pub lower: Option<f64>,
    pub mid: f64,
    pub upper: f64,
    pub k_sparse: bool,
    pub pass: bool,
}

pub fn rip1_check(g: &ExpanderGraph, x: &[f64], k: usize, epsilon: f64) -> Result<Rip1Report> {
    let ax = g.adjacency_apply(x)?;
    let x_l1: f64 = x.iter().map(|v| v.abs()).sum();
    let mid: f64 = ax.iter().map(|v| v.abs()).sum();
    let d = g.d as f64;
    let upper = d * x_l1;
    let k_sparse = x.iter().filter(|&&v| v != 0.0).count() <= k;
    let lower = k_sparse.then_some((1.0 - 2.0 * epsilon) * d * x_l1);
    let pass = mid <= upper + BOUND_TOL && lower.is_none_or(|lo| lo <= mid + BOUND_TOL);
    Ok(Rip1Report { lower, mid, upper, k_sparse, pass })
}
