//! Seeded Monte Carlo simulation of the discrete splitting tree, the total
//! length of its continuous-time version, and the descent chain itself.
//!
//! Reproducibility contract: replica `r` of a batch draws from a ChaCha8
//! stream derived from `(base_seed, r)` alone, so batches are bit-identical
//! across reruns and independent of scheduling. Trees are expanded with an
//! explicit work stack (left child first); only subtrees at or below the
//! shape cap use call-stack recursion, and that depth is capped at
//! [`MAX_SHAPE_CAP`].

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, resource, Error, Result};
use crate::kernels::{HarmonicTable, SplitDistribution, SplitKind};

/// Largest clade size tracked by shape (shape counts explode combinatorially).
pub const MAX_SHAPE_CAP: usize = 12;

/// Largest tree size admitted for beta-split simulation; the sampler caches
/// one CDF row per clade size, which is O(n^2) memory.
pub const BETA_SIM_N_MAX: usize = 4096;

/// Product guard for batch runs; override with `allow_large`.
pub const BATCH_WORK_GUARD: u128 = 1_000_000_000;

/// Identifies the RNG procedure so acceptance runs can pin it.
pub const GENERATOR_ID: &str = "chacha8/seed_from_u64/stream=replica/v1";

/// How two children of a split are ordered inside a canonical shape key.
///
/// `Unordered` (the default) sorts the child keys, matching the phylogenetic
/// convention that a clade is a set; `Ordered` keeps the left/right order of
/// the interval construction. Both satisfy the same distributional recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub enum ShapeMode {
    #[default]
    Unordered,
    Ordered,
}

/// Canonical encoding of a rooted binary tree shape: `.` is a leaf and
/// `(AB)` is an internal vertex with child keys `A` and `B`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct CladeKey(String);

impl CladeKey {
    pub fn leaf() -> Self {
        CladeKey(".".to_string())
    }

    /// The unique shape with two leaves.
    pub fn cherry() -> Self {
        CladeKey("(..)".to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Leaf count of the encoded shape.
    pub fn size(&self) -> usize {
        self.0.bytes().filter(|&b| b == b'.').count()
    }

    /// Joins two child keys under the given ordering convention.
    pub fn join(mode: ShapeMode, left: &CladeKey, right: &CladeKey) -> CladeKey {
        CladeKey(join_keys(mode, &left.0, &right.0))
    }

    /// Re-encodes the key in canonical form for `mode`. A round trip through
    /// decode/encode, so any valid key of either convention normalizes.
    pub fn canonicalize(&self, mode: ShapeMode) -> Result<CladeKey> {
        let (key, rest) = canonicalize_bytes(self.0.as_bytes(), mode)?;
        if !rest.is_empty() {
            return Err(invalid(format!("trailing characters in shape key {:?}", self.0)));
        }
        Ok(CladeKey(key))
    }
}

fn join_keys(mode: ShapeMode, left: &str, right: &str) -> String {
    let (a, b) = match mode {
        ShapeMode::Ordered => (left, right),
        ShapeMode::Unordered => {
            if left <= right {
                (left, right)
            } else {
                (right, left)
            }
        }
    };
    let mut s = String::with_capacity(a.len() + b.len() + 2);
    s.push('(');
    s.push_str(a);
    s.push_str(b);
    s.push(')');
    s
}

/// Recursive-descent parse + canonical re-encode; returns the canonical key
/// and the unconsumed suffix.
fn canonicalize_bytes(bytes: &[u8], mode: ShapeMode) -> Result<(String, &[u8])> {
    match bytes.first() {
        Some(b'.') => Ok((".".to_string(), &bytes[1..])),
        Some(b'(') => {
            let (left, rest) = canonicalize_bytes(&bytes[1..], mode)?;
            let (right, rest) = canonicalize_bytes(rest, mode)?;
            match rest.first() {
                Some(b')') => Ok((join_keys(mode, &left, &right), &rest[1..])),
                _ => Err(invalid("unbalanced shape key: expected ')'")),
            }
        }
        _ => Err(invalid("malformed shape key: expected '.' or '('")),
    }
}

impl fmt::Display for CladeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CladeKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() > 4 * MAX_SHAPE_CAP {
            return Err(invalid(format!(
                "shape key longer than the {MAX_SHAPE_CAP}-leaf cap allows"
            )));
        }
        let candidate = CladeKey(s.to_string());
        // validates structure; keeps the caller's ordering
        candidate.canonicalize(ShapeMode::Ordered)?;
        Ok(candidate)
    }
}

/// Split sampler shared by all replicas of a batch.
pub enum SplitSampler<'a> {
    /// Critical splits sampled through the closed-form CDF
    /// `F_m(i) = (h_i + h_{m-1} - h_{m-i-1}) / (2 h_{m-1})`, so no per-size
    /// arrays are needed. The cached-CDF [`SplitDistribution`] path is the
    /// oracle for this in tests.
    Critical(&'a HarmonicTable),
    /// General beta splits with one cached CDF row per clade size.
    Beta { rows: Vec<SplitDistribution> },
}

impl<'a> SplitSampler<'a> {
    pub fn new(table: &'a HarmonicTable, kind: SplitKind, n_max: usize) -> Result<Self> {
        match kind {
            SplitKind::Critical => {
                if n_max >= 2 {
                    table.checked_h(n_max - 1)?;
                }
                Ok(SplitSampler::Critical(table))
            }
            SplitKind::Beta(_) => {
                if n_max > BETA_SIM_N_MAX {
                    return Err(resource(format!(
                        "beta-split simulation caches per-size CDFs; n = {n_max} exceeds \
                         the cap {BETA_SIM_N_MAX}"
                    )));
                }
                let rows = (2..=n_max.max(2))
                    .map(|m| SplitDistribution::new(m, kind, table))
                    .collect::<Result<Vec<_>>>()?;
                Ok(SplitSampler::Beta { rows })
            }
        }
    }

    /// Draws a left-subtree size `L` in `1..=m-1` from `q_m`.
    pub fn sample<R: Rng>(&self, m: usize, rng: &mut R) -> usize {
        debug_assert!(m >= 2);
        if m == 2 {
            // still consume one uniform so the stream layout is size-independent
            let _ = rng.random::<f64>();
            return 1;
        }
        let u: f64 = rng.random();
        match self {
            SplitSampler::Critical(table) => {
                let target = 2.0 * u * table.h(m - 1);
                let (mut lo, mut hi) = (1usize, m - 1);
                while lo < hi {
                    let mid = lo + (hi - lo) / 2;
                    let cdf_scaled = table.h(mid) + table.h(m - 1) - table.h(m - mid - 1);
                    if cdf_scaled >= target {
                        hi = mid;
                    } else {
                        lo = mid + 1;
                    }
                }
                lo
            }
            SplitSampler::Beta { rows } => rows[m - 2].sample(u),
        }
    }
}

/// Per-tree clade tallies.
#[derive(Debug, Clone)]
pub struct DtcsCounts {
    /// `counts_by_size[k]` = number of clades of size `k`; index 0 unused.
    pub counts_by_size: Vec<u64>,
    /// Shape tallies for clades of size `<= shape_cap`.
    pub counts_by_shape: HashMap<CladeKey, u64>,
}

impl DtcsCounts {
    pub fn count_of_size(&self, k: usize) -> u64 {
        self.counts_by_size.get(k).copied().unwrap_or(0)
    }

    pub fn count_of_shape(&self, key: &CladeKey) -> u64 {
        self.counts_by_shape.get(key).copied().unwrap_or(0)
    }
}

/// Simulates one discrete tree, recording every clade (the root and the
/// leaves included).
pub fn simulate_dtcs<R: Rng>(
    n: usize,
    rng: &mut R,
    shape_cap: usize,
    mode: ShapeMode,
    sampler: &SplitSampler<'_>,
) -> Result<DtcsCounts> {
    if n == 0 {
        return Err(invalid("tree size must be >= 1"));
    }
    if shape_cap > MAX_SHAPE_CAP {
        return Err(invalid(format!("shape_cap {shape_cap} exceeds {MAX_SHAPE_CAP}")));
    }
    let mut counts = DtcsCounts {
        counts_by_size: vec![0; n + 1],
        counts_by_shape: HashMap::new(),
    };
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        if m <= shape_cap {
            build_small_subtree(m, rng, mode, sampler, &mut counts);
        } else {
            counts.counts_by_size[m] += 1;
            if m >= 2 {
                let left = sampler.sample(m, rng);
                stack.push(m - left);
                stack.push(left);
            }
        }
    }
    Ok(counts)
}

/// Fully expands a clade of size `m <= MAX_SHAPE_CAP`, tallying both sizes
/// and shapes of everything inside it. Returns the canonical key.
fn build_small_subtree<R: Rng>(
    m: usize,
    rng: &mut R,
    mode: ShapeMode,
    sampler: &SplitSampler<'_>,
    counts: &mut DtcsCounts,
) -> String {
    counts.counts_by_size[m] += 1;
    let key = if m == 1 {
        ".".to_string()
    } else {
        let left = sampler.sample(m, rng);
        let kl = build_small_subtree(left, rng, mode, sampler, counts);
        let kr = build_small_subtree(m - left, rng, mode, sampler, counts);
        join_keys(mode, &kl, &kr)
    };
    *counts
        .counts_by_shape
        .entry(CladeKey(key.clone()))
        .or_insert(0) += 1;
    key
}

/// Simulates the total length of the continuous-time tree: every clade of
/// size `m >= 2` (root included) contributes an independent `Exp(h_{m-1})`
/// edge duration, sampled by inverse transform.
pub fn simulate_lambda<R: Rng>(
    n: usize,
    rng: &mut R,
    table: &HarmonicTable,
    sampler: &SplitSampler<'_>,
) -> Result<f64> {
    if n < 2 {
        return Err(invalid("total length requires n >= 2"));
    }
    let mut total = 0.0f64;
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        if m < 2 {
            continue;
        }
        let u: f64 = rng.random();
        total += -(1.0 - u).ln() / table.h(m - 1);
        let left = sampler.sample(m, rng);
        stack.push(m - left);
        stack.push(left);
    }
    Ok(total)
}

/// Runs the harmonic descent chain from `n` down to absorption at 1 and
/// returns the full trajectory `n = s_0 > s_1 > ... > 1`.
pub fn simulate_descent<R: Rng>(
    table: &HarmonicTable,
    n: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(invalid("descent chain starts at n >= 1"));
    }
    table.checked_h(n.saturating_sub(1))?;
    let mut trajectory = vec![n];
    let mut m = n;
    while m > 1 {
        // jump distance j has P(j) = 1/(h_{m-1} j): inverse CDF on h_j
        let u: f64 = rng.random();
        let target = u * table.h(m - 1);
        let (mut lo, mut hi) = (1usize, m - 1);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if table.h(mid) >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        m -= lo;
        trajectory.push(m);
    }
    Ok(trajectory)
}

/// What a batch measures on each replica tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum Statistic {
    /// Number of clades of the given size.
    Count(usize),
    /// Number of clades with the given shape.
    Shape(CladeKey),
    /// Total length of the continuous-time tree.
    Length,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Count(k) => write!(f, "count:{k}"),
            Statistic::Shape(key) => write!(f, "shape:{key}"),
            Statistic::Length => write!(f, "length"),
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "length" {
            return Ok(Statistic::Length);
        }
        if let Some(k) = s.strip_prefix("count:") {
            let k: usize = k
                .parse()
                .map_err(|_| invalid(format!("bad clade size in statistic {s:?}")))?;
            if k == 0 {
                return Err(invalid("count statistic needs a clade size >= 1"));
            }
            return Ok(Statistic::Count(k));
        }
        if let Some(key) = s.strip_prefix("shape:") {
            return Ok(Statistic::Shape(key.parse()?));
        }
        Err(invalid(format!(
            "unknown statistic {s:?}; expected count:<k>, shape:<key>, or length"
        )))
    }
}

/// Batch configuration.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    pub n: usize,
    pub statistic: Statistic,
    pub replicas: usize,
    pub base_seed: u64,
    pub split: SplitKind,
    pub shape_mode: ShapeMode,
    /// Lifts the `replicas * n` work guard.
    pub allow_large: bool,
}

impl SimConfig {
    pub fn new(n: usize, statistic: Statistic, replicas: usize, base_seed: u64) -> Self {
        Self {
            n,
            statistic,
            replicas,
            base_seed,
            split: SplitKind::Critical,
            shape_mode: ShapeMode::Unordered,
            allow_large: false,
        }
    }
}

/// A completed replica set. Rerunning with the same configuration (and the
/// same `generator_id`) reproduces `samples` bit-identically.
#[derive(Debug, Clone, Serialize)]
pub struct SimBatch {
    pub n: usize,
    pub statistic: Statistic,
    pub replicas: usize,
    pub base_seed: u64,
    pub split: SplitKind,
    pub shape_mode: ShapeMode,
    pub generator_id: String,
    pub samples: Vec<f64>,
}

fn replica_rng(base_seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(replica as u64);
    rng
}

/// Runs `replicas` independent simulations in parallel. Results are collected
/// in replica-index order regardless of scheduling.
pub fn run_batch(table: &HarmonicTable, cfg: &SimConfig) -> Result<SimBatch> {
    if cfg.replicas == 0 {
        return Err(invalid("at least one replica required"));
    }
    if cfg.n == 0 {
        return Err(invalid("tree size must be >= 1"));
    }
    let work = cfg.replicas as u128 * cfg.n as u128;
    if work > BATCH_WORK_GUARD && !cfg.allow_large {
        return Err(resource(format!(
            "replicas * n = {work} exceeds {BATCH_WORK_GUARD}; set allow_large to override"
        )));
    }
    // canonicalize the target shape once so replica tallies can match it
    let statistic = match &cfg.statistic {
        Statistic::Shape(key) => {
            let canonical = key.canonicalize(cfg.shape_mode)?;
            if canonical.size() > MAX_SHAPE_CAP {
                return Err(invalid(format!(
                    "shape has {} leaves; the cap is {MAX_SHAPE_CAP}",
                    canonical.size()
                )));
            }
            Statistic::Shape(canonical)
        }
        other => other.clone(),
    };
    if matches!(statistic, Statistic::Length) {
        if cfg.n < 2 {
            return Err(invalid("length statistic requires n >= 2"));
        }
        if !matches!(cfg.split, SplitKind::Critical) {
            return Err(invalid(
                "length is a statistic of the critical continuous-time model; \
                 beta splits are not supported here",
            ));
        }
    }
    let sampler = SplitSampler::new(table, cfg.split, cfg.n)?;
    let samples: Vec<f64> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(cfg.base_seed, r);
            replica_value(cfg.n, &statistic, cfg.shape_mode, table, &sampler, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(SimBatch {
        n: cfg.n,
        statistic,
        replicas: cfg.replicas,
        base_seed: cfg.base_seed,
        split: cfg.split,
        shape_mode: cfg.shape_mode,
        generator_id: GENERATOR_ID.to_string(),
        samples,
    })
}

fn replica_value<R: Rng>(
    n: usize,
    statistic: &Statistic,
    mode: ShapeMode,
    table: &HarmonicTable,
    sampler: &SplitSampler<'_>,
    rng: &mut R,
) -> Result<f64> {
    match statistic {
        Statistic::Count(k) => {
            let counts = simulate_dtcs(n, rng, 0, mode, sampler)?;
            Ok(counts.count_of_size(*k) as f64)
        }
        Statistic::Shape(key) => {
            let counts = simulate_dtcs(n, rng, key.size(), mode, sampler)?;
            Ok(counts.count_of_shape(key) as f64)
        }
        Statistic::Length => simulate_lambda(n, rng, table, sampler),
    }
}

/// Exact probability of every shape of `size` leaves under the critical
/// split law, by dynamic programming over all split sequences.
pub fn shape_distribution_exact(
    table: &HarmonicTable,
    size: usize,
    mode: ShapeMode,
) -> Result<HashMap<CladeKey, BigRational>> {
    if size == 0 || size > MAX_SHAPE_CAP {
        return Err(invalid(format!("shape enumeration needs 1 <= size <= {MAX_SHAPE_CAP}")));
    }
    let mut levels: Vec<HashMap<CladeKey, BigRational>> = Vec::with_capacity(size + 1);
    levels.push(HashMap::new()); // size 0 unused
    let mut leaf = HashMap::new();
    leaf.insert(CladeKey::leaf(), BigRational::one());
    levels.push(leaf);
    for m in 2..=size {
        let q = SplitDistribution::exact_critical(m, table)?;
        let mut level: HashMap<CladeKey, BigRational> = HashMap::new();
        for i in 1..m {
            let qi = &q[i - 1];
            for (ka, pa) in &levels[i] {
                for (kb, pb) in &levels[m - i] {
                    let key = CladeKey::join(mode, ka, kb);
                    let contribution = qi * pa * pb;
                    level
                        .entry(key)
                        .and_modify(|p| *p += &contribution)
                        .or_insert(contribution);
                }
            }
        }
        levels.push(level);
    }
    Ok(levels.pop().expect("size >= 1"))
}

/// Exact `P(tree of |shape| leaves == shape)`; zero when unreachable.
pub fn shape_probability_exact(
    table: &HarmonicTable,
    key: &CladeKey,
    mode: ShapeMode,
) -> Result<BigRational> {
    let canonical = key.canonicalize(mode)?;
    let dist = shape_distribution_exact(table, canonical.size(), mode)?;
    Ok(dist.get(&canonical).cloned().unwrap_or_else(BigRational::zero))
}
