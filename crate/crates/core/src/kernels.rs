//! Harmonic numbers, split distributions, and descent kernels shared by the
//! rest of the crate.
//!
//! Conventions: `h_0 = 0`, so `Exp(h_1) = Exp(1)` and partial sums like
//! `s(n, n-1) = 1` hold without special cases. Exact rational values are kept
//! alongside floats up to a configurable cap so float drift in the O(n^2)
//! recursions can be bounded against an exact reference.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::numeric::{kahan_sum, KahanSum};

/// Precomputed harmonic numbers `h_0..h_max_n` with `h_n = sum_{j<=n} 1/j`.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct HarmonicTable {
    values: Vec<f64>,
    exact: Vec<BigRational>,
}

impl HarmonicTable {
    /// Builds the table. `exact_cap` bounds how far the rational column is
    /// carried (`exact_cap <= max_n`).
    pub fn new(max_n: usize, exact_cap: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(invalid("harmonic table requires max_n >= 1"));
        }
        if exact_cap > max_n {
            return Err(invalid(format!(
                "exact_cap {exact_cap} exceeds max_n {max_n}"
            )));
        }
        let mut values = Vec::with_capacity(max_n + 1);
        values.push(0.0);
        for n in 1..=max_n {
            let prev = values[n - 1];
            values.push(prev + 1.0 / n as f64);
        }
        let mut exact = Vec::with_capacity(exact_cap + 1);
        exact.push(BigRational::zero());
        for n in 1..=exact_cap {
            let prev = exact[n - 1].clone();
            exact.push(prev + BigRational::new(BigInt::one(), BigInt::from(n)));
        }
        Ok(Self { values, exact })
    }

    pub fn max_n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn exact_cap(&self) -> usize {
        self.exact.len() - 1
    }

    /// `h_n` as a float. Panics if `n > max_n`.
    #[inline]
    pub fn h(&self, n: usize) -> f64 {
        self.values[n]
    }

    /// `h_n` as an exact rational. Panics if `n > exact_cap`.
    pub fn h_exact(&self, n: usize) -> &BigRational {
        &self.exact[n]
    }

    pub fn checked_h(&self, n: usize) -> Result<f64> {
        self.values
            .get(n)
            .copied()
            .ok_or_else(|| invalid(format!("h_{n} not tabulated (max_n = {})", self.max_n())))
    }
}

/// Which split law `q_m` to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SplitKind {
    /// The critical law `q_m(i) = m / (2 h_{m-1} i (m-i))`.
    Critical,
    /// `q_m(i)` proportional to `(i(m-i))^beta`.
    Beta(f64),
}

/// A split distribution `q_m(1..m-1)` with its CDF cached for inverse-CDF
/// sampling. The CDF path doubles as the test oracle for the closed-form
/// sampler used by the simulator.
#[derive(Debug, Clone)]
pub struct SplitDistribution {
    m: usize,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl SplitDistribution {
    pub fn new(m: usize, kind: SplitKind, table: &HarmonicTable) -> Result<Self> {
        if m < 2 {
            return Err(invalid(format!("split distribution requires m >= 2, got {m}")));
        }
        let probs: Vec<f64> = match kind {
            SplitKind::Critical => {
                let scale = m as f64 / (2.0 * table.checked_h(m - 1)?);
                (1..m)
                    .map(|i| scale / (i as f64 * (m - i) as f64))
                    .collect()
            }
            SplitKind::Beta(beta) => {
                let weights: Vec<f64> =
                    (1..m).map(|i| (i as f64 * (m - i) as f64).powf(beta)).collect();
                let total = kahan_sum(weights.iter().copied());
                weights.iter().map(|w| w / total).collect()
            }
        };
        let mut cdf = Vec::with_capacity(m - 1);
        let mut acc = KahanSum::new();
        for &p in &probs {
            acc.add(p);
            cdf.push(acc.value());
        }
        // pin the last entry so inverse-CDF search cannot fall off the end
        *cdf.last_mut().expect("m >= 2") = 1.0;
        Ok(Self { m, probs, cdf })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// `q_m(i)` for `1 <= i <= m-1`.
    pub fn prob(&self, i: usize) -> Result<f64> {
        if i == 0 || i >= self.m {
            return Err(invalid(format!("split index {i} outside 1..{}", self.m - 1)));
        }
        Ok(self.probs[i - 1])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total(&self) -> f64 {
        kahan_sum(self.probs.iter().copied())
    }

    /// Inverse-CDF sample: smallest `i` with `F(i) >= u`.
    pub fn sample(&self, u: f64) -> usize {
        match self.cdf.partition_point(|&c| c < u) {
            idx if idx >= self.cdf.len() => self.m - 1,
            idx => idx + 1,
        }
    }

    /// Exact rationals `q_m(1..m-1)` for the critical law.
    pub fn exact_critical(m: usize, table: &HarmonicTable) -> Result<Vec<BigRational>> {
        if m < 2 {
            return Err(invalid("m >= 2 required"));
        }
        if m - 1 > table.exact_cap() {
            return Err(invalid(format!(
                "exact h_{} not tabulated (cap {})",
                m - 1,
                table.exact_cap()
            )));
        }
        let scale = BigRational::from(BigInt::from(m))
            / (BigRational::from(BigInt::from(2)) * table.h_exact(m - 1));
        Ok((1..m)
            .map(|i| &scale / BigRational::from(BigInt::from(i * (m - i))))
            .collect())
    }
}

/// One-step descent laws `p(n, i)` on `1 <= i <= n-1`.
#[derive(Debug, Clone)]
pub enum DescentKernel {
    /// `p(n,i) = 1 / (h_{n-1} (n-i))`, the harmonic descent chain.
    Harmonic,
    /// Size-biased beta-splitting descent: `p(n,i)` proportional to
    /// `i (i(n-i))^beta`. At `beta = -1` this reduces exactly to the
    /// harmonic kernel. Only `beta < 0` is admitted.
    Beta(f64),
    /// Explicit rows; `rows[n]` holds `p(n, 1..n-1)`.
    Custom(Vec<Vec<f64>>),
}

impl DescentKernel {
    pub fn beta(beta: f64) -> Result<Self> {
        if !(beta < 0.0) {
            return Err(domain(format!(
                "descent kernels require beta < 0, got {beta}"
            )));
        }
        Ok(Self::Beta(beta))
    }

    pub fn describe(&self) -> String {
        match self {
            Self::Harmonic => "harmonic".to_string(),
            Self::Beta(b) => format!("beta({b})"),
            Self::Custom(_) => "custom-table".to_string(),
        }
    }

    /// Single probability `p(n, i)`. For the beta kernel this normalizes the
    /// whole row, so prefer [`DescentKernel::row`] in loops.
    pub fn p(&self, table: &HarmonicTable, n: usize, i: usize) -> Result<f64> {
        if n < 2 {
            return Err(invalid(format!("p(n, i) requires n >= 2, got n = {n}")));
        }
        if i == 0 || i >= n {
            return Err(invalid(format!("index i = {i} outside 1..={}", n - 1)));
        }
        match self {
            Self::Harmonic => Ok(1.0 / (table.checked_h(n - 1)? * (n - i) as f64)),
            Self::Beta(_) => Ok(self.row(table, n)?[i - 1]),
            Self::Custom(rows) => rows
                .get(n)
                .and_then(|r| r.get(i - 1))
                .copied()
                .ok_or_else(|| invalid(format!("custom kernel has no entry p({n}, {i})"))),
        }
    }

    /// Full row `p(n, 1..n-1)`.
    pub fn row(&self, table: &HarmonicTable, n: usize) -> Result<Vec<f64>> {
        if n < 2 {
            return Err(invalid(format!("row requires n >= 2, got {n}")));
        }
        match self {
            Self::Harmonic => {
                let h = table.checked_h(n - 1)?;
                Ok((1..n).map(|i| 1.0 / (h * (n - i) as f64)).collect())
            }
            Self::Beta(beta) => {
                let weights: Vec<f64> = (1..n)
                    .map(|i| i as f64 * (i as f64 * (n - i) as f64).powf(*beta))
                    .collect();
                let total = kahan_sum(weights.iter().copied());
                Ok(weights.iter().map(|w| w / total).collect())
            }
            Self::Custom(rows) => rows
                .get(n)
                .filter(|r| r.len() == n - 1)
                .cloned()
                .ok_or_else(|| invalid(format!("custom kernel has no row for n = {n}"))),
        }
    }

    /// Exact `p(n, i)` where available (harmonic kernel only).
    pub fn p_exact(&self, table: &HarmonicTable, n: usize, i: usize) -> Result<BigRational> {
        match self {
            Self::Harmonic => {
                if n < 2 || i == 0 || i >= n {
                    return Err(invalid(format!("p({n}, {i}) out of range")));
                }
                if n - 1 > table.exact_cap() {
                    return Err(invalid(format!(
                        "exact h_{} not tabulated (cap {})",
                        n - 1,
                        table.exact_cap()
                    )));
                }
                let denom = table.h_exact(n - 1) * BigRational::from(BigInt::from(n - i));
                Ok(denom.recip())
            }
            _ => Err(Error::InvalidArgument(
                "exact evaluation is only available for the harmonic kernel".into(),
            )),
        }
    }
}

/// Outcome of checking the monotone-ratio condition
/// `p(n,i)/p(n+1,i)` nondecreasing in `i` for every `2 <= n < n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct RatioConditionReport {
    pub n_max: usize,
    pub pass: bool,
    /// Whether the ratio was strictly increasing everywhere (a constant
    /// kernel passes the condition without being strict).
    pub strictly_increasing: bool,
    pub first_violation: Option<RatioViolation>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioViolation {
    pub n: usize,
    pub i: usize,
    pub ratio_at_i: f64,
    pub ratio_at_next: f64,
}

const RATIO_REL_SLACK: f64 = 1e-12;

/// Verifies the hypothesis of the general monotonicity result on a kernel.
pub fn ratio_condition_check(
    kernel: &DescentKernel,
    table: &HarmonicTable,
    n_max: usize,
) -> Result<RatioConditionReport> {
    if n_max < 3 {
        return Err(invalid("ratio condition check requires n_max >= 3"));
    }
    let mut strictly = true;
    let mut prev_row = kernel.row(table, 2)?;
    for n in 2..n_max {
        let next_row = kernel.row(table, n + 1)?;
        let mut prev_ratio = f64::NEG_INFINITY;
        for i in 1..n {
            let ratio = prev_row[i - 1] / next_row[i - 1];
            if i > 1 {
                if ratio < prev_ratio * (1.0 - RATIO_REL_SLACK) {
                    return Ok(RatioConditionReport {
                        n_max,
                        pass: false,
                        strictly_increasing: false,
                        first_violation: Some(RatioViolation {
                            n,
                            i,
                            ratio_at_i: prev_ratio,
                            ratio_at_next: ratio,
                        }),
                    });
                }
                if ratio <= prev_ratio * (1.0 + RATIO_REL_SLACK) {
                    strictly = false;
                }
            }
            prev_ratio = ratio;
        }
        prev_row = next_row;
    }
    Ok(RatioConditionReport {
        n_max,
        pass: true,
        strictly_increasing: strictly,
        first_violation: None,
    })
}
