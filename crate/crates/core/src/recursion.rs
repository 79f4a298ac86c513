//! The core recursion `x_n = sum_i p(n,i) x_i`, its exact-rational twin,
//! occupation probabilities of the descent chain, closed-form limits, and the
//! long-term / short-term bound checks.

use std::f64::consts::PI;
use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{invalid, resource, Result};
use crate::exact::{lcm_table, ScaledRationalSeq};
use crate::kernels::{DescentKernel, HarmonicTable};
use crate::numeric::KahanSum;

/// Largest start index admitted by the exact evaluator. Denominators grow
/// quadratically in digits; 200 covers the oracle range.
pub const EXACT_N_MAX: usize = 200;

/// A computed trajectory `x_k .. x_n_max` for one kernel and seed.
/// Values for `n < k` are implicitly zero.
#[derive(Debug, Clone, Serialize)]
pub struct Sequence {
    pub kernel: String,
    pub k: usize,
    pub x_k: f64,
    /// `values[j] = x_{k+j}`.
    pub values: Vec<f64>,
    /// Closed-form limit, known for the harmonic kernel.
    pub limit: Option<f64>,
}

impl Sequence {
    pub fn n_max(&self) -> usize {
        self.k + self.values.len() - 1
    }

    /// `x_n`; zero below the start index.
    pub fn value(&self, n: usize) -> f64 {
        if n < self.k {
            0.0
        } else {
            self.values[n - self.k]
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }

    /// CSV rows `n, x_n[, x_n - x]`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        match self.limit {
            Some(limit) => {
                writeln!(out, "n,x_n,x_n_minus_x")?;
                for (j, &v) in self.values.iter().enumerate() {
                    writeln!(out, "{},{},{}", self.k + j, v, v - limit)?;
                }
            }
            None => {
                writeln!(out, "n,x_n")?;
                for (j, &v) in self.values.iter().enumerate() {
                    writeln!(out, "{},{}", self.k + j, v)?;
                }
            }
        }
        Ok(())
    }
}

fn check_seed(k: usize, x_k: f64, n_max: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid("start index k must be >= 1"));
    }
    if !(x_k > 0.0) {
        return Err(invalid(format!("seed x_k must be positive, got {x_k}")));
    }
    if n_max < k {
        return Err(invalid(format!("n_max = {n_max} is below k = {k}")));
    }
    Ok(())
}

/// Evaluates the recursion by direct O(n) summation per step (O(n_max^2)
/// total). Inner sums are compensated and always run in ascending i.
pub fn evaluate_sequence(
    kernel: &DescentKernel,
    table: &HarmonicTable,
    k: usize,
    x_k: f64,
    n_max: usize,
) -> Result<Sequence> {
    check_seed(k, x_k, n_max)?;
    if n_max > 1 && table.max_n() < n_max - 1 {
        return Err(invalid(format!(
            "harmonic table too small: need h_{} but max_n = {}",
            n_max - 1,
            table.max_n()
        )));
    }
    let mut values = vec![0.0f64; n_max + 1];
    values[k] = x_k;
    match kernel {
        DescentKernel::Harmonic => {
            for n in (k + 1)..=n_max {
                let mut acc = KahanSum::new();
                for i in k..n {
                    acc.add(values[i] / (n - i) as f64);
                }
                values[n] = acc.value() / table.h(n - 1);
            }
        }
        _ => {
            for n in (k + 1)..=n_max {
                let row = kernel.row(table, n)?;
                let mut acc = KahanSum::new();
                for i in k..n {
                    acc.add(row[i - 1] * values[i]);
                }
                values[n] = acc.value();
            }
        }
    }
    let limit = match kernel {
        DescentKernel::Harmonic => Some(limit_value(table, k, x_k)?),
        _ => None,
    };
    Ok(Sequence {
        kernel: kernel.describe(),
        k,
        x_k,
        values: values[k..].to_vec(),
        limit,
    })
}

/// Exact-rational evaluation for the harmonic kernel. All values share one
/// denominator, so the run is gcd-free; see [`crate::exact`].
pub fn evaluate_sequence_exact(
    table: &HarmonicTable,
    k: usize,
    x_k: &BigRational,
    n_max: usize,
) -> Result<ScaledRationalSeq> {
    if k == 0 {
        return Err(invalid("start index k must be >= 1"));
    }
    if x_k <= &BigRational::zero() {
        return Err(invalid("seed x_k must be positive"));
    }
    if n_max < k {
        return Err(invalid(format!("n_max = {n_max} is below k = {k}")));
    }
    if n_max > EXACT_N_MAX {
        return Err(resource(format!(
            "exact mode is capped at n_max = {EXACT_N_MAX} (got {n_max}); use float mode beyond"
        )));
    }
    if n_max > 1 && table.exact_cap() < n_max - 1 {
        return Err(invalid(format!(
            "harmonic table exact cap {} below n_max - 1 = {}",
            table.exact_cap(),
            n_max - 1
        )));
    }
    let lcms = lcm_table(n_max.saturating_sub(k));
    let mut seq = ScaledRationalSeq::new(k, x_k);
    for n in (k + 1)..=n_max {
        let h = table.h_exact(n - 1);
        let lcm = &lcms[n - k];
        // sum_i x_i/(n-i) over the shared denominator, scaled by lcm
        let mut sum = BigInt::zero();
        for i in k..n {
            sum += seq.numer(i) * (lcm / BigInt::from(n - i));
        }
        let next = h.denom() * sum;
        seq.rescale(&(h.numer() * lcm));
        seq.push_numer(next);
    }
    Ok(seq)
}

/// Closed-form limit of the harmonic-kernel sequence:
/// `x = x_k * 6 h_{k-1} / (pi^2 (k-1))` for `k >= 2`, and `x_1` for `k = 1`
/// (the sequence is constant there).
pub fn limit_value(table: &HarmonicTable, k: usize, x_k: f64) -> Result<f64> {
    if k == 0 {
        return Err(invalid("k must be >= 1"));
    }
    if !(x_k > 0.0) {
        return Err(invalid(format!("x_k must be positive, got {x_k}")));
    }
    if k == 1 {
        return Ok(x_k);
    }
    let h = table.checked_h(k - 1)?;
    Ok(x_k * 6.0 * h / (PI * PI * (k - 1) as f64))
}

/// Occupation probabilities `a(n, k)` of the harmonic descent chain started
/// at `n`, for all `1 <= k <= n`.
#[derive(Debug, Clone, Serialize)]
pub struct OccupationVector {
    pub n: usize,
    /// `a[j] = a(n, j+1)`.
    a: Vec<f64>,
    /// `|a(n,1) - 1|`; the chain is absorbed at 1, so this is a checksum on
    /// the whole backward pass.
    pub checksum_error: f64,
}

impl OccupationVector {
    /// `a(n, k)`.
    pub fn a(&self, k: usize) -> f64 {
        self.a[k - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "k,a_n_k")?;
        for (j, &v) in self.a.iter().enumerate() {
            writeln!(out, "{},{}", j + 1, v)?;
        }
        Ok(())
    }
}

/// One O(n^2) backward pass over the hitting decomposition
/// `u(m) = sum_{j>m} u(j) p(j, m)` with `u(n) = 1`.
pub fn occupation_vector(table: &HarmonicTable, n: usize) -> Result<OccupationVector> {
    if n < 2 {
        return Err(invalid("occupation vector requires n >= 2"));
    }
    if table.max_n() < n - 1 {
        return Err(invalid(format!(
            "harmonic table too small: need h_{} but max_n = {}",
            n - 1,
            table.max_n()
        )));
    }
    let mut u = vec![0.0f64; n + 1];
    u[n] = 1.0;
    for m in (1..n).rev() {
        let mut acc = KahanSum::new();
        for j in (m + 1)..=n {
            acc.add(u[j] / (table.h(j - 1) * (j - m) as f64));
        }
        u[m] = acc.value();
    }
    let checksum_error = (u[1] - 1.0).abs();
    Ok(OccupationVector {
        n,
        a: u[1..].to_vec(),
        checksum_error,
    })
}

/// Report for the long-term error bound `x_n - x = O(k x_k / (n - k))`.
#[derive(Debug, Clone, Serialize)]
pub struct LongTermReport {
    pub k: usize,
    pub n_max: usize,
    /// `sup_n (x_n - x)(n - k) / (k x_k)` over the computed range.
    pub sup_constant: f64,
    pub pass: bool,
}

/// Implied-constant threshold for [`verify_longterm_bound`]; numerical sweeps
/// put the true constant near 0.03, so 10 flags only genuine blow-ups.
pub const LONGTERM_CONSTANT_MAX: f64 = 10.0;

pub fn verify_longterm_bound(seq: &Sequence) -> Result<LongTermReport> {
    let limit = seq
        .limit
        .ok_or_else(|| invalid("long-term bound needs a sequence with a known limit"))?;
    let k = seq.k;
    let mut sup = 0.0f64;
    for n in (k + 1)..=seq.n_max() {
        let c = (seq.value(n) - limit) * (n - k) as f64 / (k as f64 * seq.x_k);
        if !c.is_finite() {
            return Ok(LongTermReport {
                k,
                n_max: seq.n_max(),
                sup_constant: f64::INFINITY,
                pass: false,
            });
        }
        sup = sup.max(c);
    }
    Ok(LongTermReport {
        k,
        n_max: seq.n_max(),
        sup_constant: sup,
        pass: sup <= LONGTERM_CONSTANT_MAX,
    })
}

/// Report for the short-term bound `x_{k+m} <= c^l x_k / (m h_k)` over
/// `m <= k^{d_l}` with `d_l = 1 - 1/(c+1) - 2^{-l}`.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapReport {
    pub k: usize,
    pub c: u32,
    pub l: u32,
    pub d_l: f64,
    pub m_max: usize,
    pub holds: bool,
    pub first_violation: Option<usize>,
    /// Minimum of `bound / x_{k+m} - 1` over the checked range.
    pub min_margin: f64,
}

pub fn verify_bootstrap_bound(
    table: &HarmonicTable,
    k: usize,
    c: u32,
    l: u32,
) -> Result<BootstrapReport> {
    if c < 2 {
        return Err(invalid("bootstrap bound requires c >= 2"));
    }
    if l < 1 {
        return Err(invalid("bootstrap bound requires l >= 1"));
    }
    let d_l = 1.0 - 1.0 / (c as f64 + 1.0) - 2f64.powi(-(l as i32));
    let m_max = (k as f64).powf(d_l).floor() as usize;
    if m_max < 1 {
        return Err(invalid(format!(
            "k = {k} too small: m-range for d_l = {d_l:.4} is empty"
        )));
    }
    if k.saturating_add(m_max) > table.max_n() + 1 {
        return Err(resource(format!(
            "need harmonic numbers up to {} but the table stops at {}; \
             rebuild the table with max_n >= {}",
            k + m_max - 1,
            table.max_n(),
            k + m_max - 1
        )));
    }
    // x_i = 0 below k, so the recursion only ever touches x_k..x_{k+m}.
    let x_k = 1.0f64;
    let mut xs = vec![x_k];
    let factor = (c as f64).powi(l as i32);
    let mut holds = true;
    let mut first_violation = None;
    let mut min_margin = f64::INFINITY;
    for m in 1..=m_max {
        let n = k + m;
        let mut acc = KahanSum::new();
        for (j, &x) in xs.iter().enumerate() {
            acc.add(x / (n - (k + j)) as f64);
        }
        let x_n = acc.value() / table.h(n - 1);
        xs.push(x_n);
        let bound = factor * x_k / (m as f64 * table.h(k));
        min_margin = min_margin.min(bound / x_n - 1.0);
        if x_n > bound {
            holds = false;
            first_violation.get_or_insert(m);
        }
    }
    Ok(BootstrapReport {
        k,
        c,
        l,
        d_l,
        m_max,
        holds,
        first_violation,
        min_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::big_rational;

    fn table(n: usize) -> HarmonicTable {
        HarmonicTable::new(n, n.min(200)).unwrap()
    }

    #[test]
    fn constant_sequence_for_k1() {
        let t = table(64);
        let seq = evaluate_sequence(&DescentKernel::Harmonic, &t, 1, 1.0, 50).unwrap();
        for n in 1..=50 {
            assert!((seq.value(n) - 1.0).abs() < 1e-12, "x_{n} = {}", seq.value(n));
        }
        assert_eq!(seq.limit, Some(1.0));
    }

    #[test]
    fn base_steps_k2() {
        let t = table(64);
        let seq = evaluate_sequence(&DescentKernel::Harmonic, &t, 2, 0.5, 10).unwrap();
        assert!((seq.value(3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((seq.value(4) - 7.0 / 22.0).abs() < 1e-15);
        assert_eq!(seq.value(1), 0.0);
    }

    #[test]
    fn exact_matches_float_and_decreases() {
        let t = table(100);
        let exact = evaluate_sequence_exact(&t, 2, &big_rational(1, 2), 100).unwrap();
        assert_eq!(exact.value(3), big_rational(1, 3));
        assert_eq!(exact.value(4), big_rational(7, 22));
        assert_eq!(exact.value(5), big_rational(86, 275));
        assert!(exact.strictly_decreasing());

        let float = evaluate_sequence(&DescentKernel::Harmonic, &t, 2, 0.5, 100).unwrap();
        for n in 2..=100 {
            let e = exact.value_f64(n);
            assert!(
                (float.value(n) - e).abs() / e < 1e-12,
                "float drift at n = {n}"
            );
        }
    }

    #[test]
    fn exact_mode_is_capped() {
        let t = table(100);
        assert!(evaluate_sequence_exact(&t, 2, &big_rational(1, 2), 500).is_err());
    }

    #[test]
    fn seed_validation() {
        let t = table(16);
        let k = DescentKernel::Harmonic;
        assert!(evaluate_sequence(&k, &t, 0, 1.0, 5).is_err());
        assert!(evaluate_sequence(&k, &t, 2, 0.0, 5).is_err());
        assert!(evaluate_sequence(&k, &t, 4, 1.0, 3).is_err());
    }

    #[test]
    fn limit_values() {
        let t = table(16);
        let pi2 = PI * PI;
        assert!((limit_value(&t, 2, 0.5).unwrap() - 3.0 / pi2).abs() < 1e-15);
        assert_eq!(limit_value(&t, 1, 1.0).unwrap(), 1.0);
        let expected = (1.0 / 3.0) * 6.0 * 1.5 / (pi2 * 2.0);
        assert!((limit_value(&t, 3, 1.0 / 3.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 3.0 / (2.0 * pi2)).abs() < 1e-15);
        assert!(limit_value(&t, 0, 1.0).is_err());
        assert!(limit_value(&t, 2, -1.0).is_err());
    }

    #[test]
    fn occupation_small_cases() {
        let t = table(64);
        let v3 = occupation_vector(&t, 3).unwrap();
        assert!((v3.a(2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(v3.a(3), 1.0);
        let v4 = occupation_vector(&t, 4).unwrap();
        assert!((v4.a(2) - 7.0 / 11.0).abs() < 1e-14);
        let v5 = occupation_vector(&t, 5).unwrap();
        assert!((v5.a(2) - 172.0 / 275.0).abs() < 1e-14);
        assert!((v5.a(3) - 138.0 / 275.0).abs() < 1e-14);
    }

    #[test]
    fn occupation_checksum_on_grid() {
        let t = table(2000);
        for &n in &[2usize, 10, 100, 500, 2000] {
            let v = occupation_vector(&t, n).unwrap();
            assert!(v.checksum_error < 1e-10, "n = {n}: {}", v.checksum_error);
            assert!(v.as_slice().iter().all(|&a| a > 0.0 && a <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn occupation_consistency_with_sequence() {
        let t = table(2000);
        for &(k, n) in &[(2usize, 500usize), (3, 1000), (5, 2000)] {
            let seq =
                evaluate_sequence(&DescentKernel::Harmonic, &t, k, 1.0 / k as f64, n).unwrap();
            let occ = occupation_vector(&t, n).unwrap();
            let lhs = k as f64 * seq.value(n);
            assert!(
                (lhs - occ.a(k)).abs() < 1e-10,
                "k = {k}, n = {n}: {lhs} vs {}",
                occ.a(k)
            );
        }
    }

    #[test]
    fn longterm_bound_small() {
        let t = table(2000);
        let seq = evaluate_sequence(&DescentKernel::Harmonic, &t, 2, 0.5, 2000).unwrap();
        let report = verify_longterm_bound(&seq).unwrap();
        assert!(report.pass, "constant = {}", report.sup_constant);
        assert!(report.sup_constant < 1.0);

        let k1 = evaluate_sequence(&DescentKernel::Harmonic, &t, 1, 1.0, 100).unwrap();
        let report = verify_longterm_bound(&k1).unwrap();
        assert!(report.pass);
        assert!(report.sup_constant.abs() < 1e-9);
    }

    #[test]
    fn bootstrap_small_k() {
        let t = table(3000);
        let report = verify_bootstrap_bound(&t, 2500, 2, 1).unwrap();
        assert_eq!(report.m_max, 3);
        assert!(report.holds);
        // m = 1 is the base identity x_{k+1} = x_k / h_k <= c^l x_k / h_k
        assert!(report.min_margin > 0.0);
    }

    #[test]
    fn bootstrap_validation() {
        let t = table(128);
        assert!(verify_bootstrap_bound(&t, 100, 1, 1).is_err());
        assert!(verify_bootstrap_bound(&t, 100, 2, 0).is_err());
        // table too small for k + m
        assert!(verify_bootstrap_bound(&t, 128, 2, 1).is_err());
    }

    #[test]
    fn csv_shapes() {
        let t = table(16);
        let seq = evaluate_sequence(&DescentKernel::Harmonic, &t, 2, 0.5, 5).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,x_n,x_n_minus_x\n"));
        assert_eq!(text.lines().count(), 5);

        let beta = DescentKernel::beta(-0.5).unwrap();
        let seq = evaluate_sequence(&beta, &t, 2, 1.0, 5).unwrap();
        let mut buf = Vec::new();
        seq.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("n,x_n\n"));
    }

    #[test]
    fn linearity_scaling() {
        let t = table(300);
        let a = evaluate_sequence(&DescentKernel::Harmonic, &t, 3, 1.0, 300).unwrap();
        let b = evaluate_sequence(&DescentKernel::Harmonic, &t, 3, 2.5, 300).unwrap();
        for n in 3..=300 {
            let lhs = 2.5 * a.value(n);
            let rel = (lhs - b.value(n)).abs() / b.value(n);
            assert!(rel < 1e-12, "n = {n}: rel = {rel}");
        }
    }
}
