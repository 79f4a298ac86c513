//! Consecutive-difference machinery: the partial sums `s(n, i)`, the exact
//! coefficients `alpha'_{i,n}` of the difference recursion, and the
//! recursion itself, cross-checked against direct differences.
//!
//! For the harmonic kernel with seed at `k`, the differences
//! `d_n = x_n - x_{n+1}` satisfy `d_n = (1/h_n) sum_{i=k}^{n-1} a'_{i,n} d_i`
//! where every coefficient is positive, so the whole run stays positive and
//! there is no catastrophic cancellation.

use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{invalid, resource, Result};
use crate::kernels::HarmonicTable;
use crate::numeric::KahanSum;

/// Double-sum oracle cap; the closed form is O(1) per coefficient while the
/// double sum is O(i k).
pub const DOUBLE_SUM_N_MAX: usize = 60;

/// `s(n, i) = sum_{j<=i} p(n, j)`, harmonic closed form
/// `(h_{n-1} - h_{n-i-1}) / h_{n-1}`.
pub fn s_value(table: &HarmonicTable, n: usize, i: usize) -> Result<f64> {
    if n < 2 || i == 0 || i >= n {
        return Err(invalid(format!("s(n, i) needs 1 <= i <= n-1, got ({n}, {i})")));
    }
    let h_top = table.checked_h(n - 1)?;
    Ok((h_top - table.h(n - i - 1)) / h_top)
}

/// `alpha'_{i,n}` for seed index `k`, from the closed form.
pub fn alpha_prime(table: &HarmonicTable, i: usize, n: usize, k: usize) -> Result<f64> {
    check_alpha_range(i, n, k)?;
    table.checked_h(n - 1)?;
    Ok(alpha_prime_unchecked(table, i, n, k))
}

#[inline]
fn alpha_prime_unchecked(table: &HarmonicTable, i: usize, n: usize, k: usize) -> f64 {
    let first = (i - k + 1) as f64 / ((n - i) as f64 * (n - k + 1) as f64);
    let second = (k - 1) as f64 / (n as f64 * (n - k + 1) as f64)
        * (table.h(n - k) - table.h(n - i - 1))
        / (table.h(n - 1) - table.h(n - k));
    first - second
}

fn check_alpha_range(i: usize, n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(invalid("alpha' requires k >= 2"));
    }
    if n <= k {
        return Err(invalid(format!("alpha' requires n > k, got n = {n}, k = {k}")));
    }
    if i < k || i >= n {
        return Err(invalid(format!(
            "alpha' requires k <= i <= n-1, got i = {i}, n = {n}, k = {k}"
        )));
    }
    Ok(())
}

/// Exact-rational `alpha'_{i,n}` from the closed form.
pub fn alpha_prime_exact(
    table: &HarmonicTable,
    i: usize,
    n: usize,
    k: usize,
) -> Result<BigRational> {
    check_alpha_range(i, n, k)?;
    if n - 1 > table.exact_cap() {
        return Err(invalid(format!(
            "exact h_{} not tabulated (cap {})",
            n - 1,
            table.exact_cap()
        )));
    }
    let rat = |num: usize, den: usize| BigRational::new(BigInt::from(num), BigInt::from(den));
    let first = rat(i - k + 1, (n - i) * (n - k + 1));
    let second = rat(k - 1, n * (n - k + 1))
        * (table.h_exact(n - k) - table.h_exact(n - i - 1))
        / (table.h_exact(n - 1) - table.h_exact(n - k));
    Ok(first - second)
}

/// Exact `alpha'_{i,n}` from the defining double sum
/// `[sum_{a=k-1}^{i-1} sum_{b=0}^{k-2} (a-b) / ((n-a)(n-a-1)(n-b)(n-b-1))]
///  / (h_{n-1} - h_{n-k})`; retained as an independent oracle for the closed
/// form on small `n`.
pub fn alpha_prime_double_sum_exact(
    table: &HarmonicTable,
    i: usize,
    n: usize,
    k: usize,
) -> Result<BigRational> {
    check_alpha_range(i, n, k)?;
    if n > DOUBLE_SUM_N_MAX {
        return Err(resource(format!(
            "double-sum oracle capped at n = {DOUBLE_SUM_N_MAX}"
        )));
    }
    if n - 1 > table.exact_cap() {
        return Err(invalid("exact harmonic values not tabulated far enough"));
    }
    let mut sum = BigRational::zero();
    for a in (k - 1)..i {
        for b in 0..(k - 1) {
            let numer = BigInt::from(a as i64 - b as i64);
            let denom = BigInt::from((n - a) * (n - a - 1)) * BigInt::from((n - b) * (n - b - 1));
            sum += BigRational::new(numer, denom);
        }
    }
    Ok(sum / (table.h_exact(n - 1) - table.h_exact(n - k)))
}

/// The difference run `d_k .. d_{n_max - 1}` with `d_n = x_n - x_{n+1}`.
#[derive(Debug, Clone, Serialize)]
pub struct DifferenceSequence {
    pub k: usize,
    pub x_k: f64,
    /// `d[j] = d_{k+j}`.
    pub d: Vec<f64>,
}

impl DifferenceSequence {
    /// `d_n`; valid for `k <= n <= n_max - 1`.
    pub fn value(&self, n: usize) -> f64 {
        self.d[n - self.k]
    }

    pub fn last_n(&self) -> usize {
        self.k + self.d.len() - 1
    }

    pub fn all_positive(&self) -> bool {
        self.d.iter().all(|&d| d > 0.0)
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,d_n")?;
        for (j, &v) in self.d.iter().enumerate() {
            writeln!(out, "{},{}", self.k + j, v)?;
        }
        Ok(())
    }
}

/// Runs the difference recursion seeded by `d_k = x_k (1 - 1/h_k)`.
pub fn d_sequence(
    table: &HarmonicTable,
    k: usize,
    x_k: f64,
    n_max: usize,
) -> Result<DifferenceSequence> {
    if k < 2 {
        return Err(invalid("difference recursion requires k >= 2"));
    }
    if !(x_k > 0.0) {
        return Err(invalid("x_k must be positive"));
    }
    if n_max <= k {
        return Err(invalid(format!("n_max = {n_max} leaves no differences from k = {k}")));
    }
    if table.max_n() < n_max {
        return Err(invalid(format!(
            "harmonic table too small: need h_{} but max_n = {}",
            n_max,
            table.max_n()
        )));
    }
    let mut d = vec![0.0f64; n_max]; // indexed by n, entries k..=n_max-1
    d[k] = x_k * (1.0 - 1.0 / table.h(k));
    for n in (k + 1)..n_max {
        let mut acc = KahanSum::new();
        for i in k..n {
            acc.add(alpha_prime_unchecked(table, i, n, k) * d[i]);
        }
        d[n] = acc.value() / table.h(n);
    }
    Ok(DifferenceSequence {
        k,
        x_k,
        d: d[k..].to_vec(),
    })
}

/// Exact-rational difference run for small `n` (plain rational arithmetic).
pub fn d_sequence_exact(
    table: &HarmonicTable,
    k: usize,
    x_k: &BigRational,
    n_max: usize,
) -> Result<Vec<BigRational>> {
    if k < 2 {
        return Err(invalid("difference recursion requires k >= 2"));
    }
    if n_max <= k || n_max > DOUBLE_SUM_N_MAX {
        return Err(invalid(format!(
            "exact differences need k < n_max <= {DOUBLE_SUM_N_MAX}"
        )));
    }
    if n_max > table.exact_cap() {
        return Err(invalid("exact harmonic values not tabulated far enough"));
    }
    let one = BigRational::new(BigInt::from(1), BigInt::from(1));
    let mut d: Vec<BigRational> = vec![BigRational::zero(); n_max];
    d[k] = x_k * (&one - table.h_exact(k).recip());
    for n in (k + 1)..n_max {
        let mut acc = BigRational::zero();
        for i in k..n {
            acc += alpha_prime_exact(table, i, n, k)? * &d[i];
        }
        d[n] = acc / table.h_exact(n);
    }
    Ok(d[k..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::big_rational;
    use crate::kernels::DescentKernel;
    use crate::recursion::evaluate_sequence;

    fn table(n: usize) -> HarmonicTable {
        HarmonicTable::new(n, n.min(200)).unwrap()
    }

    #[test]
    fn s_values() {
        let t = table(16);
        assert!((s_value(&t, 4, 1).unwrap() - 2.0 / 11.0).abs() < 1e-15);
        assert!((s_value(&t, 3, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        for n in 2..=12 {
            assert!((s_value(&t, n, n - 1).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(s_value(&t, 4, 4).is_err());
        assert!(s_value(&t, 4, 0).is_err());
    }

    #[test]
    fn s_nondecreasing_in_i() {
        let t = table(100);
        for n in [5usize, 17, 100] {
            let mut prev = 0.0;
            for i in 1..n {
                let s = s_value(&t, n, i).unwrap();
                assert!(s >= prev && s <= 1.0 + 1e-15);
                prev = s;
            }
        }
    }

    #[test]
    fn alpha_prime_hand_values() {
        let t = table(16);
        assert!((alpha_prime(&t, 2, 3, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(
            alpha_prime_exact(&t, 2, 3, 2).unwrap(),
            big_rational(1, 6)
        );
        assert!(alpha_prime(&t, 3, 3, 2).is_err());
        assert!(alpha_prime(&t, 1, 3, 2).is_err());
    }

    #[test]
    fn alpha_prime_at_seed_index_structure() {
        // at i = k the subtracted term carries h_{n-k} - h_{n-k-1} = 1/(n-k)
        let t = table(600);
        let n = 500;
        for k in [2usize, 5, 9] {
            let expected = 1.0 / ((n - k) as f64 * (n - k + 1) as f64)
                - (k - 1) as f64 / (n as f64 * (n - k + 1) as f64) * (1.0 / (n - k) as f64)
                    / (t.h(n - 1) - t.h(n - k));
            let got = alpha_prime(&t, k, n, k).unwrap();
            assert!((got - expected).abs() < 1e-15, "k = {k}");
        }
    }

    #[test]
    fn alpha_prime_positive_on_grid() {
        let t = table(2000);
        for &n in &[10usize, 100, 500, 2000] {
            for &k in &[2usize, 3, 7] {
                if n <= k {
                    continue;
                }
                for i in (k..n).step_by(1 + n / 97) {
                    let a = alpha_prime(&t, i, n, k).unwrap();
                    assert!(a > 0.0, "alpha'({i}, {n}; k={k}) = {a}");
                }
            }
        }
    }

    #[test]
    fn closed_form_matches_double_sum_exactly() {
        let t = table(64);
        for n in 4..=30usize {
            for k in 2..n.min(7) {
                for i in k..n {
                    let lhs = alpha_prime_exact(&t, i, n, k).unwrap();
                    let rhs = alpha_prime_double_sum_exact(&t, i, n, k).unwrap();
                    assert_eq!(lhs, rhs, "mismatch at i={i} n={n} k={k}");
                }
            }
        }
    }

    #[test]
    fn d_seed_and_first_steps() {
        let t = table(64);
        let d = d_sequence(&t, 2, 0.5, 8).unwrap();
        assert!((d.value(2) - 1.0 / 6.0).abs() < 1e-15);
        assert!((d.value(3) - 1.0 / 66.0).abs() < 1e-16);
        assert!((d.value(4) - 3.0 / 550.0).abs() < 1e-16);

        let exact = d_sequence_exact(&t, 2, &big_rational(1, 2), 8).unwrap();
        assert_eq!(exact[0], big_rational(1, 6));
        assert_eq!(exact[1], big_rational(1, 66));
        assert_eq!(exact[2], big_rational(3, 550));
    }

    #[test]
    fn matches_direct_differences() {
        let t = table(1300);
        for &k in &[2usize, 5] {
            let x_k = if k == 2 { 0.5 } else { 1.0 };
            let seq = evaluate_sequence(&DescentKernel::Harmonic, &t, k, x_k, 1200).unwrap();
            let d = d_sequence(&t, k, x_k, 1200).unwrap();
            for n in k..1200 {
                let direct = seq.value(n) - seq.value(n + 1);
                let gap = (d.value(n) - direct).abs();
                assert!(
                    gap <= (1e-9 * direct.abs()).max(1e-15),
                    "n = {n}, k = {k}: {} vs {direct}",
                    d.value(n)
                );
            }
        }
    }

    #[test]
    fn positivity_medium_range() {
        let t = table(5001);
        for &k in &[2usize, 5] {
            let d = d_sequence(&t, k, 1.0, 5000).unwrap();
            assert!(d.all_positive(), "k = {k}");
        }
    }

    #[test]
    fn argument_validation() {
        let t = table(64);
        assert!(d_sequence(&t, 1, 1.0, 10).is_err());
        assert!(d_sequence(&t, 2, -1.0, 10).is_err());
        assert!(d_sequence(&t, 5, 1.0, 5).is_err());
        assert!(alpha_prime_double_sum_exact(&t, 61, 80, 2).is_err());
    }

    #[test]
    fn csv_output() {
        let t = table(16);
        let d = d_sequence(&t, 2, 0.5, 6).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,d_n\n"));
        assert_eq!(text.lines().count(), 5);
    }
}
