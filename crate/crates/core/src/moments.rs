//! Exact dynamic-programming moments for clade counts, clade-shape counts,
//! and the total length: means by the linear recursion, variances by the law
//! of total variance. These tables are the oracles the Monte Carlo layer is
//! tested against, and they drive the limit-constant and error-bound checks.
//!
//! The recursion for every statistic has the same shape. With `q_n` the
//! split law and `X` the statistic,
//!   `E[X_n]   = sum_i q_n(i) (E[X_i] + E[X_{n-i}]) + add_n`
//!   `Var[X_n] = sum_i q_n(i) (Var[X_i] + Var[X_{n-i}]) + var_add_n
//!               + Var_splits(E[X_L] + E[X_{n-L}])`
//! where the add terms are zero for counts and `1/h_{n-1}`, `1/h_{n-1}^2`
//! for the length. The split-mean variance term is computed exactly from the
//! stored mean array in two passes each step.

use std::io::{self, Write};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{invalid, resource, Result};
use crate::exact::ratio_to_f64;
use crate::kernels::HarmonicTable;
use crate::numeric::KahanSum;
use crate::treesim::{shape_probability_exact, ShapeMode, Statistic};

/// Cap for the exact-rational tables; denominators grow quadratically in
/// digits and the oracles only need small `n`.
pub const EXACT_MOMENTS_N_MAX: usize = 100;

/// Mean and variance of a statistic for every `n` up to `n_max`.
#[derive(Debug, Clone, Serialize)]
pub struct MomentTable {
    pub statistic: Statistic,
    pub n_max: usize,
    /// `mean[n]`, index 0 unused.
    pub mean: Vec<f64>,
    /// `variance[n]`, index 0 unused.
    pub variance: Vec<f64>,
}

impl MomentTable {
    /// `E_n = E[X_n] / n`.
    pub fn normalized_mean(&self, n: usize) -> f64 {
        self.mean[n] / n as f64
    }

    /// `V_n = Var[X_n] / n`.
    pub fn normalized_variance(&self, n: usize) -> f64 {
        self.variance[n] / n as f64
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(out, "n,mean,variance,normalized_mean,normalized_variance")?;
        for n in 1..=self.n_max {
            writeln!(
                out,
                "{},{},{},{},{}",
                n,
                self.mean[n],
                self.variance[n],
                self.normalized_mean(n),
                self.normalized_variance(n)
            )?;
        }
        Ok(())
    }
}

struct Seeds {
    /// First index with nonzero data; the recursion starts above it.
    base: usize,
    mean_at_base: f64,
    var_at_base: f64,
    mean_add: fn(&HarmonicTable, usize) -> f64,
    var_add: fn(&HarmonicTable, usize) -> f64,
}

fn no_add(_: &HarmonicTable, _: usize) -> f64 {
    0.0
}

fn length_mean_add(table: &HarmonicTable, n: usize) -> f64 {
    1.0 / table.h(n - 1)
}

fn length_var_add(table: &HarmonicTable, n: usize) -> f64 {
    let h = table.h(n - 1);
    1.0 / (h * h)
}

fn seeds_for(table: &HarmonicTable, statistic: &Statistic, mode: ShapeMode) -> Result<Seeds> {
    match statistic {
        Statistic::Count(k) => {
            if *k == 0 {
                return Err(invalid("count statistic needs k >= 1"));
            }
            Ok(Seeds {
                base: *k,
                mean_at_base: 1.0,
                var_at_base: 0.0,
                mean_add: no_add,
                var_add: no_add,
            })
        }
        Statistic::Shape(key) => {
            let p = ratio_to_f64(&shape_probability_exact(table, key, mode)?);
            Ok(Seeds {
                base: key.size(),
                mean_at_base: p,
                var_at_base: p * (1.0 - p),
                mean_add: no_add,
                var_add: no_add,
            })
        }
        Statistic::Length => Ok(Seeds {
            base: 1,
            mean_at_base: 0.0,
            var_at_base: 0.0,
            mean_add: length_mean_add,
            var_add: length_var_add,
        }),
    }
}

/// Builds the float moment table in O(n_max^2).
pub fn dp_moments(
    table: &HarmonicTable,
    statistic: &Statistic,
    n_max: usize,
    mode: ShapeMode,
) -> Result<MomentTable> {
    let seeds = seeds_for(table, statistic, mode)?;
    if n_max < seeds.base {
        return Err(invalid(format!(
            "n_max = {n_max} is below the statistic's base index {}",
            seeds.base
        )));
    }
    if n_max > 1 {
        table.checked_h(n_max - 1)?;
    }
    let mut mean = vec![0.0f64; n_max + 1];
    let mut variance = vec![0.0f64; n_max + 1];
    mean[seeds.base] = seeds.mean_at_base;
    variance[seeds.base] = seeds.var_at_base;
    for n in (seeds.base + 1)..=n_max {
        let scale = n as f64 / (2.0 * table.h(n - 1));
        // one pass for the mean and the split-mean average
        let mut mean_acc = KahanSum::new();
        let mut g_mean_acc = KahanSum::new();
        for i in 1..n {
            let q = scale / (i as f64 * (n - i) as f64);
            let g = mean[i] + mean[n - i];
            mean_acc.add(q * g);
            g_mean_acc.add(q * g);
        }
        let g_bar = g_mean_acc.value();
        mean[n] = mean_acc.value() + (seeds.mean_add)(table, n);
        // second pass for the variance pieces
        let mut var_acc = KahanSum::new();
        let mut split_acc = KahanSum::new();
        for i in 1..n {
            let q = scale / (i as f64 * (n - i) as f64);
            var_acc.add(q * (variance[i] + variance[n - i]));
            let dev = (mean[i] + mean[n - i]) - g_bar;
            split_acc.add(q * dev * dev);
        }
        variance[n] = var_acc.value() + split_acc.value() + (seeds.var_add)(table, n);
    }
    Ok(MomentTable {
        statistic: statistic.clone(),
        n_max,
        mean,
        variance,
    })
}

/// Exact-rational moment table (means and variances) up to
/// [`EXACT_MOMENTS_N_MAX`].
pub fn dp_moments_exact(
    table: &HarmonicTable,
    statistic: &Statistic,
    n_max: usize,
    mode: ShapeMode,
) -> Result<(Vec<BigRational>, Vec<BigRational>)> {
    if n_max > EXACT_MOMENTS_N_MAX {
        return Err(resource(format!(
            "exact moments are capped at n_max = {EXACT_MOMENTS_N_MAX}"
        )));
    }
    if n_max > 1 && table.exact_cap() < n_max - 1 {
        return Err(invalid("exact harmonic values not tabulated far enough"));
    }
    let (base, mean_seed, var_seed, is_length) = match statistic {
        Statistic::Count(k) => {
            if *k == 0 {
                return Err(invalid("count statistic needs k >= 1"));
            }
            (*k, BigRational::one(), BigRational::zero(), false)
        }
        Statistic::Shape(key) => {
            let p = shape_probability_exact(table, key, mode)?;
            let var = &p * (BigRational::one() - &p);
            (key.size(), p, var, false)
        }
        Statistic::Length => (1, BigRational::zero(), BigRational::zero(), true),
    };
    if n_max < base {
        return Err(invalid(format!(
            "n_max = {n_max} is below the statistic's base index {base}"
        )));
    }
    let mut mean = vec![BigRational::zero(); n_max + 1];
    let mut variance = vec![BigRational::zero(); n_max + 1];
    mean[base] = mean_seed;
    variance[base] = var_seed;
    for n in (base + 1)..=n_max {
        let scale = BigRational::new(BigInt::from(n), BigInt::from(2)) / table.h_exact(n - 1);
        let q: Vec<BigRational> = (1..n)
            .map(|i| &scale / BigRational::from(BigInt::from(i * (n - i))))
            .collect();
        let mut mean_n = BigRational::zero();
        for i in 1..n {
            mean_n += &q[i - 1] * (&mean[i] + &mean[n - i]);
        }
        let g_bar = mean_n.clone();
        if is_length {
            mean_n += table.h_exact(n - 1).recip();
        }
        let mut var_n = BigRational::zero();
        for i in 1..n {
            var_n += &q[i - 1] * (&variance[i] + &variance[n - i]);
            let dev = &mean[i] + &mean[n - i] - &g_bar;
            var_n += &q[i - 1] * (&dev * &dev);
        }
        if is_length {
            let h = table.h_exact(n - 1);
            var_n += (h * h).recip();
        }
        mean[n] = mean_n;
        variance[n] = var_n;
    }
    Ok((mean, variance))
}

/// Result of verifying the superposition identity behind the variance
/// analysis: the normalized variance sequence equals the sum of fresh
/// recursions, one seeded at each step `m` with that step's innovation
/// `eps_m = V_m - sum_i p(m,i) V_i`.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub statistic: Statistic,
    pub n_max: usize,
    pub sources: usize,
    pub max_abs_gap: f64,
}

/// Float check of the decomposition; O(n_max^3) overall.
pub fn variance_decomposition_check(
    table: &HarmonicTable,
    k: usize,
    n_max: usize,
) -> Result<DecompositionReport> {
    if n_max > 2000 {
        return Err(resource(
            "variance decomposition is superquadratic; n_max is capped at 2000",
        ));
    }
    let statistic = Statistic::Count(k);
    let mt = dp_moments(table, &statistic, n_max, ShapeMode::Unordered)?;
    let v: Vec<f64> = (0..=n_max)
        .map(|n| if n == 0 { 0.0 } else { mt.variance[n] / n as f64 })
        .collect();
    // innovations
    let mut eps = vec![0.0f64; n_max + 1];
    for m in 1..=n_max {
        let mut acc = KahanSum::new();
        for i in 1..m {
            acc.add(v[i] / (table.h(m - 1) * (m - i) as f64));
        }
        eps[m] = v[m] - acc.value();
    }
    // superpose one fresh recursion per nonzero source
    let mut total = vec![0.0f64; n_max + 1];
    let mut sources = 0usize;
    let mut w = vec![0.0f64; n_max + 1];
    for m in 1..=n_max {
        if eps[m] == 0.0 {
            continue;
        }
        sources += 1;
        w[..].iter_mut().for_each(|x| *x = 0.0);
        w[m] = eps[m];
        total[m] += eps[m];
        for n in (m + 1)..=n_max {
            let mut acc = KahanSum::new();
            for i in m..n {
                acc.add(w[i] / (n - i) as f64);
            }
            w[n] = acc.value() / table.h(n - 1);
            total[n] += w[n];
        }
    }
    let max_abs_gap = (1..=n_max)
        .map(|n| (total[n] - v[n]).abs())
        .fold(0.0f64, f64::max);
    Ok(DecompositionReport {
        statistic,
        n_max,
        sources,
        max_abs_gap,
    })
}

/// Exact-rational version of the decomposition identity; returns whether it
/// holds exactly.
pub fn variance_decomposition_check_exact(
    table: &HarmonicTable,
    k: usize,
    n_max: usize,
) -> Result<bool> {
    let statistic = Statistic::Count(k);
    let (_, var) = dp_moments_exact(table, &statistic, n_max, ShapeMode::Unordered)?;
    let v: Vec<BigRational> = (0..=n_max)
        .map(|n| {
            if n == 0 {
                BigRational::zero()
            } else {
                &var[n] / BigRational::from(BigInt::from(n))
            }
        })
        .collect();
    let p = |n: usize, i: usize| {
        (table.h_exact(n - 1) * BigRational::from(BigInt::from(n - i))).recip()
    };
    let mut eps = vec![BigRational::zero(); n_max + 1];
    for m in 1..=n_max {
        let mut acc = BigRational::zero();
        for i in 1..m {
            acc += p(m, i) * &v[i];
        }
        eps[m] = &v[m] - acc;
    }
    let mut total = vec![BigRational::zero(); n_max + 1];
    for m in 1..=n_max {
        if eps[m].is_zero() {
            continue;
        }
        let mut w = vec![BigRational::zero(); n_max + 1];
        w[m] = eps[m].clone();
        total[m] += &w[m];
        for n in (m + 1)..=n_max {
            let mut acc = BigRational::zero();
            for i in m..n {
                acc += p(n, i) * &w[i];
            }
            w[n] = acc;
            total[n] += &w[n];
        }
    }
    Ok((1..=n_max).all(|n| total[n] == v[n]))
}

/// Extrapolated limit of the normalized count variance, fitting
/// `V_n = sigma^2 + c n^{-1/6}` through the two largest table rows.
pub fn extrapolate_count_variance_limit(mt: &MomentTable) -> f64 {
    let n2 = mt.n_max;
    let n1 = mt.n_max / 2;
    let v1 = mt.normalized_variance(n1);
    let v2 = mt.normalized_variance(n2);
    let w1 = (n1 as f64).powf(-1.0 / 6.0);
    let w2 = (n2 as f64).powf(-1.0 / 6.0);
    // solve [1 w1; 1 w2] [sigma2; c] = [v1; v2]
    (v1 * w2 - v2 * w1) / (w2 - w1)
}

/// Extrapolated variance slope of the length, fitting
/// `Var[X_n] = sigma^2 n + c n^{0.9}` through the two largest table rows.
pub fn extrapolate_length_variance_slope(mt: &MomentTable) -> f64 {
    let n2 = mt.n_max as f64;
    let n1 = (mt.n_max / 2) as f64;
    let v1 = mt.variance[mt.n_max / 2];
    let v2 = mt.variance[mt.n_max];
    let w1 = n1.powf(0.9);
    let w2 = n2.powf(0.9);
    (v1 * w2 - v2 * w1) / (n1 * w2 - n2 * w1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::big_rational;
    use crate::treesim::CladeKey;
    use std::f64::consts::PI;

    fn table(n: usize) -> HarmonicTable {
        HarmonicTable::new(n, n.min(100)).unwrap()
    }

    #[test]
    fn count2_small_exact() {
        let t = table(16);
        let (mean, var) =
            dp_moments_exact(&t, &Statistic::Count(2), 6, ShapeMode::Unordered).unwrap();
        assert_eq!(mean[3], big_rational(1, 1));
        assert_eq!(var[3], BigRational::zero());
        assert_eq!(mean[4], big_rational(14, 11));
        assert_eq!(var[4], big_rational(24, 121));
        assert_eq!(mean[5], big_rational(86, 55));
        assert_eq!(var[5], big_rational(744, 3025));
        assert_eq!(mean[6], big_rational(14017, 7535));
        assert_eq!(var[6], big_rational(16997796, 56776225));
    }

    #[test]
    fn length_small_exact() {
        let t = table(16);
        let (mean, var) =
            dp_moments_exact(&t, &Statistic::Length, 4, ShapeMode::Unordered).unwrap();
        assert_eq!(mean[2], big_rational(1, 1));
        assert_eq!(var[2], big_rational(1, 1));
        assert_eq!(mean[3], big_rational(5, 3));
        assert_eq!(var[3], big_rational(13, 9));
        assert_eq!(mean[4], big_rational(76, 33));
        assert_eq!(var[4], big_rational(2086, 1089));
    }

    #[test]
    fn float_tracks_exact() {
        let t = table(100);
        for stat in [Statistic::Count(2), Statistic::Count(3), Statistic::Length] {
            let mt = dp_moments(&t, &stat, 100, ShapeMode::Unordered).unwrap();
            let (mean, var) = dp_moments_exact(&t, &stat, 100, ShapeMode::Unordered).unwrap();
            for n in 1..=100usize {
                let me = ratio_to_f64(&mean[n]);
                let ve = ratio_to_f64(&var[n]);
                assert!((mt.mean[n] - me).abs() <= 1e-12 * me.abs().max(1.0));
                assert!((mt.variance[n] - ve).abs() <= 1e-12 * ve.abs().max(1.0));
            }
        }
    }

    #[test]
    fn count1_is_deterministic_n() {
        let t = table(64);
        let mt = dp_moments(&t, &Statistic::Count(1), 64, ShapeMode::Unordered).unwrap();
        for n in 1..=64usize {
            assert!((mt.mean[n] - n as f64).abs() < 1e-10);
            assert!(mt.variance[n].abs() < 1e-12);
        }
    }

    #[test]
    fn count_mean_zero_below_k_and_one_at_k() {
        let t = table(32);
        let mt = dp_moments(&t, &Statistic::Count(5), 32, ShapeMode::Unordered).unwrap();
        for n in 1..5 {
            assert_eq!(mt.mean[n], 0.0);
            assert_eq!(mt.variance[n], 0.0);
        }
        assert_eq!(mt.mean[5], 1.0);
        assert_eq!(mt.variance[5], 0.0);
    }

    #[test]
    fn shape_moments_match_count_when_shape_is_unique() {
        // all 3-leaf clades share one shape, so the two tables must agree
        let t = table(64);
        let chain3: CladeKey = "((..).)".parse().unwrap();
        let by_shape = dp_moments(&t, &Statistic::Shape(chain3), 64, ShapeMode::Unordered).unwrap();
        let by_count = dp_moments(&t, &Statistic::Count(3), 64, ShapeMode::Unordered).unwrap();
        for n in 1..=64usize {
            assert!((by_shape.mean[n] - by_count.mean[n]).abs() < 1e-12);
            assert!((by_shape.variance[n] - by_count.variance[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn balanced_shape_seed() {
        let t = table(32);
        let balanced: CladeKey = "((..)(..))".parse().unwrap();
        let mt = dp_moments(&t, &Statistic::Shape(balanced), 32, ShapeMode::Unordered).unwrap();
        let p = 3.0 / 11.0;
        assert!((mt.mean[4] - p).abs() < 1e-15);
        assert!((mt.variance[4] - p * (1.0 - p)).abs() < 1e-15);
        for n in 1..4 {
            assert_eq!(mt.mean[n], 0.0);
        }
    }

    #[test]
    fn mean_identity_with_occupation() {
        // E[N_n(k)] = n a(n,k) / k
        let t = table(300);
        let occ = crate::recursion::occupation_vector(&t, 300).unwrap();
        for &k in &[2usize, 3, 7] {
            let mt = dp_moments(&t, &Statistic::Count(k), 300, ShapeMode::Unordered).unwrap();
            let lhs = mt.mean[300];
            let rhs = 300.0 * occ.a(k) / k as f64;
            assert!((lhs - rhs).abs() < 1e-10, "k = {k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn normalized_mean_approaches_limit_constant() {
        let t = table(2000);
        let mt = dp_moments(&t, &Statistic::Count(2), 2000, ShapeMode::Unordered).unwrap();
        let mu = 3.0 / (PI * PI);
        assert!((mt.normalized_mean(2000) - mu).abs() < 1e-3);
        // |E_n - mu| <= C/n with a stable constant
        for &n in &[500usize, 1000, 2000] {
            let c = (mt.normalized_mean(n) - mu).abs() * n as f64;
            assert!(c < 0.05, "C at n = {n} is {c}");
        }
    }

    #[test]
    fn decomposition_identity_float() {
        let t = table(600);
        let report = variance_decomposition_check(&t, 2, 200).unwrap();
        assert!(report.max_abs_gap < 1e-10, "gap = {}", report.max_abs_gap);
        let report = variance_decomposition_check(&t, 3, 500).unwrap();
        assert!(report.max_abs_gap < 1e-9, "gap = {}", report.max_abs_gap);
    }

    #[test]
    fn decomposition_identity_exact_small() {
        let t = table(40);
        assert!(variance_decomposition_check_exact(&t, 2, 40).unwrap());
    }

    #[test]
    fn decomposition_cap() {
        let t = table(64);
        assert!(variance_decomposition_check(&t, 2, 3000).is_err());
    }

    #[test]
    fn extrapolation_recovers_planted_model() {
        // plant V_n = 0.05 + 0.3 n^{-1/6} and Var_n = 0.5 n + 2 n^{0.9}
        let n_max = 4000usize;
        let mut mean = vec![0.0; n_max + 1];
        let mut variance = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            let nf = n as f64;
            mean[n] = nf;
            variance[n] = (0.05 + 0.3 * nf.powf(-1.0 / 6.0)) * nf;
        }
        let mt = MomentTable {
            statistic: Statistic::Count(2),
            n_max,
            mean: mean.clone(),
            variance,
        };
        assert!((extrapolate_count_variance_limit(&mt) - 0.05).abs() < 1e-12);

        let mut variance = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            let nf = n as f64;
            variance[n] = 0.5 * nf + 2.0 * nf.powf(0.9);
        }
        let mt = MomentTable {
            statistic: Statistic::Length,
            n_max,
            mean,
            variance,
        };
        assert!((extrapolate_length_variance_slope(&mt) - 0.5).abs() < 1e-12);
    }
}
