//! The implicit equation for the convergence exponent, its root solver, the
//! Euler-Maclaurin remainder check, the positivity check for g', and
//! empirical log-log rate fitting.

use serde::Serialize;
use statrs::function::gamma::digamma;

use crate::error::{domain, invalid, Error, Result};
use crate::kernels::HarmonicTable;
use crate::numeric::KahanSum;

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Reference value of the exponent, used by tests and the acceptance suite.
pub const GAMMA_STAR: f64 = 1.567_353_753_101_655;

/// Default series truncation; with the integral tail correction this puts
/// the series error near 1e-14.
pub const DEFAULT_TRUNCATION: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Series,
    Digamma,
}

/// Root-solver output.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentResult {
    pub gamma_star: f64,
    pub residual_at_root: f64,
    pub method: Method,
    pub truncation: Option<u64>,
    pub bracket: (f64, f64),
    pub iterations: u32,
}

fn check_gamma_open_interval(gamma: f64) -> Result<()> {
    if !(gamma > 1.0 && gamma < 2.0) {
        return Err(domain(format!(
            "residual series is defined on 1 < gamma < 2, got {gamma}"
        )));
    }
    Ok(())
}

/// Partial sum of `sum_i (1/i - i/((i+1)(i+1-gamma)))` to `truncation` terms
/// plus an integral tail estimate. The terms behave like `(2-gamma)/i^2`, so
/// the tail is `(2-gamma)/T` up to O(1/T^2).
pub fn residual(gamma: f64, truncation: u64) -> Result<f64> {
    check_gamma_open_interval(gamma)?;
    if truncation < 1_000 {
        return Err(invalid("residual truncation must be at least 1000"));
    }
    let mut acc = KahanSum::new();
    for i in 1..=truncation {
        let x = i as f64;
        acc.add(1.0 / x - x / ((x + 1.0) * (x + 1.0 - gamma)));
    }
    Ok(acc.value() + (2.0 - gamma) / truncation as f64)
}

/// Closed form of the residual via partial fractions:
/// `1/gamma + ((gamma-1)/gamma) (psi(2-gamma) + euler)`. This identity is
/// derived, not quoted; the tests pin it against the truncated series.
pub fn residual_digamma(gamma: f64) -> Result<f64> {
    check_gamma_open_interval(gamma)?;
    Ok(1.0 / gamma + ((gamma - 1.0) / gamma) * (digamma(2.0 - gamma) + EULER_GAMMA))
}

/// The shifted series `S(gamma) = sum_i (1/i - i/((i+1)(i+2-gamma)))` on
/// `2 < gamma < 3`; equals the residual at `gamma - 1`.
pub fn shifted_series(gamma: f64, truncation: u64) -> Result<f64> {
    if !(gamma > 2.0 && gamma < 3.0) {
        return Err(domain(format!(
            "shifted series is defined on 2 < gamma < 3, got {gamma}"
        )));
    }
    residual(gamma - 1.0, truncation)
}

/// Bisection bracket: the residual is strictly decreasing on (1.5, 2) and
/// changes sign inside (1.5, 1.99).
const BRACKET_LO: f64 = 1.5;
const BRACKET_HI: f64 = 1.99;

/// Solves `residual(gamma) = 0` by bisection on (1.5, 2). Deterministic:
/// identical inputs give bit-identical output.
pub fn solve_gamma_star(tol: f64, method: Method, truncation: u64) -> Result<ExponentResult> {
    if !(tol >= 1e-13) {
        return Err(invalid(format!("tolerance must be >= 1e-13, got {tol}")));
    }
    let f = |gamma: f64| -> Result<f64> {
        match method {
            Method::Series => residual(gamma, truncation),
            Method::Digamma => residual_digamma(gamma),
        }
    };
    let (mut lo, mut hi) = (BRACKET_LO, BRACKET_HI);
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Internal(format!(
            "bracket endpoints do not straddle the root: f({lo}) = {f_lo}, f({hi}) = {f_hi}"
        )));
    }
    let mut iterations = 0u32;
    while (hi - lo) > tol && iterations < 200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }
    let root = 0.5 * (lo + hi);
    Ok(ExponentResult {
        gamma_star: root,
        residual_at_root: f(root)?,
        method,
        truncation: match method {
            Method::Series => Some(truncation),
            Method::Digamma => None,
        },
        bracket: (lo, hi),
        iterations,
    })
}

/// Euler-Maclaurin remainder comparison.
#[derive(Debug, Clone, Serialize)]
pub struct EmReport {
    pub gamma: f64,
    pub k: usize,
    pub n: usize,
    /// `j_n = h_n - sum_{i=k}^{n-1} (r - log(1+r)) (n/i)^gamma / n` with
    /// `r = i/(n-i)`.
    pub j_n: f64,
    /// The shifted series limit `S(gamma)`.
    pub s_gamma: f64,
    pub gap: f64,
}

/// Computes `j_n` and the limit it approaches as `n` grows.
pub fn em_remainder(table: &HarmonicTable, gamma: f64, k: usize, n: usize) -> Result<EmReport> {
    if !(gamma > 2.0 && gamma < 3.0) {
        return Err(domain(format!("em remainder needs 2 < gamma < 3, got {gamma}")));
    }
    if k == 0 || k >= n {
        return Err(invalid(format!("em remainder needs 1 <= k < n, got k = {k}, n = {n}")));
    }
    let h_n = table.checked_h(n)?;
    let nf = n as f64;
    let mut acc = KahanSum::new();
    for i in k..n {
        let r = i as f64 / (nf - i as f64);
        // r - log(1+r) computed with log1p to dodge cancellation at small r
        let integrand = r - r.ln_1p();
        acc.add(integrand * (nf / i as f64).powf(gamma) / nf);
    }
    let j_n = h_n - acc.value();
    let s_gamma = shifted_series(gamma, DEFAULT_TRUNCATION)?;
    Ok(EmReport {
        gamma,
        k,
        n,
        j_n,
        s_gamma,
        gap: (j_n - s_gamma).abs(),
    })
}

/// Grid minimum of `g'` on the open interval (0, 1).
#[derive(Debug, Clone, Serialize)]
pub struct GPrimeReport {
    pub gamma: f64,
    pub grid_points: usize,
    pub min_value: f64,
    pub argmin_x: f64,
    pub positive: bool,
}

/// `g(x) = 1/(1-x) - x^{1-gamma}/(1-x) - x^{-gamma} log(1-x)`.
pub fn g_function(x: f64, gamma: f64) -> f64 {
    1.0 / (1.0 - x) - x.powf(1.0 - gamma) / (1.0 - x) - x.powf(-gamma) * (1.0 - x).ln()
}

/// `g'(x)`, in the algebraic form used by the positivity argument.
pub fn g_prime(x: f64, gamma: f64) -> f64 {
    let core = (-(gamma + 1.0) * x.powf(1.0 - gamma) + 1.0 + gamma * x.powf(-gamma))
        / ((1.0 - x) * (1.0 - x));
    core + gamma * x.powf(-gamma - 1.0) * (1.0 - x).ln()
}

/// Minimum of `g'` over the interior grid `x = j/(G+1)`, `j = 1..G`.
/// The endpoints are excluded; `g'` is singular at both.
pub fn g_prime_min(gamma: f64, grid_points: usize) -> Result<GPrimeReport> {
    if !(gamma > 2.0 && gamma < 3.0) {
        return Err(domain(format!("g' check needs 2 < gamma < 3, got {gamma}")));
    }
    if grid_points < 100 {
        return Err(invalid("g' grid needs at least 100 points"));
    }
    let mut min_value = f64::INFINITY;
    let mut argmin_x = 0.0;
    for j in 1..=grid_points {
        let x = j as f64 / (grid_points as f64 + 1.0);
        let v = g_prime(x, gamma);
        if v < min_value {
            min_value = v;
            argmin_x = x;
        }
    }
    Ok(GPrimeReport {
        gamma,
        grid_points,
        min_value,
        argmin_x,
        positive: min_value > 0.0,
    })
}

/// Ordinary least squares of `log y` on `log n`.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points_used: usize,
}

/// Fits the decay exponent of positive data over a window of `n`.
pub fn fit_exponent(values: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(n, y) in values {
        if n < window.0 || n > window.1 {
            continue;
        }
        if !(y > 0.0) {
            return Err(domain(format!(
                "log-log fit needs positive values, got y = {y} at n = {n} \
                 (a nonpositive residual usually means the limit was mis-estimated)"
            )));
        }
        xs.push(n.ln());
        ys.push(y.ln());
    }
    let m = xs.len();
    if m < 3 {
        return Err(invalid(format!(
            "window [{}, {}] leaves {m} points; need at least 3",
            window.0, window.1
        )));
    }
    let mf = m as f64;
    let x_mean = kmean(&xs);
    let y_mean = kmean(&ys);
    let mut sxx = KahanSum::new();
    let mut sxy = KahanSum::new();
    for j in 0..m {
        let dx = xs[j] - x_mean;
        sxx.add(dx * dx);
        sxy.add(dx * (ys[j] - y_mean));
    }
    let slope = sxy.value() / sxx.value();
    let intercept = y_mean - slope * x_mean;
    let mut rss = KahanSum::new();
    for j in 0..m {
        let r = ys[j] - (intercept + slope * xs[j]);
        rss.add(r * r);
    }
    let stderr = (rss.value() / (mf - 2.0) / sxx.value()).sqrt();
    Ok(FitResult {
        slope,
        stderr,
        intercept,
        points_used: m,
    })
}

fn kmean(values: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEST_TRUNCATION: u64 = 1_000_000;

    #[test]
    fn residual_signs() {
        // at 1.5 the i = 1 term vanishes and the rest are positive
        assert!(residual(1.5, TEST_TRUNCATION).unwrap() > 0.0);
        // at 1.9 the i = 1 term alone is 1 - 1/(2*0.1) = -4
        let r = residual(1.9, TEST_TRUNCATION).unwrap();
        assert!(r < 0.0);
        let first_term: f64 = 1.0 - 1.0 / (2.0 * (2.0 - 1.9));
        assert!((first_term + 4.0).abs() < 1e-12);
    }

    #[test]
    fn residual_domain_checks() {
        assert!(residual(2.0, TEST_TRUNCATION).is_err());
        assert!(residual(1.0, TEST_TRUNCATION).is_err());
        assert!(residual(0.5, TEST_TRUNCATION).is_err());
        assert!(residual(1.7, 10).is_err());
    }

    #[test]
    fn series_matches_digamma_form() {
        for &g in &[1.51, 1.55, 1.6, GAMMA_STAR, 1.7, 1.85, 1.95] {
            let series = residual(g, DEFAULT_TRUNCATION).unwrap();
            let closed = residual_digamma(g).unwrap();
            assert!(
                (series - closed).abs() < 1e-10,
                "gamma = {g}: {series} vs {closed}"
            );
        }
    }

    #[test]
    fn residual_strictly_decreasing_on_grid() {
        let mut prev = f64::INFINITY;
        for j in 0..50 {
            let g = 1.5 + 0.49 * j as f64 / 49.0;
            let r = residual_digamma(g).unwrap();
            assert!(r < prev, "not decreasing at gamma = {g}");
            prev = r;
        }
    }

    #[test]
    fn solves_to_paper_value() {
        let r = solve_gamma_star(1e-9, Method::Series, DEFAULT_TRUNCATION).unwrap();
        assert!((r.gamma_star - GAMMA_STAR).abs() <= 1e-9, "{}", r.gamma_star);
        // the residual has slope about -2.4 at the root
        assert!(r.residual_at_root.abs() < 5e-9);

        let r = solve_gamma_star(1e-12, Method::Digamma, 0).unwrap();
        assert!((r.gamma_star - GAMMA_STAR).abs() <= 1e-12);
        assert!(r.truncation.is_none());
    }

    #[test]
    fn solver_is_deterministic() {
        let a = solve_gamma_star(1e-10, Method::Series, TEST_TRUNCATION).unwrap();
        let b = solve_gamma_star(1e-10, Method::Series, TEST_TRUNCATION).unwrap();
        assert_eq!(a.gamma_star.to_bits(), b.gamma_star.to_bits());
        assert_eq!(a.bracket, b.bracket);
    }

    #[test]
    fn solver_rejects_tiny_tolerance() {
        assert!(solve_gamma_star(1e-14, Method::Digamma, 0).is_err());
    }

    #[test]
    fn shifted_series_root_at_gamma_star_plus_one() {
        let s = shifted_series(GAMMA_STAR + 1.0, DEFAULT_TRUNCATION).unwrap();
        assert!(s.abs() < 1e-8, "S(gamma*+1) = {s}");
        assert!(shifted_series(1.5, TEST_TRUNCATION).is_err());
    }

    #[test]
    fn g_spot_value() {
        let expected = 2.0 - 2.0 * 2f64.powf(1.5) + 2f64.powf(2.5) * 2f64.ln();
        assert!((g_function(0.5, 2.5) - expected).abs() < 1e-12);
        assert!((expected - 0.2641783243818083).abs() < 1e-12);
    }

    #[test]
    fn g_prime_positive_across_gammas() {
        for &gamma in &[2.01, 2.25, 2.5, 2.75, 2.99] {
            let report = g_prime_min(gamma, 1000).unwrap();
            assert!(report.positive, "gamma = {gamma}: min = {}", report.min_value);
        }
        assert!(g_prime_min(2.5, 50).is_err());
        assert!(g_prime_min(1.5, 1000).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let data: Vec<(f64, f64)> = (10..200).map(|n| (n as f64, (n as f64).powi(-2))).collect();
        let fit = fit_exponent(&data, (10.0, 200.0)).unwrap();
        assert!((fit.slope + 2.0).abs() < 1e-12);
        assert!(fit.stderr < 1e-12);
    }

    #[test]
    fn fit_survives_oscillating_modulation() {
        let data: Vec<(f64, f64)> = (100..5000)
            .map(|n| {
                let x = n as f64;
                (x, 3.0 * x.powf(-1.5674) * (1.0 + 0.1 * x.ln().sin()))
            })
            .collect();
        let fit = fit_exponent(&data, (100.0, 5000.0)).unwrap();
        assert!((fit.slope + 1.5674).abs() < 0.05, "slope = {}", fit.slope);
    }

    #[test]
    fn fit_rejects_nonpositive_values() {
        let data = vec![(10.0, 1.0), (20.0, 0.0), (30.0, 0.5)];
        assert!(matches!(
            fit_exponent(&data, (5.0, 50.0)),
            Err(Error::Domain(_))
        ));
        let data = vec![(10.0, 1.0), (20.0, 1.0)];
        assert!(fit_exponent(&data, (5.0, 50.0)).is_err());
    }

    #[test]
    fn em_remainder_small_case() {
        let table = HarmonicTable::new(1000, 0).unwrap();
        let report = em_remainder(&table, 2.5, 2, 1000).unwrap();
        // the gap at n = 1000 is about 3.6e-2 and shrinks with n
        assert!(report.gap < 0.05, "gap = {}", report.gap);
        assert!(em_remainder(&table, 3.5, 2, 100).is_err());
        assert!(em_remainder(&table, 2.5, 100, 100).is_err());
    }
}
