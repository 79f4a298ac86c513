//! Exact-rational support: a gcd-free common-denominator representation for
//! long recursion runs, plus conversion helpers.
//!
//! `BigRational` arithmetic reduces by gcd after every operation, which makes
//! the O(n^2) recursion sums prohibitively slow once denominators reach
//! thousands of digits. The sequences here instead keep every value as an
//! integer numerator over one shared denominator. Each recursion step
//! rescales the shared denominator by a known factor, so there is never any
//! gcd work, and comparisons between entries reduce to integer comparisons.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

/// Values `x_start .. x_end` stored as `numers[i] / denom` with a single
/// positive shared denominator.
#[derive(Debug, Clone)]
pub struct ScaledRationalSeq {
    start: usize,
    denom: BigInt,
    numers: Vec<BigInt>,
}

impl ScaledRationalSeq {
    pub fn new(start: usize, first: &BigRational) -> Self {
        Self {
            start,
            denom: first.denom().clone(),
            numers: vec![first.numer().clone()],
        }
    }

    pub fn start(&self) -> usize {
        self.start
    }

    pub fn end(&self) -> usize {
        self.start + self.numers.len() - 1
    }

    pub fn len(&self) -> usize {
        self.numers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numers.is_empty()
    }

    pub fn denom(&self) -> &BigInt {
        &self.denom
    }

    pub fn numer(&self, n: usize) -> &BigInt {
        &self.numers[n - self.start]
    }

    /// Multiplies the shared denominator (and every numerator) by `factor`.
    pub fn rescale(&mut self, factor: &BigInt) {
        self.denom *= factor;
        for numer in &mut self.numers {
            *numer *= factor;
        }
    }

    /// Appends the next value, already expressed over the current `denom`.
    pub fn push_numer(&mut self, numer: BigInt) {
        self.numers.push(numer);
    }

    /// Reduced rational for `x_n`.
    pub fn value(&self, n: usize) -> BigRational {
        BigRational::new(self.numer(n).clone(), self.denom.clone())
    }

    pub fn value_f64(&self, n: usize) -> f64 {
        ratio_parts_to_f64(self.numer(n), &self.denom)
    }

    /// Whether `x_n > x_{n+1} > ...` holds exactly over the whole range.
    pub fn strictly_decreasing(&self) -> bool {
        self.numers.windows(2).all(|w| w[0] > w[1])
    }
}

/// Converts `numer / denom` to the nearest f64 without overflowing either
/// side: both are shifted down together before the division. `denom` must be
/// positive.
pub fn ratio_parts_to_f64(numer: &BigInt, denom: &BigInt) -> f64 {
    debug_assert!(denom.is_positive());
    let bits = numer.bits().max(denom.bits());
    if bits <= 1000 {
        let n = numer.to_f64().unwrap_or(f64::NAN);
        let d = denom.to_f64().unwrap_or(f64::NAN);
        return n / d;
    }
    let shift = bits - 900;
    let n = (numer >> shift).to_f64().unwrap_or(f64::NAN);
    let d = (denom >> shift).to_f64().unwrap_or(f64::NAN);
    n / d
}

pub fn ratio_to_f64(value: &BigRational) -> f64 {
    ratio_parts_to_f64(value.numer(), value.denom())
}

/// `lcm(1..=m)` computed incrementally: entry `m` of the returned table.
pub fn lcm_table(max_m: usize) -> Vec<BigInt> {
    let mut table = Vec::with_capacity(max_m + 1);
    table.push(BigInt::one()); // lcm of the empty range
    let mut current = BigInt::one();
    for m in 1..=max_m {
        let m_big = BigInt::from(m);
        let g = current.gcd(&m_big);
        current = &current * (m_big / g);
        table.push(current.clone());
    }
    table
}

pub fn big_rational(numer: i64, denom: i64) -> BigRational {
    BigRational::new(BigInt::from(numer), BigInt::from(denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcm_values() {
        let t = lcm_table(10);
        assert_eq!(t[1], BigInt::from(1));
        assert_eq!(t[4], BigInt::from(12));
        assert_eq!(t[10], BigInt::from(2520));
    }

    #[test]
    fn scaled_seq_round_trip() {
        let mut seq = ScaledRationalSeq::new(2, &big_rational(1, 2));
        seq.rescale(&BigInt::from(3));
        assert_eq!(seq.denom(), &BigInt::from(6));
        assert_eq!(seq.value(2), big_rational(1, 2));
        seq.push_numer(BigInt::from(2)); // 2/6 = 1/3
        assert_eq!(seq.value(3), big_rational(1, 3));
        assert!(seq.strictly_decreasing());
        assert!((seq.value_f64(3) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn huge_ratio_to_f64() {
        // (2^2000 + junk) / 2^2001 should come out almost exactly 0.5
        let numer = BigInt::one() << 2000;
        let denom = BigInt::one() << 2001;
        let v = ratio_parts_to_f64(&numer, &denom);
        assert!((v - 0.5).abs() < 1e-15);
    }
}
