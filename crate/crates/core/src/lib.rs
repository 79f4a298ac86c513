//! Numerical laboratory for the harmonic descent chain and the critical
//! beta-splitting random tree.
//!
//! The crate is organized around one recursion and the tree model behind it:
//!
//! - [`kernels`]: harmonic numbers, split laws `q_m`, and descent kernels
//!   `p(n, i)`, in float and exact-rational arithmetic.
//! - [`recursion`]: the averaged recursion `x_n = sum_i p(n,i) x_i`, its
//!   closed-form limit, occupation probabilities, and the long-term /
//!   short-term bound checks.
//! - [`differences`]: the consecutive-difference recursion with exact
//!   positive coefficients, cross-checked against direct differences.
//! - [`exponent`]: the implicit series equation for the convergence
//!   exponent, its bisection solver, the Euler-Maclaurin remainder check,
//!   and log-log rate fitting.
//! - [`treesim`]: seeded, reproducible Monte Carlo for the discrete tree,
//!   the continuous-time total length, and the descent chain.
//! - [`moments`]: exact dynamic-programming means and variances for clade
//!   counts, clade shapes, and the total length; the oracles for the
//!   simulator.
//! - [`stats`]: summary statistics, KS normality spot checks, and the
//!   weighted occupation-sum convergence check.
//! - [`verify`]: the acceptance suite used by the `acceptance` test target
//!   and the CLI's `verify-all`.

pub mod differences;
pub mod error;
pub mod exact;
pub mod exponent;
pub mod kernels;
pub mod moments;
pub mod numeric;
pub mod recursion;
pub mod stats;
pub mod treesim;
pub mod verify;

pub use error::{Error, Result};
pub use exact::ScaledRationalSeq;
pub use kernels::{DescentKernel, HarmonicTable, SplitDistribution, SplitKind};
pub use moments::MomentTable;
pub use recursion::{OccupationVector, Sequence};
pub use stats::NormalityReport;
pub use treesim::{CladeKey, ShapeMode, SimBatch, SimConfig, Statistic};
