//! Exact symbolic kernel for cohomological vertex algebras.
//!
//! A cohomological vertex algebra (CVA) replaces the Laurent series of a
//! classical vertex algebra by the cohomology ring of a punctured (or
//! multiplied-origin) formal `n`-disk: power series in `z_1..z_n` plus
//! degree-`N` singular generators `Om_z^k` playing the role of
//! `z^{-1-k}`, with `Om^j * Om^k = 0`.
//!
//! The crate provides:
//!
//! * [`arith`] — arbitrary-precision rationals, a graded-commutative
//!   parameter ring, and multi-index combinatorics.
//! * [`omega`] — truncated one-, two- and three-variable omega-form series,
//!   Hasse derivatives, residues, and the Delta distribution.
//! * [`config`] — the two-variable configuration ring with diagonal poles,
//!   its expansion embeddings, and expansion matching.
//! * [`presentation`] — generator/bracket presentations of CVAs, a text
//!   format, validation, and skew-symmetric completion.
//! * [`state`] — the free graded state space: normal-ordered mode monomials,
//!   bigrading, translation operators, basis enumeration.
//! * [`engine`] — the OPE engine: state/field dictionary, local brackets via
//!   the Dong-Li recursion, k-products, and vertex-operator evaluation.
//! * [`verifier`] — executable identity suites (Delta calculus, vacuum and
//!   translation axioms, skew-symmetry, Jacobi, associativity, conformal
//!   structure, correlation maps, mutation robustness).
//! * [`builders`] — the stock algebras (cohomological Witt/Virasoro,
//!   beta-gamma, Heisenberg, affine) and BRST reduction with cohomology
//!   dimension tables.
//!
//! All arithmetic is exact; the only approximation knob is the truncation
//! order of the regular (power series) part of each series.

pub mod arith;
pub mod builders;
pub mod config;
pub mod engine;
pub mod linalg;
pub mod omega;
pub mod presentation;
pub mod state;
pub mod verifier;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("multi-index length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("parameter ring mismatch")]
    RingMismatch,
    #[error("ambient mismatch: ({0},{1}) vs ({2},{3})")]
    AmbientMismatch(usize, i64, usize, i64),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error("unknown variable group `{0}`")]
    UnknownGroup(String),
    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("inconsistent bracket table for ({0},{1}): {2}")]
    InconsistentTable(String, String, String),
    #[error("presentation invalid: {0}")]
    Invalid(String),
    #[error("state space not enumerable: {0}")]
    NonEnumerable(String),
    #[error("missing bracket table entry for ({0},{1})")]
    MissingBracket(String, String),
    #[error("inhomogeneous state: {0}")]
    Inhomogeneous(String),
    #[error("incompatible truncations: {0}")]
    Truncation(String),
    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
