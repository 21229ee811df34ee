//! Circuit simulation and verification for generalised probabilistic theories.
//!
//! A [`Theory`](theory::Theory) declares system types (real vector spaces of
//! fixed dimension) and a finite gate set whose outcomes are real matrices.
//! A [`Circuit`](circuit::Circuit) wires gate instances into a closed acyclic
//! diagram. The [`eval`] module computes outcome probabilities with three
//! independent engines:
//!
//! - `dense`: product of layer matrices,
//! - `pathsum`: sum over intermediate indices, one path at a time,
//! - `exact`: the same path sum over dyadic-rounded gates in big-integer
//!   arithmetic, returning `f / 2^p`.
//!
//! [`approx`] certifies the error introduced by rounding gate entries,
//! and [`oracle`] runs adaptive programs with classical oracle queries in
//! causal theories.

pub mod approx;
pub mod circuit;
pub mod eval;
pub mod linalg;
pub mod oracle;
pub mod theory;

use std::fmt;

use serde::{Deserialize, Serialize};

/// A validation finding, located by a JSON-pointer-like path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Resource caps shared by the evaluators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Maximum entries in any constructed matrix.
    pub max_entries: usize,
    /// Maximum number of outcome strings enumerated.
    pub max_enum: u64,
    /// Maximum number of index paths in a path sum.
    pub max_paths: u64,
    /// Maximum dyadic rounding exponent.
    pub max_exponent: u32,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_entries: linalg::DEFAULT_MAX_ENTRIES,
            max_enum: 1 << 24,
            max_paths: 1 << 26,
            max_exponent: linalg::DEFAULT_MAX_EXPONENT,
        }
    }
}

impl Limits {
    /// Defaults, with `GPTSIM_MAX_ENUM` overriding the enumeration cap.
    pub fn from_env() -> Self {
        let mut limits = Self::default();
        if let Some(n) = std::env::var("GPTSIM_MAX_ENUM")
            .ok()
            .and_then(|v| v.trim().parse().ok())
        {
            limits.max_enum = n;
        }
        limits
    }
}
