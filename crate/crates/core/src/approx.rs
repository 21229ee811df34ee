//! Dyadic approximation of circuits with a certified error bound.
//!
//! Rounding every gate entry to a multiple of `2^-d` perturbs each outcome
//! matrix entrywise by at most `ε`, hence in operator norm by at most
//! `n·m·ε` for an `n × m` matrix. Chaining `q` such perturbations of matrices
//! with norms at most `D` perturbs every outcome probability by at most
//! `D^(q-1) · q · ε · N`, where `N` bounds `n·m` over the gates and
//! `D = D'' + N` with `D''` an upper bound on the original gate norms.

use serde::Serialize;
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, CompiledCircuit, OutcomeString};
use crate::eval::{self, EvalError};
use crate::linalg::{opnorm_upper, round_to_dyadic_with_limit, LinalgError};
use crate::theory::Theory;
use crate::Limits;

#[derive(Debug, Error)]
pub enum ApproxError {
    #[error("eps must lie in (0, 1], got {0}")]
    EpsOutOfRange(f64),
    #[error("perturbation bound needs non-empty lists of equal length (got {norms} norms, {deltas} deltas)")]
    BadLists { norms: usize, deltas: usize },
    #[error("gate count must be at least 1")]
    NoGates,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ApproxError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorCertificate {
    pub eps: f64,
    pub q: usize,
    #[serde(rename = "N")]
    pub n: f64,
    #[serde(rename = "D_doubleprime")]
    pub d_doubleprime: f64,
    #[serde(rename = "D")]
    pub d: f64,
    pub bound: f64,
}

impl ErrorCertificate {
    pub fn new(eps: f64, q: usize, n: f64, d_doubleprime: f64) -> Self {
        let d = d_doubleprime + n;
        Self {
            eps,
            q,
            n,
            d_doubleprime,
            d,
            bound: certificate_bound(eps, q, n, d),
        }
    }
}

/// `D^(q-1) · q · ε · N`.
pub fn certificate_bound(eps: f64, q: usize, n: f64, d: f64) -> f64 {
    d.powi(q.saturating_sub(1) as i32) * q as f64 * eps * n
}

/// Rounding exponent for a target entrywise error: `ceil(log2(1/ε)) + 1`.
pub fn exponent_for_eps(eps: f64) -> Result<u32> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(ApproxError::EpsOutOfRange(eps));
    }
    Ok((1.0 / eps).log2().ceil() as u32 + 1)
}

#[derive(Debug, Clone)]
pub struct Approximation {
    /// The theory with every gate rounded to multiples of `2^-d`.
    pub rounded: Theory,
    pub d: u32,
    pub certificate: ErrorCertificate,
}

/// Rounds the theory's gates for `c` and certifies the error of every
/// outcome probability. The certificate uses the original matrices.
pub fn approximate_circuit(c: &Circuit, t: &Theory, eps: f64) -> Result<Approximation> {
    approximate_circuit_with_limits(c, t, eps, Limits::default())
}

pub fn approximate_circuit_with_limits(
    c: &Circuit,
    t: &Theory,
    eps: f64,
    limits: Limits,
) -> Result<Approximation> {
    let d = exponent_for_eps(eps)?;
    let cc = CompiledCircuit::with_options(c, t, Default::default(), limits)?;
    let mut n = 0usize;
    let mut d_doubleprime = 0.0f64;
    for g in &cc.gates {
        for m in &g.outcomes {
            n = n.max(m.rows() * m.cols());
            d_doubleprime = d_doubleprime.max(opnorm_upper(m));
        }
    }
    let mut rounded = t.clone();
    rounded.causal_certificate = None;
    for g in &mut rounded.gates {
        for m in &mut g.outcomes {
            *m = round_to_dyadic_with_limit(m, d, limits.max_exponent)?.to_real();
        }
    }
    Ok(Approximation {
        rounded,
        d,
        certificate: ErrorCertificate::new(eps, cc.gate_count(), n as f64, d_doubleprime),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OutcomeError {
    pub outcome: OutcomeString,
    pub p: f64,
    pub p_approx: f64,
    pub abs_diff: f64,
}

/// `|P(z) − P̃(z)|` for every outcome string, by the dense engine.
pub fn outcome_errors(
    c: &Circuit,
    t: &Theory,
    a: &Approximation,
    limits: Limits,
) -> Result<Vec<OutcomeError>> {
    let original = CompiledCircuit::with_options(c, t, Default::default(), limits)?;
    let approx = CompiledCircuit::with_options(c, &a.rounded, Default::default(), limits)?;
    original
        .enumerate_outcomes()?
        .map(|z| {
            let p = eval::eval_dense(&original, &z)?;
            let p_approx = eval::eval_dense(&approx, &z)?;
            Ok(OutcomeError {
                outcome: z,
                p,
                p_approx,
                abs_diff: (p - p_approx).abs(),
            })
        })
        .collect()
}

/// `D^(T-1) · Σ δ_i` with `D = max(norms)`: bounds the norm of the difference
/// of two `T`-fold products whose factors differ by `δ_i`.
pub fn product_perturbation_bound(norms: &[f64], deltas: &[f64]) -> Result<f64> {
    if norms.is_empty() || norms.len() != deltas.len() {
        return Err(ApproxError::BadLists {
            norms: norms.len(),
            deltas: deltas.len(),
        });
    }
    let d = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(d.powi(norms.len() as i32 - 1) * deltas.iter().sum::<f64>())
}

/// Precision `1/(12 · q · D^(q-1) · N)` at which rounding keeps an
/// acceptance probability of at least 2/3 above 7/12, and at most 1/3 below
/// 5/12.
pub fn bgp_margin_epsilon(q: usize, d: f64, n: f64) -> Result<f64> {
    if q == 0 {
        return Err(ApproxError::NoGates);
    }
    Ok(1.0 / (12.0 * q as f64 * d.powi(q as i32 - 1) * n))
}
