//! Outcome probabilities of closed circuits.
//!
//! Three engines compute `P(z)` for an outcome string `z`:
//!
//! - [`eval_dense`] multiplies the layer matrices,
//! - [`eval_pathsum`] embeds the layers into `D × D` matrices and sums the
//!   product of entries along every index path `0 → i_1 → … → i_{L-1} → 0`,
//!   holding only the current path and a running total,
//! - [`eval_exact`] does the same over gates rounded to multiples of `2^-d`
//!   in big-integer arithmetic and returns `f / 2^p` with `p = d · q`.
//!
//! Acceptance rules pick out a set of outcome strings; [`accept_probability`]
//! sums `P(z)` over them and [`postselect`] conditions on a second rule.

use std::collections::HashSet;
use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::circuit::{CircuitError, CompiledCircuit, NodeId, NodeIx, OutcomeString};
use crate::linalg::{
    dyadic_to_f64, round_to_dyadic_with_limit, DyadicMatrix, LinalgError, RealMatrix,
};

/// `|P(S)|` at or below this is treated as zero by the float engines.
pub const ZERO_PROBABILITY_TOL: f64 = 1e-12;

/// Probability at or above which an instance is accepted.
pub const BGP_ACCEPT: f64 = 2.0 / 3.0;
/// Probability at or below which an instance is rejected.
pub const BGP_REJECT: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("path sum would visit {paths} index paths (cap {cap}); use the dense engine")]
    PathCapExceeded { paths: u128, cap: u64 },
    #[error("invalid acceptance rule: {0}")]
    Rule(String),
    #[error("post-selection below threshold: P(S) = {p_s} < {threshold}")]
    BelowThreshold { p_s: f64, threshold: f64 },
    #[error("post-selection event has probability zero; conditional is undefined")]
    DivisionImpossible,
    #[error("post-selection threshold must be positive, got {0}")]
    BadThreshold(f64),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Engine {
    #[default]
    Dense,
    PathSum,
    /// Exact dyadic evaluation with gates rounded to multiples of `2^-d`.
    Exact {
        d: u32,
    },
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Engine::Dense => f.write_str("dense"),
            Engine::PathSum => f.write_str("pathsum"),
            Engine::Exact { d } => write!(f, "exact(d={d})"),
        }
    }
}

/// Exact value `numerator / 2^exponent`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ExactAmplitude {
    pub numerator: BigInt,
    pub exponent: u32,
}

impl ExactAmplitude {
    pub fn zero(exponent: u32) -> Self {
        Self {
            numerator: BigInt::zero(),
            exponent,
        }
    }

    pub fn to_f64(&self) -> f64 {
        dyadic_to_f64(&self.numerator, u64::from(self.exponent))
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    /// Adds an amplitude with the same exponent.
    pub fn accumulate(&mut self, other: &ExactAmplitude) {
        assert_eq!(
            self.exponent, other.exponent,
            "amplitudes must share an exponent"
        );
        self.numerator += &other.numerator;
    }
}

impl Serialize for ExactAmplitude {
    /// The numerator is written as a decimal string so that arbitrarily wide
    /// integers survive JSON consumers limited to doubles.
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ExactAmplitude", 3)?;
        st.serialize_field("f", &self.numerator.to_string())?;
        st.serialize_field("p", &self.exponent)?;
        st.serialize_field("value", &self.to_f64())?;
        st.end()
    }
}

/// Layer matrices for one outcome string, zero-padded to a common square
/// size. The state column of the first layer sits in column 0 and the effect
/// row of the last layer in row 0.
#[derive(Debug, Clone)]
pub struct EmbeddedChain<M> {
    pub dim: usize,
    pub matrices: Vec<M>,
}

fn check_outcomes(cc: &CompiledCircuit<'_>, z: &OutcomeString) -> Result<()> {
    cc.check_outcomes(z)?;
    Ok(())
}

fn pad_real(m: &RealMatrix, dim: usize) -> RealMatrix {
    let mut data = vec![0.0; dim * dim];
    for i in 0..m.rows() {
        data[i * dim..i * dim + m.cols()].copy_from_slice(m.row(i));
    }
    RealMatrix::new(dim, dim, data).expect("padded shape is valid")
}

fn pad_dyadic(m: &DyadicMatrix, dim: usize) -> DyadicMatrix {
    let mut numerators = vec![BigInt::zero(); dim * dim];
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            numerators[i * dim + j] = m.numerator(i, j).clone();
        }
    }
    DyadicMatrix::new(dim, dim, m.exponent(), numerators).expect("padded shape is valid")
}

pub fn layer_matrices(cc: &CompiledCircuit<'_>, z: &OutcomeString) -> Result<Vec<RealMatrix>> {
    check_outcomes(cc, z)?;
    (0..cc.layer_count())
        .map(|k| Ok(cc.layer_matrix(k, z)?))
        .collect()
}

pub fn embed_chain(
    cc: &CompiledCircuit<'_>,
    z: &OutcomeString,
) -> Result<EmbeddedChain<RealMatrix>> {
    let dim = cc.foliation.max_boundary_dim();
    let matrices = layer_matrices(cc, z)?
        .iter()
        .map(|m| pad_real(m, dim))
        .collect();
    Ok(EmbeddedChain { dim, matrices })
}

/// `P(z)` as the product of layer matrices.
pub fn eval_dense(cc: &CompiledCircuit<'_>, z: &OutcomeString) -> Result<f64> {
    let layers = layer_matrices(cc, z)?;
    let mut acc = RealMatrix::scalar(1.0);
    for m in &layers {
        acc = m.matmul(&acc)?;
    }
    Ok(acc.get(0, 0))
}

fn check_path_cap(cc: &CompiledCircuit<'_>) -> Result<()> {
    let dim = cc.foliation.max_boundary_dim() as u128;
    let steps = cc.layer_count().saturating_sub(1) as u32;
    let paths = dim.checked_pow(steps).unwrap_or(u128::MAX);
    if paths > u128::from(cc.limits.max_paths) {
        return Err(EvalError::PathCapExceeded {
            paths,
            cap: cc.limits.max_paths,
        });
    }
    Ok(())
}

/// Sum over index paths of an embedded chain, skipping any path whose
/// prefix product is already zero.
pub fn chain_pathsum(chain: &EmbeddedChain<RealMatrix>) -> f64 {
    fn walk(
        ms: &[RealMatrix],
        dim: usize,
        layer: usize,
        from: usize,
        prefix: f64,
        total: &mut f64,
    ) {
        let m = &ms[layer];
        if layer + 1 == ms.len() {
            *total += m.get(0, from) * prefix;
            return;
        }
        for to in 0..dim {
            let v = m.get(to, from);
            if v != 0.0 {
                walk(ms, dim, layer + 1, to, prefix * v, total);
            }
        }
    }
    let mut total = 0.0;
    walk(&chain.matrices, chain.dim, 0, 0, 1.0, &mut total);
    total
}

/// `P(z)` accumulated one index path at a time.
pub fn eval_pathsum(cc: &CompiledCircuit<'_>, z: &OutcomeString) -> Result<f64> {
    check_path_cap(cc)?;
    Ok(chain_pathsum(&embed_chain(cc, z)?))
}

/// Gate outcome matrices rounded to a common dyadic precision.
#[derive(Debug, Clone)]
pub struct RoundedGates {
    pub d: u32,
    /// `per_node[node][outcome]`.
    pub per_node: Vec<Vec<DyadicMatrix>>,
}

impl RoundedGates {
    pub fn new(cc: &CompiledCircuit<'_>, d: u32) -> Result<Self> {
        let per_node = cc
            .gates
            .iter()
            .map(|g| {
                g.outcomes
                    .iter()
                    .map(|m| round_to_dyadic_with_limit(m, d, cc.limits.max_exponent))
                    .collect::<std::result::Result<Vec<_>, _>>()
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { d, per_node })
    }

    /// Exponent of every exact amplitude of the circuit.
    pub fn amplitude_exponent(&self) -> u32 {
        self.d * self.per_node.len() as u32
    }
}

pub fn embed_chain_exact(
    cc: &CompiledCircuit<'_>,
    rounded: &RoundedGates,
    z: &OutcomeString,
) -> Result<EmbeddedChain<DyadicMatrix>> {
    check_outcomes(cc, z)?;
    let dim = cc.foliation.max_boundary_dim();
    let matrices = (0..cc.layer_count())
        .map(|k| {
            let m = cc.layer_matrix_with(k, |ix: NodeIx| rounded.per_node[ix][z.0[ix]].clone())?;
            Ok(pad_dyadic(&m, dim))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddedChain { dim, matrices })
}

pub fn chain_pathsum_exact(chain: &EmbeddedChain<DyadicMatrix>) -> ExactAmplitude {
    fn walk(
        ms: &[DyadicMatrix],
        dim: usize,
        layer: usize,
        from: usize,
        prefix: &BigInt,
        total: &mut BigInt,
    ) {
        let m = &ms[layer];
        if layer + 1 == ms.len() {
            let v = m.numerator(0, from);
            if !v.is_zero() {
                *total += v * prefix;
            }
            return;
        }
        for to in 0..dim {
            let v = m.numerator(to, from);
            if !v.is_zero() {
                walk(ms, dim, layer + 1, to, &(v * prefix), total);
            }
        }
    }
    let mut total = BigInt::zero();
    walk(&chain.matrices, chain.dim, 0, 0, &BigInt::one(), &mut total);
    ExactAmplitude {
        numerator: total,
        exponent: chain.matrices.iter().map(DyadicMatrix::exponent).sum(),
    }
}

/// Exact amplitude of the circuit with pre-rounded gates.
pub fn eval_exact_rounded(
    cc: &CompiledCircuit<'_>,
    rounded: &RoundedGates,
    z: &OutcomeString,
) -> Result<ExactAmplitude> {
    check_path_cap(cc)?;
    let amp = chain_pathsum_exact(&embed_chain_exact(cc, rounded, z)?);
    debug_assert_eq!(amp.exponent, rounded.amplitude_exponent());
    Ok(amp)
}

/// Exact `f / 2^(d·q)` for the circuit with every gate rounded to `2^-d`.
pub fn eval_exact(cc: &CompiledCircuit<'_>, z: &OutcomeString, d: u32) -> Result<ExactAmplitude> {
    eval_exact_rounded(cc, &RoundedGates::new(cc, d)?, z)
}

/// Evaluates with any engine, converting exact results to floats.
pub fn eval_with(cc: &CompiledCircuit<'_>, z: &OutcomeString, engine: Engine) -> Result<f64> {
    match engine {
        Engine::Dense => eval_dense(cc, z),
        Engine::PathSum => eval_pathsum(cc, z),
        Engine::Exact { d } => Ok(eval_exact(cc, z, d)?.to_f64()),
    }
}

/// Per-engine evaluator that reuses rounded gates across outcome strings.
struct Evaluator<'c, 'a> {
    cc: &'c CompiledCircuit<'a>,
    engine: Engine,
    rounded: Option<RoundedGates>,
}

impl<'c, 'a> Evaluator<'c, 'a> {
    fn new(cc: &'c CompiledCircuit<'a>, engine: Engine) -> Result<Self> {
        let rounded = match engine {
            Engine::Exact { d } => Some(RoundedGates::new(cc, d)?),
            _ => None,
        };
        if engine != Engine::Dense {
            check_path_cap(cc)?;
        }
        Ok(Self {
            cc,
            engine,
            rounded,
        })
    }

    fn exact(&self, z: &OutcomeString) -> Result<ExactAmplitude> {
        eval_exact_rounded(self.cc, self.rounded.as_ref().expect("exact engine"), z)
    }

    fn float(&self, z: &OutcomeString) -> Result<f64> {
        match self.engine {
            Engine::Dense => eval_dense(self.cc, z),
            Engine::PathSum => eval_pathsum(self.cc, z),
            Engine::Exact { .. } => Ok(self.exact(z)?.to_f64()),
        }
    }

    fn exponent(&self) -> u32 {
        self.rounded
            .as_ref()
            .map_or(0, RoundedGates::amplitude_exponent)
    }
}

/// Full distribution in lexicographic order of outcome strings.
pub fn distribution(cc: &CompiledCircuit<'_>, engine: Engine) -> Result<Vec<(OutcomeString, f64)>> {
    let ev = Evaluator::new(cc, engine)?;
    cc.enumerate_outcomes()?
        .map(|z| {
            let p = ev.float(&z)?;
            Ok((z, p))
        })
        .collect()
}

pub fn distribution_exact(
    cc: &CompiledCircuit<'_>,
    d: u32,
) -> Result<Vec<(OutcomeString, ExactAmplitude)>> {
    let ev = Evaluator::new(cc, Engine::Exact { d })?;
    cc.enumerate_outcomes()?
        .map(|z| {
            let a = ev.exact(&z)?;
            Ok((z, a))
        })
        .collect()
}

/// Boolean formula over per-node outcome atoms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(bool),
    /// `outcome(node) == value`.
    Eq(NodeId, usize),
    Not(Box<Expr>),
    And(Vec<Expr>),
    Or(Vec<Expr>),
    Xor(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RuleKind {
    /// Satisfied when `node` produced `outcome` (default 0).
    Bit {
        node: NodeId,
        #[serde(default)]
        outcome: usize,
    },
    /// Satisfied by the listed outcome strings.
    Subset {
        strings: Vec<String>,
    },
    Expr {
        expr: Expr,
    },
}

/// A predicate on outcome strings together with its polarity: a string is
/// accepted when the predicate's value equals `accept_if`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceRule {
    #[serde(flatten)]
    pub kind: RuleKind,
    #[serde(default = "default_polarity")]
    pub accept_if: bool,
}

fn default_polarity() -> bool {
    true
}

impl AcceptanceRule {
    pub fn new(kind: RuleKind) -> Self {
        Self {
            kind,
            accept_if: true,
        }
    }

    pub fn always() -> Self {
        Self::new(RuleKind::Expr {
            expr: Expr::Const(true),
        })
    }

    pub fn never() -> Self {
        Self::new(RuleKind::Expr {
            expr: Expr::Const(false),
        })
    }

    pub fn expr(expr: Expr) -> Self {
        Self::new(RuleKind::Expr { expr })
    }

    /// Conjunction of `node=outcome` atoms, e.g. `m1=0,m2=1`.
    pub fn parse_selector(text: &str) -> Result<Self> {
        let atoms = text
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|atom| {
                let (node, value) = atom.split_once('=').ok_or_else(|| {
                    EvalError::Rule(format!(
                        "selector atom `{atom}` is not of the form node=outcome"
                    ))
                })?;
                let value = value.trim().parse().map_err(|_| {
                    EvalError::Rule(format!("outcome `{value}` is not a non-negative integer"))
                })?;
                Ok(Expr::Eq(NodeId::Name(node.trim().to_string()), value))
            })
            .collect::<Result<Vec<_>>>()?;
        if atoms.is_empty() {
            return Err(EvalError::Rule("empty selector".into()));
        }
        Ok(Self::expr(Expr::And(atoms)))
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn compile(&self, cc: &CompiledCircuit<'_>) -> Result<CompiledRule> {
        let counts = cc.outcome_counts();
        let lookup = |id: &NodeId| -> Result<NodeIx> {
            cc.circuit
                .node_index(&id.to_string())
                .ok_or_else(|| EvalError::Rule(format!("unknown node `{id}`")))
        };
        let check = |ix: NodeIx, outcome: usize| -> Result<()> {
            if outcome >= counts[ix] {
                return Err(EvalError::Rule(format!(
                    "node `{}` has {} outcomes, rule refers to outcome {outcome}",
                    cc.circuit.nodes[ix].id, counts[ix]
                )));
            }
            Ok(())
        };
        fn build(
            e: &Expr,
            lookup: &dyn Fn(&NodeId) -> Result<NodeIx>,
            check: &dyn Fn(NodeIx, usize) -> Result<()>,
        ) -> Result<Compiled> {
            Ok(match e {
                Expr::Const(b) => Compiled::Const(*b),
                Expr::Eq(id, v) => {
                    let ix = lookup(id)?;
                    check(ix, *v)?;
                    Compiled::Eq(ix, *v)
                }
                Expr::Not(inner) => Compiled::Not(Box::new(build(inner, lookup, check)?)),
                Expr::And(xs) => Compiled::And(
                    xs.iter()
                        .map(|x| build(x, lookup, check))
                        .collect::<Result<_>>()?,
                ),
                Expr::Or(xs) => Compiled::Or(
                    xs.iter()
                        .map(|x| build(x, lookup, check))
                        .collect::<Result<_>>()?,
                ),
                Expr::Xor(xs) => Compiled::Xor(
                    xs.iter()
                        .map(|x| build(x, lookup, check))
                        .collect::<Result<_>>()?,
                ),
            })
        }
        let predicate = match &self.kind {
            RuleKind::Bit { node, outcome } => {
                let ix = lookup(node)?;
                check(ix, *outcome)?;
                Compiled::Eq(ix, *outcome)
            }
            RuleKind::Subset { strings } => {
                let mut set = HashSet::new();
                for s in strings {
                    let z: OutcomeString = s
                        .parse()
                        .map_err(|e: CircuitError| EvalError::Rule(e.to_string()))?;
                    cc.check_outcomes(&z)
                        .map_err(|e| EvalError::Rule(format!("`{s}`: {e}")))?;
                    set.insert(z.0);
                }
                Compiled::Subset(set)
            }
            RuleKind::Expr { expr } => build(expr, &lookup, &check)?,
        };
        Ok(CompiledRule {
            predicate,
            accept_if: self.accept_if,
        })
    }
}

#[derive(Debug, Clone)]
enum Compiled {
    Const(bool),
    Eq(NodeIx, usize),
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    Xor(Vec<Compiled>),
    Subset(HashSet<Vec<usize>>),
}

impl Compiled {
    fn eval(&self, z: &[usize]) -> bool {
        match self {
            Compiled::Const(b) => *b,
            Compiled::Eq(ix, v) => z[*ix] == *v,
            Compiled::Not(e) => !e.eval(z),
            Compiled::And(xs) => xs.iter().all(|x| x.eval(z)),
            Compiled::Or(xs) => xs.iter().any(|x| x.eval(z)),
            Compiled::Xor(xs) => xs.iter().fold(false, |acc, x| acc ^ x.eval(z)),
            Compiled::Subset(set) => set.contains(z),
        }
    }
}

/// An acceptance rule resolved against a particular circuit.
#[derive(Debug, Clone)]
pub struct CompiledRule {
    predicate: Compiled,
    accept_if: bool,
}

impl CompiledRule {
    pub fn accepts(&self, z: &OutcomeString) -> bool {
        self.predicate.eval(&z.0) == self.accept_if
    }
}

/// `Σ P(z)` over accepted outcome strings.
pub fn accept_probability(
    cc: &CompiledCircuit<'_>,
    rule: &CompiledRule,
    engine: Engine,
) -> Result<f64> {
    let ev = Evaluator::new(cc, engine)?;
    let mut total = 0.0;
    for z in cc.enumerate_outcomes()? {
        if rule.accepts(&z) {
            total += ev.float(&z)?;
        }
    }
    Ok(total)
}

/// Exact acceptance amplitude; all terms share the exponent `d · q`.
pub fn accept_exact(
    cc: &CompiledCircuit<'_>,
    rule: &CompiledRule,
    d: u32,
) -> Result<ExactAmplitude> {
    let ev = Evaluator::new(cc, Engine::Exact { d })?;
    let mut total = ExactAmplitude::zero(ev.exponent());
    for z in cc.enumerate_outcomes()? {
        if rule.accepts(&z) {
            total.accumulate(&ev.exact(&z)?);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct PostSelection {
    pub selector: CompiledRule,
    pub threshold: f64,
}

impl PostSelection {
    pub fn new(selector: CompiledRule, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(EvalError::BadThreshold(threshold));
        }
        Ok(Self {
            selector,
            threshold,
        })
    }
}

/// Exact conditional `l / h` with `l = f(accept ∧ S)` and `h = f(S)`, plus
/// the same ratio reduced to lowest terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExactConditional {
    pub joint: ExactAmplitude,
    pub selected: ExactAmplitude,
    #[serde(serialize_with = "bigint_string")]
    pub reduced_numerator: BigInt,
    #[serde(serialize_with = "bigint_string")]
    pub reduced_denominator: BigInt,
}

fn bigint_string<S: Serializer>(v: &BigInt, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl ExactConditional {
    fn new(joint: ExactAmplitude, selected: ExactAmplitude) -> Self {
        let g = joint.numerator.gcd(&selected.numerator);
        let mut num = &joint.numerator / &g;
        let mut den = &selected.numerator / &g;
        if den.is_negative() {
            num = -num;
            den = -den;
        }
        Self {
            joint,
            selected,
            reduced_numerator: num,
            reduced_denominator: den,
        }
    }

    pub fn to_f64(&self) -> f64 {
        // both numerators share one exponent, so the ratio is scale free
        let bits = self
            .reduced_numerator
            .bits()
            .max(self.reduced_denominator.bits());
        let shift = bits.saturating_sub(1000);
        let n = dyadic_to_f64(&(&self.reduced_numerator >> shift), 0);
        let d = dyadic_to_f64(&(&self.reduced_denominator >> shift), 0);
        n / d
    }

    /// Checks `P(accept | S) · P(S) = P(accept ∧ S)` as an integer identity.
    pub fn identity_holds(&self) -> bool {
        self.joint.exponent == self.selected.exponent
            && &self.reduced_numerator * &self.selected.numerator
                == &self.reduced_denominator * &self.joint.numerator
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PostSelected {
    /// `P(accept ∧ S)`.
    pub joint: f64,
    /// `P(S)`.
    pub selected: f64,
    /// `P(accept | S)`.
    pub conditional: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exact: Option<ExactConditional>,
}

/// Conditional acceptance probability given the selector, refusing when
/// `P(S)` is zero or below the threshold.
pub fn postselect(
    cc: &CompiledCircuit<'_>,
    rule: &CompiledRule,
    s: &PostSelection,
    engine: Engine,
) -> Result<PostSelected> {
    let ev = Evaluator::new(cc, engine)?;
    if let Engine::Exact { .. } = engine {
        let mut joint = ExactAmplitude::zero(ev.exponent());
        let mut selected = ExactAmplitude::zero(ev.exponent());
        for z in cc.enumerate_outcomes()? {
            if s.selector.accepts(&z) {
                let a = ev.exact(&z)?;
                if rule.accepts(&z) {
                    joint.accumulate(&a);
                }
                selected.accumulate(&a);
            }
        }
        if selected.is_zero() {
            return Err(EvalError::DivisionImpossible);
        }
        let p_s = selected.to_f64();
        if p_s < s.threshold {
            return Err(EvalError::BelowThreshold {
                p_s,
                threshold: s.threshold,
            });
        }
        let exact = ExactConditional::new(joint, selected);
        return Ok(PostSelected {
            joint: exact.joint.to_f64(),
            selected: p_s,
            conditional: exact.to_f64(),
            exact: Some(exact),
        });
    }
    let mut joint = 0.0;
    let mut selected = 0.0;
    for z in cc.enumerate_outcomes()? {
        if s.selector.accepts(&z) {
            let p = ev.float(&z)?;
            if rule.accepts(&z) {
                joint += p;
            }
            selected += p;
        }
    }
    if selected.abs() <= ZERO_PROBABILITY_TOL {
        return Err(EvalError::DivisionImpossible);
    }
    if selected < s.threshold {
        return Err(EvalError::BelowThreshold {
            p_s: selected,
            threshold: s.threshold,
        });
    }
    Ok(PostSelected {
        joint,
        selected,
        conditional: joint / selected,
        exact: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    InLanguage,
    OutOfLanguage,
    Undecided,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::InLanguage => "in-language",
            Verdict::OutOfLanguage => "out-of-language",
            Verdict::Undecided => "undecided",
        })
    }
}

/// Classifies an acceptance probability against the `(accept, reject)`
/// thresholds.
pub fn verdict(p: f64, thresholds: (f64, f64)) -> Verdict {
    // absorb float noise from summing exact thirds
    const SLACK: f64 = 1e-12;
    if p >= thresholds.0 - SLACK {
        Verdict::InLanguage
    } else if p <= thresholds.1 + SLACK {
        Verdict::OutOfLanguage
    } else {
        Verdict::Undecided
    }
}

/// Verdict for each (circuit, rule) instance of a family.
pub fn decide_bgp(
    family: &[(CompiledCircuit<'_>, CompiledRule)],
    thresholds: (f64, f64),
    engine: Engine,
) -> Result<Vec<Verdict>> {
    family
        .iter()
        .map(|(cc, rule)| Ok(verdict(accept_probability(cc, rule, engine)?, thresholds)))
        .collect()
}
