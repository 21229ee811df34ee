//! Adaptive programs with classical oracle queries in causal theories.
//!
//! An adaptive program places gates one at a time, sampling each outcome from
//! its conditional distribution given the outcomes so far. In a causal theory
//! that distribution is well defined: every open wire is capped with the
//! type's deterministic effect `u` and the capped circuit is evaluated.
//! Queries map past outcomes to a string, ask the oracle, and branches jump
//! forward on a recorded value.
//!
//! Sampling draws one uniform `f64` from a `ChaCha8Rng` seeded with the run
//! seed for every gate step, in execution order, and picks the first outcome
//! whose cumulative probability exceeds the draw. [`estimate_accept`] derives
//! per-run seeds from a `ChaCha8Rng` seeded with the master seed.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, CompiledCircuit, NodeId, OutcomeString, PortRef};
use crate::eval::{self, EvalError, Expr, ZERO_PROBABILITY_TOL};
use crate::linalg::RealMatrix;
use crate::theory::{check_causality, CausalityViolation, Gate, Theory, DEFAULT_CAUSALITY_TOL};
use crate::Limits;

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.959963984540054;

/// Cap on execution paths explored by static validation and exact
/// acceptance.
pub const MAX_PROGRAM_PATHS: usize = 1 << 16;

const CAP_PREFIX: &str = "__cap_";

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("theory is not causal; sample by joint evaluation instead ({} violation(s))", .0.len())]
    NonCausal(Vec<CausalityViolation>),
    #[error("oracle is undefined on `{0}`")]
    OracleDomain(String),
    #[error("program error at step {step}: {message}")]
    Structure { step: usize, message: String },
    #[error("conditioning on an outcome prefix of probability {0}")]
    ConditioningOnNull(f64),
    #[error("number of runs must be positive")]
    NoRuns,
    #[error("program has more than {0} execution paths")]
    TooManyPaths(usize),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedPredicate {
    /// Parity of the digit sum.
    Parity,
    /// 1 iff every digit is non-zero.
    And,
    /// 1 iff some digit is non-zero.
    Or,
    /// 1 iff more than half the digits are non-zero.
    Majority,
}

/// Total Boolean function on strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassicalOracle {
    /// Explicit table; any other string is outside the domain.
    Table(BTreeMap<String, u8>),
    Named(NamedPredicate),
    /// Membership in a fixed set of strings.
    Set(BTreeSet<String>),
}

impl ClassicalOracle {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn query(&self, input: &str) -> Result<u8> {
        let digits = || input.chars().filter_map(|c| c.to_digit(10));
        Ok(match self {
            ClassicalOracle::Table(t) => match t.get(input) {
                Some(&b) if b <= 1 => b,
                _ => return Err(OracleError::OracleDomain(input.to_string())),
            },
            ClassicalOracle::Named(NamedPredicate::Parity) => (digits().sum::<u32>() % 2) as u8,
            ClassicalOracle::Named(NamedPredicate::And) => u8::from(digits().all(|d| d != 0)),
            ClassicalOracle::Named(NamedPredicate::Or) => u8::from(digits().any(|d| d != 0)),
            ClassicalOracle::Named(NamedPredicate::Majority) => {
                let n = digits().count();
                u8::from(2 * digits().filter(|&d| d != 0).count() > n)
            }
            ClassicalOracle::Set(s) => u8::from(s.contains(input)),
        })
    }
}

/// Functions of past outcomes used to form oracle inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryFn {
    /// The single argument's value.
    Select,
    /// Argument values written one after another.
    Concat,
    /// Parity of the sum of the argument values, as `0` or `1`.
    Parity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateStep {
    pub id: NodeId,
    /// Gate name in the theory.
    pub name: String,
    /// Output ports of earlier gate steps, in input-port order.
    #[serde(default)]
    pub inputs: Vec<(NodeId, usize)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryStep {
    pub id: NodeId,
    #[serde(rename = "fn")]
    pub function: QueryFn,
    /// Ids of earlier gate or query steps.
    pub args: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchStep {
    /// Id of an earlier gate or query step.
    pub on: NodeId,
    /// Value (as a decimal string) to step index; `steps.len()` ends the run.
    pub targets: BTreeMap<String, usize>,
    #[serde(default)]
    pub default: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Gate(GateStep),
    Query(QueryStep),
    Branch(BranchStep),
    Halt {},
}

/// Sequence of steps plus an acceptance formula over step ids. Atoms on steps
/// not executed on a run evaluate to false.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveProgram {
    pub theory: String,
    pub steps: Vec<Step>,
    pub accept: Expr,
}

impl AdaptiveProgram {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    fn branch_target(&self, step: usize, b: &BranchStep, value: usize) -> Result<usize> {
        b.targets
            .get(&value.to_string())
            .copied()
            .or(b.default)
            .ok_or_else(|| OracleError::Structure {
                step,
                message: format!("branch on `{}` has no target for value {value}", b.on),
            })
    }

    fn step_ids(&self) -> Result<BTreeMap<String, usize>> {
        let mut ids = BTreeMap::new();
        for (i, s) in self.steps.iter().enumerate() {
            let id = match s {
                Step::Gate(g) => &g.id,
                Step::Query(q) => &q.id,
                _ => continue,
            };
            if ids.insert(id.to_string(), i).is_some() {
                return Err(OracleError::Structure {
                    step: i,
                    message: format!("duplicate step id `{id}`"),
                });
            }
        }
        Ok(ids)
    }
}

/// Deterministic effects for a causal theory, wired in as cap gates.
#[derive(Debug, Clone)]
pub struct CausalContext {
    /// The theory extended with one `u` effect gate per type.
    pub theory: Theory,
    caps: BTreeMap<String, String>,
    pub limits: Limits,
}

impl CausalContext {
    /// Uses the theory's stored certificate, or checks causality once.
    pub fn new(t: &Theory) -> Result<Self> {
        let effects = match &t.causal_certificate {
            Some(cert) => cert.clone(),
            None => {
                let report = check_causality(t, DEFAULT_CAUSALITY_TOL);
                if !report.is_causal {
                    return Err(OracleError::NonCausal(report.violations));
                }
                report
                    .per_type_effect
                    .into_iter()
                    .filter_map(|(k, v)| v.map(|m| (k, m)))
                    .collect()
            }
        };
        let mut theory = t.clone();
        let mut caps = BTreeMap::new();
        for ty in &t.types {
            let u: &RealMatrix = effects.get(&ty.label).ok_or_else(|| {
                OracleError::NonCausal(vec![CausalityViolation {
                    subject: ty.label.clone(),
                    kind: crate::theory::ViolationKind::UndeterminedEffect,
                    residual: None,
                }])
            })?;
            let name = format!("{CAP_PREFIX}{}", ty.label);
            theory.gates.push(Gate::new(
                name.clone(),
                &[ty.label.as_str()],
                &[],
                vec![u.clone()],
            ));
            caps.insert(ty.label.clone(), name);
        }
        Ok(Self {
            theory,
            caps,
            limits: Limits::default(),
        })
    }

    fn output_type(&self, c: &Circuit, port: PortRef) -> &str {
        let g = self
            .theory
            .gate(&c.nodes[port.node].gate)
            .expect("placed gate exists");
        &g.outputs[port.port]
    }

    /// Closes `c` by capping each port in `open`, then evaluates every
    /// outcome of the node at `vary` (or just `outcomes` if `None`).
    fn capped_probabilities(
        &self,
        c: &Circuit,
        open: &BTreeSet<PortRef>,
        outcomes: &[usize],
        vary: Option<(usize, usize)>,
    ) -> Result<Vec<f64>> {
        if c.nodes.is_empty() {
            return Ok(vec![1.0]);
        }
        let mut closed = c.clone();
        for &p in open {
            let cap = closed.add_node(
                format!("{CAP_PREFIX}{}", closed.nodes.len()),
                self.caps[self.output_type(c, p)].clone(),
            );
            closed.connect((p.node, p.port), (cap, 0));
        }
        let cc =
            CompiledCircuit::with_options(&closed, &self.theory, Default::default(), self.limits)?;
        let mut z = outcomes.to_vec();
        z.resize(closed.nodes.len(), 0);
        let mut z = OutcomeString(z);
        match vary {
            None => Ok(vec![eval::eval_dense(&cc, &z)?]),
            Some((node, count)) => (0..count)
                .map(|r| {
                    z.0[node] = r;
                    Ok(eval::eval_dense(&cc, &z)?)
                })
                .collect(),
        }
    }
}

/// Gates placed so far, their outcomes, and the output ports not yet
/// consumed.
#[derive(Debug, Clone)]
pub struct PartialCircuit {
    pub circuit: Circuit,
    pub outcomes: Vec<usize>,
    pub open: BTreeSet<PortRef>,
}

impl PartialCircuit {
    pub fn new(theory_ref: impl Into<String>) -> Self {
        Self {
            circuit: Circuit::new(theory_ref),
            outcomes: Vec::new(),
            open: BTreeSet::new(),
        }
    }

    fn check_inputs(
        &self,
        ctx: &CausalContext,
        gate: &Gate,
        inputs: &[PortRef],
    ) -> std::result::Result<(), String> {
        if inputs.len() != gate.inputs.len() {
            return Err(format!(
                "gate `{}` takes {} inputs, got {}",
                gate.name,
                gate.inputs.len(),
                inputs.len()
            ));
        }
        let mut seen = BTreeSet::new();
        for (k, p) in inputs.iter().enumerate() {
            if !self.open.contains(p) || !seen.insert(*p) {
                return Err(format!("input {k} of `{}` is not an open wire", gate.name));
            }
            let ty = ctx.output_type(&self.circuit, *p);
            if ty != gate.inputs[k] {
                return Err(format!(
                    "input {k} of `{}` expects `{}`, wire carries `{ty}`",
                    gate.name, gate.inputs[k]
                ));
            }
        }
        Ok(())
    }

    /// Places `gate` on `inputs` with the given outcome.
    pub fn place(
        &mut self,
        ctx: &CausalContext,
        id: &str,
        gate: &str,
        inputs: &[PortRef],
        outcome: usize,
    ) {
        let g = ctx.theory.gate(gate).expect("gate exists");
        let ix = self.circuit.add_node(id, gate);
        for (k, p) in inputs.iter().enumerate() {
            self.open.remove(p);
            self.circuit.connect((p.node, p.port), (ix, k));
        }
        for port in 0..g.outputs.len() {
            self.open.insert(PortRef::new(ix, port));
        }
        self.outcomes.push(outcome);
    }

    /// `P(past)`: every open wire capped with `u`.
    pub fn prefix_probability(&self, ctx: &CausalContext) -> Result<f64> {
        Ok(ctx.capped_probabilities(&self.circuit, &self.open, &self.outcomes, None)?[0])
    }
}

/// Conditional distribution of the next gate's outcome given the past.
pub fn marginal_next(
    ctx: &CausalContext,
    partial: &PartialCircuit,
    gate: &str,
    inputs: &[PortRef],
) -> Result<Vec<f64>> {
    let step = partial.outcomes.len();
    let g = ctx
        .theory
        .gate(gate)
        .ok_or_else(|| OracleError::Structure {
            step,
            message: format!("unknown gate `{gate}`"),
        })?;
    partial
        .check_inputs(ctx, g, inputs)
        .map_err(|message| OracleError::Structure { step, message })?;
    let p_past = partial.prefix_probability(ctx)?;
    if p_past.abs() <= ZERO_PROBABILITY_TOL {
        return Err(OracleError::ConditioningOnNull(p_past));
    }
    let mut next = partial.clone();
    next.place(ctx, "__next", gate, inputs, 0);
    let joint = ctx.capped_probabilities(
        &next.circuit,
        &next.open,
        &next.outcomes,
        Some((step, g.outcome_count())),
    )?;
    Ok(joint.into_iter().map(|p| p / p_past).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateRecord {
    pub id: String,
    pub gate: String,
    pub outcome: usize,
    /// Conditional probability of the sampled outcome.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QueryRecord {
    pub id: String,
    pub input: String,
    pub answer: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionTrace {
    pub gates: Vec<GateRecord>,
    pub queries: Vec<QueryRecord>,
    pub accept: bool,
    /// Product of the sampled conditional probabilities.
    pub path_probability: f64,
    /// The closed circuit realised on this run, nodes in execution order.
    #[serde(skip)]
    pub realised: Circuit,
}

impl ExecutionTrace {
    pub fn outcomes(&self) -> OutcomeString {
        OutcomeString(self.gates.iter().map(|g| g.outcome).collect())
    }
}

fn render(values: &[usize]) -> String {
    OutcomeString(values.to_vec()).to_string()
}

/// Mutable run state shared by sampling and exact enumeration.
#[derive(Debug, Clone)]
struct RunState {
    partial: PartialCircuit,
    ports: BTreeMap<String, usize>,
    values: BTreeMap<String, usize>,
    gates: Vec<GateRecord>,
    queries: Vec<QueryRecord>,
    probability: f64,
}

impl RunState {
    fn new(theory_ref: &str) -> Self {
        Self {
            partial: PartialCircuit::new(theory_ref),
            ports: BTreeMap::new(),
            values: BTreeMap::new(),
            gates: Vec::new(),
            queries: Vec::new(),
            probability: 1.0,
        }
    }

    fn value(&self, step: usize, id: &NodeId) -> Result<usize> {
        self.values
            .get(&id.to_string())
            .copied()
            .ok_or_else(|| OracleError::Structure {
                step,
                message: format!("`{id}` has not been executed"),
            })
    }

    fn resolve_inputs(&self, step: usize, g: &GateStep) -> Result<Vec<PortRef>> {
        g.inputs
            .iter()
            .map(|(id, port)| {
                self.ports
                    .get(&id.to_string())
                    .map(|&node| PortRef::new(node, *port))
                    .ok_or_else(|| OracleError::Structure {
                        step,
                        message: format!("input `{id}` is not an executed gate step"),
                    })
            })
            .collect()
    }

    fn record_gate(
        &mut self,
        ctx: &CausalContext,
        g: &GateStep,
        inputs: &[PortRef],
        outcome: usize,
        p: f64,
    ) {
        let id = g.id.to_string();
        self.ports
            .insert(id.clone(), self.partial.circuit.nodes.len());
        self.partial.place(ctx, &id, &g.name, inputs, outcome);
        self.values.insert(id.clone(), outcome);
        self.gates.push(GateRecord {
            id,
            gate: g.name.clone(),
            outcome,
            probability: p,
        });
        self.probability *= p;
    }

    fn run_query(&mut self, step: usize, q: &QueryStep, oracle: &ClassicalOracle) -> Result<()> {
        let args = q
            .args
            .iter()
            .map(|a| self.value(step, a))
            .collect::<Result<Vec<_>>>()?;
        let input = match q.function {
            QueryFn::Select => {
                if args.len() != 1 {
                    return Err(OracleError::Structure {
                        step,
                        message: "select takes exactly one argument".into(),
                    });
                }
                render(&args)
            }
            QueryFn::Concat => render(&args),
            QueryFn::Parity => (args.iter().sum::<usize>() % 2).to_string(),
        };
        let answer = oracle.query(&input)?;
        let id = q.id.to_string();
        self.values.insert(id.clone(), usize::from(answer));
        self.queries.push(QueryRecord { id, input, answer });
        Ok(())
    }

    fn finish(self, step: usize, accept: &Expr) -> Result<ExecutionTrace> {
        if !self.partial.open.is_empty() {
            return Err(OracleError::Structure {
                step,
                message: format!("run ends with {} open wire(s)", self.partial.open.len()),
            });
        }
        Ok(ExecutionTrace {
            accept: eval_expr(accept, &self.values),
            gates: self.gates,
            queries: self.queries,
            path_probability: self.probability,
            realised: self.partial.circuit,
        })
    }
}

fn eval_expr(e: &Expr, values: &BTreeMap<String, usize>) -> bool {
    match e {
        Expr::Const(b) => *b,
        Expr::Eq(id, v) => values.get(&id.to_string()) == Some(v),
        Expr::Not(x) => !eval_expr(x, values),
        Expr::And(xs) => xs.iter().all(|x| eval_expr(x, values)),
        Expr::Or(xs) => xs.iter().any(|x| eval_expr(x, values)),
        Expr::Xor(xs) => xs.iter().fold(false, |acc, x| acc ^ eval_expr(x, values)),
    }
}

fn expr_ids<'e>(e: &'e Expr, out: &mut Vec<&'e NodeId>) {
    match e {
        Expr::Const(_) => {}
        Expr::Eq(id, _) => out.push(id),
        Expr::Not(x) => expr_ids(x, out),
        Expr::And(xs) | Expr::Or(xs) | Expr::Xor(xs) => xs.iter().for_each(|x| expr_ids(x, out)),
    }
}

/// Picks the first outcome whose cumulative probability exceeds `u`.
fn choose(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (r, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = r;
            if u < cum {
                return r;
            }
        }
    }
    last_positive
}

/// Checks ids, gate names, branch targets and the accept formula, then
/// walks every execution path to confirm wiring is well typed and that each
/// path closes the circuit.
pub fn validate_program(ctx: &CausalContext, p: &AdaptiveProgram) -> Result<()> {
    let ids = p.step_ids()?;
    let mut atoms = Vec::new();
    expr_ids(&p.accept, &mut atoms);
    for id in atoms {
        if !ids.contains_key(&id.to_string()) {
            return Err(OracleError::Structure {
                step: p.steps.len(),
                message: format!("accept formula refers to unknown step `{id}`"),
            });
        }
    }
    for (i, s) in p.steps.iter().enumerate() {
        match s {
            Step::Gate(g)
                if ctx.theory.gate(&g.name).is_none() || g.name.starts_with(CAP_PREFIX) =>
            {
                return Err(OracleError::Structure {
                    step: i,
                    message: format!("unknown gate `{}`", g.name),
                });
            }
            Step::Branch(b) => {
                for &t in b.targets.values().chain(b.default.iter()) {
                    if t <= i || t > p.steps.len() {
                        return Err(OracleError::Structure {
                            step: i,
                            message: format!(
                                "branch target {t} must be a later step (at most {})",
                                p.steps.len()
                            ),
                        });
                    }
                }
            }
            _ => {}
        }
    }

    #[derive(Clone)]
    struct Shape {
        open: BTreeMap<(String, usize), String>,
        executed: BTreeMap<String, usize>,
    }
    let mut paths = 0usize;
    let mut stack = vec![(
        0usize,
        Shape {
            open: BTreeMap::new(),
            executed: BTreeMap::new(),
        },
    )];
    while let Some((mut i, mut shape)) = stack.pop() {
        loop {
            let err = |message: String| OracleError::Structure { step: i, message };
            if i >= p.steps.len() || matches!(p.steps[i], Step::Halt {}) {
                if let Some(((id, port), _)) = shape.open.iter().next() {
                    return Err(err(format!(
                        "an execution path ends with output {port} of `{id}` unconnected"
                    )));
                }
                paths += 1;
                if paths > MAX_PROGRAM_PATHS {
                    return Err(OracleError::TooManyPaths(MAX_PROGRAM_PATHS));
                }
                break;
            }
            match &p.steps[i] {
                Step::Gate(g) => {
                    let gate = ctx.theory.gate(&g.name).expect("checked above");
                    if g.inputs.len() != gate.inputs.len() {
                        return Err(err(format!(
                            "gate `{}` takes {} inputs, got {}",
                            gate.name,
                            gate.inputs.len(),
                            g.inputs.len()
                        )));
                    }
                    for (k, (id, port)) in g.inputs.iter().enumerate() {
                        let ty = shape.open.remove(&(id.to_string(), *port)).ok_or_else(|| {
                            err(format!(
                                "input {k} refers to `{id}` port {port}, which is not an open wire"
                            ))
                        })?;
                        if ty != gate.inputs[k] {
                            return Err(err(format!(
                                "input {k} of `{}` expects `{}`, wire carries `{ty}`",
                                gate.name, gate.inputs[k]
                            )));
                        }
                    }
                    for (port, ty) in gate.outputs.iter().enumerate() {
                        shape.open.insert((g.id.to_string(), port), ty.clone());
                    }
                    shape
                        .executed
                        .insert(g.id.to_string(), gate.outcome_count());
                    i += 1;
                }
                Step::Query(q) => {
                    for a in &q.args {
                        if !shape.executed.contains_key(&a.to_string()) {
                            return Err(err(format!("query argument `{a}` has not been executed")));
                        }
                    }
                    if q.function == QueryFn::Select && q.args.len() != 1 {
                        return Err(err("select takes exactly one argument".into()));
                    }
                    shape.executed.insert(q.id.to_string(), 2);
                    i += 1;
                }
                Step::Branch(b) => {
                    let values = *shape.executed.get(&b.on.to_string()).ok_or_else(|| {
                        err(format!("branch on `{}` before it is executed", b.on))
                    })?;
                    let targets: BTreeSet<usize> = (0..values)
                        .map(|v| p.branch_target(i, b, v))
                        .collect::<Result<_>>()?;
                    let mut targets = targets.into_iter();
                    let first = targets.next().expect("at least one value");
                    for t in targets {
                        stack.push((t, shape.clone()));
                    }
                    i = first;
                }
                Step::Halt {} => unreachable!(),
            }
        }
    }
    Ok(())
}

/// Runs the program once with outcomes sampled from the seeded stream.
pub fn run_adaptive(
    ctx: &CausalContext,
    p: &AdaptiveProgram,
    oracle: &ClassicalOracle,
    seed: u64,
) -> Result<ExecutionTrace> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = RunState::new(&p.theory);
    let mut i = 0;
    while i < p.steps.len() {
        match &p.steps[i] {
            Step::Gate(g) => {
                let inputs = state.resolve_inputs(i, g)?;
                let probs = marginal_next(ctx, &state.partial, &g.name, &inputs)?;
                let r = choose(&probs, rng.random::<f64>());
                state.record_gate(ctx, g, &inputs, r, probs[r]);
                i += 1;
            }
            Step::Query(q) => {
                state.run_query(i, q, oracle)?;
                i += 1;
            }
            Step::Branch(b) => {
                let v = state.value(i, &b.on)?;
                i = p.branch_target(i, b, v)?;
            }
            Step::Halt {} => break,
        }
    }
    state.finish(i, &p.accept)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceptEstimate {
    pub runs: u64,
    pub accepted: u64,
    pub frequency: f64,
    /// Wilson score 95% interval.
    pub interval: (f64, f64),
    pub queries_total: u64,
    pub queries_min: u64,
    pub queries_max: u64,
}

/// Wilson score interval for `successes` out of `n` at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z / denom * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-run seeds drawn from the master seed's stream.
pub fn run_seeds(seed: u64, n: u64) -> impl Iterator<Item = u64> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(move |_| master.next_u64())
}

pub fn estimate_accept(
    ctx: &CausalContext,
    p: &AdaptiveProgram,
    oracle: &ClassicalOracle,
    n_runs: u64,
    seed: u64,
) -> Result<AcceptEstimate> {
    if n_runs == 0 {
        return Err(OracleError::NoRuns);
    }
    let mut accepted = 0;
    let (mut total, mut min, mut max) = (0u64, u64::MAX, 0u64);
    for s in run_seeds(seed, n_runs) {
        let trace = run_adaptive(ctx, p, oracle, s)?;
        accepted += u64::from(trace.accept);
        let q = trace.queries.len() as u64;
        total += q;
        min = min.min(q);
        max = max.max(q);
    }
    Ok(AcceptEstimate {
        runs: n_runs,
        accepted,
        frequency: accepted as f64 / n_runs as f64,
        interval: wilson_interval(accepted, n_runs, WILSON_Z),
        queries_total: total,
        queries_min: min,
        queries_max: max,
    })
}

/// Acceptance probability summed over every execution branch with
/// non-zero probability.
pub fn exact_accept_probability(
    ctx: &CausalContext,
    p: &AdaptiveProgram,
    oracle: &ClassicalOracle,
) -> Result<f64> {
    let mut total = 0.0;
    let mut leaves = 0usize;
    let mut stack = vec![(0usize, RunState::new(&p.theory))];
    while let Some((mut i, mut state)) = stack.pop() {
        loop {
            if i >= p.steps.len() || matches!(p.steps[i], Step::Halt {}) {
                leaves += 1;
                if leaves > MAX_PROGRAM_PATHS {
                    return Err(OracleError::TooManyPaths(MAX_PROGRAM_PATHS));
                }
                let trace = state.finish(i, &p.accept)?;
                if trace.accept {
                    total += trace.path_probability;
                }
                break;
            }
            match &p.steps[i] {
                Step::Gate(g) => {
                    let inputs = state.resolve_inputs(i, g)?;
                    let probs = marginal_next(ctx, &state.partial, &g.name, &inputs)?;
                    let live: Vec<usize> = (0..probs.len())
                        .filter(|&r| probs[r] > ZERO_PROBABILITY_TOL)
                        .collect();
                    let Some((&first, rest)) = live.split_first() else {
                        break;
                    };
                    for &r in rest {
                        let mut branch = state.clone();
                        branch.record_gate(ctx, g, &inputs, r, probs[r]);
                        stack.push((i + 1, branch));
                    }
                    state.record_gate(ctx, g, &inputs, first, probs[first]);
                    i += 1;
                }
                Step::Query(q) => {
                    state.run_query(i, q, oracle)?;
                    i += 1;
                }
                Step::Branch(b) => {
                    let v = state.value(i, &b.on)?;
                    i = p.branch_target(i, b, v)?;
                }
                Step::Halt {} => unreachable!(),
            }
        }
    }
    Ok(total)
}
