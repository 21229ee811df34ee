//! Independent reference computations and random instance generators shared
//! by the integration tests.
//!
//! None of the oracles here go through foliation, layer matrices or the
//! evaluators under test:
//!
//! - [`contract`] sums products of gate entries over every assignment of
//!   wire indices,
//! - [`HilbertSim`] runs qubit circuits on density matrices,
//! - [`spectral_norm`] is plain power iteration on `AᵀA`.

#![allow(dead_code)]

use std::collections::BTreeMap;

use gptsim::circuit::{Circuit, CompiledCircuit, PortRef};
use gptsim::linalg::RealMatrix;
use gptsim::theory::{builtin_boxworld, builtin_classical, builtin_quantum, Gate, Theory};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type CMatrix = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// The built-in theories used by random suites; every system dim is ≤ 4.
pub fn random_suite_theories() -> Vec<Theory> {
    vec![
        builtin_classical(2),
        builtin_classical(3),
        builtin_quantum(2).unwrap(),
        builtin_boxworld(),
    ]
}

/// `P(z)` by brute-force contraction: sum over all wire index assignments of
/// the product of `M[out_index, in_index]` over nodes.
pub fn contract(c: &Circuit, t: &Theory, z: &[usize]) -> f64 {
    let gates: Vec<&Gate> = c.nodes.iter().map(|n| t.gate(&n.gate).unwrap()).collect();
    let dims: Vec<usize> = c
        .wires
        .iter()
        .map(|w| t.dim(&gates[w.from.node].outputs[w.from.port]).unwrap())
        .collect();
    let mut ins = vec![BTreeMap::new(); c.nodes.len()];
    let mut outs = vec![BTreeMap::new(); c.nodes.len()];
    for (k, w) in c.wires.iter().enumerate() {
        outs[w.from.node].insert(w.from.port, k);
        ins[w.to.node].insert(w.to.port, k);
    }
    let mut idx = vec![0usize; dims.len()];
    let mut total = 0.0;
    loop {
        let mut term = 1.0;
        for (n, g) in gates.iter().enumerate() {
            let mixed = |ports: &BTreeMap<usize, usize>| {
                ports
                    .values()
                    .fold(0usize, |acc, &w| acc * dims[w] + idx[w])
            };
            term *= g.outcomes[z[n]].get(mixed(&outs[n]), mixed(&ins[n]));
            if term == 0.0 {
                break;
            }
        }
        total += term;
        let mut k = dims.len();
        loop {
            if k == 0 {
                return total;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &RealMatrix) -> f64 {
    let (rows, cols) = a.shape();
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 0.1 * j as f64).collect();
    let mut estimate = 0.0;
    for _ in 0..2000 {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let av: Vec<f64> = (0..rows)
            .map(|i| (0..cols).map(|j| a.get(i, j) * v[j]).sum())
            .collect();
        let next: Vec<f64> = (0..cols)
            .map(|j| (0..rows).map(|i| a.get(i, j) * av[i]).sum())
            .collect();
        let s = av.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (s - estimate).abs() <= 1e-15 * s.max(1.0) {
            return s;
        }
        estimate = s;
        v = next;
    }
    estimate
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> RealMatrix {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-scale..=scale))
        .collect();
    RealMatrix::new(rows, cols, data).unwrap()
}

fn gate_names(t: &Theory, pred: impl Fn(&Gate) -> bool) -> Vec<String> {
    t.gates
        .iter()
        .filter(|g| pred(g))
        .map(|g| g.name.clone())
        .collect()
}

/// A closed circuit with at most `max_gates` gates: preparations, then some
/// transformations on open wires, then one single-input effect per
/// remaining wire.
pub fn random_circuit(t: &Theory, rng: &mut ChaCha8Rng, max_gates: usize) -> Circuit {
    assert!(max_gates >= 2);
    let preps = gate_names(t, |g| g.inputs.is_empty() && !g.outputs.is_empty());
    let transforms = gate_names(t, |g| !g.inputs.is_empty() && !g.outputs.is_empty());
    let effects = gate_names(t, |g| g.inputs.len() == 1 && g.outputs.is_empty());
    let mut c = Circuit::new(format!("builtin:{}", t.name));
    let mut open: Vec<(PortRef, String)> = Vec::new();

    let place =
        |c: &mut Circuit, open: &mut Vec<(PortRef, String)>, name: &str, inputs: Vec<PortRef>| {
            let ix = c.add_node(format!("n{}", c.nodes.len()), name);
            for (k, p) in inputs.into_iter().enumerate() {
                c.connect((p.node, p.port), (ix, k));
            }
            for (port, ty) in t.gate(name).unwrap().outputs.iter().enumerate() {
                open.push((PortRef::new(ix, port), ty.clone()));
            }
        };

    let fits = |gates: usize, open: usize| gates + open <= max_gates;
    loop {
        let name = preps.choose(rng).unwrap();
        let outs = t.gate(name).unwrap().outputs.len();
        if fits(c.nodes.len() + 1, open.len() + outs) {
            place(&mut c, &mut open, name, vec![]);
        }
        if !c.nodes.is_empty() && (rng.random_bool(0.5) || !fits(c.nodes.len() + 2, open.len() + 1))
        {
            break;
        }
    }
    for _ in 0..max_gates {
        if transforms.is_empty() || rng.random_bool(0.3) {
            break;
        }
        let name = transforms.choose(rng).unwrap();
        let g = t.gate(name).unwrap();
        let next_open = open.len() + g.outputs.len() - g.inputs.len().min(open.len());
        if !fits(c.nodes.len() + 1, next_open) {
            continue;
        }
        let mut inputs = Vec::new();
        let mut pool = open.clone();
        for ty in &g.inputs {
            let candidates: Vec<usize> = (0..pool.len()).filter(|&i| &pool[i].1 == ty).collect();
            let Some(&pick) = candidates.choose(rng) else {
                break;
            };
            inputs.push(pool.remove(pick).0);
        }
        if inputs.len() == g.inputs.len() {
            open = pool;
            place(&mut c, &mut open, name, inputs);
        }
    }
    for (p, ty) in std::mem::take(&mut open) {
        // mostly measurements, so that distributions have several outcomes
        let measuring = rng.random_bool(0.8);
        let options: Vec<&String> = effects
            .iter()
            .filter(|e| t.gate(e).unwrap().inputs[0] == ty)
            .filter(|e| !measuring || t.gate(e).unwrap().outcome_count() > 1)
            .collect();
        let name = (*options.choose(rng).unwrap()).clone();
        place(&mut c, &mut open, &name, vec![p]);
    }
    c
}

/// Number of index paths the path sum would visit.
pub fn path_count(cc: &CompiledCircuit<'_>) -> u128 {
    (cc.foliation.max_boundary_dim() as u128).pow(cc.layer_count().saturating_sub(1) as u32)
}

/// Random circuit over a random suite theory whose path space is at most
/// `max_paths`.
pub fn random_suite_circuit(
    rng: &mut ChaCha8Rng,
    theories: &[Theory],
    max_gates: usize,
    max_paths: u128,
) -> (Circuit, usize) {
    loop {
        let ti = rng.random_range(0..theories.len());
        let c = random_circuit(&theories[ti], rng, max_gates);
        let cc = CompiledCircuit::new(&c, &theories[ti]).unwrap();
        if path_count(&cc) <= max_paths {
            return (c, ti);
        }
    }
}

pub fn ket(bits: &[f64]) -> Vec<Complex64> {
    bits.iter().map(|&x| c(x)).collect()
}

pub fn projector(psi: &[Complex64]) -> CMatrix {
    let v = nalgebra::DVector::from_column_slice(psi);
    &v * v.adjoint()
}

fn permutation_unitary(n: usize, f: impl Fn(usize) -> usize) -> CMatrix {
    let d = 1 << n;
    let mut u = CMatrix::zeros(d, d);
    for i in 0..d {
        u[(f(i), i)] = c(1.0);
    }
    u
}

/// Hilbert-space meaning of the built-in qubit gates.
pub enum QGate {
    State(CMatrix),
    /// Kraus operators per outcome.
    Instrument(Vec<Vec<CMatrix>>),
    /// POVM elements per outcome.
    Measure(Vec<CMatrix>),
}

pub fn qgate(name: &str) -> QGate {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p0 = projector(&ket(&[1.0, 0.0]));
    let p1 = projector(&ket(&[0.0, 1.0]));
    let unitary = |u: CMatrix| QGate::Instrument(vec![vec![u]]);
    match name {
        "zero" => QGate::State(p0),
        "one" => QGate::State(p1),
        "plus" => QGate::State(projector(&ket(&[s, s]))),
        "bell" => QGate::State(projector(&ket(&[s, 0.0, 0.0, s]))),
        "ghz" => QGate::State(projector(&ket(&[s, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, s]))),
        "h" => unitary(CMatrix::from_row_slice(2, 2, &ket(&[s, s, s, -s]))),
        "x" => unitary(CMatrix::from_row_slice(2, 2, &ket(&[0.0, 1.0, 1.0, 0.0]))),
        "z" => unitary(CMatrix::from_row_slice(2, 2, &ket(&[1.0, 0.0, 0.0, -1.0]))),
        "t" => unitary(CMatrix::from_row_slice(
            2,
            2,
            &[
                c(1.0),
                c(0.0),
                c(0.0),
                Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4),
            ],
        )),
        "cnot" => unitary(permutation_unitary(
            2,
            |i| if i & 2 != 0 { i ^ 1 } else { i },
        )),
        "toffoli" => unitary(permutation_unitary(
            3,
            |i| if i & 6 == 6 { i ^ 1 } else { i },
        )),
        "instrument_z" => QGate::Instrument(vec![vec![p0], vec![p1]]),
        "measure_z" => QGate::Measure(vec![p0, p1]),
        "measure_x" => QGate::Measure(vec![projector(&ket(&[s, s])), projector(&ket(&[s, -s]))]),
        "discard" => QGate::Measure(vec![CMatrix::identity(2, 2)]),
        other => panic!("no Hilbert-space model for `{other}`"),
    }
}

/// Unnormalised density matrix over the currently open qubit wires.
pub struct HilbertSim {
    pub rho: CMatrix,
    /// Open wires, most significant qubit first.
    pub wires: Vec<PortRef>,
}

impl Default for HilbertSim {
    fn default() -> Self {
        Self::new()
    }
}

impl HilbertSim {
    pub fn new() -> Self {
        Self {
            rho: CMatrix::from_element(1, 1, c(1.0)),
            wires: Vec::new(),
        }
    }

    fn positions(&self, inputs: &[PortRef]) -> Vec<usize> {
        inputs
            .iter()
            .map(|p| self.wires.iter().position(|w| w == p).expect("open wire"))
            .collect()
    }

    /// Lifts an operator on the qubits at `pos` to the whole register.
    fn embed(&self, op: &CMatrix, pos: &[usize]) -> CMatrix {
        let n = self.wires.len();
        let d = 1 << n;
        let sub = |i: usize| {
            pos.iter()
                .fold(0usize, |acc, &p| (acc << 1) | ((i >> (n - 1 - p)) & 1))
        };
        let mask: usize = pos.iter().map(|&p| 1usize << (n - 1 - p)).sum();
        let mut full = CMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                if i & !mask == j & !mask {
                    full[(i, j)] = op[(sub(i), sub(j))];
                }
            }
        }
        full
    }

    pub fn prepare(&mut self, node: usize, state: &CMatrix) {
        self.rho = self.rho.kronecker(state);
        let k = state.nrows().trailing_zeros() as usize;
        self.wires.extend((0..k).map(|p| PortRef::new(node, p)));
    }

    /// Applies one outcome's Kraus operators; outputs take the input
    /// positions.
    pub fn apply(&mut self, node: usize, kraus: &[CMatrix], inputs: &[PortRef]) {
        let pos = self.positions(inputs);
        let mut next = CMatrix::zeros(self.rho.nrows(), self.rho.ncols());
        for k in kraus {
            let full = self.embed(k, &pos);
            next += &full * &self.rho * full.adjoint();
        }
        self.rho = next;
        for (port, &p) in pos.iter().enumerate() {
            self.wires[p] = PortRef::new(node, port);
        }
    }

    /// Applies an effect and traces the measured qubits out.
    pub fn measure(&mut self, effect: &CMatrix, inputs: &[PortRef]) {
        let pos = self.positions(inputs);
        let full = self.embed(effect, &pos);
        let weighted = &full * &self.rho;
        let n = self.wires.len();
        let keep: Vec<usize> = (0..n).filter(|p| !pos.contains(p)).collect();
        let dk = 1 << keep.len();
        let spread = |a: usize, s: usize| {
            let mut i = 0usize;
            for (bit, &p) in keep.iter().enumerate() {
                i |= ((a >> (keep.len() - 1 - bit)) & 1) << (n - 1 - p);
            }
            for (bit, &p) in pos.iter().enumerate() {
                i |= ((s >> (pos.len() - 1 - bit)) & 1) << (n - 1 - p);
            }
            i
        };
        let mut reduced = CMatrix::zeros(dk, dk);
        for a in 0..dk {
            for b in 0..dk {
                let mut acc = c(0.0);
                for s in 0..(1 << pos.len()) {
                    acc += weighted[(spread(a, s), spread(b, s))];
                }
                reduced[(a, b)] = acc;
            }
        }
        self.rho = reduced;
        self.wires = keep.iter().map(|&p| self.wires[p]).collect();
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }
}

/// `P(z)` of a qubit circuit over the built-in quantum gates, computed on
/// density matrices in node order (nodes must be topologically ordered).
pub fn hilbert_probability(c: &Circuit, z: &[usize]) -> f64 {
    let mut sim = HilbertSim::new();
    let mut inputs: Vec<BTreeMap<usize, PortRef>> = vec![BTreeMap::new(); c.nodes.len()];
    for w in &c.wires {
        inputs[w.to.node].insert(w.to.port, w.from);
    }
    for (n, node) in c.nodes.iter().enumerate() {
        let ins: Vec<PortRef> = inputs[n].values().copied().collect();
        match qgate(&node.gate) {
            QGate::State(s) => sim.prepare(n, &s),
            QGate::Instrument(k) => sim.apply(n, &k[z[n]], &ins),
            QGate::Measure(e) => sim.measure(&e[z[n]], &ins),
        }
    }
    sim.trace()
}

/// Checks that nodes appear after all their predecessors.
pub fn is_topologically_ordered(c: &Circuit) -> bool {
    c.wires.iter().all(|w| w.from.node < w.to.node)
}

/// Random unitary from the QR factorisation of a random complex matrix.
pub fn random_unitary(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let m = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    m.qr().q()
}

/// Kraus operators of a random mixture of unitaries.
pub fn random_channel(rng: &mut ChaCha8Rng, d: usize, terms: usize) -> Vec<CMatrix> {
    let weights: Vec<f64> = (0..terms).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .into_iter()
        .map(|w| random_unitary(rng, d) * c((w / total).sqrt()))
        .collect()
}

/// Random density matrix `A A† / Tr(A A†)`.
pub fn random_state(rng: &mut ChaCha8Rng, d: usize) -> CMatrix {
    let a = CMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn apply_channel(kraus: &[CMatrix], rho: &CMatrix) -> CMatrix {
    kraus
        .iter()
        .fold(CMatrix::zeros(rho.nrows(), rho.ncols()), |acc, k| {
            acc + k * rho * k.adjoint()
        })
}

/// `Σ_k C(n, k) p^k (1-p)^(n-k)` over `k ≥ threshold`.
pub fn binomial_upper_tail(n: u64, p: f64, threshold: u64) -> f64 {
    let mut total = 0.0;
    for k in threshold..=n {
        let mut coeff = 1.0;
        for i in 0..k {
            coeff *= (n - i) as f64 / (i + 1) as f64;
        }
        total += coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    total
}

use gptsim::circuit::NodeId;
use gptsim::eval::Expr;
use gptsim::oracle::{
    AdaptiveProgram, BranchStep, ClassicalOracle, GateStep, NamedPredicate, QueryFn, QueryStep,
    Step,
};

fn name(s: &str) -> NodeId {
    NodeId::Name(s.to_string())
}

/// Random formula over `atoms` (id, outcome count).
pub fn random_expr(rng: &mut ChaCha8Rng, atoms: &[(String, usize)], depth: usize) -> Expr {
    if atoms.is_empty() {
        return Expr::Const(rng.random_bool(0.5));
    }
    if depth == 0 || rng.random_bool(0.4) {
        let (id, count) = atoms.choose(rng).unwrap();
        return Expr::Eq(name(id), rng.random_range(0..*count));
    }
    let kids = |rng: &mut ChaCha8Rng| {
        (0..rng.random_range(1..=3))
            .map(|_| random_expr(rng, atoms, depth - 1))
            .collect()
    };
    match rng.random_range(0..4) {
        0 => Expr::Not(Box::new(random_expr(rng, atoms, depth - 1))),
        1 => Expr::And(kids(rng)),
        2 => Expr::Or(kids(rng)),
        _ => Expr::Xor(kids(rng)),
    }
}

/// Atoms for rules over a closed circuit: every node with its outcome count.
pub fn circuit_atoms(c: &Circuit, t: &Theory) -> Vec<(String, usize)> {
    c.nodes
        .iter()
        .map(|n| (n.id.clone(), t.gate(&n.gate).unwrap().outcome_count()))
        .collect()
}

struct ProgramBuilder<'t> {
    t: &'t Theory,
    steps: Vec<Step>,
    next_id: usize,
    atoms: Vec<(String, usize)>,
}

type OpenWire = ((String, usize), String);

impl ProgramBuilder<'_> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}{}", self.next_id)
    }

    fn gate(
        &mut self,
        open: &mut Vec<OpenWire>,
        gate: &str,
        inputs: Vec<(String, usize)>,
    ) -> String {
        let id = self.fresh("g");
        let g = self.t.gate(gate).unwrap();
        open.retain(|(w, _)| !inputs.contains(w));
        for (port, ty) in g.outputs.iter().enumerate() {
            open.push(((id.clone(), port), ty.clone()));
        }
        self.atoms.push((id.clone(), g.outcome_count()));
        self.steps.push(Step::Gate(GateStep {
            id: name(&id),
            name: gate.to_string(),
            inputs: inputs.into_iter().map(|(i, p)| (name(&i), p)).collect(),
        }));
        id
    }

    /// Places a random gate whose inputs can be fed from `open`, keeping at
    /// most `max_open` wires open.
    fn random_gate(
        &mut self,
        rng: &mut ChaCha8Rng,
        open: &mut Vec<OpenWire>,
        max_open: usize,
    ) -> Option<String> {
        let candidates: Vec<&Gate> = self
            .t
            .gates
            .iter()
            .filter(|g| {
                let mut pool: Vec<&String> = open.iter().map(|(_, ty)| ty).collect();
                let feeds = g
                    .inputs
                    .iter()
                    .all(|ty| match pool.iter().position(|p| *p == ty) {
                        Some(k) => {
                            pool.remove(k);
                            true
                        }
                        None => false,
                    });
                feeds && open.len() + g.outputs.len() - g.inputs.len() <= max_open
            })
            .collect();
        let g = (*candidates.choose(rng)?).clone();
        let mut pool = open.clone();
        let mut inputs = Vec::new();
        for ty in &g.inputs {
            let options: Vec<usize> = (0..pool.len()).filter(|&k| &pool[k].1 == ty).collect();
            inputs.push(pool.remove(*options.choose(rng).unwrap()).0);
        }
        Some(self.gate(open, &g.name, inputs))
    }

    /// Caps every open wire with a random single-input effect.
    fn close(&mut self, rng: &mut ChaCha8Rng, open: &mut Vec<OpenWire>) -> Vec<String> {
        let mut ids = Vec::new();
        while let Some((w, ty)) = open.first().cloned() {
            let effects: Vec<&Gate> = self
                .t
                .gates
                .iter()
                .filter(|g| g.inputs.len() == 1 && g.outputs.is_empty() && g.inputs[0] == ty)
                .collect();
            let e = effects.choose(rng).unwrap().name.clone();
            ids.push(self.gate(open, &e, vec![w]));
        }
        ids
    }

    fn query(&mut self, rng: &mut ChaCha8Rng, args: &[String]) -> Option<String> {
        if args.is_empty() {
            return None;
        }
        let function = [QueryFn::Select, QueryFn::Concat, QueryFn::Parity]
            .choose(rng)
            .copied()
            .unwrap();
        let args: Vec<NodeId> = match function {
            QueryFn::Select => vec![name(args.choose(rng).unwrap())],
            _ => args.iter().map(|a| name(a)).collect(),
        };
        let id = self.fresh("q");
        self.atoms.push((id.clone(), 2));
        self.steps.push(Step::Query(QueryStep {
            id: name(&id),
            function,
            args,
        }));
        Some(id)
    }
}

/// A random causal adaptive program: a straight-line prefix, one oracle
/// query, and a branch into two different completions (one of which may
/// issue a second query).
pub fn random_program(t: &Theory, rng: &mut ChaCha8Rng) -> AdaptiveProgram {
    let mut b = ProgramBuilder {
        t,
        steps: Vec::new(),
        next_id: 0,
        atoms: Vec::new(),
    };
    let max_open = 3;
    let mut open = Vec::new();
    let preps: Vec<&Gate> = t
        .gates
        .iter()
        .filter(|g| g.inputs.is_empty() && !g.outputs.is_empty())
        .collect();
    let p = preps.choose(rng).unwrap().name.clone();
    b.gate(&mut open, &p, vec![]);
    for _ in 0..rng.random_range(0..3) {
        b.random_gate(rng, &mut open, max_open);
    }
    // make sure the query has an outcome to read
    let mut measured: Vec<String> = b
        .atoms
        .iter()
        .filter(|(_, n)| *n > 1)
        .map(|(id, _)| id.clone())
        .collect();
    if measured.is_empty() {
        if open.is_empty() {
            b.gate(&mut open, &p, vec![]);
        }
        let (w, ty) = open[0].clone();
        let m = t
            .gates
            .iter()
            .filter(|g| g.inputs == [ty.clone()] && g.outputs.is_empty() && g.outcome_count() > 1)
            .map(|g| g.name.clone())
            .collect::<Vec<_>>();
        measured.push(b.gate(&mut open, m.choose(rng).unwrap(), vec![w]));
    }
    let q = b.query(rng, &measured).unwrap();
    let branch_at = b.steps.len();
    b.steps.push(Step::Halt {});

    let mut open0 = open.clone();
    if rng.random_bool(0.5) {
        b.random_gate(rng, &mut open0, max_open);
    }
    let ids0 = b.close(rng, &mut open0);
    if rng.random_bool(0.5) {
        let ids: Vec<String> = ids0
            .iter()
            .filter(|id| b.atoms.iter().any(|(a, n)| a == *id && *n > 1))
            .cloned()
            .collect();
        b.query(rng, &ids);
    }
    b.steps.push(Step::Halt {});
    let second = b.steps.len();
    let mut open1 = open;
    let ids1 = b.close(rng, &mut open1);
    if rng.random_bool(0.5) {
        b.query(rng, &ids1);
    }
    let end = b.steps.len();
    let mut targets = BTreeMap::new();
    targets.insert("0".to_string(), branch_at + 1);
    targets.insert("1".to_string(), if second < end { second } else { end });
    b.steps[branch_at] = Step::Branch(BranchStep {
        on: name(&q),
        targets,
        default: None,
    });
    let accept = random_expr(rng, &b.atoms, 2);
    AdaptiveProgram {
        theory: format!("builtin:{}", t.name),
        steps: b.steps,
        accept,
    }
}

pub fn random_oracle(rng: &mut ChaCha8Rng) -> ClassicalOracle {
    match rng.random_range(0..5) {
        0 => ClassicalOracle::Named(NamedPredicate::Parity),
        1 => ClassicalOracle::Named(NamedPredicate::And),
        2 => ClassicalOracle::Named(NamedPredicate::Or),
        3 => ClassicalOracle::Named(NamedPredicate::Majority),
        _ => {
            let strings = [
                "0", "1", "2", "00", "01", "10", "11", "000", "011", "101", "110",
            ];
            ClassicalOracle::Set(
                strings
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .map(|s| s.to_string())
                    .collect(),
            )
        }
    }
}

/// One leaf of [`enumerate_program`].
#[derive(Debug, Clone)]
pub struct Leaf {
    pub circuit: Circuit,
    pub outcomes: Vec<usize>,
    pub accept: bool,
    pub queries: usize,
    /// Joint probability of the leaf, by brute-force contraction.
    pub probability: f64,
}

/// Walks every outcome assignment of a program, evaluating each complete
/// run as one closed circuit. Shares no code with the sampler.
pub fn enumerate_program(t: &Theory, p: &AdaptiveProgram, oracle: &ClassicalOracle) -> Vec<Leaf> {
    #[derive(Clone)]
    struct Run {
        circuit: Circuit,
        outcomes: Vec<usize>,
        nodes: BTreeMap<String, usize>,
        values: BTreeMap<String, usize>,
        queries: usize,
    }
    fn holds(e: &Expr, values: &BTreeMap<String, usize>) -> bool {
        match e {
            Expr::Const(b) => *b,
            Expr::Eq(id, v) => values.get(&id.to_string()) == Some(v),
            Expr::Not(x) => !holds(x, values),
            Expr::And(xs) => xs.iter().all(|x| holds(x, values)),
            Expr::Or(xs) => xs.iter().any(|x| holds(x, values)),
            Expr::Xor(xs) => xs.iter().filter(|x| holds(x, values)).count() % 2 == 1,
        }
    }
    fn render(vals: &[usize]) -> String {
        if vals.iter().any(|&v| v >= 10) {
            vals.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        } else {
            vals.iter().map(|v| v.to_string()).collect()
        }
    }
    let mut leaves = Vec::new();
    let mut stack = vec![(
        0usize,
        Run {
            circuit: Circuit::new(p.theory.clone()),
            outcomes: vec![],
            nodes: BTreeMap::new(),
            values: BTreeMap::new(),
            queries: 0,
        },
    )];
    while let Some((i, mut run)) = stack.pop() {
        if i >= p.steps.len() || matches!(p.steps[i], Step::Halt {}) {
            let probability = contract(&run.circuit, t, &run.outcomes);
            leaves.push(Leaf {
                accept: holds(&p.accept, &run.values),
                circuit: run.circuit,
                outcomes: run.outcomes,
                queries: run.queries,
                probability,
            });
            continue;
        }
        match &p.steps[i] {
            Step::Gate(g) => {
                let ix = run.circuit.add_node(g.id.to_string(), g.name.clone());
                for (k, (src, port)) in g.inputs.iter().enumerate() {
                    let from = run.nodes[&src.to_string()];
                    run.circuit.connect((from, *port), (ix, k));
                }
                run.nodes.insert(g.id.to_string(), ix);
                for r in 0..t.gate(&g.name).unwrap().outcome_count() {
                    let mut next = run.clone();
                    next.outcomes.push(r);
                    next.values.insert(g.id.to_string(), r);
                    stack.push((i + 1, next));
                }
            }
            Step::Query(q) => {
                let vals: Vec<usize> = q.args.iter().map(|a| run.values[&a.to_string()]).collect();
                let input = match q.function {
                    QueryFn::Parity => (vals.iter().sum::<usize>() % 2).to_string(),
                    _ => render(&vals),
                };
                let answer = oracle.query(&input).unwrap();
                run.values.insert(q.id.to_string(), answer as usize);
                run.queries += 1;
                stack.push((i + 1, run));
            }
            Step::Branch(b) => {
                let v = run.values[&b.on.to_string()];
                let target = b
                    .targets
                    .get(&v.to_string())
                    .copied()
                    .or(b.default)
                    .unwrap();
                stack.push((target, run));
            }
            Step::Halt {} => unreachable!(),
        }
    }
    leaves
}

/// Splits a closed circuit into a prefix and a future: a random non-empty
/// subset of its final effects forms the future and is replaced by other
/// effects of the same type, sometimes behind an extra transformation.
/// Returns the modified circuit and the prefix node indices, which are the
/// same in both circuits.
pub fn change_future(c: &Circuit, t: &Theory, rng: &mut ChaCha8Rng) -> (Circuit, Vec<usize>) {
    let effects: Vec<usize> = (0..c.nodes.len())
        .filter(|&n| t.gate(&c.nodes[n].gate).unwrap().outputs.is_empty())
        .collect();
    let mut future: Vec<usize> = effects
        .iter()
        .copied()
        .filter(|_| rng.random_bool(0.5))
        .collect();
    if future.is_empty() {
        future.push(*effects.choose(rng).unwrap());
    }
    let mut f = c.clone();
    for &n in &future {
        let ty = t.gate(&c.nodes[n].gate).unwrap().inputs[0].clone();
        let others: Vec<&str> = t
            .gates
            .iter()
            .filter(|g| {
                g.outputs.is_empty() && g.inputs == [ty.clone()] && g.name != c.nodes[n].gate
            })
            .map(|g| g.name.as_str())
            .collect();
        if let Some(e) = others.choose(rng) {
            f.nodes[n].gate = e.to_string();
        }
        let transforms: Vec<&str> = t
            .gates
            .iter()
            .filter(|g| g.inputs == [ty.clone()] && g.outputs == [ty.clone()])
            .map(|g| g.name.as_str())
            .collect();
        if !transforms.is_empty() && rng.random_bool(0.5) {
            let w = f.wires.iter().position(|w| w.to.node == n).unwrap();
            let from = f.wires.remove(w).from;
            let x = f.add_node(format!("x{n}"), *transforms.choose(rng).unwrap());
            f.connect((from.node, from.port), (x, 0));
            f.connect((x, 0), (n, 0));
        }
    }
    let prefix = (0..c.nodes.len()).filter(|n| !future.contains(n)).collect();
    (f, prefix)
}

/// Marginal distribution of the outcomes of `nodes`.
pub fn marginal(c: &Circuit, t: &Theory, nodes: &[usize]) -> BTreeMap<Vec<usize>, f64> {
    let cc = CompiledCircuit::new(c, t).unwrap();
    let mut m = BTreeMap::new();
    for (z, p) in gptsim::eval::distribution(&cc, gptsim::eval::Engine::Dense).unwrap() {
        *m.entry(nodes.iter().map(|&n| z.0[n]).collect())
            .or_insert(0.0) += p;
    }
    m
}
