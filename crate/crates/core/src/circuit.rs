//! Closed circuits: wiring, validation, foliation into layers, and
//! enumeration of outcome strings.
//!
//! A circuit is a list of gate instances (nodes) plus wires from output
//! ports to input ports. Nodes are identified by their position in the node
//! list; the JSON `id` is a label used by files and acceptance rules.
//!
//! Foliation slices the wiring DAG into layers. Between consecutive layers
//! sits a boundary: the wires produced at or before the earlier layer and
//! consumed after it, in canonical order (producing layer, position within
//! that layer, output port). Each layer matrix maps its input boundary to its
//! output boundary:
//!
//! ```text
//! P_out · (G_1 ⊗ … ⊗ G_m ⊗ I_passthrough) · P_in
//! ```
//!
//! where `P_in` gathers each gate's inputs in port order followed by the
//! wires passing through, and `P_out` restores canonical order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LayerAlgebra, LinalgError, RealMatrix};
use crate::theory::{Gate, Theory};
use crate::{Diagnostic, Limits};

pub type NodeIx = usize;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("{message} (at `{path}`, line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid circuit: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("wiring contains a cycle")]
    Cycle,
    #[error("{count} outcome strings exceed the enumeration cap of {cap}")]
    EnumerationTooLarge { count: u128, cap: u64 },
    #[error("outcome string has {got} entries, circuit has {expected} gates")]
    OutcomeLength { expected: usize, got: usize },
    #[error("outcome {outcome} out of range for node `{node}` with {count} outcomes")]
    OutcomeOutOfRange {
        node: String,
        outcome: usize,
        count: usize,
    },
    #[error("cannot parse outcome string `{0}`")]
    BadOutcomeString(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub gate: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortRef {
    pub node: NodeIx,
    pub port: usize,
}

impl PortRef {
    pub fn new(node: NodeIx, port: usize) -> Self {
        Self { node, port }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wire {
    pub from: PortRef,
    pub to: PortRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Circuit {
    /// Theory reference: a file path or `builtin:<name>`.
    pub theory: String,
    pub name: Option<String>,
    pub nodes: Vec<Node>,
    pub wires: Vec<Wire>,
}

impl Circuit {
    pub fn new(theory: impl Into<String>) -> Self {
        Self {
            theory: theory.into(),
            name: None,
            nodes: Vec::new(),
            wires: Vec::new(),
        }
    }

    pub fn add_node(&mut self, id: impl Into<String>, gate: impl Into<String>) -> NodeIx {
        self.nodes.push(Node {
            id: id.into(),
            gate: gate.into(),
        });
        self.nodes.len() - 1
    }

    /// Connects output port `from.1` of node `from.0` to input port `to.1` of
    /// node `to.0`.
    pub fn connect(&mut self, from: (NodeIx, usize), to: (NodeIx, usize)) {
        self.wires.push(Wire {
            from: PortRef::new(from.0, from.1),
            to: PortRef::new(to.0, to.1),
        });
    }

    pub fn node_index(&self, id: &str) -> Option<NodeIx> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn from_json(text: &str) -> Result<Self, CircuitError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: CircuitFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            CircuitError::Parse {
                path: e.path().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Self::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CircuitFile::from(self)).expect("circuit serialises")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeId {
    Name(String),
    Number(u64),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Name(s) => f.write_str(s),
            NodeId::Number(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFile {
    pub id: NodeId,
    pub gate: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireFile {
    pub from: (NodeId, usize),
    pub to: (NodeId, usize),
}

/// On-disk circuit representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitFile {
    pub theory: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: Vec<NodeFile>,
    #[serde(default)]
    pub wires: Vec<WireFile>,
}

impl From<&Circuit> for CircuitFile {
    fn from(c: &Circuit) -> Self {
        let id = |ix: NodeIx| NodeId::Name(c.nodes[ix].id.clone());
        Self {
            theory: c.theory.clone(),
            name: c.name.clone(),
            nodes: c
                .nodes
                .iter()
                .map(|n| NodeFile {
                    id: NodeId::Name(n.id.clone()),
                    gate: n.gate.clone(),
                })
                .collect(),
            wires: c
                .wires
                .iter()
                .map(|w| WireFile {
                    from: (id(w.from.node), w.from.port),
                    to: (id(w.to.node), w.to.port),
                })
                .collect(),
        }
    }
}

impl TryFrom<CircuitFile> for Circuit {
    type Error = CircuitError;

    fn try_from(file: CircuitFile) -> Result<Self, CircuitError> {
        let mut diags = Vec::new();
        let mut index = BTreeMap::new();
        for (i, n) in file.nodes.iter().enumerate() {
            let id = n.id.to_string();
            if index.insert(id.clone(), i).is_some() {
                diags.push(Diagnostic::new(
                    format!("/nodes/{i}/id"),
                    format!("duplicate node id `{id}`"),
                ));
            }
        }
        let mut wires = Vec::with_capacity(file.wires.len());
        for (k, w) in file.wires.iter().enumerate() {
            let mut lookup = |end: &(NodeId, usize), field: &str| {
                let id = end.0.to_string();
                match index.get(&id) {
                    Some(&ix) => Some(PortRef::new(ix, end.1)),
                    None => {
                        diags.push(Diagnostic::new(
                            format!("/wires/{k}/{field}"),
                            format!("unknown node id `{id}`"),
                        ));
                        None
                    }
                }
            };
            if let (Some(from), Some(to)) = (lookup(&w.from, "from"), lookup(&w.to, "to")) {
                wires.push(Wire { from, to });
            }
        }
        if !diags.is_empty() {
            return Err(CircuitError::Invalid(diags));
        }
        Ok(Circuit {
            theory: file.theory,
            name: file.name,
            nodes: file
                .nodes
                .into_iter()
                .map(|n| Node {
                    id: n.id.to_string(),
                    gate: n.gate,
                })
                .collect(),
            wires,
        })
    }
}

/// One outcome index per node, in node order. Serialised as its display
/// string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutcomeString(pub Vec<usize>);

impl OutcomeString {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for OutcomeString {
    /// Digits run together when every outcome is below 10, otherwise they are
    /// comma separated.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.iter().all(|&r| r < 10) {
            for r in &self.0 {
                write!(f, "{r}")?;
            }
            Ok(())
        } else {
            let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
            f.write_str(&parts.join(","))
        }
    }
}

impl FromStr for OutcomeString {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, CircuitError> {
        let s = s.trim();
        let bad = || CircuitError::BadOutcomeString(s.to_string());
        if s.contains(',') {
            s.split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
                .collect::<Result<Vec<_>, _>>()
                .map(OutcomeString)
        } else {
            s.chars()
                .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(bad))
                .collect::<Result<Vec<_>, _>>()
                .map(OutcomeString)
        }
    }
}

impl Serialize for OutcomeString {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OutcomeString {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl From<Vec<usize>> for OutcomeString {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

fn port_types(gate: &Gate, output: bool) -> &[String] {
    if output {
        &gate.outputs
    } else {
        &gate.inputs
    }
}

/// Checks closedness, typing and acyclicity; empty means valid.
pub fn validate_circuit(c: &Circuit, t: &Theory) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if c.nodes.is_empty() {
        diags.push(Diagnostic::new("/nodes", "circuit has no gates"));
        return diags;
    }
    let mut ids = BTreeSet::new();
    let gates: Vec<Option<&Gate>> = c
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            if !ids.insert(n.id.as_str()) {
                diags.push(Diagnostic::new(
                    format!("/nodes/{i}/id"),
                    format!("duplicate node id `{}`", n.id),
                ));
            }
            let g = t.gate(&n.gate);
            if g.is_none() {
                diags.push(Diagnostic::new(
                    format!("/nodes/{i}/gate"),
                    format!("unknown gate `{}` in theory `{}`", n.gate, t.name),
                ));
            }
            g
        })
        .collect();

    let mut used_out: BTreeMap<PortRef, usize> = BTreeMap::new();
    let mut used_in: BTreeMap<PortRef, usize> = BTreeMap::new();
    for (k, w) in c.wires.iter().enumerate() {
        let mut endpoint_type = |end: PortRef, output: bool| -> Option<(String, usize)> {
            let field = if output { "from" } else { "to" };
            let Some(Some(g)) = gates.get(end.node) else {
                if end.node >= c.nodes.len() {
                    diags.push(Diagnostic::new(
                        format!("/wires/{k}/{field}"),
                        format!("node index {} out of range", end.node),
                    ));
                }
                return None;
            };
            let ports = port_types(g, output);
            match ports.get(end.port) {
                Some(label) => Some((label.clone(), t.dim(label).unwrap_or(0))),
                None => {
                    diags.push(Diagnostic::new(
                        format!("/wires/{k}/{field}"),
                        format!(
                            "node `{}` (gate `{}`) has no {} port {}",
                            c.nodes[end.node].id,
                            g.name,
                            if output { "output" } else { "input" },
                            end.port
                        ),
                    ));
                    None
                }
            }
        };
        let src = endpoint_type(w.from, true);
        let dst = endpoint_type(w.to, false);
        if let (Some((ls, ds)), Some((ld, dd))) = (&src, &dst) {
            if ls != ld {
                diags.push(Diagnostic::new(
                    format!("/wires/{k}"),
                    format!("type mismatch: output of type `{ls}` (dim {ds}) wired to input of type `{ld}` (dim {dd})"),
                ));
            }
        }
        if src.is_some() {
            if let Some(prev) = used_out.insert(w.from, k) {
                diags.push(Diagnostic::new(
                    format!("/wires/{k}/from"),
                    format!("output port already connected by wire {prev}"),
                ));
            }
        }
        if dst.is_some() {
            if let Some(prev) = used_in.insert(w.to, k) {
                diags.push(Diagnostic::new(
                    format!("/wires/{k}/to"),
                    format!("input port already connected by wire {prev}"),
                ));
            }
        }
    }

    for (i, g) in gates.iter().enumerate() {
        let Some(g) = g else { continue };
        for (output, used) in [(false, &used_in), (true, &used_out)] {
            for port in 0..port_types(g, output).len() {
                if !used.contains_key(&PortRef::new(i, port)) {
                    diags.push(Diagnostic::new(
                        format!("/nodes/{i}"),
                        format!(
                            "unconnected port: {} {port} of node `{}`",
                            if output { "output" } else { "input" },
                            c.nodes[i].id
                        ),
                    ));
                }
            }
        }
    }

    let in_range: Vec<&Wire> = c
        .wires
        .iter()
        .filter(|w| w.from.node < c.nodes.len() && w.to.node < c.nodes.len())
        .collect();
    if topological_depths(c.nodes.len(), &in_range).is_none() {
        diags.push(Diagnostic::new("/wires", "wiring contains a cycle"));
    }
    diags
}

/// Longest-path depth from any source; `None` on a cycle.
fn topological_depths(n: usize, wires: &[&Wire]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<NodeIx>> = vec![Vec::new(); n];
    for w in wires {
        indegree[w.to.node] += 1;
        succ[w.from.node].push(w.to.node);
    }
    let mut depth = vec![0usize; n];
    let mut ready: Vec<NodeIx> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(v) = ready.pop() {
        seen += 1;
        for &s in &succ[v] {
            depth[s] = depth[s].max(depth[v] + 1);
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(s);
            }
        }
    }
    (seen == n).then_some(depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// Each node as early as its inputs allow (longest path from a source).
    #[default]
    Asap,
    /// Each node as late as its consumers allow.
    Alap,
}

/// Wires crossing between two consecutive layers, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Boundary {
    pub wires: Vec<usize>,
    pub dims: Vec<usize>,
}

impl Boundary {
    /// Dimension of the tensor product of the crossing systems (1 if empty).
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Per-layer factor orderings used to build the boundary permutations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerWiring {
    /// Local input slot `k` takes input-boundary position `input_order[k]`.
    pub input_order: Vec<usize>,
    /// Output-boundary position `k` takes local output slot `output_order[k]`.
    pub output_order: Vec<usize>,
    /// Dimensions of the local output slots.
    pub local_output_dims: Vec<usize>,
    /// Number of wires passing through untouched.
    pub passthrough: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Foliation {
    pub layers: Vec<Vec<NodeIx>>,
    /// `layers.len() + 1` boundaries; the first and last are empty.
    pub boundaries: Vec<Boundary>,
    pub wiring: Vec<LayerWiring>,
}

impl Foliation {
    /// Boundary dimensions, first to last.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.boundaries.iter().map(Boundary::dim).collect()
    }

    pub fn max_boundary_dim(&self) -> usize {
        self.boundaries
            .iter()
            .map(Boundary::dim)
            .max()
            .unwrap_or(1)
            .max(1)
    }
}

/// Slices a valid circuit into layers. Nodes within a layer are ordered by
/// node index.
pub fn foliate(c: &Circuit, t: &Theory, schedule: Schedule) -> Result<Foliation, CircuitError> {
    let n = c.nodes.len();
    let wire_refs: Vec<&Wire> = c.wires.iter().collect();
    let depth = topological_depths(n, &wire_refs).ok_or(CircuitError::Cycle)?;
    let layer_count = depth.iter().max().map_or(0, |d| d + 1);
    let layer_of: Vec<usize> = match schedule {
        Schedule::Asap => depth,
        Schedule::Alap => {
            let reversed: Vec<Wire> = c
                .wires
                .iter()
                .map(|w| Wire {
                    from: w.to,
                    to: w.from,
                })
                .collect();
            let refs: Vec<&Wire> = reversed.iter().collect();
            let height = topological_depths(n, &refs).ok_or(CircuitError::Cycle)?;
            height.iter().map(|h| layer_count - 1 - h).collect()
        }
    };
    let mut layers = vec![Vec::new(); layer_count];
    for (ix, &l) in layer_of.iter().enumerate() {
        layers[l].push(ix);
    }
    let mut position = vec![0usize; n];
    for layer in &layers {
        for (p, &ix) in layer.iter().enumerate() {
            position[ix] = p;
        }
    }

    let wire_dim = |w: &Wire| -> usize {
        let g = t.gate(&c.nodes[w.from.node].gate).expect("validated gate");
        t.dim(&g.outputs[w.from.port]).expect("validated type")
    };
    let canonical_key = |wi: usize| {
        let w = &c.wires[wi];
        (layer_of[w.from.node], position[w.from.node], w.from.port)
    };

    let mut boundaries = Vec::with_capacity(layer_count + 1);
    for k in 0..=layer_count {
        let mut wires: Vec<usize> = (0..c.wires.len())
            .filter(|&wi| {
                let w = &c.wires[wi];
                layer_of[w.from.node] < k && k <= layer_of[w.to.node]
            })
            .collect();
        wires.sort_by_key(|&wi| canonical_key(wi));
        let dims = wires.iter().map(|&wi| wire_dim(&c.wires[wi])).collect();
        boundaries.push(Boundary { wires, dims });
    }

    let mut incoming: BTreeMap<PortRef, usize> = BTreeMap::new();
    let mut outgoing: BTreeMap<PortRef, usize> = BTreeMap::new();
    for (wi, w) in c.wires.iter().enumerate() {
        incoming.insert(w.to, wi);
        outgoing.insert(w.from, wi);
    }

    let mut wiring = Vec::with_capacity(layer_count);
    for (k, layer) in layers.iter().enumerate() {
        let before = &boundaries[k];
        let after = &boundaries[k + 1];
        let pos_before: BTreeMap<usize, usize> = before
            .wires
            .iter()
            .enumerate()
            .map(|(p, &w)| (w, p))
            .collect();

        let mut local_in = Vec::new();
        let mut local_out = Vec::new();
        for &ix in layer {
            let g = t.gate(&c.nodes[ix].gate).expect("validated gate");
            for port in 0..g.inputs.len() {
                local_in.push(incoming[&PortRef::new(ix, port)]);
            }
            for port in 0..g.outputs.len() {
                local_out.push(outgoing[&PortRef::new(ix, port)]);
            }
        }
        let consumed: BTreeSet<usize> = local_in.iter().copied().collect();
        let passing: Vec<usize> = before
            .wires
            .iter()
            .copied()
            .filter(|w| !consumed.contains(w))
            .collect();
        local_in.extend(&passing);
        local_out.extend(&passing);

        let input_order = local_in.iter().map(|w| pos_before[w]).collect();
        let pos_local: BTreeMap<usize, usize> =
            local_out.iter().enumerate().map(|(p, &w)| (w, p)).collect();
        let output_order = after.wires.iter().map(|w| pos_local[w]).collect();
        let local_output_dims = local_out.iter().map(|&wi| wire_dim(&c.wires[wi])).collect();
        wiring.push(LayerWiring {
            input_order,
            output_order,
            local_output_dims,
            passthrough: passing.len(),
        });
    }

    Ok(Foliation {
        layers,
        boundaries,
        wiring,
    })
}

fn is_identity_order(order: &[usize]) -> bool {
    order.iter().enumerate().all(|(k, &p)| k == p)
}

/// A validated circuit bound to its theory and foliation.
#[derive(Debug, Clone)]
pub struct CompiledCircuit<'a> {
    pub circuit: &'a Circuit,
    pub theory: &'a Theory,
    pub gates: Vec<&'a Gate>,
    pub foliation: Foliation,
    pub limits: Limits,
}

impl<'a> CompiledCircuit<'a> {
    pub fn new(circuit: &'a Circuit, theory: &'a Theory) -> Result<Self, CircuitError> {
        Self::with_options(circuit, theory, Schedule::Asap, Limits::default())
    }

    pub fn with_options(
        circuit: &'a Circuit,
        theory: &'a Theory,
        schedule: Schedule,
        limits: Limits,
    ) -> Result<Self, CircuitError> {
        let diags = validate_circuit(circuit, theory);
        if !diags.is_empty() {
            return Err(CircuitError::Invalid(diags));
        }
        let gates = circuit
            .nodes
            .iter()
            .map(|n| theory.gate(&n.gate).expect("validated gate"))
            .collect();
        let foliation = foliate(circuit, theory, schedule)?;
        Ok(Self {
            circuit,
            theory,
            gates,
            foliation,
            limits,
        })
    }

    pub fn gate_count(&self) -> usize {
        self.gates.len()
    }

    pub fn layer_count(&self) -> usize {
        self.foliation.layers.len()
    }

    pub fn outcome_counts(&self) -> Vec<usize> {
        self.gates.iter().map(|g| g.outcome_count()).collect()
    }

    pub fn check_outcomes(&self, z: &OutcomeString) -> Result<(), CircuitError> {
        if z.len() != self.gates.len() {
            return Err(CircuitError::OutcomeLength {
                expected: self.gates.len(),
                got: z.len(),
            });
        }
        for (i, (&r, g)) in z.as_slice().iter().zip(&self.gates).enumerate() {
            if r >= g.outcome_count() {
                return Err(CircuitError::OutcomeOutOfRange {
                    node: self.circuit.nodes[i].id.clone(),
                    outcome: r,
                    count: g.outcome_count(),
                });
            }
        }
        Ok(())
    }

    /// Layer matrix for outcome string `z`.
    pub fn layer_matrix(
        &self,
        layer: usize,
        z: &OutcomeString,
    ) -> Result<RealMatrix, CircuitError> {
        self.check_outcomes(z)?;
        self.layer_matrix_with(layer, |ix| self.gates[ix].outcomes[z.0[ix]].clone())
    }

    /// Builds a layer matrix from per-node matrices supplied by `node_matrix`.
    pub fn layer_matrix_with<M: LayerAlgebra>(
        &self,
        layer: usize,
        node_matrix: impl Fn(NodeIx) -> M,
    ) -> Result<M, CircuitError> {
        let limit = self.limits.max_entries;
        let wiring = &self.foliation.wiring[layer];
        let before = &self.foliation.boundaries[layer];
        let mut core: Option<M> = None;
        for &ix in &self.foliation.layers[layer] {
            let m = node_matrix(ix);
            core = Some(match core {
                None => m,
                Some(acc) => acc.kron_with(&m, limit)?,
            });
        }
        let pass_dim: usize = before.dims[before.dims.len() - wiring.passthrough..]
            .iter()
            .product();
        let mut core = match core {
            None => M::identity_of(pass_dim),
            Some(acc) if wiring.passthrough > 0 => {
                acc.kron_with(&M::identity_of(pass_dim), limit)?
            }
            Some(acc) => acc,
        };
        if !is_identity_order(&wiring.input_order) {
            let p_in = M::permutation_of(&before.dims, &wiring.input_order)?;
            core = core.matmul_with(&p_in)?;
        }
        if !is_identity_order(&wiring.output_order) {
            let p_out = M::permutation_of(&wiring.local_output_dims, &wiring.output_order)?;
            core = p_out.matmul_with(&core)?;
        }
        Ok(core)
    }

    /// All outcome strings in lexicographic order (first node most
    /// significant), subject to the enumeration cap.
    pub fn enumerate_outcomes(&self) -> Result<OutcomeIter, CircuitError> {
        enumerate_outcomes(&self.outcome_counts(), self.limits.max_enum)
    }
}

/// Lexicographic odometer over the product of outcome sets.
#[derive(Debug, Clone)]
pub struct OutcomeIter {
    counts: Vec<usize>,
    next: Option<Vec<usize>>,
    remaining: u128,
}

impl OutcomeIter {
    pub fn total(&self) -> u128 {
        self.remaining
    }
}

impl Iterator for OutcomeIter {
    type Item = OutcomeString;

    fn next(&mut self) -> Option<OutcomeString> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut k = succ.len();
        let mut advanced = false;
        while k > 0 {
            k -= 1;
            succ[k] += 1;
            if succ[k] < self.counts[k] {
                advanced = true;
                break;
            }
            succ[k] = 0;
        }
        if advanced {
            self.next = Some(succ);
        }
        self.remaining -= 1;
        Some(OutcomeString(current))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = usize::try_from(self.remaining).unwrap_or(usize::MAX);
        (n, Some(n))
    }
}

pub fn enumerate_outcomes(counts: &[usize], cap: u64) -> Result<OutcomeIter, CircuitError> {
    let total = counts
        .iter()
        .try_fold(1u128, |acc, &c| acc.checked_mul(c as u128))
        .unwrap_or(u128::MAX);
    if total > u128::from(cap) {
        return Err(CircuitError::EnumerationTooLarge { count: total, cap });
    }
    Ok(OutcomeIter {
        counts: counts.to_vec(),
        next: (total > 0).then(|| vec![0; counts.len()]),
        remaining: total,
    })
}
