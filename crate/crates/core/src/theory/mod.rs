//! Theories: system types, finite gate sets and causality checks.
//!
//! Composite systems are never declared. A gate with several input or output
//! ports acts on the tensor product of the port spaces, in port order.

mod builtin;
mod quantum;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, RealMatrix};
use crate::Diagnostic;

pub use builtin::{
    builtin_boxworld, builtin_classical, builtin_noncausal_counterexample, builtin_quantum,
    resolve_builtin,
};
pub use quantum::{
    cp_map_to_transfer, effect_to_row, hermitian_basis, state_to_column, ComplexMatrix,
};

/// Default tolerance for [`check_causality`].
pub const DEFAULT_CAUSALITY_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("unknown builtin theory `{0}`")]
    UnknownBuiltin(String),
    #[error("{message} (at `{path}`, line {line}, column {column})")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid theory: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("{0}")]
    Kraus(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemType {
    pub label: String,
    pub dim: usize,
}

/// A test: one real matrix per classical outcome.
///
/// Each outcome matrix has `rows = Π dim(outputs)` and
/// `cols = Π dim(inputs)` (an empty product is 1).
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub name: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub outcomes: Vec<RealMatrix>,
}

impl Gate {
    pub fn new(
        name: impl Into<String>,
        inputs: &[&str],
        outputs: &[&str],
        outcomes: Vec<RealMatrix>,
    ) -> Self {
        Self {
            name: name.into(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            outcomes,
        }
    }

    pub fn outcome_count(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.outcomes.len() == 1
    }

    pub fn is_preparation(&self) -> bool {
        self.inputs.is_empty() && !self.outputs.is_empty()
    }

    pub fn is_measurement(&self) -> bool {
        self.outputs.is_empty() && !self.inputs.is_empty()
    }

    /// Sum of all outcome matrices (the coarse-grained transformation).
    pub fn outcome_sum(&self) -> RealMatrix {
        let mut acc = self.outcomes[0].clone();
        for m in &self.outcomes[1..] {
            acc = acc.add(m).expect("outcome shapes agree");
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Theory {
    pub name: String,
    pub types: Vec<SystemType>,
    pub gates: Vec<Gate>,
    /// Deterministic effect `u_A` (a 1×dim row) per type, when known.
    pub causal_certificate: Option<BTreeMap<String, RealMatrix>>,
}

impl Theory {
    pub fn system_type(&self, label: &str) -> Option<&SystemType> {
        self.types.iter().find(|t| t.label == label)
    }

    pub fn dim(&self, label: &str) -> Option<usize> {
        self.system_type(label).map(|t| t.dim)
    }

    pub fn gate(&self, name: &str) -> Option<&Gate> {
        self.gates.iter().find(|g| g.name == name)
    }

    /// Product of the dimensions of `labels`; `None` if any label is unknown.
    pub fn dims_product(&self, labels: &[String]) -> Option<usize> {
        labels
            .iter()
            .try_fold(1usize, |acc, l| self.dim(l).map(|d| acc * d))
    }

    /// Runs [`check_causality`] and stores the deterministic effects when
    /// the theory is causal.
    pub fn with_causal_certificate(mut self) -> Self {
        let report = check_causality(&self, DEFAULT_CAUSALITY_TOL);
        if report.is_causal {
            let cert = report
                .per_type_effect
                .into_iter()
                .filter_map(|(k, v)| v.map(|m| (k, m)))
                .collect();
            self.causal_certificate = Some(cert);
        }
        self
    }

    pub fn from_json(text: &str) -> Result<Self, TheoryError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: TheoryFile = serde_path_to_error::deserialize(de).map_err(|e| {
            let inner = e.inner();
            TheoryError::Parse {
                path: e.path().to_string(),
                line: inner.line(),
                column: inner.column(),
                message: inner.to_string(),
            }
        })?;
        Self::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TheoryFile::from(self)).expect("theory serialises")
    }
}

/// On-disk theory representation. Outcome matrices are flat row-major
/// arrays; their shapes follow from the declared port types.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub types: Vec<SystemType>,
    pub gates: Vec<GateFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateFile {
    pub name: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub outputs: Vec<String>,
    pub outcomes: Vec<Vec<f64>>,
}

impl From<&Theory> for TheoryFile {
    fn from(t: &Theory) -> Self {
        Self {
            name: Some(t.name.clone()),
            types: t.types.clone(),
            gates: t
                .gates
                .iter()
                .map(|g| GateFile {
                    name: g.name.clone(),
                    inputs: g.inputs.clone(),
                    outputs: g.outputs.clone(),
                    outcomes: g.outcomes.iter().map(|m| m.data().to_vec()).collect(),
                })
                .collect(),
        }
    }
}

impl TryFrom<TheoryFile> for Theory {
    type Error = TheoryError;

    fn try_from(file: TheoryFile) -> Result<Self, TheoryError> {
        let mut diags = type_diagnostics(&file.types);
        let dims: BTreeMap<&str, usize> = file
            .types
            .iter()
            .map(|t| (t.label.as_str(), t.dim))
            .collect();
        let mut gates = Vec::with_capacity(file.gates.len());
        for (gi, g) in file.gates.iter().enumerate() {
            let base = format!("/gates/{gi}");
            let mut shape = |labels: &[String], field: &str| -> Option<usize> {
                let mut acc = 1usize;
                let mut ok = true;
                for (k, l) in labels.iter().enumerate() {
                    match dims.get(l.as_str()) {
                        Some(&d) => acc *= d,
                        None => {
                            diags.push(Diagnostic::new(
                                format!("{base}/{field}/{k}"),
                                format!("unknown system type `{l}`"),
                            ));
                            ok = false;
                        }
                    }
                }
                ok.then_some(acc)
            };
            let rows = shape(&g.outputs, "outputs");
            let cols = shape(&g.inputs, "inputs");
            if g.outcomes.is_empty() {
                diags.push(Diagnostic::new(
                    format!("{base}/outcomes"),
                    "gate must have at least one outcome",
                ));
            }
            let (Some(rows), Some(cols)) = (rows, cols) else {
                continue;
            };
            let mut outcomes = Vec::with_capacity(g.outcomes.len());
            for (k, data) in g.outcomes.iter().enumerate() {
                match RealMatrix::new(rows, cols, data.clone()) {
                    Ok(m) => outcomes.push(m),
                    Err(e) => diags.push(Diagnostic::new(
                        format!("{base}/outcomes/{k}"),
                        format!("expected a {rows}x{cols} row-major matrix: {e}"),
                    )),
                }
            }
            gates.push(Gate {
                name: g.name.clone(),
                inputs: g.inputs.clone(),
                outputs: g.outputs.clone(),
                outcomes,
            });
        }
        let theory = Theory {
            name: file.name.unwrap_or_else(|| "unnamed".to_string()),
            types: file.types,
            gates,
            causal_certificate: None,
        };
        if diags.is_empty() {
            diags = validate_theory(&theory);
        }
        if diags.is_empty() {
            Ok(theory)
        } else {
            Err(TheoryError::Invalid(diags))
        }
    }
}

fn type_diagnostics(types: &[SystemType]) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, t) in types.iter().enumerate() {
        if t.label.is_empty() {
            diags.push(Diagnostic::new(
                format!("/types/{i}/label"),
                "empty type label",
            ));
        }
        if t.dim == 0 {
            diags.push(Diagnostic::new(
                format!("/types/{i}/dim"),
                "dimension must be at least 1",
            ));
        }
        if !seen.insert(t.label.as_str()) {
            diags.push(Diagnostic::new(
                format!("/types/{i}/label"),
                format!("duplicate type label `{}`", t.label),
            ));
        }
    }
    diags
}

/// Structural checks; an empty result means the theory is well formed.
pub fn validate_theory(t: &Theory) -> Vec<Diagnostic> {
    let mut diags = type_diagnostics(&t.types);
    let mut names = BTreeSet::new();
    for (gi, g) in t.gates.iter().enumerate() {
        let base = format!("/gates/{gi}");
        if !names.insert(g.name.as_str()) {
            diags.push(Diagnostic::new(
                format!("{base}/name"),
                format!("duplicate gate name `{}`", g.name),
            ));
        }
        let mut known = true;
        for (field, labels) in [("inputs", &g.inputs), ("outputs", &g.outputs)] {
            for (k, l) in labels.iter().enumerate() {
                if t.dim(l).is_none() {
                    diags.push(Diagnostic::new(
                        format!("{base}/{field}/{k}"),
                        format!("unknown system type `{l}`"),
                    ));
                    known = false;
                }
            }
        }
        if g.outcomes.is_empty() {
            diags.push(Diagnostic::new(
                format!("{base}/outcomes"),
                "gate must have at least one outcome",
            ));
        }
        if !known {
            continue;
        }
        let rows = t.dims_product(&g.outputs).unwrap_or(1);
        let cols = t.dims_product(&g.inputs).unwrap_or(1);
        for (k, m) in g.outcomes.iter().enumerate() {
            if m.shape() != (rows, cols) {
                diags.push(Diagnostic::new(
                    format!("{base}/outcomes/{k}"),
                    format!(
                        "gate `{}` outcome {k} is {}x{}, expected {rows}x{cols} from its port types",
                        g.name,
                        m.rows(),
                        m.cols()
                    ),
                ));
            }
        }
    }
    if let Some(cert) = &t.causal_certificate {
        for (label, u) in cert {
            match t.dim(label) {
                None => diags.push(Diagnostic::new(
                    format!("/causal_certificate/{label}"),
                    "certificate names an unknown type",
                )),
                Some(d) if u.shape() != (1, d) => diags.push(Diagnostic::new(
                    format!("/causal_certificate/{label}"),
                    format!("expected a 1x{d} row vector"),
                )),
                _ => {}
            }
        }
        if diags.is_empty() {
            let report = check_causality(t, DEFAULT_CAUSALITY_TOL);
            if !report.is_causal {
                diags.push(Diagnostic::new(
                    "/causal_certificate",
                    "theory carries a certificate but is not causal",
                ));
            }
            for (label, u) in cert {
                let agrees = report
                    .per_type_effect
                    .get(label)
                    .and_then(Option::as_ref)
                    .and_then(|v| v.max_abs_diff(u))
                    .is_some_and(|d| d <= DEFAULT_CAUSALITY_TOL);
                if !agrees {
                    diags.push(Diagnostic::new(
                        format!("/causal_certificate/{label}"),
                        "certificate disagrees with the measured deterministic effect",
                    ));
                }
            }
        }
    }
    diags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    /// A complete measurement on the type sums to a different effect.
    ConflictingEffect,
    /// Coarse-graining the gate does not map `u_out` back to `u_in`.
    NotPreserved,
    /// No single-input measurement exists to fix `u` for the type.
    UndeterminedEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityViolation {
    /// Gate name, or type label for [`ViolationKind::UndeterminedEffect`].
    pub subject: String,
    pub kind: ViolationKind,
    /// Max-entry residual; absent for undetermined types.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalityReport {
    pub is_causal: bool,
    pub per_type_effect: BTreeMap<String, Option<RealMatrix>>,
    pub violations: Vec<CausalityViolation>,
}

/// Checks for a unique deterministic effect per type.
///
/// The candidate `u_A` is the outcome sum of the first single-input
/// measurement on `A`. Every gate is then required to satisfy
/// `(⊗ u_out) · Σ_r M_r = ⊗ u_in` within `tol`; for measurements this says
/// all complete measurements agree, for preparations that states are
/// normalised.
pub fn check_causality(t: &Theory, tol: f64) -> CausalityReport {
    let mut per_type_effect = BTreeMap::new();
    let mut violations = Vec::new();
    for ty in &t.types {
        let u = t
            .gates
            .iter()
            .find(|g| g.outputs.is_empty() && g.inputs.len() == 1 && g.inputs[0] == ty.label)
            .map(Gate::outcome_sum);
        if u.is_none() {
            violations.push(CausalityViolation {
                subject: ty.label.clone(),
                kind: ViolationKind::UndeterminedEffect,
                residual: None,
            });
        }
        per_type_effect.insert(ty.label.clone(), u);
    }

    let effect_of = |labels: &[String]| -> Option<RealMatrix> {
        labels.iter().try_fold(RealMatrix::scalar(1.0), |acc, l| {
            let u = per_type_effect.get(l)?.as_ref()?;
            acc.kron(u).ok()
        })
    };

    for g in &t.gates {
        let (Some(u_out), Some(u_in)) = (effect_of(&g.outputs), effect_of(&g.inputs)) else {
            continue;
        };
        let Ok(lhs) = u_out.matmul(&g.outcome_sum()) else {
            continue;
        };
        let residual = lhs.max_abs_diff(&u_in).unwrap_or(f64::INFINITY);
        if residual > tol {
            let kind = if g.outputs.is_empty() && g.inputs.len() == 1 {
                ViolationKind::ConflictingEffect
            } else {
                ViolationKind::NotPreserved
            };
            violations.push(CausalityViolation {
                subject: g.name.clone(),
                kind,
                residual: Some(residual),
            });
        }
    }

    CausalityReport {
        is_causal: violations.is_empty(),
        per_type_effect,
        violations,
    }
}
