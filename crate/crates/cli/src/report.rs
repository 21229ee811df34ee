//! JSON reports and the error-to-exit-code contract.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gptsim::approx::ApproxError;
use gptsim::circuit::CircuitError;
use gptsim::eval::EvalError;
use gptsim::linalg::LinalgError;
use gptsim::oracle::OracleError;
use gptsim::theory::{resolve_builtin, Theory, TheoryError};
use gptsim::Diagnostic;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_POSTSELECT: i32 = 4;
pub const EXIT_NONCAUSAL: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

fn linalg_code(e: &LinalgError) -> i32 {
    match e {
        LinalgError::TooLarge { .. } | LinalgError::ExponentTooLarge { .. } => EXIT_CAP,
        _ => EXIT_INVALID,
    }
}

fn circuit_code(e: &CircuitError) -> i32 {
    match e {
        CircuitError::EnumerationTooLarge { .. } => EXIT_CAP,
        CircuitError::Linalg(l) => linalg_code(l),
        _ => EXIT_INVALID,
    }
}

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::Circuit(c) => circuit_code(c),
        EvalError::Linalg(l) => linalg_code(l),
        EvalError::PathCapExceeded { .. } => EXIT_CAP,
        EvalError::BelowThreshold { .. } | EvalError::DivisionImpossible => EXIT_POSTSELECT,
        EvalError::Rule(_) | EvalError::BadThreshold(_) => EXIT_INVALID,
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Invalid(_) => EXIT_INVALID,
            CliError::Theory(TheoryError::Linalg(l)) => linalg_code(l),
            CliError::Theory(_) => EXIT_INVALID,
            CliError::Circuit(e) => circuit_code(e),
            CliError::Eval(e) => eval_code(e),
            CliError::Approx(e) => match e {
                ApproxError::Circuit(c) => circuit_code(c),
                ApproxError::Eval(v) => eval_code(v),
                ApproxError::Linalg(l) => linalg_code(l),
                _ => EXIT_INVALID,
            },
            CliError::Oracle(e) => match e {
                OracleError::NonCausal(_) => EXIT_NONCAUSAL,
                OracleError::Circuit(c) => circuit_code(c),
                OracleError::Eval(v) => eval_code(v),
                OracleError::TooManyPaths(_) => EXIT_CAP,
                OracleError::ConditioningOnNull(_) => EXIT_RUNTIME,
                _ => EXIT_INVALID,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            EXIT_INVALID => "invalid-input",
            EXIT_CAP => "resource-cap",
            EXIT_POSTSELECT => "post-selection",
            EXIT_NONCAUSAL => "non-causal",
            _ => "runtime",
        }
    }

    /// Structured details for the report, where available.
    pub fn details(&self) -> Value {
        match self {
            CliError::Theory(TheoryError::Invalid(d))
            | CliError::Circuit(CircuitError::Invalid(d)) => {
                serde_json::json!({ "diagnostics": d })
            }
            CliError::Eval(EvalError::BelowThreshold { p_s, threshold }) => {
                serde_json::json!({ "p_s": p_s, "threshold": threshold })
            }
            CliError::Oracle(OracleError::NonCausal(v)) => serde_json::json!({ "violations": v }),
            _ => Value::Null,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: Vec<String>,
    pub inputs: Vec<InputDigest>,
    pub result: Value,
    pub diagnostics: Vec<Diagnostic>,
    pub error: Option<ErrorInfo>,
    pub wall_time_ms: f64,
}

/// Accumulates inputs while a command runs.
pub struct Session {
    pub started: Instant,
    pub inputs: Vec<InputDigest>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Session {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            inputs: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn record(&mut self, path: String, bytes: &[u8]) {
        self.inputs.push(InputDigest {
            path,
            sha256: hex::encode(Sha256::digest(bytes)),
        });
    }

    pub fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        self.record(path.display().to_string(), text.as_bytes());
        Ok(text)
    }

    /// Loads `builtin:<name>` or a theory file, resolving relative paths
    /// against `base`.
    pub fn theory(&mut self, reference: &str, base: Option<&Path>) -> Result<Theory, CliError> {
        if let Some(name) = reference.strip_prefix("builtin:") {
            let t = resolve_builtin(name)?;
            self.record(reference.to_string(), t.to_json().as_bytes());
            return Ok(t);
        }
        let path = match base {
            Some(dir) if Path::new(reference).is_relative() => dir.join(reference),
            _ => PathBuf::from(reference),
        };
        let text = self.read(&path)?;
        Theory::from_json(&text).map_err(|e| match e {
            TheoryError::Parse {
                path: p,
                line,
                column,
                message,
            } => CliError::Parse {
                path: path.display().to_string(),
                message: format!("line {line}, column {column}: {message} (at `{p}`)"),
            },
            other => other.into(),
        })
    }

    pub fn finish(self, command: Vec<String>, outcome: Result<Value, CliError>) -> (Report, i32) {
        let (result, error, code) = match outcome {
            Ok(v) => (v, None, EXIT_OK),
            Err(e) => {
                let code = e.exit_code();
                let info = ErrorInfo {
                    kind: e.kind(),
                    message: e.to_string(),
                    exit_code: code,
                    details: e.details(),
                };
                (Value::Null, Some(info), code)
            }
        };
        let report = Report {
            command,
            inputs: self.inputs,
            result,
            diagnostics: self.diagnostics,
            error,
            wall_time_ms: self.started.elapsed().as_secs_f64() * 1e3,
        };
        (report, code)
    }
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Parse {
        path: path.display().to_string(),
        message: format!("line {}, column {}: {e}", e.line(), e.column()),
    })
}
