mod report;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gptsim::approx::{approximate_circuit_with_limits, outcome_errors};
use gptsim::circuit::{
    validate_circuit, Circuit, CircuitError, CompiledCircuit, OutcomeString, Schedule,
};
use gptsim::eval::{
    accept_exact, accept_probability, distribution, distribution_exact, eval_exact, eval_with,
    postselect, verdict, AcceptanceRule, Engine, PostSelection, BGP_ACCEPT, BGP_REJECT,
};
use gptsim::oracle::{
    estimate_accept, exact_accept_probability, run_adaptive, run_seeds, validate_program,
    AdaptiveProgram, CausalContext, ClassicalOracle, Step,
};
use gptsim::theory::{
    check_causality, validate_theory, Theory, TheoryError, DEFAULT_CAUSALITY_TOL,
};
use gptsim::Limits;
use serde_json::{json, Value};

use report::{parse_json, CliError, Session};

#[derive(Parser, Debug)]
#[command(
    name = "gptsim",
    version,
    about = "Simulate circuits in generalised probabilistic theories"
)]
struct Cli {
    /// Print a human-readable table instead of JSON.
    #[arg(long, global = true)]
    table: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EngineArg {
    Dense,
    Pathsum,
    Exact,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a theory (and optionally a circuit over it).
    Validate {
        /// Theory file or `builtin:<name>`.
        theory: String,
        circuit: Option<PathBuf>,
    },
    /// Outcome probabilities of a circuit.
    Eval {
        circuit: PathBuf,
        #[arg(long, value_enum, default_value = "dense")]
        engine: EngineArg,
        /// Single outcome string, e.g. `010` or `0,12,3`.
        #[arg(long, conflicts_with = "distribution")]
        outcome: Option<String>,
        /// Full distribution (the default when no outcome is given).
        #[arg(long)]
        distribution: bool,
        /// Rounding exponent for the exact engine.
        #[arg(long, default_value_t = 20)]
        exponent: u32,
    },
    /// Acceptance probability under a rule, optionally post-selected.
    Accept {
        circuit: PathBuf,
        rule: PathBuf,
        /// Selector rule file, or `node=outcome[,node=outcome…]`.
        #[arg(long)]
        postselect: Option<String>,
        /// Smallest admissible P(S).
        #[arg(long, default_value_t = 1e-9)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "dense")]
        engine: EngineArg,
        #[arg(long, default_value_t = 20)]
        exponent: u32,
    },
    /// Dyadic approximation with its error certificate.
    Approx {
        circuit: PathBuf,
        #[arg(long)]
        eps: f64,
    },
    /// Run an adaptive program repeatedly and estimate its acceptance.
    Sample {
        program: PathBuf,
        oracle: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also compute the exact acceptance probability over all branches.
        #[arg(long)]
        exact: bool,
    },
}

fn engine_of(arg: EngineArg, exponent: u32) -> Engine {
    match arg {
        EngineArg::Dense => Engine::Dense,
        EngineArg::Pathsum => Engine::PathSum,
        EngineArg::Exact => Engine::Exact { d: exponent },
    }
}

fn parent(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn load_circuit(s: &mut Session, path: &Path) -> Result<(Circuit, Theory), CliError> {
    let text = s.read(path)?;
    let circuit = Circuit::from_json(&text).map_err(|e| match e {
        CircuitError::Parse {
            path: p,
            line,
            column,
            message,
        } => CliError::Parse {
            path: path.display().to_string(),
            message: format!("line {line}, column {column}: {message} (at `{p}`)"),
        },
        other => other.into(),
    })?;
    let theory = s.theory(&circuit.theory, parent(path))?;
    Ok((circuit, theory))
}

fn compile<'a>(
    c: &'a Circuit,
    t: &'a Theory,
    limits: Limits,
) -> Result<CompiledCircuit<'a>, CliError> {
    Ok(CompiledCircuit::with_options(c, t, Schedule::Asap, limits)?)
}

fn load_rule(s: &mut Session, spec: &str) -> Result<AcceptanceRule, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = s.read(path)?;
        parse_json(path, &text)
    } else {
        Ok(AcceptanceRule::parse_selector(spec)?)
    }
}

fn circuit_summary(cc: &CompiledCircuit<'_>) -> Value {
    json!({
        "gates": cc.gate_count(),
        "layers": cc.layer_count(),
        "boundary_dims": cc.foliation.layer_dims(),
        "D_global": cc.foliation.max_boundary_dim(),
    })
}

fn cmd_validate(s: &mut Session, theory: &str, circuit: Option<&Path>) -> Result<Value, CliError> {
    let t = match s.theory(theory, None) {
        Ok(t) => t,
        Err(CliError::Theory(TheoryError::Invalid(diags))) => {
            s.diagnostics.extend(diags.iter().cloned());
            return Err(CliError::Theory(TheoryError::Invalid(diags)));
        }
        Err(e) => return Err(e),
    };
    let diags = validate_theory(&t);
    let report = check_causality(&t, DEFAULT_CAUSALITY_TOL);
    let mut result = json!({
        "theory": t.name,
        "valid": diags.is_empty(),
        "causal": report.is_causal,
        "causality": report,
    });
    s.diagnostics.extend(diags.iter().cloned());
    if let Some(path) = circuit {
        let text = s.read(path)?;
        let c = Circuit::from_json(&text)?;
        let cdiags = validate_circuit(&c, &t);
        result["circuit"] = json!({ "valid": cdiags.is_empty() });
        if cdiags.is_empty() {
            let cc = compile(&c, &t, Limits::from_env())?;
            result["circuit"]["structure"] = circuit_summary(&cc);
        }
        s.diagnostics.extend(cdiags);
    }
    if !s.diagnostics.is_empty() {
        return Err(CliError::Invalid(format!(
            "{} validation diagnostic(s)",
            s.diagnostics.len()
        )));
    }
    Ok(result)
}

fn cmd_eval(
    s: &mut Session,
    path: &Path,
    engine: Engine,
    outcome: Option<&str>,
) -> Result<Value, CliError> {
    let (c, t) = load_circuit(s, path)?;
    let cc = compile(&c, &t, Limits::from_env())?;
    let mut result = json!({ "engine": engine.to_string(), "circuit": circuit_summary(&cc) });
    match (outcome, engine) {
        (Some(z), Engine::Exact { d }) => {
            let z: OutcomeString = z.parse()?;
            let a = eval_exact(&cc, &z, d)?;
            result["outcome"] = json!(z.to_string());
            result["amplitude"] = json!(a);
        }
        (Some(z), _) => {
            let z: OutcomeString = z.parse()?;
            result["outcome"] = json!(z.to_string());
            result["probability"] = json!(eval_with(&cc, &z, engine)?);
        }
        (None, Engine::Exact { d }) => {
            let rows: Vec<Value> = distribution_exact(&cc, d)?
                .into_iter()
                .map(|(z, a)| json!({ "outcome": z.to_string(), "amplitude": a }))
                .collect();
            result["distribution"] = Value::Array(rows);
        }
        (None, _) => {
            let rows: Vec<Value> = distribution(&cc, engine)?
                .into_iter()
                .map(|(z, p)| json!({ "outcome": z.to_string(), "probability": p }))
                .collect();
            result["distribution"] = Value::Array(rows);
        }
    }
    Ok(result)
}

fn cmd_accept(
    s: &mut Session,
    path: &Path,
    rule_path: &Path,
    selector: Option<&str>,
    threshold: f64,
    engine: Engine,
) -> Result<Value, CliError> {
    let (c, t) = load_circuit(s, path)?;
    let cc = compile(&c, &t, Limits::from_env())?;
    let rule_text = s.read(rule_path)?;
    let rule: AcceptanceRule = parse_json(rule_path, &rule_text)?;
    let rule = rule.compile(&cc)?;
    let thresholds = (BGP_ACCEPT, BGP_REJECT);
    let mut result = json!({ "engine": engine.to_string(), "circuit": circuit_summary(&cc) });
    match selector {
        None => {
            let p = match engine {
                Engine::Exact { d } => {
                    let a = accept_exact(&cc, &rule, d)?;
                    result["amplitude"] = json!(a);
                    a.to_f64()
                }
                _ => accept_probability(&cc, &rule, engine)?,
            };
            result["probability"] = json!(p);
            result["verdict"] = json!(verdict(p, thresholds));
        }
        Some(sel) => {
            let selector = load_rule(s, sel)?.compile(&cc)?;
            let ps = PostSelection::new(selector, threshold)?;
            let r = postselect(&cc, &rule, &ps, engine)?;
            result["threshold"] = json!(threshold);
            result["verdict"] = json!(verdict(r.conditional, thresholds));
            result["postselection"] = json!(r);
            result["probability"] = json!(r.conditional);
        }
    }
    Ok(result)
}

fn cmd_approx(s: &mut Session, path: &Path, eps: f64) -> Result<Value, CliError> {
    let (c, t) = load_circuit(s, path)?;
    let limits = Limits::from_env();
    let a = approximate_circuit_with_limits(&c, &t, eps, limits)?;
    let errors = outcome_errors(&c, &t, &a, limits)?;
    let max = errors.iter().map(|e| e.abs_diff).fold(0.0, f64::max);
    Ok(json!({
        "d": a.d,
        "certificate": a.certificate,
        "max_abs_diff": max,
        "within_bound": errors.iter().all(|e| e.abs_diff <= a.certificate.bound),
        "outcomes": errors,
    }))
}

fn cmd_sample(
    s: &mut Session,
    program_path: &Path,
    oracle_path: &Path,
    runs: u64,
    seed: u64,
    exact: bool,
) -> Result<Value, CliError> {
    let text = s.read(program_path)?;
    let program: AdaptiveProgram = parse_json(program_path, &text)?;
    let text = s.read(oracle_path)?;
    let oracle: ClassicalOracle = parse_json(oracle_path, &text)?;
    let t = s.theory(&program.theory, parent(program_path))?;
    let ctx = CausalContext::new(&t)?;
    validate_program(&ctx, &program)?;
    let estimate = estimate_accept(&ctx, &program, &oracle, runs, seed)?;
    let first_seed = run_seeds(seed, 1).next().expect("one seed");
    let first = run_adaptive(&ctx, &program, &oracle, first_seed)?;
    let query_steps = program
        .steps
        .iter()
        .filter(|st| matches!(st, Step::Query(_)))
        .count();
    let mut result = json!({
        "runs": runs,
        "seed": seed,
        "estimate": estimate,
        "program_query_steps": query_steps,
        "first_trace": first,
    });
    if exact {
        result["exact_probability"] = json!(exact_accept_probability(&ctx, &program, &oracle)?);
    }
    Ok(result)
}

fn render_table(value: &Value, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                match v {
                    Value::Object(_) | Value::Array(_) => {
                        out.push_str(&format!("{pad}{k}:\n"));
                        render_table(v, indent + 2, out);
                    }
                    _ => out.push_str(&format!("{pad}{k}: {v}\n")),
                }
            }
        }
        Value::Array(items) => {
            for item in items {
                match item {
                    Value::Object(map) => {
                        let cells: Vec<String> =
                            map.iter().map(|(k, v)| format!("{k}={v}")).collect();
                        out.push_str(&format!("{pad}- {}\n", cells.join("  ")));
                    }
                    other => out.push_str(&format!("{pad}- {other}\n")),
                }
            }
        }
        other => out.push_str(&format!("{pad}{other}\n")),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let mut session = Session::new();
    let outcome = match &cli.command {
        Command::Validate { theory, circuit } => {
            cmd_validate(&mut session, theory, circuit.as_deref())
        }
        Command::Eval {
            circuit,
            engine,
            outcome,
            distribution: _,
            exponent,
        } => cmd_eval(
            &mut session,
            circuit,
            engine_of(*engine, *exponent),
            outcome.as_deref(),
        ),
        Command::Accept {
            circuit,
            rule,
            postselect,
            threshold,
            engine,
            exponent,
        } => cmd_accept(
            &mut session,
            circuit,
            rule,
            postselect.as_deref(),
            *threshold,
            engine_of(*engine, *exponent),
        ),
        Command::Approx { circuit, eps } => cmd_approx(&mut session, circuit, *eps),
        Command::Sample {
            program,
            oracle,
            runs,
            seed,
            exact,
        } => cmd_sample(&mut session, program, oracle, *runs, *seed, *exact),
    };
    let (report, code) = session.finish(argv.into_iter().skip(1).collect(), outcome);
    if let Some(err) = &report.error {
        eprintln!("error: {}", err.message);
        for d in &report.diagnostics {
            eprintln!("  {d}");
        }
    }
    let out = if cli.table {
        let mut out = String::new();
        render_table(&report.result, 0, &mut out);
        out
    } else {
        serde_json::to_string_pretty(&report).expect("report serialises") + "\n"
    };
    // a closed pipe downstream is not an error worth reporting
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    ExitCode::from(code as u8)
}
