//! Built-in theories: classical probability, qubits, and box world.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4};

use num_complex::Complex64;

use super::quantum::{
    cp_map_to_transfer, effect_to_row, projector, real_unitary, state_to_column, unitary,
    ComplexMatrix,
};
use super::{Gate, SystemType, Theory, TheoryError};
use crate::linalg::RealMatrix;

fn column(v: &[f64]) -> RealMatrix {
    RealMatrix::column_vector(v.to_vec()).expect("finite column")
}

fn row(v: &[f64]) -> RealMatrix {
    RealMatrix::row_vector(v.to_vec()).expect("finite row")
}

fn delta(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

/// Classical systems with `n_levels` states (`n_levels >= 2`).
///
/// Type label is `bit` for two levels and `dit<n>` otherwise. Gates:
/// `point<k>` and `uniform` preparations, `coin` (uniform preparation that
/// reports which point was prepared), `identity`, `shift` (k → k+1 mod n),
/// `measure` (delta effects) and `discard`. Two-level theories add `noise`
/// (binary symmetric, flip probability 1/4) and `cnot` (b ← a xor b).
pub fn builtin_classical(n_levels: usize) -> Theory {
    assert!(n_levels >= 2, "classical theory needs at least two levels");
    let n = n_levels;
    let label = if n == 2 {
        "bit".to_string()
    } else {
        format!("dit{n}")
    };
    let l = label.as_str();
    let mut gates = Vec::new();
    for k in 0..n {
        gates.push(Gate::new(
            format!("point{k}"),
            &[],
            &[l],
            vec![column(&delta(n, k))],
        ));
    }
    gates.push(Gate::new(
        "uniform",
        &[],
        &[l],
        vec![column(&vec![1.0 / n as f64; n])],
    ));
    gates.push(Gate::new(
        "coin",
        &[],
        &[l],
        (0..n)
            .map(|k| column(&delta(n, k)).scale(1.0 / n as f64))
            .collect(),
    ));
    gates.push(Gate::new(
        "identity",
        &[l],
        &[l],
        vec![RealMatrix::identity(n)],
    ));
    let mut shift = vec![0.0; n * n];
    for k in 0..n {
        shift[((k + 1) % n) * n + k] = 1.0;
    }
    gates.push(Gate::new(
        "shift",
        &[l],
        &[l],
        vec![RealMatrix::new(n, n, shift).unwrap()],
    ));
    if n == 2 {
        gates.push(Gate::new(
            "noise",
            &[l],
            &[l],
            vec![RealMatrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).unwrap()],
        ));
        let mut cnot = vec![0.0; 16];
        for a in 0..2 {
            for b in 0..2 {
                let src = a * 2 + b;
                let dst = a * 2 + (a ^ b);
                cnot[dst * 4 + src] = 1.0;
            }
        }
        gates.push(Gate::new(
            "cnot",
            &[l, l],
            &[l, l],
            vec![RealMatrix::new(4, 4, cnot).unwrap()],
        ));
    }
    gates.push(Gate::new(
        "measure",
        &[l],
        &[],
        (0..n).map(|k| row(&delta(n, k))).collect(),
    ));
    gates.push(Gate::new("discard", &[l], &[], vec![row(&vec![1.0; n])]));

    Theory {
        name: format!("classical{n}"),
        types: vec![SystemType { label, dim: n }],
        gates,
        causal_certificate: None,
    }
    .with_causal_certificate()
}

fn cz(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn basis_state(n_qubits: usize, index: usize) -> Vec<Complex64> {
    let mut v = vec![cz(0.0); 1 << n_qubits];
    v[index] = cz(1.0);
    v
}

fn permutation_unitary(n_qubits: usize, map: impl Fn(usize) -> usize) -> ComplexMatrix {
    let d = 1 << n_qubits;
    let mut m = ComplexMatrix::zeros(d, d);
    for src in 0..d {
        m[(map(src), src)] = cz(1.0);
    }
    m
}

fn channel(u: ComplexMatrix) -> Result<RealMatrix, TheoryError> {
    cp_map_to_transfer(&[u])
}

/// Qubits in the real transfer representation (type `qubit`, dimension 4).
///
/// `n_qubits_max` (1 to 3) bounds gate arity. Always present: preparations
/// `zero`, `one`, `plus`; unitaries `h`, `t`, `x`, `z`; the two-outcome
/// non-destructive `instrument_z`; measurements `measure_z`, `measure_x` and
/// `discard`. Arity 2 adds `bell` and `cnot`; arity 3 adds `ghz` and
/// `toffoli`.
pub fn builtin_quantum(n_qubits_max: usize) -> Result<Theory, TheoryError> {
    if !(1..=3).contains(&n_qubits_max) {
        return Err(TheoryError::UnknownBuiltin(format!("qubits{n_qubits_max}")));
    }
    let q = "qubit";
    let s = FRAC_1_SQRT_2;
    let mut gates = vec![
        Gate::new(
            "zero",
            &[],
            &[q],
            vec![state_to_column(&projector(&basis_state(1, 0)))?],
        ),
        Gate::new(
            "one",
            &[],
            &[q],
            vec![state_to_column(&projector(&basis_state(1, 1)))?],
        ),
        Gate::new(
            "plus",
            &[],
            &[q],
            vec![state_to_column(&projector(&[cz(s), cz(s)]))?],
        ),
    ];
    if n_qubits_max >= 2 {
        let bell = [cz(s), cz(0.0), cz(0.0), cz(s)];
        gates.push(Gate::new(
            "bell",
            &[],
            &[q, q],
            vec![state_to_column(&projector(&bell))?],
        ));
    }
    if n_qubits_max >= 3 {
        let mut ghz = vec![cz(0.0); 8];
        ghz[0] = cz(s);
        ghz[7] = cz(s);
        gates.push(Gate::new(
            "ghz",
            &[],
            &[q, q, q],
            vec![state_to_column(&projector(&ghz))?],
        ));
    }

    let t_phase = Complex64::from_polar(1.0, FRAC_PI_4);
    gates.push(Gate::new(
        "h",
        &[q],
        &[q],
        vec![channel(real_unitary(2, &[s, s, s, -s]))?],
    ));
    gates.push(Gate::new(
        "t",
        &[q],
        &[q],
        vec![channel(unitary(2, &[cz(1.0), cz(0.0), cz(0.0), t_phase]))?],
    ));
    gates.push(Gate::new(
        "x",
        &[q],
        &[q],
        vec![channel(real_unitary(2, &[0.0, 1.0, 1.0, 0.0]))?],
    ));
    gates.push(Gate::new(
        "z",
        &[q],
        &[q],
        vec![channel(real_unitary(2, &[1.0, 0.0, 0.0, -1.0]))?],
    ));
    if n_qubits_max >= 2 {
        // control is the first port
        let cnot = permutation_unitary(2, |i| if i & 2 != 0 { i ^ 1 } else { i });
        gates.push(Gate::new("cnot", &[q, q], &[q, q], vec![channel(cnot)?]));
    }
    if n_qubits_max >= 3 {
        let toffoli = permutation_unitary(3, |i| if i & 6 == 6 { i ^ 1 } else { i });
        gates.push(Gate::new(
            "toffoli",
            &[q, q, q],
            &[q, q, q],
            vec![channel(toffoli)?],
        ));
    }
    let p0 = projector(&basis_state(1, 0));
    let p1 = projector(&basis_state(1, 1));
    gates.push(Gate::new(
        "instrument_z",
        &[q],
        &[q],
        vec![
            cp_map_to_transfer(std::slice::from_ref(&p0))?,
            cp_map_to_transfer(std::slice::from_ref(&p1))?,
        ],
    ));
    gates.push(Gate::new(
        "measure_z",
        &[q],
        &[],
        vec![effect_to_row(&p0)?, effect_to_row(&p1)?],
    ));
    let plus = projector(&[cz(s), cz(s)]);
    let minus = projector(&[cz(s), cz(-s)]);
    gates.push(Gate::new(
        "measure_x",
        &[q],
        &[],
        vec![effect_to_row(&plus)?, effect_to_row(&minus)?],
    ));
    gates.push(Gate::new(
        "discard",
        &[q],
        &[],
        vec![effect_to_row(&ComplexMatrix::identity(2, 2))?],
    ));

    Ok(Theory {
        name: format!("qubits{n_qubits_max}"),
        types: vec![SystemType {
            label: q.to_string(),
            dim: 4,
        }],
        gates,
        causal_certificate: None,
    }
    .with_causal_certificate())
}

/// Box world with generalised bits (type `gbit`, dimension 3).
///
/// A gbit state has coordinates `(p(a=0|x=0), p(a=0|x=1), 1)`. Gates: the
/// four deterministic preparations `det<a0><a1>` (outcome `a0` for `x=0`,
/// `a1` for `x=1`), the bipartite `pr` box, the reversible relabellings
/// `flip_x0` and `swap_inputs`, measurements `measure_x0`, `measure_x1`, and
/// `discard`.
pub fn builtin_boxworld() -> Theory {
    let g = "gbit";
    let mut gates = Vec::new();
    for a0 in 0..2 {
        for a1 in 0..2 {
            let p0 = if a0 == 0 { 1.0 } else { 0.0 };
            let p1 = if a1 == 0 { 1.0 } else { 0.0 };
            gates.push(Gate::new(
                format!("det{a0}{a1}"),
                &[],
                &[g],
                vec![column(&[p0, p1, 1.0])],
            ));
        }
    }
    // entries indexed (i, j) over coordinates of the two gbits; (x, y) block
    // holds P(a=0, b=0 | x, y), the third row/column the marginals
    gates.push(Gate::new(
        "pr",
        &[],
        &[g, g],
        vec![column(&[0.5, 0.5, 0.5, 0.5, 0.0, 0.5, 0.5, 0.5, 1.0])],
    ));
    gates.push(Gate::new(
        "flip_x0",
        &[g],
        &[g],
        vec![RealMatrix::from_rows(&[
            vec![-1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap()],
    ));
    gates.push(Gate::new(
        "swap_inputs",
        &[g],
        &[g],
        vec![RealMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap()],
    ));
    gates.push(Gate::new(
        "measure_x0",
        &[g],
        &[],
        vec![row(&[1.0, 0.0, 0.0]), row(&[-1.0, 0.0, 1.0])],
    ));
    gates.push(Gate::new(
        "measure_x1",
        &[g],
        &[],
        vec![row(&[0.0, 1.0, 0.0]), row(&[0.0, -1.0, 1.0])],
    ));
    gates.push(Gate::new("discard", &[g], &[], vec![row(&[0.0, 0.0, 1.0])]));

    Theory {
        name: "boxworld".into(),
        types: vec![SystemType {
            label: g.to_string(),
            dim: 3,
        }],
        gates,
        causal_certificate: None,
    }
    .with_causal_certificate()
}

/// Minimal non-causal theory: two complete single-outcome measurements on a
/// bit disagree about the deterministic effect.
pub fn builtin_noncausal_counterexample() -> Theory {
    let b = "bit";
    Theory {
        name: "noncausal".into(),
        types: vec![SystemType {
            label: b.to_string(),
            dim: 2,
        }],
        gates: vec![
            Gate::new("zero", &[], &[b], vec![column(&[1.0, 0.0])]),
            Gate::new("effect_a", &[b], &[], vec![row(&[1.0, 0.0])]),
            Gate::new("effect_b", &[b], &[], vec![row(&[0.0, 1.0])]),
        ],
        causal_certificate: None,
    }
}

/// Looks up `classical<n>`, `qubits<1..3>`, `boxworld` or `noncausal`.
pub fn resolve_builtin(name: &str) -> Result<Theory, TheoryError> {
    let name = name.strip_prefix("builtin:").unwrap_or(name);
    if let Some(n) = name.strip_prefix("classical") {
        return match n.parse::<usize>() {
            Ok(n) if (2..=64).contains(&n) => Ok(builtin_classical(n)),
            _ => Err(TheoryError::UnknownBuiltin(name.into())),
        };
    }
    if let Some(n) = name.strip_prefix("qubits") {
        return match n.parse::<usize>() {
            Ok(n) => builtin_quantum(n).map_err(|_| TheoryError::UnknownBuiltin(name.into())),
            Err(_) => Err(TheoryError::UnknownBuiltin(name.into())),
        };
    }
    match name {
        "boxworld" => Ok(builtin_boxworld()),
        "noncausal" => Ok(builtin_noncausal_counterexample()),
        _ => Err(TheoryError::UnknownBuiltin(name.into())),
    }
}
