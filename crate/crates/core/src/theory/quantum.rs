//! Real transfer-matrix representation of qubit systems.
//!
//! Operators on `n` qubits are expanded in the orthonormal Hermitian basis
//! `{I, X, Y, Z}/√2`, tensored in ascending qubit order (qubit 0 is the most
//! significant factor). States become column vectors, effects row vectors and
//! channels square real matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::TheoryError;
use crate::linalg::RealMatrix;

pub type ComplexMatrix = DMatrix<Complex64>;

const IMAG_TOL: f64 = 1e-9;
const TRACE_TOL: f64 = 1e-9;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn paulis() -> [ComplexMatrix; 4] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [
        ComplexMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)]),
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)]),
        ComplexMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -s), c(0.0, s), c(0.0, 0.0)]),
        ComplexMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)]),
    ]
}

/// The `4^n` normalised Pauli products for `n` qubits.
pub fn hermitian_basis(n_qubits: usize) -> Vec<ComplexMatrix> {
    let single = paulis();
    let mut basis = vec![ComplexMatrix::from_element(1, 1, c(1.0, 0.0))];
    for _ in 0..n_qubits {
        basis = basis
            .iter()
            .flat_map(|b| single.iter().map(move |p| b.kronecker(p)))
            .collect();
    }
    basis
}

fn qubit_count(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim >= 2).then(|| dim.trailing_zeros() as usize)
}

fn real_part(z: Complex64) -> Result<f64, TheoryError> {
    if z.im.abs() > IMAG_TOL {
        return Err(TheoryError::Kraus(format!(
            "imaginary residue {:.3e} exceeds {IMAG_TOL:e}; map is not Hermiticity preserving",
            z.im
        )));
    }
    Ok(z.re)
}

fn coordinates(op: &ComplexMatrix) -> Result<Vec<f64>, TheoryError> {
    let n = qubit_count(op.nrows())
        .filter(|_| op.is_square())
        .ok_or_else(|| {
            TheoryError::Kraus(format!(
                "operator must be 2^n x 2^n, got {}x{}",
                op.nrows(),
                op.ncols()
            ))
        })?;
    hermitian_basis(n)
        .iter()
        .map(|b| real_part((b * op).trace()))
        .collect()
}

/// Density operator to its real coordinate column `Tr(B_a ρ)`.
pub fn state_to_column(rho: &ComplexMatrix) -> Result<RealMatrix, TheoryError> {
    Ok(RealMatrix::column_vector(coordinates(rho)?)?)
}

/// POVM element to its real coordinate row; `row · state = Tr(E ρ)`.
pub fn effect_to_row(effect: &ComplexMatrix) -> Result<RealMatrix, TheoryError> {
    Ok(RealMatrix::row_vector(coordinates(effect)?)?)
}

/// Transfer matrix `T[a, b] = Tr(B_a Σ_k K_k B_b K_k†)` of a Kraus map.
///
/// Rejects non-square or mismatched operators, trace-increasing maps
/// (`Σ K†K` exceeding the identity by more than 1e-9) and complex residues
/// above 1e-9.
pub fn cp_map_to_transfer(kraus_ops: &[ComplexMatrix]) -> Result<RealMatrix, TheoryError> {
    let first = kraus_ops
        .first()
        .ok_or_else(|| TheoryError::Kraus("at least one Kraus operator is required".into()))?;
    let d = first.nrows();
    let n = qubit_count(d)
        .ok_or_else(|| TheoryError::Kraus(format!("dimension {d} is not a power of two")))?;
    for (k, op) in kraus_ops.iter().enumerate() {
        if op.shape() != (d, d) {
            return Err(TheoryError::Kraus(format!(
                "Kraus operator {k} is {}x{}, expected {d}x{d}",
                op.nrows(),
                op.ncols()
            )));
        }
    }
    let gram = kraus_ops
        .iter()
        .fold(ComplexMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
    let largest = gram
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if largest > 1.0 + TRACE_TOL {
        return Err(TheoryError::Kraus(format!(
            "map is trace increasing: largest eigenvalue of sum K^dag K is {largest}"
        )));
    }

    let basis = hermitian_basis(n);
    let size = basis.len();
    let mut data = vec![0.0; size * size];
    for (b, bb) in basis.iter().enumerate() {
        let image = kraus_ops.iter().fold(ComplexMatrix::zeros(d, d), |acc, k| {
            acc + k * bb * k.adjoint()
        });
        for (a, ba) in basis.iter().enumerate() {
            data[a * size + b] = real_part((ba * &image).trace())?;
        }
    }
    Ok(RealMatrix::new(size, size, data)?)
}

/// Pure-state projector `|ψ⟩⟨ψ|`.
pub(crate) fn projector(psi: &[Complex64]) -> ComplexMatrix {
    let v = nalgebra::DVector::from_column_slice(psi);
    &v * v.adjoint()
}

pub(crate) fn unitary(n: usize, entries: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_row_slice(n, n, entries)
}

pub(crate) fn real_unitary(n: usize, entries: &[f64]) -> ComplexMatrix {
    let v: Vec<Complex64> = entries.iter().map(|&x| c(x, 0.0)).collect();
    unitary(n, &v)
}
