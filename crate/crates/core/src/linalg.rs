//! Small dense linear-algebra helpers shared by the simulation modules.
//!
//! Gates act on a subset of qubits; rather than embedding every gate into the
//! full register we apply it in place by iterating over the index groups it
//! couples. Qubit 0 is the most significant bit of a basis index.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::CMatrix;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn from_rows(dim: usize, entries: &[Complex64]) -> CMatrix {
    DMatrix::from_row_slice(dim, dim, entries)
}

pub fn pauli_x() -> CMatrix {
    from_rows(2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    from_rows(2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    from_rows(2, &[ONE, ZERO, ZERO, -ONE])
}

/// Single-qubit Pauli by index: 0 = I, 1 = X, 2 = Y, 3 = Z.
pub fn pauli(index: usize) -> CMatrix {
    match index {
        0 => identity(2),
        1 => pauli_x(),
        2 => pauli_y(),
        3 => pauli_z(),
        _ => panic!("pauli index {index} out of range"),
    }
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn unitarity_defect(u: &CMatrix) -> f64 {
    if !u.is_square() {
        return f64::INFINITY;
    }
    max_abs(&(u.adjoint() * u - identity(u.nrows())))
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Number of qubits for a dimension, if the dimension is a power of two.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    (dim.is_power_of_two() && dim >= 1).then(|| dim.trailing_zeros() as usize)
}

/// Real eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// `exp(-i h t)` for Hermitian `h`, via eigendecomposition.
pub fn expm_hermitian(h: &CMatrix, t: f64) -> CMatrix {
    let eig = h.clone().symmetric_eigen();
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| Complex64::from_polar(1.0, -l * t)),
    ));
    v * phases * v.adjoint()
}

/// Operator 2-norm (largest singular value).
pub fn operator_norm(m: &CMatrix) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Enumerates the row/column index groups touched by a gate on `qubits`.
///
/// Each yielded group holds `2^k` indices ordered like the gate matrix, with
/// `qubits[0]` as the most significant gate bit.
fn index_groups(n_qubits: usize, qubits: &[usize]) -> Vec<Vec<usize>> {
    let k = qubits.len();
    let masks: Vec<usize> = qubits.iter().map(|&q| 1usize << (n_qubits - 1 - q)).collect();
    let all: usize = masks.iter().sum();
    let dim = 1usize << n_qubits;
    (0..dim)
        .filter(|base| base & all == 0)
        .map(|base| {
            (0..1usize << k)
                .map(|j| {
                    let mut idx = base;
                    for (bit, mask) in masks.iter().enumerate() {
                        if j >> (k - 1 - bit) & 1 == 1 {
                            idx |= mask;
                        }
                    }
                    idx
                })
                .collect()
        })
        .collect()
}

/// `m <- G m` where `G` acts on `qubits` of an `n_qubits` register.
pub fn apply_left(m: &mut CMatrix, gate: &CMatrix, qubits: &[usize], n_qubits: usize) {
    let groups = index_groups(n_qubits, qubits);
    let g = gate.nrows();
    let mut buf = vec![ZERO; g];
    for col in 0..m.ncols() {
        for group in &groups {
            for (j, &idx) in group.iter().enumerate() {
                buf[j] = m[(idx, col)];
            }
            for (i, &idx) in group.iter().enumerate() {
                let mut acc = ZERO;
                for j in 0..g {
                    acc += gate[(i, j)] * buf[j];
                }
                m[(idx, col)] = acc;
            }
        }
    }
}

/// `m <- m G†` where `G` acts on `qubits` of an `n_qubits` register.
pub fn apply_right_adjoint(m: &mut CMatrix, gate: &CMatrix, qubits: &[usize], n_qubits: usize) {
    let groups = index_groups(n_qubits, qubits);
    let g = gate.nrows();
    let mut buf = vec![ZERO; g];
    for row in 0..m.nrows() {
        for group in &groups {
            for (j, &idx) in group.iter().enumerate() {
                buf[j] = m[(row, idx)];
            }
            for (i, &idx) in group.iter().enumerate() {
                let mut acc = ZERO;
                for j in 0..g {
                    acc += buf[j] * gate[(i, j)].conj();
                }
                m[(row, idx)] = acc;
            }
        }
    }
}

/// `m <- G m G†`.
pub fn conjugate_local(m: &mut CMatrix, gate: &CMatrix, qubits: &[usize], n_qubits: usize) {
    apply_left(m, gate, qubits, n_qubits);
    apply_right_adjoint(m, gate, qubits, n_qubits);
}

/// Embeds a gate acting on `qubits` into the full `2^n` space.
pub fn embed(gate: &CMatrix, qubits: &[usize], n_qubits: usize) -> CMatrix {
    let mut m = identity(1 << n_qubits);
    apply_left(&mut m, gate, qubits, n_qubits);
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_matches_kronecker_products() {
        let x = pauli_x();
        let z = pauli_z();
        let xz = kron(&x, &z);
        assert!(max_abs(&(embed(&xz, &[0, 1], 2) - &xz)) < 1e-15);
        // reversed qubit order swaps the tensor factors
        assert!(max_abs(&(embed(&xz, &[1, 0], 2) - kron(&z, &x))) < 1e-15);
        let x_mid = embed(&x, &[1], 3);
        let expect = kron(&kron(&identity(2), &x), &identity(2));
        assert!(max_abs(&(x_mid - expect)) < 1e-15);
    }

    #[test]
    fn right_adjoint_matches_dense_product() {
        let y = pauli_y();
        let mut m = CMatrix::from_fn(4, 4, |i, j| c(i as f64 + 0.5, j as f64 - 1.0));
        let dense = &m * embed(&y, &[1], 2).adjoint();
        apply_right_adjoint(&mut m, &y, &[1], 2);
        assert!(max_abs(&(m - dense)) < 1e-14);
    }

    #[test]
    fn hermitian_exponential_of_pauli() {
        let t = 0.37;
        let u = expm_hermitian(&pauli_z(), t);
        assert!((u[(0, 0)] - Complex64::from_polar(1.0, -t)).norm() < 1e-14);
        assert!((u[(1, 1)] - Complex64::from_polar(1.0, t)).norm() < 1e-14);
        assert!(unitarity_defect(&u) < 1e-14);
    }
}
