//! Density matrices and Hermitian observables.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, ZERO};
use crate::CMatrix;

/// Tolerance for validity checks (trace, hermiticity, positivity, unitarity).
pub const VALIDITY_TOL: f64 = 1e-9;
/// Tolerance for identities that hold exactly up to rounding.
pub const EXACT_TOL: f64 = 1e-12;

/// A mixed state on `n_qubits` qubits: Hermitian, positive semi-definite,
/// unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    data: CMatrix,
}

impl DensityMatrix {
    /// Validates `data` against the density-matrix invariants.
    pub fn new(data: CMatrix) -> Result<Self> {
        let n_qubits = check_square_register(&data)?;
        let rho = DensityMatrix { n_qubits, data };
        rho.validate(VALIDITY_TOL)?;
        Ok(rho)
    }

    /// Wraps a matrix produced by a physical map without re-validating it.
    pub(crate) fn from_trusted(n_qubits: usize, data: CMatrix) -> Self {
        debug_assert_eq!(data.nrows(), 1 << n_qubits);
        DensityMatrix { n_qubits, data }
    }

    /// `|ψ⟩⟨ψ|` for normalized amplitudes.
    pub fn pure_state(amplitudes: &[Complex64]) -> Result<Self> {
        let n_qubits = linalg::qubits_for_dim(amplitudes.len())
            .filter(|&n| n >= 1)
            .ok_or(Error::NotPowerOfTwo(amplitudes.len()))?;
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > VALIDITY_TOL {
            return Err(Error::NotNormalized(norm));
        }
        let dim = amplitudes.len();
        let data = CMatrix::from_fn(dim, dim, |i, j| amplitudes[i] * amplitudes[j].conj());
        Ok(DensityMatrix { n_qubits, data })
    }

    /// Computational basis state `|index⟩⟨index|`.
    pub fn basis_state(n_qubits: usize, index: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::invalid("a register needs at least one qubit"));
        }
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::invalid(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut data = CMatrix::zeros(dim, dim);
        data[(index, index)] = linalg::ONE;
        Ok(DensityMatrix { n_qubits, data })
    }

    /// The maximally mixed state `1 / 2^n`.
    pub fn infinite_temperature(n_qubits: usize) -> Result<Self> {
        if n_qubits == 0 {
            return Err(Error::invalid("a register needs at least one qubit"));
        }
        let dim = 1usize << n_qubits;
        let data = CMatrix::identity(dim, dim).map(|z| z / dim as f64);
        Ok(DensityMatrix { n_qubits, data })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_data(self) -> CMatrix {
        self.data
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.data).re
    }

    /// `Tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // Tr(ρ²) = Σ |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.data)
    }

    /// Born-rule probabilities of the computational basis outcomes.
    pub fn diagonal_probabilities(&self) -> Vec<f64> {
        self.data.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let tr = linalg::trace(&self.data);
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        let herm = linalg::hermiticity_defect(&self.data);
        if herm > tol {
            return Err(Error::NotHermitian(herm));
        }
        let min_ev = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min_ev < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(())
    }

    /// `ρ_a ⊗ ρ_b`; the qubits of `self` come first.
    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            n_qubits: self.n_qubits + other.n_qubits,
            data: linalg::kron(&self.data, &other.data),
        }
    }

    /// Traces out `traced` and returns the state of the remaining qubits in
    /// their original order.
    pub fn partial_trace(&self, traced: &[usize]) -> Result<DensityMatrix> {
        let n = self.n_qubits;
        let mut seen = vec![false; n];
        for &q in traced {
            if q >= n {
                return Err(Error::QubitOutOfRange { index: q, n_qubits: n });
            }
            if std::mem::replace(&mut seen[q], true) {
                return Err(Error::invalid(format!("qubit {q} listed twice in partial trace")));
            }
        }
        if traced.len() == n {
            return Err(Error::invalid("cannot trace out every qubit"));
        }
        if traced.is_empty() {
            return Ok(self.clone());
        }
        let kept: Vec<usize> = (0..n).filter(|q| !seen[*q]).collect();
        let traced_sorted: Vec<usize> = (0..n).filter(|q| seen[*q]).collect();
        let compose = |k: usize, t: usize| -> usize {
            let mut idx = 0usize;
            for (pos, &q) in kept.iter().enumerate() {
                if k >> (kept.len() - 1 - pos) & 1 == 1 {
                    idx |= 1 << (n - 1 - q);
                }
            }
            for (pos, &q) in traced_sorted.iter().enumerate() {
                if t >> (traced_sorted.len() - 1 - pos) & 1 == 1 {
                    idx |= 1 << (n - 1 - q);
                }
            }
            idx
        };
        let kd = 1usize << kept.len();
        let td = 1usize << traced_sorted.len();
        let data = CMatrix::from_fn(kd, kd, |a, b| {
            (0..td).fold(ZERO, |acc, t| acc + self.data[(compose(a, t), compose(b, t))])
        });
        Ok(DensityMatrix { n_qubits: kept.len(), data })
    }

    /// `Tr(ρ O)`.
    pub fn expectation(&self, observable: &Observable) -> Result<f64> {
        if observable.n_qubits != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: observable.data.nrows() });
        }
        Ok(trace_product(&self.data, &observable.data).re)
    }

    /// `U ρ U†` for a unitary on the full register.
    pub fn apply_unitary(&self, u: &CMatrix) -> Result<DensityMatrix> {
        if u.nrows() != self.dim() || u.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.nrows() });
        }
        let defect = linalg::unitarity_defect(u);
        if defect > VALIDITY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        Ok(DensityMatrix { n_qubits: self.n_qubits, data: u * &self.data * u.adjoint() })
    }
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

fn check_square_register(data: &CMatrix) -> Result<usize> {
    if !data.is_square() {
        return Err(Error::DimensionMismatch { expected: data.nrows(), found: data.ncols() });
    }
    linalg::qubits_for_dim(data.nrows())
        .filter(|&n| n >= 1)
        .ok_or(Error::NotPowerOfTwo(data.nrows()))
}

/// A Hermitian observable on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    n_qubits: usize,
    data: CMatrix,
    label: String,
}

impl Observable {
    pub fn new(data: CMatrix, label: impl Into<String>) -> Result<Self> {
        let n_qubits = check_square_register(&data)?;
        let defect = linalg::hermiticity_defect(&data);
        if defect > VALIDITY_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Observable { n_qubits, data, label: label.into() })
    }

    /// Diagonal observable from per-basis-state weights.
    pub fn diagonal(weights: &[f64], label: impl Into<String>) -> Result<Self> {
        let data = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            weights.len(),
            weights.iter().map(|&w| Complex64::new(w, 0.0)),
        ));
        Observable::new(data, label)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn data(&self) -> &CMatrix {
        &self.data
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `Tr(O / 2^n)`, the value on the infinite temperature state.
    pub fn its_value(&self) -> f64 {
        linalg::trace(&self.data).re / (1u64 << self.n_qubits) as f64
    }

    /// `α A + β B`.
    pub fn combine(alpha: f64, a: &Observable, beta: f64, b: &Observable) -> Result<Observable> {
        if a.n_qubits != b.n_qubits {
            return Err(Error::DimensionMismatch { expected: a.data.nrows(), found: b.data.nrows() });
        }
        let data = a.data.map(|z| z * alpha) + b.data.map(|z| z * beta);
        Observable::new(data, format!("{alpha}*{} + {beta}*{}", a.label, b.label))
    }
}
