//! Quantum channels.
//!
//! Superoperators use column stacking: `vec(ρ)` stacks the columns of `ρ`, so
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)` and a Kraus set `{M_k}` becomes
//! `Σ_k conj(M_k) ⊗ M_k`. Distances between superoperators are Frobenius
//! norms of these `4^n × 4^n` matrices.
//!
//! The global depolarizing channel `ρ ↦ (1-ε)ρ + ε·1/2^n` is applied as the
//! affine map itself and never expanded into Kraus operators.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, ONE};
use crate::state::{DensityMatrix, VALIDITY_TOL};
use crate::CMatrix;

/// A channel in operator-sum form. Complete positivity is automatic for a
/// Kraus set; only trace preservation needs checking.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausChannel {
    n_qubits: usize,
    kraus: Vec<CMatrix>,
}

impl KrausChannel {
    pub fn new(kraus: Vec<CMatrix>) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::invalid("a channel needs at least one Kraus operator"))?;
        let dim = first.nrows();
        let n_qubits = linalg::qubits_for_dim(dim).filter(|&n| n >= 1).ok_or(Error::NotPowerOfTwo(dim))?;
        if let Some(bad) = kraus.iter().find(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.nrows().max(bad.ncols()) });
        }
        Ok(KrausChannel { n_qubits, kraus })
    }

    pub fn identity(n_qubits: usize) -> Self {
        KrausChannel { n_qubits, kraus: vec![linalg::identity(1 << n_qubits)] }
    }

    pub fn unitary(u: CMatrix) -> Result<Self> {
        let defect = linalg::unitarity_defect(&u);
        if defect > VALIDITY_TOL {
            return Err(Error::NotUnitary(defect));
        }
        KrausChannel::new(vec![u])
    }

    /// `{√(1-p) I, √p X}`.
    pub fn bit_flip(p: f64) -> Result<Self> {
        check_probability(p, "bit-flip probability")?;
        KrausChannel::new(vec![
            linalg::identity(2).map(|z| z * (1.0 - p).sqrt()),
            linalg::pauli_x().map(|z| z * p.sqrt()),
        ])
    }

    /// Pauli channel on `n_qubits` with one probability per Pauli string,
    /// strings enumerated with qubit 0 as the most significant base-4 digit
    /// (digit order I, X, Y, Z).
    pub fn pauli_channel(n_qubits: usize, probabilities: &[f64]) -> Result<Self> {
        let count = 1usize << (2 * n_qubits);
        if probabilities.len() != count {
            return Err(Error::DimensionMismatch { expected: count, found: probabilities.len() });
        }
        let total: f64 = probabilities.iter().sum();
        if probabilities.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > VALIDITY_TOL {
            return Err(Error::invalid("Pauli channel probabilities must be non-negative and sum to one"));
        }
        let kraus = probabilities
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(idx, &p)| pauli_string(n_qubits, idx).map(|z| z * p.sqrt()))
            .collect();
        KrausChannel::new(kraus)
    }

    /// Depolarizing channel of strength `p` written as a uniform Pauli mixture;
    /// equals the affine form `(1-p)ρ + p·1/2^n`.
    pub fn depolarizing(n_qubits: usize, p: f64) -> Result<Self> {
        check_probability(p, "depolarizing strength")?;
        let count = 1usize << (2 * n_qubits);
        let mut probs = vec![p / count as f64; count];
        probs[0] += 1.0 - p;
        KrausChannel::pauli_channel(n_qubits, &probs)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    /// Largest entry of `Σ M_k† M_k - 1`.
    pub fn trace_preservation_defect(&self) -> f64 {
        let dim = 1 << self.n_qubits;
        let sum = self.kraus.iter().fold(CMatrix::zeros(dim, dim), |acc, m| acc + m.adjoint() * m);
        linalg::max_abs(&(sum - linalg::identity(dim)))
    }

    pub fn is_cptp(&self, tol: f64) -> bool {
        self.trace_preservation_defect() <= tol
    }

    /// `Σ M_k ρ M_k†`.
    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: 1 << self.n_qubits, found: rho.dim() });
        }
        let defect = self.trace_preservation_defect();
        if defect > VALIDITY_TOL {
            return Err(Error::NotTracePreserving(defect));
        }
        let out = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(rho.dim(), rho.dim()), |acc, m| acc + m * rho.data() * m.adjoint());
        Ok(DensityMatrix::from_trusted(self.n_qubits, out))
    }

    /// Applies the channel to `qubits` of a larger register, in place.
    pub(crate) fn apply_local(&self, m: &mut CMatrix, qubits: &[usize], n_qubits: usize) {
        let mut acc = CMatrix::zeros(m.nrows(), m.ncols());
        for k in &self.kraus {
            let mut term = m.clone();
            linalg::conjugate_local(&mut term, k, qubits, n_qubits);
            acc += term;
        }
        *m = acc;
    }

    pub fn superoperator(&self) -> Superoperator {
        let d2 = 1 << (2 * self.n_qubits);
        let matrix = self
            .kraus
            .iter()
            .fold(CMatrix::zeros(d2, d2), |acc, m| acc + linalg::kron(&m.map(|z| z.conj()), m));
        Superoperator { n_qubits: self.n_qubits, matrix }
    }
}

/// Column-stacked matrix representation of a linear map on `2^n × 2^n`
/// operators.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    n_qubits: usize,
    matrix: CMatrix,
}

impl Superoperator {
    pub fn new(n_qubits: usize, matrix: CMatrix) -> Result<Self> {
        let d2 = 1usize << (2 * n_qubits);
        if matrix.nrows() != d2 || matrix.ncols() != d2 {
            return Err(Error::DimensionMismatch { expected: d2, found: matrix.nrows() });
        }
        Ok(Superoperator { n_qubits, matrix })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Superoperator { n_qubits, matrix: linalg::identity(1 << (2 * n_qubits)) }
    }

    /// `ρ ↦ U ρ U†`.
    pub fn from_unitary(u: &CMatrix) -> Result<Self> {
        let n_qubits = linalg::qubits_for_dim(u.nrows()).ok_or(Error::NotPowerOfTwo(u.nrows()))?;
        Ok(Superoperator { n_qubits, matrix: linalg::kron(&u.map(|z| z.conj()), u) })
    }

    /// `ρ ↦ (1-ε)ρ + ε Tr(ρ) 1/2^n`.
    pub fn depolarizing(n_qubits: usize, epsilon: f64) -> Self {
        let d = 1usize << n_qubits;
        let d2 = d * d;
        let vec_id = identity_vec(d);
        let projector = &vec_id * vec_id.transpose() / Complex64::new(d as f64, 0.0);
        let matrix = linalg::identity(d2).map(|z| z * (1.0 - epsilon)) + projector.map(|z| z * epsilon);
        Superoperator { n_qubits, matrix }
    }

    /// Builds the superoperator of an arbitrary linear map by acting on the
    /// matrix units `|i⟩⟨j|`.
    pub fn from_linear_map(n_qubits: usize, map: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let d = 1usize << n_qubits;
        let d2 = d * d;
        let mut matrix = CMatrix::zeros(d2, d2);
        for j in 0..d {
            for i in 0..d {
                let mut unit = CMatrix::zeros(d, d);
                unit[(i, j)] = ONE;
                let image = map(&unit);
                matrix.column_mut(i + d * j).copy_from_slice(image.as_slice());
            }
        }
        Superoperator { n_qubits, matrix }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply_matrix(&self, m: &CMatrix) -> CMatrix {
        let d = 1usize << self.n_qubits;
        let v = &self.matrix * DVector::from_column_slice(m.as_slice());
        CMatrix::from_column_slice(d, d, v.as_slice())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.n_qubits() != self.n_qubits {
            return Err(Error::DimensionMismatch { expected: 1 << self.n_qubits, found: rho.dim() });
        }
        Ok(DensityMatrix::from_trusted(self.n_qubits, self.apply_matrix(rho.data())))
    }

    /// The map `after ∘ self`.
    pub fn then(&self, after: &Superoperator) -> Superoperator {
        Superoperator { n_qubits: self.n_qubits, matrix: &after.matrix * &self.matrix }
    }

    pub fn adjoint(&self) -> Superoperator {
        Superoperator { n_qubits: self.n_qubits, matrix: self.matrix.adjoint() }
    }

    pub fn distance(&self, other: &Superoperator) -> f64 {
        linalg::frobenius(&(&self.matrix - &other.matrix))
    }

    /// Largest deviation of `Tr(S(X))` from `Tr(X)` over matrix units.
    pub fn trace_preservation_defect(&self) -> f64 {
        let d = 1usize << self.n_qubits;
        let row = identity_vec(d).transpose() * &self.matrix;
        let expect = identity_vec(d).transpose();
        linalg::max_abs(&(row - expect))
    }

    /// Arithmetic mean of a non-empty set of superoperators.
    pub fn mean<'a>(items: impl IntoIterator<Item = &'a Superoperator>) -> Result<Superoperator> {
        let mut iter = items.into_iter();
        let first = iter.next().ok_or_else(|| Error::invalid("cannot average an empty set"))?;
        let (sum, count) = iter.try_fold((first.matrix.clone(), 1usize), |(acc, n), s| {
            if s.n_qubits != first.n_qubits {
                return Err(Error::DimensionMismatch { expected: first.n_qubits, found: s.n_qubits });
            }
            Ok((acc + &s.matrix, n + 1))
        })?;
        Ok(Superoperator { n_qubits: first.n_qubits, matrix: sum / Complex64::new(count as f64, 0.0) })
    }
}

fn identity_vec(d: usize) -> CMatrix {
    let mut v = CMatrix::zeros(d * d, 1);
    for i in 0..d {
        v[(i + d * i, 0)] = ONE;
    }
    v
}

/// Pauli string by base-4 index, qubit 0 most significant.
pub fn pauli_string(n_qubits: usize, index: usize) -> CMatrix {
    (0..n_qubits).fold(linalg::identity(1), |acc, q| {
        let digit = (index >> (2 * (n_qubits - 1 - q))) & 3;
        linalg::kron(&acc, &linalg::pauli(digit))
    })
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Global depolarizing channel of strength `epsilon` on `n_qubits`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepolarizingSpec {
    n_qubits: usize,
    epsilon: f64,
}

impl DepolarizingSpec {
    pub fn new(n_qubits: usize, epsilon: f64) -> Result<Self> {
        check_probability(epsilon, "noise strength")?;
        Ok(DepolarizingSpec { n_qubits, epsilon })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn superoperator(&self) -> Superoperator {
        Superoperator::depolarizing(self.n_qubits, self.epsilon)
    }
}

/// `(1-ε)ρ + ε·1/2^n`.
pub fn depolarize(spec: &DepolarizingSpec, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if spec.n_qubits != rho.n_qubits() {
        return Err(Error::DimensionMismatch { expected: 1 << spec.n_qubits, found: rho.dim() });
    }
    let mut data = rho.data().clone();
    depolarize_in_place(&mut data, spec.epsilon);
    Ok(DensityMatrix::from_trusted(spec.n_qubits, data))
}

/// Affine depolarization of a square matrix, scaled by its own trace so the
/// map stays linear on non-density inputs.
pub(crate) fn depolarize_in_place(m: &mut CMatrix, epsilon: f64) {
    let d = m.nrows();
    let shift = linalg::trace(m) * epsilon / d as f64;
    m.iter_mut().for_each(|z| *z *= 1.0 - epsilon);
    for i in 0..d {
        m[(i, i)] += shift;
    }
}

/// Outcome of `k` applications of a depolarizing channel: the surviving
/// weight `(1-ε)^k` on the input state and the weight
/// `f(ε,k) = ε Σ_{j<k} (1-ε)^j` on the infinite temperature state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepolarizingIterate {
    pub signal: f64,
    pub floor: f64,
}

pub fn iterate_depolarize(epsilon: f64, k: u32) -> DepolarizingIterate {
    let mut floor = 0.0;
    let mut term = epsilon;
    for _ in 0..k {
        floor += term;
        term *= 1.0 - epsilon;
    }
    DepolarizingIterate { signal: (1.0 - epsilon).powi(k as i32), floor }
}

/// Haar-random unitary of dimension `dim`: QR of a complex Ginibre matrix
/// with the phases of `R`'s diagonal moved into `Q`.
pub fn haar_unitary<R: rand::Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let z = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * scale, im * scale)
    });
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        q.column_mut(j).iter_mut().for_each(|x| *x *= phase);
    }
    q
}

const TWIRL_CHUNK: usize = 256;

/// Monte-Carlo Haar twirl `E_U[U† ℰ(U ρ U†) U]` of a channel.
///
/// Samples are split into fixed-size chunks, each drawing from its own
/// ChaCha stream, so the result depends only on `seed` and `n_samples`.
pub fn twirl_average(channel: &Superoperator, n_samples: usize, seed: u64) -> Result<Superoperator> {
    if n_samples < 1 {
        return Err(Error::invalid("twirl needs at least one sample"));
    }
    let n = channel.n_qubits;
    let d = 1usize << n;
    let chunks = n_samples.div_ceil(TWIRL_CHUNK);
    let partial: Vec<CMatrix> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = TWIRL_CHUNK.min(n_samples - chunk * TWIRL_CHUNK);
            let mut acc = CMatrix::zeros(d * d, d * d);
            for _ in 0..count {
                let u = haar_unitary(d, &mut rng);
                let su = linalg::kron(&u.map(|z| z.conj()), &u);
                acc += su.adjoint() * &channel.matrix * su;
            }
            acc
        })
        .collect();
    let sum = partial.into_iter().fold(CMatrix::zeros(d * d, d * d), |a, b| a + b);
    Ok(Superoperator { n_qubits: n, matrix: sum / Complex64::new(n_samples as f64, 0.0) })
}

/// Nearest global depolarizing channel in Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonFit {
    pub epsilon: f64,
    /// Frobenius distance between the input and the fitted channel.
    pub residual: f64,
}

/// Least-squares fit of `S ≈ (1-ε)·1 + ε·P` where `P` is the
/// replace-by-maximally-mixed map.
pub fn extract_epsilon(superop: &Superoperator) -> Result<EpsilonFit> {
    let defect = superop.trace_preservation_defect();
    if defect > 1e-6 {
        return Err(Error::NotTracePreserving(defect));
    }
    let n = superop.n_qubits;
    let id = Superoperator::identity(n);
    let direction = &Superoperator::depolarizing(n, 1.0).matrix - &id.matrix;
    let offset = &superop.matrix - &id.matrix;
    let num: f64 = direction.iter().zip(offset.iter()).map(|(a, b)| (a.conj() * b).re).sum();
    let den: f64 = direction.iter().map(|a| a.norm_sqr()).sum();
    let epsilon = num / den;
    let residual = superop.distance(&Superoperator::depolarizing(n, epsilon));
    Ok(EpsilonFit { epsilon, residual })
}

/// Coherent `ZZ` over-rotation `exp(-i φ/2 Z⊗Z)`.
pub fn zz_rotation(phi: f64) -> CMatrix {
    let m = linalg::kron(&linalg::pauli_z(), &linalg::pauli_z());
    linalg::expm_hermitian(&m, phi / 2.0)
}
