//! Benchmark observables.
//!
//! Everything measured on the virtual QPU is diagonal after a single-qubit
//! basis change, so observables are stored as outcome weights plus the basis
//! change that precedes measurement.
//!
//! Rényi entropies are in nats. The two-copy register puts copy A on qubits
//! (0, 1) and copy B on (2, 3), spin-up first within each copy.

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg;
use crate::qpu::{self, Program, ShotRecord};
use crate::state::{DensityMatrix, Observable};

/// `|00⟩⟨00| + |11⟩⟨11|`.
pub fn electronic_overlap() -> Observable {
    Observable::diagonal(&[1.0, 0.0, 0.0, 1.0], "electronic overlap").expect("valid diagonal")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalObservable {
    label: String,
    basis_change: Circuit,
    weights: Vec<f64>,
}

impl DiagonalObservable {
    pub fn new(label: impl Into<String>, basis_change: Circuit, weights: Vec<f64>) -> Result<Self> {
        let dim = 1usize << basis_change.n_qubits();
        if weights.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: weights.len() });
        }
        if basis_change.scalar_depth() != 0 {
            return Err(Error::invalid("basis change must not contain entangling gates"));
        }
        Ok(DiagonalObservable { label: label.into(), basis_change, weights })
    }

    pub fn electronic_overlap() -> Self {
        DiagonalObservable::new("electronic overlap", Circuit::new(2), vec![1.0, 0.0, 0.0, 1.0]).expect("valid")
    }

    /// `(1 + X_a X_b)/2` on an `n`-qubit register, measured in the X basis.
    pub fn x_parity(n_qubits: usize, a: usize, b: usize) -> Result<Self> {
        if a == b || a >= n_qubits || b >= n_qubits {
            return Err(Error::invalid(format!("invalid qubit pair ({a}, {b}) on {n_qubits} qubits")));
        }
        let basis_change = Circuit::from_gates(n_qubits, vec![Gate::H(a), Gate::H(b)])?;
        let bit = |idx: usize, q: usize| (idx >> (n_qubits - 1 - q)) & 1;
        let weights = (0..1usize << n_qubits).map(|i| if bit(i, a) == bit(i, b) { 1.0 } else { 0.0 }).collect();
        DiagonalObservable::new(format!("x parity ({a},{b})"), basis_change, weights)
    }

    /// Probability of the singlet pattern (q0 = 1, q2 = 1) after the Bell stage.
    pub fn singlet_probability() -> Self {
        let weights = (0..16usize).map(|i| if (i >> 3) & 1 == 1 && (i >> 1) & 1 == 1 { 1.0 } else { 0.0 }).collect();
        DiagonalObservable::new("singlet probability", Circuit::new(4), weights).expect("valid")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_qubits(&self) -> usize {
        self.basis_change.n_qubits()
    }

    pub fn basis_change(&self) -> &Circuit {
        &self.basis_change
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Value on the infinite temperature state.
    pub fn its_value(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }

    pub fn expectation(&self, rho: &DensityMatrix) -> Result<f64> {
        let probs = qpu::measurement_probabilities(rho, &self.basis_change)?;
        Ok(probs.iter().zip(&self.weights).map(|(p, w)| p * w).sum())
    }

    /// Estimate from counts taken after the basis change.
    pub fn estimate(&self, record: &ShotRecord) -> f64 {
        qpu::estimate_from_counts(record, |b| self.weights[b])
    }

    /// Appends the basis change to a program.
    pub fn measured(&self, program: &Program) -> Result<Program> {
        program.then_local(&self.basis_change)
    }

    /// Dense form `V† diag(w) V`.
    pub fn to_observable(&self) -> Result<Observable> {
        let v = self.basis_change.unitary()?;
        let d = Observable::diagonal(&self.weights, self.label.clone())?;
        Observable::new(linalg::dagger(&v) * d.data() * v, self.label.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenyiEstimate {
    pub purity: f64,
    /// `-ln(purity) / 2`.
    pub entropy: f64,
}

impl RenyiEstimate {
    pub fn from_purity(purity: f64) -> Result<Self> {
        if purity.is_nan() || purity <= 0.0 {
            return Err(Error::InvalidState(format!("purity {purity} is not positive")));
        }
        Ok(RenyiEstimate { purity, entropy: -0.5 * purity.ln() })
    }
}

/// Clamps a one-qubit purity estimate into `[1/2, 1]`; the flag is set when
/// clamping changed the value.
pub fn clip_purity(purity: f64) -> (f64, bool) {
    let clipped = purity.clamp(0.5, 1.0);
    (clipped, clipped != purity)
}

/// Partial-trace oracle: traces out the spin-down qubit.
pub fn renyi_direct(rho: &DensityMatrix) -> Result<RenyiEstimate> {
    if rho.n_qubits() != 2 {
        return Err(Error::DimensionMismatch { expected: 4, found: rho.dim() });
    }
    RenyiEstimate::from_purity(rho.partial_trace(&[1])?.purity())
}

fn lift(gate: &Gate, offset: usize) -> Gate {
    match *gate {
        Gate::I(q) => Gate::I(q + offset),
        Gate::H(q) => Gate::H(q + offset),
        Gate::X(q) => Gate::X(q + offset),
        Gate::Y(q) => Gate::Y(q + offset),
        Gate::Z(q) => Gate::Z(q + offset),
        Gate::S(q) => Gate::S(q + offset),
        Gate::Sdg(q) => Gate::Sdg(q + offset),
        Gate::Rx(q, t) => Gate::Rx(q + offset, t),
        Gate::Rz(q, t) => Gate::Rz(q + offset, t),
        Gate::Cnot { control, target } => Gate::cnot(control + offset, target + offset),
    }
}

/// Two copies of a 2-qubit program, gate by gate, without the Bell stage.
/// Both copies of a CNOT keep the original slot.
pub fn two_copies(base: &Program) -> Result<Program> {
    if base.n_qubits() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: base.n_qubits() });
    }
    let mut gates = Vec::with_capacity(2 * base.circuit().len());
    let mut slots = Vec::with_capacity(2 * base.scalar_depth());
    let mut ordinal = 0;
    for g in base.circuit().gates() {
        gates.push(lift(g, 0));
        gates.push(lift(g, 2));
        if g.is_entangling() {
            let s = base.slots()[ordinal];
            slots.extend([s, s]);
            ordinal += 1;
        }
    }
    Program::with_slots(Circuit::from_gates(4, gates)?, slots)
}

/// Bell-basis stage on the spin-up pair: CNOT(0→2) then H(0).
pub fn bell_stage() -> Circuit {
    Circuit::from_gates(4, vec![Gate::cnot(0, 2), Gate::H(0)]).expect("valid")
}

/// Two-copy program followed by the Bell stage. The Bell-stage CNOT takes the
/// last slot of `base` (slot 0 for an empty base).
pub fn bba_program(base: &Program) -> Result<Program> {
    let copies = two_copies(base)?;
    let slot = base.slots().last().copied().unwrap_or(0);
    copies.then(&Program::with_slots(bell_stage(), vec![slot])?)
}

pub fn bba_circuit(base: &Circuit) -> Result<Circuit> {
    Ok(bba_program(&Program::new(base.clone()))?.circuit().clone())
}

/// `1 − 2·P(singlet)` from counts on the 4-qubit register.
pub fn bba_purity_from_counts(record: &ShotRecord) -> f64 {
    1.0 - 2.0 * DiagonalObservable::singlet_probability().estimate(record)
}

/// Density-level counterpart of [`bba_purity_from_counts`] on the state after
/// the Bell stage.
pub fn bba_purity_exact(rho: &DensityMatrix) -> Result<f64> {
    Ok(1.0 - 2.0 * DiagonalObservable::singlet_probability().expectation(rho)?)
}
