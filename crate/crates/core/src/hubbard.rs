//! Two-site Fermi-Hubbard benchmark in its rescaled, dimensionless form
//!
//! ```text
//! H(t) = -(X⊗1 + 1⊗X) + ũ(t)/2 · Z⊗Z
//! ```
//!
//! simulated with a first-order product formula. Each product-formula step
//! holds three unitaries: a transverse-field rotation on each qubit (these
//! two commute) and a `ZZ` block compiled as `CNOT · RZ · CNOT`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg::{self, c};
use crate::state::Observable;
use crate::CMatrix;

/// Time profile of the dimensionless interaction `ũ(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum UTilde {
    Constant(f64),
    /// Linear interpolation between `(t, ũ)` breakpoints, held constant
    /// outside the covered range.
    PiecewiseLinear(Vec<(f64, f64)>),
}

impl UTilde {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            UTilde::Constant(u) => *u,
            UTilde::PiecewiseLinear(points) => {
                let (first, last) = (points[0], points[points.len() - 1]);
                if t <= first.0 {
                    return first.1;
                }
                if t >= last.0 {
                    return last.1;
                }
                let i = points.partition_point(|p| p.0 <= t);
                let (a, b) = (points[i - 1], points[i]);
                a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            UTilde::Constant(_) => Vec::new(),
            UTilde::PiecewiseLinear(points) => points.iter().map(|p| p.0).collect(),
        }
    }
}

/// Interaction schedule over `[0, t_final]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FhSchedule {
    pub u_tilde: UTilde,
    pub t_final: f64,
    pub description: String,
}

impl FhSchedule {
    pub fn constant(u: f64, t_final: f64) -> Result<Self> {
        FhSchedule::new(UTilde::Constant(u), t_final, format!("constant ũ = {u}"))
    }

    pub fn piecewise_linear(points: Vec<(f64, f64)>, t_final: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("piecewise-linear schedule needs at least one breakpoint"));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("schedule breakpoints must have strictly increasing times"));
        }
        let description = format!("piecewise-linear ũ over {} breakpoints", points.len());
        FhSchedule::new(UTilde::PiecewiseLinear(points), t_final, description)
    }

    fn new(u_tilde: UTilde, t_final: f64, description: String) -> Result<Self> {
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::invalid(format!("t_final must be positive and finite, got {t_final}")));
        }
        let finite = match &u_tilde {
            UTilde::Constant(u) => u.is_finite(),
            UTilde::PiecewiseLinear(p) => p.iter().all(|(t, u)| t.is_finite() && u.is_finite()),
        };
        if !finite {
            return Err(Error::invalid("ũ(t) must be finite"));
        }
        Ok(FhSchedule { u_tilde, t_final, description })
    }

    pub fn u_at(&self, t: f64) -> f64 {
        self.u_tilde.value(t)
    }
}

impl Default for FhSchedule {
    fn default() -> Self {
        FhSchedule::constant(2.0, 2.0).expect("valid default schedule")
    }
}

/// One of the three unitaries of a product-formula step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    FieldQ0,
    FieldQ1,
    Interaction,
}

/// Application order of the three step unitaries, labelled by a permutation
/// of `0`, `1` (field rotations) and `z` (interaction), e.g. `01z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StepOrdering([Term; 3]);

impl StepOrdering {
    pub const DEFAULT: StepOrdering = StepOrdering([Term::FieldQ0, Term::FieldQ1, Term::Interaction]);

    /// All six orderings. Only three of them give distinct unitaries since
    /// the field rotations commute.
    pub fn all() -> [StepOrdering; 6] {
        use Term::*;
        [
            StepOrdering([FieldQ0, FieldQ1, Interaction]),
            StepOrdering([FieldQ1, FieldQ0, Interaction]),
            StepOrdering([FieldQ0, Interaction, FieldQ1]),
            StepOrdering([FieldQ1, Interaction, FieldQ0]),
            StepOrdering([Interaction, FieldQ0, FieldQ1]),
            StepOrdering([Interaction, FieldQ1, FieldQ0]),
        ]
    }

    pub fn terms(&self) -> [Term; 3] {
        self.0
    }
}

impl Default for StepOrdering {
    fn default() -> Self {
        StepOrdering::DEFAULT
    }
}

impl fmt::Display for StepOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in self.0 {
            f.write_str(match t {
                Term::FieldQ0 => "0",
                Term::FieldQ1 => "1",
                Term::Interaction => "z",
            })?;
        }
        Ok(())
    }
}

impl FromStr for StepOrdering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepOrdering::all()
            .into_iter()
            .find(|o| o.to_string() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid(format!("invalid step ordering `{s}`; expected a permutation of `01z`")))
    }
}

/// Product-formula settings: `n_steps` benchmark time steps, each split into
/// `n_t` Trotter substeps.
#[derive(Debug, Clone, PartialEq)]
pub struct PfaConfig {
    pub n_steps: usize,
    pub n_t: usize,
    pub ordering: StepOrdering,
}

impl PfaConfig {
    pub fn new(n_steps: usize, n_t: usize, ordering: StepOrdering) -> Result<Self> {
        if n_steps < 1 || n_t < 1 {
            return Err(Error::invalid("n_steps and n_t must both be at least 1"));
        }
        Ok(PfaConfig { n_steps, n_t, ordering })
    }

    /// Duration of one benchmark step.
    pub fn step_duration(&self, schedule: &FhSchedule) -> f64 {
        schedule.t_final / self.n_steps as f64
    }

    /// Gates per benchmark step.
    pub fn gates_per_step(&self) -> usize {
        5 * self.n_t
    }
}

impl Default for PfaConfig {
    fn default() -> Self {
        PfaConfig { n_steps: 10, n_t: 1, ordering: StepOrdering::DEFAULT }
    }
}

/// `-(X⊗1 + 1⊗X) + ũ/2 · Z⊗Z`.
pub fn fh_hamiltonian(u_tilde: f64) -> CMatrix {
    let x = linalg::pauli_x();
    let z = linalg::pauli_z();
    let id = linalg::identity(2);
    let field = linalg::kron(&x, &id) + linalg::kron(&id, &x);
    linalg::kron(&z, &z).map(|e| e * (u_tilde / 2.0)) - field
}

/// Hadamard on both qubits, preparing `|++⟩` from `|00⟩`.
pub fn initial_state_circuit() -> Circuit {
    Circuit::from_gates(2, vec![Gate::H(0), Gate::H(1)]).expect("static circuit")
}

/// One product-formula step of duration `dt` at interaction `ũ`.
///
/// `exp(i dt X) = RX(-2 dt)` implements the transverse field and
/// `CNOT · RZ(ũ dt) · CNOT = exp(-i ũ dt/2 Z⊗Z)` the interaction.
pub fn pfa_step(u_tilde: f64, dt: f64, ordering: StepOrdering) -> Circuit {
    let mut gates = Vec::with_capacity(5);
    for term in ordering.terms() {
        match term {
            Term::FieldQ0 => gates.push(Gate::Rx(0, -2.0 * dt)),
            Term::FieldQ1 => gates.push(Gate::Rx(1, -2.0 * dt)),
            Term::Interaction => {
                gates.extend([Gate::cnot(0, 1), Gate::Rz(1, u_tilde * dt), Gate::cnot(0, 1)]);
            }
        }
    }
    Circuit::from_gates(2, gates).expect("static circuit")
}

/// Product-formula circuit for benchmark step `step` (0-based), with `ũ`
/// sampled at each substep midpoint.
pub fn pfa_step_circuit(schedule: &FhSchedule, cfg: &PfaConfig, step: usize, ordering: StepOrdering) -> Circuit {
    let big = cfg.step_duration(schedule);
    let dt = big / cfg.n_t as f64;
    let parts: Vec<Circuit> = (0..cfg.n_t)
        .map(|j| {
            let t_mid = step as f64 * big + (j as f64 + 0.5) * dt;
            pfa_step(schedule.u_at(t_mid), dt, ordering)
        })
        .collect();
    Circuit::concat(2, &parts).expect("same register")
}

/// The evolution part only (no state preparation) through `through_step`
/// steps, with one ordering per step.
pub fn pfa_evolution_with(schedule: &FhSchedule, cfg: &PfaConfig, orderings: &[StepOrdering]) -> Result<Circuit> {
    if orderings.len() > cfg.n_steps {
        return Err(Error::invalid(format!("{} orderings given for {} steps", orderings.len(), cfg.n_steps)));
    }
    let parts: Vec<Circuit> =
        orderings.iter().enumerate().map(|(s, &o)| pfa_step_circuit(schedule, cfg, s, o)).collect();
    Circuit::concat(2, &parts)
}

/// The evolution part only, using `cfg.ordering` for every step.
pub fn pfa_evolution(schedule: &FhSchedule, cfg: &PfaConfig, through_step: usize) -> Result<Circuit> {
    if through_step > cfg.n_steps {
        return Err(Error::invalid(format!("step {through_step} exceeds n_steps = {}", cfg.n_steps)));
    }
    pfa_evolution_with(schedule, cfg, &vec![cfg.ordering; through_step])
}

/// State preparation followed by `through_step` product-formula steps.
pub fn pfa_circuit(schedule: &FhSchedule, cfg: &PfaConfig, through_step: usize) -> Result<Circuit> {
    initial_state_circuit().then(&pfa_evolution(schedule, cfg, through_step)?)
}

/// Gate indices in [`pfa_circuit`] where steps `2..=through_step` begin; the
/// preparation stays with the first step.
pub fn step_boundaries(cfg: &PfaConfig, through_step: usize) -> Vec<usize> {
    let prep = initial_state_circuit().len();
    (1..through_step).map(|s| prep + s * cfg.gates_per_step()).collect()
}

/// Time-ordered `U(t, 0)` of the continuous Hamiltonian.
///
/// Uses the fourth-order Magnus integrator on a grid of at least
/// `fine_steps` intervals split at schedule breakpoints, and checks the
/// result against a grid twice as fine.
pub fn exact_evolution(schedule: &FhSchedule, t: f64, fine_steps: usize) -> Result<CMatrix> {
    if fine_steps < 1 {
        return Err(Error::invalid("fine_steps must be at least 1"));
    }
    if t == 0.0 {
        return Ok(linalg::identity(4));
    }
    if let UTilde::Constant(u) = schedule.u_tilde {
        return Ok(linalg::expm_hermitian(&fh_hamiltonian(u), t));
    }
    let coarse = magnus_evolution(schedule, t, fine_steps);
    let fine = magnus_evolution(schedule, t, 2 * fine_steps);
    let change = linalg::max_abs(&(&fine - &coarse));
    if change > 1e-8 {
        return Err(Error::NotConverged(change));
    }
    Ok(fine)
}

pub const DEFAULT_FINE_STEPS: usize = 1000;

fn magnus_evolution(schedule: &FhSchedule, t: f64, fine_steps: usize) -> CMatrix {
    let mut cuts: Vec<f64> = schedule.u_tilde.kinks().into_iter().filter(|&k| k > 0.0 && k < t).collect();
    cuts.insert(0, 0.0);
    cuts.push(t);
    let gauss = 3f64.sqrt() / 6.0;
    let mut u = linalg::identity(4);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((fine_steps as f64 * (b - a) / t).ceil() as usize).max(1);
        let h = (b - a) / n as f64;
        for k in 0..n {
            let t0 = a + k as f64 * h;
            let h1 = fh_hamiltonian(schedule.u_at(t0 + (0.5 - gauss) * h));
            let h2 = fh_hamiltonian(schedule.u_at(t0 + (0.5 + gauss) * h));
            // Ω = -iK with K = h/2 (H1 + H2) - i √3/12 h² [H2, H1]
            let comm = &h2 * &h1 - &h1 * &h2;
            let k_mat = (&h1 + &h2).map(|e| e * (h / 2.0)) + comm.map(|e| e * c(0.0, -(3f64.sqrt() / 12.0) * h * h));
            u = linalg::expm_hermitian(&k_mat, 1.0) * u;
        }
    }
    u
}

/// Spread of the noiseless observable across product-formula orderings at
/// one benchmark step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitizationBand {
    pub step: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std_dev: f64,
}

/// Samples ordering sequences uniformly (independently per step) and
/// records, for every prefix, the spread of the noiseless expectation value
/// starting from the prepared `|++⟩` state.
pub fn digitization_error(
    schedule: &FhSchedule,
    cfg: &PfaConfig,
    observable: &Observable,
    n_perm_samples: usize,
    seed: u64,
) -> Result<Vec<DigitizationBand>> {
    if observable.n_qubits() != 2 {
        return Err(Error::DimensionMismatch { expected: 4, found: observable.data().nrows() });
    }
    digitization_with(schedule, cfg, n_perm_samples, seed, |psi| expectation_pure(psi, observable.data()))
}

/// As [`digitization_error`] for the spin-up Rényi entropy (nats).
pub fn digitization_renyi(
    schedule: &FhSchedule,
    cfg: &PfaConfig,
    n_perm_samples: usize,
    seed: u64,
) -> Result<Vec<DigitizationBand>> {
    digitization_with(schedule, cfg, n_perm_samples, seed, |psi| {
        // reduced state of qubit 0: psi = [a00, a01, a10, a11]
        let r00 = psi[0].norm_sqr() + psi[1].norm_sqr();
        let r11 = psi[2].norm_sqr() + psi[3].norm_sqr();
        let r01 = psi[0] * psi[2].conj() + psi[1] * psi[3].conj();
        let purity = r00 * r00 + r11 * r11 + 2.0 * r01.norm_sqr();
        -0.5 * purity.ln()
    })
}

fn digitization_with(
    schedule: &FhSchedule,
    cfg: &PfaConfig,
    n_perm_samples: usize,
    seed: u64,
    statistic: impl Fn(&DVector<Complex64>) -> f64 + Sync,
) -> Result<Vec<DigitizationBand>> {
    if n_perm_samples < 2 {
        return Err(Error::invalid("digitization estimate needs at least two samples"));
    }
    let orderings = StepOrdering::all();
    let step_unitaries: Vec<Vec<CMatrix>> = (0..cfg.n_steps)
        .map(|s| {
            orderings
                .iter()
                .map(|&o| pfa_step_circuit(schedule, cfg, s, o).unitary())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let traces: Vec<Vec<f64>> = (0..n_perm_samples)
        .into_par_iter()
        .map(|sample| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(sample as u64);
            let mut psi = plus_plus();
            (0..cfg.n_steps)
                .map(|s| {
                    psi = &step_unitaries[s][rng.random_range(0..orderings.len())] * &psi;
                    statistic(&psi)
                })
                .collect()
        })
        .collect();
    Ok((0..cfg.n_steps)
        .map(|s| {
            let values: Vec<f64> = traces.iter().map(|t| t[s]).collect();
            band(s + 1, &values)
        })
        .collect())
}

pub(crate) fn band(step: usize, values: &[f64]) -> DigitizationBand {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // summation roundoff can push the mean of near-equal values past the extremes
    DigitizationBand { step, min, max, mean: mean.clamp(min, max), std_dev: var.sqrt() }
}

fn plus_plus() -> DVector<Complex64> {
    DVector::from_element(4, c(0.5, 0.0))
}

fn expectation_pure(psi: &DVector<Complex64>, op: &CMatrix) -> f64 {
    (psi.adjoint() * op * psi)[(0, 0)].re
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, operator_norm};

    #[test]
    fn hamiltonian_at_zero_interaction() {
        let ev = linalg::hermitian_eigenvalues(&fh_hamiltonian(0.0));
        for (got, want) in ev.iter().zip([-2.0, 0.0, 0.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn hamiltonian_is_hermitian_and_parity_symmetric() {
        let xx = linalg::kron(&linalg::pauli_x(), &linalg::pauli_x());
        for u in [-3.0, 0.0, 0.7, 2.0, 11.0] {
            let h = fh_hamiltonian(u);
            assert!(linalg::hermiticity_defect(&h) < 1e-12);
            assert!(max_abs(&(&h * &xx - &xx * &h)) < 1e-12);
        }
    }

    #[test]
    fn initial_state_is_plus_plus() {
        let c = initial_state_circuit();
        assert_eq!(c.scalar_depth(), 0);
        let u = c.unitary().unwrap();
        assert!(u.column(0).iter().all(|a| (a - linalg::c(0.5, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn zz_block_decomposition() {
        let theta = 0.83;
        let block = Circuit::from_gates(2, vec![Gate::cnot(0, 1), Gate::Rz(1, theta), Gate::cnot(0, 1)]).unwrap();
        let zz = linalg::kron(&linalg::pauli_z(), &linalg::pauli_z());
        let exact = linalg::expm_hermitian(&zz, theta / 2.0);
        assert!(max_abs(&(block.unitary().unwrap() - exact)) < 1e-12);
    }

    #[test]
    fn pfa_step_examples() {
        let id = pfa_step(2.0, 0.0, StepOrdering::DEFAULT).unitary().unwrap();
        assert!(max_abs(&(id - linalg::identity(4))) < 1e-12);
        assert_eq!(pfa_step(2.0, 0.1, StepOrdering::DEFAULT).scalar_depth(), 2);
        // local error of a first-order step is O(dt²)
        let errs: Vec<f64> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&dt| {
                let step = pfa_step(2.0, dt, StepOrdering::DEFAULT).unitary().unwrap();
                operator_norm(&(step - linalg::expm_hermitian(&fh_hamiltonian(2.0), dt)))
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.6..4.4).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn ordering_labels_round_trip() {
        for o in StepOrdering::all() {
            assert_eq!(o.to_string().parse::<StepOrdering>().unwrap(), o);
        }
        assert!("0zz".parse::<StepOrdering>().is_err());
    }

    #[test]
    fn pfa_circuit_depths() {
        let s = FhSchedule::default();
        let cfg = PfaConfig::default();
        assert_eq!(pfa_circuit(&s, &cfg, 0).unwrap(), initial_state_circuit());
        assert_eq!(pfa_circuit(&s, &cfg, 10).unwrap().scalar_depth(), 20);
        let cfg4 = PfaConfig::new(10, 4, StepOrdering::DEFAULT).unwrap();
        assert_eq!(pfa_circuit(&s, &cfg4, 3).unwrap().scalar_depth(), 24);
        assert!(pfa_circuit(&s, &cfg, 11).is_err());
    }

    #[test]
    fn step_boundaries_split_into_steps() {
        let s = FhSchedule::default();
        let cfg = PfaConfig::default();
        let full = pfa_circuit(&s, &cfg, 10).unwrap();
        let parts = full.fragment(&step_boundaries(&cfg, 10)).unwrap();
        assert_eq!(parts.len(), 10);
        assert!(parts.iter().all(|p| p.scalar_depth() == 2));
    }

    #[test]
    fn exact_evolution_constant_matches_closed_form() {
        let s = FhSchedule::constant(2.0, 2.0).unwrap();
        assert!(max_abs(&(exact_evolution(&s, 0.0, 1000).unwrap() - linalg::identity(4))) < 1e-15);
        let u = exact_evolution(&s, 1.3, 1000).unwrap();
        assert!(linalg::unitarity_defect(&u) < 1e-10);
        // the Magnus integrator on a constant schedule must agree as well
        let via_grid = magnus_evolution(&s, 1.3, 1000);
        assert!(max_abs(&(u - via_grid)) < 1e-8);
    }

    #[test]
    fn exact_evolution_time_dependent_converges() {
        let s = FhSchedule::piecewise_linear(vec![(0.0, 0.0), (0.7, 3.0), (2.0, 1.0)], 2.0).unwrap();
        let u = exact_evolution(&s, 1.5, DEFAULT_FINE_STEPS).unwrap();
        assert!(linalg::unitarity_defect(&u) < 1e-10);
    }

    #[test]
    fn schedule_validation() {
        assert!(FhSchedule::constant(f64::NAN, 1.0).is_err());
        assert!(FhSchedule::constant(1.0, 0.0).is_err());
        assert!(FhSchedule::piecewise_linear(vec![(1.0, 0.0), (0.5, 1.0)], 1.0).is_err());
        let s = FhSchedule::piecewise_linear(vec![(0.0, 0.0), (1.0, 2.0)], 2.0).unwrap();
        assert_eq!(s.u_at(0.5), 1.0);
        assert_eq!(s.u_at(1.5), 2.0);
    }

    #[test]
    fn digitization_commuting_observable_has_no_spread() {
        // X⊗X commutes with every step unitary, so no ordering can move it
        let xx = Observable::new(linalg::kron(&linalg::pauli_x(), &linalg::pauli_x()), "XX").unwrap();
        let bands = digitization_error(&FhSchedule::default(), &PfaConfig::default(), &xx, 8, 1).unwrap();
        assert!(bands.iter().all(|b| b.max - b.min < 1e-12 && b.std_dev < 1e-12));
    }

    #[test]
    fn digitization_spread_vanishes_as_dt_shrinks() {
        let eo = Observable::diagonal(&[1.0, 0.0, 0.0, 1.0], "E_o").unwrap();
        let spread = |t_final: f64| {
            let s = FhSchedule::constant(2.0, t_final).unwrap();
            let bands = digitization_error(&s, &PfaConfig::default(), &eo, 16, 3).unwrap();
            bands.iter().map(|b| b.max - b.min).fold(0.0, f64::max)
        };
        let (wide, narrow) = (spread(2.0), spread(0.02));
        assert!(narrow < 1e-3 && narrow < wide / 50.0, "{wide} {narrow}");
        assert!(digitization_error(&FhSchedule::default(), &PfaConfig::default(), &eo, 1, 0).is_err());
    }
}
