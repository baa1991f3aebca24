//! White-noise extrapolation and zero-noise extrapolation.
//!
//! Under a global depolarizing channel of strength `ε` after each of `χ`
//! entangling gates, the rescaled expectation `⟨O⟩ − Ω_ITS` shrinks by
//! exactly `(1−ε)^χ`. Calibration estimates `ε` from circuits whose ideal
//! outcome is known, and the ideal map divides the factor back out.
//!
//! Each calibration comes in two layers: a builder for the programs to run
//! and a pure function turning measured values into a [`CalibrationRecord`].
//! The bootstrap reruns only the second layer.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::circuit::{qcna_scale, Circuit};
use crate::error::{Error, Result};
use crate::observables::DiagonalObservable;
use crate::qpu::{evolve, Backend, NoiseModel, Program};
use crate::state::DensityMatrix;

/// Smallest ideal rescaled calibration value accepted as informative.
pub const DEFAULT_DELTA: f64 = 1e-6;

/// QCNA rounds used for zero-noise extrapolation.
pub const ZNE_ROUNDS: [usize; 4] = [0, 1, 2, 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledObservable {
    pub raw_value: f64,
    pub its_value: f64,
    pub rescaled: f64,
}

pub fn rescale(raw: f64, its: f64) -> RescaledObservable {
    RescaledObservable { raw_value: raw, its_value: its, rescaled: raw - its }
}

pub fn contamination(noisy_rescaled: f64, ideal_rescaled: f64) -> Result<f64> {
    contamination_with(noisy_rescaled, ideal_rescaled, DEFAULT_DELTA)
}

pub fn contamination_with(noisy_rescaled: f64, ideal_rescaled: f64, delta: f64) -> Result<f64> {
    if ideal_rescaled.abs() <= delta {
        return Err(Error::Uninformative(ideal_rescaled));
    }
    Ok(noisy_rescaled / ideal_rescaled)
}

/// `1 − C^{1/χ_c}`. A contamination above one (shot noise) yields a negative
/// value; callers decide whether to clamp.
pub fn secondary_epsilon(c: f64, chi_c: usize) -> Result<f64> {
    if chi_c < 1 {
        return Err(Error::invalid("calibration depth must be at least 1"));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(Error::NoiseFloor(c));
    }
    Ok(1.0 - c.powf(1.0 / chi_c as f64))
}

/// `(1−ε_s)^{−χ} ⟨Ω_n⟩`.
pub fn ideal_map(omega_n: f64, eps_s: f64, chi: usize) -> Result<f64> {
    ideal_map_vector(omega_n, &[(eps_s, chi)])
}

/// Product form over fragments `(ε_i, χ_i)`.
pub fn ideal_map_vector(omega_n: f64, fragments: &[(f64, usize)]) -> Result<f64> {
    let mut value = omega_n;
    for &(eps, chi) in fragments {
        if eps.is_nan() || eps >= 1.0 {
            return Err(Error::invalid(format!("noise strength {eps} must be below 1")));
        }
        value /= (1.0 - eps).powi(chi as i32);
    }
    Ok(value)
}

/// Gate cutoff `χ_g = 1/ε_g` (the constant is a convention).
pub fn gate_cutoff(eps_g: f64) -> Result<f64> {
    if eps_g.is_nan() || eps_g <= 0.0 {
        return Err(Error::invalid("gate cutoff needs a positive noise strength"));
    }
    Ok(1.0 / eps_g)
}

/// `χ_PNR = (n/2)·χ_g`.
pub fn pnr_depth(n_qubits: usize, eps_g: f64) -> Result<f64> {
    Ok(n_qubits as f64 / 2.0 * gate_cutoff(eps_g)?)
}

/// `((1−ε_g)/(1−ε_s))^χ`: the residual factor left by a mis-estimated ε.
pub fn viability_ratio(eps_g: f64, eps_s: f64, chi: usize) -> f64 {
    ((1.0 - eps_g) / (1.0 - eps_s)).abs().powi(chi as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    I,
    II,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::I => "I",
            Variant::II => "II",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "I" => Ok(Variant::I),
            "II" => Ok(Variant::II),
            other => Err(Error::invalid(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationPoint {
    /// `k` for Variant I, the fragment index for Variant II (both from 0).
    pub index: usize,
    pub chi_c: usize,
    pub contamination: f64,
    pub epsilon_s: f64,
}

impl CalibrationPoint {
    fn new(index: usize, chi_c: usize, contamination: f64) -> Result<Self> {
        Ok(CalibrationPoint { index, chi_c, contamination, epsilon_s: secondary_epsilon(contamination, chi_c)? })
    }

    /// `max(ε_s, 0)`.
    pub fn epsilon_clamped(&self) -> f64 {
        self.epsilon_s.max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub variant: Variant,
    pub points: Vec<CalibrationPoint>,
    /// Indices that could not be calibrated (noise floor or uninformative).
    pub dropped: Vec<usize>,
    pub warnings: Vec<String>,
    pub seed: u64,
    /// `None` for density-level calibration.
    pub n_shots: Option<u64>,
}

impl CalibrationRecord {
    fn empty(variant: Variant) -> Self {
        CalibrationRecord { variant, points: Vec::new(), dropped: Vec::new(), warnings: Vec::new(), seed: 0, n_shots: None }
    }

    fn push(&mut self, index: usize, chi_c: usize, noisy: f64, ideal: f64, delta: f64) {
        let point = contamination_with(noisy, ideal, delta).and_then(|c| CalibrationPoint::new(index, chi_c, c));
        match point {
            Ok(p) => {
                if p.contamination > 1.0 {
                    self.warnings.push(format!(
                        "point {index}: contamination {:.6} above 1, negative noise strength kept",
                        p.contamination
                    ));
                }
                self.points.push(p);
            }
            Err(e) => {
                self.warnings.push(format!("point {index} dropped: {e}"));
                self.dropped.push(index);
            }
        }
    }

    /// Arithmetic mean of the per-point estimates.
    pub fn aggregate(&self) -> Result<f64> {
        if self.points.is_empty() {
            return Err(Error::CalibrationFailed);
        }
        Ok(self.points.iter().map(|p| p.epsilon_s).sum::<f64>() / self.points.len() as f64)
    }

    /// Per-index estimates; `None` marks a dropped index.
    pub fn epsilon_vector(&self, len: usize) -> Vec<Option<f64>> {
        let mut out = vec![None; len];
        for p in &self.points {
            if p.index < len {
                out[p.index] = Some(p.epsilon_s);
            }
        }
        out
    }

    /// `variant,point_index,chi_c,contamination,epsilon_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("variant,point_index,chi_c,contamination,epsilon_s\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{},{},{}", self.variant, p.index, p.chi_c, p.contamination, p.epsilon_s);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut record: Option<CalibrationRecord> = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with("variant,") {
                continue;
            }
            let err = |m: String| Error::Parse { line: lineno + 1, message: m };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let variant: Variant = fields[0].parse().map_err(|e: Error| err(e.to_string()))?;
            let rec = record.get_or_insert_with(|| CalibrationRecord::empty(variant));
            if rec.variant != variant {
                return Err(err("mixed variants".into()));
            }
            let index = fields[1].trim().parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
            let chi_c = fields[2].trim().parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
            let contamination: f64 = fields[3].trim().parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?;
            let epsilon_s: f64 = fields[4].trim().parse().map_err(|e: std::num::ParseFloatError| err(e.to_string()))?;
            let point = CalibrationPoint::new(index, chi_c, contamination).map_err(|e| err(e.to_string()))?;
            if (point.epsilon_s - epsilon_s).abs() > 1e-10 {
                return Err(err(format!("epsilon_s {epsilon_s} inconsistent with contamination {contamination}")));
            }
            rec.points.push(CalibrationPoint { epsilon_s, ..point });
        }
        record.ok_or(Error::EmptyRecord)
    }
}

/// Calibration state preparation (single-qubit gates on `|0…0⟩`) and the
/// observable measured on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSetup {
    pub prep: Circuit,
    pub observable: DiagonalObservable,
    pub delta: f64,
}

impl CalibrationSetup {
    pub fn new(prep: Circuit, observable: DiagonalObservable) -> Result<Self> {
        if prep.n_qubits() != observable.n_qubits() {
            return Err(Error::DimensionMismatch { expected: observable.n_qubits(), found: prep.n_qubits() });
        }
        if prep.scalar_depth() != 0 {
            return Err(Error::invalid("calibration preparation must not contain entangling gates"));
        }
        Ok(CalibrationSetup { prep, observable, delta: DEFAULT_DELTA })
    }

    /// Ideal value of the observable on the prepared state.
    pub fn ideal_value(&self) -> Result<f64> {
        let rho = evolve(&self.prep, &NoiseModel::Ideal, &DensityMatrix::basis_state(self.prep.n_qubits(), 0)?)?;
        self.observable.expectation(&rho)
    }

    fn ideal_rescaled(&self) -> Result<f64> {
        let r = rescale(self.ideal_value()?, self.observable.its_value()).rescaled;
        if r.abs() <= self.delta {
            return Err(Error::Uninformative(r));
        }
        Ok(r)
    }

    fn wrap(&self, body: &Program) -> Result<Program> {
        self.observable.measured(&body.after_local(&self.prep)?)
    }
}

/// `prep · (U^k)† U^k · basis change` for `k = 1..=n_c`.
pub fn variant1_programs(target: &Program, setup: &CalibrationSetup, n_c: usize) -> Result<Vec<Program>> {
    if n_c < 1 {
        return Err(Error::invalid("N_c must be at least 1"));
    }
    (1..=n_c).map(|k| setup.wrap(&target.motion_reversal(k)?)).collect()
}

/// Variant I arithmetic on measured raw values, one per `k`.
pub fn variant1_from_values(chi: usize, values: &[f64], setup: &CalibrationSetup) -> Result<CalibrationRecord> {
    let ideal = setup.ideal_rescaled()?;
    let its = setup.observable.its_value();
    let mut record = CalibrationRecord::empty(Variant::I);
    for (i, &v) in values.iter().enumerate() {
        record.push(i, 2 * (i + 1) * chi, rescale(v, its).rescaled, ideal, setup.delta);
    }
    if record.points.is_empty() {
        return Err(Error::CalibrationFailed);
    }
    Ok(record)
}

pub fn variant1_calibrate(
    target: &Program,
    backend: &Backend,
    n_c: usize,
    setup: &CalibrationSetup,
    stream: u64,
) -> Result<CalibrationRecord> {
    setup.ideal_rescaled()?;
    let programs = variant1_programs(target, setup, n_c)?;
    let values: Vec<f64> =
        backend.execute(&programs, stream)?.iter().map(|e| e.estimate(setup.observable.weights())).collect();
    let mut record = variant1_from_values(target.scalar_depth(), &values, setup)?;
    record.seed = backend.seed;
    record.n_shots = shots_of(backend);
    Ok(record)
}

fn shots_of(backend: &Backend) -> Option<u64> {
    match backend.sampling {
        crate::qpu::Sampling::Exact => None,
        crate::qpu::Sampling::Shots(n) => Some(n),
    }
}

/// For each fragment `i`, the baseline program `prep · memory · basis` and
/// the reversal program `prep · memory · U_i† U_i · basis`, where the memory
/// is the last `min(w, i)` predecessor fragments. Returned interleaved as
/// `[B_0, A_0, B_1, A_1, …]`.
pub fn variant2_programs(fragments: &[Program], window: usize, setup: &CalibrationSetup) -> Result<Vec<Program>> {
    let n = setup.prep.n_qubits();
    let mut out = Vec::with_capacity(2 * fragments.len());
    for (i, frag) in fragments.iter().enumerate() {
        let mut memory = Program::new(Circuit::new(n));
        for pred in &fragments[i - window.min(i)..i] {
            memory = memory.then(pred)?;
        }
        out.push(setup.wrap(&memory)?);
        out.push(setup.wrap(&memory.then(&frag.motion_reversal(1)?)?)?);
    }
    Ok(out)
}

/// Variant II arithmetic on interleaved `(baseline, reversal)` raw values.
pub fn variant2_from_values(chis: &[usize], values: &[f64], setup: &CalibrationSetup) -> Result<CalibrationRecord> {
    if values.len() != 2 * chis.len() {
        return Err(Error::DimensionMismatch { expected: 2 * chis.len(), found: values.len() });
    }
    let its = setup.observable.its_value();
    let mut record = CalibrationRecord::empty(Variant::II);
    for (i, &chi) in chis.iter().enumerate() {
        let baseline = rescale(values[2 * i], its).rescaled;
        let reversed = rescale(values[2 * i + 1], its).rescaled;
        if chi == 0 {
            record.warnings.push(format!("fragment {i} has no entangling gates"));
            record.dropped.push(i);
            continue;
        }
        record.push(i, 2 * chi, reversed, baseline, setup.delta);
    }
    if record.points.is_empty() {
        return Err(Error::CalibrationFailed);
    }
    Ok(record)
}

pub fn variant2_calibrate(
    fragments: &[Program],
    window: usize,
    backend: &Backend,
    setup: &CalibrationSetup,
    stream: u64,
) -> Result<CalibrationRecord> {
    let programs = variant2_programs(fragments, window, setup)?;
    let values: Vec<f64> =
        backend.execute(&programs, stream)?.iter().map(|e| e.estimate(setup.observable.weights())).collect();
    let chis: Vec<usize> = fragments.iter().map(Program::scalar_depth).collect();
    let mut record = variant2_from_values(&chis, &values, setup)?;
    record.seed = backend.seed;
    record.n_shots = shots_of(backend);
    Ok(record)
}

/// Fills dropped fragments with the mean of the calibrated ones.
pub fn fill_epsilon_vector(estimates: &[Option<f64>]) -> Result<Vec<f64>> {
    let known: Vec<f64> = estimates.iter().flatten().copied().collect();
    if known.is_empty() {
        return Err(Error::CalibrationFailed);
    }
    let mean = known.iter().sum::<f64>() / known.len() as f64;
    Ok(estimates.iter().map(|e| e.unwrap_or(mean)).collect())
}

fn check_scales(scales: &[f64]) -> Result<()> {
    for (i, &a) in scales.iter().enumerate() {
        if a <= 0.0 || !a.is_finite() {
            return Err(Error::invalid(format!("scale factor {a} must be positive")));
        }
        if scales[..i].contains(&a) {
            return Err(Error::DuplicateScale(a));
        }
    }
    Ok(())
}

/// Least-squares polynomial of degree `order` in the scale factor, evaluated
/// at zero.
pub fn zne_poly(scales: &[f64], values: &[f64], order: usize) -> Result<f64> {
    if scales.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: scales.len(), found: values.len() });
    }
    if scales.len() < order + 1 {
        return Err(Error::Underdetermined { points: scales.len(), order });
    }
    check_scales(scales)?;
    let a = DMatrix::from_fn(scales.len(), order + 1, |i, j| scales[i].powi(j as i32));
    let b = DVector::from_column_slice(values);
    let coeffs = a.svd(true, true).solve(&b, 1e-14).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(coeffs[0])
}

/// `w_i = ∏_{j≠i} c_j/(c_j − c_i)`.
pub fn richardson_weights(scales: &[f64]) -> Result<Vec<f64>> {
    check_scales(scales)?;
    Ok((0..scales.len())
        .map(|i| {
            (0..scales.len()).filter(|&j| j != i).map(|j| scales[j] / (scales[j] - scales[i])).product()
        })
        .collect())
}

pub fn zne_richardson(scales: &[f64], values: &[f64], order: usize) -> Result<f64> {
    if scales.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: scales.len(), found: values.len() });
    }
    if scales.len() != order + 1 {
        return Err(Error::invalid(format!("order {order} Richardson needs {} points, got {}", order + 1, scales.len())));
    }
    Ok(richardson_weights(scales)?.iter().zip(values).map(|(w, v)| w * v).sum())
}

/// Scale factors of [`ZNE_ROUNDS`].
pub fn zne_scales() -> [f64; 4] {
    ZNE_ROUNDS.map(|r| qcna_scale(r).expect("round in range") as f64)
}

/// Third-order polynomial over all four rounds and second-order Richardson
/// over the first three.
pub fn zne_estimates(values: &[f64; 4]) -> Result<(f64, f64)> {
    let scales = zne_scales();
    Ok((zne_poly(&scales, values, 3)?, zne_richardson(&scales[..3], &values[..3], 2)?))
}

/// One folded program per QCNA round.
pub fn zne_programs(target: &Program) -> Result<Vec<Program>> {
    ZNE_ROUNDS.iter().map(|&r| target.qcna_fold(r)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    ClaweI,
    ClaweII,
    ZnePoly,
    ZneRichardson,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClaweI => "clawe-I",
            Method::ClaweII => "clawe-II",
            Method::ZnePoly => "zne-poly",
            Method::ZneRichardson => "zne-richardson",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigatedEstimate {
    /// On the raw observable scale.
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
    pub within_pnr: bool,
    pub beyond_cutoff: bool,
}

impl MitigatedEstimate {
    /// Viability flags from the depth `chi`, register size and a noise
    /// strength estimate; a non-positive `eps` counts as noiseless.
    pub fn new(value: f64, stderr: f64, method: Method, chi: usize, n_qubits: usize, eps: f64) -> Self {
        let (within_pnr, beyond_cutoff) = match (pnr_depth(n_qubits, eps), gate_cutoff(eps)) {
            (Ok(pnr), Ok(cut)) => (chi as f64 <= pnr, chi as f64 > cut),
            _ => (true, false),
        };
        MitigatedEstimate { value, stderr: stderr.abs(), method, within_pnr, beyond_cutoff }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Gate;
    use crate::qpu::Sampling;
    use proptest::prelude::*;

    fn plus_setup() -> CalibrationSetup {
        CalibrationSetup::new(
            Circuit::from_gates(2, vec![Gate::H(0), Gate::H(1)]).unwrap(),
            DiagonalObservable::x_parity(2, 0, 1).unwrap(),
        )
        .unwrap()
    }

    fn target(chi: usize) -> Program {
        let mut c = Circuit::new(2);
        for i in 0..chi {
            c.push(Gate::Rx(0, 0.3 + 0.1 * i as f64)).unwrap();
            c.push(Gate::cnot(0, 1)).unwrap();
            c.push(Gate::Rz(1, 0.2)).unwrap();
        }
        Program::new(c)
    }

    #[test]
    fn rescale_examples() {
        assert_eq!(rescale(0.5, 0.5).rescaled, 0.0);
        assert_eq!(rescale(1.0, 0.5).rescaled, 0.5);
        assert_eq!(rescale(0.0, 0.5).rescaled, -0.5);
    }

    #[test]
    fn contamination_examples() {
        assert_eq!(contamination(0.3, 0.3).unwrap(), 1.0);
        assert!((contamination(0.81 * 0.4, 0.4).unwrap() - 0.81).abs() < 1e-15);
        assert!(matches!(contamination(0.1, 0.0), Err(Error::Uninformative(_))));
    }

    #[test]
    fn secondary_epsilon_examples() {
        assert!((secondary_epsilon(0.99f64.powi(20), 20).unwrap() - 0.01).abs() < 1e-12);
        assert_eq!(secondary_epsilon(1.0, 5).unwrap(), 0.0);
        let e = secondary_epsilon(0.8179, 20).unwrap();
        assert!((e - 0.01).abs() < 1e-5);
        assert!(((1.0 - e).powi(20) - 0.8179).abs() < 1e-12);
        assert!(matches!(secondary_epsilon(0.0, 20), Err(Error::NoiseFloor(_))));
        assert!(matches!(secondary_epsilon(-0.1, 20), Err(Error::NoiseFloor(_))));
        assert!(secondary_epsilon(1.05, 10).unwrap() < 0.0);
        assert!(secondary_epsilon(0.5, 0).is_err());
    }

    #[test]
    fn ideal_map_examples() {
        assert_eq!(ideal_map(0.3, 0.0, 17).unwrap(), 0.3);
        assert!((ideal_map(0.5, 0.01, 20).unwrap() - 0.61131).abs() < 1e-5);
        assert!(ideal_map(0.5, 1.0, 20).is_err());
        assert_eq!(ideal_map_vector(0.4, &[(0.02, 7)]).unwrap(), ideal_map(0.4, 0.02, 7).unwrap());
        assert_eq!(ideal_map_vector(0.4, &[(0.0, 7), (0.0, 3)]).unwrap(), 0.4);
        assert!(ideal_map_vector(0.4, &[(0.0, 7), (1.5, 3)]).is_err());
    }

    #[test]
    fn ideal_map_inverts_global_noise() {
        let t = target(20);
        let rho0 = DensityMatrix::pure_state(&[crate::linalg::c(0.5, 0.0); 4]).unwrap();
        let obs = DiagonalObservable::electronic_overlap();
        let ideal = obs.expectation(&evolve(t.circuit(), &NoiseModel::Ideal, &rho0).unwrap()).unwrap();
        let noisy = obs.expectation(&evolve(t.circuit(), &NoiseModel::GlobalConstant(0.02), &rho0).unwrap()).unwrap();
        let its = obs.its_value();
        let mapped = ideal_map(noisy - its, 0.02, 20).unwrap() + its;
        assert!((mapped - ideal).abs() < 1e-9);
    }

    #[test]
    fn ideal_map_vector_inverts_drift() {
        let t = target(20);
        let rho0 = DensityMatrix::pure_state(&[crate::linalg::c(0.5, 0.0); 4]).unwrap();
        let obs = DiagonalObservable::electronic_overlap();
        let noise = NoiseModel::piecewise(&[(10, 0.01), (10, 0.03)]).unwrap();
        let ideal = obs.expectation(&evolve(t.circuit(), &NoiseModel::Ideal, &rho0).unwrap()).unwrap();
        let noisy = obs.expectation(&evolve(t.circuit(), &noise, &rho0).unwrap()).unwrap();
        let mapped = ideal_map_vector(noisy - 0.5, &[(0.01, 10), (0.03, 10)]).unwrap() + 0.5;
        assert!((mapped - ideal).abs() < 1e-9);
    }

    #[test]
    fn variant1_examples() {
        let t = target(10);
        for (noise, eps) in [(NoiseModel::GlobalConstant(0.02), 0.02), (NoiseModel::Ideal, 0.0)] {
            let rec = variant1_calibrate(&t, &Backend::exact(noise), 3, &plus_setup(), 0).unwrap();
            assert_eq!(rec.points.len(), 3);
            for (k, p) in rec.points.iter().enumerate() {
                assert_eq!(p.chi_c, 2 * (k + 1) * 10);
                assert!((p.epsilon_s - eps).abs() < 1e-9);
            }
            assert!((rec.aggregate().unwrap() - eps).abs() < 1e-9);
        }
        let one = variant1_calibrate(&t, &Backend::exact(NoiseModel::GlobalConstant(0.05)), 1, &plus_setup(), 0).unwrap();
        assert!((one.aggregate().unwrap() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn variant1_rejects_uninformative_setup() {
        let setup = CalibrationSetup::new(
            Circuit::from_gates(2, vec![Gate::H(0), Gate::H(1)]).unwrap(),
            DiagonalObservable::electronic_overlap(),
        )
        .unwrap();
        assert!(matches!(
            variant1_calibrate(&target(4), &Backend::exact(NoiseModel::Ideal), 1, &setup, 0),
            Err(Error::Uninformative(_))
        ));
    }

    #[test]
    fn variant1_drops_noise_floor_points() {
        let setup = plus_setup();
        let rec = variant1_from_values(5, &[0.9, 0.5, 0.3], &setup).unwrap();
        assert_eq!(rec.points.len(), 1);
        assert_eq!(rec.dropped, vec![1, 2]);
        assert!(matches!(variant1_from_values(5, &[0.5, 0.2], &setup), Err(Error::CalibrationFailed)));
        let above = variant1_from_values(5, &[1.0 + 1e-3], &setup).unwrap();
        assert!(above.points[0].epsilon_s < 0.0);
        assert_eq!(above.points[0].epsilon_clamped(), 0.0);
        assert_eq!(above.warnings.len(), 1);
    }

    #[test]
    fn variant2_window_independence_under_global_noise() {
        let frags = target(12).fragment(&[9, 18, 27]).unwrap();
        let backend = Backend::exact(NoiseModel::GlobalConstant(0.03));
        let base = variant2_calibrate(&frags, 0, &backend, &plus_setup(), 0).unwrap();
        for w in [1, 2, frags.len()] {
            let rec = variant2_calibrate(&frags, w, &backend, &plus_setup(), 0).unwrap();
            for (a, b) in base.points.iter().zip(&rec.points) {
                assert!((a.epsilon_s - b.epsilon_s).abs() < 1e-9);
                assert!((a.epsilon_s - 0.03).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn variant2_recovers_drift() {
        let t = target(10);
        let frags = t.fragment(&[15]).unwrap();
        assert_eq!(frags[0].scalar_depth(), 5);
        let backend = Backend::exact(NoiseModel::piecewise(&[(5, 0.01), (5, 0.04)]).unwrap());
        for w in [0, 1] {
            let rec = variant2_calibrate(&frags, w, &backend, &plus_setup(), 0).unwrap();
            let eps: Vec<f64> = rec.points.iter().map(|p| p.epsilon_s).collect();
            assert!((eps[0] - 0.01).abs() < 1e-9 && (eps[1] - 0.04).abs() < 1e-9, "{eps:?}");
        }
        let ideal = variant2_calibrate(&frags, 1, &Backend::exact(NoiseModel::Ideal), &plus_setup(), 0).unwrap();
        assert!(ideal.points.iter().all(|p| p.epsilon_s.abs() < 1e-12));
    }

    #[test]
    fn variant2_flags_uninformative_baseline() {
        let rec = variant2_from_values(&[2, 2], &[0.5, 0.5, 0.9, 0.8], &plus_setup()).unwrap();
        assert_eq!(rec.dropped, vec![0]);
        assert_eq!(rec.points[0].index, 1);
        assert_eq!(fill_epsilon_vector(&rec.epsilon_vector(2)).unwrap()[0], rec.points[0].epsilon_s);
    }

    #[test]
    fn calibration_record_csv_round_trip() {
        let rec = variant1_calibrate(&target(4), &Backend::exact(NoiseModel::GlobalConstant(0.01)), 3, &plus_setup(), 0).unwrap();
        let text = rec.to_csv();
        assert!(text.starts_with("variant,point_index,chi_c,contamination,epsilon_s\nI,0,8,"));
        let back = CalibrationRecord::from_csv(&text).unwrap();
        assert_eq!(back.points, rec.points);
        assert!(CalibrationRecord::from_csv("I,0,8,0.9,0.5\n").is_err());
    }

    #[test]
    fn shot_level_calibration_is_close() {
        let backend = Backend::new(NoiseModel::GlobalConstant(0.02), Sampling::Shots(200_000), 11);
        let rec = variant1_calibrate(&target(10), &backend, 2, &plus_setup(), 0).unwrap();
        assert!((rec.aggregate().unwrap() - 0.02).abs() < 2e-3);
        assert_eq!(rec.n_shots, Some(200_000));
    }

    #[test]
    fn viability_conventions() {
        assert_eq!(gate_cutoff(0.01).unwrap(), 100.0);
        let pnr = pnr_depth(5, 0.0225).unwrap();
        assert!((pnr - 111.11).abs() < 0.01);
        assert!(gate_cutoff(0.0).is_err());
        let e = MitigatedEstimate::new(0.4, -0.1, Method::ClaweI, 140, 5, 0.0225);
        assert!(!e.within_pnr && e.beyond_cutoff && e.stderr == 0.1);
        let e = MitigatedEstimate::new(0.4, 0.1, Method::ClaweI, 20, 2, 0.02);
        assert!(e.within_pnr && !e.beyond_cutoff);
    }

    #[test]
    fn zne_poly_examples() {
        let s = [1.0, 3.0, 5.0, 7.0];
        assert!((zne_poly(&s, &[0.7; 4], 3).unwrap() - 0.7).abs() < 1e-12);
        let cubic = |x: f64| 0.9 - 0.1 * x + 0.02 * x * x - 0.003 * x * x * x;
        let v: Vec<f64> = s.iter().map(|&x| cubic(x)).collect();
        assert!((zne_poly(&s, &v, 3).unwrap() - 0.9).abs() < 1e-9);
        assert!(matches!(zne_poly(&s[..2], &v[..2], 3), Err(Error::Underdetermined { points: 2, order: 3 })));
        assert!(matches!(zne_poly(&[1.0, 1.0, 3.0], &[1.0; 3], 1), Err(Error::DuplicateScale(_))));
    }

    #[test]
    fn zne_richardson_examples() {
        let s = [1.0, 3.0, 5.0];
        assert!((zne_richardson(&s, &[0.9, 0.7, 0.5], 2).unwrap() - 1.0).abs() < 1e-12);
        assert!((zne_richardson(&s, &[0.3; 3], 2).unwrap() - 0.3).abs() < 1e-12);
        let quad = |x: f64| 0.8 + 0.05 * x - 0.01 * x * x;
        let v: Vec<f64> = s.iter().map(|&x| quad(x)).collect();
        assert!((zne_richardson(&s, &v, 2).unwrap() - 0.8).abs() < 1e-10);
        assert!(zne_richardson(&s, &v, 3).is_err());
        assert!(matches!(richardson_weights(&[1.0, 3.0, 3.0]), Err(Error::DuplicateScale(_))));
    }

    #[test]
    fn zne_programs_use_four_rounds() {
        let p = zne_programs(&target(20)).unwrap();
        assert_eq!(p.iter().map(Program::scalar_depth).collect::<Vec<_>>(), vec![20, 60, 100, 140]);
        assert_eq!(zne_scales(), [1.0, 3.0, 5.0, 7.0]);
    }

    proptest! {
        #[test]
        fn richardson_weights_sum_to_one(raw in proptest::collection::btree_set(1u32..16, 2..5)) {
            let scales: Vec<f64> = raw.iter().map(|&s| s as f64).collect();
            let sum: f64 = richardson_weights(&scales).unwrap().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn secondary_epsilon_inverts_power(eps in 0.0f64..0.2, chi in 1usize..200) {
            let c = (1.0 - eps).powi(chi as i32);
            prop_assert!((secondary_epsilon(c, chi).unwrap() - eps).abs() < 1e-12);
        }

        #[test]
        fn viability_ratio_is_monotone(eps_g in 0.001f64..0.1, eps_s in 0.001f64..0.1, chi in 0usize..300) {
            prop_assume!((eps_g - eps_s).abs() > 1e-6);
            let a = viability_ratio(eps_g, eps_s, chi);
            let b = viability_ratio(eps_g, eps_s, chi + 1);
            if eps_g > eps_s { prop_assert!(b < a); } else { prop_assert!(b > a); }
        }
    }
}
