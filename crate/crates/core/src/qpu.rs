//! Virtual noisy QPU.
//!
//! Circuits are evolved exactly at the density-matrix level. Noise is attached
//! only to entangling gates: after every CNOT the noise model's channel acts,
//! while single-qubit gates, state preparation and measurement are ideal.
//!
//! Each CNOT of an executed [`Program`] carries a *slot*: the position of that
//! gate in the target computation it was derived from. Motion reversal, powers
//! and folding keep the slots of the gates they copy, so a drifting noise
//! vector indexed by slot follows the gates rather than the execution order.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::channels::{self, KrausChannel, Superoperator};
use crate::circuit::{check_boundaries, qcna_scale, Circuit, Gate};
use crate::error::{Error, Result};
use crate::linalg;
use crate::state::{DensityMatrix, VALIDITY_TOL};
use crate::CMatrix;

/// Largest number of circuits a single job may hold.
pub const MAX_JOB_CIRCUITS: usize = 75;

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Ideal,
    /// Global depolarizing channel of fixed strength after every CNOT.
    GlobalConstant(f64),
    /// Global depolarizing channel whose strength is looked up by the CNOT's
    /// slot.
    GlobalVector(Vec<f64>),
    /// A coherent `exp(-iφ/2 Z⊗Z)` over-rotation followed by a Kraus channel,
    /// both on the CNOT's own qubit pair (control first).
    LocalAfterCnot { channel: KrausChannel, coherent_angle: f64 },
}

impl NoiseModel {
    /// Global noise vector built from `(slot count, ε)` segments.
    pub fn piecewise(segments: &[(usize, f64)]) -> Result<NoiseModel> {
        let v = segments.iter().flat_map(|&(n, e)| std::iter::repeat_n(e, n)).collect();
        let model = NoiseModel::GlobalVector(v);
        model.validate()?;
        Ok(model)
    }

    /// Global noise vector drifting linearly from `start` to `end` across
    /// `slots` entangling gates.
    pub fn linear_drift(start: f64, end: f64, slots: usize) -> Result<NoiseModel> {
        let v = (0..slots)
            .map(|i| if slots == 1 { start } else { start + (end - start) * i as f64 / (slots - 1) as f64 })
            .collect();
        let model = NoiseModel::GlobalVector(v);
        model.validate()?;
        Ok(model)
    }

    /// Two-qubit depolarizing channel of strength `p` composed with a `ZZ`
    /// over-rotation by `phi`.
    pub fn local_default(p: f64, phi: f64) -> Result<NoiseModel> {
        Ok(NoiseModel::LocalAfterCnot { channel: KrausChannel::depolarizing(2, p)?, coherent_angle: phi })
    }

    pub fn validate(&self) -> Result<()> {
        let check = |e: f64| {
            if (0.0..=1.0).contains(&e) {
                Ok(())
            } else {
                Err(Error::invalid(format!("noise strength {e} outside [0, 1]")))
            }
        };
        match self {
            NoiseModel::Ideal => Ok(()),
            NoiseModel::GlobalConstant(e) => check(*e),
            NoiseModel::GlobalVector(v) => v.iter().try_for_each(|&e| check(e)),
            NoiseModel::LocalAfterCnot { channel, coherent_angle } => {
                if channel.n_qubits() != 2 {
                    return Err(Error::invalid("local CNOT noise must act on two qubits"));
                }
                let defect = channel.trace_preservation_defect();
                if defect > VALIDITY_TOL {
                    return Err(Error::NotTracePreserving(defect));
                }
                if !coherent_angle.is_finite() {
                    return Err(Error::invalid("coherent angle must be finite"));
                }
                Ok(())
            }
        }
    }

    fn apply_after_cnot(&self, m: &mut CMatrix, control: usize, target: usize, slot: usize, n: usize) -> Result<()> {
        match self {
            NoiseModel::Ideal => {}
            NoiseModel::GlobalConstant(e) => channels::depolarize_in_place(m, *e),
            NoiseModel::GlobalVector(v) => {
                let e = *v.get(slot).ok_or(Error::NoiseSlotOutOfRange(slot))?;
                channels::depolarize_in_place(m, e);
            }
            NoiseModel::LocalAfterCnot { channel, coherent_angle } => {
                if *coherent_angle != 0.0 {
                    linalg::conjugate_local(m, &channels::zz_rotation(*coherent_angle), &[control, target], n);
                }
                channel.apply_local(m, &[control, target], n);
            }
        }
        Ok(())
    }
}

/// A circuit together with the slot label of each of its CNOTs.
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    circuit: Circuit,
    slots: Vec<usize>,
}

impl Program {
    /// Sequential slots `0..χ`.
    pub fn new(circuit: Circuit) -> Program {
        let slots = (0..circuit.scalar_depth()).collect();
        Program { circuit, slots }
    }

    pub fn with_slots(circuit: Circuit, slots: Vec<usize>) -> Result<Program> {
        if slots.len() != circuit.scalar_depth() {
            return Err(Error::DimensionMismatch { expected: circuit.scalar_depth(), found: slots.len() });
        }
        Ok(Program { circuit, slots })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn n_qubits(&self) -> usize {
        self.circuit.n_qubits()
    }

    pub fn scalar_depth(&self) -> usize {
        self.slots.len()
    }

    pub fn then(&self, other: &Program) -> Result<Program> {
        let circuit = self.circuit.then(&other.circuit)?;
        let mut slots = self.slots.clone();
        slots.extend_from_slice(&other.slots);
        Ok(Program { circuit, slots })
    }

    /// Appends a circuit without entangling gates (preparation or basis change).
    pub fn then_local(&self, c: &Circuit) -> Result<Program> {
        if c.scalar_depth() != 0 {
            return Err(Error::invalid("only single-qubit circuits can be appended without slots"));
        }
        Ok(Program { circuit: self.circuit.then(c)?, slots: self.slots.clone() })
    }

    /// Prepends a circuit without entangling gates.
    pub fn after_local(&self, c: &Circuit) -> Result<Program> {
        if c.scalar_depth() != 0 {
            return Err(Error::invalid("only single-qubit circuits can be prepended without slots"));
        }
        Ok(Program { circuit: c.then(&self.circuit)?, slots: self.slots.clone() })
    }

    pub fn inverse(&self) -> Program {
        Program { circuit: self.circuit.inverse(), slots: self.slots.iter().rev().copied().collect() }
    }

    pub fn power(&self, k: usize) -> Result<Program> {
        Ok(Program { circuit: self.circuit.power(k)?, slots: self.slots.repeat(k) })
    }

    /// `U^k` followed by `(U^k)†`.
    pub fn motion_reversal(&self, k: usize) -> Result<Program> {
        let forward = self.power(k)?;
        forward.then(&forward.inverse())
    }

    pub fn qcna_fold(&self, round: usize) -> Result<Program> {
        let reps = qcna_scale(round)?;
        let slots = self.slots.iter().flat_map(|&s| std::iter::repeat_n(s, reps)).collect();
        Ok(Program { circuit: self.circuit.qcna_fold(round)?, slots })
    }

    pub fn randomized_compile(&self, seed: u64) -> Program {
        Program { circuit: self.circuit.randomized_compile(seed), slots: self.slots.clone() }
    }

    pub fn fragment(&self, boundaries: &[usize]) -> Result<Vec<Program>> {
        check_boundaries(boundaries, self.circuit.len())?;
        let parts = self.circuit.fragment(boundaries)?;
        let mut offset = 0;
        Ok(parts
            .into_iter()
            .map(|circuit| {
                let chi = circuit.scalar_depth();
                let slots = self.slots[offset..offset + chi].to_vec();
                offset += chi;
                Program { circuit, slots }
            })
            .collect())
    }
}

impl From<Circuit> for Program {
    fn from(c: Circuit) -> Program {
        Program::new(c)
    }
}

/// Noisy evolution of `rho0` through `circuit` with sequential slots.
pub fn evolve(circuit: &Circuit, noise: &NoiseModel, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    evolve_program(&Program::new(circuit.clone()), noise, rho0)
}

pub fn evolve_program(program: &Program, noise: &NoiseModel, rho0: &DensityMatrix) -> Result<DensityMatrix> {
    if rho0.n_qubits() != program.n_qubits() {
        return Err(Error::DimensionMismatch { expected: 1 << program.n_qubits(), found: rho0.dim() });
    }
    let mut m = rho0.data().clone();
    evolve_in_place(program, noise, &mut m)?;
    Ok(DensityMatrix::from_trusted(program.n_qubits(), m))
}

fn evolve_in_place(program: &Program, noise: &NoiseModel, m: &mut CMatrix) -> Result<()> {
    let n = program.n_qubits();
    let mut ordinal = 0;
    for gate in program.circuit.gates() {
        linalg::conjugate_local(m, &gate.matrix(), &gate.qubits(), n);
        if let Gate::Cnot { control, target } = *gate {
            noise.apply_after_cnot(m, control, target, program.slots[ordinal], n)?;
            ordinal += 1;
        }
    }
    Ok(())
}

/// Superoperator of a noisy program, built column by column.
pub fn program_superoperator(program: &Program, noise: &NoiseModel) -> Result<Superoperator> {
    noise.validate()?;
    if let NoiseModel::GlobalVector(v) = noise {
        if let Some(&s) = program.slots.iter().find(|&&s| s >= v.len()) {
            return Err(Error::NoiseSlotOutOfRange(s));
        }
    }
    Ok(Superoperator::from_linear_map(program.n_qubits(), |unit| {
        let mut m = unit.clone();
        evolve_in_place(program, noise, &mut m).expect("slots checked");
        m
    }))
}

/// Measurement counts keyed by computational basis index (qubit 0 most
/// significant).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShotRecord {
    n_qubits: usize,
    counts: BTreeMap<usize, u64>,
    n_shots: u64,
}

impl ShotRecord {
    pub fn new(n_qubits: usize, counts: BTreeMap<usize, u64>) -> Result<ShotRecord> {
        if let Some(&idx) = counts.keys().find(|&&k| k >> n_qubits != 0) {
            return Err(Error::invalid(format!("outcome {idx} does not fit in {n_qubits} qubits")));
        }
        let counts: BTreeMap<usize, u64> = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        let n_shots = counts.values().sum();
        Ok(ShotRecord { n_qubits, counts, n_shots })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_shots(&self) -> u64 {
        self.n_shots
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }

    pub fn count(&self, outcome: usize) -> u64 {
        self.counts.get(&outcome).copied().unwrap_or(0)
    }

    pub fn bitstring(&self, outcome: usize) -> String {
        bitstring(outcome, self.n_qubits)
    }

    /// Merges counts from records on the same register.
    pub fn merge(records: &[ShotRecord]) -> Result<ShotRecord> {
        let n_qubits = records.first().ok_or(Error::EmptyRecord)?.n_qubits;
        let mut counts = BTreeMap::new();
        for r in records {
            if r.n_qubits != n_qubits {
                return Err(Error::DimensionMismatch { expected: n_qubits, found: r.n_qubits });
            }
            for (&k, &v) in &r.counts {
                *counts.entry(k).or_insert(0) += v;
            }
        }
        ShotRecord::new(n_qubits, counts)
    }

    /// `bitstring,count` rows under a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bitstring,count\n");
        for (&k, &v) in &self.counts {
            let _ = writeln!(out, "{},{v}", self.bitstring(k));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<ShotRecord> {
        let mut n_qubits = None;
        let mut counts = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "bitstring,count") {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: lineno + 1, message };
            let (bits, count) = line.split_once(',').ok_or_else(|| parse_err("expected `bitstring,count`".into()))?;
            let bits = bits.trim();
            if bits.is_empty() || !bits.chars().all(|ch| ch == '0' || ch == '1') {
                return Err(parse_err(format!("invalid bitstring `{bits}`")));
            }
            if *n_qubits.get_or_insert(bits.len()) != bits.len() {
                return Err(parse_err("bitstrings of different widths".into()));
            }
            let idx = usize::from_str_radix(bits, 2).map_err(|e| parse_err(e.to_string()))?;
            let c: u64 = count.trim().parse().map_err(|e: std::num::ParseIntError| parse_err(e.to_string()))?;
            *counts.entry(idx).or_insert(0) += c;
        }
        ShotRecord::new(n_qubits.ok_or(Error::EmptyRecord)?, counts)
    }
}

pub fn bitstring(outcome: usize, n_qubits: usize) -> String {
    (0..n_qubits).map(|q| if outcome >> (n_qubits - 1 - q) & 1 == 1 { '1' } else { '0' }).collect()
}

/// Draws multinomial counts by sequential conditional binomials.
pub(crate) fn multinomial<R: rand::Rng + ?Sized>(n: u64, probabilities: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = n;
    let mut mass = 1.0;
    let mut out = vec![0; probabilities.len()];
    for (i, &p) in probabilities.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i + 1 == probabilities.len() || mass <= 0.0 {
            out[i] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
        out[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    out
}

/// Born-rule probabilities after a noiseless basis change.
pub fn measurement_probabilities(rho: &DensityMatrix, pre_measurement: &Circuit) -> Result<Vec<f64>> {
    if pre_measurement.n_qubits() != rho.n_qubits() {
        return Err(Error::DimensionMismatch { expected: rho.n_qubits(), found: pre_measurement.n_qubits() });
    }
    let n = rho.n_qubits();
    let mut m = rho.data().clone();
    for g in pre_measurement.gates() {
        linalg::conjugate_local(&mut m, &g.matrix(), &g.qubits(), n);
    }
    let raw: Vec<f64> = m.diagonal().iter().map(|z| z.re).collect();
    if let Some(p) = raw.iter().find(|&&p| p < -VALIDITY_TOL) {
        return Err(Error::InvalidState(format!("negative outcome probability {p:e}")));
    }
    let clipped: Vec<f64> = raw.iter().map(|p| p.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    Ok(clipped.iter().map(|p| p / total).collect())
}

/// Applies `pre_measurement` noiselessly and samples `n_shots`
/// computational-basis outcomes.
pub fn sample_shots(rho: &DensityMatrix, pre_measurement: &Circuit, n_shots: u64, seed: u64) -> Result<ShotRecord> {
    if n_shots < 1 {
        return Err(Error::invalid("at least one shot is required"));
    }
    let probs = measurement_probabilities(rho, pre_measurement)?;
    Ok(sample_probabilities(rho.n_qubits(), &probs, n_shots, seed))
}

fn sample_probabilities(n_qubits: usize, probs: &[f64], n_shots: u64, seed: u64) -> ShotRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = multinomial(n_shots, probs, &mut rng);
    let counts = draws.into_iter().enumerate().filter(|&(_, c)| c > 0).collect();
    ShotRecord::new(n_qubits, counts).expect("outcomes fit the register")
}

/// Empirical mean of a diagonal observable, `Σ_b w(b) n_b / N`.
pub fn estimate_from_counts(record: &ShotRecord, weight: impl Fn(usize) -> f64) -> f64 {
    if record.n_shots == 0 {
        return f64::NAN;
    }
    record.counts.iter().map(|(&k, &v)| weight(k) * v as f64).sum::<f64>() / record.n_shots as f64
}

/// Independent stream seed for item `index` under a base seed (SplitMix64).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn check_job(len: usize) -> Result<()> {
    if len > MAX_JOB_CIRCUITS {
        return Err(Error::JobTooLarge { len, max: MAX_JOB_CIRCUITS });
    }
    Ok(())
}

/// Density-level execution of one job.
pub fn run_job_exact(programs: &[Program], noise: &NoiseModel, rho0: &DensityMatrix) -> Result<Vec<DensityMatrix>> {
    check_job(programs.len())?;
    noise.validate()?;
    programs.par_iter().map(|p| evolve_program(p, noise, rho0)).collect()
}

/// Executes a job of at most [`MAX_JOB_CIRCUITS`] programs; circuit `i`
/// samples with seed `derive_seed(seed, i)`.
pub fn run_job(
    programs: &[Program],
    noise: &NoiseModel,
    rho0: &DensityMatrix,
    n_shots: u64,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    let states = run_job_exact(programs, noise, rho0)?;
    let identity = Circuit::new(rho0.n_qubits());
    states
        .par_iter()
        .enumerate()
        .map(|(i, rho)| sample_shots(rho, &identity, n_shots, derive_seed(seed, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sampling {
    /// Expectation values from the exact output state (infinite shots).
    Exact,
    Shots(u64),
}

/// Result of executing one logical program.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    /// Exact outcome probabilities of the (randomization-averaged) output.
    pub probabilities: Vec<f64>,
    /// Sampled counts, when the backend samples shots.
    pub record: Option<ShotRecord>,
}

impl Execution {
    /// Weighted mean over outcomes: sampled when shots exist, exact otherwise.
    pub fn estimate(&self, weights: &[f64]) -> f64 {
        match &self.record {
            Some(r) => estimate_from_counts(r, |b| weights[b]),
            None => self.probabilities.iter().zip(weights).map(|(p, w)| p * w).sum(),
        }
    }
}

/// Backend context: noise, sampling mode, optional randomized compiling and
/// a base seed. Every program starts from `|0…0⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Backend {
    pub noise: NoiseModel,
    pub sampling: Sampling,
    /// Randomized-compiling instances per logical program; 0 disables it.
    pub randomizations: usize,
    pub seed: u64,
}

impl Backend {
    pub fn new(noise: NoiseModel, sampling: Sampling, seed: u64) -> Backend {
        Backend { noise, sampling, randomizations: 0, seed }
    }

    pub fn exact(noise: NoiseModel) -> Backend {
        Backend::new(noise, Sampling::Exact, 0)
    }

    pub fn with_randomizations(mut self, count: usize) -> Backend {
        self.randomizations = count;
        self
    }

    /// Runs logical programs in jobs of at most [`MAX_JOB_CIRCUITS`] physical
    /// circuits. `stream` separates the random streams of independent calls.
    ///
    /// With randomized compiling each logical program becomes
    /// `randomizations` freshly compiled instances whose shots are split
    /// evenly and merged.
    pub fn execute(&self, programs: &[Program], stream: u64) -> Result<Vec<Execution>> {
        self.noise.validate()?;
        let base = derive_seed(self.seed, stream);
        let instances = self.randomizations.max(1);
        let mut physical = Vec::with_capacity(programs.len() * instances);
        for (i, p) in programs.iter().enumerate() {
            for r in 0..instances {
                if self.randomizations == 0 {
                    physical.push(p.clone());
                } else {
                    let rseed = derive_seed(base ^ 0x5243_6f00, (i * instances + r) as u64);
                    physical.push(p.randomized_compile(rseed));
                }
            }
        }
        let mut probabilities = Vec::with_capacity(physical.len());
        for job in physical.chunks(MAX_JOB_CIRCUITS) {
            let n = job[0].n_qubits();
            let rho0 = DensityMatrix::basis_state(n, 0)?;
            let identity = Circuit::new(n);
            let states = run_job_exact(job, &self.noise, &rho0)?;
            for rho in &states {
                probabilities.push(measurement_probabilities(rho, &identity)?);
            }
        }
        programs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let own = &probabilities[i * instances..(i + 1) * instances];
                let dim = 1usize << p.n_qubits();
                let mean: Vec<f64> =
                    (0..dim).map(|b| own.iter().map(|pr| pr[b]).sum::<f64>() / instances as f64).collect();
                let record = match self.sampling {
                    Sampling::Exact => None,
                    Sampling::Shots(n_shots) => {
                        let records: Vec<ShotRecord> = own
                            .iter()
                            .enumerate()
                            .filter_map(|(r, pr)| {
                                let share = n_shots / instances as u64 + u64::from((r as u64) < n_shots % instances as u64);
                                (share > 0).then(|| {
                                    sample_probabilities(p.n_qubits(), pr, share, derive_seed(base, (i * instances + r) as u64))
                                })
                            })
                            .collect();
                        Some(ShotRecord::merge(&records)?)
                    }
                };
                Ok(Execution { probabilities: mean, record })
            })
            .collect()
    }
}
