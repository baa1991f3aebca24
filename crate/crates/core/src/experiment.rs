//! Batch experiment driver.
//!
//! A run builds every circuit the experiment needs (targets, calibration
//! circuits, folded variants), executes them in one batch on the virtual
//! backend and then evaluates each mitigation recipe per benchmark step. With
//! shots enabled every recipe is bootstrapped by jointly resampling all
//! records it reads.
//!
//! # Config format
//!
//! Line-oriented `key = value` pairs, optional `[section]` headers and `#`
//! comments:
//!
//! ```text
//! experiment = overlap        # overlap | renyi | calibrate-v1 | calibrate-v2 | zne
//!
//! [schedule]
//! u_tilde = 2.0               # constant interaction, or
//! # breakpoints = 0:2.0, 1:4.0, 2:2.0
//! t_final = 2.0
//!
//! [pfa]
//! steps = 10
//! n_t = 1
//! ordering = 01z
//!
//! [noise]
//! model = global-constant     # ideal | global-constant | global-vector | local
//! epsilon = 0.02
//! # segments = 10:0.01, 10:0.04   (global-vector: slot count : strength)
//! # p = 0.02                      (local: two-qubit depolarizing strength)
//! # phi = 0.1                     (local: ZZ over-rotation angle)
//!
//! [run]
//! n_shots = 8192
//! seed = 1
//! shot_free = false
//! n_resamples = 1000
//!
//! [mitigation]
//! n_c = 3
//! window = 1                  # integer or `all`
//! # boundaries = 5            (Variant II fragment starts, in steps)
//!
//! [rco]
//! randomizations = 0
//!
//! [digitization]
//! samples = 0
//!
//! [output]
//! path = results.csv
//! ```

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bootstrap::{propagate_through_mitigation, DEFAULT_RESAMPLES};
use crate::circuit::Circuit;
use crate::error::{Error, Result};
use crate::hubbard::{
    self, digitization_error, digitization_renyi, exact_evolution, DigitizationBand, FhSchedule, PfaConfig,
    StepOrdering, DEFAULT_FINE_STEPS,
};
use crate::mitigation::{
    fill_epsilon_vector, ideal_map, ideal_map_vector, variant1_from_values, variant1_programs, variant2_from_values,
    variant2_programs, zne_estimates, zne_programs, CalibrationRecord, CalibrationSetup, MitigatedEstimate, Method,
};
use crate::observables::{self, DiagonalObservable};
use crate::qpu::{derive_seed, estimate_from_counts, Backend, Execution, NoiseModel, Program, Sampling};
use crate::state::DensityMatrix;
use crate::Complex64;

pub const DEFAULT_SHOTS: u64 = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Overlap,
    Renyi,
    CalibrateV1,
    CalibrateV2,
    Zne,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Overlap => "overlap",
            ExperimentKind::Renyi => "renyi",
            ExperimentKind::CalibrateV1 => "calibrate-v1",
            ExperimentKind::CalibrateV2 => "calibrate-v2",
            ExperimentKind::Zne => "zne",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "overlap" => ExperimentKind::Overlap,
            "renyi" => ExperimentKind::Renyi,
            "calibrate-v1" => ExperimentKind::CalibrateV1,
            "calibrate-v2" => ExperimentKind::CalibrateV2,
            "zne" => ExperimentKind::Zne,
            other => return Err(Error::config("experiment", format!("unknown experiment `{other}`"))),
        })
    }
}

impl ExperimentKind {
    fn runs_v1(self) -> bool {
        matches!(self, ExperimentKind::Overlap | ExperimentKind::Renyi | ExperimentKind::CalibrateV1)
    }

    fn runs_v2(self) -> bool {
        matches!(self, ExperimentKind::Overlap | ExperimentKind::Renyi | ExperimentKind::CalibrateV2)
    }

    fn runs_zne(self) -> bool {
        matches!(self, ExperimentKind::Overlap | ExperimentKind::Renyi | ExperimentKind::Zne)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub schedule: FhSchedule,
    pub pfa: PfaConfig,
    pub noise: NoiseModel,
    pub n_shots: u64,
    pub seed: u64,
    pub shot_free: bool,
    pub n_resamples: usize,
    pub n_c: usize,
    /// `usize::MAX` means every predecessor.
    pub window: usize,
    /// Steps at which Variant II fragments start (besides step 0).
    pub boundaries: Vec<usize>,
    pub randomizations: usize,
    pub digitization_samples: usize,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let pfa = PfaConfig::default();
        ExperimentConfig {
            experiment: ExperimentKind::Overlap,
            schedule: FhSchedule::default(),
            boundaries: (1..pfa.n_steps).collect(),
            pfa,
            noise: NoiseModel::Ideal,
            n_shots: DEFAULT_SHOTS,
            seed: 0,
            shot_free: false,
            n_resamples: DEFAULT_RESAMPLES,
            n_c: 3,
            window: 1,
            randomizations: 0,
            digitization_samples: 0,
            output: None,
        }
    }
}

fn parse_num<T: FromStr>(field: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| Error::config(field, format!("`{value}`: {e}")))
}

fn parse_pairs(field: &str, value: &str) -> Result<Vec<(String, String)>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            item.split_once(':')
                .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                .ok_or_else(|| Error::config(field, format!("expected `a:b`, got `{item}`")))
        })
        .collect()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut section = String::new();
        let mut u_const: Option<f64> = None;
        let mut breakpoints: Option<Vec<(f64, f64)>> = None;
        let mut t_final = cfg.schedule.t_final;
        let (mut steps, mut n_t, mut ordering) = (cfg.pfa.n_steps, cfg.pfa.n_t, cfg.pfa.ordering);
        let mut model = String::from("ideal");
        let mut epsilon: Option<f64> = None;
        let mut segments: Option<Vec<(usize, f64)>> = None;
        let (mut p_local, mut phi) = (None::<f64>, 0.0);
        let mut boundaries: Option<Vec<usize>> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: lineno + 1, message: format!("expected `key = value`: {line}") })?;
            let (key, value) = (key.trim(), value.trim());
            let field = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            let f = field.as_str();
            match f {
                "experiment" => cfg.experiment = value.parse()?,
                "schedule.u_tilde" => u_const = Some(parse_num(f, value)?),
                "schedule.breakpoints" => {
                    breakpoints = Some(
                        parse_pairs(f, value)?
                            .iter()
                            .map(|(a, b)| Ok((parse_num(f, a)?, parse_num(f, b)?)))
                            .collect::<Result<_>>()?,
                    )
                }
                "schedule.t_final" => t_final = parse_num(f, value)?,
                "pfa.steps" => steps = parse_num(f, value)?,
                "pfa.n_t" => n_t = parse_num(f, value)?,
                "pfa.ordering" => ordering = value.parse::<StepOrdering>().map_err(|e| Error::config(f, e.to_string()))?,
                "noise.model" => model = value.to_string(),
                "noise.epsilon" => epsilon = Some(parse_num(f, value)?),
                "noise.segments" => {
                    segments = Some(
                        parse_pairs(f, value)?
                            .iter()
                            .map(|(a, b)| Ok((parse_num(f, a)?, parse_num(f, b)?)))
                            .collect::<Result<_>>()?,
                    )
                }
                "noise.p" => p_local = Some(parse_num(f, value)?),
                "noise.phi" => phi = parse_num(f, value)?,
                "run.n_shots" => cfg.n_shots = parse_num(f, value)?,
                "run.seed" => cfg.seed = parse_num(f, value)?,
                "run.shot_free" => cfg.shot_free = parse_num(f, value)?,
                "run.n_resamples" => cfg.n_resamples = parse_num(f, value)?,
                "mitigation.n_c" => cfg.n_c = parse_num(f, value)?,
                "mitigation.window" => {
                    cfg.window = if value == "all" { usize::MAX } else { parse_num(f, value)? }
                }
                "mitigation.boundaries" => {
                    boundaries = Some(
                        value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse_num(f, s)).collect::<Result<_>>()?,
                    )
                }
                "rco.randomizations" => cfg.randomizations = parse_num(f, value)?,
                "digitization.samples" => cfg.digitization_samples = parse_num(f, value)?,
                "output.path" => cfg.output = Some(PathBuf::from(value)),
                _ => return Err(Error::config(f, "unknown key")),
            }
        }

        cfg.schedule = match (u_const, breakpoints) {
            (Some(_), Some(_)) => {
                return Err(Error::config("schedule", "give either u_tilde or breakpoints, not both"))
            }
            (_, Some(points)) => FhSchedule::piecewise_linear(points, t_final),
            (u, None) => FhSchedule::constant(u.unwrap_or(2.0), t_final),
        }
        .map_err(|e| Error::config("schedule", e.to_string()))?;
        cfg.pfa = PfaConfig::new(steps, n_t, ordering).map_err(|e| Error::config("pfa", e.to_string()))?;
        let need = |name: &str, v: Option<f64>| v.ok_or_else(|| Error::config(name, format!("required by model `{model}`")));
        cfg.noise = match model.as_str() {
            "ideal" => NoiseModel::Ideal,
            "global-constant" => {
                let eps = need("noise.epsilon", epsilon)?;
                if !(0.0..=1.0).contains(&eps) {
                    return Err(Error::config("noise.epsilon", format!("{eps} outside [0, 1]")));
                }
                NoiseModel::GlobalConstant(eps)
            }
            "global-vector" => {
                let seg = segments.ok_or_else(|| Error::config("noise.segments", "required by model `global-vector`"))?;
                NoiseModel::piecewise(&seg).map_err(|e| Error::config("noise.segments", e.to_string()))?
            }
            "local" => NoiseModel::local_default(need("noise.p", p_local)?, phi)
                .map_err(|e| Error::config("noise.p", e.to_string()))?,
            other => return Err(Error::config("noise.model", format!("unknown model `{other}`"))),
        };
        cfg.boundaries = boundaries.unwrap_or_else(|| (1..cfg.pfa.n_steps).collect());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate().map_err(|e| Error::config("noise", e.to_string()))?;
        if let NoiseModel::GlobalVector(v) = &self.noise {
            let slots = 2 * self.pfa.n_t * self.pfa.n_steps;
            if v.len() < slots {
                return Err(Error::config("noise.segments", format!("covers {} slots, the benchmark has {slots}", v.len())));
            }
        }
        if self.n_shots < 1 {
            return Err(Error::config("run.n_shots", "must be at least 1"));
        }
        if self.n_resamples < 2 {
            return Err(Error::config("run.n_resamples", "must be at least 2"));
        }
        if self.n_c < 1 {
            return Err(Error::config("mitigation.n_c", "must be at least 1"));
        }
        let b = &self.boundaries;
        if b.windows(2).any(|w| w[1] <= w[0]) || b.iter().any(|&s| s < 1 || s >= self.pfa.n_steps) {
            return Err(Error::config("mitigation.boundaries", format!("must increase strictly within 1..{}", self.pfa.n_steps)));
        }
        Ok(())
    }

    pub fn sampling(&self) -> Sampling {
        if self.shot_free {
            Sampling::Exact
        } else {
            Sampling::Shots(self.n_shots)
        }
    }

    pub fn backend(&self) -> Backend {
        Backend::new(self.noise.clone(), self.sampling(), self.seed).with_randomizations(self.randomizations)
    }
}

impl FromStr for ExperimentConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentConfig::parse(s)
    }
}

/// Which benchmark a run measures and how raw values become reported ones.
struct Benchmark {
    renyi: bool,
    prep: Circuit,
    observable: DiagonalObservable,
    calibration: CalibrationSetup,
}

impl Benchmark {
    fn new(kind: ExperimentKind) -> Result<Self> {
        let renyi = kind == ExperimentKind::Renyi;
        let n = if renyi { 4 } else { 2 };
        let prep = Circuit::from_gates(n, (0..n).map(crate::circuit::Gate::H).collect())?;
        let observable =
            if renyi { DiagonalObservable::singlet_probability() } else { DiagonalObservable::electronic_overlap() };
        let calibration = CalibrationSetup::new(prep.clone(), DiagonalObservable::x_parity(n, 0, 1)?)?;
        Ok(Benchmark { renyi, prep, observable, calibration })
    }

    fn n_qubits(&self) -> usize {
        self.prep.n_qubits()
    }

    fn body(&self, base: &Program) -> Result<Program> {
        if self.renyi {
            observables::bba_program(base)
        } else {
            Ok(base.clone())
        }
    }

    fn fragment_body(&self, base: &Program) -> Result<Program> {
        if self.renyi {
            observables::two_copies(base)
        } else {
            Ok(base.clone())
        }
    }

    fn wrap(&self, body: &Program) -> Result<Program> {
        self.observable.measured(&body.after_local(&self.prep)?)
    }

    /// Reported quantity from the raw measured value.
    fn value(&self, raw: f64) -> Result<f64> {
        if self.renyi {
            Ok(observables::RenyiEstimate::from_purity(1.0 - 2.0 * raw)?.entropy)
        } else {
            Ok(raw)
        }
    }

    fn exact(&self, rho: &DensityMatrix) -> Result<f64> {
        if self.renyi {
            Ok(observables::renyi_direct(rho)?.entropy)
        } else {
            rho.expectation(&observables::electronic_overlap())
        }
    }

    fn physical_range(&self) -> (f64, f64) {
        if self.renyi {
            (0.0, std::f64::consts::LN_2 / 2.0)
        } else {
            (0.0, 1.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub step: usize,
    pub chi: usize,
    pub ideal: f64,
    pub pfa: f64,
    pub noisy: Option<Estimate>,
    pub clawe1: Option<Estimate>,
    pub clawe2: Option<Estimate>,
    pub zne_poly: Option<Estimate>,
    pub zne_rich: Option<Estimate>,
    pub within_pnr: bool,
    pub beyond_cutoff: bool,
    /// Methods whose value lies outside the physical range.
    pub clipped: Vec<String>,
    pub digitization: Option<DigitizationBand>,
}

impl Row {
    pub fn estimate(&self, method: Method) -> Option<Estimate> {
        match method {
            Method::ClaweI => self.clawe1,
            Method::ClaweII => self.clawe2,
            Method::ZnePoly => self.zne_poly,
            Method::ZneRichardson => self.zne_rich,
        }
    }

    pub fn mitigated(&self, method: Method, n_qubits: usize, eps: f64) -> Option<MitigatedEstimate> {
        self.estimate(method).map(|e| MitigatedEstimate::new(e.value, e.err, method, self.chi, n_qubits, eps))
    }
}

pub const CSV_HEADER: &str = "step,chi,ideal,pfa,noisy,noisy_err,clawe1,clawe1_err,clawe2,clawe2_err,\
zne_poly,zne_poly_err,zne_rich,zne_rich_err,within_pnr,beyond_cutoff,clipped,digi_min,digi_max,digi_std";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<Row>,
}

fn push_estimate(out: &mut String, e: &Option<Estimate>) {
    match e {
        Some(e) => {
            let _ = write!(out, ",{},{}", e.value, e.err);
        }
        None => out.push_str(",,"),
    }
}

fn parse_opt_f64(field: &str, line: usize) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    field.parse().map(Some).map_err(|e: std::num::ParseFloatError| Error::Parse { line, message: e.to_string() })
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.step, r.chi, r.ideal, r.pfa);
            for e in [&r.noisy, &r.clawe1, &r.clawe2, &r.zne_poly, &r.zne_rich] {
                push_estimate(&mut out, e);
            }
            let _ = write!(out, ",{},{},{}", r.within_pnr, r.beyond_cutoff, r.clipped.join(";"));
            match &r.digitization {
                Some(d) => {
                    let _ = write!(out, ",{},{},{}", d.min, d.max, d.std_dev);
                }
                None => out.push_str(",,,"),
            }
            out.push('\n');
        }
        out
    }

    /// Inverse of [`ResultTable::to_csv`]. The digitization mean is not
    /// stored and is restored as the band midpoint.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: "missing or unexpected header".into() }),
        }
        let mut rows = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 20 {
                return Err(Error::Parse { line: lineno, message: format!("expected 20 fields, found {}", f.len()) });
            }
            let req = |s: &str| parse_opt_f64(s, lineno)?.ok_or(Error::Parse { line: lineno, message: "missing value".into() });
            let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse { line: lineno, message: e.to_string() });
            let boolean = |s: &str| s.parse::<bool>().map_err(|e| Error::Parse { line: lineno, message: e.to_string() });
            let est = |k: usize| -> Result<Option<Estimate>> {
                Ok(match (parse_opt_f64(f[k], lineno)?, parse_opt_f64(f[k + 1], lineno)?) {
                    (Some(value), Some(err)) => Some(Estimate { value, err }),
                    _ => None,
                })
            };
            let step = int(f[0])?;
            let digitization = match (parse_opt_f64(f[17], lineno)?, parse_opt_f64(f[18], lineno)?, parse_opt_f64(f[19], lineno)?) {
                (Some(min), Some(max), Some(std_dev)) => {
                    Some(DigitizationBand { step, min, max, mean: 0.5 * (min + max), std_dev })
                }
                _ => None,
            };
            rows.push(Row {
                step,
                chi: int(f[1])?,
                ideal: req(f[2])?,
                pfa: req(f[3])?,
                noisy: est(4)?,
                clawe1: est(6)?,
                clawe2: est(8)?,
                zne_poly: est(10)?,
                zne_rich: est(12)?,
                within_pnr: boolean(f[14])?,
                beyond_cutoff: boolean(f[15])?,
                clipped: f[16].split(';').filter(|s| !s.is_empty()).map(String::from).collect(),
                digitization,
            });
        }
        Ok(ResultTable { rows })
    }
}

pub fn emit_csv(table: &ResultTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: ResultTable,
    /// Full-target Variant I record (`calibrate-v1`) or the fragment record
    /// (`calibrate-v2`, `overlap`, `renyi`).
    pub calibration: Option<CalibrationRecord>,
    pub warnings: Vec<String>,
}

/// Target circuit of the full benchmark as executed, including preparation
/// and the measurement basis change.
pub fn target_circuit(cfg: &ExperimentConfig) -> Result<Circuit> {
    let bench = Benchmark::new(cfg.experiment)?;
    let base = Program::new(hubbard::pfa_evolution(&cfg.schedule, &cfg.pfa, cfg.pfa.n_steps)?);
    Ok(bench.wrap(&bench.body(&base)?)?.circuit().clone())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let steps: Vec<usize> = (1..=cfg.pfa.n_steps).collect();
    run_steps(cfg, &steps)
}

/// Single table row; step 0 is the prepared state with no evolution.
pub fn run_step(cfg: &ExperimentConfig, step: usize) -> Result<Row> {
    Ok(run_steps(cfg, &[step])?.table.rows.remove(0))
}

struct Evaluator {
    execs: Vec<Execution>,
    shot_free: bool,
    n_resamples: usize,
}

impl Evaluator {
    /// Applies `recipe` to the measured values of `inputs`; with shots the
    /// error bar comes from a joint bootstrap over the same records.
    fn estimate(&self, inputs: &[(usize, &[f64])], seed: u64, recipe: impl Fn(&[f64]) -> Result<f64> + Sync) -> Estimate {
        let nan = Estimate { value: f64::NAN, err: f64::NAN };
        if self.shot_free {
            let values: Vec<f64> = inputs.iter().map(|&(i, w)| self.execs[i].estimate(w)).collect();
            return recipe(&values).map(|value| Estimate { value, err: 0.0 }).unwrap_or(nan);
        }
        let records: Vec<_> =
            inputs.iter().map(|&(i, _)| self.execs[i].record.clone().expect("shots were sampled")).collect();
        let weights: Vec<&[f64]> = inputs.iter().map(|&(_, w)| w).collect();
        let pipeline = |recs: &[crate::qpu::ShotRecord]| {
            let values: Vec<f64> = recs.iter().zip(&weights).map(|(r, w)| estimate_from_counts(r, |b| w[b])).collect();
            recipe(&values)
        };
        match propagate_through_mitigation(&records, pipeline, self.n_resamples, seed) {
            Ok(p) => Estimate { value: p.point, err: p.result.stderr },
            Err(_) => nan,
        }
    }

    fn point(&self, inputs: &[(usize, &[f64])], recipe: impl Fn(&[f64]) -> Result<f64>) -> Option<f64> {
        let values: Vec<f64> = inputs.iter().map(|&(i, w)| self.execs[i].estimate(w)).collect();
        recipe(&values).ok()
    }
}

struct StepPlan {
    step: usize,
    body: Program,
    target: usize,
    v1: Option<std::ops::Range<usize>>,
    zne: Option<std::ops::Range<usize>>,
}

fn nominal_epsilon(noise: &NoiseModel) -> f64 {
    match noise {
        NoiseModel::Ideal => 0.0,
        NoiseModel::GlobalConstant(e) => *e,
        NoiseModel::GlobalVector(v) => v.iter().sum::<f64>() / v.len().max(1) as f64,
        NoiseModel::LocalAfterCnot { .. } => 0.0,
    }
}

fn run_steps(cfg: &ExperimentConfig, steps: &[usize]) -> Result<Report> {
    cfg.validate()?;
    if let Some(&s) = steps.iter().find(|&&s| s > cfg.pfa.n_steps) {
        return Err(Error::config("pfa.steps", format!("step {s} exceeds {}", cfg.pfa.n_steps)));
    }
    let kind = cfg.experiment;
    let bench = &Benchmark::new(kind)?;
    let its = bench.observable.its_value();
    let calib_weights = bench.calibration.observable.weights();
    let target_weights = bench.observable.weights();
    let mut warnings = Vec::new();

    // Circuit plan.
    let mut programs: Vec<Program> = Vec::new();
    let mut plans = Vec::with_capacity(steps.len());
    for &step in steps {
        let base = Program::new(hubbard::pfa_evolution(&cfg.schedule, &cfg.pfa, step)?);
        let body = bench.body(&base)?;
        let target = programs.len();
        programs.push(bench.wrap(&body)?);
        let v1 = (kind.runs_v1() && body.scalar_depth() > 0).then_some(()).map(|_| -> Result<_> {
            let start = programs.len();
            programs.extend(variant1_programs(&body, &bench.calibration, cfg.n_c)?);
            Ok(start..programs.len())
        });
        let v1 = v1.transpose()?;
        let zne = kind.runs_zne().then_some(()).map(|_| -> Result<_> {
            let start = programs.len();
            for folded in zne_programs(&body)? {
                programs.push(bench.wrap(&folded)?);
            }
            Ok(start..programs.len())
        });
        let zne = zne.transpose()?;
        plans.push(StepPlan { step, body, target, v1, zne });
    }

    let full = Program::new(hubbard::pfa_evolution(&cfg.schedule, &cfg.pfa, cfg.pfa.n_steps)?);
    let mut fragments = Vec::new();
    let mut v2_range = None;
    if kind.runs_v2() {
        let g = cfg.pfa.gates_per_step();
        let gate_bounds: Vec<usize> = cfg.boundaries.iter().map(|s| s * g).collect();
        for part in full.fragment(&gate_bounds)? {
            fragments.push(bench.fragment_body(&part)?);
        }
        let start = programs.len();
        programs.extend(variant2_programs(&fragments, cfg.window, &bench.calibration)?);
        v2_range = Some(start..programs.len());
    }
    let mut v1_full = None;
    if kind == ExperimentKind::CalibrateV1 {
        let start = programs.len();
        programs.extend(variant1_programs(&bench.body(&full)?, &bench.calibration, cfg.n_c)?);
        v1_full = Some(start..programs.len());
    }

    let execs = cfg.backend().execute(&programs, 0)?;
    let ideal_targets: Vec<Program> = plans.iter().map(|p| programs[p.target].clone()).collect();
    let ideal_execs = Backend::exact(NoiseModel::Ideal).execute(&ideal_targets, 0)?;
    let eval = Evaluator { execs, shot_free: cfg.shot_free, n_resamples: cfg.n_resamples };

    // Calibration summaries on the point estimates.
    let chis: Vec<usize> = fragments.iter().map(Program::scalar_depth).collect();
    let v2_inputs: Vec<(usize, &[f64])> = v2_range.clone().map(|r| r.map(|i| (i, calib_weights)).collect()).unwrap_or_default();
    let v2_values: Vec<f64> = v2_inputs.iter().map(|&(i, w)| eval.execs[i].estimate(w)).collect();
    let mut calibration = None;
    if v2_range.is_some() {
        match variant2_from_values(&chis, &v2_values, &bench.calibration) {
            Ok(rec) => {
                warnings.extend(rec.warnings.iter().cloned());
                calibration = Some(CalibrationRecord { seed: cfg.seed, n_shots: shots(cfg), ..rec });
            }
            Err(e) => warnings.push(format!("variant II calibration failed: {e}")),
        }
    }
    if let Some(r) = v1_full.clone() {
        let values: Vec<f64> = r.map(|i| eval.execs[i].estimate(calib_weights)).collect();
        let rec = variant1_from_values(bench.body(&full)?.scalar_depth(), &values, &bench.calibration)?;
        warnings.extend(rec.warnings.iter().cloned());
        calibration = Some(CalibrationRecord { seed: cfg.seed, n_shots: shots(cfg), ..rec });
    }

    let digitization = if cfg.digitization_samples >= 2 {
        let seed = derive_seed(cfg.seed, 0xD1);
        Some(if bench.renyi {
            digitization_renyi(&cfg.schedule, &cfg.pfa, cfg.digitization_samples, seed)?
        } else {
            digitization_error(&cfg.schedule, &cfg.pfa, &observables::electronic_overlap(), cfg.digitization_samples, seed)?
        })
    } else {
        None
    };

    let plus = DensityMatrix::pure_state(&[Complex64::new(0.5, 0.0); 4])?;
    let step_duration = cfg.pfa.step_duration(&cfg.schedule);
    let mut rows = Vec::with_capacity(plans.len());
    for plan in &plans {
        let chi = plan.body.scalar_depth();
        let u = exact_evolution(&cfg.schedule, plan.step as f64 * step_duration, DEFAULT_FINE_STEPS)?;
        let ideal = bench.exact(&plus.apply_unitary(&u)?)?;
        let pfa = bench.value(ideal_execs[rows.len()].estimate(target_weights))?;
        let seed = |m: u64| derive_seed(cfg.seed, 0x1000 + 8 * plan.step as u64 + m);
        let target_in = (plan.target, target_weights);

        let noisy = eval.estimate(&[target_in], seed(0), |v| bench.value(v[0]));

        let unmitigated = |v: &[f64]| bench.value(v[0]);
        let clawe1 = if !kind.runs_v1() {
            None
        } else if let Some(r) = &plan.v1 {
            let mut inputs = vec![target_in];
            inputs.extend(r.clone().map(|i| (i, calib_weights)));
            let body_chi = chi;
            let recipe = |v: &[f64]| {
                let eps = variant1_from_values(body_chi, &v[1..], &bench.calibration)?.aggregate()?;
                bench.value(its + ideal_map(v[0] - its, eps, body_chi)?)
            };
            Some(eval.estimate(&inputs, seed(1), recipe))
        } else {
            Some(eval.estimate(&[target_in], seed(1), unmitigated))
        };

        let clawe2 = if !kind.runs_v2() {
            None
        } else if chi == 0 {
            Some(eval.estimate(&[target_in], seed(2), unmitigated))
        } else {
            let mut inputs = vec![target_in];
            inputs.extend(v2_inputs.iter().copied());
            let slots = plan.body.slots().to_vec();
            let recipe = |v: &[f64]| {
                let rec = variant2_from_values(&chis, &v[1..], &bench.calibration)?;
                let eps = slot_epsilons(&fragments, &fill_epsilon_vector(&rec.epsilon_vector(fragments.len()))?);
                let per_gate: Vec<(f64, usize)> =
                    slots.iter().map(|&s| eps.get(s).copied().flatten().map(|e| (e, 1))).collect::<Option<_>>().ok_or(Error::CalibrationFailed)?;
                bench.value(its + ideal_map_vector(v[0] - its, &per_gate)?)
            };
            Some(eval.estimate(&inputs, seed(2), recipe))
        };

        let (zne_poly, zne_rich) = match &plan.zne {
            Some(r) => {
                let inputs: Vec<(usize, &[f64])> = r.clone().map(|i| (i, target_weights)).collect();
                let pick = |which: usize| {
                    move |v: &[f64]| {
                        let (poly, rich) = zne_estimates(&[v[0], v[1], v[2], v[3]])?;
                        bench.value(if which == 0 { poly } else { rich })
                    }
                };
                (Some(eval.estimate(&inputs, seed(3), pick(0))), Some(eval.estimate(&inputs, seed(4), pick(1))))
            }
            None => (None, None),
        };

        // Viability flags from the calibrated noise strength when available.
        let eps_hint = plan
            .v1
            .as_ref()
            .and_then(|r| {
                let mut inputs = vec![target_in];
                inputs.extend(r.clone().map(|i| (i, calib_weights)));
                eval.point(&inputs, |v| variant1_from_values(chi, &v[1..], &bench.calibration)?.aggregate())
            })
            .or_else(|| calibration.as_ref().and_then(|c| c.aggregate().ok()))
            .unwrap_or_else(|| nominal_epsilon(&cfg.noise));
        let flags = MitigatedEstimate::new(0.0, 0.0, Method::ClaweI, chi, bench.n_qubits(), eps_hint);

        let (lo, hi) = bench.physical_range();
        let clipped = [("noisy", Some(noisy)), ("clawe1", clawe1), ("clawe2", clawe2), ("zne_poly", zne_poly), ("zne_rich", zne_rich)]
            .into_iter()
            .filter(|(_, e)| e.is_some_and(|e| e.value < lo || e.value > hi))
            .map(|(n, _)| n.to_string())
            .collect();

        rows.push(Row {
            step: plan.step,
            chi,
            ideal,
            pfa,
            noisy: Some(noisy),
            clawe1,
            clawe2,
            zne_poly,
            zne_rich,
            within_pnr: flags.within_pnr,
            beyond_cutoff: flags.beyond_cutoff,
            clipped,
            digitization: digitization.as_ref().and_then(|d| plan.step.checked_sub(1).map(|i| d[i])),
        });
    }
    Ok(Report { table: ResultTable { rows }, calibration, warnings })
}

fn shots(cfg: &ExperimentConfig) -> Option<u64> {
    (!cfg.shot_free).then_some(cfg.n_shots)
}

/// Per-slot noise strength from fragment estimates.
fn slot_epsilons(fragments: &[Program], eps: &[f64]) -> Vec<Option<f64>> {
    let max_slot = fragments.iter().flat_map(|f| f.slots().iter().copied()).max().map_or(0, |m| m + 1);
    let mut out = vec![None; max_slot];
    for (frag, &e) in fragments.iter().zip(eps) {
        for &s in frag.slots() {
            out[s] = Some(e);
        }
    }
    out
}
