//! Nonparametric bootstrap over shot records.
//!
//! Resample `r` draws from its own ChaCha stream `r` under the base seed, so
//! results are bit-identical regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::qpu::{multinomial, ShotRecord};

pub const DEFAULT_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapResult {
    /// Mean of the resampled statistic.
    pub mean: f64,
    pub stderr: f64,
    /// 2.5th percentile.
    pub ci_low: f64,
    /// 97.5th percentile.
    pub ci_high: f64,
    pub n_resamples: usize,
}

impl BootstrapResult {
    /// Summary of a sample of statistic values.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid("at least two resamples are required"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(BootstrapResult {
            mean,
            stderr: var.sqrt(),
            ci_low: percentile(&sorted, 0.025),
            ci_high: percentile(&sorted, 0.975),
            n_resamples: values.len(),
        })
    }
}

/// Linear interpolation between order statistics of sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Redraws `n_shots` outcomes with replacement from the empirical
/// distribution of `record`.
pub fn resample<R: rand::Rng + ?Sized>(record: &ShotRecord, rng: &mut R) -> ShotRecord {
    let n = record.n_shots();
    let outcomes: Vec<usize> = record.counts().keys().copied().collect();
    let probs: Vec<f64> = record.counts().values().map(|&c| c as f64 / n as f64).collect();
    let draws = multinomial(n, &probs, rng);
    let counts = outcomes.into_iter().zip(draws).collect();
    ShotRecord::new(record.n_qubits(), counts).expect("outcomes come from a valid record")
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn bootstrap(
    record: &ShotRecord,
    statistic: impl Fn(&ShotRecord) -> f64 + Sync,
    n_resamples: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if record.n_shots() == 0 {
        return Err(Error::EmptyRecord);
    }
    if n_resamples < 2 {
        return Err(Error::invalid("at least two resamples are required"));
    }
    let values: Vec<f64> =
        (0..n_resamples).into_par_iter().map(|r| statistic(&resample(record, &mut stream_rng(seed, r)))).collect();
    BootstrapResult::from_values(&values)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagated {
    /// Pipeline output on the original records.
    pub point: f64,
    pub result: BootstrapResult,
    pub dropped: usize,
    pub drop_rate: f64,
}

/// Jointly resamples every input record and reruns `pipeline` on each draw.
/// Draws on which the pipeline fails are dropped and counted.
pub fn propagate_through_mitigation(
    records: &[ShotRecord],
    pipeline: impl Fn(&[ShotRecord]) -> Result<f64> + Sync,
    n_resamples: usize,
    seed: u64,
) -> Result<Propagated> {
    if records.iter().any(|r| r.n_shots() == 0) {
        return Err(Error::EmptyRecord);
    }
    if n_resamples < 2 {
        return Err(Error::invalid("at least two resamples are required"));
    }
    let point = pipeline(records)?;
    let outcomes: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let drawn: Vec<ShotRecord> = records.iter().map(|rec| resample(rec, &mut rng)).collect();
            pipeline(&drawn).ok().filter(|v| v.is_finite())
        })
        .collect();
    let kept: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let dropped = n_resamples - kept.len();
    if kept.len() < 2 {
        return Err(Error::invalid(format!("pipeline failed on {dropped} of {n_resamples} resamples")));
    }
    Ok(Propagated {
        point,
        result: BootstrapResult::from_values(&kept)?,
        dropped,
        drop_rate: dropped as f64 / n_resamples as f64,
    })
}
