//! Noise-mitigation laboratory built around the global white-noise model.
//!
//! The crate is organised bottom-up:
//!
//! - [`state`]: dense density matrices and observables (qubit 0 is the most
//!   significant bit of a basis index everywhere in this crate).
//! - [`channels`]: Kraus channels, column-stacked superoperators, the global
//!   depolarizing channel and Haar twirling.
//! - [`circuit`]: gate-level circuits with scalar-depth accounting, motion
//!   reversal, folding and randomized compiling.
//! - [`hubbard`]: the two-site Fermi-Hubbard benchmark, product-formula
//!   circuits and an exact time-evolution oracle.
//! - [`qpu`]: the virtual noisy backend.
//! - [`observables`]: electronic overlap and the Bell-basis purity estimator.
//! - [`mitigation`]: white-noise extrapolation (both calibration variants)
//!   and zero-noise extrapolation baselines.
//! - [`bootstrap`]: resampling of shot records.
//! - [`experiment`]: the batch driver used by the `clawe-lab` binary.

pub mod bootstrap;
pub mod channels;
pub mod circuit;
pub mod error;
pub mod experiment;
pub mod hubbard;
pub mod linalg;
pub mod mitigation;
pub mod observables;
pub mod qpu;
pub mod state;

pub use bootstrap::{BootstrapResult, Propagated};
pub use channels::{DepolarizingSpec, KrausChannel, Superoperator};
pub use circuit::{Circuit, Gate};
pub use error::{Error, Result};
pub use hubbard::{FhSchedule, PfaConfig, StepOrdering};
pub use mitigation::{CalibrationRecord, MitigatedEstimate, Method, RescaledObservable};
pub use observables::{DiagonalObservable, RenyiEstimate};
pub use qpu::{Backend, NoiseModel, Program, Sampling, ShotRecord};
pub use state::{DensityMatrix, Observable};

pub use num_complex::Complex64;

/// Dense complex matrix used for states, gates and superoperators.
pub type CMatrix = nalgebra::DMatrix<Complex64>;
