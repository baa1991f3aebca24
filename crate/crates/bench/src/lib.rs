//! Shared fixtures for the criterion benches.

use clawe_core::hubbard::{pfa_evolution, FhSchedule, PfaConfig};
use clawe_core::{Circuit, DensityMatrix};

/// Full 10-step benchmark evolution (scalar depth 20).
pub fn benchmark_circuit() -> Circuit {
    pfa_evolution(&FhSchedule::default(), &PfaConfig::default(), 10).expect("default benchmark")
}

/// `|++⟩`, the benchmark's initial state.
pub fn plus_plus() -> DensityMatrix {
    DensityMatrix::pure_state(&[clawe_core::Complex64::new(0.5, 0.0); 4]).expect("valid state")
}
