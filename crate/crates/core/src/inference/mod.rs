//! Correction layer: influence-function terms, one-step and stabilized
//! one-step estimators, uncertainty regions and the coverage study.

pub mod benchmark;
pub mod eif;
pub mod one_step;
pub mod region;
pub mod s1s;

pub use crate::linalg::matrix_inv_sqrt;
pub use benchmark::{coverage_benchmark, BenchmarkConfig, BenchmarkReport, BenchmarkRow, EstimatorKind, Profile};
pub use eif::{eif_components, unit_values, CorrectionRecord, UnitValues};
pub use one_step::{corrected_bounds, one_step, one_step_gelu, one_step_split, split_sample};
pub use region::{uncertainty_region, UncertaintyRegion};
pub use s1s::{s1s, S1sConfig, S1sDiagnostics, S1sResult, StabilizerState};
