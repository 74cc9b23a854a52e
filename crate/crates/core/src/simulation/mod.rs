//! Benchmark data-generating process, its ground truth, and the
//! non-identifiability witness.

pub mod oracle;
pub mod scm;
pub mod witness;

pub use oracle::{oracle_truth, oracle_truth_with, quadrature_truth, OracleResult, QuadratureTruth};
pub use scm::{immune_subgroup_check, simulate, simulate_with, ScmParams, ScmSample};
pub use witness::{nonidentifiability_witness, CounterfactualCellMatrix, Witness};
