//! Nuisance models: the propensity score and the Gaussian outcome model
//! from which threshold survival `S_k` and tier probabilities `R_k` follow.

pub mod basis;
pub mod outcome;
pub mod propensity;

pub use basis::{Basis, BasisSpec};
pub use outcome::{
    fit_outcome, survival_at, survival_into, tier_probs_from_survival, OutcomeFitter, OutcomeModel,
};
pub use propensity::{fit_propensity, Link, PropensityConfig, PropensityFitter, PropensityModel};

use serde::{Deserialize, Serialize};

use crate::data::ObservationTable;
use crate::error::Result;
use crate::partition::TierPartition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceConfig {
    pub propensity: PropensityConfig,
    pub outcome_basis: BasisSpec,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            propensity: PropensityConfig::default(),
            outcome_basis: BasisSpec::saturated_outcome(),
        }
    }
}

/// Fitted propensity and outcome models. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuisancePair {
    pub propensity: PropensityModel,
    pub outcome: OutcomeModel,
}

/// Threshold survival under each arm at one `(w, x)`: `s0[k-1] = S_k(w,x,0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSurvival {
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
}

impl ArmSurvival {
    pub fn zeros(partition: &TierPartition) -> Self {
        let m = partition.tiers() - 1;
        Self {
            s0: vec![0.0; m],
            s1: vec![0.0; m],
        }
    }

    /// Arms exchanged, which turns benefit integrands into harm integrands.
    pub fn swapped(&self) -> Self {
        Self {
            s0: self.s1.clone(),
            s1: self.s0.clone(),
        }
    }
}

impl NuisancePair {
    pub fn fit(data: &ObservationTable, config: &NuisanceConfig) -> Result<Self> {
        Ok(Self {
            propensity: fit_propensity(data, &config.propensity, None)?,
            outcome: fit_outcome(data, &config.outcome_basis)?,
        })
    }

    pub fn arm_survival(&self, w: &[f64], x: i64, partition: &TierPartition) -> ArmSurvival {
        let mut out = ArmSurvival::zeros(partition);
        self.arm_survival_into(w, x, partition, &mut out);
        out
    }

    pub fn arm_survival_into(&self, w: &[f64], x: i64, partition: &TierPartition, out: &mut ArmSurvival) {
        let o = &self.outcome;
        survival_into(o.mean(w, x, 0), o.sigma, partition.thresholds(), &mut out.s0);
        survival_into(o.mean(w, x, 1), o.sigma, partition.thresholds(), &mut out.s1);
    }

    pub fn nonconverged(&self) -> bool {
        !self.propensity.converged
    }
}
