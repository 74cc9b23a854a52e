//! Estimated (uncentered) efficient influence function terms of the bounds.

use serde::Serialize;

use crate::bounds::{tier_prob, Smoother};
use crate::data::Observation;
use crate::error::{Error, Result};
use crate::nuisance::{ArmSurvival, NuisancePair};
use crate::partition::TierPartition;

/// One unit's EIF pieces and the resulting bound corrections.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectionRecord {
    pub unit: usize,
    /// `D^R_k` for `k = 1..K-1`.
    pub d_r: Vec<f64>,
    /// `D^S_k` for `k = 1..K-1`.
    pub d_s: Vec<f64>,
    pub d_lambda: f64,
    pub d_upsilon: f64,
}

/// Plug-in integrands and corrections of one unit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnitValues {
    pub plug: [f64; 2],
    pub correction: [f64; 2],
}

impl UnitValues {
    /// `(Lambda_i + dLambda_i, Upsilon_i + dUpsilon_i)`.
    pub fn corrected(&self) -> [f64; 2] {
        [self.plug[0] + self.correction[0], self.plug[1] + self.correction[1]]
    }
}

fn checked_propensity(nuisance: &NuisancePair, obs: &Observation<'_>) -> Result<f64> {
    let pi = nuisance.propensity.predict(obs.w, obs.x);
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::Positivity(pi));
    }
    Ok(pi)
}

/// Weight of `D^R` and `D^S` in the pieces of each bound at tier `k`
/// (1-based); under `Hard` these are the rules `lambda_k`, `upsilon_k`.
#[inline]
fn rule_weights(arms: &ArmSurvival, k: usize, smoother: Smoother) -> (f64, f64) {
    let r = tier_prob(&arms.s0, k);
    let s = arms.s1[k - 1];
    (smoother.slope(r + s - 1.0), smoother.slope(r - s))
}

pub fn eif_components(
    nuisance: &NuisancePair,
    obs: &Observation<'_>,
    unit: usize,
    partition: &TierPartition,
    smoother: Smoother,
) -> Result<CorrectionRecord> {
    let pi = checked_propensity(nuisance, obs)?;
    let arms = nuisance.arm_survival(obs.w, obs.x, partition);
    let m = arms.s0.len();
    let tier = partition.tier_of(obs.y);
    let (mut d_r, mut d_s) = (vec![0.0; m], vec![0.0; m]);
    let (mut d_lambda, mut d_upsilon) = (0.0, 0.0);
    for k in 1..=m {
        if obs.a == 0 {
            d_r[k - 1] = (f64::from(tier == k - 1) - tier_prob(&arms.s0, k)) / (1.0 - pi);
        } else {
            d_s[k - 1] = (f64::from(tier >= k) - arms.s1[k - 1]) / pi;
        }
        let (lam, ups) = rule_weights(&arms, k, smoother);
        d_lambda += (d_r[k - 1] + d_s[k - 1]) * lam;
        d_upsilon += d_r[k - 1] - (d_r[k - 1] - d_s[k - 1]) * ups;
    }
    Ok(CorrectionRecord {
        unit,
        d_r,
        d_s,
        d_lambda,
        d_upsilon,
    })
}

/// Same quantities as [`eif_components`] plus the plug-in integrands, with
/// caller-provided scratch space.
pub fn unit_values(
    nuisance: &NuisancePair,
    obs: &Observation<'_>,
    partition: &TierPartition,
    smoother: Smoother,
    arms: &mut ArmSurvival,
) -> Result<UnitValues> {
    let pi = checked_propensity(nuisance, obs)?;
    nuisance.arm_survival_into(obs.w, obs.x, partition, arms);
    let tier = partition.tier_of(obs.y);
    let mut v = UnitValues::default();
    for k in 1..=arms.s0.len() {
        let r = tier_prob(&arms.s0, k);
        let s = arms.s1[k - 1];
        v.plug[0] += smoother.ramp(r + s - 1.0);
        v.plug[1] += r - smoother.ramp(r - s);
        let (dr, ds) = if obs.a == 0 {
            ((f64::from(tier == k - 1) - r) / (1.0 - pi), 0.0)
        } else {
            (0.0, (f64::from(tier >= k) - s) / pi)
        };
        let (lam, ups) = rule_weights(arms, k, smoother);
        v.correction[0] += (dr + ds) * lam;
        v.correction[1] += dr - (dr - ds) * ups;
    }
    Ok(v)
}
