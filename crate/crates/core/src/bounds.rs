//! Identification layer: Fréchet integrands for the bounds on the
//! probability of tiered benefit (and harm), their stratum averages, and
//! the individualized rules that select the active branch of each kink.

use serde::Serialize;

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::linalg::{sample_cov2, Sym2};
use crate::normal;
use crate::nuisance::{survival_at, ArmSurvival, NuisancePair};
use crate::partition::TierPartition;

/// How the kinks `max{0, u}` and `min{a, b} = a - max{0, a - b}` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoother {
    Hard,
    /// `max{0, u}` replaced by `gelu(u, h) = u * Phi(u / h)`.
    Gelu { h: f64 },
}

impl Smoother {
    #[inline]
    pub fn ramp(self, u: f64) -> f64 {
        match self {
            Smoother::Hard => u.max(0.0),
            Smoother::Gelu { h } => gelu(u, h),
        }
    }

    /// Derivative of [`Smoother::ramp`]; for `Hard` the strict indicator `u > 0`.
    #[inline]
    pub fn slope(self, u: f64) -> f64 {
        match self {
            Smoother::Hard => f64::from(u > 0.0),
            Smoother::Gelu { h } => gelu_slope(u, h),
        }
    }
}

#[inline]
pub fn gelu(u: f64, h: f64) -> f64 {
    u * normal::cdf(u / h)
}

/// `d/du gelu(u, h) = Phi(u/h) + (u/h) phi(u/h)`.
#[inline]
pub fn gelu_slope(u: f64, h: f64) -> f64 {
    let z = u / h;
    normal::cdf(z) + z * normal::pdf(z)
}

/// Tier probability `R_k` (1-based `k`) from survival values.
#[inline]
pub fn tier_prob(s: &[f64], k: usize) -> f64 {
    survival_at(s, k - 1) - survival_at(s, k)
}

/// Per-unit integrands of the lower and upper bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitBoundContribution {
    /// `max{0, R_k(w,x,0) + S_k(w,x,1) - 1}` for `k = 1..K-1`.
    pub lambda_terms: Vec<f64>,
    /// `min{R_k(w,x,0), S_k(w,x,1)}` for `k = 1..K-1`.
    pub upsilon_terms: Vec<f64>,
    pub lambda: f64,
    pub upsilon: f64,
}

impl UnitBoundContribution {
    pub fn from_survival(arms: &ArmSurvival, smoother: Smoother) -> Self {
        let m = arms.s0.len();
        let mut lambda_terms = Vec::with_capacity(m);
        let mut upsilon_terms = Vec::with_capacity(m);
        for k in 1..=m {
            let r = tier_prob(&arms.s0, k);
            let s = arms.s1[k - 1];
            lambda_terms.push(smoother.ramp(r + s - 1.0));
            upsilon_terms.push(r - smoother.ramp(r - s));
        }
        Self {
            lambda: lambda_terms.iter().sum(),
            upsilon: upsilon_terms.iter().sum(),
            lambda_terms,
            upsilon_terms,
        }
    }
}

/// `(Lambda_i, Upsilon_i)` without allocating.
#[inline]
pub fn unit_bound_sums(arms: &ArmSurvival, smoother: Smoother) -> (f64, f64) {
    let (mut lo, mut up) = (0.0, 0.0);
    for k in 1..=arms.s0.len() {
        let r = tier_prob(&arms.s0, k);
        let s = arms.s1[k - 1];
        lo += smoother.ramp(r + s - 1.0);
        up += r - smoother.ramp(r - s);
    }
    (lo, up)
}

pub fn unit_contributions(
    nuisance: &NuisancePair,
    w: &[f64],
    x: i64,
    partition: &TierPartition,
) -> UnitBoundContribution {
    UnitBoundContribution::from_survival(&nuisance.arm_survival(w, x, partition), Smoother::Hard)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "plug-in")]
    PlugIn,
    #[serde(rename = "1S")]
    OneStep,
    #[serde(rename = "1S-gelu")]
    OneStepGelu,
    #[serde(rename = "S1S")]
    S1s,
    #[serde(rename = "mono-plug-in")]
    MonoPlugIn,
    #[serde(rename = "harm-plug-in")]
    HarmPlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EstimateFlags {
    /// Bounds fall outside `0 <= lower <= upper <= 1`.
    pub out_of_space: bool,
    /// A covariance eigenvalue fell below the ridge floor at least once.
    pub ridge_applied: bool,
    pub nonconverged_fits: usize,
    pub degenerate_sigma: bool,
    pub projected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEstimate {
    pub stratum: i64,
    pub method: Method,
    pub lower: f64,
    pub upper: f64,
    #[serde(rename = "cov")]
    pub covariance: Option<Sym2>,
    pub n_units: usize,
    pub flags: EstimateFlags,
}

impl BoundsEstimate {
    pub fn new(stratum: i64, method: Method, lower: f64, upper: f64, covariance: Option<Sym2>, n_units: usize) -> Self {
        let mut est = Self {
            stratum,
            method,
            lower,
            upper,
            covariance,
            n_units,
            flags: EstimateFlags::default(),
        };
        est.flags.out_of_space = !est.in_parameter_space();
        est
    }

    pub fn in_parameter_space(&self) -> bool {
        0.0 <= self.lower && self.lower <= self.upper && self.upper <= 1.0
    }

    /// Opt-in projection onto `{0 <= lower <= upper <= 1}`; crossed bounds
    /// collapse to their midpoint.
    pub fn projected(&self) -> Self {
        let mut out = self.clone();
        let (mut lo, mut up) = (self.lower.clamp(0.0, 1.0), self.upper.clamp(0.0, 1.0));
        if lo > up {
            let mid = 0.5 * (lo + up);
            lo = mid;
            up = mid;
        }
        out.lower = lo;
        out.upper = up;
        out.flags.projected = true;
        out
    }

    /// Standard errors of the two bounds, when a covariance is present.
    pub fn std_errors(&self) -> Option<(f64, f64)> {
        self.covariance.map(|c| (c.xx.max(0.0).sqrt(), c.yy.max(0.0).sqrt()))
    }
}

pub(crate) fn stratum_rows(data: &ObservationTable, stratum: i64) -> Result<Vec<usize>> {
    let rows = data.stratum_indices(stratum);
    if rows.is_empty() {
        return Err(Error::EmptyStratum(stratum));
    }
    Ok(rows)
}

/// Averages per-unit pairs; the covariance is that of the mean.
pub(crate) fn summarize(pairs: &[[f64; 2]]) -> ([f64; 2], Option<Sym2>) {
    let n = pairs.len() as f64;
    let mut mean = [0.0; 2];
    for p in pairs {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    (mean, sample_cov2(pairs).map(|c| c.scale(1.0 / n)))
}

fn averaged_bounds(
    nuisance: &NuisancePair,
    data: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
    method: Method,
    integrand: impl Fn(&ArmSurvival) -> (f64, f64),
) -> Result<BoundsEstimate> {
    let rows = stratum_rows(data, stratum)?;
    let mut arms = ArmSurvival::zeros(partition);
    let pairs: Vec<[f64; 2]> = rows
        .iter()
        .map(|&i| {
            let o = data.get(i);
            nuisance.arm_survival_into(o.w, o.x, partition, &mut arms);
            let (lo, up) = integrand(&arms);
            [lo, up]
        })
        .collect();
    let (mean, cov) = summarize(&pairs);
    let mut est = BoundsEstimate::new(stratum, method, mean[0], mean[1], cov, rows.len());
    est.flags.degenerate_sigma = nuisance.outcome.degenerate;
    est.flags.nonconverged_fits = usize::from(nuisance.nonconverged());
    Ok(est)
}

/// Plug-in estimate of the sharp bounds: stratum averages of the per-unit
/// integrands over the empirical distribution of `W | X = stratum`. The
/// attached covariance is the sampling covariance of that average with the
/// nuisance held fixed.
pub fn plugin_bounds(
    nuisance: &NuisancePair,
    data: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
) -> Result<BoundsEstimate> {
    averaged_bounds(nuisance, data, stratum, partition, Method::PlugIn, |arms| {
        unit_bound_sums(arms, Smoother::Hard)
    })
}

/// Same functional with the arms exchanged: bounds on the probability of
/// tiered harm.
pub fn harm_bounds(
    nuisance: &NuisancePair,
    data: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
) -> Result<BoundsEstimate> {
    averaged_bounds(nuisance, data, stratum, partition, Method::HarmPlugIn, |arms| {
        unit_bound_sums(&arms.swapped(), Smoother::Hard)
    })
}

/// Per-unit integrands of the bounds under strong monotonicity with a
/// nonharmful exposure (needs `K >= 3`).
pub fn mono_unit_terms(arms: &ArmSurvival) -> (f64, f64) {
    let k_tiers = arms.s0.len() + 1;
    let base = arms.s1[0] - tier_prob(&arms.s0, k_tiers);
    let (mut lo, mut up) = (base, base);
    for k in 2..k_tiers {
        let (r0, r1) = (tier_prob(&arms.s0, k), tier_prob(&arms.s1, k));
        lo -= r0.min(r1);
        up -= (r0 + r1 - 1.0).max(0.0);
    }
    (lo, up)
}

pub fn mono_bounds(
    nuisance: &NuisancePair,
    data: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
) -> Result<BoundsEstimate> {
    if partition.tiers() < 3 {
        return Err(Error::MonotoneNeedsThreeTiers(partition.tiers()));
    }
    averaged_bounds(nuisance, data, stratum, partition, Method::MonoPlugIn, mono_unit_terms)
}

/// Individualized rules: `lambda_k = 1[R_k(0) + S_k(1) - 1 > 0]` and
/// `upsilon_k = 1[R_k(0) - S_k(1) > 0]`. Exact ties give 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RulePair {
    pub lambda: Vec<bool>,
    pub upsilon: Vec<bool>,
}

impl RulePair {
    pub fn from_survival(arms: &ArmSurvival) -> Self {
        let m = arms.s0.len();
        let (mut lambda, mut upsilon) = (Vec::with_capacity(m), Vec::with_capacity(m));
        for k in 1..=m {
            let r = tier_prob(&arms.s0, k);
            let s = arms.s1[k - 1];
            lambda.push(r + s - 1.0 > 0.0);
            upsilon.push(r - s > 0.0);
        }
        Self { lambda, upsilon }
    }
}

pub fn rules(nuisance: &NuisancePair, w: &[f64], x: i64, partition: &TierPartition) -> RulePair {
    RulePair::from_survival(&nuisance.arm_survival(w, x, partition))
}

/// Fraction of stratum units whose integrand arguments sit within `tol` of
/// a kink for some `k`: an empirical gauge of how exceptional the law is.
pub fn ambiguity_set_mass(
    nuisance: &NuisancePair,
    data: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
    tol: f64,
) -> Result<f64> {
    let rows = stratum_rows(data, stratum)?;
    let mut arms = ArmSurvival::zeros(partition);
    let hits = rows
        .iter()
        .filter(|&&i| {
            let o = data.get(i);
            nuisance.arm_survival_into(o.w, o.x, partition, &mut arms);
            (1..=arms.s0.len()).any(|k| {
                let r = tier_prob(&arms.s0, k);
                let s = arms.s1[k - 1];
                (r + s - 1.0).abs() <= tol || (r - s).abs() <= tol
            })
        })
        .count();
    Ok(hits as f64 / rows.len() as f64)
}
