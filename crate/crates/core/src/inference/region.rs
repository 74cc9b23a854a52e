//! Monte-Carlo uncertainty regions `[lower - s, upper + s]` for the
//! probability of tiered benefit.

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bounds::BoundsEstimate;
use crate::error::{Error, Result};
use crate::linalg::matrix_sqrt;
use crate::rng::{stream, Purpose};

/// Draw counts below this are flagged.
pub const MIN_RECOMMENDED_DRAWS: usize = 1_000;
pub const DEFAULT_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyRegion {
    pub stratum: i64,
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub s_hat: f64,
    pub mc_draws: usize,
    pub few_draws: bool,
}

/// `s_hat` is the empirical `1 - (1 - level) / 2` quantile of
/// `max{s_L, -s_U}` over `draws` samples `(s_L, s_U) ~ N(0, cov)`.
pub fn uncertainty_region(est: &BoundsEstimate, level: f64, draws: usize, seed: u64) -> Result<UncertaintyRegion> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {level}")));
    }
    if draws == 0 {
        return Err(Error::Config("uncertainty region needs at least one draw".into()));
    }
    let cov = est
        .covariance
        .ok_or_else(|| Error::Numerical(format!("estimate for stratum {} carries no covariance", est.stratum)))?;
    let root = matrix_sqrt(&cov)?;
    let mut rng = stream(seed, Purpose::Uncertainty);
    let mut stat: Vec<f64> = (0..draws)
        .map(|_| {
            let z = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            let s = root.mul_vec(z);
            s[0].max(-s[1])
        })
        .collect();
    let q = 1.0 - (1.0 - level) / 2.0;
    let rank = ((q * draws as f64).ceil() as usize).clamp(1, draws) - 1;
    let (_, s_hat, _) = stat.select_nth_unstable_by(rank, f64::total_cmp);
    let s_hat = *s_hat;
    Ok(UncertaintyRegion {
        stratum: est.stratum,
        lo: est.lower - s_hat,
        hi: est.upper + s_hat,
        level,
        s_hat,
        mc_draws: draws,
        few_draws: draws < MIN_RECOMMENDED_DRAWS,
    })
}
