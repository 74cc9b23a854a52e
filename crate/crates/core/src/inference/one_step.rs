//! One-step corrected bounds with sample splitting, hard or GELU-smoothed.

use rand::seq::SliceRandom;

use super::eif::unit_values;
use crate::bounds::{stratum_rows, summarize, BoundsEstimate, Method, Smoother};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::nuisance::{ArmSurvival, NuisanceConfig, NuisancePair};
use crate::partition::TierPartition;
use crate::rng::{stream, Purpose};

/// Averages `Lambda_i + dLambda_i` (and the upper analogue) over the
/// evaluation units of one stratum. The covariance is that of the mean.
pub fn corrected_bounds(
    nuisance: &NuisancePair,
    eval: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
    smoother: Smoother,
) -> Result<BoundsEstimate> {
    let rows = stratum_rows(eval, stratum)?;
    if rows.len() < 2 {
        return Err(Error::TooFewUnits {
            stratum,
            count: rows.len(),
            needed: 2,
        });
    }
    let mut arms = ArmSurvival::zeros(partition);
    let pairs = rows
        .iter()
        .map(|&i| Ok(unit_values(nuisance, &eval.get(i), partition, smoother, &mut arms)?.corrected()))
        .collect::<Result<Vec<_>>>()?;
    let (mean, cov) = summarize(&pairs);
    let method = match smoother {
        Smoother::Hard => Method::OneStep,
        Smoother::Gelu { .. } => Method::OneStepGelu,
    };
    let mut est = BoundsEstimate::new(stratum, method, mean[0], mean[1], cov, rows.len());
    est.flags.degenerate_sigma = nuisance.outcome.degenerate;
    est.flags.nonconverged_fits = usize::from(nuisance.nonconverged());
    Ok(est)
}

pub fn one_step(
    nuisance: &NuisancePair,
    eval: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
) -> Result<BoundsEstimate> {
    corrected_bounds(nuisance, eval, stratum, partition, Smoother::Hard)
}

pub fn one_step_gelu(
    nuisance: &NuisancePair,
    eval: &ObservationTable,
    stratum: i64,
    partition: &TierPartition,
    h: f64,
) -> Result<BoundsEstimate> {
    check_bandwidth(h)?;
    corrected_bounds(nuisance, eval, stratum, partition, Smoother::Gelu { h })
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("GELU smoothing h must be positive, got {h}")))
    }
}

/// Random split into a training part holding `round(train_fraction * n)`
/// units and a held-out part.
pub fn split_sample(
    data: &ObservationTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(ObservationTable, ObservationTable)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must lie in (0, 1), got {train_fraction}")));
    }
    let n = data.len();
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Config(format!("split {train_fraction} of {n} units leaves one side empty")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, Purpose::Split));
    let (train, eval) = idx.split_at(n_train);
    let (mut train, mut eval) = (train.to_vec(), eval.to_vec());
    train.sort_unstable();
    eval.sort_unstable();
    Ok((data.select(&train), data.select(&eval)))
}

/// Fits the nuisance on the training split and corrects on the held-out
/// split, for every stratum present in the data.
pub fn one_step_split(
    data: &ObservationTable,
    config: &NuisanceConfig,
    partition: &TierPartition,
    train_fraction: f64,
    seed: u64,
    smoother: Smoother,
) -> Result<Vec<BoundsEstimate>> {
    if let Smoother::Gelu { h } = smoother {
        check_bandwidth(h)?;
    }
    let (train, eval) = split_sample(data, train_fraction, seed)?;
    let nuisance = NuisancePair::fit(&train, config)?;
    data.strata()
        .into_iter()
        .map(|x| corrected_bounds(&nuisance, &eval, x, partition, smoother))
        .collect()
}
