//! Stabilized one-step correction with per-stratum 2x2 stabilizing
//! matrices.
//!
//! The data are permuted once. For each `j` from `l` to `n - 1` the
//! nuisance is refitted on the first `j` units, the next unit's stratum `x'`
//! is read off, the batch units of `x'` give a plug-in value and a covariance
//! of corrected values, and the next unit's out-of-sample correction is
//! absorbed into `m(x')`, `M(x')` with weight `T(x') = Cov^{-1/2}`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::eif::unit_values;
use crate::bounds::{BoundsEstimate, Method, Smoother};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::linalg::{matrix_inv_sqrt, sample_cov2, Sym2};
use crate::nuisance::{ArmSurvival, NuisanceConfig, NuisancePair, OutcomeFitter, PropensityFitter};
use crate::partition::TierPartition;
use crate::rng::{stream, Purpose};

/// Absolute lower limit of the ridge floor.
pub const RIDGE_ABSOLUTE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S1sConfig {
    /// Initial batch size `l`.
    pub l: usize,
    pub nuisance: NuisanceConfig,
    pub seed: u64,
    /// Propensity refits warm-start from the previous step and start cold
    /// every this many steps.
    pub cold_refit_every: usize,
    /// Relative ridge: the floor is `ridge * trace / 2`.
    pub ridge: f64,
    /// Shuffle the rows first; off only for data already in random order.
    pub permute: bool,
}

impl S1sConfig {
    pub fn new(l: usize, seed: u64) -> Self {
        Self {
            l,
            nuisance: NuisanceConfig::default(),
            seed,
            cold_refit_every: 250,
            ridge: 1e-8,
            permute: true,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.l == 0 || self.l >= n {
            return Err(Error::Config(format!("S1S needs 0 < l < n, got l = {} and n = {n}", self.l)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Config(format!("ridge must be a finite nonnegative number, got {}", self.ridge)));
        }
        if self.cold_refit_every == 0 {
            return Err(Error::Config("cold_refit_every must be positive".into()));
        }
        self.nuisance.propensity.validate()
    }
}

/// Running sums `m(x)`, `M(x)` and count `n(x)` for one stratum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizerState {
    pub m: [f64; 2],
    #[serde(rename = "M")]
    pub big_m: Sym2,
    pub n: usize,
}

impl Default for StabilizerState {
    fn default() -> Self {
        Self {
            m: [0.0; 2],
            big_m: Sym2::ZERO,
            n: 0,
        }
    }
}

impl StabilizerState {
    pub fn absorb(&mut self, t: &Sym2, value: [f64; 2]) {
        let tv = t.mul_vec(value);
        self.m[0] += tv[0];
        self.m[1] += tv[1];
        self.big_m = self.big_m.add(t);
        self.n += 1;
    }

    /// `M^{-1} m` and `n M^{-2}`.
    pub fn finish(&self) -> Result<([f64; 2], Sym2)> {
        let inv = self.big_m.inverse()?;
        Ok((inv.mul_vec(self.m), inv.square().scale(self.n as f64)))
    }

    /// `n^{-1/2} (m - M psi0)`: approximately standard bivariate normal when
    /// `psi0` is the target.
    pub fn standardized(&self, psi0: [f64; 2]) -> [f64; 2] {
        let mp = self.big_m.mul_vec(psi0);
        let k = 1.0 / (self.n as f64).sqrt();
        [(self.m[0] - mp[0]) * k, (self.m[1] - mp[1]) * k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1sDiagnostics {
    /// Steps at which the ridge floor was used.
    pub ridge_steps: usize,
    /// Largest `|T Cov T - I|` entry over steps without ridge.
    pub max_stabilizer_error: f64,
    pub nonconverged_fits: usize,
    pub degenerate_fits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1sResult {
    pub estimates: Vec<BoundsEstimate>,
    pub states: BTreeMap<i64, StabilizerState>,
    /// `permutation[i]` is the original row placed at position `i`.
    pub permutation: Vec<usize>,
    pub diagnostics: S1sDiagnostics,
}

/// Ridge floor for a batch covariance.
pub fn ridge_floor(cov: &Sym2, ridge: f64) -> f64 {
    (ridge * cov.trace() / 2.0).max(RIDGE_ABSOLUTE_FLOOR)
}

/// Stabilizing matrix with the ridge applied only when the smallest
/// eigenvalue falls below the floor. Returns whether it was applied.
pub fn stabilizer(cov: &Sym2, ridge: f64) -> Result<(Sym2, bool)> {
    let floor = ridge_floor(cov, ridge);
    let ([lo, _], _) = cov.eigen();
    if lo < floor {
        Ok((matrix_inv_sqrt(cov, floor)?, true))
    } else {
        Ok((matrix_inv_sqrt(cov, 0.0)?, false))
    }
}

pub fn s1s(data: &ObservationTable, partition: &TierPartition, config: &S1sConfig) -> Result<S1sResult> {
    let n = data.len();
    config.validate(n)?;
    let mut permutation: Vec<usize> = (0..n).collect();
    if config.permute {
        permutation.shuffle(&mut stream(config.seed, Purpose::Permutation));
    }
    let d = data.select(&permutation);

    let mut outcome_fitter = OutcomeFitter::new(&d, &config.nuisance.outcome_basis)?;
    let propensity_fitter = PropensityFitter::new(&d, &config.nuisance.propensity)?;

    // Batch members of each stratum, in permuted order.
    let mut members: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for i in 0..config.l {
        members.entry(d.x()[i]).or_default().push(i);
    }
    let mut states: BTreeMap<i64, StabilizerState> = data.strata().into_iter().map(|x| (x, StabilizerState::default())).collect();
    let mut diag = S1sDiagnostics {
        ridge_steps: 0,
        max_stabilizer_error: 0.0,
        nonconverged_fits: 0,
        degenerate_fits: 0,
    };
    let mut warm: Option<Vec<f64>> = None;
    let mut arms = ArmSurvival::zeros(partition);
    let mut batch: Vec<[f64; 2]> = Vec::new();

    for j in config.l..n {
        outcome_fitter.extend_to(j);
        let outcome = outcome_fitter.fit()?;
        let init = if (j - config.l) % config.cold_refit_every == 0 { None } else { warm.as_deref() };
        let propensity = propensity_fitter.fit(j, init)?;
        diag.nonconverged_fits += usize::from(!propensity.converged);
        diag.degenerate_fits += usize::from(outcome.degenerate);
        warm = Some(propensity.coefficients.clone());
        let nuisance = NuisancePair { propensity, outcome };

        let x_next = d.x()[j];
        let rows = members.get(&x_next).map(Vec::as_slice).unwrap_or(&[]);
        if rows.len() < 2 {
            return Err(Error::TooFewUnits {
                stratum: x_next,
                count: rows.len(),
                needed: 2,
            });
        }
        batch.clear();
        let mut plug = [0.0; 2];
        for &i in rows {
            let v = unit_values(&nuisance, &d.get(i), partition, Smoother::Hard, &mut arms)?;
            plug[0] += v.plug[0];
            plug[1] += v.plug[1];
            batch.push(v.corrected());
        }
        plug[0] /= rows.len() as f64;
        plug[1] /= rows.len() as f64;
        let next = unit_values(&nuisance, &d.get(j), partition, Smoother::Hard, &mut arms)?;

        let cov = sample_cov2(&batch).expect("at least two batch units");
        let (t, ridged) = stabilizer(&cov, config.ridge)?;
        if ridged {
            diag.ridge_steps += 1;
        } else {
            let e = t.sandwich(&cov);
            let err = (e.xx - 1.0).abs().max(e.xy.abs()).max((e.yy - 1.0).abs());
            diag.max_stabilizer_error = diag.max_stabilizer_error.max(err);
        }
        states
            .get_mut(&x_next)
            .expect("stratum registered up front")
            .absorb(&t, [plug[0] + next.correction[0], plug[1] + next.correction[1]]);
        members.entry(x_next).or_default().push(j);
    }

    let mut estimates = Vec::with_capacity(states.len());
    for (&x, state) in &states {
        if state.n < 2 {
            return Err(Error::Data(format!(
                "stratum {x} received {} out-of-sample corrections after the initial batch, at least 2 are needed; \
                 increase n or decrease l",
                state.n
            )));
        }
        let (psi, omega) = state.finish()?;
        let mut est = BoundsEstimate::new(x, Method::S1s, psi[0], psi[1], Some(omega), state.n);
        est.flags.ridge_applied = diag.ridge_steps > 0;
        est.flags.nonconverged_fits = diag.nonconverged_fits;
        est.flags.degenerate_sigma = diag.degenerate_fits > 0;
        estimates.push(est);
    }
    Ok(S1sResult {
        estimates,
        states,
        permutation,
        diagnostics: diag,
    })
}
