use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{ObservationTable, PotentialOutcomes};
use crate::error::{Error, Result};
use crate::normal;
use crate::nuisance::{Basis, BasisSpec, Link, NuisancePair, OutcomeModel, PropensityModel};
use crate::rng::{stream, Purpose};

/// Parameters of the benchmark structural model:
///
/// ```text
/// v, W1 ~ Unif(-1, 1);  X = 1[v > 0];  W2 = 1[v^2 > cut^2]
/// A = 1[b0 + b1 W1 + bx X + u_A > 0],  u_A ~ N(0, 1)
/// Y = (2A - 1) + (W1 + X)(1 + 0.5(2A - 1)) - A W2 (W1 + X + 2) + u_Y,  u_Y ~ N(0, sigma^2)
/// ```
///
/// The noise `u_Y` is shared by both potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmParams {
    pub sigma: f64,
    /// `(b0, b1, bx)`; the default `0.5 (W1 + 2X - 1)` is `(-0.5, 0.5, 1.0)`.
    pub exposure: [f64; 3],
    pub w2_cutoff: f64,
}

impl Default for ScmParams {
    fn default() -> Self {
        Self {
            sigma: 2.0,
            exposure: [-0.5, 0.5, 1.0],
            w2_cutoff: 0.5,
        }
    }
}

pub const COVARIATES: [&str; 2] = ["w1", "w2"];

impl ScmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !(0.0..1.0).contains(&self.w2_cutoff) {
            return Err(Error::Config("simulation needs sigma > 0 and 0 <= w2 cutoff < 1".into()));
        }
        Ok(())
    }

    pub fn outcome_mean(&self, w1: f64, w2: f64, x: i64, a: u8) -> f64 {
        let (a, x) = (a as f64, x as f64);
        (2.0 * a - 1.0) + (w1 + x) * (1.0 + 0.5 * (2.0 * a - 1.0)) - a * w2 * (w1 + x + 2.0)
    }

    pub fn propensity(&self, w1: f64, x: i64) -> f64 {
        let [b0, b1, bx] = self.exposure;
        normal::cdf(b0 + b1 * w1 + bx * x as f64)
    }

    /// `P(W2 = 1 | X = x)`: `v` given its sign is uniform on a unit interval.
    pub fn p_w2(&self) -> f64 {
        1.0 - self.w2_cutoff
    }

    /// Coefficients of the mean on [`BasisSpec::saturated_outcome`].
    pub fn saturated_coefficients(&self) -> Vec<f64> {
        vec![-1.0, 0.5, 0.5, 2.0, 1.0, 1.0, -2.0, -1.0, -1.0]
    }

    /// The data-generating nuisance, for oracle comparisons.
    pub fn true_nuisance(&self, clip: (f64, f64)) -> NuisancePair {
        let cov: Vec<String> = COVARIATES.iter().map(|s| s.to_string()).collect();
        let ob = Basis::compile(&BasisSpec::saturated_outcome(), &cov).expect("static basis");
        let pb = Basis::compile(&BasisSpec::main_effects_propensity(), &cov).expect("static basis");
        NuisancePair {
            propensity: PropensityModel::from_coefficients(Link::Probit, pb, self.exposure.to_vec(), clip),
            outcome: OutcomeModel::from_coefficients(ob, self.saturated_coefficients(), self.sigma),
        }
    }
}

/// Factual table plus the oracle-only potential outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSample {
    pub table: ObservationTable,
    pub potential: PotentialOutcomes,
}

pub fn simulate(n: usize, seed: u64) -> Result<ScmSample> {
    simulate_with(&ScmParams::default(), n, seed)
}

pub fn simulate_with(params: &ScmParams, n: usize, seed: u64) -> Result<ScmSample> {
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    params.validate()?;
    let mut rng = stream(seed, Purpose::Data);
    let noise = Normal::new(0.0, params.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut table = ObservationTable::with_capacity(COVARIATES.iter().map(|s| s.to_string()).collect(), n);
    let mut potential = PotentialOutcomes {
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
    };
    let [b0, b1, bx] = params.exposure;
    for _ in 0..n {
        let v: f64 = rng.random_range(-1.0..1.0);
        let w1: f64 = rng.random_range(-1.0..1.0);
        let ua: f64 = StandardNormal.sample(&mut rng);
        let uy: f64 = noise.sample(&mut rng);
        let x = i64::from(v > 0.0);
        let w2 = f64::from(v * v > params.w2_cutoff * params.w2_cutoff);
        let a = u8::from(b0 + b1 * w1 + bx * x as f64 + ua > 0.0);
        let y0 = params.outcome_mean(w1, w2, x, 0) + uy;
        let y1 = params.outcome_mean(w1, w2, x, 1) + uy;
        let y = if a == 1 { y1 } else { y0 };
        table.push(&[w1, w2], x, a, y)?;
        potential.y0.push(y0);
        potential.y1.push(y1);
    }
    Ok(ScmSample { table, potential })
}

/// Conditional means of both arms in the `W2 = 1` subgroup, which the
/// exposure does not affect: both equal `0.5 (w1 + x) - 1`.
pub fn immune_subgroup_check(w1: f64, x: i64) -> (f64, f64) {
    let p = ScmParams::default();
    let (mu0, mu1) = (p.outcome_mean(w1, 1.0, x, 0), p.outcome_mean(w1, 1.0, x, 1));
    debug_assert!((mu0 - mu1).abs() < 1e-12);
    (mu0, mu1)
}
