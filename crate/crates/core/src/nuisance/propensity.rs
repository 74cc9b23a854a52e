//! Propensity score `pi(w, x) = P(A = 1 | W = w, X = x)` fitted by
//! iteratively reweighted least squares.

use serde::{Deserialize, Serialize};

use super::basis::{Basis, BasisSpec};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    Logit,
    Probit,
}

impl Link {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "logit" | "logistic" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            other => Err(Error::Config(format!("unknown link `{other}`"))),
        }
    }

    /// `(p, 1 - p, dp/deta)`, each tail computed without cancellation.
    #[inline]
    fn response(self, eta: f64) -> (f64, f64, f64) {
        match self {
            Link::Logit => {
                let p = 1.0 / (1.0 + (-eta).exp());
                let q = 1.0 / (1.0 + eta.exp());
                (p, q, p * q)
            }
            Link::Probit => (normal::cdf(eta), normal::sf(eta), normal::pdf(eta)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityConfig {
    pub link: Link,
    pub basis: BasisSpec,
    /// Predictions are clipped into `[clip.0, clip.1]`.
    pub clip: (f64, f64),
    pub max_iter: usize,
    /// Tolerance on the Euclidean norm of the mean score.
    pub tol: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        Self {
            link: Link::Logit,
            basis: BasisSpec::main_effects_propensity(),
            clip: (0.01, 0.99),
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

impl PropensityConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!("clip bounds must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")));
        }
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("propensity fit needs max_iter > 0 and tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropensityModel {
    pub link: Link,
    pub basis: Basis,
    pub coefficients: Vec<f64>,
    pub clip: (f64, f64),
    pub converged: bool,
    pub iterations: usize,
    pub score_norm: f64,
}

impl PropensityModel {
    /// Builds a model from known coefficients, e.g. the true design.
    pub fn from_coefficients(link: Link, basis: Basis, coefficients: Vec<f64>, clip: (f64, f64)) -> Self {
        Self {
            link,
            basis,
            coefficients,
            clip,
            converged: true,
            iterations: 0,
            score_norm: 0.0,
        }
    }

    pub fn predict_unclipped(&self, w: &[f64], x: i64) -> f64 {
        self.link.response(self.basis.dot(&self.coefficients, w, x, 0.0)).0
    }

    pub fn predict(&self, w: &[f64], x: i64) -> f64 {
        self.predict_unclipped(w, x).clamp(self.clip.0, self.clip.1)
    }
}

pub fn fit_propensity(
    data: &ObservationTable,
    config: &PropensityConfig,
    init: Option<&[f64]>,
) -> Result<PropensityModel> {
    PropensityFitter::new(data, config)?.fit(data.len(), init)
}

/// Holds the design matrix of a table so that prefixes of it can be refitted
/// repeatedly without re-evaluating the basis.
#[derive(Debug, Clone)]
pub struct PropensityFitter {
    basis: Basis,
    config: PropensityConfig,
    design: Vec<f64>,
    exposure: Vec<f64>,
}

impl PropensityFitter {
    pub fn new(data: &ObservationTable, config: &PropensityConfig) -> Result<Self> {
        config.validate()?;
        let basis = Basis::compile(&config.basis, data.covariate_names())?;
        if basis.uses_exposure() {
            return Err(Error::Config("propensity basis cannot contain the exposure `a`".into()));
        }
        let p = basis.len();
        let mut design = vec![0.0; data.len() * p];
        for (i, o) in data.iter().enumerate() {
            basis.eval(o.w, o.x, 0.0, &mut design[i * p..(i + 1) * p]);
        }
        Ok(Self {
            basis,
            config: config.clone(),
            design,
            exposure: data.a().iter().map(|&a| a as f64).collect(),
        })
    }

    /// Fits on the first `rows` units of the table.
    pub fn fit(&self, rows: usize, init: Option<&[f64]>) -> Result<PropensityModel> {
        let p = self.basis.len();
        let a = &self.exposure[..rows];
        let x = &self.design[..rows * p];
        if rows == 0 {
            return Err(Error::Data("cannot fit a propensity model on zero rows".into()));
        }
        let treated = a.iter().filter(|&&v| v == 1.0).count();
        if treated == 0 || treated == rows {
            return Err(Error::DegenerateExposure(if treated == 0 { 0 } else { 1 }));
        }
        if rows <= p {
            return Err(Error::TooFewRows { rows, columns: p });
        }
        // Collinearity is a property of the unweighted design.
        let mut gram = vec![0.0; p * p];
        for row in x.chunks_exact(p) {
            accumulate_outer(&mut gram, row, 1.0);
        }
        solve_spd(&gram, &vec![0.0; p], self.basis.names())?;

        let link = self.config.link;
        let mut beta = match init {
            Some(b) if b.len() == p && b.iter().all(|v| v.is_finite()) => b.to_vec(),
            _ => vec![0.0; p],
        };
        let nf = rows as f64;
        let mut ll = log_likelihood(link, x, a, &beta);
        let mut converged = false;
        let mut iterations = 0;
        let mut score_norm;
        let mut info = vec![0.0; p * p];
        let mut score = vec![0.0; p];
        loop {
            info.iter_mut().for_each(|v| *v = 0.0);
            score.iter_mut().for_each(|v| *v = 0.0);
            for (row, &ai) in x.chunks_exact(p).zip(a) {
                let eta: f64 = row.iter().zip(&beta).map(|(r, b)| r * b).sum();
                let (mu, nu, d) = link.response(eta);
                let var = (mu * nu).max(1e-300);
                let resid = if ai == 1.0 { nu } else { -mu };
                let g = resid * d / var;
                for (s, r) in score.iter_mut().zip(row) {
                    *s += g * r;
                }
                accumulate_outer(&mut info, row, d * d / var);
            }
            score_norm = score.iter().map(|s| s * s).sum::<f64>().sqrt() / nf;
            if score_norm < self.config.tol {
                converged = true;
                break;
            }
            if iterations == self.config.max_iter {
                break;
            }
            iterations += 1;
            let Ok(delta) = solve_spd(&info, &score, self.basis.names()) else {
                // Weights collapse under separation.
                break;
            };
            let mut step = 1.0;
            let mut candidate: Vec<f64>;
            loop {
                candidate = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
                let cand_ll = log_likelihood(link, x, a, &candidate);
                if cand_ll >= ll - 1e-12 * ll.abs() || step < 1e-10 {
                    ll = cand_ll;
                    break;
                }
                step *= 0.5;
            }
            beta = candidate;
        }
        if converged {
            // Under separation the score vanishes as the coefficients diverge.
            let saturated = x.chunks_exact(p).any(|row| {
                let eta: f64 = row.iter().zip(&beta).map(|(r, b)| r * b).sum();
                let (mu, nu, _) = link.response(eta);
                mu.min(nu) < 1e-10
            });
            converged = !saturated;
        }
        Ok(PropensityModel {
            link,
            basis: self.basis.clone(),
            coefficients: beta,
            clip: self.config.clip,
            converged,
            iterations,
            score_norm,
        })
    }
}

fn accumulate_outer(m: &mut [f64], row: &[f64], weight: f64) {
    let p = row.len();
    for i in 0..p {
        let wi = weight * row[i];
        for j in 0..p {
            m[i * p + j] += wi * row[j];
        }
    }
}

/// Total Bernoulli log-likelihood over the rows of `x`.
pub(crate) fn log_likelihood(link: Link, x: &[f64], a: &[f64], beta: &[f64]) -> f64 {
    let p = beta.len();
    x.chunks_exact(p)
        .zip(a)
        .map(|(row, &ai)| {
            let eta: f64 = row.iter().zip(beta).map(|(r, b)| r * b).sum();
            let (mu, nu, _) = link.response(eta);
            if ai == 1.0 {
                mu.max(1e-300).ln()
            } else {
                nu.max(1e-300).ln()
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng;

    fn coin_flips(n: usize, seed: u64) -> ObservationTable {
        let mut rng = stream(seed, Purpose::Data);
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for _ in 0..n {
            let w1: f64 = rng.random_range(-1.0..1.0);
            let a = u8::from(rng.random_bool(0.5));
            t.push(&[w1], 0, a, 0.0).unwrap();
        }
        t
    }

    #[test]
    fn intercept_only_recovers_bernoulli_mean() {
        let t = coin_flips(4000, 3);
        let cfg = PropensityConfig {
            basis: BasisSpec::new(["1"]),
            ..Default::default()
        };
        let m = fit_propensity(&t, &cfg, None).unwrap();
        let mean = t.a().iter().map(|&a| a as f64).sum::<f64>() / t.len() as f64;
        assert!(m.converged);
        assert!((m.predict(&[0.3], 0) - mean).abs() < 1e-10);
        assert!((mean - 0.5).abs() < 0.05);
    }

    #[test]
    fn degenerate_exposure_is_rejected() {
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for i in 0..10 {
            t.push(&[i as f64], 0, 1, 0.0).unwrap();
        }
        let e = fit_propensity(&t, &PropensityConfig { basis: BasisSpec::new(["1", "w1"]), ..Default::default() }, None)
            .unwrap_err();
        assert!(matches!(e, Error::DegenerateExposure(1)));
    }

    #[test]
    fn separation_flags_nonconvergence_and_clips() {
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for i in 0..40 {
            let w = i as f64 / 40.0 - 0.5;
            t.push(&[w], 0, u8::from(w > 0.0), 0.0).unwrap();
        }
        let cfg = PropensityConfig {
            basis: BasisSpec::new(["1", "w1"]),
            ..Default::default()
        };
        let m = fit_propensity(&t, &cfg, None).unwrap();
        assert!(!m.converged);
        assert_eq!(m.predict(&[0.5], 0), 0.99);
        assert_eq!(m.predict(&[-0.5], 0), 0.01);
    }

    #[test]
    fn collinear_columns_are_named() {
        let t = coin_flips(50, 1);
        let cfg = PropensityConfig {
            basis: BasisSpec::new(["1", "w1", "x"]),
            ..Default::default()
        };
        // x is identically 0 in this table.
        let e = fit_propensity(&t, &cfg, None).unwrap_err();
        assert!(matches!(e, Error::SingularDesign(ref c) if c == &vec!["x".to_string()]));
    }

    #[test]
    fn score_vanishes_at_fit_by_finite_differences() {
        let mut rng = stream(11, Purpose::Data);
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for _ in 0..2000 {
            let w1: f64 = rng.random_range(-1.0..1.0);
            let p = normal::cdf(0.3 + 0.8 * w1);
            t.push(&[w1], 0, u8::from(rng.random_bool(p)), 0.0).unwrap();
        }
        for link in [Link::Logit, Link::Probit] {
            let cfg = PropensityConfig {
                link,
                basis: BasisSpec::new(["1", "w1"]),
                ..Default::default()
            };
            let fitter = PropensityFitter::new(&t, &cfg).unwrap();
            let m = fitter.fit(t.len(), None).unwrap();
            assert!(m.converged, "{link:?}");
            let a = &fitter.exposure;
            for j in 0..2 {
                let h = 1e-5;
                let mut up = m.coefficients.clone();
                let mut dn = m.coefficients.clone();
                up[j] += h;
                dn[j] -= h;
                let g = (log_likelihood(link, &fitter.design, a, &up) - log_likelihood(link, &fitter.design, a, &dn))
                    / (2.0 * h)
                    / t.len() as f64;
                assert!(g.abs() < 1e-7, "{link:?} coordinate {j}: {g}");
            }
        }
    }

    #[test]
    fn warm_start_reaches_same_fixed_point() {
        let t = coin_flips(500, 5);
        let cfg = PropensityConfig {
            basis: BasisSpec::new(["1", "w1"]),
            ..Default::default()
        };
        let fitter = PropensityFitter::new(&t, &cfg).unwrap();
        let cold = fitter.fit(500, None).unwrap();
        let prev = fitter.fit(499, None).unwrap();
        let warm = fitter.fit(500, Some(&prev.coefficients)).unwrap();
        assert!(warm.iterations <= cold.iterations);
        for (a, b) in cold.coefficients.iter().zip(&warm.coefficients) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
