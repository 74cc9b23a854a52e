//! Homoskedastic Gaussian outcome model `Y | W, X, A ~ N(mu(W, X, A), sigma^2)`
//! with a linear-in-basis mean fitted by least squares.

use serde::Serialize;

use super::basis::{Basis, BasisSpec};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::linalg::solve_spd;
use crate::normal;
use crate::partition::TierPartition;

/// Residual scales below this count as a degenerate (point-mass) model.
const DEGENERATE_SIGMA: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeModel {
    pub basis: Basis,
    pub coefficients: Vec<f64>,
    pub sigma: f64,
    /// Set when the residual scale is zero and survival is a step function.
    pub degenerate: bool,
}

impl OutcomeModel {
    pub fn from_coefficients(basis: Basis, coefficients: Vec<f64>, sigma: f64) -> Self {
        let degenerate = sigma <= DEGENERATE_SIGMA;
        Self {
            basis,
            coefficients,
            sigma: if degenerate { 0.0 } else { sigma },
            degenerate,
        }
    }

    pub fn mean(&self, w: &[f64], x: i64, a: u8) -> f64 {
        self.basis.dot(&self.coefficients, w, x, a as f64)
    }

    /// `(S_1, ..., S_{K-1})` at `(w, x, a)`.
    pub fn survival(&self, w: &[f64], x: i64, a: u8, partition: &TierPartition) -> Vec<f64> {
        let mut s = vec![0.0; partition.tiers() - 1];
        survival_into(self.mean(w, x, a), self.sigma, partition.thresholds(), &mut s);
        s
    }

    /// `(R_1, ..., R_K)` at `(w, x, a)`.
    pub fn tier_probs(&self, w: &[f64], x: i64, a: u8, partition: &TierPartition) -> Vec<f64> {
        tier_probs_from_survival(&self.survival(w, x, a, partition))
    }
}

/// `S_k = P(Y > c_k) = 1 - Phi((c_k - mu) / sigma)`; a step at `mu` when
/// `sigma == 0`.
pub fn survival_into(mu: f64, sigma: f64, thresholds: &[f64], out: &mut [f64]) {
    for (s, &c) in out.iter_mut().zip(thresholds) {
        *s = if sigma > 0.0 {
            normal::sf((c - mu) / sigma)
        } else if mu > c {
            1.0
        } else {
            0.0
        };
    }
}

/// `R_k = S_{k-1} - S_k` with `S_0 = 1`, `S_K = 0`.
pub fn tier_probs_from_survival(s: &[f64]) -> Vec<f64> {
    let k = s.len() + 1;
    (1..=k).map(|j| survival_at(s, j - 1) - survival_at(s, j)).collect()
}

/// `S_j` for `j` in `0..=K`, applying the boundary conventions.
#[inline]
pub fn survival_at(s: &[f64], j: usize) -> f64 {
    if j == 0 {
        1.0
    } else if j > s.len() {
        0.0
    } else {
        s[j - 1]
    }
}

pub fn fit_outcome(data: &ObservationTable, basis: &BasisSpec) -> Result<OutcomeModel> {
    let mut fitter = OutcomeFitter::new(data, basis)?;
    fitter.extend_to(data.len());
    fitter.fit()
}

/// Least-squares fitter over growing prefixes of a table: the Gram matrix is
/// updated one row at a time, so refitting after appending a unit is cheap
/// and gives exactly the full-refit solution.
#[derive(Debug, Clone)]
pub struct OutcomeFitter {
    basis: Basis,
    design: Vec<f64>,
    y: Vec<f64>,
    gram: Vec<f64>,
    xty: Vec<f64>,
    rows: usize,
}

impl OutcomeFitter {
    pub fn new(data: &ObservationTable, spec: &BasisSpec) -> Result<Self> {
        let basis = Basis::compile(spec, data.covariate_names())?;
        let p = basis.len();
        let mut design = vec![0.0; data.len() * p];
        for (i, o) in data.iter().enumerate() {
            basis.eval(o.w, o.x, o.a as f64, &mut design[i * p..(i + 1) * p]);
        }
        Ok(Self {
            basis,
            design,
            y: data.y().to_vec(),
            gram: vec![0.0; p * p],
            xty: vec![0.0; p],
            rows: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Absorbs rows up to (excluding) `rows`.
    pub fn extend_to(&mut self, rows: usize) {
        let p = self.basis.len();
        while self.rows < rows.min(self.y.len()) {
            let i = self.rows;
            let row = &self.design[i * p..(i + 1) * p];
            for a in 0..p {
                self.xty[a] += row[a] * self.y[i];
                for b in 0..p {
                    self.gram[a * p + b] += row[a] * row[b];
                }
            }
            self.rows += 1;
        }
    }

    pub fn fit(&self) -> Result<OutcomeModel> {
        let p = self.basis.len();
        let n = self.rows;
        if n < p + 1 {
            return Err(Error::TooFewRows { rows: n, columns: p });
        }
        let beta = solve_spd(&self.gram, &self.xty, self.basis.names())?;
        let rss: f64 = self.design[..n * p]
            .chunks_exact(p)
            .zip(&self.y[..n])
            .map(|(row, y)| {
                let r = y - row.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>();
                r * r
            })
            .sum();
        let sigma = (rss / n as f64).sqrt();
        Ok(OutcomeModel::from_coefficients(self.basis.clone(), beta, sigma))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn survival_examples() {
        let p = TierPartition::new(vec![-1.42]).unwrap();
        let mut s = [0.0];
        survival_into(2.5, 2.0, p.thresholds(), &mut s);
        assert_abs_diff_eq!(s[0], 1.0 - normal::cdf(-1.96), epsilon = 1e-15);
        assert_abs_diff_eq!(s[0], 0.9750, epsilon = 1e-4);
        survival_into(-1.42, 0.7, p.thresholds(), &mut s);
        assert_eq!(s[0], 0.5);
        survival_into(0.0, 0.0, p.thresholds(), &mut s);
        assert_eq!(s[0], 1.0);
    }

    #[test]
    fn tier_probs_examples() {
        let c = [-1.42, 1.09];
        let mut s = [0.0; 2];
        survival_into(-1.0, 2.0, &c, &mut s);
        let r = tier_probs_from_survival(&s);
        assert_abs_diff_eq!(r.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        // Phi(1.045) - Phi(-0.21), evaluated independently with scipy.
        assert_abs_diff_eq!(r[1], 0.435_154_678_721, epsilon = 1e-10);
        assert_abs_diff_eq!(r[1], 0.435, epsilon = 1e-3);

        let mut s1 = [0.0];
        survival_into(0.4, 1.0, &[0.4], &mut s1);
        assert_eq!(tier_probs_from_survival(&s1), vec![0.5, 0.5]);
    }

    #[test]
    fn constant_outcome_is_degenerate() {
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for i in 0..20 {
            t.push(&[i as f64 / 10.0], i % 2, (i % 3 == 0) as u8, 3.0).unwrap();
        }
        let m = fit_outcome(&t, &BasisSpec::new(["1"])).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.sigma, 0.0);
        assert_abs_diff_eq!(m.mean(&[0.0], 0, 1), 3.0, epsilon = 1e-12);
        let p = TierPartition::new(vec![2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.survival(&[0.0], 0, 0, &p), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn too_few_rows_and_rank_deficiency() {
        let mut t = ObservationTable::new(vec!["w1".into()]);
        t.push(&[0.0], 0, 0, 1.0).unwrap();
        t.push(&[1.0], 0, 1, 2.0).unwrap();
        let e = fit_outcome(&t, &BasisSpec::new(["1", "w1"])).unwrap_err();
        assert!(matches!(e, Error::TooFewRows { rows: 2, columns: 2 }));
        for i in 0..5 {
            t.push(&[i as f64], 0, 0, i as f64).unwrap();
        }
        let e = fit_outcome(&t, &BasisSpec::new(["1", "w1", "x"])).unwrap_err();
        assert!(matches!(e, Error::SingularDesign(_)));
    }

    #[test]
    fn incremental_fit_equals_batch_fit() {
        let mut t = ObservationTable::new(vec!["w1".into()]);
        for i in 0..30 {
            let w = (i as f64 * 0.37).sin();
            t.push(&[w], i % 2, (i % 3 == 0) as u8, 1.0 + 2.0 * w + (i as f64 * 1.3).cos()).unwrap();
        }
        let spec = BasisSpec::new(["1", "w1", "a", "x"]);
        let mut inc = OutcomeFitter::new(&t, &spec).unwrap();
        inc.extend_to(20);
        let _ = inc.fit().unwrap();
        inc.extend_to(30);
        let a = inc.fit().unwrap();
        let b = fit_outcome(&t, &spec).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a.sigma, b.sigma, epsilon = 1e-12);
    }
}
