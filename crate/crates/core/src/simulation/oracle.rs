//! Ground truth for the benchmark design, by Monte Carlo and by quadrature.
//!
//! Both routes are written against the closed-form conditional laws of the
//! structural model and share no code with the estimators.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use super::scm::ScmParams;
use crate::error::{Error, Result};
use crate::normal;
use crate::partition::TierPartition;
use crate::quadrature::gauss_legendre;
use crate::rng::{stream, Purpose};

pub const MIN_MC_SAMPLES: usize = 10_000;
pub const DEFAULT_QUADRATURE_NODES: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub stratum: i64,
    pub pb_true: f64,
    pub ph_true: f64,
    pub lower_true: f64,
    pub upper_true: f64,
    pub mc_samples: usize,
    /// Standard error of `pb_true`.
    pub mc_std_error: f64,
    /// Standard errors of `lower_true` and `upper_true`.
    pub bound_std_errors: [f64; 2],
    pub quadrature: QuadratureTruth,
}

/// Stratum-level truths integrated over `W1` with Gauss-Legendre nodes and
/// summed over `W2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureTruth {
    pub pb: f64,
    pub ph: f64,
    pub lower: f64,
    pub upper: f64,
    pub harm_lower: f64,
    pub harm_upper: f64,
    pub mono_lower: f64,
    pub mono_upper: f64,
}

fn check_stratum(stratum: i64) -> Result<()> {
    if stratum == 0 || stratum == 1 {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown stratum {stratum}; the design has strata 0 and 1")))
    }
}

/// `P(Y^a > c_k | w)` for each threshold.
fn exceed(mu: f64, sigma: f64, c: &[f64]) -> Vec<f64> {
    c.iter().map(|&ck| 1.0 - normal::cdf((ck - mu) / sigma)).collect()
}

/// `P(Y^a in I_k | w)`, `k = 1..K`.
fn in_tier(mu: f64, sigma: f64, c: &[f64]) -> Vec<f64> {
    let mut cdf = vec![0.0];
    cdf.extend(c.iter().map(|&ck| normal::cdf((ck - mu) / sigma)));
    cdf.push(1.0);
    cdf.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Fréchet bounds of `sum_k P(Y^from in I_k, Y^to > c_k | w)`.
fn frechet(from_tier: &[f64], to_exceed: &[f64]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut up = 0.0;
    for (r, s) in from_tier.iter().zip(to_exceed) {
        lo += (r + s - 1.0).max(0.0);
        up += r.min(*s);
    }
    (lo, up)
}

/// `P(Y0 in I_k, Y1 > c_k)` summed over `k`, with `Y1 = Y0 + d` exactly.
fn shared_noise_crossing(mu0: f64, d: f64, sigma: f64, c: &[f64], upward: bool) -> f64 {
    let mut edges = vec![f64::NEG_INFINITY];
    edges.extend_from_slice(c);
    edges.push(f64::INFINITY);
    let cdf = |t: f64| normal::cdf((t - mu0) / sigma);
    let mut total = 0.0;
    for k in 1..edges.len() - 1 {
        let (lo, hi) = if upward {
            if d <= 0.0 {
                continue;
            }
            // Y0 in (c_{k-1}, c_k] and Y0 > c_k - d
            (edges[k - 1].max(edges[k] - d), edges[k])
        } else {
            if d >= 0.0 {
                continue;
            }
            // Y0 > c_k and Y0 + d in (c_{k-1}, c_k]
            (edges[k].max(edges[k - 1] - d), edges[k] - d)
        };
        if hi > lo {
            total += cdf(hi) - cdf(lo);
        }
    }
    total
}

pub fn quadrature_truth(params: &ScmParams, stratum: i64, partition: &TierPartition, nodes: usize) -> Result<QuadratureTruth> {
    check_stratum(stratum)?;
    params.validate()?;
    let c = partition.thresholds();
    let k_tiers = partition.tiers();
    let (z, wt) = gauss_legendre(nodes);
    let p_w2 = params.p_w2();
    let mut t = QuadratureTruth {
        pb: 0.0,
        ph: 0.0,
        lower: 0.0,
        upper: 0.0,
        harm_lower: 0.0,
        harm_upper: 0.0,
        mono_lower: 0.0,
        mono_upper: 0.0,
    };
    for (w2, pw) in [(0.0, 1.0 - p_w2), (1.0, p_w2)] {
        for (&w1, &q) in z.iter().zip(&wt) {
            // density of W1 is 1/2 on (-1, 1)
            let mass = 0.5 * q * pw;
            let mu0 = params.outcome_mean(w1, w2, stratum, 0);
            let mu1 = params.outcome_mean(w1, w2, stratum, 1);
            let (r0, r1) = (in_tier(mu0, params.sigma, c), in_tier(mu1, params.sigma, c));
            let (s0, s1) = (exceed(mu0, params.sigma, c), exceed(mu1, params.sigma, c));
            let (lo, up) = frechet(&r0, &s1);
            let (hlo, hup) = frechet(&r1, &s0);
            t.lower += mass * lo;
            t.upper += mass * up;
            t.harm_lower += mass * hlo;
            t.harm_upper += mass * hup;
            if k_tiers >= 3 {
                let base = s1[0] - r0[k_tiers - 1];
                let inner = 1..k_tiers - 1;
                let min_sum: f64 = inner.clone().map(|k| r0[k].min(r1[k])).sum();
                let max_sum: f64 = inner.map(|k| (r0[k] + r1[k] - 1.0).max(0.0)).sum();
                t.mono_lower += mass * (base - min_sum);
                t.mono_upper += mass * (base - max_sum);
            }
            let d = mu1 - mu0;
            t.pb += mass * shared_noise_crossing(mu0, d, params.sigma, c, true);
            t.ph += mass * shared_noise_crossing(mu0, d, params.sigma, c, false);
        }
    }
    if k_tiers < 3 {
        t.mono_lower = f64::NAN;
        t.mono_upper = f64::NAN;
    }
    Ok(t)
}

pub fn oracle_truth(stratum: i64, partition: &TierPartition, mc_samples: usize, seed: u64) -> Result<OracleResult> {
    oracle_truth_with(&ScmParams::default(), stratum, partition, mc_samples, seed)
}

/// Monte Carlo over `(v, W1, u_Y)` drawn conditionally on `X = stratum`,
/// plus the quadrature cross-check.
pub fn oracle_truth_with(
    params: &ScmParams,
    stratum: i64,
    partition: &TierPartition,
    mc_samples: usize,
    seed: u64,
) -> Result<OracleResult> {
    check_stratum(stratum)?;
    params.validate()?;
    if mc_samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!("oracle needs at least {MIN_MC_SAMPLES} Monte Carlo samples")));
    }
    let c = partition.thresholds();
    let mut rng = stream(seed, Purpose::Oracle);
    let noise = Normal::new(0.0, params.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let cut2 = params.w2_cutoff * params.w2_cutoff;
    let (mut pb, mut ph) = (0usize, 0usize);
    let (mut lo_sum, mut lo_sq, mut up_sum, mut up_sq) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..mc_samples {
        let mag: f64 = rng.random_range(0.0..1.0);
        let v = if stratum == 1 { 1.0 - mag } else { -mag };
        let w1: f64 = rng.random_range(-1.0..1.0);
        let u: f64 = noise.sample(&mut rng);
        let w2 = f64::from(v * v > cut2);
        let mu0 = params.outcome_mean(w1, w2, stratum, 0);
        let mu1 = params.outcome_mean(w1, w2, stratum, 1);
        let t0 = c.partition_point(|&ck| ck < mu0 + u);
        let t1 = c.partition_point(|&ck| ck < mu1 + u);
        pb += usize::from(t1 > t0);
        ph += usize::from(t1 < t0);
        let (lo, up) = frechet(&in_tier(mu0, params.sigma, c), &exceed(mu1, params.sigma, c));
        lo_sum += lo;
        lo_sq += lo * lo;
        up_sum += up;
        up_sq += up * up;
    }
    let n = mc_samples as f64;
    let pb_true = pb as f64 / n;
    let se = |sum: f64, sq: f64| ((sq / n - (sum / n).powi(2)).max(0.0) / n).sqrt();
    Ok(OracleResult {
        stratum,
        pb_true,
        ph_true: ph as f64 / n,
        lower_true: lo_sum / n,
        upper_true: up_sum / n,
        mc_samples,
        mc_std_error: (pb_true * (1.0 - pb_true) / n).sqrt(),
        bound_std_errors: [se(lo_sum, lo_sq), se(up_sum, up_sq)],
        quadrature: quadrature_truth(params, stratum, partition, DEFAULT_QUADRATURE_NODES)?,
    })
}
