//! Coverage study on the simulated design: repeated draws, every selected
//! estimator, marginal and joint Wald coverage of the true bounds.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::one_step::{check_bandwidth, corrected_bounds, split_sample};
use super::s1s::{s1s, S1sConfig};
use crate::bounds::{plugin_bounds, BoundsEstimate, Smoother};
use crate::error::{Error, Result};
use crate::normal;
use crate::nuisance::{NuisanceConfig, NuisancePair};
use crate::partition::TierPartition;
use crate::rng::child_seed;
use crate::simulation::{quadrature_truth, simulate, QuadratureTruth, ScmParams};
use crate::simulation::oracle::DEFAULT_QUADRATURE_NODES;

pub const CSV_HEADER: &str = "estimator,stratum,cov_lower_pct,cov_upper_pct,cov_joint_pct,mse_lower,mse_upper,reps,n,l,seed";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorKind {
    PlugIn,
    OneStep,
    Gelu { h: f64 },
    S1s,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorKind::PlugIn => f.write_str("plug-in"),
            EstimatorKind::OneStep => f.write_str("1S"),
            EstimatorKind::Gelu { h } => write!(f, "1S-gelu:{h}"),
            EstimatorKind::S1s => f.write_str("S1S"),
        }
    }
}

impl Serialize for EstimatorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EstimatorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let parsed = EstimatorKind::parse_list(&s, DEFAULT_GELU_H).map_err(serde::de::Error::custom)?;
        match parsed.as_slice() {
            [one] => Ok(*one),
            _ => Err(serde::de::Error::custom(format!("`{s}` names more than one estimator"))),
        }
    }
}

pub const DEFAULT_GELU_H: f64 = 0.05;

impl EstimatorKind {
    /// Parses a comma list such as `plug-in,1s,1s-gelu:0.15,s1s` or `all`.
    /// A bare `1s-gelu` takes `default_h`.
    pub fn parse_list(s: &str, default_h: f64) -> Result<Vec<Self>> {
        let mut out = Vec::new();
        for raw in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let t = raw.to_ascii_lowercase();
            let (name, h) = match t.split_once(':') {
                Some((name, h)) => {
                    let h: f64 = h
                        .parse()
                        .map_err(|_| Error::Config(format!("bad smoothing value in estimator `{raw}`")))?;
                    (name.to_string(), Some(h))
                }
                None => (t.clone(), None),
            };
            match (name.as_str(), h) {
                ("all", None) => out.extend([
                    EstimatorKind::PlugIn,
                    EstimatorKind::OneStep,
                    EstimatorKind::Gelu { h: 0.05 },
                    EstimatorKind::Gelu { h: 0.15 },
                    EstimatorKind::S1s,
                ]),
                ("plug-in" | "plugin", None) => out.push(EstimatorKind::PlugIn),
                ("1s" | "one-step", None) => out.push(EstimatorKind::OneStep),
                ("1s-gelu" | "gelu", h) => {
                    let h = h.unwrap_or(default_h);
                    check_bandwidth(h)?;
                    out.push(EstimatorKind::Gelu { h });
                }
                ("s1s", None) => out.push(EstimatorKind::S1s),
                _ => return Err(Error::Config(format!("unknown estimator `{raw}`"))),
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no estimator selected".into()));
        }
        let mut dedup: Vec<Self> = Vec::with_capacity(out.len());
        for e in out {
            if !dedup.contains(&e) {
                dedup.push(e);
            }
        }
        Ok(dedup)
    }

    pub fn needs_split(&self) -> bool {
        matches!(self, EstimatorKind::OneStep | EstimatorKind::Gelu { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "paper" => Ok(Profile::Paper),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected desk or paper)"))),
        }
    }

    /// `(n, l, reps)`.
    pub fn scale(self) -> (usize, usize, usize) {
        match self {
            Profile::Desk => (1500, 600, 60),
            Profile::Paper => (5000, 2000, 200),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub estimators: Vec<EstimatorKind>,
    pub n: usize,
    pub l: usize,
    pub reps: usize,
    pub seed: u64,
    /// Training fraction for the split estimators.
    pub split: f64,
    pub partition: TierPartition,
    pub nuisance: NuisanceConfig,
    pub ridge: f64,
    pub cold_refit_every: usize,
    /// Level of the per-bound Wald intervals.
    pub level: f64,
}

impl BenchmarkConfig {
    pub fn from_profile(profile: Profile, estimators: Vec<EstimatorKind>, seed: u64) -> Self {
        let (n, l, reps) = profile.scale();
        Self {
            estimators,
            n,
            l,
            reps,
            seed,
            split: 0.5,
            partition: TierPartition::new(vec![-1.42, 1.09]).expect("static thresholds"),
            nuisance: NuisanceConfig::default(),
            ridge: 1e-8,
            cold_refit_every: 250,
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::Config("no estimator selected".into()));
        }
        if self.reps == 0 || self.n < 2 {
            return Err(Error::Config("benchmark needs reps >= 1 and n >= 2".into()));
        }
        if self.estimators.contains(&EstimatorKind::S1s) && !(self.l > 0 && self.l < self.n) {
            return Err(Error::Config(format!("S1S needs 0 < l < n, got l = {} and n = {}", self.l, self.n)));
        }
        if self.estimators.iter().any(EstimatorKind::needs_split) && !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::Config(format!("split fraction must lie in (0, 1), got {}", self.split)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level must lie in (0, 1), got {}", self.level)));
        }
        self.nuisance.propensity.validate()
    }
}

/// One estimator's output in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub rep: usize,
    pub estimator: EstimatorKind,
    pub result: std::result::Result<Vec<BoundsEstimate>, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub estimator: EstimatorKind,
    pub stratum: i64,
    pub cov_lower_pct: f64,
    pub cov_upper_pct: f64,
    pub cov_joint_pct: f64,
    pub mse_lower: f64,
    pub mse_upper: f64,
    pub reps: usize,
    pub n: usize,
    pub l: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureCount {
    pub estimator: EstimatorKind,
    pub failed_reps: usize,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratumTruth {
    pub stratum: i64,
    pub truth: QuadratureTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub failures: Vec<FailureCount>,
    pub truths: Vec<StratumTruth>,
    #[serde(skip)]
    pub outcomes: Vec<ReplicationOutcome>,
}

impl BenchmarkReport {
    pub fn row(&self, estimator: EstimatorKind, stratum: i64) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.stratum == stratum)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.estimator,
                r.stratum,
                r.cov_lower_pct,
                r.cov_upper_pct,
                r.cov_joint_pct,
                r.mse_lower,
                r.mse_upper,
                r.reps,
                r.n,
                r.l,
                r.seed
            )?;
        }
        Ok(())
    }
}

fn run_replication(cfg: &BenchmarkConfig, rep: usize) -> Vec<ReplicationOutcome> {
    let seed = child_seed(cfg.seed, rep as u64);
    let data = match simulate(cfg.n, seed) {
        Ok(s) => s.table,
        Err(e) => {
            return cfg
                .estimators
                .iter()
                .map(|&estimator| ReplicationOutcome {
                    rep,
                    estimator,
                    result: Err(e.to_string()),
                })
                .collect()
        }
    };
    let strata = data.strata();
    let mut split_fit: Option<std::result::Result<(NuisancePair, crate::data::ObservationTable), String>> = None;
    let mut full_fit: Option<std::result::Result<NuisancePair, String>> = None;
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &estimator in &cfg.estimators {
        let result = match estimator {
            EstimatorKind::PlugIn => {
                let fit = full_fit.get_or_insert_with(|| NuisancePair::fit(&data, &cfg.nuisance).map_err(|e| e.to_string()));
                fit.as_ref().map_err(Clone::clone).and_then(|nu| {
                    strata
                        .iter()
                        .map(|&x| plugin_bounds(nu, &data, x, &cfg.partition))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| e.to_string())
                })
            }
            EstimatorKind::OneStep | EstimatorKind::Gelu { .. } => {
                let smoother = match estimator {
                    EstimatorKind::Gelu { h } => Smoother::Gelu { h },
                    _ => Smoother::Hard,
                };
                let fit = split_fit.get_or_insert_with(|| {
                    let (train, eval) = split_sample(&data, cfg.split, seed).map_err(|e| e.to_string())?;
                    let nu = NuisancePair::fit(&train, &cfg.nuisance).map_err(|e| e.to_string())?;
                    Ok((nu, eval))
                });
                fit.as_ref().map_err(Clone::clone).and_then(|(nu, eval)| {
                    strata
                        .iter()
                        .map(|&x| corrected_bounds(nu, eval, x, &cfg.partition, smoother))
                        .collect::<Result<Vec<_>>>()
                        .map_err(|e| e.to_string())
                })
            }
            EstimatorKind::S1s => {
                let s1s_cfg = S1sConfig {
                    l: cfg.l,
                    nuisance: cfg.nuisance.clone(),
                    seed,
                    cold_refit_every: cfg.cold_refit_every,
                    ridge: cfg.ridge,
                    permute: true,
                };
                s1s(&data, &cfg.partition, &s1s_cfg).map(|r| r.estimates).map_err(|e| e.to_string())
            }
        };
        out.push(ReplicationOutcome { rep, estimator, result });
    }
    out
}

#[derive(Default)]
struct Tally {
    reps: usize,
    lower: usize,
    upper: usize,
    joint: usize,
    se_lower: f64,
    se_upper: f64,
}

pub fn coverage_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let params = ScmParams::default();
    let truths = [0, 1]
        .iter()
        .map(|&x| {
            Ok(StratumTruth {
                stratum: x,
                truth: quadrature_truth(&params, x, &cfg.partition, DEFAULT_QUADRATURE_NODES)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let outcomes: Vec<ReplicationOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| run_replication(cfg, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let z = normal::quantile(1.0 - (1.0 - cfg.level) / 2.0);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &estimator in &cfg.estimators {
        let mine: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.estimator == estimator).collect();
        let failed: Vec<&String> = mine.iter().filter_map(|o| o.result.as_ref().err()).collect();
        failures.push(FailureCount {
            estimator,
            failed_reps: failed.len(),
            first_error: failed.first().map(|s| s.to_string()),
        });
        for t in &truths {
            let mut tally = Tally::default();
            for est in mine.iter().filter_map(|o| o.result.as_ref().ok()) {
                let Some(e) = est.iter().find(|e| e.stratum == t.stratum) else { continue };
                let Some((se_l, se_u)) = e.std_errors() else { continue };
                let lo_ok = (e.lower - t.truth.lower).abs() <= z * se_l;
                let up_ok = (e.upper - t.truth.upper).abs() <= z * se_u;
                tally.reps += 1;
                tally.lower += usize::from(lo_ok);
                tally.upper += usize::from(up_ok);
                tally.joint += usize::from(lo_ok && up_ok);
                tally.se_lower += (e.lower - t.truth.lower).powi(2);
                tally.se_upper += (e.upper - t.truth.upper).powi(2);
            }
            let r = tally.reps.max(1) as f64;
            rows.push(BenchmarkRow {
                estimator,
                stratum: t.stratum,
                cov_lower_pct: 100.0 * tally.lower as f64 / r,
                cov_upper_pct: 100.0 * tally.upper as f64 / r,
                cov_joint_pct: 100.0 * tally.joint as f64 / r,
                mse_lower: tally.se_lower / r,
                mse_upper: tally.se_upper / r,
                reps: tally.reps,
                n: cfg.n,
                l: cfg.l,
                seed: cfg.seed,
            });
        }
    }
    Ok(BenchmarkReport {
        rows,
        failures,
        truths,
        outcomes,
    })
}
