//! Run configuration: every knob optional, so that a JSON file and command
//! line flags can be layered (flags win) before defaults are applied.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nuisance::{BasisSpec, Link, NuisanceConfig, PropensityConfig};
use crate::partition::TierPartition;

pub const DEFAULT_SEED: u64 = 1;
pub const DESIGN_THRESHOLDS: [f64; 2] = [-1.42, 1.09];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Simulate,
    Estimate,
    Benchmark,
    Witness,
    Oracle,
}

/// Either `[lo, hi]` or a single symmetric `eps` meaning `[eps, 1 - eps]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Clip {
    Symmetric(f64),
    Range([f64; 2]),
}

impl Clip {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad clip `{s}`")))?;
        match parts.as_slice() {
            [e] => Ok(Clip::Symmetric(*e)),
            [lo, hi] => Ok(Clip::Range([*lo, *hi])),
            _ => Err(Error::Config(format!("clip takes one or two numbers, got `{s}`"))),
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            Clip::Symmetric(e) => (e, 1.0 - e),
            Clip::Range([lo, hi]) => (lo, hi),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    /// Comma list, e.g. `"plug-in,1s,s1s"` or `"all"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimators: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Monte-Carlo draws for uncertainty regions.
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub link: Option<Link>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_outcome: Option<BasisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_propensity: Option<BasisSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clip: Option<Clip>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cold_refit_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harm: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monotone: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub with_oracle: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mc: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margins0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub margins1: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    /// Not echoed in reports: outputs must not depend on it.
    #[serde(skip_serializing)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_json_path(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config file `{}`: {e}", p.display())))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: &RunConfig) -> Self {
        overlay!(
            self, top, command, thresholds, estimators, n, l, seed, reps, h, draws, level, split, link,
            basis_outcome, basis_propensity, clip, ridge, cold_refit_every, harm, monotone, with_oracle,
            profile, mc, k, margins0, margins1, input, threads
        );
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn partition(&self) -> Result<TierPartition> {
        TierPartition::new(self.thresholds.clone().unwrap_or_else(|| DESIGN_THRESHOLDS.to_vec()))
    }

    pub fn nuisance(&self) -> Result<NuisanceConfig> {
        let mut propensity = PropensityConfig::default();
        if let Some(link) = self.link {
            propensity.link = link;
        }
        if let Some(b) = &self.basis_propensity {
            propensity.basis = b.clone();
        }
        if let Some(c) = self.clip {
            propensity.clip = c.bounds();
        }
        propensity.validate()?;
        Ok(NuisanceConfig {
            propensity,
            outcome_basis: self.basis_outcome.clone().unwrap_or_else(BasisSpec::saturated_outcome),
        })
    }

    /// The configuration with every default used by `command` written out,
    /// for echoing into reports.
    pub fn resolved(&self, command: Command) -> Result<RunConfig> {
        let mut r = self.clone();
        r.command = Some(command);
        r.seed = Some(self.seed());
        r.threads = None;
        let nu = self.nuisance()?;
        match command {
            Command::Simulate => {
                r.with_oracle = Some(self.with_oracle.unwrap_or(false));
            }
            Command::Estimate | Command::Benchmark => {
                r.thresholds = Some(self.partition()?.thresholds().to_vec());
                r.link = Some(nu.propensity.link);
                r.basis_propensity = Some(nu.propensity.basis.clone());
                r.basis_outcome = Some(nu.outcome_basis.clone());
                r.clip = Some(Clip::Range([nu.propensity.clip.0, nu.propensity.clip.1]));
                r.ridge = Some(self.ridge.unwrap_or(1e-8));
                r.cold_refit_every = Some(self.cold_refit_every.unwrap_or(250));
                r.level = Some(self.level.unwrap_or(0.95));
                r.h = Some(self.h.unwrap_or(crate::inference::benchmark::DEFAULT_GELU_H));
                if command == Command::Estimate {
                    r.draws = Some(self.draws.unwrap_or(crate::inference::region::DEFAULT_DRAWS));
                    r.estimators = Some(self.estimators.clone().unwrap_or_else(|| "plug-in".into()));
                }
            }
            Command::Witness | Command::Oracle => {}
        }
        Ok(r)
    }
}
