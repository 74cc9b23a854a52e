use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered cut-points `c_1 < ... < c_{K-1}` splitting the outcome line into
/// `K` tiers `I_k = (c_{k-1}, c_k]`, with `c_0 = -inf` and `c_K = +inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TierPartition {
    thresholds: Vec<f64>,
}

impl TierPartition {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        let ordered = thresholds.windows(2).all(|w| w[0] < w[1]);
        if thresholds.is_empty() || !ordered || thresholds.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPartition(thresholds));
        }
        Ok(Self { thresholds })
    }

    /// Partition for outcomes that are already tier labels `1..=k`.
    ///
    /// Each label is its own interval midpoint, so label `j` falls in tier
    /// `j` under thresholds `1.5, 2.5, ..., k - 0.5`.
    pub fn for_tier_labels(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("need at least 2 tiers, got {k}")));
        }
        Self::new((1..k).map(|j| j as f64 + 0.5).collect())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let values = s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad threshold `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(values)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    /// Number of tiers `K`.
    pub fn tiers(&self) -> usize {
        self.thresholds.len() + 1
    }

    /// Zero-based tier index of `y`: 0 for `y <= c_1`, `K - 1` above `c_{K-1}`.
    pub fn tier_of(&self, y: f64) -> usize {
        self.thresholds.partition_point(|&c| c < y)
    }
}

impl TryFrom<Vec<f64>> for TierPartition {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TierPartition> for Vec<f64> {
    fn from(p: TierPartition) -> Self {
        p.thresholds
    }
}
