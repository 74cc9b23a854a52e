//! Command-line front end. `run` parses arguments, executes one command and
//! returns the process exit code.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::bounds::{harm_bounds, mono_bounds, plugin_bounds, BoundsEstimate, Smoother};
use crate::config::{Clip, Command, RunConfig};
use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::inference::benchmark::{BenchmarkConfig, BenchmarkRow, FailureCount, Profile, StratumTruth};
use crate::inference::{
    coverage_benchmark, one_step_split, s1s, uncertainty_region, EstimatorKind, S1sConfig, S1sDiagnostics,
    StabilizerState, UncertaintyRegion,
};
use crate::nuisance::{BasisSpec, Link, NuisancePair};
use crate::partition::TierPartition;
use crate::rng::child_seed;
use crate::simulation::{nonidentifiability_witness, oracle_truth, simulate, OracleResult, Witness};
use crate::VERSION;

#[derive(Debug, Parser)]
#[command(name = "tierbound", version, about = "Bounds and inference for the probability of tiered benefit")]
pub struct Cli {
    /// JSON file with run settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Draw a sample from the benchmark design and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate bounds on a CSV with columns x, a, y and covariates w*.
    Estimate(EstimateArgs),
    /// Coverage study over repeated simulated samples.
    Benchmark(BenchmarkArgs),
    /// Two monotone joint laws with the same margins and different benefit.
    Witness(WitnessArgs),
    /// Ground-truth benefit and bounds for the benchmark design.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Append the potential outcomes y0, y1.
    #[arg(long)]
    pub with_oracle: bool,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<String>,
    #[arg(long)]
    pub link: Option<String>,
    /// Outcome basis terms, comma list or JSON array.
    #[arg(long)]
    pub basis_outcome: Option<String>,
    #[arg(long)]
    pub basis_propensity: Option<String>,
    /// Propensity clipping: `eps` or `lo,hi`.
    #[arg(long)]
    pub clip: Option<String>,
    /// Relative ridge floor for stabilizing matrices.
    #[arg(long)]
    pub ridge: Option<f64>,
    /// Training fraction for the one-step estimators.
    #[arg(long)]
    pub split: Option<f64>,
    /// Default GELU smoothing for a bare `1s-gelu`.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV.
    #[arg(short = 'i', long)]
    pub input: Option<PathBuf>,
    #[arg(long = "estimator", alias = "estimators")]
    pub estimators: Option<String>,
    /// Initial batch size for S1S.
    #[arg(long)]
    pub l: Option<usize>,
    /// Monte-Carlo draws for uncertainty regions.
    #[arg(long = "H")]
    pub draws: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Also report bounds on the probability of tiered harm.
    #[arg(long)]
    pub harm: bool,
    /// Also report bounds under a nonharmful exposure (K >= 3).
    #[arg(long)]
    pub monotone: bool,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long = "estimators", alias = "estimator")]
    pub estimators: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub n: Option<u64>,
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// CSV table; stdout when absent.
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
    /// JSON summary with failures and the resolved config.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub margins0: Option<String>,
    #[arg(long)]
    pub margins1: Option<String>,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    /// Restrict to one stratum (0 or 1).
    #[arg(long)]
    pub stratum: Option<i64>,
    /// Monte-Carlo draws per stratum.
    #[arg(long)]
    pub mc: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(short = 'o', long)]
    pub output: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number `{t}` in {what}"))))
        .collect()
}

impl ModelArgs {
    fn to_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            thresholds: self
                .thresholds
                .as_deref()
                .map(|s| TierPartition::parse(s).map(|p| p.thresholds().to_vec()))
                .transpose()?,
            link: self.link.as_deref().map(Link::parse).transpose()?,
            basis_outcome: self.basis_outcome.as_deref().map(BasisSpec::parse).transpose()?,
            basis_propensity: self.basis_propensity.as_deref().map(BasisSpec::parse).transpose()?,
            clip: self.clip.as_deref().map(Clip::parse).transpose()?,
            ridge: self.ridge,
            split: self.split,
            h: self.h,
            seed: self.seed,
            ..Default::default()
        })
    }
}

fn flags_config(cmd: &Cmd) -> Result<RunConfig> {
    Ok(match cmd {
        Cmd::Simulate(a) => RunConfig {
            n: a.n.map(|v| v as usize),
            seed: a.seed,
            with_oracle: a.with_oracle.then_some(true),
            ..Default::default()
        },
        Cmd::Estimate(a) => RunConfig {
            input: a.input.clone(),
            estimators: a.estimators.clone(),
            l: a.l,
            draws: a.draws,
            level: a.level,
            harm: a.harm.then_some(true),
            monotone: a.monotone.then_some(true),
            ..a.model.to_config()?
        },
        Cmd::Benchmark(a) => RunConfig {
            profile: a.profile.clone(),
            estimators: a.estimators.clone(),
            n: a.n.map(|v| v as usize),
            l: a.l,
            reps: a.reps.map(|v| v as usize),
            level: a.level,
            ..a.model.to_config()?
        },
        Cmd::Witness(a) => RunConfig {
            k: a.k,
            margins0: a.margins0.as_deref().map(|s| parse_list(s, "margins0")).transpose()?,
            margins1: a.margins1.as_deref().map(|s| parse_list(s, "margins1")).transpose()?,
            ..Default::default()
        },
        Cmd::Oracle(a) => RunConfig {
            mc: a.mc,
            seed: a.seed,
            thresholds: a
                .thresholds
                .as_deref()
                .map(|s| TierPartition::parse(s).map(|p| p.thresholds().to_vec()))
                .transpose()?,
            ..Default::default()
        },
    })
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::io(p.display().to_string(), e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn envelope<T: Serialize>(config: &RunConfig, body: T) -> Result<Vec<u8>> {
    json_bytes(&Envelope {
        version: VERSION,
        config,
        body,
    })
}

/// Parses `args`, runs the command and returns the exit code, printing
/// errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => RunConfig::from_json_path(p)?,
        None => RunConfig::default(),
    };
    let mut flags = flags_config(&cli.command)?;
    flags.threads = cli.threads;
    let cfg = file.overlay(&flags);
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Cmd::Simulate(a) => cmd_simulate(&cfg, a.output.as_deref()),
        Cmd::Estimate(a) => cmd_estimate(&cfg, a.output.as_deref()),
        Cmd::Benchmark(a) => cmd_benchmark(&cfg, a.output.as_deref(), a.summary.as_deref()),
        Cmd::Witness(a) => cmd_witness(&cfg, a.output.as_deref()),
        Cmd::Oracle(a) => cmd_oracle(&cfg, a.stratum, a.output.as_deref()),
    })
}

pub fn cmd_simulate(cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let n = cfg.n.ok_or_else(|| Error::Config("simulate needs --n".into()))?;
    if n == 0 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    let sample = simulate(n, cfg.seed())?;
    let mut buf = Vec::new();
    let oracle = cfg.with_oracle.unwrap_or(false).then_some(&sample.potential);
    sample.table.write_csv(&mut buf, oracle)?;
    emit(output, &buf)
}

#[derive(Debug, Serialize)]
struct StratumCount {
    stratum: i64,
    units: usize,
}

#[derive(Debug, Serialize)]
struct EstimatorReport {
    estimator: String,
    estimates: Vec<BoundsEstimate>,
    regions: Vec<UncertaintyRegion>,
}

#[derive(Debug, Serialize)]
struct S1sReport {
    permutation: Vec<usize>,
    states: Vec<(i64, StabilizerState)>,
    diagnostics: S1sDiagnostics,
}

#[derive(Debug, Serialize)]
struct EstimateBody {
    command: &'static str,
    n_units: usize,
    strata: Vec<StratumCount>,
    results: Vec<EstimatorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    harm: Option<Vec<BoundsEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monotone: Option<Vec<BoundsEstimate>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s1s: Option<S1sReport>,
    nuisance: NuisancePair,
}

pub fn cmd_estimate(cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let input = cfg
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("estimate needs an input CSV (--input)".into()))?;
    let resolved = cfg.resolved(Command::Estimate)?;
    let data = ObservationTable::read_csv_path(input)?;
    let body = estimate_report(&data, &resolved)?;
    emit(output, &envelope(&resolved, body)?)
}

fn estimate_report(data: &ObservationTable, cfg: &RunConfig) -> Result<EstimateBody> {
    let partition = cfg.partition()?;
    let nuisance_cfg = cfg.nuisance()?;
    let seed = cfg.seed();
    let level = cfg.level.unwrap_or(0.95);
    let draws = cfg.draws.unwrap_or(crate::inference::region::DEFAULT_DRAWS);
    let h = cfg.h.unwrap_or(crate::inference::benchmark::DEFAULT_GELU_H);
    let mut kinds = EstimatorKind::parse_list(cfg.estimators.as_deref().unwrap_or("plug-in"), h)?;
    if !kinds.contains(&EstimatorKind::PlugIn) {
        kinds.insert(0, EstimatorKind::PlugIn);
    }
    if kinds.iter().any(EstimatorKind::needs_split) && cfg.split.is_none() {
        return Err(Error::Config(
            "the one-step estimators need held-out data: pass --split with the training fraction".into(),
        ));
    }
    let l = if kinds.contains(&EstimatorKind::S1s) {
        Some(cfg.l.ok_or_else(|| Error::Config("S1S needs an initial batch size (--l)".into()))?)
    } else {
        None
    };
    let strata = data.strata();
    let full = NuisancePair::fit(data, &nuisance_cfg)?;

    let mut results = Vec::new();
    let mut s1s_report = None;
    for (ei, kind) in kinds.iter().enumerate() {
        let estimates = match *kind {
            EstimatorKind::PlugIn => strata
                .iter()
                .map(|&x| plugin_bounds(&full, data, x, &partition))
                .collect::<Result<Vec<_>>>()?,
            EstimatorKind::OneStep => {
                one_step_split(data, &nuisance_cfg, &partition, cfg.split.unwrap_or(0.5), seed, Smoother::Hard)?
            }
            EstimatorKind::Gelu { h } => {
                one_step_split(data, &nuisance_cfg, &partition, cfg.split.unwrap_or(0.5), seed, Smoother::Gelu { h })?
            }
            EstimatorKind::S1s => {
                let s_cfg = S1sConfig {
                    l: l.expect("checked above"),
                    nuisance: nuisance_cfg.clone(),
                    seed,
                    cold_refit_every: cfg.cold_refit_every.unwrap_or(250),
                    ridge: cfg.ridge.unwrap_or(1e-8),
                    permute: true,
                };
                let r = s1s(data, &partition, &s_cfg)?;
                s1s_report = Some(S1sReport {
                    permutation: r.permutation,
                    states: r.states.into_iter().collect(),
                    diagnostics: r.diagnostics,
                });
                r.estimates
            }
        };
        let region_seed = child_seed(seed, ei as u64);
        let regions = estimates
            .iter()
            .enumerate()
            .map(|(si, e)| uncertainty_region(e, level, draws, child_seed(region_seed, si as u64)))
            .collect::<Result<Vec<_>>>()?;
        results.push(EstimatorReport {
            estimator: kind.to_string(),
            estimates,
            regions,
        });
    }
    let harm = cfg
        .harm
        .unwrap_or(false)
        .then(|| strata.iter().map(|&x| harm_bounds(&full, data, x, &partition)).collect::<Result<Vec<_>>>())
        .transpose()?;
    let monotone = cfg
        .monotone
        .unwrap_or(false)
        .then(|| strata.iter().map(|&x| mono_bounds(&full, data, x, &partition)).collect::<Result<Vec<_>>>())
        .transpose()?;
    Ok(EstimateBody {
        command: "estimate",
        n_units: data.len(),
        strata: data
            .stratum_counts()
            .into_iter()
            .map(|(stratum, units)| StratumCount { stratum, units })
            .collect(),
        results,
        harm,
        monotone,
        s1s: s1s_report,
        nuisance: full,
    })
}

#[derive(Debug, Serialize)]
struct BenchmarkSummary<'a> {
    command: &'static str,
    rows: &'a [BenchmarkRow],
    failures: &'a [FailureCount],
    truths: &'a [StratumTruth],
}

pub fn benchmark_config(cfg: &RunConfig) -> Result<BenchmarkConfig> {
    let profile = Profile::parse(cfg.profile.as_deref().unwrap_or("desk"))?;
    let h = cfg.h.unwrap_or(crate::inference::benchmark::DEFAULT_GELU_H);
    let kinds = EstimatorKind::parse_list(cfg.estimators.as_deref().unwrap_or("all"), h)?;
    let mut b = BenchmarkConfig::from_profile(profile, kinds, cfg.seed());
    if let Some(n) = cfg.n {
        b.n = n;
    }
    if let Some(l) = cfg.l {
        b.l = l;
    }
    if let Some(r) = cfg.reps {
        b.reps = r;
    }
    if let Some(s) = cfg.split {
        b.split = s;
    }
    if let Some(level) = cfg.level {
        b.level = level;
    }
    if let Some(r) = cfg.ridge {
        b.ridge = r;
    }
    if let Some(c) = cfg.cold_refit_every {
        b.cold_refit_every = c;
    }
    b.partition = cfg.partition()?;
    b.nuisance = cfg.nuisance()?;
    b.validate()?;
    Ok(b)
}

pub fn cmd_benchmark(cfg: &RunConfig, output: Option<&Path>, summary: Option<&Path>) -> Result<()> {
    let b = benchmark_config(cfg)?;
    let mut resolved = cfg.resolved(Command::Benchmark)?;
    resolved.profile = Some(cfg.profile.clone().unwrap_or_else(|| "desk".into()));
    resolved.n = Some(b.n);
    resolved.l = Some(b.l);
    resolved.reps = Some(b.reps);
    resolved.split = Some(b.split);
    resolved.estimators = Some(b.estimators.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(","));
    let report = coverage_benchmark(&b)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv).map_err(|e| Error::io("<buffer>", e))?;
    let json = envelope(
        &resolved,
        BenchmarkSummary {
            command: "benchmark",
            rows: &report.rows,
            failures: &report.failures,
            truths: &report.truths,
        },
    )?;
    emit(output, &csv)?;
    if let Some(p) = summary {
        emit(Some(p), &json)?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct WitnessBody {
    command: &'static str,
    #[serde(flatten)]
    witness: Witness,
}

pub fn cmd_witness(cfg: &RunConfig, output: Option<&Path>) -> Result<()> {
    let m0 = cfg.margins0.clone().unwrap_or_else(|| vec![0.5, 0.3, 0.2]);
    let m1 = cfg.margins1.clone().unwrap_or_else(|| vec![0.2, 0.3, 0.5]);
    let k = cfg.k.unwrap_or(m0.len());
    let w = nonidentifiability_witness(k, &m0, &m1)?;
    let mut resolved = cfg.clone();
    resolved.command = Some(Command::Witness);
    resolved.k = Some(k);
    resolved.margins0 = Some(m0);
    resolved.margins1 = Some(m1);
    resolved.threads = None;
    emit(
        output,
        &envelope(
            &resolved,
            WitnessBody {
                command: "witness",
                witness: w,
            },
        )?,
    )
}

pub const DEFAULT_ORACLE_MC: usize = 1_000_000;

#[derive(Debug, Serialize)]
struct OracleBody {
    command: &'static str,
    results: Vec<OracleResult>,
}

pub fn cmd_oracle(cfg: &RunConfig, stratum: Option<i64>, output: Option<&Path>) -> Result<()> {
    let partition = cfg.partition()?;
    let mc = cfg.mc.unwrap_or(DEFAULT_ORACLE_MC);
    let seed = cfg.seed();
    let strata: Vec<i64> = stratum.map(|s| vec![s]).unwrap_or_else(|| vec![0, 1]);
    let results = {
        use rayon::prelude::*;
        strata
            .par_iter()
            .map(|&x| oracle_truth(x, &partition, mc, child_seed(seed, x as u64)))
            .collect::<Result<Vec<_>>>()?
    };
    let mut resolved = cfg.clone();
    resolved.command = Some(Command::Oracle);
    resolved.thresholds = Some(partition.thresholds().to_vec());
    resolved.mc = Some(mc);
    resolved.seed = Some(seed);
    resolved.threads = None;
    emit(
        output,
        &envelope(
            &resolved,
            OracleBody {
                command: "oracle",
                results,
            },
        )?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_design_flags() {
        let cli = Cli::try_parse_from([
            "tierbound",
            "estimate",
            "-i",
            "d.csv",
            "--estimator",
            "s1s",
            "--l",
            "2000",
            "--thresholds",
            "-1.42,1.09",
            "--H",
            "5000",
        ])
        .unwrap();
        let cfg = flags_config(&cli.command).unwrap();
        assert_eq!(cfg.thresholds, Some(vec![-1.42, 1.09]));
        assert_eq!(cfg.l, Some(2000));
        assert_eq!(cfg.draws, Some(5000));
    }

    #[test]
    fn zero_n_is_a_usage_error() {
        let e = Cli::try_parse_from(["tierbound", "simulate", "--n", "0"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn one_step_needs_split() {
        let s = simulate(200, 1).unwrap();
        let cfg = RunConfig {
            estimators: Some("1s".into()),
            ..Default::default()
        };
        assert!(matches!(estimate_report(&s.table, &cfg), Err(Error::Config(m)) if m.contains("--split")));
    }
}
