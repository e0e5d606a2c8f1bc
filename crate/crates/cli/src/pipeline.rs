//! The commands behind the binary, callable in-process.

use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use credregion::mcvalidate::{mc_region_curve, quadrature_curve_1d, McEstimate, McRequest, MIN_QUADRATURE_GRID};
use credregion::mle::analyze;
use credregion::model::{deterministic_counts, pom_by_name, sample_dataset, Dataset, Pom};
use credregion::regions::region_curve;
use credregion::specfun::{identity_checks, IdentityCheck};
use credregion::statespace::{lebesgue_volume, Geometry, SampleSet, Sampler, StateSpace};

use crate::config::{Config, CountsMode, Validator};
use crate::error::CliError;
use crate::report::{Constants, Discrepancy, Provenance, RegionReport, Scenario};

/// Switches that apply to every command.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Forces `mode = deterministic`.
    pub deterministic_counts: bool,
}

struct Setup {
    pom: Arc<dyn Pom>,
    space: StateSpace,
    scenario: Scenario,
    config: Config,
}

fn setup(config: &Config, opts: RunOptions) -> Result<Setup, CliError> {
    let mut config = config.clone();
    if opts.deterministic_counts {
        config.mode = CountsMode::Deterministic;
    }
    let pom = pom_by_name(&config.pom).map_err(|e| CliError::Config(e.to_string()))?;
    let space = StateSpace::from_label(&config.space).map_err(|e| CliError::Config(e.to_string()))?;
    if space.dim != pom.dim() {
        return Err(CliError::Config(format!(
            "POM {} has {} parameters but space {} has {}",
            pom.name(),
            pom.dim(),
            space.label,
            space.dim
        )));
    }
    let (dataset, source) = match (&config.counts, &config.r_true) {
        (Some(counts), _) => {
            let data = Dataset::new(pom.name(), counts.clone());
            if counts.len() != pom.outcomes() {
                return Err(CliError::Config(format!(
                    "{} counts given for a {}-outcome POM",
                    counts.len(),
                    pom.outcomes()
                )));
            }
            data.validate().map_err(|e| CliError::Config(e.to_string()))?;
            (data, "explicit")
        }
        (None, Some(r)) => {
            if r.len() != space.dim {
                return Err(CliError::Config(format!(
                    "r_true has {} entries, space {} needs {}",
                    r.len(),
                    space.label,
                    space.dim
                )));
            }
            if !space.is_physical(r) {
                return Err(CliError::Config("r_true lies outside the state space".into()));
            }
            match config.mode {
                CountsMode::Deterministic => (deterministic_counts(pom.as_ref(), r, config.copies)?, "deterministic"),
                CountsMode::Sampled => (sample_dataset(pom.as_ref(), r, config.copies, config.seed)?, "sampled"),
            }
        }
        (None, None) => return Err(CliError::Config("one of r_true or counts is required".into())),
    };
    let scenario = Scenario {
        space: space.label.clone(),
        pom: pom.name().to_string(),
        r_true: config.r_true.clone(),
        copies: dataset.total,
        seed: config.seed,
        counts_source: source.into(),
        dataset,
    };
    Ok(Setup {
        pom,
        space,
        scenario,
        config,
    })
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run_region(config: &Config, opts: RunOptions, validate: bool, command: &str) -> Result<RegionReport, CliError> {
    let start = Instant::now();
    let s = setup(config, opts)?;
    let lambdas = s.config.lambdas();
    let data = &s.scenario.dataset;
    let ml = analyze(s.pom.as_ref(), data, &s.space, &s.config.ml, &s.config.boundary)?;
    let curve = region_curve(&ml, s.space.volume, &lambdas)?;

    let validation = if validate {
        Some(match s.config.validator {
            Validator::Mc => mc_region_curve(
                s.pom.as_ref(),
                data,
                &s.space,
                ml.log_l_max,
                &lambdas,
                &McRequest {
                    n_samples: s.config.n_samples,
                    seed: s.config.mc_seed,
                    sampler: s.config.sampler,
                },
            )?,
            Validator::Quadrature => {
                if s.space.dim != 1 {
                    return Err(CliError::Config("quadrature validation needs a one-dimensional space".into()));
                }
                quadrature_curve_1d(
                    s.pom.as_ref(),
                    data,
                    &s.space,
                    Some(ml.log_l_max),
                    &lambdas,
                    s.config.n_samples.max(MIN_QUADRATURE_GRID),
                )?
            }
        })
    } else {
        None
    };
    let discrepancy = validation
        .as_ref()
        .map(|est: &McEstimate| Discrepancy::compute(&curve, est, s.config.lambda_lo, s.config.lambda_hi));

    let provenance = Provenance {
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        created_unix: now_unix(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        tol_grad: ml.tol_grad,
        config: s.config,
        constants: Constants::default(),
    };
    Ok(RegionReport {
        scenario: s.scenario,
        ml,
        curve,
        validation,
        discrepancy,
        provenance,
    })
}

/// ML estimate, case classification and analytic curves.
pub fn certify(config: &Config, opts: RunOptions) -> Result<RegionReport, CliError> {
    run_region(config, opts, false, "certify")
}

/// [`certify`] plus a Monte Carlo or quadrature estimate of the same curves.
pub fn validate(config: &Config, opts: RunOptions) -> Result<RegionReport, CliError> {
    run_region(config, opts, true, "validate")
}

/// Uniform samples from a space as CSV: `#` header lines with the label,
/// seed, sampler, attempts and yield, then one row per point.
pub fn sample(space: &str, count: usize, seed: u64, sampler: Sampler) -> Result<(SampleSet, String), CliError> {
    let space = StateSpace::from_label(space).map_err(|e| CliError::Config(e.to_string()))?;
    let set = space.uniform_sample(count, seed, sampler)?;
    let mut out = String::new();
    out.push_str(&format!("# label={}\n", space.label));
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str(&format!("# sampler={}\n", sampler_name(sampler)));
    out.push_str(&format!("# accepted={}\n", set.accepted()));
    out.push_str(&format!("# attempts={}\n", set.attempts));
    out.push_str(&format!("# yield={:e}\n", set.yield_fraction()));
    let header: Vec<String> = (1..=space.dim).map(|j| format!("r{j}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for p in set.iter() {
        let row: Vec<String> = p.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok((set, out))
}

pub fn sampler_name(s: Sampler) -> &'static str {
    match s {
        Sampler::BoundingBox => "bounding-box",
        Sampler::MinorDisk => "minor-disk",
    }
}

/// Exact and sampled volume of a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeReport {
    pub label: String,
    pub dim: usize,
    pub exact: f64,
    /// Closed form `π^{D(D-1)/2} Π Γ(k) / Γ(D²)` for full state spaces.
    pub lebesgue: Option<f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub z: f64,
    pub accepted: u64,
    pub attempts: u64,
    pub yield_fraction: f64,
    pub sampler: Sampler,
    pub seed: u64,
}

pub fn volume(space: &str, count: usize, seed: u64, sampler: Sampler) -> Result<VolumeReport, CliError> {
    let space = StateSpace::from_label(space).map_err(|e| CliError::Config(e.to_string()))?;
    let set = space.uniform_sample(count, seed, sampler)?;
    let (estimate, stderr) = set.volume_estimate(&space);
    let lebesgue = match &space.geometry {
        Geometry::Matrix(p) if p.is_full() => Some(lebesgue_volume(p.hilbert_dim())?),
        _ => None,
    };
    Ok(VolumeReport {
        label: space.label.clone(),
        dim: space.dim,
        exact: space.volume,
        lebesgue,
        estimate,
        stderr,
        z: (estimate - space.volume) / stderr,
        accepted: set.accepted(),
        attempts: set.attempts,
        yield_fraction: set.yield_fraction(),
        sampler,
        seed,
    })
}

/// Runs the special-function identity sweeps.
pub fn specfun_selftest() -> Vec<IdentityCheck> {
    identity_checks()
}
