//! The JSON report written by `certify` and `validate`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use credregion::mcvalidate::McEstimate;
use credregion::mle::MlResult;
use credregion::model::Dataset;
use credregion::regions::RegionCurve;

use crate::config::Config;
use crate::error::CliError;

/// What was estimated: the space, measurement and data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub space: String,
    pub pom: String,
    pub r_true: Option<Vec<f64>>,
    #[serde(rename = "N")]
    pub copies: u64,
    pub seed: u64,
    /// `sampled`, `deterministic` or `explicit`.
    pub counts_source: String,
    pub dataset: Dataset,
}

/// Analytic curve against its Monte Carlo or quadrature counterpart over
/// `[lambda_lo, lambda_hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub points: usize,
    pub max_abs_c: f64,
    /// Largest `|c_analytic - c_hat| / stderr` over points with nonzero stderr.
    pub max_z_c: f64,
    pub max_abs_s: f64,
    pub max_z_s: f64,
    /// Points where the estimator had no samples inside the region.
    pub exhausted_points: usize,
    pub lambda_crit_analytic: f64,
    pub lambda_crit_estimate: f64,
    pub lambda_crit_ratio: f64,
}

impl Discrepancy {
    pub fn compute(curve: &RegionCurve, est: &McEstimate, lo: f64, hi: f64) -> Self {
        let mut d = Discrepancy {
            lambda_lo: lo,
            lambda_hi: hi,
            points: 0,
            max_abs_c: 0.0,
            max_z_c: 0.0,
            max_abs_s: 0.0,
            max_z_s: 0.0,
            exhausted_points: 0,
            lambda_crit_analytic: curve.lambda_crit,
            lambda_crit_estimate: est.lambda_crit,
            lambda_crit_ratio: curve.lambda_crit / est.lambda_crit,
        };
        for (i, &lam) in est.lambdas.iter().enumerate() {
            if lam < lo || lam > hi {
                continue;
            }
            d.points += 1;
            if est.flags[i].resolution_exhausted {
                d.exhausted_points += 1;
            }
            let dc = (curve.credibilities[i] - est.c_hat[i]).abs();
            let ds = (curve.sizes[i] - est.s_hat[i]).abs();
            d.max_abs_c = d.max_abs_c.max(dc);
            d.max_abs_s = d.max_abs_s.max(ds);
            if est.c_stderr[i] > 0.0 {
                d.max_z_c = d.max_z_c.max(dc / est.c_stderr[i]);
            }
            if est.s_stderr[i] > 0.0 {
                d.max_z_s = d.max_z_s.max(ds / est.s_stderr[i]);
            }
        }
        d
    }
}

/// Fixed constants of the library that influence results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub prob_floor: f64,
    pub sample_streams: u64,
    pub qutrit_pom_seed: u64,
    pub low_count: u64,
    pub min_quadrature_grid: usize,
}

impl Default for Constants {
    fn default() -> Self {
        Constants {
            prob_floor: credregion::model::PROB_FLOOR,
            sample_streams: credregion::statespace::SAMPLE_STREAMS,
            qutrit_pom_seed: credregion::model::QUTRIT_POM_SEED,
            low_count: credregion::mcvalidate::LOW_COUNT,
            min_quadrature_grid: credregion::mcvalidate::MIN_QUADRATURE_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    /// Seconds since the Unix epoch.
    pub created_unix: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
    /// Resolved configuration including every default.
    pub config: Config,
    /// Gradient tolerance actually used by the solver.
    pub tol_grad: f64,
    pub constants: Constants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub scenario: Scenario,
    pub ml: MlResult,
    pub curve: RegionCurve,
    pub validation: Option<McEstimate>,
    pub discrepancy: Option<Discrepancy>,
    pub provenance: Provenance,
}

impl RegionReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed report: {e}")))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    /// Writes `report.json`, `curve.csv` and, when validated, `mc.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<(), CliError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |e| CliError::io(p, e)
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let path = dir.join("report.json");
        std::fs::write(&path, self.to_json() + "\n").map_err(io(&path))?;
        let path = dir.join("curve.csv");
        std::fs::write(&path, self.curve.to_csv()).map_err(io(&path))?;
        if let Some(est) = &self.validation {
            let path = dir.join("mc.csv");
            std::fs::write(&path, est.to_csv()).map_err(io(&path))?;
        }
        Ok(())
    }
}
