//! Flat `key = value` scenario files.
//!
//! ```text
//! # tetrahedron, 90 copies
//! space = qubit3
//! pom = tetrahedron
//! r_true = 0.9, 0.2, 0.05
//! N = 90
//! seed = 7
//! mode = deterministic
//! lambda_grid = log:400:1e-6
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are an error.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use credregion::mle::{BoundarySearch, Covariance, MlOptions};
use credregion::regions::{default_lambda_grid, log_grid, MIN_GRID};
use credregion::statespace::Sampler;

use crate::error::CliError;

/// How the measured counts are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountsMode {
    /// Multinomial draw seeded by `seed`.
    Sampled,
    /// Largest-remainder rounding of `N p_k(r_true)`.
    Deterministic,
}

/// Oracle used by `validate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Validator {
    /// Uniform Monte Carlo over the space.
    Mc,
    /// Deterministic trapezoid quadrature; one-dimensional spaces only.
    Quadrature,
}

/// `λ` values at which curves are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaGrid {
    /// `n` log-spaced points on `[lo, 1]`.
    Log { n: usize, lo: f64 },
    Explicit(Vec<f64>),
}

impl LambdaGrid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            LambdaGrid::Log { n, lo } => log_grid(*n, *lo),
            LambdaGrid::Explicit(v) => v.clone(),
        }
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        let g = default_lambda_grid();
        LambdaGrid::Log {
            n: g.len(),
            lo: g[0],
        }
    }
}

impl fmt::Display for LambdaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaGrid::Log { n, lo } => write!(f, "log:{n}:{lo:e}"),
            LambdaGrid::Explicit(v) => {
                let parts: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for LambdaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix("log:") {
            let (n, lo) = rest
                .split_once(':')
                .ok_or_else(|| format!("expected log:<n>:<lo>, got {s:?}"))?;
            let n: usize = n.trim().parse().map_err(|e| format!("grid size: {e}"))?;
            let lo: f64 = lo.trim().parse().map_err(|e| format!("grid start: {e}"))?;
            if n < MIN_GRID || !(lo > 0.0 && lo < 1.0) {
                return Err(format!("log grid needs n ≥ {MIN_GRID} and 0 < lo < 1"));
            }
            return Ok(LambdaGrid::Log { n, lo });
        }
        let v = parse_list(s)?;
        if v.len() < MIN_GRID {
            return Err(format!("explicit grid needs at least {MIN_GRID} values"));
        }
        if v.windows(2).any(|w| !(w[0] < w[1])) || !(v[0] > 0.0) || v[v.len() - 1] > 1.0 {
            return Err("explicit grid must be strictly increasing within (0, 1]".into());
        }
        Ok(LambdaGrid::Explicit(v))
    }
}

/// A fully resolved scenario; every default that can affect results is a
/// field so that it ends up in report provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Config {
    pub space: String,
    pub pom: String,
    pub r_true: Option<Vec<f64>>,
    /// Explicit counts; overrides `r_true`, `N` and `mode`.
    pub counts: Option<Vec<u64>>,
    #[serde(rename = "N")]
    pub copies: u64,
    pub seed: u64,
    pub mode: CountsMode,
    pub lambda_grid: LambdaGrid,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub validator: Validator,
    /// Monte Carlo samples, or quadrature nodes.
    pub n_samples: usize,
    pub mc_seed: u64,
    pub sampler: Sampler,
    pub ml: MlOptions,
    pub boundary: BoundarySearch,
}

const KEYS: &[&str] = &[
    "space",
    "pom",
    "r_true",
    "counts",
    "N",
    "seed",
    "mode",
    "lambda_grid",
    "lambda_lo",
    "lambda_hi",
    "validator",
    "n_samples",
    "mc_seed",
    "sampler",
    "covariance",
    "tol_grad",
    "max_iter",
    "retraction",
    "lambda_min",
    "perturbations",
    "eps_scale",
    "search_seed",
    "max_polish_rounds",
];

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| CliError::Config(format!("{key} = {raw:?}: {e}")))
}

impl Config {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        text.parse()
    }

    pub fn lambdas(&self) -> Vec<f64> {
        self.lambda_grid.values()
    }

    /// Renders the resolved configuration back into the file format.
    pub fn to_text(&self) -> String {
        let join = |v: &[String]| v.join(", ");
        let mut lines = vec![
            format!("space = {}", self.space),
            format!("pom = {}", self.pom),
        ];
        if let Some(r) = &self.r_true {
            lines.push(format!(
                "r_true = {}",
                join(&r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>())
            ));
        }
        if let Some(c) = &self.counts {
            lines.push(format!(
                "counts = {}",
                join(&c.iter().map(u64::to_string).collect::<Vec<_>>())
            ));
        }
        lines.push(format!("N = {}", self.copies));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!(
            "mode = {}",
            match self.mode {
                CountsMode::Sampled => "sampled",
                CountsMode::Deterministic => "deterministic",
            }
        ));
        lines.push(format!("lambda_grid = {}", self.lambda_grid));
        lines.push(format!("lambda_lo = {:e}", self.lambda_lo));
        lines.push(format!("lambda_hi = {:e}", self.lambda_hi));
        lines.push(format!(
            "validator = {}",
            match self.validator {
                Validator::Mc => "mc",
                Validator::Quadrature => "quadrature",
            }
        ));
        lines.push(format!("n_samples = {}", self.n_samples));
        lines.push(format!("mc_seed = {}", self.mc_seed));
        lines.push(format!(
            "sampler = {}",
            match self.sampler {
                Sampler::BoundingBox => "bounding-box",
                Sampler::MinorDisk => "minor-disk",
            }
        ));
        lines.push(format!(
            "covariance = {}",
            match self.ml.covariance {
                Covariance::Fisher => "fisher",
                Covariance::ObservedHessian => "observed-hessian",
            }
        ));
        if let Some(t) = self.ml.tol_grad {
            lines.push(format!("tol_grad = {t:e}"));
        }
        lines.push(format!("max_iter = {}", self.ml.max_iter));
        lines.push(format!("retraction = {:e}", self.ml.retraction));
        lines.push(format!("lambda_min = {:e}", self.boundary.lambda_min));
        lines.push(format!("perturbations = {}", self.boundary.perturbations));
        lines.push(format!("eps_scale = {:?}", self.boundary.eps_scale));
        lines.push(format!("search_seed = {}", self.boundary.seed));
        lines.push(format!(
            "max_polish_rounds = {}",
            self.boundary.max_polish_rounds
        ));
        lines.join("\n") + "\n"
    }
}

impl FromStr for Config {
    type Err = CliError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut kv = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(CliError::Config(format!(
                    "line {}: unknown key {k:?}",
                    lineno + 1
                )));
            }
            if kv.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::Config(format!(
                    "line {}: duplicate key {k:?}",
                    lineno + 1
                )));
            }
        }
        let take = |k: &str| kv.get(k).map(String::as_str);
        let required = |k: &str| take(k).ok_or_else(|| CliError::Config(format!("missing key {k:?}")));

        let space = required("space")?.to_string();
        let pom = required("pom")?.to_string();
        let r_true = take("r_true")
            .map(|s| parse_list::<f64>(s).map_err(|e| CliError::Config(format!("r_true: {e}"))))
            .transpose()?;
        let counts = take("counts")
            .map(|s| parse_list::<u64>(s).map_err(|e| CliError::Config(format!("counts: {e}"))))
            .transpose()?;
        let copies = match (take("N"), &counts) {
            (Some(n), None) => parse_value("N", n)?,
            (Some(n), Some(c)) => {
                let n: u64 = parse_value("N", n)?;
                if n != c.iter().sum::<u64>() {
                    return Err(CliError::Config(format!(
                        "N = {n} disagrees with the sum of counts"
                    )));
                }
                n
            }
            (None, Some(c)) => c.iter().sum(),
            (None, None) => return Err(CliError::Config("missing key \"N\"".into())),
        };
        if copies == 0 {
            return Err(CliError::Config("N must be positive".into()));
        }
        if counts.is_none() && r_true.is_none() {
            return Err(CliError::Config("one of r_true or counts is required".into()));
        }
        let seed = take("seed").map(|s| parse_value("seed", s)).transpose()?.unwrap_or(0);
        let mode = match take("mode").unwrap_or("sampled") {
            "sampled" => CountsMode::Sampled,
            "deterministic" => CountsMode::Deterministic,
            other => return Err(CliError::Config(format!("mode: unknown value {other:?}"))),
        };
        let lambda_grid = take("lambda_grid")
            .map(|s| s.parse::<LambdaGrid>().map_err(|e| CliError::Config(format!("lambda_grid: {e}"))))
            .transpose()?
            .unwrap_or_default();
        let lambda_lo = take("lambda_lo").map(|s| parse_value("lambda_lo", s)).transpose()?.unwrap_or(1e-4);
        let lambda_hi = take("lambda_hi").map(|s| parse_value("lambda_hi", s)).transpose()?.unwrap_or(0.99);
        if !(lambda_lo > 0.0 && lambda_lo < lambda_hi && lambda_hi <= 1.0) {
            return Err(CliError::Config("need 0 < lambda_lo < lambda_hi ≤ 1".into()));
        }
        let validator = match take("validator").unwrap_or("mc") {
            "mc" => Validator::Mc,
            "quadrature" => Validator::Quadrature,
            other => return Err(CliError::Config(format!("validator: unknown value {other:?}"))),
        };
        let n_samples = take("n_samples").map(|s| parse_value("n_samples", s)).transpose()?.unwrap_or(100_000);
        let mc_seed = take("mc_seed").map(|s| parse_value("mc_seed", s)).transpose()?.unwrap_or(seed);
        let sampler = match take("sampler").unwrap_or("bounding-box") {
            "bounding-box" => Sampler::BoundingBox,
            "minor-disk" => Sampler::MinorDisk,
            other => return Err(CliError::Config(format!("sampler: unknown value {other:?}"))),
        };

        let mut ml = MlOptions::default();
        ml.covariance = match take("covariance").unwrap_or("fisher") {
            "fisher" => Covariance::Fisher,
            "observed-hessian" => Covariance::ObservedHessian,
            other => return Err(CliError::Config(format!("covariance: unknown value {other:?}"))),
        };
        if let Some(s) = take("tol_grad") {
            ml.tol_grad = Some(parse_value("tol_grad", s)?);
        }
        if let Some(s) = take("max_iter") {
            ml.max_iter = parse_value("max_iter", s)?;
        }
        if let Some(s) = take("retraction") {
            ml.retraction = parse_value("retraction", s)?;
        }

        let mut boundary = BoundarySearch::default();
        if let Some(s) = take("lambda_min") {
            boundary.lambda_min = parse_value("lambda_min", s)?;
        }
        if let Some(s) = take("perturbations") {
            boundary.perturbations = parse_value("perturbations", s)?;
        }
        if let Some(s) = take("eps_scale") {
            boundary.eps_scale = parse_value("eps_scale", s)?;
        }
        if let Some(s) = take("search_seed") {
            boundary.seed = parse_value("search_seed", s)?;
        }
        if let Some(s) = take("max_polish_rounds") {
            boundary.max_polish_rounds = parse_value("max_polish_rounds", s)?;
        }

        Ok(Config {
            space,
            pom,
            r_true,
            counts,
            copies,
            seed,
            mode,
            lambda_grid,
            lambda_lo,
            lambda_hi,
            validator,
            n_samples,
            mc_seed,
            sampler,
            ml,
            boundary,
        })
    }
}
