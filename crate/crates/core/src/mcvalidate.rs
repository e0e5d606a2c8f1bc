//! Reference values for region sizes and credibilities computed directly
//! from their defining integrals: Monte Carlo over uniform samples of the
//! space, trapezoid quadrature for one-dimensional spaces, and a Monte Carlo
//! volume of a plane-truncated ellipsoid.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, Dataset, Pom};
use crate::statespace::{SampleSet, Sampler, StateSpace, SAMPLE_STREAMS};
use crate::ParamVector;

/// Below this many samples inside a region the size error is widened.
pub const LOW_COUNT: u64 = 100;

/// Smallest grid accepted by [`quadrature_curve_1d`].
pub const MIN_QUADRATURE_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct McFlags {
    /// Fewer than [`LOW_COUNT`] samples inside; the size error uses the
    /// Agresti–Coull interval instead of the plain binomial one.
    pub low_count: bool,
    /// No sample inside the region at all.
    pub resolution_exhausted: bool,
}

/// Numerical `s_λ`, `c_λ` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub lambdas: Vec<f64>,
    pub s_hat: Vec<f64>,
    pub s_stderr: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub c_stderr: Vec<f64>,
    pub flags: Vec<McFlags>,
    /// `∫_0^1 s_λ dλ`, the mean likelihood ratio over the prior.
    pub lambda_crit: f64,
    pub lambda_crit_stderr: f64,
    pub n_samples: u64,
    pub attempts: u64,
    pub seed: u64,
    pub pom: String,
    #[serde(rename = "N")]
    pub copies: u64,
    pub method: String,
}

impl McEstimate {
    pub fn resolution_exhausted(&self) -> bool {
        self.flags.iter().any(|f| f.resolution_exhausted)
    }

    /// CSV with a `#` header line carrying the run parameters, then columns
    /// `lambda,s_hat,s_stderr,c_hat,c_stderr,flags`.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# method={} seed={} n_samples={} attempts={} pom={} N={}\n",
            self.method, self.seed, self.n_samples, self.attempts, self.pom, self.copies
        );
        out.push_str("lambda,s_hat,s_stderr,c_hat,c_stderr,flags\n");
        for i in 0..self.lambdas.len() {
            let f = self.flags[i];
            let flag = match (f.resolution_exhausted, f.low_count) {
                (true, _) => "resolution-exhausted",
                (false, true) => "low-count",
                _ => "",
            };
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{}",
                self.lambdas[i], self.s_hat[i], self.s_stderr[i], self.c_hat[i], self.c_stderr[i], flag
            );
        }
        out
    }
}

/// Settings of a Monte Carlo region run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McRequest {
    pub n_samples: usize,
    pub seed: u64,
    pub sampler: Sampler,
}

/// Monte Carlo `s_λ` and `c_λ` from uniform samples of the space.
///
/// `s_hat(λ)` is the fraction of samples with `L ≥ λ L_max`; `c_hat(λ)` is
/// the likelihood mass of those samples over the total (self-normalized).
/// One sample set serves every `λ`.
pub fn mc_region_curve(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    log_l_max: f64,
    lambdas: &[f64],
    request: &McRequest,
) -> Result<McEstimate> {
    if space.dim != pom.dim() || data.counts.len() != pom.outcomes() {
        return Err(Error::DimensionMismatch {
            expected: pom.outcomes(),
            found: data.counts.len(),
        });
    }
    let samples = space.uniform_sample(request.n_samples, request.seed, request.sampler)?;
    let m = pom.outcomes();
    let ratios: Vec<f64> = samples
        .points
        .par_chunks_exact(samples.dim)
        .map_init(
            || vec![0.0; m],
            |scratch, r| {
                let ll = model::log_likelihood_with(pom, &data.counts, r, scratch);
                (ll - log_l_max).exp()
            },
        )
        .collect();
    let mut est = mc_from_ratios(&ratios, &samples, lambdas)?;
    est.pom = pom.name().into();
    est.copies = data.total;
    Ok(est)
}

/// [`mc_region_curve`] for an arbitrary log-likelihood over `space`.
pub fn mc_curve_fn<F>(
    log_l: F,
    space: &StateSpace,
    log_l_max: f64,
    lambdas: &[f64],
    request: &McRequest,
) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let samples = space.uniform_sample(request.n_samples, request.seed, request.sampler)?;
    let ratios: Vec<f64> = samples
        .points
        .par_chunks_exact(samples.dim)
        .map(|r| (log_l(r) - log_l_max).exp())
        .collect();
    mc_from_ratios(&ratios, &samples, lambdas)
}

fn mc_from_ratios(ratios: &[f64], samples: &SampleSet, lambdas: &[f64]) -> Result<McEstimate> {
    let weights = vec![1.0; ratios.len()];
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let var_ratio = ratios.iter().map(|x| (x - mean_ratio).powi(2)).sum::<f64>()
        / (ratios.len() as f64 - 1.0).max(1.0);
    let mut est = curve_from_ratios(ratios, &weights, lambdas, CountModel::Binomial)?;
    est.lambda_crit = mean_ratio;
    est.lambda_crit_stderr = (var_ratio / samples.len() as f64).sqrt();
    est.n_samples = samples.len() as u64;
    est.attempts = samples.attempts;
    est.seed = samples.seed;
    est.method = match samples.sampler {
        Sampler::BoundingBox => "monte-carlo/bounding-box".into(),
        Sampler::MinorDisk => "monte-carlo/minor-disk".into(),
    };
    Ok(est)
}

#[derive(Clone, Copy)]
enum CountModel {
    Binomial,
    Deterministic,
}

/// Suffix sums over ratios sorted ascending; `weights` are quadrature or
/// sample weights aligned with `ratios`.
fn curve_from_ratios(
    ratios: &[f64],
    weights: &[f64],
    lambdas: &[f64],
    counting: CountModel,
) -> Result<McEstimate> {
    let n = ratios.len();
    if n == 0 {
        return Err(Error::Invalid("no samples".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ratios[a].total_cmp(&ratios[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| ratios[i]).collect();
    let w: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
    // suffix sums: index i covers sorted[i..]
    let mut cnt = vec![0.0; n + 1];
    let mut wsum = vec![0.0; n + 1];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for i in (0..n).rev() {
        cnt[i] = cnt[i + 1] + 1.0;
        wsum[i] = wsum[i + 1] + w[i];
        s1[i] = s1[i + 1] + w[i] * sorted[i];
        s2[i] = s2[i + 1] + (w[i] * sorted[i]).powi(2);
    }
    let total_w = wsum[0];
    let total_1 = s1[0];
    let total_2 = s2[0];

    let mut est = McEstimate {
        lambdas: lambdas.to_vec(),
        s_hat: Vec::with_capacity(lambdas.len()),
        s_stderr: Vec::with_capacity(lambdas.len()),
        c_hat: Vec::with_capacity(lambdas.len()),
        c_stderr: Vec::with_capacity(lambdas.len()),
        flags: Vec::with_capacity(lambdas.len()),
        lambda_crit: 0.0,
        lambda_crit_stderr: 0.0,
        n_samples: n as u64,
        attempts: n as u64,
        seed: 0,
        pom: String::new(),
        copies: 0,
        method: String::new(),
    };
    for &lambda in lambdas {
        let first = sorted.partition_point(|&x| x < lambda);
        let inside = cnt[first];
        let s = wsum[first] / total_w;
        let c = if total_1 > 0.0 { s1[first] / total_1 } else { 0.0 };
        let mut flags = McFlags::default();
        let (s_se, c_se) = match counting {
            CountModel::Deterministic => (0.0, 0.0),
            CountModel::Binomial => {
                let nf = n as f64;
                let s_se = if inside < LOW_COUNT as f64 {
                    flags.low_count = true;
                    let p = (inside + 2.0) / (nf + 4.0);
                    (p * (1.0 - p) / (nf + 4.0)).sqrt()
                } else {
                    (s * (1.0 - s) / nf).sqrt()
                };
                let in2 = s2[first];
                let out2 = total_2 - in2;
                let var = ((1.0 - c).powi(2) * in2 + c * c * out2) / (total_1 * total_1);
                (s_se, var.max(0.0).sqrt())
            }
        };
        if inside == 0.0 && lambda < 1.0 {
            flags.resolution_exhausted = true;
        }
        est.s_hat.push(s);
        est.s_stderr.push(s_se);
        est.c_hat.push(c);
        est.c_stderr.push(c_se);
        est.flags.push(flags);
    }
    Ok(est)
}

/// Deterministic trapezoid evaluation of `s_λ`, `c_λ` and `λ_crit` on a
/// one-dimensional space with `n_grid` nodes.
///
/// `log_l_max` defaults to the largest value on the grid.
pub fn quadrature_curve_1d(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    log_l_max: Option<f64>,
    lambdas: &[f64],
    n_grid: usize,
) -> Result<McEstimate> {
    if space.dim != 1 || pom.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: space.dim.max(pom.dim()),
        });
    }
    let (lo, hi) = space.bounding_box[0];
    let m = pom.outcomes();
    let log_l = |r: f64| {
        let mut scratch = vec![0.0; m];
        model::log_likelihood_with(pom, &data.counts, &[r], &mut scratch)
    };
    let mut est = quadrature_curve_fn(log_l, lo, hi, log_l_max, lambdas, n_grid)?;
    est.pom = pom.name().into();
    est.copies = data.total;
    Ok(est)
}

/// [`quadrature_curve_1d`] for an arbitrary log-likelihood on `[lo, hi]`.
pub fn quadrature_curve_fn<F>(
    log_l: F,
    lo: f64,
    hi: f64,
    log_l_max: Option<f64>,
    lambdas: &[f64],
    n_grid: usize,
) -> Result<McEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    if n_grid < MIN_QUADRATURE_GRID {
        return Err(Error::GridTooSmall {
            min: MIN_QUADRATURE_GRID,
            got: n_grid,
        });
    }
    let h = (hi - lo) / (n_grid - 1) as f64;
    let logs: Vec<f64> = (0..n_grid)
        .into_par_iter()
        .map(|i| log_l(if i + 1 == n_grid { hi } else { lo + i as f64 * h }))
        .collect();
    let peak = log_l_max.unwrap_or_else(|| logs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let ratios: Vec<f64> = logs.iter().map(|&v| (v - peak).exp()).collect();
    let weights: Vec<f64> = (0..n_grid)
        .map(|i| if i == 0 || i + 1 == n_grid { 0.5 } else { 1.0 })
        .collect();
    let integral: f64 = ratios.iter().zip(&weights).map(|(r, w)| r * w).sum::<f64>() * h;
    let mut est = curve_from_ratios(&ratios, &weights, lambdas, CountModel::Deterministic)?;
    est.lambda_crit = integral / (hi - lo);
    est.method = "trapezoid".into();
    est.n_samples = n_grid as u64;
    est.attempts = n_grid as u64;
    Ok(est)
}

/// Monte Carlo volume of `{(r-c)ᵀF(r-c) ≤ -2 log λ} ∩ {n·r ≤ offset}` from
/// uniform draws in the ellipsoid's bounding box. Returns the volume and its
/// standard error.
pub fn mc_truncated_ellipsoid_volume(
    fisher: &DMatrix<f64>,
    center: &ParamVector,
    normal: &ParamVector,
    offset: f64,
    lambda: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let d = center.len();
    if fisher.nrows() != d || normal.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: fisher.nrows().max(normal.len()),
        });
    }
    if normal.iter().all(|&x| x == 0.0) {
        return Err(Error::Invalid("plane normal is zero".into()));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::domain("mc_truncated_ellipsoid_volume", "lambda must lie in (0, 1)"));
    }
    if n_samples == 0 {
        return Err(Error::Invalid("sample count must be at least 1".into()));
    }
    fisher
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SingularModel("Fisher matrix is not positive definite".into()))?;
    let (cov, _) = linalg::spd_inverse(fisher);
    let radius2 = -2.0 * lambda.ln();
    let half: Vec<f64> = (0..d).map(|j| (radius2 * cov[(j, j)]).sqrt()).collect();
    let box_volume: f64 = half.iter().map(|h| 2.0 * h).product();

    let streams = SAMPLE_STREAMS.min(n_samples as u64);
    let base = n_samples as u64 / streams;
    let extra = n_samples as u64 % streams;
    let hits: u64 = (0..streams)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            let quota = base + u64::from(s < extra);
            let mut delta = vec![0.0; d];
            let mut count = 0u64;
            for _ in 0..quota {
                for (x, h) in delta.iter_mut().zip(&half) {
                    *x = h * (2.0 * rng.random::<f64>() - 1.0);
                }
                let mut q = 0.0;
                for i in 0..d {
                    let mut row = 0.0;
                    for j in 0..d {
                        row += fisher[(i, j)] * delta[j];
                    }
                    q += delta[i] * row;
                }
                if q > radius2 {
                    continue;
                }
                let side: f64 = (0..d).map(|i| normal[i] * (center[i] + delta[i])).sum();
                if side <= offset {
                    count += 1;
                }
            }
            count
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    let p = hits as f64 / n_samples as f64;
    Ok((box_volume * p, box_volume * (p * (1.0 - p) / n_samples as f64).sqrt()))
}
