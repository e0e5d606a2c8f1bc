//! Closed-form region sizes `s_λ`, credibilities `c_λ` and plausible-region
//! quantities for the three regimes of a maximum-likelihood estimator.
//!
//! Sizes are fractions of the prior volume `V_R0`. The likelihood is
//! approximated by the Gaussian `L_max exp(-ΔᵀFΔ/2)` around the estimator;
//! truncation by the space boundary is modelled by a single hyperplane.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{MlResult, RegionCase};
use crate::specfun;
use crate::ParamVector;

/// Smallest accepted grid for [`credibility_from_sizes`].
pub const MIN_GRID: usize = 10;

/// Volume of the unit `d`-ball, `π^{d/2}/Γ(d/2 + 1)`.
pub fn unit_ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / specfun::gamma(h + 1.0)
}

fn check_lambda(op: &'static str, lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(op, format!("lambda = {lambda} must lie in (0, 1]")))
    }
}

fn check_det(op: &'static str, det_f: f64) -> Result<()> {
    if det_f > 0.0 && det_f.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("det F = {det_f} must be positive")))
    }
}

/// Volume of the likelihood ellipsoid `ΔᵀFΔ ≤ -2 log λ`.
pub fn ellipsoid_volume(lambda: f64, d: usize, det_f: f64) -> Result<f64> {
    check_lambda("ellipsoid_volume", lambda)?;
    check_det("ellipsoid_volume", det_f)?;
    let t = -lambda.ln();
    Ok(unit_ball_volume(d) * (2.0 * t).powf(d as f64 / 2.0) / det_f.sqrt())
}

/// Size of an untruncated region: the ellipsoid volume over `V_R0`.
pub fn case1_size(lambda: f64, d: usize, det_f: f64, v_r0: f64) -> Result<f64> {
    Ok(ellipsoid_volume(lambda, d, det_f)? / v_r0)
}

/// `1 - Q(d/2, -log λ)`; independent of the data.
pub fn case1_credibility(lambda: f64, d: usize) -> Result<f64> {
    check_lambda("case1_credibility", lambda)?;
    Ok(1.0 - specfun::regularized_gamma_q(d as f64 / 2.0, -lambda.ln())?)
}

/// Untruncated size at credibility `c`:
/// `(V_d/V_R0) [2 Q⁻¹(d/2, 1 - c)]^{d/2} det F^{-1/2}`.
pub fn case1_size_for_credibility(c: f64, d: usize, det_f: f64, v_r0: f64) -> Result<f64> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::domain(
            "case1_size_for_credibility",
            format!("credibility {c} must lie in (0, 1)"),
        ));
    }
    check_det("case1_size_for_credibility", det_f)?;
    let y = specfun::inverse_regularized_gamma_q(d as f64 / 2.0, 1.0 - c)?;
    Ok(unit_ball_volume(d) / v_r0 * (2.0 * y).powf(d as f64 / 2.0) / det_f.sqrt())
}

/// `λ_crit` together with the validity of the Gaussian picture behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaCrit {
    pub value: f64,
    /// `false` when `λ_crit ≥ 1`: the Gaussian is not concentrated within
    /// the space.
    pub gaussian_valid: bool,
}

/// `λ_crit = sqrt(det(2π F⁻¹)) / V_R0`.
pub fn case1_lambda_crit(d: usize, det_f: f64, v_r0: f64) -> Result<LambdaCrit> {
    check_det("case1_lambda_crit", det_f)?;
    let value = (2.0 * PI).powf(d as f64 / 2.0) / det_f.sqrt() / v_r0;
    Ok(LambdaCrit {
        value,
        gaussian_valid: value < 1.0,
    })
}

/// Plausible-region size and credibility for an untruncated Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plausible {
    pub lambda_crit: LambdaCrit,
    /// `None` when `λ_crit ≥ 1`, where the closed form has a negative
    /// logarithm under a fractional power.
    pub s_crit: Option<f64>,
    pub c_crit_exact: Option<f64>,
    /// Large-`N` expansion `1 - (d/2)^{d/2-1}/Γ(d/2) (log N)^{d/2-1}/N^{d/2}`.
    pub c_crit_asymptotic: f64,
}

pub fn case1_plausible(d: usize, det_f: f64, v_r0: f64, copies: u64) -> Result<Plausible> {
    let lambda_crit = case1_lambda_crit(d, det_f, v_r0)?;
    let (s_crit, c_crit_exact) = if lambda_crit.gaussian_valid {
        (
            Some(case1_size(lambda_crit.value, d, det_f, v_r0)?),
            Some(case1_credibility(lambda_crit.value, d)?),
        )
    } else {
        (None, None)
    };
    Ok(Plausible {
        lambda_crit,
        s_crit,
        c_crit_exact,
        c_crit_asymptotic: asymptotic_plausible_credibility(d, copies),
    })
}

pub fn asymptotic_plausible_credibility(d: usize, copies: u64) -> f64 {
    let h = d as f64 / 2.0;
    let n = copies as f64;
    1.0 - h.powf(h - 1.0) / specfun::gamma(h) * n.ln().powf(h - 1.0) / n.powf(h)
}

/// Volume fraction of a unit `d`-ball on the center's side of a plane at
/// distance `l ∈ [0, 1]` from the center: `1 - I_{(1-l)/2}((d+1)/2, (d+1)/2)`.
pub fn cap_complement_fraction(l: f64, d: usize) -> Result<f64> {
    if l >= 1.0 {
        return Ok(1.0);
    }
    if !(l >= 0.0) {
        return Err(Error::domain("cap_complement_fraction", format!("distance {l} is negative")));
    }
    let a = (d as f64 + 1.0) / 2.0;
    Ok(1.0 - specfun::regularized_incomplete_beta((1.0 - l) / 2.0, a, a)?)
}

/// Fraction `γ` of the `λ` ellipsoid left after truncation by the boundary,
/// with relative plane distance `l = min(sqrt(log λ_int / log λ), 1)`.
pub fn truncation_fraction_case2(lambda: f64, lambda_int: f64, d: usize) -> Result<f64> {
    check_lambda("truncation_fraction_case2", lambda)?;
    check_lambda("truncation_fraction_case2", lambda_int)?;
    if lambda == 1.0 || lambda >= lambda_int {
        return Ok(1.0);
    }
    let l = (lambda_int.ln() / lambda.ln()).sqrt().min(1.0);
    cap_complement_fraction(l, d)
}

/// Truncated size `γ V_{d,λ}/V_R0`.
pub fn case2_size(lambda: f64, lambda_int: f64, d: usize, det_f: f64, v_r0: f64) -> Result<f64> {
    Ok(truncation_fraction_case2(lambda, lambda_int, d)? * case1_size(lambda, d, det_f, v_r0)?)
}

/// Fraction `γ'` of the effective ellipsoid at `λ_eff = λ λ_bd` that lies on
/// the physical side of the tangent plane through a boundary estimator,
/// `I_{(1-l')/2}((d+1)/2, (d+1)/2)` with `l' = sqrt(log λ_bd / log λ_eff)`.
pub fn truncation_fraction_case3(lambda: f64, lambda_bd: f64, d: usize) -> Result<f64> {
    check_lambda("truncation_fraction_case3", lambda)?;
    check_lambda("truncation_fraction_case3", lambda_bd)?;
    let lambda_eff = lambda * lambda_bd;
    if lambda_eff >= 1.0 {
        return Err(Error::domain(
            "truncation_fraction_case3",
            "effective ratio lambda * lambda_bd reaches 1",
        ));
    }
    let l = (lambda_bd.ln() / lambda_eff.ln()).sqrt().min(1.0);
    let a = (d as f64 + 1.0) / 2.0;
    specfun::regularized_incomplete_beta((1.0 - l) / 2.0, a, a)
}

/// Boundary-estimator size `γ' V_{d,λ_eff}/V_R0`; zero at `λ = 1`.
pub fn case3_size(lambda: f64, lambda_bd: f64, d: usize, det_f: f64, v_r0: f64) -> Result<f64> {
    check_lambda("case3_size", lambda)?;
    if lambda == 1.0 {
        return Ok(0.0);
    }
    let lambda_eff = lambda * lambda_bd;
    Ok(truncation_fraction_case3(lambda, lambda_bd, d)? * case1_size(lambda_eff, d, det_f, v_r0)?)
}

/// `s_λ`, `c_λ` and `λ_crit` together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineQuantities {
    pub size: f64,
    pub credibility: f64,
    pub lambda_crit: f64,
}

/// One-dimensional truncated interior estimator.
///
/// The log-likelihood is continued linearly past the boundary point `r_P`
/// at distance `δ = |r_P - r_ML|` with slope `D = F δ`. With
/// `w = sqrt(-2 log λ / F)`:
/// `s = [2w - η(λ_int - λ)(log λ_int - log λ)/D]/V_R0`,
/// `c = [δ sqrt(2F)(√π - Γ(1/2, -log λ)) + η(λ_int - λ)(λ - λ_int)]/(δ sqrt(2πF) - λ_int)`,
/// `λ_crit = sqrt(2π)/(V_R0 sqrt F) - λ_int/(V_R0 D)`.
pub fn case2_d1_quantities(
    lambda: f64,
    lambda_int: f64,
    fisher: f64,
    delta: f64,
    v_r0: f64,
) -> Result<LineQuantities> {
    check_lambda("case2_d1_quantities", lambda)?;
    check_lambda("case2_d1_quantities", lambda_int)?;
    check_det("case2_d1_quantities", fisher)?;
    if !(delta > 0.0) {
        return Err(Error::domain(
            "case2_d1_quantities",
            "estimator lies on the boundary; use the boundary formulas",
        ));
    }
    let slope = fisher * delta;
    let t = -lambda.ln();
    let eta = if lambda < lambda_int { 1.0 } else { 0.0 };
    let half_width = (2.0 * t / fisher).sqrt();
    let size =
        (2.0 * half_width + eta * (lambda.ln() - lambda_int.ln()) / slope) / v_r0;
    let lower = specfun::regularized_gamma_p(0.5, t)? * PI.sqrt();
    let credibility = (delta * (2.0 * fisher).sqrt() * lower + eta * (lambda - lambda_int))
        / ((2.0 * PI * fisher).sqrt() * delta - lambda_int);
    let lambda_crit = (2.0 * PI).sqrt() / (v_r0 * fisher.sqrt()) - lambda_int / (v_r0 * slope);
    Ok(LineQuantities {
        size,
        credibility,
        lambda_crit,
    })
}

/// One-dimensional boundary estimator with outward slope `g`:
/// `s = -log λ/(V_R0 g)`, `c = 1 - λ`, `λ_crit = 1/(V_R0 g)`.
pub fn case3_d1_quantities(lambda: f64, g_ml: f64, v_r0: f64) -> Result<LineQuantities> {
    check_lambda("case3_d1_quantities", lambda)?;
    if !(g_ml > 0.0) {
        return Err(Error::domain(
            "case3_d1_quantities",
            format!("boundary gradient {g_ml} must be positive"),
        ));
    }
    Ok(LineQuantities {
        size: -lambda.ln() / (v_r0 * g_ml),
        credibility: 1.0 - lambda,
        lambda_crit: 1.0 / (v_r0 * g_ml),
    })
}

/// Copy number at which the boundary point leaves the `λ` region:
/// `N ΔᵀF₁Δ = -2 log λ`. Zero at `λ = 1`.
pub fn n_min(lambda: f64, f1: &DMatrix<f64>, delta: &ParamVector) -> Result<f64> {
    check_lambda("n_min", lambda)?;
    let q = delta.dot(&(f1 * delta));
    if !(q > 0.0) {
        return Err(Error::domain("n_min", format!("quadratic form {q} must be positive")));
    }
    Ok(-2.0 * lambda.ln() / q)
}

/// Power-law exponents of `s` in `t = -log λ` near the two ends of `(0, 1]`,
/// used to close the integrals of [`credibility_from_sizes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeTails {
    /// Behaviour as `λ → 0`.
    pub lower: f64,
    /// Behaviour as `λ → 1`.
    pub upper: f64,
}

impl SizeTails {
    /// Ellipsoidal regions: `s ∝ t^{d/2}` at both ends.
    pub fn ellipsoidal(d: usize) -> Self {
        let h = d as f64 / 2.0;
        Self { lower: h, upper: h }
    }

    /// Regions anchored at a boundary estimator shrink like `t^{(d+1)/2}`.
    pub fn boundary(d: usize) -> Self {
        Self {
            lower: d as f64 / 2.0,
            upper: (d as f64 + 1.0) / 2.0,
        }
    }
}

/// `∫ A t^k dλ` over `λ ∈ [λ_a, λ_b]`, i.e. `A Γ(k+1) [P(k+1, t_a) - P(k+1, t_b)]`.
fn power_law_integral(amplitude: f64, k: f64, t_hi: f64, t_lo: f64) -> f64 {
    if amplitude == 0.0 {
        return 0.0;
    }
    amplitude * specfun::gamma(k + 1.0) * specfun::regularized_gamma_between(k + 1.0, t_lo, t_hi)
}

/// Integral of `s` over each grid interval and over the two tails.
struct SizeIntegrals {
    /// `∫_{λ_i}^{1} s dλ` for every grid point.
    above: Vec<f64>,
    total: f64,
}

fn integrate_sizes(lambdas: &[f64], sizes: &[f64], tails: SizeTails) -> Result<SizeIntegrals> {
    let n = lambdas.len();
    if n < MIN_GRID {
        return Err(Error::GridTooSmall { min: MIN_GRID, got: n });
    }
    if sizes.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sizes.len(),
        });
    }
    for w in lambdas.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Invalid("lambda grid must be strictly increasing".into()));
        }
    }
    check_lambda("credibility_from_sizes", lambdas[0])?;
    check_lambda("credibility_from_sizes", lambdas[n - 1])?;

    let t: Vec<f64> = lambdas.iter().map(|l| -l.ln()).collect();
    let mut pieces = vec![0.0; n];
    // pieces[i] = ∫ over [λ_i, λ_{i+1}], last one over [λ_{n-1}, 1]
    for i in 0..n {
        let piece = if i + 1 < n {
            let (s0, s1) = (sizes[i], sizes[i + 1]);
            let (t0, t1) = (t[i], t[i + 1]);
            let trapezoid = 0.5 * (s0 + s1) * (lambdas[i + 1] - lambdas[i]);
            if t1 == 0.0 && s0 > 0.0 {
                // interval ending at λ = 1 follows the upper tail law
                let k = tails.upper;
                power_law_integral(s0 / t0.powf(k), k, t0, 0.0)
            } else if s0 > 0.0 && s1 > 0.0 && t1 > 0.0 {
                let k = (s0 / s1).ln() / (t0 / t1).ln();
                if k.is_finite() && (-0.999..=40.0).contains(&k) {
                    power_law_integral(s0 / t0.powf(k), k, t0, t1)
                } else {
                    trapezoid
                }
            } else {
                trapezoid
            }
        } else if t[i] > 0.0 && sizes[i] > 0.0 {
            let k = tails.upper;
            power_law_integral(sizes[i] / t[i].powf(k), k, t[i], 0.0)
        } else {
            0.0
        };
        pieces[i] = piece;
    }
    let mut above = vec![0.0; n];
    let mut acc = 0.0;
    for i in (0..n).rev() {
        acc += pieces[i];
        above[i] = acc;
    }
    let k = tails.lower;
    let below = if sizes[0] > 0.0 && t[0] > 0.0 {
        let amplitude = sizes[0] / t[0].powf(k);
        amplitude * specfun::gamma(k + 1.0) * specfun::regularized_gamma_q(k + 1.0, t[0])?
    } else {
        0.0
    };
    Ok(SizeIntegrals {
        total: acc + below,
        above,
    })
}

/// Credibilities from sizes through `c_λ = [λ s_λ + ∫_λ^1 s] / ∫_0^1 s`.
///
/// Between grid points `s` is interpolated as a power of `t = -log λ` and
/// integrated exactly against `dλ = -e^{-t} dt`, which reproduces
/// untruncated Gaussian regions without discretization error; intervals
/// where a power law does not fit fall back to the trapezoid rule. The
/// pieces beyond the grid use the exponents in `tails`.
pub fn credibility_from_sizes(lambdas: &[f64], sizes: &[f64], tails: SizeTails) -> Result<Vec<f64>> {
    let integrals = integrate_sizes(lambdas, sizes, tails)?;
    if !(integrals.total > 0.0) {
        return Err(Error::Invalid("sizes integrate to zero".into()));
    }
    Ok(lambdas
        .iter()
        .zip(sizes)
        .zip(&integrals.above)
        .map(|((l, s), a)| ((l * s + a) / integrals.total).clamp(0.0, 1.0))
        .collect())
}

/// `∫_0^1 s dλ` with the same interpolation as [`credibility_from_sizes`].
pub fn integrate_size_curve(lambdas: &[f64], sizes: &[f64], tails: SizeTails) -> Result<f64> {
    Ok(integrate_sizes(lambdas, sizes, tails)?.total)
}

/// `n` logarithmically spaced points from `lo` to 1 inclusive.
pub fn log_grid(n: usize, lo: f64) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && lo < 1.0);
    let a = lo.ln();
    (0..n)
        .map(|i| {
            if i + 1 == n {
                1.0
            } else {
                (a * (1.0 - i as f64 / (n - 1) as f64)).exp()
            }
        })
        .collect()
}

/// The default 400-point grid on `[1e-6, 1]`.
pub fn default_lambda_grid() -> Vec<f64> {
    log_grid(400, 1e-6)
}

/// Size law of one region family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SizeModel {
    Gaussian { d: usize, det_f: f64, v_r0: f64 },
    Truncated { d: usize, det_f: f64, v_r0: f64, lambda_int: f64 },
    TruncatedLine { fisher: f64, delta: f64, v_r0: f64, lambda_int: f64 },
    BoundaryCap { d: usize, det_f: f64, v_r0: f64, lambda_bd: f64 },
    BoundaryLine { g: f64, v_r0: f64 },
}

impl SizeModel {
    pub fn size(&self, lambda: f64) -> Result<f64> {
        match *self {
            SizeModel::Gaussian { d, det_f, v_r0 } => case1_size(lambda, d, det_f, v_r0),
            SizeModel::Truncated { d, det_f, v_r0, lambda_int } => {
                case2_size(lambda, lambda_int, d, det_f, v_r0)
            }
            SizeModel::TruncatedLine { fisher, delta, v_r0, lambda_int } => {
                Ok(case2_d1_quantities(lambda, lambda_int, fisher, delta, v_r0)?.size)
            }
            SizeModel::BoundaryCap { d, det_f, v_r0, lambda_bd } => {
                case3_size(lambda, lambda_bd, d, det_f, v_r0)
            }
            SizeModel::BoundaryLine { g, v_r0 } => Ok(case3_d1_quantities(lambda, g, v_r0)?.size),
        }
    }

    /// Truncation fraction reported alongside the size.
    pub fn gamma(&self, lambda: f64) -> Result<f64> {
        match *self {
            SizeModel::Gaussian { .. } => Ok(1.0),
            SizeModel::Truncated { d, lambda_int, .. } => truncation_fraction_case2(lambda, lambda_int, d),
            SizeModel::TruncatedLine { fisher, delta, v_r0, lambda_int } => {
                let s = case2_d1_quantities(lambda, lambda_int, fisher, delta, v_r0)?.size;
                let full = case1_size(lambda, 1, fisher, v_r0)?;
                Ok(if full > 0.0 { s / full } else { 1.0 })
            }
            SizeModel::BoundaryCap { d, lambda_bd, .. } => {
                if lambda == 1.0 {
                    Ok(0.0)
                } else {
                    truncation_fraction_case3(lambda, lambda_bd, d)
                }
            }
            SizeModel::BoundaryLine { .. } => Ok(0.5),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            SizeModel::Gaussian { d, .. }
            | SizeModel::Truncated { d, .. }
            | SizeModel::BoundaryCap { d, .. } => d,
            SizeModel::TruncatedLine { .. } | SizeModel::BoundaryLine { .. } => 1,
        }
    }

    pub fn tails(&self) -> SizeTails {
        match self {
            SizeModel::BoundaryCap { .. } | SizeModel::BoundaryLine { .. } => {
                SizeTails::boundary(self.dim())
            }
            _ => SizeTails::ellipsoidal(self.dim()),
        }
    }

    /// Size law of the same estimator when the boundary is ignored.
    pub fn untruncated(&self) -> Option<SizeModel> {
        match *self {
            SizeModel::Gaussian { .. } => Some(*self),
            SizeModel::Truncated { d, det_f, v_r0, .. } | SizeModel::BoundaryCap { d, det_f, v_r0, .. } => {
                Some(SizeModel::Gaussian { d, det_f, v_r0 })
            }
            SizeModel::TruncatedLine { fisher, v_r0, .. } => Some(SizeModel::Gaussian {
                d: 1,
                det_f: fisher,
                v_r0,
            }),
            SizeModel::BoundaryLine { .. } => None,
        }
    }

    /// Closed-form credibility and `λ_crit` when one exists.
    fn closed_form(&self, lambda: f64) -> Result<Option<(f64, f64)>> {
        Ok(match *self {
            SizeModel::Gaussian { d, det_f, v_r0 } => Some((
                case1_credibility(lambda, d)?,
                case1_lambda_crit(d, det_f, v_r0)?.value,
            )),
            SizeModel::TruncatedLine { fisher, delta, v_r0, lambda_int } => {
                let q = case2_d1_quantities(lambda, lambda_int, fisher, delta, v_r0)?;
                Some((q.credibility, q.lambda_crit))
            }
            SizeModel::BoundaryLine { g, v_r0 } => {
                let q = case3_d1_quantities(lambda, g, v_r0)?;
                Some((q.credibility, q.lambda_crit))
            }
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveFlag {
    /// Some size exceeds 1, the physical upper bound.
    ExceedsUnit,
    /// `λ_crit ≥ 1`; the Gaussian approximation is not concentrated.
    GaussianInvalid,
    /// `s_crit` not reported because `λ_crit ≥ 1`.
    SCritSuppressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub d: usize,
    #[serde(rename = "N")]
    pub copies: u64,
    pub det_f: f64,
    pub v_r0: f64,
    pub lambda_int: Option<f64>,
    pub lambda_bd: Option<f64>,
    pub g_ml_norm: Option<f64>,
}

/// Analytic `s_λ`, `c_λ` on a grid plus the plausible-region summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub case: RegionCase,
    pub model: SizeModel,
    pub lambdas: Vec<f64>,
    pub sizes: Vec<f64>,
    pub credibilities: Vec<f64>,
    pub gammas: Vec<f64>,
    /// Sizes of the same estimator with the boundary ignored.
    pub untruncated_sizes: Option<Vec<f64>>,
    pub lambda_crit: f64,
    pub s_crit: Option<f64>,
    pub c_crit_exact: Option<f64>,
    pub c_crit_asymptotic: Option<f64>,
    pub n_min: Option<f64>,
    pub flags: Vec<CurveFlag>,
    pub meta: CurveMeta,
}

/// Size law matching an analysed estimator.
pub fn size_model(ml: &MlResult, v_r0: f64) -> Result<SizeModel> {
    let d = ml.r_ml.len();
    let det_f = ml.fisher.determinant();
    Ok(match ml.case {
        RegionCase::InteriorFull => SizeModel::Gaussian { d, det_f, v_r0 },
        RegionCase::InteriorTruncated => {
            let lambda_int = ml
                .lambda_int
                .ok_or_else(|| Error::Invalid("truncated case without lambda_int".into()))?;
            if d == 1 {
                let r_p = ml
                    .r_p
                    .as_ref()
                    .ok_or_else(|| Error::Invalid("truncated case without r_P".into()))?;
                SizeModel::TruncatedLine {
                    fisher: ml.fisher.entries[(0, 0)],
                    delta: (r_p[0] - ml.r_ml[0]).abs(),
                    v_r0,
                    lambda_int,
                }
            } else {
                SizeModel::Truncated { d, det_f, v_r0, lambda_int }
            }
        }
        RegionCase::Boundary => {
            if d == 1 {
                SizeModel::BoundaryLine {
                    g: ml.g_ml[0].abs(),
                    v_r0,
                }
            } else {
                let lambda_bd = ml
                    .lambda_bd
                    .ok_or_else(|| Error::Invalid("boundary case without lambda_bd".into()))?;
                SizeModel::BoundaryCap { d, det_f, v_r0, lambda_bd }
            }
        }
    })
}

/// Evaluates the region curve of an analysed estimator on `lambdas`
/// (strictly increasing, in `(0, 1]`).
pub fn region_curve(ml: &MlResult, v_r0: f64, lambdas: &[f64]) -> Result<RegionCurve> {
    let model = size_model(ml, v_r0)?;
    let copies = ml.copies;
    let mut curve = curve_for_model(model, ml.case, lambdas, copies)?;
    curve.meta.lambda_int = ml.lambda_int;
    curve.meta.lambda_bd = ml.lambda_bd;
    if ml.case == RegionCase::Boundary {
        curve.meta.g_ml_norm = Some(ml.g_ml.norm());
    }
    if let (RegionCase::InteriorTruncated, Some(r_p)) = (ml.case, &ml.r_p) {
        let delta = r_p - &ml.r_ml;
        let f1 = &ml.fisher.entries / copies.max(1) as f64;
        if curve.lambda_crit > 0.0 && curve.lambda_crit < 1.0 {
            curve.n_min = n_min(curve.lambda_crit, &f1, &delta).ok();
        }
    }
    Ok(curve)
}

/// Region curve for an explicit size law.
pub fn curve_for_model(model: SizeModel, case: RegionCase, lambdas: &[f64], copies: u64) -> Result<RegionCurve> {
    let d = model.dim();
    let sizes = lambdas
        .iter()
        .map(|&l| model.size(l))
        .collect::<Result<Vec<_>>>()?;
    let gammas = lambdas
        .iter()
        .map(|&l| model.gamma(l))
        .collect::<Result<Vec<_>>>()?;
    let untruncated_sizes = match (case, model.untruncated()) {
        (RegionCase::InteriorFull, _) | (_, None) => None,
        (_, Some(m)) => Some(lambdas.iter().map(|&l| m.size(l)).collect::<Result<Vec<_>>>()?),
    };

    let mut flags = Vec::new();
    if sizes.iter().any(|&s| s > 1.0) {
        flags.push(CurveFlag::ExceedsUnit);
    }

    let (credibilities, lambda_crit, s_crit, c_crit_exact) =
        if model.closed_form(lambdas[0])?.is_some() {
            let credibilities = lambdas
                .iter()
                .map(|&l| Ok(model.closed_form(l)?.expect("closed form").0))
                .collect::<Result<Vec<_>>>()?;
            let lambda_crit = model.closed_form(1.0)?.expect("closed form").1;
            let (s_crit, c_crit) = if lambda_crit > 0.0 && lambda_crit < 1.0 {
                (
                    Some(model.size(lambda_crit)?),
                    Some(model.closed_form(lambda_crit)?.expect("closed form").0),
                )
            } else {
                (None, None)
            };
            (credibilities, lambda_crit, s_crit, c_crit)
        } else {
            let tails = model.tails();
            let credibilities = credibility_from_sizes(lambdas, &sizes, tails)?;
            let lambda_crit = integrate_size_curve(lambdas, &sizes, tails)?;
            let (s_crit, c_crit) = if lambda_crit > 0.0 && lambda_crit < 1.0 {
                let mut grid = lambdas.to_vec();
                let pos = grid.partition_point(|&l| l < lambda_crit);
                if grid.get(pos) != Some(&lambda_crit) {
                    grid.insert(pos, lambda_crit);
                }
                let extended = grid.iter().map(|&l| model.size(l)).collect::<Result<Vec<_>>>()?;
                let c = credibility_from_sizes(&grid, &extended, tails)?;
                (Some(extended[pos]), Some(c[pos]))
            } else {
                (None, None)
            };
            (credibilities, lambda_crit, s_crit, c_crit)
        };
    if lambda_crit >= 1.0 {
        flags.push(CurveFlag::GaussianInvalid);
        flags.push(CurveFlag::SCritSuppressed);
    }
    let c_crit_asymptotic = matches!(model, SizeModel::Gaussian { .. })
        .then(|| asymptotic_plausible_credibility(d, copies));
    let det_f = match model {
        SizeModel::Gaussian { det_f, .. }
        | SizeModel::Truncated { det_f, .. }
        | SizeModel::BoundaryCap { det_f, .. } => det_f,
        SizeModel::TruncatedLine { fisher, .. } => fisher,
        SizeModel::BoundaryLine { .. } => f64::NAN,
    };
    let v_r0 = match model {
        SizeModel::Gaussian { v_r0, .. }
        | SizeModel::Truncated { v_r0, .. }
        | SizeModel::TruncatedLine { v_r0, .. }
        | SizeModel::BoundaryCap { v_r0, .. }
        | SizeModel::BoundaryLine { v_r0, .. } => v_r0,
    };
    Ok(RegionCurve {
        case,
        model,
        lambdas: lambdas.to_vec(),
        sizes,
        credibilities,
        gammas,
        untruncated_sizes,
        lambda_crit,
        s_crit,
        c_crit_exact,
        c_crit_asymptotic,
        n_min: None,
        flags,
        meta: CurveMeta {
            d,
            copies,
            det_f,
            v_r0,
            lambda_int: None,
            lambda_bd: None,
            g_ml_norm: None,
        },
    })
}

impl RegionCurve {
    /// CSV with columns `lambda,s_analytic,c_analytic,gamma,flags`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,s_analytic,c_analytic,gamma,flags\n");
        for i in 0..self.lambdas.len() {
            let flag = if self.sizes[i] > 1.0 { "exceeds-unit" } else { "" };
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{}",
                self.lambdas[i], self.sizes[i], self.credibilities[i], self.gammas[i], flag
            );
        }
        out
    }

    pub fn summary(&self) -> CurveSummary {
        CurveSummary {
            lambda_crit: self.lambda_crit,
            s_crit: self.s_crit,
            c_crit_exact: self.c_crit_exact,
            c_crit_asymptotic: self.c_crit_asymptotic,
            case: self.case,
            n_min: self.n_min,
        }
    }
}

/// JSON summary of a region curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub lambda_crit: f64,
    pub s_crit: Option<f64>,
    pub c_crit_exact: Option<f64>,
    /// Large-`N` approximation; only for untruncated regions.
    pub c_crit_asymptotic: Option<f64>,
    pub case: RegionCase,
    #[serde(rename = "N_min")]
    pub n_min: Option<f64>,
}
