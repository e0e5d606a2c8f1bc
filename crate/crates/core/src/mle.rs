//! Constrained maximum likelihood and the quantities that decide which region
//! formulas apply: whether the estimator sits on the boundary, how far the
//! likelihood ellipsoid reaches across it, and the boundary gradient.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, Dataset, FisherMatrix, Pom};
use crate::statespace::StateSpace;
use crate::ParamVector;

/// Which of the three region regimes an estimate falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegionCase {
    /// Interior estimator whose likelihood ellipsoids stay inside the space.
    InteriorFull,
    /// Interior estimator whose ellipsoids are cut by the boundary.
    InteriorTruncated,
    /// Estimator on the boundary.
    Boundary,
}

/// Matrix used as the Gaussian precision around the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Covariance {
    #[default]
    Fisher,
    ObservedHessian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlOptions {
    /// Projected-gradient tolerance; `None` means `1e-9 N`.
    pub tol_grad: Option<f64>,
    pub max_iter: usize,
    /// Inward step used to evaluate the Fisher matrix when some outcome
    /// probability vanishes at the estimator.
    pub retraction: f64,
    pub covariance: Covariance,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self {
            tol_grad: None,
            max_iter: 10_000,
            retraction: 1e-6,
            covariance: Covariance::Fisher,
        }
    }
}

impl MlOptions {
    pub fn tolerance(&self, copies: u64) -> f64 {
        self.tol_grad.unwrap_or(1e-9 * copies.max(1) as f64)
    }
}

/// Settings of the randomized search for the best boundary point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySearch {
    pub perturbations: usize,
    pub eps_scale: f64,
    pub seed: u64,
    /// Smallest likelihood ratio of interest; also the classification
    /// threshold for truncation.
    pub lambda_min: f64,
    pub max_polish_rounds: usize,
}

impl Default for BoundarySearch {
    fn default() -> Self {
        Self {
            perturbations: 512,
            eps_scale: 1.0,
            seed: 0,
            lambda_min: 1e-4,
            max_polish_rounds: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlResult {
    pub r_ml: ParamVector,
    /// Copy number `N` of the data.
    pub copies: u64,
    pub log_l_max: f64,
    pub on_boundary: bool,
    /// Log-likelihood gradient at the estimator; zero when interior.
    pub g_ml: ParamVector,
    pub fisher: FisherMatrix,
    pub case: RegionCase,
    pub lambda_int: Option<f64>,
    pub r_p: Option<ParamVector>,
    pub lambda_bd: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub projected_gradient: f64,
    pub tol_grad: f64,
    /// Point at which the Fisher matrix was evaluated when it differs from
    /// the estimator.
    pub fisher_retracted: bool,
    pub warnings: Vec<String>,
}

/// Maximizes `Σ n_k log p_k(r)` over the space.
///
/// Projected gradient ascent in the Hilbert–Schmidt metric with
/// Barzilai–Borwein steps and an Armijo backtrack along the projection arc;
/// strictly interior iterates try a Newton step first. Convergence is
/// `N ‖P(r + G⁻¹g/N) - r‖_G ≤ tol`, which vanishes exactly at constrained
/// stationary points.
pub fn maximize_likelihood(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    opts: &MlOptions,
) -> Result<MlResult> {
    if data.counts.len() != pom.outcomes() {
        return Err(Error::DimensionMismatch {
            expected: pom.outcomes(),
            found: data.counts.len(),
        });
    }
    if space.dim != pom.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim,
            found: pom.dim(),
        });
    }
    data.validate()?;
    let n_copies = data.total.max(1) as f64;
    let tol = opts.tolerance(data.total);
    let metric = space.metric();
    let metric_inv = metric
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularModel("degenerate parameter metric".into()))?;
    let mut scratch = vec![0.0; pom.outcomes()];
    let mut ll = |r: &[f64]| model::log_likelihood_with(pom, &data.counts, r, &mut scratch);

    let mut r = space.center();
    let mut f = ll(r.as_slice());
    if !f.is_finite() {
        return Err(Error::SingularModel(
            "likelihood vanishes at the center of the space".into(),
        ));
    }
    let mut g = model::log_likelihood_gradient(pom, data, r.as_slice())?;
    let mut step = 0.1 / natural_norm(&g, &metric_inv).max(1e-300);
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut pg = f64::INFINITY;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let h = &metric_inv * &g;
        pg = projected_gradient(space, &metric, &r, &h, n_copies);
        if pg <= tol {
            converged = true;
            break;
        }

        if let Some((r_new, f_new)) = newton_step(pom, data, space, &r, &g, f, &mut ll) {
            let g_new = model::log_likelihood_gradient(pom, data, r_new.as_slice())?;
            update_bb(&mut step, &r_new, &r, &g_new, &g, &metric);
            r = r_new;
            f = f_new;
            g = g_new;
            continue;
        }

        let mut t = step;
        let mut accepted = None;
        for _ in 0..80 {
            let trial = space.nearest_point((&r + &h * t).as_slice());
            let f_trial = ll(trial.as_slice());
            let ascent = g.dot(&(&trial - &r));
            if f_trial.is_finite() && f_trial >= f + 1e-4 * ascent && trial != r {
                accepted = Some((trial, f_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((r_new, f_new)) = accepted else {
            // no ascent possible at floating-point resolution
            converged = pg <= 1e3 * tol;
            if !converged {
                warnings.push(format!(
                    "line search stalled with projected gradient {pg:.3e} > tolerance {tol:.3e}"
                ));
            }
            break;
        };
        let g_new = model::log_likelihood_gradient(pom, data, r_new.as_slice())?;
        update_bb(&mut step, &r_new, &r, &g_new, &g, &metric);
        r = r_new;
        f = f_new;
        g = g_new;
    }
    if !converged && warnings.is_empty() {
        warnings.push(format!(
            "no convergence after {iterations} iterations; projected gradient {pg:.3e}"
        ));
    }

    let natural = natural_norm(&g, &metric_inv);
    let on_boundary = converged && natural > 10.0 * tol;
    let (fisher, fisher_retracted) = fisher_at(pom, data, space, &r, &g, &metric_inv, opts)?;
    let g_ml = if on_boundary {
        g
    } else {
        DVector::zeros(space.dim)
    };
    Ok(MlResult {
        r_ml: r,
        copies: data.total,
        log_l_max: f,
        on_boundary,
        g_ml,
        fisher,
        case: if on_boundary {
            RegionCase::Boundary
        } else {
            RegionCase::InteriorFull
        },
        lambda_int: None,
        r_p: None,
        lambda_bd: None,
        iterations,
        converged,
        projected_gradient: pg,
        tol_grad: tol,
        fisher_retracted,
        warnings,
    })
}

fn natural_norm(g: &ParamVector, metric_inv: &DMatrix<f64>) -> f64 {
    g.dot(&(metric_inv * g)).max(0.0).sqrt()
}

fn projected_gradient(
    space: &StateSpace,
    metric: &DMatrix<f64>,
    r: &ParamVector,
    h: &ParamVector,
    n_copies: f64,
) -> f64 {
    let moved = space.nearest_point((r + h / n_copies).as_slice()) - r;
    n_copies * moved.dot(&(metric * &moved)).max(0.0).sqrt()
}

fn update_bb(
    step: &mut f64,
    r_new: &ParamVector,
    r: &ParamVector,
    g_new: &ParamVector,
    g: &ParamVector,
    metric: &DMatrix<f64>,
) {
    let s = r_new - r;
    let curvature = -s.dot(&(g_new - g));
    let ss = s.dot(&(metric * &s));
    if curvature > 0.0 && ss > 0.0 {
        *step = (ss / curvature).clamp(1e-20, 1e20);
    } else {
        *step *= 4.0;
    }
}

fn newton_step(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    r: &ParamVector,
    g: &ParamVector,
    f: f64,
    ll: &mut impl FnMut(&[f64]) -> f64,
) -> Option<(ParamVector, f64)> {
    if space.min_eigenvalue(r.as_slice()) <= 0.0 {
        return None;
    }
    let neg_h = model::observed_hessian(pom, data, r.as_slice()).ok()?;
    let chol = neg_h.entries.cholesky()?;
    let r_new = r + chol.solve(g);
    if !space.is_physical(r_new.as_slice()) || space.min_eigenvalue(r_new.as_slice()) <= 0.0 {
        return None;
    }
    let f_new = ll(r_new.as_slice());
    (f_new.is_finite() && f_new >= f - 1e-12 * f.abs().max(1.0)).then_some((r_new, f_new))
}

fn fisher_at(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    r: &ParamVector,
    g: &ParamVector,
    metric_inv: &DMatrix<f64>,
    opts: &MlOptions,
) -> Result<(FisherMatrix, bool)> {
    let eval = |x: &[f64]| match opts.covariance {
        Covariance::Fisher => model::fisher_information(pom, x, data.total),
        Covariance::ObservedHessian => model::observed_hessian(pom, data, x),
    };
    match eval(r.as_slice()) {
        Ok(f) => Ok((f, false)),
        Err(Error::SingularModel(_)) => {
            let h = metric_inv * g;
            let norm = h.norm();
            let mut inward = if norm > 0.0 { -h / norm } else { h };
            let mut moved = r + &inward * opts.retraction;
            if norm == 0.0 || !space.is_physical(moved.as_slice()) {
                let towards = space.center() - r;
                inward = &towards / towards.norm().max(1e-300);
                moved = r + inward * opts.retraction;
            }
            let mut f = eval(moved.as_slice())?;
            f.evaluated_at = moved;
            Ok((f, true))
        }
        Err(e) => Err(e),
    }
}

/// Whether the `λ_min` likelihood ellipsoid `ΔᵀFΔ ≤ -2 log λ_min` around the
/// estimator pokes out of the space. Checks the principal-axis end points,
/// the coordinate extremes and a fixed set of random surface points.
pub fn ellipsoid_exits(space: &StateSpace, center: &ParamVector, fisher: &DMatrix<f64>, lambda_min: f64) -> bool {
    let d = center.len();
    let radius2 = -2.0 * lambda_min.ln();
    let outside = |delta: &ParamVector| !space.is_physical((center + delta).as_slice());
    let eig = fisher.clone().symmetric_eigen();
    for i in 0..d {
        let fi = eig.eigenvalues[i];
        if fi <= 0.0 {
            return true;
        }
        let axis = eig.eigenvectors.column(i) * (radius2 / fi).sqrt();
        if outside(&axis) || outside(&(-&axis)) {
            return true;
        }
    }
    let (cov, _) = linalg::spd_inverse(fisher);
    for j in 0..d {
        let col = cov.column(j) * (radius2 / cov[(j, j)]).sqrt();
        if outside(&col) || outside(&(-&col)) {
            return true;
        }
    }
    let Some(chol) = fisher.clone().cholesky() else {
        return true;
    };
    let l_t = chol.l().transpose();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e111);
    for _ in 0..512 {
        let z: ParamVector = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        let z = &z * (radius2.sqrt() / z.norm());
        let Some(delta) = l_t.clone().solve_upper_triangular(&z) else {
            return true;
        };
        if outside(&delta) {
            return true;
        }
    }
    false
}

/// Case decision from the estimator alone: `Boundary` when on the boundary,
/// `InteriorTruncated` when the `λ_min` ellipsoid leaves the space, otherwise
/// `InteriorFull`. The full pipeline ([`analyze`]) additionally requires a
/// boundary point with `λ_int > λ_min` before keeping the truncated verdict.
pub fn classify_case(ml: &MlResult, space: &StateSpace, lambda_min: f64) -> RegionCase {
    if ml.on_boundary {
        RegionCase::Boundary
    } else if ellipsoid_exits(space, &ml.r_ml, &ml.fisher.entries, lambda_min) {
        RegionCase::InteriorTruncated
    } else {
        RegionCase::InteriorFull
    }
}

/// Best boundary point near an interior estimator and its likelihood ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMax {
    pub r_p: ParamVector,
    pub lambda_int: f64,
    /// `λ_int` after the first round, before local polishing.
    pub initial_lambda_int: f64,
    pub rounds: usize,
}

/// Randomized search for the boundary point of largest likelihood.
///
/// Gaussian perturbations with covariance `eps² F⁻¹` are added to the
/// estimator; those that stay strictly inside are dropped, the rest are
/// mapped onto the boundary with [`StateSpace::project_to_boundary`]. The best
/// one is then polished by repeating the search around it with halved spread
/// until [`STALL_ROUNDS`] consecutive rounds gain less than `1e-4` relatively.
pub fn estimate_boundary_max(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    ml: &MlResult,
    search: &BoundarySearch,
) -> Result<BoundaryMax> {
    let counts = &data.counts;
    let m = pom.outcomes();
    let log_l = |r: &[f64]| {
        let mut scratch = vec![0.0; m];
        model::log_likelihood_with(pom, counts, r, &mut scratch)
    };
    boundary_max_with(&log_l, space, &ml.r_ml, ml.log_l_max, &ml.fisher.entries, search)
}

/// Consecutive polish rounds with relative gain below `1e-4` that end the
/// boundary search.
pub const STALL_ROUNDS: usize = 3;

/// [`estimate_boundary_max`] for an arbitrary log-likelihood.
pub fn boundary_max_with<F>(
    log_l: &F,
    space: &StateSpace,
    r_ml: &ParamVector,
    log_l_max: f64,
    fisher: &DMatrix<f64>,
    search: &BoundarySearch,
) -> Result<BoundaryMax>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = r_ml.len();
    let (cov, _) = linalg::spd_inverse(fisher);
    let chol = (cov.clone() + DMatrix::identity(d, d) * 1e-300)
        .cholesky()
        .ok_or_else(|| Error::SingularModel("covariance is not positive definite".into()))?;
    let l = chol.l();

    let round = |center: &ParamVector, eps: f64, index: u64| -> Option<(ParamVector, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
        rng.set_stream(index);
        let candidates: Vec<ParamVector> = (0..search.perturbations)
            .map(|_| {
                let z: ParamVector = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                center + &l * z * eps
            })
            .collect();
        let scored: Vec<Option<(ParamVector, f64)>> = candidates
            .par_iter()
            .map(|c| {
                let strictly_inside = space.is_physical(c.as_slice())
                    && space.min_eigenvalue(c.as_slice()) > linalg::PSD_TOL;
                if strictly_inside {
                    return None;
                }
                let b = space.project_to_boundary(c.as_slice()).ok()?;
                let v = log_l(b.as_slice());
                v.is_finite().then_some((b, v))
            })
            .collect();
        scored
            .into_iter()
            .flatten()
            .fold(None, |best: Option<(ParamVector, f64)>, (b, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((b, v)),
            })
    };

    let (mut r_p, mut best) =
        round(r_ml, search.eps_scale, 0).ok_or(Error::NotNearBoundary)?;
    let initial = (best - log_l_max).exp().min(1.0);
    let mut eps = search.eps_scale;
    let mut rounds = 1;
    let mut stalled = 0;
    while rounds <= search.max_polish_rounds {
        eps *= 0.5;
        let before = (best - log_l_max).exp();
        if let Some((b, v)) = round(&r_p, eps, rounds as u64) {
            if v > best {
                r_p = b;
                best = v;
            }
        }
        rounds += 1;
        let after = (best - log_l_max).exp();
        // a single quiet round at a coarse spread says little; stop after
        // STALL_ROUNDS consecutive ones
        stalled = if after - before <= 1e-4 * before { stalled + 1 } else { 0 };
        if stalled >= STALL_ROUNDS {
            break;
        }
    }
    Ok(BoundaryMax {
        r_p,
        lambda_int: (best - log_l_max).exp().min(1.0),
        initial_lambda_int: initial,
        rounds,
    })
}

/// Log-likelihood gradient at a boundary estimator and
/// `λ_bd = exp(-gᵀF⁻¹g/2)`.
pub fn boundary_gradient(pom: &dyn Pom, data: &Dataset, ml: &MlResult) -> Result<(ParamVector, f64, bool)> {
    let g = model::log_likelihood_gradient(pom, data, ml.r_ml.as_slice())?;
    let (lambda_bd, pinv) = lambda_bd(&g, &ml.fisher.entries);
    Ok((g, lambda_bd, pinv))
}

/// `exp(-gᵀF⁻¹g/2)` and whether a pseudo-inverse was needed.
pub fn lambda_bd(g: &ParamVector, fisher: &DMatrix<f64>) -> (f64, bool) {
    let (inv, pinv) = linalg::spd_inverse(fisher);
    let q = g.dot(&(inv * g)).max(0.0);
    ((-0.5 * q).exp(), pinv)
}

/// Maximum likelihood followed by case classification and the case-specific
/// boundary quantities.
///
/// For interior estimators whose `λ_min` ellipsoid leaves the space the
/// boundary search is run with spreads `eps, 2 eps, …` up to the ellipsoid
/// radius until some perturbation leaves the space. Without a boundary point
/// above `λ_min` the estimate falls back to `InteriorFull`; a boundary point
/// with `λ_int ≥ 1 - 1e-9` turns it into `Boundary`.
pub fn analyze(
    pom: &dyn Pom,
    data: &Dataset,
    space: &StateSpace,
    opts: &MlOptions,
    search: &BoundarySearch,
) -> Result<MlResult> {
    let mut ml = maximize_likelihood(pom, data, space, opts)?;
    ml.case = classify_case(&ml, space, search.lambda_min);
    if ml.case == RegionCase::InteriorTruncated {
        let max_eps = (-2.0 * search.lambda_min.ln()).sqrt();
        let mut eps = search.eps_scale;
        let found = loop {
            let attempt = BoundarySearch {
                eps_scale: eps,
                ..search.clone()
            };
            match estimate_boundary_max(pom, data, space, &ml, &attempt) {
                Ok(b) => break Some(b),
                Err(Error::NotNearBoundary) if eps < max_eps => eps = (2.0 * eps).min(max_eps),
                Err(Error::NotNearBoundary) => break None,
                Err(e) => return Err(e),
            }
        };
        match found {
            Some(b) if b.lambda_int >= 1.0 - 1e-9 => {
                ml.case = RegionCase::Boundary;
                ml.on_boundary = true;
                ml.r_p = Some(b.r_p);
                ml.lambda_int = Some(b.lambda_int);
            }
            Some(b) if b.lambda_int > search.lambda_min => {
                ml.r_p = Some(b.r_p);
                ml.lambda_int = Some(b.lambda_int);
            }
            Some(b) => {
                ml.warnings.push(format!(
                    "boundary likelihood ratio {:.3e} below {:.1e}; treated as untruncated",
                    b.lambda_int, search.lambda_min
                ));
                ml.case = RegionCase::InteriorFull;
            }
            None => {
                ml.warnings.push("no perturbation reached the boundary; treated as untruncated".into());
                ml.case = RegionCase::InteriorFull;
            }
        }
    }
    if ml.case == RegionCase::Boundary {
        let (g, lbd, pinv) = boundary_gradient(pom, data, &ml).or_else(|e| match e {
            Error::SingularModel(_) => {
                // observed outcome with vanishing probability cannot occur at a
                // finite-likelihood estimator; keep the solver gradient
                let (l, p) = lambda_bd(&ml.g_ml, &ml.fisher.entries);
                Ok((ml.g_ml.clone(), l, p))
            }
            other => Err(other),
        })?;
        if pinv {
            ml.warnings.push("Fisher matrix singular; pseudo-inverse used for lambda_bd".into());
        }
        ml.g_ml = g;
        ml.lambda_bd = Some(lbd);
    }
    Ok(ml)
}
