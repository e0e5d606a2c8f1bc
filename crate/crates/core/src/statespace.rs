//! Convex parameter spaces: quantum state spaces in their flat affine
//! parametrization, and plain intervals.
//!
//! A matrix-backed space maps a parameter column `r` to the Hermitian
//! unit-trace matrix `ρ(r) = ρ₀ + Σ_j r_j E_j`; membership is positivity of
//! `ρ(r)`. Uniform sampling with respect to Lebesgue measure on `r` is done by
//! rejection from the bounding box, or, for full state spaces, by an exact
//! proposal on the diagonal simplex and the 2×2-minor disks.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, MAX_STACK_DIM, PSD_TOL};
use crate::specfun;
use crate::ParamVector;

/// Independent RNG streams per sampling call. Fixed so results do not depend
/// on the worker count.
pub const SAMPLE_STREAMS: u64 = 64;

const TIMEOUT_ATTEMPTS: u64 = 10_000_000;
const TIMEOUT_YIELD: f64 = 1e-9;

/// Lebesgue volume of the `D`-dimensional quantum state space in the flat
/// parametrization: `π^{D(D-1)/2} Π_{j<D} j! / (D²-1)!`.
pub fn lebesgue_volume(hilbert_dim: usize) -> Result<f64> {
    if hilbert_dim < 2 {
        return Err(Error::domain(
            "lebesgue_volume",
            format!("Hilbert dimension {hilbert_dim} must be at least 2"),
        ));
    }
    let d = hilbert_dim as f64;
    if hilbert_dim <= 4 {
        // (D²-1)! ≤ 15! and the numerator factorials are exact in f64.
        let factorial = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
        let num: f64 = (1..hilbert_dim).map(factorial).product();
        let den = factorial(hilbert_dim * hilbert_dim - 1);
        let k = (hilbert_dim * (hilbert_dim - 1) / 2) as i32;
        return Ok(PI.powi(k) * num / den);
    }
    let log_v = 0.5 * d * (d - 1.0) * PI.ln()
        + (1..hilbert_dim).map(|j| specfun::ln_gamma(j as f64 + 1.0)).sum::<f64>()
        - specfun::ln_gamma(d * d);
    Ok(log_v.exp())
}

/// Affine map from parameters to Hermitian unit-trace matrices.
#[derive(Debug, Clone)]
pub struct MatrixParametrization {
    hilbert_dim: usize,
    offset: Vec<C64>,
    basis: Vec<Vec<C64>>,
    gram: DMatrix<f64>,
    gram_inv: DMatrix<f64>,
}

impl MatrixParametrization {
    fn new(hilbert_dim: usize, offset: Vec<C64>, basis: Vec<Vec<C64>>) -> Self {
        let d = basis.len();
        let gram = DMatrix::from_fn(d, d, |i, j| hs_inner(&basis[i], &basis[j], hilbert_dim));
        let gram_inv = gram
            .clone()
            .try_inverse()
            .expect("parametrization basis must be linearly independent");
        Self {
            hilbert_dim,
            offset,
            basis,
            gram,
            gram_inv,
        }
    }

    pub fn hilbert_dim(&self) -> usize {
        self.hilbert_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Whether the parametrization covers every `D × D` density matrix.
    pub fn is_full(&self) -> bool {
        self.dim() == self.hilbert_dim * self.hilbert_dim - 1
    }

    /// Hilbert–Schmidt Gram matrix `Re tr(E_i E_j)` of the basis.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn basis_matrix(&self, j: usize) -> CMatrix {
        to_cmatrix(&self.basis[j], self.hilbert_dim)
    }

    pub fn offset_matrix(&self) -> CMatrix {
        to_cmatrix(&self.offset, self.hilbert_dim)
    }

    /// Writes `ρ(r)` row-major into `out`.
    pub fn fill_matrix(&self, r: &[f64], out: &mut [C64]) {
        let n2 = self.hilbert_dim * self.hilbert_dim;
        out[..n2].copy_from_slice(&self.offset);
        for (e, &rj) in self.basis.iter().zip(r) {
            if rj == 0.0 {
                continue;
            }
            for (o, &b) in out[..n2].iter_mut().zip(e) {
                *o += b * rj;
            }
        }
    }

    pub fn matrix(&self, r: &[f64]) -> CMatrix {
        let mut buf = vec![C64::new(0.0, 0.0); self.hilbert_dim * self.hilbert_dim];
        self.fill_matrix(r, &mut buf);
        to_cmatrix(&buf, self.hilbert_dim)
    }

    /// Coordinates of a Hermitian unit-trace matrix in the span of the basis.
    pub fn params(&self, m: &CMatrix) -> ParamVector {
        let n = self.hilbert_dim;
        let mut shifted = vec![C64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                shifted[i * n + j] = m[(i, j)] - self.offset[i * n + j];
            }
        }
        let b = DVector::from_iterator(
            self.dim(),
            self.basis.iter().map(|e| hs_inner(e, &shifted, n)),
        );
        &self.gram_inv * b
    }

    fn is_psd(&self, r: &[f64]) -> bool {
        let n = self.hilbert_dim;
        if n <= MAX_STACK_DIM {
            let mut buf = [C64::new(0.0, 0.0); MAX_STACK_DIM * MAX_STACK_DIM];
            self.fill_matrix(r, &mut buf);
            linalg::is_psd_cholesky(&buf, n, PSD_TOL)
        } else {
            let mut buf = vec![C64::new(0.0, 0.0); n * n];
            self.fill_matrix(r, &mut buf);
            linalg::is_psd_cholesky(&buf, n, PSD_TOL)
        }
    }

    /// Mixes in the smallest power-of-four fraction (from `1e-15`) of the
    /// maximally mixed state that lets a rank-deficient reconstruction pass
    /// the Cholesky test; rounding in `v v†` can otherwise leave a pivot just
    /// below `-PSD_TOL` when a diagonal entry is tiny.
    fn settle(&self, r: ParamVector) -> ParamVector {
        if self.is_psd(r.as_slice()) {
            return r;
        }
        let n = self.hilbert_dim;
        let center = self.params(&(CMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0)));
        let mut t = 1e-15;
        while t < 1e-6 {
            let mixed = &r * (1.0 - t) + &center * t;
            if self.is_psd(mixed.as_slice()) {
                return mixed;
            }
            t *= 4.0;
        }
        r
    }
}

fn hs_inner(a: &[C64], b: &[C64], n: usize) -> f64 {
    // Re tr(A B) for row-major A, B
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += (a[i * n + k] * b[k * n + i]).re;
        }
    }
    acc
}

fn to_cmatrix(flat: &[C64], n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| flat[i * n + j])
}

fn unit(n: usize, entries: &[(usize, usize, C64)]) -> Vec<C64> {
    let mut m = vec![C64::new(0.0, 0.0); n * n];
    for &(i, j, v) in entries {
        m[i * n + j] = v;
    }
    m
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn im(x: f64) -> C64 {
    C64::new(0.0, x)
}

/// Qubit parametrization `[[r1, r2 - i r3], [r2 + i r3, 1 - r1]]`, truncated
/// to the first `dim` parameters.
pub fn qubit_parametrization(dim: usize) -> MatrixParametrization {
    assert!((1..=3).contains(&dim));
    let all = [
        unit(2, &[(0, 0, re(1.0)), (1, 1, re(-1.0))]),
        unit(2, &[(0, 1, re(1.0)), (1, 0, re(1.0))]),
        unit(2, &[(0, 1, im(-1.0)), (1, 0, im(1.0))]),
    ];
    MatrixParametrization::new(2, unit(2, &[(1, 1, re(1.0))]), all[..dim].to_vec())
}

/// Qutrit parametrization with diagonal `(r1, r2, 1 - r1 - r2)` and
/// off-diagonals `ρ01 = r3 + i r4`, `ρ02 = r5 + i r6`, `ρ12 = r7 + i r8`.
pub fn qutrit_parametrization() -> MatrixParametrization {
    let mut basis = vec![
        unit(3, &[(0, 0, re(1.0)), (2, 2, re(-1.0))]),
        unit(3, &[(1, 1, re(1.0)), (2, 2, re(-1.0))]),
    ];
    for &(i, j) in &[(0, 1), (0, 2), (1, 2)] {
        basis.push(unit(3, &[(i, j, re(1.0)), (j, i, re(1.0))]));
        basis.push(unit(3, &[(i, j, im(1.0)), (j, i, im(-1.0))]));
    }
    MatrixParametrization::new(3, unit(3, &[(2, 2, re(1.0))]), basis)
}

#[derive(Debug, Clone)]
pub enum Geometry {
    Interval { lo: f64, hi: f64 },
    Matrix(MatrixParametrization),
}

/// How a [`SampleSet`] was generated; determines its volume estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Uniform proposals in the bounding box, filtered by positivity.
    BoundingBox,
    /// Uniform diagonal on the simplex, off-diagonals uniform in the disks
    /// `|ρ_ij|² ≤ ρ_ii ρ_jj`, accepted with probability `Π_i (D ρ_ii)^{D-1}`
    /// and positivity. Exact for full state spaces.
    MinorDisk,
}

/// Uniform draws from a space, stored contiguously.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub dim: usize,
    pub points: Vec<f64>,
    pub attempts: u64,
    pub sampler: Sampler,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn accepted(&self) -> u64 {
        self.len() as u64
    }

    pub fn yield_fraction(&self) -> f64 {
        self.accepted() as f64 / self.attempts as f64
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Monte Carlo estimate of the space volume with its standard error.
    pub fn volume_estimate(&self, space: &StateSpace) -> (f64, f64) {
        let y = self.yield_fraction();
        let se_y = (y * (1.0 - y) / self.attempts as f64).sqrt();
        let scale = match self.sampler {
            Sampler::BoundingBox => space.bounding_box_volume(),
            Sampler::MinorDisk => match &space.geometry {
                Geometry::Matrix(p) => minor_disk_volume_factor(p.hilbert_dim()),
                Geometry::Interval { .. } => space.bounding_box_volume(),
            },
        };
        (scale * y, scale * se_y)
    }
}

/// `V / P(accept)` for the minor-disk proposal: the simplex area times the
/// disk normalizations over the acceptance bound `D^{D(D-1)}`.
fn minor_disk_volume_factor(hilbert_dim: usize) -> f64 {
    let n = hilbert_dim as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let simplex = 1.0 / specfun::gamma(n);
    simplex * PI.powf(pairs) / n.powf(n * (n - 1.0))
}

#[derive(Debug, Clone)]
pub struct StateSpace {
    pub label: String,
    pub dim: usize,
    pub volume: f64,
    pub bounding_box: Vec<(f64, f64)>,
    pub geometry: Geometry,
}

impl StateSpace {
    /// Builds one of `qubit1`, `qubit2`, `qubit3`, `qutrit` or `interval(a,b)`.
    pub fn from_label(label: &str) -> Result<Self> {
        let trimmed = label.trim();
        let space = match trimmed {
            "qubit1" => Self {
                label: trimmed.into(),
                dim: 1,
                volume: 1.0,
                bounding_box: vec![(0.0, 1.0)],
                geometry: Geometry::Matrix(qubit_parametrization(1)),
            },
            "qubit2" => Self {
                label: trimmed.into(),
                dim: 2,
                volume: PI / 4.0,
                bounding_box: vec![(0.0, 1.0), (-1.0, 1.0)],
                geometry: Geometry::Matrix(qubit_parametrization(2)),
            },
            "qubit3" => Self {
                label: trimmed.into(),
                dim: 3,
                volume: lebesgue_volume(2)?,
                bounding_box: vec![(0.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)],
                geometry: Geometry::Matrix(qubit_parametrization(3)),
            },
            "qutrit" => {
                let mut bounding_box = vec![(0.0, 1.0), (0.0, 1.0)];
                bounding_box.extend(std::iter::repeat_n((-1.0, 1.0), 6));
                Self {
                    label: trimmed.into(),
                    dim: 8,
                    volume: lebesgue_volume(3)?,
                    bounding_box,
                    geometry: Geometry::Matrix(qutrit_parametrization()),
                }
            }
            other => {
                let (lo, hi) =
                    parse_interval(other).ok_or_else(|| Error::UnknownLabel(other.into()))?;
                Self::interval(lo, hi)?
            }
        };
        Ok(space)
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::Invalid(format!("interval({lo},{hi}) is empty")));
        }
        Ok(Self {
            label: format!("interval({lo},{hi})"),
            dim: 1,
            volume: hi - lo,
            bounding_box: vec![(lo, hi)],
            geometry: Geometry::Interval { lo, hi },
        })
    }

    pub fn parametrization(&self) -> Option<&MatrixParametrization> {
        match &self.geometry {
            Geometry::Matrix(p) => Some(p),
            Geometry::Interval { .. } => None,
        }
    }

    pub fn bounding_box_volume(&self) -> f64 {
        self.bounding_box.iter().map(|(a, b)| b - a).product()
    }

    /// Maximally mixed state, or the interval midpoint.
    pub fn center(&self) -> ParamVector {
        match &self.geometry {
            Geometry::Interval { lo, hi } => DVector::from_element(1, 0.5 * (lo + hi)),
            Geometry::Matrix(p) => {
                let n = p.hilbert_dim();
                let mixed = CMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0);
                p.params(&mixed)
            }
        }
    }

    /// Positivity of the reconstructed matrix via attempted Cholesky
    /// factorization; interval membership for interval spaces.
    pub fn is_physical(&self, r: &[f64]) -> bool {
        if r.len() != self.dim {
            return false;
        }
        match &self.geometry {
            Geometry::Interval { lo, hi } => *lo <= r[0] && r[0] <= *hi,
            Geometry::Matrix(p) => p.is_psd(r),
        }
    }

    /// Smallest eigenvalue of `ρ(r)`; distance to the nearer end for intervals.
    pub fn min_eigenvalue(&self, r: &[f64]) -> f64 {
        match &self.geometry {
            Geometry::Interval { lo, hi } => (r[0] - lo).min(hi - r[0]),
            Geometry::Matrix(p) => linalg::min_eigenvalue(&p.matrix(r)),
        }
    }

    /// Maps a nonpositive (or boundary) input onto the boundary by shifting
    /// out the negative part of the spectrum and renormalizing the trace:
    /// `ρ ↦ (ρ - σ_min 1) / tr(ρ - σ_min 1)`. Intervals clamp.
    pub fn project_to_boundary(&self, r: &[f64]) -> Result<ParamVector> {
        if r.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: r.len(),
            });
        }
        match &self.geometry {
            Geometry::Interval { lo, hi } => {
                if *lo < r[0] && r[0] < *hi {
                    return Err(Error::StrictlyInterior);
                }
                Ok(DVector::from_element(1, r[0].clamp(*lo, *hi)))
            }
            Geometry::Matrix(p) => {
                let m = p.matrix(r);
                let (values, _) = linalg::hermitian_eigen(&m);
                let sigma_min = values[0];
                if sigma_min > PSD_TOL {
                    return Err(Error::StrictlyInterior);
                }
                let n = p.hilbert_dim();
                let mut shifted = m - CMatrix::identity(n, n) * C64::new(sigma_min, 0.0);
                let trace: f64 = (0..n).map(|i| shifted[(i, i)].re).sum();
                shifted /= C64::new(trace, 0.0);
                Ok(p.settle(p.params(&shifted)))
            }
        }
    }

    /// Nearest point of the space in the Hilbert–Schmidt metric (eigenvalues
    /// projected onto the probability simplex); clamping for intervals.
    pub fn nearest_point(&self, r: &[f64]) -> ParamVector {
        match &self.geometry {
            Geometry::Interval { lo, hi } => DVector::from_element(1, r[0].clamp(*lo, *hi)),
            Geometry::Matrix(p) => {
                if p.is_psd(r) {
                    return DVector::from_column_slice(r);
                }
                let (values, vectors) = linalg::hermitian_eigen(&p.matrix(r));
                let projected = linalg::project_onto_simplex(values.as_slice());
                p.settle(p.params(&linalg::from_eigen(&projected, &vectors)))
            }
        }
    }

    /// Metric in which [`nearest_point`](Self::nearest_point) is a Euclidean
    /// projection.
    pub fn metric(&self) -> DMatrix<f64> {
        match &self.geometry {
            Geometry::Interval { .. } => DMatrix::identity(1, 1),
            Geometry::Matrix(p) => p.gram().clone(),
        }
    }

    /// Uniform rejection sampling from the bounding box until `count` physical
    /// points are accepted.
    pub fn rejection_sample(&self, count: usize, seed: u64) -> Result<SampleSet> {
        self.sample_streams(count, seed, Sampler::BoundingBox)
    }

    /// Exact uniform sampling through the minor-disk proposal. Only full state
    /// spaces qualify; other spaces fall back to bounding-box rejection.
    pub fn uniform_sample(&self, count: usize, seed: u64, sampler: Sampler) -> Result<SampleSet> {
        match (&self.geometry, sampler) {
            (Geometry::Matrix(p), Sampler::MinorDisk) if p.is_full() => {
                self.sample_streams(count, seed, Sampler::MinorDisk)
            }
            _ => self.sample_streams(count, seed, Sampler::BoundingBox),
        }
    }

    fn sample_streams(&self, count: usize, seed: u64, sampler: Sampler) -> Result<SampleSet> {
        if count == 0 {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        let streams = SAMPLE_STREAMS.min(count as u64);
        let base = count as u64 / streams;
        let extra = count as u64 % streams;
        let parts: Vec<Result<(Vec<f64>, u64)>> = (0..streams)
            .into_par_iter()
            .map(|s| {
                let target = base + u64::from(s < extra);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(s);
                match sampler {
                    Sampler::BoundingBox => self.box_stream(&mut rng, target),
                    Sampler::MinorDisk => self.minor_disk_stream(&mut rng, target),
                }
            })
            .collect();
        let mut points = Vec::with_capacity(count * self.dim);
        let mut attempts = 0;
        for part in parts {
            let (p, a) = part?;
            points.extend_from_slice(&p);
            attempts += a;
        }
        Ok(SampleSet {
            dim: self.dim,
            points,
            attempts,
            sampler,
            seed,
        })
    }

    fn box_stream(&self, rng: &mut ChaCha8Rng, target: u64) -> Result<(Vec<f64>, u64)> {
        let mut out = Vec::with_capacity(target as usize * self.dim);
        let mut r = vec![0.0; self.dim];
        let mut attempts = 0u64;
        let mut accepted = 0u64;
        while accepted < target {
            for (x, &(lo, hi)) in r.iter_mut().zip(&self.bounding_box) {
                *x = lo + (hi - lo) * rng.random::<f64>();
            }
            attempts += 1;
            if self.is_physical(&r) {
                out.extend_from_slice(&r);
                accepted += 1;
            } else if attempts >= TIMEOUT_ATTEMPTS
                && (accepted as f64) < TIMEOUT_YIELD * attempts as f64
            {
                return Err(Error::SamplingTimeout { attempts, accepted });
            }
        }
        Ok((out, attempts))
    }

    fn minor_disk_stream(&self, rng: &mut ChaCha8Rng, target: u64) -> Result<(Vec<f64>, u64)> {
        let Geometry::Matrix(p) = &self.geometry else {
            unreachable!("minor-disk sampling requires a matrix space")
        };
        let n = p.hilbert_dim();
        let nf = n as f64;
        let mut out = Vec::with_capacity(target as usize * self.dim);
        let mut m = CMatrix::zeros(n, n);
        let mut flat = vec![C64::new(0.0, 0.0); n * n];
        let mut cuts = vec![0.0; n + 1];
        let mut attempts = 0u64;
        let mut accepted = 0u64;
        while accepted < target {
            attempts += 1;
            // uniform point on the simplex from sorted uniforms
            cuts[0] = 0.0;
            cuts[n] = 1.0;
            for c in cuts.iter_mut().take(n).skip(1) {
                *c = rng.random::<f64>();
            }
            cuts[1..n].sort_by(f64::total_cmp);
            let diag: Vec<f64> = (0..n).map(|i| cuts[i + 1] - cuts[i]).collect();
            for i in 0..n {
                m[(i, i)] = C64::new(diag[i], 0.0);
                for j in (i + 1)..n {
                    let radius = (diag[i] * diag[j]).sqrt() * rng.random::<f64>().sqrt();
                    let angle = 2.0 * PI * rng.random::<f64>();
                    let z = C64::from_polar(radius, angle);
                    m[(i, j)] = z;
                    m[(j, i)] = z.conj();
                }
            }
            let weight: f64 = diag.iter().map(|&x| (nf * x).powf(nf - 1.0)).product();
            if rng.random::<f64>() >= weight {
                continue;
            }
            for i in 0..n {
                for j in 0..n {
                    flat[i * n + j] = m[(i, j)];
                }
            }
            if !linalg::is_psd_cholesky(&flat, n, PSD_TOL) {
                continue;
            }
            out.extend(p.params(&m).iter());
            accepted += 1;
        }
        Ok((out, attempts))
    }
}

fn parse_interval(label: &str) -> Option<(f64, f64)> {
    let inner = label.strip_prefix("interval(")?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volumes_of_labels() {
        let v = |l: &str| StateSpace::from_label(l).unwrap().volume;
        assert_eq!(v("qubit3"), PI / 6.0);
        assert_eq!(v("qutrit"), PI.powi(3) / 20160.0);
        assert_eq!(v("interval(0,1)"), 1.0);
        assert_eq!(v("qubit1"), 1.0);
        assert!((v("qubit2") - PI / 4.0).abs() < 1e-15);
        assert!((v("interval(-0.5, 2)") - 2.5).abs() < 1e-15);
        assert!(matches!(
            StateSpace::from_label("ququart"),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn lebesgue_volume_low_dimensions() {
        assert_eq!(lebesgue_volume(2).unwrap(), PI / 6.0);
        assert_eq!(lebesgue_volume(3).unwrap(), PI.powi(3) / 20160.0);
        // D = 4: pi^6 * (1! 2! 3!) / 15!
        let direct = PI.powi(6) * 12.0 / 1_307_674_368_000.0;
        assert!((lebesgue_volume(4).unwrap() / direct - 1.0).abs() < 1e-15);
        // D = 5 goes through log-gamma: pi^10 * (1! 2! 3! 4!) / 24!
        let direct = PI.powi(10) * 288.0 / 6.204_484_017_332_394e23;
        assert!((lebesgue_volume(5).unwrap() / direct - 1.0).abs() < 1e-12);
        assert!(lebesgue_volume(1).is_err());
    }

    #[test]
    fn physicality_examples() {
        let q = StateSpace::from_label("qubit3").unwrap();
        assert!(q.is_physical(&[0.5, 0.0, 0.0]));
        assert!(!q.is_physical(&[1.0, 0.5, 0.0]));
        assert!(q.is_physical(&[1.0, 0.0, 0.0]));
        let i = StateSpace::interval(0.0, 1.0).unwrap();
        assert!(i.is_physical(&[1.0]) && !i.is_physical(&[1.3]));
    }

    #[test]
    fn boundary_projection_examples() {
        let q = StateSpace::from_label("qubit3").unwrap();
        let r = q.project_to_boundary(&[1.2, 0.0, 0.0]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14 && r[1].abs() < 1e-14 && r[2].abs() < 1e-14);
        assert!(matches!(
            q.project_to_boundary(&[0.5, 0.1, 0.0]),
            Err(Error::StrictlyInterior)
        ));
        let i = StateSpace::interval(0.0, 1.0).unwrap();
        assert_eq!(i.project_to_boundary(&[1.3]).unwrap()[0], 1.0);
        let qubit1 = StateSpace::from_label("qubit1").unwrap();
        assert!((qubit1.project_to_boundary(&[1.3]).unwrap()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projected_points_sit_on_the_boundary() {
        let q = StateSpace::from_label("qutrit").unwrap();
        let p = q.parametrization().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 200 {
            let r: Vec<f64> = q
                .bounding_box
                .iter()
                .map(|&(a, b)| a + (b - a) * rng.random::<f64>())
                .collect();
            if q.is_physical(&r) {
                continue;
            }
            let b = q.project_to_boundary(&r).unwrap();
            let m = p.matrix(b.as_slice());
            let trace: f64 = (0..3).map(|i| m[(i, i)].re).sum();
            let lo = q.min_eigenvalue(b.as_slice());
            assert!((-1e-12..=1e-10).contains(&lo), "min eigenvalue {lo}");
            assert!((trace - 1.0).abs() < 1e-12);
            assert!(q.is_physical(b.as_slice()));
            checked += 1;
        }
    }

    #[test]
    fn qubit_parametrization_round_trip() {
        let p = qubit_parametrization(3);
        let r = [0.7, 0.1, -0.2];
        let m = p.matrix(&r);
        assert_eq!(m[(0, 1)], C64::new(0.1, 0.2));
        assert_eq!(m[(1, 0)], C64::new(0.1, -0.2));
        let back = p.params(&m);
        for (a, b) in back.iter().zip(&r) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn qutrit_center_is_maximally_mixed() {
        let q = StateSpace::from_label("qutrit").unwrap();
        let c = q.center();
        assert!((c[0] - 1.0 / 3.0).abs() < 1e-15 && (c[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(c.iter().skip(2).all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn nearest_point_is_idempotent_and_physical() {
        let q = StateSpace::from_label("qubit3").unwrap();
        let r = q.nearest_point(&[1.2, 0.3, 0.0]);
        assert!(q.is_physical(r.as_slice()));
        let again = q.nearest_point(r.as_slice());
        assert!((r - again).norm() < 1e-14);
    }

    #[test]
    fn minor_disk_volume_matches_closed_form() {
        for (label, n) in [("qubit3", 20_000), ("qutrit", 20_000)] {
            let q = StateSpace::from_label(label).unwrap();
            let s = q.uniform_sample(n, 9, Sampler::MinorDisk).unwrap();
            assert_eq!(s.len(), n);
            assert!(s.iter().all(|r| q.is_physical(r)));
            let (v, se) = s.volume_estimate(&q);
            assert!((v - q.volume).abs() < 4.0 * se, "{label}: {v} +- {se} vs {}", q.volume);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_rejects_zero() {
        let q = StateSpace::from_label("qubit2").unwrap();
        let a = q.rejection_sample(1000, 3).unwrap();
        let b = q.rejection_sample(1000, 3).unwrap();
        assert_eq!(a.points, b.points);
        assert_eq!(a.attempts, b.attempts);
        assert!(a.iter().all(|r| q.is_physical(r)));
        assert!(q.rejection_sample(0, 3).is_err());
    }
}
