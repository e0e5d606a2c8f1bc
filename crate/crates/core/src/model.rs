//! Measurement models, multinomial likelihood and Fisher information.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::qutrit_parametrization;
use crate::ParamVector;

/// Probabilities below this are treated as exactly zero.
pub const PROB_FLOOR: f64 = 1e-300;

/// Seed of the random bases behind the bundled qutrit measurement.
pub const QUTRIT_POM_SEED: u64 = 20_160;

/// A probability operator measurement seen through its outcome probabilities
/// `p_k(r)` on a `d`-dimensional parameter space.
pub trait Pom: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn outcomes(&self) -> usize;

    fn probabilities_into(&self, r: &[f64], out: &mut [f64]);

    /// `∂p_k/∂r_j` as an `M × d` matrix.
    fn jacobian(&self, r: &[f64]) -> DMatrix<f64>;

    /// Second derivatives `∂²p_k/∂r∂r`, one `d × d` matrix per outcome.
    /// Defaults to central differences of the Jacobian.
    fn probability_hessians(&self, r: &[f64]) -> Vec<DMatrix<f64>> {
        let d = self.dim();
        let h = 1e-5;
        let mut out = vec![DMatrix::zeros(d, d); self.outcomes()];
        let mut shifted = r.to_vec();
        for j in 0..d {
            shifted[j] = r[j] + h;
            let plus = self.jacobian(&shifted);
            shifted[j] = r[j] - h;
            let minus = self.jacobian(&shifted);
            shifted[j] = r[j];
            for (k, hk) in out.iter_mut().enumerate() {
                for i in 0..d {
                    hk[(i, j)] = (plus[(k, i)] - minus[(k, i)]) / (2.0 * h);
                }
            }
        }
        for hk in &mut out {
            let sym = (&*hk + hk.transpose()) * 0.5;
            *hk = sym;
        }
        out
    }

    fn probabilities(&self, r: &[f64]) -> Vec<f64> {
        let mut p = vec![0.0; self.outcomes()];
        self.probabilities_into(r, &mut p);
        p
    }
}

/// Outcome probabilities affine in the parameters: `p = offset + coeffs · r`.
#[derive(Debug, Clone)]
pub struct AffinePom {
    name: String,
    offset: DVector<f64>,
    coeffs: DMatrix<f64>,
}

impl AffinePom {
    pub fn new(name: impl Into<String>, offset: DVector<f64>, coeffs: DMatrix<f64>) -> Self {
        assert_eq!(offset.len(), coeffs.nrows());
        Self {
            name: name.into(),
            offset,
            coeffs,
        }
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }
}

impl Pom for AffinePom {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.coeffs.ncols()
    }

    fn outcomes(&self) -> usize {
        self.offset.len()
    }

    fn probabilities_into(&self, r: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (k, o) in out.iter_mut().enumerate() {
            let mut p = self.offset[k];
            for j in 0..d {
                p += self.coeffs[(k, j)] * r[j];
            }
            *o = p;
        }
    }

    fn jacobian(&self, _r: &[f64]) -> DMatrix<f64> {
        self.coeffs.clone()
    }

    fn probability_hessians(&self, _r: &[f64]) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.dim(), self.dim()); self.outcomes()]
    }
}

/// `σ_z` measurement of a qubit confined to the `z` axis: `p = (r, 1 - r)`.
pub fn sigma_z() -> AffinePom {
    AffinePom::new(
        "sigma-z",
        DVector::from_vec(vec![0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
    )
}

/// Equal-weight `σ_z` and `σ_x` measurements on the real qubit slice.
pub fn crosshair() -> AffinePom {
    AffinePom::new(
        "crosshair",
        DVector::from_vec(vec![0.0, 0.5, 0.25, 0.25]),
        DMatrix::from_row_slice(4, 2, &[0.5, 0.0, -0.5, 0.0, 0.0, 0.5, 0.0, -0.5]),
    )
}

/// Tetrahedral SIC measurement `Π_k = (1 + a_k·σ)/4`.
///
/// With Bloch vector `(2r1 - 1, 2r2, 2r3)` the probabilities read
/// `p_k = [1 + a_k·(2r1 - 1, 2r2, 2r3)]/4`.
pub fn tetrahedron() -> AffinePom {
    let s = 1.0 / 3f64.sqrt();
    let a = [[s, s, s], [-s, -s, s], [-s, s, -s], [s, -s, -s]];
    let offset = DVector::from_iterator(4, a.iter().map(|ak| (1.0 - ak[0]) / 4.0));
    let coeffs = DMatrix::from_fn(4, 3, |k, j| a[k][j] / 2.0);
    AffinePom::new("tetrahedron", offset, coeffs)
}

/// Overcomplete qutrit measurement from `bases` Haar-random orthonormal bases,
/// each projector weighted by `1/bases`, so `M = 3·bases`.
pub fn qutrit_random_bases(bases: usize, seed: u64) -> AffinePom {
    assert!(bases >= 1);
    let param = qutrit_parametrization();
    let d = param.dim();
    let offset_m = param.offset_matrix();
    let basis_m: Vec<_> = (0..d).map(|j| param.basis_matrix(j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weight = 1.0 / bases as f64;
    let m = 3 * bases;
    let mut offset = DVector::zeros(m);
    let mut coeffs = DMatrix::zeros(m, d);
    for b in 0..bases {
        let vectors = haar_basis(3, &mut rng);
        for (i, psi) in vectors.iter().enumerate() {
            let k = 3 * b + i;
            offset[k] = expectation(&offset_m, psi) * weight;
            for j in 0..d {
                coeffs[(k, j)] = expectation(&basis_m[j], psi) * weight;
            }
        }
    }
    AffinePom::new(format!("qutrit{m}"), offset, coeffs)
}

fn expectation(m: &DMatrix<C64>, psi: &DVector<C64>) -> f64 {
    (psi.adjoint() * m * psi)[(0, 0)].re
}

/// Orthonormal basis from Gram–Schmidt on complex Gaussian columns.
fn haar_basis(n: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<C64>> {
    let mut out: Vec<DVector<C64>> = Vec::with_capacity(n);
    while out.len() < n {
        let mut v = DVector::from_fn(n, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re, im)
        });
        for u in &out {
            let overlap = u.dotc(&v);
            v -= u * overlap;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            out.push(v / C64::new(norm, 0.0));
        }
    }
    out
}

/// Looks up a bundled measurement: `sigma-z`, `crosshair`, `tetrahedron`,
/// `qutrit90` (alias `qutrit`), or `qutritM` for any multiple `M` of 3.
pub fn pom_by_name(name: &str) -> Result<Arc<dyn Pom>> {
    let name = name.trim();
    let pom: Arc<dyn Pom> = match name {
        "sigma-z" => Arc::new(sigma_z()),
        "crosshair" => Arc::new(crosshair()),
        "tetrahedron" => Arc::new(tetrahedron()),
        "qutrit" => Arc::new(qutrit_random_bases(30, QUTRIT_POM_SEED)),
        other => {
            let m = other
                .strip_prefix("qutrit")
                .and_then(|s| s.parse::<usize>().ok())
                .filter(|&m| m >= 3 && m % 3 == 0)
                .ok_or_else(|| Error::UnknownLabel(other.into()))?;
            Arc::new(qutrit_random_bases(m / 3, QUTRIT_POM_SEED))
        }
    };
    Ok(pom)
}

/// Measured counts `n_k` out of `N` copies.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub pom: String,
    #[serde(rename = "N")]
    pub total: u64,
    pub counts: Vec<u64>,
}

impl Dataset {
    pub fn new(pom: impl Into<String>, counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self {
            pom: pom.into(),
            total,
            counts,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sum: u64 = self.counts.iter().sum();
        if sum != self.total {
            return Err(Error::Invalid(format!(
                "counts sum to {sum} but N = {}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let data: Self = serde_json::from_str(s).map_err(|e| Error::Invalid(e.to_string()))?;
        data.validate()?;
        Ok(data)
    }
}

/// Symmetric positive-semidefinite information matrix at a parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub entries: DMatrix<f64>,
    pub evaluated_at: ParamVector,
}

impl FisherMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn determinant(&self) -> f64 {
        self.entries.determinant()
    }
}

fn check_dims(pom: &dyn Pom, data: &Dataset, r: &[f64]) -> Result<()> {
    if data.counts.len() != pom.outcomes() {
        return Err(Error::DimensionMismatch {
            expected: pom.outcomes(),
            found: data.counts.len(),
        });
    }
    check_param(pom, r)
}

fn check_param(pom: &dyn Pom, r: &[f64]) -> Result<()> {
    if r.len() != pom.dim() {
        return Err(Error::DimensionMismatch {
            expected: pom.dim(),
            found: r.len(),
        });
    }
    Ok(())
}

/// `Σ_k n_k log p_k(r)`, `-∞` when an observed outcome has zero probability.
pub fn log_likelihood(pom: &dyn Pom, data: &Dataset, r: &[f64]) -> Result<f64> {
    check_dims(pom, data, r)?;
    let mut p = vec![0.0; pom.outcomes()];
    Ok(log_likelihood_with(pom, &data.counts, r, &mut p))
}

/// Allocation-free likelihood for hot loops; dimensions are not checked.
pub fn log_likelihood_with(pom: &dyn Pom, counts: &[u64], r: &[f64], scratch: &mut [f64]) -> f64 {
    pom.probabilities_into(r, scratch);
    let mut acc = 0.0;
    for (&n, &p) in counts.iter().zip(scratch.iter()) {
        if n == 0 {
            continue;
        }
        if p < PROB_FLOOR {
            return f64::NEG_INFINITY;
        }
        acc += n as f64 * p.ln();
    }
    acc
}

/// `∂ log L/∂r = Σ_k (n_k/p_k) ∂p_k/∂r`.
pub fn log_likelihood_gradient(pom: &dyn Pom, data: &Dataset, r: &[f64]) -> Result<ParamVector> {
    check_dims(pom, data, r)?;
    let p = pom.probabilities(r);
    let jac = pom.jacobian(r);
    let mut g = DVector::zeros(pom.dim());
    for (k, &n) in data.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        if p[k] < PROB_FLOOR {
            return Err(Error::SingularModel(format!(
                "outcome {k} observed {n} times but has zero probability"
            )));
        }
        g += jac.row(k).transpose() * (n as f64 / p[k]);
    }
    Ok(g)
}

/// `F(r) = Σ_k (N/p_k) (∂p_k/∂r)(∂p_k/∂r)ᵀ`.
pub fn fisher_information(pom: &dyn Pom, r: &[f64], copies: u64) -> Result<FisherMatrix> {
    check_param(pom, r)?;
    let p = pom.probabilities(r);
    let jac = pom.jacobian(r);
    let d = pom.dim();
    let mut f = DMatrix::zeros(d, d);
    for (k, &pk) in p.iter().enumerate() {
        let row = jac.row(k);
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        if pk < PROB_FLOOR {
            return Err(Error::SingularModel(format!(
                "outcome {k} has zero probability"
            )));
        }
        f += row.transpose() * row * (1.0 / pk);
    }
    f *= copies as f64;
    Ok(FisherMatrix {
        entries: f,
        evaluated_at: DVector::from_column_slice(r),
    })
}

/// Negative Hessian of the log-likelihood,
/// `Σ_k n_k [∇p_k∇p_kᵀ/p_k² - ∇²p_k/p_k]`.
pub fn observed_hessian(pom: &dyn Pom, data: &Dataset, r: &[f64]) -> Result<FisherMatrix> {
    check_dims(pom, data, r)?;
    let p = pom.probabilities(r);
    let jac = pom.jacobian(r);
    let second = pom.probability_hessians(r);
    let d = pom.dim();
    let mut h = DMatrix::zeros(d, d);
    for (k, &n) in data.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        if p[k] < PROB_FLOOR {
            return Err(Error::SingularModel(format!(
                "outcome {k} observed {n} times but has zero probability"
            )));
        }
        let row = jac.row(k);
        let nk = n as f64;
        h += row.transpose() * row * (nk / (p[k] * p[k]));
        h -= &second[k] * (nk / p[k]);
    }
    Ok(FisherMatrix {
        entries: h,
        evaluated_at: DVector::from_column_slice(r),
    })
}

/// Draws `n ~ Multinomial(N, p(r_true))` by sequential conditional binomials.
pub fn sample_dataset(pom: &dyn Pom, r_true: &[f64], copies: u64, seed: u64) -> Result<Dataset> {
    check_param(pom, r_true)?;
    let p: Vec<f64> = pom
        .probabilities(r_true)
        .into_iter()
        .map(|x| x.max(0.0))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining_n = copies;
    let mut remaining_p: f64 = p.iter().sum();
    let mut counts = vec![0; p.len()];
    for (k, &pk) in p.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k + 1 == p.len() {
            counts[k] = remaining_n;
            break;
        }
        let q = if remaining_p > 0.0 {
            (pk / remaining_p).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let draw = Binomial::new(remaining_n, q)
            .map_err(|e| Error::Invalid(e.to_string()))?
            .sample(&mut rng);
        counts[k] = draw;
        remaining_n -= draw;
        remaining_p -= pk;
    }
    Ok(Dataset {
        pom: pom.name().into(),
        total: copies,
        counts,
    })
}

/// Counts closest to `N p_k(r)` that still sum to `N` (largest remainder).
pub fn deterministic_counts(pom: &dyn Pom, r: &[f64], copies: u64) -> Result<Dataset> {
    check_param(pom, r)?;
    let p = pom.probabilities(r);
    let expected: Vec<f64> = p.iter().map(|&x| x.max(0.0) * copies as f64).collect();
    let mut counts: Vec<u64> = expected.iter().map(|&x| x.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = expected[a] - expected[a].floor();
        let rb = expected[b] - expected[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().take(copies.saturating_sub(assigned) as usize) {
        counts[k] += 1;
    }
    Ok(Dataset {
        pom: pom.name().into(),
        total: copies,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::qubit_parametrization;

    #[test]
    fn likelihood_examples() {
        let z = sigma_z();
        let ll = log_likelihood(&z, &Dataset::new("sigma-z", vec![1, 1]), &[0.5]).unwrap();
        assert!((ll - 0.25f64.ln()).abs() < 1e-15);
        let ll = log_likelihood(&z, &Dataset::new("sigma-z", vec![2, 0]), &[1.0]).unwrap();
        assert_eq!(ll, 0.0);
        let ll = log_likelihood(&z, &Dataset::new("sigma-z", vec![0, 2]), &[1.0]).unwrap();
        assert_eq!(ll, f64::NEG_INFINITY);
        let t = tetrahedron();
        let ll = log_likelihood(&t, &Dataset::new("t", vec![1; 4]), &[0.5, 0.0, 0.0]).unwrap();
        assert!((ll - 4.0 * 0.25f64.ln()).abs() < 1e-14);
        assert!(matches!(
            log_likelihood(&t, &Dataset::new("t", vec![1; 3]), &[0.5, 0.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn fisher_examples() {
        let z = sigma_z();
        let f = fisher_information(&z, &[0.5], 100).unwrap();
        assert!((f.entries[(0, 0)] - 400.0).abs() < 1e-12);
        let f = fisher_information(&z, &[0.99], 30).unwrap();
        assert!((f.entries[(0, 0)] - 30.0 / (0.99 * 0.01)).abs() < 1e-9);
        assert!(matches!(
            fisher_information(&z, &[1.0], 30),
            Err(Error::SingularModel(_))
        ));
    }

    #[test]
    fn crosshair_probabilities() {
        let p = crosshair().probabilities(&[0.5, 0.25]);
        let expect = [0.25, 0.25, 0.375, 0.125];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tetrahedron_matches_trace_formula() {
        // p_k = tr(rho Pi_k) with Pi_k = (1 + a_k . sigma)/4, sigma = (z, x, y)
        let t = tetrahedron();
        let q = qubit_parametrization(3);
        let s = 1.0 / 3f64.sqrt();
        let a = [[s, s, s], [-s, -s, s], [-s, s, -s], [s, -s, -s]];
        let r = [0.7, 0.15, -0.2];
        let rho = q.matrix(&r);
        let p = t.probabilities(&r);
        for (k, ak) in a.iter().enumerate() {
            let pauli_z = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0].map(|x| C64::new(x, 0.0)));
            let pauli_x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(|x| C64::new(x, 0.0)));
            let pauli_y = DMatrix::from_row_slice(
                2,
                2,
                &[C64::new(0.0, 0.0), C64::new(0.0, -1.0), C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
            );
            let pi = (DMatrix::identity(2, 2)
                + pauli_z * C64::new(ak[0], 0.0)
                + pauli_x * C64::new(ak[1], 0.0)
                + pauli_y * C64::new(ak[2], 0.0))
                / C64::new(4.0, 0.0);
            let direct = (rho.clone() * pi).trace().re;
            assert!((p[k] - direct).abs() < 1e-15, "outcome {k}");
        }
    }

    #[test]
    fn qutrit_pom_sums_to_one_on_the_identity() {
        let pom = qutrit_random_bases(30, QUTRIT_POM_SEED);
        assert_eq!(pom.outcomes(), 90);
        let col_sums = pom.coeffs().row_sum();
        assert!(col_sums.iter().all(|x| x.abs() < 1e-13));
        assert!((pom.offset().sum() - 1.0).abs() < 1e-13);
        assert!(pom.offset().iter().all(|&x| x >= -1e-15));
    }

    #[test]
    fn lookup_by_name() {
        assert_eq!(pom_by_name("qutrit").unwrap().outcomes(), 90);
        assert_eq!(pom_by_name("qutrit30").unwrap().outcomes(), 30);
        assert!(matches!(pom_by_name("qutrit31"), Err(Error::UnknownLabel(_))));
        assert!(matches!(pom_by_name("heptagon"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn sampling_examples() {
        let z = sigma_z();
        assert_eq!(sample_dataset(&z, &[0.3], 0, 1).unwrap().counts, vec![0, 0]);
        let a = sample_dataset(&z, &[0.99], 1_000_000, 7).unwrap();
        assert_eq!(a, sample_dataset(&z, &[0.99], 1_000_000, 7).unwrap());
        let freq = a.counts[0] as f64 / 1e6;
        let sigma = (0.99f64 * 0.01 / 1e6).sqrt();
        assert!((freq - 0.99).abs() < 3.0 * sigma);
    }

    #[test]
    fn deterministic_counts_round_and_sum() {
        let d = deterministic_counts(&tetrahedron(), &[0.5, 0.0, 0.0], 90).unwrap();
        assert_eq!(d.counts.iter().sum::<u64>(), 90);
        assert!(d.counts.iter().all(|&n| n == 22 || n == 23));
        let d = deterministic_counts(&sigma_z(), &[0.99], 100).unwrap();
        assert_eq!(d.counts, vec![99, 1]);
    }

    #[test]
    fn dataset_json_round_trip() {
        let d = Dataset::new("crosshair", vec![3, 4, 5, 6]);
        let s = d.to_json();
        assert!(s.contains("\"N\":18"));
        assert_eq!(Dataset::from_json(&s).unwrap(), d);
        assert!(Dataset::from_json(r#"{"pom":"x","N":3,"counts":[1,1]}"#).is_err());
    }
}
