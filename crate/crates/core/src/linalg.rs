//! Small dense helpers for Hermitian matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;

pub type CMatrix = DMatrix<C64>;

/// Largest Hilbert dimension handled by the allocation-free positivity test.
pub const MAX_STACK_DIM: usize = 4;

/// Pivot tolerance of the positivity test.
pub const PSD_TOL: f64 = 1e-14;

/// Attempted Cholesky factorization of the Hermitian `n × n` matrix stored
/// row-major in `a`. Returns `false` as soon as a pivot falls below `-tol` or
/// a vanishing pivot leaves a nonzero column below it (up to the same
/// eigenvalue tolerance).
pub fn is_psd_cholesky(a: &[C64], n: usize, tol: f64) -> bool {
    debug_assert!(a.len() >= n * n);
    if n <= MAX_STACK_DIM {
        let mut l = [C64::new(0.0, 0.0); MAX_STACK_DIM * MAX_STACK_DIM];
        cholesky_into(a, n, tol, &mut l)
    } else {
        let mut l = vec![C64::new(0.0, 0.0); n * n];
        cholesky_into(a, n, tol, &mut l)
    }
}

fn cholesky_into(a: &[C64], n: usize, tol: f64, l: &mut [C64]) -> bool {
    for j in 0..n {
        let mut pivot = a[j * n + j].re;
        for k in 0..j {
            pivot -= l[j * n + k].norm_sqr();
        }
        if pivot < -tol {
            return false;
        }
        if pivot <= tol {
            // semidefinite column: everything below must vanish
            for i in (j + 1)..n {
                let mut v = a[i * n + j];
                for k in 0..j {
                    v -= l[i * n + k] * l[j * n + k].conj();
                }
                let scale = a[i * n + i].re.max(tol);
                if v.norm_sqr() > tol * scale {
                    return false;
                }
                l[i * n + j] = C64::new(0.0, 0.0);
            }
            l[j * n + j] = C64::new(0.0, 0.0);
            continue;
        }
        let d = pivot.sqrt();
        l[j * n + j] = C64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = v / d;
        }
    }
    true
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (DVector<f64>, CMatrix) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_onto_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i as f64 + 1.0);
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|&x| (x - shift).max(0.0)).collect()
}

/// `V diag(values) V^†`.
pub fn from_eigen(values: &[f64], vectors: &CMatrix) -> CMatrix {
    let n = vectors.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &w) in values.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let col = vectors.column(k);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += col[i] * col[j].conj() * w;
            }
        }
    }
    out
}

/// Inverse of a symmetric positive-definite matrix, falling back to the
/// Moore–Penrose pseudo-inverse. The flag is `true` when the fallback was used.
pub fn spd_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    if let Some(ch) = m.clone().cholesky() {
        return (ch.inverse(), false);
    }
    let pinv = m
        .clone()
        .pseudo_inverse(1e-12 * m.norm().max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DMatrix::zeros(m.nrows(), m.ncols()));
    (pinv, true)
}
