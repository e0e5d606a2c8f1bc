//! Incomplete gamma and beta functions.
//!
//! Everything the region formulas need: the upper incomplete gamma function
//! `Γ(a, y)`, its regularized form `Q(a, y)` and inverse, and the regularized
//! incomplete beta function `I_x(a, b)`. Series expansions are used below the
//! transition point and modified-Lentz continued fractions above it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 10_000;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let s = (std::f64::consts::PI * x).sin();
        return (std::f64::consts::PI / s).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function for positive arguments. Exact for small integers and
/// half-integers via the recurrence, Lanczos otherwise.
pub fn gamma(x: f64) -> f64 {
    if x > 0.0 && x <= 60.0 && (2.0 * x).fract() == 0.0 {
        // integer or half-integer: walk the recurrence down to 1 or 1/2
        let (mut v, mut k) = if x.fract() == 0.0 {
            (1.0, 1.0)
        } else {
            (std::f64::consts::PI.sqrt(), 0.5)
        };
        while k < x {
            v *= k;
            k += 1.0;
        }
        return v;
    }
    ln_gamma(x).exp()
}

fn check_gamma_args(op: &'static str, a: f64, y: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(op, format!("order a = {a} must be positive")));
    }
    if !(y >= 0.0) {
        return Err(Error::domain(op, format!("argument y = {y} must be nonnegative")));
    }
    Ok(())
}

/// Series for the lower function: returns `Σ y^n / (a (a+1) ... (a+n))`.
fn lower_series(a: f64, y: f64) -> f64 {
    let mut ap = a;
    let mut del = 1.0 / a;
    let mut sum = del;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        del *= y / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum
}

/// Continued fraction for the upper function: returns `h` such that
/// `Γ(a, y) = y^a e^{-y} h`.
fn upper_fraction(a: f64, y: f64) -> f64 {
    let mut b = y + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized pair `(P(a, y), Q(a, y))`, each computed without cancellation
/// on its own side of the transition.
fn gamma_pq(a: f64, y: f64) -> (f64, f64) {
    if y == 0.0 {
        return (0.0, 1.0);
    }
    if y.is_infinite() {
        return (1.0, 0.0);
    }
    let log_pref = a * y.ln() - y - ln_gamma(a);
    if y < a + 1.0 {
        let p = (log_pref.exp() * lower_series(a, y)).min(1.0);
        (p, 1.0 - p)
    } else {
        let q = (log_pref.exp() * upper_fraction(a, y)).min(1.0);
        (1.0 - q, q)
    }
}

/// Upper incomplete gamma function `Γ(a, y) = ∫_y^∞ t^{a-1} e^{-t} dt`.
///
/// Underflows to zero for very large `y` without error.
pub fn upper_incomplete_gamma(a: f64, y: f64) -> Result<f64> {
    check_gamma_args("upper_incomplete_gamma", a, y)?;
    if y == 0.0 {
        return Ok(gamma(a));
    }
    if y.is_infinite() {
        return Ok(0.0);
    }
    if y < a + 1.0 {
        let lower = (a * y.ln() - y).exp() * lower_series(a, y);
        Ok((gamma(a) - lower).max(0.0))
    } else {
        Ok((a * y.ln() - y).exp() * upper_fraction(a, y))
    }
}

/// Regularized upper incomplete gamma `Q(a, y) = Γ(a, y) / Γ(a)`.
pub fn regularized_gamma_q(a: f64, y: f64) -> Result<f64> {
    check_gamma_args("regularized_gamma_q", a, y)?;
    Ok(gamma_pq(a, y).1)
}

/// Regularized lower incomplete gamma `P(a, y) = 1 - Q(a, y)`.
pub fn regularized_gamma_p(a: f64, y: f64) -> Result<f64> {
    check_gamma_args("regularized_gamma_p", a, y)?;
    Ok(gamma_pq(a, y).0)
}

/// `∫_{y1}^{y2} t^{a-1} e^{-t} dt / Γ(a)` for `0 ≤ y1 ≤ y2`, evaluated on the
/// side of the transition that avoids cancellation.
pub(crate) fn regularized_gamma_between(a: f64, y1: f64, y2: f64) -> f64 {
    let (p1, q1) = gamma_pq(a, y1);
    let (p2, q2) = gamma_pq(a, y2);
    if y2 < a + 1.0 {
        (p2 - p1).max(0.0)
    } else {
        (q1 - q2).max(0.0)
    }
}

/// Inverse of `Q(a, ·)`: the `y ≥ 0` with `Q(a, y) = q`.
///
/// Bracketed bisection with Newton steps; the residual `|Q(a, y) - q|` ends
/// well below `1e-10`.
pub fn inverse_regularized_gamma_q(a: f64, q: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::domain(
            "inverse_regularized_gamma_q",
            format!("order a = {a} must be positive"),
        ));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::domain(
            "inverse_regularized_gamma_q",
            format!("q = {q} must lie in (0, 1]"),
        ));
    }
    if q == 1.0 {
        return Ok(0.0);
    }
    let lg = ln_gamma(a);
    let f = |y: f64| gamma_pq(a, y).1 - q;

    let mut lo = 0.0;
    let mut hi = a.max(1.0);
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e6 {
            return Ok(hi);
        }
    }

    let mut y = 0.5 * (lo + hi);
    for _ in 0..300 {
        let fy = f(y);
        if fy == 0.0 || fy.abs() <= 1e-15 * q {
            return Ok(y);
        }
        if fy > 0.0 {
            lo = y;
        } else {
            hi = y;
        }
        // dQ/dy = -y^{a-1} e^{-y} / Γ(a)
        let deriv = -((a - 1.0) * y.ln() - y - lg).exp();
        let newton = y - fy / deriv;
        y = if deriv != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(y)
}

fn beta_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(
            "regularized_incomplete_beta",
            format!("x = {x} must lie in [0, 1]"),
        ));
    }
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::domain(
            "regularized_incomplete_beta",
            format!("shape parameters a = {a}, b = {b} must be positive"),
        ));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    let ln_front =
        ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    let value = if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_fraction(b, a, 1.0 - x) / b
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Outcome of one identity sweep in [`identity_checks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.max_error <= self.tolerance
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(move |i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
}

/// Sweeps the defining identities over fixed grids:
///
/// * recurrence `Γ(a+1, y) = a Γ(a, y) + y^a e^{-y}` (relative error) for
///   `a ∈ {0.5, 1, …, 10}`, `y` log-spaced on `[1e-2, 50]`;
/// * reflection `I_x(a, b) + I_{1-x}(b, a) = 1` (absolute error);
/// * inverse round trip `Q(a, Q⁻¹(a, q)) = q` (absolute error);
/// * inverse round trip `Q⁻¹(a, Q(a, y)) = y` (relative error) where the
///   inverse is well conditioned (`Q ≤ 0.99`).
pub fn identity_checks() -> Vec<IdentityCheck> {
    let orders: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let mut out = Vec::with_capacity(4);

    let mut cases = 0;
    let mut worst = 0.0_f64;
    for &a in &orders {
        for y in logspace(1e-2, 50.0, 80) {
            let lhs = upper_incomplete_gamma(a + 1.0, y).unwrap_or(f64::NAN);
            let rhs = a * upper_incomplete_gamma(a, y).unwrap_or(f64::NAN) + (a * y.ln() - y).exp();
            worst = worst.max(((lhs - rhs) / rhs).abs());
            cases += 1;
        }
    }
    out.push(IdentityCheck {
        name: "gamma-recurrence".into(),
        cases,
        max_error: worst,
        tolerance: 1e-10,
    });

    let shapes = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.5, 7.0, 10.0, 25.0];
    let (mut cases, mut worst) = (0, 0.0_f64);
    for &a in &shapes {
        for &b in &shapes {
            for k in 0..=100 {
                let x = k as f64 / 100.0;
                let sum = regularized_incomplete_beta(x, a, b).unwrap_or(f64::NAN)
                    + regularized_incomplete_beta(1.0 - x, b, a).unwrap_or(f64::NAN);
                worst = worst.max((sum - 1.0).abs());
                cases += 1;
            }
        }
    }
    out.push(IdentityCheck {
        name: "beta-reflection".into(),
        cases,
        max_error: worst,
        tolerance: 1e-12,
    });

    let (mut cases, mut worst) = (0, 0.0_f64);
    for &a in &orders {
        for q in logspace(1e-12, 1.0, 60) {
            let y = inverse_regularized_gamma_q(a, q).unwrap_or(f64::NAN);
            let back = regularized_gamma_q(a, y).unwrap_or(f64::NAN);
            worst = worst.max((back - q).abs());
            cases += 1;
        }
    }
    out.push(IdentityCheck {
        name: "inverse-gamma-q-of-q".into(),
        cases,
        max_error: worst,
        tolerance: 1e-10,
    });

    let (mut cases, mut worst) = (0, 0.0_f64);
    for &a in &orders {
        for y in logspace(1e-2, 50.0, 60) {
            let q = gamma_pq(a, y).1;
            if !(q > 1e-290 && q <= 0.99) {
                continue;
            }
            let back = inverse_regularized_gamma_q(a, q).unwrap_or(f64::NAN);
            worst = worst.max(((back - y) / y).abs());
            cases += 1;
        }
    }
    out.push(IdentityCheck {
        name: "inverse-gamma-q-of-y".into(),
        cases,
        max_error: worst,
        tolerance: 1e-8,
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Composite Simpson on [lo, hi] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let x = lo + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn ln_gamma_known_values() {
        assert!(rel(ln_gamma(0.5), PI.sqrt().ln()) < 1e-14);
        assert!(rel(ln_gamma(10.0), 362_880f64.ln()) < 1e-14);
        assert!(rel(gamma(4.5), 11.631_728_396_567_446) < 1e-14);
        assert!(rel(gamma(2.7), 1.544_685_845_850_593_9) < 1e-13);
    }

    #[test]
    fn upper_gamma_examples() {
        let v = upper_incomplete_gamma(1.0, 2.0).unwrap();
        assert!(rel(v, (-2.0f64).exp()) < 1e-14);
        let v = upper_incomplete_gamma(0.5, 0.0).unwrap();
        assert!(rel(v, PI.sqrt()) < 1e-14);
        let lhs = upper_incomplete_gamma(2.5, 1.3).unwrap();
        let rhs = 1.5 * upper_incomplete_gamma(1.5, 1.3).unwrap() + 1.3f64.powf(1.5) * (-1.3f64).exp();
        assert!(rel(lhs, rhs) < 1e-12);
    }

    #[test]
    fn upper_gamma_matches_quadrature() {
        // ∫_y^∞ t^{a-1} e^{-t} dt truncated at y + 60 where the integrand is negligible
        for &(a, y) in &[(1.5, 3.0), (2.5, 1.3), (7.0, 4.0), (0.5, 2.0), (20.0, 25.0)] {
            let f = |t: f64| t.powf(a - 1.0) * (-t).exp();
            let q = simpson(f, y, y + 80.0, 200_000);
            let v = upper_incomplete_gamma(a, y).unwrap();
            assert!(rel(v, q) < 1e-10, "a={a} y={y}: {v} vs {q}");
        }
    }

    #[test]
    fn regularized_q_examples() {
        assert_eq!(regularized_gamma_q(1.0, 0.0).unwrap(), 1.0);
        assert!((regularized_gamma_q(1.0, 2f64.ln()).unwrap() - 0.5).abs() < 1e-15);
        // Q(1.5, 3) by quadrature of the lower part, substituting t = u^2
        let lower = simpson(|u: f64| 2.0 * u * u * (-u * u).exp(), 0.0, 3f64.sqrt(), 20_000);
        let q = 1.0 - lower / gamma(1.5);
        assert!((regularized_gamma_q(1.5, 3.0).unwrap() - q).abs() < 1e-12);
    }

    #[test]
    fn q_is_monotone_and_bounded() {
        for &a in &[0.5, 1.0, 4.0, 30.0] {
            let mut prev = 1.0;
            for i in 0..400 {
                let y = i as f64 * 0.25;
                let q = regularized_gamma_q(a, y).unwrap();
                assert!(q <= prev + 1e-15 && (0.0..=1.0).contains(&q));
                prev = q;
            }
        }
        assert_eq!(regularized_gamma_q(3.0, f64::INFINITY).unwrap(), 0.0);
    }

    #[test]
    fn large_argument_underflows_quietly() {
        assert_eq!(upper_incomplete_gamma(2.0, 1e4).unwrap(), 0.0);
        assert!(upper_incomplete_gamma(50.0, 700.0).unwrap() >= 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(upper_incomplete_gamma(0.0, 1.0).is_err());
        assert!(upper_incomplete_gamma(1.0, -1.0).is_err());
        assert!(regularized_gamma_q(-2.0, 1.0).is_err());
        assert!(inverse_regularized_gamma_q(1.0, 0.0).is_err());
        assert!(inverse_regularized_gamma_q(1.0, 1.5).is_err());
        assert!(regularized_incomplete_beta(1.2, 1.0, 1.0).is_err());
        assert!(regularized_incomplete_beta(0.2, 0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inverse_regularized_gamma_q(1.0, 1.0).unwrap(), 0.0);
        let y = inverse_regularized_gamma_q(1.0, (-2.0f64).exp()).unwrap();
        assert!((y - 2.0).abs() < 1e-12);
        let y = inverse_regularized_gamma_q(2.5, 0.37).unwrap();
        assert!((regularized_gamma_q(2.5, y).unwrap() - 0.37).abs() < 1e-12);
    }

    #[test]
    fn beta_examples() {
        assert!((regularized_incomplete_beta(0.5, 2.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((regularized_incomplete_beta(0.3, 1.0, 1.0).unwrap() - 0.3).abs() < 1e-15);
        let x = 0.2;
        let v = regularized_incomplete_beta(x, 2.0, 3.0).unwrap();
        let w = regularized_incomplete_beta(1.0 - x, 3.0, 2.0).unwrap();
        assert!((v + w - 1.0).abs() < 1e-14);
        // quadrature: B(2,3) = 1/12
        let q = simpson(|t| t * (1.0 - t) * (1.0 - t), 0.0, x, 1000) * 12.0;
        assert!((v - q).abs() < 1e-12, "{v} vs {q}");
    }

    #[test]
    fn beta_matches_quadrature_half_integer_shapes() {
        // shapes (d+1)/2 used by the truncation fractions
        for d in 1..=8 {
            let s = (d as f64 + 1.0) / 2.0;
            let norm = (ln_gamma(2.0 * s) - 2.0 * ln_gamma(s)).exp();
            for &x in &[0.05, 0.2, 0.37, 0.5] {
                let q = simpson(|t| (t * (1.0 - t)).powf(s - 1.0), 0.0, x, 200_000) * norm;
                let v = regularized_incomplete_beta(x, s, s).unwrap();
                assert!((v - q).abs() < 1e-9, "d={d} x={x}: {v} vs {q}");
            }
        }
    }

    #[test]
    fn identity_sweeps_pass() {
        for check in identity_checks() {
            assert!(check.passed(), "{check:?}");
            assert!(check.cases > 100);
        }
    }
}
