use approx::assert_relative_eq;
use proptest::prelude::*;

use credregion::statespace::*;
use credregion::Error;

/// Eigenvalues of the 2×2 Hermitian matrix `[[a, b + ic], [b - ic, 1 - a]]`.
fn qubit_eigenvalues(r: &[f64]) -> (f64, f64) {
    let a = r[0];
    let (b, c) = (r.get(1).copied().unwrap_or(0.0), r.get(2).copied().unwrap_or(0.0));
    let half_gap = ((a - 0.5).powi(2) + b * b + c * c).sqrt();
    (0.5 - half_gap, 0.5 + half_gap)
}

#[test]
#[allow(clippy::approx_constant)]
fn labelled_volumes() {
    assert_eq!(StateSpace::from_label("interval(0,1)").unwrap().volume, 1.0);
    assert_eq!(StateSpace::from_label("qubit1").unwrap().volume, 1.0);
    assert_relative_eq!(StateSpace::from_label("qubit2").unwrap().volume, std::f64::consts::FRAC_PI_4);
    assert_relative_eq!(StateSpace::from_label("qubit3").unwrap().volume, 0.523598, epsilon = 1e-6);
    assert_relative_eq!(StateSpace::from_label("qutrit").unwrap().volume, 1.5379e-3, max_relative = 1e-4);
    assert_eq!(StateSpace::from_label("interval(-1, 2.5)").unwrap().volume, 3.5);
    assert!(matches!(StateSpace::from_label("ququart"), Err(Error::UnknownLabel(_))));
}

#[test]
fn physicality_examples() {
    let q = StateSpace::from_label("qubit3").unwrap();
    assert!(q.is_physical(&[0.5, 0.0, 0.0]));
    assert!(q.is_physical(&[1.0, 0.0, 0.0]));
    assert!(!q.is_physical(&[1.0, 0.5, 0.0]));
    assert!(qubit_eigenvalues(&[1.0, 0.5, 0.0]).0 < 0.0);
}

#[test]
fn boundary_projection_examples() {
    let q = StateSpace::from_label("qubit3").unwrap();
    let p = q.project_to_boundary(&[1.2, 0.0, 0.0]).unwrap();
    assert!((p[0] - 1.0).abs() < 1e-12 && p[1].abs() < 1e-12 && p[2].abs() < 1e-12);
    assert!(matches!(q.project_to_boundary(&[0.5, 0.1, 0.0]), Err(Error::StrictlyInterior)));
    let line = StateSpace::from_label("interval(0,1)").unwrap();
    assert_eq!(line.project_to_boundary(&[1.3]).unwrap()[0], 1.0);
}

#[test]
fn mc_volume_within_three_stderr() {
    for label in ["qubit1", "qubit2", "qubit3", "interval(0.2, 0.7)"] {
        let space = StateSpace::from_label(label).unwrap();
        let set = space.rejection_sample(200_000, 17).unwrap();
        let (v, se) = set.volume_estimate(&space);
        if se == 0.0 {
            assert_eq!(v, space.volume, "{label}");
        } else {
            assert!((v - space.volume).abs() <= 3.0 * se, "{label}: {v} ± {se} vs {}", space.volume);
        }
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn qubit_yields_near_published_percentages() {
    let q2 = StateSpace::from_label("qubit2").unwrap().rejection_sample(100_000, 1).unwrap();
    assert!((q2.yield_fraction() - 0.3927).abs() < 0.005);
    let q3 = StateSpace::from_label("qubit3").unwrap().rejection_sample(100_000, 1).unwrap();
    assert!((q3.yield_fraction() - 0.1309).abs() < 0.005);
}

#[test]
fn convexity_spot_check() {
    for (label, n, sampler) in [
        ("qubit3", 10_000, Sampler::BoundingBox),
        ("qutrit", 2_000, Sampler::MinorDisk),
    ] {
        let space = StateSpace::from_label(label).unwrap();
        let set = space.uniform_sample(n, 5, sampler).unwrap();
        let half = n / 2;
        for i in 0..half {
            let (a, b) = (set.point(i), set.point(i + half));
            let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
            assert!(space.is_physical(&mid), "{label}");
        }
    }
}

#[test]
fn samplers_are_deterministic_and_thread_independent() {
    let space = StateSpace::from_label("qubit3").unwrap();
    let a = space.uniform_sample(5000, 42, Sampler::BoundingBox).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| space.uniform_sample(5000, 42, Sampler::BoundingBox).unwrap());
    assert_eq!(a.points, b.points);
    assert_eq!(a.attempts, b.attempts);
    let c = space.uniform_sample(5000, 43, Sampler::BoundingBox).unwrap();
    assert_ne!(a.points, c.points);
}

#[test]
fn minor_disk_and_box_agree_on_qubit_volume() {
    let space = StateSpace::from_label("qubit3").unwrap();
    let set = space.uniform_sample(100_000, 3, Sampler::MinorDisk).unwrap();
    let (v, se) = set.volume_estimate(&space);
    assert!((v - space.volume).abs() <= 3.0 * se, "{v} ± {se}");
}

#[test]
fn projections_of_pure_states_with_tiny_diagonal_pass_cholesky() {
    let q = StateSpace::from_label("qubit3").unwrap();
    let p = q.nearest_point(&[-0.31047658368517045, 0.0, 0.032032792916762615]);
    assert!(q.is_physical(p.as_slice()));
    assert!(q.min_eigenvalue(p.as_slice()).abs() <= 1e-10);
}

proptest! {
    #[test]
    fn cholesky_membership_matches_eigenvalues(a in 0.0f64..1.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let q = StateSpace::from_label("qubit3").unwrap();
        let (lo, _) = qubit_eigenvalues(&[a, b, c]);
        prop_assume!(lo.abs() > 1e-12);
        prop_assert_eq!(q.is_physical(&[a, b, c]), lo > 0.0);
    }

    #[test]
    fn projection_lands_on_boundary(a in -0.5f64..1.5, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let q = StateSpace::from_label("qubit3").unwrap();
        let r = [a, b, c];
        prop_assume!(qubit_eigenvalues(&r).0 < -1e-9);
        let p = q.project_to_boundary(&r).unwrap();
        let m = q.parametrization().unwrap().matrix(p.as_slice());
        let trace = m.trace();
        prop_assert!((trace.re - 1.0).abs() <= 1e-12 && trace.im.abs() <= 1e-12);
        let min_eig = q.min_eigenvalue(p.as_slice());
        prop_assert!((-1e-12..=1e-10).contains(&min_eig), "{}", min_eig);
        prop_assert!(q.is_physical(p.as_slice()));
        let det = qubit_eigenvalues(p.as_slice());
        prop_assert!((det.0 * det.1).abs() <= 1e-10);
    }

    #[test]
    fn qutrit_projection_is_rank_deficient(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let q = StateSpace::from_label("qutrit").unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let r: Vec<f64> = q.bounding_box.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
        prop_assume!(q.min_eigenvalue(&r) < -1e-9);
        let p = q.project_to_boundary(&r).unwrap();
        let min_eig = q.min_eigenvalue(p.as_slice());
        prop_assert!((-1e-12..=1e-10).contains(&min_eig), "{}", min_eig);
    }

    #[test]
    fn nearest_point_is_physical(a in -1.0f64..2.0, b in -1.0f64..1.0, c in -1.0f64..1.0) {
        let q = StateSpace::from_label("qubit3").unwrap();
        let p = q.nearest_point(&[a, b, c]);
        prop_assert!(q.is_physical(p.as_slice()));
        let again = q.nearest_point(p.as_slice());
        prop_assert!((&again - &p).amax() <= 1e-12);
    }
}
