//! Acceptance criteria, one verdict line each. Select criteria by number on
//! the command line, e.g. `cargo test --test acceptance -- 3 7`.

use std::f64::consts::PI;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use credregion::mcvalidate::{
    mc_curve_fn, mc_region_curve, mc_truncated_ellipsoid_volume, quadrature_curve_1d, McRequest,
};
use credregion::mle::{analyze, BoundarySearch, MlOptions, RegionCase};
use credregion::model::{
    deterministic_counts, fisher_information, pom_by_name, sample_dataset, sigma_z, tetrahedron, Dataset,
};
use credregion::regions::{
    case1_credibility, case1_lambda_crit, case1_size, credibility_from_sizes, default_lambda_grid,
    ellipsoid_volume, integrate_size_curve, log_grid, region_curve, truncation_fraction_case2, SizeTails,
};
use credregion::specfun::identity_checks;
use credregion::statespace::{lebesgue_volume, Sampler, StateSpace};
use credregion_cli::{validate, Config, RegionReport, RunOptions};

type Criterion = (u32, &'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn mc(n_samples: usize, seed: u64, sampler: Sampler) -> McRequest {
    McRequest {
        n_samples,
        seed,
        sampler,
    }
}

fn special_functions() -> Verdict {
    let start = Instant::now();
    let checks = identity_checks();
    let elapsed = start.elapsed().as_secs_f64();
    let all = checks.iter().all(|c| c.passed());
    let worst: Vec<String> = checks
        .iter()
        .map(|c| format!("{} {:.1e}/{:.0e}", c.name, c.max_error, c.tolerance))
        .collect();
    Verdict::new(all && elapsed < 1.0, format!("{}; {elapsed:.3} s", worst.join(", ")))
}

fn sampling_yields() -> Verdict {
    let q2 = StateSpace::from_label("qubit2").unwrap().rejection_sample(1_000_000, 1).unwrap();
    let q3 = StateSpace::from_label("qubit3").unwrap().rejection_sample(1_000_000, 1).unwrap();
    let qutrit = StateSpace::from_label("qutrit")
        .unwrap()
        .uniform_sample(10_000, 1, Sampler::BoundingBox)
        .unwrap();
    let (y2, y3, yq) = (q2.yield_fraction(), q3.yield_fraction(), qutrit.yield_fraction());
    let pass = (y2 - PI / 8.0).abs() <= 0.005 && (y3 - PI / 24.0).abs() <= 0.005 && (yq / 2.4e-5 - 1.0).abs() <= 0.1;
    Verdict::new(
        pass,
        format!(
            "qubit2 {:.4}%, qubit3 {:.4}%, qutrit {:.3e}% ({} attempts)",
            100.0 * y2,
            100.0 * y3,
            100.0 * yq,
            qutrit.attempts
        ),
    )
}

fn volumes() -> Verdict {
    let exact = lebesgue_volume(2).unwrap() == PI / 6.0 && lebesgue_volume(3).unwrap() == PI.powi(3) / 20160.0;
    let mut pass = exact;
    let mut detail = vec![format!("closed forms exact: {exact}")];
    for label in ["qubit1", "qubit2", "qubit3"] {
        let space = StateSpace::from_label(label).unwrap();
        let set = space.rejection_sample(1_000_000, 2).unwrap();
        let (v, se) = set.volume_estimate(&space);
        let ok = if se == 0.0 {
            v == space.volume
        } else {
            (v - space.volume).abs() <= 3.0 * se
        };
        pass &= ok;
        let z = if se > 0.0 { (v - space.volume) / se } else { 0.0 };
        detail.push(format!("{label} z={z:.2}"));
    }
    Verdict::new(pass, detail.join(", "))
}

fn tetrahedron_credibility() -> Verdict {
    let t = tetrahedron();
    let space = StateSpace::from_label("qubit3").unwrap();
    // Bloch vector (0.8, 0.4, 0.1) in density-matrix coordinates
    let data = deterministic_counts(&t, &[0.9, 0.2, 0.05], 90).unwrap();
    let ml = analyze(&t, &data, &space, &MlOptions::default(), &BoundarySearch::default()).unwrap();
    let grid: Vec<f64> = log_grid(60, 0.01).into_iter().filter(|&l| l <= 0.9).collect();
    let est = mc_region_curve(&t, &data, &space, ml.log_l_max, &grid, &mc(1_000_000, 0, Sampler::BoundingBox)).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for (i, &l) in grid.iter().enumerate() {
        let c = case1_credibility(l, 3).unwrap();
        worst_z = worst_z.max((est.c_hat[i] - c).abs() / est.c_stderr[i]);
        worst_abs = worst_abs.max((est.c_hat[i] - c).abs());
    }
    let d2 = log_grid(200, 1e-12)
        .iter()
        .map(|&l| (case1_credibility(l, 2).unwrap() - (1.0 - l)).abs())
        .fold(0.0, f64::max);
    Verdict::new(
        worst_z <= 3.0 && d2 <= 4.0 * f64::EPSILON,
        format!(
            "counts {:?}, case {:?}, max |Δc| {worst_abs:.2e} at max z {worst_z:.1} (bar 3); d=2 |c-(1-λ)| {d2:.1e}",
            data.counts, ml.case
        ),
    )
}

fn scaling() -> Verdict {
    let mut exact_dev: f64 = 0.0;
    let grid = log_grid(50, 1e-6);
    for d in 1..=8usize {
        let det_f1 = 1.7f64.powi(d as i32);
        for &l in &grid[..grid.len() - 1] {
            let reference = case1_size(l, d, det_f1 * 50f64.powi(d as i32), 1.0).unwrap() * 50f64.powf(d as f64 / 2.0);
            for n in [100u64, 200, 400, 1000, 12_345] {
                let nf = n as f64;
                let s = case1_size(l, d, det_f1 * nf.powi(d as i32), 1.0).unwrap() * nf.powf(d as f64 / 2.0);
                exact_dev = exact_dev.max((s / reference - 1.0).abs());
            }
        }
    }

    // Gaussian likelihood F = N F₁ around the maximally mixed qubit
    let space = StateSpace::from_label("qubit3").unwrap();
    let centre = space.center();
    let f1 = fisher_information(&tetrahedron(), centre.as_slice(), 1).unwrap().entries;
    let grid: Vec<f64> = log_grid(30, 0.01).into_iter().filter(|&l| l < 1.0).collect();
    let mut worst_z: f64 = 0.0;
    let mut worst_c: f64 = 0.0;
    for n in [50u64, 100, 200] {
        let f = &f1 * n as f64;
        let det = f.determinant();
        let c = centre.clone();
        let log_l = move |r: &[f64]| {
            let delta = DVector::from_iterator(3, r.iter().zip(c.iter()).map(|(a, b)| a - b));
            -0.5 * delta.dot(&(&f * &delta))
        };
        let est = mc_curve_fn(log_l, &space, 0.0, &grid, &mc(1_000_000, 0, Sampler::BoundingBox)).unwrap();
        for (i, &l) in grid.iter().enumerate() {
            let s = case1_size(l, 3, det, space.volume).unwrap();
            worst_z = worst_z.max((est.s_hat[i] - s).abs() / est.s_stderr[i]);
            let c = case1_credibility(l, 3).unwrap();
            worst_c = worst_c.max((est.c_hat[i] - c).abs() / est.c_stderr[i]);
        }
    }
    Verdict::new(
        exact_dev <= 1e-12 && worst_z <= 3.0,
        format!("max |s N^(d/2) drift| {exact_dev:.1e}; MC size max z {worst_z:.2} (bar 3); credibility max z {worst_c:.1} (informational)"),
    )
}

fn consistency() -> Verdict {
    let grid = default_lambda_grid();
    let mut worst_c: f64 = 0.0;
    let mut worst_lc: f64 = 0.0;
    for d in 1..=8usize {
        for det in [1e3f64, 1e8, 1e20] {
            let det = det.powf(d as f64 / 3.0);
            let v = 1.0;
            let lc = case1_lambda_crit(d, det, v).unwrap();
            if !lc.gaussian_valid {
                continue;
            }
            let sizes: Vec<f64> = grid.iter().map(|&l| case1_size(l, d, det, v).unwrap()).collect();
            let c = credibility_from_sizes(&grid, &sizes, SizeTails::ellipsoidal(d)).unwrap();
            for (i, &l) in grid.iter().enumerate() {
                worst_c = worst_c.max((c[i] - case1_credibility(l, d).unwrap()).abs());
            }
            let integral = integrate_size_curve(&grid, &sizes, SizeTails::ellipsoidal(d)).unwrap();
            worst_lc = worst_lc.max((integral / lc.value - 1.0).abs());
        }
    }
    Verdict::new(
        worst_c <= 1e-4 && worst_lc <= 1e-5,
        format!("max |Δc| {worst_c:.1e} (bar 1e-4), max rel Δλ_crit {worst_lc:.1e} (bar 1e-5)"),
    )
}

fn truncation_geometry() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_z: f64 = 0.0;
    let mut worst_half: f64 = 0.0;
    for k in 0..20u64 {
        let d = 2 + (k % 2) as usize;
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let f = (b.transpose() * &b + DMatrix::identity(d, d) * 0.3) * 10f64.powf(rng.random_range(1.0..4.0));
        let centre = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let normal = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let lambda = 10f64.powf(rng.random_range(-3.0..-0.3));
        let l: f64 = rng.random_range(0.05..0.95);
        let lambda_int = lambda.powf(l * l);
        let radius = (-2.0 * lambda.ln()).sqrt();
        let m = normal.dot(&(f.clone().try_inverse().unwrap() * &normal)).sqrt();
        let offset = normal.dot(&centre) + l * radius * m;
        let full = ellipsoid_volume(lambda, d, f.determinant()).unwrap();
        let predicted = truncation_fraction_case2(lambda, lambda_int, d).unwrap() * full;
        let (v, se) = mc_truncated_ellipsoid_volume(&f, &centre, &normal, offset, lambda, 1_000_000, 100 + k).unwrap();
        worst_z = worst_z.max((v - predicted).abs() / se);
        let (h, se) =
            mc_truncated_ellipsoid_volume(&f, &centre, &normal, normal.dot(&centre), lambda, 1_000_000, 200 + k).unwrap();
        worst_half = worst_half.max((h - 0.5 * full).abs() / se);
    }
    Verdict::new(
        worst_z <= 3.0 && worst_half <= 3.0,
        format!("20 configurations: max z {worst_z:.2}; centre planes max z {worst_half:.2}"),
    )
}

fn line_cases() -> Verdict {
    let z = sigma_z();
    let grid: Vec<f64> = log_grid(200, 1e-4).into_iter().filter(|&l| l <= 0.99).collect();

    // interior estimator at 1/2 with the interval ending three widths away
    let n: u64 = 10_000_000;
    let sigma = (0.25 / n as f64).sqrt();
    let space = StateSpace::interval(0.0, 0.5 + 3.0 * sigma).unwrap();
    let data = Dataset::new("sigma-z", vec![n / 2, n / 2]);
    let ml = analyze(&z, &data, &space, &MlOptions::default(), &BoundarySearch::default()).unwrap();
    let curve = region_curve(&ml, space.volume, &grid).unwrap();
    let quad = quadrature_curve_1d(&z, &data, &space, Some(ml.log_l_max), &grid, 1_000_000).unwrap();
    let (mut s2, mut c2) = (0.0f64, 0.0f64);
    for i in 0..grid.len() {
        s2 = s2.max((curve.sizes[i] - quad.s_hat[i]).abs());
        c2 = c2.max((curve.credibilities[i] - quad.c_hat[i]).abs());
    }
    let truncated = ml.case == RegionCase::InteriorTruncated;

    // boundary estimator from n = (30, 0)
    let space = StateSpace::from_label("qubit1").unwrap();
    let data = Dataset::new("sigma-z", vec![30, 0]);
    let ml = analyze(&z, &data, &space, &MlOptions::default(), &BoundarySearch::default()).unwrap();
    let curve = region_curve(&ml, space.volume, &grid).unwrap();
    let quad = quadrature_curve_1d(&z, &data, &space, Some(ml.log_l_max), &grid, 1_000_000).unwrap();
    let (mut s3, mut c3) = (0.0f64, 0.0f64);
    let mut identity = ml.case == RegionCase::Boundary;
    for (i, &l) in grid.iter().enumerate() {
        s3 = s3.max((curve.sizes[i] - quad.s_hat[i]).abs());
        c3 = c3.max((curve.credibilities[i] - quad.c_hat[i]).abs());
        identity &= curve.credibilities[i] == 1.0 - l;
    }
    Verdict::new(
        truncated && s2 <= 1e-3 && c2 <= 1e-3 && s3 <= 1e-3 && c3 <= 1e-3 && identity,
        format!(
            "truncated line: max |Δs| {s2:.1e}, |Δc| {c2:.1e}; boundary n=(30,0): max |Δs| {s3:.1e}, |Δc| {c3:.1e} (bar 1e-3); c = 1-λ exact: {identity}"
        ),
    )
}

fn qutrit_overestimate() -> Verdict {
    let pom = pom_by_name("qutrit90").unwrap();
    let space = StateSpace::from_label("qutrit").unwrap();
    let third = 1.0 / 3.0;
    // the pure state with all density-matrix entries 1/3
    let r_true = [third, third, third, 0.0, third, 0.0, third, 0.0];
    let data = sample_dataset(pom.as_ref(), &r_true, 90, 0).unwrap();
    let ml = analyze(pom.as_ref(), &data, &space, &MlOptions::default(), &BoundarySearch::default()).unwrap();
    if ml.case != RegionCase::Boundary {
        return Verdict::new(false, format!("estimator case {:?}, expected a boundary estimator", ml.case));
    }
    let grid = log_grid(60, 1e-4);
    let curve = region_curve(&ml, space.volume, &grid).unwrap();
    let est = mc_region_curve(pom.as_ref(), &data, &space, ml.log_l_max, &grid, &mc(1_000_000, 0, Sampler::MinorDisk)).unwrap();
    let untruncated = curve.untruncated_sizes.as_ref().unwrap();
    let mut above = true;
    let mut below_gaussian = true;
    let mut worst_z = f64::INFINITY;
    for i in 0..grid.len() {
        let z = (curve.sizes[i] - est.s_hat[i]) / est.s_stderr[i].max(f64::MIN_POSITIVE);
        worst_z = worst_z.min(z);
        above &= curve.sizes[i] >= est.s_hat[i] - 3.0 * est.s_stderr[i];
        if grid[i] < 1.0 {
            below_gaussian &= curve.sizes[i] < untruncated[i];
        }
    }
    let ratio = curve.lambda_crit / est.lambda_crit;
    Verdict::new(
        above && below_gaussian && (0.2..=5.0).contains(&ratio),
        format!(
            "λ_bd {:.3}, min (s - s_hat)/se {worst_z:.1} (bar -3), below untruncated: {below_gaussian}, λ_crit {:.3e} vs MC {:.3e} (ratio {ratio:.2}, bar 5)",
            ml.lambda_bd.unwrap(),
            curve.lambda_crit,
            est.lambda_crit
        ),
    )
}

fn reproducible(a: &RegionReport, b: &RegionReport) -> bool {
    a.scenario == b.scenario
        && a.ml == b.ml
        && a.curve == b.curve
        && a.validation == b.validation
        && a.discrepancy == b.discrepancy
}

fn determinism() -> Verdict {
    let configs = [
        "space = qubit3\npom = tetrahedron\nr_true = 0.9, 0.2, 0.05\nN = 90\nseed = 3\nlambda_grid = log:40:1e-4\nn_samples = 20000\n",
        "space = qubit2\npom = crosshair\nr_true = 0.8, 0.4\nN = 500\nseed = 11\nlambda_grid = log:40:1e-4\nn_samples = 20000\n",
        "space = qubit1\npom = sigma-z\nr_true = 0.99\nN = 30\nseed = 2\nvalidator = quadrature\nn_samples = 5000\n",
        "space = qutrit\npom = qutrit90\nr_true = 0.4, 0.3, 0.1, 0.05, 0.0, 0.1, 0.05, 0.0\nN = 150\nseed = 5\nsampler = minor-disk\nlambda_grid = log:30:1e-4\nn_samples = 5000\n",
    ];
    let mut pass = true;
    let mut cases = Vec::new();
    for text in configs {
        let cfg: Config = text.parse().unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| validate(&cfg, RunOptions::default()).unwrap())
        };
        let base = run(1);
        let same = [run(1), run(2), run(4)].iter().all(|r| reproducible(&base, r));
        pass &= same;
        cases.push(format!("{} {:?}: {same}", cfg.pom, base.ml.case));
    }
    Verdict::new(pass, format!("threads 1/1/2/4 identical: {}", cases.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "special-function identities", special_functions),
        (2, "rejection-sampling yields", sampling_yields),
        (3, "state-space volumes", volumes),
        (4, "untruncated credibility, tetrahedron N=90", tetrahedron_credibility),
        (5, "untruncated size scaling", scaling),
        (6, "size/credibility/λ_crit consistency", consistency),
        (7, "plane-truncated ellipsoid volumes", truncation_geometry),
        (8, "one-dimensional truncated and boundary cases", line_cases),
        (9, "qutrit boundary-estimator overestimate", qutrit_overestimate),
        (10, "determinism across runs and threads", determinism),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|_| Verdict::new(false, "panicked"));
        let tag = if verdict.pass { "PASS" } else { "FAIL" };
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "{tag} criterion {id:>2} {name}: {} [{:.1} s]",
            verdict.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed);
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
