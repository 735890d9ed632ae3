mod common;

use common::{grid_max_1d, grid_max_2d, ln};
use extremal_core::info::GaussianMixture;
use extremal_core::linalg::PsdMatrix;
use extremal_core::mc::McConfig;
use extremal_core::random::{bc_problem, costa_problem, lv_problem, mixture, rng, scale_to_fit, sec_problem};
use extremal_core::solvers::{
    costa_certificate, extremal_gap, kkt_check_lv, region_bc, region_sec, solve_bc, solve_lv, solve_sec, BcFamily,
    BcProblem, LvProblem, SecFamily, SolverOptions,
};
use extremal_core::Error;

fn s(m: &PsdMatrix) -> f64 {
    m.as_matrix()[(0, 0)]
}

fn scalar(v: f64) -> PsdMatrix {
    PsdMatrix::from_diagonal(&[v]).unwrap()
}

#[test]
fn scalar_lv_matches_grid() {
    let opts = SolverOptions::default();
    for seed in 0..10 {
        let pr = lv_problem(1, &mut rng(seed));
        let (k1, k2, sv, mu) = (s(&pr.k1), s(&pr.k2), s(&pr.s), pr.mu);
        let f = |b: f64| 0.5 * ln(b + k1) - 0.5 * mu * ln(b + k2);
        let (_, best) = grid_max_1d(f, 0.0, sv, 1e-6);
        let cert = solve_lv(&pr, &opts).unwrap();
        assert!(cert.kkt.pass, "seed {seed}: {:?}", cert.kkt);
        assert!((cert.value - best).abs() < 1e-8, "seed {seed}: {} vs {best}", cert.value);
    }
}

#[test]
fn scalar_costa_matches_grid() {
    let opts = SolverOptions::default();
    for seed in 0..10 {
        let pr = costa_problem(1, 1 + seed as usize % 3, &mut rng(seed));
        let ks: Vec<f64> = pr.k.iter().map(s).collect();
        let f = |b: f64| -0.5 * ln(b + ks[0]) + pr.mu.iter().zip(&ks[1..]).map(|(m, k)| 0.5 * m * ln(b + k)).sum::<f64>();
        let (_, best) = grid_max_1d(f, 0.0, s(&pr.s), 1e-6);
        let cert = costa_certificate(&pr, &opts).unwrap();
        assert!(cert.kkt.pass, "seed {seed}: {:?}", cert.kkt);
        assert!((cert.value - best).abs() < 1e-8, "seed {seed}: {} vs {best}", cert.value);
    }
}

fn bc_oracle(pr: &BcProblem) -> f64 {
    let (k1, k2, sv, m1, m2) = (s(&pr.k1), s(&pr.k2), s(&pr.s), pr.mu1, pr.mu2);
    let f = |b1: f64, b2: f64| {
        let t = |k: f64| 0.5 * ln((sv + k) / (b1 + b2 + k));
        t(k1).min(t(k2)) + m2 * 0.5 * ln((b1 + b2 + k2) / (b2 + k2)) + m1 * 0.5 * ln((b2 + k1) / k1)
    };
    grid_max_2d(f, |b1, b2| b1 + b2 <= sv, [0.0, 0.0], [sv, sv], 2e-3).1
}

#[test]
fn scalar_bc_matches_grid() {
    let opts = SolverOptions::default();
    let mut checked = 0;
    for seed in 0..12 {
        let pr = bc_problem(1, &mut rng(seed));
        let sol = solve_bc(&pr, &opts).unwrap();
        assert!(sol.kkt.pass, "seed {seed}: {:?}", sol.kkt);
        let best = bc_oracle(&pr);
        assert!((sol.value - best).abs() < 1e-5, "seed {seed}: {} vs {best}", sol.value);
        checked += 1;
    }
    assert_eq!(checked, 12);
}

fn sec_oracle(k: f64, ky: f64, kz: f64, d: f64, mu: f64) -> f64 {
    let p0 = 1.0 / k + 1.0 / ky;
    let t = 1.0 / d - p0;
    let ln2pie = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
    // The objective increases in b₁, so b₁ sits on its lower bound.
    let f = |b2: f64| {
        let b1 = (t - b2).max(0.0);
        let p1 = p0 + b1 + b2;
        let rate = 0.5 * ln(p1 / p0);
        let equiv = -0.5 * (ln(p1) - ln2pie) + 0.5 * ln(p0 + b2) - 0.5 * ln(1.0 / k + 1.0 / kz + b2);
        mu * rate - equiv
    };
    let hi = t.max(0.0) + 50.0;
    -grid_max_1d(|b| -f(b), 0.0, hi, 1e-3).1
}

#[test]
fn scalar_sec_matches_profile_oracle() {
    let opts = SolverOptions::default();
    for seed in 0..12 {
        let pr = sec_problem(1, &mut rng(seed));
        let sol = solve_sec(&pr, &opts).unwrap();
        assert!(sol.kkt.pass, "seed {seed}: {:?}", sol.kkt);
        let best = sec_oracle(s(&pr.k), s(&pr.ky), s(&pr.kz), s(&pr.d), pr.mu);
        assert!((sol.value - best).abs() < 1e-5, "seed {seed}: {} vs {best}", sol.value);
    }
}

#[test]
fn matrix_solvers_pass_kkt() {
    let opts = SolverOptions::default();
    for seed in 0..4 {
        let mut r = rng(300 + seed);
        let p = 2 + seed as usize % 2;
        assert!(solve_lv(&lv_problem(p, &mut r), &opts).unwrap().kkt.pass);
        assert!(costa_certificate(&costa_problem(p, 2, &mut r), &opts).unwrap().kkt.pass);
        assert!(solve_bc(&bc_problem(p, &mut r), &opts).unwrap().kkt.pass);
        assert!(solve_sec(&sec_problem(p, &mut r), &opts).unwrap().kkt.pass);
    }
}

#[test]
fn kkt_check_hand_example() {
    // ½log(b+1) − log(b+1) decreases, so b* = 0 with M₁ = 1, M₂ = 0.
    let pr = LvProblem { k1: scalar(1.0), k2: scalar(1.0), s: scalar(1.0), mu: 2.0 };
    let good = kkt_check_lv(&scalar(0.0), &scalar(1.0), &scalar(0.0), &pr, 1e-7).unwrap();
    assert!(good.pass && good.max_residual() < 1e-15);
    let bad = kkt_check_lv(&scalar(0.0), &scalar(0.0), &scalar(0.0), &pr, 1e-7).unwrap();
    assert!(!bad.pass);
    let interior = kkt_check_lv(&scalar(0.5), &scalar(0.0), &scalar(0.0), &pr, 1e-7).unwrap();
    assert!(!interior.pass);
    assert!(matches!(kkt_check_lv(&PsdMatrix::identity(2), &scalar(0.0), &scalar(0.0), &pr, 1e-7), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn extremal_gap_is_zero_at_gaussian_and_nonnegative_otherwise() {
    let opts = SolverOptions::default();
    for seed in 0..4 {
        let mut r = rng(40 + seed);
        let p = 1 + seed as usize % 2;
        let cert = solve_lv(&lv_problem(p, &mut r), &opts).unwrap();
        let cfg = McConfig::new(100_000, seed).unwrap();
        let g = GaussianMixture::centered_gaussian(cert.b_star.clone()).unwrap();
        assert!(extremal_gap(&cert, &g, &cfg).unwrap().value.abs() < 1e-10);
        let x = scale_to_fit(&mixture(p, 2, 1.0, &mut r), cert.problem.s.as_matrix(), 0.95).unwrap();
        let gap = extremal_gap(&cert, &x, &cfg).unwrap();
        assert!(gap.value >= -5.0 * gap.stderr, "seed {seed}: {gap:?}");
        let big = GaussianMixture::centered_gaussian(PsdMatrix::from_matrix(cert.problem.s.as_matrix() * 2.0).unwrap()).unwrap();
        assert!(matches!(extremal_gap(&cert, &big, &cfg), Err(Error::CovarianceViolation { .. })));
    }
}

#[test]
fn invalid_weights_are_rejected() {
    let mut pr = bc_problem(1, &mut rng(0));
    pr.mu2 = 1.0;
    assert!(matches!(solve_bc(&pr, &SolverOptions::default()), Err(Error::UnsupportedWeights(_))));
    pr.mu2 = 0.5;
    pr.mu1 = 0.7;
    assert!(solve_bc(&pr, &SolverOptions::default()).is_err());
}

#[test]
fn solvers_are_deterministic() {
    let opts = SolverOptions::default();
    let pr = bc_problem(2, &mut rng(9));
    let a = serde_json::to_string(&solve_bc(&pr, &opts).unwrap()).unwrap();
    let b = serde_json::to_string(&solve_bc(&pr, &opts).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn region_warm_matches_cold() {
    let opts = SolverOptions::default();
    let base = bc_problem(2, &mut rng(12));
    let weights: Vec<[f64; 2]> = [0.1, 0.3, 0.5, 0.7, 0.9].iter().flat_map(|&a| [0.2, 0.6, 0.95].iter().filter(move |&&b| a <= b).map(move |&b| [a, b])).collect();
    let fam = BcFamily { k1: base.k1, k2: base.k2, s: base.s, weights };
    let warm = region_bc(&fam, &opts, false);
    let cold = region_bc(&fam, &opts, true);
    assert!(warm.all_ok() && cold.all_ok());
    for (w, c) in warm.points.iter().zip(&cold.points) {
        assert!((w.value - c.value).abs() < 1e-6, "{:?}: {} vs {}", w.weights, w.value, c.value);
    }
    assert!(warm.monotone);
    let csv = warm.to_csv(&["mu1", "mu2"], &["r0", "r1", "r2"]);
    assert!(csv.starts_with("mu1,mu2,value,r0,r1,r2,converged\n"));
    assert_eq!(csv.lines().count(), fam.weights.len() + 1);

    let sp = sec_problem(2, &mut rng(13));
    let fam = SecFamily { k: sp.k, ky: sp.ky, kz: sp.kz, d: sp.d, mu: vec![0.0, 0.5, 1.0, 2.0, 3.0] };
    let warm = region_sec(&fam, &opts, false);
    let cold = region_sec(&fam, &opts, true);
    assert!(warm.all_ok() && cold.all_ok());
    for (w, c) in warm.points.iter().zip(&cold.points) {
        assert!((w.value - c.value).abs() < 1e-6);
    }
    assert!(warm.monotone);
}
