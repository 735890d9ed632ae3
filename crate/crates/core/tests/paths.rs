mod common;

use common::Mix1;
use extremal_core::info::{GaussianMixture, GaussianVec};
use extremal_core::linalg::{Mat, PsdMatrix, SymMatrix};
use extremal_core::mc::McConfig;
use extremal_core::path::{
    build_recursion, certify, chebyshev_grid, cpt, recursion_from_costa, verify_recursion, BcPath, CostaPath, Direction,
    LvPath, MonotonePath, SecPath,
};
use extremal_core::random::{
    bc_auxiliaries, bc_problem, costa_problem, lv_problem, rng, scale_to_fit, sec_problem,
};
use extremal_core::solvers::{costa_certificate, solve_bc, solve_lv, solve_sec, LvCertificate, SolverOptions};
use std::f64::consts::{E, PI};

fn ln2pie() -> f64 {
    (2.0 * PI * E).ln()
}

/// Scalar LV data `(b, k1, k2, μ)`.
#[derive(Clone, Copy)]
struct Lv1 {
    b: f64,
    k1: f64,
    k2: f64,
    mu: f64,
}

/// Covariance of `(√(1−γ)X + √γG + N_a, √γX − √(1−γ)G + N_b)` for `var X = c`, `var G = b`.
fn joint_cov(c: f64, b: f64, ka: f64, kb: f64, g: f64) -> [f64; 3] {
    [(1.0 - g) * c + g * b + ka, g * c + (1.0 - g) * b + kb, (g * (1.0 - g)).sqrt() * (c - b)]
}

fn lv_oracle_gaussian(c: f64, lv: Lv1, g: f64) -> f64 {
    let [v1, v2, r] = joint_cov(c, lv.b, lv.k1, lv.k2, g);
    let joint = ln2pie() + 0.5 * (v1 * v2 - r * r).ln();
    let single = 0.5 * (ln2pie() + v1.ln());
    lv.mu * joint - (lv.mu - 1.0) * single
}

fn entropy_2d(comps: &[(f64, [f64; 2], [f64; 3])]) -> f64 {
    let sd = comps.iter().map(|(_, _, v)| v[0].max(v[1]).sqrt()).fold(0.0, f64::max);
    let lo = comps.iter().map(|(_, m, _)| m[0].min(m[1])).fold(f64::INFINITY, f64::min) - 10.0 * sd;
    let hi = comps.iter().map(|(_, m, _)| m[0].max(m[1])).fold(f64::NEG_INFINITY, f64::max) + 10.0 * sd;
    let h = 0.01;
    let n = ((hi - lo) / h) as usize;
    let pre: Vec<_> = comps
        .iter()
        .map(|&(w, m, [a, b, r])| {
            let det = a * b - r * r;
            (w / (2.0 * PI * det.sqrt()), m, [b / det, a / det, -r / det])
        })
        .collect();
    let mut s = 0.0;
    for i in 0..=n {
        let x = lo + i as f64 * h;
        for j in 0..=n {
            let y = lo + j as f64 * h;
            let f: f64 = pre
                .iter()
                .map(|&(c, m, [p, q, o])| {
                    let (dx, dy) = (x - m[0], y - m[1]);
                    c * (-0.5 * (p * dx * dx + q * dy * dy + 2.0 * o * dx * dy)).exp()
                })
                .sum();
            if f > 0.0 {
                s -= f * f.ln();
            }
        }
    }
    s * h * h
}

fn lv_oracle_mixture(x: &Mix1, lv: Lv1, g: f64) -> f64 {
    let comps: Vec<_> = x
        .iter()
        .map(|&(w, m, v)| (w, [(1.0 - g).sqrt() * m, g.sqrt() * m], joint_cov(v, lv.b, lv.k1, lv.k2, g)))
        .collect();
    let single: Mix1 = x.iter().map(|&(w, m, v)| (w, (1.0 - g).sqrt() * m, (1.0 - g) * v + g * lv.b + lv.k1)).collect();
    lv.mu * entropy_2d(&comps) - (lv.mu - 1.0) * common::entropy_1d(&single)
}

fn mix1(m: &Mix1) -> GaussianMixture {
    let comps = m
        .iter()
        .map(|&(_, mu, v)| GaussianVec::new(vec![mu], PsdMatrix::from_diagonal(&[v]).unwrap()).unwrap())
        .collect();
    GaussianMixture::new(m.iter().map(|c| c.0).collect(), comps).unwrap()
}

fn scalar(v: f64) -> PsdMatrix {
    PsdMatrix::from_diagonal(&[v]).unwrap()
}

fn lv_path(x: GaussianMixture, lv: Lv1) -> LvPath {
    LvPath::new(x, scalar(lv.b), scalar(lv.k1), scalar(lv.k2), lv.mu).unwrap()
}

const LV: Lv1 = Lv1 { b: 0.8, k1: 0.5, k2: 1.3, mu: 1.7 };

#[test]
fn lv_gaussian_path_matches_closed_oracle() {
    let cfg = McConfig::new(10_000, 0).unwrap();
    let c = 1.4;
    let spec = lv_path(GaussianMixture::centered_gaussian(scalar(c)).unwrap(), LV).spec().unwrap();
    for &g in &chebyshev_grid(16) {
        let v = spec.g(g, &cfg).unwrap();
        assert!((v.value - lv_oracle_gaussian(c, LV, g)).abs() < 1e-12);
        let h = 1e-4;
        let fd = (-lv_oracle_gaussian(c, LV, g + 2.0 * h) + 8.0 * lv_oracle_gaussian(c, LV, g + h)
            - 8.0 * lv_oracle_gaussian(c, LV, g - h)
            + lv_oracle_gaussian(c, LV, g - 2.0 * h))
            / (12.0 * h);
        let d = spec.dg(g, &cfg).unwrap().value;
        assert!((d - fd).abs() < 1e-6, "γ={g}: {d} vs {fd}");
    }
}

#[test]
fn lv_mixture_path_matches_quadrature() {
    let x: Mix1 = vec![(0.4, -1.0, 0.3), (0.6, 0.7, 0.5)];
    let spec = lv_path(mix1(&x), LV).spec().unwrap();
    let cfg = McConfig::new(200_000, 5).unwrap();
    for g in [0.2, 0.6] {
        let v = spec.g(g, &cfg).unwrap();
        let oracle = lv_oracle_mixture(&x, LV, g);
        assert!((v.value - oracle).abs() <= 5.0 * v.stderr + 1e-4, "γ={g}: {} vs {oracle} (se {})", v.value, v.stderr);
    }
}

#[test]
fn endpoints_match_path_limits() {
    let x: Mix1 = vec![(0.5, -0.8, 0.4), (0.5, 0.8, 0.4)];
    let path = lv_path(mix1(&x), LV);
    let cfg = McConfig::new(200_000, 1).unwrap();
    let [g0, g1] = path.endpoints(&cfg).unwrap();
    let near0 = lv_oracle_mixture(&x, LV, 1e-9);
    assert!((g0.value - near0).abs() <= 5.0 * g0.stderr + 1e-4);
    let c = 1.1;
    let gp = lv_path(GaussianMixture::centered_gaussian(scalar(c)).unwrap(), LV);
    let [e0, e1] = gp.endpoints(&cfg).unwrap();
    assert!((e0.value - lv_oracle_gaussian(c, LV, 0.0)).abs() < 1e-12);
    assert!((e1.value - lv_oracle_gaussian(c, LV, 1.0)).abs() < 1e-12);
    assert!(g1.value.is_finite());
}

fn solved_lv(seed: u64, p: usize) -> LvCertificate {
    solve_lv(&lv_problem(p, &mut rng(seed)), &SolverOptions::default()).unwrap()
}

#[test]
fn certified_lv_paths_pass() {
    let cfg = McConfig::new(20_000, 3).unwrap();
    for seed in 0..4 {
        let cert = solved_lv(seed, 1 + seed as usize % 3);
        let s = cert.problem.s.clone();
        for x in [
            GaussianMixture::centered_gaussian(s.clone()).unwrap(),
            GaussianMixture::centered_gaussian(cert.b_star.clone()).unwrap(),
        ] {
            let trace = certify(&LvPath::from_certificate(x, &cert).unwrap(), 64, &cfg).unwrap();
            let v = &trace.verdict;
            assert!(v.hypothesis_satisfied && v.pass, "seed {seed}: {v:?}");
            assert_eq!(v.direction, Direction::Increasing);
            assert!(v.min_dg >= -1e-8);
            assert!(v.endpoint_residuals.iter().all(|r| *r <= 1e-8));
        }
    }
}

#[test]
fn negative_control_is_flagged() {
    let cert = solved_lv(0, 1);
    let x = GaussianMixture::centered_gaussian(cert.problem.s.clone()).unwrap();
    let mut path = LvPath::from_certificate(x.clone(), &cert).unwrap();
    path.mu = 0.5;
    assert!(!path.hypothesis_satisfied());
    let trace = certify(&path, 16, &McConfig::new(10_000, 0).unwrap()).unwrap();
    assert!(!trace.verdict.hypothesis_satisfied);
    let bare = LvPath::new(x, cert.b_star.clone(), cert.problem.k1.clone(), cert.problem.k2.clone(), cert.problem.mu).unwrap();
    assert!(!bare.hypothesis_satisfied());
}

#[test]
fn certify_rejects_small_grid() {
    let path = lv_path(GaussianMixture::centered_gaussian(scalar(1.0)).unwrap(), LV);
    assert!(certify(&path, 8, &McConfig::new(10_000, 0).unwrap()).is_err());
    let grid = chebyshev_grid(64);
    assert!(grid.iter().all(|g| *g > 0.0 && *g < 1.0));
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn costa_bc_sec_gaussian_paths_pass() {
    let opts = SolverOptions::default();
    let cfg = McConfig::new(10_000, 0).unwrap();
    for seed in 0..3 {
        let mut r = rng(500 + seed);
        let p = 1 + seed as usize % 2;
        let co = costa_certificate(&costa_problem(p, 1 + seed as usize, &mut r), &opts).unwrap();
        let x = GaussianMixture::centered_gaussian(co.problem.s.clone()).unwrap();
        let t = certify(&CostaPath::from_certificate(x, &co).unwrap(), 64, &cfg).unwrap();
        assert!(t.verdict.pass && t.verdict.hypothesis_satisfied, "costa {seed}: {:?}", t.verdict);

        let bc = solve_bc(&bc_problem(p, &mut r), &opts).unwrap();
        let t = certify(&BcPath::from_solution(&bc, None).unwrap(), 64, &cfg).unwrap();
        assert!(t.verdict.pass, "bc {seed}: {:?}", t.verdict);
        assert_eq!(t.verdict.direction, Direction::Increasing);

        let sec = solve_sec(&sec_problem(p, &mut r), &opts).unwrap();
        let t = certify(&SecPath::from_solution(&sec, None).unwrap(), 64, &cfg).unwrap();
        assert!(t.verdict.pass && t.verdict.hypothesis_satisfied, "sec {seed}: {:?}", t.verdict);
        assert_eq!(t.verdict.direction, Direction::Decreasing);
        assert!(t.verdict.max_dg <= 1e-8);
    }
}

#[test]
fn bc_mixture_path_passes() {
    let bc = solve_bc(&bc_problem(1, &mut rng(77)), &SolverOptions::default()).unwrap();
    let aux = bc_auxiliaries(&bc, 0.9, &mut rng(78)).unwrap();
    let t = certify(&BcPath::from_solution(&bc, Some(aux)).unwrap(), 16, &McConfig::new(20_000, 4).unwrap()).unwrap();
    assert!(t.verdict.pass, "{:?}", t.verdict);
}

#[test]
fn costa_recursion_holds_along_path() {
    let opts = SolverOptions::default();
    let cfg = McConfig::new(10_000, 0).unwrap();
    for seed in 0..6 {
        let mut r = rng(900 + seed);
        let p = 1 + seed as usize % 2;
        let co = costa_certificate(&costa_problem(p, 2 + seed as usize % 2, &mut r), &opts).unwrap();
        let x = scale_to_fit(&GaussianMixture::centered_gaussian(co.problem.s.clone()).unwrap(), co.problem.s.as_matrix(), 0.9).unwrap();
        let path = CostaPath::from_certificate(x, &co).unwrap();
        for g in [0.25, 0.5, 0.75] {
            let st = recursion_from_costa(&path, g, &cfg).unwrap();
            let rep = verify_recursion(&st, 1e-7);
            assert!(rep.pass, "seed {seed} γ={g}: {rep:?}");
        }
    }
}

#[test]
fn recursion_hand_example() {
    let s = |d: &[f64]| SymMatrix::from_diagonal(d).unwrap();
    // μ = (½, ½), A₁ = −A₂ = I, so A⁽²⁾₂ = A₂ + A₁ = 0.
    let st = build_recursion(&[0.5, 0.5], &[s(&[1.0, 1.0]), s(&[-1.0, -1.0])], &[s(&[2.0, 1.0]), s(&[1.0, 0.5])]).unwrap();
    assert!(st.entry(1, 1).as_matrix().norm() < 1e-15);
    assert!((st.f[0] - 0.5 * (3.0 - 1.5)).abs() < 1e-15);
    let rep = verify_recursion(&st, 1e-9);
    assert!(rep.pass && rep.a_ordered && rep.i_ordered);
    assert!(build_recursion(&[0.5, 0.5], &[s(&[1.0]), s(&[1.0])], &[s(&[1.0]), s(&[1.0])]).is_err());
}

#[test]
fn cpt_endpoints_and_covariance() {
    let cov = PsdMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    let xg = GaussianVec::centered(cov.clone()).unwrap();
    let x = cov.sample_gaussian(200_000, 1);
    let (a, b) = cpt(&x, &xg, 0.0, 2).unwrap();
    assert_eq!(a, x);
    let (c, d) = cpt(&x, &xg, 1.0, 2).unwrap();
    assert_eq!(d, x);
    assert!((&b + &c).norm() < 1e-12);
    let (u, v) = cpt(&x, &xg, 0.3, 2).unwrap();
    let n = x.nrows() as f64;
    let cu = u.transpose() * &u / n;
    let cross = u.transpose() * &v / n;
    assert!((cu - cov.as_matrix()).norm() < 0.02);
    assert!(cross.norm() < 0.02);
    assert!(cpt(&x, &xg, 1.5, 2).is_err());
    assert!(cpt(&Mat::zeros(3, 1), &xg, 0.5, 2).is_err());
}

#[test]
fn trace_csv_has_one_row_per_gamma() {
    let path = lv_path(mix1(&vec![(0.5, -1.0, 0.4), (0.5, 1.0, 0.4)]), LV);
    let t = certify(&path, 16, &McConfig::new(10_000, 0).unwrap()).unwrap();
    let csv = t.to_csv();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 17);
}
