mod common;

use common::{entropy_1d, fisher_1d, plus_noise, variance_1d, Mix1};
use extremal_core::info::{
    check_complementary, check_complementary_two_noise, check_cramer_rao, check_de_bruijn, check_dpi_fisher, check_fii,
    check_mmse_monotone, entropy, entropy_gaussian, fisher, mmse_gaussian, score, Backend, ConditionalMixture,
    GaussianMixture, GaussianVec, LabeledConditional, Tolerances,
};
use extremal_core::linalg::{Mat, PsdMatrix, SymMatrix};
use extremal_core::mc::McConfig;
use extremal_core::random::{increasing_chain, mixture, pd_matrix, rng};
use proptest::prelude::*;
use std::f64::consts::{E, PI};

fn mix1(m: &Mix1) -> GaussianMixture {
    let comps = m
        .iter()
        .map(|&(_, mu, v)| GaussianVec::new(vec![mu], PsdMatrix::from_diagonal(&[v]).unwrap()).unwrap())
        .collect();
    GaussianMixture::new(m.iter().map(|c| c.0).collect(), comps).unwrap()
}

fn bimodal() -> Mix1 {
    vec![(0.3, -1.5, 0.4), (0.7, 1.0, 0.8)]
}

#[test]
fn gaussian_entropy_examples() {
    for p in 1..=4 {
        let g = GaussianVec::centered(PsdMatrix::identity(p)).unwrap();
        let want = 0.5 * p as f64 * (2.0 * PI * E).ln();
        assert!((entropy_gaussian(&g).unwrap() - want).abs() < 1e-12);
    }
    let g = GaussianVec::centered(PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap()).unwrap();
    assert!(entropy_gaussian(&g).is_err());
}

#[test]
fn mixture_entropy_matches_quadrature() {
    let m = bimodal();
    let (est, backend) = entropy(&mix1(&m), &McConfig::new(400_000, 7).unwrap()).unwrap();
    assert_eq!(backend, Backend::Mc);
    let oracle = entropy_1d(&m);
    assert!((est.value - oracle).abs() <= 5.0 * est.stderr, "{} vs {oracle} (se {})", est.value, est.stderr);
}

#[test]
fn mixture_fisher_matches_quadrature() {
    for m in [bimodal(), plus_noise(&bimodal(), 0.5), vec![(0.5, -2.0, 0.3), (0.5, 2.0, 0.3)]] {
        let (j, backend) = fisher(&mix1(&m), &McConfig::new(400_000, 3).unwrap()).unwrap();
        assert_eq!(backend, Backend::Mc);
        let oracle = fisher_1d(&m);
        assert!((j.matrix[(0, 0)] - oracle).abs() <= 5.0 * j.stderr, "{} vs {oracle}", j.matrix[(0, 0)]);
        assert!(1.0 / oracle <= variance_1d(&m));
    }
}

#[test]
fn gaussian_fisher_is_inverse_covariance() {
    let k = pd_matrix(3, 0.2, 3.0, &mut rng(8));
    let (j, backend) = fisher(&GaussianMixture::centered_gaussian(k.clone()).unwrap(), &McConfig::new(10_000, 0).unwrap()).unwrap();
    assert_eq!(backend, Backend::ClosedForm);
    assert!((j.matrix * k.as_matrix() - Mat::identity(3, 3)).norm() < 1e-10);
}

#[test]
fn score_matches_finite_difference() {
    let m = mixture(3, 3, 1.5, &mut rng(21));
    let c = m.components();
    let logpdf = |x: &[f64]| -> f64 {
        let dens: f64 = m
            .weights()
            .iter()
            .zip(c)
            .map(|(w, g)| {
                let d = nalgebra::DVector::from_iterator(3, x.iter().zip(&g.mean).map(|(a, b)| a - b));
                let inv = g.cov.as_matrix().clone().try_inverse().unwrap();
                let q = (d.transpose() * inv * &d)[(0, 0)];
                w * (-0.5 * q).exp() / ((2.0 * PI).powi(3) * g.cov.as_matrix().determinant()).sqrt()
            })
            .sum();
        dens.ln()
    };
    let x = [0.3, -0.7, 1.1];
    let s = score(&m, &x).unwrap();
    let h = 1e-5;
    for i in 0..3 {
        let (mut a, mut b) = (x, x);
        a[i] += h;
        b[i] -= h;
        let fd = (logpdf(&a) - logpdf(&b)) / (2.0 * h);
        assert!((s[i] - fd).abs() < 1e-6, "{i}: {} vs {fd}", s[i]);
    }
    assert!(score(&m, &[0.0]).is_err());
}

#[test]
fn mmse_matches_linear_regression() {
    let kx = pd_matrix(2, 0.5, 2.0, &mut rng(4));
    let kn = pd_matrix(2, 0.3, 1.5, &mut rng(5));
    let n = 1_000_000;
    let x = kx.sample_gaussian(n, 10);
    let y = &x + kn.sample_gaussian(n, 11);
    let cxy = x.transpose() * &y / n as f64;
    let cyy = y.transpose() * &y / n as f64;
    let cxx = x.transpose() * &x / n as f64;
    let resid = &cxx - &cxy * cyy.try_inverse().unwrap() * cxy.transpose();
    let closed = mmse_gaussian(&kx, &kn).unwrap();
    let rel = (resid - closed.as_matrix()).norm() / closed.as_matrix().norm();
    assert!(rel < 0.02, "relative gap {rel}");
}

#[test]
fn noise_and_blend_covariances() {
    let m = mixture(2, 2, 1.0, &mut rng(9));
    let n = pd_matrix(2, 0.1, 1.0, &mut rng(10));
    let noisy = m.with_noise(&n).unwrap();
    assert!((noisy.covariance() - m.covariance() - n.as_matrix()).norm() < 1e-12);
    let g = GaussianMixture::centered_gaussian(PsdMatrix::identity(2)).unwrap();
    let b = GaussianMixture::blend(&[(0.5, &g), (0.5, &g)]).unwrap();
    assert!((b.covariance() - Mat::identity(2, 2)).norm() < 1e-12);
}

fn markov_chain(p: usize, seed: u64) -> ConditionalMixture {
    let mut r = rng(seed);
    let per_v = [mixture(p, 2, 1.0, &mut r), mixture(p, 2, 1.0, &mut r)];
    let mut labels = Vec::new();
    for u in 0..2u32 {
        let pv = if u == 0 { 0.3 } else { 0.8 };
        for v in 0..2u32 {
            let prob = 0.5 * if v == 0 { pv } else { 1.0 - pv };
            labels.push(LabeledConditional { u, v, prob, mixture: per_v[v as usize].clone() });
        }
    }
    ConditionalMixture::new(labels).unwrap()
}

#[test]
fn gaussian_lemma_checks_pass_at_closed_tolerance() {
    let tol = Tolerances::default();
    let cfg = McConfig::new(10_000, 1).unwrap();
    for seed in 0..20 {
        let mut r = rng(seed);
        let p = 1 + (seed as usize % 3);
        let x = GaussianMixture::centered_gaussian(pd_matrix(p, 0.3, 2.0, &mut r)).unwrap();
        let y = GaussianMixture::centered_gaussian(pd_matrix(p, 0.3, 2.0, &mut r)).unwrap();
        let chain = increasing_chain(p, 2, &mut r);
        let (s1, s2) = (&chain[0], &chain[1]);
        let a = SymMatrix::from_matrix(pd_matrix(p, 0.1, 1.0, &mut r).as_matrix().clone()).unwrap();
        let b = SymMatrix::from_matrix(pd_matrix(p, 0.1, 1.0, &mut r).as_matrix().clone()).unwrap();
        let dir = SymMatrix::from_matrix(pd_matrix(p, 0.1, 1.0, &mut r).as_matrix().clone()).unwrap();
        let mut reports = vec![
            check_de_bruijn(&x, s1, &dir, &cfg, &tol).unwrap(),
            check_fii(&a, &b, &x, &y, &cfg, &tol).unwrap(),
            check_cramer_rao(&x, &cfg, &tol).unwrap(),
            check_complementary(&x, s1, &cfg, &tol).unwrap(),
            check_mmse_monotone(&x.components()[0].cov, s1, s2, &tol).unwrap(),
        ];
        reports.extend(check_complementary_two_noise(&x, s1, s2, &cfg, &tol).unwrap());
        for r in reports {
            assert_eq!(r.backend, Backend::ClosedForm, "{}", r.lemma);
            assert!(r.pass, "seed {seed} {}: {:e} > {:e}", r.lemma, r.residual, r.tolerance);
        }
    }
}

#[test]
fn mixture_lemma_checks_pass() {
    let tol = Tolerances::default();
    for seed in 0..3 {
        let cfg = McConfig::new(200_000, seed).unwrap();
        let mut r = rng(100 + seed);
        let p = 2;
        let x = mixture(p, 2, 1.0, &mut r);
        let y = mixture(p, 2, 1.0, &mut r);
        let chain = increasing_chain(p, 2, &mut r);
        let (s1, s2) = (&chain[0], &chain[1]);
        let a = SymMatrix::identity(p);
        let b = SymMatrix::from_matrix(Mat::identity(p, p) * 0.5).unwrap();
        let dir = SymMatrix::identity(p);
        let mut reports = vec![
            check_de_bruijn(&x, s1, &dir, &cfg, &tol).unwrap(),
            check_fii(&a, &b, &x, &y, &cfg, &tol).unwrap(),
            check_cramer_rao(&x, &cfg, &tol).unwrap(),
            check_dpi_fisher(&markov_chain(p, seed), &cfg, &tol).unwrap(),
            check_complementary(&x, s1, &cfg, &tol).unwrap(),
        ];
        reports.extend(check_complementary_two_noise(&x, s1, s2, &cfg, &tol).unwrap());
        for r in reports {
            assert_eq!(r.backend, Backend::Mc, "{}", r.lemma);
            assert!(r.pass, "seed {seed} {}: {:e} > {:e}", r.lemma, r.residual, r.tolerance);
        }
    }
}

#[test]
fn markov_violation_is_rejected() {
    let mut r = rng(2);
    let labels = (0..4u32)
        .map(|i| LabeledConditional { u: i / 2, v: i % 2, prob: 0.25, mixture: mixture(1, 2, 1.0, &mut r) })
        .collect();
    let chain = ConditionalMixture::new(labels).unwrap();
    assert!(chain.check_markov().is_err());
    let cfg = McConfig::new(10_000, 0).unwrap();
    assert!(check_dpi_fisher(&chain, &cfg, &Tolerances::default()).is_err());
}

#[test]
fn unordered_noise_is_rejected() {
    let k = PsdMatrix::identity(2);
    let s1 = PsdMatrix::from_diagonal(&[1.0, 0.5]).unwrap();
    let s2 = PsdMatrix::from_diagonal(&[0.5, 1.0]).unwrap();
    assert!(check_mmse_monotone(&k, &s1, &s2, &Tolerances::default()).is_err());
}

#[test]
fn estimates_are_deterministic() {
    let m = mixture(2, 3, 1.0, &mut rng(1));
    let cfg = McConfig::new(50_000, 99).unwrap();
    assert_eq!(entropy(&m, &cfg).unwrap(), entropy(&m, &cfg).unwrap());
    assert_eq!(fisher(&m, &cfg).unwrap().0.matrix, fisher(&m, &cfg).unwrap().0.matrix);
    assert!(McConfig::new(9_999, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gaussian_entropy_scales_with_logdet(seed in any::<u64>(), c in 0.1..10.0f64) {
        let k = pd_matrix(3, 0.1, 5.0, &mut rng(seed));
        let a = entropy_gaussian(&GaussianVec::centered(k.clone()).unwrap()).unwrap();
        let b = entropy_gaussian(&GaussianVec::centered(k.scaled(c).unwrap()).unwrap()).unwrap();
        prop_assert!((b - a - 1.5 * c.ln()).abs() < 1e-10);
    }

    #[test]
    fn mmse_is_below_prior_and_noise(seed in any::<u64>()) {
        let mut r = rng(seed);
        let kx = pd_matrix(2, 0.1, 3.0, &mut r);
        let kn = pd_matrix(2, 0.1, 3.0, &mut r);
        let post = mmse_gaussian(&kx, &kn).unwrap();
        for bound in [&kx, &kn] {
            let gap = SymMatrix::from_matrix(bound.as_matrix() - post.as_matrix()).unwrap();
            prop_assert!(gap.min_eigenvalue() >= -1e-10);
        }
    }

    #[test]
    fn gaussian_cramer_rao_is_tight(seed in any::<u64>()) {
        let x = GaussianMixture::centered_gaussian(pd_matrix(3, 0.1, 3.0, &mut rng(seed))).unwrap();
        let r = check_cramer_rao(&x, &McConfig::new(10_000, 0).unwrap(), &Tolerances::default()).unwrap();
        prop_assert!(r.pass && r.residual < 1e-9);
    }
}
