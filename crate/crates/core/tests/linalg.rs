use extremal_core::linalg::{project_psd, psd_order, Mat, PsdMatrix, PsdOrder, SymMatrix};
use extremal_core::random::{pd_matrix, rng};
use extremal_core::Error;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn diag(d: &[f64]) -> SymMatrix {
    SymMatrix::from_diagonal(d).unwrap()
}

#[test]
fn logdet_examples() {
    assert_eq!(PsdMatrix::identity(3).logdet().unwrap(), 0.0);
    let d = PsdMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
    assert!((d.logdet().unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
    let a = pd_matrix(4, 0.2, 5.0, &mut rng(11));
    let eig = SymmetricEigen::new(a.as_matrix().clone()).eigenvalues;
    let oracle: f64 = eig.iter().map(|v| v.ln()).sum();
    assert!((a.logdet().unwrap() - oracle).abs() < 1e-10);
}

#[test]
fn logdet_rejects_singular() {
    let s = PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
    assert!(matches!(s.logdet(), Err(Error::SingularMatrix { .. })));
    assert!(matches!(s.inverse(), Err(Error::SingularMatrix { .. })));
}

#[test]
fn order_examples() {
    let i = SymMatrix::identity(2);
    let two = diag(&[2.0, 2.0]);
    assert_eq!(psd_order(&i, &two, 1e-9).unwrap(), PsdOrder::Leq);
    assert_eq!(psd_order(&diag(&[1.0, 3.0]), &diag(&[2.0, 2.0]), 1e-9).unwrap(), PsdOrder::Incomparable);
    let a = pd_matrix(3, 0.1, 2.0, &mut rng(3));
    let o = psd_order(a.as_sym(), a.as_sym(), 1e-9).unwrap();
    assert!(o.is_leq() && o.is_geq());
    assert!(matches!(psd_order(&i, &SymMatrix::identity(3), 1e-9), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn projection_examples() {
    assert_eq!(project_psd(&diag(&[1.0, -1.0])).as_matrix(), diag(&[1.0, 0.0]).as_matrix());
    assert_eq!(project_psd(&diag(&[-2.0, -3.0])).as_matrix(), &Mat::zeros(2, 2));
    let a = pd_matrix(3, 0.0, 2.0, &mut rng(5));
    assert!((project_psd(a.as_sym()).as_matrix() - a.as_matrix()).norm() < 1e-10);
}

#[test]
fn inverse_and_root() {
    let two = PsdMatrix::from_diagonal(&[2.0, 2.0, 2.0]).unwrap();
    assert!((two.inverse().unwrap().as_matrix() - Mat::identity(3, 3) * 0.5).norm() < 1e-15);
    let d = PsdMatrix::from_diagonal(&[4.0, 9.0]).unwrap();
    let f = d.sqrt_factor();
    assert!((f.as_matrix() * f.as_matrix().transpose() - d.as_matrix()).norm() < 1e-9);
    let singular = PsdMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
    let f = singular.sqrt_factor();
    assert!((f.as_matrix() * f.as_matrix().transpose() - singular.as_matrix()).norm() < 1e-9);
}

#[test]
fn sample_covariance_million_draws() {
    let cov = PsdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    let n = 1_000_000;
    let x = cov.sample_gaussian(n, 2024);
    let emp = x.transpose() * &x / n as f64;
    // 3σ of a sample variance is 3·√(2/n)·σ² ≈ 0.4 % of σ², well inside 2 %.
    for i in 0..2 {
        assert!((emp[(i, i)] / cov.as_matrix()[(i, i)] - 1.0).abs() < 0.02);
    }
    assert!(emp[(0, 1)].abs() < 0.02);
}

#[test]
fn json_shape() {
    let m = PsdMatrix::from_rows(&[vec![2.0, 0.1], vec![0.1, 1.0]]).unwrap();
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(text, r#"{"dim":2,"rows":[[2.0,0.1],[0.1,1.0]]}"#);
    let bad: Result<PsdMatrix, _> = serde_json::from_str(r#"{"dim":2,"rows":[[1.0,0.0],[0.0,-1.0]]}"#);
    assert!(bad.is_err());
}

fn arb_pd(p: usize) -> impl Strategy<Value = PsdMatrix> {
    any::<u64>().prop_map(move |s| pd_matrix(p, 0.05, 10.0, &mut rng(s)))
}

fn arb_sym(p: usize) -> impl Strategy<Value = SymMatrix> {
    proptest::collection::vec(-5.0..5.0f64, p * p).prop_map(move |v| SymMatrix::from_matrix(Mat::from_vec(p, p, v)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn logdet_of_inverse_negates(p in 1usize..=4, m in any::<u64>()) {
        let a = pd_matrix(p, 0.05, 10.0, &mut rng(m));
        let inv = a.inverse().unwrap();
        prop_assert!((inv.logdet().unwrap() + a.logdet().unwrap()).abs() < 1e-9);
        prop_assert!((inv.as_matrix() * a.as_matrix() - Mat::identity(p, p)).norm() < 1e-9);
    }

    #[test]
    fn projection_is_idempotent(s in arb_sym(3)) {
        let once = project_psd(&s);
        let twice = project_psd(once.as_sym());
        prop_assert!((once.as_matrix() - twice.as_matrix()).norm() < 1e-10);
        prop_assert!(once.min_eigenvalue() >= -1e-10);
        let residual = s.as_matrix() - once.as_matrix();
        prop_assert!(SymmetricEigen::new(residual).eigenvalues.iter().all(|v| *v <= 1e-10));
    }

    #[test]
    fn order_is_transitive(a in arb_pd(3), d1 in arb_pd(3), d2 in arb_pd(3)) {
        let b = SymMatrix::from_matrix(a.as_matrix() + d1.as_matrix()).unwrap();
        let c = SymMatrix::from_matrix(b.as_matrix() + d2.as_matrix()).unwrap();
        prop_assert!(psd_order(a.as_sym(), &b, 1e-9).unwrap().is_leq());
        prop_assert!(psd_order(&b, &c, 1e-9).unwrap().is_leq());
        prop_assert!(psd_order(a.as_sym(), &c, 1e-9).unwrap().is_leq());
    }

    #[test]
    fn sampling_is_reproducible(a in arb_pd(2), seed in any::<u64>()) {
        prop_assert_eq!(a.sample_gaussian(5000, seed), a.sample_gaussian(5000, seed));
    }

    #[test]
    fn construction_is_symmetric(s in arb_sym(4)) {
        let m = s.as_matrix();
        prop_assert!((m - m.transpose()).abs().max() <= 1e-12);
    }
}
