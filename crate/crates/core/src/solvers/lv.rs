use serde::{Deserialize, Serialize};

use super::{
    active_basis, ascend, comp, multiple_optima, recover_multipliers, ActiveConstraint, KktReport, Program,
    SolverOptions, ACTIVE_TOL,
};
use crate::error::{Error, Result};
use crate::info::{Backend, GaussianMixture};
use crate::linalg::{eigen, frob, gaussian_entropy, is_leq, min_eig, psd_part, spd_inverse, spd_logdet, sym, Mat, PsdMatrix};
use crate::mc::McConfig;
use crate::path::PathValue;

/// `max ½log|B+K₁| − (μ/2)log|B+K₂|` over `0 ⪯ B ⪯ S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvProblem {
    pub k1: PsdMatrix,
    pub k2: PsdMatrix,
    pub s: PsdMatrix,
    pub mu: f64,
}

impl LvProblem {
    pub fn validate(&self) -> Result<()> {
        let p = self.k1.dim();
        for m in [&self.k2, &self.s] {
            if m.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
            }
        }
        for m in [&self.k1, &self.k2] {
            if !m.is_positive_definite() {
                return Err(Error::SingularMatrix { min_eig: m.min_eigenvalue() });
            }
        }
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mu must be at least 1, got {}", self.mu)));
        }
        Ok(())
    }

    pub fn objective(&self, b: &Mat) -> Result<f64> {
        Ok(0.5 * spd_logdet(&(b + self.k1.as_matrix()))? - 0.5 * self.mu * spd_logdet(&(b + self.k2.as_matrix()))?)
    }

    fn program(&self) -> WeightedLogDet {
        WeightedLogDet {
            terms: vec![(1.0, self.k1.as_matrix().clone()), (-self.mu, self.k2.as_matrix().clone())],
            s: self.s.as_matrix().clone(),
        }
    }
}

/// `B*` with multipliers in the inequality scaling `(B*+K₁)⁻¹ + M₁ = μ(B*+K₂)⁻¹ + M₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvCertificate {
    pub problem: LvProblem,
    pub b_star: PsdMatrix,
    pub m1: PsdMatrix,
    pub m2: PsdMatrix,
    pub value: f64,
    pub kkt: KktReport,
    pub converged: bool,
    pub iterations: usize,
    pub multiple_optima: bool,
}

/// `Σ_i w_i · ½log|B+K_i|` over `0 ⪯ B ⪯ S`.
pub(crate) struct WeightedLogDet {
    terms: Vec<(f64, Mat)>,
    s: Mat,
}

impl Program for WeightedLogDet {
    fn value(&self, x: &[Mat]) -> Option<f64> {
        let mut v = 0.0;
        for (w, k) in &self.terms {
            v += 0.5 * w * spd_logdet(&(&x[0] + k)).ok()?;
        }
        Some(v)
    }

    fn gradient(&self, x: &[Mat]) -> Vec<Mat> {
        let p = x[0].nrows();
        let mut g = Mat::zeros(p, p);
        for (w, k) in &self.terms {
            if let Ok(inv) = spd_inverse(&(&x[0] + k)) {
                g += inv * (0.5 * w);
            }
        }
        vec![g]
    }

    fn sets(&self) -> usize {
        2
    }

    fn project_onto(&self, set: usize, x: &[Mat]) -> Vec<Mat> {
        match set {
            0 => vec![psd_part(&x[0])],
            _ => vec![&self.s - psd_part(&(&self.s - &x[0]))],
        }
    }

    fn restore(&self, x: Vec<Mat>) -> Vec<Mat> {
        vec![clip_box(&x[0], &self.s)]
    }
}

/// `S^{1/2} clip(S^{+1/2} B S^{+1/2}, 0, 1) S^{1/2}`, exactly inside `0 ⪯ B ⪯ S`.
pub(crate) fn clip_box(b: &Mat, s: &Mat) -> Mat {
    let e = eigen(&sym(s));
    let cut = 1e-14 * e.eigenvalues.amax().max(1.0);
    let root = |f: fn(f64) -> f64| {
        let d = Mat::from_diagonal(&e.eigenvalues.map(|v| if v > cut { f(v) } else { 0.0 }));
        &e.eigenvectors * d * e.eigenvectors.transpose()
    };
    let (half, inv_half) = (root(f64::sqrt), root(|v| 1.0 / v.sqrt()));
    let c = eigen(&sym(&(&inv_half * b * &inv_half)));
    let d = Mat::from_diagonal(&c.eigenvalues.map(|v| v.clamp(0.0, 1.0)));
    sym(&(&half * (&c.eigenvectors * d * c.eigenvectors.transpose()) * &half))
}

struct BoxSolve {
    b: Mat,
    m1: Mat,
    m2: Mat,
    value: f64,
    converged: bool,
    iterations: usize,
}

/// Runs both starts, recovers Lagrange multipliers of `B ⪰ 0` and `B ⪯ S`, and
/// returns them doubled to the inequality scaling.
fn solve_box(
    prog: &WeightedLogDet,
    init: Option<&Mat>,
    opts: &SolverOptions,
    check: impl Fn(&Mat, &Mat, &Mat) -> KktReport,
) -> (BoxSolve, bool) {
    let s = &prog.s;
    let starts = [init.cloned().unwrap_or_else(|| s * 0.5), s * 0.1];
    let runs: Vec<(BoxSolve, KktReport)> = starts
        .iter()
        .map(|x0| {
            let a = ascend(prog, std::slice::from_ref(x0), opts);
            let b = a.x[0].clone();
            let g = prog.gradient(&a.x);
            let r = recover_multipliers(
                &g,
                &[],
                &[
                    ActiveConstraint { basis: active_basis(&b, ACTIVE_TOL), coef: vec![1.0] },
                    ActiveConstraint { basis: active_basis(&(s - &b), ACTIVE_TOL), coef: vec![-1.0] },
                ],
            );
            let m1 = &r.multipliers[0] * 2.0;
            let m2 = &r.multipliers[1] * 2.0;
            let report = check(&b, &m1, &m2);
            (BoxSolve { b, m1, m2, value: a.value, converged: a.converged, iterations: a.iterations }, report)
        })
        .collect();
    let both_pass = runs[0].1.pass && runs[1].1.pass;
    let multiple = both_pass
        && multiple_optima(
            std::slice::from_ref(&runs[0].0.b),
            std::slice::from_ref(&runs[1].0.b),
            runs[0].0.value,
            runs[1].0.value,
        );
    let best = runs
        .into_iter()
        .max_by(|a, b| (a.1.pass, a.0.value).partial_cmp(&(b.1.pass, b.0.value)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    (best.0, multiple)
}

fn psd(m: &Mat) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(psd_part(m))
}

pub fn solve_lv(problem: &LvProblem, opts: &SolverOptions) -> Result<LvCertificate> {
    solve_lv_from(problem, None, opts)
}

/// `solve_lv` with a caller-supplied first start.
pub fn solve_lv_from(problem: &LvProblem, init: Option<&Mat>, opts: &SolverOptions) -> Result<LvCertificate> {
    problem.validate()?;
    let prog = problem.program();
    let check = |b: &Mat, m1: &Mat, m2: &Mat| lv_report(b, m1, m2, problem, opts.kkt_tol);
    let (sol, multiple) = solve_box(&prog, init, opts, check);
    let b_star = psd(&sol.b)?;
    let (m1, m2) = (psd(&sol.m1)?, psd(&sol.m2)?);
    let kkt = kkt_check_lv(&b_star, &m1, &m2, problem, opts.kkt_tol)?;
    Ok(LvCertificate {
        problem: problem.clone(),
        value: problem.objective(b_star.as_matrix())?,
        b_star,
        m1,
        m2,
        kkt,
        converged: sol.converged,
        iterations: sol.iterations,
        multiple_optima: multiple,
    })
}

fn lv_report(b: &Mat, m1: &Mat, m2: &Mat, problem: &LvProblem, tol: f64) -> KktReport {
    let s = problem.s.as_matrix();
    let inv = |k: &PsdMatrix| spd_inverse(&(b + k.as_matrix())).unwrap_or_else(|_| Mat::from_element(b.nrows(), b.nrows(), f64::NAN));
    let st = inv(&problem.k1) + m1 - inv(&problem.k2) * problem.mu - m2;
    KktReport::new(
        vec![nan_inf(frob(&st))],
        vec![comp(b, m1), comp(&(s - b), m2)],
        min_eig(m1).min(min_eig(m2)),
        min_eig(b).min(min_eig(&(s - b))),
        tol,
    )
}

fn nan_inf(x: f64) -> f64 {
    if x.is_nan() {
        f64::INFINITY
    } else {
        x
    }
}

fn check_dim(p: usize, mats: &[&PsdMatrix]) -> Result<()> {
    for m in mats {
        if m.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
        }
    }
    Ok(())
}

/// Residuals of `(B+K₁)⁻¹ + M₁ = μ(B+K₂)⁻¹ + M₂`, `BM₁ = 0`, `(S−B)M₂ = 0`.
pub fn kkt_check_lv(b: &PsdMatrix, m1: &PsdMatrix, m2: &PsdMatrix, problem: &LvProblem, tol: f64) -> Result<KktReport> {
    check_dim(problem.k1.dim(), &[b, m1, m2, &problem.k2, &problem.s])?;
    Ok(lv_report(b.as_matrix(), m1.as_matrix(), m2.as_matrix(), problem, tol))
}

/// `RHS − (h(X+Z₁) − μ h(X+Z₂))` for a certified problem; nonnegative whenever the inequality holds.
pub fn extremal_gap(cert: &LvCertificate, x: &GaussianMixture, cfg: &McConfig) -> Result<PathValue> {
    let p = &cert.problem;
    if x.dim() != p.s.dim() {
        return Err(Error::DimensionMismatch { expected: p.s.dim(), found: x.dim() });
    }
    let cov = x.covariance();
    if !is_leq(&cov, p.s.as_matrix(), 1e-9) {
        return Err(Error::CovarianceViolation { margin: min_eig(&(p.s.as_matrix() - &cov)) });
    }
    let b = cert.b_star.as_matrix();
    let (k1, k2) = (p.k1.as_matrix(), p.k2.as_matrix());
    let rhs = gaussian_entropy(&(b + k1))? - p.mu * gaussian_entropy(&(b + k2))?;
    let h = |k: &Mat, tag: u64| -> Result<(f64, f64, Backend)> {
        match x.single_cov() {
            Some(c) => Ok((gaussian_entropy(&(c + k))?, 0.0, Backend::ClosedForm)),
            None => {
                let e = crate::info::entropy_compiled(&x.compile_with_noise(k)?, &cfg.child(&[tag]));
                Ok((e.value, e.stderr, Backend::Mc))
            }
        }
    };
    let (h1, s1, b1) = h(k1, 1)?;
    let (h2, s2, _) = h(k2, 2)?;
    Ok(PathValue { value: rhs - (h1 - p.mu * h2), stderr: s1.hypot(p.mu * s2), backend: b1 })
}

/// `max Σμ_i·½log|B+K_i| − ½log|B+K₀|` over `0 ⪯ B ⪯ S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostaProblem {
    /// `K₀, K₁, …, K_L`.
    pub k: Vec<PsdMatrix>,
    /// `μ₁, …, μ_L`.
    pub mu: Vec<f64>,
    pub s: PsdMatrix,
}

/// Weights and ordering required of a Costa-type instance.
pub fn validate_costa_weights(k: &[PsdMatrix], mu: &[f64]) -> Result<()> {
    if mu.is_empty() || k.len() != mu.len() + 1 {
        return Err(Error::InvalidInput(format!("need L weights and L+1 noise covariances, got {} and {}", mu.len(), k.len())));
    }
    let p = k[0].dim();
    check_dim(p, &k.iter().collect::<Vec<_>>())?;
    for m in k {
        if !m.is_positive_definite() {
            return Err(Error::SingularMatrix { min_eig: m.min_eigenvalue() });
        }
    }
    if mu.iter().any(|m| !m.is_finite() || *m < 0.0) || (mu.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("weights must be nonnegative and sum to 1".into()));
    }
    for w in k[1..].windows(2) {
        if !is_leq(w[0].as_matrix(), w[1].as_matrix(), 1e-10) {
            return Err(Error::InvalidInput("noise covariances K_1..K_L must be increasing".into()));
        }
    }
    Ok(())
}

impl CostaProblem {
    pub fn validate(&self) -> Result<()> {
        validate_costa_weights(&self.k, &self.mu)?;
        check_dim(self.k[0].dim(), &[&self.s])
    }

    pub fn objective(&self, b: &Mat) -> Result<f64> {
        let mut v = -0.5 * spd_logdet(&(b + self.k[0].as_matrix()))?;
        for (m, k) in self.mu.iter().zip(&self.k[1..]) {
            v += 0.5 * m * spd_logdet(&(b + k.as_matrix()))?;
        }
        Ok(v)
    }

    fn program(&self) -> WeightedLogDet {
        let mut terms: Vec<(f64, Mat)> = self.mu.iter().zip(&self.k[1..]).map(|(m, k)| (*m, k.as_matrix().clone())).collect();
        terms.push((-1.0, self.k[0].as_matrix().clone()));
        WeightedLogDet { terms, s: self.s.as_matrix().clone() }
    }
}

/// `B*` with `Σμ_i(B*+K_i)⁻¹ + M₁ = (B*+K₀)⁻¹ + M₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostaCertificate {
    pub problem: CostaProblem,
    pub b_star: PsdMatrix,
    pub m1: PsdMatrix,
    pub m2: PsdMatrix,
    pub value: f64,
    pub kkt: KktReport,
    pub converged: bool,
    pub iterations: usize,
    pub multiple_optima: bool,
}

fn costa_report(b: &Mat, m1: &Mat, m2: &Mat, problem: &CostaProblem, tol: f64) -> KktReport {
    let p = b.nrows();
    let inv = |k: &PsdMatrix| spd_inverse(&(b + k.as_matrix())).unwrap_or_else(|_| Mat::from_element(p, p, f64::NAN));
    let mut st = m1 - inv(&problem.k[0]) - m2;
    for (m, k) in problem.mu.iter().zip(&problem.k[1..]) {
        st += inv(k) * *m;
    }
    let s = problem.s.as_matrix();
    KktReport::new(
        vec![nan_inf(frob(&st))],
        vec![comp(b, m1), comp(&(s - b), m2)],
        min_eig(m1).min(min_eig(m2)),
        min_eig(b).min(min_eig(&(s - b))),
        tol,
    )
}

pub fn kkt_check_costa(b: &PsdMatrix, m1: &PsdMatrix, m2: &PsdMatrix, problem: &CostaProblem, tol: f64) -> Result<KktReport> {
    problem.validate()?;
    check_dim(problem.s.dim(), &[b, m1, m2])?;
    Ok(costa_report(b.as_matrix(), m1.as_matrix(), m2.as_matrix(), problem, tol))
}

pub fn costa_certificate(problem: &CostaProblem, opts: &SolverOptions) -> Result<CostaCertificate> {
    problem.validate()?;
    let prog = problem.program();
    let check = |b: &Mat, m1: &Mat, m2: &Mat| costa_report(b, m1, m2, problem, opts.kkt_tol);
    let (sol, multiple) = solve_box(&prog, None, opts, check);
    let b_star = psd(&sol.b)?;
    let (m1, m2) = (psd(&sol.m1)?, psd(&sol.m2)?);
    let kkt = kkt_check_costa(&b_star, &m1, &m2, problem, opts.kkt_tol)?;
    Ok(CostaCertificate {
        problem: problem.clone(),
        value: problem.objective(b_star.as_matrix())?,
        b_star,
        m1,
        m2,
        kkt,
        converged: sol.converged,
        iterations: sol.iterations,
        multiple_optima: multiple,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(k1: f64, k2: f64, s: f64, mu: f64) -> LvProblem {
        let m = |v| PsdMatrix::from_diagonal(&[v]).unwrap();
        LvProblem { k1: m(k1), k2: m(k2), s: m(s), mu }
    }

    #[test]
    fn interior_and_boundary_scalar_optima() {
        let c = solve_lv(&scalar(1.0, 4.0, 3.0, 2.0), &SolverOptions::default()).unwrap();
        assert!((c.b_star.as_matrix()[(0, 0)] - 2.0).abs() < 1e-7, "{c:?}");
        assert!(c.kkt.pass);
        let c = solve_lv(&scalar(1.0, 2.0, 3.0, 2.0), &SolverOptions::default()).unwrap();
        assert!(c.b_star.as_matrix()[(0, 0)].abs() < 1e-7, "{c:?}");
        assert!(c.kkt.pass && c.m1.min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn flat_objective_converges() {
        let c = solve_lv(&scalar(2.0, 2.0, 3.0, 1.0), &SolverOptions::default()).unwrap();
        assert!(c.kkt.pass && c.converged);
        assert!(c.kkt.stationarity[0] < 1e-12);
    }

    #[test]
    fn zeroed_multipliers_expose_gradient() {
        let p = scalar(1.0, 4.0, 3.0, 2.0);
        let b = PsdMatrix::from_diagonal(&[1.0]).unwrap();
        let z = PsdMatrix::zeros(1);
        let r = kkt_check_lv(&b, &z, &z, &p, KKT_TOL_TEST).unwrap();
        assert!((r.stationarity[0] - (0.5 - 2.0 / 5.0_f64)).abs() < 1e-15);
        assert!(!r.pass);
    }

    const KKT_TOL_TEST: f64 = 1e-7;
}
