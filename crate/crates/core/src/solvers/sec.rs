use serde::{Deserialize, Serialize};

use super::{
    active_basis, ascend, comp, multiple_optima, recover_multipliers, ActiveConstraint, KktReport, Program,
    SolverOptions, ACTIVE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{frob, min_eig, psd_part, spd_inverse, spd_logdet, Mat, PsdMatrix};

const LN_2PIE: f64 = 2.837_877_066_409_345_5;

/// Secure source coding with side information: `min μR − R_e` at distortion `D`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecProblem {
    pub k: PsdMatrix,
    pub ky: PsdMatrix,
    pub kz: PsdMatrix,
    pub d: PsdMatrix,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecSolution {
    pub problem: SecProblem,
    pub b1: PsdMatrix,
    pub b2: PsdMatrix,
    pub m1: PsdMatrix,
    pub m2: PsdMatrix,
    pub m3: PsdMatrix,
    pub value: f64,
    pub rate: f64,
    pub equivocation: f64,
    pub kkt: KktReport,
    pub converged: bool,
    pub iterations: usize,
    pub multiple_optima: bool,
}

/// Precision matrices `P₀ = K⁻¹+K_Y⁻¹`, `P₁ = P₀+B₁+B₂`, `P₂ = P₀+B₂`, `P₃ = K⁻¹+K_Z⁻¹+B₂`.
struct Precisions {
    p0: Mat,
    p1: Mat,
    p2: Mat,
    p3: Mat,
}

impl SecProblem {
    pub fn validate(&self) -> Result<()> {
        let p = self.k.dim();
        for m in [&self.ky, &self.kz, &self.d] {
            if m.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
            }
        }
        for m in [&self.k, &self.ky, &self.kz, &self.d] {
            if !m.is_positive_definite() {
                return Err(Error::SingularMatrix { min_eig: m.min_eigenvalue() });
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidInput(format!("mu must be nonnegative, got {}", self.mu)));
        }
        Ok(())
    }

    /// `D⁻¹ − K⁻¹ − K_Y⁻¹`, the lower bound on `B₁ + B₂`.
    pub fn threshold(&self) -> Result<Mat> {
        Ok(spd_inverse(self.d.as_matrix())? - spd_inverse(self.k.as_matrix())? - spd_inverse(self.ky.as_matrix())?)
    }

    fn precisions(&self, b1: &Mat, b2: &Mat) -> Result<Precisions> {
        let ki = spd_inverse(self.k.as_matrix())?;
        let p0 = &ki + spd_inverse(self.ky.as_matrix())?;
        Ok(Precisions {
            p1: &p0 + b1 + b2,
            p2: &p0 + b2,
            p3: ki + spd_inverse(self.kz.as_matrix())? + b2,
            p0,
        })
    }

    /// `(R, R_e)` implied by `(B₁, B₂)`.
    pub fn rates(&self, b1: &Mat, b2: &Mat) -> Result<(f64, f64)> {
        let pr = self.precisions(b1, b2)?;
        let l1 = spd_logdet(&pr.p1)?;
        let n = self.k.dim() as f64;
        let rate = 0.5 * (l1 - spd_logdet(&pr.p0)?);
        let equiv = -0.5 * (l1 - n * LN_2PIE) + 0.5 * spd_logdet(&pr.p2)? - 0.5 * spd_logdet(&pr.p3)?;
        Ok((rate, equiv))
    }

    /// `μR − R_e`, the objective to minimize.
    pub fn objective(&self, b1: &Mat, b2: &Mat) -> Result<f64> {
        let (r, re) = self.rates(b1, b2)?;
        Ok(self.mu * r - re)
    }
}

struct Negated<'a> {
    p: &'a SecProblem,
    t: Mat,
}

impl Program for Negated<'_> {
    fn value(&self, x: &[Mat]) -> Option<f64> {
        self.p.objective(&x[0], &x[1]).ok().map(|v| -v)
    }

    fn gradient(&self, x: &[Mat]) -> Vec<Mat> {
        let Ok(pr) = self.p.precisions(&x[0], &x[1]) else {
            return x.iter().map(|m| m * 0.0).collect();
        };
        let inv = |m: &Mat| spd_inverse(m).unwrap_or_else(|_| m * 0.0);
        let g1 = inv(&pr.p1) * (-0.5 * (self.p.mu + 1.0));
        let g2 = &g1 + inv(&pr.p2) * 0.5 - inv(&pr.p3) * 0.5;
        vec![g1, g2]
    }

    fn sets(&self) -> usize {
        3
    }

    fn project_onto(&self, set: usize, x: &[Mat]) -> Vec<Mat> {
        match set {
            0 => vec![psd_part(&x[0]), x[1].clone()],
            1 => vec![x[0].clone(), psd_part(&x[1])],
            _ => {
                let deficit = psd_part(&(&self.t - &x[0] - &x[1])) * 0.5;
                vec![&x[0] + &deficit, &x[1] + deficit]
            }
        }
    }

    fn restore(&self, x: Vec<Mat>) -> Vec<Mat> {
        let b1 = psd_part(&x[0]);
        let b2 = psd_part(&x[1]);
        let deficit = psd_part(&(&self.t - &b1 - &b2));
        vec![b1, b2 + deficit]
    }
}

fn psd(m: &Mat) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(psd_part(m))
}

pub fn solve_sec(problem: &SecProblem, opts: &SolverOptions) -> Result<SecSolution> {
    solve_sec_from(problem, None, opts)
}

/// `solve_sec` with a caller-supplied first start `(B₁, B₂)`.
pub fn solve_sec_from(problem: &SecProblem, init: Option<(&Mat, &Mat)>, opts: &SolverOptions) -> Result<SecSolution> {
    problem.validate()?;
    let t = problem.threshold()?;
    let prog = Negated { p: problem, t: t.clone() };
    let n = t.nrows();
    let base = psd_part(&t);
    let scale = spd_inverse(problem.k.as_matrix())?.trace() / n as f64;
    let eye = Mat::identity(n, n) * (0.5 * scale);
    let first = match init {
        Some((a, b)) => vec![a.clone(), b.clone()],
        None => vec![base.clone(), Mat::zeros(n, n)],
    };
    let starts = [first, vec![&base * 0.5 + &eye, &base * 0.5 + &eye]];
    let mut cands = Vec::new();
    let mut iterations = 0;
    let mut converged = true;
    for x0 in starts {
        let a = ascend(&prog, &x0, opts);
        iterations += a.iterations;
        converged &= a.converged;
        let g = prog.gradient(&a.x);
        let (b1, b2) = (&a.x[0], &a.x[1]);
        let rec = recover_multipliers(
            &g,
            &[],
            &[
                ActiveConstraint { basis: active_basis(b1, ACTIVE_TOL), coef: vec![1.0, 0.0] },
                ActiveConstraint { basis: active_basis(b2, ACTIVE_TOL), coef: vec![0.0, 1.0] },
                ActiveConstraint { basis: active_basis(&(b1 + b2 - &t), ACTIVE_TOL), coef: vec![1.0, 1.0] },
            ],
        );
        let m: Vec<Mat> = rec.multipliers.iter().map(|m| m * 2.0).collect();
        let kkt = sec_report(b1, b2, [&m[0], &m[1], &m[2]], problem, opts.kkt_tol)?;
        cands.push((a.x, m, kkt, -a.value));
    }
    let multiple = cands.iter().all(|c| c.2.pass) && multiple_optima(&cands[0].0, &cands[1].0, cands[0].3, cands[1].3);
    let (x, m, kkt, _) = cands
        .into_iter()
        .max_by(|a, b| (a.2.pass, -a.3).partial_cmp(&(b.2.pass, -b.3)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let (rate, equivocation) = problem.rates(&x[0], &x[1])?;
    Ok(SecSolution {
        problem: problem.clone(),
        value: problem.objective(&x[0], &x[1])?,
        b1: psd(&x[0])?,
        b2: psd(&x[1])?,
        m1: psd(&m[0])?,
        m2: psd(&m[1])?,
        m3: psd(&m[2])?,
        rate,
        equivocation,
        kkt,
        converged,
        iterations,
        multiple_optima: multiple,
    })
}

fn sec_report(b1: &Mat, b2: &Mat, m: [&Mat; 3], p: &SecProblem, tol: f64) -> Result<KktReport> {
    let pr = p.precisions(b1, b2)?;
    let eq1 = spd_inverse(&pr.p1)? * (p.mu + 1.0) - m[0] - m[2];
    let eq2 = spd_inverse(&pr.p2)? + m[1] - spd_inverse(&pr.p3)? - m[0];
    let slack = b1 + b2 - p.threshold()?;
    Ok(KktReport::new(
        vec![frob(&eq1), frob(&eq2)],
        vec![comp(b1, m[0]), comp(b2, m[1]), comp(&slack, m[2])],
        m.iter().map(|x| min_eig(x)).fold(f64::INFINITY, f64::min),
        min_eig(b1).min(min_eig(b2)).min(min_eig(&slack)),
        tol,
    ))
}

/// Residuals of the two stationarity equations and three complementarity products.
pub fn kkt_check_sec(b1: &PsdMatrix, b2: &PsdMatrix, m: [&PsdMatrix; 3], problem: &SecProblem, tol: f64) -> Result<KktReport> {
    let p = problem.k.dim();
    for x in [b1, b2, m[0], m[1], m[2]] {
        if x.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: x.dim() });
        }
    }
    sec_report(b1.as_matrix(), b2.as_matrix(), [m[0].as_matrix(), m[1].as_matrix(), m[2].as_matrix()], problem, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(k: f64, ky: f64, kz: f64, d: f64, mu: f64) -> SecProblem {
        let m = |v| PsdMatrix::from_diagonal(&[v]).unwrap();
        SecProblem { k: m(k), ky: m(ky), kz: m(kz), d: m(d), mu }
    }

    #[test]
    fn scalar_solution_passes_kkt() {
        let sol = solve_sec(&scalar(1.0, 1.0, 4.0, 0.4, 1.0), &SolverOptions::default()).unwrap();
        assert!(sol.kkt.pass, "{sol:?}");
        assert!((sol.value - (sol.problem.mu * sol.rate - sol.equivocation)).abs() < 1e-12);
    }

    #[test]
    fn constant_offset_matches_entropy_form() {
        let p = scalar(2.0, 1.0, 3.0, 0.5, 0.7);
        let (b1, b2) = (Mat::from_element(1, 1, 0.3), Mat::from_element(1, 1, 0.8));
        let pr = p.precisions(&b1, &b2).unwrap();
        let h = |m: &Mat| 0.5 * (spd_logdet(m).unwrap() - LN_2PIE);
        let direct = (p.mu + 1.0) * h(&pr.p1) - h(&pr.p2) + h(&pr.p3) - p.mu * h(&pr.p0);
        assert!((p.objective(&b1, &b2).unwrap() - direct).abs() < 1e-13);
    }
}
