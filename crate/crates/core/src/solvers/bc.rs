use serde::{Deserialize, Serialize};

use super::{
    active_basis, clip_box, ascend, comp, multiple_optima, recover_multipliers, ActiveConstraint, KktReport, Program,
    SolverOptions, ACTIVE_TOL,
};
use crate::error::{Error, Result};
use crate::linalg::{frob, min_eig, psd_part, spd_inverse, spd_logdet, Mat, PsdMatrix};

/// Broadcast channel with a common message: weights `0 < μ₁ ≤ μ₂ < 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcProblem {
    pub k1: PsdMatrix,
    pub k2: PsdMatrix,
    pub s: PsdMatrix,
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcRates {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcSolution {
    pub problem: BcProblem,
    pub b1: PsdMatrix,
    pub b2: PsdMatrix,
    /// Weight on the second receiver's common-message branch.
    pub lambda: f64,
    pub m1: PsdMatrix,
    pub m2: PsdMatrix,
    pub m3: PsdMatrix,
    pub value: f64,
    pub rates: BcRates,
    pub kkt: KktReport,
    pub converged: bool,
    pub iterations: usize,
    pub lambda_at_boundary: bool,
    pub lambda_in_range: bool,
    pub multiple_optima: bool,
}

impl BcProblem {
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
        if self.mu2 >= 1.0 || self.mu1 >= 1.0 {
            return Err(Error::UnsupportedWeights(format!(
                "mu1 = {}, mu2 = {}: with a weight of at least 1 the optimum sets the common rate to zero; \
                 use the private-message region instead",
                self.mu1, self.mu2
            )));
        }
        if !(self.mu1 > 0.0 && self.mu1 <= self.mu2) {
            return Err(Error::UnsupportedWeights(format!("need 0 < mu1 <= mu2 < 1, got {} and {}", self.mu1, self.mu2)));
        }
        Ok(())
    }

    fn logdet(m: &Mat) -> Result<f64> {
        spd_logdet(m)
    }

    /// `T_i = ½log(|S+K_i| / |B₁+B₂+K_i|)` for `i = 1, 2`.
    pub fn branches(&self, b1: &Mat, b2: &Mat) -> Result<[f64; 2]> {
        let b = b1 + b2;
        let s = self.s.as_matrix();
        let t = |k: &Mat| -> Result<f64> { Ok(0.5 * (Self::logdet(&(s + k))? - Self::logdet(&(&b + k))?)) };
        Ok([t(self.k1.as_matrix())?, t(self.k2.as_matrix())?])
    }

    pub fn rates(&self, b1: &Mat, b2: &Mat) -> Result<BcRates> {
        let [t1, t2] = self.branches(b1, b2)?;
        let b = b1 + b2;
        let (k1, k2) = (self.k1.as_matrix(), self.k2.as_matrix());
        Ok(BcRates {
            r0: t1.min(t2),
            r1: 0.5 * (Self::logdet(&(b2 + k1))? - Self::logdet(k1)?),
            r2: 0.5 * (Self::logdet(&(&b + k2))? - Self::logdet(&(b2 + k2))?),
        })
    }

    pub fn objective(&self, b1: &Mat, b2: &Mat) -> Result<f64> {
        let r = self.rates(b1, b2)?;
        Ok(r.r0 + self.mu1 * r.r1 + self.mu2 * r.r2)
    }
}

/// The objective with the min replaced by `(1−λ)T₁ + λT₂`.
struct Weighted<'a> {
    p: &'a BcProblem,
    lambda: f64,
}

impl Weighted<'_> {
    fn parts(&self, x: &[Mat]) -> Result<(f64, [f64; 2])> {
        let [t1, t2] = self.p.branches(&x[0], &x[1])?;
        let r = self.p.rates(&x[0], &x[1])?;
        Ok(((1.0 - self.lambda) * t1 + self.lambda * t2 + self.p.mu1 * r.r1 + self.p.mu2 * r.r2, [t1, t2]))
    }

    /// `(G⁰, H)` with `∇F_λ = G⁰ + λH` on both blocks.
    fn gradient_parts(&self, x: &[Mat]) -> Result<([Mat; 2], Mat)> {
        let b = &x[0] + &x[1];
        let (k1, k2) = (self.p.k1.as_matrix(), self.p.k2.as_matrix());
        let (mu1, mu2) = (self.p.mu1, self.p.mu2);
        let i1 = spd_inverse(&(&b + k1))?;
        let i2 = spd_inverse(&(&b + k2))?;
        let common = &i2 * (0.5 * mu2) - &i1 * 0.5;
        let h = (&i1 - &i2) * 0.5;
        let private = spd_inverse(&(&x[1] + k1))? * (0.5 * mu1) - spd_inverse(&(&x[1] + k2))? * (0.5 * mu2);
        Ok(([common.clone(), common + private], h))
    }
}

impl Program for Weighted<'_> {
    fn value(&self, x: &[Mat]) -> Option<f64> {
        self.parts(x).ok().map(|v| v.0)
    }

    fn gradient(&self, x: &[Mat]) -> Vec<Mat> {
        match self.gradient_parts(x) {
            Ok(([g1, g2], h)) => vec![g1 + &h * self.lambda, g2 + h * self.lambda],
            Err(_) => x.iter().map(|m| m * 0.0).collect(),
        }
    }

    fn sets(&self) -> usize {
        3
    }

    fn project_onto(&self, set: usize, x: &[Mat]) -> Vec<Mat> {
        match set {
            0 => vec![psd_part(&x[0]), x[1].clone()],
            1 => vec![x[0].clone(), psd_part(&x[1])],
            _ => {
                let excess = psd_part(&(&x[0] + &x[1] - self.p.s.as_matrix())) * 0.5;
                vec![&x[0] - &excess, &x[1] - excess]
            }
        }
    }

    fn restore(&self, x: Vec<Mat>) -> Vec<Mat> {
        let s = self.p.s.as_matrix();
        let b2 = clip_box(&x[1], s);
        let b1 = clip_box(&psd_part(&x[0]), &(s - &b2));
        vec![b1, b2]
    }
}

struct Run {
    x: Vec<Mat>,
    lambda: f64,
    converged: bool,
    iterations: usize,
}

const BISECTION_STEPS: usize = 60;
const TIE_TOL: f64 = 1e-8;
const NEAR_TIE: f64 = 1e-5;

/// Minimizes the convex dual `φ(λ) = max_B F_λ(B)` by bisection on `φ'(λ) = T₂ − T₁`.
fn bisect(p: &BcProblem, x0: Vec<Mat>, opts: &SolverOptions) -> Result<Run> {
    let mut iterations = 0;
    let mut converged = true;
    let mut solve = |lambda: f64, x: &[Mat]| -> Result<(Vec<Mat>, f64)> {
        let a = ascend(&Weighted { p, lambda }, x, opts);
        iterations += a.iterations;
        converged &= a.converged;
        let [t1, t2] = p.branches(&a.x[0], &a.x[1])?;
        Ok((a.x, t2 - t1))
    };
    let (x_lo, d_lo) = solve(0.0, &x0)?;
    if d_lo >= 0.0 {
        return Ok(Run { x: x_lo, lambda: 0.0, converged, iterations });
    }
    let (x_hi, d_hi) = solve(1.0, &x_lo)?;
    if d_hi <= 0.0 {
        return Ok(Run { x: x_hi, lambda: 1.0, converged, iterations });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut x = x_lo;
    let mut lambda = 0.5;
    for _ in 0..BISECTION_STEPS {
        lambda = 0.5 * (lo + hi);
        let (xn, d) = solve(lambda, &x)?;
        x = xn;
        if d.abs() <= 1e-12 || hi - lo <= 1e-13 {
            break;
        }
        if d > 0.0 {
            hi = lambda;
        } else {
            lo = lambda;
        }
    }
    Ok(Run { x, lambda, converged, iterations })
}

fn psd(m: &Mat) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(psd_part(m))
}

struct Candidate {
    b1: Mat,
    b2: Mat,
    lambda: f64,
    m: [Mat; 3],
    kkt: KktReport,
}

/// How multiplier recovery treats `λ`: from the branch sign, as a free unknown, or fixed.
#[derive(Clone, Copy)]
enum LambdaMode {
    Auto,
    Free,
    Fixed(f64),
}

fn recover(p: &BcProblem, x: &[Mat], lambda_hint: f64, mode: LambdaMode, tol: f64) -> Result<Candidate> {
    let w = Weighted { p, lambda: 0.0 };
    let ([g1, g2], h) = w.gradient_parts(x)?;
    let [t1, t2] = p.branches(&x[0], &x[1])?;
    let lambda_fixed = match mode {
        LambdaMode::Fixed(l) => Some(l),
        LambdaMode::Free => None,
        LambdaMode::Auto if (t1 - t2).abs() <= TIE_TOL => None,
        LambdaMode::Auto if t1 < t2 => Some(0.0),
        LambdaMode::Auto => Some(1.0),
    };
    let constraints = [
        ActiveConstraint { basis: active_basis(&x[0], ACTIVE_TOL), coef: vec![1.0, 0.0] },
        ActiveConstraint { basis: active_basis(&x[1], ACTIVE_TOL), coef: vec![0.0, 1.0] },
        ActiveConstraint { basis: active_basis(&(p.s.as_matrix() - &x[0] - &x[1]), ACTIVE_TOL), coef: vec![-1.0, -1.0] },
    ];
    let (lambda, rec) = match lambda_fixed {
        Some(l) => (l, recover_multipliers(&[&g1 + &h * l, &g2 + &h * l], &[], &constraints)),
        None => {
            let r = recover_multipliers(&[g1, g2], &[(vec![h.clone(), h], (0.0, 1.0))], &constraints);
            (r.scalars.first().copied().unwrap_or(lambda_hint), r)
        }
    };
    let m = [rec.multipliers[0].clone(), rec.multipliers[1].clone(), rec.multipliers[2].clone()];
    let kkt = bc_report(&x[0], &x[1], lambda, [&m[0], &m[1], &m[2]], p, tol)?;
    Ok(Candidate { b1: x[0].clone(), b2: x[1].clone(), lambda, m, kkt })
}

pub fn solve_bc(problem: &BcProblem, opts: &SolverOptions) -> Result<BcSolution> {
    solve_bc_from(problem, None, opts)
}

/// `solve_bc` with a caller-supplied first start `(B₁, B₂)`.
pub fn solve_bc_from(problem: &BcProblem, init: Option<(&Mat, &Mat)>, opts: &SolverOptions) -> Result<BcSolution> {
    problem.validate()?;
    let s = problem.s.as_matrix();
    let first = match init {
        Some((a, b)) => vec![a.clone(), b.clone()],
        None => vec![s * 0.25, s * 0.25],
    };
    let starts = [first, vec![s * 0.6, s * 0.05]];
    let mut cands = Vec::new();
    let mut total_iters = 0;
    let mut all_converged = true;
    for x0 in starts {
        let run = bisect(problem, x0, opts)?;
        total_iters += run.iterations;
        all_converged &= run.converged;
        let mut c = recover(problem, &run.x, run.lambda, LambdaMode::Auto, opts.kkt_tol)?;
        if !c.kkt.pass {
            let [t1, t2] = problem.branches(&run.x[0], &run.x[1])?;
            if (t1 - t2).abs() <= NEAR_TIE {
                let alt = recover(problem, &run.x, run.lambda, LambdaMode::Free, opts.kkt_tol)?;
                if alt.kkt.max_residual() < c.kkt.max_residual() {
                    c = alt;
                }
            }
        }
        if c.lambda > problem.mu2 + opts.kkt_tol {
            let alt = recover(problem, &run.x, run.lambda, LambdaMode::Fixed(problem.mu2), opts.kkt_tol)?;
            if alt.kkt.pass {
                c = alt;
            }
        }
        let value = problem.objective(&c.b1, &c.b2)?;
        cands.push((c, value));
    }
    let multiple = cands.iter().all(|c| c.0.kkt.pass)
        && multiple_optima(
            &[cands[0].0.b1.clone(), cands[0].0.b2.clone()],
            &[cands[1].0.b1.clone(), cands[1].0.b2.clone()],
            cands[0].1,
            cands[1].1,
        );
    let (best, value) = cands
        .into_iter()
        .max_by(|a, b| (a.0.kkt.pass, a.1).partial_cmp(&(b.0.kkt.pass, b.1)).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap();
    let [m1, m2, m3] = best.m;
    let lambda = best.lambda;
    Ok(BcSolution {
        problem: problem.clone(),
        rates: problem.rates(&best.b1, &best.b2)?,
        b1: psd(&best.b1)?,
        b2: psd(&best.b2)?,
        lambda,
        m1: psd(&m1)?,
        m2: psd(&m2)?,
        m3: psd(&m3)?,
        value,
        kkt: best.kkt,
        converged: all_converged,
        iterations: total_iters,
        lambda_at_boundary: lambda <= 1e-9 || (lambda - problem.mu2).abs() <= 1e-9,
        lambda_in_range: lambda <= problem.mu2 + 1e-9,
        multiple_optima: multiple,
    })
}

fn bc_report(b1: &Mat, b2: &Mat, lambda: f64, m: [&Mat; 3], p: &BcProblem, tol: f64) -> Result<KktReport> {
    let b = b1 + b2;
    let (k1, k2, s) = (p.k1.as_matrix(), p.k2.as_matrix(), p.s.as_matrix());
    let (mu1, mu2) = (p.mu1, p.mu2);
    let eq1 = spd_inverse(&(&b + k2))? * (0.5 * (mu2 - lambda)) + m[0]
        - spd_inverse(&(&b + k1))? * (0.5 * (1.0 - lambda))
        - m[2];
    let eq2 = spd_inverse(&(b2 + k2))? * (0.5 * mu2) + m[0] - spd_inverse(&(b2 + k1))? * (0.5 * mu1) - m[1];
    let [t1, t2] = p.branches(b1, b2)?;
    let branch = lambda * (t2 - t1).max(0.0) + (1.0 - lambda) * (t1 - t2).max(0.0);
    Ok(KktReport::new(
        vec![frob(&eq1), frob(&eq2)],
        vec![comp(b1, m[0]), comp(b2, m[1]), comp(&(s - &b), m[2]), branch],
        m.iter().map(|x| min_eig(x)).fold(f64::INFINITY, f64::min),
        min_eig(b1).min(min_eig(b2)).min(min_eig(&(s - &b))),
        tol,
    ))
}

/// Residuals of the two stationarity equations, the three complementarity
/// products and the branch condition for `λ`.
pub fn kkt_check_bc(
    b1: &PsdMatrix,
    b2: &PsdMatrix,
    lambda: f64,
    m: [&PsdMatrix; 3],
    problem: &BcProblem,
    tol: f64,
) -> Result<KktReport> {
    let p = problem.s.dim();
    for x in [b1, b2, m[0], m[1], m[2]] {
        if x.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: x.dim() });
        }
    }
    bc_report(b1.as_matrix(), b2.as_matrix(), lambda, [m[0].as_matrix(), m[1].as_matrix(), m[2].as_matrix()], problem, tol)
}
