use serde::{Deserialize, Serialize};

use super::{psd, Auxiliaries, Direction, Given, MonotonePath, PathSpec, PathValue, Source, Term};
use crate::error::{Error, Result};
use crate::info::GaussianMixture;
use crate::linalg::{gaussian_entropy, is_leq, spd_inverse, Mat, PsdMatrix};
use crate::mc::McConfig;
use crate::solvers::{self, BcProblem, CostaProblem, LvProblem, SecProblem};

/// Tolerance for the Loewner checks behind `hypothesis_satisfied`.
const HYP_TOL: f64 = 1e-9;

fn check_dims(p: usize, mats: &[&PsdMatrix]) -> Result<()> {
    for m in mats {
        if m.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
        }
    }
    Ok(())
}

fn require_pd(m: &PsdMatrix) -> Result<()> {
    if !m.is_positive_definite() {
        return Err(Error::SingularMatrix { min_eig: m.min_eigenvalue() });
    }
    Ok(())
}

fn log_det_term(m: &Mat) -> Result<f64> {
    gaussian_entropy(m)
}

fn multipliers<const N: usize>(m: &Option<Vec<PsdMatrix>>) -> Option<[&PsdMatrix; N]> {
    let v = m.as_ref()?;
    if v.len() != N {
        return None;
    }
    Some(std::array::from_fn(|i| &v[i]))
}

fn count_multipliers(m: &Option<Vec<PsdMatrix>>, n: usize) -> Result<()> {
    match m {
        Some(v) if v.len() != n => Err(Error::InvalidInput(format!("expected {n} multipliers, found {}", v.len()))),
        _ => Ok(()),
    }
}

/// Path for `h(X+N₁) − μ h(X+N₂)` with `cov(X) ⪯ S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LvPath {
    pub x: GaussianMixture,
    pub b_star: PsdMatrix,
    pub k1: PsdMatrix,
    pub k2: PsdMatrix,
    pub mu: f64,
    /// Covariance bound `S`.
    #[serde(default)]
    pub s: Option<PsdMatrix>,
    /// `[M₁, M₂]` in the inequality scaling.
    #[serde(default)]
    pub multipliers: Option<Vec<PsdMatrix>>,
}

impl LvPath {
    pub fn new(x: GaussianMixture, b_star: PsdMatrix, k1: PsdMatrix, k2: PsdMatrix, mu: f64) -> Result<Self> {
        let p = Self { x, b_star, k1, k2, mu, s: None, multipliers: None };
        p.validate()?;
        Ok(p)
    }

    /// Path induced by a solved problem, with the certificate attached.
    pub fn from_certificate(x: GaussianMixture, cert: &solvers::LvCertificate) -> Result<Self> {
        let problem = &cert.problem;
        let p = Self {
            x,
            b_star: cert.b_star.clone(),
            k1: problem.k1.clone(),
            k2: problem.k2.clone(),
            mu: problem.mu,
            s: Some(problem.s.clone()),
            multipliers: Some(vec![cert.m1.clone(), cert.m2.clone()]),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.x.dim();
        check_dims(p, &[&self.b_star, &self.k1, &self.k2])?;
        if let Some(s) = &self.s {
            check_dims(p, &[s])?;
        }
        require_pd(&self.k1)?;
        require_pd(&self.k2)?;
        count_multipliers(&self.multipliers, 2)?;
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::InvalidInput(format!("mu must be finite and nonnegative, got {}", self.mu)));
        }
        Ok(())
    }

    /// μ ≥ 1, `cov(X) ⪯ S` and the attached multipliers pass the KKT check.
    pub fn hypothesis_satisfied(&self) -> bool {
        let (Some(s), Some([m1, m2])) = (&self.s, multipliers::<2>(&self.multipliers)) else {
            return false;
        };
        let problem = LvProblem { k1: self.k1.clone(), k2: self.k2.clone(), s: s.clone(), mu: self.mu };
        self.mu >= 1.0
            && is_leq(&self.x.covariance(), s.as_matrix(), HYP_TOL)
            && solvers::kkt_check_lv(&self.b_star, m1, m2, &problem, solvers::KKT_TOL).is_ok_and(|r| r.pass)
    }

    pub fn build(&self) -> Result<PathSpec> {
        self.validate()?;
        let (b, k1, k2) = (self.b_star.as_matrix(), self.k1.as_matrix(), self.k2.as_matrix());
        Ok(PathSpec {
            terms: vec![
                Term::joint(self.mu, b, k1, k2, Given::Nothing),
                Term::single(-(self.mu - 1.0), b, k1, Given::Nothing),
            ],
            source: Source::plain(&self.x),
            direction: Direction::Increasing,
            hypothesis_satisfied: self.hypothesis_satisfied(),
            kind: "lv",
        })
    }
}

impl MonotonePath for LvPath {
    fn spec(&self) -> Result<PathSpec> {
        self.build()
    }

    fn endpoints(&self, cfg: &McConfig) -> Result<[PathValue; 2]> {
        let src = Source::plain(&self.x);
        let (b, k1, k2) = (self.b_star.as_matrix(), self.k1.as_matrix(), self.k2.as_matrix());
        let mut g0 = src.entropy_with_noise(Given::Nothing, k1, &cfg.child(&[0]))?;
        g0.value += self.mu * log_det_term(&(b + k2))?;
        let mut g1 = src.entropy_with_noise(Given::Nothing, k2, &cfg.child(&[1]))?;
        g1.value = self.mu * g1.value + log_det_term(&(b + k1))?;
        g1.stderr *= self.mu;
        Ok([g0, g1])
    }
}

/// Path for `Σμᵢ h(X+Nᵢ) − h(X+N₀)` with `K₁ ⪯ … ⪯ K_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostaPath {
    pub x: GaussianMixture,
    pub b_star: PsdMatrix,
    /// `K₀, K₁, …, K_L`.
    pub k: Vec<PsdMatrix>,
    /// `μ₁, …, μ_L`.
    pub mu: Vec<f64>,
    #[serde(default)]
    pub s: Option<PsdMatrix>,
    /// `[M₁, M₂]`.
    #[serde(default)]
    pub multipliers: Option<Vec<PsdMatrix>>,
}

impl CostaPath {
    pub fn new(x: GaussianMixture, b_star: PsdMatrix, k: Vec<PsdMatrix>, mu: Vec<f64>) -> Result<Self> {
        let p = Self { x, b_star, k, mu, s: None, multipliers: None };
        p.validate()?;
        Ok(p)
    }

    pub fn from_certificate(x: GaussianMixture, cert: &solvers::CostaCertificate) -> Result<Self> {
        let problem = &cert.problem;
        let p = Self {
            x,
            b_star: cert.b_star.clone(),
            k: problem.k.clone(),
            mu: problem.mu.clone(),
            s: Some(problem.s.clone()),
            multipliers: Some(vec![cert.m1.clone(), cert.m2.clone()]),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.x.dim();
        check_dims(p, &[&self.b_star])?;
        check_dims(p, &self.k.iter().collect::<Vec<_>>())?;
        solvers::validate_costa_weights(&self.k, &self.mu)?;
        count_multipliers(&self.multipliers, 2)
    }

    pub fn hypothesis_satisfied(&self) -> bool {
        let (Some(s), Some([m1, m2])) = (&self.s, multipliers::<2>(&self.multipliers)) else {
            return false;
        };
        let problem = CostaProblem { k: self.k.clone(), mu: self.mu.clone(), s: s.clone() };
        is_leq(&self.x.covariance(), s.as_matrix(), HYP_TOL)
            && solvers::kkt_check_costa(&self.b_star, m1, m2, &problem, solvers::KKT_TOL).is_ok_and(|r| r.pass)
    }

    pub fn build(&self) -> Result<PathSpec> {
        self.validate()?;
        let b = self.b_star.as_matrix();
        let k0 = self.k[0].as_matrix();
        let terms = self
            .mu
            .iter()
            .zip(&self.k[1..])
            .map(|(&m, ki)| Term::joint(m, b, ki.as_matrix(), k0, Given::Nothing))
            .collect();
        Ok(PathSpec {
            terms,
            source: Source::plain(&self.x),
            direction: Direction::Increasing,
            hypothesis_satisfied: self.hypothesis_satisfied(),
            kind: "costa",
        })
    }
}

impl MonotonePath for CostaPath {
    fn spec(&self) -> Result<PathSpec> {
        self.build()
    }

    fn endpoints(&self, cfg: &McConfig) -> Result<[PathValue; 2]> {
        let src = Source::plain(&self.x);
        let b = self.b_star.as_matrix();
        let k0 = self.k[0].as_matrix();
        let mut g0 = PathValue::exact(log_det_term(&(b + k0))?);
        let mut g1 = src.entropy_with_noise(Given::Nothing, k0, &cfg.child(&[1]))?;
        for (i, (&m, ki)) in self.mu.iter().zip(&self.k[1..]).enumerate() {
            let h = src.entropy_with_noise(Given::Nothing, ki.as_matrix(), &cfg.child(&[0, i as u64]))?;
            g0.add(m, &h);
            g1.value += m * log_det_term(&(b + ki.as_matrix()))?;
        }
        Ok([g0, g1])
    }
}

/// Path for the broadcast-channel bound with common and private messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcPath {
    pub uvx: Auxiliaries,
    pub b1: PsdMatrix,
    pub b2: PsdMatrix,
    pub k1: PsdMatrix,
    pub k2: PsdMatrix,
    pub mu1: f64,
    pub mu2: f64,
    pub lambda: f64,
    #[serde(default)]
    pub s: Option<PsdMatrix>,
    /// `[M₁, M₂, M₃]`.
    #[serde(default)]
    pub multipliers: Option<Vec<PsdMatrix>>,
}

impl BcPath {
    /// Path built from a solver output; `uvx` defaults to the Gaussian achiever.
    pub fn from_solution(sol: &solvers::BcSolution, uvx: Option<Auxiliaries>) -> Result<Self> {
        let problem = &sol.problem;
        let uvx = match uvx {
            Some(a) => a,
            None => Auxiliaries::gaussian(
                problem.s.clone(),
                psd(&(sol.b1.as_matrix() + sol.b2.as_matrix()))?,
                sol.b2.clone(),
            )?,
        };
        let p = Self {
            uvx,
            b1: sol.b1.clone(),
            b2: sol.b2.clone(),
            k1: problem.k1.clone(),
            k2: problem.k2.clone(),
            mu1: problem.mu1,
            mu2: problem.mu2,
            lambda: sol.lambda,
            s: Some(problem.s.clone()),
            multipliers: Some(vec![sol.m1.clone(), sol.m2.clone(), sol.m3.clone()]),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.uvx.dim();
        check_dims(p, &[&self.b1, &self.b2, &self.k1, &self.k2])?;
        require_pd(&self.k1)?;
        require_pd(&self.k2)?;
        if !(self.mu1 > 0.0 && self.mu1 <= self.mu2 && self.mu2 < 1.0) {
            return Err(Error::UnsupportedWeights(format!(
                "need 0 < mu1 <= mu2 < 1, got mu1 = {}, mu2 = {}",
                self.mu1, self.mu2
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidInput(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        count_multipliers(&self.multipliers, 3)
    }

    pub fn hypothesis_satisfied(&self) -> bool {
        let (Some(s), Some([m1, m2, m3])) = (&self.s, multipliers::<3>(&self.multipliers)) else {
            return false;
        };
        let Ok(cov) = self.uvx.covariance() else { return false };
        let problem = BcProblem { k1: self.k1.clone(), k2: self.k2.clone(), s: s.clone(), mu1: self.mu1, mu2: self.mu2 };
        self.lambda <= self.mu2
            && is_leq(&cov, s.as_matrix(), HYP_TOL)
            && solvers::kkt_check_bc(&self.b1, &self.b2, self.lambda, [m1, m2, m3], &problem, solvers::KKT_TOL)
                .is_ok_and(|r| r.pass)
    }

    pub fn build(&self) -> Result<PathSpec> {
        self.validate()?;
        let (b2, k1, k2) = (self.b2.as_matrix(), self.k1.as_matrix(), self.k2.as_matrix());
        let sigma = self.b1.as_matrix() + b2;
        let (mu1, mu2, lambda) = (self.mu1, self.mu2, self.lambda);
        Ok(PathSpec {
            terms: vec![
                Term::joint(mu2, b2, k1, k2, Given::UV),
                Term::single(-(mu2 - mu1), b2, k1, Given::UV),
                Term::joint(-(mu2 - lambda), &sigma, k1, k2, Given::U),
                Term::single(-(1.0 - mu2), &sigma, k1, Given::U),
            ],
            source: Source::from_aux(&self.uvx)?,
            direction: Direction::Increasing,
            hypothesis_satisfied: self.hypothesis_satisfied(),
            kind: "bc",
        })
    }
}

impl MonotonePath for BcPath {
    fn spec(&self) -> Result<PathSpec> {
        self.build()
    }

    fn endpoints(&self, cfg: &McConfig) -> Result<[PathValue; 2]> {
        let src = Source::from_aux(&self.uvx)?;
        let (b2, k1, k2) = (self.b2.as_matrix(), self.k1.as_matrix(), self.k2.as_matrix());
        let sigma = self.b1.as_matrix() + b2;
        let (mu1, mu2, lambda) = (self.mu1, self.mu2, self.lambda);
        let h = |given, noise: &Mat, tag| src.entropy_with_noise(given, noise, &cfg.child(&[tag]));

        let mut g0 = PathValue::exact(mu2 * log_det_term(&(b2 + k2))? - (mu2 - lambda) * log_det_term(&(&sigma + k2))?);
        g0.add(mu1, &h(Given::UV, k1, 0)?);
        g0.add(-(1.0 - lambda), &h(Given::U, k1, 1)?);

        let mut g1 = PathValue::exact(mu1 * log_det_term(&(b2 + k1))? - (1.0 - lambda) * log_det_term(&(&sigma + k1))?);
        g1.add(mu2, &h(Given::UV, k2, 2)?);
        g1.add(-(mu2 - lambda), &h(Given::U, k2, 3)?);
        Ok([g0, g1])
    }
}

/// Path for the secure source coding bound. `U → V → X` must be a Markov chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecPath {
    pub uvx: Auxiliaries,
    pub delta1_inv: PsdMatrix,
    pub delta2_inv: PsdMatrix,
    pub k: PsdMatrix,
    pub ky: PsdMatrix,
    pub kz: PsdMatrix,
    pub mu: f64,
    pub d: PsdMatrix,
    /// `[M₁, M₂, M₃]`.
    #[serde(default)]
    pub multipliers: Option<Vec<PsdMatrix>>,
}

impl SecPath {
    /// Path built from a solver output; `uvx` defaults to the Gaussian achiever.
    pub fn from_solution(sol: &solvers::SecSolution, uvx: Option<Auxiliaries>) -> Result<Self> {
        let problem = &sol.problem;
        let kinv = spd_inverse(problem.k.as_matrix())?;
        let d2 = &kinv + sol.b2.as_matrix();
        let d1 = &d2 + sol.b1.as_matrix();
        let uvx = match uvx {
            Some(a) => a,
            None => Auxiliaries::gaussian(problem.k.clone(), psd(&spd_inverse(&d2)?)?, psd(&spd_inverse(&d1)?)?)?,
        };
        let p = Self {
            uvx,
            delta1_inv: psd(&d1)?,
            delta2_inv: psd(&d2)?,
            k: problem.k.clone(),
            ky: problem.ky.clone(),
            kz: problem.kz.clone(),
            mu: problem.mu,
            d: problem.d.clone(),
            multipliers: Some(vec![sol.m1.clone(), sol.m2.clone(), sol.m3.clone()]),
        };
        p.validate()?;
        Ok(p)
    }

    /// `B₁ = Δ₁⁻¹ − Δ₂⁻¹` and `B₂ = Δ₂⁻¹ − K⁻¹`.
    pub fn primal(&self) -> Result<(Mat, Mat)> {
        let kinv = spd_inverse(self.k.as_matrix())?;
        Ok((self.delta1_inv.as_matrix() - self.delta2_inv.as_matrix(), self.delta2_inv.as_matrix() - kinv))
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.uvx.dim();
        check_dims(p, &[&self.delta1_inv, &self.delta2_inv, &self.k, &self.ky, &self.kz, &self.d])?;
        for m in [&self.delta1_inv, &self.delta2_inv, &self.k, &self.ky, &self.kz, &self.d] {
            require_pd(m)?;
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(Error::InvalidInput(format!("mu must be finite and nonnegative, got {}", self.mu)));
        }
        if !is_leq(self.delta2_inv.as_matrix(), self.delta1_inv.as_matrix(), HYP_TOL) {
            return Err(Error::InvalidInput("delta2 - delta1 must be positive semi-definite".into()));
        }
        if let Auxiliaries::Finite(c) = &self.uvx {
            c.check_markov()?;
        }
        let margin = self.distortion_margin()?;
        if margin < -HYP_TOL * self.d.as_matrix().norm().max(1.0) {
            return Err(Error::InfeasibleDistortion { margin });
        }
        count_multipliers(&self.multipliers, 3)
    }

    /// `λ_min(D − Σ_v p_v (C_v⁻¹ + K_Y⁻¹)⁻¹)` with `C_v = cov(X | V = v)`.
    ///
    /// The linear estimator's error upper-bounds `cov(X|Y,V)`, and is exact for
    /// Gaussian conditionals.
    pub fn distortion_margin(&self) -> Result<f64> {
        let kyi = spd_inverse(self.ky.as_matrix())?;
        let mut err = Mat::zeros(self.k.dim(), self.k.dim());
        for g in self.uvx.groups(Given::V)? {
            err += spd_inverse(&(spd_inverse(&g.mixture.covariance())? + &kyi))? * g.prob;
        }
        Ok(crate::linalg::min_eig(&(self.d.as_matrix() - err)))
    }

    pub fn hypothesis_satisfied(&self) -> bool {
        let Some([m1, m2, m3]) = multipliers::<3>(&self.multipliers) else {
            return false;
        };
        let Ok((b1, b2)) = self.primal() else { return false };
        let (Ok(b1), Ok(b2)) = (psd(&b1), psd(&b2)) else { return false };
        let Ok(cov) = self.uvx.covariance() else { return false };
        let problem = SecProblem {
            k: self.k.clone(),
            ky: self.ky.clone(),
            kz: self.kz.clone(),
            d: self.d.clone(),
            mu: self.mu,
        };
        is_leq(&cov, self.k.as_matrix(), HYP_TOL)
            && solvers::kkt_check_sec(&b1, &b2, [m1, m2, m3], &problem, solvers::KKT_TOL).is_ok_and(|r| r.pass)
    }

    fn deltas(&self) -> Result<(Mat, Mat)> {
        Ok((spd_inverse(self.delta1_inv.as_matrix())?, spd_inverse(self.delta2_inv.as_matrix())?))
    }

    pub fn build(&self) -> Result<PathSpec> {
        self.validate()?;
        let (d1, d2) = self.deltas()?;
        let p = self.k.dim();
        let (ky, kz) = (self.ky.as_matrix(), self.kz.as_matrix());
        Ok(PathSpec {
            terms: vec![
                Term::joint(-(self.mu + 1.0), &d1, &Mat::zeros(p, p), ky, Given::V),
                Term::joint(1.0, &d2, kz, ky, Given::U),
            ],
            source: Source::from_aux(&self.uvx)?,
            direction: Direction::Decreasing,
            hypothesis_satisfied: self.hypothesis_satisfied(),
            kind: "sec",
        })
    }

    /// `g(0) − g(1)` through conditional entropies of X given the observations.
    ///
    /// Vanishes when `uvx` is the Gaussian achiever.
    pub fn endpoint_difference(&self, cfg: &McConfig) -> Result<PathValue> {
        let src = Source::from_aux(&self.uvx)?;
        let p = self.k.dim();
        let (ky, kz) = (self.ky.as_matrix(), self.kz.as_matrix());
        let kyi = spd_inverse(ky)?;
        let kzi = spd_inverse(kz)?;
        let zero = Mat::zeros(p, p);
        // h(X | X+N, ·) = h(X | ·) + h(N) − h(X+N | ·)
        let cond = |given, noise: &Mat, tag: u64| -> Result<PathValue> {
            let mut v = src.entropy_with_noise(given, &zero, &cfg.child(&[tag, 0]))?;
            v.add(1.0, &PathValue::exact(gaussian_entropy(noise)?));
            v.add(-1.0, &src.entropy_with_noise(given, noise, &cfg.child(&[tag, 1]))?);
            Ok(v)
        };
        let neg = |m: &Mat| -> Result<f64> { Ok(-gaussian_entropy(&spd_inverse(m)?)?) };
        let (d1i, d2i) = (self.delta1_inv.as_matrix(), self.delta2_inv.as_matrix());
        let mut out = PathValue::exact(
            -(self.mu + 1.0) * neg(&(d1i + &kyi))? + neg(&(d2i + &kyi))? - neg(&(d2i + &kzi))?,
        );
        out.add(-(self.mu + 1.0), &cond(Given::V, ky, 0)?);
        out.add(1.0, &cond(Given::U, ky, 1)?);
        out.add(-1.0, &cond(Given::U, kz, 2)?);
        Ok(out)
    }
}

impl MonotonePath for SecPath {
    fn spec(&self) -> Result<PathSpec> {
        self.build()
    }

    fn endpoints(&self, cfg: &McConfig) -> Result<[PathValue; 2]> {
        let src = Source::from_aux(&self.uvx)?;
        let (d1, d2) = self.deltas()?;
        let p = self.k.dim();
        let (ky, kz) = (self.ky.as_matrix(), self.kz.as_matrix());
        let c = -(self.mu + 1.0);
        let h = |given, noise: &Mat, tag| src.entropy_with_noise(given, noise, &cfg.child(&[tag]));

        let mut g0 = PathValue::exact(c * log_det_term(&(&d1 + ky))? + log_det_term(&(&d2 + ky))?);
        g0.add(c, &h(Given::V, &Mat::zeros(p, p), 0)?);
        g0.add(1.0, &h(Given::U, kz, 1)?);

        let mut g1 = PathValue::exact(c * log_det_term(&d1)? + log_det_term(&(&d2 + kz))?);
        g1.add(c, &h(Given::V, ky, 2)?);
        g1.add(1.0, &h(Given::U, ky, 3)?);
        Ok([g0, g1])
    }
}

macro_rules! evaluators {
    ($($g:ident, $dg:ident, $ty:ty;)*) => {$(
        pub fn $g(p: &$ty, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
            p.build()?.g(gamma, cfg)
        }
        pub fn $dg(p: &$ty, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
            p.build()?.dg(gamma, cfg)
        }
    )*};
}

evaluators! {
    g_lv, dg_lv, LvPath;
    g_costa, dg_costa, CostaPath;
    g_bc, dg_bc, BcPath;
    g_sec, dg_sec, SecPath;
}
