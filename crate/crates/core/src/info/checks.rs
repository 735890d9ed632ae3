//! Numerical checkers for the Fisher-information and MMSE identities.
//!
//! Equalities report a Frobenius residual. Loewner inequalities report the
//! violation `max(0, −λ_min(rhs − lhs))`.

use serde::{Deserialize, Serialize};

use super::compiled::{Compiled, MAX_INNER};
use super::{fisher, Backend, ConditionalMixture, GaussianMixture, GaussianVec, LabelGroup};
use crate::error::{Error, Result};
use crate::linalg::{gaussian_entropy, max_eig, min_eig, spd_inverse, sym, Mat, PsdMatrix, SymMatrix};
use crate::mc::{self, McConfig};

/// Names accepted by the lemma battery.
pub const CHECK_NAMES: [&str; 7] = [
    "de_bruijn",
    "fii",
    "mmse_monotone",
    "cramer_rao",
    "dpi_fisher",
    "complementary",
    "complementary_two_noise",
];

/// Finite-difference step on the noise covariance for the de Bruijn check.
pub const DE_BRUIJN_STEP: f64 = 1e-4;

/// Pass thresholds for the two backends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute tolerance for closed-form residuals, scaled by `max(1, ‖scale‖)`.
    pub closed: f64,
    /// Relative tolerance for Monte Carlo residuals.
    pub mc_rel: f64,
    /// Standard-error multiplier for Monte Carlo residuals.
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { closed: 1e-9, mc_rel: 1e-2, mc_sigmas: 5.0 }
    }
}

impl Tolerances {
    pub fn threshold(&self, backend: Backend, scale: f64, stderr: f64) -> f64 {
        match backend {
            Backend::ClosedForm => self.closed * scale.max(1.0),
            Backend::Mc => (self.mc_rel * scale).max(self.mc_sigmas * stderr),
        }
    }
}

/// Outcome of one identity or inequality check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lemma: String,
    pub backend: Backend,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub stderr: Option<f64>,
}

impl CheckReport {
    fn new(lemma: &str, backend: Backend, residual: f64, scale: f64, stderr: f64, tol: &Tolerances) -> Self {
        let tolerance = tol.threshold(backend, scale, stderr);
        Self {
            lemma: lemma.to_string(),
            backend,
            residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
            stderr: (backend == Backend::Mc).then_some(stderr),
        }
    }
}

fn violation(lhs: &Mat, rhs: &Mat) -> f64 {
    (-min_eig(&(rhs - lhs))).max(0.0)
}

fn spectral(m: &Mat) -> f64 {
    let s = sym(m);
    max_eig(&s).abs().max(min_eig(&s).abs())
}

fn opnorm(m: &Mat) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}

fn same_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn five_point(f: impl Fn(f64) -> Result<f64>, h: f64) -> Result<f64> {
    Ok((-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h))
}

/// Directional derivative of `h(X + N_Σ)` along `direction` against
/// `½ tr(direction · J(X + N_Σ))`.
pub fn check_de_bruijn(
    x: &GaussianMixture,
    noise_cov: &PsdMatrix,
    direction: &SymMatrix,
    cfg: &McConfig,
    tol: &Tolerances,
) -> Result<CheckReport> {
    same_dim(x.dim(), noise_cov.dim())?;
    same_dim(x.dim(), direction.dim())?;
    noise_cov.inverse()?;
    let t = DE_BRUIJN_STEP;
    let sigma = noise_cov.as_matrix();
    let dir = direction.as_matrix();
    for s in [-2.0 * t, 2.0 * t] {
        let min = min_eig(&(sigma + dir * s));
        if min <= 0.0 {
            return Err(Error::InvalidInput(format!("noise covariance leaves the PD cone along direction ({min:e})")));
        }
    }
    if let Some(c) = x.single_cov() {
        let lhs = five_point(|s| gaussian_entropy(&(c + sigma + dir * s)), t)?;
        let rhs = 0.5 * (dir * spd_inverse(&(c + sigma))?).trace();
        return Ok(CheckReport::new("de_bruijn", Backend::ClosedForm, (lhs - rhs).abs(), rhs.abs(), 0.0, tol));
    }
    let shifted: Vec<Compiled> = [-2.0, -1.0, 1.0, 2.0]
        .iter()
        .map(|k| x.compile_with_noise(&(sigma + dir * (k * t))))
        .collect::<Result<_>>()?;
    let base = x.compile_with_noise(sigma)?;
    let d = x.dim();
    let coef = [1.0, -8.0, 8.0, -1.0];
    let (mean, se) = mc::average(cfg.samples, cfg.seed, d, 3, |u, z, out| {
        let k = base.pick(u);
        let mut y = [0.0; MAX_INNER];
        let mut fd = 0.0;
        for (c, comp) in coef.iter().zip(&shifted) {
            comp.draw_component(k, z, &mut y[..d]);
            fd -= c * comp.log_density(&y[..d]);
        }
        fd /= 12.0 * t;
        base.draw_component(k, z, &mut y[..d]);
        let mut s = [0.0; MAX_INNER];
        base.score(&y[..d], &mut s[..d]);
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += s[i] * dir[(i, j)] * s[j];
            }
        }
        out[0] = fd;
        out[1] = 0.5 * q;
        out[2] = fd - 0.5 * q;
    });
    let scale = mean[1].abs();
    Ok(CheckReport::new("de_bruijn", Backend::Mc, mean[2].abs(), scale, se[2], tol))
}

fn sum_of(x: &GaussianMixture, y: &GaussianMixture) -> Result<GaussianMixture> {
    let mut weights = Vec::new();
    let mut comps = Vec::new();
    for (wa, a) in x.weights().iter().zip(x.components()) {
        for (wb, b) in y.weights().iter().zip(y.components()) {
            weights.push(wa * wb);
            let mean = a.mean.iter().zip(&b.mean).map(|(p, q)| p + q).collect();
            comps.push(GaussianVec::new(mean, PsdMatrix::from_matrix(a.cov.as_matrix() + b.cov.as_matrix())?)?);
        }
    }
    GaussianMixture::new(weights, comps)
}

/// `(A+B) J(X+Y) (A+B)ᵀ ⪯ A J(X) Aᵀ + B J(Y) Bᵀ` for independent X, Y.
pub fn check_fii(
    a: &SymMatrix,
    b: &SymMatrix,
    x: &GaussianMixture,
    y: &GaussianMixture,
    cfg: &McConfig,
    tol: &Tolerances,
) -> Result<CheckReport> {
    let p = x.dim();
    same_dim(p, y.dim())?;
    same_dim(p, a.dim())?;
    same_dim(p, b.dim())?;
    let (am, bm) = (a.as_matrix(), b.as_matrix());
    let ab = am + bm;
    let (jx, bx) = fisher(x, &cfg.child(&[1]))?;
    let (jy, by) = fisher(y, &cfg.child(&[2]))?;
    let (jxy, bxy) = fisher(&sum_of(x, y)?, &cfg.child(&[3]))?;
    let lhs = &ab * &jxy.matrix * ab.transpose();
    let rhs = am * &jx.matrix * am.transpose() + bm * &jy.matrix * bm.transpose();
    let stderr = opnorm(am).powi(2) * jx.stderr + opnorm(bm).powi(2) * jy.stderr + opnorm(&ab).powi(2) * jxy.stderr;
    let backend = bx.join(by).join(bxy);
    Ok(CheckReport::new("fii", backend, violation(&lhs, &rhs), rhs.norm(), stderr, tol))
}

/// `J(X)⁻¹ ⪯ cov(X)`.
pub fn check_cramer_rao(x: &GaussianMixture, cfg: &McConfig, tol: &Tolerances) -> Result<CheckReport> {
    let (j, backend) = fisher(x, cfg)?;
    let jinv = spd_inverse(&j.matrix)?;
    let cov = x.covariance();
    let stderr = spectral(&jinv).powi(2) * j.stderr;
    Ok(CheckReport::new("cramer_rao", backend, violation(&jinv, &cov), cov.norm(), stderr, tol))
}

fn conditional_fisher(groups: &[LabelGroup], cfg: &McConfig, tag: u64) -> Result<(Mat, f64, Backend)> {
    let p = groups[0].mixture.dim();
    let mut total = Mat::zeros(p, p);
    let mut stderr = 0.0;
    let mut backend = Backend::ClosedForm;
    for (i, g) in groups.iter().enumerate() {
        let (j, b) = fisher(&g.mixture, &cfg.child(&[tag, i as u64]))?;
        total += j.matrix * g.prob;
        stderr += g.prob * j.stderr;
        backend = backend.join(b);
    }
    Ok((total, stderr, backend))
}

/// `J(X|U) ⪯ J(X|V)` for a chain `U → V → X` over finite labels.
pub fn check_dpi_fisher(chain: &ConditionalMixture, cfg: &McConfig, tol: &Tolerances) -> Result<CheckReport> {
    chain.check_markov()?;
    let (ju, su, bu) = conditional_fisher(&chain.given_u()?, cfg, 1)?;
    let (jv, sv, bv) = conditional_fisher(&chain.given_v()?, cfg, 2)?;
    Ok(CheckReport::new("dpi_fisher", bu.join(bv), violation(&ju, &jv), jv.norm(), su + sv, tol))
}

/// Posterior moments of X given linear Gaussian observations, per component.
struct Posterior {
    p: usize,
    covs: Vec<Mat>,
    offsets: Vec<Vec<f64>>,
    gains: Vec<Mat>,
}

impl Posterior {
    /// Observation information `info` enters as `C_k⁻¹ + info`; the posterior mean
    /// is `V_k C_k⁻¹ m_k + V_k · stat` where `stat` is the observed information-weighted sum.
    fn new(x: &GaussianMixture, info: &Mat) -> Result<Self> {
        let mut out = Self { p: x.dim(), covs: Vec::new(), offsets: Vec::new(), gains: Vec::new() };
        for c in x.components() {
            let prec = spd_inverse(c.cov.as_matrix())?;
            let v = spd_inverse(&(&prec + info))?;
            let off = &v * &prec * nalgebra::DVector::from_column_slice(&c.mean);
            out.offsets.push(off.iter().copied().collect());
            out.gains.push(v.clone());
            out.covs.push(v);
        }
        Ok(out)
    }

    /// `cov(X | observation)` given responsibilities and the sufficient statistic.
    fn cov(&self, resp: &[f64], stat: &[f64]) -> Mat {
        let p = self.p;
        let mut second = Mat::zeros(p, p);
        let mut first = nalgebra::DVector::zeros(p);
        let stat = nalgebra::DVector::from_column_slice(stat);
        for (k, &r) in resp.iter().enumerate().take(self.covs.len()) {
            let e = nalgebra::DVector::from_column_slice(&self.offsets[k]) + &self.gains[k] * &stat;
            second += (&self.covs[k] + &e * e.transpose()) * r;
            first += e * r;
        }
        second - &first * first.transpose()
    }
}

fn pack(m: &Mat, out: &mut [f64]) {
    let q = m.nrows();
    let mut k = 0;
    for i in 0..q {
        for j in i..q {
            out[k] = m[(i, j)];
            k += 1;
        }
    }
}

/// Frobenius norm of a packed upper triangle.
fn packed_norm(v: &[f64], q: usize) -> f64 {
    super::unpack(v, q).norm()
}

/// `J(X+N) + Σ⁻¹ cov(X|X+N) Σ⁻¹ = Σ⁻¹`.
pub fn check_complementary(
    x: &GaussianMixture,
    sigma: &PsdMatrix,
    cfg: &McConfig,
    tol: &Tolerances,
) -> Result<CheckReport> {
    same_dim(x.dim(), sigma.dim())?;
    let sinv = sigma.inverse()?.as_matrix().clone();
    let scale = sinv.norm();
    if let Some(c) = x.single_cov() {
        let j = spd_inverse(&(c + sigma.as_matrix()))?;
        let post = spd_inverse(&(spd_inverse(c)? + &sinv))?;
        let r = j + &sinv * post * &sinv - &sinv;
        return Ok(CheckReport::new("complementary", Backend::ClosedForm, r.norm(), scale, 0.0, tol));
    }
    let p = x.dim();
    let y = x.compile_with_noise(sigma.as_matrix())?;
    let post = Posterior::new(x, &sinv)?;
    let width = p * (p + 1) / 2;
    let (mean, se) = mc::average(cfg.samples, cfg.seed, p, width, |u, z, out| {
        let mut yv = [0.0; MAX_INNER];
        let mut s = [0.0; MAX_INNER];
        let mut resp = vec![0.0; y.components()];
        y.draw(u, z, &mut yv[..p]);
        y.score(&yv[..p], &mut s[..p]);
        y.responsibilities(&yv[..p], &mut resp);
        let stat: Vec<f64> = (0..p).map(|i| (0..p).map(|j| sinv[(i, j)] * yv[j]).sum()).collect();
        let s = nalgebra::DVector::from_column_slice(&s[..p]);
        let r = &s * s.transpose() + &sinv * post.cov(&resp, &stat) * &sinv - &sinv;
        pack(&r, out);
    });
    Ok(CheckReport::new("complementary", Backend::Mc, packed_norm(&mean, p), scale, packed_norm(&se, p), tol))
}

/// Two-observation complementary identity and its rearrangement through the
/// conditional Fisher information `J(X+N₁ | X+N₂)`. Returns one report for each.
pub fn check_complementary_two_noise(
    x: &GaussianMixture,
    s1: &PsdMatrix,
    s2: &PsdMatrix,
    cfg: &McConfig,
    tol: &Tolerances,
) -> Result<Vec<CheckReport>> {
    let p = x.dim();
    same_dim(p, s1.dim())?;
    same_dim(p, s2.dim())?;
    let (s1m, s2m) = (s1.as_matrix(), s2.as_matrix());
    let s1inv = s1.inverse()?.as_matrix().clone();
    let s2inv = s2.inverse()?.as_matrix().clone();
    let info = &s1inv + &s2inv;
    let s0 = spd_inverse(&info)?;
    let gain = &s2inv * (s1m + s2m);
    let shift = &gain * &s2inv;
    let scale = info.norm();
    const NAMES: [&str; 2] = ["complementary_two_noise", "complementary_conditional"];
    let joint_cov = |c: &Mat| {
        let mut j = Mat::zeros(2 * p, 2 * p);
        j.view_mut((0, 0), (p, p)).copy_from(&(c + s1m));
        j.view_mut((0, p), (p, p)).copy_from(c);
        j.view_mut((p, 0), (p, p)).copy_from(c);
        j.view_mut((p, p), (p, p)).copy_from(&(c + s2m));
        j
    };
    if let Some(c) = x.single_cov() {
        let j0 = spd_inverse(&(c + &s0))?;
        let post = spd_inverse(&(spd_inverse(c)? + &info))?;
        let r_two = &j0 + &info * post * &info - &info;
        let jcond = spd_inverse(&joint_cov(c))?.view((0, 0), (p, p)).into_owned();
        let r_cond = &j0 - (&gain * jcond * gain.transpose() - &shift);
        return Ok(vec![
            CheckReport::new(NAMES[0], Backend::ClosedForm, r_two.norm(), scale, 0.0, tol),
            CheckReport::new(NAMES[1], Backend::ClosedForm, r_cond.norm(), scale, 0.0, tol),
        ]);
    }
    let xc = x.compile()?;
    let y0 = x.compile_with_noise(&s0)?;
    let means: Vec<Vec<f64>> = x.components().iter().map(|c| [c.mean.clone(), c.mean.clone()].concat()).collect();
    let covs: Vec<Mat> = x.components().iter().map(|c| joint_cov(c.cov.as_matrix())).collect();
    let joint = Compiled::new(x.weights(), &means, &covs)?;
    let post = Posterior::new(x, &info)?;
    let l1 = crate::linalg::cholesky_lower(s1m)?;
    let l2 = crate::linalg::cholesky_lower(s2m)?;
    let w = p * (p + 1) / 2;
    let (mean, se) = mc::average(cfg.samples, cfg.seed, 3 * p, 2 * w, |u, z, out| {
        let mut xv = [0.0; MAX_INNER];
        xc.draw(u, &z[..p], &mut xv[..p]);
        let xv = nalgebra::DVector::from_column_slice(&xv[..p]);
        let y1 = &xv + &l1 * nalgebra::DVector::from_column_slice(&z[p..2 * p]);
        let y2 = &xv + &l2 * nalgebra::DVector::from_column_slice(&z[2 * p..]);
        let stat = &s1inv * &y1 + &s2inv * &y2;
        let yo = &s0 * &stat;
        let mut s0v = [0.0; MAX_INNER];
        y0.score(yo.as_slice(), &mut s0v[..p]);
        let s0v = nalgebra::DVector::from_column_slice(&s0v[..p]);
        let yy: Vec<f64> = y1.iter().chain(y2.iter()).copied().collect();
        let mut sj = [0.0; MAX_INNER];
        joint.score(&yy, &mut sj[..2 * p]);
        let mut resp = vec![0.0; joint.components()];
        joint.responsibilities(&yy, &mut resp);
        let s1v = nalgebra::DVector::from_column_slice(&sj[..p]);
        let j0 = &s0v * s0v.transpose();
        let r_two = &j0 + &info * post.cov(&resp, stat.as_slice()) * &info - &info;
        let r_cond = &j0 - (&gain * (&s1v * s1v.transpose()) * gain.transpose() - &shift);
        pack(&r_two, &mut out[..w]);
        pack(&r_cond, &mut out[w..]);
    });
    Ok(vec![
        CheckReport::new(NAMES[0], Backend::Mc, packed_norm(&mean[..w], p), scale, packed_norm(&se[..w], p), tol),
        CheckReport::new(NAMES[1], Backend::Mc, packed_norm(&mean[w..], p), scale, packed_norm(&se[w..], p), tol),
    ])
}

/// `cov(X|X+N₁)⁻¹ − Σ₁⁻¹ ⪰ cov(X|X+N₂)⁻¹ − Σ₂⁻¹` for Gaussian X and `Σ₁ ⪯ Σ₂`.
pub fn check_mmse_monotone(
    x_cov: &PsdMatrix,
    s1: &PsdMatrix,
    s2: &PsdMatrix,
    tol: &Tolerances,
) -> Result<CheckReport> {
    same_dim(x_cov.dim(), s1.dim())?;
    same_dim(x_cov.dim(), s2.dim())?;
    let gap = min_eig(&(s2.as_matrix() - s1.as_matrix()));
    if gap < -crate::linalg::PSD_TOL {
        return Err(Error::InvalidInput(format!("noise covariances are not ordered (min eigenvalue {gap:e})")));
    }
    let side = |s: &PsdMatrix| -> Result<Mat> {
        let post = super::mmse_gaussian(x_cov, s)?;
        Ok(spd_inverse(post.as_matrix())? - s.inverse()?.as_matrix())
    };
    let (lhs, rhs) = (side(s1)?, side(s2)?);
    Ok(CheckReport::new("mmse_monotone", Backend::ClosedForm, violation(&rhs, &lhs), lhs.norm(), 0.0, tol))
}
