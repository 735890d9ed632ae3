//! Interpolation paths `g(γ)` between an arbitrary source and its Gaussian
//! counterpart, with analytic derivatives and a certifier.
//!
//! Every path is a signed sum of two generic entropy terms evaluated on the
//! covariance-preserving transform `X₊ = √(1−γ)X + √γX^G`, `X₋ = √γX − √(1−γ)X^G`:
//!
//! - joint: `h(X₊ + N₊, X₋ + N₋ | ·)` with `N₊ ~ N(0,K_a)`, `N₋ ~ N(0,K_b)`,
//! - single: `h(X₊ + N₊ | ·)`.
//!
//! The joint law is an explicit 2p-dimensional mixture, so values come from the
//! closed form or mixture Monte Carlo. Derivatives come from de Bruijn's identity
//! applied to the Gaussian residual variables `W` and `S/√(1−γ)`.

mod paths;
mod recursion;

pub use paths::*;
pub use recursion::*;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::compiled::{Compiled, MAX_INNER};
use crate::info::{Backend, ConditionalMixture, GaussianMixture, GaussianVec, LabelGroup};
use crate::linalg::{gaussian_entropy, spd_inverse, sym, Mat, PsdMatrix};
use crate::mc::{self, Estimate, McConfig};

/// Conditioning level of an entropy term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Given {
    Nothing,
    U,
    V,
    UV,
}

/// Source X together with its auxiliary variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Auxiliaries {
    /// Jointly Gaussian `(U, V, X)` described by the conditional covariances
    /// `cov(X) ⪰ cov(X|U) ⪰ cov(X|U,V)`. Conditioning on V alone uses
    /// `cov_uv`, which is exact when `U → V → X`.
    Gaussian { cov_x: PsdMatrix, cov_u: PsdMatrix, cov_uv: PsdMatrix },
    /// Finite labels with mixture conditionals.
    Finite(ConditionalMixture),
}

impl Auxiliaries {
    pub fn gaussian(cov_x: PsdMatrix, cov_u: PsdMatrix, cov_uv: PsdMatrix) -> Result<Self> {
        let p = cov_x.dim();
        for m in [&cov_u, &cov_uv] {
            if m.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
            }
        }
        let chain = [cov_uv.as_matrix(), cov_u.as_matrix(), cov_x.as_matrix()];
        for w in chain.windows(2) {
            let gap = crate::linalg::min_eig(&(w[1] - w[0]));
            if gap < -1e-10 {
                return Err(Error::InvalidInput(format!(
                    "conditional covariances must decrease with conditioning (margin {gap:e})"
                )));
            }
        }
        Ok(Self::Gaussian { cov_x, cov_u, cov_uv })
    }

    pub fn dim(&self) -> usize {
        match self {
            Auxiliaries::Gaussian { cov_x, .. } => cov_x.dim(),
            Auxiliaries::Finite(c) => c.dim(),
        }
    }

    /// Total covariance of X.
    pub fn covariance(&self) -> Result<Mat> {
        match self {
            Auxiliaries::Gaussian { cov_x, .. } => Ok(cov_x.as_matrix().clone()),
            Auxiliaries::Finite(c) => Ok(c.marginal()?.covariance()),
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, Auxiliaries::Gaussian { .. })
    }

    pub(crate) fn groups(&self, given: Given) -> Result<Vec<LabelGroup>> {
        match self {
            Auxiliaries::Gaussian { cov_x, cov_u, cov_uv } => {
                let cov = match given {
                    Given::Nothing => cov_x,
                    Given::U => cov_u,
                    Given::V | Given::UV => cov_uv,
                };
                Ok(vec![LabelGroup { prob: 1.0, mixture: GaussianMixture::gaussian(GaussianVec::centered(cov.clone())?) }])
            }
            Auxiliaries::Finite(c) => match given {
                Given::Nothing => Ok(vec![LabelGroup { prob: 1.0, mixture: c.marginal()? }]),
                Given::U => c.given_u(),
                Given::V => c.given_v(),
                Given::UV => c.given_uv(),
            },
        }
    }
}

/// Conditional laws of X at every conditioning level, precomputed.
#[derive(Debug, Clone)]
pub(crate) struct Source {
    nothing: Vec<LabelGroup>,
    u: Vec<LabelGroup>,
    v: Vec<LabelGroup>,
    uv: Vec<LabelGroup>,
}

impl Source {
    pub fn plain(x: &GaussianMixture) -> Self {
        let g = vec![LabelGroup { prob: 1.0, mixture: x.clone() }];
        Self { nothing: g.clone(), u: g.clone(), v: g.clone(), uv: g }
    }

    pub fn from_aux(aux: &Auxiliaries) -> Result<Self> {
        Ok(Self {
            nothing: aux.groups(Given::Nothing)?,
            u: aux.groups(Given::U)?,
            v: aux.groups(Given::V)?,
            uv: aux.groups(Given::UV)?,
        })
    }

    pub fn groups(&self, given: Given) -> &[LabelGroup] {
        match given {
            Given::Nothing => &self.nothing,
            Given::U => &self.u,
            Given::V => &self.v,
            Given::UV => &self.uv,
        }
    }

    /// `h(X + N | given)` with `N ~ N(0, noise)`.
    pub fn entropy_with_noise(&self, given: Given, noise: &Mat, cfg: &McConfig) -> Result<PathValue> {
        let mut acc = PathValue::zero();
        for (i, g) in self.groups(given).iter().enumerate() {
            let v = match g.mixture.single_cov() {
                Some(c) => PathValue::exact(gaussian_entropy(&(c + noise))?),
                None => {
                    let e = crate::info::entropy_compiled(&g.mixture.compile_with_noise(noise)?, &cfg.child(&[i as u64]));
                    PathValue { value: e.value, stderr: e.stderr, backend: Backend::Mc }
                }
            };
            acc.add(g.prob, &v);
        }
        Ok(acc)
    }
}

/// Monotonicity claimed by the inequality behind a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone)]
pub(crate) enum Shape {
    Joint { kb: Mat },
    Single,
}

/// `coef · h(term | given)` for one generic term.
#[derive(Debug, Clone)]
pub(crate) struct Term {
    pub coef: f64,
    pub b: Mat,
    pub ka: Mat,
    pub shape: Shape,
    pub given: Given,
}

impl Term {
    pub fn joint(coef: f64, b: &Mat, ka: &Mat, kb: &Mat, given: Given) -> Self {
        Self { coef, b: b.clone(), ka: ka.clone(), shape: Shape::Joint { kb: kb.clone() }, given }
    }

    pub fn single(coef: f64, b: &Mat, ka: &Mat, given: Given) -> Self {
        Self { coef, b: b.clone(), ka: ka.clone(), shape: Shape::Single, given }
    }

    /// `(A, noise)` such that the term's argument is `A X + N(0, noise)`.
    fn affine(&self, gamma: f64) -> (Mat, Mat) {
        let p = self.b.nrows();
        let (a, ab) = ((1.0 - gamma).sqrt(), gamma.sqrt());
        let eye = Mat::identity(p, p);
        match &self.shape {
            Shape::Single => (eye * a, &self.b * gamma + &self.ka),
            Shape::Joint { kb } => {
                let mut lin = Mat::zeros(2 * p, p);
                lin.view_mut((0, 0), (p, p)).copy_from(&(&eye * a));
                lin.view_mut((p, 0), (p, p)).copy_from(&(&eye * ab));
                let cross = &self.b * (-(gamma * (1.0 - gamma)).sqrt());
                let mut noise = Mat::zeros(2 * p, 2 * p);
                noise.view_mut((0, 0), (p, p)).copy_from(&(&self.b * gamma + &self.ka));
                noise.view_mut((0, p), (p, p)).copy_from(&cross);
                noise.view_mut((p, 0), (p, p)).copy_from(&cross);
                noise.view_mut((p, p), (p, p)).copy_from(&(&self.b * (1.0 - gamma) + kb));
                (lin, noise)
            }
        }
    }

    fn law(&self, x: &GaussianMixture, gamma: f64) -> Result<Compiled> {
        let (a, noise) = self.affine(gamma);
        x.compile_affine(&a, &noise)
    }

    fn closed_value(&self, c: &Mat, gamma: f64) -> Result<f64> {
        let (a, noise) = self.affine(gamma);
        gaussian_entropy(&sym(&(&a * c * a.transpose() + noise)))
    }

    /// `h` of the term for one conditional law.
    fn value(&self, x: &GaussianMixture, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
        if let Some(c) = x.single_cov() {
            return Ok(PathValue::exact(self.closed_value(c, gamma)?));
        }
        if gamma == 1.0 && matches!(self.shape, Shape::Single) {
            return Ok(PathValue::exact(gaussian_entropy(&(&self.b + &self.ka))?));
        }
        let e = crate::info::entropy_compiled(&self.law(x, gamma)?, cfg);
        Ok(PathValue { value: e.value, stderr: e.stderr, backend: Backend::Mc })
    }

    /// Central finite difference of `value` in γ with step `h`.
    fn fd(&self, x: &GaussianMixture, gamma: f64, h: f64, cfg: &McConfig) -> Result<PathValue> {
        if let Some(c) = x.single_cov() {
            let f = |s: f64| self.closed_value(c, gamma + s);
            let d = (-f(2.0 * h)? + 8.0 * f(h)? - 8.0 * f(-h)? + f(-2.0 * h)?) / (12.0 * h);
            return Ok(PathValue::exact(d));
        }
        let plus = self.law(x, gamma + h)?;
        let minus = self.law(x, gamma - h)?;
        let d = plus.dim;
        let (mean, se) = mc::average(cfg.samples, cfg.seed, d, 1, |u, z, out| {
            let k = plus.pick(u);
            let mut y = [0.0; MAX_INNER];
            plus.draw_component(k, z, &mut y[..d]);
            let hp = -plus.log_density(&y[..d]);
            minus.draw_component(k, z, &mut y[..d]);
            let hm = -minus.log_density(&y[..d]);
            out[0] = (hp - hm) / (2.0 * h);
        });
        Ok(PathValue { value: mean[0], stderr: se[0], backend: Backend::Mc })
    }

    /// Analytic `d/dγ` of the term, plus the magnitude of its parts.
    fn derivative(&self, x: &GaussianMixture, gamma: f64, cfg: &McConfig) -> Result<(PathValue, f64)> {
        let p = self.b.nrows();
        let aa = &self.b + &self.ka;
        let (noise, weight, constant) = match &self.shape {
            Shape::Joint { kb } => {
                let ab = &self.b + kb;
                let kd = &aa * gamma + &ab * (1.0 - gamma);
                let q = &aa * spd_inverse(&kd)? * &ab;
                let pm = spd_inverse(&aa)? * (1.0 - gamma) + spd_inverse(&ab)? * gamma;
                let kw = sym(&spd_inverse(&pm)?) - &self.b;
                let d = spd_inverse(&aa)? - spd_inverse(&ab)?;
                (kw, q.transpose() * &d * &q, -0.5 * (&d * &q).trace())
            }
            Shape::Single => {
                let s = 1.0 - gamma;
                ((&self.b * gamma + &self.ka) / s, &aa / (s * s), -(p as f64) / (2.0 * s))
            }
        };
        let weight = sym(&weight);
        let quad = match x.single_cov() {
            Some(c) => PathValue::exact((&weight * spd_inverse(&(c + &noise))?).trace()),
            None => {
                let law = x.compile_with_noise(&noise)?;
                let e = quad_fisher(&law, &weight, cfg);
                PathValue { value: e.value, stderr: e.stderr, backend: Backend::Mc }
            }
        };
        let half = 0.5 * quad.value;
        let v = PathValue { value: half + constant, stderr: 0.5 * quad.stderr, backend: quad.backend };
        Ok((v, half.abs() + constant.abs()))
    }
}

/// `E[sᵀ M s]` where `s` is the score of the compiled law.
fn quad_fisher(law: &Compiled, m: &Mat, cfg: &McConfig) -> Estimate {
    let d = law.dim;
    let (mean, se) = mc::average(cfg.samples, cfg.seed, d, 1, |u, z, out| {
        let mut y = [0.0; MAX_INNER];
        let mut s = [0.0; MAX_INNER];
        law.draw(u, z, &mut y[..d]);
        law.score(&y[..d], &mut s[..d]);
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += s[i] * m[(i, j)] * s[j];
            }
        }
        out[0] = q;
    });
    Estimate { value: mean[0], stderr: se[0] }
}

/// A path quantity with its Monte Carlo error and backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathValue {
    pub value: f64,
    pub stderr: f64,
    pub backend: Backend,
}

impl PathValue {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, backend: Backend::ClosedForm }
    }

    fn zero() -> Self {
        Self::exact(0.0)
    }

    fn add(&mut self, coef: f64, other: &PathValue) {
        self.value += coef * other.value;
        self.stderr = self.stderr.hypot(coef * other.stderr);
        self.backend = self.backend.join(other.backend);
    }
}

/// Fully assembled path: terms, source laws and the claimed monotonicity.
#[derive(Debug, Clone)]
pub struct PathSpec {
    pub(crate) terms: Vec<Term>,
    pub(crate) source: Source,
    pub direction: Direction,
    pub hypothesis_satisfied: bool,
    pub kind: &'static str,
}

const VALUE: u64 = 0;
const DERIV: u64 = 1;
const FD: u64 = 2;

impl PathSpec {
    fn check_gamma(gamma: f64, open: bool) -> Result<()> {
        let bad = if open { gamma <= 0.0 || gamma >= 1.0 } else { !(0.0..=1.0).contains(&gamma) };
        if bad || gamma.is_nan() {
            return Err(Error::GammaOutOfRange(gamma));
        }
        Ok(())
    }

    fn fold(
        &self,
        cfg: &McConfig,
        tag: u64,
        f: impl Fn(&Term, &GaussianMixture, &McConfig) -> Result<PathValue>,
    ) -> Result<PathValue> {
        let mut acc = PathValue::zero();
        for (t, term) in self.terms.iter().enumerate() {
            for (i, g) in self.source.groups(term.given).iter().enumerate() {
                let v = f(term, &g.mixture, &cfg.child(&[tag, t as u64, i as u64]))?;
                acc.add(term.coef * g.prob, &v);
            }
        }
        Ok(acc)
    }

    /// `g(γ)` for γ in [0, 1].
    pub fn g(&self, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
        Self::check_gamma(gamma, false)?;
        self.fold(cfg, VALUE, |t, x, c| t.value(x, gamma, c))
    }

    /// Analytic `dg/dγ` for γ in (0, 1).
    pub fn dg(&self, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
        Ok(self.dg_with_scale(gamma, cfg)?.0)
    }

    fn dg_with_scale(&self, gamma: f64, cfg: &McConfig) -> Result<(PathValue, f64)> {
        Self::check_gamma(gamma, true)?;
        let mut scale = 0.0;
        let mut acc = PathValue::zero();
        for (t, term) in self.terms.iter().enumerate() {
            for (i, g) in self.source.groups(term.given).iter().enumerate() {
                let (v, s) = term.derivative(&g.mixture, gamma, &cfg.child(&[DERIV, t as u64, i as u64]))?;
                acc.add(term.coef * g.prob, &v);
                scale += (term.coef * g.prob).abs() * s;
            }
        }
        Ok((acc, scale))
    }

    /// Central finite difference of `g`, step `min(1e-4, γ/4, (1−γ)/4)`.
    pub fn dg_fd(&self, gamma: f64, cfg: &McConfig) -> Result<PathValue> {
        Self::check_gamma(gamma, true)?;
        let h = fd_step(gamma);
        self.fold(cfg, FD, |t, x, c| t.fd(x, gamma, h, c))
    }
}

pub fn fd_step(gamma: f64) -> f64 {
    1e-4f64.min(gamma / 4.0).min((1.0 - gamma) / 4.0)
}

/// Chebyshev nodes of the first kind mapped to (0, 1).
pub fn chebyshev_grid(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let theta = (2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64;
            0.5 * (1.0 - theta.cos())
        })
        .collect()
}

/// Minimum grid size accepted by `certify`.
pub const MIN_GRID: usize = 16;

/// Sign tolerance for closed-form traces.
pub const SIGN_TOL_CLOSED: f64 = 1e-8;
/// Derivative agreement tolerance for closed-form traces.
pub const FD_TOL_CLOSED: f64 = 1e-6;
/// Endpoint agreement tolerance for closed-form traces.
pub const ENDPOINT_TOL_CLOSED: f64 = 1e-8;

/// Summary of a certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub path: String,
    pub pass: bool,
    pub hypothesis_satisfied: bool,
    pub direction: Direction,
    pub backend: Backend,
    pub sign_ok: bool,
    pub derivative_ok: bool,
    pub endpoints_ok: bool,
    pub min_dg: f64,
    pub max_dg: f64,
    pub worst_sign_excess: f64,
    pub max_derivative_gap: f64,
    pub endpoint_residuals: [f64; 2],
    pub endpoint_tolerances: [f64; 2],
    pub g_endpoints: [f64; 2],
}

/// `g`, `dg` and finite-difference `dg` on the grid, plus the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub gammas: Vec<f64>,
    pub g_values: Vec<f64>,
    pub g_stderr: Vec<f64>,
    pub dg_values: Vec<f64>,
    pub dg_stderr: Vec<f64>,
    pub dg_fd_values: Vec<f64>,
    pub dg_fd_stderr: Vec<f64>,
    pub backends: Vec<Backend>,
    pub verdict: Verdict,
}

impl PathTrace {
    /// CSV with columns `gamma,g,dg,dg_fd,backend`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,g,dg,dg_fd,backend\n");
        for k in 0..self.gammas.len() {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{}\n",
                self.gammas[k],
                self.g_values[k],
                self.dg_values[k],
                self.dg_fd_values[k],
                self.backends[k].as_str()
            ));
        }
        out
    }
}

/// A path with closed-form endpoint evaluators.
pub trait MonotonePath {
    fn spec(&self) -> Result<PathSpec>;
    /// `g(0)` and `g(1)` through the endpoint decompositions.
    fn endpoints(&self, cfg: &McConfig) -> Result<[PathValue; 2]>;
}

struct Point {
    g: PathValue,
    dg: PathValue,
    scale: f64,
    fd: PathValue,
}

/// Pass thresholds used by [`certify_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathTolerances {
    pub sign_closed: f64,
    pub fd_closed: f64,
    pub endpoint_closed: f64,
    /// Relative tolerance for Monte Carlo quantities, scaled by the term magnitude.
    pub mc_rel: f64,
    pub mc_sigmas: f64,
}

impl Default for PathTolerances {
    fn default() -> Self {
        Self {
            sign_closed: SIGN_TOL_CLOSED,
            fd_closed: FD_TOL_CLOSED,
            endpoint_closed: ENDPOINT_TOL_CLOSED,
            mc_rel: 1e-2,
            mc_sigmas: 5.0,
        }
    }
}

/// Evaluates `g`, `dg` and the finite difference on a Chebyshev grid and
/// checks sign, derivative agreement and endpoint consistency.
pub fn certify(path: &dyn MonotonePathSync, grid_size: usize, cfg: &McConfig) -> Result<PathTrace> {
    certify_with(path, grid_size, cfg, &PathTolerances::default())
}

pub fn certify_with(path: &dyn MonotonePathSync, grid_size: usize, cfg: &McConfig, tol: &PathTolerances) -> Result<PathTrace> {
    if grid_size < MIN_GRID {
        return Err(Error::InvalidInput(format!("grid size {grid_size} below the minimum of {MIN_GRID}")));
    }
    let spec = path.spec()?;
    let gammas = chebyshev_grid(grid_size);
    let points: Vec<Point> = gammas
        .par_iter()
        .enumerate()
        .map(|(k, &gamma)| {
            let c = cfg.child(&[k as u64]);
            let (dg, scale) = spec.dg_with_scale(gamma, &c)?;
            Ok(Point { g: spec.g(gamma, &c)?, dg, scale, fd: spec.dg_fd(gamma, &c)? })
        })
        .collect::<Result<_>>()?;

    let ends_cfg = cfg.child(&[u64::MAX]);
    let edges = [spec.g(0.0, &ends_cfg.child(&[0]))?, spec.g(1.0, &ends_cfg.child(&[1]))?];
    let formulas = path.endpoints(&ends_cfg.child(&[2]))?;

    let mut backend = Backend::ClosedForm;
    let mut sign_ok = true;
    let mut derivative_ok = true;
    let mut worst_sign = f64::NEG_INFINITY;
    let mut max_gap: f64 = 0.0;
    for pt in &points {
        backend = backend.join(pt.g.backend).join(pt.dg.backend).join(pt.fd.backend);
        let signed = match spec.direction {
            Direction::Increasing => -pt.dg.value,
            Direction::Decreasing => pt.dg.value,
        };
        let closed = pt.dg.backend == Backend::ClosedForm;
        let sign_tol = if closed { tol.sign_closed } else { (tol.mc_rel * pt.scale).max(tol.mc_sigmas * pt.dg.stderr) };
        worst_sign = worst_sign.max(signed);
        sign_ok &= signed <= sign_tol;
        let gap = (pt.dg.value - pt.fd.value).abs();
        max_gap = max_gap.max(gap);
        let fd_tol = if closed && pt.fd.backend == Backend::ClosedForm {
            tol.fd_closed
        } else {
            (tol.mc_rel * pt.scale).max(tol.mc_sigmas * pt.dg.stderr.hypot(pt.fd.stderr))
        };
        derivative_ok &= gap <= fd_tol;
    }
    let mut endpoint_residuals = [0.0; 2];
    let mut endpoint_tolerances = [0.0; 2];
    let mut endpoints_ok = true;
    for e in 0..2 {
        let (a, b) = (&edges[e], &formulas[e]);
        endpoint_residuals[e] = (a.value - b.value).abs();
        endpoint_tolerances[e] = if a.backend == Backend::ClosedForm && b.backend == Backend::ClosedForm {
            tol.endpoint_closed
        } else {
            (tol.mc_sigmas * a.stderr.hypot(b.stderr)).max(1e-12)
        };
        endpoints_ok &= endpoint_residuals[e] <= endpoint_tolerances[e];
        backend = backend.join(a.backend).join(b.backend);
    }
    let dgs: Vec<f64> = points.iter().map(|p| p.dg.value).collect();
    let verdict = Verdict {
        path: spec.kind.to_string(),
        pass: sign_ok && derivative_ok && endpoints_ok,
        hypothesis_satisfied: spec.hypothesis_satisfied,
        direction: spec.direction,
        backend,
        sign_ok,
        derivative_ok,
        endpoints_ok,
        min_dg: dgs.iter().copied().fold(f64::INFINITY, f64::min),
        max_dg: dgs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        worst_sign_excess: worst_sign,
        max_derivative_gap: max_gap,
        endpoint_residuals,
        endpoint_tolerances,
        g_endpoints: [edges[0].value, edges[1].value],
    };
    Ok(PathTrace {
        gammas,
        g_values: points.iter().map(|p| p.g.value).collect(),
        g_stderr: points.iter().map(|p| p.g.stderr).collect(),
        dg_values: dgs,
        dg_stderr: points.iter().map(|p| p.dg.stderr).collect(),
        dg_fd_values: points.iter().map(|p| p.fd.value).collect(),
        dg_fd_stderr: points.iter().map(|p| p.fd.stderr).collect(),
        backends: points.iter().map(|p| p.g.backend.join(p.dg.backend)).collect(),
        verdict,
    })
}

/// `MonotonePath` usable across worker threads.
pub trait MonotonePathSync: MonotonePath + Sync {}
impl<T: MonotonePath + Sync> MonotonePathSync for T {}

/// Covariance-preserving transform of paired samples.
///
/// Returns `(√(1−γ)X + √γX^G, √γX − √(1−γ)X^G)` where `X^G` is drawn from `xg`.
pub fn cpt(x_samples: &Mat, xg: &GaussianVec, gamma: f64, seed: u64) -> Result<(Mat, Mat)> {
    PathSpec::check_gamma(gamma, false)?;
    if x_samples.ncols() != xg.dim() {
        return Err(Error::DimensionMismatch { expected: xg.dim(), found: x_samples.ncols() });
    }
    let mut g = xg.cov.sample_gaussian(x_samples.nrows(), seed);
    for mut row in g.row_iter_mut() {
        for (v, m) in row.iter_mut().zip(&xg.mean) {
            *v += m;
        }
    }
    let (a, b) = ((1.0 - gamma).sqrt(), gamma.sqrt());
    Ok((x_samples * a + &g * b, x_samples * b - g * a))
}

pub(crate) fn psd(m: &Mat) -> Result<PsdMatrix> {
    PsdMatrix::from_matrix(m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_open_and_increasing() {
        let g = chebyshev_grid(64);
        assert_eq!(g.len(), 64);
        assert!(g[0] > 0.0 && g[63] < 1.0);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cpt_endpoints() {
        let xg = GaussianVec::centered(PsdMatrix::identity(2)).unwrap();
        let x = PsdMatrix::identity(2).sample_gaussian(10, 1);
        let g = xg.cov.sample_gaussian(10, 2);
        let (p, m) = cpt(&x, &xg, 0.0, 2).unwrap();
        assert_eq!(p, x);
        assert_eq!(m, -&g);
        let (p, m) = cpt(&x, &xg, 1.0, 2).unwrap();
        assert_eq!(p, g);
        assert_eq!(m, x);
        assert!(cpt(&x, &xg, 1.5, 2).is_err());
    }

    #[test]
    fn kw_forms_agree() {
        let b = Mat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.7]);
        let ka = Mat::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.9]);
        let kb = Mat::from_row_slice(2, 2, &[2.0, -0.3, -0.3, 1.4]);
        let gamma: f64 = 0.37;
        let aa = &b + &ka;
        let ab = &b + &kb;
        let kd = &aa * gamma + &ab * (1.0 - gamma);
        let kdi = spd_inverse(&kd).unwrap();
        let direct = &ab * &kdi * &aa - &b;
        let alt = (&b * gamma + &ka - &aa * &kdi * &aa * gamma) / (1.0 - gamma);
        assert!((direct - alt).norm() < 1e-12);
    }
}
