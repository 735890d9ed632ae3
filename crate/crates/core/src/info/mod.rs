//! Entropy, score, Fisher information and MMSE for Gaussian mixtures, plus
//! numerical checkers for the supporting identities and inequalities.
//!
//! A single-component mixture is evaluated in closed form. Anything else goes
//! through analytic-score Monte Carlo with counter-based seeding.

mod checks;
pub(crate) mod compiled;

pub use checks::*;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_entropy, spd_inverse, sym, Mat, PsdMatrix};
use crate::mc::{self, Estimate, McConfig};
use compiled::{Compiled, MAX_INNER};

/// Which evaluation route produced a number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ClosedForm,
    Mc,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::ClosedForm => "closed_form",
            Backend::Mc => "mc",
        }
    }

    pub fn join(self, other: Backend) -> Backend {
        if self == Backend::Mc || other == Backend::Mc {
            Backend::Mc
        } else {
            Backend::ClosedForm
        }
    }
}

/// A Gaussian vector. The covariance may be singular; quantities that need a
/// density then fail with `SingularMatrix` unless Gaussian noise is added first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianRepr")]
pub struct GaussianVec {
    pub mean: Vec<f64>,
    pub cov: PsdMatrix,
}

#[derive(Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: PsdMatrix,
}

impl TryFrom<GaussianRepr> for GaussianVec {
    type Error = Error;
    fn try_from(r: GaussianRepr) -> Result<Self> {
        GaussianVec::new(r.mean, r.cov)
    }
}

impl GaussianVec {
    pub fn new(mean: Vec<f64>, cov: PsdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch { expected: cov.dim(), found: mean.len() });
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("non-finite mean".into()));
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: PsdMatrix) -> Result<Self> {
        Self::new(vec![0.0; cov.dim()], cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// A finite Gaussian mixture with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureRepr")]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<GaussianVec>,
}

#[derive(Deserialize)]
struct MixtureRepr {
    weights: Vec<f64>,
    components: Vec<GaussianVec>,
}

impl TryFrom<MixtureRepr> for GaussianMixture {
    type Error = Error;
    fn try_from(r: MixtureRepr) -> Result<Self> {
        GaussianMixture::new(r.weights, r.components)
    }
}

fn normalize(weights: &mut [f64], what: &str) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(Error::InvalidInput(format!("{what} must be positive and finite")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("{what} sum to {total}, expected 1")));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

impl GaussianMixture {
    /// Normalizes the weights and merges exactly repeated components.
    pub fn new(mut weights: Vec<f64>, components: Vec<GaussianVec>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidInput(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        normalize(&mut weights, "mixture weights")?;
        let p = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != p) {
            return Err(Error::DimensionMismatch { expected: p, found: c.dim() });
        }
        let mut merged_w: Vec<f64> = Vec::with_capacity(weights.len());
        let mut merged_c: Vec<GaussianVec> = Vec::with_capacity(components.len());
        for (w, c) in weights.into_iter().zip(components) {
            match merged_c.iter().position(|m| *m == c) {
                Some(i) => merged_w[i] += w,
                None => {
                    merged_w.push(w);
                    merged_c.push(c);
                }
            }
        }
        Ok(Self { weights: merged_w, components: merged_c })
    }

    pub fn gaussian(g: GaussianVec) -> Self {
        Self { weights: vec![1.0], components: vec![g] }
    }

    /// `N(0, cov)` as a one-component mixture.
    pub fn centered_gaussian(cov: PsdMatrix) -> Result<Self> {
        Ok(Self::gaussian(GaussianVec::centered(cov)?))
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianVec] {
        &self.components
    }

    pub fn is_gaussian(&self) -> bool {
        self.components.len() == 1
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (mi, ci) in m.iter_mut().zip(&c.mean) {
                *mi += w * ci;
            }
        }
        m
    }

    /// Total covariance (within plus between components).
    pub fn covariance(&self) -> Mat {
        let p = self.dim();
        let mean = nalgebra::DVector::from_vec(self.mean());
        let mut c = Mat::zeros(p, p);
        for (w, comp) in self.weights.iter().zip(&self.components) {
            let d = nalgebra::DVector::from_column_slice(&comp.mean) - &mean;
            c += (comp.cov.as_matrix() + &d * d.transpose()) * *w;
        }
        sym(&c)
    }

    /// Distribution of `X + N` with `N ~ N(0, noise)` independent.
    pub fn with_noise(&self, noise: &PsdMatrix) -> Result<Self> {
        self.map_components(|c| {
            GaussianVec::new(c.mean.clone(), PsdMatrix::from_matrix(c.cov.as_matrix() + noise.as_matrix())?)
        })
    }

    fn map_components(&self, f: impl Fn(&GaussianVec) -> Result<GaussianVec>) -> Result<Self> {
        Ok(Self {
            weights: self.weights.clone(),
            components: self.components.iter().map(f).collect::<Result<_>>()?,
        })
    }

    /// Mixture of mixtures with outer weights `probs`.
    pub fn blend(parts: &[(f64, &GaussianMixture)]) -> Result<Self> {
        let mut weights = Vec::new();
        let mut components = Vec::new();
        let total: f64 = parts.iter().map(|(p, _)| p).sum();
        for (p, m) in parts {
            for (w, c) in m.weights.iter().zip(&m.components) {
                weights.push(p * w / total);
                components.push(c.clone());
            }
        }
        Self::new(weights, components)
    }

    /// Compiled law of `A X + N` with `N ~ N(0, noise)`; `a` is q×p.
    pub(crate) fn compile_affine(&self, a: &Mat, noise: &Mat) -> Result<Compiled> {
        let means: Vec<Vec<f64>> = self
            .components
            .iter()
            .map(|c| (a * nalgebra::DVector::from_column_slice(&c.mean)).iter().copied().collect())
            .collect();
        let covs: Vec<Mat> = self
            .components
            .iter()
            .map(|c| sym(&(a * c.cov.as_matrix() * a.transpose() + noise)))
            .collect();
        Compiled::new(&self.weights, &means, &covs)
    }

    pub(crate) fn compile_with_noise(&self, noise: &Mat) -> Result<Compiled> {
        self.compile_affine(&Mat::identity(self.dim(), self.dim()), noise)
    }

    pub(crate) fn compile(&self) -> Result<Compiled> {
        self.compile_with_noise(&Mat::zeros(self.dim(), self.dim()))
    }

    pub(crate) fn single_cov(&self) -> Option<&Mat> {
        self.is_gaussian().then(|| self.components[0].cov.as_matrix())
    }
}

/// One label `(u, v)` of a finite auxiliary pair with its conditional law of X.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledConditional {
    pub u: u32,
    pub v: u32,
    pub prob: f64,
    pub mixture: GaussianMixture,
}

/// Finite-label auxiliaries `(U, V)` with conditional mixtures `X | U=u, V=v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConditionalRepr")]
pub struct ConditionalMixture {
    labels: Vec<LabeledConditional>,
}

#[derive(Deserialize)]
struct ConditionalRepr {
    labels: Vec<LabeledConditional>,
}

impl TryFrom<ConditionalRepr> for ConditionalMixture {
    type Error = Error;
    fn try_from(r: ConditionalRepr) -> Result<Self> {
        ConditionalMixture::new(r.labels)
    }
}

/// A group of labels sharing a conditioning value, with its law of X.
#[derive(Debug, Clone)]
pub struct LabelGroup {
    pub prob: f64,
    pub mixture: GaussianMixture,
}

impl ConditionalMixture {
    pub fn new(mut labels: Vec<LabeledConditional>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidInput("conditional mixture needs at least one label".into()));
        }
        let mut probs: Vec<f64> = labels.iter().map(|l| l.prob).collect();
        normalize(&mut probs, "label probabilities")?;
        let p = labels[0].mixture.dim();
        let mut seen = std::collections::BTreeSet::new();
        for (l, q) in labels.iter_mut().zip(probs) {
            if l.mixture.dim() != p {
                return Err(Error::DimensionMismatch { expected: p, found: l.mixture.dim() });
            }
            if !seen.insert((l.u, l.v)) {
                return Err(Error::InvalidInput(format!("duplicate label ({}, {})", l.u, l.v)));
            }
            l.prob = q;
        }
        Ok(Self { labels })
    }

    /// Single label: `U` and `V` constant.
    pub fn constant(x: GaussianMixture) -> Self {
        Self { labels: vec![LabeledConditional { u: 0, v: 0, prob: 1.0, mixture: x }] }
    }

    pub fn dim(&self) -> usize {
        self.labels[0].mixture.dim()
    }

    pub fn labels(&self) -> &[LabeledConditional] {
        &self.labels
    }

    pub fn marginal(&self) -> Result<GaussianMixture> {
        let parts: Vec<(f64, &GaussianMixture)> = self.labels.iter().map(|l| (l.prob, &l.mixture)).collect();
        GaussianMixture::blend(&parts)
    }

    fn group_by(&self, key: impl Fn(&LabeledConditional) -> u64) -> Result<Vec<LabelGroup>> {
        let mut groups: BTreeMap<u64, Vec<&LabeledConditional>> = BTreeMap::new();
        for l in &self.labels {
            groups.entry(key(l)).or_default().push(l);
        }
        groups
            .into_values()
            .map(|ls| {
                let prob: f64 = ls.iter().map(|l| l.prob).sum();
                let parts: Vec<(f64, &GaussianMixture)> = ls.iter().map(|l| (l.prob, &l.mixture)).collect();
                Ok(LabelGroup { prob, mixture: GaussianMixture::blend(&parts)? })
            })
            .collect()
    }

    pub fn given_u(&self) -> Result<Vec<LabelGroup>> {
        self.group_by(|l| l.u as u64)
    }

    pub fn given_v(&self) -> Result<Vec<LabelGroup>> {
        self.group_by(|l| l.v as u64)
    }

    pub fn given_uv(&self) -> Result<Vec<LabelGroup>> {
        self.group_by(|l| ((l.u as u64) << 32) | l.v as u64)
    }

    /// Fails unless `X | U=u, V=v` depends on `v` alone (so `U → V → X`).
    pub fn check_markov(&self) -> Result<()> {
        let mut by_v: BTreeMap<u32, &GaussianMixture> = BTreeMap::new();
        for l in &self.labels {
            match by_v.get(&l.v) {
                None => {
                    by_v.insert(l.v, &l.mixture);
                }
                Some(first) if !mixtures_close(first, &l.mixture, 1e-12) => {
                    return Err(Error::MalformedChain(format!(
                        "law of X given v={} changes with u={}",
                        l.v, l.u
                    )));
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

fn mixtures_close(a: &GaussianMixture, b: &GaussianMixture, tol: f64) -> bool {
    a.weights.len() == b.weights.len()
        && a.weights.iter().zip(&b.weights).all(|(x, y)| (x - y).abs() <= tol)
        && a.components.iter().zip(&b.components).all(|(x, y)| {
            x.mean.iter().zip(&y.mean).all(|(p, q)| (p - q).abs() <= tol)
                && (x.cov.as_matrix() - y.cov.as_matrix()).abs().max() <= tol
        })
}

/// Fisher information estimate with the Frobenius norm of its entrywise standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherEstimate {
    pub matrix: Mat,
    pub stderr: f64,
}

/// `½ log det(2πe · cov)`.
pub fn entropy_gaussian(g: &GaussianVec) -> Result<f64> {
    g.cov.logdet()?;
    gaussian_entropy(g.cov.as_matrix())
}

/// Monte Carlo estimate of `−E[log f(X)]`.
pub fn entropy_mc(m: &GaussianMixture, cfg: &McConfig) -> Result<Estimate> {
    Ok(entropy_compiled(&m.compile()?, cfg))
}

/// Entropy through the closed form when available, otherwise Monte Carlo.
pub fn entropy(m: &GaussianMixture, cfg: &McConfig) -> Result<(Estimate, Backend)> {
    match m.single_cov() {
        Some(c) => Ok((Estimate::exact(gaussian_entropy(c)?), Backend::ClosedForm)),
        None => Ok((entropy_mc(m, cfg)?, Backend::Mc)),
    }
}

pub(crate) fn entropy_compiled(c: &Compiled, cfg: &McConfig) -> Estimate {
    let (mean, se) = mc::average(cfg.samples, cfg.seed, c.dim, 1, |u, z, out| {
        let mut x = [0.0; MAX_INNER];
        c.draw(u, z, &mut x[..c.dim]);
        out[0] = -c.log_density(&x[..c.dim]);
    });
    Estimate { value: mean[0], stderr: se[0] }
}

/// Analytic score `∇ log f(x)`.
pub fn score(m: &GaussianMixture, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), found: x.len() });
    }
    let c = m.compile()?;
    let mut s = vec![0.0; m.dim()];
    c.score(x, &mut s);
    Ok(s)
}

/// Monte Carlo estimate of `E[s sᵀ]`.
pub fn fisher_mc(m: &GaussianMixture, cfg: &McConfig) -> Result<FisherEstimate> {
    let (matrix, se) = fisher_compiled(&m.compile()?, cfg, None);
    Ok(FisherEstimate { matrix, stderr: se.norm() })
}

/// Fisher information through the closed form when available.
pub fn fisher(m: &GaussianMixture, cfg: &McConfig) -> Result<(FisherEstimate, Backend)> {
    match m.single_cov() {
        Some(c) => Ok((FisherEstimate { matrix: spd_inverse(c)?, stderr: 0.0 }, Backend::ClosedForm)),
        None => Ok((fisher_mc(m, cfg)?, Backend::Mc)),
    }
}

/// Fisher matrix of a compiled law, optionally restricted to the leading
/// `block` coordinates of the score. Returns entrywise standard errors too.
pub(crate) fn fisher_compiled(c: &Compiled, cfg: &McConfig, block: Option<usize>) -> (Mat, Mat) {
    let d = c.dim;
    let q = block.unwrap_or(d);
    let width = q * (q + 1) / 2;
    let (mean, se) = mc::average(cfg.samples, cfg.seed, d, width, |u, z, out| {
        let mut x = [0.0; MAX_INNER];
        let mut s = [0.0; MAX_INNER];
        c.draw(u, z, &mut x[..d]);
        c.score(&x[..d], &mut s[..d]);
        let mut k = 0;
        for i in 0..q {
            for j in i..q {
                out[k] = s[i] * s[j];
                k += 1;
            }
        }
    });
    (unpack(&mean, q), unpack(&se, q))
}

pub(crate) fn unpack(v: &[f64], q: usize) -> Mat {
    let mut m = Mat::zeros(q, q);
    let mut k = 0;
    for i in 0..q {
        for j in i..q {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// `cov(X | X+N) = (K_x⁻¹ + Σ⁻¹)⁻¹` for Gaussian X.
pub fn mmse_gaussian(x_cov: &PsdMatrix, noise_cov: &PsdMatrix) -> Result<PsdMatrix> {
    if x_cov.dim() != noise_cov.dim() {
        return Err(Error::DimensionMismatch { expected: x_cov.dim(), found: noise_cov.dim() });
    }
    let info = x_cov.inverse()?.as_matrix() + noise_cov.inverse()?.as_matrix();
    PsdMatrix::from_matrix(spd_inverse(&info)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_mixture(weights: &[f64], means: &[f64], vars: &[f64]) -> GaussianMixture {
        let comps = means
            .iter()
            .zip(vars)
            .map(|(m, v)| GaussianVec::new(vec![*m], PsdMatrix::from_diagonal(&[*v]).unwrap()).unwrap())
            .collect();
        GaussianMixture::new(weights.to_vec(), comps).unwrap()
    }

    #[test]
    fn gaussian_entropy_values() {
        let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
        let g = GaussianVec::centered(PsdMatrix::identity(1)).unwrap();
        assert!((entropy_gaussian(&g).unwrap() - 0.5 * two_pi_e.ln()).abs() < 1e-15);
        let g = GaussianVec::centered(PsdMatrix::identity(2)).unwrap();
        assert!((entropy_gaussian(&g).unwrap() - two_pi_e.ln()).abs() < 1e-14);
        let g = GaussianVec::centered(PsdMatrix::from_diagonal(&[4.0]).unwrap()).unwrap();
        assert!((entropy_gaussian(&g).unwrap() - 0.5 * (4.0 * two_pi_e).ln()).abs() < 1e-14);
    }

    #[test]
    fn single_component_mc_matches_closed_form() {
        let cov = PsdMatrix::from_rows(&[vec![2.0, 0.3], vec![0.3, 0.5]]).unwrap();
        let g = GaussianVec::centered(cov.clone()).unwrap();
        let m = GaussianMixture::gaussian(g.clone());
        let cfg = McConfig::new(50_000, 5).unwrap();
        let e = entropy_mc(&m, &cfg).unwrap();
        assert!((e.value - entropy_gaussian(&g).unwrap()).abs() < 3.0 * e.stderr);
        let f = fisher_mc(&m, &cfg).unwrap();
        let want = cov.inverse().unwrap();
        assert!((&f.matrix - want.as_matrix()).norm() < 5.0 * f.stderr);
    }

    #[test]
    fn collapsed_mixture_entropy() {
        let m = scalar_mixture(&[0.5, 0.5], &[-1e-6, 1e-6], &[1.0, 1.0]);
        let e = entropy_mc(&m, &McConfig::new(20_000, 1).unwrap()).unwrap();
        let want = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((e.value - want).abs() < 4.0 * e.stderr);
    }

    #[test]
    fn score_examples() {
        let m = GaussianMixture::centered_gaussian(PsdMatrix::identity(2)).unwrap();
        assert_eq!(score(&m, &[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        let m = GaussianMixture::centered_gaussian(PsdMatrix::from_diagonal(&[2.0]).unwrap()).unwrap();
        assert!((score(&m, &[1.0]).unwrap()[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn mmse_examples() {
        let one = PsdMatrix::identity(1);
        assert!((mmse_gaussian(&one, &one).unwrap().as_matrix()[(0, 0)] - 0.5).abs() < 1e-15);
        let k = PsdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let big = PsdMatrix::from_diagonal(&[1e6, 1e6]).unwrap();
        let r = mmse_gaussian(&k, &big).unwrap();
        assert!((r.as_matrix() - k.as_matrix()).norm() / k.as_matrix().norm() < 1e-4);
    }

    #[test]
    fn mixture_covariance_includes_spread() {
        let m = scalar_mixture(&[0.5, 0.5], &[-3.0, 3.0], &[1.0, 1.0]);
        assert!((m.covariance()[(0, 0)] - 10.0).abs() < 1e-12);
        assert_eq!(m.mean(), vec![0.0]);
    }

    #[test]
    fn json_shape() {
        let m = scalar_mixture(&[0.25, 0.75], &[-1.0, 1.0], &[1.0, 2.0]);
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.starts_with("{\"weights\":[0.25,0.75],\"components\":[{\"mean\":[-1.0],\"cov\":{\"dim\":1"));
        let back: GaussianMixture = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<GaussianMixture>(r#"{"weights":[0.5],"components":[]}"#).is_err());
    }

    #[test]
    fn markov_detection() {
        let a = scalar_mixture(&[1.0], &[0.0], &[1.0]);
        let b = scalar_mixture(&[1.0], &[1.0], &[1.0]);
        let lab = |u, v, m: &GaussianMixture| LabeledConditional { u, v, prob: 0.25, mixture: m.clone() };
        let ok = ConditionalMixture::new(vec![lab(0, 0, &a), lab(1, 0, &a), lab(0, 1, &b), lab(1, 1, &b)]).unwrap();
        assert!(ok.check_markov().is_ok());
        assert_eq!(ok.given_u().unwrap().len(), 2);
        assert_eq!(ok.given_uv().unwrap().len(), 4);
        let bad = ConditionalMixture::new(vec![lab(0, 0, &a), lab(1, 0, &b), lab(0, 1, &b), lab(1, 1, &b)]).unwrap();
        assert!(matches!(bad.check_markov(), Err(Error::MalformedChain(_))));
    }
}
