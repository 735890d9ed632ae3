//! Seeded random instances for batteries, property tests and the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::info::{ConditionalMixture, GaussianMixture, GaussianVec, LabeledConditional};
use crate::linalg::{cholesky_lower, max_eig, spd_inverse, sym, Mat, PsdMatrix};
use crate::path::Auxiliaries;
use crate::solvers::{BcProblem, BcSolution, CostaProblem, LvProblem, SecProblem, SecSolution};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn orthogonal(p: usize, rng: &mut ChaCha8Rng) -> Mat {
    gaussian_matrix(p, p, rng).qr().q()
}

/// `Q diag(λ) Qᵀ` with eigenvalues uniform in `[lo, hi]`.
pub fn pd_matrix(p: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> PsdMatrix {
    let q = orthogonal(p, rng);
    let d = Mat::from_diagonal(&nalgebra::DVector::from_fn(p, |_, _| rng.random_range(lo..=hi)));
    PsdMatrix::from_matrix(sym(&(&q * d * q.transpose()))).expect("PD by construction")
}

/// `K₁ ⪯ K₂ ⪯ … ⪯ K_n`.
pub fn increasing_chain(p: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<PsdMatrix> {
    let mut out = vec![pd_matrix(p, 0.3, 1.5, rng)];
    for _ in 1..n {
        let step = pd_matrix(p, 0.0, 1.0, rng);
        out.push(PsdMatrix::from_matrix(out.last().unwrap().as_matrix() + step.as_matrix()).expect("sum of PSD"));
    }
    out
}

/// Positive weights summing to one.
pub fn simplex_weights(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Mixture with well-separated random means and random PD covariances.
pub fn mixture(p: usize, components: usize, spread: f64, rng: &mut ChaCha8Rng) -> GaussianMixture {
    let weights = simplex_weights(components, rng);
    let comps = (0..components)
        .map(|_| {
            let mean = (0..p).map(|_| spread * rng.sample::<f64, _>(StandardNormal)).collect();
            GaussianVec::new(mean, pd_matrix(p, 0.3, 1.5, rng)).expect("valid component")
        })
        .collect();
    GaussianMixture::new(weights, comps).expect("valid mixture")
}

/// Scales `X` by `√c` so that `cov(√c X) ⪯ fill · bound`, with equality along one direction.
pub fn scale_to_fit(x: &GaussianMixture, bound: &Mat, fill: f64) -> Result<GaussianMixture> {
    let c = fill / max_eig(&whiten(&x.covariance(), bound)?);
    scale(x, c)
}

pub fn lv_problem(p: usize, rng: &mut ChaCha8Rng) -> LvProblem {
    LvProblem {
        k1: pd_matrix(p, 0.3, 3.0, rng),
        k2: pd_matrix(p, 0.3, 3.0, rng),
        s: pd_matrix(p, 0.5, 4.0, rng),
        mu: rng.random_range(1.0..3.0),
    }
}

/// Costa-type instance with `L` weighted branches.
pub fn costa_problem(p: usize, l: usize, rng: &mut ChaCha8Rng) -> CostaProblem {
    let mut k = vec![pd_matrix(p, 0.3, 3.0, rng)];
    k.extend(increasing_chain(p, l, rng));
    CostaProblem { k, mu: simplex_weights(l, rng), s: pd_matrix(p, 0.5, 4.0, rng) }
}

pub fn bc_problem(p: usize, rng: &mut ChaCha8Rng) -> BcProblem {
    let a: f64 = rng.random_range(0.05..0.95);
    let b: f64 = rng.random_range(0.05..0.95);
    BcProblem {
        k1: pd_matrix(p, 0.3, 3.0, rng),
        k2: pd_matrix(p, 0.3, 3.0, rng),
        s: pd_matrix(p, 0.5, 4.0, rng),
        mu1: a.min(b),
        mu2: a.max(b),
    }
}

/// Secure source instance whose distortion target is a random fraction of the
/// side-information-only error, so the distortion constraint is sometimes active.
pub fn sec_problem(p: usize, rng: &mut ChaCha8Rng) -> SecProblem {
    let k = pd_matrix(p, 0.5, 3.0, rng);
    let ky = pd_matrix(p, 0.3, 3.0, rng);
    let kz = pd_matrix(p, 0.3, 3.0, rng);
    let prior = spd_inverse(&(spd_inverse(k.as_matrix()).unwrap() + spd_inverse(ky.as_matrix()).unwrap())).unwrap();
    let d = PsdMatrix::from_matrix(prior * rng.random_range(0.3..1.2)).expect("scaled PD");
    SecProblem { k, ky, kz, d, mu: rng.random_range(0.0..3.0) }
}

fn centered_mixture(p: usize, rng: &mut ChaCha8Rng) -> GaussianMixture {
    let m = mixture(p, 2, 1.0, rng);
    let mean = m.mean();
    let comps = m
        .components()
        .iter()
        .map(|g| GaussianVec::new(g.mean.iter().zip(&mean).map(|(a, b)| a - b).collect(), g.cov.clone()).unwrap())
        .collect();
    GaussianMixture::new(m.weights().to_vec(), comps).unwrap()
}

fn shifted(m: &GaussianMixture, shift: &[f64]) -> Result<GaussianMixture> {
    let comps = m
        .components()
        .iter()
        .map(|g| GaussianVec::new(g.mean.iter().zip(shift).map(|(a, b)| a + b).collect(), g.cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(m.weights().to_vec(), comps)
}

/// Two-by-two labelled mixture `(U, V, X)` with `cov(X) ⪯ fill · S`.
pub fn bc_auxiliaries(sol: &BcSolution, fill: f64, rng: &mut ChaCha8Rng) -> Result<Auxiliaries> {
    let p = sol.problem.s.dim();
    let probs = simplex_weights(4, rng);
    let mut labels = Vec::new();
    for (i, prob) in probs.into_iter().enumerate() {
        let mixture = mixture(p, 2, 1.0, rng);
        labels.push(LabeledConditional { u: (i / 2) as u32, v: (i % 2) as u32, prob, mixture });
    }
    let joint = ConditionalMixture::new(labels)?;
    let c = fill / max_eig(&whiten(&joint.marginal()?.covariance(), sol.problem.s.as_matrix())?);
    let labels = joint
        .labels()
        .iter()
        .map(|l| Ok(LabeledConditional { mixture: scale(&l.mixture, c)?, ..l.clone() }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Auxiliaries::Finite(ConditionalMixture::new(labels)?))
}

fn whiten(m: &Mat, bound: &Mat) -> Result<Mat> {
    let linv = cholesky_lower(bound)?.try_inverse().expect("Cholesky factor is invertible");
    Ok(sym(&(&linv * m * linv.transpose())))
}

fn scale(m: &GaussianMixture, c: f64) -> Result<GaussianMixture> {
    let root = c.sqrt();
    let comps = m
        .components()
        .iter()
        .map(|g| GaussianVec::new(g.mean.iter().map(|x| x * root).collect(), PsdMatrix::from_matrix(g.cov.as_matrix() * c)?))
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::new(m.weights().to_vec(), comps)
}

/// Markov chain `U → V → X` with two values each, `cov(X|V=v) ⪯ 0.9 Δ₁` and
/// `cov(X) ⪯ K`, so the distortion constraint holds.
pub fn sec_auxiliaries(sol: &SecSolution, rng: &mut ChaCha8Rng) -> Result<Auxiliaries> {
    let pr = &sol.problem;
    let p = pr.k.dim();
    let kinv = spd_inverse(pr.k.as_matrix())?;
    let delta1 = spd_inverse(&(&kinv + sol.b1.as_matrix() + sol.b2.as_matrix()))?;
    let room = pr.k.as_matrix() - &delta1 * 0.9;
    let l = cholesky_lower(&sym(&(room * 0.5 + Mat::identity(p, p) * 1e-12)))?;
    let dir: Vec<f64> = {
        let e = gaussian_matrix(p, 1, rng);
        let e = &e / e.norm();
        (&l * e).iter().copied().collect()
    };
    let pv: f64 = rng.random_range(0.3..0.7);
    let shifts = [dir.iter().map(|x| x * ((1.0 - pv) / pv).sqrt()).collect::<Vec<_>>(), dir.iter().map(|x| -x * (pv / (1.0 - pv)).sqrt()).collect()];
    let mut per_v = Vec::new();
    for shift in &shifts {
        let m = scale_to_fit(&centered_mixture(p, rng), &delta1, 0.9)?;
        per_v.push(shifted(&m, shift)?);
    }
    let mut labels = Vec::new();
    for u in 0..2u32 {
        let pu: f64 = rng.random_range(0.2..0.8);
        let given_u = [pu, 1.0 - pu];
        for v in 0..2u32 {
            let pvu = if v == 0 { pv } else { 1.0 - pv };
            labels.push(LabeledConditional { u, v, prob: 0.5 * given_u[v as usize] * pvu, mixture: per_v[v as usize].clone() });
        }
    }
    let total: f64 = labels.iter().map(|l| l.prob).sum();
    labels.iter_mut().for_each(|l| l.prob /= total);
    Ok(Auxiliaries::Finite(ConditionalMixture::new(labels)?))
}
