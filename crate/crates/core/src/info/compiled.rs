//! Precomputed mixture evaluator used inside Monte Carlo loops.
//!
//! Works in any dimension up to `MAX_INNER` (joint path densities are 2p).

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, Mat};

pub(crate) const MAX_INNER: usize = 2 * crate::linalg::MAX_DIM;

#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub dim: usize,
    cum_weights: Vec<f64>,
    log_coef: Vec<f64>,
    means: Vec<Vec<f64>>,
    chol: Vec<Vec<f64>>,
}

impl Compiled {
    pub fn new(weights: &[f64], means: &[Vec<f64>], covs: &[Mat]) -> Result<Self> {
        let dim = covs[0].nrows();
        if dim > MAX_INNER {
            return Err(Error::DimensionTooLarge(dim));
        }
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        let mut cum = 0.0;
        let mut out = Self {
            dim,
            cum_weights: Vec::new(),
            log_coef: Vec::new(),
            means: means.to_vec(),
            chol: Vec::new(),
        };
        for (w, c) in weights.iter().zip(covs) {
            let l = cholesky_lower(c)?;
            let half_logdet: f64 = l.diagonal().iter().map(|x| x.ln()).sum();
            cum += w;
            out.cum_weights.push(cum);
            out.log_coef.push(w.ln() - half_logdet - dim as f64 * half_log_2pi);
            out.chol.push((0..dim * dim).map(|k| l[(k / dim, k % dim)]).collect());
        }
        Ok(out)
    }

    pub fn components(&self) -> usize {
        self.means.len()
    }

    pub fn pick(&self, u: f64) -> usize {
        let total = *self.cum_weights.last().unwrap();
        let target = u * total;
        self.cum_weights
            .iter()
            .position(|&c| target < c)
            .unwrap_or(self.cum_weights.len() - 1)
    }

    /// Writes `m_k + L_k z` for the component selected by `u`.
    pub fn draw(&self, u: f64, z: &[f64], out: &mut [f64]) {
        self.draw_component(self.pick(u), z, out);
    }

    pub fn draw_component(&self, k: usize, z: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let l = &self.chol[k];
        for i in 0..d {
            let mut s = self.means[k][i];
            for j in 0..=i {
                s += l[i * d + j] * z[j];
            }
            out[i] = s;
        }
    }

    /// Per-component log of `w_k N(x; m_k, C_k)`, and optionally `C_k⁻¹(x − m_k)`.
    fn component_terms(&self, x: &[f64], k: usize, solve: Option<&mut [f64]>) -> f64 {
        let d = self.dim;
        let l = &self.chol[k];
        let mut y = [0.0; MAX_INNER];
        for i in 0..d {
            let mut s = x[i] - self.means[k][i];
            for j in 0..i {
                s -= l[i * d + j] * y[j];
            }
            y[i] = s / l[i * d + i];
        }
        let q: f64 = y[..d].iter().map(|v| v * v).sum();
        if let Some(w) = solve {
            for i in (0..d).rev() {
                let mut s = y[i];
                for j in i + 1..d {
                    s -= l[j * d + i] * w[j];
                }
                w[i] = s / l[i * d + i];
            }
        }
        self.log_coef[k] - 0.5 * q
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for k in 0..self.components() {
            let t = self.component_terms(x, k, None);
            if t > max {
                sum = sum * (max - t).exp() + 1.0;
                max = t;
            } else {
                sum += (t - max).exp();
            }
        }
        max + sum.ln()
    }

    /// Log density and score `∇ log f(x)` written into `score`.
    pub fn score(&self, x: &[f64], score: &mut [f64]) -> f64 {
        let d = self.dim;
        let mut solve = [0.0; MAX_INNER];
        let mut acc = [0.0; MAX_INNER];
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for k in 0..self.components() {
            let t = self.component_terms(x, k, Some(&mut solve[..d]));
            let w = if t > max {
                let rescale = (max - t).exp();
                sum *= rescale;
                acc[..d].iter_mut().for_each(|a| *a *= rescale);
                max = t;
                1.0
            } else {
                (t - max).exp()
            };
            sum += w;
            for i in 0..d {
                acc[i] += w * solve[i];
            }
        }
        for i in 0..d {
            score[i] = -acc[i] / sum;
        }
        max + sum.ln()
    }

    /// Component responsibilities at `x`.
    pub fn responsibilities(&self, x: &[f64], out: &mut [f64]) {
        let n = self.components();
        let mut max = f64::NEG_INFINITY;
        for (k, o) in out.iter_mut().enumerate().take(n) {
            *o = self.component_terms(x, k, None);
            max = max.max(*o);
        }
        let mut total = 0.0;
        for v in out[..n].iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        out[..n].iter_mut().for_each(|v| *v /= total);
    }
}
