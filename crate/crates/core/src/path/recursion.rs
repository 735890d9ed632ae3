use serde::{Deserialize, Serialize};

use super::CostaPath;
use crate::error::{Error, Result};
use crate::info::{fisher_compiled, GaussianMixture};
use crate::linalg::{frob, min_eig, spd_inverse, sym, trace_prod, Mat, SymMatrix};
use crate::mc::McConfig;

/// Zero-sum tolerance on the level-1 matrices.
pub const ZERO_SUM_TOL: f64 = 1e-9;
const TAIL_TOL: f64 = 1e-12;

/// The table `A^{(j)}_i`, `j ≤ i`, and the trace chain `f^{(j)}`.
///
/// Levels are 0-based: `a[j][i - j]` holds `A^{(j+1)}_{i+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionState {
    pub a: Vec<Vec<SymMatrix>>,
    pub mu: Vec<f64>,
    pub i_mats: Vec<SymMatrix>,
    pub f: Vec<f64>,
}

impl RecursionState {
    pub fn levels(&self) -> usize {
        self.mu.len()
    }

    /// `A^{(j)}_i` with 0-based `j ≤ i`.
    pub fn entry(&self, j: usize, i: usize) -> &SymMatrix {
        &self.a[j][i - j]
    }
}

fn weighted_sum(mu: &[f64], mats: &[Mat]) -> Mat {
    let p = mats[0].nrows();
    mats.iter().zip(mu).fold(Mat::zeros(p, p), |acc, (m, w)| acc + m * *w)
}

/// Runs `A^{(j+1)}_i = A^{(j)}_i + (μ_j / Σ_{k>j} μ_k) A^{(j)}_j` and fills `f`.
pub fn build_recursion(mu: &[f64], a1: &[SymMatrix], i_mats: &[SymMatrix]) -> Result<RecursionState> {
    let l = mu.len();
    if l == 0 || a1.len() != l || i_mats.len() != l {
        return Err(Error::InvalidInput(format!(
            "need equally many weights, A matrices and I matrices, got {l}, {}, {}",
            a1.len(),
            i_mats.len()
        )));
    }
    let p = a1[0].dim();
    for m in a1.iter().chain(i_mats) {
        if m.dim() != p {
            return Err(Error::DimensionMismatch { expected: p, found: m.dim() });
        }
    }
    let first: Vec<Mat> = a1.iter().map(|m| m.as_matrix().clone()).collect();
    let scale = first.iter().map(|m| m.norm()).fold(1.0, f64::max);
    let residual = frob(&weighted_sum(mu, &first));
    if residual > ZERO_SUM_TOL * scale {
        return Err(Error::InvalidInput(format!("weighted sum of A matrices is {residual:e}, not zero")));
    }

    let mut levels = vec![first];
    for j in 0..l - 1 {
        let tail: f64 = mu[j + 1..].iter().sum();
        if tail <= TAIL_TOL {
            return Err(Error::WeightDegenerate { level: j + 1 });
        }
        let prev = &levels[j];
        let lead = &prev[0];
        let next = prev[1..].iter().map(|m| m + lead * (mu[j] / tail)).collect();
        levels.push(next);
    }
    let f = levels
        .iter()
        .enumerate()
        .map(|(j, row)| row.iter().enumerate().map(|(k, a)| mu[j + k] * trace_prod(a, i_mats[j + k].as_matrix())).sum())
        .collect();
    let a = levels
        .into_iter()
        .map(|row| row.into_iter().map(SymMatrix::from_matrix).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    Ok(RecursionState { a, mu: mu.to_vec(), i_mats: i_mats.to_vec(), f })
}

/// Independent re-check of the recursion properties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    /// Largest `‖Σ_i μ_i A^{(j)}_i‖` over levels.
    pub zero_sum_residual: f64,
    /// Smallest eigenvalue of `A^{(j)}_j` over levels.
    pub min_leading_eig: f64,
    /// `‖A^{(L)}_L‖`.
    pub last_norm: f64,
    /// Largest `f^{(j+1)} − f^{(j)}`; nonpositive for a decreasing chain.
    pub chain_slack: f64,
    /// `A^{(1)}_1 ⪰ … ⪰ A^{(1)}_L`.
    pub a_ordered: bool,
    /// `I₁ ⪰ … ⪰ I_L`.
    pub i_ordered: bool,
    pub pass: bool,
}

pub fn verify_recursion(state: &RecursionState, tol: f64) -> RecursionReport {
    let l = state.levels();
    let mut zero_sum: f64 = 0.0;
    let mut min_leading = f64::INFINITY;
    for j in 0..l {
        let row: Vec<Mat> = state.a[j].iter().map(|m| m.as_matrix().clone()).collect();
        zero_sum = zero_sum.max(frob(&weighted_sum(&state.mu[j..], &row)));
        min_leading = min_leading.min(min_eig(&row[0]));
    }
    let mut f = Vec::with_capacity(l);
    for j in 0..l {
        f.push(
            (j..l)
                .map(|i| state.mu[i] * trace_prod(state.entry(j, i).as_matrix(), state.i_mats[i].as_matrix()))
                .sum::<f64>(),
        );
    }
    let chain_slack = f.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(f[l - 1].abs() - tol);
    let ordered = |ms: &mut dyn Iterator<Item = &SymMatrix>| {
        let v: Vec<&Mat> = ms.map(|m| m.as_matrix()).collect();
        v.windows(2).all(|w| min_eig(&(w[0] - w[1])) >= -tol)
    };
    let a_ordered = ordered(&mut state.a[0].iter());
    let i_ordered = ordered(&mut state.i_mats.iter());
    let last_norm = frob(state.entry(l - 1, l - 1).as_matrix());
    let mut pass = zero_sum <= tol && last_norm <= tol;
    if a_ordered {
        pass &= min_leading >= -tol;
        if i_ordered {
            pass &= chain_slack <= tol;
        }
    }
    RecursionReport {
        zero_sum_residual: zero_sum,
        min_leading_eig: min_leading,
        last_norm,
        chain_slack,
        a_ordered,
        i_ordered,
        pass,
    }
}

/// Level-1 matrices and `𝐈` matrices of a certified Costa path at γ.
///
/// `A_i = (B+K_i)⁻¹ − (B+K₀)⁻¹ + M₁ − M₂`, shifted to an exact zero sum, and
/// `𝐈_i = Q_i J(X+W_i) Q_i − Q_i` with `Q_i = (B+K_i) K_{Δ_i}⁻¹ (B+K₀)`.
pub fn recursion_from_costa(path: &CostaPath, gamma: f64, cfg: &McConfig) -> Result<RecursionState> {
    path.validate()?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let [m1, m2] = match path.multipliers.as_deref() {
        Some([m1, m2]) => [m1.as_matrix(), m2.as_matrix()],
        _ => return Err(Error::InvalidInput("recursion needs the certificate multipliers".into())),
    };
    let b = path.b_star.as_matrix();
    let a0 = b + path.k[0].as_matrix();
    let a0_inv = spd_inverse(&a0)?;
    let mut a1 = Vec::new();
    let mut i_mats = Vec::new();
    for (i, ki) in path.k[1..].iter().enumerate() {
        let ai = b + ki.as_matrix();
        a1.push(spd_inverse(&ai)? - &a0_inv + m1 - m2);
        let q = sym(&(&ai * spd_inverse(&(&ai * gamma + &a0 * (1.0 - gamma)))? * &a0));
        let kw = &q - b;
        let j = fisher_with_noise(&path.x, &kw, &cfg.child(&[i as u64]))?;
        i_mats.push(SymMatrix::from_matrix(&q * j * &q - &q)?);
    }
    let shift = weighted_sum(&path.mu, &a1);
    let a1 = a1.into_iter().map(|m| SymMatrix::from_matrix(m - &shift)).collect::<Result<Vec<_>>>()?;
    build_recursion(&path.mu, &a1, &i_mats)
}

fn fisher_with_noise(x: &GaussianMixture, noise: &Mat, cfg: &McConfig) -> Result<Mat> {
    match x.single_cov() {
        Some(c) => spd_inverse(&(c + noise)),
        None => Ok(fisher_compiled(&x.compile_with_noise(noise)?, cfg, None).0),
    }
}
