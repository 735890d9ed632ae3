//! Log-det programs with PSD constraints, solved by projected gradient ascent,
//! and the KKT certificates that feed the path module.

mod bc;
mod lv;
mod region;
mod sec;

pub use bc::*;
pub use lv::*;
pub use region::*;
pub use sec::*;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::linalg::{eigen, frob, psd_part, sym, Mat};

/// Default KKT acceptance tolerance.
pub const KKT_TOL: f64 = 1e-7;
/// Eigenvalues below this mark a constraint as active.
pub const ACTIVE_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub kkt_tol: f64,
    pub pg_tol: f64,
    pub rel_tol: f64,
    pub window: usize,
    pub dykstra_iters: usize,
    pub dykstra_stall: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            kkt_tol: KKT_TOL,
            pg_tol: 1e-9,
            rel_tol: 1e-12,
            window: 20,
            dykstra_iters: 500,
            dykstra_stall: 1e-13,
        }
    }
}

/// KKT residuals of a candidate primal/multiplier pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Frobenius residual of each stationarity equation.
    pub stationarity: Vec<f64>,
    /// Norms of the complementary-slackness products.
    pub complementarity: Vec<f64>,
    /// Smallest eigenvalue over all multipliers.
    pub multiplier_min_eig: f64,
    /// Smallest eigenvalue over all primal constraint margins.
    pub feasibility: f64,
    pub tol: f64,
    pub pass: bool,
}

impl KktReport {
    pub(crate) fn new(stationarity: Vec<f64>, complementarity: Vec<f64>, multiplier_min_eig: f64, feasibility: f64, tol: f64) -> Self {
        let pass = stationarity.iter().chain(&complementarity).all(|r| *r <= tol)
            && multiplier_min_eig >= -tol
            && feasibility >= -tol;
        Self { stationarity, complementarity, multiplier_min_eig, feasibility, tol, pass }
    }

    /// Largest residual across every group, with negative margins counted as residuals.
    pub fn max_residual(&self) -> f64 {
        self.stationarity
            .iter()
            .chain(&self.complementarity)
            .copied()
            .chain([-self.multiplier_min_eig, -self.feasibility])
            .fold(0.0, f64::max)
    }
}

/// Smooth objective over a tuple of symmetric blocks.
pub(crate) trait Program {
    /// Objective to maximize; `None` outside the domain.
    fn value(&self, x: &[Mat]) -> Option<f64>;
    fn gradient(&self, x: &[Mat]) -> Vec<Mat>;
    /// Closed-form projections whose intersection is the feasible set.
    fn sets(&self) -> usize;
    fn project_onto(&self, set: usize, x: &[Mat]) -> Vec<Mat>;
    /// Maps a nearly feasible point to an exactly feasible one nearby.
    fn restore(&self, x: Vec<Mat>) -> Vec<Mat>;
}

fn add(a: &[Mat], b: &[Mat], t: f64) -> Vec<Mat> {
    a.iter().zip(b).map(|(x, y)| x + y * t).collect()
}

fn inner(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn dist(a: &[Mat], b: &[Mat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum::<f64>().sqrt()
}

/// Dykstra's alternating projection onto the intersection of the program's sets.
pub(crate) fn dykstra(prog: &impl Program, z: &[Mat], iters: usize, stall: f64) -> Vec<Mat> {
    let n = prog.sets();
    let mut x: Vec<Mat> = z.iter().map(sym).collect();
    if n == 1 {
        return prog.restore(prog.project_onto(0, &x));
    }
    let mut incr: Vec<Vec<Mat>> = vec![x.iter().map(|m| m * 0.0).collect(); n];
    for _ in 0..iters {
        let start = x.clone();
        let mut moved = 0.0;
        for (i, p) in incr.iter_mut().enumerate() {
            let y = add(&x, p, 1.0);
            x = prog.project_onto(i, &y);
            let next = add(&y, &x, -1.0);
            moved += dist(&next, p);
            *p = next;
        }
        if dist(&x, &start) + moved <= stall {
            break;
        }
    }
    prog.restore(x)
}

pub(crate) struct Ascent {
    pub x: Vec<Mat>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO: f64 = 1e-4;
const POLISH_ITERS: usize = 20_000;
const POLISH_STALL: f64 = 1e-15;

/// Projected gradient ascent with Armijo backtracking and Barzilai–Borwein steps.
pub(crate) fn ascend(prog: &impl Program, x0: &[Mat], opts: &SolverOptions) -> Ascent {
    let proj = |z: &[Mat]| dykstra(prog, z, opts.dykstra_iters, opts.dykstra_stall);
    let mut x = dykstra(prog, x0, POLISH_ITERS, POLISH_STALL);
    let mut v = prog.value(&x).unwrap_or(f64::NEG_INFINITY);
    let mut g = prog.gradient(&x);
    let mut step = 1.0;
    let mut history = vec![v];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        if dist(&proj(&add(&x, &g, 1.0)), &x) <= opts.pg_tol {
            converged = true;
            break;
        }
        let mut t = step;
        let accepted = loop {
            let trial = proj(&add(&x, &g, t));
            let s: Vec<Mat> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            if let Some(vt) = prog.value(&trial) {
                if vt >= v + ARMIJO * inner(&g, &s) {
                    break Some((trial, vt, s));
                }
            }
            t *= 0.5;
            if t < 1e-20 {
                break None;
            }
        };
        let Some((trial, vt, s)) = accepted else {
            converged = true;
            break;
        };
        let g_new = prog.gradient(&trial);
        let y: Vec<Mat> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = inner(&s, &y);
        let ss = inner(&s, &s);
        step = if sy < 0.0 && ss > 0.0 { (ss / -sy).clamp(1e-10, 1e6) } else { (2.0 * t).min(1e6) };
        x = trial;
        v = vt;
        g = g_new;
        history.push(v);
        if history.len() > opts.window {
            let old = history[history.len() - 1 - opts.window];
            if (v - old).abs() <= opts.rel_tol * v.abs().max(1.0) {
                converged = true;
                break;
            }
        }
    }
    let x = dykstra(prog, &x, POLISH_ITERS, POLISH_STALL);
    let value = prog.value(&x).unwrap_or(v);
    Ascent { x, value, iterations, converged }
}

/// Orthonormal basis of the eigenspace of `m` with eigenvalues `≤ tol`.
pub(crate) fn active_basis(m: &Mat, tol: f64) -> Mat {
    let e = eigen(m);
    let cols: Vec<usize> = (0..m.nrows()).filter(|&i| e.eigenvalues[i] <= tol).collect();
    let mut out = Mat::zeros(m.nrows(), cols.len());
    for (k, &i) in cols.iter().enumerate() {
        out.set_column(k, &e.eigenvectors.column(i));
    }
    out
}

/// A PSD multiplier supported on an active eigenspace, entering block `b`'s
/// stationarity equation with coefficient `coef[b]`.
pub(crate) struct ActiveConstraint {
    pub basis: Mat,
    pub coef: Vec<f64>,
}

/// Result of multiplier recovery.
pub(crate) struct Recovered {
    pub scalars: Vec<f64>,
    pub multipliers: Vec<Mat>,
}

/// Solves `G_b + Σ_s θ_s E_{s,b} + Σ_k c_{k,b} V_k Y_k V_kᵀ = 0` in least squares
/// with `Y_k ⪰ 0` and `θ_s` in its bounds, by alternating projections between
/// the least-squares solution set and the cone.
pub(crate) fn recover_multipliers(
    grads: &[Mat],
    scalar_dirs: &[(Vec<Mat>, (f64, f64))],
    constraints: &[ActiveConstraint],
) -> Recovered {
    let p = grads[0].nrows();
    let rows_per = p * (p + 1) / 2;
    let vech = |m: &Mat, out: &mut DVector<f64>, offset: usize| {
        let mut r = offset;
        for i in 0..p {
            for j in i..p {
                out[r] = if i == j { m[(i, j)] } else { std::f64::consts::SQRT_2 * m[(i, j)] };
                r += 1;
            }
        }
    };
    let sizes: Vec<usize> = constraints.iter().map(|c| c.basis.ncols()).collect();
    let ns = scalar_dirs.len();
    let cols = ns + sizes.iter().map(|r| r * (r + 1) / 2).sum::<usize>();
    let nrows = rows_per * grads.len();
    let mut b = DVector::zeros(nrows);
    for (k, g) in grads.iter().enumerate() {
        vech(&(-g), &mut b, k * rows_per);
    }
    let mut a = Mat::zeros(nrows, cols.max(1));
    let mut col = 0;
    for (dirs, _) in scalar_dirs {
        let mut v = DVector::zeros(nrows);
        for (k, e) in dirs.iter().enumerate() {
            vech(e, &mut v, k * rows_per);
        }
        a.set_column(col, &v);
        col += 1;
    }
    for c in constraints {
        let r = c.basis.ncols();
        for i in 0..r {
            for j in i..r {
                let vi = c.basis.column(i);
                let vj = c.basis.column(j);
                let unit = if i == j { vi * vi.transpose() } else { (vi * vj.transpose() + vj * vi.transpose()) / std::f64::consts::SQRT_2 };
                let mut v = DVector::zeros(nrows);
                for (k, coef) in c.coef.iter().enumerate() {
                    vech(&(&unit * *coef), &mut v, k * rows_per);
                }
                a.set_column(col, &v);
                col += 1;
            }
        }
    }
    let unpack = |u: &DVector<f64>| -> (Vec<f64>, Vec<Mat>) {
        let scalars = (0..ns).map(|s| u[s]).collect();
        let mut at = ns;
        let mut mats = Vec::new();
        for (c, &r) in constraints.iter().zip(&sizes) {
            let mut y = Mat::zeros(r, r);
            for i in 0..r {
                for j in i..r {
                    let val = if i == j { u[at] } else { u[at] / std::f64::consts::SQRT_2 };
                    y[(i, j)] = val;
                    y[(j, i)] = val;
                    at += 1;
                }
            }
            mats.push((y, c));
        }
        (scalars, mats.into_iter().map(|(y, _)| y).collect())
    };
    let pack = |scalars: &[f64], ys: &[Mat], u: &mut DVector<f64>| {
        let mut at = 0;
        for s in scalars {
            u[at] = *s;
            at += 1;
        }
        for (y, &r) in ys.iter().zip(&sizes) {
            for i in 0..r {
                for j in i..r {
                    u[at] = if i == j { y[(i, j)] } else { y[(i, j)] * std::f64::consts::SQRT_2 };
                    at += 1;
                }
            }
        }
    };
    let pinv = if cols == 0 { Mat::zeros(1, nrows) } else { a.clone().pseudo_inverse(1e-12).unwrap_or_else(|_| Mat::zeros(cols, nrows)) };
    let mut u = if cols == 0 { DVector::zeros(1) } else { &pinv * &b };
    let cone = |u: &DVector<f64>| -> DVector<f64> {
        let (mut s, ys) = unpack(u);
        for (v, (_, (lo, hi))) in s.iter_mut().zip(scalar_dirs) {
            *v = v.clamp(*lo, *hi);
        }
        let ys: Vec<Mat> = ys.iter().map(|y| if y.nrows() == 0 { y.clone() } else { psd_part(y) }).collect();
        let mut out = u.clone();
        pack(&s, &ys, &mut out);
        out
    };
    if cols > 0 {
        for _ in 0..2000 {
            let c = cone(&u);
            let next = &c - &pinv * (&a * &c - &b);
            let change = (&next - &u).norm();
            u = next;
            if change <= 1e-15 {
                break;
            }
        }
        u = cone(&u);
    }
    let (scalars, ys) = if cols == 0 { (Vec::new(), sizes.iter().map(|_| Mat::zeros(0, 0)).collect()) } else { unpack(&u) };
    let multipliers = constraints
        .iter()
        .zip(&ys)
        .map(|(c, y)| if c.basis.ncols() == 0 { Mat::zeros(p, p) } else { sym(&(&c.basis * y * c.basis.transpose())) })
        .collect();
    Recovered { scalars, multipliers }
}

/// Norm of a complementarity product `A M`.
pub(crate) fn comp(a: &Mat, m: &Mat) -> f64 {
    frob(&(a * m))
}

/// Which start produced the reported solution, and whether starts disagree.
pub(crate) fn multiple_optima(primal_a: &[Mat], primal_b: &[Mat], value_a: f64, value_b: f64) -> bool {
    dist(primal_a, primal_b) > 1e-6 && (value_a - value_b).abs() <= 1e-8
}
