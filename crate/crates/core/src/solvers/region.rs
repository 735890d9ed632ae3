use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_bc_from, solve_sec_from, BcProblem, SecProblem, SolverOptions};
use crate::error::Result;
use crate::linalg::{Mat, PsdMatrix};

/// Broadcast problems sharing channels and power, swept over `(μ₁, μ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcFamily {
    pub k1: PsdMatrix,
    pub k2: PsdMatrix,
    pub s: PsdMatrix,
    pub weights: Vec<[f64; 2]>,
}

/// Secure source problems sharing covariances and distortion, swept over μ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecFamily {
    pub k: PsdMatrix,
    pub ky: PsdMatrix,
    pub kz: PsdMatrix,
    pub d: PsdMatrix,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub weights: Vec<f64>,
    pub value: f64,
    pub b1: Option<PsdMatrix>,
    pub b2: Option<PsdMatrix>,
    /// `(R₀, R₁, R₂)` for broadcast, `(R, R_e)` for secure source.
    pub rates: Vec<f64>,
    pub converged: bool,
    pub kkt_pass: bool,
    pub error: Option<String>,
}

impl RegionPoint {
    fn failed(weights: Vec<f64>, err: String) -> Self {
        Self { weights, value: f64::NAN, b1: None, b2: None, rates: Vec::new(), converged: false, kkt_pass: false, error: Some(err) }
    }

    pub fn ok(&self) -> bool {
        self.converged && self.kkt_pass && self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTrace {
    pub points: Vec<RegionPoint>,
    /// Optimal value is monotone in each weight across the sweep.
    pub monotone: bool,
}

impl RegionTrace {
    fn new(points: Vec<RegionPoint>, increasing: bool) -> Self {
        let mut monotone = true;
        for a in &points {
            for b in &points {
                let dominated = a.weights.iter().zip(&b.weights).all(|(x, y)| x <= y);
                if dominated && a.value.is_finite() && b.value.is_finite() {
                    let gap = if increasing { a.value - b.value } else { b.value - a.value };
                    monotone &= gap <= 1e-9 * a.value.abs().max(1.0);
                }
            }
        }
        Self { points, monotone }
    }

    pub fn all_ok(&self) -> bool {
        self.points.iter().all(RegionPoint::ok)
    }

    /// CSV with the weights, value, rates and a convergence flag per point.
    pub fn to_csv(&self, weight_names: &[&str], rate_names: &[&str]) -> String {
        let mut out = weight_names.join(",");
        out.push_str(",value,");
        out.push_str(&rate_names.join(","));
        out.push_str(",converged\n");
        for p in &self.points {
            let mut cells: Vec<String> = p.weights.iter().map(|w| format!("{w:?}")).collect();
            cells.push(format!("{:?}", p.value));
            for i in 0..rate_names.len() {
                cells.push(p.rates.get(i).map_or("nan".into(), |r| format!("{r:?}")));
            }
            cells.push(p.ok().to_string());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

fn sweep<W: Sync, F>(weights: &[W], cold_start: bool, solve: F) -> Vec<RegionPoint>
where
    F: Fn(&W, Option<(&Mat, &Mat)>) -> RegionPoint + Sync,
{
    if cold_start {
        return weights.par_iter().map(|w| solve(w, None)).collect();
    }
    let mut out: Vec<RegionPoint> = Vec::with_capacity(weights.len());
    for w in weights {
        let prev = out.iter().rev().find_map(|p| Some((p.b1.as_ref()?.as_matrix(), p.b2.as_ref()?.as_matrix())));
        let point = solve(w, prev);
        out.push(point);
    }
    out
}

/// Solves every point of the family; warm-started sequentially unless `cold_start`.
pub fn region_bc(family: &BcFamily, opts: &SolverOptions, cold_start: bool) -> RegionTrace {
    let points = sweep(&family.weights, cold_start, |w, init| {
        let problem = BcProblem { k1: family.k1.clone(), k2: family.k2.clone(), s: family.s.clone(), mu1: w[0], mu2: w[1] };
        match solve_bc_from(&problem, init, opts) {
            Ok(sol) => RegionPoint {
                weights: w.to_vec(),
                value: sol.value,
                rates: vec![sol.rates.r0, sol.rates.r1, sol.rates.r2],
                converged: sol.converged,
                kkt_pass: sol.kkt.pass,
                b1: Some(sol.b1),
                b2: Some(sol.b2),
                error: None,
            },
            Err(e) => RegionPoint::failed(w.to_vec(), e.to_string()),
        }
    });
    RegionTrace::new(points, true)
}

/// Solves every point of the family; warm-started sequentially unless `cold_start`.
pub fn region_sec(family: &SecFamily, opts: &SolverOptions, cold_start: bool) -> RegionTrace {
    let points = sweep(&family.mu, cold_start, |&mu, init| {
        let problem = SecProblem { k: family.k.clone(), ky: family.ky.clone(), kz: family.kz.clone(), d: family.d.clone(), mu };
        match solve_sec_from(&problem, init, opts) {
            Ok(sol) => RegionPoint {
                weights: vec![mu],
                value: sol.value,
                rates: vec![sol.rate, sol.equivocation],
                converged: sol.converged,
                kkt_pass: sol.kkt.pass,
                b1: Some(sol.b1),
                b2: Some(sol.b2),
                error: None,
            },
            Err(e) => RegionPoint::failed(vec![mu], e.to_string()),
        }
    });
    RegionTrace::new(points, true)
}

/// Convenience for callers that want the family's points to be validated up front.
pub fn validate_bc_family(family: &BcFamily) -> Result<()> {
    for w in &family.weights {
        BcProblem { k1: family.k1.clone(), k2: family.k2.clone(), s: family.s.clone(), mu1: w[0], mu2: w[1] }.validate()?;
    }
    Ok(())
}

pub fn validate_sec_family(family: &SecFamily) -> Result<()> {
    for &mu in &family.mu {
        SecProblem { k: family.k.clone(), ky: family.ky.clone(), kz: family.kz.clone(), d: family.d.clone(), mu }.validate()?;
    }
    Ok(())
}
