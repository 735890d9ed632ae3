//! The acceptance battery, parameterized by instance counts so the full run
//! and the quick self-test share one implementation.

use extremal_core::info::{Backend, GaussianMixture, Tolerances};
use extremal_core::mc::{derive_seed, McConfig};
use extremal_core::path::{
    certify, recursion_from_costa, verify_recursion, BcPath, CostaPath, LvPath, MonotonePathSync, PathTrace, SecPath,
};
use extremal_core::random::{
    bc_auxiliaries, bc_problem, costa_problem, lv_problem, mixture, rng, scale_to_fit, sec_auxiliaries, sec_problem,
};
use extremal_core::solvers::{
    costa_certificate, extremal_gap, solve_bc, solve_lv, solve_sec, BcProblem, SecProblem, SolverOptions, KKT_TOL,
};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::battery::{run_battery, Family};
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: u32, name: &'static str, pass: bool, detail: String) -> Self {
        Self { id, name, pass, detail }
    }

    fn failed(id: u32, name: &'static str, err: impl std::fmt::Display) -> Self {
        Self::new(id, name, false, format!("error: {err}"))
    }

    pub fn line(&self) -> String {
        format!("[{}] criterion {} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Instance counts and sample sizes for one run of the battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scale {
    pub lemma_gaussian: usize,
    pub lemma_mixture: usize,
    pub lemma_samples: usize,
    pub lv_paths: usize,
    pub gaps: usize,
    pub gap_samples: usize,
    pub costa_paths: usize,
    pub recursions: usize,
    pub derivative_instances: usize,
    pub oracle_instances: usize,
    pub bc_sec_gaussian: usize,
    pub bc_sec_mixture: usize,
    pub mixture_samples: usize,
    pub mixture_grid: usize,
    pub grid: usize,
}

impl Scale {
    pub fn full() -> Self {
        Self {
            lemma_gaussian: 100,
            lemma_mixture: 25,
            lemma_samples: 200_000,
            lv_paths: 25,
            gaps: 100,
            gap_samples: 100_000,
            costa_paths: 15,
            recursions: 50,
            derivative_instances: 10,
            oracle_instances: 20,
            bc_sec_gaussian: 10,
            bc_sec_mixture: 5,
            mixture_samples: 50_000,
            mixture_grid: 32,
            grid: 64,
        }
    }

    pub fn quick() -> Self {
        Self {
            lemma_gaussian: 10,
            lemma_mixture: 2,
            lemma_samples: 20_000,
            lv_paths: 4,
            gaps: 8,
            gap_samples: 20_000,
            costa_paths: 3,
            recursions: 6,
            derivative_instances: 2,
            oracle_instances: 3,
            bc_sec_gaussian: 2,
            bc_sec_mixture: 1,
            mixture_samples: 20_000,
            mixture_grid: 16,
            grid: 64,
        }
    }
}

pub const GAUSSIAN_RESIDUAL: f64 = 1e-9;
pub const SIGN_TOL: f64 = 1e-8;
pub const ENDPOINT_TOL: f64 = 1e-8;
pub const FD_TOL: f64 = 1e-6;
pub const ORACLE_TOL: f64 = 1e-5;
pub const RECURSION_TOL: f64 = 1e-9;

fn dim(i: usize) -> usize {
    1 + i % 2
}

fn cfg(samples: usize, seed: u64, tags: &[u64]) -> McConfig {
    McConfig::new(samples, derive_seed(seed, tags)).expect("sample count within range")
}

/// Closed-form residuals at most 1e-9 on Gaussian instances; Monte Carlo
/// residuals within `max(1e-2 · scale, 5σ)` on mixture instances.
pub fn identities(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "identity suite";
    let tol = Tolerances::default();
    let names = extremal_core::info::CHECK_NAMES.to_vec();
    let run = || -> CliResult<Criterion> {
        let gauss = run_battery(&names, Family::Gaussian, scale.lemma_gaussian, seed, 10_000, &tol)?;
        let mix = run_battery(&names, Family::Mixture, scale.lemma_mixture, seed, scale.lemma_samples, &tol)?;
        let worst = gauss.iter().map(|r| r.report.residual).fold(0.0, f64::max);
        let all_closed = gauss.iter().all(|r| r.report.backend == Backend::ClosedForm);
        let gauss_fail = gauss.iter().filter(|r| r.report.residual.is_nan() || r.report.residual > GAUSSIAN_RESIDUAL).count();
        let mix_fail = mix.iter().filter(|r| !r.report.pass).count();
        let pass = all_closed && gauss_fail == 0 && mix_fail == 0;
        Ok(Criterion::new(
            1,
            NAME,
            pass,
            format!(
                "{} closed-form reports (worst residual {worst:.1e}, {gauss_fail} above 1e-9), {} Monte Carlo reports ({mix_fail} failing)",
                gauss.len(),
                mix.len()
            ),
        ))
    };
    run().unwrap_or_else(|e| Criterion::failed(1, NAME, e))
}

fn path_ok(t: &PathTrace) -> bool {
    t.verdict.pass && t.verdict.hypothesis_satisfied
}

/// Solver certificates pass KKT and the induced paths with Gaussian X certify.
pub fn lv_paths(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "lv path certification";
    let opts = SolverOptions::default();
    let results: Vec<Result<(bool, f64, f64, f64), String>> = (0..scale.lv_paths)
        .into_par_iter()
        .map(|i| {
            let pr = lv_problem(dim(i), &mut rng(derive_seed(seed, &[2, i as u64])));
            let cert = solve_lv(&pr, &opts).map_err(|e| e.to_string())?;
            let x = GaussianMixture::centered_gaussian(pr.s.clone()).map_err(|e| e.to_string())?;
            let path = LvPath::from_certificate(x, &cert).map_err(|e| e.to_string())?;
            let t = certify(&path, scale.grid, &cfg(10_000, seed, &[2, i as u64, 1])).map_err(|e| e.to_string())?;
            let v = &t.verdict;
            let end = v.endpoint_residuals[0].max(v.endpoint_residuals[1]);
            let ok = cert.kkt.pass && path_ok(&t) && v.min_dg >= -SIGN_TOL && end <= ENDPOINT_TOL;
            Ok((ok, cert.kkt.max_residual(), v.min_dg, end))
        })
        .collect();
    summarize_paths(2, NAME, &results, "max KKT residual", "min dg")
}

type PathOutcome = Result<(bool, f64, f64, f64), String>;

fn summarize_paths(id: u32, name: &'static str, results: &[PathOutcome], a: &str, b: &str) -> Criterion {
    let mut worst = (0.0f64, f64::INFINITY, 0.0f64);
    let mut failures = 0;
    for r in results {
        match r {
            Ok((ok, kkt, dg, end)) => {
                failures += usize::from(!ok);
                worst = (worst.0.max(*kkt), worst.1.min(*dg), worst.2.max(*end));
            }
            Err(e) => return Criterion::failed(id, name, e),
        }
    }
    Criterion::new(
        id,
        name,
        failures == 0,
        format!("{} instances, {failures} failing; {a} {:.1e}, {b} {:.1e}, worst endpoint residual {:.1e}", results.len(), worst.0, worst.1, worst.2),
    )
}

/// Extremal gap nonnegative (within 5σ) for mixtures with `cov ⪯ S` and zero for `N(0, B*)`.
pub fn extremal_gaps(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "extremal gap";
    let opts = SolverOptions::default();
    let results: Vec<Result<(f64, f64), String>> = (0..scale.gaps)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(derive_seed(seed, &[3, i as u64]));
            let p = dim(i);
            let cert = solve_lv(&lv_problem(p, &mut r), &opts).map_err(|e| e.to_string())?;
            let fill = r.random_range(0.3..1.0);
            let comps = 2 + i % 2;
            let x = scale_to_fit(&mixture(p, comps, 1.0, &mut r), cert.problem.s.as_matrix(), fill).map_err(|e| e.to_string())?;
            let c = cfg(scale.gap_samples, seed, &[3, i as u64, 1]);
            let gap = extremal_gap(&cert, &x, &c).map_err(|e| e.to_string())?;
            let g = GaussianMixture::centered_gaussian(cert.b_star.clone()).map_err(|e| e.to_string())?;
            let zero = extremal_gap(&cert, &g, &c).map_err(|e| e.to_string())?;
            Ok((gap.value / gap.stderr.max(f64::MIN_POSITIVE), zero.value.abs()))
        })
        .collect();
    let mut worst_sigmas = f64::INFINITY;
    let mut worst_zero: f64 = 0.0;
    for r in &results {
        match r {
            Ok((s, z)) => {
                worst_sigmas = worst_sigmas.min(*s);
                worst_zero = worst_zero.max(*z);
            }
            Err(e) => return Criterion::failed(3, NAME, e),
        }
    }
    Criterion::new(
        3,
        NAME,
        worst_sigmas >= -5.0 && worst_zero <= 1e-9,
        format!("{} mixtures, smallest gap {worst_sigmas:.2} standard errors; Gaussian gap at most {worst_zero:.1e}", results.len()),
    )
}

/// Costa certificates and paths for L ∈ {1, 2, 3}, plus the recursion properties.
pub fn costa(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "costa suite";
    let opts = SolverOptions::default();
    let paths: Vec<Result<(bool, f64, f64, f64), String>> = (0..scale.costa_paths)
        .into_par_iter()
        .map(|i| {
            let pr = costa_problem(dim(i), 1 + i % 3, &mut rng(derive_seed(seed, &[4, i as u64])));
            let cert = costa_certificate(&pr, &opts).map_err(|e| e.to_string())?;
            let x = GaussianMixture::centered_gaussian(pr.s.clone()).map_err(|e| e.to_string())?;
            let t = certify(&CostaPath::from_certificate(x, &cert).map_err(|e| e.to_string())?, scale.grid, &cfg(10_000, seed, &[4, i as u64, 1]))
                .map_err(|e| e.to_string())?;
            let v = &t.verdict;
            Ok((cert.kkt.pass && path_ok(&t), cert.kkt.max_residual(), v.min_dg, v.endpoint_residuals[0].max(v.endpoint_residuals[1])))
        })
        .collect();
    let path_part = summarize_paths(4, NAME, &paths, "max KKT residual", "min dg");
    let recursions: Vec<Result<f64, String>> = (0..scale.recursions)
        .into_par_iter()
        .map(|i| {
            let mut r = rng(derive_seed(seed, &[4, 1_000 + i as u64]));
            let pr = costa_problem(dim(i), 2 + i % 2, &mut r);
            let cert = costa_certificate(&pr, &opts).map_err(|e| e.to_string())?;
            let fill = r.random_range(0.3..1.0);
            let x = GaussianMixture::centered_gaussian(pr.s.scaled(fill).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let path = CostaPath::from_certificate(x, &cert).map_err(|e| e.to_string())?;
            let mut worst: f64 = 0.0;
            for (k, g) in [0.25, 0.5, 0.75].into_iter().enumerate() {
                let st = recursion_from_costa(&path, g, &cfg(10_000, seed, &[4, 1_000 + i as u64, k as u64])).map_err(|e| e.to_string())?;
                let rep = verify_recursion(&st, RECURSION_TOL);
                if !rep.pass {
                    return Err(format!("recursion instance {i} at γ={g}: {rep:?}"));
                }
                worst = worst.max(rep.zero_sum_residual).max(-rep.min_leading_eig).max(rep.chain_slack);
            }
            Ok(worst)
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for r in &recursions {
        match r {
            Ok(w) => worst = worst.max(*w),
            Err(e) => failures.push(e.clone()),
        }
    }
    let pass = path_part.pass && failures.is_empty();
    let mut detail = format!("{}; {} recursion instances, {} failing, worst slack {worst:.1e}", path_part.detail, recursions.len(), failures.len());
    if let Some(f) = failures.first() {
        detail.push_str(&format!(" (first: {f})"));
    }
    Criterion::new(4, NAME, pass, detail)
}

/// Closed-form paths of each kind built from solver outputs with Gaussian sources.
pub fn gaussian_path(kind: usize, i: usize, seed: u64) -> CliResult<Box<dyn MonotonePathSync>> {
    let opts = SolverOptions::default();
    let mut r = rng(derive_seed(seed, &[5, kind as u64, i as u64]));
    let p = dim(i);
    Ok(match kind {
        0 => {
            let cert = solve_lv(&lv_problem(p, &mut r), &opts)?;
            Box::new(LvPath::from_certificate(GaussianMixture::centered_gaussian(cert.problem.s.clone())?, &cert)?)
        }
        1 => {
            let cert = costa_certificate(&costa_problem(p, 1 + i % 3, &mut r), &opts)?;
            Box::new(CostaPath::from_certificate(GaussianMixture::centered_gaussian(cert.problem.s.clone())?, &cert)?)
        }
        2 => Box::new(BcPath::from_solution(&solve_bc(&bc_problem(p, &mut r), &opts)?, None)?),
        _ => Box::new(SecPath::from_solution(&solve_sec(&sec_problem(p, &mut r), &opts)?, None)?),
    })
}

pub const PATH_KINDS: [&str; 4] = ["lv", "costa", "bc", "sec"];

/// Analytic derivative against the finite difference at every grid point.
pub fn derivatives(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "derivative agreement";
    let jobs: Vec<(usize, usize)> = (0..4).flat_map(|k| (0..scale.derivative_instances).map(move |i| (k, i))).collect();
    let results: Vec<Result<(bool, f64), String>> = jobs
        .par_iter()
        .map(|&(k, i)| {
            let path = gaussian_path(k, i, seed).map_err(|e| e.to_string())?;
            let t = certify(path.as_ref(), scale.grid, &cfg(10_000, seed, &[5, k as u64, i as u64])).map_err(|e| e.to_string())?;
            let v = &t.verdict;
            Ok((v.backend == Backend::ClosedForm && v.derivative_ok && v.max_derivative_gap <= FD_TOL, v.max_derivative_gap))
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for r in &results {
        match r {
            Ok((ok, gap)) => {
                failures += usize::from(!ok);
                worst = worst.max(*gap);
            }
            Err(e) => return Criterion::failed(5, NAME, e),
        }
    }
    Criterion::new(
        5,
        NAME,
        failures == 0,
        format!("{} paths x {} grid points, {failures} failing, worst gap {worst:.1e}", results.len(), scale.grid),
    )
}

pub type BcOracle = dyn Fn(&BcProblem) -> f64 + Sync;
pub type SecOracle = dyn Fn(&SecProblem) -> f64 + Sync;

/// Scalar solver values against independent references, with KKT at 1e-7.
pub fn solver_oracle(scale: &Scale, seed: u64, bc: &BcOracle, sec: &SecOracle) -> Criterion {
    const NAME: &str = "solver vs oracle";
    let opts = SolverOptions::default();
    let results: Vec<Result<(f64, f64), String>> = (0..2 * scale.oracle_instances)
        .into_par_iter()
        .map(|j| {
            let mut r = rng(derive_seed(seed, &[6, j as u64]));
            if j % 2 == 0 {
                let pr = bc_problem(1, &mut r);
                let sol = solve_bc(&pr, &opts).map_err(|e| e.to_string())?;
                let kkt = if sol.kkt.pass { sol.kkt.max_residual() } else { f64::INFINITY };
                Ok(((sol.value - bc(&pr)).abs(), kkt))
            } else {
                let pr = sec_problem(1, &mut r);
                let sol = solve_sec(&pr, &opts).map_err(|e| e.to_string())?;
                let kkt = if sol.kkt.pass { sol.kkt.max_residual() } else { f64::INFINITY };
                Ok(((sol.value - sec(&pr)).abs(), kkt))
            }
        })
        .collect();
    let mut worst = (0.0f64, 0.0f64);
    for r in &results {
        match r {
            Ok((gap, kkt)) => worst = (worst.0.max(*gap), worst.1.max(*kkt)),
            Err(e) => return Criterion::failed(6, NAME, e),
        }
    }
    Criterion::new(
        6,
        NAME,
        worst.0 <= ORACLE_TOL && worst.1 <= KKT_TOL,
        format!(
            "{} broadcast and {} secure-source problems, worst value gap {:.1e}, worst KKT residual {:.1e}",
            scale.oracle_instances, scale.oracle_instances, worst.0, worst.1
        ),
    )
}

/// Broadcast instances whose dual weight leaves `[0, μ₂]` fall outside the
/// path hypothesis; they are counted and replaced by fresh draws.
pub fn bc_sec_paths(scale: &Scale, seed: u64) -> Criterion {
    const NAME: &str = "bc/sec path certification";
    let opts = SolverOptions::default();
    let run = || -> CliResult<Criterion> {
        let mut bc_sols = Vec::new();
        let mut drawn = 0usize;
        let need = scale.bc_sec_gaussian.max(scale.bc_sec_mixture);
        while bc_sols.len() < need && drawn < 20 * need.max(1) {
            let sol = solve_bc(&bc_problem(dim(drawn), &mut rng(derive_seed(seed, &[7, 0, drawn as u64]))), &opts)?;
            drawn += 1;
            if BcPath::from_solution(&sol, None)?.hypothesis_satisfied() {
                bc_sols.push(sol);
            }
        }
        let sec_sols = (0..need)
            .map(|i| solve_sec(&sec_problem(dim(i), &mut rng(derive_seed(seed, &[7, 1, i as u64]))), &opts))
            .collect::<Result<Vec<_>, _>>()?;
        let mut jobs: Vec<(usize, usize, bool)> = Vec::new();
        for kind in 0..2 {
            jobs.extend((0..scale.bc_sec_gaussian).map(|i| (kind, i, false)));
            jobs.extend((0..scale.bc_sec_mixture).map(|i| (kind, i, true)));
        }
        let results = jobs
            .par_iter()
            .map(|&(kind, i, mixed)| -> CliResult<bool> {
                let mut r = rng(derive_seed(seed, &[7, 2 + kind as u64, i as u64]));
                let path: Box<dyn MonotonePathSync> = match (kind, mixed) {
                    (0, false) => Box::new(BcPath::from_solution(&bc_sols[i], None)?),
                    (0, true) => Box::new(BcPath::from_solution(&bc_sols[i], Some(bc_auxiliaries(&bc_sols[i], 0.9, &mut r)?))?),
                    (_, false) => Box::new(SecPath::from_solution(&sec_sols[i], None)?),
                    (_, true) => Box::new(SecPath::from_solution(&sec_sols[i], Some(sec_auxiliaries(&sec_sols[i], &mut r)?))?),
                };
                let (grid, samples) = if mixed { (scale.mixture_grid, scale.mixture_samples) } else { (scale.grid, 10_000) };
                let t = certify(path.as_ref(), grid, &cfg(samples, seed, &[7, 4 + kind as u64, i as u64, mixed as u64]))?;
                let sign = match t.verdict.direction {
                    extremal_core::path::Direction::Increasing => t.verdict.min_dg >= -SIGN_TOL || mixed,
                    extremal_core::path::Direction::Decreasing => t.verdict.max_dg <= SIGN_TOL || mixed,
                };
                Ok(path_ok(&t) && sign)
            })
            .collect::<CliResult<Vec<bool>>>()?;
        let failures = results.iter().filter(|ok| !**ok).count();
        let enough = bc_sols.len() == need;
        Ok(Criterion::new(
            7,
            NAME,
            failures == 0 && enough,
            format!(
                "{} paths ({} Gaussian and {} mixture per kind), {failures} failing; {} of {drawn} broadcast draws met the hypothesis",
                results.len(),
                scale.bc_sec_gaussian,
                scale.bc_sec_mixture,
                bc_sols.len()
            ),
        ))
    };
    run().unwrap_or_else(|e| Criterion::failed(7, NAME, e))
}
