//! Seeded batteries for the identity and inequality checkers.

use extremal_core::info::{
    check_complementary, check_complementary_two_noise, check_cramer_rao, check_de_bruijn, check_dpi_fisher, check_fii,
    check_mmse_monotone, Backend, CheckReport, ConditionalMixture, GaussianMixture, LabeledConditional, Tolerances,
    CHECK_NAMES,
};
use extremal_core::linalg::SymMatrix;
use extremal_core::mc::{derive_seed, McConfig};
use extremal_core::random::{increasing_chain, mixture, orthogonal, pd_matrix, rng};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Mixture,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Mixture => "mixture",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaRow {
    pub check: String,
    pub family: Family,
    pub instance: usize,
    pub dim: usize,
    pub report: CheckReport,
}

/// Validates `--only` names; an empty filter selects every checker.
pub fn resolve_names(only: &[String]) -> CliResult<Vec<&'static str>> {
    if only.is_empty() {
        return Ok(CHECK_NAMES.to_vec());
    }
    let mut out = Vec::new();
    for name in only.iter().flat_map(|s| s.split(',')).map(str::trim).filter(|s| !s.is_empty()) {
        let known = CHECK_NAMES.iter().find(|k| **k == name).ok_or_else(|| CliError::UnknownLemma(name.to_string()))?;
        if !out.contains(known) {
            out.push(*known);
        }
    }
    Ok(out)
}

/// Mixture instances of the MMSE comparison are skipped: the checker is
/// stated for Gaussian X only.
pub fn applies(name: &str, family: Family) -> bool {
    !(name == "mmse_monotone" && family == Family::Mixture)
}

fn direction(p: usize, r: &mut ChaCha8Rng) -> SymMatrix {
    let q = orthogonal(p, r);
    let d: Vec<f64> = (0..p).map(|_| r.random_range(-1.0..1.0)).collect();
    let d = SymMatrix::from_diagonal(&d).expect("finite diagonal");
    SymMatrix::from_matrix(&q * d.as_matrix() * q.transpose()).expect("symmetric by construction")
}

fn source(family: Family, p: usize, r: &mut ChaCha8Rng) -> GaussianMixture {
    match family {
        Family::Gaussian => GaussianMixture::centered_gaussian(pd_matrix(p, 0.3, 2.0, r)).expect("PD covariance"),
        Family::Mixture => mixture(p, 2, 1.0, r),
    }
}

/// Chain `U → V → X` over four values of U and two of V. Gaussian instances
/// use one Gaussian per value of V, so every conditional law is Gaussian.
fn chain(family: Family, p: usize, r: &mut ChaCha8Rng) -> ConditionalMixture {
    let per_v = [source(family, p, r), source(family, p, r)];
    let labels = (0..4u32)
        .map(|u| LabeledConditional { u, v: u / 2, prob: r.random_range(0.1..1.0), mixture: per_v[(u / 2) as usize].clone() })
        .collect::<Vec<_>>();
    let total: f64 = labels.iter().map(|l| l.prob).sum();
    let labels = labels.into_iter().map(|l| LabeledConditional { prob: l.prob / total, ..l }).collect();
    ConditionalMixture::new(labels).expect("valid chain")
}

pub fn dim_for(family: Family, instance: usize) -> usize {
    match family {
        Family::Gaussian => 1 + instance % 4,
        Family::Mixture => 1 + instance % 2,
    }
}

/// Runs one seeded instance of one checker.
pub fn run_instance(
    name: &str,
    family: Family,
    instance: usize,
    seed: u64,
    samples: usize,
    tol: &Tolerances,
) -> CliResult<Vec<CheckReport>> {
    let idx = CHECK_NAMES.iter().position(|k| *k == name).ok_or_else(|| CliError::UnknownLemma(name.to_string()))?;
    let tags = [idx as u64, family as u64, instance as u64];
    let mut r = rng(derive_seed(seed, &tags));
    let cfg = McConfig::new(samples, derive_seed(seed, &[tags[0], tags[1], tags[2], 1]))?;
    let p = dim_for(family, instance);
    let reports = match name {
        "de_bruijn" => {
            let x = source(family, p, &mut r);
            let noise = pd_matrix(p, 0.3, 1.5, &mut r);
            vec![check_de_bruijn(&x, &noise, &direction(p, &mut r), &cfg, tol)?]
        }
        "fii" => {
            let (x, y) = (source(family, p, &mut r), source(family, p, &mut r));
            let (a, b) = (direction(p, &mut r), direction(p, &mut r));
            vec![check_fii(&a, &b, &x, &y, &cfg, tol)?]
        }
        "mmse_monotone" => {
            let k = pd_matrix(p, 0.3, 2.0, &mut r);
            let noise = increasing_chain(p, 2, &mut r);
            vec![check_mmse_monotone(&k, &noise[0], &noise[1], tol)?]
        }
        "cramer_rao" => vec![check_cramer_rao(&source(family, p, &mut r), &cfg, tol)?],
        "dpi_fisher" => vec![check_dpi_fisher(&chain(family, p, &mut r), &cfg, tol)?],
        "complementary" => {
            let x = source(family, p, &mut r);
            vec![check_complementary(&x, &pd_matrix(p, 0.3, 1.5, &mut r), &cfg, tol)?]
        }
        "complementary_two_noise" => {
            let x = source(family, p, &mut r);
            let noise = increasing_chain(p, 2, &mut r);
            check_complementary_two_noise(&x, &noise[0], &noise[1], &cfg, tol)?
        }
        other => return Err(CliError::UnknownLemma(other.to_string())),
    };
    Ok(reports)
}

/// Every selected checker over `count` instances of one family, in a fixed order.
pub fn run_battery(
    names: &[&str],
    family: Family,
    count: usize,
    seed: u64,
    samples: usize,
    tol: &Tolerances,
) -> CliResult<Vec<LemmaRow>> {
    let jobs: Vec<(&str, usize)> =
        names.iter().filter(|n| applies(n, family)).flat_map(|n| (0..count).map(move |i| (*n, i))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(name, i)| {
            let reports = run_instance(name, family, i, seed, samples, tol)?;
            Ok(reports
                .into_iter()
                .map(|report| LemmaRow { check: name.to_string(), family, instance: i, dim: dim_for(family, i), report })
                .collect::<Vec<_>>())
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn rows_to_csv(rows: &[LemmaRow]) -> String {
    let mut out = String::from("check,identity,family,instance,dim,backend,residual,tolerance,stderr,pass\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:?},{:?},{},{}\n",
            r.check,
            r.report.lemma,
            r.family.as_str(),
            r.instance,
            r.dim,
            r.report.backend.as_str(),
            r.report.residual,
            r.report.tolerance,
            r.report.stderr.map_or("".into(), |s| format!("{s:?}")),
            r.report.pass
        ));
    }
    out
}

/// Per-identity summary: instance count, failures and the worst residual-to-tolerance ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaSummary {
    pub identity: String,
    pub family: Family,
    pub instances: usize,
    pub failures: usize,
    pub worst_ratio: f64,
    pub closed_form: usize,
}

pub fn summarize(rows: &[LemmaRow]) -> Vec<LemmaSummary> {
    let mut out: Vec<LemmaSummary> = Vec::new();
    for r in rows {
        let pos = out.iter().position(|s| s.identity == r.report.lemma && s.family == r.family);
        let s = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(LemmaSummary {
                    identity: r.report.lemma.clone(),
                    family: r.family,
                    instances: 0,
                    failures: 0,
                    worst_ratio: 0.0,
                    closed_form: 0,
                });
                out.last_mut().unwrap()
            }
        };
        s.instances += 1;
        s.failures += usize::from(!r.report.pass);
        s.closed_form += usize::from(r.report.backend == Backend::ClosedForm);
        let ratio = if r.report.tolerance > 0.0 { r.report.residual / r.report.tolerance } else { f64::INFINITY };
        s.worst_ratio = s.worst_ratio.max(if r.report.residual == 0.0 { 0.0 } else { ratio });
    }
    out
}
