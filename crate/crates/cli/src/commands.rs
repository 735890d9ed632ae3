use std::path::{Path, PathBuf};
use std::time::Instant;

use extremal_core::info::{GaussianMixture, Tolerances};
use extremal_core::mc::McConfig;
use extremal_core::path::{certify_with, BcPath, CostaPath, LvPath, MonotonePathSync, PathTolerances, SecPath};
use extremal_core::solvers::{
    costa_certificate, region_bc, region_sec, solve_bc, solve_lv, solve_sec, validate_bc_family, validate_sec_family,
    SolverOptions, KKT_TOL,
};
use serde::Serialize;

use crate::battery::{resolve_names, rows_to_csv, run_battery, summarize, Family, LemmaRow, LemmaSummary};
use crate::cli::{Cli, Command, Common, LemmasArgs, SolveKind};
use crate::criteria::{self, Criterion, Scale};
use crate::error::{CliError, CliResult};
use crate::files::{self, Body};
use crate::oracle;
use crate::report::{Provenance, RunManifest, Writer};

pub struct Outcome {
    pub pass: bool,
    pub summary: String,
}

/// `(closed, mc)` tolerances in effect for a command.
pub fn tolerances(cmd: &Command, common: &Common) -> (f64, f64) {
    let closed = match cmd {
        Command::Lemmas(_) | Command::Selftest => Tolerances::default().closed,
        Command::Path { .. } => PathTolerances::default().sign_closed,
        Command::Solve { .. } | Command::Region { .. } => KKT_TOL,
    };
    (common.tol_closed.unwrap_or(closed), common.tol_mc.unwrap_or(Tolerances::default().mc_rel))
}

fn provenance(cli: &Cli) -> Provenance {
    let (tol_closed, tol_mc) = tolerances(&cli.command, &cli.common);
    Provenance {
        tool: format!("extremal-lab {}", env!("CARGO_PKG_VERSION")),
        command: cli.command.name().to_string(),
        input: cli.command.input().map(|p| p.display().to_string()),
        seed: cli.common.seed,
        samples: cli.common.samples,
        grid: cli.common.grid,
        tol_closed,
        tol_mc,
    }
}

fn check_settings(cli: &Cli) -> CliResult<()> {
    let (closed, mc) = tolerances(&cli.command, &cli.common);
    for (name, v) in [("--tol-closed", closed), ("--tol-mc", mc)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(CliError::Usage(format!("{name} must be positive and finite, got {v}")));
        }
    }
    McConfig::new(cli.common.samples, cli.common.seed)?;
    if cli.common.grid < extremal_core::path::MIN_GRID {
        return Err(CliError::Usage(format!("--grid must be at least {}", extremal_core::path::MIN_GRID)));
    }
    Ok(())
}

/// Runs the command, writing its outputs through `writer`.
pub fn run(cli: &Cli, writer: &mut Writer) -> CliResult<Outcome> {
    check_settings(cli)?;
    let prov = provenance(cli);
    match &cli.command {
        Command::Lemmas(args) => lemmas(args, &cli.common, &prov, writer),
        Command::Path { file, allow_control } => path(file, *allow_control, &cli.common, &prov, writer),
        Command::Solve { file, kind } => solve(file, *kind, &prov, writer),
        Command::Region { file, cold_start } => region(file, *cold_start, &prov, writer),
        Command::Selftest => selftest(&cli.common, &prov, writer),
    }
}

/// Runs the command and writes the manifest; returns the exit code.
pub fn execute(cli: &Cli) -> i32 {
    let start = Instant::now();
    let result = Writer::new(&cli.common.out).and_then(|mut w| run(cli, &mut w).map(|o| (o, w.written)));
    let (tol_closed, tol_mc) = tolerances(&cli.command, &cli.common);
    let (code, pass, summary, outputs) = match result {
        Ok((o, written)) => (i32::from(!o.pass), o.pass, o.summary, written),
        Err(e) => (e.exit_code(), false, format!("error: {e}"), Vec::new()),
    };
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        input: cli.command.input().map(|p| p.display().to_string()),
        seed: cli.common.seed,
        samples: cli.common.samples,
        grid: cli.common.grid,
        tol_closed,
        tol_mc,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        pass,
        exit_code: code,
        summary: summary.clone(),
    };
    if code == 2 {
        eprintln!("{summary}");
    } else {
        println!("{} {summary}", if pass { "PASS" } else { "FAIL" });
    }
    match manifest.write(&cli.common.out) {
        Ok(_) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

#[derive(Serialize)]
struct LemmaOutput<'a> {
    summary: Vec<LemmaSummary>,
    failures: Vec<&'a LemmaRow>,
}

fn lemmas(args: &LemmasArgs, common: &Common, prov: &Provenance, w: &mut Writer) -> CliResult<Outcome> {
    let names = resolve_names(&args.only)?;
    let tol = Tolerances { closed: prov.tol_closed, mc_rel: prov.tol_mc, ..Tolerances::default() };
    let mut rows = Vec::new();
    if !args.mixture_only {
        rows.extend(run_battery(&names, Family::Gaussian, args.instances, common.seed, common.samples, &tol)?);
    }
    if !args.gaussian_only {
        rows.extend(run_battery(&names, Family::Mixture, args.mixture_instances, common.seed, common.samples, &tol)?);
    }
    w.csv("lemmas.csv", prov, &rows_to_csv(&rows))?;
    let failures: Vec<&LemmaRow> = rows.iter().filter(|r| !r.report.pass).collect();
    let n_fail = failures.len();
    w.json("lemmas.json", prov, &LemmaOutput { summary: summarize(&rows), failures })?;
    Ok(Outcome { pass: n_fail == 0, summary: format!("{} reports over {} checkers, {n_fail} failing", rows.len(), names.len()) })
}

fn source_or_s(x: &Option<GaussianMixture>, s: &extremal_core::linalg::PsdMatrix) -> CliResult<GaussianMixture> {
    Ok(match x {
        Some(x) => x.clone(),
        None => GaussianMixture::centered_gaussian(s.clone())?,
    })
}

#[derive(Serialize)]
struct PathOutput<'a> {
    kind: &'a str,
    about: &'a str,
    allow_control: bool,
    exit_pass: bool,
    verdict: &'a extremal_core::path::Verdict,
}

fn build_path(body: &Body, opts: &SolverOptions) -> CliResult<Box<dyn MonotonePathSync>> {
    Ok(match body {
        Body::Lv { problem, x } => {
            let cert = solve_lv(problem, opts)?;
            Box::new(LvPath::from_certificate(source_or_s(x, &problem.s)?, &cert)?)
        }
        Body::Costa { problem, x } => {
            let cert = costa_certificate(problem, opts)?;
            Box::new(CostaPath::from_certificate(source_or_s(x, &problem.s)?, &cert)?)
        }
        Body::Bc { problem, aux } => Box::new(BcPath::from_solution(&solve_bc(problem, opts)?, aux.clone())?),
        Body::Sec { problem, aux } => Box::new(SecPath::from_solution(&solve_sec(problem, opts)?, aux.clone())?),
        Body::LvPath { path } => {
            path.validate()?;
            Box::new(path.clone())
        }
        Body::CostaPath { path } => {
            path.validate()?;
            Box::new(path.clone())
        }
        Body::BcPath { path } => {
            path.validate()?;
            Box::new(path.clone())
        }
        Body::SecPath { path } => {
            path.validate()?;
            Box::new(path.clone())
        }
        Body::BcRegion { .. } | Body::SecRegion { .. } => {
            return Err(CliError::Usage(format!("`path` needs a problem or path file, got kind `{}`", body.kind())))
        }
    })
}

fn path(file: &Path, allow_control: bool, common: &Common, prov: &Provenance, w: &mut Writer) -> CliResult<Outcome> {
    let pf = files::load(file)?;
    let path = build_path(&pf.body, &SolverOptions::default())?;
    let tol = PathTolerances { sign_closed: prov.tol_closed, endpoint_closed: prov.tol_closed, mc_rel: prov.tol_mc, ..PathTolerances::default() };
    let trace = certify_with(path.as_ref(), common.grid, &McConfig::new(common.samples, common.seed)?, &tol)?;
    let v = &trace.verdict;
    let pass = v.pass || (allow_control && !v.hypothesis_satisfied);
    w.csv("path_trace.csv", prov, &trace.to_csv())?;
    w.json("path_verdict.json", prov, &PathOutput { kind: pf.body.kind(), about: &pf.about, allow_control, exit_pass: pass, verdict: v })?;
    Ok(Outcome {
        pass,
        summary: format!(
            "{} path: verdict {}, hypothesis {}, min dg {:.3e}, max dg {:.3e}, derivative gap {:.1e}",
            v.path,
            if v.pass { "PASS" } else { "FAIL" },
            if v.hypothesis_satisfied { "satisfied" } else { "not satisfied" },
            v.min_dg,
            v.max_dg,
            v.max_derivative_gap
        ),
    })
}

fn solve(file: &Path, kind: Option<SolveKind>, prov: &Provenance, w: &mut Writer) -> CliResult<Outcome> {
    let pf = files::load(file)?;
    if let Some(k) = kind {
        if k.as_str() != pf.body.kind() {
            return Err(CliError::Usage(format!("--kind {} does not match file kind `{}`", k.as_str(), pf.body.kind())));
        }
    }
    let opts = SolverOptions { kkt_tol: prov.tol_closed, ..SolverOptions::default() };
    let (kkt, value) = match &pf.body {
        Body::Lv { problem, .. } => {
            let s = solve_lv(problem, &opts)?;
            w.json("solution.json", prov, &s)?;
            (s.kkt, s.value)
        }
        Body::Costa { problem, .. } => {
            let s = costa_certificate(problem, &opts)?;
            w.json("solution.json", prov, &s)?;
            (s.kkt, s.value)
        }
        Body::Bc { problem, .. } => {
            let s = solve_bc(problem, &opts)?;
            w.json("solution.json", prov, &s)?;
            (s.kkt, s.value)
        }
        Body::Sec { problem, .. } => {
            let s = solve_sec(problem, &opts)?;
            w.json("solution.json", prov, &s)?;
            (s.kkt, s.value)
        }
        other => return Err(CliError::Usage(format!("`solve` needs an lv, bc, sec or costa problem, got kind `{}`", other.kind()))),
    };
    Ok(Outcome {
        pass: kkt.pass,
        summary: format!("{} solved: value {:.10}, max KKT residual {:.1e}", pf.body.kind(), value, kkt.max_residual()),
    })
}

fn region(file: &Path, cold_start: bool, prov: &Provenance, w: &mut Writer) -> CliResult<Outcome> {
    let pf = files::load(file)?;
    let opts = SolverOptions { kkt_tol: prov.tol_closed, ..SolverOptions::default() };
    let (trace, csv) = match &pf.body {
        Body::BcRegion { family } => {
            validate_bc_family(family)?;
            let t = region_bc(family, &opts, cold_start);
            let csv = t.to_csv(&["mu1", "mu2"], &["r0", "r1", "r2"]);
            (t, csv)
        }
        Body::SecRegion { family } => {
            validate_sec_family(family)?;
            let t = region_sec(family, &opts, cold_start);
            let csv = t.to_csv(&["mu"], &["rate", "equivocation"]);
            (t, csv)
        }
        other => return Err(CliError::Usage(format!("`region` needs a bc_region or sec_region file, got kind `{}`", other.kind()))),
    };
    w.csv("region.csv", prov, &csv)?;
    w.json("region.json", prov, &trace)?;
    let bad = trace.points.iter().filter(|p| !p.ok()).count();
    Ok(Outcome {
        pass: bad == 0,
        summary: format!("{} points, {bad} not converged, monotone {}", trace.points.len(), trace.monotone),
    })
}

/// Runs a small set of commands twice and compares every output byte for byte.
pub fn determinism(base: &Path, seed: u64) -> Criterion {
    const NAME: &str = "determinism";
    let run = || -> CliResult<Criterion> {
        let inputs = base.join("inputs");
        std::fs::create_dir_all(&inputs).map_err(|source| CliError::Io { path: inputs.clone(), source })?;
        let lv = inputs.join("lv.json");
        let problem = extremal_core::random::lv_problem(2, &mut extremal_core::random::rng(seed));
        let text = serde_json::to_string_pretty(&files::ProblemFile { about: "random instance".into(), body: Body::Lv { problem, x: None } })
            .expect("problem serializes");
        std::fs::write(&lv, text).map_err(|source| CliError::Io { path: lv.clone(), source })?;
        let commands = [
            Command::Lemmas(LemmasArgs {
                only: vec!["cramer_rao".into(), "complementary".into()],
                all: false,
                gaussian_only: false,
                mixture_only: false,
                instances: 3,
                mixture_instances: 1,
            }),
            Command::Solve { file: lv.clone(), kind: None },
            Command::Path { file: lv.clone(), allow_control: false },
        ];
        let mut compared = 0;
        for (k, cmd) in commands.into_iter().enumerate() {
            let mut outputs: Vec<Vec<(PathBuf, Vec<u8>)>> = Vec::new();
            for rep in ["a", "b"] {
                let out = base.join(format!("run{k}_{rep}"));
                let cli = Cli {
                    common: Common { seed, samples: 10_000, grid: 16, tol_closed: None, tol_mc: None, out: out.clone() },
                    command: cmd.clone(),
                };
                let mut w = Writer::new(&out)?;
                run(&cli, &mut w)?;
                let mut files = Vec::new();
                for p in &w.written {
                    let bytes = std::fs::read(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
                    files.push((PathBuf::from(p.file_name().expect("file name")), bytes));
                }
                outputs.push(files);
            }
            if outputs[0] != outputs[1] {
                return Ok(Criterion { id: 8, name: NAME, pass: false, detail: format!("outputs of `{}` differ between runs", cmd.name()) });
            }
            compared += outputs[0].len();
        }
        Ok(Criterion { id: 8, name: NAME, pass: true, detail: format!("{compared} output files identical across repeated runs") })
    };
    run().unwrap_or_else(|e| Criterion { id: 8, name: NAME, pass: false, detail: format!("error: {e}") })
}

fn selftest(common: &Common, prov: &Provenance, w: &mut Writer) -> CliResult<Outcome> {
    let scale = Scale::quick();
    let seed = common.seed;
    let checks: Vec<Box<dyn Fn() -> Criterion>> = vec![
        Box::new(|| criteria::identities(&scale, seed)),
        Box::new(|| criteria::lv_paths(&scale, seed)),
        Box::new(|| criteria::extremal_gaps(&scale, seed)),
        Box::new(|| criteria::costa(&scale, seed)),
        Box::new(|| criteria::derivatives(&scale, seed)),
        Box::new(|| criteria::solver_oracle(&scale, seed, &oracle::bc_value, &oracle::sec_value)),
        Box::new(|| criteria::bc_sec_paths(&scale, seed)),
        Box::new(|| determinism(&w.dir().join("determinism"), seed)),
    ];
    let mut results = Vec::new();
    for check in checks {
        let c = check();
        println!("{}", c.line());
        results.push(c);
    }
    w.json("selftest.json", prov, &results)?;
    let failed = results.iter().filter(|c| !c.pass).count();
    Ok(Outcome { pass: failed == 0, summary: format!("{} criteria, {failed} failing", results.len()) })
}
