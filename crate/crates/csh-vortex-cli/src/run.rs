//! Mode dispatch: each run writes its dumps and a `summary.txt` under the output directory.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use csh_vortex::diagnostics::{compute_fluxes, lambda_sweep, SweepStatus};
use csh_vortex::lattice::ScalarField;
use csh_vortex::mountain_pass::mountain_pass_with;
use csh_vortex::periodic::{solve_periodic, verify_solution, PeriodicProblem, VerifyOptions};
use csh_vortex::planar::solve_planar;
use csh_vortex::solution::SolveResult;
use csh_vortex::VortexError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Geometry, Mode, RunConfig};
use crate::output::{num, read_fields_bin, status_word, write_fields_bin, write_fields_csv, Summary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;

/// Amplitude of the seeded initial perturbation.
const SEED_AMPLITUDE: f64 = 0.05;

/// Smooth mean-zero field built from random low Fourier modes.
fn perturbation(grid: csh_vortex::lattice::GridSpec, rng: &mut ChaCha8Rng) -> ScalarField {
    let (l1, l2) = grid.extents();
    let mut modes = Vec::new();
    for kx in -2i32..=2 {
        for ky in 0i32..=2 {
            if ky == 0 && kx <= 0 {
                continue;
            }
            modes.push((kx as f64, ky as f64, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..TAU)));
        }
    }
    let scale = SEED_AMPLITUDE / modes.len() as f64;
    ScalarField::from_fn(grid, |x, y| {
        modes
            .iter()
            .map(|&(kx, ky, a, phase)| a * (TAU * (kx * x / l1 + ky * y / l2) + phase).cos())
            .sum::<f64>()
            * scale
    })
}

fn periodic_problem(config: &RunConfig, seed: Option<u64>) -> Result<PeriodicProblem> {
    let mut problem = config.periodic_problem()?;
    if let Some(seed) = seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = perturbation(problem.grid, &mut rng);
        let w2 = perturbation(problem.grid, &mut rng);
        problem = problem.with_initial_guess(w1, w2);
    }
    Ok(problem)
}

fn describe(s: &mut Summary, prefix: &str, result: &SolveResult) {
    let key = |k: &str| format!("{prefix}{k}");
    s.push(key("status"), status_word(result));
    s.push(key("method"), result.method.name());
    s.push(key("el_residual"), format!("{:e}", result.el_residual));
    s.push(key("tolerance"), format!("{:e}", result.tolerance));
    s.push(key("iterations"), result.iterations);
    s.push(key("energy_functional"), num(result.energy_value));
    if let Some((c1, c2)) = result.means {
        s.push(key("mean_c1"), num(c1));
        s.push(key("mean_c2"), num(c2));
    }
    if let Some((m1, m2)) = result.margins {
        s.push(key("margin_1"), num(m1));
        s.push(key("margin_2"), num(m2));
    }
    s.push(key("max_u1"), num(result.u1.max()));
    s.push(key("max_u2"), num(result.u2.max()));
    if let Some(note) = &result.note {
        s.push(key("note"), note);
    }
    match compute_fluxes(result) {
        Ok(f) => {
            let (e1, e2, e3) = f.relative_errors(&result.params);
            s.push(key("flux_u1"), num(f.flux_u1));
            s.push(key("expected_flux_u1"), num(f.expected_flux_u1));
            s.push(key("flux_sun"), num(f.flux_sun));
            s.push(key("expected_flux_sun"), num(f.expected_flux_sun));
            s.push(key("charge_u1"), num(f.charge_u1));
            s.push(key("charge_sun"), num(f.charge_sun));
            s.push(key("energy"), num(f.energy));
            s.push(key("expected_energy"), num(f.expected_energy));
            s.push(key("flux_relative_errors"), format!("{e1:e} {e2:e} {e3:e}"));
            s.push(key("flux_trusted"), f.trusted);
        }
        Err(e) => s.push(key("flux_error"), e),
    }
    let report = verify_solution(result, &VerifyOptions::default());
    for c in &report.checks {
        let verdict = if c.passed { "pass" } else { "fail" };
        let kind = if c.required { "" } else { " (informational)" };
        s.push(key(&format!("check.{}", c.name)), format!("{:e} vs {:e} {verdict}{kind}", c.value, c.threshold));
    }
    s.push(key("verify"), if report.passed() { "pass" } else { "fail" });
}

fn header(s: &mut Summary, config: &RunConfig, mode: &str) {
    s.push("mode", mode);
    s.push("geometry", match config.geometry {
        Geometry::Periodic { .. } => "periodic",
        Geometry::Planar { .. } => "planar",
    });
    s.push("grid", format!("{}x{}", config.m1, config.m2));
    s.push("n", config.n);
    s.push("kappa", num(config.kappa));
    s.push("lambda", num(config.lambda_value()));
    s.push("n1", config.vortices.n1());
    s.push("n2", config.vortices.n2());
    if let Some(bound) = config.bradlow_bound() {
        s.push("bradlow_bound", num(bound));
        s.push("lambda_over_bound", num(config.lambda_value() / bound));
    }
}

/// Records a solver error; the returned message goes to stderr.
fn record_error(s: &mut Summary, err: &VortexError) -> String {
    match err {
        VortexError::BelowBradlow { lambda, bound } => {
            s.push("status", "infeasible");
            s.push("reason", err);
            format!("λ = {lambda} is at or below the Bradlow bound {bound}; no solution exists")
        }
        _ => {
            s.push("status", "failed");
            s.push("reason", err);
            format!("solver failed: {err}")
        }
    }
}

fn write_pair(out: &Path, stem: &str, config: &RunConfig, result: &SolveResult) -> Result<()> {
    write_fields_csv(&out.join(format!("{stem}.csv")), config, result)?;
    write_fields_bin(&out.join(format!("{stem}.bin")), config, result)
}

fn first_solution(config: &RunConfig, seed: Option<u64>) -> Result<std::result::Result<SolveResult, VortexError>> {
    Ok(match config.geometry {
        Geometry::Planar { .. } => solve_planar(&config.planar_problem()?),
        Geometry::Periodic { .. } => solve_periodic(&periodic_problem(config, seed)?),
    })
}

fn finish(s: &Summary, out: &Path, status_line: &str) -> Result<()> {
    s.write(&out.join("summary.txt"))?;
    println!("{status_line}");
    Ok(())
}

/// Runs `config.mode`, writing into `out`. Returns the process exit code.
pub fn run(config: &RunConfig, out: &Path, seed: Option<u64>) -> Result<i32> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    match config.mode {
        Mode::Solve => run_solve(config, out, seed),
        Mode::Second => run_second(config, out, seed),
        Mode::Sweep => run_sweep(config, out),
        Mode::Verify => anyhow::bail!("verify mode reads a dump; use run_verify"),
    }
}

fn run_solve(config: &RunConfig, out: &Path, seed: Option<u64>) -> Result<i32> {
    let mut s = Summary::default();
    header(&mut s, config, "solve");
    match first_solution(config, seed)? {
        Ok(result) => {
            describe(&mut s, "", &result);
            write_pair(out, "fields", config, &result)?;
            finish(&s, out, &format!("status = {}", status_word(&result)))?;
            Ok(if result.converged { EXIT_OK } else { EXIT_FAILURE })
        }
        Err(e) => {
            let msg = record_error(&mut s, &e);
            s.write(&out.join("summary.txt"))?;
            eprintln!("error: {msg}");
            Ok(EXIT_FAILURE)
        }
    }
}

fn run_second(config: &RunConfig, out: &Path, seed: Option<u64>) -> Result<i32> {
    let mut s = Summary::default();
    header(&mut s, config, "second");
    let first = match first_solution(config, seed)? {
        Ok(r) => r,
        Err(e) => {
            let msg = record_error(&mut s, &e);
            s.write(&out.join("summary.txt"))?;
            eprintln!("error: {msg}");
            return Ok(EXIT_FAILURE);
        }
    };
    describe(&mut s, "first.", &first);
    write_pair(out, "first", config, &first)?;
    if !first.converged {
        s.push("status", "unconverged");
        s.push("reason", "the local minimizer did not converge");
        s.write(&out.join("summary.txt"))?;
        eprintln!("error: the local minimizer did not converge (residual {:e})", first.el_residual);
        return Ok(EXIT_FAILURE);
    }
    let report = match mountain_pass_with(&first, &config.pass) {
        Ok(r) => r,
        Err(e) => {
            s.push("status", "failed");
            s.push("reason", &e);
            s.write(&out.join("summary.txt"))?;
            eprintln!("error: no second solution: {e}");
            return Ok(EXIT_FAILURE);
        }
    };
    describe(&mut s, "second.", &report.result);
    write_pair(out, "second", config, &report.result)?;
    s.push("xi0", num(report.xi0));
    s.push("distance", num(report.distance));
    s.push("energy_gap", num(report.energy_gap));
    s.push("path_max", num(report.path.max_energy()));
    s.push("path_sweeps", report.path_max_history.len());
    let monotone = report.path_max_history.windows(2).all(|w| w[1] <= w[0]);
    s.push("path_max_monotone", monotone);
    if let (Ok(a), Ok(b)) = (compute_fluxes(&first), compute_fluxes(&report.result)) {
        let diff = (a.flux_u1 - b.flux_u1).abs().max((a.flux_sun - b.flux_sun).abs());
        s.push("flux_difference", format!("{diff:e}"));
    }
    let mut path = csv::Writer::from_path(out.join("path.csv"))?;
    path.write_record(["node", "energy"])?;
    for (i, e) in report.path.energies.iter().enumerate() {
        path.write_record([i.to_string(), num(*e)])?;
    }
    path.flush()?;
    let ok = report.result.converged;
    s.push("status", status_word(&report.result));
    finish(&s, out, &format!("status = {}", status_word(&report.result)))?;
    Ok(if ok { EXIT_OK } else { EXIT_FAILURE })
}

fn run_sweep(config: &RunConfig, out: &Path) -> Result<i32> {
    let mut s = Summary::default();
    header(&mut s, config, "sweep");
    let mut lambdas: Vec<f64> = config.sweep.as_deref().unwrap_or_default().iter().map(|&l| config.resolve(l)).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let report = match lambda_sweep(&config.periodic_problem()?, &lambdas) {
        Ok(r) => r,
        Err(e) => {
            let msg = record_error(&mut s, &e);
            s.write(&out.join("summary.txt"))?;
            eprintln!("error: {msg}");
            return Ok(EXIT_FAILURE);
        }
    };
    let mut w = csv::Writer::from_path(out.join("sweep.csv"))?;
    w.write_record([
        "lambda",
        "ratio_to_bound",
        "status",
        "method",
        "el_residual",
        "iterations",
        "energy_functional",
        "deviation_1",
        "deviation_2",
        "note",
    ])?;
    for e in &report.entries {
        let status = match &e.status {
            SweepStatus::Converged => "converged".to_string(),
            SweepStatus::NotConverged => "unconverged".to_string(),
            SweepStatus::Infeasible => "infeasible".to_string(),
            SweepStatus::Failed(m) => format!("failed: {m}"),
        };
        w.write_record([
            num(e.lambda),
            num(e.ratio_to_bound),
            status,
            e.method.map(|m| m.name()).unwrap_or("").to_string(),
            format!("{:e}", e.el_residual),
            e.iterations.to_string(),
            num(e.energy_value),
            num(e.deviation.0),
            num(e.deviation.1),
            e.note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    let converged = report.entries.iter().filter(|e| e.status == SweepStatus::Converged).count();
    s.push("status", "completed");
    s.push("entries", report.entries.len());
    s.push("converged_entries", converged);
    s.push("monotone", report.monotone);
    s.push("lambda0", report.lambda0.map(|l| l.to_string()).unwrap_or_else(|| "none".into()));
    finish(&s, out, &format!("sweep: {converged}/{} converged, monotone = {}", report.entries.len(), report.monotone))?;
    Ok(EXIT_OK)
}

/// Re-checks a binary dump. `out`, when given, receives `summary.txt`.
pub fn run_verify(input: &Path, out: Option<&Path>) -> Result<i32> {
    let path = if input.is_dir() { input.join("fields.bin") } else { input.to_path_buf() };
    let dump = read_fields_bin(&path)?;
    let result = dump.to_result()?;
    let mut s = Summary::default();
    header(&mut s, &dump.config, "verify");
    s.push("input", path.display());
    s.push("stored_status", &dump.status);
    let stored_match = result.u1.values() == dump.u1.as_slice() && result.u2.values() == dump.u2.as_slice();
    s.push("stored_fields_consistent", stored_match);
    describe(&mut s, "", &result);
    let passed = stored_match && s.get("verify") == Some("pass");
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        s.write(&out.join("summary.txt"))?;
    }
    let mut stdout = std::io::stdout().lock();
    for key in ["stored_fields_consistent", "check.max_u", "check.el_residual", "check.identity_1", "check.identity_2", "verify"] {
        if let Some(v) = s.get(key) {
            writeln!(stdout, "{key} = {v}")?;
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_FAILURE })
}
