use std::io::Write;
use std::path::Path;

use fracstep_core::index::{plasma_index_certificate, time_index, DerivativeArraySpec};
use fracstep_core::splitting::integrate;
use fracstep_core::stability::{component_range, refinement_study, stability_report, RefinementProblem};
use fracstep_core::TimeGrid;
use serde_json::json;

use crate::config::{Problem, Step};
use crate::CliError;

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Config(format!("cannot write to stdout: {e}")))
        }
    }
}

/// Writes the trajectory CSV (default `trajectory.csv`) and prints a summary.
pub fn run(p: &Problem, out: Option<&Path>) -> Result<(), CliError> {
    let grid = p.grid()?;
    let tgrid = TimeGrid::new(p.step.tau(&grid), p.t_end)?;
    let traj = integrate(&p.system, &p.iv, &p.bv, &p.f, &grid, &tgrid, &p.scheme, p.solver)?;
    let path = out.unwrap_or(Path::new("trajectory.csv"));
    emit(&traj.to_csv(), Some(path))?;
    let components: Vec<_> = (0..p.system.n())
        .map(|i| {
            let (lo, hi) = component_range(&traj, i);
            json!({ "component": i + 1, "min": lo, "max": hi })
        })
        .collect();
    let summary = json!({
        "model": p.name,
        "solver": p.solver,
        "M": p.m,
        "tau": tgrid.tau(),
        "steps": tgrid.steps(),
        "t_end": traj.time(tgrid.steps()),
        "csv": path.display().to_string(),
        "final": components,
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serializes")), None)
}

pub fn refine(p: &Problem, levels: &[usize], out: Option<&Path>) -> Result<(), CliError> {
    let Step::Ratio(k0) = p.step else {
        return Err(CliError::Config("refine needs K0 (tau = K0 h per level), not a fixed tau".into()));
    };
    let n = p.system.n();
    let problem = RefinementProblem {
        system: p.system.clone(),
        iv: p.iv.clone(),
        bv: p.bv.clone(),
        f: p.f.clone(),
        k0,
        t_end: p.t_end,
        scheme: p.scheme.clone(),
        solver: p.solver,
        tracked: (0..n.min(2)).collect(),
        cfl_component: Some(1.min(n - 1)),
    };
    let study = refinement_study(&problem, levels)?;
    emit(&study.to_csv(), out)?;
    match study.failure {
        Some(msg) => Err(CliError::Core(fracstep_core::Error::Numerical(msg))),
        None => Ok(()),
    }
}

pub fn index(p: &Problem, out: Option<&Path>) -> Result<(), CliError> {
    let grid = p.grid()?;
    let cert = match &p.plasma {
        Some(model) => plasma_index_certificate(model, &grid)?,
        None => {
            let iv = &p.iv;
            let profile = |x: f64, o: &mut [f64]| {
                for (i, v) in o.iter_mut().enumerate() {
                    *v = iv.eval(i, x);
                }
            };
            time_index(&p.system, &profile, &grid, &DerivativeArraySpec::algebraic_rows(&p.system), &p.bv)?
        }
    };
    emit(&format!("{}\n", cert.to_json()), out)
}

pub fn stability(p: &Problem, out: Option<&Path>) -> Result<(), CliError> {
    let grid = p.grid()?;
    let u = p.iv.sample(&grid);
    let report = stability_report(&p.system, &p.c0, &u, p.step.tau(&grid), &grid)?;
    emit(&format!("{}\n", report.to_json()), out)
}
