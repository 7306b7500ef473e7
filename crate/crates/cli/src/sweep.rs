//! Parameter sweeps over `r_trunc`, `resolution` or `λ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SweepParameter};
use crate::failure::Failure;
use crate::output::OutputDir;
use crate::run::{write_axes, Axes, Axis, Pipeline};

#[derive(Debug, Default, Serialize)]
struct Row {
    parameter: &'static str,
    value: f64,
    status: String,
    exit_code: i32,
    mesh_size: Option<f64>,
    lambda_a: Option<f64>,
    alambda_passed: Option<bool>,
    s1: Option<f64>,
    s2: Option<f64>,
    s3: Option<f64>,
    residual1: Option<f64>,
    residual2: Option<f64>,
    residual3: Option<f64>,
    converged: Option<bool>,
    nodal_domains: Option<usize>,
    coupling_bound: Option<f64>,
    coupling_cross: Option<f64>,
    iterations: Option<usize>,
}

fn run_value(base: &RunConfig, parameter: SweepParameter, value: f64) -> (Row, Option<Failure>) {
    let mut row = Row { parameter: parameter.name(), value, status: "ok".into(), ..Row::default() };
    let outcome = (|| -> Result<(), Failure> {
        let cfg = base.with_parameter(parameter, value)?;
        let mut pipe = Pipeline::new(&cfg)?;
        pipe.hypotheses()?.into_result()?;
        row.mesh_size = Some(pipe.inst.domain.mesh_size());
        let check = pipe.alambda()?;
        row.lambda_a = Some(check.lambda_a_estimate);
        row.alambda_passed = Some(check.passed);
        let solved = pipe.solve()?;
        let [u1, u2, u3] = solved.all();
        row.s1 = Some(u1.energy.action);
        row.s2 = Some(u2.energy.action);
        row.s3 = Some(u3.energy.action);
        row.residual1 = Some(u1.residual);
        row.residual2 = Some(u2.residual);
        row.residual3 = Some(u3.residual);
        row.converged = Some(solved.all().iter().all(|s| s.converged));
        row.nodal_domains = Some(u3.nodal_domains);
        row.coupling_bound = Some(u3.coupling.bound);
        row.coupling_cross = Some(u3.coupling.cross_term);
        row.iterations = Some(solved.all().iter().map(|s| s.iterations).sum());
        if row.converged == Some(false) {
            return Err(Failure::NonConvergence(format!("{} = {value}", parameter.name())));
        }
        Ok(())
    })();
    match outcome {
        Ok(()) => (row, None),
        Err(f) => {
            row.status = f.to_string();
            row.exit_code = f.exit_code();
            (row, Some(f))
        }
    }
}

/// Runs every value (concurrently on the current pool), writes `sweep.csv`
/// in input order and returns the first failure.
pub fn sweep(cfg: &RunConfig, parameter: SweepParameter, values: &[f64], out: &mut OutputDir) -> Result<(), Failure> {
    if values.is_empty() {
        return Err(Failure::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Failure::Config(format!("sweep value {v} is not finite")));
    }
    let results: Vec<(Row, Option<Failure>)> = values.par_iter().map(|&v| run_value(cfg, parameter, v)).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    for (row, _) in &results {
        w.serialize(row).map_err(|e| Failure::Config(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Config(format!("csv: {e}")))?;
    out.write("sweep.csv", &bytes)?;
    out.write("plot/sweep.csv", &bytes)?;
    write_axes(
        out,
        "plot/sweep.axes.json",
        &Axes {
            data: "sweep.csv",
            kind: "line",
            title: "sweep",
            x: Axis { column: "value", label: parameter.name(), scale: "linear" },
            y: vec![
                Axis { column: "lambda_a", label: "λ̂_A", scale: "linear" },
                Axis { column: "s1", label: "S(u₁)", scale: "linear" },
                Axis { column: "s2", label: "S(u₂)", scale: "linear" },
                Axis { column: "s3", label: "S(u₃)", scale: "linear" },
                Axis { column: "coupling_bound", label: "interface coupling", scale: "log" },
            ],
        },
    )?;
    match results.into_iter().find_map(|(_, f)| f) {
        Some(f) => Err(f),
        None => Ok(()),
    }
}
