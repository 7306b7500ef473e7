//! The eigen → solve → verify pipeline for one configuration.

use nehari::domain::DomainMetadata;
use nehari::eigen::{check_alambda, default_init, minimize_rayleigh, AlambdaCheck, EigenResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nehari::fields::{check_hypotheses, HypothesisReport, SampleSpec};
use nehari::optimize::{solve_constant_sign, solve_nodal, Solution};
use nehari::sampling::{random_fields, Sign};
use nehari::verify::{
    brute_force_oracle, fd_gradient_check, fd_tolerance, fiber_property_check, geometric_grid, invariant_suite,
    miranda_check, CheckReport, LatticeSpec, SuiteInputs, SuiteTolerances, MAX_ORACLE_NODES,
};
use nehari::{Domain, Field, Geometry, Profile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Instance, Preset, RunConfig};
use crate::failure::Failure;
use crate::output::OutputDir;

#[derive(Debug, Serialize)]
pub struct ProblemSummary {
    pub preset: Option<Preset>,
    pub p: f64,
    pub q: f64,
    pub lambda: f64,
    pub dim: usize,
    pub eps_reg: f64,
    pub a: Profile<f64>,
    pub b: Profile<f64>,
}

impl ProblemSummary {
    fn new(cfg: &RunConfig, inst: &Instance) -> Self {
        ProblemSummary {
            preset: cfg.preset,
            p: inst.spec.p,
            q: inst.spec.q(),
            lambda: inst.spec.lambda,
            dim: inst.spec.dim,
            eps_reg: inst.spec.eps_reg,
            a: cfg.problem.a,
            b: cfg.problem.b,
        }
    }
}

#[derive(Debug, Serialize)]
struct EigenReport<'a> {
    problem: &'a ProblemSummary,
    domain: DomainMetadata<f64>,
    estimate: &'a EigenResult<f64>,
    alambda: AlambdaCheck<f64>,
}

#[derive(Debug, Serialize)]
pub struct Ordering {
    pub s1_plus_s2: f64,
    pub s3: f64,
    pub holds: bool,
}

#[derive(Debug, Serialize)]
struct SolveReport<'a> {
    problem: &'a ProblemSummary,
    domain: DomainMetadata<f64>,
    seed: u64,
    lambda_a_estimate: f64,
    alambda: AlambdaCheck<f64>,
    solutions: [&'a Solution<f64>; 3],
    ordering: Ordering,
}

/// Solutions of one run.
pub struct Solved {
    pub u1: Solution<f64>,
    pub u2: Solution<f64>,
    pub u3: Solution<f64>,
}

impl Solved {
    pub fn all(&self) -> [&Solution<f64>; 3] {
        [&self.u1, &self.u2, &self.u3]
    }

    pub fn ordering(&self, rel: f64) -> Ordering {
        let sum = self.u1.energy.action + self.u2.energy.action;
        let s3 = self.u3.energy.action;
        Ordering { s1_plus_s2: sum, s3, holds: s3 >= sum - rel * s3.abs() }
    }

    fn non_converged(&self) -> Option<String> {
        let bad: Vec<String> = self
            .all()
            .iter()
            .filter(|s| !s.converged)
            .map(|s| format!("{:?}: {}", s.kind, s.diagnostic.as_deref().unwrap_or("not converged")))
            .collect();
        (!bad.is_empty()).then(|| bad.join("; "))
    }
}

pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub inst: Instance,
    pub summary: ProblemSummary,
    pub eigen: Option<EigenResult<f64>>,
    pub solved: Option<Solved>,
}

impl<'a> Pipeline<'a> {
    /// Builds the instance and certifies the hypotheses.
    pub fn new(cfg: &'a RunConfig) -> Result<Self, Failure> {
        let inst = cfg.instance()?;
        let summary = ProblemSummary::new(cfg, &inst);
        Ok(Pipeline { cfg, inst, summary, eigen: None, solved: None })
    }

    pub fn hypotheses(&self) -> Result<HypothesisReport, Failure> {
        let d = &self.inst.domain;
        Ok(check_hypotheses(&self.inst.spec, d, &SampleSpec::default_for(d))?)
    }

    pub fn eigen(&mut self) -> Result<&EigenResult<f64>, Failure> {
        if self.eigen.is_none() {
            let (spec, d) = (&self.inst.spec, &self.inst.domain);
            let res = minimize_rayleigh(spec, d, &default_init(spec, d), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
            self.eigen = Some(res);
        }
        Ok(self.eigen.as_ref().expect("just computed"))
    }

    pub fn alambda(&mut self) -> Result<AlambdaCheck<f64>, Failure> {
        let res = self.eigen()?.clone();
        Ok(check_alambda(&self.inst.spec, &res))
    }

    fn gate(&mut self) -> Result<AlambdaCheck<f64>, Failure> {
        let check = self.alambda()?;
        if !check.passed {
            return Err(Failure::Hypothesis {
                hypothesis: nehari::Hypothesis::ALambda,
                detail: format!("λ = {} exceeds 0.99 λ̂_A = {}", check.lambda, 0.99 * check.lambda_a_estimate),
            });
        }
        Ok(check)
    }

    /// Solves for `u₁`, `u₂`, `u₃` concurrently; non-convergence is reported
    /// through the solutions, not as an error.
    pub fn solve(&mut self) -> Result<&Solved, Failure> {
        if self.solved.is_none() {
            self.gate()?;
            let (spec, d, solver) = (&self.inst.spec, &self.inst.domain, &self.cfg.solver);
            let (u1, (u2, u3)) = rayon::join(
                || solve_constant_sign(spec, d, solver, Sign::Positive),
                || rayon::join(|| solve_constant_sign(spec, d, solver, Sign::Negative), || solve_nodal(spec, d, solver)),
            );
            self.solved = Some(Solved { u1: u1?, u2: u2?, u3: u3? });
        }
        Ok(self.solved.as_ref().expect("just solved"))
    }

    pub fn write_hypotheses(&self, out: &mut OutputDir) -> Result<(), Failure> {
        let report = self.hypotheses()?;
        out.write_json("hypotheses.json", &report)?;
        report.into_result()?;
        Ok(())
    }

    pub fn task_eigen(&mut self, out: &mut OutputDir) -> Result<(), Failure> {
        let alambda = self.alambda()?;
        let res = self.eigen.as_ref().expect("computed by alambda");
        let d = &self.inst.domain;
        out.write_json(
            "eigen.json",
            &EigenReport { problem: &self.summary, domain: d.metadata(), estimate: res, alambda },
        )?;
        out.write_fields("eigenfunction.csv", d, &[("value", &res.field)])?;
        write_plot(out, "eigenfunction", d, &[("eigenfunction", &res.field)], "principal eigenfunction, ∫A|u|^p = 1")?;
        let history: String = std::iter::once("iteration,rayleigh\n".to_string())
            .chain(res.history.iter().enumerate().map(|(k, v)| format!("{k},{v}\n")))
            .collect();
        out.write_text("plot/eigen_history.csv", &history)?;
        write_axes(
            out,
            "plot/eigen_history.axes.json",
            &Axes {
                data: "eigen_history.csv",
                kind: "line",
                title: "Rayleigh quotient per accepted step",
                x: Axis { column: "iteration", label: "iteration", scale: "linear" },
                y: vec![Axis { column: "rayleigh", label: "R(u)", scale: "linear" }],
            },
        )?;
        if !alambda.passed {
            self.gate()?;
        }
        Ok(())
    }

    pub fn task_solve(&mut self, out: &mut OutputDir) -> Result<(), Failure> {
        let alambda = self.gate()?;
        let seed = self.cfg.solver.seed;
        let rel = self.cfg.verify.ordering_tolerance;
        let est = alambda.lambda_a_estimate;
        self.solve()?;
        let solved = self.solved.as_ref().expect("solved");
        let d = &self.inst.domain;
        let report = SolveReport {
            problem: &self.summary,
            domain: d.metadata(),
            seed,
            lambda_a_estimate: est,
            alambda,
            solutions: solved.all(),
            ordering: solved.ordering(rel),
        };
        out.write_json("solve_report.json", &report)?;
        for (name, s) in [("u1", &solved.u1), ("u2", &solved.u2), ("u3", &solved.u3)] {
            out.write_fields(&format!("{name}.csv"), d, &[("value", &s.field)])?;
        }
        let a = Field::from_values(d, self.inst.spec.a.values().to_vec())?;
        let b = Field::from_values(d, self.inst.spec.nl.weight().values().to_vec())?;
        write_plot(
            out,
            "solutions",
            d,
            &[("u1", &solved.u1.field), ("u2", &solved.u2.field), ("u3", &solved.u3.field), ("A", &a), ("B", &b)],
            "positive, negative and nodal solutions with the weights",
        )?;
        match solved.non_converged() {
            Some(msg) => Err(Failure::NonConvergence(msg)),
            None => Ok(()),
        }
    }

    pub fn task_verify(&mut self, out: &mut OutputDir) -> Result<(), Failure> {
        let alambda = self.gate()?;
        self.solve()?;
        let v = &self.cfg.verify;
        let seed = self.cfg.seed;
        let (spec, d) = (&self.inst.spec, &self.inst.domain);
        let solved = self.solved.as_ref().expect("solved");
        let mut probes = random_fields(d, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x9B0B), v.probes, None);
        probes.extend(solved.all().iter().map(|s| s.field.clone()));
        let tol = SuiteTolerances {
            residual: v.residual_tolerance,
            membership: v.membership_tolerance,
            ordering: v.ordering_tolerance,
        };
        let inputs = SuiteInputs {
            positive: Some(&solved.u1.field),
            negative: Some(&solved.u2.field),
            nodal: Some(&solved.u3.field),
            lambda_a_estimate: alambda.lambda_a_estimate,
            probes: &probes,
        };
        let mut report = CheckReport::new("verification");
        report.merge(invariant_suite(spec, d, &inputs, &tol)?);
        report.merge(fd_gradient_check(spec, d, v.fd_trials, v.fd_step, fd_tolerance(spec.p), seed)?);
        let grid = geometric_grid(0.1, 10.0, v.fiber_points);
        report.merge(fiber_property_check(spec, d, &solved.u1.field, &grid)?);
        if solved.u3.converged {
            report.merge(miranda_check(spec, d, &solved.u3.field, v.miranda_eps, v.miranda_samples)?);
        }
        if d.interior_count() <= MAX_ORACLE_NODES {
            let oracle = brute_force_oracle(spec, d, &LatticeSpec::default())?;
            out.write_json("oracle.json", &oracle)?;
            let mut levels = vec![("N⁺", solved.u1.energy.action, &oracle.positive), ("N⁻", solved.u2.energy.action, &oracle.negative)];
            if let Some(nodal) = &oracle.nodal {
                levels.push(("nodal set", solved.u3.energy.action, nodal));
            }
            for (name, solver, level) in levels {
                let gap = solver - level.minimum;
                report.push(
                    format!("oracle {name}"),
                    "solver level matches the brute-force minimum",
                    gap >= -1e-6 && gap <= 1e-6 + level.lattice_bound,
                    gap,
                    1e-6 + level.lattice_bound,
                    format!("solver {solver}, oracle {}, lattice bound {}", level.minimum, level.lattice_bound),
                );
            }
        }
        out.write_json("check_report.json", &report)?;
        out.write_text("check_report.txt", &report.table())?;
        if let Some(msg) = solved.non_converged() {
            return Err(Failure::NonConvergence(msg));
        }
        let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        if !failed.is_empty() {
            return Err(Failure::Invariant(format!("{} check(s) failed: {}", failed.len(), failed.join(", "))));
        }
        Ok(())
    }
}

#[derive(Serialize)]
pub struct Axis<'a> {
    pub column: &'a str,
    pub label: &'a str,
    pub scale: &'a str,
}

#[derive(Serialize)]
pub struct Axes<'a> {
    pub data: &'a str,
    pub kind: &'a str,
    pub title: &'a str,
    pub x: Axis<'a>,
    pub y: Vec<Axis<'a>>,
}

#[derive(Serialize)]
struct GridAxes<'a> {
    data: &'a str,
    kind: &'a str,
    title: &'a str,
    x: Axis<'a>,
    y: Axis<'a>,
    nx: usize,
    ny: usize,
    values: Vec<Axis<'a>>,
}

pub fn write_axes<S: Serialize>(out: &mut OutputDir, rel: &str, axes: &S) -> Result<(), Failure> {
    out.write_json(rel, axes)
}

/// `plot/<stem>.csv` plus `plot/<stem>.axes.json`: a radial profile or a 2D grid.
fn write_plot(
    out: &mut OutputDir,
    stem: &str,
    d: &Domain<f64>,
    columns: &[(&str, &Field<f64>)],
    title: &str,
) -> Result<(), Failure> {
    let data = format!("{stem}.csv");
    out.write_fields(&format!("plot/{data}"), d, columns)?;
    let values: Vec<Axis> = columns.iter().map(|(c, _)| Axis { column: c, label: c, scale: "linear" }).collect();
    let rel = format!("plot/{stem}.axes.json");
    match *d.geometry() {
        Geometry::Radial { .. } => write_axes(
            out,
            &rel,
            &Axes { data: &data, kind: "radial_profile", title, x: Axis { column: "r", label: "|x|", scale: "linear" }, y: values },
        ),
        Geometry::Cartesian2D { nx, ny, .. } => write_axes(
            out,
            &rel,
            &GridAxes {
                data: &data,
                kind: "grid_2d",
                title,
                x: Axis { column: "x", label: "x", scale: "linear" },
                y: Axis { column: "y", label: "y", scale: "linear" },
                nx,
                ny,
                values,
            },
        ),
    }
}
