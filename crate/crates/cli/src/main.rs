//! `nehari` command-line driver.

mod config;
mod failure;
mod output;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{RunConfig, SweepParameter, Task};
use failure::Failure;
use output::OutputDir;
use run::Pipeline;

#[derive(Parser)]
#[command(name = "nehari", version, about = "Positive, negative and nodal solutions of weighted p-Laplacian problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory (overrides `output.dir`; default `out`).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every random choice (overrides `seed`).
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, value_name = "K")]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenvalue estimate and the (A,λ) gate.
    Eigen(Common),
    /// Positive, negative and nodal solutions.
    Solve(Common),
    /// Solve, then run every invariant check.
    Verify(Common),
    /// Solve for each value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// r_trunc, resolution or lambda (overrides `sweep.parameter`).
        #[arg(long, value_name = "NAME")]
        param: Option<String>,
        /// Comma-separated values (overrides `sweep.values`).
        #[arg(long, value_name = "LIST", allow_hyphen_values = true)]
        values: Option<String>,
    },
    /// Run the config's `tasks` in order.
    Run(Common),
}

fn parse_values(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Failure::Config(format!("cannot parse sweep value '{t}'"))))
        .collect()
}

struct Session {
    cfg: RunConfig,
    config_bytes: Vec<u8>,
    out: OutputDir,
    pool: rayon::ThreadPool,
}

fn open(common: &Common) -> Result<Session, Failure> {
    let (mut cfg, config_bytes) = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.solver.seed = seed;
    }
    let workers = match common.workers {
        Some(0) => return Err(Failure::Config("--workers must be at least 1".into())),
        Some(k) => k,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    let dir = common.out.clone().or_else(|| cfg.output.dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let out = OutputDir::create(&dir)?;
    Ok(Session { cfg, config_bytes, out, pool })
}

fn sweep_args(cfg: &RunConfig, param: Option<&str>, values: Option<&str>) -> Result<(SweepParameter, Vec<f64>), Failure> {
    let parameter = match (param, &cfg.sweep) {
        (Some(p), _) => SweepParameter::parse(p)?,
        (None, Some(s)) => s.parameter,
        (None, None) => return Err(Failure::Config("no sweep parameter: pass --param or add a [sweep] block".into())),
    };
    let values = match (values, &cfg.sweep) {
        (Some(v), _) => parse_values(v)?,
        (None, Some(s)) => s.values.clone(),
        (None, None) => return Err(Failure::Config("no sweep values: pass --values or add a [sweep] block".into())),
    };
    Ok((parameter, values))
}

fn execute(s: &mut Session, tasks: &[Task], sweep: Option<(SweepParameter, Vec<f64>)>) -> Result<(), Failure> {
    let cfg = &s.cfg;
    let out = &mut s.out;
    s.pool.install(|| {
        if matches!(&sweep, Some((_, values)) if values.is_empty()) {
            return Err(Failure::Config("sweep needs at least one value".into()));
        }
        let mut pipe = None;
        for task in tasks {
            if *task == Task::Sweep {
                let (parameter, values) = match &sweep {
                    Some(pv) => pv.clone(),
                    None => sweep_args(cfg, None, None)?,
                };
                sweep::sweep(cfg, parameter, &values, out)?;
                continue;
            }
            if pipe.is_none() {
                let p = Pipeline::new(cfg)?;
                p.write_hypotheses(out)?;
                pipe = Some(p);
            }
            let p = pipe.as_mut().expect("pipeline built");
            match task {
                Task::Eigen => p.task_eigen(out)?,
                Task::Solve => p.task_solve(out)?,
                Task::Verify => p.task_verify(out)?,
                Task::Sweep => unreachable!(),
            }
        }
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, tasks, sweep_flags) = match &cli.command {
        Command::Eigen(c) => ("eigen", c, Some(vec![Task::Eigen]), None),
        Command::Solve(c) => ("solve", c, Some(vec![Task::Solve]), None),
        Command::Verify(c) => ("verify", c, Some(vec![Task::Verify]), None),
        Command::Sweep { common, param, values } => ("sweep", common, Some(vec![Task::Sweep]), Some((param, values))),
        Command::Run(c) => ("run", c, None, None),
    };
    let mut session = match open(common) {
        Ok(s) => s,
        Err(f) => {
            eprintln!("error: {f}");
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    let tasks = tasks.unwrap_or_else(|| session.cfg.tasks.clone());
    let sweep = match sweep_flags {
        Some((param, values)) => sweep_args(&session.cfg, param.as_deref(), values.as_deref()).map(Some),
        None => Ok(None),
    };
    let result = sweep.and_then(|sw| execute(&mut session, &tasks, sw));
    let code = result.as_ref().err().map_or(0, Failure::exit_code);
    let Session { cfg, config_bytes, out, .. } = session;
    if let Err(f) = out.finish(name, cfg.seed, &config_bytes, code) {
        eprintln!("error: {f}");
        return ExitCode::from(1);
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(code as u8)
        }
    }
}
