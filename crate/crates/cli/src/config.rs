//! TOML run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nehari::optimize::SolverConfig;
use nehari::{Domain, Geometry, PowerLaw, ProblemSpec, Profile, WeightField, WeightRole};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

/// Presets: `(i)` λ = 1, `(ii)` λ = -1, `(iii)` λ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    #[serde(rename = "i")]
    One,
    #[serde(rename = "ii")]
    Two,
    #[serde(rename = "iii")]
    Three,
}

impl Preset {
    pub fn lambda(self) -> f64 {
        match self {
            Preset::One => 1.0,
            Preset::Two => -1.0,
            Preset::Three => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Eigen,
    Solve,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemBlock {
    pub p: f64,
    /// Required unless a preset fixes it.
    pub lambda: Option<f64>,
    pub q: f64,
    #[serde(default = "default_eps_reg")]
    pub eps_reg: f64,
    pub a: Profile<f64>,
    pub b: Profile<f64>,
}

fn default_eps_reg() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryKind {
    Radial,
    Cartesian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub geometry: GeometryKind,
    /// Dimension of the radial problem; Cartesian grids are always 2D.
    pub dim: Option<usize>,
    /// Ball radius, or half width of the square.
    pub r_trunc: f64,
    /// Radial nodes, or nodes per side.
    pub resolution: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyBlock {
    pub probes: usize,
    pub fd_trials: usize,
    pub fd_step: f64,
    pub fiber_points: usize,
    pub miranda_eps: f64,
    pub miranda_samples: usize,
    pub residual_tolerance: f64,
    pub membership_tolerance: f64,
    pub ordering_tolerance: f64,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        VerifyBlock {
            probes: 200,
            fd_trials: 20,
            fd_step: 1e-6,
            fiber_points: 64,
            miranda_eps: 0.1,
            miranda_samples: 16,
            residual_tolerance: 1e-8,
            membership_tolerance: 1e-8,
            ordering_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParameter {
    #[serde(rename = "r_trunc")]
    RTrunc,
    #[serde(rename = "resolution")]
    Resolution,
    #[serde(rename = "lambda")]
    Lambda,
}

impl SweepParameter {
    pub fn parse(s: &str) -> Result<Self, Failure> {
        match s {
            "r_trunc" | "R_trunc" => Ok(SweepParameter::RTrunc),
            "resolution" => Ok(SweepParameter::Resolution),
            "lambda" | "λ" => Ok(SweepParameter::Lambda),
            other => Err(Failure::Config(format!(
                "unknown sweep parameter '{other}' (expected r_trunc, resolution or lambda)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::RTrunc => "r_trunc",
            SweepParameter::Resolution => "resolution",
            SweepParameter::Lambda => "lambda",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    pub problem: ProblemBlock,
    pub domain: DomainBlock,
    #[serde(default)]
    pub solver: SolverConfig<f64>,
    #[serde(default)]
    pub verify: VerifyBlock,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Eigen, Task::Solve, Task::Verify]
}

/// A problem instance ready to run.
pub struct Instance {
    pub domain: Domain<f64>,
    pub spec: ProblemSpec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), Failure> {
        let bytes = std::fs::read(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Failure::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve()?;
        Ok((cfg, bytes))
    }

    /// Applies the preset and checks everything that does not need a domain.
    pub fn resolve(&mut self) -> Result<(), Failure> {
        if let Some(preset) = self.preset {
            let lambda = preset.lambda();
            match self.problem.lambda {
                Some(l) if l != lambda => {
                    return Err(Failure::Config(format!(
                        "preset {preset:?} fixes λ = {lambda}, but the problem block sets λ = {l}"
                    )))
                }
                _ => self.problem.lambda = Some(lambda),
            }
        }
        if self.problem.lambda.is_none() {
            return Err(Failure::Config("problem.lambda is required without a preset".into()));
        }
        if !(self.problem.eps_reg >= 0.0) {
            return Err(Failure::Config(format!("eps_reg must be non-negative, got {}", self.problem.eps_reg)));
        }
        if self.solver.seed != 0 && self.solver.seed != self.seed {
            return Err(Failure::Config("set the seed once, at the top level".into()));
        }
        self.solver.seed = self.seed;
        self.solver.validate()?;
        let v = &self.verify;
        if v.probes == 0 || v.fd_trials == 0 || v.fiber_points < 2 || v.miranda_samples == 0 {
            return Err(Failure::Config("verify counts must be positive (fiber_points ≥ 2)".into()));
        }
        if !(v.fd_step > 0.0) || !(v.miranda_eps > 0.0 && v.miranda_eps < 1.0) {
            return Err(Failure::Config("verify.fd_step must be positive and miranda_eps in (0, 1)".into()));
        }
        if self.tasks.is_empty() {
            return Err(Failure::Config("tasks must not be empty".into()));
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.problem.lambda.expect("resolved config")
    }

    pub fn geometry(&self) -> Result<Geometry<f64>, Failure> {
        let d = &self.domain;
        if !(d.r_trunc > 0.0 && d.r_trunc.is_finite()) {
            return Err(Failure::Config(format!("r_trunc must be positive, got {}", d.r_trunc)));
        }
        match d.geometry {
            GeometryKind::Radial => Ok(Geometry::radial(d.dim.unwrap_or(3), d.r_trunc, d.resolution)),
            GeometryKind::Cartesian => match d.dim {
                None | Some(2) => Ok(Geometry::cartesian(d.r_trunc, d.resolution, d.resolution)),
                Some(n) => Err(Failure::Config(format!("Cartesian grids are two-dimensional, got dim = {n}"))),
            },
        }
    }

    pub fn instance(&self) -> Result<Instance, Failure> {
        let domain = Domain::new(self.geometry()?)?;
        let a = WeightField::sample(self.problem.a, WeightRole::Linear, &domain)?;
        let b = WeightField::sample(self.problem.b, WeightRole::Nonlinear, &domain)?;
        let nl = Arc::new(PowerLaw::new(self.problem.q, b)?);
        let spec = ProblemSpec::new(self.problem.p, self.lambda(), a, nl, &domain)?
            .with_eps_reg(self.problem.eps_reg);
        Ok(Instance { domain, spec })
    }

    /// Copy with one sweep parameter replaced.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Result<Self, Failure> {
        let mut cfg = self.clone();
        match parameter {
            SweepParameter::RTrunc => cfg.domain.r_trunc = value,
            SweepParameter::Resolution => {
                if !(value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64) {
                    return Err(Failure::Config(format!("resolution must be a positive integer, got {value}")));
                }
                cfg.domain.resolution = value as usize;
            }
            SweepParameter::Lambda => {
                if cfg.preset.is_some() {
                    return Err(Failure::Config("a λ sweep cannot be combined with a preset".into()));
                }
                cfg.problem.lambda = Some(value);
            }
        }
        Ok(cfg)
    }
}
