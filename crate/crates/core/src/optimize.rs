//! Minimization of `S_λ` over `N_λ⁺`, `N_λ⁻` and the nodal set by
//! preconditioned descent with fiber re-projection as retraction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{count_nodal_domains, default_zero_tol, Domain, Field, Geometry};
use crate::eigen::{default_init, minimize_rayleigh};
use crate::error::{Error, Result};
use crate::functional::{action_partials, action_raw, energy, EnergyBreakdown, ProblemSpec};
use crate::linalg::Preconditioner;
use crate::nehari::{coupling_raw, membership, project, project_nodal_coupled, InterfaceCoupling, Membership};
use crate::sampling::{cutoff, gaussian, random_smooth_field, Sign};
use crate::scalar::Real;

/// Starting point of the constant-sign solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRecipe {
    /// Gaussian bump at the centre, width from the support of `B`.
    #[default]
    Bump,
    /// Modulus of the principal eigenfunction of the Rayleigh quotient.
    Eigenfunction,
}

/// `P = K + mass_weight · M_A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PreconditionerSpec<T> {
    pub mass_weight: T,
}

impl<T: Real> Default for PreconditionerSpec<T> {
    fn default() -> Self {
        PreconditionerSpec { mass_weight: T::one() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default, deny_unknown_fields)]
pub struct SolverConfig<T> {
    pub c_armijo: T,
    pub backtrack: T,
    pub initial_step: T,
    /// Stop when the preconditioned residual is below this...
    pub tol_res: T,
    /// ...and `|ΔS| ≤ stall_tol |S|` over `stall_window` consecutive steps.
    pub stall_tol: T,
    pub stall_window: usize,
    /// Relative tolerance of the fiber projections.
    pub tol_proj: T,
    /// Relative tolerance of the reported membership flags.
    pub tol_member: T,
    pub max_iter: usize,
    pub seed_budget: usize,
    pub seed: u64,
    pub init: InitRecipe,
    /// Length scale of the seeds; defaults to the core radius of `B`.
    pub seed_length: Option<T>,
    pub preconditioner: PreconditionerSpec<T>,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            c_armijo: T::of(1e-4),
            backtrack: T::of(0.5),
            initial_step: T::one(),
            tol_res: T::of(1e-8),
            stall_tol: T::of(1e-12),
            stall_window: 3,
            tol_proj: T::of(1e-10),
            tol_member: T::of(1e-8),
            max_iter: 5000,
            seed_budget: 5,
            seed: 0,
            init: InitRecipe::Bump,
            seed_length: None,
            preconditioner: PreconditionerSpec::default(),
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: T| x > T::zero() && x < T::one();
        if !open_unit(self.c_armijo) {
            return Err(Error::config(format!("c_armijo must lie in (0, 1), got {}", self.c_armijo)));
        }
        if !open_unit(self.backtrack) {
            return Err(Error::config(format!("backtrack must lie in (0, 1), got {}", self.backtrack)));
        }
        for (name, v) in [
            ("tol_res", self.tol_res),
            ("tol_proj", self.tol_proj),
            ("tol_member", self.tol_member),
            ("initial_step", self.initial_step),
        ] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.stall_tol >= T::zero()) {
            return Err(Error::config("stall_tol must be non-negative"));
        }
        if self.seed_budget == 0 || self.max_iter == 0 {
            return Err(Error::config("seed_budget and max_iter must be positive"));
        }
        if let Some(l) = self.seed_length {
            if !(l > T::zero()) {
                return Err(Error::config("seed_length must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionKind {
    Positive,
    Negative,
    Nodal,
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution<T> {
    pub kind: SolutionKind,
    #[serde(skip)]
    pub field: Field<T>,
    pub energy: EnergyBreakdown<T>,
    /// `sqrt(rᵀ P⁻¹ r)` with `r` the nodal derivative of `S_λ`.
    pub residual: T,
    pub membership: Membership<T>,
    pub nodal_domains: usize,
    pub coupling: InterfaceCoupling<T>,
    pub iterations: usize,
    pub converged: bool,
    pub seeds_used: usize,
    /// `S_λ` along accepted iterates.
    pub history: Vec<T>,
    pub diagnostic: Option<String>,
}

/// `sqrt(rᵀ P⁻¹ r)` for the nodal derivative `r` of `S_λ` and `P = K + M_A`.
pub fn residual_dual_norm<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    d.check(u)?;
    let pre = Preconditioner::assemble(d, &spec.a)?;
    Ok(pre.dual_norm(&action_partials(spec, d, u.values())))
}

/// Relative band of `S_λ` treated as rounding noise by the line search.
const ENERGY_NOISE: f64 = 1e-12;

struct Descent<T> {
    field: Field<T>,
    history: Vec<T>,
    iterations: usize,
    converged: bool,
    residual: T,
}

fn stalled<T: Real>(history: &[T], window: usize, tol: T) -> bool {
    if history.len() <= window {
        return false;
    }
    history[history.len() - window - 1..]
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() <= tol * w[1].abs())
}

fn descend<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    cfg: &SolverConfig<T>,
    pre: &Preconditioner<T>,
    seed: &Field<T>,
    cone: Option<Sign>,
    retract: &dyn Fn(&Field<T>) -> Result<Field<T>>,
) -> Result<Descent<T>> {
    let clip = |f: Field<T>| -> Field<T> {
        match cone {
            Some(Sign::Positive) => f.positive_part(),
            Some(Sign::Negative) => f.negative_part(),
            None => f,
        }
    };
    let mut u = retract(&clip(seed.clone()))?;
    let mut s = action_raw(spec, d, u.values());
    let mut history = vec![s];
    let noise = T::of(ENERGY_NOISE);
    let min_step = T::of(1e-14);
    let mut residual = T::infinity();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        let partials = action_partials(spec, d, u.values());
        let z = pre.apply_inverse(&partials);
        let slope = -partials.iter().zip(&z).map(|(&r, &v)| r * v).sum::<T>();
        residual = (-slope).max(T::zero()).sqrt();
        if residual <= cfg.tol_res && stalled(&history, cfg.stall_window, cfg.stall_tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let mut alpha = cfg.initial_step;
        let mut accepted = None;
        while alpha >= min_step {
            let values: Vec<T> = u.values().iter().zip(&z).map(|(&x, &v)| x - alpha * v).collect();
            let trial = clip(Field::from_values(d, values)?);
            if let Ok(w) = retract(&trial) {
                let sw = action_raw(spec, d, w.values());
                let band = noise * s.abs();
                let ok = if sw < s - band {
                    sw <= s + cfg.c_armijo * alpha * slope
                } else {
                    // Inside the rounding band of S the Armijo test is blind;
                    // require a smaller residual instead.
                    sw <= s + band && pre.dual_norm(&action_partials(spec, d, w.values())) < residual
                };
                if ok {
                    accepted = Some((w, sw));
                    break;
                }
            }
            alpha = alpha * cfg.backtrack;
        }
        match accepted {
            Some((w, sw)) => {
                u = w;
                s = sw;
                history.push(s);
            }
            None => {
                converged = residual <= cfg.tol_res;
                break;
            }
        }
    }
    if !converged && iterations >= cfg.max_iter {
        let partials = action_partials(spec, d, u.values());
        residual = pre.dual_norm(&partials);
    }
    Ok(Descent { field: u, history, iterations, converged, residual })
}

/// Radius within which `B` stays above `max B / e`, capped at `R/8`.
fn seed_length<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, cfg: &SolverConfig<T>) -> T {
    if let Some(l) = cfg.seed_length {
        return l;
    }
    let b = spec.nl.weight();
    let cap = d.geometry().truncation() / T::of(8.0);
    let top = b.max();
    let c = d.coords()[b.argmax()];
    let mut core = T::zero();
    for i in 0..d.len() {
        if b.at(i) >= top / T::of(std::f64::consts::E) {
            let x = d.coords()[i];
            let r = ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)).sqrt();
            core = core.max(r);
        }
    }
    let h = d.mesh_size();
    core.max(T::of(2.0) * h).min(cap.max(T::of(2.0) * h))
}

fn bump_seed<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, cfg: &SolverConfig<T>) -> Result<Field<T>> {
    match cfg.init {
        InitRecipe::Bump => {
            let l = seed_length(spec, d, cfg);
            let g = d.geometry();
            let c = d.coords()[spec.nl.weight().argmax()];
            let c = if matches!(g, Geometry::Radial { .. }) { [T::zero(), T::zero()] } else { c };
            Ok(Field::admissible_from_fn(d, |x| gaussian(g, x, c, l) * cutoff(g, x)))
        }
        InitRecipe::Eigenfunction => {
            let e = minimize_rayleigh(spec, d, &default_init(spec, d), T::of(1e-6), 2000)?;
            Ok(e.field.map(|v| v.abs()))
        }
    }
}

/// Centre bump minus a shell (radial) or a bump minus its mirror image along
/// the first axis (Cartesian).
fn dipole_seed<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, cfg: &SolverConfig<T>) -> Field<T> {
    let l = seed_length(spec, d, cfg);
    let g = d.geometry();
    let zero = T::zero();
    match g {
        Geometry::Radial { .. } => Field::admissible_from_fn(d, |x| {
            let shell = gaussian(g, x, [T::of(2.0) * l, zero], l);
            (gaussian(g, x, [zero, zero], l) - T::of(0.5) * shell) * cutoff(g, x)
        }),
        Geometry::Cartesian2D { .. } => Field::admissible_from_fn(d, |x| {
            (gaussian(g, x, [l, zero], l) - gaussian(g, x, [-l, zero], l)) * cutoff(g, x)
        }),
    }
}

fn reseed_rng<T: Real>(cfg: &SolverConfig<T>, attempt: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed ^ salt ^ (attempt as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn finish<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    cfg: &SolverConfig<T>,
    kind: SolutionKind,
    run: Descent<T>,
    seeds_used: usize,
) -> Result<Solution<T>> {
    let u = run.field;
    let nodal_domains = count_nodal_domains(d, &u, default_zero_tol(&u))?;
    let coupling = coupling_raw(spec, d, u.values());
    let diagnostic = if kind == SolutionKind::Nodal && nodal_domains > 2 {
        Some(format!(
            "expected exactly 2 nodal domains, found {nodal_domains}; dropping a component and re-projecting \
             the rest must lower the energy, so this iterate is not the nodal minimizer"
        ))
    } else if !run.converged {
        Some(format!("no convergence after {} iterations, residual {}", run.iterations, run.residual))
    } else {
        None
    };
    Ok(Solution {
        kind,
        energy: energy(spec, d, &u)?,
        membership: membership(spec, d, &u, cfg.tol_member)?,
        field: u,
        residual: run.residual,
        nodal_domains,
        coupling,
        iterations: run.iterations,
        converged: run.converged,
        seeds_used,
        history: run.history,
        diagnostic,
    })
}

/// Minimizer of `S_λ` over `N_λ⁺` (`sign = Positive`) or `N_λ⁻`.
pub fn solve_constant_sign<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    cfg: &SolverConfig<T>,
    sign: Sign,
) -> Result<Solution<T>> {
    cfg.validate()?;
    let pre = Preconditioner::assemble_scaled(d, &spec.a, cfg.preconditioner.mass_weight)?;
    let s = sign.factor::<T>();
    let retract = |f: &Field<T>| project(spec, d, f, cfg.tol_proj).map(|p| p.field);
    let kind = match sign {
        Sign::Positive => SolutionKind::Positive,
        Sign::Negative => SolutionKind::Negative,
    };
    let mut last_err = None;
    for attempt in 0..cfg.seed_budget {
        let seed = if attempt == 0 {
            bump_seed(spec, d, cfg)?
        } else {
            random_smooth_field(d, &mut reseed_rng(cfg, attempt, 0x5157), Some(Sign::Positive))
        }
        .scaled(s);
        let run = match descend(spec, d, cfg, &pre, &seed, Some(sign), &retract) {
            Ok(run) => run,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let tol = default_zero_tol(&run.field);
        if run.field.values().iter().any(|&v| v * s < -tol) {
            last_err = Some(Error::Solver("sign violation after projection".into()));
            continue;
        }
        return finish(spec, d, cfg, kind, run, attempt + 1);
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("seed budget exhausted".into())))
}

/// Minimizer of `S_λ` over the nodal set, retracted by the two-parameter fiber.
pub fn solve_nodal<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, cfg: &SolverConfig<T>) -> Result<Solution<T>> {
    cfg.validate()?;
    let pre = Preconditioner::assemble_scaled(d, &spec.a, cfg.preconditioner.mass_weight)?;
    let retract = |f: &Field<T>| project_nodal_coupled(spec, d, f, cfg.tol_proj).map(|p| p.field);
    let mut last_err = None;
    for attempt in 0..cfg.seed_budget {
        let seed = if attempt == 0 {
            dipole_seed(spec, d, cfg)
        } else {
            let mut rng = reseed_rng(cfg, attempt, 0x40DA);
            let mut f = random_smooth_field(d, &mut rng, None);
            for _ in 0..32 {
                if !f.positive_part().is_zero() && !f.negative_part().is_zero() {
                    break;
                }
                f = random_smooth_field(d, &mut rng, None);
            }
            f
        };
        match descend(spec, d, cfg, &pre, &seed, None, &retract) {
            Ok(run) => return finish(spec, d, cfg, SolutionKind::Nodal, run, attempt + 1),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or_else(|| Error::Solver("seed budget exhausted".into())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{PowerLaw, Profile, WeightField, WeightRole};
    use std::sync::Arc;

    fn setup(n: usize) -> (Domain<f64>, ProblemSpec<f64>) {
        let d = Domain::new(Geometry::radial(3, 8.0, n)).unwrap();
        let a = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, WeightRole::Linear, &d).unwrap();
        let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let spec = ProblemSpec::new(2.0, 0.0, a, Arc::new(PowerLaw::new(4.0, b).unwrap()), &d).unwrap();
        (d, spec)
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::<f64>::default().validate().is_ok());
        let bad = SolverConfig { c_armijo: 1.0, ..SolverConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { backtrack: 0.0, ..SolverConfig::<f64>::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { tol_res: 0.0, ..SolverConfig::<f64>::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn residual_of_zero_is_zero() {
        let (d, spec) = setup(50);
        assert_eq!(residual_dual_norm(&spec, &d, &Field::zeros(&d)).unwrap(), 0.0);
    }

    #[test]
    fn constant_sign_pair_is_odd() {
        let (d, spec) = setup(150);
        let cfg = SolverConfig::default();
        let u1 = solve_constant_sign(&spec, &d, &cfg, Sign::Positive).unwrap();
        assert!(u1.converged, "{:?}", u1.diagnostic);
        assert!(u1.residual <= 1e-8);
        assert!(u1.energy.action > 0.0);
        assert!(u1.membership.in_nehari_positive);
        assert_eq!(u1.nodal_domains, 1);
        assert!(u1.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        let u2 = solve_constant_sign(&spec, &d, &cfg, Sign::Negative).unwrap();
        let diff = u1.field.add_scaled(&u2.field, 1.0).max_abs();
        assert!(diff <= 1e-6 * u1.field.max_abs());
        assert!(u2.membership.in_nehari_negative);
    }

    #[test]
    fn nodal_solution_has_two_domains() {
        let (d, spec) = setup(150);
        let cfg = SolverConfig::default();
        let u1 = solve_constant_sign(&spec, &d, &cfg, Sign::Positive).unwrap();
        let u3 = solve_nodal(&spec, &d, &cfg).unwrap();
        assert!(u3.converged, "{:?}", u3.diagnostic);
        assert!(u3.residual <= 1e-8);
        assert_eq!(u3.nodal_domains, 2);
        assert!(u3.membership.in_nodal);
        assert!(u3.energy.action >= 2.0 * u1.energy.action);
    }
}
