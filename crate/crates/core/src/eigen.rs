//! Principal eigenvalue `λ_A = inf ∫|∇u|^p / ∫A|u|^p` on the truncated domain.

use serde::Serialize;

use crate::domain::{Domain, Field};
use crate::error::{Error, Result};
use crate::fields::WeightField;
use crate::functional::{flux_factor, gradient_term, mass_term, ProblemSpec};
use crate::linalg::Preconditioner;
use crate::scalar::Real;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// `(A,λ)` is accepted when `λ ≤ SAFETY · λ̂_A`.
pub const SAFETY: f64 = 0.99;

#[derive(Debug, Clone, Serialize)]
pub struct EigenResult<T> {
    pub lambda_a: T,
    /// Minimizer normalized to `∫ A |u|^p = 1`.
    #[serde(skip)]
    pub field: Field<T>,
    /// Rayleigh value after every accepted step, starting with the initial guess.
    pub history: Vec<T>,
    pub truncation: T,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlambdaCheck<T> {
    pub passed: bool,
    pub lambda: T,
    pub lambda_a_estimate: T,
    /// `0.99 λ̂_A - λ`; non-negative iff passed.
    pub margin: T,
}

/// `∫ |∇u|^p / ∫ A |u|^p`.
pub fn rayleigh<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    d.check(u)?;
    rayleigh_raw(d, &spec.a, spec.p, u.values())
}

fn rayleigh_raw<T: Real>(d: &Domain<T>, a: &WeightField<T>, p: T, u: &[T]) -> Result<T> {
    let num = gradient_term(d, p, u);
    let den = mass_term(d, a, p, u);
    if !(den > T::min_positive_value().sqrt() * (T::one() + num)) {
        return Err(Error::DegenerateField(format!("∫ A|u|^p = {den} is numerically zero")));
    }
    Ok(num / den)
}

/// Scales `u` so that `∫ A |u|^p = 1`.
fn normalize<T: Real>(d: &Domain<T>, a: &WeightField<T>, p: T, u: &mut [T]) -> Result<()> {
    let den = mass_term(d, a, p, u);
    if !(den > T::zero()) || !den.is_finite() {
        return Err(Error::DegenerateField("cannot normalize a field with ∫ A|u|^p = 0".into()));
    }
    let c = den.powf(-T::one() / p);
    u.iter_mut().for_each(|v| *v *= c);
    Ok(())
}

/// Nodal partials of the Rayleigh quotient at a normalized `u`.
fn rayleigh_partials<T: Real>(d: &Domain<T>, a: &WeightField<T>, p: T, eps_reg: T, u: &[T], r: T) -> Vec<T> {
    let mut out = vec![T::zero(); u.len()];
    for c in d.cells() {
        let g = c.gradient(u);
        let f = c.weight * p * flux_factor(g[0] * g[0] + g[1] * g[1], p, eps_reg);
        if f == T::zero() {
            continue;
        }
        for k in 0..c.arity {
            out[c.nodes[k]] += f * (g[0] * c.coeffs[k][0] + g[1] * c.coeffs[k][1]);
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        if d.is_boundary(i) {
            *o = T::zero();
        } else {
            *o -= r * p * d.weights()[i] * a.at(i) * u[i].signed_pow(p);
        }
    }
    out
}

/// A-weighted Gaussian bump centred where `A` peaks.
pub fn default_init<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>) -> Field<T> {
    let c = d.coords()[spec.a.argmax()];
    let sigma = d.geometry().truncation() / T::of(4.0);
    let radial = matches!(d.geometry(), crate::domain::Geometry::Radial { .. });
    let a = &spec.a;
    let values = (0..d.len())
        .map(|i| {
            if d.is_boundary(i) {
                return T::zero();
            }
            let x = d.coords()[i];
            let dist2 = if radial {
                (x[0] - c[0]).powi(2)
            } else {
                (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2)
            };
            a.at(i) * (-dist2 / (sigma * sigma)).exp()
        })
        .collect();
    Field::from_values(d, values).expect("finite bump")
}

/// Preconditioned projected gradient descent on the Rayleigh quotient with
/// Armijo backtracking and renormalization after every step.
pub fn minimize_rayleigh<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    init: &Field<T>,
    tol: T,
    max_iter: usize,
) -> Result<EigenResult<T>> {
    d.check(init)?;
    if init.is_zero() {
        return Err(Error::ZeroField);
    }
    let pre = Preconditioner::assemble(d, &spec.a)?;
    let (a, p) = (&spec.a, spec.p);
    let mut u = init.clone().with_dirichlet(d).into_values();
    normalize(d, a, p, &mut u)?;
    let mut r = rayleigh_raw(d, a, p, &u)?;
    let mut history = vec![r];
    let mut converged = false;
    let mut iterations = 0;
    let c_armijo = T::of(1e-4);
    let mut step = T::one();
    while iterations < max_iter {
        iterations += 1;
        let grad = rayleigh_partials(d, a, p, spec.eps_reg, &u, r);
        let dir: Vec<T> = pre.apply_inverse(&grad).into_iter().map(|v| -v).collect();
        let slope: T = grad.iter().zip(&dir).map(|(&g, &v)| g * v).sum();
        if !(slope < T::zero()) {
            converged = true;
            break;
        }
        let mut alpha = (step * T::of(2.0)).min(T::one());
        let mut accepted = None;
        while alpha > T::of(1e-20) {
            let mut trial: Vec<T> = u.iter().zip(&dir).map(|(&x, &v)| x + alpha * v).collect();
            if normalize(d, a, p, &mut trial).is_ok() {
                if let Ok(rt) = rayleigh_raw(d, a, p, &trial) {
                    if rt <= r + c_armijo * alpha * slope {
                        accepted = Some((trial, rt));
                        break;
                    }
                }
            }
            alpha = alpha / T::of(2.0);
        }
        let Some((next, rn)) = accepted else {
            converged = true;
            break;
        };
        step = alpha;
        let change = (r - rn).abs();
        u = next;
        r = rn;
        history.push(r);
        if change < tol * r.abs() {
            converged = true;
            break;
        }
    }
    Ok(EigenResult {
        lambda_a: r,
        field: Field::from_values(d, u)?,
        history,
        truncation: d.geometry().truncation(),
        iterations,
        converged,
    })
}

/// `(A,λ)` with the safety margin: pass iff `λ ≤ 0.99 λ̂_A`.
pub fn check_alambda<T: Real>(spec: &ProblemSpec<T>, result: &EigenResult<T>) -> AlambdaCheck<T> {
    let margin = T::of(SAFETY) * result.lambda_a - spec.lambda;
    AlambdaCheck { passed: margin >= T::zero(), lambda: spec.lambda, lambda_a_estimate: result.lambda_a, margin }
}
