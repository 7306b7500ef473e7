//! The action `S_λ`, its derivative, the Nehari functional `J_λ` and the
//! `W_A` / `λ` norms on the discrete space.
//!
//! With `u` sampled at nodes,
//!
//! ```text
//! S_λ(u) = (1/p) Σ_c w_c |∇u_c|^p  -  (λ/p) Σ_i w_i A_i |u_i|^p  -  Σ_i w_i G(x_i, u_i)
//! ```
//!
//! and the duality pairing is the lumped `L²` product `⟨f, v⟩ = Σ_i w_i f_i v_i`,
//! so the gradient field is the nodal derivative divided by the node weight.

use std::sync::Arc;

use serde::Serialize;

use crate::domain::{Domain, Field};
use crate::error::{Error, Hypothesis, Result};
use crate::fields::{critical_exponent, Nonlinearity, WeightField, WeightRole};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct ProblemSpec<T: Real> {
    pub p: T,
    pub dim: usize,
    pub lambda: T,
    pub a: WeightField<T>,
    pub nl: Arc<dyn Nonlinearity<T>>,
    /// Added to `|∇u|²` inside `|∇u|^{p-2}` when `p < 2`.
    pub eps_reg: T,
}

impl<T: Real> ProblemSpec<T> {
    /// Problem with `1 < p < N` and `p < q < p*`.
    pub fn new(
        p: T,
        lambda: T,
        a: WeightField<T>,
        nl: Arc<dyn Nonlinearity<T>>,
        d: &Domain<T>,
    ) -> Result<Self> {
        let spec = Self::relaxed(p, lambda, a, nl, d)?;
        let n = T::of_usize(spec.dim);
        if spec.p >= n {
            return Err(Error::config(format!("p = {} must be below the dimension N = {}", spec.p, spec.dim)));
        }
        let q = spec.nl.exponent();
        let pstar = critical_exponent(spec.p, spec.dim);
        if q >= pstar {
            return Err(Error::config(format!("q = {q} must be below p* = {pstar}")));
        }
        Ok(spec)
    }

    /// Problem that only needs the discrete functional to make sense:
    /// `p > 1` and `q > p`, with no subcritical window. Used to exercise the
    /// discretization outside the admissible exponent range.
    pub fn relaxed(
        p: T,
        lambda: T,
        a: WeightField<T>,
        nl: Arc<dyn Nonlinearity<T>>,
        d: &Domain<T>,
    ) -> Result<Self> {
        if !p.is_finite() || p <= T::one() {
            return Err(Error::config(format!("p must exceed 1, got {p}")));
        }
        if !lambda.is_finite() {
            return Err(Error::config("λ must be finite"));
        }
        let q = nl.exponent();
        if q <= p {
            return Err(Error::config(format!("q = {q} must exceed p = {p}")));
        }
        if a.role() != WeightRole::Linear {
            return Err(Error::config("A must be sampled with the linear role"));
        }
        if a.domain_id() != d.id() || nl.weight().domain_id() != d.id() {
            return Err(Error::DomainMismatch);
        }
        Ok(ProblemSpec { p, dim: d.dim(), lambda, a, nl, eps_reg: T::of(1e-12) })
    }

    pub fn with_eps_reg(mut self, eps: T) -> Self {
        self.eps_reg = eps;
        self
    }

    pub fn with_lambda(mut self, lambda: T) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn q(&self) -> T {
        self.nl.exponent()
    }

    fn check(&self, d: &Domain<T>, u: &Field<T>) -> Result<()> {
        d.check(u)?;
        if self.a.domain_id() != d.id() {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBreakdown<T> {
    /// `∫ |∇u|^p`.
    pub gradient_term: T,
    /// `∫ A |u|^p`.
    pub weighted_mass: T,
    /// `∫ G(x, u)`.
    pub potential: T,
    /// `∫ g(x, u) u`.
    pub nonlinear_work: T,
    /// `‖u‖_λ^p`.
    pub norm_lambda_p: T,
    /// `S_λ(u)`.
    pub action: T,
    /// `J_λ(u)`.
    pub nehari: T,
}

#[inline]
pub(crate) fn norm_sq<T: Real>(g: [T; 2]) -> T {
    g[0] * g[0] + g[1] * g[1]
}

/// `Σ_c w_c |∇u_c|^p`.
pub(crate) fn gradient_term<T: Real>(d: &Domain<T>, p: T, u: &[T]) -> T {
    let half_p = p / T::of(2.0);
    d.cells().iter().map(|c| c.weight * norm_sq(c.gradient(u)).powf(half_p)).sum()
}

/// `Σ_i w_i A_i |u_i|^p`.
pub(crate) fn mass_term<T: Real>(d: &Domain<T>, a: &WeightField<T>, p: T, u: &[T]) -> T {
    d.weights()
        .iter()
        .zip(a.values())
        .zip(u)
        .map(|((&w, &ai), &v)| if v == T::zero() { T::zero() } else { w * ai * v.abs().powf(p) })
        .sum()
}

pub(crate) fn potential_term<T: Real>(d: &Domain<T>, nl: &dyn Nonlinearity<T>, u: &[T]) -> T {
    d.weights().iter().zip(u).enumerate().map(|(i, (&w, &v))| w * nl.primitive(i, v)).sum()
}

pub(crate) fn work_term<T: Real>(d: &Domain<T>, nl: &dyn Nonlinearity<T>, u: &[T]) -> T {
    d.weights().iter().zip(u).enumerate().map(|(i, (&w, &v))| w * nl.g(i, v) * v).sum()
}

/// `‖u‖_λ^p`, possibly negative when `λ ≥ λ_A`.
pub(crate) fn norm_lambda_p_raw<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> T {
    let mass = if spec.lambda == T::zero() { T::zero() } else { mass_term(d, &spec.a, spec.p, u) };
    gradient_term(d, spec.p, u) - spec.lambda * mass
}

/// `S_λ` without the sign check on `‖u‖_λ^p`.
pub(crate) fn action_raw<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> T {
    norm_lambda_p_raw(spec, d, u) / spec.p - potential_term(d, spec.nl.as_ref(), u)
}

/// `J_λ` without the sign check on `‖u‖_λ^p`.
pub(crate) fn nehari_raw<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> T {
    norm_lambda_p_raw(spec, d, u) - work_term(d, spec.nl.as_ref(), u)
}

/// `(∫ |∇u|^p + A |u|^p)^{1/p}`.
pub fn norm_wa<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    spec.check(d, u)?;
    let v = u.values();
    let s = gradient_term(d, spec.p, v) + mass_term(d, &spec.a, spec.p, v);
    Ok(s.powf(T::one() / spec.p))
}

fn lambda_radicand_checked<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> Result<T> {
    let r = norm_lambda_p_raw(spec, d, u);
    if r < T::zero() {
        return Err(Error::hypothesis(
            Hypothesis::ALambda,
            format!("‖u‖_λ^p = {r} < 0 at λ = {}", spec.lambda),
        ));
    }
    Ok(r)
}

/// `(∫ |∇u|^p - λ A |u|^p)^{1/p}`.
pub fn norm_lambda<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    spec.check(d, u)?;
    Ok(lambda_radicand_checked(spec, d, u.values())?.powf(T::one() / spec.p))
}

pub fn energy<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<EnergyBreakdown<T>> {
    spec.check(d, u)?;
    let v = u.values();
    let nl = spec.nl.as_ref();
    let gradient = gradient_term(d, spec.p, v);
    let mass = mass_term(d, &spec.a, spec.p, v);
    let norm_p = gradient - spec.lambda * mass;
    if norm_p < T::zero() {
        return Err(Error::hypothesis(
            Hypothesis::ALambda,
            format!("‖u‖_λ^p = {norm_p} < 0 at λ = {}", spec.lambda),
        ));
    }
    let potential = potential_term(d, nl, v);
    let work = work_term(d, nl, v);
    Ok(EnergyBreakdown {
        gradient_term: gradient,
        weighted_mass: mass,
        potential,
        nonlinear_work: work,
        norm_lambda_p: norm_p,
        action: norm_p / spec.p - potential,
        nehari: norm_p - work,
    })
}

/// `S_λ(u)`.
pub fn action<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    energy(spec, d, u).map(|e| e.action)
}

/// `J_λ(u) = ⟨S'_λ(u), u⟩`.
pub fn nehari_functional<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<T> {
    energy(spec, d, u).map(|e| e.nehari)
}

/// `|∇u|^{p-2}` with the regularization applied for `p < 2`.
#[inline]
pub(crate) fn flux_factor<T: Real>(nsq: T, p: T, eps_reg: T) -> T {
    let two = T::of(2.0);
    if p < two {
        (nsq + eps_reg).powf((p - two) / two)
    } else if nsq == T::zero() {
        if p == two {
            T::one()
        } else {
            T::zero()
        }
    } else {
        nsq.powf((p - two) / two)
    }
}

/// Nodal partial derivatives `∂S_λ/∂u_j`, zero at Dirichlet nodes.
pub(crate) fn action_partials<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); u.len()];
    let p = spec.p;
    for c in d.cells() {
        let g = c.gradient(u);
        let f = c.weight * flux_factor(norm_sq(g), p, spec.eps_reg);
        if f == T::zero() {
            continue;
        }
        for k in 0..c.arity {
            out[c.nodes[k]] += f * (g[0] * c.coeffs[k][0] + g[1] * c.coeffs[k][1]);
        }
    }
    let nl = spec.nl.as_ref();
    for (i, o) in out.iter_mut().enumerate() {
        if d.is_boundary(i) {
            *o = T::zero();
            continue;
        }
        let w = d.weights()[i];
        let v = u[i];
        *o -= w * (spec.lambda * spec.a.at(i) * v.signed_pow(p) + nl.g(i, v));
    }
    out
}

/// Representative of `S'_λ(u)` under the lumped pairing.
pub fn gradient<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<Field<T>> {
    spec.check(d, u)?;
    let partials = action_partials(spec, d, u.values());
    let values = partials.iter().zip(d.weights()).map(|(&g, &w)| g / w).collect();
    Field::from_values(d, values)
}

/// `⟨f, v⟩ = Σ_i w_i f_i v_i`.
pub fn pairing<T: Real>(d: &Domain<T>, f: &Field<T>, v: &Field<T>) -> Result<T> {
    d.check(f)?;
    d.check(v)?;
    Ok(d.weights().iter().zip(f.values()).zip(v.values()).map(|((&w, &a), &b)| w * a * b).sum())
}

/// `d²S_λ(u)[a, b]`, used by the Newton steps of the fiber projections.
pub(crate) fn second_variation<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    u: &[T],
    a: &[T],
    b: &[T],
) -> T {
    let p = spec.p;
    let two = T::of(2.0);
    let mut total = T::zero();
    for c in d.cells() {
        let g = c.gradient(u);
        let ga = c.gradient(a);
        let gb = c.gradient(b);
        let dab = ga[0] * gb[0] + ga[1] * gb[1];
        let nsq = norm_sq(g);
        let f = flux_factor(nsq, p, spec.eps_reg);
        let mut term = f * dab;
        let reg = if p < two { nsq + spec.eps_reg } else { nsq };
        if reg > T::zero() {
            let gga = g[0] * ga[0] + g[1] * ga[1];
            let ggb = g[0] * gb[0] + g[1] * gb[1];
            term += (p - two) * reg.powf((p - T::of(4.0)) / two) * gga * ggb;
        }
        total += c.weight * term;
    }
    let nl = spec.nl.as_ref();
    for i in d.interior_nodes() {
        let ab = a[i] * b[i];
        if ab == T::zero() || u[i] == T::zero() {
            continue;
        }
        let w = d.weights()[i];
        let lin = spec.lambda * (p - T::one()) * spec.a.at(i) * u[i].abs().powf(p - two);
        total -= w * ab * (lin + nl.g_s(i, u[i]));
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormConstants<T> {
    pub c1: T,
    pub c2: T,
    /// Split parameter at which the lower constant is attained.
    pub eps_star: T,
}

/// Constants with `c₁‖u‖_{W_A} ≤ ‖u‖_λ ≤ c₂‖u‖_{W_A}`.
///
/// `c₂ = max{1, |λ|}^{1/p}`. The lower constant maximizes
/// `min{ε, (1-ε)(λ_A-λ) - ελ}` over `ε ∈ (0, 1]`; the two branches cross at
/// `ε = (λ_A-λ)/(1+λ_A)`, clamped to 1 when that exceeds 1 (only for `λ < 0`).
pub fn norm_equivalence_constants<T: Real>(
    spec: &ProblemSpec<T>,
    lambda_a_estimate: T,
) -> Result<NormConstants<T>> {
    let (p, lambda, la) = (spec.p, spec.lambda, lambda_a_estimate);
    if !(lambda < la) {
        return Err(Error::hypothesis(
            Hypothesis::ALambda,
            format!("λ = {lambda} is not below λ_A ≈ {la}"),
        ));
    }
    let inv_p = T::one() / p;
    let c2 = T::one().max(lambda.abs()).powf(inv_p);
    let eps = ((la - lambda) / (T::one() + la)).min(T::one());
    let lower = eps.min((T::one() - eps) * (la - lambda) - eps * lambda);
    Ok(NormConstants { c1: lower.powf(inv_p), c2, eps_star: eps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use crate::fields::{PowerLaw, Profile};
    use std::f64::consts::PI;

    fn unit_ball_spec(n: usize, lambda: f64) -> (Domain<f64>, ProblemSpec<f64>) {
        let d = Domain::new(Geometry::radial(3, 1.0, n)).unwrap();
        let a = WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Linear, &d).unwrap();
        let b = WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let spec = ProblemSpec::new(2.0, lambda, a, Arc::new(PowerLaw::new(4.0, b).unwrap()), &d).unwrap();
        (d, spec)
    }

    #[test]
    fn closed_form_norms() {
        let (d, spec) = unit_ball_spec(2001, 0.0);
        let u = Field::from_fn(&d, |x| 1.0 - x[0]);
        let wa = norm_wa(&spec, &d, &u).unwrap();
        let exact = (4.0 * PI / 3.0 + 2.0 * PI / 15.0).sqrt();
        assert!((wa - exact).abs() / exact < 1e-6, "{wa} vs {exact}");
        assert!((wa - 2.14655).abs() < 1e-5);

        let l0 = norm_lambda(&spec, &d, &u).unwrap();
        assert!((l0 - (4.0 * PI / 3.0).sqrt()).abs() < 1e-10);

        let l1 = norm_lambda(&spec.clone().with_lambda(1.0), &d, &u).unwrap();
        let exact1 = (6.0 * PI / 5.0).sqrt();
        assert!((l1 - exact1).abs() / exact1 < 1e-6);

        let lm = norm_lambda(&spec.clone().with_lambda(-1.0), &d, &u).unwrap();
        assert!((lm - wa).abs() < 1e-12);

        let zero = Field::zeros(&d);
        assert_eq!(norm_wa(&spec, &d, &zero).unwrap(), 0.0);
        let scaled = norm_wa(&spec, &d, &u.scaled(-3.0)).unwrap();
        assert!((scaled - 3.0 * wa).abs() < 1e-12);
    }

    #[test]
    fn negative_radicand_names_alambda() {
        let (d, spec) = unit_ball_spec(200, 100.0);
        let u = Field::from_fn(&d, |x| 1.0 - x[0]);
        assert!(matches!(
            norm_lambda(&spec, &d, &u),
            Err(Error::HypothesisViolation { hypothesis: Hypothesis::ALambda, .. })
        ));
        assert!(energy(&spec, &d, &u).is_err());
    }

    #[test]
    fn zero_field_has_zero_energy_and_gradient() {
        let (d, spec) = unit_ball_spec(50, 0.5);
        let z = Field::zeros(&d);
        let e = energy(&spec, &d, &z).unwrap();
        assert_eq!((e.action, e.nehari), (0.0, 0.0));
        assert!(gradient(&spec, &d, &z).unwrap().is_zero());
    }

    #[test]
    fn breakdown_identities() {
        let (d, spec) = unit_ball_spec(300, 0.5);
        let u = Field::admissible_from_fn(&d, |x| (1.0 - x[0] * x[0]) * (1.0 + x[0]).cos());
        let e = energy(&spec, &d, &u).unwrap();
        assert!((e.action - (e.norm_lambda_p / 2.0 - e.potential)).abs() < 1e-14);
        assert!((e.nehari - (e.norm_lambda_p - e.nonlinear_work)).abs() < 1e-14);
        let g = gradient(&spec, &d, &u).unwrap();
        let j = pairing(&d, &g, &u).unwrap();
        assert!((j - e.nehari).abs() <= 1e-12 * e.nehari.abs().max(1.0));
    }

    #[test]
    fn norm_constants() {
        let (_, spec) = unit_ball_spec(10, -3.0);
        let c = norm_equivalence_constants(&spec, 9.0).unwrap();
        assert!((c.c2 - 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(c.c2, 3f64.powf(0.5));
        // ε clamps to 1: ‖u‖_λ^p ≥ min(1, |λ|) ‖u‖_{W_A}^p.
        assert_eq!(c.eps_star, 1.0);
        assert!((c.c1 - 1.0).abs() < 1e-15);

        let spec = spec.with_lambda(1.0);
        let c = norm_equivalence_constants(&spec, 2.0).unwrap();
        assert!((c.eps_star - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.c1 - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((c.c1 - 0.57735).abs() < 1e-5);
        assert!(norm_equivalence_constants(&spec, 1.0).is_err());
    }

    #[test]
    fn relaxed_allows_p_above_dimension() {
        let d = Domain::new(Geometry::cartesian(1.0, 9, 9)).unwrap();
        let a = WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Linear, &d).unwrap();
        let b = WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let nl: Arc<dyn Nonlinearity<f64>> = Arc::new(PowerLaw::new(4.0, b).unwrap());
        assert!(ProblemSpec::new(2.5, 0.0, a.clone(), nl.clone(), &d).is_err());
        assert!(ProblemSpec::relaxed(2.5, 0.0, a.clone(), nl.clone(), &d).is_ok());
        assert!(ProblemSpec::new(1.5, 0.0, a.clone(), nl.clone(), &d).is_ok());
        let low: Arc<dyn Nonlinearity<f64>> =
            Arc::new(PowerLaw::new(1.5, WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Nonlinear, &d).unwrap()).unwrap());
        assert!(ProblemSpec::relaxed(1.5, 0.0, a, low, &d).is_err());
    }
}
