//! Coefficient fields `A`, `B`, the nonlinearity `g` and sampling-based
//! certificates for the standing hypotheses on them.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Field};
use crate::error::{Error, Hypothesis, Result};
use crate::functional::ProblemSpec;
use crate::scalar::Real;

/// Analytic weight profiles, all radial in `|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile<T> {
    /// `a · exp(-|x|²/σ²)`.
    Gaussian { amplitude: T, width: T },
    /// `a · exp(1 - 1/(1 - |x|²/ρ²))` inside `|x| < ρ`, zero outside.
    CompactBump { amplitude: T, radius: T },
    Constant { amplitude: T },
}

impl<T: Real> Profile<T> {
    pub fn eval(&self, r: T) -> T {
        match *self {
            Profile::Gaussian { amplitude, width } => amplitude * (-(r * r) / (width * width)).exp(),
            Profile::CompactBump { amplitude, radius } => {
                let s = r / radius;
                if s >= T::one() {
                    T::zero()
                } else {
                    amplitude * (T::one() - T::one() / (T::one() - s * s)).exp()
                }
            }
            Profile::Constant { amplitude } => amplitude,
        }
    }

    fn validate(&self) -> Result<()> {
        let (a, len) = match *self {
            Profile::Gaussian { amplitude, width } => (amplitude, Some(width)),
            Profile::CompactBump { amplitude, radius } => (amplitude, Some(radius)),
            Profile::Constant { amplitude } => (amplitude, None),
        };
        if !a.is_finite() || a <= T::zero() {
            return Err(Error::config(format!("profile amplitude must be positive, got {a}")));
        }
        if let Some(l) = len {
            if !l.is_finite() || l <= T::zero() {
                return Err(Error::config(format!("profile length scale must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// `∫_{ℝ^N} f^m dx` when it has a closed form.
    pub fn power_integral(&self, m: T, dim: usize) -> Option<T> {
        match *self {
            Profile::Gaussian { amplitude, width } => {
                Some(amplitude.powf(m) * (T::PI() * width * width / m).powf(T::of_usize(dim) / T::of(2.0)))
            }
            _ => None,
        }
    }
}

/// Which coefficient a weight stands for; the positivity requirement differs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRole {
    /// The linear coefficient `A`: strictly positive at every node.
    Linear,
    /// The nonlinear coefficient `B`: non-negative.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightField<T> {
    profile: Option<Profile<T>>,
    role: WeightRole,
    values: Vec<T>,
    domain_id: u64,
}

impl<T: Real> WeightField<T> {
    pub fn sample(profile: Profile<T>, role: WeightRole, d: &Domain<T>) -> Result<Self> {
        profile.validate()?;
        let values = (0..d.len()).map(|i| profile.eval(d.radius_of(i))).collect();
        Self::build(Some(profile), role, values, d)
    }

    /// Tabulated weight in the domain's node order.
    pub fn tabulated(field: &Field<T>, role: WeightRole, d: &Domain<T>) -> Result<Self> {
        d.check(field)?;
        Self::build(None, role, field.values().to_vec(), d)
    }

    fn build(profile: Option<Profile<T>>, role: WeightRole, values: Vec<T>, d: &Domain<T>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config(format!("weight is not bounded at node {i}")));
            }
            match role {
                WeightRole::Linear if v <= T::zero() => {
                    return Err(Error::hypothesis(
                        Hypothesis::A1,
                        format!("A must be positive a.e., got {v} at node {i}"),
                    ))
                }
                WeightRole::Nonlinear if v < T::zero() => {
                    return Err(Error::config(format!("B must be non-negative, got {v} at node {i}")))
                }
                _ => {}
            }
        }
        Ok(WeightField { profile, role, values, domain_id: d.id() })
    }

    pub fn profile(&self) -> Option<&Profile<T>> {
        self.profile.as_ref()
    }

    pub fn role(&self) -> WeightRole {
        self.role
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn at(&self, i: usize) -> T {
        self.values[i]
    }

    pub fn domain_id(&self) -> u64 {
        self.domain_id
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(*v))
    }

    /// Index of the largest value (first one on ties).
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }
}

/// A Carathéodory nonlinearity `g(x, s)` evaluated at nodes.
pub trait Nonlinearity<T: Real>: Debug + Send + Sync {
    /// Growth exponent `q`.
    fn exponent(&self) -> T;
    /// The weight `B` multiplying the growth term.
    fn weight(&self) -> &WeightField<T>;
    fn g(&self, node: usize, s: T) -> T;
    fn g_s(&self, node: usize, s: T) -> T;
    /// `G(x, s) = ∫₀ˢ g(x, t) dt`.
    fn primitive(&self, node: usize, s: T) -> T;
    /// Weight `B̃` in the derivative bound `|g_s(x, s)| ≤ B̃(x) |s|^{q-2}`.
    fn derivative_bound_weight(&self, node: usize) -> T;
    /// Exact superlinearity exponent, when known in closed form.
    fn superlinearity(&self) -> Option<T> {
        None
    }
    fn describe(&self) -> String;

    /// `h(x, s) = g(x, s) s / p - G(x, s)`.
    fn h(&self, node: usize, s: T, p: T) -> T {
        self.g(node, s) * s / p - self.primitive(node, s)
    }
}

/// `g(x, s) = B(x) |s|^{q-2} s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerLaw<T> {
    q: T,
    b: WeightField<T>,
}

impl<T: Real> PowerLaw<T> {
    pub fn new(q: T, b: WeightField<T>) -> Result<Self> {
        if !q.is_finite() || q <= T::one() {
            return Err(Error::config(format!("exponent q must exceed 1, got {q}")));
        }
        Ok(PowerLaw { q, b })
    }
}

impl<T: Real> Nonlinearity<T> for PowerLaw<T> {
    fn exponent(&self) -> T {
        self.q
    }

    fn weight(&self) -> &WeightField<T> {
        &self.b
    }

    #[inline]
    fn g(&self, node: usize, s: T) -> T {
        self.b.at(node) * s.signed_pow(self.q)
    }

    #[inline]
    fn g_s(&self, node: usize, s: T) -> T {
        if s == T::zero() {
            return if self.q > T::of(2.0) { T::zero() } else { T::infinity() };
        }
        (self.q - T::one()) * self.b.at(node) * s.abs().powf(self.q - T::of(2.0))
    }

    #[inline]
    fn primitive(&self, node: usize, s: T) -> T {
        self.b.at(node) * s.abs().powf(self.q) / self.q
    }

    fn derivative_bound_weight(&self, node: usize) -> T {
        (self.q - T::one()) * self.b.at(node)
    }

    fn superlinearity(&self) -> Option<T> {
        Some(self.q)
    }

    fn describe(&self) -> String {
        format!("B(x)|s|^(q-2)s, q = {}", self.q)
    }
}

pub fn eval_g<T: Real>(nl: &dyn Nonlinearity<T>, node: usize, s: T) -> T {
    nl.g(node, s)
}

pub fn eval_gs<T: Real>(nl: &dyn Nonlinearity<T>, node: usize, s: T) -> T {
    nl.g_s(node, s)
}

pub fn eval_big_g<T: Real>(nl: &dyn Nonlinearity<T>, node: usize, s: T) -> T {
    nl.primitive(node, s)
}

pub fn eval_h<T: Real>(nl: &dyn Nonlinearity<T>, node: usize, s: T, p: T) -> T {
    nl.h(node, s, p)
}

/// `p* = Np/(N-p)`, infinite when `p ≥ N`.
pub fn critical_exponent<T: Real>(p: T, dim: usize) -> T {
    let n = T::of_usize(dim);
    if p >= n {
        T::infinity()
    } else {
        n * p / (n - p)
    }
}

/// Where and how densely the hypotheses are probed.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSpec<T> {
    pub nodes: Vec<usize>,
    pub s_grid: Vec<T>,
    pub ball_radii: Vec<T>,
}

impl<T: Real> SampleSpec<T> {
    /// Up to 64 evenly strided interior nodes, 64 log-spaced magnitudes per
    /// sign in `[1e-6, 1e3]`, and four origin-centred balls.
    pub fn default_for(d: &Domain<T>) -> Self {
        let interior: Vec<usize> = d.interior_nodes().collect();
        let stride = interior.len().div_ceil(64).max(1);
        let nodes = interior.into_iter().step_by(stride).collect();
        let r = d.geometry().truncation();
        SampleSpec {
            nodes,
            s_grid: log_grid(T::of(1e-6), T::of(1e3), 64),
            ball_radii: (1..=4).map(|k| r * T::of_usize(k) / T::of(4.0)).collect(),
        }
    }
}

/// Symmetric grid `-s_max..-s_min, s_min..s_max`, ascending.
pub fn log_grid<T: Real>(s_min: T, s_max: T, per_sign: usize) -> Vec<T> {
    let (lo, hi) = (s_min.ln(), s_max.ln());
    let denom = T::of_usize(per_sign.saturating_sub(1).max(1));
    let pos: Vec<T> =
        (0..per_sign).map(|k| (lo + (hi - lo) * T::of_usize(k) / denom).exp()).collect();
    pos.iter().rev().map(|s| -*s).chain(pos.iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub hypothesis: Hypothesis,
    pub passed: bool,
    pub value: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    /// Superlinearity exponent found for `(g2)`.
    pub theta: Option<f64>,
    /// Smallest sampled threshold `R` for which `(g2)` held.
    pub threshold: Option<f64>,
    /// `∫_{|x|>R/2} A + ∫_{|x|>R/2} B`: mass left near the truncation wall.
    pub tail_mass: f64,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| !c.passed)
    }

    pub fn get(&self, h: Hypothesis) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.hypothesis == h)
    }

    /// Converts the first failure into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.first_failure() {
            Some(c) => Err(Error::hypothesis(c.hypothesis, c.detail.clone())),
            None => Ok(self),
        }
    }
}

/// `∫_{|x| > R/2} (A + B) dx` on the truncated domain.
pub fn tail_mass<T: Real>(d: &Domain<T>, a: &WeightField<T>, b: &WeightField<T>) -> T {
    let half = d.geometry().truncation() / T::of(2.0);
    (0..d.len())
        .filter(|&i| d.radius_of(i) > half)
        .map(|i| d.weights()[i] * (a.at(i) + b.at(i)))
        .sum()
}

fn weighted_power_integral<T: Real>(d: &Domain<T>, w: &WeightField<T>, m: T) -> T {
    d.weights()
        .iter()
        .zip(w.values())
        .map(|(&q, &v)| if v == T::zero() { T::zero() } else { q * v.powf(m) })
        .sum()
}

/// Sampling certificates for `(A1)`, `(A2)`, `(g1)`, `(g2)` and `(g3)`.
pub fn check_hypotheses<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    sample: &SampleSpec<T>,
) -> Result<HypothesisReport> {
    if sample.nodes.is_empty() || sample.s_grid.is_empty() || sample.ball_radii.is_empty() {
        return Err(Error::config("hypothesis sampling needs nodes, an s-grid and balls"));
    }
    if sample.nodes.iter().any(|&i| i >= d.len()) {
        return Err(Error::config("sample node outside the domain"));
    }
    if spec.a.domain_id() != d.id() || spec.nl.weight().domain_id() != d.id() {
        return Err(Error::DomainMismatch);
    }
    let p = spec.p;
    let a = &spec.a;
    let nl = spec.nl.as_ref();
    let q = nl.exponent();
    let dim = d.dim();
    let mut checks = Vec::new();

    // (A1): positive, bounded, A^{-1/(p-1)} locally integrable on the balls.
    let inv_exp = -T::one() / (p - T::one());
    let mut worst_ball = T::zero();
    let mut a1_ok = sample.nodes.iter().all(|&i| a.at(i) > T::zero() && a.at(i).is_finite());
    for &rho in &sample.ball_radii {
        let s: T = (0..d.len())
            .filter(|&i| d.radius_of(i) <= rho)
            .map(|i| d.weights()[i] * a.at(i).powf(inv_exp))
            .sum();
        a1_ok &= s.is_finite() && s > T::zero();
        worst_ball = worst_ball.max(s);
    }
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::A1,
        passed: a1_ok && a.max().is_finite(),
        value: worst_ball.as_f64(),
        detail: format!(
            "sup A = {}, largest ball integral of A^(-1/(p-1)) = {}",
            a.max(),
            worst_ball
        ),
    });

    // (A2): A ∈ L^{N/p}.
    let np = T::of_usize(dim) / p;
    let a2 = weighted_power_integral(d, a, np);
    let closed = a.profile().and_then(|pr| pr.power_integral(np, dim));
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::A2,
        passed: a2.is_finite(),
        value: a2.as_f64(),
        detail: match closed {
            Some(c) => format!("∫A^(N/p) = {a2} on the domain, {c} on R^N"),
            None => format!("∫A^(N/p) = {a2} on the domain"),
        },
    });

    // (g1): subcritical exponent, derivative bound, B integrability, g = o(|s|^{p-1}).
    let pstar = critical_exponent(p, dim);
    let mut bound_ok = true;
    let mut worst_ratio = T::zero();
    for &i in &sample.nodes {
        let bt = nl.derivative_bound_weight(i);
        for &s in &sample.s_grid {
            let lhs = nl.g_s(i, s).abs();
            let rhs = bt * s.abs().powf(q - T::of(2.0));
            if rhs > T::zero() {
                worst_ratio = worst_ratio.max(lhs / rhs);
            }
            bound_ok &= lhs <= rhs * (T::one() + T::of(1e-12)) || lhs == T::zero();
        }
    }
    let b_exp = if pstar.is_finite() { pstar / (pstar - q) } else { T::one() };
    let b_int = weighted_power_integral(d, nl.weight(), b_exp);
    let mut origin_ok = true;
    let mut small: Vec<T> = sample.s_grid.iter().copied().filter(|s| *s > T::zero()).collect();
    small.sort_by(|x, y| x.partial_cmp(y).expect("finite grid"));
    if small.len() >= 2 {
        let (s1, s2) = (small[0], small[1]);
        for &i in &sample.nodes {
            let r1 = nl.g(i, s1).abs() / s1.powf(p - T::one());
            let r2 = nl.g(i, s2).abs() / s2.powf(p - T::one());
            if r2 > T::zero() {
                origin_ok &= (r2 / r1.max(T::min_positive_value())).ln() / (s2 / s1).ln() > T::zero();
            }
        }
    }
    let window = q > p && q < pstar;
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::G1,
        passed: window && bound_ok && b_int.is_finite() && origin_ok,
        value: worst_ratio.as_f64(),
        detail: format!(
            "q = {q} in (p, p*) = ({p}, {pstar}): {window}; max |g_s|/(B̃|s|^(q-2)) = {worst_ratio}; \
             ∫B^(p*/(p*-q)) = {b_int}; g = o(|s|^(p-1)) at 0: {origin_ok}"
        ),
    });

    // (g2): g(x,s)s ≥ θ G(x,s) > 0 for |s| ≥ R with θ > p.
    let mut mags: Vec<T> = sample.s_grid.iter().map(|s| s.abs()).collect();
    mags.sort_by(|x, y| x.partial_cmp(y).expect("finite grid"));
    mags.dedup();
    let mut found: Option<(T, T)> = None;
    for &r in &mags {
        let mut theta = T::infinity();
        let mut positive = true;
        for &i in &sample.nodes {
            for &s in sample.s_grid.iter().filter(|s| s.abs() >= r) {
                let big_g = nl.primitive(i, s);
                positive &= big_g > T::zero();
                if big_g > T::zero() {
                    theta = theta.min(nl.g(i, s) * s / big_g);
                }
            }
        }
        if positive && theta > p {
            found = Some((r, theta));
            break;
        }
    }
    let theta = nl.superlinearity().or(found.map(|f| f.1));
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::G2,
        passed: found.is_some() && theta.is_some_and(|t| t > p),
        value: theta.map_or(f64::NAN, |t| t.as_f64()),
        detail: match found {
            Some((r, th)) => format!("θ = {th} > p = {p} for |s| ≥ {r}"),
            None => format!("no sampled threshold gives θ > p = {p} with G > 0"),
        },
    });

    // (g3): s ↦ g(x,s)/|s|^{p-1} strictly increasing on ℝ∖{0}.
    let mut sorted = sample.s_grid.clone();
    sorted.retain(|s| *s != T::zero());
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite grid"));
    let mut violations = 0usize;
    for &i in &sample.nodes {
        let ratios: Vec<T> =
            sorted.iter().map(|&s| nl.g(i, s) / s.abs().powf(p - T::one())).collect();
        violations += ratios.windows(2).filter(|w| w[1] <= w[0]).count();
    }
    checks.push(HypothesisCheck {
        hypothesis: Hypothesis::G3,
        passed: violations == 0,
        value: violations as f64,
        detail: format!("{violations} non-increasing steps of g/|s|^(p-1) on the sample grid"),
    });

    Ok(HypothesisReport {
        checks,
        theta: theta.map(|t| t.as_f64()),
        threshold: found.map(|f| f.0.as_f64()),
        tail_mass: tail_mass(d, a, nl.weight()).as_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use std::sync::Arc;

    fn gaussian(d: &Domain<f64>, role: WeightRole) -> WeightField<f64> {
        WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, role, d).unwrap()
    }

    #[test]
    fn power_law_closed_forms() {
        let d = Domain::new(Geometry::radial(3, 1.0, 8)).unwrap();
        let one = WeightField::sample(Profile::Constant { amplitude: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let nl = PowerLaw::new(4.0, one).unwrap();
        assert_eq!(eval_g(&nl, 0, 2.0), 8.0);
        assert_eq!(eval_big_g(&nl, 0, 2.0), 4.0);
        assert_eq!(eval_h(&nl, 0, 2.0, 2.0), 4.0);
        assert_eq!(eval_gs(&nl, 0, 2.0), 12.0);
        assert_eq!(eval_g(&nl, 3, 0.0), 0.0);
        assert_eq!(eval_big_g(&nl, 3, 0.0), 0.0);
        assert_eq!(eval_h(&nl, 3, 0.0, 2.0), 0.0);

        let half = WeightField::sample(Profile::Constant { amplitude: 0.5 }, WeightRole::Nonlinear, &d).unwrap();
        let nl = PowerLaw::new(3.0, half).unwrap();
        assert_eq!(eval_g(&nl, 1, -2.0), -2.0);
    }

    #[test]
    fn h_positive_where_b_positive() {
        let d = Domain::new(Geometry::radial(3, 4.0, 40)).unwrap();
        let nl = PowerLaw::new(3.5, gaussian(&d, WeightRole::Nonlinear)).unwrap();
        for i in 0..d.len() {
            for s in log_grid(1e-3, 1e2, 16) {
                assert!(nl.h(i, s, 2.0) > 0.0);
                let ratio = nl.g(i, s) / s.abs();
                let expected = s.signum() * nl.weight().at(i) * s.abs().powf(1.5);
                assert!((ratio - expected).abs() <= 1e-12 * expected.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn linear_weight_must_be_positive() {
        let d = Domain::new(Geometry::radial(3, 2.0, 20)).unwrap();
        let bump = Profile::CompactBump { amplitude: 1.0, radius: 1.0 };
        assert!(matches!(
            WeightField::sample(bump, WeightRole::Linear, &d),
            Err(Error::HypothesisViolation { hypothesis: Hypothesis::A1, .. })
        ));
        assert!(WeightField::sample(bump, WeightRole::Nonlinear, &d).is_ok());
        assert!(WeightField::sample(Profile::Constant { amplitude: -1.0 }, WeightRole::Nonlinear, &d).is_err());
    }

    #[test]
    fn pure_power_passes_all_checks() {
        let d = Domain::new(Geometry::radial(3, 6.0, 200)).unwrap();
        let spec = ProblemSpec::new(
            2.0,
            0.0,
            gaussian(&d, WeightRole::Linear),
            Arc::new(PowerLaw::new(4.0, gaussian(&d, WeightRole::Nonlinear)).unwrap()),
            &d,
        )
        .unwrap();
        let report = check_hypotheses(&spec, &d, &SampleSpec::default_for(&d)).unwrap();
        assert!(report.all_passed(), "{report:?}");
        assert_eq!(report.theta, Some(4.0));
        let a2 = report.get(Hypothesis::A2).unwrap();
        assert!(a2.passed && a2.value.is_finite());
        assert!(report.tail_mass >= 0.0);
    }

    #[test]
    fn compact_b_fails_monotonicity() {
        let d = Domain::new(Geometry::radial(3, 6.0, 100)).unwrap();
        let b = WeightField::sample(
            Profile::CompactBump { amplitude: 1.0, radius: 2.0 },
            WeightRole::Nonlinear,
            &d,
        )
        .unwrap();
        let spec = ProblemSpec::new(2.0, 0.0, gaussian(&d, WeightRole::Linear), Arc::new(PowerLaw::new(4.0, b).unwrap()), &d)
            .unwrap();
        let report = check_hypotheses(&spec, &d, &SampleSpec::default_for(&d)).unwrap();
        assert!(!report.get(Hypothesis::G3).unwrap().passed);
    }

    #[test]
    fn empty_sample_rejected() {
        let d = Domain::new(Geometry::radial(3, 6.0, 50)).unwrap();
        let spec = ProblemSpec::new(
            2.0,
            0.0,
            gaussian(&d, WeightRole::Linear),
            Arc::new(PowerLaw::new(4.0, gaussian(&d, WeightRole::Nonlinear)).unwrap()),
            &d,
        )
        .unwrap();
        let empty = SampleSpec { nodes: vec![], s_grid: vec![1.0], ball_radii: vec![1.0] };
        assert!(matches!(check_hypotheses(&spec, &d, &empty), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn gaussian_power_integral_matches_quadrature() {
        let d = Domain::new(Geometry::radial(3, 8.0, 2000)).unwrap();
        let a = gaussian(&d, WeightRole::Linear);
        let exact = a.profile().unwrap().power_integral(1.5, 3).unwrap();
        let quad = weighted_power_integral(&d, &a, 1.5);
        assert!((quad - exact).abs() / exact < 1e-5);
    }
}
