//! Fiber maps, projections onto the Nehari set and the nodal Nehari set,
//! membership tests and the probe-relative lower bound `δ_λ`.

use serde::Serialize;

use crate::domain::{Domain, Field};
use crate::error::{Error, Hypothesis, Result};
use crate::functional::{
    action_partials, nehari_raw, norm_lambda_p_raw, norm_sq, second_variation, ProblemSpec,
};
use crate::scalar::Real;

/// Default relative tolerance of the scalar projection.
pub const DEFAULT_TOL_PROJ: f64 = 1e-10;

const T_MIN: f64 = 1e-12;
const T_MAX: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct NehariProjection<T> {
    /// `t_λ(u)`.
    pub scale: T,
    pub field: Field<T>,
    /// `|J_λ(t u)|`.
    pub residual: T,
    pub iterations: usize,
}

/// Cells where the field takes both signs couple `u⁺` and `u⁻` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterfaceCoupling<T> {
    /// `S_λ(u) - S_λ(u⁺) - S_λ(u⁻)`.
    pub cross_term: T,
    /// `Σ_interface w_c (|∇u|^p + |∇u⁺|^p + |∇u⁻|^p)`; bounds `p·|cross_term|`.
    pub bound: T,
    pub interface_cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalProjection<T> {
    pub scale_plus: T,
    pub scale_minus: T,
    pub field: Field<T>,
    /// `|J_λ(w⁺)| + |J_λ(w⁻)|`.
    pub residual: T,
    /// `|⟨S'_λ(w), w⁺⟩| + |⟨S'_λ(w), w⁻⟩|`: stationarity along the two-parameter fiber.
    pub fiber_residual: T,
    pub coupling: InterfaceCoupling<T>,
    pub iterations: usize,
}

/// Scalar fiber `t ↦ t^{-p} J_λ(t u)` of a fixed direction.
struct Fiber<'a, T: Real> {
    spec: &'a ProblemSpec<T>,
    /// `(node, weight, value)` for every node where `u ≠ 0`.
    support: Vec<(usize, T, T)>,
    norm_p: T,
}

impl<'a, T: Real> Fiber<'a, T> {
    fn new(spec: &'a ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> Result<Self> {
        let support: Vec<(usize, T, T)> = u
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != T::zero())
            .map(|(i, &v)| (i, d.weights()[i], v))
            .collect();
        if support.is_empty() {
            return Err(Error::ZeroField);
        }
        let norm_p = norm_lambda_p_raw(spec, d, u);
        if !(norm_p > T::zero()) {
            return Err(Error::hypothesis(
                Hypothesis::ALambda,
                format!("‖u‖_λ^p = {norm_p} is not positive at λ = {}", spec.lambda),
            ));
        }
        Ok(Fiber { spec, support, norm_p })
    }

    fn phi(&self, t: T) -> T {
        let nl = self.spec.nl.as_ref();
        let scale = t.powf(T::one() - self.spec.p);
        let work: T = self.support.iter().map(|&(i, w, v)| w * nl.g(i, t * v) * v).sum();
        self.norm_p - work * scale
    }

    fn dphi(&self, t: T) -> T {
        let nl = self.spec.nl.as_ref();
        let p = self.spec.p;
        let s: T = self
            .support
            .iter()
            .map(|&(i, w, v)| {
                let tv = t * v;
                w * (nl.g_s(i, tv) * v * v * t.powf(T::one() - p) + (T::one() - p) * nl.g(i, tv) * v * t.powf(-p))
            })
            .sum();
        -s
    }

    /// Unique zero of the strictly decreasing fiber map.
    fn root(&self) -> Result<(T, usize)> {
        let (tmin, tmax) = (T::of(T_MIN), T::of(T_MAX));
        let two = T::of(2.0);
        let mut iterations = 0usize;
        let f1 = self.phi(T::one());
        if f1 == T::zero() {
            return Ok((T::one(), 0));
        }
        let (mut lo, mut hi) = if f1 > T::zero() {
            let (mut lo, mut hi) = (T::one(), two);
            while self.phi(hi) > T::zero() {
                iterations += 1;
                lo = hi;
                hi = hi * two;
                if hi > tmax {
                    return Err(Error::ProjectionFailure(
                        "no sign change of the fiber map up to t = 1e12; ∫ g(x, tu) u vanishes, \
                         u is supported where B = 0"
                            .into(),
                    ));
                }
            }
            (lo, hi)
        } else {
            let (mut lo, mut hi) = (T::of(0.5), T::one());
            while self.phi(lo) < T::zero() {
                iterations += 1;
                hi = lo;
                lo = lo / two;
                if lo < tmin {
                    return Err(Error::ProjectionFailure(
                        "no sign change of the fiber map down to t = 1e-12".into(),
                    ));
                }
            }
            (lo, hi)
        };
        let mut t = (lo * hi).sqrt();
        let eps = T::epsilon();
        for _ in 0..200 {
            iterations += 1;
            let f = self.phi(t);
            if f == T::zero() {
                break;
            }
            if f > T::zero() {
                lo = t;
            } else {
                hi = t;
            }
            let df = self.dphi(t);
            let newton = t - f / df;
            let next = if df < T::zero() && newton > lo && newton < hi { newton } else { (lo * hi).sqrt() };
            let done = (next - t).abs() <= T::of(4.0) * eps * t || (hi - lo) <= T::of(4.0) * eps * hi;
            t = next;
            if done {
                break;
            }
        }
        Ok((t, iterations))
    }
}

/// `φ_u(t) = ‖u‖_λ^p - ∫ g(x, t u) u / t^{p-1}`.
pub fn fiber_phi<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>, t: T) -> Result<T> {
    d.check(u)?;
    if !(t > T::zero()) {
        return Err(Error::config(format!("fiber parameter must be positive, got {t}")));
    }
    Ok(Fiber::new(spec, d, u.values())?.phi(t))
}

/// Scales `u` onto the Nehari set: the unique `t > 0` with `J_λ(t u) = 0`.
pub fn project<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>, tol: T) -> Result<NehariProjection<T>> {
    d.check(u)?;
    let fiber = Fiber::new(spec, d, u.values())?;
    let (t, iterations) = fiber.root()?;
    let field = u.scaled(t);
    let residual = nehari_raw(spec, d, field.values()).abs();
    let scale_p = t.powf(spec.p) * fiber.norm_p;
    if !(residual <= tol * scale_p) {
        return Err(Error::ProjectionFailure(format!(
            "residual {residual} above tolerance {} after {iterations} iterations",
            tol * scale_p
        )));
    }
    Ok(NehariProjection { scale: t, field, residual, iterations })
}

/// Coupling of the two signed parts across interface cells.
pub fn interface_coupling<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>) -> Result<InterfaceCoupling<T>> {
    d.check(u)?;
    Ok(coupling_raw(spec, d, u.values()))
}

pub(crate) fn coupling_raw<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &[T]) -> InterfaceCoupling<T> {
    let half_p = spec.p / T::of(2.0);
    let zero = T::zero();
    let mut cross = zero;
    let mut bound = zero;
    let mut cells = 0;
    for c in d.cells() {
        let nodes = c.node_slice();
        let pos = nodes.iter().any(|&i| u[i] > zero);
        let neg = nodes.iter().any(|&i| u[i] < zero);
        if !(pos && neg) {
            continue;
        }
        cells += 1;
        let mut gp = [zero; 2];
        let mut gm = [zero; 2];
        for k in 0..c.arity {
            let v = u[c.nodes[k]];
            let (vp, vm) = (v.max(zero), v.min(zero));
            gp[0] += c.coeffs[k][0] * vp;
            gp[1] += c.coeffs[k][1] * vp;
            gm[0] += c.coeffs[k][0] * vm;
            gm[1] += c.coeffs[k][1] * vm;
        }
        let e = norm_sq(c.gradient(u)).powf(half_p);
        let ep = norm_sq(gp).powf(half_p);
        let em = norm_sq(gm).powf(half_p);
        cross += c.weight * (e - ep - em);
        bound += c.weight * (e + ep + em);
    }
    InterfaceCoupling { cross_term: cross / spec.p, bound, interface_cells: cells }
}

fn split_parts<T: Real>(u: &Field<T>) -> Result<(Field<T>, Field<T>)> {
    let plus = u.positive_part();
    let minus = u.negative_part();
    if plus.is_zero() {
        return Err(Error::NotSignChanging("u⁺ ≡ 0".into()));
    }
    if minus.is_zero() {
        return Err(Error::NotSignChanging("u⁻ ≡ 0".into()));
    }
    Ok((plus, minus))
}

/// `(⟨S'(w), w⁺⟩, ⟨S'(w), w⁻⟩)` for `w = s u⁺ + t u⁻`.
fn fiber_gradient<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, plus: &[T], minus: &[T], s: T, t: T) -> (Vec<T>, T, T) {
    let w: Vec<T> = plus.iter().zip(minus).map(|(&a, &b)| s * a + t * b).collect();
    let partials = action_partials(spec, d, &w);
    let fp: T = partials.iter().zip(plus).map(|(&g, &v)| g * v).sum();
    let fm: T = partials.iter().zip(minus).map(|(&g, &v)| g * v).sum();
    (w, fp, fm)
}

fn nodal_result<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    plus: &Field<T>,
    minus: &Field<T>,
    s: T,
    t: T,
    iterations: usize,
) -> Result<NodalProjection<T>> {
    let (w, fp, fm) = fiber_gradient(spec, d, plus.values(), minus.values(), s, t);
    let wp = plus.scaled(s);
    let wm = minus.scaled(t);
    let residual = nehari_raw(spec, d, wp.values()).abs() + nehari_raw(spec, d, wm.values()).abs();
    let coupling = coupling_raw(spec, d, &w);
    Ok(NodalProjection {
        scale_plus: s,
        scale_minus: t,
        field: Field::from_values(d, w)?,
        residual,
        fiber_residual: fp.abs() + fm.abs(),
        coupling,
        iterations,
    })
}

/// Projects each signed part onto the Nehari set with its own discrete energy.
pub fn project_nodal<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>, tol: T) -> Result<NodalProjection<T>> {
    d.check(u)?;
    let (plus, minus) = split_parts(u)?;
    let pp = project(spec, d, &plus, tol)?;
    let pm = project(spec, d, &minus, tol)?;
    nodal_result(spec, d, &plus, &minus, pp.scale, pm.scale, pp.iterations + pm.iterations)
}

/// Stationary point of `(s, t) ↦ S_λ(s u⁺ + t u⁻)`, i.e. `⟨S'_λ(w), w^±⟩ = 0`
/// including the interface cells, started from [`project_nodal`].
///
/// On the grid this is the retraction whose fixed points are true discrete
/// critical points; it coincides with [`project_nodal`] when no cell straddles
/// the zero set.
pub fn project_nodal_coupled<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    u: &Field<T>,
    tol: T,
) -> Result<NodalProjection<T>> {
    d.check(u)?;
    let (plus, minus) = split_parts(u)?;
    let pp = project(spec, d, &plus, tol)?;
    let pm = project(spec, d, &minus, tol)?;
    let (pv, mv) = (plus.values(), minus.values());
    let (mut s, mut t) = (pp.scale, pm.scale);
    let mut iterations = pp.iterations + pm.iterations;
    let eps = T::epsilon();
    let (_, mut fp, mut fm) = fiber_gradient(spec, d, pv, mv, s, t);
    for _ in 0..100 {
        iterations += 1;
        let w: Vec<T> = pv.iter().zip(mv).map(|(&a, &b)| s * a + t * b).collect();
        let hpp = second_variation(spec, d, &w, pv, pv);
        let hpm = second_variation(spec, d, &w, pv, mv);
        let hmm = second_variation(spec, d, &w, mv, mv);
        let det = hpp * hmm - hpm * hpm;
        // The derivatives are with respect to the unit directions u^±.
        if det == T::zero() || !det.is_finite() {
            break;
        }
        let mut ds = -(hmm * fp - hpm * fm) / det;
        let mut dt = -(hpp * fm - hpm * fp) / det;
        let merit = fp.abs() + fm.abs();
        let mut accepted = false;
        for _ in 0..40 {
            let (ns, nt) = (s + ds, t + dt);
            if ns > T::zero() && nt > T::zero() {
                let (_, nfp, nfm) = fiber_gradient(spec, d, pv, mv, ns, nt);
                if nfp.abs() + nfm.abs() < merit || (ds.abs() <= eps * s && dt.abs() <= eps * t) {
                    s = ns;
                    t = nt;
                    fp = nfp;
                    fm = nfm;
                    accepted = true;
                    break;
                }
            }
            ds = ds / T::of(2.0);
            dt = dt / T::of(2.0);
        }
        let tiny = ds.abs() <= T::of(4.0) * eps * s && dt.abs() <= T::of(4.0) * eps * t;
        if !accepted || tiny || fp.abs() + fm.abs() == T::zero() {
            break;
        }
    }
    let out = nodal_result(spec, d, &plus, &minus, s, t, iterations)?;
    let scale = norm_lambda_p_raw(spec, d, out.field.values()).abs();
    if !(out.fiber_residual <= tol * scale) {
        return Err(Error::ProjectionFailure(format!(
            "two-parameter fiber stationarity {} above tolerance {}",
            out.fiber_residual,
            tol * scale
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership<T> {
    pub in_nehari: bool,
    pub in_nehari_positive: bool,
    pub in_nehari_negative: bool,
    pub in_nodal: bool,
    /// `|J_λ(u)|`.
    pub nehari_defect: T,
    /// `|J_λ(u⁺)| + |J_λ(u⁻)|`.
    pub nodal_defect: T,
    /// Interface allowance added to every test: twice the coupling bound.
    pub allowance: T,
}

/// Membership of `N_λ`, `N_λ⁺`, `N_λ⁻` and `M_λ` up to the relative tolerance
/// `tol` plus the interface allowance (zero for one-signed fields).
pub fn membership<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, u: &Field<T>, tol: T) -> Result<Membership<T>> {
    d.check(u)?;
    let zero = T::zero();
    if u.is_zero() {
        return Ok(Membership {
            in_nehari: false,
            in_nehari_positive: false,
            in_nehari_negative: false,
            in_nodal: false,
            nehari_defect: zero,
            nodal_defect: zero,
            allowance: zero,
        });
    }
    let v = u.values();
    let sign_tol = tol * u.max_abs();
    let has_pos = v.iter().any(|&x| x > sign_tol);
    let has_neg = v.iter().any(|&x| x < -sign_tol);
    let allowance = T::of(2.0) * coupling_raw(spec, d, v).bound;
    let norm_p = norm_lambda_p_raw(spec, d, v);
    let j = nehari_raw(spec, d, v).abs();
    let in_nehari = norm_p > zero && j <= tol * norm_p + allowance;

    let plus = u.positive_part();
    let minus = u.negative_part();
    let part_ok = |f: &Field<T>| -> (bool, T) {
        if f.is_zero() {
            return (false, zero);
        }
        let n = norm_lambda_p_raw(spec, d, f.values());
        let jj = nehari_raw(spec, d, f.values()).abs();
        (n > zero && jj <= tol * n + allowance, jj)
    };
    let (ok_p, jp) = part_ok(&plus);
    let (ok_m, jm) = part_ok(&minus);
    Ok(Membership {
        in_nehari,
        in_nehari_positive: in_nehari && !has_neg,
        in_nehari_negative: in_nehari && !has_pos,
        in_nodal: has_pos && has_neg && ok_p && ok_m,
        nehari_defect: j,
        nodal_defect: jp + jm,
        allowance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaEstimate<T> {
    /// `Ĉ_λ = max_probes ∫ B|u|^q / ‖u‖_λ^q`.
    pub constant: T,
    /// `δ̂_λ = Ĉ_λ^{-1/(q-p)}`.
    pub delta: T,
    pub probes_used: usize,
}

/// Lower bound on `‖u‖_λ` over `N_λ`, relative to the probe family.
pub fn delta_lambda_estimate<T: Real>(spec: &ProblemSpec<T>, d: &Domain<T>, probes: &[Field<T>]) -> Result<DeltaEstimate<T>> {
    if probes.is_empty() {
        return Err(Error::config("δ_λ estimate needs at least one probe"));
    }
    let q = spec.q();
    let b = spec.nl.weight();
    let mut best = T::zero();
    let mut used = 0;
    for u in probes {
        d.check(u)?;
        let norm_p = norm_lambda_p_raw(spec, d, u.values());
        if !(norm_p > T::zero()) {
            continue;
        }
        let growth: T = d
            .weights()
            .iter()
            .zip(u.values())
            .enumerate()
            .map(|(i, (&w, &v))| if v == T::zero() { T::zero() } else { w * b.at(i) * v.abs().powf(q) })
            .sum();
        let ratio = growth / norm_p.powf(q / spec.p);
        best = best.max(ratio);
        used += 1;
    }
    if used == 0 || !(best > T::zero()) {
        return Err(Error::DegenerateField("no probe has positive norm and growth mass".into()));
    }
    Ok(DeltaEstimate { constant: best, delta: best.powf(-T::one() / (q - spec.p)), probes_used: used })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use crate::fields::{PowerLaw, Profile, WeightField, WeightRole};
    use crate::functional::{action, energy};
    use std::sync::Arc;

    fn setup(n: usize) -> (Domain<f64>, ProblemSpec<f64>) {
        let d = Domain::new(Geometry::radial(3, 6.0, n)).unwrap();
        let a = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 2.0 }, WeightRole::Linear, &d).unwrap();
        let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.5 }, WeightRole::Nonlinear, &d).unwrap();
        let spec = ProblemSpec::new(2.0, 0.0, a, Arc::new(PowerLaw::new(4.0, b).unwrap()), &d).unwrap();
        (d, spec)
    }

    fn bump(d: &Domain<f64>, c: f64) -> Field<f64> {
        Field::admissible_from_fn(d, |x| c * (-(x[0] * x[0])).exp() * (1.0 - x[0] / 6.0))
    }

    fn ab(spec: &ProblemSpec<f64>, d: &Domain<f64>, u: &Field<f64>) -> (f64, f64) {
        let a = norm_lambda_p_raw(spec, d, u.values());
        let b: f64 = (0..d.len())
            .map(|i| d.weights()[i] * spec.nl.weight().at(i) * u.values()[i].abs().powi(4))
            .sum();
        (a, b)
    }

    #[test]
    fn projection_matches_closed_form() {
        let (d, spec) = setup(300);
        let u = bump(&d, 1.0);
        let (a, b) = ab(&spec, &d, &u);
        let pr = project(&spec, &d, &u, 1e-10).unwrap();
        let exact = (a / b).sqrt();
        assert!((pr.scale - exact).abs() / exact < 1e-12);
        assert!(pr.residual <= 1e-10 * norm_lambda_p_raw(&spec, &d, pr.field.values()));
        let phi = fiber_phi(&spec, &d, &u, 1.0).unwrap();
        assert!((phi - (a - b)).abs() < 1e-10 * a);
        let tiny = fiber_phi(&spec, &d, &u, 1e-8).unwrap();
        assert!((tiny - a).abs() < 1e-12 * a);
    }

    #[test]
    fn projection_idempotent_and_equivariant() {
        let (d, spec) = setup(200);
        let u = bump(&d, 0.3);
        let p1 = project(&spec, &d, &u, 1e-10).unwrap();
        let p2 = project(&spec, &d, &p1.field, 1e-10).unwrap();
        assert!((p2.scale - 1.0).abs() < 1e-10);
        let p3 = project(&spec, &d, &u.scaled(4.0), 1e-10).unwrap();
        assert!((p3.scale - p1.scale / 4.0).abs() < 1e-12 * p1.scale);
    }

    #[test]
    fn location_rule() {
        let (d, spec) = setup(200);
        for c in [0.05, 0.5, 5.0, 50.0] {
            let u = bump(&d, c);
            let j = energy(&spec, &d, &u).unwrap().nehari;
            let t = project(&spec, &d, &u, 1e-10).unwrap().scale;
            if j < 0.0 {
                assert!(t < 1.0);
            } else {
                assert!(t > 1.0);
            }
        }
    }

    #[test]
    fn zero_and_unsupported_fields_fail() {
        let (d, spec) = setup(100);
        assert!(matches!(project(&spec, &d, &Field::zeros(&d), 1e-10), Err(Error::ZeroField)));
        let b = WeightField::sample(Profile::CompactBump { amplitude: 1.0, radius: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let spec = ProblemSpec::new(2.0, 0.0, spec.a.clone(), Arc::new(PowerLaw::new(4.0, b).unwrap()), &d).unwrap();
        let far = Field::admissible_from_fn(&d, |x| if x[0] > 3.0 && x[0] < 5.0 { 1.0 } else { 0.0 });
        assert!(matches!(project(&spec, &d, &far, 1e-10), Err(Error::ProjectionFailure(_))));
        assert!(fiber_phi(&spec, &d, &far, 0.0).is_err());
    }

    #[test]
    fn nodal_projection_of_shell_dipole() {
        let (d, spec) = setup(400);
        let u = Field::admissible_from_fn(&d, |x| {
            let r = x[0];
            (-(r * r)).exp() - 0.5 * (-((r - 2.0) * (r - 2.0))).exp()
        });
        let np = project_nodal(&spec, &d, &u, 1e-10).unwrap();
        let norm = norm_lambda_p_raw(&spec, &d, np.field.values());
        assert!(np.residual <= 2e-10 * norm);
        assert!(np.coupling.interface_cells >= 1);
        assert!(np.coupling.cross_term >= 0.0);
        assert!(spec.p * np.coupling.cross_term <= np.coupling.bound);
        // Nodal additivity up to the coupling.
        let s = action(&spec, &d, &np.field).unwrap();
        let sp = action(&spec, &d, &np.field.positive_part()).unwrap();
        let sm = action(&spec, &d, &np.field.negative_part()).unwrap();
        assert!((s - sp - sm - np.coupling.cross_term).abs() < 1e-12 * s.abs());

        let m = membership(&spec, &d, &np.field, 1e-9).unwrap();
        assert!(m.in_nehari && m.in_nodal && !m.in_nehari_positive);

        let coupled = project_nodal_coupled(&spec, &d, &u, 1e-10).unwrap();
        assert!(coupled.fiber_residual <= 1e-10 * norm);
        assert!((coupled.scale_plus - np.scale_plus).abs() < 0.05 * np.scale_plus);

        let one_signed = bump(&d, 1.0);
        assert!(matches!(project_nodal(&spec, &d, &one_signed, 1e-10), Err(Error::NotSignChanging(_))));
    }

    #[test]
    fn membership_flags() {
        let (d, spec) = setup(200);
        let w = project(&spec, &d, &bump(&d, 1.0), 1e-10).unwrap().field;
        let m = membership(&spec, &d, &w, 1e-9).unwrap();
        assert!(m.in_nehari && m.in_nehari_positive && !m.in_nehari_negative && !m.in_nodal);
        let m = membership(&spec, &d, &w.scaled(-1.0), 1e-9).unwrap();
        assert!(m.in_nehari && m.in_nehari_negative);
        let z = membership(&spec, &d, &Field::zeros(&d), 1e-9).unwrap();
        assert!(!z.in_nehari && !z.in_nehari_positive && !z.in_nehari_negative && !z.in_nodal);
    }

    #[test]
    fn delta_estimate_properties() {
        let (d, spec) = setup(200);
        let u = bump(&d, 1.0);
        let (a, b) = ab(&spec, &d, &u);
        // Rescale so that ∫B|u|^q = ‖u‖_λ^q: c^4 b = c^4 a^2.
        let u1 = u.scaled(1.0);
        let est = delta_lambda_estimate(&spec, &d, &[u1.clone()]).unwrap();
        assert!((est.constant - b / (a * a)).abs() < 1e-12 * est.constant);
        let v = Field::admissible_from_fn(&d, |x| (1.0 - x[0] / 6.0) * (x[0] * 0.7).cos());
        let bigger = delta_lambda_estimate(&spec, &d, &[u1, v]).unwrap();
        assert!(bigger.delta <= est.delta);
        let w = project(&spec, &d, &u, 1e-10).unwrap().field;
        let norm = norm_lambda_p_raw(&spec, &d, w.values()).sqrt();
        assert!(norm >= est.delta * (1.0 - 1e-12));
        assert!(delta_lambda_estimate(&spec, &d, &[]).is_err());
    }
}
