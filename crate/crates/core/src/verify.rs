//! Executable checks of the variational structure: gradient validation,
//! fiber-map properties, the Miranda boundary signs, a brute-force oracle
//! for tiny grids and the invariant suite for computed solutions.

use std::fmt::Write as _;

use argmin::core::{CostFunction, Executor, State};
use argmin::solver::neldermead::NelderMead;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{count_nodal_domains, default_zero_tol, Domain, Field};
use crate::eigen::SAFETY;
use crate::error::{Error, Hypothesis, Result};
use crate::fields::eval_h;
use crate::functional::{
    action_partials, action_raw, nehari_raw, norm_equivalence_constants, norm_lambda, norm_lambda_p_raw, norm_wa,
    ProblemSpec,
};
use crate::nehari::{coupling_raw, delta_lambda_estimate, fiber_phi, membership, project, DEFAULT_TOL_PROJ};
use crate::optimize::residual_dual_norm;
use crate::sampling::random_smooth_field;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// The property being certified.
    pub property: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckReport {
    pub title: String,
    pub checks: Vec<Check>,
}

impl CheckReport {
    pub fn new(title: impl Into<String>) -> Self {
        CheckReport { title: title.into(), checks: Vec::new() }
    }

    pub fn push(
        &mut self,
        name: impl Into<String>,
        property: impl Into<String>,
        passed: bool,
        value: f64,
        tolerance: f64,
        detail: impl Into<String>,
    ) {
        self.checks.push(Check {
            name: name.into(),
            property: property.into(),
            passed,
            value,
            tolerance,
            detail: detail.into(),
        });
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checks.extend(other.checks);
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width text table, one line per check.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(4).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.title);
        let _ = writeln!(out, "{:<6} {:<width$} {:>14} {:>12}  property", "status", "check", "value", "tolerance");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<6} {:<width$} {:>14.6e} {:>12.3e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.tolerance,
                c.property
            );
        }
        out
    }
}

/// Default relative tolerance of the finite-difference check.
pub fn fd_tolerance<T: Real>(p: T) -> T {
    if p < T::of(2.0) {
        T::of(1e-4)
    } else {
        T::of(1e-5)
    }
}

fn rel_err<T: Real>(a: T, b: T) -> T {
    let scale = a.abs().max(b.abs());
    if scale == T::zero() {
        T::zero()
    } else {
        (a - b).abs() / scale
    }
}

/// Compares `⟨S'_λ(u), v⟩` with the central difference of `S_λ` along `v`
/// for `trials` seeded random smooth pairs, plus the fiber identity
/// `d/dt S_λ(t u)|_{t=1} = J_λ(u)`.
pub fn fd_gradient_check<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    trials: usize,
    step: T,
    tol: T,
    seed: u64,
) -> Result<CheckReport> {
    if !(step > T::zero()) {
        return Err(Error::config("finite-difference step must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new(format!("gradient validation, p = {}", spec.p));
    let along = |u: &Field<T>, v: &Field<T>, h: T| -> T {
        let plus = u.add_scaled(v, h);
        let minus = u.add_scaled(v, -h);
        (action_raw(spec, d, plus.values()) - action_raw(spec, d, minus.values())) / (h + h)
    };
    for k in 0..trials {
        let u = random_smooth_field(d, &mut rng, None);
        let v = random_smooth_field(d, &mut rng, None);
        let partials = action_partials(spec, d, u.values());
        let analytic: T = partials.iter().zip(v.values()).map(|(&g, &x)| g * x).sum();
        let fd = along(&u, &v, step);
        let err = rel_err(analytic, fd);
        report.push(
            format!("fd trial {k}"),
            "S_λ is C¹ with the assembled derivative",
            err < tol,
            err.as_f64(),
            tol.as_f64(),
            format!("analytic {:.12e}, central difference {:.12e}", analytic.as_f64(), fd.as_f64()),
        );
    }
    let u = random_smooth_field(d, &mut rng, None);
    let j = nehari_raw(spec, d, u.values());
    let fd = along(&u, &u, step);
    let err = rel_err(j, fd);
    report.push(
        "fiber derivative",
        "d/dt S_λ(tu) at t = 1 equals J_λ(u)",
        err < tol,
        err.as_f64(),
        tol.as_f64(),
        format!("J_λ(u) {:.12e}, central difference {:.12e}", j.as_f64(), fd.as_f64()),
    );
    Ok(report)
}

/// `count` geometrically spaced points in `[lo, hi]`.
pub fn geometric_grid<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    if count == 1 {
        return vec![(lo * hi).sqrt()];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * T::of_usize(i) / T::of_usize(count - 1)).exp()).collect()
}

/// Fiber-map properties along `t ↦ t u` on the given grid: strict decrease
/// of `φ_u`, maximality of `S_λ` at `t*`, monotone increase before and
/// decrease after `t*`, and the location rule against the sign of `J_λ(u)`.
pub fn fiber_property_check<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    u: &Field<T>,
    t_grid: &[T],
) -> Result<CheckReport> {
    let proj = project(spec, d, u, T::of(DEFAULT_TOL_PROJ))?;
    let t_star = proj.scale;
    let s_star = action_raw(spec, d, proj.field.values());
    let slack = T::of(64.0) * T::epsilon() * s_star.abs();
    let mut grid = t_grid.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    grid.dedup();
    let mut report = CheckReport::new(format!("fiber map, t* = {t_star}"));

    let phis = grid.iter().map(|&t| fiber_phi(spec, d, u, t)).collect::<Result<Vec<T>>>()?;
    let worst_rise = phis.windows(2).map(|w| w[1] - w[0]).fold(T::neg_infinity(), T::max);
    report.push(
        "phi decreasing",
        "φ_u strictly decreasing",
        grid.len() < 2 || worst_rise < T::zero(),
        worst_rise.as_f64(),
        0.0,
        format!("{} grid points", grid.len()),
    );

    let values: Vec<T> = grid.iter().map(|&t| action_raw(spec, d, u.scaled(t).values())).collect();
    let excess = values.iter().map(|&s| s - s_star).fold(T::neg_infinity(), T::max);
    report.push(
        "fiber maximum",
        "S_λ(t* u) = max_t S_λ(t u)",
        excess <= slack,
        excess.as_f64(),
        slack.as_f64(),
        format!("S_λ(t* u) = {s_star}"),
    );

    let mut worst = T::neg_infinity();
    for i in 1..grid.len() {
        let (t0, t1) = (grid[i - 1], grid[i]);
        if t1 <= t_star {
            worst = worst.max(values[i - 1] - values[i]);
        } else if t0 >= t_star {
            worst = worst.max(values[i] - values[i - 1]);
        }
    }
    report.push(
        "fiber monotonicity",
        "S_λ(t u) increases before t* and decreases after",
        worst <= slack,
        worst.as_f64(),
        slack.as_f64(),
        "largest violation of the expected ordering between neighbouring grid points",
    );

    let j = nehari_raw(spec, d, u.values());
    let scale = norm_lambda_p_raw(spec, d, u.values()).abs();
    let location_ok = if j.abs() <= T::of(DEFAULT_TOL_PROJ) * scale {
        (t_star - T::one()).abs() <= T::of(1e-6)
    } else if j > T::zero() {
        t_star > T::one()
    } else {
        t_star < T::one()
    };
    report.push(
        "location rule",
        "t* > 1 iff J_λ(u) > 0",
        location_ok,
        t_star.as_f64(),
        1.0,
        format!("J_λ(u) = {j}"),
    );
    Ok(report)
}

/// Boundary signs of `F(s, t) = (J_λ(s u⁻), J_λ(t u⁺))` on `[1-ε, 1+ε]²`
/// with `samples` points per edge, plus the residual of `F(1, 1)`.
pub fn miranda_check<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    u3: &Field<T>,
    eps: T,
    samples: usize,
) -> Result<CheckReport> {
    d.check(u3)?;
    if !(eps > T::zero() && eps < T::one()) {
        return Err(Error::config(format!("ε must lie in (0, 1), got {eps}")));
    }
    if samples == 0 {
        return Err(Error::config("Miranda check needs at least one sample per edge"));
    }
    let plus = u3.positive_part();
    let minus = u3.negative_part();
    if plus.is_zero() || minus.is_zero() {
        return Err(Error::NotSignChanging("Miranda check needs u⁺ ≢ 0 and u⁻ ≢ 0".into()));
    }
    let f1 = |s: T| nehari_raw(spec, d, minus.scaled(s).values());
    let f2 = |t: T| nehari_raw(spec, d, plus.scaled(t).values());
    let lo = T::one() - eps;
    let hi = T::one() + eps;
    let along: Vec<T> = (0..samples)
        .map(|k| if samples == 1 { T::one() } else { lo + (hi - lo) * T::of_usize(k) / T::of_usize(samples - 1) })
        .collect();
    let mut report = CheckReport::new(format!("Miranda boundary signs, ε = {eps}"));
    // F₁ depends on s only and F₂ on t only; every edge point is still evaluated.
    let edges: [(&str, &str, Box<dyn Fn(T) -> T + '_>); 4] = [
        ("edge s = 1-ε", "F₁ > 0", Box::new(|_t| f1(lo))),
        ("edge s = 1+ε", "F₁ < 0", Box::new(|_t| -f1(hi))),
        ("edge t = 1-ε", "F₂ > 0", Box::new(|_s| f2(lo))),
        ("edge t = 1+ε", "F₂ < 0", Box::new(|_s| -f2(hi))),
    ];
    for (name, property, f) in edges.iter() {
        let worst = along.iter().map(|&x| f(x)).fold(T::infinity(), T::min);
        report.push(
            *name,
            format!("{property}: the field points into the square"),
            worst > T::zero(),
            worst.as_f64(),
            0.0,
            format!("minimum signed value over {samples} samples"),
        );
    }
    let coupling = coupling_raw(spec, d, u3.values());
    let (c1, c2) = (f1(T::one()), f2(T::one()));
    let scale = norm_lambda_p_raw(spec, d, plus.values()).abs() + norm_lambda_p_raw(spec, d, minus.values()).abs();
    let tol = T::of(1e-8) * scale + T::of(2.0) * coupling.bound;
    let centre = c1.abs() + c2.abs();
    report.push(
        "centre",
        "F(1, 1) = 0 up to the interface coupling",
        centre <= tol,
        centre.as_f64(),
        tol.as_f64(),
        format!("F(1,1) = ({:.6e}, {:.6e})", c1.as_f64(), c2.as_f64()),
    );
    Ok(report)
}

/// Direction lattice of the brute-force oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct LatticeSpec {
    /// Denominator of the composition lattice for one-signed directions.
    pub constant_resolution: usize,
    /// Denominator per signed part for sign-changing directions.
    pub nodal_resolution: usize,
    /// Number of best lattice points refined by Nelder-Mead.
    pub polish: usize,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec { constant_resolution: 20, nodal_resolution: 10, polish: 12 }
    }
}

/// Fewer directions than this in any set triggers a warning.
pub const MIN_DIRECTIONS: usize = 1000;
/// Largest number of interior nodes the oracle accepts.
pub const MAX_ORACLE_NODES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleLevel<T> {
    /// Minimum over the lattice.
    pub lattice_min: T,
    /// Minimum after polishing.
    pub minimum: T,
    /// `lattice_min - minimum`.
    pub lattice_bound: T,
    pub directions: usize,
    /// Interior nodal values of the best point found, scaled onto the set.
    pub minimizer: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub interior_nodes: usize,
    pub positive: OracleLevel<T>,
    pub negative: OracleLevel<T>,
    /// `None` with a single interior node.
    pub nodal: Option<OracleLevel<T>>,
    pub warnings: Vec<String>,
}

/// All ways to write `total` as an ordered sum of `parts` terms `≥ min_part`.
fn compositions(total: usize, parts: usize, min_part: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, min_part: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            if left >= min_part {
                cur.push(left);
                out.push(cur.clone());
                cur.pop();
            }
            return;
        }
        let mut x = min_part;
        while x + min_part * (parts - 1) <= left {
            cur.push(x);
            rec(left - x, parts - 1, min_part, cur, out);
            cur.pop();
            x += 1;
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, min_part, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}

/// Zero of a function that is positive for small and negative for large
/// arguments, searched in `x = ln t` by bracketing and Illinois steps.
fn log_root<T: Real>(f: impl Fn(T) -> T) -> Option<T> {
    let ln2 = T::LN_2();
    let (mut a, mut b) = (T::zero(), T::zero());
    let f0 = f(T::one());
    if !f0.is_finite() {
        return None;
    }
    let (mut fa, mut fb);
    if f0 > T::zero() {
        fa = f0;
        b = ln2;
        fb = f(b.exp());
        let mut k = 0;
        while fb > T::zero() {
            a = b;
            fa = fb;
            b = b + ln2;
            fb = f(b.exp());
            k += 1;
            if k > 200 || !fb.is_finite() {
                return None;
            }
        }
    } else if f0 < T::zero() {
        fb = f0;
        a = -ln2;
        fa = f(a.exp());
        let mut k = 0;
        while fa < T::zero() {
            b = a;
            fb = fa;
            a = a - ln2;
            fa = f(a.exp());
            k += 1;
            if k > 200 || !fa.is_finite() {
                return None;
            }
        }
    } else {
        return Some(T::one());
    }
    let mut side = 0i8;
    for _ in 0..200 {
        if (b - a).abs() <= T::of(4.0) * T::epsilon() * (T::one() + a.abs().max(b.abs())) {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        if !(x > a.min(b) && x < a.max(b)) {
            x = (a + b) / T::of(2.0);
        }
        let fx = f(x.exp());
        if fx == T::zero() {
            return Some(x.exp());
        }
        if (fx > T::zero()) == (fa > T::zero()) {
            a = x;
            fa = fx;
            if side == 1 {
                fb = fb / T::of(2.0);
            }
            side = 1;
        } else {
            b = x;
            fb = fx;
            if side == -1 {
                fa = fa / T::of(2.0);
            }
            side = -1;
        }
    }
    Some(((a + b) / T::of(2.0)).exp())
}

struct OracleCtx<'a, T: Real> {
    spec: &'a ProblemSpec<T>,
    d: &'a Domain<T>,
    interior: Vec<usize>,
}

impl<'a, T: Real> OracleCtx<'a, T> {
    fn embed(&self, x: &[T]) -> Vec<T> {
        let mut u = vec![T::zero(); self.d.len()];
        for (&i, &v) in self.interior.iter().zip(x) {
            u[i] = v;
        }
        u
    }

    /// `max_t S_λ(t u)` and the maximizing `t`.
    fn fiber_level(&self, u: &[T]) -> Option<(T, T)> {
        if u.iter().all(|&v| v == T::zero()) {
            return None;
        }
        let t = log_root(|t| {
            let w: Vec<T> = u.iter().map(|&v| t * v).collect();
            nehari_raw(self.spec, self.d, &w)
        })?;
        let w: Vec<T> = u.iter().map(|&v| t * v).collect();
        Some((action_raw(self.spec, self.d, &w), t))
    }

    /// `max_{s,t} S_λ(s u⁺ + t u⁻)`: Newton on the log-scaled fiber gradient
    /// with a finite-difference Jacobian, falling back to coordinate ascent.
    fn nodal_level(&self, plus: &[T], minus: &[T]) -> Option<(T, Vec<T>)> {
        let (_, s0) = self.fiber_level(plus)?;
        let (_, t0) = self.fiber_level(minus)?;
        let combine = |x: T, y: T| -> Vec<T> {
            let (s, t) = (x.exp(), y.exp());
            plus.iter().zip(minus).map(|(&a, &b)| s * a + t * b).collect()
        };
        // Derivatives of S_λ(e^x u⁺ + e^y u⁻) in x and y.
        let grad = |x: T, y: T| -> (T, T) {
            let w = combine(x, y);
            let g = action_partials(self.spec, self.d, &w);
            let dp: T = g.iter().zip(plus).map(|(&a, &b)| a * b).sum();
            let dm: T = g.iter().zip(minus).map(|(&a, &b)| a * b).sum();
            (x.exp() * dp, y.exp() * dm)
        };
        let (mut x, mut y) = (s0.ln(), t0.ln());
        let (mut gx, mut gy) = grad(x, y);
        let h = T::of(1e-6);
        let tiny = T::of(1e-13);
        let scale = action_raw(self.spec, self.d, &combine(x, y)).abs() + T::one();
        for _ in 0..200 {
            let (ax, ay) = grad(x + h, y);
            let (bx, by) = grad(x - h, y);
            let (cx, cy) = grad(x, y + h);
            let (dx, dy) = grad(x, y - h);
            let two_h = h + h;
            let (hxx, hyx) = ((ax - bx) / two_h, (ay - by) / two_h);
            let (hxy, hyy) = ((cx - dx) / two_h, (cy - dy) / two_h);
            let hoff = (hxy + hyx) / T::of(2.0);
            let det = hxx * hyy - hoff * hoff;
            let merit = gx.abs() + gy.abs();
            let mut moved = false;
            if hxx < T::zero() && det > T::zero() {
                let mut sx = -(hyy * gx - hoff * gy) / det;
                let mut sy = -(hxx * gy - hoff * gx) / det;
                for _ in 0..30 {
                    let (nx, ny) = grad(x + sx, y + sy);
                    if nx.abs() + ny.abs() < merit {
                        x = x + sx;
                        y = y + sy;
                        gx = nx;
                        gy = ny;
                        moved = true;
                        break;
                    }
                    sx = sx / T::of(2.0);
                    sy = sy / T::of(2.0);
                }
            }
            if !moved {
                let s = log_root(|s: T| grad(s.ln(), y).0)?;
                let t = log_root(|t: T| grad(s.ln(), t.ln()).1)?;
                let (nx, ny) = (s.ln(), t.ln());
                let step = (nx - x).abs() + (ny - y).abs();
                x = nx;
                y = ny;
                let g = grad(x, y);
                gx = g.0;
                gy = g.1;
                if step < tiny {
                    break;
                }
            }
            if gx.abs() + gy.abs() <= T::of(1e-12) * scale {
                break;
            }
        }
        let w = combine(x, y);
        Some((action_raw(self.spec, self.d, &w), w))
    }
}

struct PolishCost<'c, 'a, T: Real> {
    ctx: &'c OracleCtx<'a, T>,
    /// `+1`, `-1` or `0` per interior node.
    pattern: Vec<i8>,
}

impl<'c, 'a, T: Real> PolishCost<'c, 'a, T> {
    fn level(&self, x: &[f64]) -> Option<(T, Vec<T>)> {
        let mut plus = vec![T::zero(); self.pattern.len()];
        let mut minus = vec![T::zero(); self.pattern.len()];
        for ((&sgn, &v), (p, m)) in self.pattern.iter().zip(x).zip(plus.iter_mut().zip(minus.iter_mut())) {
            match sgn {
                1 => *p = T::of(v.abs()),
                -1 => *m = -T::of(v.abs()),
                _ => {}
            }
        }
        let has_plus = plus.iter().any(|&v| v != T::zero());
        let has_minus = minus.iter().any(|&v| v != T::zero());
        let (pu, mu) = (self.ctx.embed(&plus), self.ctx.embed(&minus));
        match (has_plus, has_minus) {
            (true, true) => self.ctx.nodal_level(&pu, &mu),
            (true, false) => self.ctx.fiber_level(&pu).map(|(s, t)| (s, pu.iter().map(|&v| t * v).collect())),
            (false, true) => self.ctx.fiber_level(&mu).map(|(s, t)| (s, mu.iter().map(|&v| t * v).collect())),
            _ => None,
        }
    }

    fn expects_nodal(&self) -> bool {
        self.pattern.contains(&1) && self.pattern.contains(&-1)
    }
}

impl<'c, 'a, T: Real> CostFunction for PolishCost<'c, 'a, T> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let nodal = self.expects_nodal();
        let ok = |pos: bool, neg: bool| if nodal { pos && neg } else { pos || neg };
        let pos = self.pattern.iter().zip(x).any(|(&s, &v)| s == 1 && v != 0.0);
        let neg = self.pattern.iter().zip(x).any(|(&s, &v)| s == -1 && v != 0.0);
        if !ok(pos, neg) {
            return Ok(f64::INFINITY);
        }
        Ok(self.level(x).map_or(f64::INFINITY, |(s, _)| s.as_f64()))
    }
}

struct Candidate<T> {
    level: T,
    pattern: Vec<i8>,
    coords: Vec<f64>,
}

/// Refines the best lattice point of each of the `count` best sign patterns.
fn polish<T: Real>(ctx: &OracleCtx<'_, T>, mut cands: Vec<Candidate<T>>, count: usize, directions: usize) -> Option<OracleLevel<T>> {
    cands.sort_by(|a, b| a.level.partial_cmp(&b.level).unwrap_or(std::cmp::Ordering::Equal));
    let first = cands.first()?;
    let lattice_min = first.level;
    let mut best_level = lattice_min;
    let mut best = (first.pattern.clone(), first.coords.clone());
    let mut seen: Vec<&Vec<i8>> = Vec::new();
    let starts: Vec<&Candidate<T>> = cands
        .iter()
        .filter(|c| {
            if seen.contains(&&c.pattern) {
                false
            } else {
                seen.push(&c.pattern);
                true
            }
        })
        .take(count)
        .collect();
    for c in starts {
        let cost = PolishCost { ctx, pattern: c.pattern.clone() };
        let n = c.coords.len();
        let active: Vec<usize> = (0..n).filter(|&i| c.pattern[i] != 0).collect();
        let x0: Vec<f64> = active.iter().map(|&i| c.coords[i]).collect();
        let size = x0.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3);
        let mut simplex = vec![x0.clone()];
        for k in 0..x0.len() {
            let mut v = x0.clone();
            v[k] += 0.05 * size;
            simplex.push(v);
        }
        let sub = SubspaceCost { inner: &cost, active: &active, n };
        let tol = 1e-14 * (c.level.as_f64().abs() + 1.0);
        let Ok(solver) = NelderMead::new(simplex).with_sd_tolerance(tol) else { continue };
        let Ok(res) = Executor::new(sub, solver).configure(|s| s.max_iters(3000)).run() else { continue };
        if let Some(p) = res.state().get_best_param() {
            let full = expand(p, &active, n);
            if let Some((level, _)) = cost.level(&full) {
                if level < best_level {
                    best_level = level;
                    best = (c.pattern.clone(), full);
                }
            }
        }
    }
    let cost = PolishCost { ctx, pattern: best.0.clone() };
    let minimizer = cost
        .level(&best.1)
        .map(|(_, w)| ctx.interior.iter().map(|&i| w[i]).collect())
        .unwrap_or_default();
    Some(OracleLevel { lattice_min, minimum: best_level, lattice_bound: lattice_min - best_level, directions, minimizer })
}

fn expand(x: &[f64], active: &[usize], n: usize) -> Vec<f64> {
    let mut full = vec![0.0; n];
    for (&i, &v) in active.iter().zip(x) {
        full[i] = v;
    }
    full
}

struct SubspaceCost<'x, 'c, 'a, T: Real> {
    inner: &'x PolishCost<'c, 'a, T>,
    active: &'x [usize],
    n: usize,
}

impl<'x, 'c, 'a, T: Real> CostFunction for SubspaceCost<'x, 'c, 'a, T> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.inner.cost(&expand(x, self.active, self.n))
    }
}

/// Minima of `S_λ` over `N_λ⁺`, `N_λ⁻` and the nodal set on a domain with at
/// most six interior nodes.
///
/// One-signed directions are the points `k/K` of the composition lattice of
/// the simplex; sign-changing directions enumerate every sign pattern with a
/// composition lattice on each signed part. Each direction is scaled onto the
/// set by its own fiber maximization (two-parameter for sign-changing ones),
/// and the best lattice points are refined by Nelder-Mead.
pub fn brute_force_oracle<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    lattice: &LatticeSpec,
) -> Result<OracleResult<T>> {
    let interior: Vec<usize> = d.interior_nodes().collect();
    let m = interior.len();
    if m == 0 || m > MAX_ORACLE_NODES {
        return Err(Error::config(format!(
            "the oracle needs between 1 and {MAX_ORACLE_NODES} interior nodes, the domain has {m}"
        )));
    }
    if lattice.constant_resolution == 0 || lattice.nodal_resolution == 0 {
        return Err(Error::config("lattice resolutions must be positive"));
    }
    let ctx = OracleCtx { spec, d, interior };
    let mut warnings = Vec::new();
    let k = lattice.constant_resolution;

    let one_signed = |sign: i8| -> Result<OracleLevel<T>> {
        let mut cands = Vec::new();
        let comps = compositions(k, m, 0);
        for c in &comps {
            let coords: Vec<f64> = c.iter().map(|&x| f64::from(sign) * x as f64 / k as f64).collect();
            let x: Vec<T> = coords.iter().map(|&v| T::of(v)).collect();
            if let Some((level, _)) = ctx.fiber_level(&ctx.embed(&x)) {
                let pattern = vec![sign; m];
                cands.push(Candidate { level, pattern, coords: coords.iter().map(|v| v.abs()).collect() });
            }
        }
        polish(&ctx, cands, lattice.polish, comps.len())
            .ok_or_else(|| Error::ProjectionFailure("no lattice direction could be projected".into()))
    };
    let positive = one_signed(1)?;
    let negative = one_signed(-1)?;

    let nodal = if m >= 2 {
        let kn = lattice.nodal_resolution;
        let mut cands = Vec::new();
        let mut directions = 0usize;
        let patterns = 3usize.pow(m as u32);
        for code in 0..patterns {
            let mut pattern = Vec::with_capacity(m);
            let mut c = code;
            for _ in 0..m {
                pattern.push(match c % 3 {
                    0 => 0i8,
                    1 => 1,
                    _ => -1,
                });
                c /= 3;
            }
            let pos: Vec<usize> = (0..m).filter(|&i| pattern[i] == 1).collect();
            let neg: Vec<usize> = (0..m).filter(|&i| pattern[i] == -1).collect();
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let cp = compositions(kn, pos.len(), 1);
            let cm = compositions(kn, neg.len(), 1);
            for a in &cp {
                for b in &cm {
                    directions += 1;
                    let mut coords = vec![0.0f64; m];
                    for (&i, &x) in pos.iter().zip(a) {
                        coords[i] = x as f64 / kn as f64;
                    }
                    for (&i, &x) in neg.iter().zip(b) {
                        coords[i] = x as f64 / kn as f64;
                    }
                    let cost = PolishCost { ctx: &ctx, pattern: pattern.clone() };
                    if let Some((level, _)) = cost.level(&coords) {
                        cands.push(Candidate { level, pattern: pattern.clone(), coords });
                    }
                }
            }
        }
        let level = polish(&ctx, cands, lattice.polish, directions)
            .ok_or_else(|| Error::ProjectionFailure("no sign-changing lattice direction could be projected".into()))?;
        Some(level)
    } else {
        None
    };

    for (name, n) in [
        ("N⁺", Some(positive.directions)),
        ("N⁻", Some(negative.directions)),
        ("nodal set", nodal.as_ref().map(|l| l.directions)),
    ] {
        if let Some(n) = n {
            if n < MIN_DIRECTIONS {
                warnings.push(format!("lattice too coarse for {name}: {n} directions (< {MIN_DIRECTIONS})"));
            }
        }
    }
    Ok(OracleResult { interior_nodes: m, positive, negative, nodal, warnings })
}

/// Fields checked by [`invariant_suite`]; any of them may be omitted.
#[derive(Debug, Clone, Copy)]
pub struct SuiteInputs<'a, T> {
    pub positive: Option<&'a Field<T>>,
    pub negative: Option<&'a Field<T>>,
    pub nodal: Option<&'a Field<T>>,
    pub lambda_a_estimate: T,
    /// Probe family for `δ̂_λ` and the sampled level bounds.
    pub probes: &'a [Field<T>],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteTolerances<T> {
    pub residual: T,
    pub membership: T,
    /// Relative slack of the energy ordering.
    pub ordering: T,
}

impl<T: Real> Default for SuiteTolerances<T> {
    fn default() -> Self {
        SuiteTolerances { residual: T::of(1e-8), membership: T::of(1e-8), ordering: T::of(1e-6) }
    }
}

/// One line per invariant of computed solutions, with measured margins.
///
/// Refuses to run when `λ > 0.99 λ̂_A`.
pub fn invariant_suite<T: Real>(
    spec: &ProblemSpec<T>,
    d: &Domain<T>,
    inputs: &SuiteInputs<'_, T>,
    tol: &SuiteTolerances<T>,
) -> Result<CheckReport> {
    let bound = T::of(SAFETY) * inputs.lambda_a_estimate;
    if !(spec.lambda <= bound) {
        return Err(Error::hypothesis(
            Hypothesis::ALambda,
            format!("λ = {} exceeds 0.99 λ̂_A = {bound}", spec.lambda),
        ));
    }
    let mut report = CheckReport::new("invariants");
    let delta = delta_lambda_estimate(spec, d, inputs.probes)?;
    let consts = norm_equivalence_constants(spec, bound)?;
    let mut energies = [None, None, None];
    let named = [("u1", inputs.positive), ("u2", inputs.negative), ("u3", inputs.nodal)];
    for (slot, (label, field)) in named.iter().enumerate() {
        let Some(u) = field else { continue };
        d.check(u)?;
        let s = action_raw(spec, d, u.values());
        energies[slot] = Some(s);

        let r = residual_dual_norm(spec, d, u)?;
        report.push(format!("{label} residual"), "S'_λ(u) = 0", r <= tol.residual, r.as_f64(), tol.residual.as_f64(), "");

        let m = membership(spec, d, u, tol.membership)?;
        let (ok, set) = match slot {
            0 => (m.in_nehari_positive, "N_λ⁺"),
            1 => (m.in_nehari_negative, "N_λ⁻"),
            _ => (m.in_nodal, "the nodal set"),
        };
        report.push(
            format!("{label} membership"),
            format!("u lies in {set}"),
            ok,
            if slot == 2 { m.nodal_defect.as_f64() } else { m.nehari_defect.as_f64() },
            m.allowance.as_f64(),
            format!("|J| defect against tolerance {} plus interface allowance", tol.membership),
        );

        report.push(format!("{label} positive energy"), "S_λ(u) > 0", s > T::zero(), s.as_f64(), 0.0, "");

        let h_int: T = (0..d.len())
            .map(|i| d.weights()[i] * eval_h(spec.nl.as_ref(), i, u.values()[i], spec.p))
            .sum();
        report.push(format!("{label} h integral"), "∫ h(x, u) > 0", h_int > T::zero(), h_int.as_f64(), 0.0, "");

        // A probe that is itself on N_λ up to a relative defect η gives
        // δ̂_λ = (1 + η)^{-1/(q-p)} ‖u‖_λ, so the bound is only as sharp as membership.
        let norm = norm_lambda(spec, d, u).unwrap_or(T::zero());
        let floor = delta.delta * (T::one() - tol.membership).powf(T::one() / (spec.q() - spec.p));
        report.push(
            format!("{label} norm bound"),
            "‖u‖_λ ≥ δ̂_λ",
            norm >= floor,
            norm.as_f64(),
            floor.as_f64(),
            format!("δ̂_λ = {} from {} probes", delta.delta, delta.probes_used),
        );

        let wa = norm_wa(spec, d, u)?;
        let slack = T::of(1e-12) * wa;
        let ok = consts.c1 * wa <= norm + slack && norm <= consts.c2 * wa + slack;
        report.push(
            format!("{label} norm sandwich"),
            "c₁‖u‖_WA ≤ ‖u‖_λ ≤ c₂‖u‖_WA",
            ok,
            norm.as_f64(),
            wa.as_f64(),
            format!("c₁ = {}, c₂ = {}", consts.c1, consts.c2),
        );

        let zt = default_zero_tol(u);
        match slot {
            0 | 1 => {
                let sgn = if slot == 0 { T::one() } else { -T::one() };
                let worst = u.values().iter().map(|&v| sgn * v).fold(T::infinity(), T::min);
                let any = u.values().iter().any(|&v| sgn * v > zt);
                report.push(
                    format!("{label} sign"),
                    if slot == 0 { "u₁ > 0" } else { "u₂ < 0" },
                    any && worst >= -zt,
                    worst.as_f64(),
                    zt.as_f64(),
                    "",
                );
            }
            _ => {
                let count = count_nodal_domains(d, u, zt)?;
                report.push(
                    format!("{label} nodal domains"),
                    "exactly two nodal domains",
                    count == 2,
                    count as f64,
                    2.0,
                    "",
                );
            }
        }
    }

    let mut probe_min = T::infinity();
    let mut probe_min_one_signed = T::infinity();
    for p in inputs.probes {
        if let Ok(pr) = project(spec, d, p, T::of(DEFAULT_TOL_PROJ)) {
            probe_min = probe_min.min(action_raw(spec, d, pr.field.values()));
        }
        if let Ok(pr) = project(spec, d, &p.map(|v| v.abs()), T::of(DEFAULT_TOL_PROJ)) {
            probe_min_one_signed = probe_min_one_signed.min(action_raw(spec, d, pr.field.values()));
        }
    }
    if probe_min.is_finite() {
        report.push(
            "probe level",
            "inf over N_λ of S_λ ≥ 0 on projected probes",
            probe_min >= T::zero(),
            probe_min.as_f64(),
            0.0,
            "",
        );
    }
    if let (Some(s1), true) = (energies[0], probe_min_one_signed.is_finite()) {
        let slack = tol.ordering * s1.abs();
        report.push(
            "u1 below probes",
            "S_λ(u₁) ≤ S_λ on projected one-signed probes",
            s1 <= probe_min_one_signed + slack,
            (s1 - probe_min_one_signed).as_f64(),
            slack.as_f64(),
            "",
        );
    }
    if let [Some(s1), Some(s2), Some(s3)] = energies {
        let slack = tol.ordering * s3.abs();
        report.push(
            "energy ordering",
            "S_λ(u₃) ≥ S_λ(u₁) + S_λ(u₂)",
            s3 >= s1 + s2 - slack,
            (s3 - s1 - s2).as_f64(),
            slack.as_f64(),
            "",
        );
    }
    if let (Some(s1), Some(s3)) = (energies[0], energies[2]) {
        report.push(
            "nodal level",
            "m_λ ≥ inf over N_λ of S_λ",
            s3 >= s1,
            (s3 - s1).as_f64(),
            0.0,
            "",
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Geometry;
    use crate::fields::{PowerLaw, Profile, WeightField, WeightRole};
    use std::sync::Arc;

    fn spec_on(d: &Domain<f64>, p: f64, q: f64, lambda: f64) -> ProblemSpec<f64> {
        let a = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.5 }, WeightRole::Linear, d).unwrap();
        let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0, width: 1.0 }, WeightRole::Nonlinear, d).unwrap();
        ProblemSpec::relaxed(p, lambda, a, Arc::new(PowerLaw::new(q, b).unwrap()), d).unwrap()
    }

    #[test]
    fn compositions_count() {
        assert_eq!(compositions(20, 5, 0).len(), 10626);
        assert_eq!(compositions(10, 3, 1).len(), 36);
        assert_eq!(compositions(3, 1, 0), vec![vec![3]]);
        assert!(compositions(2, 3, 1).is_empty());
    }

    #[test]
    fn log_root_finds_power() {
        let t = log_root(|t: f64| 4.0 - t * t).unwrap();
        assert!((t - 2.0).abs() < 1e-14);
        assert!(log_root(|_t: f64| 1.0).is_none());
    }

    #[test]
    fn fd_check_p2() {
        let d = Domain::new(Geometry::radial(3, 4.0, 120)).unwrap();
        let spec = spec_on(&d, 2.0, 4.0, -1.0);
        let rep = fd_gradient_check(&spec, &d, 5, 1e-5, 1e-7, 7).unwrap();
        assert!(rep.all_passed(), "{}", rep.table());
        assert_eq!(rep.checks.len(), 6);
    }

    #[test]
    fn fiber_closed_form() {
        // Scale u and B so that a = ‖u‖_λ^p = 4 and b = ∫ B|u|^q = 1; then t* = 2 and the maximum is 4.
        let d = Domain::new(Geometry::radial(3, 4.0, 120)).unwrap();
        let spec0 = spec_on(&d, 2.0, 4.0, 0.0);
        let u0 = Field::admissible_from_fn(&d, |x| (-(x[0] * x[0])).exp());
        let a0 = norm_lambda_p_raw(&spec0, &d, u0.values());
        let c = (4.0 / a0).sqrt();
        let u = u0.scaled(c);
        let b0 = crate::functional::work_term(&d, spec0.nl.as_ref(), u.values());
        let b = WeightField::sample(Profile::Gaussian { amplitude: 1.0 / b0, width: 1.0 }, WeightRole::Nonlinear, &d).unwrap();
        let spec = ProblemSpec::relaxed(2.0, 0.0, spec0.a.clone(), Arc::new(PowerLaw::new(4.0, b).unwrap()), &d).unwrap();
        let pr = project(&spec, &d, &u, 1e-12).unwrap();
        assert!((pr.scale - 2.0).abs() < 1e-12);
        assert!((action_raw(&spec, &d, pr.field.values()) - 4.0).abs() < 1e-12);
        let mut grid = geometric_grid(0.25, 16.0, 64);
        grid.push(2.0);
        let rep = fiber_property_check(&spec, &d, &u, &grid).unwrap();
        assert!(rep.all_passed(), "{}", rep.table());
        let rep2 = fiber_property_check(&spec, &d, &u.scaled(2.0), &grid).unwrap();
        assert!(rep2.title.contains("t* = 1"));
    }

    #[test]
    fn report_table_and_json() {
        let mut r = CheckReport::new("demo");
        r.push("a", "prop", true, 1.0, 2.0, "");
        r.push("b", "prop", false, 3.0, 2.0, "x");
        assert!(!r.all_passed());
        assert_eq!(r.failures().count(), 1);
        assert!(r.table().contains("FAIL"));
        assert!(r.to_json().unwrap().contains("\"passed\": false"));
    }

    #[test]
    fn oracle_single_node_closed_form() {
        let d = Domain::new(Geometry::radial(3, 1.0, 2)).unwrap();
        let spec = spec_on(&d, 2.0, 4.0, 0.0);
        let res = brute_force_oracle(&spec, &d, &LatticeSpec::default()).unwrap();
        assert_eq!(res.interior_nodes, 1);
        assert!(res.nodal.is_none());
        assert!(!res.warnings.is_empty());
        // One cell [0, h] with weight 4π h³/3 and gradient -1/h; node weight π h³/3.
        let h = 1.0f64;
        let pi = std::f64::consts::PI;
        let a = 4.0 * pi * h.powi(3) / 3.0 / (h * h);
        let b = pi * h.powi(3) / 3.0 * spec.nl.weight().at(0);
        let expected = 0.25 * a * a / b;
        assert!((res.positive.minimum - expected).abs() < 1e-12 * expected, "{} {}", res.positive.minimum, expected);
        assert!((res.negative.minimum - expected).abs() < 1e-12 * expected);
    }
}
