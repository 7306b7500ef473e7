//! Seeded random smooth fields: probes, test directions and solver reseeds.

use rand::Rng;

use crate::domain::{Domain, Field, Geometry};
use crate::scalar::Real;

/// Sign constraint on generated fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn factor<T: Real>(self) -> T {
        match self {
            Sign::Positive => T::one(),
            Sign::Negative => -T::one(),
        }
    }
}

/// Vanishes on the outer boundary, positive inside.
pub(crate) fn cutoff<T: Real>(g: &Geometry<T>, x: [T; 2]) -> T {
    let l = g.truncation();
    match g {
        Geometry::Radial { .. } => (T::one() - (x[0] / l).powi(2)).max(T::zero()),
        Geometry::Cartesian2D { .. } => {
            ((T::one() - (x[0] / l).powi(2)) * (T::one() - (x[1] / l).powi(2))).max(T::zero())
        }
    }
}

/// Gaussian bump of width `sigma` centred at `c` (a radius for radial domains).
pub(crate) fn gaussian<T: Real>(g: &Geometry<T>, x: [T; 2], c: [T; 2], sigma: T) -> T {
    let d2 = match g {
        Geometry::Radial { .. } => (x[0] - c[0]).powi(2),
        Geometry::Cartesian2D { .. } => (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2),
    };
    (-d2 / (sigma * sigma)).exp()
}

/// Three random Gaussian bumps on a small constant background, times a
/// boundary cutoff.
///
/// Centres lie within half the truncation radius, widths in `[R/10, R/4]`,
/// amplitudes in `[0.5, 1.5]` with random signs unless `sign` is given. The
/// background (`[0.05, 0.25]`) keeps the gradient away from zero on the tails.
pub fn random_smooth_field<T: Real, R: Rng + ?Sized>(d: &Domain<T>, rng: &mut R, sign: Option<Sign>) -> Field<T> {
    let g = d.geometry();
    let l = g.truncation().as_f64();
    let radial = matches!(g, Geometry::Radial { .. });
    let bumps: Vec<([T; 2], T, T)> = (0..3)
        .map(|_| {
            let c = if radial {
                [T::of(rng.gen_range(0.0..0.5) * l), T::zero()]
            } else {
                [T::of(rng.gen_range(-0.5..0.5) * l), T::of(rng.gen_range(-0.5..0.5) * l)]
            };
            let sigma = T::of(rng.gen_range(0.1..0.25) * l);
            let mut amp = rng.gen_range(0.5..1.5);
            if sign.is_none() && rng.gen_bool(0.5) {
                amp = -amp;
            }
            (c, sigma, T::of(amp))
        })
        .collect();
    let mut base = rng.gen_range(0.05..0.25);
    if sign.is_none() && rng.gen_bool(0.5) {
        base = -base;
    }
    let base = T::of(base);
    let s = sign.map_or(T::one(), |s| s.factor());
    Field::admissible_from_fn(d, |x| {
        let v: T = base + bumps.iter().map(|&(c, sigma, a)| a * gaussian(g, x, c, sigma)).sum::<T>();
        s * v * cutoff(g, x)
    })
}

/// `count` random smooth fields.
pub fn random_fields<T: Real, R: Rng + ?Sized>(d: &Domain<T>, rng: &mut R, count: usize, sign: Option<Sign>) -> Vec<Field<T>> {
    (0..count).map(|_| random_smooth_field(d, rng, sign)).collect()
}
