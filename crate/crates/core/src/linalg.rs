//! Banded Cholesky factorization and the fixed quadratic preconditioner
//! `-Δ + A` on the interior nodes.

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::fields::WeightField;
use crate::scalar::Real;

/// Lower-banded symmetric matrix; row `i` stores columns `i - bw ..= i`.
#[derive(Debug, Clone)]
pub struct BandedSymmetric<T> {
    n: usize,
    bw: usize,
    data: Vec<T>,
}

impl<T: Real> BandedSymmetric<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSymmetric { n, bw, data: vec![T::zero(); n * (bw + 1)] }
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (j + self.bw - i)
    }

    /// Adds `v` to entry `(i, j)` (and its mirror).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(r, c);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if r - c > self.bw {
            return T::zero();
        }
        self.data[self.slot(r, c)]
    }

    /// In-place Cholesky `A = L Lᵀ`; fails if the matrix is not positive definite.
    pub fn factor(mut self) -> Result<BandedCholesky<T>> {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = self.data[self.slot(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= self.data[self.slot(i, k)] * self.data[self.slot(j, k)];
                }
                let sl = self.slot(i, j);
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::Factorization(format!("non-positive pivot {s} at row {i}")));
                    }
                    self.data[sl] = s.sqrt();
                } else {
                    self.data[sl] = s / self.data[self.slot(j, j)];
                }
            }
        }
        Ok(BandedCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    l: BandedSymmetric<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn solve_in_place(&self, b: &mut [T]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let d = &self.l.data;
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= d[self.l.slot(i, k)] * b[k];
            }
            b[i] = s / d[self.l.slot(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= d[self.l.slot(k, i)] * b[k];
            }
            b[i] = s / d[self.l.slot(i, i)];
        }
    }
}

/// Factorized `K + M_A`: the `p = 2` stiffness plus the `A`-weighted lumped
/// mass, restricted to interior nodes.
#[derive(Debug, Clone)]
pub struct Preconditioner<T> {
    domain_id: u64,
    interior: Vec<usize>,
    index: Vec<Option<usize>>,
    chol: BandedCholesky<T>,
}

impl<T: Real> Preconditioner<T> {
    pub fn assemble(d: &Domain<T>, a: &WeightField<T>) -> Result<Self> {
        Self::assemble_scaled(d, a, T::one())
    }

    /// `K + c M_A` with `c ≥ 0`.
    pub fn assemble_scaled(d: &Domain<T>, a: &WeightField<T>, mass_weight: T) -> Result<Self> {
        if !(mass_weight >= T::zero()) {
            return Err(Error::config(format!("preconditioner mass weight must be non-negative, got {mass_weight}")));
        }
        if a.domain_id() != d.id() {
            return Err(Error::DomainMismatch);
        }
        let interior: Vec<usize> = d.interior_nodes().collect();
        if interior.is_empty() {
            return Err(Error::Factorization("domain has no interior nodes".into()));
        }
        let mut index = vec![None; d.len()];
        for (k, &i) in interior.iter().enumerate() {
            index[i] = Some(k);
        }
        let mut bw = 0;
        for c in d.cells() {
            for &x in c.node_slice() {
                for &y in c.node_slice() {
                    if let (Some(ix), Some(iy)) = (index[x], index[y]) {
                        bw = bw.max(ix.abs_diff(iy));
                    }
                }
            }
        }
        let mut m = BandedSymmetric::zeros(interior.len(), bw);
        for c in d.cells() {
            for k in 0..c.arity {
                let Some(ik) = index[c.nodes[k]] else { continue };
                for l in 0..=k {
                    let Some(il) = index[c.nodes[l]] else { continue };
                    let v = c.weight
                        * (c.coeffs[k][0] * c.coeffs[l][0] + c.coeffs[k][1] * c.coeffs[l][1]);
                    if k == l {
                        m.add(ik, ik, v);
                    } else {
                        m.add(ik, il, v);
                    }
                }
            }
        }
        for (k, &i) in interior.iter().enumerate() {
            m.add(k, k, mass_weight * d.weights()[i] * a.at(i));
        }
        Ok(Preconditioner { domain_id: d.id(), interior, index, chol: m.factor()? })
    }

    pub fn domain_id(&self) -> u64 {
        self.domain_id
    }

    /// `P⁻¹ r` for a nodal dual vector `r`; Dirichlet entries are zero.
    pub fn apply_inverse(&self, dual: &[T]) -> Vec<T> {
        let mut b: Vec<T> = self.interior.iter().map(|&i| dual[i]).collect();
        self.chol.solve_in_place(&mut b);
        let mut out = vec![T::zero(); dual.len()];
        for (k, &i) in self.interior.iter().enumerate() {
            out[i] = b[k];
        }
        out
    }

    /// `sqrt(rᵀ P⁻¹ r)`.
    pub fn dual_norm(&self, dual: &[T]) -> T {
        let z = self.apply_inverse(dual);
        let s: T = self.interior.iter().map(|&i| dual[i] * z[i]).sum();
        s.max(T::zero()).sqrt()
    }

    pub fn is_interior(&self, i: usize) -> bool {
        self.index[i].is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_cholesky_solves_tridiagonal() {
        let n = 6;
        let mut m = BandedSymmetric::<f64>::zeros(n, 1);
        for i in 0..n {
            m.add(i, i, 4.0);
            if i > 0 {
                m.add(i, i - 1, -1.0);
            }
        }
        let dense: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| m.get(i, j)).collect()).collect();
        let x: Vec<f64> = (0..n).map(|i| (i as f64 + 1.0).sin()).collect();
        let mut b: Vec<f64> = dense.iter().map(|row| row.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
        m.factor().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn wider_band() {
        let n = 9;
        let bw = 3;
        let mut m = BandedSymmetric::<f64>::zeros(n, bw);
        for i in 0..n {
            m.add(i, i, 10.0);
            for j in i.saturating_sub(bw)..i {
                m.add(i, j, 1.0 / (1.0 + (i - j) as f64));
            }
        }
        let x: Vec<f64> = (0..n).map(|i| i as f64 - 3.5).collect();
        let mut b: Vec<f64> = (0..n).map(|i| (0..n).map(|j| m.get(i, j) * x[j]).sum()).collect();
        m.factor().unwrap().solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let mut m = BandedSymmetric::<f64>::zeros(2, 1);
        m.add(0, 0, 1.0);
        m.add(1, 1, 1.0);
        m.add(1, 0, 2.0);
        assert!(matches!(m.factor(), Err(Error::Factorization(_))));
    }
}
