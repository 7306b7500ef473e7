//! Truncated geometry: nodes, quadrature, cell gradients and nodal topology.
//!
//! Two layouts are supported. `Radial` discretizes the radius of a ball in
//! `ℝ^N` with piecewise-linear elements; the node at `r = R` is the Dirichlet
//! wall and the node at `r = 0` is free. `Cartesian2D` covers the box
//! `[-L, L]²` with a triangulated tensor grid whose outer ring is Dirichlet.
//!
//! Zero-order terms use lumped nodal quadrature (`∫ f ≈ Σ wᵢ fᵢ`), gradient
//! terms are evaluated per cell, where the gradient of the interpolant is
//! constant.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

static NEXT_DOMAIN_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Geometry<T> {
    /// Ball of radius `radius` in `ℝ^dim`, `nodes` equispaced radii including both ends.
    Radial { dim: usize, radius: T, nodes: usize },
    /// Box `[-half_width, half_width]²` with `nx × ny` nodes.
    Cartesian2D { half_width: T, nx: usize, ny: usize },
}

impl<T: Real> Geometry<T> {
    pub fn radial(dim: usize, radius: T, nodes: usize) -> Self {
        Geometry::Radial { dim, radius, nodes }
    }

    pub fn cartesian(half_width: T, nx: usize, ny: usize) -> Self {
        Geometry::Cartesian2D { half_width, nx, ny }
    }

    /// Spatial dimension `N` of the underlying problem.
    pub fn dim(&self) -> usize {
        match *self {
            Geometry::Radial { dim, .. } => dim,
            Geometry::Cartesian2D { .. } => 2,
        }
    }

    /// Truncation radius (half-width for the box).
    pub fn truncation(&self) -> T {
        match *self {
            Geometry::Radial { radius, .. } => radius,
            Geometry::Cartesian2D { half_width, .. } => half_width,
        }
    }

    /// Same geometry with a different truncation radius.
    pub fn with_truncation(&self, r: T) -> Self {
        match *self {
            Geometry::Radial { dim, nodes, .. } => Geometry::Radial { dim, radius: r, nodes },
            Geometry::Cartesian2D { nx, ny, .. } => Geometry::Cartesian2D { half_width: r, nx, ny },
        }
    }

    /// Same geometry with every cell count multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        match *self {
            Geometry::Radial { dim, radius, nodes } => {
                Geometry::Radial { dim, radius, nodes: (nodes - 1) * factor + 1 }
            }
            Geometry::Cartesian2D { half_width, nx, ny } => Geometry::Cartesian2D {
                half_width,
                nx: (nx - 1) * factor + 1,
                ny: (ny - 1) * factor + 1,
            },
        }
    }

    /// Same geometry with `nodes` (radial) or `nodes × nodes` (box) resolution.
    pub fn with_resolution(&self, nodes: usize) -> Self {
        match *self {
            Geometry::Radial { dim, radius, .. } => Geometry::Radial { dim, radius, nodes },
            Geometry::Cartesian2D { half_width, .. } => {
                Geometry::Cartesian2D { half_width, nx: nodes, ny: nodes }
            }
        }
    }
}

/// A simplex of the discretization: an interval (radial) or a triangle (box).
///
/// The gradient of the interpolant on the cell is `Σₖ coeffs[k] · u[nodes[k]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<T> {
    pub nodes: [usize; 3],
    pub arity: usize,
    pub coeffs: [[T; 2]; 3],
    pub weight: T,
}

impl<T: Real> Cell<T> {
    #[inline]
    pub fn gradient(&self, u: &[T]) -> [T; 2] {
        let mut g = [T::zero(); 2];
        for k in 0..self.arity {
            let v = u[self.nodes[k]];
            g[0] += self.coeffs[k][0] * v;
            g[1] += self.coeffs[k][1] * v;
        }
        g
    }

    #[inline]
    pub fn node_slice(&self) -> &[usize] {
        &self.nodes[..self.arity]
    }
}

#[derive(Debug, Clone)]
pub struct Domain<T> {
    id: u64,
    geometry: Geometry<T>,
    coords: Vec<[T; 2]>,
    weights: Vec<T>,
    boundary: Vec<bool>,
    cells: Vec<Cell<T>>,
    neighbors: Vec<Vec<usize>>,
    components: usize,
}

impl<T: Real> Domain<T> {
    /// Builds the discretization. Node ordering is deterministic: increasing
    /// radius, or row-major `(i, j) ↦ j·nx + i` on the box.
    pub fn new(geometry: Geometry<T>) -> Result<Self> {
        match geometry {
            Geometry::Radial { dim, radius, nodes } => build_radial(dim, radius, nodes),
            Geometry::Cartesian2D { half_width, nx, ny } => build_cartesian(half_width, nx, ny),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn geometry(&self) -> &Geometry<T> {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[T; 2]] {
        &self.coords
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn cells(&self) -> &[Cell<T>] {
        &self.cells
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Number of gradient components stored per cell (1 radial, 2 box).
    pub fn gradient_components(&self) -> usize {
        self.components
    }

    /// Euclidean distance of node `i` to the origin.
    pub fn radius_of(&self, i: usize) -> T {
        let [x, y] = self.coords[i];
        (x * x + y * y).sqrt()
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| !self.boundary[i])
    }

    pub fn interior_count(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    /// Closed-form measure of the truncated region.
    pub fn measure(&self) -> T {
        match self.geometry {
            Geometry::Radial { dim, radius, .. } => {
                sphere_area::<T>(dim) * radius.powi(dim as i32) / T::of_usize(dim)
            }
            Geometry::Cartesian2D { half_width, .. } => T::of(4.0) * half_width * half_width,
        }
    }

    /// Characteristic mesh size.
    pub fn mesh_size(&self) -> T {
        match self.geometry {
            Geometry::Radial { radius, nodes, .. } => radius / T::of_usize(nodes - 1),
            Geometry::Cartesian2D { half_width, nx, ny } => {
                let two = T::of(2.0);
                (two * half_width / T::of_usize(nx - 1)).max(two * half_width / T::of_usize(ny - 1))
            }
        }
    }

    pub fn check(&self, f: &Field<T>) -> Result<()> {
        if f.domain_id != self.id || f.values.len() != self.len() {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn metadata(&self) -> DomainMetadata<T> {
        DomainMetadata {
            geometry: self.geometry,
            nodes: self.len(),
            interior_nodes: self.interior_count(),
            cells: self.cells.len(),
            mesh_size: self.mesh_size(),
            measure: self.measure(),
        }
    }
}

/// Surface area of the unit sphere in `ℝ^dim`.
pub fn sphere_area<T: Real>(dim: usize) -> T {
    let two_pi = T::of(2.0) * T::PI();
    let (mut area, mut k) = if dim % 2 == 1 { (T::of(2.0), 1) } else { (two_pi, 2) };
    while k < dim {
        area = area * two_pi / T::of_usize(k);
        k += 2;
    }
    area
}

fn next_id() -> u64 {
    NEXT_DOMAIN_ID.fetch_add(1, Ordering::Relaxed)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn build_radial<T: Real>(dim: usize, radius: T, nodes: usize) -> Result<Domain<T>> {
    if dim < 2 {
        return Err(Error::config(format!("radial dimension must be at least 2, got {dim}")));
    }
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::config(format!("truncation radius must be positive, got {radius}")));
    }
    if nodes < 2 {
        return Err(Error::config(format!("radial grid needs at least 2 nodes, got {nodes}")));
    }
    let h = radius / T::of_usize(nodes - 1);
    let omega = sphere_area::<T>(dim);
    let coords: Vec<[T; 2]> =
        (0..nodes).map(|i| [T::of_usize(i) * h, T::zero()]).collect();
    let mut weights = vec![T::zero(); nodes];
    let mut cells = Vec::with_capacity(nodes - 1);
    let inv_h = T::one() / h;
    for i in 0..nodes - 1 {
        // Exact moments of the hat functions against r^{N-1}; every term is
        // positive, so there is no cancellation far from the origin.
        let a = coords[i][0];
        let (mut vol, mut left, mut right) = (T::zero(), T::zero(), T::zero());
        for k in 0..dim {
            let c = T::of(binomial(dim - 1, k)) * a.powi((dim - 1 - k) as i32) * h.powi(k as i32);
            let k1 = T::of_usize(k + 1);
            let k2 = T::of_usize(k + 2);
            vol += c / k1;
            left += c / (k1 * k2);
            right += c / k2;
        }
        weights[i] += omega * h * left;
        weights[i + 1] += omega * h * right;
        cells.push(Cell {
            nodes: [i, i + 1, 0],
            arity: 2,
            coeffs: [[-inv_h, T::zero()], [inv_h, T::zero()], [T::zero(); 2]],
            weight: omega * h * vol,
        });
    }
    let mut boundary = vec![false; nodes];
    boundary[nodes - 1] = true;
    let neighbors = (0..nodes)
        .map(|i| {
            let mut v = Vec::with_capacity(2);
            if i > 0 {
                v.push(i - 1);
            }
            if i + 1 < nodes {
                v.push(i + 1);
            }
            v
        })
        .collect();
    Ok(Domain {
        id: next_id(),
        geometry: Geometry::Radial { dim, radius, nodes },
        coords,
        weights,
        boundary,
        cells,
        neighbors,
        components: 1,
    })
}

fn triangle<T: Real>(coords: &[[T; 2]], nodes: [usize; 3]) -> Cell<T> {
    let [x0, y0] = coords[nodes[0]];
    let [x1, y1] = coords[nodes[1]];
    let [x2, y2] = coords[nodes[2]];
    let area2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
    Cell {
        nodes,
        arity: 3,
        coeffs: [
            [(y1 - y2) / area2, (x2 - x1) / area2],
            [(y2 - y0) / area2, (x0 - x2) / area2],
            [(y0 - y1) / area2, (x1 - x0) / area2],
        ],
        weight: area2.abs() / T::of(2.0),
    }
}

fn build_cartesian<T: Real>(half_width: T, nx: usize, ny: usize) -> Result<Domain<T>> {
    if !(half_width > T::zero()) || !half_width.is_finite() {
        return Err(Error::config(format!("half-width must be positive, got {half_width}")));
    }
    if nx < 3 || ny < 3 {
        return Err(Error::config(format!("box grid needs at least 3×3 nodes, got {nx}×{ny}")));
    }
    let two = T::of(2.0);
    let hx = two * half_width / T::of_usize(nx - 1);
    let hy = two * half_width / T::of_usize(ny - 1);
    let idx = |i: usize, j: usize| j * nx + i;
    let n = nx * ny;
    let mut coords = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    let mut boundary = Vec::with_capacity(n);
    let half = T::of(0.5);
    for j in 0..ny {
        for i in 0..nx {
            coords.push([-half_width + T::of_usize(i) * hx, -half_width + T::of_usize(j) * hy]);
            let ex = i == 0 || i == nx - 1;
            let ey = j == 0 || j == ny - 1;
            let mut w = hx * hy;
            if ex {
                w *= half;
            }
            if ey {
                w *= half;
            }
            weights.push(w);
            boundary.push(ex || ey);
        }
    }
    let mut cells = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (n00, n10, n01, n11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            let xc = coords[n00][0] + coords[n11][0];
            let yc = coords[n00][1] + coords[n11][1];
            // Diagonals point away from the centre, so the mesh is symmetric
            // under both axis reflections when nx and ny are odd.
            if xc * yc >= T::zero() {
                cells.push(triangle(&coords, [n00, n10, n11]));
                cells.push(triangle(&coords, [n00, n11, n01]));
            } else {
                cells.push(triangle(&coords, [n00, n10, n01]));
                cells.push(triangle(&coords, [n10, n11, n01]));
            }
        }
    }
    let mut neighbors = vec![Vec::with_capacity(4); n];
    for j in 0..ny {
        for i in 0..nx {
            let v = &mut neighbors[idx(i, j)];
            if i > 0 {
                v.push(idx(i - 1, j));
            }
            if i + 1 < nx {
                v.push(idx(i + 1, j));
            }
            if j > 0 {
                v.push(idx(i, j - 1));
            }
            if j + 1 < ny {
                v.push(idx(i, j + 1));
            }
        }
    }
    Ok(Domain {
        id: next_id(),
        geometry: Geometry::Cartesian2D { half_width, nx, ny },
        coords,
        weights,
        boundary,
        cells,
        neighbors,
        components: 2,
    })
}

/// Nodal values of a scalar function on a [`Domain`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    domain_id: u64,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(d: &Domain<T>) -> Self {
        Field { domain_id: d.id, values: vec![T::zero(); d.len()] }
    }

    pub fn from_values(d: &Domain<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != d.len() {
            return Err(Error::DomainMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::DegenerateField(format!("non-finite value at node {i}")));
        }
        Ok(Field { domain_id: d.id, values })
    }

    /// Samples `f(x)` at every node; `x = [r, 0]` on radial domains.
    pub fn from_fn(d: &Domain<T>, f: impl Fn([T; 2]) -> T) -> Self {
        Field { domain_id: d.id, values: d.coords.iter().map(|&x| f(x)).collect() }
    }

    /// Samples `f(x)` at interior nodes and pins the Dirichlet nodes to zero.
    pub fn admissible_from_fn(d: &Domain<T>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = d
            .coords
            .iter()
            .zip(&d.boundary)
            .map(|(&x, &b)| if b { T::zero() } else { f(x) })
            .collect();
        Field { domain_id: d.id, values }
    }

    /// Copy with the Dirichlet nodes set to zero.
    pub fn with_dirichlet(mut self, d: &Domain<T>) -> Self {
        for (v, &b) in self.values.iter_mut().zip(&d.boundary) {
            if b {
                *v = T::zero();
            }
        }
        self
    }

    pub fn domain_id(&self) -> u64 {
        self.domain_id
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field { domain_id: self.domain_id, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `self + c · other`.
    pub fn add_scaled(&self, other: &Field<T>, c: T) -> Self {
        debug_assert_eq!(self.domain_id, other.domain_id);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| a + c * b).collect();
        Field { domain_id: self.domain_id, values }
    }

    /// `u⁺ = max(u, 0)`.
    pub fn positive_part(&self) -> Self {
        self.map(|v| v.max(T::zero()))
    }

    /// `u⁻ = min(u, 0)`, so that `u = u⁺ + u⁻`.
    pub fn negative_part(&self) -> Self {
        self.map(|v| v.min(T::zero()))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Per-cell gradients of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField<T> {
    pub components: usize,
    pub values: Vec<[T; 2]>,
}

/// `∫ f dx ≈ Σ wᵢ fᵢ`.
pub fn integrate<T: Real>(d: &Domain<T>, f: &Field<T>) -> Result<T> {
    d.check(f)?;
    Ok(weighted_sum(d, f.values()))
}

#[inline]
pub(crate) fn weighted_sum<T: Real>(d: &Domain<T>, f: &[T]) -> T {
    d.weights.iter().zip(f).map(|(&w, &v)| w * v).sum()
}

pub fn gradient_field<T: Real>(d: &Domain<T>, u: &Field<T>) -> Result<GradientField<T>> {
    d.check(u)?;
    Ok(GradientField {
        components: d.components,
        values: d.cells.iter().map(|c| c.gradient(u.values())).collect(),
    })
}

/// Default zero threshold for nodal counting: `1e-8 · max|u|`.
pub fn default_zero_tol<T: Real>(u: &Field<T>) -> T {
    T::of(1e-8) * u.max_abs()
}

/// Number of connected, sign-constant components of `{ |u| > zero_tol }`.
pub fn count_nodal_domains<T: Real>(d: &Domain<T>, u: &Field<T>, zero_tol: T) -> Result<usize> {
    d.check(u)?;
    if zero_tol < T::zero() {
        return Err(Error::config("zero tolerance must be non-negative"));
    }
    let v = u.values();
    let sign = |i: usize| -> i8 {
        if v[i] > zero_tol {
            1
        } else if v[i] < -zero_tol {
            -1
        } else {
            0
        }
    };
    let mut seen = vec![false; v.len()];
    let mut queue = VecDeque::new();
    let mut count = 0;
    for start in 0..v.len() {
        let s = sign(start);
        if s == 0 || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            for &j in d.neighbors(i) {
                if !seen[j] && sign(j) == s {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetadata<T> {
    pub geometry: Geometry<T>,
    pub nodes: usize,
    pub interior_nodes: usize,
    pub cells: usize,
    pub mesh_size: T,
    pub measure: T,
}

fn coordinate_header<T: Real>(d: &Domain<T>) -> Vec<&'static str> {
    match d.geometry {
        Geometry::Radial { .. } => vec!["r"],
        Geometry::Cartesian2D { .. } => vec!["x", "y"],
    }
}

/// Writes one row per node: coordinates followed by one column per field.
pub fn write_fields_csv<T: Real, W: Write>(
    d: &Domain<T>,
    columns: &[(&str, &Field<T>)],
    out: W,
) -> Result<()> {
    for (_, f) in columns {
        d.check(f)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = coordinate_header(d);
    header.extend(columns.iter().map(|(name, _)| *name));
    w.write_record(&header)?;
    let ncoord = d.components;
    for i in 0..d.len() {
        let mut row: Vec<String> = d.coords[i][..ncoord].iter().map(|c| c.to_string()).collect();
        row.extend(columns.iter().map(|(_, f)| f.values()[i].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a single field with columns `(coordinates..., value)`.
pub fn write_field_csv<T: Real, W: Write>(d: &Domain<T>, f: &Field<T>, out: W) -> Result<()> {
    write_fields_csv(d, &[("value", f)], out)
}

/// Reads the last column of a CSV in the domain's node order.
pub fn read_field_csv<T: Real, R: Read>(d: &Domain<T>, input: R) -> Result<Field<T>> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::with_capacity(d.len());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let last = rec
            .iter()
            .last()
            .ok_or_else(|| Error::config(format!("empty CSV row {row}")))?;
        let v: f64 = last
            .trim()
            .parse()
            .map_err(|_| Error::config(format!("row {row}: cannot parse '{last}'")))?;
        values.push(T::of(v));
    }
    if values.len() != d.len() {
        return Err(Error::config(format!(
            "CSV has {} rows, domain has {} nodes",
            values.len(),
            d.len()
        )));
    }
    Field::from_values(d, values)
}
