//! Origin-centred computational grids and fields living on them.
//!
//! Every grid is reduced to the same discrete data: a quadrature weight per
//! node, a list of weighted edges and a per-node boundary coefficient for the
//! homogeneous Dirichlet ghost layer. The discrete Dirichlet form is then
//!
//! ```text
//! D(u, v) = sum_e c_e (u_a - u_b)(v_a - v_b) + sum_k b_k u_k v_k
//! ```
//!
//! which is symmetric positive definite, and its L²-representer is the
//! negative discrete Laplacian `(K u)_k / w_k`. Cartesian grids use the usual
//! 2d+1 stencil; polar and cylindrical grids use a cell-centred finite-volume
//! form whose Dirichlet energy commutes exactly with rotations by multiples of
//! the angular step.

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Real};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Cartesian,
    Polar,
    Cylindrical,
}

#[derive(Debug, Clone, Copy)]
struct Edge<T> {
    a: usize,
    b: usize,
    c: T,
}

/// Discretization of a bounded, origin-centred region of `R^d`, `d <= 3`.
#[derive(Debug, Clone)]
pub struct Grid<T: Real> {
    kind: GridKind,
    dim: usize,
    shape: Vec<usize>,
    spacing: Vec<T>,
    weights: Vec<T>,
    positions: Vec<[T; 3]>,
    edges: Vec<Edge<T>>,
    boundary: Vec<T>,
}

impl<T: Real> Grid<T> {
    /// Uniform tensor grid with `n` nodes per axis and spacing `h`, nodes at
    /// `(i - (n-1)/2) h`.
    pub fn cartesian(dim: usize, n: usize, h: T) -> Result<Self> {
        Self::cartesian_aniso(&vec![n; dim], &vec![h; dim])
    }

    /// Tensor grid covering `[-half_width, half_width]^d` with `n` nodes per
    /// axis; the Dirichlet ghost layer sits one step outside the box.
    pub fn cartesian_box(dim: usize, n: usize, half_width: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter("need at least two nodes per axis".into()));
        }
        let h = T::lit(2.0) * half_width / T::from_usize_lossy(n - 1);
        Self::cartesian(dim, n, h)
    }

    pub fn cartesian_aniso(shape: &[usize], spacing: &[T]) -> Result<Self> {
        let dim = shape.len();
        if !(1..=3).contains(&dim) || spacing.len() != dim {
            return Err(Error::Dimension(format!("cartesian grids need 1..=3 axes, got {dim}")));
        }
        if shape.iter().any(|&n| n == 0) || spacing.iter().any(|&h| !(h > T::zero())) {
            return Err(Error::Parameter("empty axis or non-positive spacing".into()));
        }
        let total: usize = shape.iter().product();
        let cell: T = spacing.iter().fold(T::one(), |acc, &h| acc * h);
        let strides = strides(shape);
        let mut positions = vec![[T::zero(); 3]; total];
        for (k, pos) in positions.iter_mut().enumerate() {
            let idx = unravel(k, shape);
            for ax in 0..dim {
                let c = T::lit((shape[ax] as f64 - 1.0) / 2.0);
                pos[ax] = (T::from_usize_lossy(idx[ax]) - c) * spacing[ax];
            }
        }
        let mut edges = Vec::with_capacity(total * dim);
        let mut boundary = vec![T::zero(); total];
        for k in 0..total {
            let idx = unravel(k, shape);
            for ax in 0..dim {
                let c = cell / (spacing[ax] * spacing[ax]);
                if idx[ax] + 1 < shape[ax] {
                    edges.push(Edge { a: k, b: k + strides[ax], c });
                } else {
                    boundary[k] += c;
                }
                if idx[ax] == 0 {
                    boundary[k] += c;
                }
            }
        }
        Ok(Self {
            kind: GridKind::Cartesian,
            dim,
            shape: shape.to_vec(),
            spacing: spacing.to_vec(),
            weights: vec![cell; total],
            positions,
            edges,
            boundary,
        })
    }

    /// Cell-centred polar grid on the disk of radius `radius`: `nr` rings at
    /// `(i + 1/2) dr` and `ntheta` equally spaced angles starting at 0.
    pub fn polar(nr: usize, ntheta: usize, radius: T) -> Result<Self> {
        Self::cylindrical_impl(nr, ntheta, radius, None)
    }

    /// Polar grid times a uniform `z` axis of `nz` nodes spanning
    /// `[-half_height, half_height]`.
    pub fn cylindrical(nr: usize, ntheta: usize, radius: T, nz: usize, half_height: T) -> Result<Self> {
        if nz < 2 {
            return Err(Error::Parameter("cylindrical grid needs nz >= 2".into()));
        }
        let dz = T::lit(2.0) * half_height / T::from_usize_lossy(nz - 1);
        Self::cylindrical_impl(nr, ntheta, radius, Some((nz, dz)))
    }

    fn cylindrical_impl(nr: usize, ntheta: usize, radius: T, z: Option<(usize, T)>) -> Result<Self> {
        if nr < 2 || ntheta < 4 || !(radius > T::zero()) {
            return Err(Error::Parameter("polar grid needs nr >= 2, ntheta >= 4, radius > 0".into()));
        }
        // Ghost ring at r = (nr + 1/2) dr coincides with `radius`.
        let dr = radius / T::lit(nr as f64 + 0.5);
        let dth = T::lit(2.0) * T::pi() / T::from_usize_lossy(ntheta);
        let (nz, dz) = z.unwrap_or((1, T::one()));
        let total = nr * ntheta * nz;
        let idx = |i: usize, j: usize, k: usize| (i * ntheta + j) * nz + k;
        let half = T::lit(0.5);
        let zc = T::lit((nz as f64 - 1.0) / 2.0);
        let mut positions = vec![[T::zero(); 3]; total];
        let mut weights = vec![T::zero(); total];
        let mut edges = Vec::with_capacity(total * 3);
        let mut boundary = vec![T::zero(); total];
        let dzw = if z.is_some() { dz } else { T::one() };
        for i in 0..nr {
            let r = (T::from_usize_lossy(i) + half) * dr;
            for j in 0..ntheta {
                let th = T::from_usize_lossy(j) * dth;
                for k in 0..nz {
                    let n = idx(i, j, k);
                    positions[n] = [
                        r * th.cos(),
                        r * th.sin(),
                        if z.is_some() { (T::from_usize_lossy(k) - zc) * dz } else { T::zero() },
                    ];
                    weights[n] = r * dr * dth * dzw;
                    let c_rad = T::from_usize_lossy(i + 1) * dth * dzw;
                    if i + 1 < nr {
                        edges.push(Edge { a: n, b: idx(i + 1, j, k), c: c_rad });
                    } else {
                        boundary[n] += c_rad;
                    }
                    edges.push(Edge { a: n, b: idx(i, (j + 1) % ntheta, k), c: dr * dzw / (r * dth) });
                    if z.is_some() {
                        let c_z = r * dr * dth / dz;
                        if k + 1 < nz {
                            edges.push(Edge { a: n, b: idx(i, j, k + 1), c: c_z });
                        } else {
                            boundary[n] += c_z;
                        }
                        if k == 0 {
                            boundary[n] += c_z;
                        }
                    }
                }
            }
        }
        let (kind, dim, shape, spacing) = match z {
            None => (GridKind::Polar, 2, vec![nr, ntheta], vec![dr, dth]),
            Some(_) => (GridKind::Cylindrical, 3, vec![nr, ntheta, nz], vec![dr, dth, dz]),
        };
        Ok(Self { kind, dim, shape, spacing, weights, positions, edges, boundary })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Physical dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Per-axis spacing; `(dr, dtheta[, dz])` on polar grids.
    pub fn spacing(&self) -> &[T] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn position(&self, k: usize) -> [T; 3] {
        self.positions[k]
    }

    pub fn radius_of(&self, k: usize) -> T {
        let p = self.positions[k];
        (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
    }

    /// Coarsest linear resolution (used as an interpolation length scale).
    pub fn max_spacing(&self) -> T {
        match self.kind {
            GridKind::Cartesian => self.spacing.iter().copied().fold(T::zero(), T::max),
            _ => {
                let outer = self.spacing[0] * T::from_usize_lossy(self.shape[0]) * self.spacing[1];
                let mut h = self.spacing[0].max(outer);
                if self.kind == GridKind::Cylindrical {
                    h = h.max(self.spacing[2]);
                }
                h
            }
        }
    }

    /// Half-width of the smallest origin-centred box (or disk radius) that
    /// contains all nodes.
    pub fn extent(&self) -> T {
        (0..self.len()).map(|k| {
            let p = self.positions[k];
            p[0].abs().max(p[1].abs()).max(p[2].abs())
        }).fold(T::zero(), T::max)
    }

    /// Total measure of the discretized region.
    pub fn measure(&self) -> T {
        pairwise_sum(&self.weights)
    }

    /// Midpoint-rule integral of nodal values.
    pub fn integrate(&self, f: &[T]) -> T {
        debug_assert_eq!(f.len(), self.len());
        let prod: Vec<T> = f.iter().zip(&self.weights).map(|(&a, &w)| a * w).collect();
        pairwise_sum(&prod)
    }

    /// Discrete Dirichlet form `∫ ∇u·∇v`.
    pub fn dirichlet(&self, u: &[T], v: &[T]) -> T {
        let mut terms: Vec<T> = self
            .edges
            .iter()
            .map(|e| e.c * ((u[e.a] - u[e.b]) * (v[e.a] - v[e.b])))
            .collect();
        terms.extend(self.boundary.iter().enumerate().map(|(k, &b)| b * (u[k] * v[k])));
        pairwise_sum(&terms)
    }

    /// Raw stiffness product `K u` (derivative of `D(u,u)/2`).
    pub fn stiffness_apply(&self, u: &[T], out: &mut [T]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.boundary[k] * u[k];
        }
        for e in &self.edges {
            let d = e.c * (u[e.a] - u[e.b]);
            out[e.a] += d;
            out[e.b] -= d;
        }
    }

    /// Neighbour lists from the stiffness edges.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.len()];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        adj
    }

    /// Diagonal of the stiffness matrix.
    pub fn stiffness_diag(&self) -> Vec<T> {
        let mut d = self.boundary.clone();
        for e in &self.edges {
            d[e.a] += e.c;
            d[e.b] += e.c;
        }
        d
    }

    /// `-Δ_h u` as a nodal field.
    pub fn neg_laplacian(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        self.stiffness_apply(u, &mut out);
        for (o, &w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
        out
    }

    fn index_of(&self, idx: &[usize]) -> usize {
        let s = strides(&self.shape);
        idx.iter().zip(&s).map(|(i, st)| i * st).sum()
    }

    /// Node map realising `f ↦ f∘g` for the linear isometry `g` given as a
    /// row-major `dim × dim` matrix. Exact node permutations are used when
    /// `g` maps nodes to nodes; Cartesian grids fall back to multilinear
    /// interpolation with the Dirichlet ghost value zero. Polar and
    /// cylindrical grids refuse non node-preserving maps.
    pub fn node_map(&self, g: &[T]) -> Result<NodeMap<T>> {
        let d = self.dim;
        if g.len() != d * d {
            return Err(Error::Dimension(format!("isometry has {} entries, grid dimension {d}", g.len())));
        }
        let tol = T::lit(1e-9);
        let apply = |p: &[T; 3]| {
            let mut q = [T::zero(); 3];
            for r in 0..d {
                for c in 0..d {
                    q[r] += g[r * d + c] * p[c];
                }
            }
            q
        };
        match self.kind {
            GridKind::Cartesian => {
                let mut perm = Vec::with_capacity(self.len());
                let mut exact = true;
                'outer: for k in 0..self.len() {
                    let q = apply(&self.positions[k]);
                    let mut idx = [0usize; 3];
                    for ax in 0..d {
                        let c = T::lit((self.shape[ax] as f64 - 1.0) / 2.0);
                        let s = q[ax] / self.spacing[ax] + c;
                        let r = s.round();
                        if (s - r).abs() > tol || r < T::zero() || r > T::from_usize_lossy(self.shape[ax] - 1) {
                            exact = false;
                            break 'outer;
                        }
                        idx[ax] = r.to_usize().unwrap_or(0);
                    }
                    perm.push(self.index_of(&idx[..d]));
                }
                if exact {
                    return Ok(NodeMap::Permutation(perm));
                }
                let mut stencils = Vec::with_capacity(self.len());
                for k in 0..self.len() {
                    let q = apply(&self.positions[k]);
                    stencils.push(self.multilinear_stencil(&q));
                }
                Ok(NodeMap::Interpolation(stencils))
            }
            GridKind::Polar | GridKind::Cylindrical => {
                let (nr, nth) = (self.shape[0], self.shape[1]);
                let nz = if self.kind == GridKind::Cylindrical { self.shape[2] } else { 1 };
                let dth = self.spacing[1];
                let mut perm = Vec::with_capacity(self.len());
                for k in 0..self.len() {
                    let p = self.positions[k];
                    let q = apply(&p);
                    let i = k / (nth * nz);
                    let rq = (q[0] * q[0] + q[1] * q[1]).sqrt();
                    let rp = (p[0] * p[0] + p[1] * p[1]).sqrt();
                    if (rq - rp).abs() > tol * (T::one() + rp) {
                        return Err(Error::SymmetryMismatch("map does not preserve the radial coordinate".into()));
                    }
                    let mut th = q[1].atan2(q[0]);
                    if th < T::zero() {
                        th += T::lit(2.0) * T::pi();
                    }
                    let s = th / dth;
                    let jr = s.round();
                    if (s - jr).abs() > T::lit(1e-7) {
                        return Err(Error::SymmetryMismatch(format!(
                            "rotation is not a multiple of the angular step 2π/{nth}"
                        )));
                    }
                    let j = jr.to_usize().unwrap_or(0) % nth;
                    let kz = if nz > 1 {
                        let c = T::lit((nz as f64 - 1.0) / 2.0);
                        let s = q[2] / self.spacing[2] + c;
                        let r = s.round();
                        if (s - r).abs() > tol || r < T::zero() || r > T::from_usize_lossy(nz - 1) {
                            return Err(Error::SymmetryMismatch("map does not preserve the z lattice".into()));
                        }
                        r.to_usize().unwrap_or(0)
                    } else {
                        0
                    };
                    let _ = nr;
                    perm.push((i * nth + j) * nz + kz);
                }
                Ok(NodeMap::Permutation(perm))
            }
        }
    }

    fn multilinear_stencil(&self, q: &[T; 3]) -> Vec<(usize, T)> {
        let d = self.dim;
        let mut base = [0i64; 3];
        let mut frac = [T::zero(); 3];
        for ax in 0..d {
            let c = T::lit((self.shape[ax] as f64 - 1.0) / 2.0);
            let s = q[ax] / self.spacing[ax] + c;
            let f = s.floor();
            base[ax] = f.to_i64().unwrap_or(i64::MIN / 4);
            frac[ax] = s - f;
        }
        let mut out = Vec::with_capacity(1 << d);
        for corner in 0..(1usize << d) {
            let mut w = T::one();
            let mut idx = [0usize; 3];
            let mut inside = true;
            for ax in 0..d {
                let bit = (corner >> ax) & 1;
                let i = base[ax] + bit as i64;
                w *= if bit == 1 { frac[ax] } else { T::one() - frac[ax] };
                if i < 0 || i >= self.shape[ax] as i64 {
                    inside = false;
                } else {
                    idx[ax] = i as usize;
                }
            }
            if inside && w != T::zero() {
                out.push((self.index_of(&idx[..d]), w));
            }
        }
        out
    }

    /// Header of the field dump format:
    /// `d n1 .. nd h1 .. hd o1 .. od coords=<kind>` where `o` is the
    /// coordinate tuple of node 0 (polar coordinates are `(r, θ[, z])`).
    pub fn dump_header(&self) -> String {
        let mut parts = vec![self.dim.to_string()];
        parts.extend(self.shape.iter().map(|n| n.to_string()));
        parts.extend(self.spacing.iter().map(|h| format!("{:.17e}", h.as_f64())));
        match self.kind {
            GridKind::Cartesian => {
                let p = self.positions[0];
                parts.extend((0..self.dim).map(|ax| format!("{:.17e}", p[ax].as_f64())));
            }
            GridKind::Polar | GridKind::Cylindrical => {
                parts.push(format!("{:.17e}", (self.spacing[0] * T::lit(0.5)).as_f64()));
                parts.push(format!("{:.17e}", 0.0));
                if self.kind == GridKind::Cylindrical {
                    parts.push(format!("{:.17e}", self.positions[0][2].as_f64()));
                }
            }
        }
        let kind = match self.kind {
            GridKind::Cartesian => "cartesian",
            GridKind::Polar => "polar",
            GridKind::Cylindrical => "cylindrical",
        };
        parts.push(format!("coords={kind}"));
        parts.join(" ")
    }
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        s[ax] = s[ax + 1] * shape[ax + 1];
    }
    s
}

fn unravel(mut k: usize, shape: &[usize]) -> [usize; 3] {
    let mut idx = [0; 3];
    for ax in (0..shape.len()).rev() {
        idx[ax] = k % shape[ax];
        k /= shape[ax];
    }
    idx
}

/// Linear map `f ↦ f∘g` on nodal values.
#[derive(Debug, Clone)]
pub enum NodeMap<T> {
    /// `out[k] = f[perm[k]]`, exact.
    Permutation(Vec<usize>),
    /// `out[k] = Σ w f[j]` over a multilinear stencil.
    Interpolation(Vec<Vec<(usize, T)>>),
}

impl<T: Real> NodeMap<T> {
    pub fn is_exact(&self) -> bool {
        matches!(self, NodeMap::Permutation(_))
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        match self {
            NodeMap::Permutation(p) => p.iter().map(|&j| f[j]).collect(),
            NodeMap::Interpolation(st) => st
                .iter()
                .map(|s| s.iter().fold(T::zero(), |acc, &(j, w)| acc + w * f[j]))
                .collect(),
        }
    }
}

/// Free-form metadata carried by a field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FieldMeta {
    pub symmetric: bool,
    pub warnings: Vec<String>,
}

/// Nodal values on a shared grid.
#[derive(Debug, Clone)]
pub struct Field<T: Real> {
    pub grid: Arc<Grid<T>>,
    pub values: Vec<T>,
    pub meta: FieldMeta,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![T::zero(); n], meta: FieldMeta::default() }
    }

    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn([T; 3]) -> T) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.position(k))).collect();
        Self { grid, values, meta: FieldMeta::default() }
    }

    pub fn with_values(&self, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), self.grid.len());
        Self { grid: self.grid.clone(), values, meta: FieldMeta::default() }
    }

    pub fn same_grid(&self, other: &Field<T>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
    }

    pub fn scaled(&self, s: T) -> Self {
        self.with_values(self.values.iter().map(|&v| v * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Discrete L² norm.
    pub fn l2_norm(&self) -> T {
        let sq: Vec<T> = self.values.iter().map(|&v| v * v).collect();
        self.grid.integrate(&sq).sqrt()
    }

    /// `f∘g` for the isometry matrix `g`.
    pub fn compose(&self, g: &[T]) -> Result<Self> {
        let map = self.grid.node_map(g)?;
        Ok(self.with_values(map.apply(&self.values)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(p: [f64; 3]) -> f64 {
        (-(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp()
    }

    #[test]
    fn cartesian_nodes_are_origin_centred() {
        let g = Grid::<f64>::cartesian(2, 5, 0.5).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g.position(0), [-1.0, -1.0, 0.0]);
        assert_eq!(g.position(12), [0.0, 0.0, 0.0]);
        assert!((g.extent() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_form_is_symmetric_and_matches_stiffness() {
        let g = Arc::new(Grid::<f64>::polar(12, 16, 4.0).unwrap());
        let u = Field::from_fn(g.clone(), |p| gaussian(p) * (1.0 + 0.3 * p[0]));
        let v = Field::from_fn(g.clone(), |p| (-(p[0] - 0.5).powi(2) - p[1] * p[1]).exp());
        let duv = g.dirichlet(&u.values, &v.values);
        let dvu = g.dirichlet(&v.values, &u.values);
        assert_eq!(duv, dvu);
        let mut ku = vec![0.0; g.len()];
        g.stiffness_apply(&u.values, &mut ku);
        let via_k: f64 = ku.iter().zip(&v.values).map(|(a, b)| a * b).sum();
        assert!((via_k - duv).abs() < 1e-12 * duv.abs().max(1.0));
    }

    #[test]
    fn gaussian_dirichlet_energy_converges() {
        // ∫|∇e^{-r²}|² over R² = π.
        let pi = std::f64::consts::PI;
        for g in [
            Grid::<f64>::cartesian_box(2, 161, 6.0).unwrap(),
            Grid::<f64>::polar(160, 128, 6.0).unwrap(),
        ] {
            let g = Arc::new(g);
            let u = Field::from_fn(g.clone(), gaussian);
            let e = g.dirichlet(&u.values, &u.values);
            assert!((e - pi).abs() / pi < 2e-3, "{:?}: {e}", g.kind());
            let m = g.integrate(&u.values.iter().map(|v| v * v).collect::<Vec<_>>());
            assert!((m - pi / 2.0).abs() / pi < 2e-3);
        }
    }

    #[test]
    fn quarter_turn_is_a_permutation_on_square_grids() {
        let g = Grid::<f64>::cartesian(2, 6, 0.3).unwrap();
        let rot = [0.0, -1.0, 1.0, 0.0];
        let map = g.node_map(&rot).unwrap();
        assert!(map.is_exact());
        let f: Vec<f64> = (0..g.len()).map(|k| g.position(k)[0]).collect();
        let h = map.apply(&f);
        // (f∘g)(x, y) = f(-y, x) = -y
        for k in 0..g.len() {
            assert!((h[k] + g.position(k)[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn polar_rotation_by_angular_step_is_exact() {
        let g = Grid::<f64>::polar(4, 12, 2.0).unwrap();
        let a = std::f64::consts::PI / 3.0;
        let rot = [a.cos(), -a.sin(), a.sin(), a.cos()];
        assert!(g.node_map(&rot).unwrap().is_exact());
        let b = 0.1_f64;
        let bad = [b.cos(), -b.sin(), b.sin(), b.cos()];
        assert!(matches!(g.node_map(&bad), Err(Error::SymmetryMismatch(_))));
    }

    #[test]
    fn oblique_rotation_interpolates_on_cartesian() {
        let g = Grid::<f64>::cartesian_box(2, 81, 5.0).unwrap();
        let a = std::f64::consts::PI / 3.0;
        let rot = [a.cos(), -a.sin(), a.sin(), a.cos()];
        let map = g.node_map(&rot).unwrap();
        assert!(!map.is_exact());
        let f = Field::from_fn(Arc::new(g), gaussian);
        let h = map.apply(&f.values);
        let err = h.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn cylindrical_measure() {
        let g = Grid::<f64>::cylindrical(10, 8, 2.0, 5, 1.0).unwrap();
        // rings cover r < nr·dr, midpoint cells cover nz·dz in z
        let dr = 2.0 / 10.5;
        let expected = std::f64::consts::PI * (10.0 * dr) * (10.0 * dr) * 2.5;
        assert!((g.measure() - expected).abs() / expected < 1e-12);
    }
}
