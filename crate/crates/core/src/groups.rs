//! Symmetry actions: the cyclic group rotating the two complex coordinates in
//! opposite directions, the isometry linking consecutive components, their
//! point orbits, and projections of discretized states onto the symmetric
//! subspace.
//!
//! Points of `R^D`, `D >= 4`, are written `(z1, z2, y)` with
//! `z1 = x0 + i x1`, `z2 = x2 + i x3`.
//!
//! In analog mode (grids of dimension 1..=3) the cyclic action is the planar
//! rotation by `2πj/m` in the `(x0, x1)` plane and the linking isometry is the
//! rotation by `πn/ℓ` in the same plane. Both commute, and `ρ^ℓ` is the half
//! turn, which lies in the group because `m` is even. In dimension one every
//! element acts as the identity.

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid, NodeMap};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Provenance of an isometry matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsometryTag {
    Theta { m: usize, j: i64 },
    Rho { ell: usize, n: i64 },
    AnalogRot { angle: f64 },
    Composed,
}

/// Orthogonal `D × D` matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry<T: Real> {
    dim: usize,
    matrix: Vec<T>,
    pub tag: IsometryTag,
}

impl<T: Real> Isometry<T> {
    pub fn identity(dim: usize) -> Self {
        let mut matrix = vec![T::zero(); dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = T::one();
        }
        Self { dim, matrix, tag: IsometryTag::Composed }
    }

    pub fn from_matrix(dim: usize, matrix: Vec<T>, tag: IsometryTag) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::Dimension(format!("expected {} entries, got {}", dim * dim, matrix.len())));
        }
        Ok(Self { dim, matrix, tag })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[T] {
        &self.matrix
    }

    pub fn entry(&self, r: usize, c: usize) -> T {
        self.matrix[r * self.dim + c]
    }

    /// Matrix product `self · other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch in compose");
        let d = self.dim;
        let mut m = vec![T::zero(); d * d];
        for r in 0..d {
            for c in 0..d {
                let mut acc = T::zero();
                for k in 0..d {
                    acc += self.matrix[r * d + k] * other.matrix[k * d + c];
                }
                m[r * d + c] = acc;
            }
        }
        Self { dim: d, matrix: m, tag: IsometryTag::Composed }
    }

    pub fn transpose(&self) -> Self {
        let d = self.dim;
        let mut m = vec![T::zero(); d * d];
        for r in 0..d {
            for c in 0..d {
                m[c * d + r] = self.matrix[r * d + c];
            }
        }
        Self { dim: d, matrix: m, tag: IsometryTag::Composed }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::identity(self.dim);
        for _ in 0..k {
            acc = acc.compose(self);
        }
        acc
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let d = self.dim;
        (0..d)
            .map(|r| (0..d).fold(T::zero(), |acc, c| acc + self.matrix[r * d + c] * x[c]))
            .collect()
    }

    /// Largest entry of `|MᵀM - I|`.
    pub fn orthogonality_defect(&self) -> T {
        let mtm = self.transpose().compose(self);
        max_identity_defect(&mtm)
    }

    /// Determinant by Gaussian elimination with partial pivoting.
    pub fn det(&self) -> T {
        let d = self.dim;
        let mut a = self.matrix.clone();
        let mut det = T::one();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| a[i * d + col].abs().partial_cmp(&a[j * d + col].abs()).unwrap())
                .unwrap();
            if a[piv * d + col] == T::zero() {
                return T::zero();
            }
            if piv != col {
                for c in 0..d {
                    a.swap(piv * d + c, col * d + c);
                }
                det = -det;
            }
            let p = a[col * d + col];
            det *= p;
            for r in col + 1..d {
                let f = a[r * d + col] / p;
                for c in col..d {
                    let v = a[col * d + c];
                    a[r * d + c] -= f * v;
                }
            }
        }
        det
    }

    /// Largest entry of `|self - other|`.
    pub fn max_diff(&self, other: &Self) -> T {
        self.matrix
            .iter()
            .zip(&other.matrix)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

/// Largest entry of `|M - I|`.
pub fn max_identity_defect<T: Real>(m: &Isometry<T>) -> T {
    m.max_diff(&Isometry::identity(m.dim()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum GroupMode {
    /// Ambient `R^N`, `N >= 4`; `orthogonal_factor` adds `O(N-4)` acting on
    /// the `y` block, realised by restricting to fields independent of `y`.
    Paper { n_dim: usize, orthogonal_factor: bool },
    /// Planar stand-in on grids of dimension `dim` in `1..=3`.
    Analog { dim: usize },
}

/// Cyclic order `m`, component count `ℓ`, and geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub m: usize,
    pub ell: usize,
    pub mode: GroupMode,
}

impl GroupSpec {
    pub fn new(m: usize, ell: usize, mode: GroupMode) -> Result<Self> {
        check_m(m)?;
        if ell < 2 {
            return Err(Error::Construction(format!("need at least two components, got ell={ell}")));
        }
        match mode {
            GroupMode::Paper { n_dim, orthogonal_factor } => {
                if n_dim < 4 {
                    return Err(Error::Dimension(format!("paper mode needs N >= 4, got {n_dim}")));
                }
                if orthogonal_factor && n_dim == 5 {
                    return Err(Error::Construction("O(N-4) factor requires N = 4 or N >= 6".into()));
                }
            }
            GroupMode::Analog { dim } => {
                if !(1..=3).contains(&dim) {
                    return Err(Error::Dimension(format!("analog mode needs 1 <= d <= 3, got {dim}")));
                }
            }
        }
        Ok(Self { m, ell, mode })
    }

    pub fn paper(m: usize, ell: usize, n_dim: usize) -> Result<Self> {
        Self::new(m, ell, GroupMode::Paper { n_dim, orthogonal_factor: false })
    }

    pub fn analog(m: usize, ell: usize, dim: usize) -> Result<Self> {
        Self::new(m, ell, GroupMode::Analog { dim })
    }

    /// Ambient dimension of the isometries.
    pub fn dim(&self) -> usize {
        match self.mode {
            GroupMode::Paper { n_dim, .. } => n_dim,
            GroupMode::Analog { dim } => dim,
        }
    }

    pub fn theta<T: Real>(&self, j: i64) -> Result<Isometry<T>> {
        match self.mode {
            GroupMode::Paper { n_dim, .. } => theta_action(self.m, j, n_dim),
            GroupMode::Analog { dim } => {
                let angle = 2.0 * std::f64::consts::PI * (j.rem_euclid(self.m as i64) as f64) / self.m as f64;
                let mut iso = analog_rotation(dim, angle);
                iso.tag = IsometryTag::Theta { m: self.m, j };
                Ok(iso)
            }
        }
    }

    pub fn rho<T: Real>(&self, n: i64) -> Result<Isometry<T>> {
        match self.mode {
            GroupMode::Paper { n_dim, .. } => rho_action(self.ell, n, n_dim),
            GroupMode::Analog { dim } => {
                let mut iso = analog_rotation(dim, std::f64::consts::PI * n as f64 / self.ell as f64);
                iso.tag = IsometryTag::Rho { ell: self.ell, n };
                Ok(iso)
            }
        }
    }
}

fn check_m(m: usize) -> Result<()> {
    if m == 0 || m % 2 != 0 {
        return Err(Error::Construction(format!("m must be a positive even integer, got {m}")));
    }
    Ok(())
}

/// Rotation by `angle` in the `(x0, x1)` plane of `R^dim`; identity when
/// `dim == 1`.
pub fn analog_rotation<T: Real>(dim: usize, angle: f64) -> Isometry<T> {
    let mut iso = Isometry::identity(dim);
    if dim >= 2 {
        let (s, c) = angle.sin_cos();
        iso.matrix[0] = T::lit(c);
        iso.matrix[1] = T::lit(-s);
        iso.matrix[dim] = T::lit(s);
        iso.matrix[dim + 1] = T::lit(c);
    }
    iso.tag = IsometryTag::AnalogRot { angle };
    iso
}

/// `ϑ_m^j`: rotate `z1` by `+2πj/m` and `z2` by `-2πj/m`, identity on `y`.
pub fn theta_action<T: Real>(m: usize, j: i64, dim: usize) -> Result<Isometry<T>> {
    check_m(m)?;
    if dim < 4 {
        return Err(Error::Dimension(format!("theta action needs D >= 4, got {dim}")));
    }
    let jj = j.rem_euclid(m as i64);
    let angle = 2.0 * std::f64::consts::PI * jj as f64 / m as f64;
    let (s, c) = (T::lit(angle.sin()), T::lit(angle.cos()));
    let mut iso = Isometry::identity(dim);
    let d = dim;
    iso.matrix[0] = c;
    iso.matrix[1] = -s;
    iso.matrix[d] = s;
    iso.matrix[d + 1] = c;
    iso.matrix[2 * d + 2] = c;
    iso.matrix[2 * d + 3] = s;
    iso.matrix[3 * d + 2] = -s;
    iso.matrix[3 * d + 3] = c;
    iso.tag = IsometryTag::Theta { m, j };
    Ok(iso)
}

/// `ρ_ℓ^n x = cos(πn/ℓ) z + sin(πn/ℓ) τz` on the `C²` block with
/// `τ(z1, z2) = (-conj z2, conj z1)`, identity on `y`. Negative `n` gives
/// the inverse powers.
pub fn rho_action<T: Real>(ell: usize, n: i64, dim: usize) -> Result<Isometry<T>> {
    if ell < 2 {
        return Err(Error::Construction(format!("need ell >= 2, got {ell}")));
    }
    if dim < 4 {
        return Err(Error::Dimension(format!("rho action needs D >= 4, got {dim}")));
    }
    let angle = std::f64::consts::PI * n as f64 / ell as f64;
    let (s, c) = (T::lit(angle.sin()), T::lit(angle.cos()));
    // τ(x0, x1, x2, x3) = (-x2, x3, x0, -x1)
    let tau = [
        [0.0, 0.0, -1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ];
    let mut iso = Isometry::identity(dim);
    for r in 0..4 {
        for col in 0..4 {
            let id = if r == col { T::one() } else { T::zero() };
            iso.matrix[r * dim + col] = c * id + s * T::lit(tau[r][col]);
        }
    }
    iso.tag = IsometryTag::Rho { ell, n };
    Ok(iso)
}

/// Labelled orbit `{ρ^{-i} ϑ^j ξ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSet<T: Real> {
    pub points: Vec<Vec<T>>,
    /// `(i, j)` = (component index, group index) per point.
    pub labels: Vec<(usize, usize)>,
}

impl<T: Real> OrbitSet<T> {
    fn dist(a: &[T], b: &[T]) -> T {
        a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y)).sqrt()
    }

    fn min_over(&self, keep: impl Fn((usize, usize), (usize, usize)) -> bool) -> Option<T> {
        let mut best: Option<T> = None;
        for a in 0..self.points.len() {
            for b in a + 1..self.points.len() {
                if keep(self.labels[a], self.labels[b]) {
                    let d = Self::dist(&self.points[a], &self.points[b]);
                    best = Some(best.map_or(d, |x| x.min(d)));
                }
            }
        }
        best
    }

    /// Smallest distance between two points carrying the same component.
    pub fn min_intra_distance(&self) -> Option<T> {
        self.min_over(|a, b| a.0 == b.0)
    }

    /// Smallest distance between points of different components.
    pub fn min_inter_distance(&self) -> Option<T> {
        self.min_over(|a, b| a.0 != b.0)
    }

    pub fn min_distance(&self) -> Option<T> {
        self.min_over(|_, _| true)
    }

    /// Points of component `i`.
    pub fn component(&self, i: usize) -> Vec<Vec<T>> {
        self.points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| l.0 == i)
            .map(|(p, _)| p.clone())
            .collect()
    }
}

pub fn orbit_points<T: Real>(base: &[T], spec: &GroupSpec) -> Result<OrbitSet<T>> {
    if base.len() != spec.dim() {
        return Err(Error::Dimension(format!("base has {} coordinates, group acts on R^{}", base.len(), spec.dim())));
    }
    if base.iter().all(|&x| x == T::zero()) {
        return Err(Error::DegenerateOrbit);
    }
    let mut points = Vec::with_capacity(spec.ell * spec.m);
    let mut labels = Vec::with_capacity(spec.ell * spec.m);
    for i in 0..spec.ell {
        let rho = spec.rho::<T>(-(i as i64))?;
        for j in 0..spec.m {
            let g = rho.compose(&spec.theta::<T>(j as i64)?);
            points.push(g.apply(base));
            labels.push((i, j));
        }
    }
    Ok(OrbitSet { points, labels })
}

/// Closed-form orbit constants and the two hypotheses built on them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationConstants {
    /// `2 sin(π/m)`.
    pub intra: f64,
    /// `2 sin(π/2ℓ)`.
    pub inter: f64,
    /// `m > 2ℓ`.
    pub existence_ok: bool,
    /// `2 sin(π/m) < sin(π/2ℓ)`.
    pub strong_ok: bool,
}

pub fn separation_constants(m: usize, ell: usize) -> Result<SeparationConstants> {
    check_m(m)?;
    if ell == 0 {
        return Err(Error::Construction("ell must be positive".into()));
    }
    let pi = std::f64::consts::PI;
    let intra = 2.0 * (pi / m as f64).sin();
    let inter = 2.0 * (pi / (2.0 * ell as f64)).sin();
    Ok(SeparationConstants { intra, inter, existence_ok: m > 2 * ell, strong_ok: intra < inter / 2.0 })
}

/// Precomputed node maps of the group elements on one grid.
#[derive(Debug, Clone)]
pub struct SymmetryOps<T: Real> {
    pub spec: GroupSpec,
    /// `f ↦ f∘ϑ^j`, `j = 0..m`.
    theta: Vec<NodeMap<T>>,
    /// `f ↦ f∘ρ^n`, `n = -(ℓ-1)..=(ℓ-1)`, stored at index `n + ℓ - 1`.
    rho: Vec<NodeMap<T>>,
}

impl<T: Real> SymmetryOps<T> {
    pub fn new(grid: &Grid<T>, spec: GroupSpec) -> Result<Self> {
        match spec.mode {
            GroupMode::Analog { dim } if dim == grid.dim() => {}
            GroupMode::Analog { dim } => {
                return Err(Error::SymmetryMismatch(format!(
                    "group acts on R^{dim} but the grid is {}-dimensional",
                    grid.dim()
                )))
            }
            GroupMode::Paper { .. } => {
                return Err(Error::SymmetryMismatch("grids carry analog-mode groups only".into()))
            }
        }
        let theta = (0..spec.m)
            .map(|j| grid.node_map(spec.theta::<T>(j as i64)?.matrix()))
            .collect::<Result<Vec<_>>>()?;
        let l = spec.ell as i64;
        let rho = (-(l - 1)..l)
            .map(|n| grid.node_map(spec.rho::<T>(n)?.matrix()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec, theta, rho })
    }

    /// Whether every map is an exact node permutation.
    pub fn is_exact(&self) -> bool {
        self.theta.iter().chain(&self.rho).all(NodeMap::is_exact)
    }

    pub fn compose_theta(&self, f: &[T], j: usize) -> Vec<T> {
        self.theta[j % self.spec.m].apply(f)
    }

    /// `f∘ρ^n` for `|n| < ℓ`.
    pub fn compose_rho(&self, f: &[T], n: i64) -> Vec<T> {
        let l = self.spec.ell as i64;
        assert!(n.abs() < l, "rho power out of range");
        self.rho[(n + l - 1) as usize].apply(f)
    }

    /// Group average `(1/m) Σ_j f∘ϑ^j`.
    pub fn symmetrize(&self, f: &[T]) -> Vec<T> {
        let mut acc = vec![T::zero(); f.len()];
        for map in &self.theta {
            for (a, v) in acc.iter_mut().zip(map.apply(f)) {
                *a += v;
            }
        }
        let inv = T::one() / T::from_usize_lossy(self.spec.m);
        acc.iter_mut().for_each(|a| *a *= inv);
        acc
    }

    /// Projection onto `u_{i+1} = u_i∘ρ`, `u_i` invariant: the first
    /// component becomes the symmetrized cyclic average
    /// `(1/ℓ) Σ_i u_i∘ρ^{-(i-1)}` and the rest are generated from it.
    pub fn pinwheel_project(&self, comps: &[Vec<T>]) -> Vec<Vec<T>> {
        let l = self.spec.ell;
        assert_eq!(comps.len(), l, "component count must equal ell");
        let n = comps[0].len();
        let mut avg = vec![T::zero(); n];
        for (i, u) in comps.iter().enumerate() {
            let back = if i == 0 { u.clone() } else { self.compose_rho(u, -(i as i64)) };
            for (a, v) in avg.iter_mut().zip(back) {
                *a += v;
            }
        }
        let inv = T::one() / T::from_usize_lossy(l);
        avg.iter_mut().for_each(|a| *a *= inv);
        let first = self.symmetrize(&avg);
        (0..l)
            .map(|i| if i == 0 { first.clone() } else { self.compose_rho(&first, i as i64) })
            .collect()
    }

    /// Relative defect of the pinwheel conditions: the largest of
    /// `max|u_{i+1} - u_i∘ρ|`, `max|u_1 - u_ℓ∘ρ|` and `max|u_i∘ϑ - u_i|`,
    /// divided by the largest amplitude.
    pub fn pinwheel_residual(&self, comps: &[Vec<T>]) -> T {
        let l = comps.len();
        let scale = comps
            .iter()
            .flat_map(|u| u.iter())
            .fold(T::zero(), |m, &v| m.max(v.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        let mut worst = T::zero();
        let maxdiff = |a: &[T], b: &[T]| a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()));
        for i in 0..l {
            let next = &comps[(i + 1) % l];
            worst = worst.max(maxdiff(next, &self.compose_rho(&comps[i], 1)));
            worst = worst.max(maxdiff(&comps[i], &self.compose_theta(&comps[i], 1)));
        }
        worst / scale
    }
}

/// Group average of a single field.
pub fn symmetrize<T: Real>(field: &Field<T>, spec: &GroupSpec) -> Result<Field<T>> {
    let ops = SymmetryOps::new(&field.grid, *spec)?;
    let mut out = field.with_values(ops.symmetrize(&field.values));
    out.meta.symmetric = true;
    Ok(out)
}
