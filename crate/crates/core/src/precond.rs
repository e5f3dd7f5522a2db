//! Fast solves with `K + σW`, the discrete `-Δ + σ` in weak form.
//!
//! Both grid families are separable: Cartesian stiffness is a sum of 1D
//! Dirichlet second differences (diagonalised by the sine transform), and the
//! polar finite-volume operator is circulant in `θ` (diagonalised by the DFT)
//! with a sine-transformable `z` axis, leaving tridiagonal systems in `r`.
//! Transforms are direct sums; grid sizes here keep them cheap.

use crate::error::{Error, Result};
use crate::mesh::{Grid, GridKind};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct FastSolver<T: Real> {
    kind: GridKind,
    shape: Vec<usize>,
    spacing: Vec<T>,
    weights: Vec<T>,
    /// Shift per Cartesian node (constant) or per ring (polar).
    sigma: Vec<T>,
}

/// Sine basis `sin(π (k+1)(p+1) / (n+1))` and eigenvalues `2 - 2cos(π (p+1)/(n+1))`.
fn sine_table<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let np1 = T::from_usize_lossy(n + 1);
    let mut s = vec![T::zero(); n * n];
    for p in 0..n {
        for k in 0..n {
            s[p * n + k] = (T::pi() * T::from_usize_lossy((k + 1) * (p + 1)) / np1).sin();
        }
    }
    let eig = (0..n).map(|p| T::lit(2.0) - T::lit(2.0) * (T::pi() * T::from_usize_lossy(p + 1) / np1).cos()).collect();
    (s, eig)
}

/// In-place sine transform along the axis with `len` points and `stride`.
fn sine_along<T: Real>(data: &mut [T], len: usize, stride: usize, table: &[T], scale: T) {
    let total = data.len();
    let mut buf = vec![T::zero(); len];
    let block = len * stride;
    for outer in (0..total).step_by(block) {
        for inner in 0..stride {
            let base = outer + inner;
            for (p, b) in buf.iter_mut().enumerate() {
                let row = &table[p * len..(p + 1) * len];
                let mut acc = T::zero();
                for (k, &s) in row.iter().enumerate() {
                    acc += s * data[base + k * stride];
                }
                *b = acc * scale;
            }
            for (k, &b) in buf.iter().enumerate() {
                data[base + k * stride] = b;
            }
        }
    }
}

fn thomas<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &mut [T], work: &mut [T]) {
    let n = diag.len();
    let mut b = diag[0];
    rhs[0] /= b;
    for i in 1..n {
        work[i] = upper[i - 1] / b;
        b = diag[i] - lower[i] * work[i];
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        let w = work[i + 1];
        rhs[i] -= w * rhs[i + 1];
    }
}

impl<T: Real> FastSolver<T> {
    /// `shift` holds nodal values; polar grids use the value on each ring
    /// (exact for radial shifts), other grids the minimum.
    pub fn new(grid: &Grid<T>, shift: &[T]) -> Result<Self> {
        if shift.len() != grid.len() {
            return Err(Error::Dimension("shift length differs from the grid".into()));
        }
        let shape = grid.shape().to_vec();
        let sigma = match grid.kind() {
            GridKind::Polar => (0..shape[0]).map(|i| shift[i * shape[1]]).collect(),
            _ => vec![shift.iter().fold(T::infinity(), |a, &b| a.min(b))],
        };
        if sigma.iter().any(|&s| s < T::zero()) {
            return Err(Error::Parameter("fast solver needs a non-negative shift".into()));
        }
        Ok(Self { kind: grid.kind(), shape, spacing: grid.spacing().to_vec(), weights: grid.weights().to_vec(), sigma })
    }

    /// Solve `(K + σW) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        match self.kind {
            GridKind::Cartesian => self.solve_cartesian(b),
            GridKind::Polar | GridKind::Cylindrical => self.solve_polar(b),
        }
    }

    fn solve_cartesian(&self, b: &[T]) -> Vec<T> {
        let dim = self.shape.len();
        let cell = self.weights[0];
        let mut x = b.to_vec();
        let mut strides = vec![1usize; dim];
        for ax in (0..dim - 1).rev() {
            strides[ax] = strides[ax + 1] * self.shape[ax + 1];
        }
        let tables: Vec<(Vec<T>, Vec<T>)> = self.shape.iter().map(|&n| sine_table(n)).collect();
        for ax in 0..dim {
            sine_along(&mut x, self.shape[ax], strides[ax], &tables[ax].0, T::one());
        }
        let coef: Vec<T> = self.spacing.iter().map(|&h| cell / (h * h)).collect();
        for (k, v) in x.iter_mut().enumerate() {
            let mut lam = cell * self.sigma[0];
            for ax in 0..dim {
                let p = (k / strides[ax]) % self.shape[ax];
                lam += coef[ax] * tables[ax].1[p];
            }
            *v /= lam;
        }
        for ax in 0..dim {
            let scale = T::lit(2.0) / T::from_usize_lossy(self.shape[ax] + 1);
            sine_along(&mut x, self.shape[ax], strides[ax], &tables[ax].0, scale);
        }
        x
    }

    fn solve_polar(&self, b: &[T]) -> Vec<T> {
        let (nr, nt) = (self.shape[0], self.shape[1]);
        let nz = if self.shape.len() == 3 { self.shape[2] } else { 1 };
        let (dr, dth) = (self.spacing[0], self.spacing[1]);
        let cyl = self.shape.len() == 3;
        let dz = if cyl { self.spacing[2] } else { T::one() };
        let half = T::lit(0.5);
        let idx = |i: usize, j: usize, k: usize| (i * nt + j) * nz + k;

        let mut re = b.to_vec();
        let (zt, zeig) = if cyl { sine_table::<T>(nz) } else { (vec![T::one()], vec![T::zero()]) };
        if cyl {
            sine_along(&mut re, nz, 1, &zt, T::one());
        }
        // DFT along θ, stored as (re, im).
        let tw: Vec<(T, T)> = (0..nt)
            .map(|q| {
                let a = T::lit(2.0) * T::pi() * T::from_usize_lossy(q) / T::from_usize_lossy(nt);
                (a.cos(), a.sin())
            })
            .collect();
        let mut fr = vec![T::zero(); re.len()];
        let mut fi = vec![T::zero(); re.len()];
        let mut line = vec![T::zero(); nt];
        for i in 0..nr {
            for k in 0..nz {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = re[idx(i, j, k)];
                }
                for q in 0..nt {
                    let (mut ar, mut ai) = (T::zero(), T::zero());
                    for (j, &l) in line.iter().enumerate() {
                        let (c, s) = tw[(q * j) % nt];
                        ar += l * c;
                        ai -= l * s;
                    }
                    fr[idx(i, q, k)] = ar;
                    fi[idx(i, q, k)] = ai;
                }
            }
        }
        let radii: Vec<T> = (0..nr).map(|i| (T::from_usize_lossy(i) + half) * dr).collect();
        let w: Vec<T> = radii.iter().map(|&r| r * dr * dth * dz).collect();
        let c_rad: Vec<T> = (0..nr).map(|i| T::from_usize_lossy(i + 1) * dth * dz).collect();
        let c_ang: Vec<T> = radii.iter().map(|&r| dr * dz / (r * dth)).collect();
        let (mut lower, mut diag, mut upper) = (vec![T::zero(); nr], vec![T::zero(); nr], vec![T::zero(); nr]);
        let (mut rhs_r, mut rhs_i, mut work) = (vec![T::zero(); nr], vec![T::zero(); nr], vec![T::zero(); nr]);
        for q in 0..nt {
            let lam = T::lit(2.0) - T::lit(2.0) * tw[q].0;
            for k in 0..nz {
                let mu = zeig[k] / (dz * dz);
                for i in 0..nr {
                    let sig = self.sigma.get(i).copied().unwrap_or(self.sigma[0]);
                    diag[i] = c_rad[i] + c_ang[i] * lam + w[i] * (mu + sig);
                    if i > 0 {
                        diag[i] += c_rad[i - 1];
                        lower[i] = -c_rad[i - 1];
                    }
                    upper[i] = -c_rad[i];
                    rhs_r[i] = fr[idx(i, q, k)];
                    rhs_i[i] = fi[idx(i, q, k)];
                }
                thomas(&lower, &diag, &upper, &mut rhs_r, &mut work);
                thomas(&lower, &diag, &upper, &mut rhs_i, &mut work);
                for i in 0..nr {
                    fr[idx(i, q, k)] = rhs_r[i];
                    fi[idx(i, q, k)] = rhs_i[i];
                }
            }
        }
        let inv_n = T::one() / T::from_usize_lossy(nt);
        for i in 0..nr {
            for k in 0..nz {
                for j in 0..nt {
                    let mut acc = T::zero();
                    for q in 0..nt {
                        let (c, s) = tw[(q * j) % nt];
                        acc += fr[idx(i, q, k)] * c - fi[idx(i, q, k)] * s;
                    }
                    re[idx(i, j, k)] = acc * inv_n;
                }
            }
        }
        if cyl {
            sine_along(&mut re, nz, 1, &zt, T::lit(2.0) / T::from_usize_lossy(nz + 1));
        }
        re
    }
}

/// `(K + WV)` applied to `x`.
pub fn apply_operator<T: Real>(grid: &Grid<T>, v: &[T], x: &[T], out: &mut [T]) {
    grid.stiffness_apply(x, out);
    for ((o, &w), (&vv, &xx)) in out.iter_mut().zip(grid.weights()).zip(v.iter().zip(x)) {
        *o += w * vv * xx;
    }
}

/// Preconditioned conjugate gradients for `(K + WV) x = b`; returns the
/// solution and the iteration count.
pub fn pcg<T: Real>(grid: &Grid<T>, v: &[T], pre: &FastSolver<T>, b: &[T], rtol: T, max_iter: usize) -> Result<(Vec<T>, usize)> {
    let dot = |a: &[T], c: &[T]| a.iter().zip(c).fold(T::zero(), |s, (&x, &y)| s + x * y);
    let bnorm = dot(b, b).sqrt();
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); b.len()], 0));
    }
    let mut x = pre.solve(b);
    let mut ax = vec![T::zero(); b.len()];
    apply_operator(grid, v, &x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&a, &c)| a - c).collect();
    if dot(&r, &r).sqrt() <= rtol * bnorm {
        return Ok((x, 1));
    }
    let mut z = pre.solve(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        apply_operator(grid, v, &p, &mut ax);
        let alpha = rz / dot(&p, &ax);
        for k in 0..x.len() {
            x[k] += alpha * p[k];
            r[k] -= alpha * ax[k];
        }
        if dot(&r, &r).sqrt() <= rtol * bnorm {
            return Ok((x, it + 1));
        }
        z = pre.solve(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Solver(format!("PCG did not reach relative residual {rtol} in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(grid: &Grid<f64>, shift: &[f64], tol: f64) {
        let n = grid.len();
        let b: Vec<f64> = (0..n).map(|k| ((k * 7919) % 101) as f64 / 101.0 - 0.4).collect();
        let x = FastSolver::new(grid, shift).unwrap().solve(&b);
        let mut ax = vec![0.0; n];
        apply_operator(grid, shift, &x, &mut ax);
        let err = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < tol * scale, "{:?}: {err:e}", grid.kind());
    }

    #[test]
    fn exact_on_cartesian_grids() {
        for dim in 1..=3 {
            let g = Grid::<f64>::cartesian_box(dim, 9, 3.0).unwrap();
            check(&g, &vec![1.3; g.len()], 1e-12);
        }
        let g = Grid::<f64>::cartesian_aniso(&[5, 7], &[0.3, 0.5]).unwrap();
        check(&g, &vec![0.0; g.len()], 1e-12);
    }

    #[test]
    fn exact_on_polar_grids_with_radial_shift() {
        let g = Grid::<f64>::polar(12, 16, 5.0).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|k| 1.0 + (-g.radius_of(k)).exp()).collect();
        check(&g, &v, 1e-11);
        let c = Grid::<f64>::cylindrical(6, 8, 4.0, 5, 2.0).unwrap();
        check(&c, &vec![0.7; c.len()], 1e-11);
    }

    #[test]
    fn pcg_handles_non_radial_shift() {
        let g = Grid::<f64>::cartesian_box(2, 21, 5.0).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|k| 1.0 + 0.5 * (g.position(k)[0]).cos().powi(2)).collect();
        let pre = FastSolver::new(&g, &v).unwrap();
        let b: Vec<f64> = (0..g.len()).map(|k| (k % 13) as f64).collect();
        let (x, it) = pcg(&g, &v, &pre, &b, 1e-12, 100).unwrap();
        let mut ax = vec![0.0; g.len()];
        apply_operator(&g, &v, &x, &mut ax);
        let err = ax.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err:e}");
        assert!(it < 30, "{it}");
    }
}
