//! Discrete system functional, its gradient, the Nehari projection and PDE
//! residuals for the competitive system
//! `-Δu_i + V u_i = |u_i|^{2p-2}u_i + β Σ_{j≠i} |u_j|^p |u_i|^{p-2}u_i`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid};
use crate::scalar::{pairwise_sum, Real};

/// Radial perturbation added to the constant `V_inf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    None,
    /// `A e^{-κ √V_inf |x|}`.
    ExpTail { amplitude: f64, kappa: f64 },
    /// Piecewise linear in `|x|`, zero past the last radius.
    RadialTable { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub v_inf: f64,
    #[serde(default)]
    pub perturbation: Perturbation,
}

impl PotentialSpec {
    pub fn constant(v_inf: f64) -> Self {
        Self { v_inf, perturbation: Perturbation::None }
    }

    pub fn eval(&self, r: f64) -> f64 {
        self.v_inf
            + match &self.perturbation {
                Perturbation::None => 0.0,
                Perturbation::ExpTail { amplitude, kappa } => amplitude * (-kappa * self.v_inf.sqrt() * r).exp(),
                Perturbation::RadialTable { radii, values } => table_lookup(radii, values, r),
            }
    }

    /// Whether the tail rate lies in `(2 sin(π/m), 2)`; `None` unless the
    /// perturbation is an exponential tail.
    pub fn kappa_in_range(&self, m: usize) -> Option<bool> {
        match self.perturbation {
            Perturbation::ExpTail { kappa, .. } => {
                let lo = 2.0 * (std::f64::consts::PI / m as f64).sin();
                Some(kappa > lo && kappa < 2.0)
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_inf > 0.0 && self.v_inf.is_finite()) {
            return Err(Error::Parameter(format!("V_inf must be positive, got {}", self.v_inf)));
        }
        if let Perturbation::RadialTable { radii, values } = &self.perturbation {
            if radii.len() != values.len() || radii.is_empty() {
                return Err(Error::Parameter("radial table needs equal, nonzero numbers of radii and values".into()));
            }
            if radii.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Parameter("radial table radii must increase strictly".into()));
            }
        }
        Ok(())
    }

    /// Nodal samples of `V`; fails if `inf V ≤ 0` on the grid.
    pub fn sample<T: Real>(&self, grid: &Grid<T>) -> Result<Vec<T>> {
        self.validate()?;
        let v: Vec<T> = (0..grid.len()).map(|k| T::lit(self.eval(grid.radius_of(k).as_f64()))).collect();
        let inf = v.iter().fold(T::infinity(), |a, &b| a.min(b));
        if !(inf > T::zero()) {
            return Err(Error::Parameter(format!("potential is not positive on the grid (min {inf})")));
        }
        Ok(v)
    }
}

fn table_lookup(radii: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= radii[0] {
        return values[0];
    }
    match radii.iter().position(|&x| x >= r) {
        None => 0.0,
        Some(i) => {
            let t = (r - radii[i - 1]) / (radii[i] - radii[i - 1]);
            values[i - 1] + t * (values[i] - values[i - 1])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub d: usize,
    pub ell: usize,
    pub m: usize,
    pub p: f64,
    pub beta: f64,
    pub potential: PotentialSpec,
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Parameter("dimension must be at least 1".into()));
        }
        if self.ell < 2 {
            return Err(Error::Parameter(format!("ell must be at least 2, got {}", self.ell)));
        }
        if self.m == 0 || self.m % 2 != 0 {
            return Err(Error::Parameter(format!("m must be even and positive, got {}", self.m)));
        }
        if !(self.p > 1.0) || (self.d >= 3 && self.p >= self.d as f64 / (self.d as f64 - 2.0)) {
            return Err(Error::Parameter(format!("p = {} outside the subcritical range for d = {}", self.p, self.d)));
        }
        if !(self.beta <= 0.0) {
            return Err(Error::Parameter(format!("beta must be non-positive, got {}", self.beta)));
        }
        self.potential.validate()
    }
}

/// `sign(u)|u|^e`, continuously extended by zero at `u = 0`.
#[inline]
pub fn signed_pow<T: Real>(u: T, e: T) -> T {
    if u == T::zero() {
        T::zero()
    } else {
        u.signum() * u.abs().powf(e)
    }
}

/// Grid-bound evaluator for the functional and its derivatives.
#[derive(Debug, Clone)]
pub struct EnergyModel<T: Real> {
    pub grid: Arc<Grid<T>>,
    pub v: Vec<T>,
    pub p: T,
    pub beta: T,
}

/// Pieces of the Nehari quotient.
#[derive(Debug, Clone, PartialEq)]
pub struct NehariParts<T> {
    /// `‖u_i‖²_V`.
    pub norms: Vec<T>,
    /// `|u_i|_{2p}^{2p}`.
    pub self_terms: Vec<T>,
    /// `∫|u_i|^p|u_j|^p` (symmetric, zero diagonal).
    pub cross: Vec<Vec<T>>,
}

impl<T: Real> NehariParts<T> {
    /// `|u_i|^{2p} + β Σ_{j≠i} ∫|u_i|^p|u_j|^p` per component.
    pub fn component_denominators(&self, beta: T) -> Vec<T> {
        (0..self.norms.len())
            .map(|i| self.self_terms[i] + beta * self.cross[i].iter().copied().sum::<T>())
            .collect()
    }
}

/// Per-component residuals with a flag for components too small to
/// normalize.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals<T> {
    pub values: Vec<T>,
    pub degenerate: Vec<bool>,
}

impl<T: Real> Residuals<T> {
    pub fn max(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &b| a.max(b))
    }
}

impl<T: Real> EnergyModel<T> {
    pub fn new(grid: Arc<Grid<T>>, params: &Params) -> Result<Self> {
        params.validate()?;
        let v = params.potential.sample(&grid)?;
        Ok(Self { grid, v, p: T::lit(params.p), beta: T::lit(params.beta) })
    }

    /// Same grid and potential with a different coupling.
    pub fn with_beta(&self, beta: T) -> Self {
        Self { beta, ..self.clone() }
    }

    pub fn inner_v(&self, u: &[T], v: &[T]) -> T {
        let w = self.grid.weights();
        let pot: Vec<T> = (0..u.len()).map(|k| w[k] * self.v[k] * (u[k] * v[k])).collect();
        self.grid.dirichlet(u, v) + pairwise_sum(&pot)
    }

    pub fn norm_sq(&self, u: &[T]) -> T {
        self.inner_v(u, u)
    }

    fn weighted_sum(&self, f: impl Fn(usize) -> T) -> T {
        let w = self.grid.weights();
        let t: Vec<T> = (0..w.len()).map(|k| w[k] * f(k)).collect();
        pairwise_sum(&t)
    }

    pub fn power_norm(&self, u: &[T]) -> T {
        let q = self.p + self.p;
        self.weighted_sum(|k| u[k].abs().powf(q))
    }

    pub fn nehari_parts(&self, comps: &[&[T]]) -> NehariParts<T> {
        let n = comps.len();
        let pw: Vec<Vec<T>> = comps.iter().map(|u| u.iter().map(|x| x.abs().powf(self.p)).collect()).collect();
        let norms = comps.par_iter().map(|u| self.norm_sq(u)).collect();
        let self_terms = pw.iter().map(|a| self.weighted_sum(|k| a[k] * a[k])).collect();
        let mut cross = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let c = self.weighted_sum(|k| pw[i][k] * pw[j][k]);
                cross[i][j] = c;
                cross[j][i] = c;
            }
        }
        NehariParts { norms, self_terms, cross }
    }

    pub fn energy(&self, comps: &[&[T]]) -> T {
        let parts = self.nehari_parts(comps);
        let two_p = self.p + self.p;
        let half = T::lit(0.5);
        let kin: T = parts.norms.iter().copied().sum();
        let pot: T = parts.self_terms.iter().copied().sum();
        let cross: T = parts.cross.iter().flatten().copied().sum();
        half * kin - pot / two_p - self.beta * cross / two_p
    }

    /// L² representer of the partial derivatives, one vector per component.
    pub fn gradient(&self, comps: &[&[T]]) -> Vec<Vec<T>> {
        let w = self.grid.weights();
        let p = self.p;
        let pw: Vec<Vec<T>> = comps.iter().map(|u| u.iter().map(|x| x.abs().powf(p)).collect()).collect();
        (0..comps.len())
            .into_par_iter()
            .map(|i| {
                let u = comps[i];
                let mut g = vec![T::zero(); u.len()];
                self.grid.stiffness_apply(u, &mut g);
                let e_self = p + p - T::one();
                let e_cross = p - T::one();
                for k in 0..u.len() {
                    let mut s = T::zero();
                    for (j, a) in pw.iter().enumerate() {
                        if j != i {
                            s += a[k];
                        }
                    }
                    g[k] = g[k] / w[k] + self.v[k] * u[k] - signed_pow(u[k], e_self) - self.beta * s * signed_pow(u[k], e_cross);
                }
                g
            })
            .collect()
    }

    /// Unique `s > 0` with `s·u` on the Nehari set, with the feasibility
    /// check applied per component.
    pub fn nehari_scalar(&self, comps: &[&[T]]) -> Result<T> {
        let parts = self.nehari_parts(comps);
        self.nehari_scalar_from(&parts)
    }

    fn nehari_scalar_from(&self, parts: &NehariParts<T>) -> Result<T> {
        for (i, den) in parts.component_denominators(self.beta).into_iter().enumerate() {
            // Cancellation down to roundoff counts as infeasible.
            if !(den > T::lit(1e-10) * parts.self_terms[i]) {
                return Err(Error::InfeasibleProjection { component: i, value: den.as_f64() });
            }
        }
        let (num, den) = self.quotient(parts);
        Ok((num / den).powf(T::one() / (self.p + self.p - T::lit(2.0))))
    }

    fn quotient(&self, parts: &NehariParts<T>) -> (T, T) {
        let num: T = parts.norms.iter().copied().sum();
        let den = parts.self_terms.iter().copied().sum::<T>() + self.beta * parts.cross.iter().flatten().copied().sum::<T>();
        (num, den)
    }

    /// Closed-form energy of the Nehari projection,
    /// `((p-1)/(2p)) (N / D^{1/p})^{p/(p-1)}`.
    pub fn nehari_energy(&self, comps: &[&[T]]) -> Result<T> {
        let parts = self.nehari_parts(comps);
        self.nehari_scalar_from(&parts)?;
        let (num, den) = self.quotient(&parts);
        let p = self.p;
        Ok((p - T::one()) / (p + p) * (num / den.powf(T::one() / p)).powf(p / (p - T::one())))
    }

    /// `‖∇_i J‖_{L²} / ‖u_i‖_V` per component; zero components report 0 and
    /// are flagged.
    pub fn residual(&self, comps: &[&[T]]) -> Residuals<T> {
        let g = self.gradient(comps);
        let mut values = Vec::with_capacity(comps.len());
        let mut degenerate = Vec::with_capacity(comps.len());
        for (u, gi) in comps.iter().zip(&g) {
            let nu = self.norm_sq(u).sqrt();
            if nu > T::zero() {
                let sq: Vec<T> = gi.iter().map(|x| *x * *x).collect();
                values.push(self.grid.integrate(&sq).sqrt() / nu);
                degenerate.push(false);
            } else {
                values.push(T::zero());
                degenerate.push(true);
            }
        }
        Residuals { values, degenerate }
    }

    /// Components with `‖u_i‖_V > 1e-8 · max_j ‖u_j‖_V`.
    pub fn nontrivial(&self, comps: &[&[T]]) -> Vec<bool> {
        let n: Vec<T> = comps.iter().map(|u| self.norm_sq(u).sqrt()).collect();
        let mx = n.iter().fold(T::zero(), |a, &b| a.max(b));
        n.iter().map(|&x| x > T::lit(1e-8) * mx).collect()
    }

    /// `J(u) = ½‖u‖²_V - |u|_{2p}^{2p}/(2p)`.
    pub fn single_energy(&self, u: &[T]) -> T {
        T::lit(0.5) * self.norm_sq(u) - self.power_norm(u) / (self.p + self.p)
    }

    /// Nehari scalar and projected energy for the single equation.
    pub fn single_nehari(&self, u: &[T]) -> Result<(T, T)> {
        let num = self.norm_sq(u);
        let den = self.power_norm(u);
        if !(den > T::zero()) {
            return Err(Error::InfeasibleProjection { component: 0, value: den.as_f64() });
        }
        let p = self.p;
        let s = (num / den).powf(T::one() / (p + p - T::lit(2.0)));
        let e = (p - T::one()) / (p + p) * (num / den.powf(T::one() / p)).powf(p / (p - T::one()));
        Ok((s, e))
    }
}

/// ℓ components on a shared grid with their parameters.
#[derive(Debug, Clone)]
pub struct SystemState<T: Real> {
    pub components: Vec<Field<T>>,
    pub params: Params,
    pub pinwheel: bool,
}

impl<T: Real> SystemState<T> {
    pub fn new(components: Vec<Field<T>>, params: Params) -> Result<Self> {
        params.validate()?;
        if components.len() != params.ell {
            return Err(Error::Parameter(format!("{} components for ell = {}", components.len(), params.ell)));
        }
        if components.iter().any(|c| !c.same_grid(&components[0])) {
            return Err(Error::Parameter("components must share one grid".into()));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("non-finite component values".into()));
        }
        Ok(Self { components, params, pinwheel: false })
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.components[0].grid
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.components.iter().map(|c| c.values.as_slice()).collect()
    }

    pub fn model(&self) -> Result<EnergyModel<T>> {
        EnergyModel::new(self.grid().clone(), &self.params)
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            components: self.components.iter().map(|c| c.scaled(s)).collect(),
            params: self.params.clone(),
            pinwheel: self.pinwheel,
        }
    }
}

pub fn inner_v<T: Real>(u: &Field<T>, v: &Field<T>, pot: &PotentialSpec) -> Result<T> {
    if !u.same_grid(v) {
        return Err(Error::Parameter("fields live on different grids".into()));
    }
    let pv = pot.sample(&u.grid)?;
    let model = EnergyModel { grid: u.grid.clone(), v: pv, p: T::lit(2.0), beta: T::zero() };
    Ok(model.inner_v(&u.values, &v.values))
}

pub fn system_energy<T: Real>(state: &SystemState<T>) -> Result<T> {
    Ok(state.model()?.energy(&state.slices()))
}

pub fn system_gradient<T: Real>(state: &SystemState<T>) -> Result<Vec<Field<T>>> {
    let g = state.model()?.gradient(&state.slices());
    Ok(g.into_iter().zip(&state.components).map(|(v, c)| c.with_values(v)).collect())
}

pub fn nehari_scalar<T: Real>(state: &SystemState<T>) -> Result<T> {
    state.model()?.nehari_scalar(&state.slices())
}

pub fn nehari_energy<T: Real>(state: &SystemState<T>) -> Result<T> {
    state.model()?.nehari_energy(&state.slices())
}

pub fn residual<T: Real>(state: &SystemState<T>) -> Result<Residuals<T>> {
    Ok(state.model()?.residual(&state.slices()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::{embed_radial, ground_energy, solve_ground_state, RadialGridSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(d: usize, ell: usize, p: f64, beta: f64) -> Params {
        Params { d, ell, m: 6, p, beta, potential: PotentialSpec::constant(1.0) }
    }

    fn bumps(grid: &Arc<Grid<f64>>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                let c = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let a = rng.gen_range(0.5..2.0);
                let wid = rng.gen_range(0.5..1.5);
                Field::from_fn(grid.clone(), |x| {
                    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2);
                    a * (-r2 / wid).exp()
                })
                .values
            })
            .collect()
    }

    #[test]
    fn soliton_norm_and_single_nehari() {
        let w = solve_ground_state(1, 2.0, 1.0, &RadialGridSpec::default()).unwrap();
        let grid = Arc::new(Grid::<f64>::cartesian_box(1, 4001, 20.0).unwrap());
        let u = embed_radial(&w, &[0.0], &grid).unwrap();
        let model = EnergyModel::new(grid.clone(), &params(1, 2, 2.0, 0.0)).unwrap();
        assert!((model.norm_sq(&u.values) - 16.0 / 3.0).abs() < 1e-4 * 16.0 / 3.0);
        let (s, e) = model.single_nehari(&u.values).unwrap();
        assert!((s - 1.0).abs() < 1e-3);
        assert!((model.single_energy(&u.values) - ground_energy(&w)).abs() < 1e-3 * ground_energy(&w));
        assert!((e - 4.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn inner_product_is_symmetric_and_positive() {
        let grid = Arc::new(Grid::<f64>::cartesian_box(2, 41, 4.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let us = bumps(&grid, 2, &mut rng);
        let model = EnergyModel::new(grid, &params(2, 2, 2.0, -1.0)).unwrap();
        assert_eq!(model.inner_v(&us[0], &us[1]), model.inner_v(&us[1], &us[0]));
        assert!(model.norm_sq(&us[0]) > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = Arc::new(Grid::<f64>::cartesian_box(2, 31, 4.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [2.0, 1.5] {
            let model = EnergyModel::new(grid.clone(), &params(2, 3, p, -2.0)).unwrap();
            for _ in 0..20 {
                let us = bumps(&grid, 3, &mut rng);
                // For p < 2 the coupling is not smooth near u = 0, so the
                // direction is kept relative to u there.
                let vs: Vec<Vec<f64>> = bumps(&grid, 3, &mut rng)
                    .into_iter()
                    .zip(&us)
                    .map(|(v, u)| if p < 2.0 { v.iter().zip(u).map(|(a, b)| a * b).collect() } else { v })
                    .collect();
                let g = model.gradient(&us.iter().map(|v| v.as_slice()).collect::<Vec<_>>());
                let w = grid.weights();
                let dir: f64 = (0..3).map(|i| (0..w.len()).map(|k| w[k] * g[i][k] * vs[i][k]).sum::<f64>()).sum();
                let t = 1e-5;
                let shifted = |sgn: f64| -> f64 {
                    let c: Vec<Vec<f64>> =
                        us.iter().zip(&vs).map(|(u, v)| u.iter().zip(v).map(|(a, b)| a + sgn * t * b).collect()).collect();
                    model.energy(&c.iter().map(|v| v.as_slice()).collect::<Vec<_>>())
                };
                let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * t);
                assert!((dir - fd).abs() < 1e-5 * fd.abs(), "p={p}: {dir} vs {fd}");
            }
        }
    }

    #[test]
    fn nehari_closed_form_agrees_with_direct_scaling() {
        let grid = Arc::new(Grid::<f64>::cartesian_box(2, 25, 4.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = EnergyModel::new(grid.clone(), &params(2, 2, 2.0, -0.3)).unwrap();
        let mut checked = 0;
        while checked < 100 {
            let us = bumps(&grid, 2, &mut rng);
            let sl: Vec<&[f64]> = us.iter().map(|v| v.as_slice()).collect();
            let Ok(s) = model.nehari_scalar(&sl) else { continue };
            let closed = model.nehari_energy(&sl).unwrap();
            let scaled: Vec<Vec<f64>> = us.iter().map(|u| u.iter().map(|x| s * x).collect()).collect();
            let ssl: Vec<&[f64]> = scaled.iter().map(|v| v.as_slice()).collect();
            let direct = model.energy(&ssl);
            assert!((closed - direct).abs() < 1e-10 * direct.abs());
            // t ↦ J(t u) is stationary at the Nehari scalar.
            let h = 1e-4 * s;
            let jt = |t: f64| {
                let c: Vec<Vec<f64>> = us.iter().map(|u| u.iter().map(|x| t * x).collect()).collect();
                model.energy(&c.iter().map(|v| v.as_slice()).collect::<Vec<_>>())
            };
            let slope = (jt(s + h) - jt(s - h)) / (2.0 * h);
            assert!(slope.abs() < 1e-6 * direct.abs(), "{slope}");
            checked += 1;
        }
    }

    #[test]
    fn nehari_arithmetic_and_infeasibility() {
        let grid = Arc::new(Grid::<f64>::cartesian_box(1, 3, 1.0).unwrap());
        let model = EnergyModel::new(grid, &params(1, 2, 2.0, -10.0)).unwrap();
        let parts = NehariParts { norms: vec![2.0, 2.0], self_terms: vec![0.5, 0.5], cross: vec![vec![0.0; 2]; 2] };
        assert!((model.with_beta(0.0).nehari_scalar_from(&parts).unwrap() - 2.0).abs() < 1e-15);
        let overlap = vec![1.0, 1.0, 1.0];
        match model.nehari_scalar(&[&overlap, &overlap]) {
            Err(Error::InfeasibleProjection { component: 0, .. }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn coupling_only_affects_overlapping_states() {
        let grid = Arc::new(Grid::<f64>::cartesian_box(1, 41, 4.0).unwrap());
        let left: Vec<f64> = (0..41).map(|k| if k < 20 { 1.0 } else { 0.0 }).collect();
        let right: Vec<f64> = (0..41).map(|k| if k > 20 { 1.0 } else { 0.0 }).collect();
        let e0 = EnergyModel::new(grid.clone(), &params(1, 2, 2.0, 0.0)).unwrap();
        let e1 = e0.with_beta(-5.0);
        assert_eq!(e0.energy(&[&left, &right]), e1.energy(&[&left, &right]));
        let sum = e0.single_energy(&left) + e0.single_energy(&right);
        assert!((e0.energy(&[&left, &right]) - sum).abs() < 1e-12);
        let mid: Vec<f64> = vec![0.5; 41];
        let a = e0.with_beta(-0.1).nehari_energy(&[&left, &mid]).unwrap();
        let b = e0.with_beta(-0.2).nehari_energy(&[&left, &mid]).unwrap();
        assert!(b > a);
    }

    #[test]
    fn residual_of_embedded_soliton_converges_quadratically() {
        let w = solve_ground_state(1, 2.0, 1.0, &RadialGridSpec::default()).unwrap();
        let mut res = Vec::new();
        for n in [401usize, 801, 1601] {
            let grid = Arc::new(Grid::<f64>::cartesian_box(1, n, 20.0).unwrap());
            let u = embed_radial(&w, &[0.0], &grid).unwrap();
            let model = EnergyModel::new(grid, &params(1, 2, 2.0, 0.0)).unwrap();
            let r = model.residual(&[&u.values]);
            res.push(r.values[0]);
        }
        let order = (res[0] / res[1]).log2();
        let order2 = (res[1] / res[2]).log2();
        assert!((order - 2.0).abs() < 0.1 && (order2 - 2.0).abs() < 0.1, "{res:?}");
        let grid = Arc::new(Grid::<f64>::cartesian_box(1, 11, 1.0).unwrap());
        let model = EnergyModel::new(grid, &params(1, 2, 2.0, 0.0)).unwrap();
        let z = vec![0.0; 11];
        let r = model.residual(&[&z, &z]);
        assert_eq!(r.values, vec![0.0, 0.0]);
        assert!(r.degenerate.iter().all(|&d| d));
    }

    #[test]
    fn params_reject_cooperative_coupling() {
        assert!(params(2, 2, 2.0, 0.5).validate().is_err());
        assert!(params(3, 2, 3.5, -1.0).validate().is_err());
        let mut bad = params(2, 2, 2.0, -1.0);
        bad.potential.perturbation = Perturbation::ExpTail { amplitude: -2.0, kappa: 1.5 };
        let grid = Grid::<f64>::cartesian_box(2, 11, 2.0).unwrap();
        assert!(bad.potential.sample(&grid).is_err());
        assert_eq!(bad.potential.kappa_in_range(6), Some(true));
    }
}
