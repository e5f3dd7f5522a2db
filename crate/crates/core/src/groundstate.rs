//! Positive radial ground state of `-Δu + V u = u^{2p-1}` in `R^d`.
//!
//! The core of the profile comes from shooting on `ω(0)`: too large and the
//! trajectory crosses zero, too small and it turns back up. Bisection brackets
//! the ground state to rounding level; the two bracket trajectories agree up to
//! some radius `r_c`, past which the profile is continued by integrating the
//! ODE inwards from the decay law (a stable direction for the decaying branch)
//! with its amplitude matched at `r_c`.
//!
//! Radial quantities are computed in `f64` regardless of the field scalar.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{Field, Grid};
use crate::quadrature::relative_variation;
use crate::scalar::{sphere_area, Real};

/// Radially symmetric function with a derivative, as consumed by the
/// interaction integrals.
pub trait Radial: Sync {
    fn dim(&self) -> usize;
    fn value(&self, r: f64) -> f64;
    fn deriv(&self, r: f64) -> f64;
    /// Radius beyond which the function is zero or below `1e-30` of its peak.
    fn reach(&self) -> f64;
    /// Radii where the function is not smooth.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Resolution controls for the radial solver. `step` is measured in units of
/// the decay length `1/√V`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RadialGridSpec {
    pub step: f64,
    pub max_bisections: usize,
    /// Relative size below which the profile is stored explicitly.
    pub floor: f64,
}

impl Default for RadialGridSpec {
    fn default() -> Self {
        Self { step: 2e-3, max_bisections: 200, floor: 1e-13 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RadialProfile {
    pub dim: usize,
    pub p: f64,
    pub v_inf: f64,
    /// Uniform radial nodes starting at `r = 0`.
    pub r_nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    /// Final shooting bracket on `ω(0)`.
    pub bracket: (f64, f64),
    /// Radius where the shooting core hands over to the inward tail.
    pub r_match: f64,
    step: f64,
    handover: usize,
    tail_amp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Trajectory crossed zero.
    Over,
    /// Trajectory turned upward while positive.
    Under,
    Undecided,
}

struct Ode {
    d: f64,
    p: f64,
    v: f64,
}

impl Ode {
    fn rhs(&self, r: f64, w: f64, dw: f64) -> (f64, f64) {
        let nl = w.abs().powf(2.0 * self.p - 2.0) * w;
        let damp = if r > 0.0 { (self.d - 1.0) / r * dw } else { 0.0 };
        (dw, -damp + self.v * w - nl)
    }

    fn rk4(&self, r: f64, w: f64, dw: f64, h: f64) -> (f64, f64) {
        let (k1a, k1b) = self.rhs(r, w, dw);
        let (k2a, k2b) = self.rhs(r + 0.5 * h, w + 0.5 * h * k1a, dw + 0.5 * h * k1b);
        let (k3a, k3b) = self.rhs(r + 0.5 * h, w + 0.5 * h * k2a, dw + 0.5 * h * k2b);
        let (k4a, k4b) = self.rhs(r + h, w + h * k3a, dw + h * k3b);
        (
            w + h / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a),
            dw + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b),
        )
    }

    /// Taylor start `ω = a + c r²/2 + e r⁴/24` at the first node.
    fn start(&self, a: f64, h: f64) -> (f64, f64) {
        let f = self.v * a - a.powf(2.0 * self.p - 1.0);
        let fp = self.v - (2.0 * self.p - 1.0) * a.powf(2.0 * self.p - 2.0);
        let c = f / self.d;
        let e = 3.0 * fp * c / (self.d + 2.0);
        (a + c * h * h / 2.0 + e * h.powi(4) / 24.0, c * h + e * h.powi(3) / 6.0)
    }

    fn shoot(&self, a: f64, h: f64, n_max: usize, mut rec: Option<&mut Vec<(f64, f64)>>) -> Shot {
        if let Some(r) = rec.as_deref_mut() {
            r.clear();
            r.push((a, 0.0));
        }
        let (mut w, mut dw) = self.start(a, h);
        for i in 1..n_max {
            if let Some(r) = rec.as_deref_mut() {
                r.push((w, dw));
            }
            if w <= 0.0 {
                return Shot::Over;
            }
            if dw > 0.0 {
                return Shot::Under;
            }
            (w, dw) = self.rk4(i as f64 * h, w, dw, h);
        }
        Shot::Undecided
    }
}

fn check_params(d: usize, p: f64, v_inf: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::Parameter("dimension must be at least 1".into()));
    }
    if !(v_inf > 0.0 && v_inf.is_finite()) {
        return Err(Error::Parameter(format!("V_inf must be positive, got {v_inf}")));
    }
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("p must exceed 1, got {p}")));
    }
    if d >= 3 && p >= d as f64 / (d as f64 - 2.0) {
        return Err(Error::Parameter(format!(
            "p = {p} is not subcritical in dimension {d} (need p < {})",
            d as f64 / (d as f64 - 2.0)
        )));
    }
    Ok(())
}

/// Solve for the positive radial ground state.
pub fn solve_ground_state(d: usize, p: f64, v_inf: f64, spec: &RadialGridSpec) -> Result<RadialProfile> {
    check_params(d, p, v_inf)?;
    if !(spec.step > 0.0 && spec.step < 0.1) {
        return Err(Error::Parameter(format!("radial step {} out of range (0, 0.1)", spec.step)));
    }
    let ode = Ode { d: d as f64, p, v: v_inf };
    let k = v_inf.sqrt();
    let h = spec.step / k;
    let n_max = (80.0 / k / h) as usize;

    // Below the constant solution the trajectory rises immediately.
    let mut lo = v_inf.powf(1.0 / (2.0 * p - 2.0));
    let mut hi = 2.0 * lo;
    let mut grow = 0;
    while ode.shoot(hi, h, n_max, None) != Shot::Over {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::Solver(format!("no overshooting initial value found up to {hi:e}")));
        }
    }
    let mut iters = 0;
    while iters < spec.max_bisections {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match ode.shoot(mid, h, n_max, None) {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
            Shot::Undecided => {
                lo = mid;
                hi = mid;
                break;
            }
        }
        iters += 1;
    }
    if hi - lo > 1e-12 * hi {
        return Err(Error::Solver(format!(
            "shooting did not converge after {iters} bisections; bracket [{lo:.17e}, {hi:.17e}]"
        )));
    }

    let mut t_lo = Vec::new();
    let mut t_hi = Vec::new();
    ode.shoot(lo, h, n_max, Some(&mut t_lo));
    ode.shoot(hi, h, n_max, Some(&mut t_hi));
    let a = 0.5 * (lo + hi);
    let n_common = t_lo.len().min(t_hi.len());
    // Hand over once the bracket trajectories disagree, or once the
    // nonlinearity is negligible.
    let mut cut = n_common - 2;
    for i in 1..n_common - 1 {
        let (wl, wh) = (t_lo[i].0, t_hi[i].0);
        let avg = 0.5 * (wl + wh);
        if wh <= 0.0 || t_lo[i].1 > 0.0 || (wl - wh).abs() > 1e-9 * avg || avg < 1e-3 * a {
            cut = i - 1;
            break;
        }
    }
    let core: Vec<(f64, f64)> = (0..=cut).map(|i| (0.5 * (t_lo[i].0 + t_hi[i].0), 0.5 * (t_lo[i].1 + t_hi[i].1))).collect();
    let r_c = cut as f64 * h;
    if core[cut].0 > 1e-2 * a {
        return Err(Error::Solver(format!(
            "shooting resolution exhausted at r = {r_c:.3} with ω/ω(0) = {:.3e}",
            core[cut].0 / a
        )));
    }

    // Inward integration of the decaying branch.
    let dm1 = d as f64 - 1.0;
    let law = |r: f64| r.powf(-dm1 / 2.0) * (-k * r).exp();
    let law_d = |r: f64| -law(r) * (k + dm1 / (2.0 * r));
    let mut r_far = r_c;
    while core[cut].0 * law(r_far) / law(r_c) > spec.floor * a {
        r_far += 1.0 / k;
    }
    let n_far = (r_far / h).ceil() as usize;
    let n_start = n_far + (12.0 / k / h).ceil() as usize;
    let inward = |amp: f64| -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); n_start - cut + 1];
        let r0 = n_start as f64 * h;
        let (mut w, mut dw) = (amp * law(r0), amp * law_d(r0));
        out[n_start - cut] = (w, dw);
        for j in (cut..n_start).rev() {
            (w, dw) = ode.rk4((j + 1) as f64 * h, w, dw, -h);
            out[j - cut] = (w, dw);
        }
        out
    };
    let target = core[cut].0;
    let mut amp0 = target / (law(r_c) + 1e-300);
    let mut g0 = inward(amp0)[0].0 - target;
    let mut amp1 = amp0 * target / (g0 + target);
    let mut tail = inward(amp1);
    for _ in 0..20 {
        let g1 = tail[0].0 - target;
        if g1.abs() <= 1e-14 * target || g1 == g0 {
            break;
        }
        let next = amp1 - g1 * (amp1 - amp0) / (g1 - g0);
        (amp0, g0, amp1) = (amp1, g1, next);
        tail = inward(amp1);
    }

    let mut values: Vec<f64> = core.iter().map(|c| c.0).collect();
    let mut derivs: Vec<f64> = core.iter().map(|c| c.1).collect();
    for &(w, dw) in &tail[1..=n_far - cut] {
        values.push(w);
        derivs.push(dw);
    }
    let r_nodes = (0..values.len()).map(|i| i as f64 * h).collect::<Vec<_>>();
    let r_last = *r_nodes.last().unwrap();
    let tail_amp = values.last().unwrap() / law(r_last);
    let profile = RadialProfile {
        dim: d,
        p,
        v_inf,
        r_nodes,
        values,
        derivs,
        bracket: (lo, hi),
        r_match: r_c,
        step: h,
        handover: cut,
        tail_amp,
    };
    profile.check_shape()?;
    Ok(profile)
}

impl RadialProfile {
    pub fn peak(&self) -> f64 {
        self.values[0]
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn check_shape(&self) -> Result<()> {
        for w in self.values.windows(2) {
            if !(w[1] > 0.0 && w[1] < w[0]) {
                return Err(Error::Solver("radial profile is not positive and decreasing".into()));
            }
        }
        if *self.values.last().unwrap() >= 1e-10 * self.peak() {
            return Err(Error::Solver("radial profile does not decay to the floor".into()));
        }
        Ok(())
    }

    fn law(&self, r: f64) -> f64 {
        let dm1 = self.dim as f64 - 1.0;
        self.tail_amp * r.powf(-dm1 / 2.0) * (-self.v_inf.sqrt() * r).exp()
    }

    fn locate(&self, r: f64) -> Option<(usize, f64)> {
        let x = r / self.step;
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return None;
        }
        Some((i, x - i as f64))
    }

    /// `∫_{R^d} f(|x|, ω, ω') dx` by composite Simpson on the stored nodes.
    pub fn radial_integral(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let d = self.dim;
        let g = |i: usize| {
            let r = self.r_nodes[i];
            f(r, self.values[i], self.derivs[i]) * r.powi(d as i32 - 1)
        };
        let mut n = self.values.len() - 1;
        let mut extra = 0.0;
        if n % 2 == 1 {
            extra = 0.5 * self.step * (g(n - 1) + g(n));
            n -= 1;
        }
        let mut s = g(0) + g(n);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i);
        }
        sphere_area::<f64>(d) * (s * self.step / 3.0 + extra)
    }

    /// `‖ω‖²_{V}` with the given constant potential.
    pub fn norm_sq(&self) -> f64 {
        let v = self.v_inf;
        self.radial_integral(|_, w, dw| dw * dw + v * w * w)
    }

    /// `∫ ω^q`.
    pub fn power_integral(&self, q: f64) -> f64 {
        self.radial_integral(|_, w, _| w.powf(q))
    }

    /// Relative ODE residual over `[r_lo, r_hi]`, with `ω''` from fourth-order
    /// differences of the stored derivative. Stencils straddling the handover
    /// between the two integrations are skipped.
    pub fn ode_residual(&self, r_lo: f64, r_hi: f64) -> f64 {
        let h = self.step;
        let (d, p, v) = (self.dim as f64, self.p, self.v_inf);
        let i0 = ((r_lo / h).ceil() as usize).max(2);
        let i1 = ((r_hi / h).floor() as usize).min(self.values.len() - 3);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in i0..=i1 {
            if i + 1 >= self.handover && i <= self.handover + 2 {
                continue;
            }
            let dd = &self.derivs;
            let w2 = (-dd[i + 2] + 8.0 * dd[i + 1] - 8.0 * dd[i - 1] + dd[i - 2]) / (12.0 * h);
            let r = self.r_nodes[i];
            let w = self.values[i];
            let res = w2 + (d - 1.0) / r * dd[i] - v * w + w.powf(2.0 * p - 1.0);
            worst = worst.max(res.abs());
            scale = scale.max(v * w);
        }
        worst / scale
    }

    /// First node radius where `ω ≤ frac·ω(0)`.
    pub fn radius_below(&self, frac: f64) -> f64 {
        let t = frac * self.peak();
        let i = self.values.iter().position(|&w| w <= t).unwrap_or(self.values.len() - 1);
        self.r_nodes[i]
    }

    /// Two-column `r ω` text dump with a commented header.
    pub fn write_dump(&self, out: &mut impl Write, fit: Option<&DecayFit>) -> std::io::Result<()> {
        write!(out, "# d={} p={:.17e} v_inf={:.17e}", self.dim, self.p, self.v_inf)?;
        if let Some(f) = fit {
            write!(out, " a_N={:.17e} exponent={:.17e}", f.a_n, f.exponent)?;
        }
        writeln!(out)?;
        for (r, w) in self.r_nodes.iter().zip(&self.values) {
            writeln!(out, "{r:.17e} {w:.17e}")?;
        }
        Ok(())
    }
}

impl Radial for RadialProfile {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.locate(r) {
            Some((i, t)) => {
                let h = self.step;
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                let (m0, m1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
                let t2 = t * t;
                let t3 = t2 * t;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
            }
            None => self.law(r),
        }
    }

    fn deriv(&self, r: f64) -> f64 {
        let r = r.abs();
        match self.locate(r) {
            Some((i, t)) => {
                let h = self.step;
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                let (m0, m1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
                let t2 = t * t;
                ((6.0 * t2 - 6.0 * t) * y0 + (3.0 * t2 - 4.0 * t + 1.0) * m0 + (-6.0 * t2 + 6.0 * t) * y1 + (3.0 * t2 - 2.0 * t) * m1) / h
            }
            None => {
                let dm1 = self.dim as f64 - 1.0;
                -self.law(r) * (self.v_inf.sqrt() + dm1 / (2.0 * r))
            }
        }
    }

    fn reach(&self) -> f64 {
        // Extend the tail law down to 1e-30 of the peak.
        let last = *self.r_nodes.last().unwrap();
        let ratio = self.values.last().unwrap() / (1e-30 * self.peak());
        last + ratio.max(1.0).ln() / self.v_inf.sqrt()
    }
}

/// Fitted exponential decay `ω(r) ≈ a_N r^{-(d-1)/2} e^{-k r}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DecayFit {
    pub a_n: f64,
    pub exponent: f64,
    pub fit_window: (f64, f64),
    /// Relative variation of `ω r^{(d-1)/2} e^{√V r}` across the window.
    pub residual: f64,
    /// Two-sided bound constants for `ω / (min{1, r^{-(d-1)/2}} e^{-√V r})`.
    pub c1: f64,
    pub c2: f64,
    /// Same plateau for `|ω'|`.
    pub b_n: f64,
    pub ode_residual: f64,
}

/// Fit the decay law on the window where `10⁻⁶ ≤ ω/ω(0) ≤ 10⁻³`. The
/// log-profile is fitted as `ln a_N - k r + c/r`, absorbing the leading
/// algebraic correction of the tail.
pub fn fit_decay(profile: &RadialProfile) -> Result<DecayFit> {
    let peak = profile.peak();
    if *profile.values.last().unwrap() > 1e-6 * peak {
        return Err(Error::Fit("profile not resolved to 1e-6 of its peak".into()));
    }
    let r_lo = profile.radius_below(1e-3);
    let r_hi = profile.radius_below(1e-6);
    let k_th = profile.v_inf.sqrt();
    let dm1 = profile.dim as f64 - 1.0;
    let idx: Vec<usize> = (0..profile.values.len())
        .filter(|&i| profile.r_nodes[i] >= r_lo && profile.r_nodes[i] <= r_hi)
        .collect();
    if idx.len() < 16 {
        return Err(Error::Fit(format!("fit window [{r_lo}, {r_hi}] too short")));
    }
    let stride = (idx.len() / 400).max(1);
    let sample: Vec<usize> = idx.iter().copied().step_by(stride).collect();
    let mut a = [[0.0f64; 3]; 3];
    let mut b = [0.0f64; 3];
    let mut plateau = Vec::with_capacity(sample.len());
    for &i in &sample {
        let r = profile.r_nodes[i];
        let y = (profile.values[i] * r.powf(dm1 / 2.0)).ln();
        let phi = [1.0, r, 1.0 / r];
        for (ii, pi) in phi.iter().enumerate() {
            for (jj, pj) in phi.iter().enumerate() {
                a[ii][jj] += pi * pj;
            }
            b[ii] += pi * y;
        }
        plateau.push((y + k_th * r).exp());
    }
    let coef = solve_sym3(a, b);
    let residual = relative_variation(&plateau);
    if residual > 0.1 {
        return Err(Error::Fit(format!("plateau varies by {residual:.3} over [{r_lo}, {r_hi}]")));
    }
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for (&r, &w) in profile.r_nodes.iter().zip(&profile.values).skip(1) {
        let env = r.powf(-dm1 / 2.0).min(1.0) * (-k_th * r).exp();
        let q = w / env;
        c1 = c1.min(q);
        c2 = c2.max(q);
    }
    let i_hi = *idx.last().unwrap();
    let r = profile.r_nodes[i_hi];
    let b_n = profile.derivs[i_hi].abs() * r.powf(dm1 / 2.0) * (k_th * r).exp();
    Ok(DecayFit {
        a_n: coef[0].exp(),
        exponent: -coef[1],
        fit_window: (r_lo, r_hi),
        residual,
        c1,
        c2,
        b_n,
        ode_residual: profile.ode_residual(r_lo, r_hi),
    })
}

fn solve_sym3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for cc in c..3 {
                a[r][cc] -= f * a[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..3).rev() {
        let s: f64 = (r + 1..3).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// `((p-1)/(2p)) ‖ω‖²_{V_∞}`, the least energy of the limit problem.
pub fn ground_energy(profile: &RadialProfile) -> f64 {
    (profile.p - 1.0) / (2.0 * profile.p) * profile.norm_sq()
}

/// Sample `ω(|x - center|)` on a grid. `center` has the grid's dimension.
pub fn embed_radial<T: Real>(profile: &dyn Radial, center: &[T], grid: &Arc<Grid<T>>) -> Result<Field<T>> {
    let dim = grid.dim();
    if center.len() != dim {
        return Err(Error::Dimension(format!("center has length {}, grid dimension {dim}", center.len())));
    }
    let c: Vec<f64> = center.iter().map(|x| x.as_f64()).collect();
    let mut field = Field::from_fn(grid.clone(), |x| {
        let r2: f64 = (0..dim).map(|i| (x[i].as_f64() - c[i]).powi(2)).sum();
        T::lit(profile.value(r2.sqrt()))
    });
    let ext = grid.extent().as_f64();
    let cmax = c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if cmax > ext {
        field.meta.warnings.push(format!("center outside grid (|c|_inf = {cmax:.4} > extent {ext:.4}); profile truncated"));
    } else {
        let gap = ext - cmax;
        let edge = profile.value(gap) / profile.value(0.0);
        if edge > 1e-8 {
            field.meta.warnings.push(format!("profile truncated at grid boundary (relative edge value {edge:.2e})"));
        }
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soliton() -> RadialProfile {
        solve_ground_state(1, 2.0, 1.0, &RadialGridSpec::default()).unwrap()
    }

    #[test]
    fn one_dimensional_soliton_matches_sech() {
        let w = soliton();
        assert!((w.peak() - 2f64.sqrt()).abs() < 1e-9, "{}", w.peak());
        for r in [0.3f64, 1.0, 2.5, 7.0, 15.0, 25.0] {
            let exact = 2f64.sqrt() / r.cosh();
            assert!((w.value(r) - exact).abs() < 1e-7 * exact, "r={r}: {} vs {exact}", w.value(r));
        }
        assert!((w.norm_sq() - 16.0 / 3.0).abs() < 1e-8);
        assert!((ground_energy(&w) - 4.0 / 3.0).abs() < 1e-8);
        let (lo, hi) = w.bracket;
        assert!(hi - lo < 1e-12 * w.peak());
    }

    #[test]
    fn decay_fit_recovers_soliton_constants() {
        let w = soliton();
        let fit = fit_decay(&w).unwrap();
        assert!((fit.a_n - 2.0 * 2f64.sqrt()).abs() < 1e-5, "{}", fit.a_n);
        assert!((fit.exponent - 1.0).abs() < 1e-4);
        assert!(fit.c1 > 0.0 && fit.c1 <= fit.c2);
        assert!(fit.ode_residual < 1e-8, "{}", fit.ode_residual);
    }

    #[test]
    fn nehari_identity_and_decay_in_higher_dimensions() {
        for (d, p) in [(2usize, 2.0), (3, 2.0), (2, 1.5), (4, 1.5)] {
            let w = solve_ground_state(d, p, 1.0, &RadialGridSpec::default()).unwrap();
            let lhs = w.norm_sq();
            let rhs = w.power_integral(2.0 * p);
            assert!((lhs - rhs).abs() < 1e-6 * lhs, "d={d} p={p}: {lhs} vs {rhs}");
            let fit = fit_decay(&w).unwrap();
            assert!((fit.exponent - 1.0).abs() < 0.02, "d={d} p={p}: exponent {}", fit.exponent);
            assert!(fit.ode_residual < 1e-8, "d={d} p={p}: residual {}", fit.ode_residual);
        }
    }

    #[test]
    fn energy_scaling_with_potential() {
        for (d, p) in [(1usize, 2.0), (2, 2.0), (3, 1.5)] {
            let e1 = ground_energy(&solve_ground_state(d, p, 1.0, &RadialGridSpec::default()).unwrap());
            let e4 = ground_energy(&solve_ground_state(d, p, 4.0, &RadialGridSpec::default()).unwrap());
            let expect = 4f64.powf(p / (p - 1.0) - d as f64 / 2.0) * e1;
            assert!((e4 - expect).abs() < 1e-6 * expect, "d={d}: {e4} vs {expect}");
        }
    }

    #[test]
    fn refinement_changes_energy_negligibly() {
        let coarse = RadialGridSpec { step: 4e-3, ..Default::default() };
        let e_c = ground_energy(&solve_ground_state(3, 2.0, 1.0, &coarse).unwrap());
        let e_f = ground_energy(&solve_ground_state(3, 2.0, 1.0, &RadialGridSpec::default()).unwrap());
        assert!(e_c > 0.0 && (e_c - e_f).abs() < 1e-5 * e_f);
    }

    #[test]
    fn rejects_supercritical_exponent() {
        assert!(matches!(solve_ground_state(3, 3.0, 1.0, &RadialGridSpec::default()), Err(Error::Parameter(_))));
        assert!(matches!(solve_ground_state(2, 2.0, -1.0, &RadialGridSpec::default()), Err(Error::Parameter(_))));
    }

    #[test]
    fn embedded_mass_matches_radial_quadrature() {
        let w = solve_ground_state(2, 2.0, 1.0, &RadialGridSpec::default()).unwrap();
        let grid = Arc::new(Grid::<f64>::polar(1000, 64, 20.0).unwrap());
        let f = embed_radial(&w, &[0.0, 0.0], &grid).unwrap();
        let sq: Vec<f64> = f.values.iter().map(|v| v * v).collect();
        let mass = grid.integrate(&sq);
        let exact = w.power_integral(2.0);
        assert!((mass - exact).abs() < 1e-4 * exact, "{mass} vs {exact}");
        assert!(f.meta.warnings.is_empty());
        let off = embed_radial(&w, &[30.0, 0.0], &grid).unwrap();
        assert_eq!(off.meta.warnings.len(), 1);
    }
}
