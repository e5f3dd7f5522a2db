//! Translated ground states on group orbits, their interaction integrals,
//! and the upper bounds on the least pinwheel energy built from them.
//!
//! Every integral here is a two-centre integral of radial factors, reduced
//! to two dimensions regardless of the ambient dimension.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{Perturbation, PotentialSpec};
use crate::error::{Error, Result};
use crate::groundstate::{embed_radial, ground_energy, Radial, RadialProfile};
use crate::groups::{orbit_points, separation_constants, GroupSpec};
use crate::mesh::{Field, Grid};
use crate::quadrature::{
    exp_rate_with_power_fit, graded_breaks, linear_fit, relative_variation, two_centre_integral, Centre,
    PanelRule,
};
use crate::scalar::{sphere_area, Real};

const ORDER: usize = 10;

/// `χ·ω` with `χ ≡ 1` on `r ≤ (1-ε)s`, `χ ≡ 0` on `r ≥ s` and a
/// cosine-squared shoulder in between.
#[derive(Clone, Copy)]
pub struct CutoffProfile<'a> {
    base: &'a dyn Radial,
    s: f64,
    eps: f64,
}

impl<'a> CutoffProfile<'a> {
    pub fn new(base: &'a dyn Radial, s: f64, eps: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Precondition(format!("cutoff radius must be positive, got {s}")));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::Precondition(format!("shoulder fraction must lie in (0,1), got {eps}")));
        }
        Ok(Self { base, s, eps })
    }

    pub fn support_radius(&self) -> f64 {
        self.s
    }

    pub fn inner_radius(&self) -> f64 {
        (1.0 - self.eps) * self.s
    }

    /// `(χ(r), χ'(r))`.
    pub fn chi(&self, r: f64) -> (f64, f64) {
        let r0 = self.inner_radius();
        if r <= r0 {
            return (1.0, 0.0);
        }
        if r >= self.s {
            return (0.0, 0.0);
        }
        let k = std::f64::consts::FRAC_PI_2 / (self.eps * self.s);
        let a = k * (r - r0);
        let c = a.cos();
        (c * c, -k * (2.0 * a).sin())
    }
}

impl Radial for CutoffProfile<'_> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        self.chi(r).0 * self.base.value(r)
    }

    fn deriv(&self, r: f64) -> f64 {
        let r = r.abs();
        let (c, dc) = self.chi(r);
        if c == 0.0 && dc == 0.0 {
            return 0.0;
        }
        c * self.base.deriv(r) + dc * self.base.value(r)
    }

    fn reach(&self) -> f64 {
        self.s
    }

    fn kinks(&self) -> Vec<f64> {
        vec![self.inner_radius(), self.s]
    }
}

pub fn cutoff_profile(profile: &dyn Radial, s: f64, eps: f64) -> Result<CutoffProfile<'_>> {
    CutoffProfile::new(profile, s, eps)
}

/// `∫ F(|x|, |x-ξ|, cos) dx` for two radial factors centred at `0` and `ξ`.
pub fn pair_integral(f: &dyn Radial, g: &dyn Radial, sep: f64, integrand: impl Fn(f64, f64, f64) -> f64) -> f64 {
    let (kf, kg) = (f.kinks(), g.kinks());
    two_centre_integral(
        f.dim(),
        sep,
        Centre { reach: f.reach(), kinks: &kf },
        Centre { reach: g.reach(), kinks: &kg },
        ORDER,
        integrand,
    )
}

/// `∫ ω^a(x) ω^b(x-ξ) dx`, `|ξ| = sep`.
pub fn pair_interaction(a: f64, b: f64, sep: f64, profile: &dyn Radial) -> Result<f64> {
    if !(a >= 1.0 && b >= 1.0) {
        return Err(Error::Precondition(format!("exponents must be at least 1, got ({a}, {b})")));
    }
    if !(sep >= 0.0 && sep.is_finite()) {
        return Err(Error::Precondition(format!("separation must be non-negative, got {sep}")));
    }
    Ok(pair_integral(profile, profile, sep, |r1, r2, _| {
        profile.value(r1).max(0.0).powf(a) * profile.value(r2).max(0.0).powf(b)
    }))
}

/// Whether a separation only sees the extrapolated tails of the profile.
pub fn tail_only(profile: &RadialProfile, sep: f64) -> bool {
    sep > 2.0 * profile.r_nodes.last().copied().unwrap_or(0.0) + 1.0
}

/// `⟨f, g(·-ξ)⟩_{V∞} = ∫ ∇f·∇g(·-ξ) + V∞ f g(·-ξ)`.
pub fn v_inner(f: &dyn Radial, g: &dyn Radial, sep: f64, v_inf: f64) -> f64 {
    pair_integral(f, g, sep, |r1, r2, c| f.deriv(r1) * g.deriv(r2) * c + v_inf * f.value(r1) * g.value(r2))
}

/// Radial integral `∫ F(r) dx` over `R^d` on Gauss panels with breaks at
/// `breaks` and unit panels up to `hi`.
fn radial_quad(dim: usize, lo: f64, hi: f64, focus: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let rule = PanelRule::new(&graded_breaks(lo, hi, 1.0, focus, 0), ORDER);
    sphere_area::<f64>(dim) * rule.integrate(|r| r.powi(dim as i32 - 1) * f(r))
}

/// Distances between orbit points in units of the orbit radius, grouped
/// with their multiplicity over ordered pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitGeometry {
    pub m: usize,
    pub ell: usize,
    /// Pairs `j ≠ k` inside one component.
    pub intra: Vec<(f64, usize)>,
    /// Pairs in different components.
    pub inter: Vec<(f64, usize)>,
}

impl OrbitGeometry {
    pub fn min_intra(&self) -> f64 {
        self.intra.first().map_or(f64::INFINITY, |x| x.0)
    }

    pub fn min_inter(&self) -> f64 {
        self.inter.first().map_or(f64::INFINITY, |x| x.0)
    }
}

fn push_dist(list: &mut Vec<(f64, usize)>, d: f64) {
    match list.iter_mut().find(|(x, _)| (x - d).abs() < 1e-9) {
        Some(e) => e.1 += 1,
        None => list.push((d, 1)),
    }
}

/// Orbit of the unit vector of the first complex plane of `C² ⊂ R⁴`.
pub fn orbit_geometry(m: usize, ell: usize) -> Result<OrbitGeometry> {
    let spec = GroupSpec::paper(m, ell, 4)?;
    let orbit = orbit_points::<f64>(&[1.0, 0.0, 0.0, 0.0], &spec)?;
    let (mut intra, mut inter) = (Vec::new(), Vec::new());
    for a in 0..orbit.points.len() {
        for b in 0..orbit.points.len() {
            if a == b {
                continue;
            }
            let d = orbit.points[a].iter().zip(&orbit.points[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            if orbit.labels[a].0 == orbit.labels[b].0 {
                // One component suffices: the others are isometric copies.
                if orbit.labels[a].0 == 0 {
                    push_dist(&mut intra, d);
                }
            } else {
                push_dist(&mut inter, d);
            }
        }
    }
    intra.sort_by(|a, b| a.0.total_cmp(&b.0));
    inter.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(OrbitGeometry { m, ell, intra, inter })
}

/// Orbit radius, group and optional cutoff of a translated-ground-state
/// ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub radius: f64,
    pub m: usize,
    pub ell: usize,
    #[serde(default)]
    pub cutoff: Option<CutoffSpec>,
}

impl AnsatzSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Parameter(format!("orbit radius must be positive, got {}", self.radius)));
        }
        separation_constants(self.m, self.ell)?;
        if let Some(c) = &self.cutoff {
            c.validate(self.m, self.ell)?;
        }
        Ok(())
    }
}

/// Support radius multiplier `r` (support `s = rR`), shoulder fraction `ε`
/// and separation margin `δ` of the truncated ansatz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub r: f64,
    pub eps: f64,
    pub delta: f64,
}

impl CutoffSpec {
    /// `δ` and `ε` at the midpoints of their admissible intervals and
    /// `r = (2 sin(π/2ℓ) + δ)/4`.
    pub fn midpoint(m: usize, ell: usize) -> Result<Self> {
        let sc = separation_constants(m, ell)?;
        if !sc.strong_ok {
            return Err(strong_failure(m, ell, sc.intra, sc.inter));
        }
        let delta = 0.5 * (2.0 * sc.intra + sc.inter);
        let eps = 0.5 * (sc.inter - delta) / (sc.inter + delta);
        Ok(Self { r: (sc.inter + delta) / 4.0, eps, delta })
    }

    pub fn validate(&self, m: usize, ell: usize) -> Result<()> {
        let sc = separation_constants(m, ell)?;
        if !sc.strong_ok {
            return Err(strong_failure(m, ell, sc.intra, sc.inter));
        }
        let half_inter = sc.inter / 2.0;
        if !(sc.intra < self.delta / 2.0 && self.delta / 2.0 < self.r && self.r < half_inter) {
            return Err(Error::Precondition(format!(
                "need 2sin(pi/m) = {:.6} < delta/2 = {:.6} < r = {:.6} < sin(pi/2l) = {:.6}",
                sc.intra,
                self.delta / 2.0,
                self.r,
                half_inter
            )));
        }
        if !(self.eps > 0.0 && (1.0 - self.eps) * self.r > self.delta / 2.0) {
            return Err(Error::Precondition(format!(
                "shoulder fraction {} leaves the plateau radius below delta/2",
                self.eps
            )));
        }
        Ok(())
    }
}

fn strong_failure(m: usize, ell: usize, intra: f64, inter: f64) -> Error {
    Error::Precondition(format!(
        "segregated ansatz needs 2sin(pi/m) < sin(pi/2l); m={m}, l={ell}: {intra:.4} >= {:.4}",
        inter / 2.0
    ))
}

/// Default scan `[4, 16]/√V∞`, 25 geometric points.
pub fn default_r_grid(v_inf: f64) -> Vec<f64> {
    crate::quadrature::geometric_grid(4.0 / v_inf.sqrt(), 16.0 / v_inf.sqrt(), 25)
}

fn check_grid(r_grid: &[f64]) -> Result<()> {
    if r_grid.len() < 4 {
        return Err(Error::Precondition("R grid needs at least four points".into()));
    }
    if r_grid.windows(2).any(|w| !(w[1] > w[0])) || !(r_grid[0] > 0.0) {
        return Err(Error::Precondition("R grid must be positive and increasing".into()));
    }
    Ok(())
}

fn top_half<T: Copy>(xs: &[T]) -> &[T] {
    &xs[xs.len() / 2..]
}

fn monotone_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

/// `(V - V∞)^+` as a radial factor.
struct Excess<'a> {
    pot: &'a PotentialSpec,
    dim: usize,
    reach: f64,
    kinks: Vec<f64>,
}

impl<'a> Excess<'a> {
    fn new(pot: &'a PotentialSpec, dim: usize) -> Option<Self> {
        let sv = pot.v_inf.sqrt();
        match &pot.perturbation {
            Perturbation::None => None,
            Perturbation::ExpTail { amplitude, kappa } => {
                if *amplitude <= 0.0 {
                    return None;
                }
                let reach = (amplitude * 1e30).ln().max(1.0) / (kappa * sv);
                Some(Self { pot, dim, reach, kinks: Vec::new() })
            }
            Perturbation::RadialTable { radii, .. } => {
                Some(Self { pot, dim, reach: *radii.last().unwrap(), kinks: radii.clone() })
            }
        }
    }
}

impl Radial for Excess<'_> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, r: f64) -> f64 {
        (self.pot.eval(r.abs()) - self.pot.v_inf).max(0.0)
    }
    fn deriv(&self, _r: f64) -> f64 {
        0.0
    }
    fn reach(&self) -> f64 {
        self.reach
    }
    fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }
}

/// `∫ (V - V∞)^+(x) f²(x - Rξ) dx`.
fn potential_term(pot: &PotentialSpec, f: &dyn Radial, radius: f64) -> f64 {
    match Excess::new(pot, f.dim()) {
        None => 0.0,
        Some(e) => pair_integral(&e, f, radius, |r1, r2, _| e.value(r1) * f.value(r2).powi(2)),
    }
}

/// Report of the three interaction asymptotics of translated ground states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub r_grid: Vec<f64>,
    /// `∫ω^{2p-1}ω(·-Rξ) · R^{(d-1)/2} e^{√V R}`.
    pub tail_scaled: Vec<f64>,
    pub plateau: f64,
    /// Relative variation of `tail_scaled` over the top half of the grid.
    pub plateau_variation: f64,
    /// Fitted exponential rate of `∫ω^{2p-1}ω(·-Rξ)` over the top half.
    pub tail_rate: f64,
    /// `∫ω^pω^p(·-Rξ) · R^{(d-1)/2} e^{√V R}`.
    pub power_scaled: Vec<f64>,
    pub power_ratio: f64,
    pub power_monotone: bool,
    /// `∫(V-V∞)ω²(·-Rξ) · R^{(d-1)/2} e^{2 sin(π/m) √V R}` for `V - V∞ = e^{-κ√V|x|}`.
    pub potential_scaled: Vec<f64>,
    pub potential_ratio: f64,
    pub potential_monotone: bool,
    pub kappa: f64,
    pub m: usize,
    pub warnings: Vec<String>,
}

impl AsymptoticsReport {
    pub fn passes(&self, plateau_tol: f64, ratio_tol: f64) -> bool {
        self.plateau > 0.0
            && self.plateau_variation < plateau_tol
            && self.power_ratio < ratio_tol
            && self.power_monotone
            && self.potential_ratio < ratio_tol
            && self.potential_monotone
    }
}

/// Scans the three interaction integrals of a ground state over `r_grid`.
/// The potential term uses `V - V∞ = e^{-κ√V|x|}` with `κ` in
/// `(2 sin(π/m), 2)`.
pub fn verify_interaction_asymptotics(
    profile: &RadialProfile,
    m: usize,
    kappa: f64,
    r_grid: &[f64],
) -> Result<AsymptoticsReport> {
    check_grid(r_grid)?;
    let sc = separation_constants(m, 2)?;
    if !(kappa > sc.intra && kappa < 2.0) {
        return Err(Error::Precondition(format!("kappa = {kappa} outside (2sin(pi/m), 2) = ({}, 2)", sc.intra)));
    }
    let (p, v) = (profile.p, profile.v_inf);
    let sv = v.sqrt();
    let half_dim = (profile.dim as f64 - 1.0) / 2.0;
    let pot = PotentialSpec { v_inf: v, perturbation: Perturbation::ExpTail { amplitude: 1.0, kappa } };
    let rows: Vec<(f64, f64, f64)> = r_grid
        .par_iter()
        .map(|&r| -> Result<(f64, f64, f64)> {
            let tail = pair_interaction(2.0 * p - 1.0, 1.0, r, profile)?;
            let power = pair_interaction(p, p, r, profile)?;
            let potl = potential_term(&pot, profile, r);
            Ok((tail, power, potl))
        })
        .collect::<Result<_>>()?;
    let warnings = r_grid
        .iter()
        .filter(|&&r| tail_only(profile, r))
        .map(|r| format!("R = {r}: separation beyond the stored profile, tail law only"))
        .collect();
    let tail_scaled: Vec<f64> =
        r_grid.iter().zip(&rows).map(|(&r, x)| x.0 * r.powf(half_dim) * (sv * r).exp()).collect();
    let power_scaled: Vec<f64> =
        r_grid.iter().zip(&rows).map(|(&r, x)| x.1 * r.powf(half_dim) * (sv * r).exp()).collect();
    let potential_scaled: Vec<f64> =
        r_grid.iter().zip(&rows).map(|(&r, x)| x.2 * r.powf(half_dim) * (sc.intra * sv * r).exp()).collect();
    let top = top_half(&tail_scaled);
    let plateau = top.iter().sum::<f64>() / top.len() as f64;
    let plateau_variation = relative_variation(top);
    if plateau_variation > 0.1 {
        return Err(Error::Fit(format!(
            "inconclusive window: plateau of the tail interaction varies by {plateau_variation:.3}"
        )));
    }
    let xs = top_half(r_grid);
    let ys: Vec<f64> = top_half(&rows).iter().zip(xs).map(|(x, &r)| (x.0 * r.powf(half_dim)).ln()).collect();
    let tail_rate = -linear_fit(xs, &ys).0;
    Ok(AsymptoticsReport {
        r_grid: r_grid.to_vec(),
        plateau,
        plateau_variation,
        tail_rate,
        power_ratio: power_scaled.last().unwrap() / power_scaled[0],
        power_monotone: monotone_decreasing(&power_scaled),
        potential_ratio: potential_scaled.last().unwrap() / potential_scaled[0],
        potential_monotone: monotone_decreasing(&potential_scaled),
        tail_scaled,
        power_scaled,
        potential_scaled,
        kappa,
        m,
        warnings,
    })
}

/// `Σ_{j≠k} ∫ω^{2p-1}ω(·-R|ξ_j-ξ_k|)` over one `ϑ`-orbit.
pub fn epsilon_r(profile: &RadialProfile, geometry: &OrbitGeometry, radius: f64) -> Result<f64> {
    let q = 2.0 * profile.p - 1.0;
    geometry.intra.iter().map(|&(d, n)| Ok(n as f64 * pair_interaction(q, 1.0, radius * d, profile)?)).sum()
}

/// `Σ_{i≠n} Σ_{j,k} ∫ω^p ω^p(·-R|ρ^{-i}ξ_j - ρ^{-n}ξ_k|)`.
pub fn cross_overlap(profile: &RadialProfile, geometry: &OrbitGeometry, radius: f64) -> Result<f64> {
    let p = profile.p;
    geometry.inter.iter().map(|&(d, n)| Ok(n as f64 * pair_interaction(p, p, radius * d, profile)?)).sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonRow {
    pub r: f64,
    pub eps_r: f64,
    /// Nearest-neighbour pairs only.
    pub eps_nearest: f64,
    /// `ε_R R^{(d-1)/2} e^{2 sin(π/m)√V R}`.
    pub scaled: f64,
    /// `scaled / plateau - 1`.
    pub rate_residual: f64,
    pub cross: f64,
    /// `cross / ε_R`.
    pub dominance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonReport {
    pub m: usize,
    pub ell: usize,
    pub rows: Vec<EpsilonRow>,
    pub predicted_rate: f64,
    /// Rates fitted over the top half with the algebraic prefactor fixed.
    pub rate: f64,
    pub rate_nearest: f64,
    /// Amplitude `ā`: mean of the scaled values over the top half.
    pub amplitude: f64,
    pub plateau_variation: f64,
    pub dominance_ratio: f64,
    pub dominance_monotone: bool,
}

impl EpsilonReport {
    pub fn positive_and_decreasing(&self) -> bool {
        self.rows.iter().all(|r| r.eps_r > 0.0) && self.rows.windows(2).all(|w| w[1].eps_r < w[0].eps_r)
    }

    pub fn rate_error(&self) -> f64 {
        (self.rate / self.predicted_rate - 1.0).abs()
    }
}

/// `ε_R` and the cross-component overlaps over `r_grid`.
pub fn epsilon_scan(profile: &RadialProfile, m: usize, ell: usize, r_grid: &[f64]) -> Result<EpsilonReport> {
    check_grid(r_grid)?;
    let geo = orbit_geometry(m, ell)?;
    let sv = profile.v_inf.sqrt();
    let half_dim = (profile.dim as f64 - 1.0) / 2.0;
    let c = geo.min_intra();
    let q = 2.0 * profile.p - 1.0;
    let nearest_count = geo.intra[0].1 as f64;
    let raw: Vec<(f64, f64, f64)> = r_grid
        .par_iter()
        .map(|&r| -> Result<_> {
            let eps = epsilon_r(profile, &geo, r)?;
            let near = nearest_count * pair_interaction(q, 1.0, r * c, profile)?;
            Ok((eps, near, cross_overlap(profile, &geo, r)?))
        })
        .collect::<Result<_>>()?;
    let scale = |r: f64| r.powf(half_dim) * (c * sv * r).exp();
    let scaled: Vec<f64> = r_grid.iter().zip(&raw).map(|(&r, x)| x.0 * scale(r)).collect();
    let top = top_half(&scaled);
    let amplitude = top.iter().sum::<f64>() / top.len() as f64;
    let fit_rate = |col: usize| {
        let xs = top_half(r_grid);
        let ys: Vec<f64> = top_half(&raw)
            .iter()
            .zip(xs)
            .map(|(x, &r)| (if col == 0 { x.0 } else { x.1 } * r.powf(half_dim)).ln())
            .collect();
        -linear_fit(xs, &ys).0
    };
    let rows: Vec<EpsilonRow> = r_grid
        .iter()
        .zip(&raw)
        .zip(&scaled)
        .map(|((&r, x), &s)| EpsilonRow {
            r,
            eps_r: x.0,
            eps_nearest: x.1,
            scaled: s,
            rate_residual: s / amplitude - 1.0,
            cross: x.2,
            dominance: x.2 / x.0,
        })
        .collect();
    let dom: Vec<f64> = rows.iter().map(|r| r.dominance).collect();
    Ok(EpsilonReport {
        m,
        ell,
        predicted_rate: c * sv,
        rate: fit_rate(0),
        rate_nearest: fit_rate(1),
        amplitude,
        plateau_variation: relative_variation(top),
        dominance_ratio: dom.last().unwrap() / dom[0],
        dominance_monotone: monotone_decreasing(&dom),
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundRow {
    pub r: f64,
    pub eps_r: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub bound: f64,
    pub crossed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// `ℓ m 𝔠_∞`.
    pub threshold: f64,
    pub crossed: bool,
    pub r_star: Option<f64>,
    /// `|bound(R_max) / threshold - 1|`.
    pub terminal_gap: f64,
}

impl BoundReport {
    fn finish(rows: Vec<BoundRow>, threshold: f64) -> Self {
        let r_star = rows.iter().find(|r| r.crossed).map(|r| r.r);
        let terminal_gap = (rows.last().unwrap().bound / threshold - 1.0).abs();
        Self { crossed: r_star.is_some(), r_star, terminal_gap, rows, threshold }
    }
}

/// `(p-1)/(2p) (N / D^{1/p})^{p/(p-1)}`, infinite when `D ≤ 0`.
fn nehari_value(p: f64, num: f64, den: f64) -> f64 {
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (p - 1.0) / (2.0 * p) * (num / den.powf(1.0 / p)).powf(p / (p - 1.0))
}

/// Upper bound on the least pinwheel energy from the untruncated ansatz,
/// per orbit radius. Interaction between components enters the
/// denominator through `|Σ_j a_j|^p ≤ m^{p-1} Σ_j a_j^p`.
pub fn existence_bound(
    profile: &RadialProfile,
    m: usize,
    ell: usize,
    beta: f64,
    potential: &PotentialSpec,
    r_grid: &[f64],
) -> Result<BoundReport> {
    check_grid(r_grid)?;
    let sc = separation_constants(m, ell)?;
    if !sc.existence_ok {
        return Err(Error::Precondition(format!("existence bound needs m > 2l, got m={m}, l={ell}")));
    }
    if beta > 0.0 {
        return Err(Error::Parameter(format!("coupling must be non-positive, got {beta}")));
    }
    potential.validate()?;
    if (potential.v_inf - profile.v_inf).abs() > 1e-12 * profile.v_inf {
        return Err(Error::Parameter("profile and potential disagree on V_inf".into()));
    }
    let geo = orbit_geometry(m, ell)?;
    let p = profile.p;
    let (mf, lf) = (m as f64, ell as f64);
    let norm = profile.norm_sq();
    let power = profile.power_integral(2.0 * p);
    let threshold = lf * mf * ground_energy(profile);
    let cross_const = mf.powf(2.0 * (p - 1.0));
    let rows = r_grid
        .par_iter()
        .map(|&r| -> Result<BoundRow> {
            let eps = epsilon_r(profile, &geo, r)?;
            let cross = if beta == 0.0 { 0.0 } else { cross_overlap(profile, &geo, r)? };
            let pot = potential_term(potential, profile, r);
            let numerator = lf * (mf * norm + eps + mf * mf * pot);
            let denominator = lf * (mf * power + (2.0 * p - 1.0) * eps) + beta * cross_const * cross;
            let bound = nehari_value(p, numerator, denominator);
            Ok(BoundRow { r, eps_r: eps, numerator, denominator, bound, crossed: bound < threshold })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BoundReport::finish(rows, threshold))
}

/// Ratio of cross-component overlaps to `ε_R` over `r_grid`, for any even
/// `m` (including `m = 2ℓ`, where it does not decay at the `ε_R` rate).
pub fn dominance_scan(profile: &RadialProfile, m: usize, ell: usize, r_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_grid(r_grid)?;
    let geo = orbit_geometry(m, ell)?;
    r_grid
        .par_iter()
        .map(|&r| Ok((r, cross_overlap(profile, &geo, r)? / epsilon_r(profile, &geo, r)?)))
        .collect()
}

/// Norm and power losses of a truncation: `‖ω‖² - ‖ω_s‖²` and
/// `|ω|^{2p} - |ω_s|^{2p}`, integrated pointwise to avoid cancellation.
pub fn cutoff_losses(profile: &RadialProfile, cut: &CutoffProfile) -> (f64, f64) {
    let v = profile.v_inf;
    let q = 2.0 * profile.p;
    let (r0, s) = (cut.inner_radius(), cut.support_radius());
    let reach = profile.reach();
    let dim = profile.dim;
    let shoulder = |r: f64| {
        let (c, dc) = cut.chi(r);
        let (w, dw) = (profile.value(r), profile.deriv(r));
        (1.0 - c * c) * (dw * dw + v * w * w) - 2.0 * c * dc * w * dw - dc * dc * w * w
    };
    let full = |r: f64| {
        let (w, dw) = (profile.value(r), profile.deriv(r));
        dw * dw + v * w * w
    };
    let norm = radial_quad(dim, r0, s, &[], shoulder) + radial_quad(dim, s, reach, &[], full);
    let pw = radial_quad(dim, r0, s, &[], |r| (1.0 - cut.chi(r).0.powf(q)) * profile.value(r).powf(q))
        + radial_quad(dim, s, reach, &[], |r| profile.value(r).powf(q));
    (norm, pw)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegregatedRow {
    pub r: f64,
    pub s: f64,
    pub eps_r: f64,
    pub numerator: f64,
    pub denominator: f64,
    pub bound: f64,
    pub crossed: bool,
    /// Truncation corrections relative to `ε_R`.
    pub power_loss_ratio: f64,
    pub cross_loss_ratio: f64,
    pub self_loss_ratio: f64,
    pub gradient_ratio: f64,
    pub norm_loss: f64,
    pub power_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegregatedReport {
    pub cutoff: CutoffSpec,
    /// `min distance between components / (2 r)`; supports are disjoint iff `> 1`.
    pub disjointness_margin: f64,
    pub bound: BoundReport,
    pub rows: Vec<SegregatedRow>,
    /// Fitted decay rates of the truncation losses in `s`, with the
    /// predicted `2(1-ε)√V` and `2p(1-ε)√V`.
    pub norm_loss_rate: f64,
    pub power_loss_rate: f64,
    pub predicted_norm_rate: f64,
    pub predicted_power_rate: f64,
}

impl SegregatedReport {
    pub fn correction_ratios_terminal(&self) -> [f64; 4] {
        let last = self.rows.last().unwrap();
        [last.power_loss_ratio, last.cross_loss_ratio, last.self_loss_ratio, last.gradient_ratio]
    }
}

/// Upper bound on the least energy over segregated pinwheel states from
/// the truncated ansatz: one component's Rayleigh-type quotient times `ℓ`.
pub fn segregated_bound(
    profile: &RadialProfile,
    m: usize,
    ell: usize,
    cutoff: Option<CutoffSpec>,
    potential: &PotentialSpec,
    r_grid: &[f64],
) -> Result<SegregatedReport> {
    check_grid(r_grid)?;
    let cutoff = match cutoff {
        Some(c) => {
            c.validate(m, ell)?;
            c
        }
        None => CutoffSpec::midpoint(m, ell)?,
    };
    potential.validate()?;
    let geo = orbit_geometry(m, ell)?;
    let disjointness_margin = geo.min_inter() / (2.0 * cutoff.r);
    if disjointness_margin <= 1.0 {
        return Err(Error::InfeasibleCutoff(format!(
            "support radius {}R overlaps the next component at distance {}R",
            cutoff.r,
            geo.min_inter()
        )));
    }
    let p = profile.p;
    let v = profile.v_inf;
    let mf = m as f64;
    let q = 2.0 * p - 1.0;
    let norm = profile.norm_sq();
    let power = profile.power_integral(2.0 * p);
    let threshold = ell as f64 * mf * ground_energy(profile);
    let rows = r_grid
        .par_iter()
        .map(|&r| -> Result<SegregatedRow> {
            let s = cutoff.r * r;
            let cut = CutoffProfile::new(profile, s, cutoff.eps)?;
            let (norm_loss, power_loss) = cutoff_losses(profile, &cut);
            let eps = epsilon_r(profile, &geo, r)?;
            let (mut num_x, mut den_x) = (0.0, 0.0);
            let (mut tb, mut tc, mut tg) = (0.0, 0.0, 0.0);
            let ck = cut.kinks();
            let whole = Centre { reach: profile.reach(), kinks: &ck };
            let part = Centre { reach: s, kinks: &ck };
            for &(d, n) in &geo.intra {
                let n = n as f64;
                let sep = r * d;
                num_x += n * v_inner(&cut, &cut, sep, v);
                den_x += n * pair_integral(&cut, &cut, sep, |r1, r2, _| cut.value(r1).powf(q) * cut.value(r2));
                tb += n * two_centre_integral(profile.dim, sep, whole, whole, ORDER, |r1, r2, _| {
                    profile.value(r1).powf(q) * (1.0 - cut.chi(r2).0) * profile.value(r2)
                });
                tc += n * two_centre_integral(profile.dim, sep, whole, part, ORDER, |r1, r2, _| {
                    (1.0 - cut.chi(r1).0.powf(q)) * profile.value(r1).powf(q) * cut.value(r2)
                });
                tg += n * two_centre_integral(profile.dim, sep, whole, part, ORDER, |r1, r2, c| {
                    (cut.deriv(r1) - profile.deriv(r1)) * cut.deriv(r2) * c
                });
            }
            let numerator = mf * (norm - norm_loss) + num_x + mf * mf * potential_term(potential, &cut, r);
            let denominator = mf * (power - power_loss) + (2.0 * p - 1.0) * den_x;
            let bound = ell as f64 * nehari_value(p, numerator, denominator);
            Ok(SegregatedRow {
                r,
                s,
                eps_r: eps,
                numerator,
                denominator,
                bound,
                crossed: bound < threshold,
                power_loss_ratio: mf * power_loss / eps,
                cross_loss_ratio: tb / eps,
                self_loss_ratio: tc / eps,
                gradient_ratio: tg.abs() / eps,
                norm_loss: norm_loss.abs(),
                power_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ss: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let norm_losses: Vec<f64> = rows.iter().map(|r| r.norm_loss).collect();
    let power_losses: Vec<f64> = rows.iter().map(|r| r.power_loss).collect();
    let sv = v.sqrt();
    let bound_rows = rows
        .iter()
        .map(|r| BoundRow {
            r: r.r,
            eps_r: r.eps_r,
            numerator: r.numerator,
            denominator: r.denominator,
            bound: r.bound,
            crossed: r.crossed,
        })
        .collect();
    Ok(SegregatedReport {
        cutoff,
        disjointness_margin,
        bound: BoundReport::finish(bound_rows, threshold),
        norm_loss_rate: exp_rate_with_power_fit(&ss, &norm_losses).0,
        power_loss_rate: exp_rate_with_power_fit(&ss, &power_losses).0,
        predicted_norm_rate: 2.0 * (1.0 - cutoff.eps) * sv,
        predicted_power_rate: 2.0 * p * (1.0 - cutoff.eps) * sv,
        rows,
    })
}

/// `(Σa)^q ≥ Σa^q + (q-1) Σ_{i≠j} a_i^{q-1} a_j` with relative slack `1e-12`.
pub fn power_inequality_check(q: f64, a: &[f64]) -> Result<bool> {
    if !(q >= 2.0) {
        return Err(Error::Domain(format!("power inequality needs q >= 2, got {q}")));
    }
    if a.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Domain("entries must be non-negative".into()));
    }
    let sum: f64 = a.iter().sum();
    let lhs = sum.powf(q);
    let mut rhs: f64 = a.iter().map(|x| x.powf(q)).sum();
    for &x in a {
        rhs += (q - 1.0) * x.powf(q - 1.0) * (sum - x);
    }
    Ok(lhs >= rhs - 1e-12 * lhs.abs().max(rhs.abs()))
}

/// `∫e^{-μ1|x-x1|} e^{-μ2|x-x2|} dx / e^{-μ1|x1-x2|}` in `R^d`.
pub fn exp_convolution_check(mu1: f64, mu2: f64, sep: f64, dim: usize) -> Result<f64> {
    if !(mu2 > mu1 && mu1 >= 0.0) {
        return Err(Error::Precondition(format!("need mu2 > mu1 >= 0, got ({mu1}, {mu2})")));
    }
    if dim == 0 || !(sep >= 0.0) {
        return Err(Error::Precondition("need dim >= 1 and a non-negative separation".into()));
    }
    // Reaches where each factor drops to 1e-30 relative to its scale.
    let far = 70.0;
    let reach1 = if mu1 > 0.0 { (far / mu1).max(sep + far / mu2) } else { sep + far / mu2 };
    let reach2 = far / mu2;
    let val = two_centre_integral(
        dim,
        sep,
        Centre::smooth(reach1),
        Centre::smooth(reach2),
        ORDER,
        |r1: f64, r2: f64, _| (-mu1 * (r1 - sep)).exp() * (-mu2 * r2).exp(),
    );
    Ok(val)
}

/// `∫e^{-μ|x|} dx = |S^{d-1}| Γ(d) / μ^d`.
pub fn exp_integral(mu: f64, dim: usize) -> f64 {
    let gamma: f64 = (1..dim).map(|k| k as f64).product();
    sphere_area::<f64>(dim) * gamma / mu.powi(dim as i32)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvolutionSweep {
    pub dim: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub seps: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Linear-fit slope over the top half of the sweep, relative to the mean
    /// ratio there, and its 95% upper confidence limit.
    pub relative_slope: f64,
    pub relative_slope_upper: f64,
    pub max_over_min: f64,
}

impl ConvolutionSweep {
    /// No growth beyond `tol` per unit separation at large separation.
    pub fn bounded(&self, tol: f64) -> bool {
        self.max_over_min.is_finite() && self.relative_slope_upper <= tol
    }
}

pub fn exp_convolution_sweep(mu1: f64, mu2: f64, dim: usize, seps: &[f64]) -> Result<ConvolutionSweep> {
    if seps.len() < 4 {
        return Err(Error::Precondition("sweep needs at least four separations".into()));
    }
    let ratios = seps.par_iter().map(|&s| exp_convolution_check(mu1, mu2, s, dim)).collect::<Result<Vec<_>>>()?;
    let (xs, ys) = (top_half(seps), top_half(&ratios));
    let (slope, _, se) = linear_fit(xs, ys);
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let max = ratios.iter().copied().fold(f64::MIN, f64::max);
    let min = ratios.iter().copied().fold(f64::MAX, f64::min);
    Ok(ConvolutionSweep {
        dim,
        mu1,
        mu2,
        seps: seps.to_vec(),
        relative_slope: slope / mean,
        relative_slope_upper: (slope + 1.96 * se) / mean,
        max_over_min: max / min,
        ratios,
    })
}

/// Components `u_i = Σ_j ω(· - R ρ^{-i} ϑ^j e_1)` sampled on `grid`.
pub fn assemble_ansatz<T: Real>(
    profile: &dyn Radial,
    group: &GroupSpec,
    radius: f64,
    grid: &Arc<Grid<T>>,
) -> Result<Vec<Field<T>>> {
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("orbit radius must be positive, got {radius}")));
    }
    if grid.dim() != group.dim() {
        return Err(Error::Dimension(format!("grid is {}-dimensional, group acts on R^{}", grid.dim(), group.dim())));
    }
    let mut base = vec![T::zero(); group.dim()];
    base[0] = T::lit(radius);
    let orbit = orbit_points(&base, group)?;
    let mut out = Vec::with_capacity(group.ell);
    for i in 0..group.ell {
        let mut values = vec![T::zero(); grid.len()];
        let mut warnings = Vec::new();
        for c in orbit.component(i) {
            let f = embed_radial(profile, &c, grid)?;
            for (a, b) in values.iter_mut().zip(&f.values) {
                *a += *b;
            }
            warnings.extend(f.meta.warnings);
        }
        warnings.dedup();
        let mut field = Field::zeros(grid.clone()).with_values(values);
        field.meta.warnings = warnings;
        out.push(field);
    }
    Ok(out)
}
