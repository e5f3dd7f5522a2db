//! Nehari-constrained descent for the system energy within the pinwheel
//! subspace, coupling continuation, and the diagnostics of the two coupling
//! limits (decoupling and segregation).
//!
//! One descent step: Sobolev gradient `G = (K + WV)^{-1} W ∇J`, trial
//! `u - τG`, pinwheel projection, optional `|·|`, Nehari rescale. The
//! rescaled energy is the closed-form Nehari value, and a step is accepted
//! only under the Armijo condition, so accepted energies never increase.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::assemble_ansatz;
use crate::energy::{EnergyModel, SystemState};
use crate::error::{Error, Result};
use crate::groundstate::{solve_ground_state, RadialGridSpec};
use crate::groups::{GroupSpec, SymmetryOps};
use crate::mesh::{Field, Grid, GridKind};
use crate::precond::{pcg, FastSolver};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    Fixed { step: f64 },
    /// Start from `initial`, multiply by `shrink` until
    /// `E(trial) ≤ E - armijo·τ·‖G‖²_V`; after a success the step grows by
    /// `1/shrink` up to `max`.
    Backtracking { initial: f64, armijo: f64, shrink: f64, max: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking { initial: 1.0, armijo: 1e-4, shrink: 0.5, max: 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop when every component's `‖∇_i J‖_{L²} / ‖u_i‖_V` is below this.
    pub tol: f64,
    /// Pinwheel projection every this many iterations (1 = always).
    pub symmetrize_every: usize,
    pub seed: u64,
    /// Relative amplitude of a seeded random perturbation of the start, 0 for none.
    pub perturb: f64,
    pub drift_every: usize,
    pub nonnegative: bool,
    pub min_step: f64,
    pub pcg_rtol: f64,
    /// Polak-Ribière+ conjugate directions instead of plain Sobolev gradients.
    pub conjugate: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_rule: StepRule::default(),
            tol: 1e-5,
            symmetrize_every: 1,
            seed: 0,
            perturb: 0.0,
            drift_every: 50,
            nonnegative: true,
            min_step: 1e-10,
            pcg_rtol: 1e-12,
            conjugate: true,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tol)));
        }
        match self.step_rule {
            StepRule::Fixed { step } if !(step > 0.0) => {
                return Err(Error::Parameter(format!("fixed step must be positive, got {step}")))
            }
            StepRule::Backtracking { initial, armijo, shrink, max } => {
                if !(initial > 0.0 && max >= initial) || !(armijo > 0.0 && armijo < 1.0) || !(shrink > 0.0 && shrink < 1.0) {
                    return Err(Error::Parameter("backtracking needs 0 < initial <= max and armijo, shrink in (0,1)".into()));
                }
            }
            _ => {}
        }
        if self.symmetrize_every == 0 || self.max_iters == 0 {
            return Err(Error::Parameter("max_iters and symmetrize_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub energy: f64,
    /// Nehari scalar of the trial before rescaling.
    pub s_u: f64,
    /// `‖G‖_V`, the Sobolev gradient norm.
    pub grad_norm: f64,
    /// Largest per-component `‖∇_i J‖_{L²} / ‖u_i‖_V`.
    pub residual: f64,
    pub step: f64,
    /// `|J'(u)u| / ‖u‖²_V` after rescaling.
    pub constraint: f64,
    pub pinwheel: f64,
    /// `Σ_{i<j} ∫|u_i|^p|u_j|^p`.
    pub overlap: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub records: Vec<IterRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub final_residual: f64,
    pub max_constraint: f64,
    pub max_pinwheel: f64,
    /// Accepted energies never increased.
    pub monotone: bool,
    pub min_component_value: f64,
    pub drift: Vec<DriftReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Real> {
    pub state: SystemState<T>,
    pub diagnostics: Diagnostics,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Group of a state: the analog pinwheel group of its parameters.
pub fn state_group<T: Real>(state: &SystemState<T>) -> Result<GroupSpec> {
    GroupSpec::analog(state.params.m, state.params.ell, state.grid().dim())
}

struct Workspace<T: Real> {
    model: EnergyModel<T>,
    ops: Option<SymmetryOps<T>>,
    pre: FastSolver<T>,
    nonnegative: bool,
}

impl<T: Real> Workspace<T> {
    fn new(state: &SystemState<T>, nonnegative: bool) -> Result<Self> {
        let model = state.model()?;
        let ops = if state.pinwheel {
            let ops = SymmetryOps::new(state.grid(), state_group(state)?)?;
            if !ops.is_exact() {
                return Err(Error::SymmetryMismatch("pinwheel descent needs grid-exact rotations".into()));
            }
            Some(ops)
        } else {
            None
        };
        let pre = FastSolver::new(&model.grid, &model.v)?;
        Ok(Self { model, ops, pre, nonnegative })
    }

    fn project(&self, comps: Vec<Vec<T>>) -> Vec<Vec<T>> {
        let mut out = match &self.ops {
            Some(ops) => ops.pinwheel_project(&comps),
            None => comps,
        };
        if self.nonnegative {
            out.iter_mut().flatten().for_each(|x| *x = x.abs());
        }
        out
    }

    /// Rescale onto the Nehari set; returns `(rescaled, s, energy)`.
    fn rescale(&self, comps: Vec<Vec<T>>) -> Result<(Vec<Vec<T>>, T, T)> {
        let sl: Vec<&[T]> = comps.iter().map(|c| c.as_slice()).collect();
        let s = self.model.nehari_scalar(&sl)?;
        let e = self.model.nehari_energy(&sl)?;
        let scaled = comps.into_iter().map(|c| c.into_iter().map(|x| x * s).collect()).collect();
        Ok((scaled, s, e))
    }

    fn constraint(&self, comps: &[Vec<T>]) -> T {
        let sl: Vec<&[T]> = comps.iter().map(|c| c.as_slice()).collect();
        let parts = self.model.nehari_parts(&sl);
        let n: T = parts.norms.iter().copied().sum();
        let d = parts.self_terms.iter().copied().sum::<T>() + self.model.beta * parts.cross.iter().flatten().copied().sum::<T>();
        ((n - d) / n).abs()
    }

    fn overlap(&self, comps: &[Vec<T>]) -> T {
        let sl: Vec<&[T]> = comps.iter().map(|c| c.as_slice()).collect();
        let parts = self.model.nehari_parts(&sl);
        parts.cross.iter().flatten().copied().sum::<T>() * T::lit(0.5)
    }

    fn pinwheel(&self, comps: &[Vec<T>]) -> T {
        self.ops.as_ref().map_or(T::zero(), |o| o.pinwheel_residual(comps))
    }
}

/// Small pinwheel-symmetric bump pattern used to repair an infeasible start.
fn repair_bump<T: Real>(state: &SystemState<T>, amplitude: T) -> Result<Vec<Vec<T>>> {
    let grid = state.grid();
    let p = &state.params;
    let profile = solve_ground_state(grid.dim(), p.p, p.potential.v_inf, &RadialGridSpec::default())?;
    let group = state_group(state)?;
    let radius = grid.extent().as_f64() / 3.0;
    let comps = assemble_ansatz(&profile, &group, radius, grid)?;
    let peak = comps[0].max_abs();
    Ok(comps.into_iter().map(|c| c.values.into_iter().map(|x| x * amplitude / peak).collect()).collect())
}

/// Minimize the system energy over the Nehari set (within the pinwheel
/// subspace when the state is flagged as pinwheel).
pub fn minimize<T: Real>(initial: &SystemState<T>, opts: &SolveOptions) -> Result<SolveResult<T>> {
    opts.validate()?;
    let ws = Workspace::new(initial, opts.nonnegative)?;
    let mut diag = Diagnostics { monotone: true, ..Default::default() };
    let mut comps: Vec<Vec<T>> = initial.components.iter().map(|c| c.values.clone()).collect();
    if opts.perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let amp = comps.iter().flatten().fold(T::zero(), |m, &x| m.max(x.abs())) * T::lit(opts.perturb);
        for x in comps.iter_mut().flatten() {
            *x += amp * T::lit(rng.gen_range(-1.0..1.0));
        }
    }
    let mut start = ws.project(comps.clone());
    let (mut u, _, mut energy) = match ws.rescale(start.clone()) {
        Ok(r) => r,
        Err(Error::InfeasibleProjection { .. }) => {
            let peak = start.iter().flatten().fold(T::zero(), |m, &x| m.max(x.abs()));
            let bump = repair_bump(initial, T::lit(0.1) * peak.max(T::lit(1e-3)))?;
            for (c, b) in start.iter_mut().zip(&bump) {
                for (x, y) in c.iter_mut().zip(b) {
                    *x += *y;
                }
            }
            diag.warnings.push("infeasible start repaired by a ground-state bump".into());
            match ws.rescale(ws.project(start)) {
                Err(Error::InfeasibleProjection { .. }) => {
                    diag.warnings.push("bump too weak; restarted from the default ansatz".into());
                    let (fresh, _) = default_initial(initial.grid(), &initial.params)?;
                    ws.rescale(ws.project(fresh.components.into_iter().map(|c| c.values).collect()))?
                }
                r => r?,
            }
        }
        Err(e) => return Err(e),
    };
    diag.initial_energy = energy.as_f64();
    let (mut tau, tau_max) = match opts.step_rule {
        StepRule::Fixed { step } => (step, step),
        StepRule::Backtracking { initial, max, .. } => (initial, max),
    };
    let w = ws.model.grid.weights().to_vec();
    // Previous direction and load vectors `W∇J` for the conjugate update.
    let mut prev: Option<(Vec<Vec<T>>, Vec<Vec<T>>, T)> = None;
    for it in 0..opts.max_iters {
        let sl: Vec<&[T]> = u.iter().map(|c| c.as_slice()).collect();
        let res = ws.model.residual(&sl).max().as_f64();
        let grads = ws.model.gradient(&sl);
        let mut sob = Vec::with_capacity(grads.len());
        let mut loads = Vec::with_capacity(grads.len());
        let mut gnorm2 = T::zero();
        for g in &grads {
            let rhs: Vec<T> = g.iter().zip(&w).map(|(&a, &b)| a * b).collect();
            let (x, _) = pcg(&ws.model.grid, &ws.model.v, &ws.pre, &rhs, T::lit(opts.pcg_rtol), 500)?;
            gnorm2 += dot(&x, &rhs);
            sob.push(x);
            loads.push(rhs);
        }
        // Descent direction: -G, or Polak-Ribière+ conjugate to the previous one.
        let mut dir: Vec<Vec<T>> = sob.iter().map(|g| g.iter().map(|&x| -x).collect()).collect();
        if let (true, Some((d_old, l_old, n_old))) = (opts.conjugate, prev.as_ref()) {
            let cross: T = sob.iter().zip(l_old).map(|(g, l)| dot(g, l)).sum();
            let b = ((gnorm2 - cross) / *n_old).max(T::zero());
            let cand: Vec<Vec<T>> =
                dir.iter().zip(d_old).map(|(d, o)| d.iter().zip(o).map(|(&x, &y)| x + b * y).collect()).collect();
            let slope: T = cand.iter().zip(&loads).map(|(d, l)| dot(d, l)).sum();
            if slope < T::zero() {
                dir = cand;
            }
        }
        let slope: T = dir.iter().zip(&loads).map(|(d, l)| dot(d, l)).sum();
        let record = |step: f64, s_u: f64, e: T, st: &[Vec<T>]| IterRecord {
            iter: it,
            energy: e.as_f64(),
            s_u,
            grad_norm: gnorm2.max(T::zero()).sqrt().as_f64(),
            residual: res,
            step,
            constraint: ws.constraint(st).as_f64(),
            pinwheel: ws.pinwheel(st).as_f64(),
            overlap: ws.overlap(st).as_f64(),
        };
        if res < opts.tol {
            diag.converged = true;
            diag.records.push(record(0.0, 1.0, energy, &u));
            break;
        }
        let mut accepted = None;
        loop {
            let trial: Vec<Vec<T>> = u
                .iter()
                .zip(&dir)
                .map(|(c, g)| c.iter().zip(g).map(|(&a, &b)| a + T::lit(tau) * b).collect())
                .collect();
            let trial = if (it + 1) % opts.symmetrize_every == 0 { ws.project(trial) } else { trial };
            match ws.rescale(trial) {
                Ok((v, s, e)) => {
                    let ok = match opts.step_rule {
                        StepRule::Fixed { .. } => e <= energy,
                        StepRule::Backtracking { armijo, .. } => e <= energy + T::lit(armijo * tau) * slope,
                    };
                    if ok {
                        accepted = Some((v, s, e));
                        break;
                    }
                }
                Err(Error::InfeasibleProjection { .. }) => {}
                Err(e) => return Err(e),
            }
            match opts.step_rule {
                StepRule::Fixed { .. } => break,
                StepRule::Backtracking { shrink, .. } => {
                    tau *= shrink;
                    if tau < opts.min_step {
                        break;
                    }
                }
            }
        }
        // Parabola through E(0), the slope and E(τ): try its vertex and keep the better point.
        if let (Some((_, _, e1)), StepRule::Backtracking { .. }) = (accepted.as_ref(), opts.step_rule) {
            let curv = (*e1 - energy - T::lit(tau) * slope).as_f64();
            if curv > 0.0 {
                let t_star = (-slope.as_f64() * tau * tau / (2.0 * curv)).clamp(0.25 * tau, (4.0 * tau).min(tau_max));
                if (t_star / tau - 1.0).abs() > 0.1 {
                    let trial: Vec<Vec<T>> = u
                        .iter()
                        .zip(&dir)
                        .map(|(c, g)| c.iter().zip(g).map(|(&a, &b)| a + T::lit(t_star) * b).collect())
                        .collect();
                    let trial = if (it + 1) % opts.symmetrize_every == 0 { ws.project(trial) } else { trial };
                    match ws.rescale(trial) {
                        Ok((v, s, e)) if e < *e1 => {
                            accepted = Some((v, s, e));
                            tau = t_star;
                        }
                        Ok(_) | Err(Error::InfeasibleProjection { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        let Some((v, s, e)) = accepted else {
            diag.warnings.push(format!("line search stalled at iteration {it} (residual {res:.3e})"));
            diag.records.push(record(0.0, 1.0, energy, &u));
            break;
        };
        if e > energy {
            diag.monotone = false;
        }
        energy = e;
        u = v;
        diag.records.push(record(tau, s.as_f64(), energy, &u));
        prev = Some((dir, loads, gnorm2));
        if let StepRule::Backtracking { shrink, .. } = opts.step_rule {
            tau = (tau / shrink).min(tau_max);
        }
        if opts.drift_every > 0 && (it + 1) % opts.drift_every == 0 {
            diag.drift.push(drift_slices(&ws.model, &u, it + 1));
        }
    }
    let state = SystemState {
        components: u.iter().zip(&initial.components).map(|(c, f)| f.with_values(c.clone())).collect(),
        params: initial.params.clone(),
        pinwheel: initial.pinwheel,
    };
    let sl: Vec<&[T]> = u.iter().map(|c| c.as_slice()).collect();
    diag.final_residual = ws.model.residual(&sl).max().as_f64();
    diag.final_energy = energy.as_f64();
    diag.iterations = diag.records.len();
    diag.max_constraint = diag.records.iter().map(|r| r.constraint).fold(0.0, f64::max);
    diag.max_pinwheel = diag.records.iter().map(|r| r.pinwheel).fold(0.0, f64::max);
    diag.min_component_value = u.iter().flatten().fold(f64::INFINITY, |m, &x| m.min(x.as_f64()));
    let last = drift_slices(&ws.model, &u, diag.iterations);
    if last.escaping {
        diag.warnings.push(format!(
            "boundary mass fraction {:.2e}: the minimizer may be drifting out of the box",
            last.boundary_fraction
        ));
    }
    diag.drift.push(last);
    if !diag.converged {
        diag.warnings.push(format!("not converged: residual {:.3e} after {} iterations", diag.final_residual, diag.iterations));
    }
    Ok(SolveResult { state, diagnostics: diag })
}

/// Coupling values, monotone towards `0⁻` or towards `-∞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSchedule {
    pub betas: Vec<f64>,
    #[serde(default = "yes")]
    pub warm_start: bool,
}

fn yes() -> bool {
    true
}

impl ContinuationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::Parameter("empty continuation schedule".into()));
        }
        if self.betas.iter().any(|&b| !(b <= 0.0)) {
            return Err(Error::Parameter("continuation couplings must be non-positive".into()));
        }
        let inc = self.betas.windows(2).all(|w| w[1] > w[0]);
        let dec = self.betas.windows(2).all(|w| w[1] < w[0]);
        if !(inc || dec) {
            return Err(Error::Parameter("continuation couplings must be strictly monotone".into()));
        }
        Ok(())
    }

    pub fn decreasing(&self) -> bool {
        self.betas.windows(2).all(|w| w[1] < w[0])
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationStep<T: Real> {
    pub beta: f64,
    pub result: SolveResult<T>,
    pub overlaps: OverlapMetrics,
}

/// Warm-started minimizations along a coupling schedule.
pub fn continuation<T: Real>(
    initial: &SystemState<T>,
    schedule: &ContinuationSchedule,
    opts: &SolveOptions,
) -> Result<Vec<ContinuationStep<T>>> {
    schedule.validate()?;
    let mut out: Vec<ContinuationStep<T>> = Vec::with_capacity(schedule.betas.len());
    let mut start = initial.clone();
    for &beta in &schedule.betas {
        start.params.beta = beta;
        let result = match minimize(&start, opts) {
            Err(Error::InfeasibleProjection { .. }) if !out.is_empty() => {
                // The previous branch left the Nehari set; restart from a fresh ansatz.
                let (fresh, _) = default_initial(start.grid(), &start.params)?;
                let mut r = minimize(&fresh, opts)?;
                r.diagnostics.warnings.push(format!("warm start infeasible at beta = {beta}; restarted from the ansatz"));
                r
            }
            other => other?,
        };
        let overlaps = overlap_metrics(&result.state, 1e-3)?;
        if schedule.warm_start {
            start = result.state.clone();
        } else {
            start = initial.clone();
        }
        out.push(ContinuationStep { beta, result, overlaps });
    }
    Ok(out)
}

/// Whether minimal energies never decrease as the coupling decreases.
pub fn beta_monotone<T: Real>(steps: &[ContinuationStep<T>], slack: f64) -> bool {
    let mut pts: Vec<(f64, f64)> = steps.iter().map(|s| (s.beta, s.result.diagnostics.final_energy)).collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    pts.windows(2).all(|w| w[1].1 >= w[0].1 - slack * w[0].1.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMetrics {
    /// `((i, j), ∫|u_i|^p|u_j|^p)` for `i < j`.
    pub pairs: Vec<((usize, usize), f64)>,
    pub total: f64,
    pub beta_times_overlap: f64,
    /// Measure of nodes where two components exceed `δ · max amplitude`.
    pub support_intersection: f64,
    pub support_fraction: f64,
    pub threshold: f64,
}

pub fn overlap_metrics<T: Real>(state: &SystemState<T>, rel_threshold: f64) -> Result<OverlapMetrics> {
    let grid = state.grid();
    let p = T::lit(state.params.p);
    let w = grid.weights();
    let comps: Vec<&[T]> = state.slices();
    let peak = comps.iter().flat_map(|c| c.iter()).fold(T::zero(), |m, &x| m.max(x.abs()));
    let delta = peak * T::lit(rel_threshold);
    let mut pairs = Vec::new();
    let mut total = 0.0;
    let mut both = vec![false; grid.len()];
    for i in 0..comps.len() {
        for j in i + 1..comps.len() {
            let prod: Vec<T> = (0..grid.len()).map(|k| comps[i][k].abs().powf(p) * comps[j][k].abs().powf(p)).collect();
            let v = grid.integrate(&prod).as_f64();
            total += v;
            pairs.push(((i, j), v));
            for (k, b) in both.iter_mut().enumerate() {
                if comps[i][k].abs() > delta && comps[j][k].abs() > delta {
                    *b = true;
                }
            }
        }
    }
    let inter: f64 = both.iter().zip(w).filter(|(b, _)| **b).map(|(_, &x)| x.as_f64()).sum();
    let measure = grid.measure().as_f64();
    Ok(OverlapMetrics {
        pairs,
        total,
        beta_times_overlap: state.params.beta * total,
        support_intersection: inter,
        support_fraction: inter / measure,
        threshold: delta.as_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    /// Component index per node, `None` below the threshold or on a tie.
    pub labels: Vec<Option<usize>>,
    pub measures: Vec<f64>,
    /// Number of edge-connected pieces of each mask.
    pub pieces: Vec<usize>,
    /// `|Ω_{j+1} Δ ρ⁻¹(Ω_j)| / |Ω_j|`, cyclically.
    pub mapping_residuals: Vec<f64>,
    /// Single-equation Nehari energies of `u_j 1_{Ω_j}`.
    pub domain_energies: Vec<f64>,
    pub threshold: f64,
}

impl PartitionResult {
    pub fn max_mapping_residual(&self) -> f64 {
        self.mapping_residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn energy_spread(&self) -> f64 {
        let lo = self.domain_energies.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.domain_energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi - lo) / lo.abs()
    }
}

/// Nodal argmax partition of a (nearly) segregated state.
pub fn extract_partition<T: Real>(state: &SystemState<T>, rel_threshold: f64) -> Result<PartitionResult> {
    let grid = state.grid();
    let comps = state.slices();
    let n = grid.len();
    let l = comps.len();
    let peak = comps.iter().flat_map(|c| c.iter()).fold(T::zero(), |m, &x| m.max(x.abs()));
    let delta = peak * T::lit(rel_threshold);
    let tie = peak * T::lit(1e-9);
    let labels: Vec<Option<usize>> = (0..n)
        .map(|k| {
            let mut vals: Vec<(usize, T)> = (0..l).map(|i| (i, comps[i][k].abs())).collect();
            vals.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
            // Ties (interface nodes fixed by the symmetry) belong to no cell.
            let tied = l > 1 && vals[0].1 - vals[1].1 <= tie;
            (vals[0].1 > delta && !tied).then_some(vals[0].0)
        })
        .collect();
    if labels.iter().all(Option::is_none) {
        return Err(Error::EmptyPartition);
    }
    let w = grid.weights();
    let measures: Vec<f64> =
        (0..l).map(|i| (0..n).filter(|&k| labels[k] == Some(i)).map(|k| w[k].as_f64()).sum()).collect();
    let pieces = (0..l).map(|i| count_pieces(grid, &labels, i)).collect();
    let ops = SymmetryOps::new(grid, state_group(state)?)?;
    let masks: Vec<Vec<T>> =
        (0..l).map(|i| labels.iter().map(|&x| if x == Some(i) { T::one() } else { T::zero() }).collect()).collect();
    let mapping_residuals = (0..l)
        .map(|i| {
            let mapped = ops.compose_rho(&masks[i], 1);
            let next = &masks[(i + 1) % l];
            let diff: f64 = (0..n).map(|k| ((mapped[k] - next[k]).abs() * w[k]).as_f64()).sum();
            diff / measures[i].max(f64::MIN_POSITIVE)
        })
        .collect();
    let model = state.model()?;
    let domain_energies = (0..l)
        .map(|i| {
            let masked: Vec<T> = (0..n).map(|k| comps[i][k] * masks[i][k]).collect();
            model.single_nehari(&masked).map(|(_, e)| e.as_f64())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionResult { labels, measures, pieces, mapping_residuals, domain_energies, threshold: delta.as_f64() })
}

fn count_pieces<T: Real>(grid: &Grid<T>, labels: &[Option<usize>], i: usize) -> usize {
    let adj = grid.adjacency();
    let mut seen = vec![false; labels.len()];
    let mut count = 0;
    for s in 0..labels.len() {
        if labels[s] != Some(i) || seen[s] {
            continue;
        }
        count += 1;
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(k) = stack.pop() {
            for &nb in &adj[k] {
                if !seen[nb] && labels[nb] == Some(i) {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
    }
    count
}

#[derive(Debug, Clone)]
pub struct SignChanging<T: Real> {
    pub field: Field<T>,
    /// `‖-Δw + Vw - |w|^{2p-2}w‖_{L²} / ‖w‖_V`.
    pub residual: f64,
    /// `max|w∘ρ + w| / max|w|`.
    pub antisymmetry: f64,
    pub min: f64,
    pub max: f64,
}

/// `u_1 - u_2` of a two-component state, with its single-equation residual.
pub fn sign_changing<T: Real>(state: &SystemState<T>) -> Result<SignChanging<T>> {
    if state.components.len() != 2 {
        return Err(Error::Domain(format!("sign-changing field needs two components, got {}", state.components.len())));
    }
    let (a, b) = (&state.components[0].values, &state.components[1].values);
    let wv: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let model = state.model()?.with_beta(T::zero());
    let g = &model.gradient(&[&wv])[0];
    let sq: Vec<T> = g.iter().map(|x| *x * *x).collect();
    let residual = (model.grid.integrate(&sq).sqrt() / model.norm_sq(&wv).sqrt()).as_f64();
    let ops = SymmetryOps::new(state.grid(), state_group(state)?)?;
    let rot = ops.compose_rho(&wv, 1);
    let scale = wv.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let anti = rot.iter().zip(&wv).fold(T::zero(), |m, (&x, &y)| m.max((x + y).abs())) / scale;
    let min = wv.iter().fold(f64::INFINITY, |m, &x| m.min(x.as_f64()));
    let max = wv.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x.as_f64()));
    Ok(SignChanging { field: state.components[0].with_values(wv), residual, antisymmetry: anti.as_f64(), min, max })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub iter: usize,
    /// Centre of mass of `|u_1|^{2p}`.
    pub center: [f64; 3],
    pub center_norm: f64,
    /// Share of `∫u_1²` in the outer tenth of the domain.
    pub boundary_fraction: f64,
    pub escaping: bool,
}

fn drift_slices<T: Real>(model: &EnergyModel<T>, comps: &[Vec<T>], iter: usize) -> DriftReport {
    let grid = &model.grid;
    let u = &comps[0];
    let q = model.p + model.p;
    let w = grid.weights();
    let mut mass = 0.0;
    let mut c = [0.0; 3];
    let mut l2 = 0.0;
    let mut outer = 0.0;
    let ext = grid.extent().as_f64();
    for k in 0..grid.len() {
        let pos = grid.position(k);
        let m = (u[k].abs().powf(q) * w[k]).as_f64();
        mass += m;
        for ax in 0..3 {
            c[ax] += m * pos[ax].as_f64();
        }
        let l = (u[k] * u[k] * w[k]).as_f64();
        l2 += l;
        let edge = match grid.kind() {
            GridKind::Cartesian => pos.iter().map(|x| x.as_f64().abs()).fold(0.0, f64::max),
            GridKind::Polar | GridKind::Cylindrical => {
                let r = (pos[0] * pos[0] + pos[1] * pos[1]).sqrt().as_f64();
                r.max(pos[2].as_f64().abs())
            }
        };
        if edge > 0.9 * ext {
            outer += l;
        }
    }
    if mass > 0.0 {
        c.iter_mut().for_each(|x| *x /= mass);
    }
    let boundary_fraction = if l2 > 0.0 { outer / l2 } else { 0.0 };
    DriftReport {
        iter,
        center_norm: (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt(),
        center: c,
        boundary_fraction,
        escaping: boundary_fraction > 1e-3,
    }
}

/// Centre of mass and boundary mass of the first component.
pub fn drift_diagnostic<T: Real>(state: &SystemState<T>) -> Result<DriftReport> {
    let model = state.model()?;
    let comps: Vec<Vec<T>> = state.components.iter().map(|c| c.values.clone()).collect();
    Ok(drift_slices(&model, &comps, 0))
}

/// Pinwheel ansatz with the lowest discrete Nehari energy over a coarse
/// scan of orbit radii that keep the bumps inside the grid.
pub fn default_initial<T: Real>(grid: &Arc<Grid<T>>, params: &crate::energy::Params) -> Result<(SystemState<T>, f64)> {
    params.validate()?;
    let group = GroupSpec::analog(params.m, params.ell, grid.dim())?;
    let profile = solve_ground_state(grid.dim(), params.p, params.potential.v_inf, &RadialGridSpec::default())?;
    let model = EnergyModel::new(grid.clone(), params)?;
    let ext = grid.extent().as_f64();
    let sv = params.potential.v_inf.sqrt();
    let mut best: Option<(f64, f64, Vec<Field<T>>)> = None;
    let hi = (ext - 8.0 / sv).max(0.5 * ext);
    for i in 0..12 {
        let r = 0.5 / sv + (hi - 0.5 / sv) * i as f64 / 11.0;
        let comps = assemble_ansatz(&profile, &group, r, grid)?;
        let sl: Vec<&[T]> = comps.iter().map(|c| c.values.as_slice()).collect();
        if let Ok(e) = model.nehari_energy(&sl) {
            let e = e.as_f64();
            if best.as_ref().map_or(true, |b| e < b.1) {
                best = Some((r, e, comps));
            }
        }
    }
    let (r, _, comps) = best.ok_or_else(|| Error::InfeasibleProjection { component: 0, value: 0.0 })?;
    let mut state = SystemState::new(comps, params.clone())?;
    state.pinwheel = true;
    Ok((state, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{Params, PotentialSpec};

    fn params(d: usize, beta: f64) -> Params {
        Params { d, ell: 2, m: 6, p: 2.0, beta, potential: PotentialSpec::constant(1.0) }
    }

    fn state(grid: &Arc<Grid<f64>>, beta: f64, f: impl Fn([f64; 3]) -> [f64; 2]) -> SystemState<f64> {
        let a = Field::from_fn(grid.clone(), |x| f(x)[0]);
        let b = Field::from_fn(grid.clone(), |x| f(x)[1]);
        SystemState::new(vec![a, b], params(grid.dim(), beta)).unwrap()
    }

    /// `u1 = g(r) max(cos 6θ, 0)`, `u2 = u1∘ρ`: disjoint sectors swapped by a quarter turn.
    fn sectors(grid: &Arc<Grid<f64>>) -> SystemState<f64> {
        let mut s = state(grid, -10.0, |x| {
            let (r, t) = (x[0].hypot(x[1]), x[1].atan2(x[0]));
            let g = r * (-r).exp();
            [g * (6.0 * t).cos().max(0.0), g * (-(6.0 * t).cos()).max(0.0)]
        });
        s.pinwheel = true;
        s
    }

    #[test]
    fn one_dimensional_uncoupled_minimum_is_two_solitons() {
        let grid = Arc::new(Grid::cartesian_box(1, 1601, 20.0).unwrap());
        let mut s = state(&grid, 0.0, |x| {
            let g = 0.5 * (-x[0] * x[0] / 4.0).exp();
            [g, g]
        });
        s.pinwheel = true;
        let res = minimize(&s, &SolveOptions { tol: 1e-7, ..Default::default() }).unwrap();
        let d = &res.diagnostics;
        assert!(d.converged && d.monotone, "{:?}", d.warnings);
        // c∞ = 4/3 for the sech soliton with p = 2, V = 1.
        let rel = (d.final_energy - 8.0 / 3.0).abs() / (8.0 / 3.0);
        assert!(rel < 1e-3, "energy {} rel {rel:e}", d.final_energy);
        assert!(d.final_energy <= d.initial_energy);
    }

    #[test]
    fn competitive_descent_keeps_constraints() {
        let grid = Arc::new(Grid::polar(48, 24, 8.0).unwrap());
        let (init, _) = default_initial(&grid, &params(2, -0.5)).unwrap();
        let res = minimize(&init, &SolveOptions { max_iters: 300, ..Default::default() }).unwrap();
        let d = &res.diagnostics;
        assert!(d.monotone);
        assert!(d.max_constraint < 1e-10, "{}", d.max_constraint);
        assert!(d.max_pinwheel < 1e-12, "{}", d.max_pinwheel);
        assert!(d.final_energy < d.initial_energy);
        assert!(d.min_component_value >= 0.0);
        assert!(d.records.windows(2).all(|w| w[1].energy <= w[0].energy));
    }

    #[test]
    fn fixed_and_backtracking_rules_validate() {
        let bad = SolveOptions { step_rule: StepRule::Fixed { step: 0.0 }, ..Default::default() };
        assert!(matches!(bad.validate(), Err(Error::Parameter(_))));
        let bad = SolveOptions {
            step_rule: StepRule::Backtracking { initial: 2.0, armijo: 1e-4, shrink: 0.5, max: 1.0 },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolveOptions { tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolveOptions::default().validate().is_ok());
    }

    #[test]
    fn infeasible_start_is_repaired() {
        let grid = Arc::new(Grid::polar(48, 24, 14.0).unwrap());
        // Identical components at beta = -2 give a negative Nehari denominator.
        let mut s = state(&grid, -2.0, |x| {
            let g = (-(x[0] * x[0] + x[1] * x[1]) / 2.0).exp();
            [g, g]
        });
        s.pinwheel = true;
        let res = minimize(&s, &SolveOptions { max_iters: 5, ..Default::default() }).unwrap();
        assert!(res.diagnostics.warnings.iter().any(|w| w.contains("repaired")));
        assert!(res.diagnostics.final_energy.is_finite());
    }

    #[test]
    fn schedules_must_be_monotone_and_competitive() {
        let ok = ContinuationSchedule { betas: vec![-1.0, -4.0], warm_start: true };
        assert!(ok.validate().is_ok() && ok.decreasing());
        assert!(ContinuationSchedule { betas: vec![-1.0, -4.0, -2.0], warm_start: true }.validate().is_err());
        assert!(ContinuationSchedule { betas: vec![0.5], warm_start: true }.validate().is_err());
        assert!(ContinuationSchedule { betas: vec![], warm_start: true }.validate().is_err());
    }

    #[test]
    fn continuation_restarts_when_leaving_the_nehari_set() {
        let grid = Arc::new(Grid::polar(32, 24, 5.0).unwrap());
        let (init, _) = default_initial(&grid, &params(2, 0.0)).unwrap();
        let sched = ContinuationSchedule { betas: vec![0.0, -1.0], warm_start: true };
        let steps = continuation(&init, &sched, &SolveOptions { max_iters: 200, ..Default::default() }).unwrap();
        assert_eq!(steps.len(), 2);
        assert!(steps[1].result.diagnostics.warnings.iter().any(|w| w.contains("infeasible")));
        assert!(steps[1].result.diagnostics.final_energy.is_finite());
    }

    #[test]
    fn overlap_of_identical_and_disjoint_states() {
        let grid = Arc::new(Grid::polar(64, 24, 8.0).unwrap());
        let same = state(&grid, -1.0, |x| {
            let g = (-(x[0] * x[0] + x[1] * x[1])).exp();
            [g, g]
        });
        let ov = overlap_metrics(&same, 1e-3).unwrap();
        let u = &same.components[0].values;
        let q: Vec<f64> = u.iter().map(|x| x.powi(4)).collect();
        assert!((ov.total - grid.integrate(&q)).abs() < 1e-12);
        assert!((ov.beta_times_overlap + ov.total).abs() < 1e-12);
        assert!(ov.support_fraction > 0.0);
        let bump = |x: [f64; 3], c: f64| (1.0 - ((x[0] - c).powi(2) + x[1] * x[1])).max(0.0).powi(2);
        let apart = state(&grid, -1.0, |x| [bump(x, 4.0), bump(x, -4.0)]);
        let ov = overlap_metrics(&apart, 1e-3).unwrap();
        assert_eq!(ov.total, 0.0);
        assert_eq!(ov.support_intersection, 0.0);
    }

    #[test]
    fn sector_partition_maps_under_rho() {
        let grid = Arc::new(Grid::polar(48, 120, 6.0).unwrap());
        let s = sectors(&grid);
        let part = extract_partition(&s, 1e-3).unwrap();
        assert_eq!(part.pieces, vec![6, 6]);
        assert!(part.max_mapping_residual() < 1e-12, "{:?}", part.mapping_residuals);
        assert!((part.measures[0] - part.measures[1]).abs() < 1e-10);
        let sc = sign_changing(&s).unwrap();
        assert!(sc.antisymmetry < 1e-12);
        assert!(sc.min < 0.0 && sc.max > 0.0);
        let zero = state(&grid, -1.0, |_| [0.0, 0.0]);
        assert!(matches!(extract_partition(&zero, 1e-3), Err(Error::EmptyPartition)));
    }

    #[test]
    fn drift_flags_off_centre_mass() {
        let grid = Arc::new(Grid::polar(64, 24, 10.0).unwrap());
        let blob = |c: f64| move |x: [f64; 3]| {
            let g = (-((x[0] - c).powi(2) + x[1] * x[1])).exp();
            [g, g]
        };
        let centred = drift_diagnostic(&state(&grid, -1.0, blob(0.0))).unwrap();
        assert!(centred.center_norm < 1e-10 && !centred.escaping);
        let shifted = drift_diagnostic(&state(&grid, -1.0, blob(9.5))).unwrap();
        assert!((shifted.center[0] - 9.5).abs() < 0.5, "{:?}", shifted.center);
        assert!(shifted.escaping);
    }
}
