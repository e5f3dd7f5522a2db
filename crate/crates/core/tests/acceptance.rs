//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p pinwheel --test acceptance -- --nocapture`.

use pinwheel::ansatz::*;
use pinwheel::energy::{EnergyModel, Params, PotentialSpec, SystemState};
use pinwheel::groundstate::*;
use pinwheel::groups::*;
use pinwheel::mesh::{Field, Grid};
use pinwheel::solver::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

struct Check {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Check {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn that(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.failures.push(what.clone());
        }
        self.notes.push(what);
    }
}

fn criterion(id: usize, name: &str, budget: Duration, body: impl FnOnce(&mut Check)) -> bool {
    let mut c = Check::new();
    let t = Instant::now();
    body(&mut c);
    let dt = t.elapsed();
    c.that(dt <= budget, format!("runtime {:.1}s <= {:.0}s", dt.as_secs_f64(), budget.as_secs_f64()));
    let ok = c.failures.is_empty();
    let shown = if ok { &c.notes } else { &c.failures };
    println!("{} {id:>2} {name}: {}", if ok { "PASS" } else { "FAIL" }, shown.join("; "));
    ok
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn profile(d: usize) -> RadialProfile {
    solve_ground_state(d, 2.0, 1.0, &RadialGridSpec::default()).expect("ground state")
}

fn group_algebra(c: &mut Check) {
    let mut worst = 0.0f64;
    for (m, ell, n) in [(6usize, 2usize, 4usize), (8, 2, 5), (10, 3, 6), (4, 5, 4)] {
        let spec = GroupSpec::paper(m, ell, n).unwrap();
        let th = |j: i64| spec.theta::<f64>(j).unwrap();
        let rh = |k: i64| spec.rho::<f64>(k).unwrap();
        for j in 0..m as i64 {
            worst = worst.max(th(j).orthogonality_defect());
            for k in 0..m as i64 {
                worst = worst.max(th(j).compose(&th(k)).max_diff(&th(j + k)));
            }
            for k in -(ell as i64 - 1)..ell as i64 {
                worst = worst.max(th(j).compose(&rh(k)).max_diff(&rh(k).compose(&th(j))));
            }
        }
        worst = worst.max(max_identity_defect(&th(1).pow(m as u32)));
        for k in -(ell as i64 - 1)..ell as i64 {
            worst = worst.max(rh(k).orthogonality_defect());
            worst = worst.max(rh(k).compose(&rh(-k)).max_diff(&Isometry::identity(n)));
        }
        let half = rh(1).pow(ell as u32);
        for r in 0..n {
            for col in 0..n {
                let expect = match (r == col, r < 4) {
                    (true, true) => -1.0,
                    (true, false) => 1.0,
                    _ => 0.0,
                };
                worst = worst.max((half.entry(r, col) - expect).abs());
            }
        }
    }
    c.that(worst < 1e-12, format!("max defect {worst:.1e} < 1e-12"));
    let odd = [3usize, 5, 7].iter().all(|&m| GroupSpec::paper(m, 2, 4).is_err());
    c.that(odd, "odd m rejected");
}

fn orbit_constants(c: &mut Check) {
    let mut worst = 0.0f64;
    for (m, ell) in [(6usize, 2usize), (8, 2), (10, 2), (10, 3)] {
        let spec = GroupSpec::paper(m, ell, 4).unwrap();
        let orb = orbit_points::<f64>(&[1.0, 0.0, 0.0, 0.0], &spec).unwrap();
        let intra = 2.0 * (PI / m as f64).sin();
        let inter = 2.0 * (PI / (2 * ell) as f64).sin();
        worst = worst.max((orb.min_intra_distance().unwrap() - intra).abs());
        worst = worst.max((orb.min_inter_distance().unwrap() - inter).abs());
    }
    c.that(worst < 1e-12, format!("max distance error {worst:.1e} < 1e-12"));
    let flips = !separation_constants(8, 2).unwrap().strong_ok && separation_constants(10, 2).unwrap().strong_ok;
    c.that(flips, "strong condition false at m=8, true at m=10 (l=2)");
}

fn soliton_constants(c: &mut Check) {
    let w = profile(1);
    let fit = fit_decay(&w).unwrap();
    // sech soliton: ω = √2 sech r.
    let oracle = [
        ("omega(0)", w.peak(), 2f64.sqrt()),
        ("norm", w.norm_sq(), 16.0 / 3.0),
        ("c_inf", ground_energy(&w), 4.0 / 3.0),
        ("a_N", fit.a_n, 2.0 * 2f64.sqrt()),
    ];
    for (name, got, want) in oracle {
        c.that(rel(got, want) < 1e-3, format!("{name} {got:.7} vs {want:.7}"));
    }
}

fn decay_law(c: &mut Check) {
    for d in 1..=3 {
        let w = profile(d);
        let fit = fit_decay(&w).unwrap();
        c.that(rel(fit.exponent, 1.0) < 0.02, format!("d={d} exponent {:.5}", fit.exponent));
        let dm1 = d as f64 - 1.0;
        let inside = w.r_nodes.iter().zip(&w.values).skip(1).all(|(&r, &v)| {
            let q = v / (r.powf(-dm1 / 2.0).min(1.0) * (-r).exp());
            q >= fit.c1 * (1.0 - 1e-12) && q <= fit.c2 * (1.0 + 1e-12)
        });
        c.that(inside && fit.c1 > 0.0 && fit.c2.is_finite(), format!("d={d} bound [{:.3}, {:.3}] at every node", fit.c1, fit.c2));
        if d == 1 {
            // √2 sech r / e^{-r} = 2√2 / (1 + e^{-2r}) ∈ (√2, 2√2).
            let ok = fit.c1 >= 2f64.sqrt() * (1.0 - 1e-6) && fit.c2 <= 2.0 * 2f64.sqrt() * (1.0 + 1e-6);
            c.that(ok, "d=1 constants inside the sech envelope");
        }
    }
}

fn power_inequality(c: &mut Check) {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut violations = 0;
    let mut oracle_violations = 0;
    for _ in 0..10_000 {
        let q = rng.gen_range(2.0..8.0);
        let n = rng.gen_range(1..9);
        let a: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen_range(0.0..10.0) }).collect();
        if !power_inequality_check(q, &a).unwrap() {
            violations += 1;
        }
        // Direct double sum, independent of the library's rearrangement.
        let lhs = a.iter().sum::<f64>().powf(q);
        let mut rhs = a.iter().map(|x| x.powf(q)).sum::<f64>();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    rhs += (q - 1.0) * a[i].powf(q - 1.0) * a[j];
                }
            }
        }
        if lhs < rhs * (1.0 - 1e-12) {
            oracle_violations += 1;
        }
    }
    c.that(violations == 0, format!("{violations} library violations in 10000"));
    c.that(oracle_violations == 0, format!("{oracle_violations} direct-sum violations"));
}

fn convolution_bound(c: &mut Check) {
    let seps: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
    for d in [1usize, 3] {
        for (mu1, mu2) in [(1.0, 2.0), (0.5, 1.5)] {
            let sw = exp_convolution_sweep(mu1, mu2, d, &seps).unwrap();
            c.that(
                sw.bounded(0.05),
                format!("d={d} mu=({mu1},{mu2}) slope upper {:.2e}", sw.relative_slope_upper),
            );
        }
    }
}

fn interaction_asymptotics(c: &mut Check) {
    let rep = verify_interaction_asymptotics(&profile(3), 6, 1.5, &default_r_grid(1.0)).unwrap();
    c.that(rep.plateau_variation < 0.05, format!("plateau variation {:.1e}", rep.plateau_variation));
    c.that(rep.power_ratio < 0.05 && rep.power_monotone, format!("power ratio {:.1e} monotone={}", rep.power_ratio, rep.power_monotone));
    c.that(
        rep.potential_ratio < 0.05 && rep.potential_monotone,
        format!("potential ratio {:.1e} monotone={}", rep.potential_ratio, rep.potential_monotone),
    );
}

fn epsilon_rate(c: &mut Check) {
    let w = profile(3);
    for m in [6usize, 10] {
        let e = epsilon_scan(&w, m, 2, &default_r_grid(1.0)).unwrap();
        let want = 2.0 * (PI / m as f64).sin();
        c.that(rel(e.rate, want) < 0.05, format!("m={m} rate {:.5} vs {want:.5}", e.rate));
    }
}

fn existence(c: &mut Check) {
    let w = profile(3);
    let b = existence_bound(&w, 6, 2, -1.0, &PotentialSpec::constant(1.0), &default_r_grid(1.0)).unwrap();
    let threshold = 12.0 * ground_energy(&w);
    c.that(rel(b.threshold, threshold) < 1e-12, format!("threshold {:.6}", b.threshold));
    c.that(b.crossed, format!("crossed at R* = {:?}", b.r_star));
    let last = b.rows.last().unwrap().bound;
    c.that(rel(last, threshold) < 0.01, format!("terminal gap {:.1e}", rel(last, threshold)));
}

fn segregated(c: &mut Check) {
    let w = profile(3);
    let pot = PotentialSpec::constant(1.0);
    let grid = default_r_grid(1.0);
    let s = segregated_bound(&w, 10, 2, None, &pot, &grid).unwrap();
    c.that(s.disjointness_margin > 1.0, format!("disjointness margin {:.4}", s.disjointness_margin));
    c.that(s.bound.crossed, format!("crossed at R* = {:?}", s.bound.r_star));
    let eps = s.cutoff.eps;
    let (n_want, p_want) = (2.0 * (1.0 - eps), 4.0 * (1.0 - eps));
    c.that(rel(s.norm_loss_rate, n_want) < 0.05, format!("norm loss rate {:.4} vs {n_want:.4}", s.norm_loss_rate));
    c.that(rel(s.power_loss_rate, p_want) < 0.05, format!("power loss rate {:.4} vs {p_want:.4}", s.power_loss_rate));
    let refused = matches!(segregated_bound(&w, 8, 2, None, &pot, &grid), Err(pinwheel::Error::Precondition(_)));
    c.that(refused, "m=8 refused by precondition");
}

fn random_bumps(grid: &Arc<Grid<f64>>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let cx = rng.gen_range(-1.5..1.5);
            let cy = rng.gen_range(-1.5..1.5);
            let a = rng.gen_range(0.5..2.0);
            let wid = rng.gen_range(0.5..1.5);
            Field::from_fn(grid.clone(), |x| a * (-((x[0] - cx).powi(2) + (x[1] - cy).powi(2)) / wid).exp()).values
        })
        .collect()
}

fn energy_consistency(c: &mut Check) {
    let grid = Arc::new(Grid::<f64>::cartesian_box(2, 31, 4.0).unwrap());
    let params = Params { d: 2, ell: 2, m: 6, p: 2.0, beta: -0.5, potential: PotentialSpec::constant(1.0) };
    let model = EnergyModel::new(grid.clone(), &params).unwrap();
    let w = grid.weights().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let sl = |v: &[Vec<f64>]| v.iter().map(|x| x.to_vec()).collect::<Vec<_>>();
    let mut fd_worst = 0.0f64;
    for _ in 0..20 {
        let u = random_bumps(&grid, 2, &mut rng);
        let v = random_bumps(&grid, 2, &mut rng);
        let g = model.gradient(&u.iter().map(|x| x.as_slice()).collect::<Vec<_>>());
        let dir: f64 = (0..2).map(|i| (0..w.len()).map(|k| w[k] * g[i][k] * v[i][k]).sum::<f64>()).sum();
        let h = 1e-5;
        let e_at = |s: f64| {
            let c = sl(&u).into_iter().zip(&v).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + s * y).collect::<Vec<f64>>()).collect::<Vec<_>>();
            model.energy(&c.iter().map(|x| x.as_slice()).collect::<Vec<_>>())
        };
        let fd = (e_at(h) - e_at(-h)) / (2.0 * h);
        fd_worst = fd_worst.max(rel(dir, fd));
    }
    c.that(fd_worst < 1e-5, format!("gradient vs finite differences {fd_worst:.1e}"));
    let (mut stat_worst, mut closed_worst, mut feasible) = (0.0f64, 0.0f64, 0);
    while feasible < 100 {
        let u = random_bumps(&grid, 2, &mut rng);
        let s_u = u.iter().map(|x| x.as_slice()).collect::<Vec<_>>();
        let Ok(s) = model.nehari_scalar(&s_u) else { continue };
        feasible += 1;
        let su: Vec<Vec<f64>> = u.iter().map(|x| x.iter().map(|y| s * y).collect()).collect();
        let ssl: Vec<&[f64]> = su.iter().map(|x| x.as_slice()).collect();
        let g = model.gradient(&ssl);
        let pairing: f64 = (0..2).map(|i| (0..w.len()).map(|k| w[k] * g[i][k] * su[i][k]).sum::<f64>()).sum();
        let norm: f64 = ssl.iter().map(|x| model.norm_sq(x)).sum();
        stat_worst = stat_worst.max(pairing.abs() / norm);
        let direct = model.energy(&ssl);
        closed_worst = closed_worst.max(rel(model.nehari_energy(&s_u).unwrap(), direct));
    }
    c.that(stat_worst < 1e-10, format!("Nehari stationarity {stat_worst:.1e}"));
    c.that(closed_worst < 1e-10, format!("closed form vs direct {closed_worst:.1e}"));
}

fn analog_params(beta: f64) -> Params {
    Params { d: 2, ell: 2, m: 6, p: 2.0, beta, potential: PotentialSpec::constant(1.0) }
}

fn solver_sanity(c: &mut Check) {
    let grid = Arc::new(Grid::<f64>::polar(128, 120, 16.0).unwrap());
    let (init, r) = default_initial(&grid, &analog_params(-1.0)).unwrap();
    let res = minimize(&init, &SolveOptions::default()).unwrap();
    let d = &res.diagnostics;
    c.that(d.monotone, "monotone descent");
    c.that(d.max_constraint < 1e-8, format!("constraint {:.1e}", d.max_constraint));
    c.that(d.converged && d.final_residual < 1e-4, format!("residual {:.1e} after {} iterations", d.final_residual, d.iterations));
    c.that(
        d.final_energy < d.initial_energy,
        format!("energy {:.6} < ansatz {:.6} (R={r:.2})", d.final_energy, d.initial_energy),
    );
}

fn v_gap(model: &EnergyModel<f64>, a: &SystemState<f64>, b: &SystemState<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in a.components.iter().zip(&b.components) {
        let diff: Vec<f64> = x.values.iter().zip(&y.values).map(|(p, q)| p - q).collect();
        num += model.norm_sq(&diff);
        den += model.norm_sq(&y.values);
    }
    (num / den).sqrt()
}

fn continuation_limits(c: &mut Check) {
    let grid = Arc::new(Grid::<f64>::polar(128, 120, 4.0).unwrap());
    let opts = SolveOptions { max_iters: 6000, ..Default::default() };

    // β → 0⁻: warm-started from the decoupled minimizer.
    let (init0, _) = default_initial(&grid, &analog_params(0.0)).unwrap();
    let base = minimize(&init0, &opts).unwrap().state;
    let model = base.model().unwrap();
    let sched = ContinuationSchedule { betas: vec![-0.1, -0.03, -0.01, -0.003, -0.001], warm_start: true };
    let steps = continuation(&base, &sched, &opts).unwrap();
    let gaps: Vec<f64> = steps.iter().map(|s| v_gap(&model, &s.result.state, &base)).collect();
    let conv = steps.iter().all(|s| s.result.diagnostics.converged);
    let terminal = *gaps.last().unwrap();
    c.that(conv && terminal < 1e-2, format!("0- gaps {:?}, terminal {terminal:.1e} < 1e-2", fmt(&gaps)));

    // β → -∞.
    let (init, _) = default_initial(&grid, &analog_params(-1.0)).unwrap();
    let sched = ContinuationSchedule { betas: vec![-1.0, -4.0, -16.0, -64.0, -256.0], warm_start: true };
    let steps = continuation(&init, &sched, &opts).unwrap();
    let conv = steps.iter().all(|s| s.result.diagnostics.converged);
    c.that(conv, "all -inf steps converged");
    let ov: Vec<f64> = steps.iter().map(|s| s.overlaps.total).collect();
    c.that(ov.windows(2).all(|w| w[1] < w[0]), format!("overlap strictly decreasing {:?}", fmt(&ov)));
    let bo: Vec<f64> = steps.iter().map(|s| s.overlaps.beta_times_overlap.abs()).collect();
    let ratio = bo[4] / bo[0];
    c.that(ratio < 0.05, format!("|beta|*overlap {:?}, terminal/initial {ratio:.3} < 0.05", fmt(&bo)));
    let energies: Vec<f64> = steps.iter().map(|s| s.result.diagnostics.final_energy).collect();
    c.that(beta_monotone(&steps, 1e-8), format!("energies non-decreasing {:?}", fmt(&energies)));
    let last = &steps[4].result.state;
    let supp = steps[4].overlaps.support_fraction;
    c.that(supp < 0.05, format!("support intersection {supp:.3} of domain < 0.05"));
    let part = extract_partition(last, 1e-3).unwrap();
    let map = part.max_mapping_residual();
    c.that(map < 0.05, format!("partition rho-map residual {map:.1e} < 0.05"));
    let sc = sign_changing(last).unwrap();
    c.that(sc.antisymmetry < 1e-2, format!("antisymmetry {:.1e} < 1e-2", sc.antisymmetry));
}

fn fmt(xs: &[f64]) -> Vec<String> {
    xs.iter().map(|x| format!("{x:.3e}")).collect()
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "group algebra", s(1), group_algebra),
        criterion(2, "orbit constants", s(1), orbit_constants),
        criterion(3, "ground state d=1", s(5), soliton_constants),
        criterion(4, "decay law", s(30), decay_law),
        criterion(5, "power inequality", s(5), power_inequality),
        criterion(6, "exponential convolution", s(60), convolution_bound),
        criterion(7, "interaction asymptotics", s(120), interaction_asymptotics),
        criterion(8, "epsilon_R rate", s(120), epsilon_rate),
        criterion(9, "existence bound", s(120), existence),
        criterion(10, "segregated bound", s(120), segregated),
        criterion(11, "energy and gradient", s(60), energy_consistency),
        criterion(12, "solver sanity", s(300), solver_sanity),
        criterion(13, "beta continuation", s(1200), continuation_limits),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, ok)| !**ok).map(|(i, _)| i + 1).collect();
    println!("{} of {} criteria pass", results.len() - failed.len(), results.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
