use pinwheel::ansatz::*;
use pinwheel::energy::SystemState;
use pinwheel::groundstate::{fit_decay, ground_energy, solve_ground_state, RadialProfile};
use pinwheel::groups::{orbit_points, separation_constants, GroupSpec};
use pinwheel::io::{self as pio, Cell, Csv, FieldFormat};
use pinwheel::solver::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::config::{RunConfig, ScanVariant};
use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Output(format!("{}: {e}", parent.display())))?;
    }
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<(), CliError> {
    let mut f = create(dir, name)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Output(e.to_string()))?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn profile(cfg: &RunConfig, d: usize) -> Result<RadialProfile, CliError> {
    let pr = &cfg.problem;
    Ok(solve_ground_state(
        d,
        pr.p,
        pr.potential.v_inf,
        &cfg.radial,
    )?)
}

pub fn groundstate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let w = profile(cfg, cfg.problem.d)?;
    let fit = fit_decay(&w)?;
    let mut f = create(out, "profile.txt")?;
    w.write_dump(&mut f, Some(&fit))?;
    f.flush()?;
    let c_inf = ground_energy(&w);
    write_json(
        out,
        "groundstate.json",
        &json!({
            "d": w.dim, "p": w.p, "v_inf": w.v_inf,
            "c_inf": c_inf, "a_N": fit.a_n, "exponent": fit.exponent,
            "omega0": w.peak(), "norm_sq": w.norm_sq(),
            "fit_window": [fit.fit_window.0, fit.fit_window.1], "fit_residual": fit.residual,
            "c1": fit.c1, "c2": fit.c2, "b_N": fit.b_n, "ode_residual": fit.ode_residual,
        }),
    )?;
    println!(
        "c_inf {c_inf:.10}  a_N {:.8}  exponent {:.6}",
        fit.a_n, fit.exponent
    );
    Ok(())
}

pub fn orbit(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let pr = &cfg.problem;
    let n = cfg.orbit.n_dim;
    let spec = GroupSpec::paper(pr.m, pr.ell, n)?;
    let sep = separation_constants(pr.m, pr.ell)?;
    let mut base = vec![0.0; n];
    base[0] = cfg.orbit.radius;
    let orb = orbit_points::<f64>(&base, &spec)?;
    let mut header = vec!["component".to_string(), "index".to_string()];
    header.extend((0..n).map(|k| format!("x{k}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(create(out, "orbit.csv")?, &header)?;
    for (pt, &(i, j)) in orb.points.iter().zip(&orb.labels) {
        let mut row = vec![Cell::I(i as i64 + 1), Cell::I(j as i64)];
        row.extend(pt.iter().map(|&x| Cell::F(x)));
        csv.row(&row)?;
    }
    csv.finish()?.flush()?;
    let intra = orb.min_intra_distance();
    let inter = orb.min_inter_distance();
    write_json(
        out,
        "orbit.json",
        &json!({
            "m": pr.m, "ell": pr.ell, "n_dim": n, "points": orb.points.len(),
            "intra": sep.intra, "inter": sep.inter,
            "min_intra_distance": intra, "min_inter_distance": inter,
            "existence_ok": sep.existence_ok, "strong_ok": sep.strong_ok,
        }),
    )?;
    println!(
        "m={} l={}: intra {:.12} inter {:.12} existence_ok={} strong_ok={}",
        pr.m, pr.ell, sep.intra, sep.inter, sep.existence_ok, sep.strong_ok
    );
    Ok(())
}

struct Suite {
    rows: Vec<(String, String, f64, f64, bool)>,
}

impl Suite {
    fn add(&mut self, suite: &str, check: String, value: f64, target: f64, pass: bool) {
        self.rows.push((suite.into(), check, value, target, pass));
    }
}

/// Lemma checks: exponential convolution, interaction asymptotics and
/// rates, the power inequality, and the cutoff losses.
pub fn verify(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let v = &cfg.verify;
    let tol = v.tol;
    let mut s = Suite { rows: Vec::new() };
    let steps = (v.sweep_max / v.sweep_step).floor() as usize;
    let seps: Vec<f64> = (0..=steps).map(|i| i as f64 * v.sweep_step).collect();
    for d in [1usize, 3] {
        let sw = exp_convolution_sweep(1.0, 2.0, d, &seps)?;
        s.add(
            "convolution",
            format!("d={d} relative slope upper"),
            sw.relative_slope_upper,
            tol,
            sw.bounded(tol),
        );
    }

    let w = profile(cfg, 3)?;
    let sv = w.v_inf.sqrt();
    let grid = cfg.scan.r_grid(w.v_inf);
    let asym = verify_interaction_asymptotics(&w, cfg.problem.m, v.kappa, &grid)?;
    s.add(
        "interaction",
        "plateau variation".into(),
        asym.plateau_variation,
        tol,
        asym.plateau_variation < tol,
    );
    s.add(
        "interaction",
        "power ratio".into(),
        asym.power_ratio,
        tol,
        asym.power_ratio < tol && asym.power_monotone,
    );
    s.add(
        "interaction",
        "potential ratio".into(),
        asym.potential_ratio,
        tol,
        asym.potential_ratio < tol && asym.potential_monotone,
    );
    for m in [6usize, 10] {
        let e = epsilon_scan(&w, m, 2, &grid)?;
        s.add(
            "interaction",
            format!("m={m} eps_R rate error"),
            e.rate_error(),
            tol,
            e.rate_error() < tol,
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut violations = 0usize;
    for _ in 0..v.instances {
        let q = rng.gen_range(2.0..8.0);
        let n = rng.gen_range(1..9);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10.0)).collect();
        if !power_inequality_check(q, &a)? {
            violations += 1;
        }
    }
    s.add(
        "power inequality",
        format!("violations in {}", v.instances),
        violations as f64,
        0.0,
        violations == 0,
    );

    let seg = segregated_bound(&w, 10, 2, None, &cfg.problem.potential, &grid)?;
    let rn = (seg.norm_loss_rate / seg.predicted_norm_rate - 1.0).abs();
    let rp = (seg.power_loss_rate / seg.predicted_power_rate - 1.0).abs();
    s.add("cutoff", "norm loss rate error".into(), rn, tol, rn < tol);
    s.add("cutoff", "power loss rate error".into(), rp, tol, rp < tol);
    s.add(
        "cutoff",
        "disjointness margin".into(),
        seg.disjointness_margin,
        1.0,
        seg.disjointness_margin > 1.0,
    );

    let mut csv = Csv::new(
        create(out, "verify.csv")?,
        &["suite", "check", "value", "target", "pass"],
    )?;
    let mut failed = Vec::new();
    for (suite, check, value, target, pass) in &s.rows {
        csv.row(&[
            Cell::S(suite.clone()),
            Cell::S(check.clone()),
            Cell::F(*value),
            Cell::F(*target),
            Cell::B(*pass),
        ])?;
        println!(
            "{} {suite:<17} {check:<32} {value:.4e} (target {target:.2e})",
            if *pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            failed.push(format!("{suite}: {check}"));
        }
    }
    csv.finish()?.flush()?;
    write_json(
        out,
        "verify.json",
        &json!({
            "v_inf": w.v_inf, "predicted_eps_rate_m6": 2.0 * (std::f64::consts::PI / 6.0).sin() * sv,
            "asymptotics": asym, "segregated_rates": [seg.norm_loss_rate, seg.power_loss_rate],
            "failed": failed,
        }),
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!(
            "{} check(s) failed: {}",
            failed.len(),
            failed.join(", ")
        )))
    }
}

pub fn ansatz_scan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let pr = &cfg.problem;
    let w = profile(cfg, pr.d)?;
    let grid = cfg.scan.r_grid(pr.potential.v_inf);
    let summary = match cfg.scan.variant {
        ScanVariant::Existence => {
            let bound = existence_bound(&w, pr.m, pr.ell, pr.beta, &pr.potential, &grid)?;
            let eps = epsilon_scan(&w, pr.m, pr.ell, &grid)?;
            pio::write_interaction_csv(create(out, "interaction.csv")?, &bound, Some(&eps))?;
            json!({
                "variant": "existence", "m": pr.m, "ell": pr.ell, "beta": pr.beta,
                "threshold": bound.threshold, "crossed": bound.crossed, "r_star": bound.r_star,
                "terminal_gap": bound.terminal_gap,
                "eps_rate": eps.rate, "eps_rate_nearest": eps.rate_nearest, "predicted_rate": eps.predicted_rate,
                "amplitude": eps.amplitude, "plateau_variation": eps.plateau_variation,
                "dominance_ratio": eps.dominance_ratio, "dominance_monotone": eps.dominance_monotone,
            })
        }
        ScanVariant::Segregated => {
            let seg = segregated_bound(&w, pr.m, pr.ell, cfg.scan.cutoff, &pr.potential, &grid)?;
            let mut csv = Csv::new(
                create(out, "segregated.csv")?,
                &[
                    "R",
                    "s",
                    "eps_R",
                    "bound",
                    "threshold",
                    "crossed",
                    "norm_loss",
                    "power_loss",
                ],
            )?;
            for r in &seg.rows {
                csv.row(&[
                    Cell::F(r.r),
                    Cell::F(r.s),
                    Cell::F(r.eps_r),
                    Cell::F(r.bound),
                    Cell::F(seg.bound.threshold),
                    Cell::B(r.crossed),
                    Cell::F(r.norm_loss),
                    Cell::F(r.power_loss),
                ])?;
            }
            csv.finish()?.flush()?;
            json!({
                "variant": "segregated", "m": pr.m, "ell": pr.ell, "cutoff": seg.cutoff,
                "disjointness_margin": seg.disjointness_margin,
                "threshold": seg.bound.threshold, "crossed": seg.bound.crossed, "r_star": seg.bound.r_star,
                "terminal_gap": seg.bound.terminal_gap,
                "norm_loss_rate": seg.norm_loss_rate, "power_loss_rate": seg.power_loss_rate,
                "predicted_norm_rate": seg.predicted_norm_rate, "predicted_power_rate": seg.predicted_power_rate,
            })
        }
    };
    write_json(out, "crossing.json", &summary)?;
    println!("crossed={} R*={}", summary["crossed"], summary["r_star"]);
    Ok(())
}

fn dump_state(
    state: &SystemState<f64>,
    out: &Path,
    stem: &str,
    format: FieldFormat,
) -> Result<(), CliError> {
    let ext = match format {
        FieldFormat::Text => "txt",
        FieldFormat::Binary => "bin",
    };
    for (i, c) in state.components.iter().enumerate() {
        let mut f = create(out, &format!("{stem}u{}.{ext}", i + 1))?;
        pio::write_field(&mut f, c, format)?;
        f.flush()?;
    }
    Ok(())
}

fn solve_opts(cfg: &RunConfig) -> SolveOptions {
    SolveOptions {
        seed: cfg.seed,
        ..cfg.solver.clone()
    }
}

pub fn solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let pr = cfg.problem.params();
    let grid = cfg.grid.build(pr.d)?;
    let (init, radius) = default_initial(&grid, &pr)?;
    let res = minimize(&init, &solve_opts(cfg))?;
    let d = &res.diagnostics;
    let mut f = create(out, "diagnostics.csv")?;
    pio::write_diagnostics_csv(&mut f, d)?;
    f.flush()?;
    dump_state(&res.state, out, "", cfg.format)?;
    let ov = overlap_metrics(&res.state, 1e-3)?;
    let c_inf = ground_energy(&profile(cfg, pr.d)?);
    let threshold = (pr.ell * pr.m) as f64 * c_inf;
    write_json(
        out,
        "summary.json",
        &json!({
            "command": "solve", "beta": pr.beta, "ansatz_radius": radius,
            "converged": d.converged, "iterations": d.iterations,
            "initial_energy": d.initial_energy, "final_energy": d.final_energy,
            "threshold": threshold, "below_threshold": d.final_energy < threshold,
            "final_residual": d.final_residual, "max_constraint": d.max_constraint,
            "max_pinwheel": d.max_pinwheel, "monotone": d.monotone,
            "min_component_value": d.min_component_value,
            "drift": d.drift.last(), "overlap": ov, "warnings": d.warnings,
        }),
    )?;
    println!(
        "energy {:.10} (ansatz {:.10}) residual {:.3e} iterations {} converged={}",
        d.final_energy, d.initial_energy, d.final_residual, d.iterations, d.converged
    );
    for w in &d.warnings {
        eprintln!("warning: {w}");
    }
    if !d.converged {
        return Err(CliError::Numerical(format!(
            "not converged: residual {:.3e}",
            d.final_residual
        )));
    }
    Ok(())
}

pub fn continuate(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let mut pr = cfg.problem.params();
    pr.beta = cfg.schedule.betas[0];
    let grid = cfg.grid.build(pr.d)?;
    let (init, _) = default_initial(&grid, &pr)?;
    let steps = continuation(&init, &cfg.schedule, &solve_opts(cfg))?;
    pio::write_continuation_csv(create(out, "continuation.csv")?, &steps)?;
    let mut per_step = Vec::new();
    for (k, s) in steps.iter().enumerate() {
        let mut f = create(out, &format!("steps/{k:02}_diagnostics.csv"))?;
        pio::write_diagnostics_csv(&mut f, &s.result.diagnostics)?;
        f.flush()?;
        dump_state(&s.result.state, out, &format!("steps/{k:02}_"), cfg.format)?;
        let part = extract_partition(&s.result.state, 1e-3).ok();
        let sign = if pr.ell == 2 {
            sign_changing(&s.result.state).ok()
        } else {
            None
        };
        per_step.push(json!({
            "beta": s.beta,
            "energy": s.result.diagnostics.final_energy,
            "converged": s.result.diagnostics.converged,
            "overlap": s.overlaps,
            "partition_mapping_residual": part.as_ref().map(|p| p.max_mapping_residual()),
            "partition_pieces": part.as_ref().map(|p| p.pieces.clone()),
            "domain_energies": part.as_ref().map(|p| p.domain_energies.clone()),
            "antisymmetry": sign.as_ref().map(|x| x.antisymmetry),
            "sign_changing_residual": sign.as_ref().map(|x| x.residual),
            "warnings": s.result.diagnostics.warnings,
        }));
        println!(
            "beta {:>10.4} energy {:.10} overlap {:.4e} converged={}",
            s.beta,
            s.result.diagnostics.final_energy,
            s.overlaps.total,
            s.result.diagnostics.converged
        );
    }
    let monotone = beta_monotone(&steps, 1e-8);
    write_json(
        out,
        "summary.json",
        &json!({ "command": "continuate", "energies_monotone_in_beta": monotone, "steps": per_step }),
    )?;
    let bad: Vec<f64> = steps
        .iter()
        .filter(|s| !s.result.diagnostics.converged)
        .map(|s| s.beta)
        .collect();
    if !bad.is_empty() {
        return Err(CliError::Numerical(format!(
            "not converged at beta {bad:?}"
        )));
    }
    Ok(())
}

/// Plain-text digest of the JSON summaries and CSV tables in a run directory.
pub fn report(out: &Path) -> Result<String, CliError> {
    let mut names: Vec<String> = std::fs::read_dir(out)
        .map_err(|e| CliError::Config(format!("{}: {e}", out.display())))?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    names.sort();
    let json_files: Vec<&String> = names.iter().filter(|n| n.ends_with(".json")).collect();
    if json_files.is_empty() {
        return Err(CliError::Config(format!(
            "{} holds no run summary",
            out.display()
        )));
    }
    let mut text = String::new();
    for name in json_files {
        let raw = std::fs::read_to_string(out.join(name))?;
        let v: Value =
            serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        text.push_str(&format!("[{name}]\n"));
        flatten("", &v, &mut text);
    }
    for name in names.iter().filter(|n| n.ends_with(".csv")) {
        let raw = std::fs::read_to_string(out.join(name))?;
        let mut lines = raw.lines();
        let header = lines.next().unwrap_or("");
        text.push_str(&format!("[{name}] {} rows: {header}\n", lines.count()));
    }
    Ok(text)
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) if xs.iter().any(|x| x.is_object()) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        _ => out.push_str(&format!("  {prefix} = {v}\n")),
    }
}
