//! Experiment pipeline: stationary solve (cached), evolution, error
//! functionals, rate fits, and deterministic persistence.

use anyhow::{Context, Result};
use serde_json::json;
use std::path::{Path, PathBuf};

use dipole_core::diagnostics::{
    fit_rate, global_error, inner_error, inner_ratio_range, momenta_series, mstar, outer_error,
};
use dipole_core::evolution::{evolve, sized_x_max, EvolutionConfig, Mode, Trajectory};
use dipole_core::fundamental::omega_fourier;
use dipole_core::grid::moment;
use dipole_core::stationary::{residual_l, solve_phi, PhiSolution};
use dipole_core::{Extension, Field, Grid, Kernel};

use crate::config::ExperimentConfig;
use crate::io::{field_csv, fmt17, grid_json, sha256_hex, Cache, OutputSet};

pub struct ExperimentArtifacts {
    pub report: serde_json::Value,
    pub manifest_hash: String,
}

/// Stationary profile for a kernel/grid pair, via the shared cache.
pub fn cached_phi(
    cache: &Cache,
    kernel: &Kernel,
    spec_name: &str,
    x_max: f64,
    h: f64,
    tol: f64,
) -> Result<PhiSolution> {
    let key = format!(
        "phi|{}|d={:.17e}|h={:.17e}|xmax={:.17e}|tol={:.3e}",
        spec_name,
        kernel.support_radius(),
        h,
        x_max,
        tol
    );
    if let Some(field) = cache.load_field("phi", &key, Extension::LinearSlopeOne) {
        if field.grid().h() == h && (field.grid().x_max() - x_max).abs() < 1e-9 {
            let g = field.grid();
            let offset = field.values()[g.len() - 1] - g.x_max();
            return Ok(PhiSolution {
                field,
                offset_at_edge: offset,
                box_edge: f64::NAN, // unknown for cached profiles
                iterations: 0,
            });
        }
    }
    let phi = solve_phi(kernel, x_max, h, tol)?;
    cache.store_field("phi", &key, &phi.field)?;
    Ok(phi)
}

pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<ExperimentArtifacts> {
    let mut outputs = OutputSet::default();
    match run_experiment_inner(cfg, base, out_dir, &mut outputs) {
        Ok(art) => Ok(art),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}

fn run_experiment_inner(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<ExperimentArtifacts> {
    cfg.validate(base)?;
    let kernel = cfg.kernel.build(base)?;
    let q = kernel.diffusivity();
    let d = kernel.support_radius();
    let h = cfg.grid.h;
    let data = cfg.initial.build(base)?;
    let x_max = cfg
        .grid
        .x_max
        .unwrap_or_else(|| sized_x_max(data.support_right_edge(), q, cfg.t_final, d, h));
    let grid = Grid::covering(-d, x_max, h);
    let u0 = data.make_field(&grid)?;

    let cache = Cache::new(out_dir.join("cache"));
    let phi = cached_phi(&cache, &kernel, &cfg.kernel.family, x_max, h, 1e-10)?;
    let m1star = mstar(&u0, &phi)?;

    let mut ecfg = EvolutionConfig::new(
        Mode::HalflineDirichlet,
        cfg.integrator.dt,
        cfg.t_final,
        cfg.snapshots.times(cfg.t_final),
    );
    ecfg.integrator = cfg.integrator.integrator()?;
    let traj = evolve(&kernel, &u0, &ecfg)?;

    // Snapshots to disk.
    let mut snapshot_entries = Vec::new();
    for (idx, (t, u)) in traj.snapshots.iter().enumerate() {
        let name = format!("snap_{idx:04}.csv");
        outputs.write(&out_dir.join(&name), &field_csv(u))?;
        snapshot_entries.push(json!({"t": t, "file": name}));
    }
    outputs.write(&out_dir.join("phi.csv"), &phi_csv(&phi))?;

    let analysis = analyze(cfg, &kernel, &u0, &phi, &traj, m1star)?;
    outputs.write(&out_dir.join("momenta.csv"), &analysis.momenta_csv)?;
    outputs.write(&out_dir.join("errors.csv"), &analysis.errors_csv)?;
    let report_text = serde_json::to_string_pretty(&analysis.report)?;
    outputs.write(&out_dir.join("report.json"), &report_text)?;

    // Manifest with content hashes of everything written so far.
    let mut file_hashes = serde_json::Map::new();
    let mut files: Vec<_> = outputs.files().to_vec();
    files.sort();
    for f in &files {
        let name = f
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        file_hashes.insert(name, json!(crate::io::file_hash(f)?));
    }
    let mut manifest = json!({
        "config": serde_json::to_value(cfg)?,
        "derived": {
            "q": q,
            "m1star": m1star,
            "x_max": x_max,
            "grid": grid_json(&grid),
            "mass_leak_at_edge": traj.mass_leak_at_edge,
        },
        "snapshots": snapshot_entries,
        "files": serde_json::Value::Object(file_hashes),
    });
    let manifest_hash = sha256_hex(serde_json::to_string(&manifest)?.as_bytes());
    manifest["manifest_hash"] = json!(manifest_hash);
    outputs.write(
        &out_dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(ExperimentArtifacts {
        report: analysis.report,
        manifest_hash,
    })
}

fn phi_csv(phi: &PhiSolution) -> String {
    let g = phi.field.grid();
    let mut s = String::from("x,phi,phi_minus_x\n");
    for (i, v) in phi.field.values().iter().enumerate() {
        let x = g.x(i);
        s.push_str(&format!("{},{},{}\n", fmt17(x), fmt17(*v), fmt17(v - x)));
    }
    s
}

pub struct Analysis {
    pub report: serde_json::Value,
    pub momenta_csv: String,
    pub errors_csv: String,
}

/// All diagnostics computable from a trajectory and its profile.
pub fn analyze(
    cfg: &ExperimentConfig,
    kernel: &Kernel,
    u0: &Field,
    phi: &PhiSolution,
    traj: &Trajectory,
    m1star: f64,
) -> Result<Analysis> {
    let q = kernel.diffusivity();
    let d = kernel.support_radius();
    let dg = &cfg.diagnostics;
    let records = momenta_series(traj, phi)?;

    let mut momenta_csv = String::from("t,m,m1,m2,m_phi\n");
    for r in &records {
        momenta_csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt17(r.t),
            fmt17(r.m),
            fmt17(r.m1),
            fmt17(r.m2),
            fmt17(r.m_phi)
        ));
    }

    let mut errors_csv = String::from("t,e_outer,e_global,e_inner\n");
    let mut times = Vec::new();
    let mut e_outer = Vec::new();
    let mut e_global = Vec::new();
    let mut e_inner: Vec<(f64, f64)> = Vec::new();
    let mut final_ratio = None;
    for (t, u) in &traj.snapshots {
        if *t <= 0.0 {
            continue;
        }
        let eo = outer_error(u, *t, m1star, q);
        let eg = global_error(u, *t, m1star, q, phi)?;
        times.push(*t);
        e_outer.push(eo);
        e_global.push(eg);
        let ei = if *t >= dg.inner_from {
            let omega = omega_fourier(kernel, &u.grid(), *t, None, None)?;
            let e = inner_error(u, *t, m1star, q, phi, &omega, dg.inner_mu, dg.inner_beta)?;
            if (*t - cfg.t_final).abs() < 1e-9 * cfg.t_final && *t >= 64.0 {
                let x_hi = 5.0f64.min(u.grid().x_max());
                final_ratio = inner_ratio_range(u, *t, m1star, q, phi, &omega, 0.5, x_hi).ok();
            }
            e_inner.push((*t, e));
            fmt17(e)
        } else {
            String::new()
        };
        errors_csv.push_str(&format!("{},{},{},{ei}\n", fmt17(*t), fmt17(eo), fmt17(eg)));
    }

    let window = (dg.fit_window[0], dg.fit_window[1]);
    let m_times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let fits = json!({
        "mass": fit_json(&m_times, &records.iter().map(|r| r.m).collect::<Vec<_>>(), window),
        "m1_gap": fit_json(
            &m_times,
            &records.iter().map(|r| (r.m1 - m1star).abs()).collect::<Vec<_>>(),
            window,
        ),
        "m2": fit_json(&m_times, &records.iter().map(|r| r.m2).collect::<Vec<_>>(), window),
        "e_outer": fit_json(&times, &e_outer, window),
        "e_global": fit_json(&times, &e_global, window),
        "e_inner": fit_json(
            &e_inner.iter().map(|p| p.0).collect::<Vec<_>>(),
            &e_inner.iter().map(|p| p.1).collect::<Vec<_>>(),
            window,
        ),
    });

    // Pass/fail flags mirroring the run-dependent acceptance checks. The
    // asymptotic ones only gate when the run is configured to reach the
    // asymptotic regime.
    let gate = dg.asymptotic_gates;
    let gated = |b: bool| if gate { json!(b) } else { json!(null) };
    let m_phi0 = records[0].m_phi;
    let drift = records
        .iter()
        .map(|r| (r.m_phi - m_phi0).abs())
        .fold(0.0f64, f64::max)
        / m_phi0.abs();
    let last3: Vec<f64> = e_outer.iter().rev().take(3).rev().copied().collect();
    let outer_monotone = last3.windows(2).all(|w| w[1] < w[0]);
    let glast3: Vec<f64> = e_global.iter().rev().take(3).rev().copied().collect();
    let global_monotone = glast3.windows(2).all(|w| w[1] < w[0]);
    let global_ratio = match (
        value_at(&times, &e_global, window.0),
        value_at(&times, &e_global, window.1),
    ) {
        (Some(a), Some(b)) => Some(b / a),
        _ => None,
    };
    let checks = json!({
        "weighted_mass_drift": {
            "value": drift, "threshold": 1e-5, "pass": drift <= 1e-5,
        },
        "mass_slope": slope_check(&fits, "mass", -0.4, gate),
        "m1_gap_slope": slope_check(&fits, "m1_gap", -0.4, gate),
        "m2_slope": slope_check(&fits, "m2", 0.6, gate),
        "e_outer_monotone_last3": { "pass": gated(outer_monotone), "values": last3 },
        "e_outer_slope": slope_check(&fits, "e_outer", -0.15, gate),
        "e_global_monotone_last3": { "pass": gated(global_monotone), "values": glast3 },
        "e_global_window_ratio": {
            "value": global_ratio, "threshold": 0.25,
            "pass": if gate { json!(global_ratio.map(|r| r <= 0.25)) } else { json!(null) },
        },
        "inner_ratio_final": {
            "range": final_ratio.map(|(lo, hi)| vec![lo, hi]),
            "pass": if gate {
                json!(final_ratio.map(|(lo, hi)| lo >= 0.9 && hi <= 1.1))
            } else {
                json!(null)
            },
        },
        "edge_leak": {
            "value": traj.mass_leak_at_edge, "threshold": 1e-9,
            "pass": traj.mass_leak_at_edge < 1e-9,
        },
    });

    let report = json!({
        "q": q,
        "d": d,
        "m1star": m1star,
        "phi_offset_at_edge": phi.offset_at_edge,
        "phi_residual": residual_l(kernel, phi)?,
        "initial_moments": {
            "m": moment(u0, 0), "m1": moment(u0, 1), "m2": moment(u0, 2),
        },
        "fitted_exponents": fits,
        "checks": checks,
    });
    Ok(Analysis {
        report,
        momenta_csv,
        errors_csv,
    })
}

fn value_at(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    times
        .iter()
        .position(|s| (s - t).abs() < 1e-6 * t.max(1.0))
        .map(|i| values[i])
}

fn fit_json(times: &[f64], values: &[f64], window: (f64, f64)) -> serde_json::Value {
    match fit_rate(times, values, window) {
        Ok((slope, r2)) => json!({"slope": slope, "r2": r2}),
        Err(e) => json!({"error": e.to_string()}),
    }
}

fn slope_check(fits: &serde_json::Value, key: &str, bound: f64, gate: bool) -> serde_json::Value {
    let slope = fits[key]["slope"].as_f64();
    let r2 = fits[key]["r2"].as_f64();
    let pass = match (slope, r2) {
        (Some(s), Some(r)) if gate => Some(s <= bound && r >= 0.95),
        _ => None,
    };
    json!({"slope": slope, "r2": r2, "bound": bound, "pass": pass})
}

/// Re-analyze a trajectory directory written by `run_experiment`.
pub fn verify_dir(traj_dir: &Path, phi_path: Option<&Path>, report_path: &Path) -> Result<bool> {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(traj_dir.join("manifest.json"))?)
            .context("parsing manifest")?;
    let cfg: ExperimentConfig = serde_json::from_value(manifest["config"].clone())?;
    let kernel = cfg.kernel.build(traj_dir)?;
    let d = kernel.support_radius();

    let mut snapshots = Vec::new();
    for entry in manifest["snapshots"]
        .as_array()
        .context("manifest lacks snapshots")?
    {
        let t = entry["t"].as_f64().context("snapshot time")?;
        let file = entry["file"].as_str().context("snapshot file")?;
        let text = std::fs::read_to_string(traj_dir.join(file))?;
        snapshots.push((t, crate::io::field_from_csv(&text, Extension::Zero)?));
    }
    anyhow::ensure!(!snapshots.is_empty(), "no snapshots in manifest");
    let grid = snapshots[0].1.grid();

    let phi = match phi_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            // accept both plain (x, value) and the 3-column stationary dump
            let field = field_from_phi_csv(&text)?;
            anyhow::ensure!(
                field.grid() == grid,
                "profile grid does not match the trajectory grid"
            );
            let offset = field.values()[field.len() - 1] - field.grid().x_max();
            PhiSolution {
                field,
                offset_at_edge: offset,
                box_edge: f64::NAN,
                iterations: 0,
            }
        }
        None => {
            let cache = Cache::new(traj_dir.join("cache"));
            cached_phi(
                &cache,
                &kernel,
                &cfg.kernel.family,
                grid.x_max(),
                grid.h(),
                1e-10,
            )?
        }
    };

    let u0 = snapshots[0].1.clone();
    let m1star = mstar(&u0, &phi)?;
    let mass_leak = snapshots
        .iter()
        .map(|(_, u)| u.edge_band_max(d))
        .fold(0.0f64, f64::max);
    let mut ecfg = EvolutionConfig::new(
        Mode::HalflineDirichlet,
        cfg.integrator.dt,
        cfg.t_final,
        snapshots.iter().map(|s| s.0).collect(),
    );
    ecfg.integrator = cfg.integrator.integrator()?;
    let traj = Trajectory {
        snapshots,
        config: ecfg,
        mass_leak_at_edge: mass_leak,
    };
    let analysis = analyze(&cfg, &kernel, &u0, &phi, &traj, m1star)?;
    std::fs::write(report_path, serde_json::to_string_pretty(&analysis.report)?)?;
    let errors_path = report_path.with_extension("errors.csv");
    std::fs::write(&errors_path, analysis.errors_csv)?;
    let momenta_path = report_path.with_extension("momenta.csv");
    std::fs::write(&momenta_path, analysis.momenta_csv)?;

    Ok(all_checks_pass(&analysis.report["checks"]))
}

fn field_from_phi_csv(text: &str) -> Result<Field> {
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let mut cols = line.split(',');
        xs.push(cols.next().context("missing x")?.trim().parse::<f64>()?);
        vs.push(cols.next().context("missing phi")?.trim().parse::<f64>()?);
    }
    anyhow::ensure!(xs.len() >= 2, "profile CSV needs rows");
    let h = xs[1] - xs[0];
    Ok(Field::new(
        Grid::new(xs[0], h, xs.len()),
        vs,
        Extension::LinearSlopeOne,
    ))
}

/// True when every boolean `pass` in the tree is true (absent means skip).
pub fn all_checks_pass(checks: &serde_json::Value) -> bool {
    match checks {
        serde_json::Value::Object(map) => map.iter().all(|(k, v)| {
            if k == "pass" {
                v.as_bool().unwrap_or(v.is_null())
            } else {
                all_checks_pass(v)
            }
        }),
        _ => true,
    }
}

/// Output paths for a named sweep entry.
pub fn sweep_out_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}
