//! Command-line front end: experiment orchestration, persistence and the
//! acceptance runner.

mod config;
mod io;
mod runner;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::PathBuf;

use config::{ExperimentConfig, InitialSpec, KernelSpec};
use dipole_core::diagnostics::{
    barrier_residual, envelope_curvature_check, find_barrier_onset, BarrierParams, BarrierSide,
};
use dipole_core::fundamental::{gamma_q, omega_fourier, omega_series, series_terms_needed};
use dipole_core::heat::{heat_barrier_sign_check, heat_dipole_error, HeatSolution};
use dipole_core::stationary::{residual_l, solve_phi};
use dipole_core::{Grid, Kernel};

#[derive(Parser)]
#[command(
    name = "dipole-lab",
    about = "Numerical laboratory for jump diffusion on the half line",
    version
)]
struct Cli {
    /// Worker threads for data-parallel loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the stationary profile and write (x, phi, phi - x).
    Stationary {
        #[arg(long, default_value = "biweight")]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.015625)]
        h: f64,
        #[arg(long, default_value_t = 40.0)]
        xmax: f64,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a configured half-line experiment into a trajectory directory.
    Evolve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the regular part of the fundamental solution at one time.
    Omega {
        #[arg(long)]
        t: f64,
        #[arg(long, default_value = "both")]
        method: String,
        #[arg(long, default_value = "biweight")]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.015625)]
        h: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-analyze a trajectory directory and write a report.
    Verify {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        phi: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Evaluate the exact local reference for given data and times.
    Heat {
        /// Compact spec: hat:c:w, indicator:a:b, gaussian:c:s or csv:path.
        #[arg(long)]
        u0: String,
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long, default_value_t = 0.0078125)]
        h: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the near-field barrier inequality and locate its onset time.
    Barriers {
        #[arg(long, default_value_t = 0.1)]
        kappa: f64,
        #[arg(long, default_value_t = 0.9)]
        gamma: f64,
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long = "k", default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value = "biweight")]
        kernel: String,
        #[arg(long, default_value_t = 1.0)]
        d: f64,
        #[arg(long, default_value_t = 0.03125)]
        h: f64,
        /// Cap for the pinned-window onset search.
        #[arg(long, default_value_t = 1e4)]
        tmax: f64,
        /// Cap for the extended search when the pinned one fails.
        #[arg(long, default_value_t = 8e6)]
        extended_tmax: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every acceptance criterion and print one line per criterion.
    Acceptance {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several configured experiments concurrently.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
    let code = match dispatch(cli.command) {
        Ok(ok) => {
            if ok {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            2
        }
    };
    std::process::exit(code);
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Stationary {
            kernel,
            d,
            h,
            xmax,
            tol,
            out,
        } => {
            let k = build_kernel(&kernel, d)?;
            let phi = solve_phi(&k, xmax, h, tol)?;
            let resid = residual_l(&k, &phi)?;
            let g = phi.field.grid();
            let mut s = String::from("x,phi,phi_minus_x\n");
            for (i, v) in phi.field.values().iter().enumerate() {
                let x = g.x(i);
                s.push_str(&format!(
                    "{},{},{}\n",
                    io::fmt17(x),
                    io::fmt17(*v),
                    io::fmt17(v - x)
                ));
            }
            std::fs::write(&out, s).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "stationary profile: offset at edge {:.6}, residual {:.3e}, {} nodes -> {}",
                phi.offset_at_edge,
                resid,
                g.len(),
                out.display()
            );
            Ok(true)
        }
        Command::Evolve { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let base = config.parent().unwrap_or(std::path::Path::new("."));
            let art = runner::run_experiment(&cfg, base, &out)?;
            println!("manifest hash {}", art.manifest_hash);
            Ok(runner::all_checks_pass(&art.report["checks"]))
        }
        Command::Omega {
            t,
            method,
            kernel,
            d,
            h,
            out,
        } => {
            let k = build_kernel(&kernel, d)?;
            let q = k.diffusivity();
            let want_series = (method == "series" || method == "both") && t <= 200.0;
            let reach = if want_series {
                series_terms_needed(t, 1e-12) as f64 * d + d
            } else {
                12.0 * (q * t).sqrt().max(d) + d
            };
            let g = Grid::symmetric(reach, h);
            let series = if want_series {
                Some(omega_series(&k, &g, t, 1e-12)?)
            } else {
                None
            };
            let fourier = if method == "fourier" || method == "both" {
                Some(omega_fourier(&k, &g, t, None, None)?)
            } else {
                None
            };
            let mut s = String::from("x,omega_series,omega_fourier,gamma_q\n");
            for i in 0..g.len() {
                let x = g.x(i);
                let sv = series
                    .as_ref()
                    .map(|p| io::fmt17(p.field.values()[i]))
                    .unwrap_or_default();
                let fv = fourier
                    .as_ref()
                    .map(|p| io::fmt17(p.field.values()[i]))
                    .unwrap_or_default();
                s.push_str(&format!(
                    "{},{sv},{fv},{}\n",
                    io::fmt17(x),
                    io::fmt17(gamma_q(x, t, q))
                ));
            }
            std::fs::write(&out, s)?;
            if let (Some(a), Some(b)) = (&series, &fourier) {
                println!(
                    "sup |series - fourier| = {:.3e} over {} nodes",
                    a.field.sup_diff(&b.field),
                    g.len()
                );
            }
            Ok(true)
        }
        Command::Verify { traj, phi, report } => {
            let ok = runner::verify_dir(&traj, phi.as_deref(), &report)?;
            println!(
                "verification {} -> {}",
                if ok { "passed" } else { "FAILED" },
                report.display()
            );
            Ok(ok)
        }
        Command::Heat { u0, times, h, out } => {
            let spec = InitialSpec::parse_compact(&u0)?;
            let data = spec.build(std::path::Path::new("."))?;
            let edge = data.support_right_edge() + 1.0;
            let g = Grid::covering(-0.5, edge, h);
            let field = data.make_field(&g)?;
            let hs = HeatSolution::new(field)?;
            let m1 = hs.data_first_moment();
            let mut rows = Vec::new();
            for &t in &times {
                let e = heat_dipole_error(&hs, t, m1);
                rows.push(json!({
                    "t": t,
                    "weighted_error": e.weighted,
                    "unweighted_error": e.unweighted,
                    "outside_dipole_regime": e.outside_dipole_regime,
                    "first_moment": hs.first_moment(t),
                }));
            }
            let barrier = heat_barrier_sign_check(0.1, 0.9, 100, 100, 100.0, 1e4);
            let report = json!({
                "m1star": m1,
                "times": rows,
                "barrier_lattice": {
                    "checked": barrier.checked,
                    "sign_violations": barrier.sign_violations,
                    "min_margin": barrier.min_margin,
                },
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!("heat report -> {}", out.display());
            Ok(barrier.sign_violations == 0)
        }
        Command::Barriers {
            kappa,
            gamma,
            beta,
            mu,
            amplitude,
            kernel,
            d,
            h,
            tmax,
            extended_tmax,
            out,
        } => {
            let k = build_kernel(&kernel, d)?;
            let p = BarrierParams::new(kappa, gamma, beta, mu, amplitude)?;
            let x_need = (mu * (4.0 * extended_tmax).powf(beta) + 2.0 * d).max(30.0 * d);
            let phi = solve_phi(&k, x_need, h, 1e-9)?;
            let g = phi.field.grid();
            let lz = envelope_curvature_check(&k, &g, gamma, g.x_max() - 2.0 * d)?;
            let pinned = find_barrier_onset(&k, &phi, &p, 64.0, tmax)?;
            let onset = match pinned {
                Some(t) => Some(t),
                None => find_barrier_onset(&k, &phi, &p, tmax, extended_tmax)?,
            };
            let mut probes = Vec::new();
            for &t in &[tmax, onset.unwrap_or(tmax)] {
                let omega = omega_fourier(&k, &g, t, None, None)?;
                let plus = barrier_residual(&k, &phi, &omega, t, &p, BarrierSide::Plus)?;
                let minus = barrier_residual(&k, &phi, &omega, t, &p, BarrierSide::Minus)?;
                probes.push(json!({
                    "t": t,
                    "plus_min_residual": plus.min,
                    "minus_max_residual": minus.max,
                    "window_edge": plus.x_hi,
                }));
            }
            let report = json!({
                "params": {
                    "kappa": kappa, "gamma": gamma, "beta": beta, "mu": mu,
                    "amplitude": amplitude,
                    "beta_admissible_below": p.admissible_beta_bound(),
                },
                "curvature_bound_max_violation": lz.max_violation,
                "onset_within_tmax": pinned,
                "onset_found": onset,
                "probes": probes,
            });
            std::fs::write(&out, serde_json::to_string_pretty(&report)?)?;
            println!(
                "barriers: curvature bound violation {:.2e}, onset {:?} -> {}",
                lz.max_violation,
                onset,
                out.display()
            );
            Ok(lz.max_violation <= 0.0 && pinned.is_some())
        }
        Command::Acceptance { out } => {
            let results = dipole_core::acceptance::run_all()?;
            let mut all = true;
            for r in &results {
                println!("{}", r.line());
                all &= r.passed;
            }
            if let Some(path) = out {
                let rows: Vec<_> = results
                    .iter()
                    .map(|r| {
                        json!({
                            "id": r.id, "name": r.name,
                            "passed": r.passed, "detail": r.detail,
                        })
                    })
                    .collect();
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&json!({ "criteria": rows, "all_passed": all }))?,
                )?;
            }
            Ok(all)
        }
        Command::Sweep { config, out } => {
            let text = std::fs::read_to_string(&config)?;
            let spec: SweepSpec = serde_json::from_str(&text).context("parsing sweep spec")?;
            let base = config.parent().unwrap_or(std::path::Path::new("."));
            use rayon::prelude::*;
            let results: Vec<(String, Result<runner::ExperimentArtifacts>)> = spec
                .runs
                .par_iter()
                .map(|entry| {
                    let dir = runner::sweep_out_dir(&out, &entry.name);
                    (
                        entry.name.clone(),
                        runner::run_experiment(&entry.config, base, &dir),
                    )
                })
                .collect();
            let mut ok = true;
            for (name, res) in results {
                match res {
                    Ok(a) => println!("{name}: manifest {}", a.manifest_hash),
                    Err(e) => {
                        ok = false;
                        eprintln!("{name}: FAILED: {e:#}");
                    }
                }
            }
            Ok(ok)
        }
    }
}

#[derive(serde::Deserialize)]
struct SweepSpec {
    runs: Vec<SweepEntry>,
}

#[derive(serde::Deserialize)]
struct SweepEntry {
    name: String,
    config: ExperimentConfig,
}

fn build_kernel(family: &str, d: f64) -> Result<Kernel> {
    let spec = KernelSpec {
        family: family.to_string(),
        d: Some(d),
        path: None,
    };
    if family == "tabulated" {
        bail!("tabulated kernels need a config file with a path");
    }
    spec.build(std::path::Path::new("."))
}
