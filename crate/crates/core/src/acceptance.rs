//! End-to-end acceptance checks. Each criterion is a function returning a
//! pass/fail record; the expensive reference experiment is built once and
//! shared. The CLI exposes the same runner as a subcommand.

use std::time::Instant;

use crate::diagnostics::{
    barrier_residual, envelope_curvature_check, find_barrier_onset, fit_rate, global_error,
    inner_error, inner_ratio_range, momenta_series, mstar, outer_error, BarrierParams,
    BarrierSide, MomentaRecord,
};
use crate::error::Result;
use crate::evolution::{
    evolve, geometric_snapshots, sandwich_check, sized_x_max, EvolutionConfig, Mode, Trajectory,
};
use crate::fundamental::{omega_fourier, omega_series, series_terms_needed, OmegaProfile};
use crate::grid::{convolve_fields, Convolver, Extension, Field, Grid};
use crate::initial::InitialData;
use crate::kernel::{sampled_kernel, Kernel};
use crate::stationary::{affine_deviation, residual_l, solve_phi, uniqueness_diagnostic};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "criterion {:02} {:<22} {}  {}",
            self.id,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Reference experiment: biweight kernel of unit radius, plateau data on
/// [1, 2], h = 1/32, fourth-order stepping with dt = 0.1 out to t = 4096 on
/// a geometric snapshot schedule.
pub struct DefaultRun {
    pub kernel: Kernel,
    pub q: f64,
    pub h: f64,
    pub u0: Field,
    pub phi: crate::stationary::PhiSolution,
    pub traj: Trajectory,
    pub m1star: f64,
    pub momenta: Vec<MomentaRecord>,
    /// (t, value) series for t > 0.
    pub e_outer: Vec<(f64, f64)>,
    pub e_global: Vec<(f64, f64)>,
    /// near-field series with mu = 1, beta = 0.3, for t >= 64.
    pub e_inner: Vec<(f64, f64)>,
    pub omega_final: OmegaProfile,
    pub t_final: f64,
    pub fit_window: (f64, f64),
}

pub const INNER_MU: f64 = 1.0;
pub const INNER_BETA: f64 = 0.3;

pub fn default_run() -> Result<DefaultRun> {
    let kernel = Kernel::biweight(1.0)?;
    let q = kernel.diffusivity();
    let h = 1.0 / 32.0;
    let t_final = 4096.0;
    let x_max = sized_x_max(2.0, q, t_final, 1.0, h);
    let grid = Grid::covering(-1.0, x_max, h);
    let u0 = InitialData::Indicator { a: 1.0, b: 2.0 }.make_field(&grid)?;
    let phi = solve_phi(&kernel, x_max, h, 1e-10)?;
    let cfg = EvolutionConfig::new(
        Mode::HalflineDirichlet,
        0.1,
        t_final,
        geometric_snapshots(1.0, t_final),
    );
    let traj = evolve(&kernel, &u0, &cfg)?;
    let m1star = mstar(&u0, &phi)?;
    let momenta = momenta_series(&traj, &phi)?;

    let mut e_outer = Vec::new();
    let mut e_global = Vec::new();
    let mut e_inner = Vec::new();
    let mut omega_final = None;
    for (t, u) in &traj.snapshots {
        if *t <= 0.0 {
            continue;
        }
        e_outer.push((*t, outer_error(u, *t, m1star, q)));
        e_global.push((*t, global_error(u, *t, m1star, q, &phi)?));
        if *t >= 64.0 - 1e-9 {
            let omega = omega_fourier(&kernel, &grid, *t, None, None)?;
            e_inner.push((
                *t,
                inner_error(u, *t, m1star, q, &phi, &omega, INNER_MU, INNER_BETA)?,
            ));
            if (*t - t_final).abs() < 1e-9 * t_final {
                omega_final = Some(omega);
            }
        }
    }
    Ok(DefaultRun {
        kernel,
        q,
        h,
        u0,
        phi,
        traj,
        m1star,
        momenta,
        e_outer,
        e_global,
        e_inner,
        omega_final: omega_final.expect("final snapshot present"),
        t_final,
        fit_window: (256.0, 4096.0),
    })
}

fn series_tail(series: &[(f64, f64)], n: usize) -> Vec<f64> {
    series.iter().rev().take(n).rev().map(|p| p.1).collect()
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

/// Stationary construction: bounds, operator residual and affinity of the
/// double-average diagnostic, under a runtime budget.
pub fn criterion_01() -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<(f64, f64, f64, f64)> {
        let k = Kernel::biweight(1.0)?;
        let (h, x_max) = (1.0 / 64.0, 40.0);
        let phi = solve_phi(&k, x_max, h, 1e-10)?;
        let g = phi.field.grid();
        let mut below = 0.0f64;
        let mut above = 0.0f64;
        for i in g.first_at_or_above(0.0)..g.len() {
            let x = g.x(i);
            below = below.max(x - phi.value(i));
            above = above.max(phi.value(i) - x - 1.0);
        }
        let resid = residual_l(&k, &phi)?;
        let f = uniqueness_diagnostic(&k, &phi.field)?;
        let dev = affine_deviation(&f, 1.0, x_max - 2.0);
        Ok((below, above, resid, dev))
    };
    match run() {
        Ok((below, above, resid, dev)) => {
            let elapsed = start.elapsed().as_secs_f64();
            let passed = below <= 1e-8
                && above <= 1e-8
                && resid <= 1e-7
                && dev <= 1e-6
                && elapsed < 30.0;
            CriterionResult {
                id: 1,
                name: "stationary-profile",
                passed,
                detail: format!(
                    "bounds slack ({below:.1e}, {above:.1e}), residual {resid:.2e}, \
                     affinity dev {dev:.2e}, {elapsed:.1}s"
                ),
            }
        }
        Err(e) => fail(1, "stationary-profile", e),
    }
}

/// Conservation of the profile-weighted mass along the reference run.
pub fn criterion_02(run: &DefaultRun) -> CriterionResult {
    let m0 = run.momenta[0].m_phi;
    let drift = run
        .momenta
        .iter()
        .map(|r| (r.m_phi - m0).abs())
        .fold(0.0f64, f64::max)
        / m0.abs();
    CriterionResult {
        id: 2,
        name: "weighted-mass",
        passed: drift <= 1e-5,
        detail: format!("relative drift {drift:.2e} over [0, {}]", run.t_final),
    }
}

/// Decay rates of mass and moments on the fitting window.
pub fn criterion_03(run: &DefaultRun) -> CriterionResult {
    let times: Vec<f64> = run.momenta.iter().map(|r| r.t).collect();
    let mass: Vec<f64> = run.momenta.iter().map(|r| r.m).collect();
    let gap: Vec<f64> = run
        .momenta
        .iter()
        .map(|r| (r.m1 - run.m1star).abs())
        .collect();
    let m2: Vec<f64> = run.momenta.iter().map(|r| r.m2).collect();
    let w = run.fit_window;
    let fits = (
        fit_rate(&times, &mass, w),
        fit_rate(&times, &gap, w),
        fit_rate(&times, &m2, w),
    );
    match fits {
        (Ok((s_m, r_m)), Ok((s_g, r_g)), Ok((s_2, r_2))) => {
            let passed = s_m <= -0.4
                && s_g <= -0.4
                && s_2 <= 0.6
                && r_m >= 0.95
                && r_g >= 0.95
                && r_2 >= 0.95;
            CriterionResult {
                id: 3,
                name: "momenta-rates",
                passed,
                detail: format!(
                    "slopes M {s_m:.3} (r2 {r_m:.4}), |M1-M1*| {s_g:.3} (r2 {r_g:.4}), \
                     M2 {s_2:.3} (r2 {r_2:.4})"
                ),
            }
        }
        (a, b, c) => {
            let msg = [a.err(), b.err(), c.err()]
                .into_iter()
                .flatten()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join("; ");
            CriterionResult {
                id: 3,
                name: "momenta-rates",
                passed: false,
                detail: msg,
            }
        }
    }
}

/// Far-field functional: strict decrease at late times plus a fitted rate.
pub fn criterion_04(run: &DefaultRun) -> CriterionResult {
    let last3 = series_tail(&run.e_outer, 3);
    let times: Vec<f64> = run.e_outer.iter().map(|p| p.0).collect();
    let vals: Vec<f64> = run.e_outer.iter().map(|p| p.1).collect();
    match fit_rate(&times, &vals, run.fit_window) {
        Ok((slope, r2)) => {
            let passed = strictly_decreasing(&last3) && slope <= -0.15;
            CriterionResult {
                id: 4,
                name: "far-field-limit",
                passed,
                detail: format!(
                    "last dyadic values {:.3}/{:.3}/{:.3}, slope {slope:.3} (r2 {r2:.4})",
                    last3[0], last3[1], last3[2]
                ),
            }
        }
        Err(e) => fail(4, "far-field-limit", e),
    }
}

/// Uniformly weighted matched expansion: decrease plus a factor-4 drop
/// across the 16-fold time window.
pub fn criterion_05(run: &DefaultRun) -> CriterionResult {
    let last3 = series_tail(&run.e_global, 3);
    let at = |t: f64| -> Option<f64> {
        run.e_global
            .iter()
            .find(|(s, _)| (s - t).abs() < 1e-6 * t)
            .map(|p| p.1)
    };
    let (e256, e4096) = match (at(256.0), at(4096.0)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return CriterionResult {
                id: 5,
                name: "global-expansion",
                passed: false,
                detail: "snapshots at 256 and 4096 missing".into(),
            }
        }
    };
    let passed = strictly_decreasing(&last3) && e4096 <= 0.25 * e256;
    CriterionResult {
        id: 5,
        name: "global-expansion",
        passed,
        detail: format!(
            "E(256) = {e256:.4}, E(4096) = {e4096:.4}, ratio {:.3}",
            e4096 / e256
        ),
    }
}

/// Near-field profile ratio at the final time on a fixed window.
pub fn criterion_06(run: &DefaultRun) -> CriterionResult {
    let u = run
        .traj
        .at_time(run.t_final)
        .expect("final snapshot present");
    match inner_ratio_range(
        u,
        run.t_final,
        run.m1star,
        run.q,
        &run.phi,
        &run.omega_final,
        0.5,
        5.0,
    ) {
        Ok((lo, hi)) => CriterionResult {
            id: 6,
            name: "near-field-ratio",
            passed: lo >= 0.9 && hi <= 1.1,
            detail: format!("ratio range [{lo:.4}, {hi:.4}] on x in [0.5, 5]"),
        },
        Err(e) => fail(6, "near-field-ratio", e),
    }
}

/// Cross-validation of the fundamental-solution remainder: series against
/// transform, mass and second moment.
pub fn criterion_07() -> CriterionResult {
    let start = Instant::now();
    let run = || -> Result<String> {
        let k = Kernel::biweight(1.0)?;
        let q = k.diffusivity();
        let h = 1.0 / 128.0;
        let mut detail = String::new();
        for t in [1.0, 5.0, 10.0] {
            let reach = series_terms_needed(t, 1e-12) as f64 + 1.0;
            let g = Grid::symmetric(reach, h);
            let a = omega_series(&k, &g, t, 1e-12)?;
            let b = omega_fourier(&k, &g, t, None, None)?;
            let gap = a.field.sup_diff(&b.field);
            let mass_err = (a.mass() - (1.0 - (-t).exp()))
                .abs()
                .max((b.mass() - (1.0 - (-t).exp())).abs());
            let mom_rel = ((a.second_moment() - 2.0 * q * t) / (2.0 * q * t))
                .abs()
                .max(((b.second_moment() - 2.0 * q * t) / (2.0 * q * t)).abs());
            detail.push_str(&format!(
                "t={t}: gap {gap:.1e}, mass {mass_err:.1e}, mom {mom_rel:.1e}; "
            ));
            if gap > 1e-8 || mass_err > 1e-8 || mom_rel > 1e-6 {
                return Ok(format!("FAILED {detail}"));
            }
        }
        Ok(detail)
    };
    match run() {
        Ok(detail) => {
            let elapsed = start.elapsed().as_secs_f64();
            let passed = !detail.starts_with("FAILED") && elapsed < 60.0;
            CriterionResult {
                id: 7,
                name: "omega-cross-check",
                passed,
                detail: format!("{detail}{elapsed:.1}s"),
            }
        }
        Err(e) => fail(7, "omega-cross-check", e),
    }
}

/// Two-sided comparison ordering after an antisymmetric restart.
pub fn criterion_08() -> CriterionResult {
    let run = || -> Result<(f64, f64, f64)> {
        let k = Kernel::biweight(1.0)?;
        let h = 1.0 / 32.0;
        let x_max = sized_x_max(2.0, k.diffusivity(), 512.0, 1.0, h);
        let g = Grid::covering(-1.0, x_max, h);
        let u0 = InitialData::Indicator { a: 1.0, b: 2.0 }.make_field(&g)?;
        let rep = sandwich_check(&k, &u0, 64.0, 512.0, 0.1)?;
        Ok((rep.min_gap_upper, rep.min_gap_lower, h))
    };
    match run() {
        Ok((up, lo, h)) => {
            let slack = -5.0 * h * h;
            CriterionResult {
                id: 8,
                name: "comparison-sandwich",
                passed: up >= slack && lo >= slack,
                detail: format!("min gaps upper {up:.2e}, lower {lo:.2e}, slack {slack:.2e}"),
            }
        }
        Err(e) => fail(8, "comparison-sandwich", e),
    }
}

/// Near-field barrier inequality with pinned parameters. The curvature bound
/// must hold at every node, and both one-sided residuals must hold over a
/// quadrupled time window starting no later than t = 1e4.
pub fn criterion_09() -> CriterionResult {
    #[allow(clippy::type_complexity)]
    let run = || -> Result<(f64, Option<f64>, Option<f64>, f64, f64)> {
        let k = Kernel::biweight(1.0)?;
        let h = 1.0 / 32.0;
        let p = BarrierParams::new(0.1, 0.9, 0.3, 1.0, 1.0)?;

        let lz_grid = Grid::covering(-1.0, 42.0, h);
        let lz = envelope_curvature_check(&k, &lz_grid, p.gamma, 40.0)?;

        // Profile wide enough for the extended scan; the pinned-window scan
        // only needs the first 25 length units of it.
        let t_cap_extended: f64 = 8.0e6;
        let x_need = p.mu * (4.0 * t_cap_extended).powf(p.beta) + 2.0;
        let phi = solve_phi(&k, x_need.max(30.0), h, 1e-9)?;
        let onset_pinned = find_barrier_onset(&k, &phi, &p, 64.0, 1.0e4)?;
        let onset_extended = match onset_pinned {
            Some(t) => Some(t),
            None => find_barrier_onset(&k, &phi, &p, 1.0e4, t_cap_extended)?,
        };
        // Representative residuals at the pinned cap, for the record.
        let t_probe = 1.0e4;
        let omega = omega_fourier(&k, &phi.field.grid(), t_probe, None, None)?;
        let plus = barrier_residual(&k, &phi, &omega, t_probe, &p, BarrierSide::Plus)?;
        let minus = barrier_residual(&k, &phi, &omega, t_probe, &p, BarrierSide::Minus)?;
        Ok((
            lz.max_violation,
            onset_pinned,
            onset_extended,
            plus.min,
            minus.max,
        ))
    };
    match run() {
        Ok((lz_violation, pinned, extended, plus_min, minus_max)) => {
            let passed = lz_violation <= 0.0 && pinned.is_some();
            let pinned_str = pinned
                .map(|t| format!("{t:.3e}"))
                .unwrap_or_else(|| "none <= 1e4".into());
            let extended_str = extended
                .map(|t| format!("{t:.3e}"))
                .unwrap_or_else(|| "none <= 8e6".into());
            CriterionResult {
                id: 9,
                name: "near-field-barriers",
                passed,
                detail: format!(
                    "curvature-bound violation {lz_violation:.2e}; onset within cap: {pinned_str} \
                     (first onset found: {extended_str}); at t=1e4 plus-min {plus_min:.2e}, \
                     minus-max {minus_max:.2e}"
                ),
            }
        }
        Err(e) => fail(9, "near-field-barriers", e),
    }
}

/// Local reference: dipole error decay, first-moment conservation and the
/// closed-form barrier signs.
pub fn criterion_10() -> CriterionResult {
    let run = || -> Result<(Vec<f64>, f64, usize)> {
        let g = Grid::covering(-0.5, 3.0, 1.0 / 128.0);
        let u0 = InitialData::Hat {
            center: 1.0,
            width: 0.1,
        }
        .make_field(&g)?;
        let hs = crate::heat::HeatSolution::new(u0)?;
        let m1 = hs.data_first_moment();
        let mut errs = Vec::new();
        let mut moment_drift = 0.0f64;
        for t in [16.0, 64.0, 256.0, 1024.0] {
            errs.push(crate::heat::heat_dipole_error(&hs, t, m1).weighted);
            moment_drift = moment_drift.max((hs.first_moment(t) - m1).abs());
        }
        let barrier = crate::heat::heat_barrier_sign_check(0.1, 0.9, 100, 100, 100.0, 1.0e4);
        Ok((errs, moment_drift, barrier.sign_violations))
    };
    match run() {
        Ok((errs, drift, violations)) => {
            let passed = strictly_decreasing(&errs) && drift <= 1e-8 && violations == 0;
            let err_str = errs
                .iter()
                .map(|e| format!("{e:.2e}"))
                .collect::<Vec<_>>()
                .join("/");
            CriterionResult {
                id: 10,
                name: "heat-reference",
                passed,
                detail: format!(
                    "errors {err_str}, moment drift {drift:.2e}, barrier violations {violations}"
                ),
            }
        }
        Err(e) => fail(10, "heat-reference", e),
    }
}

/// Solver self-consistency: semigroup representation and agreement of the
/// two convolution paths on random data.
pub fn criterion_11() -> CriterionResult {
    let run = || -> Result<(f64, f64)> {
        let k = Kernel::biweight(1.0)?;
        let h = 1.0 / 32.0;
        let t = 10.0;
        // smooth whole-line data: the kernel itself
        let spread = sized_x_max(1.0, k.diffusivity(), t, 1.0, h);
        let g = Grid::symmetric(spread, h);
        let conv = Convolver::new(&k, h)?;
        let u0 = sampled_kernel(&k, &g, &conv);
        let cfg = EvolutionConfig::new(Mode::Cauchy, 0.05, t, vec![t]);
        let evolved = evolve(&k, &u0, &cfg)?.snapshots[0].1.clone();

        let reach = series_terms_needed(t, 1e-13) as f64 + 1.0;
        let og = Grid::symmetric(reach + spread, h);
        let omega = omega_series(&k, &og, t, 1e-13)?;
        let mut model = convolve_fields(&omega.field, &u0, g)?;
        let decay = (-t).exp();
        for (m, v) in model.values_mut().iter_mut().zip(u0.values()) {
            *m += decay * v;
        }
        let rep_gap = evolved.sup_diff(&model);

        // deterministic pseudo-random fields for the two-path comparison
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut rand01 = move || {
            state = state.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = state;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        };
        let rg = Grid::covering(-1.0, 20.0, h);
        let mut path_gap = 0.0f64;
        for _ in 0..100 {
            let vals: Vec<f64> = (0..rg.len()).map(|_| rand01()).collect();
            let f = Field::new(rg, vals, Extension::Zero);
            path_gap = path_gap.max(conv.convolve_direct(&f).sup_diff(&conv.convolve_spectral(&f)));
        }
        Ok((rep_gap, path_gap))
    };
    match run() {
        Ok((rep_gap, path_gap)) => CriterionResult {
            id: 11,
            name: "solver-consistency",
            passed: rep_gap <= 1e-5 && path_gap <= 1e-10,
            detail: format!(
                "semigroup representation gap {rep_gap:.2e}, conv path gap {path_gap:.2e}"
            ),
        },
        Err(e) => fail(11, "solver-consistency", e),
    }
}

fn fail(id: u8, name: &'static str, e: crate::Error) -> CriterionResult {
    CriterionResult {
        id,
        name,
        passed: false,
        detail: format!("error: {e}"),
    }
}

/// Run every criterion in order, building the shared reference run once.
pub fn run_all() -> Result<Vec<CriterionResult>> {
    let run = default_run()?;
    Ok(vec![
        criterion_01(),
        criterion_02(&run),
        criterion_03(&run),
        criterion_04(&run),
        criterion_05(&run),
        criterion_06(&run),
        criterion_07(),
        criterion_08(),
        criterion_09(),
        criterion_10(),
        criterion_11(),
    ])
}
