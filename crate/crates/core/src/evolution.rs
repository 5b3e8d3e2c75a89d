//! Time integration of the jump-diffusion equation u_t = J*u - u, in
//! half-line mode (zero exterior data re-imposed after every stage) and in
//! whole-line mode, plus the antisymmetric extensions used as one-sided
//! comparison data.

use crate::error::{Error, Result};
use crate::grid::{Convolver, Extension, Field, Grid};
use crate::kernel::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Equation on x >= 0 with zero data on the exterior strip.
    HalflineDirichlet,
    /// Equation on the whole line.
    Cauchy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    Rk4,
    /// Exact semigroup step: e^{-dt} times the truncated exponential series
    /// of the convolution power, cut when the tail drops below 1e-14.
    ExpIntegratingFactor,
}

#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    pub mode: Mode,
    pub dt: f64,
    pub t_final: f64,
    pub snapshot_times: Vec<f64>,
    pub integrator: Integrator,
}

impl EvolutionConfig {
    pub fn new(mode: Mode, dt: f64, t_final: f64, snapshot_times: Vec<f64>) -> Self {
        EvolutionConfig {
            mode,
            dt,
            t_final,
            snapshot_times,
            integrator: Integrator::Rk4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.dt > 0.0 && self.dt <= 0.25) {
            problems.push(format!("dt = {} outside (0, 0.25]", self.dt));
        }
        if self.t_final < 0.0 {
            problems.push("t_final must be nonnegative".into());
        }
        let mut prev = -1.0;
        for &t in &self.snapshot_times {
            if t < 0.0 || t > self.t_final + 1e-9 {
                problems.push(format!("snapshot time {t} outside [0, t_final]"));
            }
            if t <= prev {
                problems.push(format!("snapshot times not strictly increasing at {t}"));
            }
            prev = t;
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Snapshots of one run plus edge-leak bookkeeping.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, Field)>,
    pub config: EvolutionConfig,
    /// Largest |u| seen within one kernel radius of the right edge.
    pub mass_leak_at_edge: f64,
}

impl Trajectory {
    pub fn at_time(&self, t: f64) -> Option<&Field> {
        self.snapshots
            .iter()
            .find(|(s, _)| (s - t).abs() <= 1e-9 * (1.0 + t))
            .map(|(_, f)| f)
    }
}

/// Hard gate on boundary leakage; runs whose domain is properly sized stay
/// orders of magnitude below it.
const EDGE_LEAK_GATE: f64 = 1e-6;

/// Domain sizing rule for half-line runs: right support edge of the data
/// plus 8 sqrt(q t) of diffusive spread plus 4 kernel radii of margin.
pub fn sized_x_max(support_right: f64, q: f64, t_final: f64, d: f64, h: f64) -> f64 {
    let raw = support_right + 8.0 * (q * t_final.max(1.0)).sqrt() + 4.0 * d;
    (raw / h).ceil() * h
}

/// Geometric snapshot schedule t_k = t0 * 2^(k/2) capped by t_final,
/// with t = 0 prepended.
pub fn geometric_snapshots(t0: f64, t_final: f64) -> Vec<f64> {
    let mut times = vec![0.0];
    let mut k = 0u32;
    loop {
        let t = t0 * (k as f64 / 2.0).exp2();
        if t > t_final * (1.0 + 1e-12) {
            break;
        }
        times.push(t);
        k += 1;
    }
    if let Some(last) = times.last() {
        if (last - t_final).abs() > 1e-9 * t_final {
            times.push(t_final);
        }
    }
    times
}

struct Stepper<'a> {
    conv: &'a Convolver,
    mode: Mode,
    /// Scratch fields for the four stage derivatives.
    k1: Field,
    k2: Field,
    k3: Field,
    stage: Field,
}

impl<'a> Stepper<'a> {
    fn new(conv: &'a Convolver, mode: Mode, proto: &Field) -> Self {
        Stepper {
            conv,
            mode,
            k1: proto.clone(),
            k2: proto.clone(),
            k3: proto.clone(),
            stage: proto.clone(),
        }
    }

    fn rhs(&self, u: &Field) -> Field {
        self.conv.apply_l(u)
    }

    fn rk4_step(&mut self, u: &mut Field, dt: f64) {
        self.k1 = self.rhs(u);
        self.stage.values_mut().copy_from_slice(u.values());
        axpy(&mut self.stage, 0.5 * dt, &self.k1);
        project(self.mode, &mut self.stage);
        self.k2 = self.rhs(&self.stage);

        self.stage.values_mut().copy_from_slice(u.values());
        axpy(&mut self.stage, 0.5 * dt, &self.k2);
        project(self.mode, &mut self.stage);
        self.k3 = self.rhs(&self.stage);

        self.stage.values_mut().copy_from_slice(u.values());
        axpy(&mut self.stage, dt, &self.k3);
        project(self.mode, &mut self.stage);
        let k4 = self.rhs(&self.stage);

        let w = dt / 6.0;
        let (uv, k1, k2, k3, k4) = (
            u.values_mut(),
            self.k1.values(),
            self.k2.values(),
            self.k3.values(),
            k4.values(),
        );
        for i in 0..uv.len() {
            uv[i] += w * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        project(self.mode, u);
    }

    fn exp_step(&mut self, u: &mut Field, dt: f64) {
        // u <- e^{-dt} sum_n (dt K)^n u / n!, tail below 1e-14.
        let decay = (-dt).exp();
        let mut term = u.clone();
        let mut coeff = decay;
        let mut acc: Vec<f64> = u.values().iter().map(|v| v * coeff).collect();
        let mut partial = coeff;
        let mut n = 0usize;
        loop {
            n += 1;
            term = self.conv.convolve(&term);
            coeff *= dt / n as f64;
            partial += coeff;
            for (a, t) in acc.iter_mut().zip(term.values()) {
                *a += coeff * t;
            }
            if 1.0 - partial < 1e-14 || n > 64 {
                break;
            }
        }
        u.values_mut().copy_from_slice(&acc);
        project(self.mode, u);
    }

    fn step(&mut self, u: &mut Field, dt: f64, integrator: Integrator) {
        match integrator {
            Integrator::Rk4 => self.rk4_step(u, dt),
            Integrator::ExpIntegratingFactor => self.exp_step(u, dt),
        }
    }
}

fn project(mode: Mode, f: &mut Field) {
    if mode == Mode::HalflineDirichlet {
        f.zero_exterior_strip();
    }
}

fn axpy(y: &mut Field, a: f64, x: &Field) {
    for (yi, xi) in y.values_mut().iter_mut().zip(x.values()) {
        *yi += a * xi;
    }
}

/// Integrate du/dt = J*u - u from u0, recording the requested snapshots by
/// stepping exactly onto their times.
pub fn evolve(k: &Kernel, u0: &Field, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.mode == Mode::HalflineDirichlet && !u0.vanishes_on_strip(0.0) {
        return Err(Error::Validation(vec![
            "half-line initial data must vanish on the exterior strip".into(),
        ]));
    }
    let conv = Convolver::new(k, u0.grid().h())?;
    let d = k.support_radius();
    let sup0 = u0.max_abs();
    let mut u = u0.clone();
    let mut stepper = Stepper::new(&conv, cfg.mode, &u);
    let mut snapshots = Vec::with_capacity(cfg.snapshot_times.len());
    let band = |f: &Field| match cfg.mode {
        Mode::HalflineDirichlet => f.edge_band_max(d),
        Mode::Cauchy => f.edge_band_max(d).max(f.left_band_max(d)),
    };
    let mut leak = band(&u);
    let mut t = 0.0f64;
    let mut steps: u64 = 0;

    for &target in &cfg.snapshot_times {
        if target <= 1e-14 {
            snapshots.push((0.0, u.clone()));
            continue;
        }
        while t < target - 1e-12 * target.max(1.0) {
            let dt = cfg.dt.min(target - t);
            stepper.step(&mut u, dt, cfg.integrator);
            t += dt;
            steps += 1;
            leak = leak.max(band(&u));
            if steps.is_multiple_of(64) {
                let bound = sup0 * (2.0 * t).exp().max(4.0) + 1e-9;
                if u.max_abs() > bound {
                    return Err(Error::Instability(format!(
                        "sup {:.3e} above growth bound {:.3e} at t = {t}",
                        u.max_abs(),
                        bound
                    )));
                }
            }
        }
        snapshots.push((target, u.clone()));
    }
    if leak > EDGE_LEAK_GATE {
        return Err(Error::EdgeLeak {
            leak,
            gate: EDGE_LEAK_GATE,
        });
    }
    Ok(Trajectory {
        snapshots,
        config: cfg.clone(),
        mass_leak_at_edge: leak,
    })
}

/// Pivot for the antisymmetric extension of half-line data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Pivot {
    Origin,
    /// Reflection about x = -d leaves the strip (-2d, 0) zero.
    MinusD { d: f64 },
}

/// Odd reflection of half-line data to the whole line. The integral of the
/// result is exactly zero node by node.
pub fn antisym_extend(u: &Field, pivot: Pivot) -> Result<Field> {
    if !u.vanishes_on_strip(0.0) {
        return Err(Error::Validation(vec![
            "antisymmetric extension needs data vanishing on x < 0".into(),
        ]));
    }
    let g = u.grid();
    let h = g.h();
    let i0 = g
        .index_of(0.0)
        .ok_or_else(|| Error::GridMismatch("grid must contain the origin node".into()))?;
    match pivot {
        Pivot::Origin => {
            let n_pos = g.len() - i0; // nodes 0..x_max
            let out_grid = Grid::new(-g.x_max(), h, 2 * n_pos - 1);
            let mut vals = vec![0.0; out_grid.len()];
            for j in 0..n_pos {
                let v = u.values()[i0 + j];
                vals[n_pos - 1 + j] = v;
                vals[n_pos - 1 - j] = -v;
            }
            vals[n_pos - 1] = 0.0;
            Ok(Field::new(out_grid, vals, Extension::Zero))
        }
        Pivot::MinusD { d } => {
            let md = (d / h).round() as usize;
            if ((d / h) - md as f64).abs() > 1e-9 {
                return Err(Error::GridMismatch("pivot -d must sit on the node lattice".into()));
            }
            let n_pos = g.len() - i0;
            // nodes from -(2d + x_max) through x_max
            let out_grid = Grid::new(
                -((2 * md) as f64) * h - g.x_max(),
                h,
                2 * n_pos - 1 + 2 * md,
            );
            let mut vals = vec![0.0; out_grid.len()];
            let center = n_pos - 1 + 2 * md; // index of x = 0
            for j in 0..n_pos {
                let v = u.values()[i0 + j];
                vals[center + j] = v;
                vals[center - 2 * md - j] = -v;
            }
            Ok(Field::new(out_grid, vals, Extension::Zero))
        }
    }
}

/// Everything the two-sided comparison run produces.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub t0: f64,
    /// min over snapshots and x >= 0 of (upper - u).
    pub min_gap_upper: f64,
    /// min over snapshots and x >= 0 of (u - lower).
    pub min_gap_lower: f64,
    pub per_time: Vec<(f64, f64, f64)>,
}

/// Evolve u on the half line, restart its odd extensions on the whole line
/// at t0, and measure how well the comparison ordering holds up to t_final.
pub fn sandwich_check(
    k: &Kernel,
    u0: &Field,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<SandwichReport> {
    let d = k.support_radius();
    let mut times: Vec<f64> = geometric_snapshots(t0, t_final)
        .into_iter()
        .filter(|&t| t >= t0 - 1e-12)
        .collect();
    if times.is_empty() || (times[0] - t0).abs() > 1e-9 {
        times.insert(0, t0);
    }
    let cfg_half = EvolutionConfig::new(Mode::HalflineDirichlet, dt, t_final, times.clone());
    let traj = evolve(k, u0, &cfg_half)?;
    let u_t0 = traj
        .at_time(t0)
        .ok_or_else(|| Error::InvalidParameter("t0 missing from schedule".into()))?;

    let upper0 = antisym_extend(u_t0, Pivot::MinusD { d })?;
    let lower0 = antisym_extend(u_t0, Pivot::Origin)?;

    let shifted: Vec<f64> = times.iter().map(|t| t - t0).collect();
    let cfg_whole = EvolutionConfig::new(Mode::Cauchy, dt, t_final - t0, shifted);
    let upper = evolve(k, &upper0, &cfg_whole)?;
    let lower = evolve(k, &lower0, &cfg_whole)?;

    let mut per_time = Vec::new();
    let (mut min_up, mut min_lo) = (f64::INFINITY, f64::INFINITY);
    for (idx, &t) in times.iter().enumerate() {
        let uh = traj.at_time(t).unwrap();
        let up = &upper.snapshots[idx].1;
        let lo = &lower.snapshots[idx].1;
        let g = uh.grid();
        let (mut gap_up, mut gap_lo) = (f64::INFINITY, f64::INFINITY);
        for i in g.first_at_or_above(0.0)..g.len() {
            let x = g.x(i);
            let v = uh.values()[i];
            let iu = up.grid().index_of(x).ok_or_else(|| {
                Error::GridMismatch("comparison grids misaligned".into())
            })?;
            let il = lo.grid().index_of(x).unwrap();
            gap_up = gap_up.min(up.values()[iu] - v);
            gap_lo = gap_lo.min(v - lo.values()[il]);
        }
        min_up = min_up.min(gap_up);
        min_lo = min_lo.min(gap_lo);
        per_time.push((t, gap_up, gap_lo));
    }
    Ok(SandwichReport {
        t0,
        min_gap_upper: min_up,
        min_gap_lower: min_lo,
        per_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::moment;
    use crate::kernel::{sampled_kernel, Kernel};

    fn kernel() -> Kernel {
        Kernel::biweight(1.0).unwrap()
    }

    fn kernel_field(k: &Kernel, g: &Grid) -> Field {
        let conv = Convolver::new(k, g.h()).unwrap();
        sampled_kernel(k, g, &conv)
    }

    #[test]
    fn config_validation_catches_problems() {
        let bad = EvolutionConfig::new(Mode::Cauchy, 0.5, 10.0, vec![0.0, 12.0, 5.0]);
        match bad.validate() {
            Err(Error::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_conserves_mass_and_first_moment() {
        let k = kernel();
        let g = Grid::symmetric(8.0, 1.0 / 32.0);
        let u0 = kernel_field(&k, &g);
        let cfg = EvolutionConfig::new(Mode::Cauchy, 0.1, 6.0, vec![0.0, 1.0, 3.0, 6.0]);
        let traj = evolve(&k, &u0, &cfg).unwrap();
        let mass = |f: &Field| f.values().iter().sum::<f64>() * f.grid().h();
        let m1 = |f: &Field| {
            f.values()
                .iter()
                .enumerate()
                .map(|(i, v)| v * f.grid().x(i))
                .sum::<f64>()
                * f.grid().h()
        };
        for (_, u) in &traj.snapshots {
            assert!((mass(u) - 1.0).abs() < 1e-9);
            assert!(m1(u).abs() < 1e-12);
        }
    }

    #[test]
    fn halfline_mass_nonincreasing_and_bounded() {
        let k = kernel();
        let h = 1.0 / 32.0;
        let g = Grid::covering(-1.0, 30.0, h);
        let u0 = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.0 && x < 2.0 {
                1.0
            } else if x == 1.0 || x == 2.0 {
                0.5
            } else {
                0.0
            }
        });
        let cfg = EvolutionConfig::new(
            Mode::HalflineDirichlet,
            0.1,
            20.0,
            vec![0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0],
        );
        let traj = evolve(&k, &u0, &cfg).unwrap();
        let mut prev = f64::INFINITY;
        for (_, u) in &traj.snapshots {
            assert!(u.vanishes_on_strip(0.0), "strip re-zeroed");
            let m = moment(u, 0);
            assert!(m <= prev + 1e-12, "mass nonincreasing");
            prev = m;
            assert!(u.values().iter().all(|v| *v >= -1e-12), "positivity");
            assert!(u.max_abs() <= u0.max_abs() + 1e-12, "sup bound");
        }
    }

    #[test]
    fn comparison_principle_nodewise() {
        let k = kernel();
        let g = Grid::covering(-1.0, 25.0, 1.0 / 32.0);
        let inner = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.2 && x < 1.8 {
                0.7
            } else {
                0.0
            }
        });
        let outer = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.0 && x < 2.0 {
                1.0
            } else {
                0.0
            }
        });
        let cfg = EvolutionConfig::new(Mode::HalflineDirichlet, 0.1, 8.0, vec![2.0, 8.0]);
        let a = evolve(&k, &inner, &cfg).unwrap();
        let b = evolve(&k, &outer, &cfg).unwrap();
        let slack = 5.0 * g.h() * g.h();
        for ((_, ua), (_, ub)) in a.snapshots.iter().zip(&b.snapshots) {
            for (x, y) in ua.values().iter().zip(ub.values()) {
                assert!(x <= &(y + slack));
            }
        }
    }

    #[test]
    fn rk4_temporal_order_on_solution() {
        let k = kernel();
        let g = Grid::symmetric(8.0, 1.0 / 32.0);
        let u0 = kernel_field(&k, &g);
        let run = |dt: f64| {
            let cfg = EvolutionConfig::new(Mode::Cauchy, dt, 2.0, vec![2.0]);
            evolve(&k, &u0, &cfg).unwrap().snapshots[0].1.clone()
        };
        let exact = {
            let mut cfg = EvolutionConfig::new(Mode::Cauchy, 0.25, 2.0, vec![2.0]);
            cfg.integrator = Integrator::ExpIntegratingFactor;
            evolve(&k, &u0, &cfg).unwrap().snapshots[0].1.clone()
        };
        let e1 = run(0.2).sup_diff(&exact);
        let e2 = run(0.1).sup_diff(&exact);
        let ratio = e1 / e2;
        assert!(ratio > 10.0 && ratio < 22.0, "fourth order: ratio {ratio}");
    }

    #[test]
    fn exp_integrator_matches_semigroup() {
        // One exp step of the full interval equals many: the step is exact.
        let k = kernel();
        let g = Grid::symmetric(6.0, 1.0 / 32.0);
        let u0 = kernel_field(&k, &g);
        let mut one = EvolutionConfig::new(Mode::Cauchy, 0.25, 1.0, vec![1.0]);
        one.integrator = Integrator::ExpIntegratingFactor;
        let mut many = EvolutionConfig::new(Mode::Cauchy, 0.025, 1.0, vec![1.0]);
        many.integrator = Integrator::ExpIntegratingFactor;
        let a = evolve(&k, &u0, &one).unwrap();
        let b = evolve(&k, &u0, &many).unwrap();
        assert!(a.snapshots[0].1.sup_diff(&b.snapshots[0].1) < 1e-13);
    }

    #[test]
    fn antisym_extension_origin_moments() {
        let g = Grid::covering(-1.0, 6.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| {
            if x > 0.5 && x < 2.5 {
                (x - 0.5) * (2.5 - x)
            } else {
                0.0
            }
        });
        let w = antisym_extend(&u, Pivot::Origin).unwrap();
        let wg = w.grid();
        let h = wg.h();
        let total: f64 = w.values().iter().sum::<f64>() * h;
        assert!(total.abs() < 1e-12, "odd extension has zero integral");
        let m1: f64 = w
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * wg.x(i))
            .sum::<f64>()
            * h;
        assert!((m1 - 2.0 * moment(&u, 1)).abs() < 1e-10);
    }

    #[test]
    fn antisym_extension_minus_d_moments() {
        let k = kernel();
        let d = k.support_radius();
        let g = Grid::covering(-1.0, 6.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.0 && x < 2.0 {
                1.0
            } else {
                0.0
            }
        });
        let w = antisym_extend(&u, Pivot::MinusD { d }).unwrap();
        let wg = w.grid();
        let h = wg.h();
        let total: f64 = w.values().iter().sum::<f64>() * h;
        assert!(total.abs() < 1e-12);
        // moment about the pivot equals 2 M1 + 2 d M
        let m1_pivot: f64 = w
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * (wg.x(i) + d))
            .sum::<f64>()
            * h;
        let expect = 2.0 * moment(&u, 1) + 2.0 * d * moment(&u, 0);
        assert!((m1_pivot - expect).abs() < 1e-10);
        // strip (-2d, 0) stays zero
        for i in 0..wg.len() {
            let x = wg.x(i);
            if x > -2.0 * d + 1e-9 && x < -1e-9 {
                assert_eq!(w.values()[i], 0.0);
            }
        }
    }

    #[test]
    fn antisym_rejects_nonzero_strip() {
        let g = Grid::covering(-1.0, 2.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| if x < 0.0 { 1.0 } else { 0.0 });
        assert!(antisym_extend(&u, Pivot::Origin).is_err());
    }

    #[test]
    fn cauchy_preserves_antisymmetry_and_right_positivity() {
        let k = kernel();
        let g = Grid::symmetric(10.0, 1.0 / 32.0);
        let u0 = Field::from_fn(g, Extension::Zero, |x| {
            let b = |y: f64| {
                if y > 0.5 && y < 2.0 {
                    (y - 0.5) * (2.0 - y)
                } else {
                    0.0
                }
            };
            b(x) - b(-x)
        });
        let cfg = EvolutionConfig::new(Mode::Cauchy, 0.1, 5.0, vec![1.0, 5.0]);
        let traj = evolve(&k, &u0, &cfg).unwrap();
        let wg = u0.grid();
        let mid = wg.index_of(0.0).unwrap();
        for (_, w) in &traj.snapshots {
            for j in 0..=mid {
                let a = w.values()[mid + j];
                let b = w.values()[mid - j];
                assert!((a + b).abs() < 1e-10, "antisymmetry");
                assert!(a >= -1e-10, "positivity right of the pivot");
            }
        }
    }

    #[test]
    fn sandwich_holds_at_small_scale() {
        let k = kernel();
        let h = 1.0 / 32.0;
        let x_max = sized_x_max(2.0, k.diffusivity(), 32.0, 1.0, h);
        let g = Grid::covering(-1.0, x_max, h);
        let u0 = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.0 && x < 2.0 {
                1.0
            } else if x == 1.0 || x == 2.0 {
                0.5
            } else {
                0.0
            }
        });
        let rep = sandwich_check(&k, &u0, 4.0, 32.0, 0.1).unwrap();
        let slack = -5.0 * h * h;
        assert!(rep.min_gap_upper >= slack, "upper gap {}", rep.min_gap_upper);
        assert!(rep.min_gap_lower >= slack, "lower gap {}", rep.min_gap_lower);
        // At the restart instant all three agree on x >= 0.
        let first = rep.per_time.first().unwrap();
        assert!(first.1.abs() < 1e-12 && first.2.abs() < 1e-12);
    }
}
