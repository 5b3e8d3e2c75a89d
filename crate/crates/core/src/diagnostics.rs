//! Momenta time series, the weighted conservation law, the far-field /
//! global / near-field error functionals, rate fitting on log-log axes and
//! the near-field barrier residuals.

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::fundamental::{dipole_q, gamma_q, OmegaProfile};
use crate::grid::{moment, weighted_mass, Convolver, Extension, Field, Grid};
use crate::kernel::Kernel;
use crate::stationary::PhiSolution;

/// Mass and moments of one snapshot.
#[derive(Debug, Clone, Copy)]
pub struct MomentaRecord {
    pub t: f64,
    pub m: f64,
    pub m1: f64,
    pub m2: f64,
    pub m_phi: f64,
}

/// One record per snapshot: mass, first and second moments and the
/// profile-weighted mass.
pub fn momenta_series(traj: &Trajectory, phi: &PhiSolution) -> Result<Vec<MomentaRecord>> {
    let mut out = Vec::with_capacity(traj.snapshots.len());
    for (t, u) in &traj.snapshots {
        if u.grid() != phi.field.grid() {
            return Err(Error::GridMismatch(
                "trajectory and stationary profile must share a grid".into(),
            ));
        }
        out.push(MomentaRecord {
            t: *t,
            m: moment(u, 0),
            m1: moment(u, 1),
            m2: moment(u, 2),
            m_phi: weighted_mass(u, &phi.field)?,
        });
    }
    Ok(out)
}

/// Profile-weighted mass of the initial data; the conserved quantity that
/// the far-field amplitude locks onto.
pub fn mstar(u0: &Field, phi: &PhiSolution) -> Result<f64> {
    weighted_mass(u0, &phi.field)
}

/// t * sup_{x>=0} |u + 2 m1star D_q(x, t)|.
pub fn outer_error(u: &Field, t: f64, m1star: f64, q: f64) -> f64 {
    assert!(t > 0.0);
    let g = u.grid();
    let mut worst = 0.0f64;
    for i in g.first_at_or_above(0.0)..g.len() {
        let x = g.x(i);
        let v = u.values()[i] + 2.0 * m1star * dipole_q(x, t, q);
        worst = worst.max(v.abs());
    }
    t * worst
}

/// sup_{x>=0} (t^{3/2}/(x+1)) |u - m1star phi(x) Gamma_q(x,t) / (q t)|.
///
/// The comparison profile is the product form, finite down to x = 0.
pub fn global_error(u: &Field, t: f64, m1star: f64, q: f64, phi: &PhiSolution) -> Result<f64> {
    assert!(t > 0.0);
    if u.grid() != phi.field.grid() {
        return Err(Error::GridMismatch("field and profile grids differ".into()));
    }
    let g = u.grid();
    let w = t.powf(1.5);
    let mut worst = 0.0f64;
    for i in g.first_at_or_above(0.0)..g.len() {
        let x = g.x(i);
        let model = m1star * phi.value(i) * gamma_q(x, t, q) / (q * t);
        let v = (u.values()[i] - model).abs() * w / (x + 1.0);
        worst = worst.max(v);
    }
    Ok(worst)
}

/// sup over 0 <= x <= mu t^beta of (t^{3/2}/(x+1)) |u - m1star phi omega/(q t)|.
#[allow(clippy::too_many_arguments)]
pub fn inner_error(
    u: &Field,
    t: f64,
    m1star: f64,
    q: f64,
    phi: &PhiSolution,
    omega: &OmegaProfile,
    mu: f64,
    beta: f64,
) -> Result<f64> {
    assert!(t > 0.0);
    if !(0.25 < beta && beta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} outside (1/4, 1/2)"
        )));
    }
    if (omega.t - t).abs() > 1e-9 * (1.0 + t) {
        return Err(Error::InvalidParameter(format!(
            "omega computed at t = {}, requested {t}",
            omega.t
        )));
    }
    if u.grid() != phi.field.grid() || u.grid() != omega.field.grid() {
        return Err(Error::GridMismatch(
            "field, profile and omega must share a grid".into(),
        ));
    }
    let g = u.grid();
    let x_hi = mu * t.powf(beta);
    let w = t.powf(1.5);
    let mut worst = 0.0f64;
    for i in g.first_at_or_above(0.0)..=g.last_at_or_below(x_hi) {
        let x = g.x(i);
        let model = m1star * phi.value(i) * omega.field.values()[i] / (q * t);
        worst = worst.max((u.values()[i] - model).abs() * w / (x + 1.0));
    }
    Ok(worst)
}

/// Pointwise ratio u q t / (m1star phi omega) over nodes in [x_lo, x_hi].
#[allow(clippy::too_many_arguments)]
pub fn inner_ratio_range(
    u: &Field,
    t: f64,
    m1star: f64,
    q: f64,
    phi: &PhiSolution,
    omega: &OmegaProfile,
    x_lo: f64,
    x_hi: f64,
) -> Result<(f64, f64)> {
    if u.grid() != phi.field.grid() || u.grid() != omega.field.grid() {
        return Err(Error::GridMismatch(
            "field, profile and omega must share a grid".into(),
        ));
    }
    let g = u.grid();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in g.first_at_or_above(x_lo)..=g.last_at_or_below(x_hi) {
        let denom = m1star * phi.value(i) * omega.field.values()[i];
        if denom.abs() < 1e-300 {
            return Err(Error::InvalidParameter(
                "vanishing comparison profile in the ratio window".into(),
            ));
        }
        let r = u.values()[i] * q * t / denom;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Least-squares slope of log(value) against log(t) inside the window,
/// with the coefficient of determination.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN values must be rejected
pub fn fit_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(f64, f64)> {
    if times.len() != values.len() {
        return Err(Error::InvalidParameter("length mismatch".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 * (1.0 - 1e-12) || t > window.1 * (1.0 + 1e-12) {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nonpositive value {v} at t = {t} cannot be fit on log axes"
            )));
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    if xs.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "need at least 4 points in the window, found {}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, r2))
}

/// Parameters of the near-field comparison functions.
#[derive(Debug, Clone, Copy)]
pub struct BarrierParams {
    pub kappa: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
    pub amplitude: f64,
}

impl BarrierParams {
    // negated comparisons reject NaN parameters as invalid
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(kappa: f64, gamma: f64, beta: f64, mu: f64, amplitude: f64) -> Result<Self> {
        let mut problems = Vec::new();
        if !(kappa > 0.0 && kappa < 1.0) {
            problems.push(format!("kappa = {kappa} outside (0,1)"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            problems.push(format!("gamma = {gamma} outside (0,1)"));
        }
        let beta_cap = (1.0 - kappa) / (2.0 * (2.0 - gamma));
        if !(beta < beta_cap) {
            problems.push(format!("beta = {beta} not below {beta_cap}"));
        }
        if !(beta > 0.25) {
            problems.push(format!("beta = {beta} must exceed 1/4"));
        }
        if !(mu > 0.0) {
            problems.push("mu must be positive".into());
        }
        if !(amplitude >= 1.0) {
            problems.push("amplitude must be at least 1".into());
        }
        if problems.is_empty() {
            Ok(BarrierParams {
                kappa,
                gamma,
                beta,
                mu,
                amplitude,
            })
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn admissible_beta_bound(&self) -> f64 {
        (1.0 - self.kappa) / (2.0 * (2.0 - self.gamma))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierSide {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy)]
pub struct BarrierResidual {
    pub min: f64,
    pub max: f64,
    pub x_hi: f64,
    pub nodes: usize,
}

/// Residual of d/dt - L applied to the near-field barrier
/// phi omega / t +- K t^{-(3+kappa)/2} (x+2d)^gamma over 0 <= x <= mu t^beta.
///
/// The time derivative of omega is eliminated analytically through
/// d/dt omega = L omega + e^{-t} J, so only spatial stencils act on data.
pub fn barrier_residual(
    k: &Kernel,
    phi: &PhiSolution,
    omega: &OmegaProfile,
    t: f64,
    p: &BarrierParams,
    side: BarrierSide,
) -> Result<BarrierResidual> {
    if t <= 0.0 {
        return Err(Error::InvalidParameter("t must be positive".into()));
    }
    if (omega.t - t).abs() > 1e-9 * (1.0 + t) {
        return Err(Error::InvalidParameter("omega time mismatch".into()));
    }
    let g = phi.field.grid();
    if omega.field.grid() != g {
        return Err(Error::GridMismatch("profile grids differ".into()));
    }
    let d = k.support_radius();
    let x_hi = p.mu * t.powf(p.beta);
    if !g.covers(-d, x_hi + d) {
        return Err(Error::InsufficientDomain(format!(
            "grid must cover [-{d}, {}]",
            x_hi + d
        )));
    }
    let conv = Convolver::new(k, g.h())?;
    let sign = match side {
        BarrierSide::Plus => 1.0,
        BarrierSide::Minus => -1.0,
    };
    let kamp = sign * p.amplitude;

    let l_omega = conv.apply_l(&omega.field);
    let phi_omega = Field::new(
        g,
        phi.field
            .values()
            .iter()
            .zip(omega.field.values())
            .map(|(a, b)| a * b)
            .collect(),
        Extension::Zero,
    );
    let l_phi_omega = conv.apply_l(&phi_omega);
    let z = Field::from_fn(g, Extension::Zero, |x| (x + 2.0 * d).powf(p.gamma));
    let l_z = conv.apply_l(&z);

    let decay = (-t).exp();
    let tpow = t.powf(-(3.0 + p.kappa) / 2.0);
    let (lo, hi) = (g.first_at_or_above(0.0), g.last_at_or_below(x_hi));
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in lo..=hi {
        let x = g.x(i);
        let phi_i = phi.value(i);
        let r = phi_i * (l_omega.values()[i] + decay * k.eval(x)) / t
            - phi_i * omega.field.values()[i] / (t * t)
            - kamp * (3.0 + p.kappa) / (2.0 * t) * tpow * z.values()[i]
            - l_phi_omega.values()[i] / t
            - kamp * tpow * l_z.values()[i];
        rmin = rmin.min(r);
        rmax = rmax.max(r);
    }
    Ok(BarrierResidual {
        min: rmin,
        max: rmax,
        x_hi,
        nodes: hi - lo + 1,
    })
}

/// Pointwise curvature bound on the barrier envelope: L z must stay below
/// -q gamma (1-gamma)/2 (x+3d)^(gamma-2) at every node x >= 0.
#[derive(Debug, Clone, Copy)]
pub struct EnvelopeBoundReport {
    /// max over nodes of L z + bound; nonpositive means the bound holds.
    pub max_violation: f64,
    pub nodes: usize,
}

pub fn envelope_curvature_check(
    k: &Kernel,
    g: &Grid,
    gamma: f64,
    x_hi: f64,
) -> Result<EnvelopeBoundReport> {
    let d = k.support_radius();
    if !g.covers(-d, x_hi + d) {
        return Err(Error::InsufficientDomain("grid too small for the check".into()));
    }
    let conv = Convolver::new(k, g.h())?;
    let q = k.diffusivity();
    let z = Field::from_fn(*g, Extension::Zero, |x| (x + 2.0 * d).powf(gamma));
    let l_z = conv.apply_l(&z);
    let (lo, hi) = (g.first_at_or_above(0.0), g.last_at_or_below(x_hi));
    let mut worst = f64::NEG_INFINITY;
    for i in lo..=hi {
        let x = g.x(i);
        let bound = -q * gamma * (1.0 - gamma) / 2.0 * (x + 3.0 * d).powf(gamma - 2.0);
        worst = worst.max(l_z.values()[i] - bound);
    }
    Ok(EnvelopeBoundReport {
        max_violation: worst,
        nodes: hi - lo + 1,
    })
}

/// Search for the first time from which both barriers hold over [t, 4t].
///
/// Scans a geometric ladder, then bisects between the last failing and first
/// passing candidate. Returns the refined onset if one exists below `t_max`.
pub fn find_barrier_onset(
    k: &Kernel,
    phi: &PhiSolution,
    p: &BarrierParams,
    t_min: f64,
    t_max: f64,
) -> Result<Option<f64>> {
    let window_ok = |t_star: f64| -> Result<bool> {
        for j in 0..5 {
            let t = t_star * 4.0f64.powf(j as f64 / 4.0);
            let g = phi.field.grid();
            // transform path works on the half-line grid at every t
            let omega = crate::fundamental::omega_fourier(k, &g, t, None, None)?;
            let plus = barrier_residual(k, phi, &omega, t, p, BarrierSide::Plus)?;
            let minus = barrier_residual(k, phi, &omega, t, p, BarrierSide::Minus)?;
            if plus.min < 0.0 || minus.max > 0.0 {
                return Ok(false);
            }
        }
        Ok(true)
    };
    let mut prev = t_min;
    let mut t = t_min;
    let mut found = None;
    while t <= t_max {
        if window_ok(t)? {
            found = Some((prev, t));
            break;
        }
        prev = t;
        t *= 2.0;
    }
    let (mut bad, mut good) = match found {
        Some((b, g)) => (b, g),
        None => return Ok(None),
    };
    if (good - t_min).abs() < 1e-12 {
        return Ok(Some(good));
    }
    for _ in 0..8 {
        let mid = (bad * good).sqrt();
        if window_ok(mid)? {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(Some(good))
}
