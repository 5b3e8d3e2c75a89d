//! Local heat equation on the half line via the exact odd-image kernel.
//! This module never time-steps; it is the trusted closed-form reference the
//! nonlocal solver is compared against in the vanishing-radius limit.

use crate::error::{Error, Result};
use crate::fundamental::{dipole_q, gamma_q};
use crate::grid::Field;

/// Half-line solution evaluated by image-kernel quadrature over the data.
#[derive(Debug, Clone)]
pub struct HeatSolution {
    u0: Field,
}

impl HeatSolution {
    pub fn new(u0: Field) -> Result<Self> {
        if !u0.vanishes_on_strip(0.0) {
            return Err(Error::Validation(vec![
                "heat data must vanish for x < 0".into(),
            ]));
        }
        Ok(HeatSolution { u0 })
    }

    pub fn data(&self) -> &Field {
        &self.u0
    }

    /// Value at (x, t), t > 0, with unit diffusivity.
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        assert!(t > 0.0, "evaluation requires t > 0");
        let g = self.u0.grid();
        let h = g.h();
        let mut acc = 0.0;
        for (j, v) in self.u0.values().iter().enumerate() {
            if *v == 0.0 {
                continue;
            }
            let y = g.x(j);
            acc += v * (gamma_q(x - y, t, 1.0) - gamma_q(x + y, t, 1.0));
        }
        acc * h
    }

    /// First moment of the solution at time t, by quadrature on a lattice
    /// wide enough that the Gaussian tail is negligible.
    pub fn first_moment(&self, t: f64) -> f64 {
        assert!(t > 0.0);
        let g = self.u0.grid();
        let x_hi = g.x_max() + 14.0 * t.sqrt();
        let h = g.h();
        let n = (x_hi / h).ceil() as usize;
        let mut acc = 0.0;
        for i in 0..=n {
            let x = i as f64 * h;
            acc += x * self.eval(x, t);
        }
        acc * h
    }

    /// First moment of the data (conserved by the half-line flow).
    pub fn data_first_moment(&self) -> f64 {
        crate::grid::moment(&self.u0, 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeatDipoleError {
    /// sup over x >= 0 of (t^{3/2}/(x+1)) |u + 2 m1star D|.
    pub weighted: f64,
    /// t^{3/2} sup |u + 2 m1star D| without the spatial weight.
    pub unweighted: f64,
    /// Set when |m1star| is too small for the dipole description to apply.
    pub outside_dipole_regime: bool,
}

/// Weighted and unweighted distance to the dipole profile at time t.
pub fn heat_dipole_error(hs: &HeatSolution, t: f64, m1star: f64) -> HeatDipoleError {
    assert!(t > 0.0);
    let g = hs.data().grid();
    let x_hi = g.x_max() + 12.0 * t.sqrt();
    let n = 2000usize;
    let dx = x_hi / n as f64;
    let (mut weighted, mut unweighted) = (0.0f64, 0.0f64);
    for i in 0..=n {
        let x = i as f64 * dx;
        let e = (hs.eval(x, t) + 2.0 * m1star * dipole_q(x, t, 1.0)).abs();
        unweighted = unweighted.max(e);
        weighted = weighted.max(e / (x + 1.0));
    }
    let scale = t.powf(1.5);
    let mass = crate::grid::moment(hs.data(), 0);
    HeatDipoleError {
        weighted: scale * weighted,
        unweighted: scale * unweighted,
        outside_dipole_regime: m1star.abs() < 1e-9 * (1.0 + mass),
    }
}

/// Limit profile of the rescaled solution near the boundary.
pub fn v_infinity(x: f64, m1star: f64) -> f64 {
    assert!(x >= 0.0);
    m1star / (2.0 * std::f64::consts::PI.sqrt()) * x / (x + 1.0)
}

#[derive(Debug, Clone, Copy)]
pub struct HeatBarrierReport {
    pub checked: usize,
    pub sign_violations: usize,
    /// Smallest |residual| seen; how close the inequality came to failing.
    pub min_margin: f64,
}

/// Closed-form sign check for the heat barriers -D +- K t^{-(3+kappa)/2}
/// (x+1)^gamma. Since the dipole solves the equation exactly, the residual
/// reduces to the envelope term, positive for the upper barrier and negative
/// for the lower one on 0 < x < mu* sqrt(t) with mu* = sqrt(gamma(1-gamma) /
/// (2(3+kappa))), once t exceeds 1/mu*^2.
pub fn heat_barrier_sign_check(
    kappa: f64,
    gamma: f64,
    n_x: usize,
    n_t: usize,
    t_lo: f64,
    t_hi: f64,
) -> HeatBarrierReport {
    assert!(kappa > 0.0 && kappa < 1.0 && gamma > 0.0 && gamma < 1.0);
    let mu_star = (gamma * (1.0 - gamma) / (2.0 * (3.0 + kappa))).sqrt();
    let t_min = (1.02 / (mu_star * mu_star)).max(t_lo);
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    for it in 0..n_t {
        let s = it as f64 / (n_t - 1) as f64;
        let t = t_min * (t_hi / t_min).powf(s);
        let x_hi = mu_star * t.sqrt() * (1.0 - 1e-9);
        for ix in 0..n_x {
            let x = x_hi * ix as f64 / (n_x - 1) as f64;
            // residual of the envelope K t^{-(3+kappa)/2}(x+1)^gamma under
            // d/dt - d^2/dx^2, per unit K
            let r = t.powf(-(3.0 + kappa) / 2.0)
                * (x + 1.0).powf(gamma)
                * (gamma * (1.0 - gamma) / ((x + 1.0) * (x + 1.0)) - (3.0 + kappa) / (2.0 * t));
            checked += 1;
            if r <= 0.0 {
                violations += 1;
            }
            min_margin = min_margin.min(r.abs());
        }
    }
    HeatBarrierReport {
        checked,
        sign_violations: violations,
        min_margin,
    }
}
