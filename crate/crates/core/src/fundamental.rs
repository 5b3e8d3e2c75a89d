//! Regular part of the whole-line fundamental solution: the atom e^{-t} at
//! the origin is kept symbolic, and the smooth remainder is computed two
//! independent ways (exponential series of self-convolutions, and inverse
//! cosine transform), plus the Gaussian and dipole profiles of the local
//! limit.

use rayon::prelude::*;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Convolver, Field, Grid};
use crate::kernel::{sampled_kernel, Kernel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaMethod {
    Series,
    Fourier,
}

/// Smooth part of the fundamental solution at one time.
#[derive(Debug, Clone)]
pub struct OmegaProfile {
    pub field: Field,
    pub t: f64,
    pub method: OmegaMethod,
    /// Series: number of convolution powers summed.
    pub terms_used: Option<usize>,
    /// Fourier: frequency cutoff actually used.
    pub xi_cutoff: Option<f64>,
}

impl OmegaProfile {
    /// Discrete mass over the whole grid.
    pub fn mass(&self) -> f64 {
        self.field.values().iter().sum::<f64>() * self.field.grid().h()
    }

    /// Discrete second moment over the whole grid.
    pub fn second_moment(&self) -> f64 {
        let g = self.field.grid();
        self.field
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * g.x(i) * g.x(i))
            .sum::<f64>()
            * g.h()
    }

    /// Checks positivity, evenness, monotone decay away from the origin and
    /// the expected mass; tolerances follow the construction accuracy.
    pub fn validate(&self) -> Result<()> {
        let g = self.field.grid();
        let vals = self.field.values();
        if vals.iter().any(|v| *v < -1e-12) {
            return Err(Error::Validation(vec!["negative values".into()]));
        }
        if let Some(i0) = g.index_of(0.0) {
            let side = (g.len() - 1 - i0).min(i0);
            for j in 0..=side {
                let (a, b) = (vals[i0 + j], vals[i0 - j]);
                if (a - b).abs() > 1e-10 * (1.0 + a.abs()) {
                    return Err(Error::Validation(vec![format!(
                        "not even at offset {j}"
                    )]));
                }
                if j > 0 && vals[i0 + j] > vals[i0 + j - 1] + 1e-12 {
                    return Err(Error::Validation(vec![format!(
                        "not nonincreasing at offset {j}"
                    )]));
                }
            }
        }
        let expect = 1.0 - (-self.t).exp();
        if (self.mass() - expect).abs() > 1e-7 {
            return Err(Error::Validation(vec![format!(
                "mass {} deviates from {expect}",
                self.mass()
            )]));
        }
        Ok(())
    }
}

/// Number of series terms needed so the truncated exponential tail
/// (a Poisson tail in the term index) is below `tol`.
pub fn series_terms_needed(t: f64, tol: f64) -> usize {
    assert!(t > 0.0 && tol > 0.0);
    let mut coeff = (-t).exp();
    let mut partial = coeff;
    let mut n = 0usize;
    while 1.0 - partial >= tol && n < 4096 {
        n += 1;
        coeff *= t / n as f64;
        partial += coeff;
    }
    n
}

/// Series path: e^{-t} sum_n t^n K^n / n!, summed until the Poisson tail is
/// below `tol`. The convolution powers are accumulated incrementally.
pub fn omega_series(k: &Kernel, g: &Grid, t: f64, tol: f64) -> Result<OmegaProfile> {
    if t <= 0.0 {
        return Err(Error::InvalidParameter("time must be positive".into()));
    }
    if t > 200.0 {
        return Err(Error::InvalidParameter(
            "series path underflows for t > 200; use the transform path".into(),
        ));
    }
    let n_max = series_terms_needed(t, tol);
    let d = k.support_radius();
    let reach = n_max as f64 * d;
    if !g.covers(-reach, reach) {
        return Err(Error::InsufficientDomain(format!(
            "grid must cover [-{reach:.1}, {reach:.1}] for {n_max} terms"
        )));
    }
    if g.index_of(0.0).is_none() {
        return Err(Error::GridMismatch("series grid must contain the origin".into()));
    }
    let conv = Convolver::new(k, g.h())?;
    let mut power = sampled_kernel(k, g, &conv);
    let mut coeff = (-t).exp() * t;
    let mut acc: Vec<f64> = power.values().iter().map(|v| coeff * v).collect();
    for n in 2..=n_max {
        power = conv.convolve(&power);
        coeff *= t / n as f64;
        for (a, p) in acc.iter_mut().zip(power.values()) {
            *a += coeff * p;
        }
    }
    Ok(OmegaProfile {
        field: Field::new(*g, acc, crate::grid::Extension::Zero),
        t,
        method: OmegaMethod::Series,
        terms_used: Some(n_max),
        xi_cutoff: None,
    })
}

/// Transform path: the n = 1 term is added in closed form and the remainder
/// e^{-t}(e^{t F} - 1 - t F) of the transform F is inverted by a cosine
/// quadrature. The remainder decays like F^2, which keeps the cutoff modest
/// for kernels whose transform decays only algebraically.
pub fn omega_fourier(
    k: &Kernel,
    g: &Grid,
    t: f64,
    xi_cutoff: Option<f64>,
    d_xi: Option<f64>,
) -> Result<OmegaProfile> {
    if t <= 0.0 {
        return Err(Error::InvalidParameter("time must be positive".into()));
    }
    let q = k.diffusivity();
    let x_span = g.x_max().abs().max(g.x_min().abs());
    let step = d_xi.unwrap_or_else(|| {
        (0.25 / (x_span + 1.0))
            .min(0.04 / (1.0 + q * t).sqrt())
            .min(0.02)
    });
    if step.is_nan() || step <= 0.0 {
        return Err(Error::InvalidParameter("d_xi must be positive".into()));
    }
    let decay = (-t).exp();
    let tail = |xi: f64| {
        let jh = k.fourier(xi);
        let z = t * jh;
        // e^{-t}(e^{z} - 1 - z) without cancellation or overflow
        if z > 30.0 {
            (t * (jh - 1.0)).exp() - decay * (1.0 + z)
        } else {
            decay * (z.exp_m1() - z)
        }
    };

    let gate = 1e-14;
    let cutoff = match xi_cutoff {
        Some(c) => c,
        None => {
            // scan for the last frequency where the remainder is audible
            let probe = 0.05;
            let hard_cap = 50_000.0;
            let mut last_loud = 0.0f64;
            let mut xi = 0.0;
            while xi < hard_cap {
                if tail(xi).abs() >= gate {
                    last_loud = xi;
                }
                if xi > last_loud + 3.0 {
                    break;
                }
                xi += probe;
            }
            if xi >= hard_cap {
                return Err(Error::NonConvergence(
                    "transform remainder never fell under the cutoff gate".into(),
                ));
            }
            last_loud + 0.5
        }
    };

    let n_xi = ((cutoff / step).ceil() as usize).max(256);
    let step = cutoff / n_xi as f64;
    let f_vals: Vec<f64> = (0..=n_xi).map(|j| tail(j as f64 * step)).collect();
    let vals: Vec<f64> = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let x = g.x(i);
            // incremental rotation for cos(j step x), refreshed periodically
            let (dc, ds) = ((step * x).cos(), (step * x).sin());
            let (mut c, mut s) = (1.0f64, 0.0f64);
            let mut acc = 0.5 * f_vals[0];
            for (j, fv) in f_vals.iter().enumerate().skip(1) {
                if j % 4096 == 0 {
                    let a = step * x * j as f64;
                    c = a.cos();
                    s = a.sin();
                } else {
                    let (c2, s2) = (c * dc - s * ds, s * dc + c * ds);
                    c = c2;
                    s = s2;
                }
                let w = if j == n_xi { 0.5 } else { 1.0 };
                acc += w * fv * c;
            }
            acc * step / PI + decay * t * k.eval(x)
        })
        .collect();
    Ok(OmegaProfile {
        field: Field::new(*g, vals, crate::grid::Extension::Zero),
        t,
        method: OmegaMethod::Fourier,
        terms_used: None,
        xi_cutoff: Some(cutoff),
    })
}

/// Series below the crossover time, transform above.
pub fn omega_auto(k: &Kernel, g: &Grid, t: f64) -> Result<OmegaProfile> {
    if t <= 30.0 {
        omega_series(k, g, t, 1e-12)
    } else {
        omega_fourier(k, g, t, None, None)
    }
}

/// Heat kernel with diffusivity q.
pub fn gamma_q(x: f64, t: f64, q: f64) -> f64 {
    debug_assert!(t > 0.0 && q > 0.0);
    (4.0 * PI * q * t).powf(-0.5) * (-x * x / (4.0 * q * t)).exp()
}

/// Spatial derivative of the heat kernel (the dipole profile).
pub fn dipole_q(x: f64, t: f64, q: f64) -> f64 {
    -x / (2.0 * q * t) * gamma_q(x, t, q)
}

/// Report of the super-exponential tail inspection.
#[derive(Debug, Clone)]
pub struct TailReport {
    /// Nodes examined on each side.
    pub nodes: usize,
    /// Violations of log-concavity beyond the start of the tail region.
    pub convexity_violations: usize,
    /// Any negative value found (below -1e-12).
    pub negative_values: usize,
    pub min_value: f64,
}

/// Inspects the decay of the profile far from the origin: above the noise
/// floor the log of the profile must fall faster than linearly.
pub fn omega_tail_check(prof: &OmegaProfile) -> TailReport {
    let g = prof.field.grid();
    let vals = prof.field.values();
    let floor = 1e-13;
    let peak = prof.field.max_abs();
    let mut nodes = 0usize;
    let mut violations = 0usize;
    let mut negatives = 0usize;
    let mut min_value = f64::INFINITY;
    for v in vals {
        min_value = min_value.min(*v);
        if *v < -1e-12 {
            negatives += 1;
        }
    }
    if let Some(i0) = g.index_of(0.0) {
        let side = g.len() - 1 - i0;
        for j in 2..side {
            let (a, b, c) = (vals[i0 + j - 1], vals[i0 + j], vals[i0 + j + 1]);
            if a <= floor || b <= floor || c <= floor {
                continue;
            }
            if b > peak * 1e-3 {
                continue; // still in the core
            }
            nodes += 1;
            let second = a.ln() - 2.0 * b.ln() + c.ln();
            if second > 1e-9 {
                violations += 1;
            }
        }
    }
    TailReport {
        nodes,
        convexity_violations: violations,
        negative_values: negatives,
        min_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    fn kernel() -> Kernel {
        Kernel::biweight(1.0).unwrap()
    }

    fn series_grid(k: &Kernel, t: f64, h: f64) -> Grid {
        let n = series_terms_needed(t, 1e-12);
        Grid::symmetric(n as f64 * k.support_radius() + 1.0, h)
    }

    #[test]
    fn series_mass_matches_semigroup_weight() {
        let k = kernel();
        for t in [0.5, 2.0, 8.0] {
            let g = series_grid(&k, t, 1.0 / 32.0);
            let w = omega_series(&k, &g, t, 1e-12).unwrap();
            assert!((w.mass() - (1.0 - (-t).exp())).abs() < 1e-10, "t = {t}");
            w.validate().unwrap();
        }
    }

    #[test]
    fn series_second_moment_grows_linearly() {
        let k = kernel();
        let t = 3.0;
        let g = series_grid(&k, t, 1.0 / 64.0);
        let w = omega_series(&k, &g, t, 1e-12).unwrap();
        let expect = 2.0 * k.diffusivity() * t;
        assert!((w.second_moment() - expect).abs() / expect < 1e-6);
    }

    #[test]
    fn series_dominates_first_term() {
        let k = kernel();
        let t = 1.0;
        let g = series_grid(&k, t, 1.0 / 32.0);
        let w = omega_series(&k, &g, t, 1e-12).unwrap();
        for (i, v) in w.field.values().iter().enumerate() {
            let lower = (-t).exp() * t * k.eval(g.x(i));
            assert!(*v >= lower * (1.0 - 1e-9) - 1e-15);
        }
    }

    #[test]
    fn series_supported_in_reach() {
        let k = kernel();
        let t = 1.0;
        let g = Grid::symmetric(60.0, 1.0 / 16.0);
        let w = omega_series(&k, &g, t, 1e-12).unwrap();
        let n = w.terms_used.unwrap() as f64;
        for (i, v) in w.field.values().iter().enumerate() {
            if g.x(i).abs() > n + 1e-9 {
                assert_eq!(*v, 0.0, "exact zero outside the summed supports");
            }
        }
    }

    #[test]
    fn fourier_matches_series() {
        let k = kernel();
        for t in [0.5, 1.0, 5.0, 20.0] {
            let g = series_grid(&k, t, 1.0 / 128.0);
            let a = omega_series(&k, &g, t, 1e-12).unwrap();
            let b = omega_fourier(&k, &g, t, None, None).unwrap();
            let gap = a.field.sup_diff(&b.field);
            assert!(gap < 1e-8, "t = {t}: sup gap {gap:.3e}");
        }
    }

    #[test]
    fn fourier_profile_is_even() {
        let k = kernel();
        let g = Grid::symmetric(20.0, 1.0 / 32.0);
        let w = omega_fourier(&k, &g, 5.0, None, None).unwrap();
        let i0 = g.index_of(0.0).unwrap();
        for j in 0..(g.len() - 1 - i0) {
            let (a, b) = (w.field.values()[i0 + j], w.field.values()[i0 - j]);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn large_time_profile_approaches_gaussian() {
        let k = kernel();
        let t = 100.0;
        let q = k.diffusivity();
        let g = Grid::symmetric(60.0, 1.0 / 16.0);
        let w = omega_fourier(&k, &g, t, None, None).unwrap();
        let mut worst = 0.0f64;
        for (i, v) in w.field.values().iter().enumerate() {
            worst = worst.max((v - gamma_q(g.x(i), t, q)).abs());
        }
        assert!(worst * t.sqrt() < 0.05, "scaled gap {}", worst * t.sqrt());
    }

    #[test]
    fn tail_is_log_concave() {
        let k = kernel();
        let t = 5.0;
        let g = series_grid(&k, t, 1.0 / 32.0);
        let w = omega_series(&k, &g, t, 1e-12).unwrap();
        let rep = omega_tail_check(&w);
        assert!(rep.nodes > 50, "enough tail nodes: {}", rep.nodes);
        assert_eq!(rep.convexity_violations, 0);
        assert_eq!(rep.negative_values, 0);
    }

    #[test]
    fn gaussian_and_dipole_closed_forms() {
        // dipole value at (1, 1) with unit diffusivity
        let v = dipole_q(1.0, 1.0, 1.0);
        assert!((v - (-0.1098478)).abs() < 1e-6, "{v}");
        assert_eq!(dipole_q(0.0, 3.0, 0.5), 0.0);
        // first moment of the dipole over the half line is -1/2
        let m: f64 = {
            let h = 1e-3;
            let vals: Vec<f64> = (0..40_000)
                .map(|i| {
                    let x = i as f64 * h;
                    dipole_q(x, 1.0, 1.0) * x
                })
                .collect();
            quad::trapz(&vals, h)
        };
        assert!((m + 0.5).abs() < 1e-6, "{m}");
    }

    #[test]
    fn series_rejects_narrow_grid() {
        let k = kernel();
        let g = Grid::symmetric(5.0, 1.0 / 32.0);
        assert!(omega_series(&k, &g, 4.0, 1e-12).is_err());
    }
}
