//! Stationary profile of the half-line problem: the function that is
//! invariant under kernel convolution on x >= 0, vanishes on the exterior
//! strip and tracks x at infinity. Also hosts the affinity diagnostic used as
//! the computable shadow of the uniqueness argument.

use crate::error::{Error, Result};
use crate::grid::{Convolver, Extension, Field, Grid};
use crate::kernel::Kernel;
use crate::quad::{cumtrapz, dot};

/// Converged stationary profile on [-d, x_max] with slope-one extension.
#[derive(Debug, Clone)]
pub struct PhiSolution {
    pub field: Field,
    /// phi(x_max) - x_max; lies in [0, d].
    pub offset_at_edge: f64,
    /// Right edge of the solve box actually used (larger than x_max).
    pub box_edge: f64,
    /// Total linear-solver iterations spent.
    pub iterations: usize,
}

impl PhiSolution {
    pub fn x_max(&self) -> f64 {
        self.field.grid().x_max()
    }

    /// phi at a node index.
    pub fn value(&self, i: usize) -> f64 {
        self.field.values()[i]
    }
}

/// Truncated-problem solve by plain fixed-point iteration from the
/// subsolution start max(x, 0). Iterates are monotone nondecreasing; the
/// iteration stops when consecutive iterates differ by less than `tol` in
/// sup norm. Practical for boxes up to a few dozen kernel radii; the
/// production path is `solve_phi`.
pub fn solve_phi_n(k: &Kernel, n: f64, g: &Grid, tol: f64) -> Result<Field> {
    solve_phi_n_observed(k, n, g, tol, |_| {})
}

/// Same as `solve_phi_n` but hands every iterate to `observer` (used by the
/// monotonicity tests).
pub fn solve_phi_n_observed(
    k: &Kernel,
    n: f64,
    g: &Grid,
    tol: f64,
    mut observer: impl FnMut(&[f64]),
) -> Result<Field> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let d = k.support_radius();
    if !g.covers(-d, n + d) {
        return Err(Error::InsufficientDomain(format!(
            "grid must cover [-{d}, {}]",
            n + d
        )));
    }
    let conv = Convolver::new(k, g.h())?;
    // Fixed parts: zero on the strip, identity data beyond n.
    let mut phi = Field::from_fn(*g, Extension::LinearSlopeOne, |x| {
        if x < 0.0 {
            0.0
        } else {
            x
        }
    });
    let lo = g.first_at_or_above(0.0);
    let hi = g.last_at_or_below(n);
    let max_iter = 400_000usize;
    for it in 0..max_iter {
        let next = conv.convolve(&phi);
        let mut diff = 0.0f64;
        for i in lo..=hi {
            let v = next.values()[i];
            let old = phi.values()[i];
            debug_assert!(v >= old - 1e-13, "iterates must not decrease");
            diff = diff.max((v - old).abs());
            phi.values_mut()[i] = v;
        }
        observer(&phi.values()[lo..=hi]);
        if diff < tol {
            let _ = it;
            return Ok(phi);
        }
    }
    Err(Error::NonConvergence(format!(
        "fixed point not within {tol:.1e} after {max_iter} iterations"
    )))
}

/// Conjugate gradients for the symmetric positive-definite operator
/// (I - K) restricted to the solve window, K the kernel stencil with
/// zero data outside the window.
fn cg_solve(conv: &Convolver, grid: &Grid, b: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
    let n = b.len();
    let apply = |v: &[f64], out: &mut [f64]| {
        let f = Field::new(*grid, v.to_vec(), Extension::Zero);
        let jv = conv.convolve(&f);
        for i in 0..n {
            out[i] = v[i] - jv.values()[i];
        }
    };
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let b_norm = dot(b, b).sqrt().max(1e-300);
    let mut rs = dot(&r, &r);
    let max_iter = 60_000usize;
    for it in 0..max_iter {
        if rs.sqrt() <= tol * b_norm {
            return Ok((x, it));
        }
        apply(&p, &mut ap);
        let alpha = rs / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::NonConvergence(format!(
        "conjugate gradients stalled above {tol:.1e}"
    )))
}

/// Stationary profile on [-d, x_max].
///
/// The truncated box carries the far-field behavior x + const directly: the
/// unknown is the deviation w = phi - x, constant past the box edge, which
/// reduces to two SPD solves and removes the O(x / box) truncation error of
/// the identity-data box. The box is solved twice with different padding and
/// the restrictions must agree to `tol` on [0, x_max].
pub fn solve_phi(k: &Kernel, x_max: f64, h: f64, tol: f64) -> Result<PhiSolution> {
    let d = k.support_radius();
    if x_max < 10.0 * d {
        return Err(Error::InvalidParameter(format!(
            "x_max = {x_max} must be at least 10 kernel radii"
        )));
    }
    let pad = (20.0 * d).max(0.1 * x_max);
    let (w1, it1) = solve_deviation_box(k, x_max + pad, h)?;
    let (w2, it2) = solve_deviation_box(k, x_max + 2.0 * pad, h)?;
    let hi = w1.grid().last_at_or_below(x_max);
    let mut gap = 0.0f64;
    for (a, b) in w1.values()[..=hi].iter().zip(&w2.values()[..=hi]) {
        gap = gap.max((a - b).abs());
    }
    if gap >= tol {
        return Err(Error::NonConvergence(format!(
            "box doubling left a gap {gap:.2e} >= {tol:.1e} on [0, {x_max}]"
        )));
    }

    let grid = Grid::covering(-d, x_max, h);
    let strip = grid.first_at_or_above(0.0);
    let mut values = vec![0.0; grid.len()];
    for (i, v) in values.iter_mut().enumerate().skip(strip) {
        let x = grid.x(i);
        let j = w2.grid().index_of(x).ok_or_else(|| {
            Error::GridMismatch("solve box does not align with output grid".into())
        })?;
        *v = x + w2.values()[j];
    }
    let field = Field::new(grid, values, Extension::LinearSlopeOne);
    let offset_at_edge = field.values()[grid.len() - 1] - grid.x_max();
    Ok(PhiSolution {
        field,
        offset_at_edge,
        box_edge: w2.grid().x_max(),
        iterations: it1 + it2,
    })
}

/// Deviation w = phi - x on [0, box_edge], with w constant past the edge.
fn solve_deviation_box(k: &Kernel, box_edge: f64, h: f64) -> Result<(Field, usize)> {
    let conv = Convolver::new(k, h)?;
    let m = conv.half_width();
    let grid = Grid::covering(0.0, box_edge, h);
    let n = grid.len();

    // Source from the exterior strip: (K * x_+)(x_i) - x_i, supported on
    // x < d. The stencil index j corresponds to the offset (j - m) h.
    let mut source = vec![0.0; n];
    for (i, s) in source.iter_mut().enumerate().take(m) {
        let x = grid.x(i);
        let mut acc = 0.0;
        for j in 0..=2 * m {
            let off = (j as isize - m as isize) as f64 * h;
            if off > x {
                acc += conv.weight(j) * (off - x);
            }
        }
        *s = acc;
    }
    // Coupling of the last d-band to the constant continuation of w.
    let mut beyond = vec![0.0; n];
    for (i, b) in beyond.iter_mut().enumerate().skip(n.saturating_sub(m)) {
        let mut acc = 0.0;
        for j in 0..=2 * m {
            let off = (j as isize - m as isize) as f64 * h;
            if grid.x(i) - off > grid.x_max() + 1e-12 {
                acc += conv.weight(j);
            }
        }
        *b = acc;
    }

    let tol = 1e-13;
    let (a, it_a) = cg_solve(&conv, &grid, &source, tol)?;
    let (b, it_b) = cg_solve(&conv, &grid, &beyond, tol)?;
    let denom = 1.0 - b[n - 1];
    if denom <= 1e-8 {
        return Err(Error::NonConvergence(
            "far-field coupling is singular; box too small".into(),
        ));
    }
    let w_edge = a[n - 1] / denom;
    let values: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + w_edge * y).collect();
    Ok((Field::new(grid, values, Extension::Zero), it_a + it_b))
}

/// Sup-norm of J*phi - phi over nodes in [0, x_max - d], with the slope-one
/// extension supplying values past the edge.
pub fn residual_l(k: &Kernel, phi: &PhiSolution) -> Result<f64> {
    let g = phi.field.grid();
    let conv = Convolver::new(k, g.h())?;
    let lphi = conv.apply_l(&phi.field);
    let hi = g.last_at_or_below(g.x_max() - k.support_radius());
    let lo = g.first_at_or_above(0.0);
    Ok(lphi.values()[lo..=hi]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Double-averaged profile: F(x) = (1/C0) * int_0^d W(w) [Phi(x+w) - Phi(x-w)] dw
/// with W(w) the outer kernel tail mass and Phi a cumulative integral of the
/// input. Exactly affine inputs map to themselves; profiles that are
/// invariant under the kernel produce an affine F, which is the testable
/// content of the uniqueness argument.
pub fn uniqueness_diagnostic(k: &Kernel, psi: &Field) -> Result<Field> {
    let g = psi.grid();
    let h = g.h();
    let conv = Convolver::new(k, h)?;
    let m = conv.half_width();
    if g.len() < 2 * m + 2 {
        return Err(Error::InsufficientDomain(
            "field narrower than one kernel window".into(),
        ));
    }
    // W_j = integral of J over [j h, d], trapezoid on the stencil samples.
    let mut w_tail = vec![0.0; m + 1];
    for j in (0..m).rev() {
        let a = k.eval(j as f64 * h);
        let b = k.eval((j + 1) as f64 * h);
        w_tail[j] = w_tail[j + 1] + 0.5 * h * (a + b);
    }
    // c0 = 2 * integral over [0, d] of w W(w) dw, same trapezoid family.
    let mut c0 = 0.0;
    for j in 0..m {
        let f0 = (j as f64 * h) * w_tail[j];
        let f1 = ((j + 1) as f64 * h) * w_tail[j + 1];
        c0 += 0.5 * h * (f0 + f1);
    }
    c0 *= 2.0;

    let cum = cumtrapz(psi.values(), h);
    let out_grid = Grid::new(g.x(m), h, g.len() - 2 * m);
    let mut out = vec![0.0; out_grid.len()];
    for (idx, o) in out.iter_mut().enumerate() {
        let i = idx + m;
        let mut acc = 0.0;
        for j in 1..=m {
            let term = w_tail[j] * (cum[i + j] - cum[i - j]);
            let w = if j == m { 0.5 } else { 1.0 };
            acc += w * h * term;
        }
        *o = acc / c0;
    }
    Ok(Field::new(out_grid, out, Extension::Zero))
}

/// Max deviation of `f` from its least-squares affine fit on [lo, hi].
pub fn affine_deviation(f: &Field, lo: f64, hi: f64) -> f64 {
    let g = f.grid();
    let i0 = g.first_at_or_above(lo);
    let i1 = g.last_at_or_below(hi);
    assert!(i1 > i0 + 1, "affinity window too narrow");
    let n = (i1 - i0 + 1) as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for i in i0..=i1 {
        let (x, y) = (g.x(i), f.values()[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let icept = (sy - slope * sx) / n;
    let mut dev = 0.0f64;
    for i in i0..=i1 {
        dev = dev.max((f.values()[i] - (icept + slope * g.x(i))).abs());
    }
    dev
}
