//! Uniform grids, sampled fields with explicit extension rules, discrete
//! convolution (stencil and FFT paths), the jump-diffusion operator and
//! moment quadratures.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quad::dot;

/// Uniform one-dimensional grid. Copyable value type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    x_min: f64,
    h: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, h: f64, n: usize) -> Self {
        assert!(h > 0.0 && n >= 2, "degenerate grid");
        Grid { x_min, h, n }
    }

    /// Grid spanning [x_min, x_max]; x_max is stretched to the next node.
    pub fn covering(x_min: f64, x_max: f64, h: f64) -> Self {
        let n = ((x_max - x_min) / h - 1e-9).ceil() as usize + 1;
        Grid::new(x_min, h, n.max(2))
    }

    /// Symmetric grid on [-half_width, half_width].
    pub fn symmetric(half_width: f64, h: f64) -> Self {
        let m = (half_width / h - 1e-9).ceil() as usize;
        Grid::new(-(m as f64) * h, h, 2 * m + 1)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + (self.n - 1) as f64 * self.h
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h
    }

    /// Index of the node nearest to x, if it lies on the grid.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let r = (x - self.x_min) / self.h;
        let i = r.round();
        if i < 0.0 || i as usize >= self.n || (r - i).abs() > 1e-6 {
            None
        } else {
            Some(i as usize)
        }
    }

    pub fn covers(&self, a: f64, b: f64) -> bool {
        self.x_min <= a + 1e-12 && self.x_max() >= b - 1e-12
    }

    /// First index with x >= a (clamped).
    pub fn first_at_or_above(&self, a: f64) -> usize {
        if a <= self.x_min {
            return 0;
        }
        (((a - self.x_min) / self.h - 1e-9).ceil() as usize).min(self.n - 1)
    }

    /// Last index with x <= b (clamped).
    pub fn last_at_or_below(&self, b: f64) -> usize {
        if b >= self.x_max() {
            return self.n - 1;
        }
        ((b - self.x_min) / self.h + 1e-9).floor().max(0.0) as usize
    }
}

/// Behavior of a field beyond its grid. The left end is always zero (fields
/// carry their exterior strip explicitly); the right end may continue with
/// slope one, which is how the stationary profile behaves at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extension {
    Zero,
    LinearSlopeOne,
}

/// Sampled function values on a grid.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
    extension: Extension,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>, extension: Extension) -> Self {
        assert_eq!(grid.len(), values.len());
        Field {
            grid,
            values,
            extension,
        }
    }

    pub fn zeros(grid: Grid, extension: Extension) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
            extension,
        }
    }

    pub fn from_fn(grid: Grid, extension: Extension, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Field {
            grid,
            values,
            extension,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at a node index with the extension rule applied for
    /// out-of-range indices (as signed offsets).
    fn value_ext(&self, i: isize) -> f64 {
        let n = self.values.len() as isize;
        if i < 0 {
            0.0
        } else if i < n {
            self.values[i as usize]
        } else {
            match self.extension {
                Extension::Zero => 0.0,
                Extension::LinearSlopeOne => {
                    self.values[self.values.len() - 1] + (i - n + 1) as f64 * self.grid.h
                }
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sup-norm difference on shared nodes; grids must agree.
    pub fn sup_diff(&self, other: &Field) -> f64 {
        assert_eq!(self.grid, other.grid, "sup_diff needs identical grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Largest |value| on nodes within `width` of the right edge.
    pub fn edge_band_max(&self, width: f64) -> f64 {
        let lo = self.grid.first_at_or_above(self.grid.x_max() - width);
        self.values[lo..].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest |value| on nodes within `width` of the left edge.
    pub fn left_band_max(&self, width: f64) -> f64 {
        let hi = self.grid.last_at_or_below(self.grid.x_min() + width);
        self.values[..=hi].iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Zero all nodes with x < 0 (the exterior strip).
    pub fn zero_exterior_strip(&mut self) {
        for i in 0..self.values.len() {
            if self.grid.x(i) < -1e-12 {
                self.values[i] = 0.0;
            } else {
                break;
            }
        }
    }

    pub fn vanishes_on_strip(&self, tol: f64) -> bool {
        for i in 0..self.values.len() {
            if self.grid.x(i) >= -1e-12 {
                break;
            }
            if self.values[i].abs() > tol {
                return false;
            }
        }
        true
    }

    /// Restriction to a coarser window [a, b] of the same spacing.
    pub fn restrict(&self, a: f64, b: f64) -> Field {
        let i0 = self.grid.first_at_or_above(a - 1e-12);
        let i1 = self.grid.last_at_or_below(b + 1e-12);
        assert!(i1 > i0);
        Field {
            grid: Grid::new(self.grid.x(i0), self.grid.h, i1 - i0 + 1),
            values: self.values[i0..=i1].to_vec(),
            extension: self.extension,
        }
    }
}

/// Discrete convolution with a kernel stencil.
///
/// The stencil holds h*J(k h) normalized to exact unit sum, so convolution
/// against it preserves discrete mass exactly and annihilates affine data at
/// interior nodes exactly. Both a direct O(N m) path and an FFT path are
/// provided; they agree to machine precision on zero-extension fields.
#[derive(Debug, Clone)]
pub struct Convolver {
    h: f64,
    m: usize,
    weights: Vec<f64>,
    raw_mass: f64,
    second_moment: f64,
}

impl Convolver {
    pub fn new(k: &Kernel, h: f64) -> Result<Self> {
        let d = k.support_radius();
        let m_real = d / h;
        let m = m_real.round();
        if (m_real - m).abs() > 1e-9 || m < 8.0 {
            return Err(Error::GridMismatch(format!(
                "kernel radius {d} must be an integer multiple (>= 8) of spacing {h}"
            )));
        }
        let m = m as usize;
        let mut weights: Vec<f64> = (0..=2 * m)
            .map(|j| h * k.eval((j as isize - m as isize) as f64 * h))
            .collect();
        let raw_mass: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= raw_mass;
        }
        let second_moment = weights
            .iter()
            .enumerate()
            .map(|(j, w)| {
                let z = (j as isize - m as isize) as f64 * h;
                w * z * z
            })
            .sum();
        Ok(Convolver {
            h,
            m,
            weights,
            raw_mass,
            second_moment,
        })
    }

    pub fn half_width(&self) -> usize {
        self.m
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Discrete mass of the raw (unnormalized) sampled stencil.
    pub fn raw_stencil_mass(&self) -> f64 {
        self.raw_mass
    }

    /// Discrete second moment of the stencil (the constant produced by the
    /// operator on quadratic data).
    pub fn stencil_second_moment(&self) -> f64 {
        self.second_moment
    }

    /// Normalized stencil weight at index j in [0, 2m]; offset (j - m) h.
    pub fn weight(&self, j: usize) -> f64 {
        self.weights[j]
    }

    /// Direct stencil path, parallel over output nodes.
    pub fn convolve_direct(&self, u: &Field) -> Field {
        let n = u.len();
        let m = self.m;
        // Materialize the extension into a padded scratch buffer so the hot
        // loop is a plain windowed dot product.
        let mut padded = vec![0.0; n + 2 * m];
        padded[m..m + n].copy_from_slice(u.values());
        for j in 0..m {
            padded[m + n + j] = u.value_ext((n + j) as isize);
        }
        let mut out = vec![0.0; n];
        let w = &self.weights;
        out.par_chunks_mut(2048).enumerate().for_each(|(c, chunk)| {
            let base = c * 2048;
            for (i, o) in chunk.iter_mut().enumerate() {
                let s = base + i;
                *o = dot(w, &padded[s..s + 2 * m + 1]);
            }
        });
        Field::new(u.grid(), out, u.extension())
    }

    /// FFT path: zero-pads to the next power of two past n + 3m so circular
    /// wraparound cannot touch the output range.
    pub fn convolve_spectral(&self, u: &Field) -> Field {
        let n = u.len();
        let m = self.m;
        let p = (n + 3 * m + 1).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(p);
        let ifft = planner.plan_fft_inverse(p);

        let mut a: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); p];
        for (i, v) in u.values().iter().enumerate() {
            a[i].re = *v;
        }
        for j in 0..m {
            a[n + j].re = u.value_ext((n + j) as isize);
        }
        let mut b: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); p];
        for (j, w) in self.weights.iter().enumerate() {
            let k = j as isize - m as isize;
            let idx = if k >= 0 { k as usize } else { p - k.unsigned_abs() };
            b[idx].re = *w;
        }
        fft.process(&mut a);
        fft.process(&mut b);
        for (x, y) in a.iter_mut().zip(&b) {
            *x *= *y;
        }
        ifft.process(&mut a);
        let scale = 1.0 / p as f64;
        let out = (0..n).map(|i| a[i].re * scale).collect();
        Field::new(u.grid(), out, u.extension())
    }

    /// Convolution J*u, picking the cheaper path.
    pub fn convolve(&self, u: &Field) -> Field {
        if self.m <= 96 {
            self.convolve_direct(u)
        } else {
            self.convolve_spectral(u)
        }
    }

    /// J*u - u, the generator of the jump-diffusion semigroup.
    pub fn apply_l(&self, u: &Field) -> Field {
        let mut out = self.convolve(u);
        for (o, v) in out.values_mut().iter_mut().zip(u.values()) {
            *o -= v;
        }
        out
    }
}

/// Discrete convolution of two sampled fields, evaluated on `out`:
/// (f * g)(x_i) = h sum_j f(x_i - y_j) g(y_j). All three grids must live on
/// one lattice with the same spacing; f is looked up with zero extension.
pub fn convolve_fields(f: &Field, g_field: &Field, out: Grid) -> Result<Field> {
    let (fg, gg) = (f.grid(), g_field.grid());
    if (fg.h() - gg.h()).abs() > 1e-15 || (fg.h() - out.h()).abs() > 1e-15 {
        return Err(Error::GridMismatch("spacings differ".into()));
    }
    let h = fg.h();
    let mut vals = vec![0.0; out.len()];
    for (i, v) in vals.iter_mut().enumerate() {
        let x = out.x(i);
        let mut acc = 0.0;
        for (j, gv) in g_field.values().iter().enumerate() {
            if *gv == 0.0 {
                continue;
            }
            let arg = x - gg.x(j);
            if let Some(fi) = fg.index_of(arg) {
                acc += f.values()[fi] * gv;
            }
        }
        *v = acc * h;
    }
    Ok(Field::new(out, vals, Extension::Zero))
}

/// p-th moment of u over x >= 0.
///
/// Uniform node weight h: the integrand vanishes identically left of the
/// strip and at the far edge, so this is the whole-grid trapezoid rule, and
/// it is the weighting under which the evolution conserves its invariants
/// exactly (summation by parts has no boundary leftovers at x = 0).
pub fn moment(u: &Field, p: u8) -> f64 {
    let g = u.grid();
    let mut acc = 0.0;
    for (i, v) in u.values().iter().enumerate() {
        let x = g.x(i);
        if x < -1e-12 {
            continue;
        }
        let xp = match p {
            0 => 1.0,
            1 => x,
            2 => x * x,
            _ => x.powi(p as i32),
        };
        acc += v * xp;
    }
    acc * g.h()
}

/// Integral of u(x) w(x) over x >= 0; both fields on one grid.
pub fn weighted_mass(u: &Field, w: &Field) -> Result<f64> {
    if u.grid() != w.grid() {
        return Err(Error::GridMismatch("weighted_mass needs a shared grid".into()));
    }
    let g = u.grid();
    let mut acc = 0.0;
    for (i, (a, b)) in u.values().iter().zip(w.values()).enumerate() {
        if g.x(i) < -1e-12 {
            continue;
        }
        acc += a * b;
    }
    Ok(acc * g.h())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Kernel;

    fn biweight_conv(h: f64) -> (Kernel, Convolver) {
        let k = Kernel::biweight(1.0).unwrap();
        let c = Convolver::new(&k, h).unwrap();
        (k, c)
    }

    #[test]
    fn rejects_unresolved_kernel() {
        let k = Kernel::biweight(1.0).unwrap();
        assert!(Convolver::new(&k, 0.3).is_err());
        assert!(Convolver::new(&k, 0.25).is_err()); // m = 4 < 8
    }

    #[test]
    fn constant_field_reproduced_in_interior() {
        let (_, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-2.0, 2.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |_| 1.0);
        let ju = c.convolve(&u);
        let (lo, hi) = (g.first_at_or_above(-1.0 + 1.0), g.last_at_or_below(2.0 - 1.0));
        for i in lo..=hi {
            assert!((ju.values()[i] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn affine_field_reproduced_in_interior() {
        let (_, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-3.0, 3.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| x);
        let ju = c.convolve(&u);
        for i in g.first_at_or_above(-2.0)..=g.last_at_or_below(2.0) {
            assert!((ju.values()[i] - g.x(i)).abs() < 1e-13);
        }
    }

    #[test]
    fn quadratic_gives_stencil_second_moment() {
        let (k, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-3.0, 3.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| x * x);
        let lu = c.apply_l(&u);
        for i in g.first_at_or_above(-2.0)..=g.last_at_or_below(2.0) {
            assert!((lu.values()[i] - c.stencil_second_moment()).abs() < 1e-12);
        }
        // and the stencil second moment approximates 2q = 1/7
        assert!((c.stencil_second_moment() - 2.0 * k.diffusivity()).abs() < 1e-6);
    }

    #[test]
    fn indicator_convolution_closed_form() {
        let k = Kernel::biweight(1.0).unwrap();
        let h = 1.0 / 128.0;
        let c = Convolver::new(&k, h).unwrap();
        let g = Grid::covering(-1.5, 2.5, h);
        let u = Field::from_fn(g, Extension::Zero, |x| {
            if x > 0.0 && x < 1.0 {
                1.0
            } else if x == 0.0 || x == 1.0 {
                0.5
            } else {
                0.0
            }
        });
        let ju = c.convolve(&u);
        let i = g.index_of(0.5).unwrap();
        assert!((ju.values()[i] - 0.79296875).abs() < 2e-5);
    }

    #[test]
    fn direct_and_spectral_agree() {
        let (_, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-1.0, 5.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| (x * 1.3).sin() * (-x * x / 4.0).exp());
        let a = c.convolve_direct(&u);
        let b = c.convolve_spectral(&u);
        assert!(a.sup_diff(&b) < 1e-12);
    }

    #[test]
    fn spectral_handles_linear_extension() {
        let (_, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-1.0, 4.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::LinearSlopeOne, |x| x.max(0.0));
        let a = c.convolve_direct(&u);
        let b = c.convolve_spectral(&u);
        assert!(a.sup_diff(&b) < 1e-12);
        // near the right edge the slope-one extension keeps x reproduced
        let i = g.index_of(3.9375).unwrap();
        assert!((a.values()[i] - g.x(i)).abs() < 1e-12);
    }

    #[test]
    fn convolve_preserves_mass_of_compact_field() {
        let (_, c) = biweight_conv(1.0 / 32.0);
        let g = Grid::covering(-4.0, 4.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| {
            if x.abs() < 2.0 {
                (1.0 - x * x / 4.0).powi(2)
            } else {
                0.0
            }
        });
        let mass = |f: &Field| -> f64 { f.values().iter().sum::<f64>() * f.grid().h() };
        let ju = c.convolve(&u);
        assert!((mass(&ju) - mass(&u)).abs() < 1e-13);
    }

    #[test]
    fn moments_of_indicator() {
        let g = Grid::covering(-1.0, 4.0, 1.0 / 64.0);
        let u = Field::from_fn(g, Extension::Zero, |x| {
            if x > 1.0 && x < 2.0 {
                1.0
            } else if x == 1.0 || x == 2.0 {
                0.5
            } else {
                0.0
            }
        });
        assert!((moment(&u, 0) - 1.0).abs() < 1e-13);
        assert!((moment(&u, 1) - 1.5).abs() < 1e-13);
        assert!((moment(&u, 2) - 7.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn weighted_mass_reduces_to_moments() {
        let g = Grid::covering(-1.0, 4.0, 1.0 / 32.0);
        let u = Field::from_fn(g, Extension::Zero, |x| (-x.abs()).exp());
        let one = Field::from_fn(g, Extension::Zero, |_| 1.0);
        let xw = Field::from_fn(g, Extension::Zero, |x| x);
        assert!((weighted_mass(&u, &one).unwrap() - moment(&u, 0)).abs() < 1e-14);
        assert!((weighted_mass(&u, &xw).unwrap() - moment(&u, 1)).abs() < 1e-14);
        let other = Grid::covering(-1.0, 4.0, 1.0 / 16.0);
        let w2 = Field::zeros(other, Extension::Zero);
        assert!(weighted_mass(&u, &w2).is_err());
    }

    #[test]
    fn quadrature_order_on_smooth_moment() {
        // halving h reduces the first-moment error by a factor close to 4
        let exact = 1.0; // integral of x exp(-x) over the half line
        let err = |h: f64| {
            let g = Grid::covering(-1.0, 40.0, h);
            let u = Field::from_fn(g, Extension::Zero, |x| if x >= 0.0 { (-x).exp() } else { 0.0 });
            (moment(&u, 1) - exact).abs()
        };
        let e1 = err(1.0 / 8.0);
        let e2 = err(1.0 / 16.0);
        assert!(e1 / e2 > 3.5 && e1 / e2 < 4.5, "e1 = {e1}, e2 = {e2}");
    }
}
