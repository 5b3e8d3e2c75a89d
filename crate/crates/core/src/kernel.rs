//! Convolution kernels: compactly supported, even probability densities with
//! their moments, Fourier transform and iterated self-convolutions.

use crate::error::{Error, Result};
use crate::grid::{Extension, Field, Grid};
use crate::quad;

/// Built-in kernel families plus user-supplied tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// (3/(4d)) (1 - (z/d)^2)_+ , continuous.
    Epanechnikov,
    /// (15/(16d)) (1 - (z/d)^2)_+^2 , continuously differentiable.
    Biweight,
    /// Normalized exp(1 - 1/(1 - (z/d)^2)) bump, infinitely smooth.
    SmoothBump,
    /// Sampled values with linear interpolation.
    Tabulated,
}

impl KernelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            KernelFamily::Epanechnikov => "epanechnikov",
            KernelFamily::Biweight => "biweight",
            KernelFamily::SmoothBump => "smooth_bump",
            KernelFamily::Tabulated => "tabulated",
        }
    }
}

/// Mass and second-moment data of a kernel. `second_raw` is the raw second
/// moment; the diffusivity equals half of it by construction.
#[derive(Debug, Clone, Copy)]
pub struct KernelMoments {
    pub mass: f64,
    pub q: f64,
    pub second_raw: f64,
}

/// An even probability density supported in [-d, d], nonincreasing away from
/// the origin. Immutable after construction; all methods are pure.
#[derive(Debug, Clone)]
pub struct Kernel {
    family: KernelFamily,
    d: f64,
    /// Normalization factor applied on top of the family formula
    /// (1 for the polynomial families).
    scale: f64,
    table: Option<KernelTable>,
    moments: KernelMoments,
}

#[derive(Debug, Clone)]
struct KernelTable {
    z: Vec<f64>,
    v: Vec<f64>,
}

impl KernelTable {
    fn eval(&self, z: f64) -> f64 {
        let z = z.abs();
        if z >= *self.z.last().unwrap() {
            return 0.0;
        }
        match self.z.binary_search_by(|a| a.partial_cmp(&z).unwrap()) {
            Ok(i) => self.v[i],
            Err(i) => {
                let (z0, z1) = (self.z[i - 1], self.z[i]);
                let s = (z - z0) / (z1 - z0);
                self.v[i - 1] * (1.0 - s) + self.v[i] * s
            }
        }
    }
}

const MASS_TOL: f64 = 1e-10;
const MOMENT_INTERVALS: usize = 4096;

fn raw_eval(family: KernelFamily, d: f64, scale: f64, table: Option<&KernelTable>, z: f64) -> f64 {
    let s = z / d;
    if s.abs() >= 1.0 {
        return 0.0;
    }
    match family {
        KernelFamily::Epanechnikov => 0.75 / d * (1.0 - s * s),
        KernelFamily::Biweight => {
            let u = 1.0 - s * s;
            15.0 / 16.0 / d * u * u
        }
        KernelFamily::SmoothBump => scale * (1.0 - 1.0 / (1.0 - s * s)).exp(),
        KernelFamily::Tabulated => table.expect("tabulated kernel without table").eval(z),
    }
}

impl Kernel {
    pub fn epanechnikov(d: f64) -> Result<Self> {
        Self::build(KernelFamily::Epanechnikov, d, None)
    }

    pub fn biweight(d: f64) -> Result<Self> {
        Self::build(KernelFamily::Biweight, d, None)
    }

    pub fn smooth_bump(d: f64) -> Result<Self> {
        Self::build(KernelFamily::SmoothBump, d, None)
    }

    pub fn from_family(family: KernelFamily, d: f64) -> Result<Self> {
        if family == KernelFamily::Tabulated {
            return Err(Error::InvalidParameter(
                "tabulated kernels need sample points; use Kernel::tabulated".into(),
            ));
        }
        Self::build(family, d, None)
    }

    /// Build a kernel from (z, value) samples covering [0, d] or [-d, d].
    /// The table is symmetrized, renormalized to unit mass and then checked
    /// against every kernel invariant.
    pub fn tabulated(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::KernelInvariant("table needs at least 4 points".into()));
        }
        let mut pts: Vec<(f64, f64)> = points.to_vec();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Accept either half-line or full tables; fold onto [0, d].
        let mut half: Vec<(f64, f64)> = Vec::new();
        for &(z, v) in &pts {
            if !z.is_finite() || !v.is_finite() {
                return Err(Error::KernelInvariant("non-finite table entry".into()));
            }
            if z < 0.0 {
                continue;
            }
            half.push((z, v));
        }
        for &(z, v) in &pts {
            if z < 0.0 {
                let matching = half
                    .iter()
                    .find(|(zz, _)| (zz + z).abs() <= 1e-12 * (1.0 + z.abs()));
                if let Some(&(_, vv)) = matching {
                    if (vv - v).abs() > 1e-10 * (1.0 + vv.abs()) {
                        return Err(Error::KernelInvariant(format!(
                            "table not symmetric at z = {z}"
                        )));
                    }
                }
            }
        }
        if half.first().map(|p| p.0) != Some(0.0) {
            return Err(Error::KernelInvariant("table must include z = 0".into()));
        }
        let d = half.last().unwrap().0;
        if d <= 0.0 {
            return Err(Error::KernelInvariant("support radius must be positive".into()));
        }
        if half.last().unwrap().1.abs() > 1e-12 {
            return Err(Error::KernelInvariant("table must vanish at z = d".into()));
        }
        for w in half.windows(2) {
            if w[1].1 > w[0].1 + 1e-12 {
                return Err(Error::KernelInvariant(
                    "table must be nonincreasing on [0, d]".into(),
                ));
            }
        }
        if half.iter().any(|&(_, v)| v < 0.0) {
            return Err(Error::KernelInvariant("table values must be nonnegative".into()));
        }
        let z: Vec<f64> = half.iter().map(|p| p.0).collect();
        let v: Vec<f64> = half.iter().map(|p| p.1).collect();
        // Trapezoid mass of the symmetric extension.
        let mut mass = 0.0;
        for i in 1..z.len() {
            mass += (z[i] - z[i - 1]) * (v[i] + v[i - 1]); // both halves
        }
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::KernelInvariant(format!(
                "table mass {mass:.6} too far from 1 to renormalize"
            )));
        }
        let v: Vec<f64> = v.iter().map(|x| x / mass).collect();
        let table = KernelTable { z, v };
        Self::build_with_table(d, table)
    }

    fn build(family: KernelFamily, d: f64, table: Option<KernelTable>) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!("support radius d = {d}")));
        }
        let scale = match family {
            KernelFamily::SmoothBump => {
                // One-off normalization of the unit bump, then rescale by 1/d.
                let unit = quad::simpson(
                    |s| {
                        if s.abs() >= 1.0 {
                            0.0
                        } else {
                            (1.0 - 1.0 / (1.0 - s * s)).exp()
                        }
                    },
                    -1.0,
                    1.0,
                    MOMENT_INTERVALS,
                );
                1.0 / (unit * d)
            }
            _ => 1.0,
        };
        let moments = compute_moments(family, d, scale, table.as_ref());
        let k = Kernel {
            family,
            d,
            scale,
            table,
            moments,
        };
        k.validate()?;
        Ok(k)
    }

    fn build_with_table(d: f64, table: KernelTable) -> Result<Self> {
        Self::build(KernelFamily::Tabulated, d, Some(table))
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// Support radius.
    pub fn support_radius(&self) -> f64 {
        self.d
    }

    /// Density value at z; exactly zero outside [-d, d].
    pub fn eval(&self, z: f64) -> f64 {
        raw_eval(self.family, self.d, self.scale, self.table.as_ref(), z)
    }

    pub fn moments(&self) -> KernelMoments {
        self.moments
    }

    /// Diffusivity: half the second moment of the density.
    pub fn diffusivity(&self) -> f64 {
        self.moments.q
    }

    /// Fourier transform at frequency xi (real by symmetry, bounded by 1).
    ///
    /// Gauss-Legendre quadrature with a node count that grows with |xi| d so
    /// the oscillation stays resolved to machine accuracy.
    pub fn fourier(&self, xi: f64) -> f64 {
        let xi = xi.abs();
        let n = (64 + (0.8 * xi * self.d) as usize).div_ceil(32) * 32;
        let (xs, ws) = quad::gauss_legendre_scaled(n, 0.0, self.d);
        let mut acc = 0.0;
        for (x, w) in xs.iter().zip(&ws) {
            acc += w * self.eval(*x) * (xi * x).cos();
        }
        2.0 * acc
    }

    /// Checks support, symmetry, monotonicity, nonnegativity and unit mass on
    /// a fine sample. Run at construction; cheap enough to rerun at will.
    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if self.eval(d * (1.0 + 1e-12)) != 0.0 || self.eval(-1.5 * d) != 0.0 {
            return Err(Error::KernelInvariant("support leaks beyond radius d".into()));
        }
        let n = 2049;
        let mut prev = f64::INFINITY;
        for i in 0..n {
            let z = d * i as f64 / (n - 1) as f64;
            let v = self.eval(z);
            if v < 0.0 {
                return Err(Error::KernelInvariant(format!("negative value at z = {z}")));
            }
            if (v - self.eval(-z)).abs() > 1e-12 * (1.0 + v) {
                return Err(Error::KernelInvariant(format!("asymmetric at z = {z}")));
            }
            if v > prev + 1e-12 {
                return Err(Error::KernelInvariant(format!(
                    "not nonincreasing on [0, d] at z = {z}"
                )));
            }
            prev = v;
        }
        if (self.moments.mass - 1.0).abs() > MASS_TOL {
            return Err(Error::KernelInvariant(format!(
                "mass {} deviates from 1 beyond {MASS_TOL:.0e}",
                self.moments.mass
            )));
        }
        Ok(())
    }
}

fn compute_moments(
    family: KernelFamily,
    d: f64,
    scale: f64,
    table: Option<&KernelTable>,
) -> KernelMoments {
    match table {
        Some(t) => {
            // Trapezoid on the table's own breakpoints (the interpolant is
            // piecewise linear, so refining inside segments is pointless
            // beyond the z^2 weight; subdivide each segment a little).
            let mut mass = 0.0;
            let mut second = 0.0;
            let sub = 8;
            for i in 1..t.z.len() {
                let (a, b) = (t.z[i - 1], t.z[i]);
                let h = (b - a) / sub as f64;
                for j in 0..sub {
                    let z0 = a + j as f64 * h;
                    let z1 = z0 + h;
                    let (v0, v1) = (t.eval(z0), t.eval(z1));
                    mass += h * (v0 + v1); // both sides of the origin
                    second += h * (v0 * z0 * z0 + v1 * z1 * z1);
                }
            }
            KernelMoments {
                mass,
                q: second / 2.0,
                second_raw: second,
            }
        }
        None => {
            let f = |z: f64| raw_eval(family, d, scale, None, z);
            let mass = quad::simpson(f, -d, d, MOMENT_INTERVALS);
            let second = quad::simpson(|z| f(z) * z * z, -d, d, MOMENT_INTERVALS);
            KernelMoments {
                mass,
                q: second / 2.0,
                second_raw: second,
            }
        }
    }
}

/// n-fold self-convolution of the kernel, sampled on `g`.
///
/// The base sample is normalized to exact unit discrete mass, which makes the
/// discrete mass of the n-th iterate exactly 1 and keeps second moments
/// additive; see `Convolver` for the same convention in the evolution path.
pub fn self_convolution(k: &Kernel, n: usize, g: &Grid) -> Result<Field> {
    if n == 0 {
        return Err(Error::InvalidParameter("self-convolution order must be >= 1".into()));
    }
    let d = k.support_radius();
    let reach = n as f64 * d;
    if g.x_min() > -reach - 1e-12 || g.x_max() < reach - 1e-12 {
        return Err(Error::InsufficientDomain(format!(
            "grid [{}, {}] cannot hold support [-{reach}, {reach}]",
            g.x_min(),
            g.x_max()
        )));
    }
    if g.index_of(0.0).is_none() {
        return Err(Error::GridMismatch(
            "self-convolution grid must contain the origin node".into(),
        ));
    }
    let conv = crate::grid::Convolver::new(k, g.h())?;
    let mut f = sampled_kernel(k, g, &conv);
    for _ in 1..n {
        f = conv.convolve(&f);
    }
    Ok(f)
}

/// Kernel sampled on the grid and scaled to exact unit discrete mass.
pub(crate) fn sampled_kernel(k: &Kernel, g: &Grid, conv: &crate::grid::Convolver) -> Field {
    let raw_mass = conv.raw_stencil_mass();
    Field::from_fn(*g, Extension::Zero, |x| k.eval(x) / raw_mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn biweight_pointwise_values() {
        let k = Kernel::biweight(1.0).unwrap();
        assert!((k.eval(0.0) - 0.9375).abs() < 1e-15);
        assert_eq!(k.eval(1.5), 0.0);
        assert!((k.eval(0.5) - 0.52734375).abs() < 1e-15);
    }

    #[test]
    fn diffusivity_closed_forms() {
        let bi = Kernel::biweight(1.0).unwrap();
        assert!((bi.diffusivity() - 1.0 / 14.0).abs() < 1e-8 / 14.0);
        let ep = Kernel::epanechnikov(1.0).unwrap();
        assert!((ep.diffusivity() - 0.1).abs() < 1e-9);
        let bi2 = Kernel::biweight(2.0).unwrap();
        assert!((bi2.diffusivity() - 4.0 / 14.0).abs() < 1e-7);
    }

    #[test]
    fn second_raw_is_twice_q() {
        for k in [
            Kernel::biweight(1.0).unwrap(),
            Kernel::epanechnikov(0.5).unwrap(),
            Kernel::smooth_bump(1.0).unwrap(),
        ] {
            let m = k.moments();
            assert_eq!(m.second_raw, 2.0 * m.q);
        }
    }

    #[test]
    fn scaling_law_for_q() {
        for fam in [
            KernelFamily::Epanechnikov,
            KernelFamily::Biweight,
            KernelFamily::SmoothBump,
        ] {
            let k1 = Kernel::from_family(fam, 1.0).unwrap();
            let k3 = Kernel::from_family(fam, 3.0).unwrap();
            let ratio = k3.diffusivity() / k1.diffusivity();
            assert!((ratio - 9.0).abs() < 1e-7, "{fam:?}: {ratio}");
        }
    }

    #[test]
    fn fourier_at_zero_is_mass() {
        for k in [
            Kernel::biweight(1.0).unwrap(),
            Kernel::epanechnikov(2.0).unwrap(),
            Kernel::smooth_bump(0.5).unwrap(),
        ] {
            assert!((k.fourier(0.0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_small_frequency_expansion() {
        let k = Kernel::biweight(1.0).unwrap();
        let xi = 0.01;
        let expect = 1.0 - xi * xi / 14.0;
        assert!((k.fourier(xi) - expect).abs() < 1e-8);
    }

    #[test]
    fn fourier_even_and_bounded() {
        let k = Kernel::epanechnikov(1.0).unwrap();
        for xi in [0.3, 1.7, 5.0, 20.0, 111.0] {
            let v = k.fourier(xi);
            assert!((v - k.fourier(-xi)).abs() < 1e-14);
            assert!(v.abs() <= 1.0 + 1e-12);
            assert!(v < 1.0, "strictly below 1 away from 0");
        }
    }

    #[test]
    fn fourier_closed_form_biweight() {
        // (15/16) * integral of (1-z^2)^2 cos(xi z) has an explicit form;
        // spot-check the quadrature against it.
        let k = Kernel::biweight(1.0).unwrap();
        for xi in [0.7f64, 3.0, 12.5, 60.0] {
            let (s, c) = (xi.sin(), xi.cos());
            let exact = 15.0 * ((3.0 - xi * xi) * s - 3.0 * xi * c) / xi.powi(5);
            assert!(
                (k.fourier(xi) - exact).abs() < 1e-12,
                "xi = {xi}: {} vs {exact}",
                k.fourier(xi)
            );
        }
    }

    #[test]
    fn self_convolution_identity_and_mass() {
        let k = Kernel::biweight(1.0).unwrap();
        let g = Grid::symmetric(4.0, 1.0 / 64.0);
        let f1 = self_convolution(&k, 1, &g).unwrap();
        // n = 1 reproduces the kernel up to the discrete-mass normalization.
        let mut max_dev: f64 = 0.0;
        for (i, v) in f1.values().iter().enumerate() {
            max_dev = max_dev.max((v - k.eval(g.x(i))).abs());
        }
        assert!(max_dev < 1e-6, "max deviation {max_dev}");
        let f2 = self_convolution(&k, 2, &g).unwrap();
        assert!((moment_whole_line(&f2, 0) - 1.0).abs() < 2e-8);
    }

    #[test]
    fn self_convolution_second_moment_additivity() {
        let k = Kernel::biweight(1.0).unwrap();
        let g = Grid::symmetric(4.0, 1.0 / 64.0);
        let f2 = self_convolution(&k, 2, &g).unwrap();
        let m2 = moment_whole_line(&f2, 2);
        assert!((m2 - 2.0 * 2.0 * k.diffusivity()).abs() < 1e-6, "{m2}");
    }

    #[test]
    fn self_convolution_needs_room() {
        let k = Kernel::biweight(1.0).unwrap();
        let g = Grid::symmetric(2.0, 1.0 / 32.0);
        assert!(self_convolution(&k, 3, &g).is_err());
    }

    #[test]
    fn tabulated_roundtrip_matches_biweight() {
        let k = Kernel::biweight(1.0).unwrap();
        let pts: Vec<(f64, f64)> = (0..=400)
            .map(|i| {
                let z = i as f64 / 400.0;
                (z, k.eval(z))
            })
            .collect();
        let t = Kernel::tabulated(&pts).unwrap();
        assert!((t.diffusivity() - k.diffusivity()).abs() < 1e-4);
        assert!((t.eval(0.3) - k.eval(0.3)).abs() < 1e-5);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        // Increasing somewhere on [0, d].
        let bad = vec![(0.0, 0.5), (0.3, 0.6), (0.6, 0.3), (1.0, 0.0)];
        assert!(Kernel::tabulated(&bad).is_err());
        // Negative value.
        let bad = vec![(0.0, 0.9), (0.4, 0.3), (0.8, -0.1), (1.0, 0.0)];
        assert!(Kernel::tabulated(&bad).is_err());
    }

    fn moment_whole_line(f: &Field, p: i32) -> f64 {
        let g = f.grid();
        f.values()
            .iter()
            .enumerate()
            .map(|(i, v)| v * g.x(i).powi(p) * g.h())
            .sum()
    }
}
