//! Property tests: the two convolution paths agree, discrete mass and odd
//! symmetry are preserved exactly, kernel invariants hold across the
//! families, and rate fitting recovers synthetic power laws.

use proptest::prelude::*;

use dipole_core::diagnostics::fit_rate;
use dipole_core::evolution::{antisym_extend, Pivot};
use dipole_core::grid::moment;
use dipole_core::{Convolver, Extension, Field, Grid, Kernel, KernelFamily};

fn field_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn direct_and_spectral_paths_agree(vals in field_values(900), mshift in 0usize..3) {
        let h = 1.0 / 32.0;
        let d = 1.0 + mshift as f64 * 0.5;
        let k = Kernel::biweight(d).unwrap();
        let g = Grid::covering(-d, -d + (vals.len() - 1) as f64 * h, h);
        let mut u = Field::new(g, vals, Extension::Zero);
        u.zero_exterior_strip();
        let c = Convolver::new(&k, h).unwrap();
        let gap = c.convolve_direct(&u).sup_diff(&c.convolve_spectral(&u));
        prop_assert!(gap < 1e-10, "gap {gap:.3e}");
    }

    #[test]
    fn convolution_preserves_discrete_mass(vals in field_values(700)) {
        let h = 1.0 / 32.0;
        let k = Kernel::biweight(1.0).unwrap();
        // embed compactly so nothing reaches the grid edges
        let g = Grid::symmetric(16.0, h);
        let mut buf = vec![0.0; g.len()];
        let off = (g.len() - vals.len()) / 2;
        buf[off..off + vals.len()].copy_from_slice(&vals);
        let u = Field::new(g, buf, Extension::Zero);
        let c = Convolver::new(&k, h).unwrap();
        let mass = |f: &Field| f.values().iter().sum::<f64>() * h;
        let drift = (mass(&c.convolve(&u)) - mass(&u)).abs();
        prop_assert!(drift < 1e-12 * mass(&u).max(1.0), "drift {drift:.3e}");
    }

    #[test]
    fn odd_extensions_have_zero_integral_exactly(vals in field_values(300)) {
        let h = 1.0 / 32.0;
        let g = Grid::covering(-1.0, -1.0 + (vals.len() + 64 - 1) as f64 * h, h);
        let mut buf = vec![0.0; g.len()];
        let lo = g.first_at_or_above(0.0);
        buf[lo + 1..lo + 1 + vals.len()].copy_from_slice(&vals);
        let u = Field::new(g, buf, Extension::Zero);
        for pivot in [Pivot::Origin, Pivot::MinusD { d: 1.0 }] {
            let w = antisym_extend(&u, pivot).unwrap();
            let total: f64 = w.values().iter().sum();
            prop_assert!(total.abs() < 1e-13 * (1.0 + u.max_abs()));
        }
    }

    #[test]
    fn fit_rate_recovers_synthetic_exponent(
        exponent in -2.0..2.0f64,
        amplitude in 0.1..10.0f64,
    ) {
        let times: Vec<f64> = (0..10).map(|i| 2.0f64.powi(i)).collect();
        let values: Vec<f64> = times.iter().map(|t| amplitude * t.powf(exponent)).collect();
        let (slope, r2) = fit_rate(&times, &values, (1.0, 512.0)).unwrap();
        prop_assert!((slope - exponent).abs() < 1e-10);
        prop_assert!(r2 > 1.0 - 1e-10);
    }

    #[test]
    fn kernel_invariants_across_families(
        d in 0.25..4.0f64,
        which in 0usize..3,
    ) {
        let family = [
            KernelFamily::Epanechnikov,
            KernelFamily::Biweight,
            KernelFamily::SmoothBump,
        ][which];
        let k = Kernel::from_family(family, d).unwrap();
        // validate() re-checks support, symmetry, monotonicity, mass
        prop_assert!(k.validate().is_ok());
        prop_assert!(k.diffusivity() > 0.0);
        prop_assert!(k.fourier(1.7 / d).abs() <= 1.0 + 1e-12);
    }
}

#[test]
fn wintner_monotonicity_of_convolution_powers() {
    // convolution powers of an even, unimodal density stay even and
    // unimodal; checked for every power up to 50
    let k = Kernel::biweight(1.0).unwrap();
    let h = 1.0 / 16.0;
    let g = Grid::symmetric(51.0, h);
    let f = dipole_core::kernel::self_convolution(&k, 1, &g).unwrap();
    let conv = Convolver::new(&k, h).unwrap();
    let mut cur = f;
    let i0 = g.index_of(0.0).unwrap();
    for n in 1..=50 {
        let vals = cur.values();
        for j in 1..(g.len() - i0) {
            let (a, b) = (vals[i0 + j - 1], vals[i0 + j]);
            assert!(b <= a + 1e-12, "power {n}, offset {j}");
            let mirror = vals[i0 - j];
            assert!((b - mirror).abs() < 1e-12, "evenness, power {n}");
        }
        cur = conv.convolve(&cur);
    }
}

#[test]
fn moments_under_antisym_extension_match_identities() {
    let h = 1.0 / 32.0;
    let g = Grid::covering(-1.0, 8.0, h);
    let u = Field::from_fn(g, Extension::Zero, |x| {
        if x > 0.5 && x < 3.0 {
            (x - 0.5) * (3.0 - x) * 0.4
        } else {
            0.0
        }
    });
    let (m0, m1) = (moment(&u, 0), moment(&u, 1));

    let origin = antisym_extend(&u, Pivot::Origin).unwrap();
    let og = origin.grid();
    let m1_origin: f64 = origin
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * og.x(i))
        .sum::<f64>()
        * h;
    assert!((m1_origin - 2.0 * m1).abs() < 1e-11);

    let shifted = antisym_extend(&u, Pivot::MinusD { d: 1.0 }).unwrap();
    let sg = shifted.grid();
    let m1_shifted: f64 = shifted
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * (sg.x(i) + 1.0))
        .sum::<f64>()
        * h;
    assert!((m1_shifted - (2.0 * m1 + 2.0 * m0)).abs() < 1e-11);
}
