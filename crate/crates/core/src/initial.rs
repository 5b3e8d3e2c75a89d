//! Initial-data generators for half-line runs: indicator plateaus, tent
//! bumps, truncated Gaussians and raw samples.

use crate::error::{Error, Result};
use crate::grid::{Extension, Field, Grid};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// Characteristic function of [a, b], sampled with half weights on the
    /// endpoints when they land on nodes.
    Indicator { a: f64, b: f64 },
    /// Tent of the given half-width centered at `center`, normalized to unit
    /// discrete mass.
    Hat { center: f64, width: f64 },
    /// Gaussian truncated to center +- 8 sigma (and to x >= 0), normalized
    /// to unit discrete mass.
    GaussianTruncated { center: f64, sigma: f64 },
    /// Explicit samples (x, value); interpolated linearly onto the grid.
    Samples(Vec<(f64, f64)>),
}

impl InitialData {
    /// Closed-form moments (mass, first, second) when the generator has them.
    pub fn exact_moments(&self) -> Option<[f64; 3]> {
        match self {
            InitialData::Indicator { a, b } => Some([
                b - a,
                (b * b - a * a) / 2.0,
                (b * b * b - a * a * a) / 3.0,
            ]),
            _ => None,
        }
    }

    pub fn support_right_edge(&self) -> f64 {
        match self {
            InitialData::Indicator { b, .. } => *b,
            InitialData::Hat { center, width } => center + width,
            InitialData::GaussianTruncated { center, sigma } => center + 8.0 * sigma,
            InitialData::Samples(pts) => pts
                .iter()
                .filter(|(_, v)| v.abs() > 0.0)
                .map(|(x, _)| *x)
                .fold(0.0, f64::max),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match self {
            InitialData::Indicator { a, b } => {
                if !(*a >= 0.0) {
                    problems.push("indicator must start at x >= 0".into());
                }
                if !(b > a) {
                    problems.push("indicator needs b > a".into());
                }
            }
            InitialData::Hat { center, width } => {
                if !(*width > 0.0) {
                    problems.push("hat width must be positive".into());
                }
                if center - width < 0.0 {
                    problems.push("hat support extends below 0".into());
                }
            }
            InitialData::GaussianTruncated { center, sigma } => {
                if !(*sigma > 0.0) {
                    problems.push("sigma must be positive".into());
                }
                if *center < 0.0 {
                    problems.push("gaussian center below 0".into());
                }
            }
            InitialData::Samples(pts) => {
                if pts.len() < 2 {
                    problems.push("need at least two sample points".into());
                }
                if pts.iter().any(|(x, v)| v.abs() > 0.0 && *x < 0.0) {
                    problems.push("sample support extends below 0".into());
                }
                if pts.iter().any(|(_, v)| *v < 0.0) {
                    problems.push("sample values must be nonnegative".into());
                }
                if pts.iter().any(|(x, v)| !x.is_finite() || !v.is_finite()) {
                    problems.push("non-finite sample entry".into());
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    /// Sample onto a grid; zero on the exterior strip by construction.
    pub fn make_field(&self, g: &Grid) -> Result<Field> {
        self.validate()?;
        if g.x_max() < self.support_right_edge() {
            return Err(Error::InsufficientDomain(format!(
                "grid ends at {} before the data support edge {}",
                g.x_max(),
                self.support_right_edge()
            )));
        }
        let mut f = match self {
            InitialData::Indicator { a, b } => Field::from_fn(*g, Extension::Zero, |x| {
                let on_a = (x - a).abs() < 1e-12;
                let on_b = (x - b).abs() < 1e-12;
                if on_a || on_b {
                    0.5
                } else if x > *a && x < *b {
                    1.0
                } else {
                    0.0
                }
            }),
            InitialData::Hat { center, width } => {
                let raw = Field::from_fn(*g, Extension::Zero, |x| {
                    let s = (x - center).abs() / width;
                    if s < 1.0 {
                        (1.0 - s) / width
                    } else {
                        0.0
                    }
                });
                normalize_unit_mass(raw)?
            }
            InitialData::GaussianTruncated { center, sigma } => {
                let raw = Field::from_fn(*g, Extension::Zero, |x| {
                    if x < 0.0 || (x - center).abs() > 8.0 * sigma {
                        0.0
                    } else {
                        (-((x - center) / sigma).powi(2) / 2.0).exp()
                    }
                });
                normalize_unit_mass(raw)?
            }
            InitialData::Samples(pts) => {
                let mut pts = pts.clone();
                pts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
                Field::from_fn(*g, Extension::Zero, |x| interp_linear(&pts, x))
            }
        };
        f.zero_exterior_strip();
        if f.values().iter().any(|v| *v < 0.0) {
            return Err(Error::Validation(vec!["sampled data negative".into()]));
        }
        Ok(f)
    }
}

fn normalize_unit_mass(mut f: Field) -> Result<Field> {
    let mass: f64 = f.values().iter().sum::<f64>() * f.grid().h();
    if mass <= 0.0 {
        return Err(Error::Validation(vec![
            "generator support misses every grid node".into(),
        ]));
    }
    for v in f.values_mut() {
        *v /= mass;
    }
    Ok(f)
}

fn interp_linear(pts: &[(f64, f64)], x: f64) -> f64 {
    if x <= pts[0].0 || x >= pts[pts.len() - 1].0 {
        return 0.0;
    }
    let i = pts.partition_point(|p| p.0 <= x);
    let (x0, v0) = pts[i - 1];
    let (x1, v1) = pts[i];
    let s = (x - x0) / (x1 - x0);
    v0 * (1.0 - s) + v1 * s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::moment;

    #[test]
    fn indicator_moments_are_exact() {
        let g = Grid::covering(-1.0, 6.0, 1.0 / 32.0);
        let u = InitialData::Indicator { a: 1.0, b: 2.0 }.make_field(&g).unwrap();
        assert!((moment(&u, 0) - 1.0).abs() < 1e-13);
        assert!((moment(&u, 1) - 1.5).abs() < 1e-13);
        assert!((moment(&u, 2) - 7.0 / 3.0).abs() < 2e-4);
        let exact = InitialData::Indicator { a: 1.0, b: 2.0 }.exact_moments().unwrap();
        assert_eq!(exact, [1.0, 1.5, 7.0 / 3.0]);
    }

    #[test]
    fn hat_has_unit_mass() {
        let g = Grid::covering(-1.0, 4.0, 1.0 / 32.0);
        let u = InitialData::Hat {
            center: 1.0,
            width: 0.1,
        }
        .make_field(&g)
        .unwrap();
        assert!((moment(&u, 0) - 1.0).abs() < 1e-12);
        assert!((moment(&u, 1) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn invalid_specs_are_listed() {
        let bad = InitialData::Hat {
            center: 0.05,
            width: 0.2,
        };
        assert!(bad.validate().is_err());
        let bad = InitialData::Samples(vec![(0.5, 1.0), (1.0, -0.2), (2.0, 0.0)]);
        match bad.validate() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn samples_interpolate_and_reject_left_support() {
        let g = Grid::covering(-1.0, 4.0, 1.0 / 32.0);
        let ok = InitialData::Samples(vec![(0.5, 0.0), (1.0, 2.0), (1.5, 0.0)]);
        let f = ok.make_field(&g).unwrap();
        let i = g.index_of(0.75).unwrap();
        assert!((f.values()[i] - 1.0).abs() < 1e-12);
        let bad = InitialData::Samples(vec![(-0.5, 1.0), (1.0, 1.0), (1.5, 0.0)]);
        assert!(bad.make_field(&g).is_err());
    }
}
