//! Initial-condition generators.
//!
//! Noise is bit-reproducible: a PCG XSL-RR 128/64 generator (`Pcg64`) with
//! state `seed` and the fixed stream [`NOISE_STREAM`] feeds 53-bit uniforms
//! `(x >> 11)·2⁻⁵³` into Box–Muller, `r = √(−2 ln(1 − u₁))`, emitting
//! `r cos 2πu₂` then `r sin 2πu₂`, assigned in row-major order.

use std::f64::consts::TAU;

use rand_core::Rng;
use rand_pcg::Pcg64;

use super::config::{InitSpec, Preset};
use super::fieldio::read_field;
use crate::error::{Error, Result};
use crate::functional::FunctionalKind;
use crate::grid::{null_project, GridField, Shape};

/// Stream selector of the noise generator.
pub const NOISE_STREAM: u128 = 0x0a02_bdbf_7bb3_c0a7_ac28_fa16_a64a_bf96;

/// Standard normal samples from `seed`, as described in the module docs.
pub struct NormalStream {
    rng: Pcg64,
    spare: Option<f64>,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        NormalStream {
            rng: Pcg64::new(seed as u128, NOISE_STREAM),
            spare: None,
        }
    }

    fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        self.spare = Some(r * (TAU * u2).sin());
        r * (TAU * u2).cos()
    }
}

fn noise(shape: Shape, sigma: f64, seed: u64) -> Vec<f64> {
    let mut g = NormalStream::new(seed);
    (0..shape.len()).map(|_| sigma * g.sample()).collect()
}

fn square(shape: Shape, side: usize, offset: Option<(usize, usize)>) -> GridField {
    let r0 = offset.map_or((shape.rows - side) / 2, |o| o.0);
    if shape.is_1d() {
        return GridField::from_fn(shape, |i, _| f64::from((r0..r0 + side).contains(&i)));
    }
    let c0 = offset.map_or((shape.cols - side) / 2, |o| o.1);
    GridField::from_fn(shape, |i, j| {
        f64::from((r0..r0 + side).contains(&i) && (c0..c0 + side).contains(&j))
    })
}

fn disk(shape: Shape, radius: f64, center: Option<(f64, f64)>) -> GridField {
    let (cr, cc) = center.unwrap_or((
        (shape.rows as f64 - 1.0) / 2.0,
        (shape.cols as f64 - 1.0) / 2.0,
    ));
    GridField::from_fn(shape, |i, j| {
        let (di, dj) = (i as f64 - cr, j as f64 - cc);
        f64::from(di * di + dj * dj <= radius * radius)
    })
}

fn composite(n: usize, preset: Preset, sigma: f64, seed: u64) -> Vec<f64> {
    let x = |i: usize| i as f64 / n as f64;
    let band = |i: usize, a: f64, b: f64| (a..b).contains(&x(i));
    let mut v: Vec<f64> = (0..n)
        .map(|i| match preset {
            Preset::Steps => {
                if band(i, 0.125, 0.375) {
                    1.0
                } else if band(i, 0.5, 0.625) {
                    -0.5
                } else if band(i, 0.75, 0.875) {
                    2.0
                } else {
                    0.0
                }
            }
            Preset::PointNoise => {
                let spike = (i as f64 - 0.75 * n as f64).abs() < (n as f64 / 64.0).max(1.0);
                if spike {
                    3.0
                } else if band(i, 0.25, 0.5) {
                    1.0
                } else {
                    0.0
                }
            }
            Preset::RampNoise => {
                let tent = 1.0 - (x(i) - 0.25).abs() / 0.125;
                let ramp = if band(i, 0.55, 0.85) { (x(i) - 0.55) / 0.3 } else { 0.0 };
                tent.max(0.0) + ramp
            }
        })
        .collect();
    if preset != Preset::Steps && sigma > 0.0 {
        for (a, z) in v.iter_mut().zip(noise(Shape::line(n), sigma, seed)) {
            *a += z;
        }
    }
    v
}

/// Builds the initial field and removes its null-space component for `kind`.
/// Deterministic in `(spec, shape, seed)`.
pub fn generate_init(
    spec: &InitSpec,
    shape: Shape,
    seed: u64,
    kind: &FunctionalKind,
) -> Result<GridField> {
    let f = match spec {
        InitSpec::Square { side, offset } => square(shape, *side, *offset),
        InitSpec::Disk { radius, center } => disk(shape, *radius, *center),
        InitSpec::GaussianNoise { sigma } => GridField::new(shape, noise(shape, *sigma, seed))?,
        InitSpec::Composite1d { preset, sigma } => {
            if !shape.is_1d() {
                return Err(Error::InvalidParameter(format!(
                    "composite1d needs a single-column grid, got {shape}"
                )));
            }
            GridField::new(shape, composite(shape.rows, *preset, *sigma, seed))?
        }
        InitSpec::FromFile { path } => {
            let f = read_field(path)?;
            if f.shape() != shape {
                return Err(Error::ShapeMismatch {
                    left: f.shape(),
                    right: shape,
                });
            }
            f
        }
    };
    Ok(null_project(&f, kind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::tv_value;

    #[test]
    fn square_is_zero_mean_indicator() {
        let spec = InitSpec::Square {
            side: 16,
            offset: None,
        };
        let f = generate_init(&spec, Shape::new(64, 64), 0, &FunctionalKind::Tv).unwrap();
        assert!(f.sum().abs() < 1e-10);
        let levels = f.max() - f.min();
        assert!((levels - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_is_reproducible_and_seed_dependent() {
        let spec = InitSpec::GaussianNoise { sigma: 1.0 };
        let s = Shape::new(16, 16);
        let a = generate_init(&spec, s, 7, &FunctionalKind::Tv).unwrap();
        let b = generate_init(&spec, s, 7, &FunctionalKind::Tv).unwrap();
        let c = generate_init(&spec, s, 8, &FunctionalKind::Tv).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn noise_first_samples_are_frozen() {
        // Cross-checked against an independent big-integer PCG XSL-RR
        // implementation; guards the bit-level generator contract.
        let mut g = NormalStream::new(0);
        let got: Vec<f64> = (0..4).map(|_| g.sample()).collect();
        assert_eq!(got, FROZEN_NORMALS);
    }

    const FROZEN_NORMALS: [f64; 4] = [
        -1.6073821879381218,
        -0.7891911059408977,
        0.5741996683741686,
        -1.028298760279601,
    ];

    #[test]
    fn noise_moments_are_standard() {
        let mut g = NormalStream::new(123);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.sample()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "{mean}");
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn disk_perimeter_close_to_continuum() {
        let spec = InitSpec::Disk {
            radius: 10.0,
            center: None,
        };
        let f = generate_init(&spec, Shape::new(64, 64), 0, &FunctionalKind::Tv).unwrap();
        let p = 2.0 * std::f64::consts::PI * 10.0;
        assert!((tv_value(&f) - p).abs() <= 0.25 * p, "{} vs {p}", tv_value(&f));
    }

    #[test]
    fn tgv_init_is_orthogonal_to_affine() {
        let kind = FunctionalKind::tgv2_default();
        let spec = InitSpec::Composite1d {
            preset: Preset::RampNoise,
            sigma: 0.05,
        };
        let f = generate_init(&spec, Shape::line(64), 3, &kind).unwrap();
        let x = GridField::from_fn(Shape::line(64), |i, _| i as f64);
        assert!(f.sum().abs() < 1e-9);
        assert!(f.inner(&x).unwrap().abs() < 1e-8);
    }

    #[test]
    fn presets_differ_and_steps_ignore_seed() {
        let s = Shape::line(64);
        let mk = |p, seed| {
            generate_init(
                &InitSpec::Composite1d { preset: p, sigma: 0.1 },
                s,
                seed,
                &FunctionalKind::Tv,
            )
            .unwrap()
        };
        assert_eq!(mk(Preset::Steps, 1), mk(Preset::Steps, 2));
        assert_ne!(mk(Preset::PointNoise, 1), mk(Preset::PointNoise, 2));
        assert_ne!(mk(Preset::PointNoise, 1), mk(Preset::RampNoise, 1));
    }

    #[test]
    fn file_shape_must_match_grid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.txt");
        std::fs::write(&p, "1 2 3\n4 5 6\n").unwrap();
        let spec = InitSpec::FromFile { path: p };
        assert!(generate_init(&spec, Shape::new(2, 3), 0, &FunctionalKind::Tv).is_ok());
        assert!(matches!(
            generate_init(&spec, Shape::new(3, 2), 0, &FunctionalKind::Tv),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
