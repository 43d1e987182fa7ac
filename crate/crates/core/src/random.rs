//! Seeded random test fields.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{ComplexField, Grid, SpectralField};

pub type FieldRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> FieldRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw on `[0, 1)`.
pub fn uniform01(rng: &mut FieldRng) -> f64 {
    rng.gen()
}

fn normal(rng: &mut FieldRng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// Complex field with independent normal Fourier coefficients on modes
/// `|k_a| <= band * k_nyquist` for every axis, normalized to unit mass.
pub fn band_limited_field(grid: &Arc<Grid>, band: f64, rng: &mut FieldRng) -> Result<ComplexField> {
    if !(band > 0.0 && band <= 1.0) {
        return Err(Error::Domain(format!("band fraction {band} outside (0, 1]")));
    }
    let n = grid.n();
    let spec = grid.spec().clone();
    let kmax = [0, 1, 2].map(|a| band * PI * n[a] as f64 / spec.len[a]);
    let mut s = SpectralField::zeros(grid);
    let coeffs = s.coeffs_mut();
    grid.for_each_mode(|i, k| {
        if (0..3).all(|a| k[a].abs() <= kmax[a]) {
            coeffs[i] = Complex64::new(normal(rng), normal(rng));
        }
    });
    let u = s.inverse();
    let m = u.mass();
    if m == 0.0 {
        return Err(Error::Domain("band contains no modes".into()));
    }
    Ok(u.scaled(m.sqrt().recip()))
}

/// Ranges for random Gaussian mixtures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureOptions {
    pub components: [usize; 2],
    pub width: [f64; 2],
    /// Centers are drawn uniformly in `[-spread, spread]^3`.
    pub spread: f64,
    pub amplitude: [f64; 2],
    /// Largest boost per axis.
    pub velocity: f64,
}

impl Default for MixtureOptions {
    fn default() -> Self {
        Self {
            components: [1, 3],
            width: [0.8, 1.6],
            spread: 1.5,
            amplitude: [0.2, 1.0],
            velocity: 0.5,
        }
    }
}

fn uniform(rng: &mut FieldRng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..r[1])
    } else {
        r[0]
    }
}

/// `sum_j a_j exp(-|x - c_j|^2 / (2 w_j^2) + i v_j . x + i phi_j)`, anisotropic widths per axis.
pub fn gaussian_mixture(grid: &Arc<Grid>, opts: &MixtureOptions, rng: &mut FieldRng) -> Result<ComplexField> {
    if opts.components[0] == 0 || opts.components[1] < opts.components[0] {
        return Err(Error::Domain("component range must be non-empty and positive".into()));
    }
    if opts.width[0] <= 0.0 || opts.width[1] < opts.width[0] {
        return Err(Error::Domain("width range must be positive".into()));
    }
    let count = rng.gen_range(opts.components[0]..=opts.components[1]);
    let terms: Vec<([f64; 3], [f64; 3], [f64; 3], f64, f64)> = (0..count)
        .map(|_| {
            let c = [0; 3].map(|_| opts.spread * (2.0 * rng.gen::<f64>() - 1.0));
            let w = [0; 3].map(|_| uniform(rng, opts.width));
            let v = [0; 3].map(|_| opts.velocity * (2.0 * rng.gen::<f64>() - 1.0));
            let a = uniform(rng, opts.amplitude);
            let phi = 2.0 * PI * rng.gen::<f64>();
            (c, w, v, a, phi)
        })
        .collect();
    Ok(ComplexField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(c, w, v, a, phi)| {
                let e: f64 = (0..3).map(|d| (x[d] - c[d]).powi(2) / (2.0 * w[d] * w[d])).sum();
                let ph: f64 = (0..3).map(|d| v[d] * x[d]).sum::<f64>() + phi;
                Complex64::from_polar(a * (-e).exp(), ph)
            })
            .sum()
    }))
}

/// Random radial field: a positive combination of centered Gaussians and a sech.
pub fn radial_field(grid: &Arc<Grid>, rng: &mut FieldRng) -> ComplexField {
    let widths = [0; 3].map(|_| rng.gen_range(0.6..1.8));
    let weights = [0; 3].map(|_| rng.gen_range(0.1..1.0));
    let sech_w = rng.gen_range(0.7..1.5);
    let sech_a = rng.gen_range(0.0..0.5);
    ComplexField::from_real_fn(grid, |x| {
        let r2: f64 = x.iter().map(|c| c * c).sum();
        let g: f64 = widths
            .iter()
            .zip(&weights)
            .map(|(w, a)| a * (-r2 / (2.0 * w * w)).exp())
            .sum();
        g + sech_a / (r2.sqrt() / sech_w).cosh()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;

    #[test]
    fn same_seed_same_field() {
        let g = Grid::new(GridSpec::cubic(16, 8.0).unwrap());
        let a = band_limited_field(&g, 0.5, &mut seeded_rng(7)).unwrap();
        let b = band_limited_field(&g, 0.5, &mut seeded_rng(7)).unwrap();
        let c = band_limited_field(&g, 0.5, &mut seeded_rng(8)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!((a.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn band_limit_is_respected() {
        let g = Grid::new(GridSpec::cubic(16, 8.0).unwrap());
        let u = band_limited_field(&g, 0.25, &mut seeded_rng(1)).unwrap();
        let s = u.transform();
        let kmax = 0.25 * PI * 16.0 / 8.0;
        g.for_each_mode(|i, k| {
            if k.iter().any(|c| c.abs() > kmax + 1e-12) {
                assert!(s.coeffs()[i].norm() < 1e-9);
            }
        });
    }

    #[test]
    fn radial_field_is_symmetric() {
        let g = Grid::new(GridSpec::cubic(16, 8.0).unwrap());
        let u = radial_field(&g, &mut seeded_rng(3));
        let n = 16;
        for i in 1..n {
            let a = u.values()[i + n * (3 + n * 5)];
            let b = u.values()[5 + n * (3 + n * i)];
            assert!((a - b).norm() < 1e-14);
        }
    }
}
