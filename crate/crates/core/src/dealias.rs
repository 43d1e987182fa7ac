//! Alias-free quartic terms for band-limited fields.
//!
//! The rectangle rule overstates `int |v|^4` for fields with energy near the
//! grid cutoff, which lets lattice-scale spikes lower the Weinstein quotient
//! below its continuum infimum. Zero-padding the spectrum to twice the points
//! per axis makes both quartic integrals exact for the trigonometric
//! interpolant.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::functionals::{PhysParams, QuarticTerms};
use crate::spectral::{ComplexField, Grid, SpectralField};

pub struct Dealiased {
    coarse: Arc<Grid>,
    fine: Arc<Grid>,
    map: Vec<usize>,
}

/// Quartic terms at one field, plus what the gradient needs.
pub struct QuarticEval {
    pub terms: QuarticTerms,
    fine_values: Vec<Complex64>,
    fine_density_hat: Vec<Complex64>,
}

impl Dealiased {
    pub fn new(coarse: &Arc<Grid>) -> Result<Self> {
        let spec = *coarse.spec();
        let fine_spec = crate::spectral::GridSpec::new(spec.n.map(|n| 2 * n), spec.len)?;
        let fine = Grid::new(fine_spec);
        let [n1, n2, n3] = spec.n;
        let up = |j: usize, n: usize| if j < n / 2 { j } else { j + n };
        let mut map = Vec::with_capacity(n1 * n2 * n3);
        for j3 in 0..n3 {
            for j2 in 0..n2 {
                for j1 in 0..n1 {
                    map.push(up(j1, n1) + 2 * n1 * (up(j2, n2) + 2 * n2 * up(j3, n3)));
                }
            }
        }
        Ok(Self {
            coarse: Arc::clone(coarse),
            fine,
            map,
        })
    }

    /// Box ratio of `grid` to the reference grid; errors unless it is an
    /// isotropic stretch with the same points.
    pub fn box_ratio(&self, grid: &Grid) -> Result<f64> {
        let (a, b) = (grid.spec(), self.coarse.spec());
        if a.n != b.n {
            return Err(Error::Grid(format!("expected {b}, got {a}")));
        }
        let r = [0, 1, 2].map(|i| a.len[i] / b.len[i]);
        if (r[0] - r[1]).abs() > 1e-12 * r[0] || (r[0] - r[2]).abs() > 1e-12 * r[0] {
            return Err(Error::Grid("dealiased evaluation needs an isotropic box stretch".into()));
        }
        Ok(r[0])
    }

    /// Quartic terms of the field whose DFT on a stretch of the reference box
    /// is `coeffs`.
    pub fn evaluate(&self, coeffs: &SpectralField) -> Result<QuarticEval> {
        let beta = self.box_ratio(coeffs.grid())?;
        let ratio = (self.fine.len() / self.coarse.len()) as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fine.len()];
        for (c, &j) in coeffs.coeffs().iter().zip(&self.map) {
            buf[j] = c * ratio;
        }
        self.fine.inverse_in_place(&mut buf);
        let mut rho: Vec<Complex64> = buf.iter().map(|z| Complex64::new(z.norm_sqr(), 0.0)).collect();
        self.fine.forward_in_place(&mut rho);
        let mult = self.fine.dipolar_multiplier();
        let (mut local, mut dipolar) = (0.0, 0.0);
        for (r, m) in rho.iter().zip(mult.iter()) {
            let e = r.norm_sqr();
            local += e;
            dipolar += m * e;
        }
        let w = self.fine.cell_volume() / self.fine.len() as f64 * beta.powi(3);
        Ok(QuarticEval {
            terms: QuarticTerms {
                local: local * w,
                dipolar: dipolar * w,
            },
            fine_values: buf,
            fine_density_hat: rho,
        })
    }

    /// Band-limited `V v` with `V = lambda1 |v|^2 + lambda2 K * |v|^2`, on the
    /// grid of `like`.
    pub fn mean_field_product(&self, eval: &QuarticEval, p: &PhysParams, like: &ComplexField) -> Result<ComplexField> {
        let mult = self.fine.dipolar_multiplier();
        let mut v: Vec<Complex64> = eval
            .fine_density_hat
            .iter()
            .zip(mult.iter())
            .map(|(r, m)| r * (p.lambda1 + p.lambda2 * m))
            .collect();
        self.fine.inverse_in_place(&mut v);
        for (a, b) in v.iter_mut().zip(&eval.fine_values) {
            *a = Complex64::new(a.re, 0.0) * b;
        }
        self.fine.forward_in_place(&mut v);
        let ratio = (self.fine.len() / self.coarse.len()) as f64;
        let mut out = SpectralField::zeros(like.grid());
        for (c, &j) in out.coeffs_mut().iter_mut().zip(&self.map) {
            *c = v[j] / ratio;
        }
        Ok(out.inverse())
    }
}
