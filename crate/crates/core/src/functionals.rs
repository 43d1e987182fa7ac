//! Mass, kinetic and potential energy, the Pohozaev functional `G`, momentum,
//! the Weinstein quotient, and the classification of `(lambda1, lambda2)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{dipolar_convolve_unchecked, ComplexField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Focusing regime where standing waves exist.
    Unstable,
    Stable,
    /// `lambda2 = 0` or one of the defining inequalities holds with equality.
    Boundary,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::Unstable => "unstable",
            Regime::Stable => "stable",
            Regime::Boundary => "boundary",
        };
        f.write_str(s)
    }
}

pub fn classify_regime(lambda1: f64, lambda2: f64) -> Regime {
    if lambda2 > 0.0 {
        let d = lambda1 - 4.0 * PI / 3.0 * lambda2;
        if d < 0.0 {
            Regime::Unstable
        } else if d > 0.0 {
            Regime::Stable
        } else {
            Regime::Boundary
        }
    } else if lambda2 < 0.0 {
        let d = lambda1 + 8.0 * PI / 3.0 * lambda2;
        if d < 0.0 {
            Regime::Unstable
        } else if d > 0.0 {
            Regime::Stable
        } else {
            Regime::Boundary
        }
    } else {
        Regime::Boundary
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub lambda1: f64,
    pub lambda2: f64,
    pub regime: Regime,
}

impl PhysParams {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self> {
        if !(lambda1.is_finite() && lambda2.is_finite()) {
            return Err(Error::Domain("interaction strengths must be finite".into()));
        }
        Ok(Self {
            lambda1,
            lambda2,
            regime: classify_regime(lambda1, lambda2),
        })
    }

    /// Whether the Weinstein minimization is well posed: the unstable regime,
    /// or the pure focusing cubic limit `lambda2 = 0, lambda1 < 0`.
    pub fn admits_ground_state(&self) -> bool {
        self.regime == Regime::Unstable || (self.lambda2 == 0.0 && self.lambda1 < 0.0)
    }
}

/// `int |u|^4` and `int (K * |u|^2)|u|^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticTerms {
    pub local: f64,
    pub dipolar: f64,
}

impl QuarticTerms {
    pub fn potential(&self, p: &PhysParams) -> f64 {
        p.lambda1 * self.local + p.lambda2 * self.dipolar
    }
}

/// Physical-space quartic terms.
pub fn quartic_terms(u: &ComplexField) -> QuarticTerms {
    let rho = u.density();
    let conv = dipolar_convolve_unchecked(&rho);
    let h3 = u.grid().cell_volume();
    let mut local = 0.0;
    let mut dipolar = 0.0;
    for (r, c) in rho.values().iter().zip(conv.values()) {
        local += r.re * r.re;
        dipolar += c.re * r.re;
    }
    QuarticTerms {
        local: local * h3,
        dipolar: dipolar * h3,
    }
}

/// Fourier-space quartic terms: `(2 pi)^{-3} int (1, K^) |rho^|^2`.
pub fn quartic_terms_fourier(u: &ComplexField) -> QuarticTerms {
    let s = u.density().transform();
    let mult = u.grid().dipolar_multiplier();
    let mut local = 0.0;
    let mut dipolar = 0.0;
    for (c, m) in s.coeffs().iter().zip(mult.iter()) {
        let e = c.norm_sqr();
        local += e;
        dipolar += m * e;
    }
    let w = u.grid().cell_volume() / s.coeffs().len() as f64;
    QuarticTerms {
        local: local * w,
        dipolar: dipolar * w,
    }
}

/// `P(u)` evaluated in physical and in Fourier space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialEnergy {
    pub physical: f64,
    pub fourier: f64,
}

impl PotentialEnergy {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.physical.abs().max(self.fourier.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.physical - self.fourier).abs() / scale
        }
    }
}

pub fn potential_energy(u: &ComplexField, p: &PhysParams) -> PotentialEnergy {
    PotentialEnergy {
        physical: quartic_terms(u).potential(p),
        fourier: quartic_terms_fourier(u).potential(p),
    }
}

/// The mean-field potential `V = lambda1 |u|^2 + lambda2 K * |u|^2` (real).
pub fn mean_field(u: &ComplexField, p: &PhysParams) -> Vec<f64> {
    let rho = u.density();
    let mut v: Vec<f64> = rho.values().iter().map(|r| p.lambda1 * r.re).collect();
    if p.lambda2 != 0.0 {
        let conv = dipolar_convolve_unchecked(&rho);
        for (vi, c) in v.iter_mut().zip(conv.values()) {
            *vi += p.lambda2 * c.re;
        }
    }
    v
}

/// One evaluation of every scalar functional on a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub mass: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub energy: f64,
    pub g: f64,
    pub momentum: [f64; 3],
    #[serde(flatten)]
    pub grid: GridSpec,
}

impl FunctionalReport {
    pub fn from_parts(mass: f64, kinetic: f64, potential: f64, momentum: [f64; 3], grid: GridSpec) -> Self {
        Self {
            mass,
            kinetic,
            potential,
            energy: 0.5 * kinetic + 0.5 * potential,
            g: kinetic + 1.5 * potential,
            momentum,
            grid,
        }
    }
}

pub fn report(u: &ComplexField, p: &PhysParams) -> FunctionalReport {
    let s = u.transform();
    let n = s.coeffs().len() as f64;
    let w = u.grid().cell_volume() / n;
    let mut kin = 0.0;
    u.grid()
        .for_each_mode(|i, k| kin += (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) * s.coeffs()[i].norm_sqr());
    let mut mom = [0.0; 3];
    u.grid().for_each_mode_deriv(|i, k| {
        let e = s.coeffs()[i].norm_sqr();
        for a in 0..3 {
            mom[a] += k[a] * e;
        }
    });
    FunctionalReport::from_parts(
        u.mass(),
        kin * w,
        quartic_terms(u).potential(p),
        mom.map(|m| m * w),
        *u.grid().spec(),
    )
}

/// `Im int conj(u) grad u`.
pub fn momentum(u: &ComplexField) -> [f64; 3] {
    let s = u.transform();
    let w = u.grid().cell_volume() / s.coeffs().len() as f64;
    let mut mom = [0.0; 3];
    u.grid().for_each_mode_deriv(|i, k| {
        let e = s.coeffs()[i].norm_sqr();
        for a in 0..3 {
            mom[a] += k[a] * e;
        }
    });
    mom.map(|m| m * w)
}

/// The scale-invariant Weinstein quotient
/// `J(v) = |grad v|^3 |v| / (-lambda1 |v|_4^4 - lambda2 int (K*|v|^2)|v|^2)`.
pub fn weinstein_j(v: &ComplexField, p: &PhysParams) -> Result<f64> {
    let t = v.kinetic();
    let m = v.mass();
    let pot = quartic_terms(v).potential(p);
    weinstein_from_parts(t, m, pot)
}

pub(crate) fn weinstein_from_parts(kinetic: f64, mass: f64, potential: f64) -> Result<f64> {
    if mass == 0.0 {
        return Err(Error::Domain("J is undefined at v = 0".into()));
    }
    if potential >= 0.0 {
        return Err(Error::Domain(format!(
            "J needs P(v) < 0, got P(v) = {potential:e}"
        )));
    }
    Ok(kinetic.powf(1.5) * mass.sqrt() / (-potential))
}

/// `L^2` gradient of `log J`: `3(-Lap v)/T + v/M - 4 V v / P`, so that
/// `d log J [w] = Re <g, w>`.
pub fn log_weinstein_gradient(v: &ComplexField, p: &PhysParams) -> Result<ComplexField> {
    let t = v.kinetic();
    let m = v.mass();
    let pot = quartic_terms(v).potential(p);
    if pot >= 0.0 {
        return Err(Error::Domain("J needs P(v) < 0".into()));
    }
    let lap = v.laplacian();
    let vf = mean_field(v, p);
    let mut g = ComplexField::zeros(v.grid());
    for (i, gi) in g.values_mut().iter_mut().enumerate() {
        let vi = v.values()[i];
        *gi = lap.values()[i] * (-3.0 / t) + vi / m - vi * (4.0 * vf[i] / pot);
    }
    Ok(g)
}

pub(crate) fn boost_phase(v: [f64; 3], x: [f64; 3]) -> Complex64 {
    Complex64::from_polar(1.0, v[0] * x[0] + v[1] * x[1] + v[2] * x[2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid;
    use std::sync::Arc;

    fn gaussian(g: &Arc<Grid>) -> ComplexField {
        ComplexField::from_real_fn(g, |x| {
            PI.powf(-0.75) * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp()
        })
    }

    #[test]
    fn regime_examples() {
        assert_eq!(classify_regime(1.0, 1.0), Regime::Unstable);
        assert_eq!(classify_regime(10.0, 1.0), Regime::Stable);
        assert_eq!(classify_regime(-1.0, 0.0), Regime::Boundary);
        assert_eq!(classify_regime(4.0 * PI / 3.0, 1.0), Regime::Boundary);
        assert_eq!(classify_regime(-5.0, -1.0), Regime::Unstable);
        assert_eq!(classify_regime(9.0, -1.0), Regime::Stable);
        assert_eq!(classify_regime(8.0 * PI / 3.0, -1.0), Regime::Boundary);
    }

    #[test]
    fn gaussian_functionals() {
        let g = Grid::new(GridSpec::cubic(64, 16.0).unwrap());
        let u = gaussian(&g);
        let p = PhysParams::new(1.0, 0.0).unwrap();
        let r = report(&u, &p);
        assert!((r.mass - 1.0).abs() < 1e-8);
        assert!((r.kinetic - 1.5).abs() < 1e-8);
        // int |u|^4 = pi^{-3} (pi/2)^{3/2}
        let expected = (2.0 * PI).powf(-1.5);
        assert!((r.potential - expected).abs() < 1e-10, "{}", r.potential);
        assert!((expected - 0.063494).abs() < 1e-6);
        assert!(r.momentum.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn zero_field() {
        let g = Grid::new(GridSpec::cubic(8, 4.0).unwrap());
        let z = ComplexField::zeros(&g);
        let p = PhysParams::new(1.0, 2.0).unwrap();
        let pe = potential_energy(&z, &p);
        assert_eq!(pe.physical, 0.0);
        assert_eq!(pe.fourier, 0.0);
        assert!(weinstein_j(&z, &p).is_err());
    }

    #[test]
    fn boost_shifts_kinetic() {
        let g = Grid::new(GridSpec::cubic(64, 16.0).unwrap());
        let u = gaussian(&g);
        // integer multiples of 2 pi / L keep the phase periodic
        let v = [2.0 * PI / 16.0 * 3.0, -2.0 * PI / 16.0, 0.0];
        let w = ComplexField::from_fn(&g, |x| boost_phase(v, x))
            .mul(&u);
        let p = PhysParams::new(0.0, 0.0).unwrap();
        let (r0, r1) = (report(&u, &p), report(&w, &p));
        let v2 = v.iter().map(|c| c * c).sum::<f64>();
        assert!((r1.kinetic - r0.kinetic - v2 * r0.mass).abs() < 1e-10);
        assert!((r1.mass - r0.mass).abs() < 1e-13);
        for a in 0..3 {
            assert!((r1.momentum[a] - v[a] * r0.mass).abs() < 1e-10);
        }
    }

    #[test]
    fn weinstein_rejects_nonnegative_potential() {
        let g = Grid::new(GridSpec::cubic(32, 16.0).unwrap());
        let u = gaussian(&g);
        let p = PhysParams::new(1.0, 0.0).unwrap();
        assert!(matches!(weinstein_j(&u, &p), Err(Error::Domain(_))));
    }
}
