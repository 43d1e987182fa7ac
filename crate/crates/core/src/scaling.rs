//! Scaling families: the mass-preserving fiber `u^mu = mu^{3/2} u(mu x)`,
//! the anisotropic family `mu u(mu^{1/2} x1, mu^{1/2} x2, mu x3)`, Galilean
//! boosts, and the scattering hypotheses `E < gamma(c)`, `G > 0`.
//!
//! Dilations are exact on the grid: `u(b x)` sampled on a box of edge `L / b`
//! has the same nodal values as `u` on the original box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{boost_phase, quartic_terms, report, PhysParams};
use crate::spectral::{dipolar_symbol, ComplexField};

/// `a u(b x)`, represented on the box shrunk by `b`.
pub fn dilate(u: &ComplexField, a: f64, b: f64) -> Result<ComplexField> {
    dilate_axes(u, a, [b; 3])
}

/// `a u(b1 x1, b2 x2, b3 x3)`.
pub fn dilate_axes(u: &ComplexField, a: f64, b: [f64; 3]) -> Result<ComplexField> {
    if !(a.is_finite() && b.iter().all(|x| x.is_finite() && *x > 0.0)) {
        return Err(Error::Domain(format!("invalid dilation a = {a}, b = {b:?}")));
    }
    let grid = u.grid().stretched(b.map(|x| 1.0 / x))?;
    ComplexField::from_values(&grid, u.values().iter().map(|z| z * a).collect())
}

/// The L^2-critical fiber element `u^mu(x) = mu^{3/2} u(mu x)`.
pub fn fiber_element(u: &ComplexField, mu: f64) -> Result<ComplexField> {
    dilate(u, mu.powf(1.5), mu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberProfile {
    pub kinetic: f64,
    pub potential: f64,
    pub mu_grid: Vec<f64>,
    pub e_values: Vec<f64>,
    pub g_values: Vec<f64>,
    pub mu_star: Option<f64>,
}

impl FiberProfile {
    /// Fiber values from `T(u)` and `P(u)` alone.
    pub fn from_parts(kinetic: f64, potential: f64, mu_grid: &[f64]) -> Self {
        let e_values = mu_grid.iter().map(|&m| fiber_energy(kinetic, potential, m)).collect();
        let g_values = mu_grid.iter().map(|&m| fiber_g(kinetic, potential, m)).collect();
        Self {
            kinetic,
            potential,
            mu_grid: mu_grid.to_vec(),
            e_values,
            g_values,
            mu_star: (potential < 0.0).then(|| -2.0 * kinetic / (3.0 * potential)),
        }
    }
}

pub fn fiber_energy(kinetic: f64, potential: f64, mu: f64) -> f64 {
    0.5 * mu * mu * kinetic + 0.5 * mu * mu * mu * potential
}

pub fn fiber_g(kinetic: f64, potential: f64, mu: f64) -> f64 {
    mu * mu * kinetic + 1.5 * mu * mu * mu * potential
}

/// Geometric grid of `points` values over `[lo, hi]`.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && points >= 2) {
        return Err(Error::Domain(format!(
            "geometric grid needs 0 < lo < hi and >= 2 points, got [{lo}, {hi}] x {points}"
        )));
    }
    let r = (hi / lo).ln() / (points - 1) as f64;
    Ok((0..points).map(|i| lo * (r * i as f64).exp()).collect())
}

/// Default fiber grid: 129 geometric points on `[mu*/8, 8 mu*]`.
pub fn default_mu_grid(mu_star: f64) -> Vec<f64> {
    geometric_grid(mu_star / 8.0, mu_star * 8.0, 129).expect("mu_star > 0")
}

pub fn fiber_profile(u: &ComplexField, p: &PhysParams, mu_grid: &[f64]) -> Result<FiberProfile> {
    if mu_grid.iter().any(|m| !(*m > 0.0)) || mu_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("mu grid must be positive and strictly increasing".into()));
    }
    let kinetic = u.kinetic();
    let potential = quartic_terms(u).potential(p);
    if potential >= 0.0 {
        return Err(Error::NoRoot { potential });
    }
    Ok(FiberProfile::from_parts(kinetic, potential, mu_grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaItem {
    pub item: u8,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub mu_star: f64,
    /// Root of `G(u^mu)` located by bisection inside the grid bracket.
    pub mu_star_bracketed: f64,
    pub items: Vec<LemmaItem>,
}

impl GrowthReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// Tolerance on `|G(u)| / T(u)` for treating `u` as lying on the Pohozaev set.
const ON_MANIFOLD: f64 = 1e-10;

pub fn verify_growth_lemma(u: &ComplexField, p: &PhysParams) -> Result<GrowthReport> {
    let t = u.kinetic();
    let pot = quartic_terms(u).potential(p);
    verify_growth_from_parts(t, pot)
}

pub fn verify_growth_from_parts(t: f64, pot: f64) -> Result<GrowthReport> {
    if pot >= 0.0 {
        return Err(Error::NoRoot { potential: pot });
    }
    let mu_star = -2.0 * t / (3.0 * pot);
    let grid = default_mu_grid(mu_star);
    let fib = FiberProfile::from_parts(t, pot, &grid);
    let mut items = Vec::with_capacity(7);

    // (1) exactly one sign change of G on the grid, bracketing the root
    let g = &fib.g_values;
    let changes: Vec<usize> = (0..g.len() - 1)
        .filter(|&i| (g[i] > 0.0) != (g[i + 1] > 0.0))
        .collect();
    let mut bracketed = f64::NAN;
    if let [i] = changes[..] {
        let (mut lo, mut hi) = (grid[i], grid[i + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if fiber_g(t, pot, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        bracketed = 0.5 * (lo + hi);
    }
    let root_err = ((bracketed - mu_star) / mu_star).abs();
    items.push(LemmaItem {
        item: 1,
        passed: changes.len() == 1 && root_err < 1e-10,
        detail: format!("{} sign change(s); bisected root differs by {root_err:.2e}", changes.len()),
    });

    // (2) concavity of E on [mu*, inf) by divided second differences
    let e = &fib.e_values;
    let scale = e.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut worst = f64::NEG_INFINITY;
    for i in 1..grid.len() - 1 {
        if grid[i - 1] < mu_star {
            continue;
        }
        let (h0, h1) = (grid[i] - grid[i - 1], grid[i + 1] - grid[i]);
        let d2 = 2.0 * ((e[i + 1] - e[i]) / h1 - (e[i] - e[i - 1]) / h0) / (h0 + h1);
        worst = worst.max(d2 * h0 * h1);
    }
    items.push(LemmaItem {
        item: 2,
        passed: worst <= 1e-9 * scale,
        detail: format!("max scaled second difference {worst:.3e}"),
    });

    // (3) and (4) at mu = 1
    let g1 = fiber_g(t, pot, 1.0) / t;
    let on = g1.abs() < ON_MANIFOLD;
    items.push(LemmaItem {
        item: 3,
        passed: on || ((mu_star < 1.0) == (g1 < 0.0)),
        detail: format!("mu* = {mu_star:.12}, G(u)/T(u) = {g1:.3e}"),
    });
    items.push(LemmaItem {
        item: 4,
        passed: on == ((mu_star - 1.0).abs() < 1e-10),
        detail: format!("|mu* - 1| = {:.3e}", (mu_star - 1.0).abs()),
    });

    // (5) sign table of G(u^mu)
    let mut bad = 0;
    for (&m, &gv) in grid.iter().zip(g) {
        if ((m - mu_star) / mu_star).abs() < 1e-12 {
            continue;
        }
        if (m < mu_star) != (gv > 0.0) {
            bad += 1;
        }
    }
    items.push(LemmaItem {
        item: 5,
        passed: bad == 0,
        detail: format!("{bad} grid points violate the sign table"),
    });

    // (6) strict maximum at mu*
    let e_star = fiber_energy(t, pot, mu_star);
    let bad = grid
        .iter()
        .zip(e)
        .filter(|(m, ev)| ((*m - mu_star) / mu_star).abs() >= 1e-12 && **ev >= e_star)
        .count();
    items.push(LemmaItem {
        item: 6,
        passed: bad == 0,
        detail: format!("E(u^mu*) = {e_star:.12}; {bad} grid points reach it"),
    });

    // (7) dE/dmu = G(u^mu)/mu, centered differences
    let mut worst = 0.0f64;
    for &m in &grid {
        let h = 1e-4 * m;
        let fd = (fiber_energy(t, pot, m + h) - fiber_energy(t, pot, m - h)) / (2.0 * h);
        let exact = fiber_g(t, pot, m) / m;
        let scale = (m * t).max(exact.abs());
        worst = worst.max((fd - exact).abs() / scale);
    }
    items.push(LemmaItem {
        item: 7,
        passed: worst < 1e-7,
        detail: format!("max relative derivative mismatch {worst:.3e}"),
    });

    Ok(GrowthReport {
        mu_star,
        mu_star_bracketed: bracketed,
        items,
    })
}

/// `mu u(mu^{1/2} x1, mu^{1/2} x2, mu x3)`, which preserves mass.
pub fn aniso_element(u: &ComplexField, mu: f64) -> Result<ComplexField> {
    let s = mu.sqrt();
    dilate_axes(u, mu, [s, s, mu])
}

/// `P(u^mu)` for the anisotropic family, evaluated in Fourier space with the
/// rescaled multiplier against `|u|^2` of the unscaled field.
pub fn aniso_rescale_potential(u: &ComplexField, p: &PhysParams, mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    let s = mu.sqrt();
    let rho = u.density().transform();
    let mut acc = 0.0;
    u.grid().for_each_mode(|i, k| {
        let m = p.lambda1 + p.lambda2 * dipolar_symbol([s * k[0], s * k[1], mu * k[2]]);
        acc += m * rho.coeffs()[i].norm_sqr();
    });
    Ok(mu * mu * acc * u.grid().cell_volume() / rho.coeffs().len() as f64)
}

/// `lim P(u^mu) / mu^2`: the multiplier tends to `lambda1 + (8 pi/3) lambda2`
/// off the plane `xi3 = 0` and to `lambda1 - (4 pi/3) lambda2` on it.
pub fn aniso_limit(u: &ComplexField, p: &PhysParams) -> f64 {
    use std::f64::consts::PI;
    let rho = u.density().transform();
    let mut acc = 0.0;
    u.grid().for_each_mode(|i, k| {
        let m = if k[2] != 0.0 {
            p.lambda1 + 8.0 * PI / 3.0 * p.lambda2
        } else if k[0] != 0.0 || k[1] != 0.0 {
            p.lambda1 - 4.0 * PI / 3.0 * p.lambda2
        } else {
            p.lambda1
        };
        acc += m * rho.coeffs()[i].norm_sqr();
    });
    acc * u.grid().cell_volume() / rho.coeffs().len() as f64
}

/// `e^{i v.x} u`. Exactly periodic only when `v` lies on the dual lattice;
/// otherwise the field must be negligible at the box faces.
pub fn galilean_boost(u: &ComplexField, v: [f64; 3]) -> ComplexField {
    let mut out = u.clone();
    let vals = out.values_mut();
    u.grid().for_each_node(|i, x| vals[i] *= boost_phase(v, x));
    out
}

/// Boost that removes the momentum of `u`.
pub fn zero_momentum_boost(u: &ComplexField) -> Result<ComplexField> {
    let m = u.mass();
    if m == 0.0 {
        return Err(Error::Domain("zero field has no momentum frame".into()));
    }
    let q = crate::functionals::momentum(u);
    Ok(galilean_boost(u, q.map(|c| -c / m)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub mass: f64,
    pub energy: f64,
    pub g: f64,
    pub gamma: f64,
    pub energy_below_threshold: bool,
    pub g_positive: bool,
    /// `4 min{gamma - E, E}` when both hypotheses hold.
    pub alpha: Option<f64>,
}

impl ConditionReport {
    pub fn holds(&self) -> bool {
        self.energy_below_threshold && self.g_positive
    }
}

pub fn conditions_from_parts(mass: f64, energy: f64, g: f64, gamma: f64) -> Result<ConditionReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Precondition(format!("threshold must be positive, got {gamma}")));
    }
    let below = energy < gamma;
    let pos = g > 0.0;
    Ok(ConditionReport {
        mass,
        energy,
        g,
        gamma,
        energy_below_threshold: below,
        g_positive: pos,
        alpha: (below && pos).then(|| 4.0 * (gamma - energy).min(energy)),
    })
}

pub fn check_scattering_conditions(u0: &ComplexField, p: &PhysParams, gamma_c: f64) -> Result<ConditionReport> {
    let r = report(u0, p);
    conditions_from_parts(r.mass, r.energy, r.g, gamma_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Grid, GridSpec};
    use std::f64::consts::PI;

    fn blob(n: usize, l: f64) -> ComplexField {
        let g = Grid::new(GridSpec::cubic(n, l).unwrap());
        ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2]) / 2.0).exp())
    }

    #[test]
    fn closed_form_root() {
        let f = FiberProfile::from_parts(1.5, -1.0, &[0.5, 1.0, 2.0]);
        assert_eq!(f.mu_star, Some(1.0));
        assert_eq!(f.g_values[1], 0.0);
        assert!(FiberProfile::from_parts(1.5, 1.0, &[1.0]).mu_star.is_none());
    }

    #[test]
    fn fiber_requires_negative_potential() {
        let u = blob(16, 8.0);
        let p = PhysParams::new(1.0, 0.0).unwrap();
        assert!(matches!(fiber_profile(&u, &p, &[1.0]), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn fiber_matches_direct_evaluation() {
        let u = blob(32, 16.0);
        let p = PhysParams::new(-1.0, 0.5).unwrap();
        let grid = [0.3, 0.9, 1.7, 4.0];
        let f = fiber_profile(&u, &p, &grid).unwrap();
        for (i, &mu) in grid.iter().enumerate() {
            let r = report(&fiber_element(&u, mu).unwrap(), &p);
            assert!((r.energy - f.e_values[i]).abs() < 1e-11 * f.e_values[i].abs().max(1.0));
            assert!((r.g - f.g_values[i]).abs() < 1e-11 * f.g_values[i].abs().max(1.0));
            assert!((r.mass - u.mass()).abs() < 1e-12 * u.mass());
        }
    }

    #[test]
    fn growth_lemma_on_gaussian() {
        let u = blob(32, 16.0);
        let p = PhysParams::new(-1.0, 0.5).unwrap();
        let r = verify_growth_lemma(&u, &p).unwrap();
        assert!(r.all_passed(), "{r:?}");
    }

    #[test]
    fn projected_field_reports_unit_root() {
        let u = blob(32, 16.0);
        let p = PhysParams::new(-1.0, 0.5).unwrap();
        let ms = fiber_profile(&u, &p, &[1.0]).unwrap().mu_star.unwrap();
        let w = fiber_element(&u, ms).unwrap();
        let r = verify_growth_lemma(&w, &p).unwrap();
        assert!((r.mu_star - 1.0).abs() < 1e-10);
        assert!(r.all_passed());
    }

    #[test]
    fn aniso_identity_and_direct_route() {
        let u = blob(32, 16.0);
        let p = PhysParams::new(-1.0, 0.5).unwrap();
        let p0 = quartic_terms(&u).potential(&p);
        assert!((aniso_rescale_potential(&u, &p, 1.0).unwrap() - p0).abs() < 1e-12 * p0.abs());
        for mu in [0.5, 4.0] {
            let w = aniso_element(&u, mu).unwrap();
            let direct = quartic_terms(&w).potential(&p);
            let fourier = aniso_rescale_potential(&u, &p, mu).unwrap();
            assert!((direct - fourier).abs() < 1e-10 * direct.abs(), "{direct} {fourier}");
            assert!((w.mass() - u.mass()).abs() < 1e-12 * u.mass());
        }
    }

    #[test]
    fn boost_zeroes_momentum() {
        let u = blob(64, 16.0);
        let w = galilean_boost(&u, [0.3, -0.2, 0.7]);
        let z = zero_momentum_boost(&w).unwrap();
        let q = crate::functionals::momentum(&z);
        assert!(q.iter().all(|c| c.abs() < 1e-10), "{q:?}");
        assert_eq!(galilean_boost(&u, [0.0; 3]).values(), u.values());
    }

    #[test]
    fn alpha_arithmetic() {
        let r = conditions_from_parts(1.0, 0.5, 0.1, 2.0).unwrap();
        assert_eq!(r.alpha, Some(2.0));
        let r = conditions_from_parts(1.0, 2.5, 0.1, 2.0).unwrap();
        assert!(!r.holds());
        assert_eq!(r.alpha, None);
        assert!(conditions_from_parts(1.0, 0.5, 0.1, 0.0).is_err());
    }

    #[test]
    fn aniso_limit_bounds() {
        let u = blob(32, 16.0);
        let p = PhysParams::new(0.0, 1.0).unwrap();
        let lim = aniso_limit(&u, &p);
        let rho2 = u.density().mass();
        assert!(lim > 0.0 && lim < 8.0 * PI / 3.0 * rho2);
    }
}
