//! Weinstein minimizer, the ground state `Q`, the threshold `gamma(c)`, and
//! the two equivalent forms of the sub-threshold condition.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::dealias::{Dealiased, QuarticEval};
use crate::functionals::{mean_field, quartic_terms, report, weinstein_from_parts, PhysParams};
use crate::scaling::dilate;
use crate::spectral::{ComplexField, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    /// Stop once the relative decrease of `J` over one step falls below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 5000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WeinsteinMinimum {
    /// Minimizer normalized to `|v| = |grad v| = 1`.
    pub v: ComplexField,
    pub m: f64,
    pub iterations: usize,
    /// `J` after every accepted step, starting with the normalized initial guess.
    pub trace: Vec<f64>,
}

/// Rescale `a v(b x)` so that mass and kinetic energy are both 1. `J` is
/// unchanged.
pub fn normalize_unit(v: &ComplexField) -> Result<ComplexField> {
    let m = v.mass();
    let t = v.kinetic();
    if !(m > 0.0 && t > 0.0) {
        return Err(Error::Domain("cannot normalize a constant or zero field".into()));
    }
    let b = (m / t).sqrt();
    let a = (b * b * b / m).sqrt();
    dilate(v, a, b)
}

/// `log J` with alias-free quartic terms, and its `L^2` gradient.
struct Objective<'a> {
    p: &'a PhysParams,
    quartic: Dealiased,
}

struct Point {
    log_j: f64,
    kinetic: f64,
    mass: f64,
    potential: f64,
    eval: QuarticEval,
}

impl Objective<'_> {
    fn point(&self, v: &ComplexField) -> Result<Option<Point>> {
        let s = v.transform();
        let eval = self.quartic.evaluate(&s)?;
        let potential = eval.terms.potential(self.p);
        let (kinetic, mass) = (s.kinetic(), s.norm_sqr());
        Ok(weinstein_from_parts(kinetic, mass, potential).ok().map(|j| Point {
            log_j: j.ln(),
            kinetic,
            mass,
            potential,
            eval,
        }))
    }

    fn gradient(&self, v: &ComplexField, at: &Point) -> Result<ComplexField> {
        let vv = self.quartic.mean_field_product(&at.eval, self.p, v)?;
        let mut g = v.laplacian().scaled(-3.0 / at.kinetic);
        g.axpy(Complex64::new(1.0 / at.mass, 0.0), v);
        g.axpy(Complex64::new(-4.0 / at.potential, 0.0), &vv);
        Ok(g)
    }
}

/// Minimize `J` by preconditioned nonlinear conjugate gradients with Armijo
/// backtracking at fixed `T/M`,
/// renormalizing after every step.
pub fn minimize_weinstein(p: &PhysParams, init: &ComplexField, opts: &MinimizeOptions) -> Result<WeinsteinMinimum> {
    if !p.admits_ground_state() {
        return Err(Error::Precondition(format!(
            "no ground state for lambda1 = {}, lambda2 = {} ({} regime)",
            p.lambda1, p.lambda2, p.regime
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let pot0 = quartic_terms(init).potential(p);
    if pot0 >= 0.0 {
        return Err(Error::Domain(format!("initial guess has P = {pot0:e} >= 0")));
    }
    let obj = Objective {
        p,
        quartic: Dealiased::new(init.grid())?,
    };
    let mut v = normalize_unit(init)?;
    let mut at = obj
        .point(&v)?
        .ok_or_else(|| Error::Domain("J undefined at the initial guess".into()))?;
    let mut trace = vec![at.log_j.exp()];
    let mut step = 1.0;
    let mut last_decrease = f64::INFINITY;
    let done = |v: ComplexField, at: &Point, it: usize, trace: Vec<f64>| WeinsteinMinimum {
        v,
        m: at.log_j.exp(),
        iterations: it,
        trace,
    };
    // previous (direction, preconditioned gradient, <g, Pg>) for conjugation
    let mut prev: Option<(ComplexField, ComplexField, f64)> = None;

    for it in 0..opts.max_iters {
        let g = obj.gradient(&v, &at)?;
        // J is dilation invariant and the box relabelling leaves the width
        // free, so every direction is taken at fixed T/M
        let c = width_gradient(&v);
        let pc = precondition(&c);
        let cpc = c.inner(&pc).re;
        let project = |f: &mut ComplexField| {
            let beta = c.inner(f).re / cpc;
            f.axpy(Complex64::new(-beta, 0.0), &pc);
        };
        let mut pg = precondition(&g);
        project(&mut pg);
        let gpg = g.inner(&pg).re;
        let mut d = pg.clone().scaled(-1.0);
        if let Some((d_old, pg_old, gpg_old)) = prev.take() {
            if it % 50 != 0 {
                let d_old = d_old.with_grid(v.grid())?;
                let pg_old = pg_old.with_grid(v.grid())?;
                let mut y = pg.clone();
                y.axpy(Complex64::new(-1.0, 0.0), &pg_old);
                let beta = (g.inner(&y).re / gpg_old).max(0.0);
                d.axpy(Complex64::new(beta, 0.0), &d_old);
                project(&mut d);
            }
        }
        let mut slope = g.inner(&d).re;
        if !(slope < 0.0) {
            d = pg.clone().scaled(-1.0);
            slope = -gpg;
            if !(slope < 0.0) {
                return Ok(done(v, &at, it, trace));
            }
        }

        let trial_at = |s: f64| -> Result<(ComplexField, Option<Point>)> {
            let mut trial = v.clone();
            trial.axpy(Complex64::new(s, 0.0), &d);
            let pt = obj.point(&trial)?;
            Ok((trial, pt))
        };
        let armijo = |s: f64, pt: &Option<Point>| pt.as_ref().is_some_and(|pt| pt.log_j <= at.log_j + 1e-4 * s * slope);
        let mut accepted: Option<(f64, ComplexField, Point)> = None;
        let (t0, p0) = trial_at(step)?;
        if let Some(pt0) = &p0 {
            let curv = pt0.log_j - at.log_j - slope * step;
            if curv > 0.0 {
                let s1 = (-slope * step * step / (2.0 * curv)).clamp(0.1 * step, 10.0 * step);
                let (t1, p1) = trial_at(s1)?;
                if armijo(s1, &p1) && p1.as_ref().unwrap().log_j < pt0.log_j {
                    accepted = Some((s1, t1, p1.unwrap()));
                }
            }
        }
        if accepted.is_none() && armijo(step, &p0) {
            accepted = Some((step, t0, p0.unwrap()));
        }
        if accepted.is_none() {
            let mut s = step;
            for _ in 0..40 {
                s *= 0.5;
                let (t, pt) = trial_at(s)?;
                if armijo(s, &pt) {
                    accepted = Some((s, t, pt.unwrap()));
                    break;
                }
            }
        }
        let Some((s, trial, _)) = accepted else {
            return Ok(done(v, &at, it, trace));
        };
        // the rescale keeps nodal values up to the amplitude factor, so the
        // old direction carries over on the new box
        let b = (trial.mass() / trial.kinetic()).sqrt();
        let amp = (b * b * b / trial.mass()).sqrt();
        let trial = normalize_unit(&trial)?;
        let next = match obj.point(&trial)? {
            Some(pt) if pt.log_j < at.log_j => pt,
            _ => return Ok(done(v, &at, it, trace)),
        };
        last_decrease = 1.0 - (next.log_j - at.log_j).exp();
        prev = Some((d.scaled(amp), pg, gpg));
        v = trial;
        at = next;
        trace.push(at.log_j.exp());
        step = s;
        if last_decrease < opts.tol {
            return Ok(done(v, &at, it + 1, trace));
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iters,
        last_decrease,
    })
}

/// Inverse of `3 |xi|^2 + 1`, the Hessian scale of `log J` at `T = M = 1`.
fn precondition(f: &ComplexField) -> ComplexField {
    let mut s = f.transform();
    let grid = Arc::clone(f.grid());
    let coeffs = s.coeffs_mut();
    grid.for_each_mode(|i, k| {
        coeffs[i] /= 3.0 * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) + 1.0;
    });
    s.inverse()
}

/// `L^2` gradient of `log(T/M) / 2` at `T = M = 1`: `-Lap v - v`.
fn width_gradient(v: &ComplexField) -> ComplexField {
    let mut out = v.laplacian().scaled(-1.0);
    out.axpy(Complex64::new(-1.0, 0.0), v);
    out
}

/// Gaussian starting point on the `v` frame whose box is `q_spec` stretched
/// by `sqrt(6)`, elongated along the dipole axis when `lambda2 > 0` and
/// flattened when `lambda2 < 0`. Tries increasing anisotropy until `P < 0`.
pub fn initial_guess(p: &PhysParams, q_spec: &GridSpec) -> Result<ComplexField> {
    let spec = q_spec.stretched([6f64.sqrt(); 3])?;
    let grid = crate::spectral::Grid::new(spec);
    for ratio in [1.5, 3.0, 6.0] {
        let (mut sp, mut sz): (f64, f64) = if p.lambda2 > 0.0 {
            (1.0, ratio)
        } else if p.lambda2 < 0.0 {
            (ratio, 1.0)
        } else {
            (1.0, 1.0)
        };
        // T/M = 1/sp^2 + 1/(2 sz^2); make it 1 so the box stays put
        let s = (1.0 / (sp * sp) + 0.5 / (sz * sz)).sqrt();
        sp *= s;
        sz *= s;
        let u = ComplexField::from_real_fn(&grid, |x| {
            (-0.5 * ((x[0] * x[0] + x[1] * x[1]) / (sp * sp) + x[2] * x[2] / (sz * sz))).exp()
        });
        if quartic_terms(&u).potential(p) < 0.0 {
            return normalize_unit(&u);
        }
    }
    Err(Error::Domain(format!(
        "no Gaussian starting point with P < 0 for lambda = ({}, {})",
        p.lambda1, p.lambda2
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub pde_residual: f64,
    pub pohozaev_residual: f64,
}

#[derive(Debug, Clone)]
pub struct GroundStateRecord {
    pub v_m: ComplexField,
    pub m: f64,
    pub q: ComplexField,
    pub q_mass: f64,
    pub q_kinetic: f64,
    pub gamma_of_unit_mass: f64,
    pub params: PhysParams,
    pub residuals: Residuals,
}

/// Relative residual of `-Lap Q / 2 + V(Q) Q + Q = 0`, nonlinearity taken
/// pointwise on the grid.
pub fn stationary_residual(q: &ComplexField, p: &PhysParams) -> f64 {
    let lap = q.laplacian();
    let v = mean_field(q, p);
    let mut acc = 0.0;
    for (i, z) in q.values().iter().enumerate() {
        let r = lap.values()[i] * -0.5 + z * v[i] + z;
        acc += r.norm_sqr();
    }
    (acc * q.grid().cell_volume()).sqrt() / q.mass().sqrt()
}

/// Same residual with `V(Q) Q` evaluated exactly for the band-limited
/// interpolant and projected back onto the grid band. Also returns the
/// alias-free `P(Q)`.
pub fn galerkin_residual(q: &ComplexField, p: &PhysParams) -> Result<(f64, f64)> {
    let quartic = Dealiased::new(q.grid())?;
    let eval = quartic.evaluate(&q.transform())?;
    let vq = quartic.mean_field_product(&eval, p, q)?;
    let mut r = q.laplacian().scaled(-0.5);
    r.axpy(Complex64::new(1.0, 0.0), &vq);
    r.axpy(Complex64::new(1.0, 0.0), q);
    Ok((r.mass().sqrt() / q.mass().sqrt(), eval.terms.potential(p)))
}

/// `Q(x) = 2 sqrt(m) v_m(sqrt(6) x)` with its residual report.
pub fn build_q(v_m: &ComplexField, m: f64, p: &PhysParams) -> Result<GroundStateRecord> {
    if !(m > 0.0) {
        return Err(Error::Domain(format!("Weinstein minimum must be positive, got {m}")));
    }
    let q = dilate(v_m, 2.0 * m.sqrt(), 6f64.sqrt())?;
    let s = q.transform();
    let tail = s.tail_fraction();
    if tail > 1e-8 {
        return Err(Error::Resample { tail });
    }
    let (q_mass, q_kinetic) = (s.norm_sqr(), s.kinetic());
    let (pde_residual, potential) = galerkin_residual(&q, p)?;
    let residuals = Residuals {
        pde_residual,
        pohozaev_residual: (q_kinetic + 1.5 * potential).abs() / q_kinetic,
    };
    Ok(GroundStateRecord {
        v_m: v_m.clone(),
        m,
        q,
        q_mass,
        q_kinetic,
        gamma_of_unit_mass: q_mass * q_kinetic / 6.0,
        params: *p,
        residuals,
    })
}

pub fn compute_ground_state(p: &PhysParams, q_spec: &GridSpec, opts: &MinimizeOptions) -> Result<(GroundStateRecord, WeinsteinMinimum)> {
    let init = initial_guess(p, q_spec)?;
    let min = minimize_weinstein(p, &init, opts)?;
    let rec = build_q(&min.v, min.m, p)?;
    Ok((rec, min))
}

/// `gamma(c) = (mu / 6) T(Q)` with `mu = M(Q) / c`.
pub fn gamma_from_norms(q_mass: f64, q_kinetic: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("mass must be positive, got {c}")));
    }
    Ok(q_mass / c * q_kinetic / 6.0)
}

pub fn gamma_of_c(record: &GroundStateRecord, c: f64) -> Result<f64> {
    gamma_from_norms(record.q_mass, record.q_kinetic, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub mass: f64,
    pub energy: f64,
    pub g: f64,
    pub gamma: f64,
    /// `E < gamma(c)` and `G > 0`.
    pub threshold_form: bool,
    /// `M E < M(Q) E(Q)` and `|u| |grad u| < |Q| |grad Q|`.
    pub hr_form: bool,
    pub agree: bool,
}

/// Relative margin for the strict inequalities, so that fields equal to the
/// ground state up to round-off land on the boundary.
pub const STRICT_MARGIN: f64 = 1e-10;

fn lt(a: f64, b: f64) -> bool {
    a < b - STRICT_MARGIN * b.abs().max(a.abs())
}

/// Both criteria from the scalar data of `u0` and of `Q`.
pub fn equivalence_from_parts(mass: f64, kinetic: f64, potential: f64, q_mass: f64, q_kinetic: f64) -> Result<EquivalenceReport> {
    let energy = 0.5 * (kinetic + potential);
    let g = kinetic + 1.5 * potential;
    let gamma = gamma_from_norms(q_mass, q_kinetic, mass)?;
    // E(Q) = T(Q)/6 on the Pohozaev set
    let q_energy = q_kinetic / 6.0;
    let threshold_form = lt(energy, gamma) && lt(0.0, g);
    let hr_form = lt(mass * energy, q_mass * q_energy) && lt(mass * kinetic, q_mass * q_kinetic);
    Ok(EquivalenceReport {
        mass,
        energy,
        g,
        gamma,
        threshold_form,
        hr_form,
        agree: threshold_form == hr_form,
    })
}

pub fn check_equivalence_hr(u0: &ComplexField, record: &GroundStateRecord) -> Result<EquivalenceReport> {
    let r = report(u0, &record.params);
    equivalence_from_parts(r.mass, r.kinetic, r.potential, record.q_mass, record.q_kinetic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::weinstein_j;
    use crate::spectral::Grid;

    #[test]
    fn normalization_is_exact_and_keeps_j() {
        let g = Grid::new(GridSpec::cubic(32, 20.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| 3.0 * (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2]) / 3.0).exp());
        let p = PhysParams::new(-1.0, 0.3).unwrap();
        let v = normalize_unit(&u).unwrap();
        assert!((v.mass() - 1.0).abs() < 1e-13);
        assert!((v.kinetic() - 1.0).abs() < 1e-13);
        let (j0, j1) = (weinstein_j(&u, &p).unwrap(), weinstein_j(&v, &p).unwrap());
        assert!((j0 - j1).abs() < 1e-13 * j0);
    }

    #[test]
    fn rejects_stable_regime() {
        let g = Grid::new(GridSpec::cubic(16, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let p = PhysParams::new(10.0, 1.0).unwrap();
        assert!(matches!(
            minimize_weinstein(&p, &u, &MinimizeOptions::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn gamma_scaling_law() {
        let g1 = gamma_from_norms(3.0, 5.0, 1.0).unwrap();
        assert_eq!(gamma_from_norms(3.0, 5.0, 3.0).unwrap(), 5.0 / 6.0);
        assert!((gamma_from_norms(3.0, 5.0, 2.0).unwrap() - g1 / 2.0).abs() < 1e-15);
        assert!(gamma_from_norms(3.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn boundary_point_fails_both_forms() {
        // T = 6, P = -4 gives G = 0
        let r = equivalence_from_parts(2.0, 6.0, -4.0, 2.0, 6.0).unwrap();
        assert!(!r.threshold_form && !r.hr_form && r.agree);
        let r = equivalence_from_parts(2.0 * 0.01, 6.0 * 0.01, -4.0 * 1e-4, 2.0, 6.0).unwrap();
        assert!(r.threshold_form && r.hr_form);
    }

    #[test]
    fn cubic_minimizer_on_small_grid() {
        let p = PhysParams::new(-1.0, 0.0).unwrap();
        let spec = GridSpec::cubic(32, 8.0).unwrap();
        let init = initial_guess(&p, &spec).unwrap();
        let min = minimize_weinstein(&p, &init, &MinimizeOptions::default()).unwrap();
        assert!(min.trace.windows(2).all(|w| w[1] < w[0]));
        assert!((min.v.mass() - 1.0).abs() < 1e-10 && (min.v.kinetic() - 1.0).abs() < 1e-10);
        // continuum value 3 sqrt(3) |R|^2 / 4 for -Lap R + R = R^3
        assert!((min.m - 24.5482).abs() < 0.1, "m = {}", min.m);
        let w = dilate(&min.v, 1.7, 0.6).unwrap();
        assert!((weinstein_j(&w, &p).unwrap() - weinstein_j(&min.v, &p).unwrap()).abs() < 1e-8 * min.m);
        assert!(matches!(build_q(&min.v, min.m, &p), Err(Error::Resample { .. })));
    }

    #[test]
    fn q_norms_follow_rescale() {
        let g = Grid::new(GridSpec::cubic(32, 40.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 8.0).exp());
        let v = normalize_unit(&u).unwrap();
        let m: f64 = 20.0;
        let q = dilate(&v, 2.0 * m.sqrt(), 6f64.sqrt()).unwrap();
        assert!((q.mass() - 4.0 * m * 6f64.powf(-1.5)).abs() < 1e-10 * q.mass());
        assert!((q.kinetic() - 4.0 * m / 6f64.sqrt()).abs() < 1e-10 * q.kinetic());
    }
}
