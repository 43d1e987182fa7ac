//! Localized variance `z_R = R^2 int chi(x/R) |u|^2`, its time derivatives,
//! the exterior error budgets, and the approach of `z_R''` to `4 G(u)`.
//!
//! `dz_dt` and the second-derivative decomposition use the classical
//! expressions `2 Im R int grad chi . grad u conj(u)` and
//! `A - 2 lambda2 R B`. Along the flow of `i u_t + Lap u / 2 = ...` these are
//! the first and second time derivatives of `2 z_R`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::strang_step;
use crate::functionals::{report, PhysParams};
use crate::spectral::{dipolar_convolve_unchecked, dipolar_via_riesz, ComplexField};

/// Transition polynomial on `1 <= rho <= 2` in `s = rho - 1`; the free
/// coefficient minimizes the largest `|chi''|` on the shell.
const SHELL: [f64; 6] = [1.0, 2.0, 1.0, -4.0, 2.5, -0.4];

/// Radial cutoff profile `chi(rho)` with its first three derivatives:
/// `rho^2` inside the unit ball, a quintic on the shell, constant past 2.
pub fn cutoff_profile(rho: f64) -> [f64; 4] {
    if rho <= 1.0 {
        return [rho * rho, 2.0 * rho, 2.0, 0.0];
    }
    let s = rho.min(2.0) - 1.0;
    let c = SHELL;
    let f = c[0] + s * (c[1] + s * (c[2] + s * (c[3] + s * (c[4] + s * c[5]))));
    if rho >= 2.0 {
        return [f, 0.0, 0.0, 0.0];
    }
    let d1 = c[1] + s * (2.0 * c[2] + s * (3.0 * c[3] + s * (4.0 * c[4] + s * 5.0 * c[5])));
    let d2 = 2.0 * c[2] + s * (6.0 * c[3] + s * (12.0 * c[4] + s * 20.0 * c[5]));
    let d3 = 6.0 * c[3] + s * (24.0 * c[4] + s * 60.0 * c[5]);
    [f, d1, d2, d3]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub r: f64,
}

/// Pointwise data of `chi` at `y = x / R`.
struct CutoffAt {
    value: f64,
    grad: [f64; 3],
    hess: [[f64; 3]; 3],
    lap: f64,
    grad_lap: [f64; 3],
}

impl CutoffSpec {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("cutoff scale must be positive, got {r}")));
        }
        Ok(Self { r })
    }

    fn at(&self, x: [f64; 3]) -> CutoffAt {
        let y = x.map(|c| c / self.r);
        let rho = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
        let [f, d1, d2, d3] = cutoff_profile(rho);
        if rho <= 1.0 {
            let mut hess = [[0.0; 3]; 3];
            for (i, row) in hess.iter_mut().enumerate() {
                row[i] = 2.0;
            }
            return CutoffAt {
                value: f,
                grad: y.map(|c| 2.0 * c),
                hess,
                lap: 6.0,
                grad_lap: [0.0; 3],
            };
        }
        let e = y.map(|c| c / rho);
        let mut hess = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                hess[i][j] = d2 * e[i] * e[j] + d1 / rho * (delta - e[i] * e[j]);
            }
        }
        CutoffAt {
            value: f,
            grad: e.map(|c| d1 * c),
            hess,
            lap: d2 + 2.0 * d1 / rho,
            grad_lap: e.map(|c| (d3 + 2.0 * d2 / rho - 2.0 * d1 / (rho * rho)) * c),
        }
    }
}

/// `(z_R, dz_dt)`.
pub fn z_and_derivative(u: &ComplexField, cut: &CutoffSpec) -> (f64, f64) {
    let grad = u.gradient();
    let vals = u.values();
    let r = cut.r;
    let (mut z, mut dz) = (0.0, 0.0);
    u.grid().for_each_node(|i, x| {
        let c = cut.at(x);
        z += c.value * vals[i].norm_sqr();
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..3 {
            s += c.grad[a] * grad[a].values()[i];
        }
        dz += (s * vals[i].conj()).im;
    });
    let h3 = u.grid().cell_volume();
    (r * r * z * h3, 2.0 * r * dz * h3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub a_term: f64,
    pub b_term: f64,
    /// `A - 2 lambda2 R B`.
    pub total: f64,
    pub four_g: f64,
}

fn b_integral(u: &ComplexField, conv: &ComplexField, cut: &CutoffSpec) -> f64 {
    let rho = u.density();
    let grad = conv.gradient();
    let mut b = 0.0;
    u.grid().for_each_node(|i, x| {
        let c = cut.at(x);
        let mut s = 0.0;
        for a in 0..3 {
            s += c.grad[a] * grad[a].values()[i].re;
        }
        b += s * rho.values()[i].re;
    });
    b * u.grid().cell_volume()
}

/// `B = int grad chi(x/R) . grad(K * |u|^2) |u|^2`.
pub fn b_term(u: &ComplexField, cut: &CutoffSpec) -> f64 {
    b_integral(u, &dipolar_convolve_unchecked(&u.density()), cut)
}

/// `B` with `K * |u|^2` assembled from squared Riesz transforms.
pub fn b_term_riesz(u: &ComplexField, cut: &CutoffSpec) -> f64 {
    b_integral(u, &dipolar_via_riesz(&u.density()), cut)
}

/// The bi-Laplacian term is taken in weak form,
/// `int (Lap^2 chi)(x/R) |u|^2 = -R int (grad Lap chi)(x/R) . grad |u|^2`,
/// since `chi` is only twice differentiable across the shell boundaries.
pub fn second_derivative_decomposition(u: &ComplexField, p: &PhysParams, cut: &CutoffSpec) -> Decomposition {
    let grad = u.gradient();
    let vals = u.values();
    let (mut hess_term, mut bilap, mut local) = (0.0, 0.0, 0.0);
    u.grid().for_each_node(|i, x| {
        let c = cut.at(x);
        let g = [0, 1, 2].map(|a| grad[a].values()[i]);
        for a in 0..3 {
            for b in 0..3 {
                hess_term += c.hess[a][b] * (g[b] * g[a].conj()).re;
            }
            bilap -= cut.r * c.grad_lap[a] * 2.0 * (vals[i].conj() * g[a]).re;
        }
        local += c.lap * vals[i].norm_sqr().powi(2);
    });
    let h3 = u.grid().cell_volume();
    let a_term = (2.0 * hess_term - 0.5 * bilap / (cut.r * cut.r) + p.lambda1 * local) * h3;
    let b = if p.lambda2 != 0.0 { b_term(u, cut) } else { 0.0 };
    let r = report(u, p);
    Decomposition {
        a_term,
        b_term: b,
        total: a_term - 2.0 * p.lambda2 * cut.r * b,
        four_g: 4.0 * r.g,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps1: f64,
    pub eps2: f64,
}

fn exterior(u: &ComplexField, grad: &[ComplexField; 3], radius: f64, r: f64) -> f64 {
    let vals = u.values();
    let mut acc = 0.0;
    u.grid().for_each_node(|i, x| {
        if x[0] * x[0] + x[1] * x[1] + x[2] * x[2] >= radius * radius {
            let g: f64 = grad.iter().map(|c| c.values()[i].norm_sqr()).sum();
            let m = vals[i].norm_sqr();
            acc += g + m / (r * r) + m * m;
        }
    });
    acc * u.grid().cell_volume()
}

/// Exterior norms with unit constants; `eps2` uses the inner radius `R / 10`.
pub fn error_budget(u: &ComplexField, cut: &CutoffSpec) -> ErrorBudget {
    let grad = u.gradient();
    ErrorBudget {
        eps1: exterior(u, &grad, cut.r, cut.r),
        eps2: exterior(u, &grad, cut.r / 10.0, cut.r),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub r: f64,
    pub total: f64,
    pub four_g: f64,
    pub gap: f64,
    pub eps1: f64,
    pub eps2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirialScan {
    pub rows: Vec<ScanRow>,
    pub gap_decreasing: bool,
    /// Largest `gap / (eps1 + eps2)` over the scan: the constant the budget
    /// needs to cover the gap.
    pub budget_constant: f64,
}

pub fn virial_convergence_scan(u: &ComplexField, p: &PhysParams, r_list: &[f64]) -> Result<VirialScan> {
    if r_list.is_empty() || r_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("cutoff radii must be increasing".into()));
    }
    let mut rows = Vec::with_capacity(r_list.len());
    for &r in r_list {
        let cut = CutoffSpec::new(r)?;
        let d = second_derivative_decomposition(u, p, &cut);
        let e = error_budget(u, &cut);
        rows.push(ScanRow {
            r,
            total: d.total,
            four_g: d.four_g,
            gap: (d.total - d.four_g).abs(),
            eps1: e.eps1,
            eps2: e.eps2,
        });
    }
    let gap_decreasing = rows.windows(2).all(|w| w[1].gap < w[0].gap);
    let budget_constant = rows
        .iter()
        .map(|r| {
            let b = r.eps1 + r.eps2;
            if b > 0.0 {
                r.gap / b
            } else if r.gap == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max);
    Ok(VirialScan {
        rows,
        gap_decreasing,
        budget_constant,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VirialTrace {
    pub r: f64,
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub dz_dt: Vec<f64>,
    /// Fourth-order centered differences of `dz_dt`; `None` at the two
    /// points on each end.
    pub d2z_dt2_fd: Vec<Option<f64>>,
    pub four_g: Vec<f64>,
    pub a_term: Vec<f64>,
    pub b_term: Vec<f64>,
    pub total: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}

impl VirialTrace {
    /// Largest `|fd - total| / |total|` over the interior points.
    pub fn max_fd_mismatch(&self) -> f64 {
        self.d2z_dt2_fd
            .iter()
            .zip(&self.total)
            .filter_map(|(fd, t)| fd.map(|f| (f - t).abs() / t.abs().max(f64::MIN_POSITIVE)))
            .fold(0.0, f64::max)
    }
}

/// Propagates `steps` Strang steps and records the virial quantities at every
/// step.
pub fn virial_trace(u0: &ComplexField, p: &PhysParams, cut: &CutoffSpec, dt: f64, steps: usize) -> Result<VirialTrace> {
    if steps < 4 {
        return Err(Error::InsufficientData("need at least 5 time levels for the stencil".into()));
    }
    let mut tr = VirialTrace {
        r: cut.r,
        times: Vec::with_capacity(steps + 1),
        z: Vec::new(),
        dz_dt: Vec::new(),
        d2z_dt2_fd: Vec::new(),
        four_g: Vec::new(),
        a_term: Vec::new(),
        b_term: Vec::new(),
        total: Vec::new(),
        eps1: Vec::new(),
        eps2: Vec::new(),
    };
    let mut u = u0.clone();
    for k in 0..=steps {
        if k > 0 {
            u = strang_step(&u, p, dt)?;
        }
        let (z, dz) = z_and_derivative(&u, cut);
        let d = second_derivative_decomposition(&u, p, cut);
        let e = error_budget(&u, cut);
        tr.times.push(k as f64 * dt);
        tr.z.push(z);
        tr.dz_dt.push(dz);
        tr.four_g.push(d.four_g);
        tr.a_term.push(d.a_term);
        tr.b_term.push(d.b_term);
        tr.total.push(d.total);
        tr.eps1.push(e.eps1);
        tr.eps2.push(e.eps2);
    }
    let f = &tr.dz_dt;
    tr.d2z_dt2_fd = (0..f.len())
        .map(|i| {
            (i >= 2 && i + 2 < f.len()).then(|| (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * dt))
        })
        .collect();
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::galilean_boost;
    use crate::spectral::{Grid, GridSpec};

    #[test]
    fn cutoff_is_c2() {
        let eps = 1e-9;
        for rho in [1.0, 2.0] {
            let (a, b) = (cutoff_profile(rho - eps), cutoff_profile(rho + eps));
            assert!(a[3].is_finite() && b[3].is_finite());
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-7, "rho {rho} order {k}: {a:?} vs {b:?}");
            }
        }
        assert_eq!(cutoff_profile(0.5), [0.25, 1.0, 2.0, 0.0]);
        assert_eq!(cutoff_profile(3.0)[1], 0.0);
        let worst = (0..=1000).map(|i| cutoff_profile(1.0 + i as f64 / 1000.0)[2].abs()).fold(0.0, f64::max);
        assert!((worst - 3.5).abs() < 1e-9);
    }

    #[test]
    fn real_field_has_zero_flux() {
        let g = Grid::new(GridSpec::cubic(32, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + 2.0 * x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let (_, dz) = z_and_derivative(&u, &CutoffSpec::new(3.0).unwrap());
        assert!(dz.abs() < 1e-12);
    }

    #[test]
    fn boosted_gaussian_flux() {
        let g = Grid::new(GridSpec::cubic(64, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-((x[0] - 0.5).powi(2) + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let v = [0.4, -0.3, 0.2];
        let w = galilean_boost(&u, v);
        let (z, dz) = z_and_derivative(&w, &CutoffSpec::new(20.0).unwrap());
        // int |x|^2 g^2 and int x g^2 for g^2 = exp(-|x - a|^2), a = (0.5, 0, 0)
        let mass = std::f64::consts::PI.powf(1.5);
        let var = mass * (1.5 + 0.25);
        assert!((z - var).abs() < 1e-10 * var);
        let expected = 2.0 * 2.0 * v[0] * 0.5 * mass;
        assert!((dz - expected).abs() < 1e-9, "{dz} vs {expected}");
    }

    #[test]
    fn interior_total_is_four_g() {
        let g = Grid::new(GridSpec::cubic(64, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| 1.3 * (-(x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2]) / 2.0).exp());
        let p = PhysParams::new(-0.5, 0.0).unwrap();
        let d = second_derivative_decomposition(&u, &p, &CutoffSpec::new(30.0).unwrap());
        assert!((d.total - d.four_g).abs() < 1e-10 * d.four_g.abs(), "{d:?}");
        assert_eq!(d.b_term, 0.0);
    }

    #[test]
    fn riesz_b_matches_direct() {
        let g = Grid::new(GridSpec::cubic(32, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + 2.0 * x[2] * x[2]) / 2.0).exp());
        let cut = CutoffSpec::new(2.0).unwrap();
        let (a, b) = (b_term(&u, &cut), b_term_riesz(&u, &cut));
        assert!((a - b).abs() < 1e-12 * a.abs().max(1e-300));
    }

    #[test]
    fn budget_vanishes_outside_support() {
        let g = Grid::new(GridSpec::cubic(32, 16.0).unwrap());
        let u = ComplexField::from_real_fn(&g, |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let e = error_budget(&u, &CutoffSpec::new(100.0).unwrap());
        assert_eq!(e.eps1, 0.0);
        assert!(e.eps2 > 0.0);
        assert!(virial_convergence_scan(&u, &PhysParams::new(1.0, 0.0).unwrap(), &[2.0, 1.0]).is_err());
    }
}
