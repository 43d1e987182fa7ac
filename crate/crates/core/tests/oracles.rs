use std::f64::consts::PI;

use dgpe_core::functionals::{quartic_terms, quartic_terms_fourier};
use dgpe_core::ground_state::{initial_guess, minimize_weinstein, MinimizeOptions};
use dgpe_core::{ComplexField, Grid, GridSpec, PhysParams};

fn gaussian(grid: &std::sync::Arc<Grid>, amp: f64, sigma: [f64; 3]) -> ComplexField {
    ComplexField::from_real_fn(grid, |x| {
        let e: f64 = (0..3).map(|a| x[a] * x[a] / (2.0 * sigma[a] * sigma[a])).sum();
        amp * (-e).exp()
    })
}

/// Dipolar shape function of a cylindrical density with radial/axial aspect ratio `k`.
fn shape_factor(k: f64) -> f64 {
    let d = 1.0 - k * k;
    if d == 0.0 {
        0.0
    } else if d > 0.0 {
        (1.0 + 2.0 * k * k) / d - 3.0 * k * k * d.sqrt().atanh() / d.powf(1.5)
    } else {
        let e = -d;
        (1.0 + 2.0 * k * k) / d + 3.0 * k * k * e.sqrt().atan() / e.powf(1.5)
    }
}

#[test]
fn gaussian_norms_match_closed_forms() {
    let grid = Grid::new(GridSpec::cubic(64, 20.0).unwrap());
    let (a, s) = (1.3, [1.0, 1.2, 0.8]);
    let u = gaussian(&grid, a, s);
    let vol = s[0] * s[1] * s[2];
    let mass = a * a * PI.powf(1.5) * vol;
    let kinetic = mass * s.iter().map(|x| 0.5 / (x * x)).sum::<f64>();
    let l4 = a.powi(4) * (PI / 2.0).powf(1.5) * vol;
    assert!((u.mass() - mass).abs() < 1e-10 * mass);
    assert!((u.kinetic() - kinetic).abs() < 1e-10 * kinetic);
    assert!((u.l4_pow4() - l4).abs() < 1e-10 * l4);
    assert!((quartic_terms(&u).local - l4).abs() < 1e-10 * l4);
}

#[test]
fn dipolar_energy_of_cylindrical_gaussians() {
    let grid = Grid::new(GridSpec::cubic(64, 32.0).unwrap());
    for (sr, sz) in [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (0.8, 1.6)] {
        let u = gaussian(&grid, 1.0, [sr, sr, sz]);
        let q = quartic_terms_fourier(&u);
        let expected = -(4.0 * PI / 3.0) * shape_factor(sr / sz) * q.local;
        let scale = (4.0 * PI / 3.0) * q.local;
        assert!(
            (q.dipolar - expected).abs() < 2e-3 * scale,
            "widths ({sr}, {sz}): {} vs {expected}",
            q.dipolar
        );
        let phys = quartic_terms(&u).dipolar;
        assert!((phys - q.dipolar).abs() < 1e-10 * scale);
    }
}

#[test]
fn free_gaussian_spreads_exactly() {
    let grid = Grid::new(GridSpec::cubic(128, 48.0).unwrap());
    let sigma = 1.0;
    let u = gaussian(&grid, 1.0, [sigma; 3]);
    for t in [0.5, 1.0, 3.0] {
        let v = u.free_evolve(t);
        let expected = (1.0 + t * t / sigma.powi(4)).powf(-0.75);
        assert!((v.sup_norm() - expected).abs() < 1e-10, "t = {t}: {}", v.sup_norm());
        assert!((v.mass() - u.mass()).abs() < 1e-12 * u.mass());
    }
}

/// `|R|_2^2` for the positive radial solution of `R'' + 2R'/r - R + R^3 = 0`.
fn radial_soliton_mass() -> f64 {
    let dr = 1e-3;
    let shoot = |r0: f64, record: bool| -> (bool, f64) {
        let f = |r: f64, y: [f64; 2]| -> [f64; 2] {
            let damp = if r > 0.0 { 2.0 * y[1] / r } else { 0.0 };
            [y[1], y[0] - y[0].powi(3) - damp]
        };
        let (mut r, mut y) = (1e-6, [r0, 0.0]);
        let mut mass = 0.0;
        while r < 14.0 {
            let k1 = f(r, y);
            let k2 = f(r + dr / 2.0, [y[0] + dr / 2.0 * k1[0], y[1] + dr / 2.0 * k1[1]]);
            let k3 = f(r + dr / 2.0, [y[0] + dr / 2.0 * k2[0], y[1] + dr / 2.0 * k2[1]]);
            let k4 = f(r + dr, [y[0] + dr * k3[0], y[1] + dr * k3[1]]);
            let prev = y[0];
            for i in 0..2 {
                y[i] += dr / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
            if record {
                mass += 4.0 * PI * dr * 0.5 * (prev * prev * r * r + y[0] * y[0] * (r + dr) * (r + dr));
            }
            r += dr;
            if y[0] < 0.0 {
                return (true, mass);
            }
            if y[1] > 0.0 {
                return (false, mass);
            }
        }
        (false, mass)
    };
    let (mut lo, mut hi) = (3.0, 5.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid, false).0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    shoot(lo, true).1
}

#[test]
fn cubic_minimizer_matches_radial_shooting() {
    let norm = radial_soliton_mass();
    let oracle = 3.0 * 3f64.sqrt() / 4.0 * norm;
    let p = PhysParams::new(-1.0, 0.0).unwrap();
    let spec = GridSpec::cubic(64, 16.0).unwrap();
    let init = initial_guess(&p, &spec).unwrap();
    let min = minimize_weinstein(&p, &init, &MinimizeOptions { tol: 1e-12, max_iters: 5000 }).unwrap();
    assert!((min.m - oracle).abs() < 2e-3 * oracle, "m = {}, oracle = {oracle}", min.m);
    assert_eq!(*min.trace.last().unwrap(), min.m);
    assert!(min.trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
}
