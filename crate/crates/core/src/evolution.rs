//! Strang split-step propagation, conservation monitoring, and the free-wave
//! diagnostics: `U(-t) u(t)` Cauchy differences and dispersive decay.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{quartic_terms, PhysParams};
use crate::spectral::{dipolar_convolve_unchecked, ComplexField, SpectralField};

/// Largest `sup|V| dt` accepted by a nonlinear substep.
pub const PHASE_LIMIT: f64 = PI;

/// Gradient growth factor at which a run halts.
pub const GROWTH_LIMIT: f64 = 1e3;

fn kinetic_factors(u: &ComplexField, t: f64) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); u.grid().len()];
    u.grid().for_each_mode(|i, k| {
        out[i] = Complex64::from_polar(1.0, -0.5 * t * (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]));
    });
    out
}

/// `u -> u exp(-i dt V(u))`, in place. Returns `sup |V|`.
fn nonlinear_phase(u: &mut ComplexField, p: &PhysParams, dt: f64) -> Result<f64> {
    let rho = u.density();
    let mut v: Vec<f64> = rho.values().iter().map(|r| p.lambda1 * r.re).collect();
    if p.lambda2 != 0.0 {
        let conv = dipolar_convolve_unchecked(&rho);
        for (a, c) in v.iter_mut().zip(conv.values()) {
            *a += p.lambda2 * c.re;
        }
    }
    let sup = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if sup * dt.abs() >= PHASE_LIMIT {
        return Err(Error::Stability {
            phase: sup * dt.abs(),
        });
    }
    for (z, a) in u.values_mut().iter_mut().zip(&v) {
        *z *= Complex64::from_polar(1.0, -dt * a);
    }
    Ok(sup)
}

fn apply(s: &mut SpectralField, factors: &[Complex64]) {
    for (c, f) in s.coeffs_mut().iter_mut().zip(factors) {
        *c *= f;
    }
}

/// One step: half kinetic, full nonlinear phase, half kinetic.
pub fn strang_step(u: &ComplexField, p: &PhysParams, dt: f64) -> Result<ComplexField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let half = kinetic_factors(u, 0.5 * dt);
    let mut s = u.transform();
    apply(&mut s, &half);
    let mut w = s.inverse();
    nonlinear_phase(&mut w, p, dt)?;
    let mut s = w.transform();
    apply(&mut s, &half);
    Ok(s.inverse())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSchedule {
    /// Monitor every this many steps (and always at the end).
    pub every: usize,
    /// Times at which to keep a copy of the field; rounded to the step grid.
    pub snapshot_times: Vec<f64>,
}

impl Default for MonitorSchedule {
    fn default() -> Self {
        Self {
            every: 10,
            snapshot_times: Vec::new(),
        }
    }
}

/// Dyadic times `t0, 2 t0, ...` up to `t_end`.
pub fn dyadic_times(t0: f64, t_end: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = t0;
    while t <= t_end * (1.0 + 1e-12) {
        out.push(t);
        t *= 2.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halt {
    pub time: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionTrace {
    pub dt: f64,
    pub times: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
    pub mass_drift: Vec<f64>,
    pub energy_drift: Vec<f64>,
    pub sup_norm: Vec<f64>,
    pub l4_norm: Vec<f64>,
    pub grad_norm: Vec<f64>,
    /// Running trapezoid `int_0^t |u(s)|_4^8 ds`.
    pub l8l4_accum: Vec<f64>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, ComplexField)>,
    /// Set when the gradient grew past the sentinel; the run stopped there.
    pub halted: Option<Halt>,
    #[serde(skip)]
    pub final_state: Option<ComplexField>,
}

impl EvolutionTrace {
    pub fn max_mass_drift(&self) -> f64 {
        self.mass_drift.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.energy_drift.iter().fold(0.0, |a, b| a.max(b.abs()))
    }

    /// `Err(BlowupSentinel)` if the run halted on gradient growth.
    pub fn check(&self) -> Result<()> {
        match self.halted {
            Some(h) => Err(Error::BlowupSentinel {
                time: h.time,
                factor: h.factor,
            }),
            None => Ok(()),
        }
    }

    fn push(&mut self, t: f64, u: &ComplexField, s: &SpectralField, p: &PhysParams) {
        let mass = s.norm_sqr();
        let kin = s.kinetic();
        let q = quartic_terms(u);
        let energy = 0.5 * kin + 0.5 * q.potential(p);
        let l4 = q.local.powf(0.25);
        if let Some(&t0) = self.times.last() {
            let prev = self.l8l4_accum.last().copied().unwrap_or(0.0);
            let a = self.l4_norm.last().copied().unwrap_or(0.0).powi(8);
            self.l8l4_accum.push(prev + 0.5 * (t - t0) * (a + l4.powi(8)));
        } else {
            self.l8l4_accum.push(0.0);
        }
        let (m0, e0) = (
            self.mass.first().copied().unwrap_or(mass),
            self.energy.first().copied().unwrap_or(energy),
        );
        self.times.push(t);
        self.mass.push(mass);
        self.energy.push(energy);
        self.mass_drift.push(if m0 == 0.0 { 0.0 } else { (mass - m0) / m0 });
        self.energy_drift.push(if e0 == 0.0 { energy - e0 } else { (energy - e0) / e0.abs() });
        self.sup_norm.push(u.sup_norm());
        self.l4_norm.push(l4);
        self.grad_norm.push(kin.sqrt());
    }
}

/// Repeated Strang steps with the inner half kinetic steps merged.
pub fn propagate(u0: &ComplexField, p: &PhysParams, dt: f64, t_end: f64, monitors: &MonitorSchedule) -> Result<EvolutionTrace> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::Domain(format!("end time must be positive, got {t_end}")));
    }
    if monitors.every == 0 {
        return Err(Error::Domain("monitor interval must be at least one step".into()));
    }
    if !u0.is_finite() {
        return Err(Error::Domain("initial field is not finite".into()));
    }
    let steps = (t_end / dt).round() as usize;
    if steps == 0 || ((steps as f64) * dt - t_end).abs() > 1e-9 * t_end {
        return Err(Error::Domain(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
    }
    let mut snap_steps: Vec<usize> = monitors
        .snapshot_times
        .iter()
        .map(|t| (t / dt).round() as usize)
        .filter(|&k| k <= steps)
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();

    let half = kinetic_factors(u0, 0.5 * dt);
    let full = kinetic_factors(u0, dt);
    let mut trace = EvolutionTrace {
        dt,
        times: Vec::new(),
        mass: Vec::new(),
        energy: Vec::new(),
        mass_drift: Vec::new(),
        energy_drift: Vec::new(),
        sup_norm: Vec::new(),
        l4_norm: Vec::new(),
        grad_norm: Vec::new(),
        l8l4_accum: Vec::new(),
        snapshots: Vec::new(),
        halted: None,
        final_state: None,
    };
    let mut s = u0.transform();
    trace.push(0.0, u0, &s, p);
    if snap_steps.first() == Some(&0) {
        trace.snapshots.push((0.0, u0.clone()));
    }
    let g0 = trace.grad_norm[0];

    // `s` holds the spectrum at a whole step except for a pending half
    // kinetic step when `open` is set
    let mut open = false;
    for k in 1..=steps {
        apply(&mut s, if open { &full } else { &half });
        let mut u = s.inverse();
        nonlinear_phase(&mut u, p, dt)?;
        s = u.transform();
        let observe = k % monitors.every == 0 || k == steps || snap_steps.binary_search(&k).is_ok();
        if observe {
            apply(&mut s, &half);
            open = false;
            let t = k as f64 * dt;
            let u = s.clone().inverse();
            if k % monitors.every == 0 || k == steps {
                trace.push(t, &u, &s, p);
                let g = *trace.grad_norm.last().unwrap();
                if g0 > 0.0 && g > GROWTH_LIMIT * g0 {
                    trace.halted = Some(Halt { time: t, factor: g / g0 });
                    trace.final_state = Some(u);
                    return Ok(trace);
                }
            }
            if snap_steps.binary_search(&k).is_ok() {
                trace.snapshots.push((t, u.clone()));
            }
            if k == steps {
                trace.final_state = Some(u);
            }
        } else {
            open = true;
        }
    }
    Ok(trace)
}

/// Backward evolution via `u(-t) = conj(S_t conj(u))`.
pub fn propagate_backward(u0: &ComplexField, p: &PhysParams, dt: f64, t_end: f64) -> Result<ComplexField> {
    let conj = conjugate(u0);
    let tr = propagate(&conj, p, dt, t_end, &MonitorSchedule { every: usize::MAX / 2, snapshot_times: vec![] })?;
    Ok(conjugate(tr.final_state.as_ref().expect("final state")))
}

pub fn conjugate(u: &ComplexField) -> ComplexField {
    let mut out = u.clone();
    for z in out.values_mut() {
        *z = z.conj();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringReport {
    pub times: Vec<f64>,
    /// `|w(t_{k+1}) - w(t_k)|_{H^1}` with `w(t) = U(-t) u(t)`.
    pub cauchy_differences: Vec<f64>,
    /// `int_{t_k}^{t_{k+1}} |u|_4^8`.
    pub tail_increments: Vec<f64>,
    pub consistent_with_scattering: bool,
    pub verdict: String,
}

fn decreasing_tail(x: &[f64], n: usize) -> bool {
    x.len() >= n && x[x.len() - n..].windows(2).all(|w| w[1] < w[0])
}

/// Interpolated running `L^8 L^4` integral at time `t`.
fn accum_at(trace: &EvolutionTrace, t: f64) -> f64 {
    let i = trace.times.partition_point(|&s| s < t - 1e-12);
    if i < trace.times.len() && (trace.times[i] - t).abs() <= 1e-9 * t.max(1.0) {
        return trace.l8l4_accum[i];
    }
    if i == 0 || i >= trace.times.len() {
        return trace.l8l4_accum[i.min(trace.times.len() - 1)];
    }
    let (t0, t1) = (trace.times[i - 1], trace.times[i]);
    let (a0, a1) = (trace.l8l4_accum[i - 1], trace.l8l4_accum[i]);
    a0 + (a1 - a0) * (t - t0) / (t1 - t0)
}

pub fn scattering_diagnostic(trace: &EvolutionTrace) -> Result<ScatteringReport> {
    let snaps: Vec<&(f64, ComplexField)> = trace.snapshots.iter().filter(|(t, _)| *t > 0.0).collect();
    if snaps.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need at least 4 snapshots at positive times, have {}",
            snaps.len()
        )));
    }
    let w: Vec<SpectralField> = snaps
        .iter()
        .map(|(t, u)| {
            let mut s = u.transform();
            s.free_evolve(-t);
            s
        })
        .collect();
    let mut diffs = Vec::with_capacity(w.len() - 1);
    for pair in w.windows(2) {
        let mut d = pair[1].clone();
        for (a, b) in d.coeffs_mut().iter_mut().zip(pair[0].coeffs()) {
            *a -= b;
        }
        diffs.push((d.norm_sqr() + d.kinetic()).sqrt());
    }
    let times: Vec<f64> = snaps.iter().map(|(t, _)| *t).collect();
    let inc: Vec<f64> = times
        .windows(2)
        .map(|w| accum_at(trace, w[1]) - accum_at(trace, w[0]))
        .collect();
    let ok = decreasing_tail(&diffs, 3) && decreasing_tail(&inc, 3);
    Ok(ScatteringReport {
        times,
        cauchy_differences: diffs,
        tail_increments: inc,
        consistent_with_scattering: ok,
        verdict: if ok {
            "consistent with scattering over the window".into()
        } else {
            "not consistent with scattering over the window".into()
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub exponent: f64,
    pub intercept: f64,
}

/// Least-squares slope of `log sup|U(t) f|` against `log t`.
pub fn dispersive_decay_probe(f: &ComplexField, t_grid: &[f64]) -> Result<DecayFit> {
    if t_grid.len() < 2 || t_grid.iter().any(|t| !(*t > 0.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("time grid must be positive, increasing, and have two points".into()));
    }
    let spec = *f.grid().spec();
    let radius = spec.len.iter().cloned().fold(f64::INFINITY, f64::min) / 4.0;
    let mut outside = 0.0;
    let vals = f.values();
    f.grid().for_each_node(|i, x| {
        if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() > radius {
            outside += vals[i].norm_sqr();
        }
    });
    let total = f.mass();
    outside *= f.grid().cell_volume();
    if outside > 1e-8 * total {
        return Err(Error::Precondition(format!(
            "field not localized: fraction {:.2e} of the mass lies beyond L/4",
            outside / total
        )));
    }
    let s0 = f.transform();
    let mut sups = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let mut s = s0.clone();
        s.free_evolve(t);
        sups.push(s.inverse().sup_norm());
    }
    if sups.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Window(format!(
            "sup norm stopped decreasing on [{}, {}]; periodic images are interfering",
            t_grid[0],
            t_grid[t_grid.len() - 1]
        )));
    }
    let xs: Vec<f64> = t_grid.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let exponent = sxy / sxx;
    Ok(DecayFit {
        times: t_grid.to_vec(),
        sup_norms: sups,
        exponent,
        intercept: my - exponent * mx,
    })
}
