//! Executes one experiment and writes its artifacts.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use dgpe_core::evolution::{dyadic_times, propagate, scattering_diagnostic, dispersive_decay_probe, DecayFit, EvolutionTrace, MonitorSchedule, ScatteringReport};
use dgpe_core::functionals::{potential_energy, quartic_terms, report};
use dgpe_core::ground_state::{compute_ground_state, equivalence_from_parts, gamma_from_norms, EquivalenceReport, MinimizeOptions};
use dgpe_core::profiles::{audit_expansions, cross_term_decay, free_l4_norms, CrossTermDecay, ExpansionAudit, ProfileSpec};
use dgpe_core::random::{band_limited_field, gaussian_mixture, radial_field, seeded_rng, uniform01, FieldRng};
use dgpe_core::scaling::{aniso_limit, aniso_rescale_potential, verify_growth_lemma, GrowthReport};
use dgpe_core::spectral::{dipolar_convolve, dipolar_via_riesz};
use dgpe_core::virial::{virial_convergence_scan, virial_trace, CutoffSpec, VirialScan};
use dgpe_core::{ComplexField, Grid, PhysParams, Regime};
use serde::Serialize;

use crate::catalog::Catalog;
use crate::config::*;
use crate::error::{Context, RunError};
use crate::fields::{build_field, ground_state, scale_to_product};

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub kind: Kind,
    pub seed: u64,
    pub grid: GridSection,
    pub phys: PhysSection,
    pub regime: Regime,
    pub result: Outcome,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Outcome {
    SpectralCheck(SpectralOutcome),
    Fiber(FiberOutcome),
    GroundState(GroundStateOutcome),
    Evolve(EvolveOutcome),
    VirialScan(VirialOutcome),
    ProfilesAudit(ProfilesOutcome),
    CheckConditions(ConditionsOutcome),
    AnisoScan(AnisoOutcome),
    DecayProbe(DecayFit),
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralOutcome {
    pub check: SpectralCheck,
    /// Per-sample error measure: relative gap (plancherel, riesz) or
    /// `|dipolar| / |u|_4^4` (radial).
    pub values: Vec<f64>,
    pub max_value: f64,
    pub multiplier: Option<MultiplierBounds>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplierBounds {
    pub min: f64,
    pub max: f64,
    /// Largest `|K^ - 8 pi/3|` over modes on the `xi3` axis.
    pub axis3_deviation: f64,
    /// Largest `|K^ + 4 pi/3|` over modes on the `xi1` and `xi2` axes.
    pub axis12_deviation: f64,
    pub zero_mode: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberSample {
    pub kinetic: f64,
    pub potential: f64,
    pub report: GrowthReport,
    pub all_passed: bool,
    pub root_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiberOutcome {
    pub samples: Vec<FiberSample>,
    pub passed: usize,
    pub max_root_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaRow {
    pub c: f64,
    pub gamma: f64,
    pub gamma_times_c: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroundStateOutcome {
    pub catalog_entry: String,
    pub m: f64,
    pub gamma1: f64,
    pub q_mass: f64,
    pub q_kinetic: f64,
    pub pde_residual: f64,
    pub pohozaev_residual: f64,
    pub iterations: usize,
    pub gamma: Vec<GammaRow>,
    /// Largest relative deviation of `gamma(c) c` from `gamma(1)`.
    pub gamma_c_spread: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveRunOutcome {
    /// Index into the initial data: 0 for `initial`, then `extra_cases`.
    pub case: usize,
    pub grid: GridSection,
    pub lambda1: f64,
    pub lambda2: f64,
    pub dt: f64,
    pub steps: usize,
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    pub initial_grad_norm: f64,
    pub max_grad_norm: f64,
    pub halted_at: Option<f64>,
    pub scattering: Option<ScatteringReport>,
    pub trace_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolveOutcome {
    pub runs: Vec<EvolveRunOutcome>,
    /// `drift(dt) / drift(dt/2)` per case and parameter set, when refinement was requested.
    pub energy_drift_ratios: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VirialOutcome {
    pub width_unit: f64,
    pub scan: VirialScan,
    /// `gap / |4 G|` per radius.
    pub relative_gaps: Vec<f64>,
    pub trace_r: f64,
    pub trace_lambda: [f64; 2],
    pub max_fd_mismatch: f64,
    pub trace_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilesOutcome {
    /// Sums of the profiles' masses and kinetic energies.
    pub total_mass: f64,
    pub total_kinetic: f64,
    pub audit: ExpansionAudit,
    pub cross: Option<CrossTermDecay>,
    pub free_times: Vec<f64>,
    pub free_l4: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundSample {
    pub mass: f64,
    pub energy: f64,
    pub g: f64,
    pub gamma: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionsOutcome {
    pub catalog_entry: String,
    pub equivalence: Vec<EquivalenceReport>,
    pub lower_bound: Vec<LowerBoundSample>,
    pub agreements: usize,
    pub threshold_holds: usize,
    pub min_margin: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnisoOutcome {
    pub mu: Vec<f64>,
    pub ratio: Vec<f64>,
    pub limit: f64,
    pub increasing: bool,
}

/// Output root: `DGPE_OUTPUT_ROOT` if set, else the working directory.
pub fn default_root() -> PathBuf {
    std::env::var_os("DGPE_OUTPUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output(format!("{}: {e}", path.display()))
}

struct Ctx {
    root: PathBuf,
    out: PathBuf,
    seed: u64,
    files: Vec<(String, Vec<u8>)>,
}

impl Ctx {
    fn csv(&mut self, name: &str, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<String, RunError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let path = self.out.join(name);
        w.write_record(std::iter::once("schema_version").chain(header.iter().copied()))
            .map_err(|e| out_err(&path, e))?;
        for row in rows {
            let rec: Vec<String> = std::iter::once(SCHEMA_VERSION.to_string())
                .chain(row.iter().map(|v| format!("{v:e}")))
                .collect();
            w.write_record(&rec).map_err(|e| out_err(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| out_err(&path, e))?;
        self.files.push((name.to_string(), bytes));
        Ok(name.to_string())
    }
}

/// Runs `cfg`, writing `summary.json` and traces into `root/cfg.output_dir`.
pub fn run(cfg: &ExperimentConfig, root: &Path) -> Result<Summary, RunError> {
    let out = root.join(&cfg.output_dir);
    let mut ctx = Ctx {
        root: root.to_path_buf(),
        out: out.clone(),
        seed: cfg.seed,
        files: Vec::new(),
    };
    let grid = Grid::new(cfg.grid.spec()?);
    let p = cfg.phys.params()?;
    let mut rng = seeded_rng(cfg.seed);
    let result = match &cfg.run {
        RunParams::SpectralCheck(r) => Outcome::SpectralCheck(spectral_check(r, &grid, &p, &mut rng)?),
        RunParams::Fiber(r) => Outcome::Fiber(fiber(r, &grid, &p, &mut rng)?),
        RunParams::GroundState(r) => Outcome::GroundState(ground_state_run(r, cfg, &p, &mut ctx)?),
        RunParams::Evolve(r) => Outcome::Evolve(evolve(r, &grid, &p, &mut rng, &mut ctx)?),
        RunParams::VirialScan(r) => Outcome::VirialScan(virial(r, &grid, &p, &mut rng, &mut ctx)?),
        RunParams::ProfilesAudit(r) => Outcome::ProfilesAudit(profiles(r, &grid, &p, &mut rng, &ctx)?),
        RunParams::CheckConditions(r) => Outcome::CheckConditions(conditions(r, &grid, &p, &mut rng, &ctx)?),
        RunParams::AnisoScan(r) => Outcome::AnisoScan(aniso(r, &grid, &p, &mut rng, &ctx)?),
        RunParams::DecayProbe(r) => {
            let u = build_field(&r.field, &grid, &p, &mut rng, &ctx.root, ctx.seed)?;
            Outcome::DecayProbe(dispersive_decay_probe(&u, &r.times).context("decay probe")?)
        }
    };
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        kind: cfg.kind,
        seed: cfg.seed,
        grid: cfg.grid,
        phys: cfg.phys,
        regime: p.regime,
        result,
    };
    fs::create_dir_all(&out).map_err(|e| out_err(&out, e))?;
    let mut json = serde_json::to_vec_pretty(&summary).map_err(|e| RunError::Output(e.to_string()))?;
    json.push(b'\n');
    ctx.files.push(("summary.json".into(), json));
    for (name, bytes) in &ctx.files {
        let path = out.join(name);
        fs::write(&path, bytes).map_err(|e| out_err(&path, e))?;
    }
    Ok(summary)
}

fn relative_l2(a: &ComplexField, b: &ComplexField) -> f64 {
    let num: f64 = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.values().iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

fn spectral_check(r: &SpectralCheckRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng) -> Result<SpectralOutcome, RunError> {
    let mut values = Vec::new();
    let mut multiplier = None;
    match r.check {
        SpectralCheck::Plancherel => {
            for _ in 0..r.samples {
                let u = band_limited_field(grid, r.band, rng).map_err(|e| RunError::Config(e.to_string()))?;
                values.push(potential_energy(&u, p).relative_gap());
            }
        }
        SpectralCheck::Riesz => {
            for _ in 0..r.samples {
                let u = band_limited_field(grid, r.band, rng).map_err(|e| RunError::Config(e.to_string()))?;
                let f = ComplexField::from_values(grid, u.values().iter().map(|z| z.re.into()).collect())
                    .context("real part")?;
                let direct = dipolar_convolve(&f).context("dipolar convolution")?;
                values.push(relative_l2(&dipolar_via_riesz(&f), &direct));
            }
        }
        SpectralCheck::Radial => {
            for _ in 0..r.samples {
                let u = radial_field(grid, rng);
                let q = quartic_terms(&u);
                values.push(q.dipolar.abs() / q.local);
            }
        }
        SpectralCheck::Multiplier => {
            let mult = grid.dipolar_multiplier();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut d3, mut d12, mut zero) = (0.0f64, 0.0f64, 0.0);
            grid.for_each_mode(|i, k| {
                let m = mult[i];
                lo = lo.min(m);
                hi = hi.max(m);
                let nz: Vec<usize> = (0..3).filter(|&a| k[a] != 0.0).collect();
                match nz[..] {
                    [] => zero = m,
                    [2] => d3 = d3.max((m - 8.0 * PI / 3.0).abs()),
                    [_] => d12 = d12.max((m + 4.0 * PI / 3.0).abs()),
                    _ => {}
                }
            });
            multiplier = Some(MultiplierBounds {
                min: lo,
                max: hi,
                axis3_deviation: d3,
                axis12_deviation: d12,
                zero_mode: zero,
            });
        }
    }
    let max_value = values.iter().cloned().fold(0.0, f64::max);
    Ok(SpectralOutcome {
        check: r.check.clone(),
        values,
        max_value,
        multiplier,
    })
}

fn fiber(r: &FiberRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng) -> Result<FiberOutcome, RunError> {
    let mut samples = Vec::with_capacity(r.samples);
    for k in 0..r.samples {
        let mut found = None;
        for _ in 0..r.max_attempts.max(1) {
            let u = gaussian_mixture(grid, &r.mixture, rng).map_err(|e| RunError::Config(e.to_string()))?;
            let pot = quartic_terms(&u).potential(p);
            if pot < 0.0 {
                found = Some(u);
                break;
            }
        }
        let u = found.ok_or_else(|| RunError::Config(format!("no draw with P < 0 for sample {k}")))?;
        let rep = verify_growth_lemma(&u, p).context("growth lemma")?;
        let kinetic = u.kinetic();
        let potential = quartic_terms(&u).potential(p);
        samples.push(FiberSample {
            kinetic,
            potential,
            all_passed: rep.all_passed(),
            root_mismatch: ((rep.mu_star_bracketed - rep.mu_star) / rep.mu_star).abs(),
            report: rep,
        });
    }
    Ok(FiberOutcome {
        passed: samples.iter().filter(|s| s.all_passed).count(),
        max_root_mismatch: samples.iter().map(|s| s.root_mismatch).fold(0.0, f64::max),
        samples,
    })
}

fn ground_state_run(r: &GroundStateRun, cfg: &ExperimentConfig, p: &PhysParams, ctx: &mut Ctx) -> Result<GroundStateOutcome, RunError> {
    if !p.admits_ground_state() {
        return Err(RunError::Config(format!(
            "no ground state for lambda = ({}, {}) in the {} regime",
            p.lambda1, p.lambda2, p.regime
        )));
    }
    let spec = cfg.grid.spec()?;
    let opts = MinimizeOptions {
        tol: r.tol,
        max_iters: r.max_iters,
    };
    let (rec, min) = compute_ground_state(p, &spec, &opts).context("ground state")?;
    let catalog = Catalog::new(ctx.root.join(&r.catalog));
    catalog.insert(&rec, cfg.seed, min.iterations)?;
    ctx.csv(
        "weinstein_trace.csv",
        &["iteration", "J"],
        min.trace.iter().enumerate().map(|(i, j)| vec![i as f64, *j]),
    )?;
    let g1 = gamma_from_norms(rec.q_mass, rec.q_kinetic, 1.0).context("gamma(1)")?;
    let mut gamma = Vec::with_capacity(r.c_list.len());
    for &c in &r.c_list {
        let g = gamma_from_norms(rec.q_mass, rec.q_kinetic, c).context("gamma(c)")?;
        gamma.push(GammaRow {
            c,
            gamma: g,
            gamma_times_c: g * c,
        });
    }
    let spread = gamma
        .iter()
        .map(|g| ((g.gamma_times_c - g1) / g1).abs())
        .fold(0.0, f64::max);
    Ok(GroundStateOutcome {
        catalog_entry: crate::catalog::entry_name(p.lambda1, p.lambda2),
        m: rec.m,
        gamma1: rec.gamma_of_unit_mass,
        q_mass: rec.q_mass,
        q_kinetic: rec.q_kinetic,
        pde_residual: rec.residuals.pde_residual,
        pohozaev_residual: rec.residuals.pohozaev_residual,
        iterations: min.iterations,
        gamma,
        gamma_c_spread: spread,
    })
}

fn trace_rows(tr: &EvolutionTrace) -> impl Iterator<Item = Vec<f64>> + '_ {
    (0..tr.times.len()).map(move |i| {
        vec![
            tr.times[i],
            tr.mass[i],
            tr.energy[i],
            tr.mass_drift[i],
            tr.energy_drift[i],
            tr.sup_norm[i],
            tr.l4_norm[i],
            tr.grad_norm[i],
        ]
    })
}

const TRACE_HEADER: [&str; 8] = ["t", "mass", "energy", "mass_drift", "energy_drift", "sup", "l4", "grad"];

fn evolve(r: &EvolveRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, ctx: &mut Ctx) -> Result<EvolveOutcome, RunError> {
    let mut cases: Vec<(&FieldSpec, f64, f64, Arc<Grid>, &SnapshotPlan)> =
        vec![(&r.initial, r.t_end, r.dt, Arc::clone(grid), &r.snapshots)];
    for c in &r.extra_cases {
        let g = match &c.grid {
            Some(s) => Grid::new(s.spec()?),
            None => Arc::clone(grid),
        };
        cases.push((&c.initial, c.t_end, c.dt.unwrap_or(r.dt), g, c.snapshots.as_ref().unwrap_or(&r.snapshots)));
    }
    if cases.iter().any(|c| !(c.1 > 0.0 && c.2 > 0.0)) || r.monitor_every == 0 {
        return Err(RunError::Config("dt, t_end and monitor_every must be positive".into()));
    }
    let mut params = vec![*p];
    for extra in &r.extra_params {
        params.push(extra.params()?);
    }
    let mut runs = Vec::new();
    let mut ratios = Vec::new();
    for (c, (initial, t_end, dt0, case_grid, plan)) in cases.into_iter().enumerate() {
        let dts: Vec<f64> = if r.refine_dt { vec![dt0, 0.5 * dt0] } else { vec![dt0] };
        let u0 = build_field(initial, &case_grid, p, rng, &ctx.root, ctx.seed)?;
        let snapshot_times = match plan {
            SnapshotPlan::None => Vec::new(),
            SnapshotPlan::Dyadic => dyadic_times(1.0, t_end),
            SnapshotPlan::Times(t) => t.iter().copied().filter(|&s| s <= t_end).collect(),
        };
        for (k, q) in params.iter().enumerate() {
            let mut drifts = Vec::new();
            for (j, &dt) in dts.iter().enumerate() {
                let sched = MonitorSchedule {
                    every: r.monitor_every << j,
                    snapshot_times: snapshot_times.clone(),
                };
                let tr = propagate(&u0, q, dt, t_end, &sched).context("propagation")?;
                let scattering = if snapshot_times.len() < 2 || tr.halted.is_some() {
                    None
                } else {
                    Some(scattering_diagnostic(&tr).context("scattering diagnostic")?)
                };
                if r.write_snapshots {
                    for (t, u) in &tr.snapshots {
                        let mut bytes = Vec::new();
                        dgpe_core::io::write_snapshot(&mut bytes, u, *t).context("snapshot")?;
                        ctx.files.push((format!("snap_c{c}_p{k}_dt{j}_t{t}.snap"), bytes));
                    }
                }
                let name = format!("trace_c{c}_p{k}_dt{j}.csv");
                let trace_file = ctx.csv(&name, &TRACE_HEADER, trace_rows(&tr))?;
                drifts.push(tr.max_energy_drift());
                let spec = case_grid.spec();
                runs.push(EvolveRunOutcome {
                    case: c,
                    grid: GridSection { n: spec.n, len: spec.len },
                    lambda1: q.lambda1,
                    lambda2: q.lambda2,
                    dt,
                    steps: (t_end / dt).round() as usize,
                    max_mass_drift: tr.max_mass_drift(),
                    max_energy_drift: tr.max_energy_drift(),
                    initial_grad_norm: tr.grad_norm[0],
                    max_grad_norm: tr.grad_norm.iter().cloned().fold(0.0, f64::max),
                    halted_at: tr.halted.map(|h| h.time),
                    scattering,
                    trace_file,
                });
            }
            if drifts.len() == 2 {
                ratios.push(drifts[0] / drifts[1]);
            }
        }
    }
    Ok(EvolveOutcome {
        runs,
        energy_drift_ratios: ratios,
    })
}

fn virial(r: &VirialRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, ctx: &mut Ctx) -> Result<VirialOutcome, RunError> {
    let u = build_field(&r.field, grid, p, rng, &ctx.root, ctx.seed)?;
    let radii: Vec<f64> = r.r_widths.iter().map(|w| w * r.width_unit).collect();
    let scan = virial_convergence_scan(&u, p, &radii).context("virial scan")?;
    let relative_gaps = scan.rows.iter().map(|row| row.gap / row.four_g.abs()).collect();
    let tp = match &r.trace_phys {
        Some(s) => s.params()?,
        None => *p,
    };
    let cut = CutoffSpec::new(r.trace_r * r.width_unit).context("cutoff")?;
    let tr = virial_trace(&u, &tp, &cut, r.dt, r.steps).context("virial trace")?;
    let trace_file = ctx.csv(
        "virial_trace.csv",
        &["t", "z", "dz_dt", "d2z_dt2_fd", "total", "four_g", "a_term", "b_term", "eps1", "eps2"],
        (0..tr.times.len()).map(|i| {
            vec![
                tr.times[i],
                tr.z[i],
                tr.dz_dt[i],
                tr.d2z_dt2_fd[i].unwrap_or(f64::NAN),
                tr.total[i],
                tr.four_g[i],
                tr.a_term[i],
                tr.b_term[i],
                tr.eps1[i],
                tr.eps2[i],
            ]
        }),
    )?;
    Ok(VirialOutcome {
        width_unit: r.width_unit,
        scan,
        relative_gaps,
        trace_r: cut.r,
        trace_lambda: [tp.lambda1, tp.lambda2],
        max_fd_mismatch: tr.max_fd_mismatch(),
        trace_file,
    })
}

fn profiles(r: &ProfilesRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, ctx: &Ctx) -> Result<ProfilesOutcome, RunError> {
    let mut psis = Vec::with_capacity(r.profiles.len());
    for entry in &r.profiles {
        psis.push(build_field(&entry.field, grid, p, rng, &ctx.root, ctx.seed)?);
    }
    let remainder = match &r.remainder {
        Some(f) => Some(build_field(f, grid, p, rng, &ctx.root, ctx.seed)?),
        None => None,
    };
    let spec = ProfileSpec::new(
        psis.clone(),
        r.profiles.iter().map(|e| e.t_seq.clone()).collect(),
        r.profiles.iter().map(|e| e.x_seq.clone()).collect(),
        remainder,
    )
    .context("profile spec")?;
    let n_list = r.n_list.clone().unwrap_or_else(|| (0..spec.len()).collect());
    let audit = audit_expansions(&spec, &n_list).context("expansion audit")?;
    let cross = if r.cross_separations.is_empty() {
        None
    } else {
        let b = psis.get(1).unwrap_or(&psis[0]);
        Some(cross_term_decay(&psis[0], b, &r.cross_separations).context("cross terms")?)
    };
    let free_l4 = free_l4_norms(&psis[0], &r.free_times);
    Ok(ProfilesOutcome {
        total_mass: psis.iter().map(|u| u.mass()).sum(),
        total_kinetic: psis.iter().map(|u| u.kinetic()).sum(),
        audit,
        cross,
        free_times: r.free_times.clone(),
        free_l4,
    })
}

fn conditions(r: &ConditionsRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, ctx: &Ctx) -> Result<ConditionsOutcome, RunError> {
    let (_, rec) = ground_state(&r.ground_state, p, &ctx.root, ctx.seed)?;
    let q_product = (rec.q_mass * rec.q_kinetic).sqrt();
    let (lo, hi) = (r.scale_range[0].ln(), r.scale_range[1].ln());
    if !(r.scale_range[0] > 0.0 && hi >= lo) {
        return Err(RunError::Config("scale_range must be positive and ordered".into()));
    }
    let mut equivalence = Vec::new();
    let mut lower_bound = Vec::new();
    for k in 0..r.samples {
        let mut accepted = false;
        for _ in 0..r.max_attempts.max(1) {
            let u = gaussian_mixture(grid, &r.mixture, rng).map_err(|e| RunError::Config(e.to_string()))?;
            let f = (lo + (hi - lo) * rand_unit(rng)).exp();
            let u = scale_to_product(&u, f * q_product);
            let rep = report(&u, p);
            let eq = equivalence_from_parts(rep.mass, rep.kinetic, rep.potential, rec.q_mass, rec.q_kinetic)
                .context("equivalence")?;
            match r.mode {
                ConditionsMode::Equivalence => {
                    equivalence.push(eq);
                    accepted = true;
                }
                ConditionsMode::LowerBound => {
                    if eq.threshold_form {
                        let bound = (eq.gamma - eq.energy).min(eq.energy);
                        lower_bound.push(LowerBoundSample {
                            mass: eq.mass,
                            energy: eq.energy,
                            g: eq.g,
                            gamma: eq.gamma,
                            bound,
                            margin: eq.g - bound,
                        });
                        accepted = true;
                    }
                }
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            return Err(RunError::Config(format!("no admissible draw for sample {k}")));
        }
    }
    Ok(ConditionsOutcome {
        catalog_entry: crate::catalog::entry_name(p.lambda1, p.lambda2),
        agreements: equivalence.iter().filter(|e| e.agree).count(),
        threshold_holds: equivalence.iter().filter(|e| e.threshold_form).count() + lower_bound.len(),
        min_margin: lower_bound.iter().map(|s| s.margin).reduce(f64::min),
        equivalence,
        lower_bound,
    })
}

fn rand_unit(rng: &mut FieldRng) -> f64 {
    uniform01(rng)
}

fn aniso(r: &AnisoRun, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, ctx: &Ctx) -> Result<AnisoOutcome, RunError> {
    let u = build_field(&r.field, grid, p, rng, &ctx.root, ctx.seed)?;
    let mut ratio = Vec::with_capacity(r.mu_list.len());
    for &mu in &r.mu_list {
        ratio.push(aniso_rescale_potential(&u, p, mu).context("anisotropic scaling")? / (mu * mu));
    }
    Ok(AnisoOutcome {
        mu: r.mu_list.clone(),
        increasing: ratio.windows(2).all(|w| w[1] > w[0]),
        limit: aniso_limit(&u, p),
        ratio,
    })
}
