//! Initial data and ground states from config descriptions.

use std::path::Path;
use std::sync::Arc;

use dgpe_core::ground_state::{compute_ground_state, MinimizeOptions};
use dgpe_core::io::load_snapshot;
use dgpe_core::random::{gaussian_mixture, FieldRng};
use dgpe_core::scaling::galilean_boost;
use dgpe_core::{ComplexField, Grid, PhysParams};

use crate::catalog::{Catalog, CatalogRecord};
use crate::config::{FieldSpec, GroundStateSource};
use crate::error::{Context, RunError};

/// Catalog record for `p`, computing and storing it on a miss.
pub fn ground_state(source: &GroundStateSource, p: &PhysParams, root: &Path, seed: u64) -> Result<(Catalog, CatalogRecord), RunError> {
    let catalog = Catalog::new(root.join(&source.catalog));
    if let Some(rec) = catalog.record(p.lambda1, p.lambda2)? {
        return Ok((catalog, rec));
    }
    if !p.admits_ground_state() {
        return Err(RunError::Config(format!(
            "no ground state for lambda = ({}, {}) in the {} regime",
            p.lambda1, p.lambda2, p.regime
        )));
    }
    let spec = source.grid.spec()?;
    let opts = MinimizeOptions {
        tol: source.tol,
        max_iters: source.max_iters,
    };
    let (rec, min) = compute_ground_state(p, &spec, &opts).context("ground state")?;
    let stored = catalog.insert(&rec, seed, min.iterations)?;
    Ok((catalog, stored))
}

pub fn build_field(spec: &FieldSpec, grid: &Arc<Grid>, p: &PhysParams, rng: &mut FieldRng, root: &Path, seed: u64) -> Result<ComplexField, RunError> {
    match spec {
        FieldSpec::Gaussian {
            amplitude,
            width,
            center,
            velocity,
        } => {
            if width.iter().any(|w| !(*w > 0.0)) {
                return Err(RunError::Config("Gaussian widths must be positive".into()));
            }
            let u = ComplexField::from_real_fn(grid, |x| {
                let e: f64 = (0..3).map(|a| (x[a] - center[a]).powi(2) / (2.0 * width[a] * width[a])).sum();
                amplitude * (-e).exp()
            });
            Ok(boosted(u, *velocity))
        }
        FieldSpec::Sech {
            amplitude,
            width,
            velocity,
        } => {
            if !(*width > 0.0) {
                return Err(RunError::Config("sech width must be positive".into()));
            }
            let u = ComplexField::from_real_fn(grid, |x| {
                let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
                amplitude / (r / width).cosh()
            });
            Ok(boosted(u, *velocity))
        }
        FieldSpec::Mixture { options } => gaussian_mixture(grid, options, rng).map_err(|e| RunError::Config(e.to_string())),
        FieldSpec::GroundState { scale, source } => {
            let (catalog, rec) = ground_state(source, p, root, seed)?;
            let q = catalog.load_q(&rec)?;
            let same_box = (0..3).all(|a| (q.grid().spec().len[a] - grid.spec().len[a]).abs() <= 1e-12 * grid.spec().len[a]);
            let q = if same_box { q.resampled(grid) } else { q.interpolated(grid) }
                .map_err(|e| RunError::Config(format!("ground state grid: {e}")))?;
            Ok(q.scaled(*scale))
        }
        FieldSpec::Snapshot { path } => {
            let full = root.join(path);
            let (u, _) = load_snapshot(&full).map_err(|e| RunError::Config(format!("{}: {e}", full.display())))?;
            if !u.grid().same_shape(grid) {
                return Err(RunError::Config(format!("{} is not on the run grid", full.display())));
            }
            ComplexField::from_values(grid, u.into_values()).map_err(|e| RunError::Config(e.to_string()))
        }
    }
}

fn boosted(u: ComplexField, v: [f64; 3]) -> ComplexField {
    if v == [0.0; 3] {
        u
    } else {
        galilean_boost(&u, v)
    }
}

/// Rescales `u` by a real factor so that `|u|_2 |grad u|_2 = target`.
pub fn scale_to_product(u: &ComplexField, target: f64) -> ComplexField {
    let now = (u.mass() * u.kinetic()).sqrt();
    u.clone().scaled((target / now).sqrt())
}
