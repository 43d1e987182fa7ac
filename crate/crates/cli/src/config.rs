//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use dgpe_core::random::MixtureOptions;
use dgpe_core::{GridSpec, PhysParams};
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    SpectralCheck,
    Fiber,
    GroundState,
    Evolve,
    VirialScan,
    ProfilesAudit,
    CheckConditions,
    AnisoScan,
    DecayProbe,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::SpectralCheck => "spectral-check",
            Kind::Fiber => "fiber",
            Kind::GroundState => "ground-state",
            Kind::Evolve => "evolve",
            Kind::VirialScan => "virial-scan",
            Kind::ProfilesAudit => "profiles-audit",
            Kind::CheckConditions => "check-conditions",
            Kind::AnisoScan => "aniso-scan",
            Kind::DecayProbe => "decay-probe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: [usize; 3],
    #[serde(rename = "L")]
    pub len: [f64; 3],
}

impl GridSection {
    pub fn spec(&self) -> Result<GridSpec, RunError> {
        GridSpec::new(self.n, self.len).map_err(|e| RunError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysSection {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl PhysSection {
    pub fn params(&self) -> Result<PhysParams, RunError> {
        PhysParams::new(self.lambda1, self.lambda2).map_err(|e| RunError::Config(e.to_string()))
    }
}

/// Where a ground state comes from: the catalog, or a fresh minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateSource {
    pub grid: GridSection,
    #[serde(default = "default_gs_tol")]
    pub tol: f64,
    #[serde(default = "default_gs_iters")]
    pub max_iters: usize,
    /// Catalog directory, relative to the output root.
    #[serde(default = "default_catalog")]
    pub catalog: PathBuf,
}

fn default_gs_tol() -> f64 {
    1e-10
}
fn default_gs_iters() -> usize {
    5000
}
fn default_catalog() -> PathBuf {
    PathBuf::from("catalog")
}

/// Initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    /// `a exp(-sum (x_i - c_i)^2 / (2 w_i^2) + i v . x)`.
    Gaussian {
        amplitude: f64,
        width: [f64; 3],
        #[serde(default)]
        center: [f64; 3],
        #[serde(default)]
        velocity: [f64; 3],
    },
    /// `a sech(|x| / w) exp(i v . x)`.
    Sech {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        velocity: [f64; 3],
    },
    /// Seeded random Gaussian mixture.
    Mixture {
        #[serde(default)]
        options: MixtureOptions,
    },
    /// `scale * Q`, with `Q` resampled onto the run grid.
    GroundState {
        scale: f64,
        source: GroundStateSource,
    },
    Snapshot { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpectralCheck {
    Plancherel,
    Multiplier,
    Riesz,
    Radial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralCheckRun {
    pub check: SpectralCheck,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Band fraction of random fields.
    #[serde(default = "default_band")]
    pub band: f64,
}

fn default_samples() -> usize {
    20
}
fn default_band() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberRun {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub mixture: MixtureOptions,
    /// Draws per accepted sample before giving up on finding `P < 0`.
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_attempts() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateRun {
    #[serde(default = "default_gs_tol")]
    pub tol: f64,
    #[serde(default = "default_gs_iters")]
    pub max_iters: usize,
    #[serde(default = "default_catalog")]
    pub catalog: PathBuf,
    #[serde(default = "default_c_list")]
    pub c_list: Vec<f64>,
}

fn default_c_list() -> Vec<f64> {
    vec![0.25, 0.5, 1.0, 2.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveRun {
    pub initial: FieldSpec,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_every")]
    pub monitor_every: usize,
    /// Also run with `dt / 2` and report the energy-drift ratio.
    #[serde(default)]
    pub refine_dt: bool,
    /// Further `(lambda1, lambda2)` pairs to run with the same data.
    #[serde(default)]
    pub extra_params: Vec<PhysSection>,
    /// Snapshot times for the scattering diagnostic; `dyadic` gives 1, 2, 4, ..
    #[serde(default)]
    pub snapshots: SnapshotPlan,
    #[serde(default)]
    pub write_snapshots: bool,
    /// Further initial data, each run with every parameter set and its own horizon.
    #[serde(default)]
    pub extra_cases: Vec<EvolveCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveCase {
    pub initial: FieldSpec,
    pub t_end: f64,
    /// Defaults to the run's `dt`.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Defaults to `[grid]`.
    #[serde(default)]
    pub grid: Option<GridSection>,
    /// Defaults to the run's `snapshots`.
    #[serde(default)]
    pub snapshots: Option<SnapshotPlan>,
}

fn default_every() -> usize {
    10
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPlan {
    #[default]
    None,
    Dyadic,
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirialRun {
    pub field: FieldSpec,
    /// Cutoff radii in units of `width_unit`.
    pub r_widths: Vec<f64>,
    #[serde(default = "default_one")]
    pub width_unit: f64,
    /// Radius for the trajectory check, in units of `width_unit`.
    pub trace_r: f64,
    pub dt: f64,
    pub steps: usize,
    /// Parameters for the trajectory check; defaults to `[phys]`.
    #[serde(default)]
    pub trace_phys: Option<PhysSection>,
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileEntry {
    pub field: FieldSpec,
    pub t_seq: Vec<f64>,
    /// Lattice shifts in grid steps.
    pub x_seq: Vec<[i64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesRun {
    pub profiles: Vec<ProfileEntry>,
    #[serde(default)]
    pub remainder: Option<FieldSpec>,
    /// Indices to audit; defaults to every index.
    #[serde(default)]
    pub n_list: Option<Vec<usize>>,
    /// Optional cross-term scan between the first two profiles.
    #[serde(default)]
    pub cross_separations: Vec<[i64; 3]>,
    /// Optional free-evolution `L^4` scan of the first profile.
    #[serde(default)]
    pub free_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionsMode {
    /// Compare `{E < gamma(c), G > 0}` with `{M E < M(Q) E(Q), |u||grad u| < |Q||grad Q|}`.
    Equivalence,
    /// Check `G(u0) >= min{gamma(c) - E(u0), E(u0)}` on data meeting both hypotheses.
    LowerBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsRun {
    pub mode: ConditionsMode,
    pub samples: usize,
    pub ground_state: GroundStateSource,
    #[serde(default)]
    pub mixture: MixtureOptions,
    /// Each draw is rescaled so that `|u||grad u|` is this multiple (log-uniform)
    /// of `|Q||grad Q|`.
    #[serde(default = "default_scale_range")]
    pub scale_range: [f64; 2],
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_scale_range() -> [f64; 2] {
    [0.3, 3.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnisoRun {
    pub field: FieldSpec,
    pub mu_list: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayRun {
    pub field: FieldSpec,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RunParams {
    SpectralCheck(SpectralCheckRun),
    Fiber(FiberRun),
    GroundState(GroundStateRun),
    Evolve(EvolveRun),
    VirialScan(VirialRun),
    ProfilesAudit(ProfilesRun),
    CheckConditions(ConditionsRun),
    AnisoScan(AnisoRun),
    DecayProbe(DecayRun),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    kind: Kind,
    seed: u64,
    output_dir: PathBuf,
    grid: GridSection,
    phys: PhysSection,
    #[serde(default)]
    run: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSection,
    pub phys: PhysSection,
    pub run: RunParams,
}

fn typed<T: serde::de::DeserializeOwned>(kind: Kind, table: toml::Table) -> Result<T, RunError> {
    table
        .try_into()
        .map_err(|e| RunError::Config(format!("[run] for kind {}: {e}", kind.name())))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, RunError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        if raw.schema_version != SCHEMA_VERSION {
            return Err(RunError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                raw.schema_version
            )));
        }
        let run = match raw.kind {
            Kind::SpectralCheck => RunParams::SpectralCheck(typed(raw.kind, raw.run)?),
            Kind::Fiber => RunParams::Fiber(typed(raw.kind, raw.run)?),
            Kind::GroundState => RunParams::GroundState(typed(raw.kind, raw.run)?),
            Kind::Evolve => RunParams::Evolve(typed(raw.kind, raw.run)?),
            Kind::VirialScan => RunParams::VirialScan(typed(raw.kind, raw.run)?),
            Kind::ProfilesAudit => RunParams::ProfilesAudit(typed(raw.kind, raw.run)?),
            Kind::CheckConditions => RunParams::CheckConditions(typed(raw.kind, raw.run)?),
            Kind::AnisoScan => RunParams::AnisoScan(typed(raw.kind, raw.run)?),
            Kind::DecayProbe => RunParams::DecayProbe(typed(raw.kind, raw.run)?),
        };
        let cfg = Self {
            kind: raw.kind,
            seed: raw.seed,
            output_dir: raw.output_dir,
            grid: raw.grid,
            phys: raw.phys,
            run,
        };
        cfg.grid.spec()?;
        cfg.phys.params()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
kind = "evolve"
seed = 3
output_dir = "runs/free"

[grid]
n = [16, 16, 16]
L = [16.0, 16.0, 16.0]

[phys]
lambda1 = 0.0
lambda2 = 0.0

[run]
dt = 0.01
t_end = 0.1
initial = { type = "gaussian", amplitude = 1.0, width = [1.0, 1.0, 1.0] }
"#;

    #[test]
    fn parses_minimal_evolve() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let RunParams::Evolve(run) = &cfg.run else {
            panic!("wrong kind")
        };
        assert_eq!(run.monitor_every, 10);
        assert_eq!(run.snapshots, SnapshotPlan::None);
        assert!(matches!(run.initial, FieldSpec::Gaussian { velocity: [0.0, 0.0, 0.0], .. }));
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let extra = MINIMAL.replace("dt = 0.01", "dt = 0.01\nbogus = 1");
        assert!(matches!(ExperimentConfig::from_toml(&extra), Err(RunError::Config(_))));
        let missing = MINIMAL.replace("t_end = 0.1\n", "");
        assert!(matches!(ExperimentConfig::from_toml(&missing), Err(RunError::Config(_))));
        let bad_grid = MINIMAL.replace("n = [16, 16, 16]", "n = [12, 16, 16]");
        assert!(matches!(ExperimentConfig::from_toml(&bad_grid), Err(RunError::Config(_))));
        let version = MINIMAL.replace("schema_version = 1", "schema_version = 9");
        assert!(matches!(ExperimentConfig::from_toml(&version), Err(RunError::Config(_))));
    }
}
