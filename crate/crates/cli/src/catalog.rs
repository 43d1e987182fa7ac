//! Ground-state catalog: one directory per `(lambda1, lambda2)` holding the
//! `Q` snapshot and a JSON record.
//!
//! ```text
//! <root>/l1_<q1>_l2_<q2>/record.json    record, including the sha256 of q.snap
//! <root>/l1_<q1>_l2_<q2>/record.sha256  sha256 of record.json
//! <root>/l1_<q1>_l2_<q2>/q.snap         Q as a field snapshot
//! ```
//!
//! `q1`, `q2` are the couplings in units of `1e-12`. Entries are written to a
//! temporary directory and moved into place with a rename; an existing entry is
//! replaced only by one with a smaller Weinstein minimum.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dgpe_core::ground_state::{gamma_from_norms, GroundStateRecord, Residuals};
use dgpe_core::io::{read_snapshot, write_snapshot};
use dgpe_core::{ComplexField, GridSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::SCHEMA_VERSION;
use crate::error::{Context, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub schema_version: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub m: f64,
    pub gamma1: f64,
    pub q_mass: f64,
    pub q_kinetic: f64,
    pub residuals: Residuals,
    pub grid: GridSpec,
    pub seed: u64,
    pub iterations: usize,
    pub q_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogHit {
    pub record: CatalogRecord,
    pub c: f64,
    pub gamma: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn quantize(lambda: f64) -> i64 {
    (lambda * 1e12).round() as i64
}

pub fn entry_name(lambda1: f64, lambda2: f64) -> String {
    format!("l1_{}_l2_{}", quantize(lambda1), quantize(lambda2))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Output(format!("{}: {e}", path.display()))
}

fn corrupt(path: &Path, reason: impl Into<String>) -> RunError {
    RunError::CorruptRecord {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub struct Catalog {
    root: PathBuf,
}

impl Catalog {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry(&self, lambda1: f64, lambda2: f64) -> PathBuf {
        self.root.join(entry_name(lambda1, lambda2))
    }

    /// Record for `(lambda1, lambda2)`, verified against its checksum, or `None`.
    pub fn record(&self, lambda1: f64, lambda2: f64) -> Result<Option<CatalogRecord>, RunError> {
        let dir = self.entry(lambda1, lambda2);
        if !dir.exists() {
            return Ok(None);
        }
        let path = dir.join("record.json");
        let bytes = fs::read(&path).map_err(|e| corrupt(&path, e.to_string()))?;
        let sum = fs::read_to_string(dir.join("record.sha256")).map_err(|e| corrupt(&path, e.to_string()))?;
        if sum.trim() != sha256_hex(&bytes) {
            return Err(corrupt(&path, "checksum mismatch"));
        }
        let rec: CatalogRecord = serde_json::from_slice(&bytes).map_err(|e| corrupt(&path, e.to_string()))?;
        Ok(Some(rec))
    }

    /// `gamma(c)` from the stored norms of `Q`, or `None` when the pair has not been computed.
    pub fn query(&self, lambda1: f64, lambda2: f64, c: f64) -> Result<Option<CatalogHit>, RunError> {
        let Some(record) = self.record(lambda1, lambda2)? else {
            return Ok(None);
        };
        let gamma = gamma_from_norms(record.q_mass, record.q_kinetic, c).context("gamma(c)")?;
        Ok(Some(CatalogHit { record, c, gamma }))
    }

    /// Stored `Q`, verified against the record.
    pub fn load_q(&self, record: &CatalogRecord) -> Result<ComplexField, RunError> {
        let path = self.entry(record.lambda1, record.lambda2).join("q.snap");
        let bytes = fs::read(&path).map_err(|e| corrupt(&path, e.to_string()))?;
        if sha256_hex(&bytes) != record.q_sha256 {
            return Err(corrupt(&path, "checksum mismatch"));
        }
        let (q, _) = read_snapshot(&bytes[..]).map_err(|e| corrupt(&path, e.to_string()))?;
        Ok(q)
    }

    /// Stores `rec` unless an entry with a smaller or equal minimum exists.
    /// Returns the record now in the catalog.
    pub fn insert(&self, rec: &GroundStateRecord, seed: u64, iterations: usize) -> Result<CatalogRecord, RunError> {
        fs::create_dir_all(&self.root).map_err(|e| io_err(&self.root, e))?;
        let mut snap = Vec::new();
        write_snapshot(&mut snap, &rec.q, 0.0).context("encoding Q")?;
        let record = CatalogRecord {
            schema_version: SCHEMA_VERSION,
            lambda1: rec.params.lambda1,
            lambda2: rec.params.lambda2,
            m: rec.m,
            gamma1: rec.gamma_of_unit_mass,
            q_mass: rec.q_mass,
            q_kinetic: rec.q_kinetic,
            residuals: rec.residuals,
            grid: *rec.q.grid().spec(),
            seed,
            iterations,
            q_sha256: sha256_hex(&snap),
        };
        if let Some(old) = self.record(record.lambda1, record.lambda2)? {
            if old.m <= record.m {
                return Ok(old);
            }
        }
        let json = serde_json::to_vec_pretty(&record).map_err(|e| RunError::Output(e.to_string()))?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
        let name = entry_name(record.lambda1, record.lambda2);
        let tmp = self.root.join(format!(".tmp-{name}-{}-{stamp}", std::process::id()));
        fs::create_dir(&tmp).map_err(|e| io_err(&tmp, e))?;
        let write = |file: &str, data: &[u8]| fs::write(tmp.join(file), data).map_err(|e| io_err(&tmp, e));
        write("q.snap", &snap)?;
        write("record.json", &json)?;
        write("record.sha256", format!("{}\n", sha256_hex(&json)).as_bytes())?;
        let target = self.entry(record.lambda1, record.lambda2);
        if target.exists() {
            let old = self.root.join(format!(".old-{name}-{}-{stamp}", std::process::id()));
            fs::rename(&target, &old).map_err(|e| io_err(&target, e))?;
            fs::rename(&tmp, &target).map_err(|e| io_err(&target, e))?;
            fs::remove_dir_all(&old).map_err(|e| io_err(&old, e))?;
        } else if let Err(e) = fs::rename(&tmp, &target) {
            // another writer got there first
            let _ = fs::remove_dir_all(&tmp);
            if !target.exists() {
                return Err(io_err(&target, e));
            }
        }
        Ok(record)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dgpe_core::ground_state::build_q;
    use dgpe_core::{Grid, PhysParams};

    fn fake_record(scale: f64) -> GroundStateRecord {
        let g = Grid::new(GridSpec::cubic(32, 8.0 * 6f64.sqrt()).unwrap());
        let v = ComplexField::from_real_fn(&g, |x| (-x.iter().map(|c| c * c).sum::<f64>() / 2.0).exp());
        let v = dgpe_core::ground_state::normalize_unit(&v).unwrap();
        let p = PhysParams::new(-1.0, 0.0).unwrap();
        build_q(&v, 25.0 * scale, &p).unwrap()
    }

    #[test]
    fn empty_catalog_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(dir.path());
        assert!(cat.query(-1.0, 0.0, 1.0).unwrap().is_none());
    }

    #[test]
    fn hit_scales_with_mass() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(dir.path());
        let rec = fake_record(1.0);
        cat.insert(&rec, 1, 10).unwrap();
        let one = cat.query(-1.0, 0.0, 1.0).unwrap().unwrap();
        let two = cat.query(-1.0, 0.0, 2.0).unwrap().unwrap();
        assert!((two.gamma / one.gamma - 0.5).abs() < 1e-15);
        assert!((one.gamma - rec.gamma_of_unit_mass).abs() <= 1e-15 * one.gamma);
        let q = cat.load_q(&one.record).unwrap();
        assert_eq!(q.values(), rec.q.values());
    }

    #[test]
    fn keeps_smallest_minimum() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(dir.path());
        cat.insert(&fake_record(1.0), 1, 10).unwrap();
        let kept = cat.insert(&fake_record(1.1), 2, 10).unwrap();
        assert_eq!(kept.seed, 1);
        let replaced = cat.insert(&fake_record(0.9), 3, 10).unwrap();
        assert_eq!(replaced.seed, 3);
        assert_eq!(cat.record(-1.0, 0.0).unwrap().unwrap().seed, 3);
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cat = Catalog::new(dir.path());
        cat.insert(&fake_record(1.0), 1, 10).unwrap();
        let path = dir.path().join(entry_name(-1.0, 0.0)).join("record.json");
        let text = fs::read_to_string(&path).unwrap().replace("\"seed\": 1", "\"seed\": 2");
        fs::write(&path, text).unwrap();
        assert!(matches!(cat.query(-1.0, 0.0, 1.0), Err(RunError::CorruptRecord { .. })));
    }

    #[test]
    fn quantized_keys() {
        assert_eq!(entry_name(-1.0, 0.0), "l1_-1000000000000_l2_0");
        assert_eq!(entry_name(0.3, 1e-13), "l1_300000000000_l2_0");
    }
}
