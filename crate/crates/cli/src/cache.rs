//! Content-addressed store of solved fields.
//!
//! A field lives at `<dir>/<key>.field` with a JSON sidecar `<dir>/<key>.json`.
//! The key is the SHA-256 of the canonical JSON of everything the solve
//! depends on; the sidecar records the checksum of the stored values, and an
//! entry whose checksum does not match is solved again.

use crate::config::Problem;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use wolfflab_core::io::{content_key, field_checksum, load_field, params_hash, save_field, FIELD_VERSION};
use wolfflab_core::solver::SolveDiagnostics;
use wolfflab_core::{solve_ibvp_with, GridField, GridSpec, ProblemParams, RadonMeasure, SolverOptions};

#[derive(Serialize)]
struct KeyInput<'a> {
    format_version: u32,
    params: &'a ProblemParams,
    measure: &'a RadonMeasure,
    grid: &'a GridSpec,
    solver: &'a SolverOptions,
}

/// Description written next to every stored field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub key: String,
    pub grid: GridSpec,
    pub params: ProblemParams,
    pub measure: RadonMeasure,
    pub solver: SolverOptions,
    /// SHA-256 of the little-endian values.
    pub checksum: String,
    pub params_hash: String,
    pub diagnostics: SolveDiagnostics,
}

pub struct FieldCache {
    dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
    /// An entry existed but failed its checksum.
    Replaced,
}

pub fn cache_key(pb: &Problem) -> Result<String> {
    Ok(content_key(&KeyInput {
        format_version: FIELD_VERSION,
        params: &pb.params,
        measure: &pb.measure,
        grid: &pb.grid,
        solver: &pb.solver,
    })?)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

impl FieldCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn field_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.field"))
    }

    pub fn sidecar_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn lookup(&self, key: &str, pb: &Problem) -> Option<(GridField, Sidecar)> {
        let text = fs::read_to_string(self.sidecar_path(key)).ok()?;
        let side: Sidecar = serde_json::from_str(&text).ok()?;
        let (header, field) = load_field(&self.field_path(key)).ok()?;
        let fresh = side.key == key
            && header.grid == pb.grid
            && side.grid == pb.grid
            && header.params_hash == side.params_hash
            && field_checksum(&field) == side.checksum;
        fresh.then_some((field, side))
    }

    /// The stored field for `pb`, solving and storing it when absent or stale.
    pub fn get_or_solve(&self, pb: &Problem) -> Result<(GridField, Sidecar, CacheOutcome)> {
        let key = cache_key(pb)?;
        let existed = self.field_path(&key).exists() || self.sidecar_path(&key).exists();
        if let Some((field, side)) = self.lookup(&key, pb) {
            return Ok((field, side, CacheOutcome::Hit));
        }
        let sol = solve_ibvp_with(&pb.measure, &pb.params, &pb.grid, &pb.solver)?;
        let hash = params_hash(&pb.params)?;
        let side = Sidecar {
            key: key.clone(),
            grid: pb.grid,
            params: pb.params,
            measure: pb.measure.clone(),
            solver: pb.solver.clone(),
            checksum: field_checksum(&sol.field),
            params_hash: content_key(&pb.params)?,
            diagnostics: sol.diagnostics,
        };
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let tmp = self.field_path(&key).with_extension("field.tmp");
        save_field(&tmp, &sol.field, &hash)?;
        fs::rename(&tmp, self.field_path(&key))?;
        write_atomic(&self.sidecar_path(&key), (serde_json::to_string_pretty(&side)? + "\n").as_bytes())?;
        let outcome = if existed { CacheOutcome::Replaced } else { CacheOutcome::Miss };
        Ok((sol.field, side, outcome))
    }
}
