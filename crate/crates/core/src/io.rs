//! Field files, content-addressed keys and CSV/JSON report writers.
//!
//! Field file layout, all integers and floats little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `WLFFIELD` |
//! | 4     | format version (u32, currently 1) |
//! | 4     | dimension n (u32) |
//! | 8     | nodes per axis nx (u64) |
//! | 8     | time steps nt (u64) |
//! | 8     | domain radius (f64) |
//! | 8     | horizon T (f64) |
//! | 32    | SHA-256 of the canonical JSON of the problem parameters |
//! | 8     | value count (u64) = nx^n·(nt+1) |
//! | 8·count | nodal values (f64), time-major |

use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::km_iteration::IterationSummary;
use crate::suite::SuiteReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

pub const FIELD_MAGIC: &[u8; 8] = b"WLFFIELD";
pub const FIELD_VERSION: u32 = 1;

/// JSON text with object keys sorted, suitable for hashing.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap.
    Ok(serde_json::to_string(&serde_json::to_value(value)?)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the canonical JSON of `value`.
pub fn content_key<T: Serialize>(value: &T) -> Result<String> {
    Ok(sha256_hex(canonical_json(value)?.as_bytes()))
}

fn value_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// SHA-256 of the little-endian value bytes.
pub fn field_checksum(u: &GridField) -> String {
    sha256_hex(&value_bytes(u.values()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub version: u32,
    pub grid: GridSpec,
    pub params_hash: String,
}

pub fn write_field(w: &mut impl Write, u: &GridField, params_hash: &[u8; 32]) -> Result<()> {
    let g = u.grid();
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&(g.n as u32).to_le_bytes())?;
    w.write_all(&(g.nx as u64).to_le_bytes())?;
    w.write_all(&(g.nt as u64).to_le_bytes())?;
    w.write_all(&g.radius.to_le_bytes())?;
    w.write_all(&g.horizon.to_le_bytes())?;
    w.write_all(params_hash)?;
    w.write_all(&(u.values().len() as u64).to_le_bytes())?;
    w.write_all(&value_bytes(u.values()))?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    Ok(b)
}

pub fn read_field(r: &mut impl Read) -> Result<(FieldHeader, GridField)> {
    if &take::<8>(r)? != FIELD_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(r)?);
    if version != FIELD_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let n = u32::from_le_bytes(take(r)?) as usize;
    let nx = u64::from_le_bytes(take(r)?) as usize;
    let nt = u64::from_le_bytes(take(r)?) as usize;
    let radius = f64::from_le_bytes(take(r)?);
    let horizon = f64::from_le_bytes(take(r)?);
    let hash: [u8; 32] = take(r)?;
    let count = u64::from_le_bytes(take(r)?) as usize;
    let grid = GridSpec::new(n, nx, nt, radius, horizon).map_err(|e| Error::Format(e.to_string()))?;
    let expected = grid.node_count() * (nt + 1);
    if count != expected {
        return Err(Error::Format(format!("value count {count}, grid needs {expected}")));
    }
    let mut raw = vec![0u8; 8 * count];
    r.read_exact(&mut raw)
        .map_err(|e| Error::Format(format!("truncated values: {e}")))?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", rest.len())));
    }
    let values = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunks of 8")))
        .collect();
    let field = GridField::new(grid, values).map_err(|e| Error::Format(e.to_string()))?;
    Ok((
        FieldHeader {
            version,
            grid,
            params_hash: hex::encode(hash),
        },
        field,
    ))
}

pub fn save_field(path: &Path, u: &GridField, params_hash: &[u8; 32]) -> Result<()> {
    let mut buf = Vec::new();
    write_field(&mut buf, u, params_hash)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_field(path: &Path) -> Result<(FieldHeader, GridField)> {
    let bytes = std::fs::read(path)?;
    read_field(&mut bytes.as_slice())
}

/// Raw SHA-256 of the canonical JSON of the parameters.
pub fn params_hash<T: Serialize>(params: &T) -> Result<[u8; 32]> {
    Ok(Sha256::digest(canonical_json(params)?.as_bytes()).into())
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

/// Shortest round-trip text of a float.
fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Serde name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// One row per iteration level.
pub fn iteration_csv(s: &IterationSummary) -> Result<String> {
    let rows = s.state.records.iter().map(|r| {
        vec![
            r.j.to_string(),
            num(r.rho),
            num(r.level),
            num(r.delta),
            num(r.a_value),
            label(&r.branch),
            opt_num(r.gamma),
            r.slot_count.to_string(),
            r.slots_evaluated.to_string(),
            r.cover_ok.to_string(),
        ]
    });
    csv_string(
        &["j", "rho", "level", "delta", "a_value", "branch", "gamma", "slots", "slots_evaluated", "cover_ok"],
        rows,
    )
}

/// One row per (field, sample, estimate, radius).
pub fn estimates_csv(rep: &SuiteReport) -> Result<String> {
    let mut rows = Vec::new();
    for f in &rep.fields {
        for s in &f.samples {
            for e in [&s.theorem_i, &s.theorem_ii] {
                for r in &e.radii {
                    let mut row = vec![
                        f.case.label(),
                        f.level.to_string(),
                        f.grid.nx.to_string(),
                        f.grid.nt.to_string(),
                        s.id.to_string(),
                        s.point.x.coords().iter().map(|c| num(*c)).collect::<Vec<_>>().join(" "),
                        num(s.point.t),
                        e.kind.label().to_string(),
                        num(r.radius),
                        num(e.lhs),
                    ];
                    row.extend(r.terms.iter().map(|t| num(t.value)));
                    row.extend([num(r.gamma_emp), num(r.gamma_without_r2), opt_num(r.gamma_windowed)]);
                    rows.push(row);
                }
            }
        }
    }
    csv_string(
        &[
            "case", "level", "nx", "nt", "sample", "x0", "t0", "kind", "radius", "lhs", "radius_sq", "middle", "wolff_2r",
            "gamma_emp", "gamma_without_r2", "gamma_windowed",
        ],
        rows,
    )
}

/// One row per (field, sample) iteration run.
pub fn iterations_csv(rep: &SuiteReport) -> Result<String> {
    let mut rows = Vec::new();
    for f in &rep.fields {
        for s in &f.samples {
            let base = vec![f.case.label(), f.level.to_string(), s.id.to_string()];
            let row = match &s.iteration {
                Ok(o) => {
                    let mut r = base;
                    r.extend([
                        num(o.r0),
                        num(o.b),
                        o.levels.to_string(),
                        label(&o.stop_reason),
                        num(o.delta0),
                        num(o.l_limit),
                        num(o.tail_bound),
                        num(o.max_lemma_gamma),
                        num(o.gamma_emp),
                        num(o.u_at_point),
                        o.consistent.to_string(),
                        o.invariants.all().to_string(),
                        String::new(),
                    ]);
                    r
                }
                Err(e) => {
                    let mut r = base;
                    r.extend(std::iter::repeat(String::new()).take(12));
                    r.push(e.clone());
                    r
                }
            };
            rows.push(row);
        }
    }
    csv_string(
        &[
            "case", "level", "sample", "r0", "b", "levels", "stop", "delta0", "l_limit", "tail", "max_lemma_gamma",
            "gamma_emp", "u_at_point", "consistent", "invariants_ok", "error",
        ],
        rows,
    )
}

/// One row per field: global bounds and per-field maxima.
pub fn fields_csv(rep: &SuiteReport) -> Result<String> {
    let rows = rep.fields.iter().map(|f| {
        let audit = f.audits.iter().map(|a| a.gamma_emp).fold(0.0, f64::max);
        vec![
            f.case.label(),
            f.level.to_string(),
            f.grid.nx.to_string(),
            f.grid.nt.to_string(),
            label(&f.proposition.regime),
            num(f.proposition.threshold),
            num(f.proposition.sigma),
            num(f.proposition.estimate.gamma_emp),
            num(f.proposition.mass.gamma_emp),
            f.corollary_bounded.to_string(),
            num(f.max_gamma_i()),
            num(f.max_gamma_ii()),
            num(f.max_lemma_gamma()),
            num(audit),
        ]
    });
    csv_string(
        &[
            "case", "level", "nx", "nt", "regime", "threshold", "sigma", "prop_gamma", "mass_ratio", "corollary_bounded",
            "max_gamma_i", "max_gamma_ii", "max_lemma_gamma", "max_energy_gamma",
        ],
        rows,
    )
}

/// One row per asserted bound.
pub fn checks_csv(rep: &SuiteReport) -> Result<String> {
    csv_string(
        &["check", "subject", "value", "bound", "passed"],
        rep.checks()
            .into_iter()
            .map(|c| vec![c.check, c.subject, num(c.value), num(c.bound), c.passed.to_string()]),
    )
}

/// The suite's CSV tables and JSON summary, keyed by file name.
pub fn suite_artifacts(rep: &SuiteReport) -> Result<Vec<(String, String)>> {
    Ok(vec![
        ("estimates.csv".into(), estimates_csv(rep)?),
        ("iterations.csv".into(), iterations_csv(rep)?),
        ("fields.csv".into(), fields_csv(rep)?),
        ("checks.csv".into(), checks_csv(rep)?),
        ("summary.json".into(), serde_json::to_string_pretty(&rep)? + "\n"),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip() {
        let g = GridSpec::new(2, 5, 3, 1.0, 0.5).unwrap();
        let u = GridField::from_fn(g, |x, t| x.coord(0) * t + 0.25).unwrap();
        let hash = params_hash(&("x", 1)).unwrap();
        let mut buf = Vec::new();
        write_field(&mut buf, &u, &hash).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 4 + 8 + 8 + 8 + 8 + 32 + 8 + 8 * 25 * 4);
        let (h, v) = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(v, u);
        assert_eq!(h.grid, g);
        assert_eq!(h.params_hash, hex::encode(hash));
        assert_eq!(field_checksum(&v), field_checksum(&u));
        buf.push(0);
        assert!(matches!(read_field(&mut buf.as_slice()), Err(Error::Format(_))));
        buf.truncate(40);
        assert!(matches!(read_field(&mut buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn canonical_json_sorts_keys() {
        #[derive(Serialize)]
        struct A {
            z: u8,
            a: u8,
        }
        assert_eq!(canonical_json(&A { z: 1, a: 2 }).unwrap(), r#"{"a":2,"z":1}"#);
        assert_eq!(content_key(&A { z: 1, a: 2 }).unwrap().len(), 64);
    }
}
