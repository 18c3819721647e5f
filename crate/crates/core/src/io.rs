//! Binary artifacts.
//!
//! Ensemble files are little-endian:
//!
//! | offset | type | content |
//! |---|---|---|
//! | 0 | `[u8; 8]` | magic `SLENS001` |
//! | 8 | `u64` | dimension `d` |
//! | 16 | `u64` | number of paths `N` |
//! | 24 | `u64` | number of grid times `K` |
//! | 32 | `u64` | seed |
//! | 40 | `f64 × K` | time grid |
//! | 40 + 8K | `f64 × N·K·d` | states, path-major, then time, then coordinate |
//!
//! Jump logs and sampler metadata are not stored. Fields are written as a
//! flat `f64` little-endian file next to a JSON header.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::pde::GridField;
use crate::sampler::{EnsembleMeta, PathEnsemble};

pub const ENSEMBLE_MAGIC: &[u8; 8] = b"SLENS001";

pub fn encode_ensemble(ens: &PathEnsemble) -> Vec<u8> {
    let mut out = Vec::with_capacity(40 + 8 * (ens.times.len() + ens.states.len()));
    out.extend_from_slice(ENSEMBLE_MAGIC);
    for v in [ens.dim as u64, ens.n_paths() as u64, ens.n_times() as u64, ens.seed] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in ens.times.iter().chain(&ens.states) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().expect("8 bytes"))
}

fn read_f64s(b: &[u8], at: usize, n: usize) -> Vec<f64> {
    b[at..at + 8 * n]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect()
}

pub fn decode_ensemble(b: &[u8]) -> Result<PathEnsemble> {
    if b.len() < 40 || &b[..8] != ENSEMBLE_MAGIC {
        return Err(CoreError::Io("not an ensemble file".into()));
    }
    let d = read_u64(b, 8) as usize;
    let n = read_u64(b, 16) as usize;
    let k = read_u64(b, 24) as usize;
    let seed = read_u64(b, 32);
    let want = n
        .checked_mul(k)
        .and_then(|x| x.checked_mul(d))
        .and_then(|x| x.checked_add(k))
        .and_then(|x| x.checked_mul(8))
        .and_then(|x| x.checked_add(40));
    if want != Some(b.len()) {
        return Err(CoreError::Io(format!("ensemble file has {} bytes, header implies {want:?}", b.len())));
    }
    Ok(PathEnsemble {
        dim: d,
        times: read_f64s(b, 40, k),
        states: read_f64s(b, 40 + 8 * k, n * k * d),
        jumps: vec![Vec::new(); n],
        seed,
        meta: EnsembleMeta {
            scheme: "file".into(),
            delta: f64::INFINITY,
            ..Default::default()
        },
    })
}

pub fn write_ensemble(path: &Path, ens: &PathEnsemble) -> Result<()> {
    fs::write(path, encode_ensemble(ens))?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<PathEnsemble> {
    decode_ensemble(&fs::read(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldHeader {
    pub d: usize,
    pub n: usize,
    pub period: f64,
    pub times: Vec<f64>,
    pub dtype: String,
}

/// Flat little-endian bytes of the fields, one after another.
pub fn encode_fields(fields: &[GridField]) -> Vec<u8> {
    let mut out = Vec::new();
    for f in fields {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn field_header(fields: &[GridField], times: &[f64]) -> Result<FieldHeader> {
    let first = fields.first().ok_or_else(|| CoreError::InvalidInput("no fields".into()))?;
    if fields.iter().any(|f| !f.same_grid(first)) || times.len() != fields.len() {
        return Err(CoreError::InvalidInput("fields must share a grid and match the time list".into()));
    }
    Ok(FieldHeader {
        d: first.d,
        n: first.n,
        period: first.period,
        times: times.to_vec(),
        dtype: "float64-le".into(),
    })
}

pub fn decode_fields(header: &FieldHeader, b: &[u8]) -> Result<Vec<GridField>> {
    let per = header.n.pow(header.d as u32);
    if header.dtype != "float64-le" || b.len() != 8 * per * header.times.len() {
        return Err(CoreError::Io("field data does not match its header".into()));
    }
    (0..header.times.len())
        .map(|k| GridField::new(header.d, header.n, header.period, read_f64s(b, 8 * per * k, per)))
        .collect()
}

/// Writes `<stem>.json` and `<stem>.bin`; returns both paths.
pub fn write_fields(dir: &Path, stem: &str, fields: &[GridField], times: &[f64]) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let header = field_header(fields, times)?;
    let hp = dir.join(format!("{stem}.json"));
    let bp = dir.join(format!("{stem}.bin"));
    fs::write(&hp, serde_json::to_string_pretty(&header).map_err(|e| CoreError::Io(e.to_string()))?)?;
    fs::write(&bp, encode_fields(fields))?;
    Ok((hp, bp))
}

pub fn read_fields(dir: &Path, stem: &str) -> Result<(FieldHeader, Vec<GridField>)> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)
        .map_err(|e| CoreError::Io(e.to_string()))?;
    let fields = decode_fields(&header, &fs::read(dir.join(format!("{stem}.bin")))?)?;
    Ok((header, fields))
}
