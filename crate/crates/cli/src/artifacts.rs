//! Artifact files and the per-stage manifest.
//!
//! Every stage emits its results through this module so the bytes are
//! reproducible: JSON comes from serde with struct field order, CSV uses
//! shortest-roundtrip float formatting, and the manifest stamps the
//! config, the consumed inputs, and the produced outputs with SHA-256
//! digests. Wall-clock timings are recorded for operators but take no
//! part in artifact identity.

use crate::error::{CliError, Result};
use nalgebra::DVector;
use reachsched::error_model::SafetyEnvelope;
use reachsched::planner::ReferenceTrajectory;
use reachsched::runtime::ExecutionTrace;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(2 * digest.len());
    for byte in digest {
        write!(out, "{byte:02x}").expect("writing to a string cannot fail");
    }
    out
}

/// Name and content digest of one file involved in a stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileStamp {
    pub name: String,
    pub sha256: String,
}

/// Machine-readable record of one stage execution. Re-running a stage
/// with identical inputs reproduces every digest in here; only
/// `timings_ms` varies between runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub scenario: String,
    pub mode: String,
    pub config: FileStamp,
    pub seed_override: Option<u64>,
    pub mode_override: Option<String>,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub seeds: BTreeMap<String, u64>,
    pub timings_ms: BTreeMap<String, f64>,
}

/// Wall-clock bookkeeping for the manifest.
#[derive(Debug, Default)]
pub struct Timings {
    map: BTreeMap<String, f64>,
}

impl Timings {
    pub fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.map
            .insert(name.to_string(), start.elapsed().as_secs_f64() * 1.0e3);
        out
    }

    pub fn into_map(self) -> BTreeMap<String, f64> {
        self.map
    }
}

pub fn write_artifact(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileStamp> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| CliError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    fs::write(&path, bytes).map_err(|source| CliError::Io { path, source })?;
    Ok(FileStamp {
        name: name.to_string(),
        sha256: sha256_hex(bytes),
    })
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<FileStamp> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| CliError::Json {
        path: dir.join(name),
        source,
    })?;
    bytes.push(b'\n');
    write_artifact(dir, name, &bytes)
}

/// Reads an upstream artifact; a missing file becomes the stage-order
/// error naming the stage that produces it.
pub fn read_upstream(dir: &Path, name: &str, produced_by: &'static str) -> Result<(Vec<u8>, FileStamp)> {
    let path = dir.join(name);
    match fs::read(&path) {
        Ok(bytes) => {
            let stamp = FileStamp {
                name: name.to_string(),
                sha256: sha256_hex(&bytes),
            };
            Ok((bytes, stamp))
        }
        Err(source) if source.kind() == std::io::ErrorKind::NotFound => Err(CliError::StageOrder {
            artifact: name.to_string(),
            dir: dir.to_path_buf(),
            stage: produced_by,
        }),
        Err(source) => Err(CliError::Io { path, source }),
    }
}

pub fn read_upstream_json<T: DeserializeOwned>(
    dir: &Path,
    name: &str,
    produced_by: &'static str,
) -> Result<(T, FileStamp)> {
    let (bytes, stamp) = read_upstream(dir, name, produced_by)?;
    let value = serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: dir.join(name),
        source,
    })?;
    Ok((value, stamp))
}

/// Machine-readable form of a planned reference; the CSV twin exists for
/// plotting only and is never read back.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReferenceArtifact {
    pub scenario: String,
    pub seed: u64,
    pub margin: f64,
    pub horizon: usize,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl ReferenceArtifact {
    pub fn from_reference(scenario: &str, reference: &ReferenceTrajectory) -> Self {
        ReferenceArtifact {
            scenario: scenario.to_string(),
            seed: reference.seed,
            margin: reference.margin,
            horizon: reference.horizon(),
            states: reference.states.iter().map(|x| x.iter().copied().collect()).collect(),
            controls: reference
                .controls
                .iter()
                .map(|u| u.iter().copied().collect())
                .collect(),
        }
    }

    pub fn into_reference(self, source: PathBuf) -> Result<ReferenceTrajectory> {
        let consistent = self.states.len() == self.controls.len() + 1
            && self.horizon == self.controls.len()
            && self.states.windows(2).all(|w| w[0].len() == w[1].len())
            && self.controls.windows(2).all(|w| w[0].len() == w[1].len());
        if !consistent {
            return Err(CliError::Config(format!(
                "{}: reference artifact is internally inconsistent; re-run the plan stage",
                source.display()
            )));
        }
        Ok(ReferenceTrajectory {
            states: self.states.iter().map(|x| DVector::from_row_slice(x)).collect(),
            controls: self.controls.iter().map(|u| DVector::from_row_slice(u)).collect(),
            margin: self.margin,
            seed: self.seed,
        })
    }
}

fn push_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// Assembles a small comparison table.
pub fn push_csv_rows(header: &str, rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        push_row(&mut out, &row);
    }
    out
}

pub fn reference_csv(reference: &ReferenceTrajectory) -> String {
    let n = reference.states[0].len();
    let m = reference.controls.first().map_or(0, |u| u.len());
    let mut out = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend((0..m).map(|d| format!("u{d}")));
    push_row(&mut out, &header);
    for (k, x) in reference.states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        if let Some(u) = reference.controls.get(k) {
            row.extend(u.iter().map(|v| v.to_string()));
        } else {
            row.extend(std::iter::repeat(String::new()).take(m));
        }
        push_row(&mut out, &row);
    }
    out
}

pub fn envelope_csv(env: &SafetyEnvelope) -> String {
    let mut out = String::from("k,v_max\n");
    for (k, v) in env.v_max.iter().enumerate() {
        push_row(&mut out, &[k.to_string(), v.to_string()]);
    }
    out
}

pub fn schedule_csv(bits: &[bool]) -> String {
    let mut out = String::from("k,c\n");
    for (k, &c) in bits.iter().enumerate() {
        push_row(&mut out, &[k.to_string(), usize::from(c).to_string()]);
    }
    out
}

/// One row per stage: state, applied control, communication bit, realized
/// certificate value, and the certified bound. The final row carries the
/// terminal state only.
pub fn trace_csv(trace: &ExecutionTrace, bounds: &[f64]) -> String {
    let n = trace.states[0].len();
    let m = trace.controls.first().map_or(0, |u| u.len());
    let mut out = String::new();
    let mut header = vec!["k".to_string()];
    header.extend((0..n).map(|d| format!("x{d}")));
    header.extend((0..m).map(|d| format!("u{d}")));
    header.push("c".to_string());
    header.push("v".to_string());
    header.push("v_bar".to_string());
    push_row(&mut out, &header);
    for (k, x) in trace.states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        if let Some(u) = trace.controls.get(k) {
            row.extend(u.iter().map(|v| v.to_string()));
            row.push(usize::from(trace.comm[k]).to_string());
        } else {
            row.extend(std::iter::repeat(String::new()).take(m + 1));
        }
        row.push(trace.errors[k].to_string());
        row.push(bounds[k].to_string());
        push_row(&mut out, &row);
    }
    out
}
