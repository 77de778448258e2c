//! The run manifest: a self-describing record of what produced a run
//! directory — config echo, input digest, preprocessing, outcome, phase
//! timings, and the output file list.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vfkm_core::clustering::{AssignMode, ConvergenceStatus, PhaseTimings, RunState};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub config: ConfigEcho,
    /// Hierarchical label prefix: empty for a top-level run, the parent
    /// label path (e.g. "2" or "2.3") for subcluster runs.
    pub label_prefix: String,
    pub input: InputInfo,
    pub preprocessing: PreprocessingEcho,
    pub status: ConvergenceStatus,
    pub iterations: usize,
    pub final_energy: f64,
    pub cluster_sizes: Vec<usize>,
    pub timings: TimingsEcho,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub k: usize,
    pub resolution: usize,
    pub lambda: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub cg_tol: f64,
    pub assign_mode: AssignMode,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreprocessingEcho {
    /// Gap-split factor, when splitting was requested.
    pub split_gaps: Option<f64>,
    /// Minimum resampling interval, when resampling was requested.
    pub resample: Option<f64>,
    pub trajectories_used: usize,
    pub dropped_single_sample: usize,
    pub dropped_short_pieces: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TimingsEcho {
    pub fit_s: f64,
    pub eval_s: f64,
    pub assign_s: f64,
    pub total_s: f64,
}

impl TimingsEcho {
    pub fn new(timings: &PhaseTimings, total_s: f64) -> TimingsEcho {
        TimingsEcho {
            fit_s: timings.fit.as_secs_f64(),
            eval_s: timings.eval.as_secs_f64(),
            assign_s: timings.assign.as_secs_f64(),
            total_s,
        }
    }
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Result<Manifest> {
        let path = run_dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes `assignments.csv`: one `id,cluster` row per trajectory, in set
/// order. Cluster labels are plain indices for top-level runs and label
/// paths like `2.3` for subcluster runs.
pub fn write_assignments(path: &Path, rows: &[(String, String)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["id", "cluster"])?;
    for (id, label) in rows {
        w.write_record([id, label])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        match (record.get(0), record.get(1)) {
            (Some(id), Some(label)) => rows.push((id.to_string(), label.to_string())),
            _ => bail!("malformed assignments row in {}", path.display()),
        }
    }
    Ok(rows)
}

/// Status string for exit-code decisions and summaries.
pub fn exit_code_for(state: &RunState) -> std::process::ExitCode {
    match state.status {
        ConvergenceStatus::MaxIterations => std::process::ExitCode::from(2),
        _ => std::process::ExitCode::SUCCESS,
    }
}
