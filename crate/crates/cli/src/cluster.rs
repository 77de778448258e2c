//! `vfkm cluster`: the end-to-end pipeline. Reads and preprocesses the
//! input CSV, runs the alternating optimize/assign loop, and writes the
//! run directory (assignments, field files, energy log, manifest, optional
//! plots) atomically. Exit code 0 on convergence, 2 on an iteration-cap
//! exit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use vfkm_core::clustering::{self, AssignMode, ClusteringConfig, ConvergenceStatus};
use vfkm_core::trajectory::{parse_trajectories, preprocess, TrajectorySet};

use crate::manifest::{
    exit_code_for, sha256_hex, write_assignments, ConfigEcho, InputInfo, Manifest,
    PreprocessingEcho, TimingsEcho,
};
use crate::outdir::StagedDir;
use crate::plot::{cluster_color, render_cluster_svg};

#[derive(Clone, Copy, ValueEnum)]
pub enum AssignModeArg {
    /// Timespan-weighted assignment cost; makes the energy provably
    /// non-increasing.
    Weighted,
    /// The literal unweighted assignment expression.
    Paper,
}

impl From<AssignModeArg> for AssignMode {
    fn from(mode: AssignModeArg) -> AssignMode {
        match mode {
            AssignModeArg::Weighted => AssignMode::Weighted,
            AssignModeArg::Paper => AssignMode::PaperLiteral,
        }
    }
}

#[derive(Args)]
pub struct ClusterArgs {
    /// Input trajectory CSV with columns id,t,x,y.
    pub input: PathBuf,
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    /// Grid resolution R (vertices per axis, >= 2).
    #[arg(long)]
    pub resolution: usize,
    /// Smoothness weight, strictly inside (0, 1).
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Outer iteration cap.
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// Conjugate-gradient relative tolerance.
    #[arg(long, default_value_t = 1e-9)]
    pub cg_tol: f64,
    /// Split trajectories at gaps larger than FACTOR times the median gap.
    #[arg(long, value_name = "FACTOR")]
    pub split_gaps: Option<f64>,
    /// Thin samples to at least DT apart (applied after splitting).
    #[arg(long, value_name = "DT")]
    pub resample: Option<f64>,
    #[arg(long, value_enum, default_value_t = AssignModeArg::Weighted)]
    pub assign_mode: AssignModeArg,
    /// Pin the first initialization seed to this trajectory id.
    #[arg(long)]
    pub pin_first: Option<String>,
    /// Also render plot_<j>.svg per cluster.
    #[arg(long)]
    pub plot: bool,
    #[arg(long, default_value = "vfkm_run")]
    pub output: PathBuf,
}

/// A parsed, preprocessed input file.
pub struct LoadedInput {
    pub set: TrajectorySet,
    pub digest: String,
    pub preprocessing: PreprocessingEcho,
}

pub fn load_and_preprocess(
    path: &Path,
    split_gaps: Option<f64>,
    resample: Option<f64>,
) -> Result<LoadedInput> {
    let bytes =
        fs::read(path).with_context(|| format!("reading input {}", path.display()))?;
    let digest = sha256_hex(&bytes);
    let report = parse_trajectories(bytes.as_slice())
        .with_context(|| format!("parsing {}", path.display()))?;
    let dropped_single = report.dropped_single_sample.len();
    let (set, summary) = preprocess(report.set, split_gaps, resample)?;
    Ok(LoadedInput {
        preprocessing: PreprocessingEcho {
            split_gaps,
            resample,
            trajectories_used: set.len(),
            dropped_single_sample: dropped_single,
            dropped_short_pieces: summary.pieces_dropped,
        },
        digest,
        set,
    })
}

/// Everything `execute` needs to run the clustering and lay down a run
/// directory; shared by `cluster` and `subcluster`.
pub struct RunRequest {
    pub tool: &'static str,
    pub input_path: PathBuf,
    pub loaded: LoadedInput,
    pub config: ClusteringConfig,
    pub label_prefix: String,
    pub output: PathBuf,
    pub plot: bool,
}

pub fn label_of(prefix: &str, cluster: usize) -> String {
    if prefix.is_empty() {
        cluster.to_string()
    } else {
        format!("{prefix}.{cluster}")
    }
}

pub fn execute(req: RunRequest) -> Result<ExitCode> {
    let t0 = Instant::now();
    let state = clustering::run(&req.config, &req.loaded.set)?;
    let total_s = t0.elapsed().as_secs_f64();

    let staged = StagedDir::new(&req.output)?;
    let dir = staged.path();
    let mut outputs = Vec::new();

    let rows: Vec<(String, String)> = req
        .loaded
        .set
        .trajectories
        .iter()
        .zip(&state.assignment.labels)
        .map(|(t, &j)| (t.id().to_string(), label_of(&req.label_prefix, j)))
        .collect();
    write_assignments(&dir.join("assignments.csv"), &rows)?;
    outputs.push("assignments.csv".to_string());

    for (j, field) in state.fields.iter().enumerate() {
        let name = format!("field_{j}.vf");
        let file = fs::File::create(dir.join(&name))?;
        field.write_to(BufWriter::new(file))?;
        outputs.push(name);
    }

    {
        let mut log = BufWriter::new(fs::File::create(dir.join("energy.jsonl"))?);
        for record in &state.history {
            serde_json::to_writer(&mut log, record)?;
            log.write_all(b"\n")?;
        }
        log.flush()?;
        outputs.push("energy.jsonl".to_string());
    }

    if req.plot {
        for (j, field) in state.fields.iter().enumerate() {
            let members: Vec<_> = req
                .loaded
                .set
                .trajectories
                .iter()
                .zip(&state.assignment.labels)
                .filter(|(_, &l)| l == j)
                .map(|(t, _)| t)
                .collect();
            let svg = render_cluster_svg(field, &members, cluster_color(j));
            let name = format!("plot_{j}.svg");
            fs::write(dir.join(&name), svg)?;
            outputs.push(name);
        }
    }

    let manifest = Manifest {
        tool: req.tool.to_string(),
        config: ConfigEcho {
            k: req.config.k,
            resolution: req.config.resolution,
            lambda: req.config.lambda,
            seed: req.config.seed,
            max_iter: req.config.max_iter,
            cg_tol: req.config.cg_tol,
            assign_mode: req.config.mode,
        },
        label_prefix: req.label_prefix.clone(),
        input: InputInfo {
            path: req.input_path.display().to_string(),
            sha256: req.loaded.digest.clone(),
        },
        preprocessing: req.loaded.preprocessing.clone(),
        status: state.status,
        iterations: state.iterations(),
        final_energy: state.final_energy(),
        cluster_sizes: state.assignment.cluster_sizes(),
        timings: TimingsEcho::new(&state.timings, total_s),
        outputs: {
            let mut o = outputs.clone();
            o.push("manifest.json".to_string());
            o
        },
    };
    manifest.write(dir)?;
    staged.commit()?;

    let pp = &req.loaded.preprocessing;
    eprintln!(
        "input: {} trajectories used ({} single-sample ids dropped, {} short pieces dropped)",
        pp.trajectories_used, pp.dropped_single_sample, pp.dropped_short_pieces
    );
    let status = match state.status {
        ConvergenceStatus::AssignmentFixpoint => "converged (assignment fixpoint)",
        ConvergenceStatus::EnergyTolerance => "converged (energy tolerance)",
        ConvergenceStatus::MaxIterations => "stopped at the iteration cap",
    };
    eprintln!(
        "{status} after {} iterations; final energy {:.6e}",
        state.iterations(),
        state.final_energy()
    );
    eprintln!("cluster sizes: {:?}", state.assignment.cluster_sizes());
    eprintln!(
        "timings: fit {:.3}s, eval {:.3}s, assign {:.3}s, total {:.3}s",
        state.timings.fit.as_secs_f64(),
        state.timings.eval.as_secs_f64(),
        state.timings.assign.as_secs_f64(),
        total_s
    );
    eprintln!("outputs: {}", req.output.display());
    Ok(exit_code_for(&state))
}

pub fn run(args: ClusterArgs) -> Result<ExitCode> {
    let loaded = load_and_preprocess(&args.input, args.split_gaps, args.resample)?;
    let config = ClusteringConfig {
        k: args.k,
        resolution: args.resolution,
        lambda: args.lambda,
        max_iter: args.max_iter,
        cg_tol: args.cg_tol,
        cg_max_iter: None,
        seed: args.seed,
        mode: args.assign_mode.into(),
        pin_first: args.pin_first.clone(),
    };
    execute(RunRequest {
        tool: "vfkm cluster",
        input_path: args.input,
        loaded,
        config,
        label_prefix: String::new(),
        output: args.output,
        plot: args.plot,
    })
}
