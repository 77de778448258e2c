//! `vfkm subcluster`: re-cluster the trajectories of one cluster from a
//! previous run, on a fresh grid over their own bounding box. Assignments
//! get hierarchical labels (`2.3` = subcluster 3 of cluster 2), so nested
//! runs form a dendrogram over the original dataset.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use vfkm_core::clustering::ClusteringConfig;
use vfkm_core::trajectory::TrajectorySet;

use crate::cluster::{execute, label_of, load_and_preprocess, AssignModeArg, RunRequest};
use crate::manifest::{read_assignments, Manifest};

#[derive(Args)]
pub struct SubclusterArgs {
    /// Run directory produced by `vfkm cluster` or `vfkm subcluster`.
    pub run_dir: PathBuf,
    /// Which cluster of that run to re-cluster (local index, 0-based).
    #[arg(long)]
    pub cluster: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-9)]
    pub cg_tol: f64,
    #[arg(long, value_enum, default_value_t = AssignModeArg::Weighted)]
    pub assign_mode: AssignModeArg,
    #[arg(long)]
    pub pin_first: Option<String>,
    #[arg(long)]
    pub plot: bool,
    /// Output directory; defaults to `<run-dir>/sub_<cluster>`.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run(args: SubclusterArgs) -> Result<ExitCode> {
    let manifest = Manifest::load(&args.run_dir)
        .with_context(|| format!("{} is not a vfkm run directory", args.run_dir.display()))?;
    if args.cluster >= manifest.config.k {
        bail!(
            "cluster {} out of range: the run has k = {}",
            args.cluster,
            manifest.config.k
        );
    }

    // rebuild the exact trajectory set the prior run clustered
    let loaded = load_and_preprocess(
        manifest.input.path.as_ref(),
        manifest.preprocessing.split_gaps,
        manifest.preprocessing.resample,
    )?;
    if loaded.digest != manifest.input.sha256 {
        bail!(
            "input file {} changed since the run (digest mismatch)",
            manifest.input.path
        );
    }

    let target = label_of(&manifest.label_prefix, args.cluster);
    let assignments = read_assignments(&args.run_dir.join("assignments.csv"))?;
    let member_ids: std::collections::HashSet<&str> = assignments
        .iter()
        .filter(|(_, label)| *label == target)
        .map(|(id, _)| id.as_str())
        .collect();
    if member_ids.is_empty() {
        bail!("cluster {} (label `{target}`) is empty", args.cluster);
    }

    let members: Vec<_> = loaded
        .set
        .trajectories
        .iter()
        .filter(|t| member_ids.contains(t.id()))
        .cloned()
        .collect();
    let mut loaded = loaded;
    loaded.preprocessing.trajectories_used = members.len();
    loaded.set = TrajectorySet::new(members)?;

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
    let output = args
        .output
        .unwrap_or_else(|| args.run_dir.join(format!("sub_{}", args.cluster)));
    execute(RunRequest {
        tool: "vfkm subcluster",
        input_path: manifest.input.path.into(),
        loaded,
        config,
        label_prefix: target,
        output,
        plot: args.plot,
    })
}
