//! `vfkm` — vector-field k-means trajectory clustering.
//!
//! Subcommands: `synthetic` (two-circles test data), `cluster` (run the
//! algorithm), `subcluster` (re-cluster one cluster of a prior run), and
//! `plot` (SVG rendering of a run's clusters and fields).

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cluster;
mod manifest;
mod outdir;
mod plot;
mod subcluster;
mod synthetic;

#[derive(Parser)]
#[command(name = "vfkm", version, about = "Vector-field k-means trajectory clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic two-circles trajectory CSV with ground-truth labels.
    Synthetic(synthetic::SyntheticArgs),
    /// Cluster a trajectory CSV into k vector fields.
    Cluster(cluster::ClusterArgs),
    /// Re-cluster the trajectories of one cluster from a previous run.
    Subcluster(subcluster::SubclusterArgs),
    /// Render one SVG per cluster of a previous run.
    Plot(plot::PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthetic(args) => synthetic::run(args),
        Command::Cluster(args) => cluster::run(args),
        Command::Subcluster(args) => subcluster::run(args),
        Command::Plot(args) => plot::run(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
