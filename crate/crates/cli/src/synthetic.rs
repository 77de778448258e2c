//! `vfkm synthetic`: emit the two-circles dataset as CSV. The generator
//! parameters and seed are recorded as `#` header comments so the file is
//! self-describing; the `label` column carries the ground-truth pattern and
//! is ignored by the clustering commands.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use vfkm_core::synth::{two_circles, TwoCirclesSpec};

#[derive(Args)]
pub struct SyntheticArgs {
    /// Trajectories per pattern (two patterns total).
    #[arg(long, default_value_t = 1000)]
    pub per_pattern: usize,
    /// Minimum arc extent, degrees.
    #[arg(long, default_value_t = 60.0)]
    pub arc_min: f64,
    /// Maximum arc extent, degrees.
    #[arg(long, default_value_t = 300.0)]
    pub arc_max: f64,
    /// Minimum orbit radius, domain units.
    #[arg(long, default_value_t = 0.2)]
    pub radius_min: f64,
    /// Maximum orbit radius, domain units.
    #[arg(long, default_value_t = 0.45)]
    pub radius_max: f64,
    /// Uniform positional noise amplitude.
    #[arg(long, default_value_t = 0.005)]
    pub noise: f64,
    /// Sampling interval, time units.
    #[arg(long, default_value_t = 0.2)]
    pub sample_dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SyntheticArgs) -> Result<ExitCode> {
    let spec = TwoCirclesSpec {
        per_pattern: args.per_pattern,
        arc_deg: (args.arc_min, args.arc_max),
        radius: (args.radius_min, args.radius_max),
        noise: args.noise,
        sample_dt: args.sample_dt,
        seed: args.seed,
    };
    let data = two_circles(&spec).context("generating two-circles data")?;

    let mut out: Box<dyn Write> = match &args.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    write_csv(&mut out, &spec, &data)?;
    out.flush()?;
    if let Some(path) = &args.out {
        eprintln!(
            "wrote {} trajectories ({} per pattern) to {}",
            data.len(),
            spec.per_pattern,
            path.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn write_csv(
    out: &mut dyn Write,
    spec: &TwoCirclesSpec,
    data: &[(vfkm_core::trajectory::Trajectory, usize)],
) -> Result<()> {
    let (c0, c1) = spec.centers();
    writeln!(out, "# vfkm synthetic two-circles")?;
    writeln!(
        out,
        "# seed={} per_pattern={} arc_deg={:?}..{:?} radius={:?}..{:?} noise={:?} sample_dt={:?}",
        spec.seed,
        spec.per_pattern,
        spec.arc_deg.0,
        spec.arc_deg.1,
        spec.radius.0,
        spec.radius.1,
        spec.noise,
        spec.sample_dt
    )?;
    writeln!(
        out,
        "# centers=({:?},{:?}) ({:?},{:?}) orientations=ccw,cw angular_speed=1",
        c0.x, c0.y, c1.x, c1.y
    )?;
    writeln!(out, "id,t,x,y,label")?;
    for (traj, label) in data {
        for (p, t) in traj.samples() {
            writeln!(out, "{},{:?},{:?},{:?},{}", traj.id(), t, p.x, p.y, label)?;
        }
    }
    Ok(())
}
