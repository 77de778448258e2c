//! SVG rendering: one image per cluster showing its trajectories as
//! polylines plus one arrow glyph per grid vertex, scaled by field
//! magnitude. Zero fields render as dots. Output is deterministic: fixed
//! palette, fixed float formatting.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use vfkm_core::field::VectorField;
use vfkm_core::trajectory::Trajectory;
use vfkm_core::Vec2;

use crate::cluster::load_and_preprocess;
use crate::manifest::{read_assignments, Manifest};

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub fn cluster_color(cluster: usize) -> &'static str {
    PALETTE[cluster % PALETTE.len()]
}

#[derive(Args)]
pub struct PlotArgs {
    /// Run directory produced by `vfkm cluster` or `vfkm subcluster`.
    pub run_dir: PathBuf,
}

pub fn run(args: PlotArgs) -> Result<ExitCode> {
    let manifest = Manifest::load(&args.run_dir)
        .with_context(|| format!("{} is not a vfkm run directory", args.run_dir.display()))?;
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
    let assignments = read_assignments(&args.run_dir.join("assignments.csv"))?;

    let mut written = Vec::new();
    for j in 0..manifest.config.k {
        let label = if manifest.label_prefix.is_empty() {
            j.to_string()
        } else {
            format!("{}.{j}", manifest.label_prefix)
        };
        let field_path = args.run_dir.join(format!("field_{j}.vf"));
        let file = fs::File::open(&field_path)
            .with_context(|| format!("opening {}", field_path.display()))?;
        let field = VectorField::read_from(std::io::BufReader::new(file))?;
        let members: Vec<&Trajectory> = loaded
            .set
            .trajectories
            .iter()
            .filter(|t| {
                assignments
                    .iter()
                    .any(|(id, l)| id == t.id() && *l == label)
            })
            .collect();
        let svg = render_cluster_svg(&field, &members, cluster_color(j));
        let out = args.run_dir.join(format!("plot_{j}.svg"));
        fs::write(&out, svg)?;
        written.push(out);
    }
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Renders one cluster: trajectory polylines over per-vertex arrow glyphs.
pub fn render_cluster_svg(
    field: &VectorField,
    trajectories: &[&Trajectory],
    color: &str,
) -> String {
    let grid = field.grid();
    let (lo, hi) = grid.bbox();
    let world_w = hi.x - lo.x;
    let world_h = hi.y - lo.y;
    let width = 800.0;
    let height = width * world_h / world_w;
    let sx = |x: f64| (x - lo.x) / world_w * width;
    let sy = |y: f64| height - (y - lo.y) / world_h * height;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#fdfdfd\"/>"
    );

    for traj in trajectories {
        let mut points = String::new();
        for (p, _) in traj.samples() {
            let _ = write!(points, "{:.2},{:.2} ", sx(p.x), sy(p.y));
        }
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1\" \
             stroke-opacity=\"0.35\" points=\"{}\"/>",
            points.trim_end()
        );
    }

    // glyph length scale: longest arrow spans just under half a cell
    let max_mag = (0..grid.n_vertices())
        .map(|i| field.value_at_vertex(i).norm())
        .fold(0.0f64, f64::max);
    let (dx, dy) = grid.cell_size();
    let cell_px = (dx / world_w * width).min(dy / world_h * height);
    let scale = if max_mag > 0.0 {
        0.45 * cell_px / max_mag
    } else {
        0.0
    };

    for i in 0..grid.n_vertices() {
        let p = grid.vertex_position(i);
        let v = field.value_at_vertex(i);
        let (cx, cy) = (sx(p.x), sy(p.y));
        let len_px = v.norm() * scale;
        let _ = write!(svg, "<g class=\"glyph\">");
        if len_px < 1.0 {
            let _ = write!(svg, "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"1.5\" fill=\"#333\"/>");
        } else {
            // svg y points down; world y points up
            let tip = Vec2::new(cx + v.x * scale, cy - v.y * scale);
            let dir = Vec2::new(tip.x - cx, tip.y - cy) / len_px;
            let normal = Vec2::new(-dir.y, dir.x);
            let head = (0.3 * len_px).min(0.35 * cell_px);
            let base = Vec2::new(tip.x - dir.x * head, tip.y - dir.y * head);
            let w1 = base + normal * (0.4 * head);
            let w2 = base - normal * (0.4 * head);
            let _ = write!(
                svg,
                "<line x1=\"{cx:.2}\" y1=\"{cy:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" \
                 stroke=\"#333\" stroke-width=\"1\"/>\
                 <polygon points=\"{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}\" fill=\"#333\"/>",
                base.x, base.y, tip.x, tip.y, w1.x, w1.y, w2.x, w2.y
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
