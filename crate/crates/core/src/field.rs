//! Vector fields on the grid and the constraint/error operators used by
//! the fitting system.
//!
//! A field stores one (x, y) value per grid vertex and is linearly
//! interpolated within each triangle. A tessellated trajectory segment
//! constrains the field at its two endpoints through their barycentric
//! rows; weighting the mismatch by the Λ Gram matrix integrates it exactly
//! along the segment, which is how finitely many rows stand in for the
//! continuum of tangency constraints:
//!
//!   ∫ over segment ‖X(α(t)) − α'(t)‖² dt
//!     = Δt · [ ⅓(d₀² + d₁²) + ⅓ d₀·d₁ ]   per spatial component,
//!
//! with d₀, d₁ the endpoint mismatches; the quadratic form is ΛᵀΛ with
//! diagonal 1/3 and off-diagonal 1/6.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{Grid, EPS_BARY};
use crate::sparse::SparseSymmetric;
use crate::trajectory::{Segment, TrajectorySet};

/// ΛᵀΛ diagonal entry.
pub const GRAM_DIAG: f64 = 1.0 / 3.0;
/// ΛᵀΛ off-diagonal entry.
pub const GRAM_OFF: f64 = 1.0 / 6.0;

/// The 2×2 symmetric positive-definite square root of the constraint Gram
/// matrix [[1/3, 1/6], [1/6, 1/3]]. Only the Gram form enters the solver;
/// Λ itself exists for verification.
#[derive(Debug, Clone, Copy)]
pub struct Lambda {
    diag: f64,
    off: f64,
}

pub fn lambda_matrix() -> Lambda {
    let h = 0.5 * std::f64::consts::FRAC_1_SQRT_2;
    let s = 0.5 / 6.0f64.sqrt();
    Lambda {
        diag: h + s,
        off: h - s,
    }
}

impl Lambda {
    pub fn entries(&self) -> [[f64; 2]; 2] {
        [[self.diag, self.off], [self.off, self.diag]]
    }

    /// ΛᵀΛ computed by actual multiplication (Λ is symmetric).
    pub fn gram(&self) -> [[f64; 2]; 2] {
        let (a, b) = (self.diag, self.off);
        [[a * a + b * b, 2.0 * a * b], [2.0 * a * b, a * a + b * b]]
    }

    /// Λ v for a 2-vector of per-endpoint scalars.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.diag * v[0] + self.off * v[1],
            self.off * v[0] + self.diag * v[1],
        ]
    }
}

/// Per-vertex 2-vectors, linearly interpolated per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    vx: Vec<f64>,
    vy: Vec<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid) -> VectorField {
        let n = grid.n_vertices();
        VectorField {
            grid,
            vx: vec![0.0; n],
            vy: vec![0.0; n],
        }
    }

    pub fn constant(grid: Grid, v: Vec2) -> VectorField {
        let n = grid.n_vertices();
        VectorField {
            grid,
            vx: vec![v.x; n],
            vy: vec![v.y; n],
        }
    }

    pub fn from_components(grid: Grid, vx: Vec<f64>, vy: Vec<f64>) -> Result<VectorField> {
        let n = grid.n_vertices();
        if vx.len() != n || vy.len() != n {
            return Err(Error::InvalidArgument(format!(
                "component length {} / {} does not match {} grid vertices",
                vx.len(),
                vy.len(),
                n
            )));
        }
        if vx.iter().chain(&vy).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "vector field values must be finite".into(),
            ));
        }
        Ok(VectorField { grid, vx, vy })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn x_values(&self) -> &[f64] {
        &self.vx
    }

    pub fn y_values(&self) -> &[f64] {
        &self.vy
    }

    pub fn value_at_vertex(&self, id: usize) -> Vec2 {
        Vec2::new(self.vx[id], self.vy[id])
    }

    /// Barycentric interpolation of the field at `p`.
    pub fn eval(&self, p: Vec2) -> Result<Vec2> {
        let (face, bary) = self.grid.locate(p)?;
        let mut out = Vec2::ZERO;
        for (w, v) in bary.weights.iter().zip(face.vertices) {
            out += self.value_at_vertex(v) * *w;
        }
        Ok(out)
    }

    /// Writes the text format: `vfkm-field v1`, then
    /// `R xmin ymin xmax ymax`, then R² lines `vx vy` in row-major vertex
    /// order at full double precision.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vfkm-field v1")?;
        let (lo, hi) = self.grid.bbox();
        writeln!(
            w,
            "{} {:?} {:?} {:?} {:?}",
            self.grid.resolution(),
            lo.x,
            lo.y,
            hi.x,
            hi.y
        )?;
        for i in 0..self.grid.n_vertices() {
            writeln!(w, "{:?} {:?}", self.vx[i], self.vy[i])?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<VectorField> {
        let mut lines = r.lines().enumerate();
        let mut next_line = |expect: &str| -> Result<(u64, String)> {
            match lines.next() {
                Some((i, line)) => Ok((i as u64 + 1, line?)),
                None => Err(Error::Parse {
                    line: 0,
                    msg: format!("unexpected end of file, expected {expect}"),
                }),
            }
        };
        let (line, header) = next_line("header")?;
        if header.trim() != "vfkm-field v1" {
            return Err(Error::Parse {
                line,
                msg: format!("bad header `{header}`, expected `vfkm-field v1`"),
            });
        }
        let (line, dims) = next_line("grid line")?;
        let parts: Vec<&str> = dims.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::Parse {
                line,
                msg: "expected `R xmin ymin xmax ymax`".into(),
            });
        }
        let resolution: usize = parts[0].parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad resolution `{}`", parts[0]),
        })?;
        let mut nums = [0.0f64; 4];
        for (slot, raw) in nums.iter_mut().zip(&parts[1..]) {
            *slot = raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad coordinate `{raw}`"),
            })?;
        }
        let grid = Grid::new(
            Vec2::new(nums[0], nums[1]),
            Vec2::new(nums[2], nums[3]),
            resolution,
        )?;
        let n = grid.n_vertices();
        let (mut vx, mut vy) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let (line, row) = next_line("vertex value")?;
            let mut it = row.split_whitespace();
            let mut num = || -> Result<f64> {
                it.next()
                    .ok_or(Error::Parse {
                        line,
                        msg: "expected `vx vy`".into(),
                    })?
                    .parse()
                    .map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad value in `{row}`"),
                    })
            };
            vx.push(num()?);
            vy.push(num()?);
        }
        VectorField::from_components(grid, vx, vy)
    }
}

/// The least-squares contribution of one tessellated segment: barycentric
/// rows of both endpoints against its face's vertices, the target velocity
/// (identical for both rows: the trajectory is piecewise linear), and the
/// segment weight.
#[derive(Debug, Clone, Copy)]
pub struct SegmentConstraint {
    pub face: usize,
    pub vertices: [usize; 3],
    /// Rows for (start, end) endpoints; each sums to 1.
    pub rows: [[f64; 3]; 2],
    pub velocity: Vec2,
    pub weight: f64,
}

pub fn segment_constraint(grid: &Grid, seg: &Segment) -> Result<SegmentConstraint> {
    let mut rows = [[0.0; 3]; 2];
    for (row, p) in rows.iter_mut().zip([seg.p0, seg.p1]) {
        let w = grid.bary_in_face(seg.face.index, p);
        if w.iter().any(|&wi| !(-EPS_BARY..=1.0 + EPS_BARY).contains(&wi)) {
            return Err(Error::Inconsistency(format!(
                "segment endpoint ({}, {}) outside face {} (weights {w:?})",
                p.x, p.y, seg.face.index
            )));
        }
        *row = w;
    }
    Ok(SegmentConstraint {
        face: seg.face.index,
        vertices: seg.face.vertices,
        rows,
        velocity: seg.velocity,
        weight: seg.weight,
    })
}

/// All constraints of a trajectory set, grouped per trajectory, pinned to
/// the grid they were built on.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    grid: Grid,
    groups: Vec<TrajConstraints>,
}

#[derive(Debug, Clone, Default)]
pub struct TrajConstraints {
    pub constraints: Vec<SegmentConstraint>,
    /// Σ ω over this trajectory: its share of the total timespan.
    pub weight: f64,
}

impl ConstraintSet {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn groups(&self) -> &[TrajConstraints] {
        &self.groups
    }

    pub fn n_trajectories(&self) -> usize {
        self.groups.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.groups.iter().map(|g| g.constraints.len()).sum()
    }

    pub fn check_grid(&self, field: &VectorField) -> Result<()> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch(
                "field grid differs from the grid the constraints were built on".into(),
            ));
        }
        Ok(())
    }
}

/// Tessellates the set against the grid and builds per-trajectory
/// constraint groups.
pub fn build_constraints(set: &TrajectorySet, grid: &Grid) -> Result<ConstraintSet> {
    let segments = crate::trajectory::build_segments(set, grid)?;
    let mut groups = vec![TrajConstraints::default(); set.len()];
    for seg in &segments {
        let c = segment_constraint(grid, seg)?;
        groups[seg.traj].weight += c.weight;
        groups[seg.traj].constraints.push(c);
    }
    Ok(ConstraintSet {
        grid: *grid,
        groups,
    })
}

/// Weighted squared tangency mismatch of one segment:
/// ω · Σ_components (⅓ d₀² + ⅓ d₁² + ⅓ d₀ d₁).
pub fn segment_mismatch(field: &VectorField, c: &SegmentConstraint) -> f64 {
    let mut e = [Vec2::ZERO, Vec2::ZERO];
    for (val, row) in e.iter_mut().zip(&c.rows) {
        for (w, v) in row.iter().zip(c.vertices) {
            *val += field.value_at_vertex(v) * *w;
        }
    }
    let d0 = e[0] - c.velocity;
    let d1 = e[1] - c.velocity;
    let per = |a: f64, b: f64| GRAM_DIAG * (a * a + b * b) + 2.0 * GRAM_OFF * a * b;
    c.weight * (per(d0.x, d1.x) + per(d0.y, d1.y))
}

pub(crate) fn traj_error_unchecked(field: &VectorField, group: &TrajConstraints) -> f64 {
    group
        .constraints
        .iter()
        .map(|c| segment_mismatch(field, c))
        .sum()
}

/// ε(X, α): the ω-weighted squared mismatch between the field and the
/// trajectory's segment velocities; T·ε equals the L² tangency error of
/// the trajectory against the field.
pub fn traj_error(field: &VectorField, constraints: &ConstraintSet, traj: usize) -> Result<f64> {
    constraints.check_grid(field)?;
    let group = constraints.groups.get(traj).ok_or_else(|| {
        Error::InvalidArgument(format!("trajectory index {traj} out of range"))
    })?;
    Ok(traj_error_unchecked(field, group))
}

/// ‖L X‖²: smoothness energy of the field, both components.
pub fn smoothness_energy(laplacian: &SparseSymmetric, field: &VectorField) -> Result<f64> {
    if laplacian.dim() != field.grid().n_vertices() {
        return Err(Error::GridMismatch(format!(
            "Laplacian dimension {} vs {} grid vertices",
            laplacian.dim(),
            field.grid().n_vertices()
        )));
    }
    Ok(laplacian.apply_norm_sq(field.x_values()) + laplacian.apply_norm_sq(field.y_values()))
}
