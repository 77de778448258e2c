//! Regular triangulated grid over an axis-aligned bounding box.
//!
//! The domain is discretized as an R×R vertex grid (R−1 cells per axis).
//! Every cell is split into two triangles along the same diagonal, from the
//! cell's lower-right corner to its upper-left corner, so the triangulation
//! is translation-invariant. Vertices are indexed row-major, `iy * R + ix`,
//! stable across runs.
//!
//! Triangle `2c` of cell `c` is the lower-left half `{v00, v10, v01}`,
//! triangle `2c + 1` the upper-right half `{v10, v11, v01}`.

use crate::error::{Error, Result};
use crate::geom::Vec2;

/// Tolerance on barycentric weights when testing triangle membership.
pub const EPS_BARY: f64 = 1e-9;

/// Crossing points closer than this (in cell-size units) to an existing
/// polyline vertex are merged instead of inserted.
const MERGE_TOL: f64 = 1e-9;

/// Immutable regular grid. Cheap to copy; safe to share across threads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    bbox_min: Vec2,
    bbox_max: Vec2,
    resolution: usize,
    dx: f64,
    dy: f64,
}

/// One triangle of the grid, by index and by its three vertex ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceRef {
    pub index: usize,
    pub vertices: [usize; 3],
}

/// Barycentric weights of a point against a face's three vertices.
#[derive(Debug, Clone, Copy)]
pub struct BarycentricCoords {
    pub weights: [f64; 3],
}

/// Builds an R×R vertex grid over the given box.
pub fn build_grid(bbox_min: Vec2, bbox_max: Vec2, resolution: usize) -> Result<Grid> {
    Grid::new(bbox_min, bbox_max, resolution)
}

impl Grid {
    pub fn new(bbox_min: Vec2, bbox_max: Vec2, resolution: usize) -> Result<Grid> {
        if resolution < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution must be at least 2, got {resolution}"
            )));
        }
        if !(bbox_min.is_finite() && bbox_max.is_finite()) {
            return Err(Error::InvalidArgument(
                "grid bounding box must be finite".into(),
            ));
        }
        if bbox_max.x <= bbox_min.x || bbox_max.y <= bbox_min.y {
            return Err(Error::InvalidArgument(format!(
                "degenerate bounding box [{}, {}] x [{}, {}]",
                bbox_min.x, bbox_max.x, bbox_min.y, bbox_max.y
            )));
        }
        let cells = (resolution - 1) as f64;
        Ok(Grid {
            bbox_min,
            bbox_max,
            resolution,
            dx: (bbox_max.x - bbox_min.x) / cells,
            dy: (bbox_max.y - bbox_min.y) / cells,
        })
    }

    /// Grid over the bounding box of a point set, inflated by 1e-6 of the
    /// box diagonal on each side so boundary samples locate strictly inside.
    pub fn from_points<I>(points: I, resolution: usize) -> Result<Grid>
    where
        I: IntoIterator<Item = Vec2>,
    {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for p in points {
            any = true;
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        if !any {
            return Err(Error::InvalidArgument("empty point set".into()));
        }
        let diag = min.dist(max);
        if diag == 0.0 || !diag.is_finite() {
            return Err(Error::InvalidArgument(
                "degenerate point set: zero-extent bounding box".into(),
            ));
        }
        let pad = 1e-6 * diag;
        Grid::new(
            Vec2::new(min.x - pad, min.y - pad),
            Vec2::new(max.x + pad, max.y + pad),
            resolution,
        )
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn n_vertices(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn n_triangles(&self) -> usize {
        2 * (self.resolution - 1) * (self.resolution - 1)
    }

    pub fn bbox(&self) -> (Vec2, Vec2) {
        (self.bbox_min, self.bbox_max)
    }

    /// Cell width and height.
    pub fn cell_size(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    pub fn vertex_position(&self, id: usize) -> Vec2 {
        debug_assert!(id < self.n_vertices());
        let ix = id % self.resolution;
        let iy = id / self.resolution;
        Vec2::new(
            self.bbox_min.x + ix as f64 * self.dx,
            self.bbox_min.y + iy as f64 * self.dy,
        )
    }

    fn vertex_id(&self, ix: usize, iy: usize) -> usize {
        iy * self.resolution + ix
    }

    pub fn face(&self, index: usize) -> FaceRef {
        debug_assert!(index < self.n_triangles());
        let cells = self.resolution - 1;
        let cell = index / 2;
        let (cx, cy) = (cell % cells, cell / cells);
        let v00 = self.vertex_id(cx, cy);
        let v10 = self.vertex_id(cx + 1, cy);
        let v01 = self.vertex_id(cx, cy + 1);
        let vertices = if index % 2 == 0 {
            [v00, v10, v01]
        } else {
            let v11 = self.vertex_id(cx + 1, cy + 1);
            [v10, v11, v01]
        };
        FaceRef { index, vertices }
    }

    /// Position of `p` in cell units relative to the bbox origin.
    fn local(&self, p: Vec2) -> (f64, f64) {
        (
            (p.x - self.bbox_min.x) / self.dx,
            (p.y - self.bbox_min.y) / self.dy,
        )
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.bbox_min.x
            && p.x <= self.bbox_max.x
            && p.y >= self.bbox_min.y
            && p.y <= self.bbox_max.y
    }

    /// Checks that `p` lies inside the bbox, naming the offending coordinate
    /// otherwise. `subject` identifies the point's owner in the message.
    pub fn check_inside(&self, p: Vec2, subject: &str) -> Result<()> {
        for (axis, value, min, max) in [
            ('x', p.x, self.bbox_min.x, self.bbox_max.x),
            ('y', p.y, self.bbox_min.y, self.bbox_max.y),
        ] {
            if !(value >= min && value <= max) {
                return Err(Error::OutOfDomain {
                    subject: subject.to_string(),
                    axis,
                    value,
                    min,
                    max,
                });
            }
        }
        Ok(())
    }

    /// Barycentric weights of `p` against the vertices of face
    /// `face_index`, in the face's vertex order. Purely affine; weights may
    /// fall outside [0, 1] when `p` is not in the face.
    pub fn bary_in_face(&self, face_index: usize, p: Vec2) -> [f64; 3] {
        let cells = self.resolution - 1;
        let cell = face_index / 2;
        let (cx, cy) = (cell % cells, cell / cells);
        let (fu, fv) = self.local(p);
        let u = fu - cx as f64;
        let v = fv - cy as f64;
        if face_index % 2 == 0 {
            [1.0 - u - v, u, v]
        } else {
            [1.0 - v, u + v - 1.0, 1.0 - u]
        }
    }

    /// Finds the face containing `p` and the barycentric weights of `p`
    /// within it. Points on shared edges or vertices resolve to the lowest
    /// containing triangle index.
    pub fn locate(&self, p: Vec2) -> Result<(FaceRef, BarycentricCoords)> {
        self.check_inside(p, "point")?;
        let cells = self.resolution - 1;
        let (fu, fv) = self.local(p);
        // Points exactly on a grid line are contained by cells on both
        // sides; scanning the lower-index neighbors first realizes the
        // lowest-triangle-index tie-break.
        let cx0 = (fu.floor() as isize).clamp(0, cells as isize - 1) as usize;
        let cy0 = (fv.floor() as isize).clamp(0, cells as isize - 1) as usize;
        for cy in cy0.saturating_sub(1)..=cy0 {
            for cx in cx0.saturating_sub(1)..=cx0 {
                let cell = cy * cells + cx;
                for t in [2 * cell, 2 * cell + 1] {
                    let w = self.bary_in_face(t, p);
                    if w.iter().all(|&wi| (-EPS_BARY..=1.0 + EPS_BARY).contains(&wi)) {
                        return Ok((self.face(t), BarycentricCoords { weights: w }));
                    }
                }
            }
        }
        Err(Error::Inconsistency(format!(
            "no triangle contains in-domain point ({}, {})",
            p.x, p.y
        )))
    }

    /// Inserts every crossing of a cell edge or cell diagonal into a
    /// time-stamped polyline, interpolating times linearly, so that every
    /// output segment lies within a single triangle. Input vertices are
    /// always preserved; crossings that coincide with them are merged.
    pub fn tessellate(&self, polyline: &[(Vec2, f64)]) -> Result<Vec<(Vec2, f64)>> {
        for (p, _) in polyline {
            self.check_inside(*p, "point")?;
        }
        for pair in polyline.windows(2) {
            if pair[1].1 <= pair[0].1 {
                return Err(Error::MalformedTrajectory {
                    id: "<polyline>".into(),
                    reason: format!(
                        "non-monotone times: {} then {}",
                        pair[0].1, pair[1].1
                    ),
                });
            }
        }

        let mut out: Vec<(Vec2, f64)> = Vec::with_capacity(polyline.len());
        if let Some(&first) = polyline.first() {
            out.push(first);
        }
        for pair in polyline.windows(2) {
            let ((p0, t0), (p1, t1)) = (pair[0], pair[1]);
            let (u0, v0) = self.local(p0);
            let (u1, v1) = self.local(p1);
            let seg_len = ((u1 - u0).powi(2) + (v1 - v0).powi(2)).sqrt();
            if seg_len > 0.0 {
                let t_tol = MERGE_TOL / seg_len;
                let mut ts = Vec::new();
                crossing_params(u0, u1, &mut ts);
                crossing_params(v0, v1, &mut ts);
                crossing_params(u0 + v0, u1 + v1, &mut ts);
                ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut last = 0.0;
                for &t in &ts {
                    if t <= t_tol || t >= 1.0 - t_tol || t - last <= t_tol {
                        continue;
                    }
                    last = t;
                    let time = t0 + t * (t1 - t0);
                    // guard against duplicated timestamps from rounding
                    if time > out.last().unwrap().1 && time < t1 {
                        out.push((p0.lerp(p1, t), time));
                    }
                }
            }
            out.push((p1, t1));
        }
        Ok(out)
    }
}

/// Parameters t in (0, 1) where `a0 + t (a1 - a0)` crosses an integer.
fn crossing_params(a0: f64, a1: f64, ts: &mut Vec<f64>) {
    if a0 == a1 {
        return;
    }
    let (lo, hi) = if a0 < a1 { (a0, a1) } else { (a1, a0) };
    let mut k = lo.floor() + 1.0;
    while k <= hi.ceil() - 1.0 {
        if k > lo && k < hi {
            ts.push((k - a0) / (a1 - a0));
        }
        k += 1.0;
    }
}
