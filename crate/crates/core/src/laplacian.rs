//! Cotangent Laplacian of the triangulated grid.
//!
//! Off-diagonal entry for adjacent vertices p, q is ½(cot θ + cot η), the
//! angles opposite edge pq in the one or two triangles sharing it. The
//! diagonal is minus the row sum, so constants are annihilated exactly.
//!
//! Cell legs are axis-aligned, so the angle opposite every cell diagonal is
//! the cell corner's right angle: diagonal edges contribute exactly zero
//! and are skipped rather than evaluated through floating trig. For an edge
//! along the x axis the opposite angle has cot = dy/dx, along the y axis
//! cot = dx/dy; on square cells interior rows reduce to the familiar
//! 5-point stencil (−4 center, four 1s).

use crate::grid::Grid;
use crate::sparse::SparseSymmetric;

pub fn cotangent_laplacian(grid: &Grid) -> SparseSymmetric {
    let r = grid.resolution();
    let (dx, dy) = grid.cell_size();
    let cot_x = dy / dx; // opposite angle of a horizontal edge
    let cot_y = dx / dy; // opposite angle of a vertical edge
    let n = grid.n_vertices();
    let mut triplets = Vec::with_capacity(6 * n);
    let mut diag = vec![0.0f64; n];

    let mut edge = |a: usize, b: usize, w: f64| {
        triplets.push((a, b, w));
        triplets.push((b, a, w));
        diag[a] -= w;
        diag[b] -= w;
    };

    for iy in 0..r {
        for ix in 0..r {
            let v = iy * r + ix;
            if ix + 1 < r {
                let tris = usize::from(iy > 0) + usize::from(iy + 1 < r);
                edge(v, v + 1, 0.5 * tris as f64 * cot_x);
            }
            if iy + 1 < r {
                let tris = usize::from(ix > 0) + usize::from(ix + 1 < r);
                edge(v, v + r, 0.5 * tris as f64 * cot_y);
            }
        }
    }
    for (v, d) in diag.into_iter().enumerate() {
        triplets.push((v, v, d));
    }
    SparseSymmetric::from_triplets(n, triplets)
}
