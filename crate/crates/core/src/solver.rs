//! Assembly and solution of the regularized fitting system.
//!
//! The best-fitting field for a set of weighted segment constraints
//! minimizes, per spatial component,
//!
//!   λ (Σ_s ω_s) ‖L x‖²  +  (1 − λ) Σ_s ω_s ‖Λ(C_s x − y_s)‖²
//!
//! whose normal equations are A x = b with
//!
//!   A = λ (Σ ω) LᵀL + (1 − λ) Σ ω C ᵀ(ΛᵀΛ) C,
//!   b = (1 − λ) Σ ω C ᵀ(ΛᵀΛ) y.
//!
//! A is symmetric positive definite for λ in (0, 1) with at least one
//! constraint, so the system has a unique solution; both components share
//! the matrix and only the right-hand side differs. Solved by plain
//! conjugate gradient.

use crate::error::{Error, Result};
use crate::field::{TrajConstraints, VectorField, GRAM_DIAG, GRAM_OFF};
use crate::grid::Grid;
use crate::sparse::{conjugate_gradient, SparseSymmetric};

/// One cluster's fitting problem: the grid, its Laplacian, the constraint
/// groups of the member trajectories, and solver settings.
pub struct FitProblem<'a> {
    pub grid: Grid,
    pub laplacian: &'a SparseSymmetric,
    pub groups: Vec<&'a TrajConstraints>,
    /// Smoothness weight, strictly inside (0, 1).
    pub lambda: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl<'a> FitProblem<'a> {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie strictly inside (0, 1), got {}",
                self.lambda
            )));
        }
        if self.laplacian.dim() != self.grid.n_vertices() {
            return Err(Error::GridMismatch(format!(
                "Laplacian dimension {} vs {} grid vertices",
                self.laplacian.dim(),
                self.grid.n_vertices()
            )));
        }
        if self.groups.iter().all(|g| g.constraints.is_empty()) {
            return Err(Error::NoConstraints);
        }
        Ok(())
    }

    fn constraints(&self) -> impl Iterator<Item = &crate::field::SegmentConstraint> {
        self.groups.iter().flat_map(|g| g.constraints.iter())
    }
}

/// Assembles the shared matrix A and the two per-component right-hand
/// sides. Constraint blocks are accumulated per face in face order, so the
/// result is bit-reproducible for a given problem.
pub fn assemble_normal_system(
    problem: &FitProblem,
) -> Result<(SparseSymmetric, Vec<f64>, Vec<f64>)> {
    problem.validate()?;
    let n = problem.grid.n_vertices();
    let lambda = problem.lambda;
    let weight_sum: f64 = problem.constraints().map(|c| c.weight).sum();

    #[derive(Clone)]
    struct FaceAcc {
        vertices: [usize; 3],
        block: [[f64; 3]; 3],
        bx: [f64; 3],
        by: [f64; 3],
        used: bool,
    }
    let empty = FaceAcc {
        vertices: [0; 3],
        block: [[0.0; 3]; 3],
        bx: [0.0; 3],
        by: [0.0; 3],
        used: false,
    };
    let mut faces = vec![empty; problem.grid.n_triangles()];

    for c in problem.constraints() {
        let acc = &mut faces[c.face];
        acc.vertices = c.vertices;
        acc.used = true;
        let w = (1.0 - lambda) * c.weight;
        // G B, with G = [[1/3, 1/6], [1/6, 1/3]]
        let mut gb = [[0.0; 3]; 2];
        for k in 0..3 {
            gb[0][k] = GRAM_DIAG * c.rows[0][k] + GRAM_OFF * c.rows[1][k];
            gb[1][k] = GRAM_OFF * c.rows[0][k] + GRAM_DIAG * c.rows[1][k];
        }
        for k in 0..3 {
            for l in 0..3 {
                acc.block[k][l] += w * (c.rows[0][k] * gb[0][l] + c.rows[1][k] * gb[1][l]);
            }
        }
        // both rows of y equal the segment velocity, and G's rows sum to
        // 1/2, so BᵀGy collapses to (v/2) Bᵀ1
        for k in 0..3 {
            let s = 0.5 * (c.rows[0][k] + c.rows[1][k]);
            acc.bx[k] += w * s * c.velocity.x;
            acc.by[k] += w * s * c.velocity.y;
        }
    }

    let mut triplets = problem.laplacian.square_triplets(lambda * weight_sum);
    let mut bx = vec![0.0; n];
    let mut by = vec![0.0; n];
    for acc in &faces {
        if !acc.used {
            continue;
        }
        for k in 0..3 {
            for l in 0..3 {
                triplets.push((acc.vertices[k], acc.vertices[l], acc.block[k][l]));
            }
            bx[acc.vertices[k]] += acc.bx[k];
            by[acc.vertices[k]] += acc.by[k];
        }
    }
    Ok((SparseSymmetric::from_triplets(n, triplets), bx, by))
}

/// Solves the fitting problem; both components reuse one assembly. The
/// optional warm start seeds CG with a previous field (pure speed
/// optimization; the solution is identical up to CG tolerance).
pub fn fit_vector_field(
    problem: &FitProblem,
    warm_start: Option<&VectorField>,
) -> Result<VectorField> {
    let (a, bx, by) = assemble_normal_system(problem)?;
    let n = problem.grid.n_vertices();
    let zeros = vec![0.0; n];
    let (x0, y0): (&[f64], &[f64]) = match warm_start {
        Some(f) => {
            if f.grid() != &problem.grid {
                return Err(Error::GridMismatch(
                    "warm-start field grid differs from the problem grid".into(),
                ));
            }
            (f.x_values(), f.y_values())
        }
        None => (&zeros, &zeros),
    };
    let sx = conjugate_gradient(&a, &bx, x0, problem.cg_tol, problem.cg_max_iter)?;
    let sy = conjugate_gradient(&a, &by, y0, problem.cg_tol, problem.cg_max_iter)?;
    VectorField::from_components(problem.grid, sx.x, sy.x)
}

/// The fit objective split into its (smoothness, value) parts:
/// λ (Σω) ‖LX‖² and (1 − λ) Σ ω ‖Λ(CX − y)‖².
pub fn objective_parts(
    laplacian: &SparseSymmetric,
    lambda: f64,
    groups: &[&TrajConstraints],
    field: &VectorField,
) -> (f64, f64) {
    let weight_sum: f64 = groups.iter().map(|g| g.weight).sum();
    let smooth = lambda
        * weight_sum
        * (laplacian.apply_norm_sq(field.x_values()) + laplacian.apply_norm_sq(field.y_values()));
    let fit: f64 = (1.0 - lambda)
        * groups
            .iter()
            .map(|g| crate::field::traj_error_unchecked(field, g))
            .sum::<f64>();
    (smooth, fit)
}

/// Total fit objective; the quantity [`fit_vector_field`] minimizes.
pub fn fit_objective(
    laplacian: &SparseSymmetric,
    lambda: f64,
    groups: &[&TrajConstraints],
    field: &VectorField,
) -> f64 {
    let (s, f) = objective_parts(laplacian, lambda, groups, field);
    s + f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::build_constraints;
    use crate::geom::Vec2;
    use crate::laplacian::cotangent_laplacian;
    use crate::trajectory::{Trajectory, TrajectorySet};

    fn constraints_for(
        points: &[&[(f64, f64, f64)]],
        grid: &Grid,
    ) -> crate::field::ConstraintSet {
        let set = TrajectorySet::new(
            points
                .iter()
                .enumerate()
                .map(|(i, pts)| {
                    Trajectory::new(
                        format!("t{i}"),
                        pts.iter()
                            .map(|&(x, y, t)| (Vec2::new(x, y), t))
                            .collect(),
                    )
                    .unwrap()
                })
                .collect(),
        )
        .unwrap();
        build_constraints(&set, grid).unwrap()
    }

    fn problem<'a>(
        grid: Grid,
        lap: &'a SparseSymmetric,
        cs: &'a crate::field::ConstraintSet,
        lambda: f64,
    ) -> FitProblem<'a> {
        FitProblem {
            grid,
            laplacian: lap,
            groups: cs.groups().iter().collect(),
            lambda,
            cg_tol: 1e-12,
            cg_max_iter: 10 * grid.n_vertices(),
        }
    }

    #[test]
    fn no_segments_is_underdetermined() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 2).unwrap();
        let lap = cotangent_laplacian(&grid);
        let p = FitProblem {
            grid,
            laplacian: &lap,
            groups: vec![],
            lambda: 0.05,
            cg_tol: 1e-9,
            cg_max_iter: 100,
        };
        assert!(matches!(
            assemble_normal_system(&p),
            Err(Error::NoConstraints)
        ));
    }

    #[test]
    fn lambda_bounds_enforced() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 2).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(&[&[(0.1, 0.1, 0.0), (0.3, 0.1, 1.0)]], &grid);
        for bad in [0.0, 1.0, -0.5, 1.5] {
            let p = problem(grid, &lap, &cs, bad);
            assert!(assemble_normal_system(&p).is_err());
        }
    }

    #[test]
    fn assembly_matches_dense_reconstruction_r2() {
        // One segment inside the lower face of the smallest grid; every
        // matrix is written out from first principles and compared.
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 2).unwrap();
        let lap = cotangent_laplacian(&grid);
        let (p0, p1) = (Vec2::new(0.25, 0.25), Vec2::new(0.5, 0.25));
        let cs = constraints_for(&[&[(p0.x, p0.y, 0.0), (p1.x, p1.y, 1.0)]], &grid);
        let lambda = 0.3;
        let p = problem(grid, &lap, &cs, lambda);
        let (a, bx, by) = assemble_normal_system(&p).unwrap();

        // hand-built 4x4 cotangent Laplacian of the unit 2x2-vertex grid
        let l = [
            [-1.0, 0.5, 0.5, 0.0],
            [0.5, -1.0, 0.0, 0.5],
            [0.5, 0.0, -1.0, 0.5],
            [0.0, 0.5, 0.5, -1.0],
        ];
        // barycentric rows of the endpoints in face 0 = {v0, v1, v2}
        let c = [[0.5, 0.25, 0.25, 0.0], [0.25, 0.5, 0.25, 0.0]];
        let g = [[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]];
        let v = p1 - p0; // Δt = 1, ω = 1
        let omega = 1.0;

        let mut dense = [[0.0f64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let mut ll = 0.0;
                for k in 0..4 {
                    ll += l[i][k] * l[k][j];
                }
                let mut cgc = 0.0;
                for r in 0..2 {
                    for s in 0..2 {
                        cgc += c[r][i] * g[r][s] * c[s][j];
                    }
                }
                dense[i][j] = lambda * omega * ll + (1.0 - lambda) * omega * cgc;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                assert!(
                    (a.get(i, j) - dense[i][j]).abs() < 1e-12,
                    "A[{i}][{j}] = {} vs dense {}",
                    a.get(i, j),
                    dense[i][j]
                );
            }
        }
        for i in 0..4 {
            let mut ex = 0.0;
            let mut ey = 0.0;
            for r in 0..2 {
                for s in 0..2 {
                    ex += c[r][i] * g[r][s] * v.x;
                    ey += c[r][i] * g[r][s] * v.y;
                }
            }
            assert!((bx[i] - (1.0 - lambda) * omega * ex).abs() < 1e-12);
            assert!((by[i] - (1.0 - lambda) * omega * ey).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_segment_gives_zero_rhs() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 2).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(&[&[(0.2, 0.2, 0.0), (0.2, 0.2001, 1.0)]], &grid);
        // nearly stationary: use a truly stationary segment instead
        let set = TrajectorySet::new(vec![Trajectory::new(
            "s",
            vec![(Vec2::new(0.2, 0.2), 0.0), (Vec2::new(0.2, 0.2), 1.0)],
        )
        .unwrap()])
        .unwrap();
        let cs0 = build_constraints(&set, &grid).unwrap();
        drop(cs);
        let p = problem(grid, &lap, &cs0, 0.5);
        let (_, bx, by) = assemble_normal_system(&p).unwrap();
        assert!(bx.iter().chain(&by).all(|&v| v == 0.0));
    }

    #[test]
    fn assembled_matrix_is_spd_and_symmetric() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 3).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(
            &[
                &[(0.1, 0.1, 0.0), (0.8, 0.3, 1.0), (0.9, 0.9, 2.5)],
                &[(0.5, 0.9, 0.0), (0.2, 0.4, 2.0)],
            ],
            &grid,
        );
        let p = problem(grid, &lap, &cs, 0.05);
        let (a, _, _) = assemble_normal_system(&p).unwrap();
        assert!(a.max_asymmetry() < 1e-12);
        let n = a.dim();
        let mut state = 1234567u64;
        for _ in 0..100 {
            let x: Vec<f64> = (0..n)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                    (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
                })
                .collect();
            let xtax: f64 = a.apply(&x).iter().zip(&x).map(|(ax, xi)| ax * xi).sum();
            assert!(xtax > 0.0, "xᵀAx = {xtax} not positive");
        }
    }

    #[test]
    fn cg_matches_dense_solve_on_assembled_system() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(2.0, 1.0), 4).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(
            &[
                &[(0.1, 0.1, 0.0), (1.8, 0.3, 1.0), (1.9, 0.9, 2.5)],
                &[(0.5, 0.9, 0.0), (0.2, 0.4, 2.0), (1.5, 0.5, 3.0)],
            ],
            &grid,
        );
        let p = problem(grid, &lap, &cs, 0.2);
        let (a, bx, _) = assemble_normal_system(&p).unwrap();
        let direct = crate::sparse::dense_solve(a.to_dense(), bx.clone());
        let cg = crate::sparse::conjugate_gradient(&a, &bx, &vec![0.0; a.dim()], 1e-12, 1000)
            .unwrap();
        let err: f64 = cg
            .x
            .iter()
            .zip(&direct)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn constant_field_data_recovers_exactly() {
        // trajectories sampled from a uniform field: the zero-residual,
        // zero-smoothness minimizer is that constant, for any lambda
        let v0 = Vec2::new(0.4, -0.25);
        let mut trajs = Vec::new();
        let starts = [
            Vec2::new(0.1, 0.8),
            Vec2::new(0.3, 0.9),
            Vec2::new(0.15, 0.55),
            Vec2::new(0.4, 0.7),
        ];
        for (i, s) in starts.iter().enumerate() {
            let pts: Vec<(Vec2, f64)> = (0..4)
                .map(|k| {
                    let t = k as f64 * 0.5;
                    (*s + v0 * t, t)
                })
                .collect();
            trajs.push(Trajectory::new(format!("c{i}"), pts).unwrap());
        }
        let set = TrajectorySet::new(trajs).unwrap();
        let grid = Grid::from_points(set.points(), 3).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = build_constraints(&set, &grid).unwrap();
        for lambda in [0.05, 0.5, 0.95, 0.9995] {
            let p = problem(grid, &lap, &cs, lambda);
            let f = fit_vector_field(&p, None).unwrap();
            for i in 0..grid.n_vertices() {
                assert!(
                    (f.value_at_vertex(i) - v0).norm() < 1e-6,
                    "lambda {lambda}, vertex {i}: {:?}",
                    f.value_at_vertex(i)
                );
            }
        }
    }

    #[test]
    fn residual_equals_half_gradient() {
        // finite-difference gradient of the quadratic objective matches
        // 2 (A x - b) per component
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 2).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(
            &[&[(0.1, 0.1, 0.0), (0.6, 0.4, 1.0), (0.9, 0.5, 2.0)]],
            &grid,
        );
        let lambda = 0.3;
        let p = problem(grid, &lap, &cs, lambda);
        let (a, bx, _) = assemble_normal_system(&p).unwrap();
        let n = grid.n_vertices();
        let groups: Vec<&TrajConstraints> = cs.groups().iter().collect();

        let x: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64) - 0.2).collect();
        let obj = |vx: &[f64]| {
            let f =
                VectorField::from_components(grid, vx.to_vec(), vec![0.0; n]).unwrap();
            fit_objective(&lap, lambda, &groups, &f)
        };
        let base = a.apply(&x);
        let h = 1e-6;
        for i in 0..n {
            let mut plus = x.clone();
            plus[i] += h;
            let mut minus = x.clone();
            minus[i] -= h;
            let fd = (obj(&plus) - obj(&minus)) / (2.0 * h);
            let analytic = 2.0 * (base[i] - bx[i]);
            assert!(
                (fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0),
                "component {i}: fd {fd} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn fitted_field_beats_random_perturbations() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 3).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(
            &[
                &[(0.1, 0.9, 0.0), (0.5, 0.6, 1.0), (0.9, 0.15, 2.0)],
                &[(0.85, 0.85, 0.0), (0.4, 0.5, 1.5)],
            ],
            &grid,
        );
        let p = problem(grid, &lap, &cs, 0.05);
        let fitted = fit_vector_field(&p, None).unwrap();
        let groups: Vec<&TrajConstraints> = cs.groups().iter().collect();
        let best = fit_objective(&lap, 0.05, &groups, &fitted);
        let n = grid.n_vertices();
        let mut state = 99u64;
        let mut rnd = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for scale in [1e-3, 1e-2, 0.1] {
            for _ in 0..34 {
                let vx: Vec<f64> = (0..n)
                    .map(|i| fitted.x_values()[i] + scale * rnd())
                    .collect();
                let vy: Vec<f64> = (0..n)
                    .map(|i| fitted.y_values()[i] + scale * rnd())
                    .collect();
                let perturbed = VectorField::from_components(grid, vx, vy).unwrap();
                let obj = fit_objective(&lap, 0.05, &groups, &perturbed);
                assert!(obj >= best - 1e-12, "perturbation won: {obj} < {best}");
            }
        }
    }

    #[test]
    fn warm_start_changes_nothing_but_speed() {
        let grid = Grid::new(Vec2::ZERO, Vec2::new(1.0, 1.0), 3).unwrap();
        let lap = cotangent_laplacian(&grid);
        let cs = constraints_for(
            &[&[(0.1, 0.1, 0.0), (0.8, 0.3, 1.0), (0.9, 0.9, 2.5)]],
            &grid,
        );
        let p = problem(grid, &lap, &cs, 0.05);
        let cold = fit_vector_field(&p, None).unwrap();
        let warm = fit_vector_field(&p, Some(&cold)).unwrap();
        for i in 0..grid.n_vertices() {
            assert!((cold.value_at_vertex(i) - warm.value_at_vertex(i)).norm() < 1e-8);
        }
    }
}
