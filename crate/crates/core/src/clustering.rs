//! The vector-field k-means driver: farthest-first initialization, the
//! alternating fit/assign loop, energy tracking, convergence, and
//! empty-cluster repair.
//!
//! The total energy is
//!
//!   E = Σ_j [ λ (Σ_{s∈j} ω_s) ‖L X_j‖²  +  (1 − λ) Σ_{α∈j} ε(X_j, α) ]
//!
//! whose per-cluster minimizer over X_j is exactly the fitting system, and
//! whose per-trajectory decomposition is the weighted assignment cost. In
//! `Weighted` mode both half-steps therefore never increase E (up to
//! solver tolerance), and the loop terminates: the assignment space is
//! finite. `PaperLiteral` mode drops the per-trajectory timespan weight
//! from the smoothness term of the assignment cost.

use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{build_constraints, ConstraintSet, TrajConstraints, VectorField};
use crate::grid::Grid;
use crate::laplacian::cotangent_laplacian;
use crate::solver::{fit_vector_field, objective_parts, FitProblem};
use crate::sparse::SparseSymmetric;
use crate::trajectory::TrajectorySet;

/// Relative energy decrease below which the loop is considered converged.
pub const REL_ENERGY_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignMode {
    /// Per-trajectory cost (1−λ)ε + λ·w_α·‖LX‖², the exact per-trajectory
    /// decomposition of the fit objective. Default.
    Weighted,
    /// Per-trajectory cost (1−λ)ε + λ·‖LX‖², the literal assignment
    /// expression.
    PaperLiteral,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringConfig {
    pub k: usize,
    pub resolution: usize,
    pub lambda: f64,
    pub max_iter: usize,
    pub cg_tol: f64,
    /// Defaults to 10·R² when unset.
    pub cg_max_iter: Option<usize>,
    pub seed: u64,
    pub mode: AssignMode,
    /// Pins the first initialization pick to a trajectory id instead of a
    /// random draw; makes runs reproducible under input reordering.
    pub pin_first: Option<String>,
}

impl ClusteringConfig {
    pub fn new(k: usize, resolution: usize) -> ClusteringConfig {
        ClusteringConfig {
            k,
            resolution,
            lambda: 0.05,
            max_iter: 100,
            cg_tol: 1e-9,
            cg_max_iter: None,
            seed: 0,
            mode: AssignMode::Weighted,
            pin_first: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.resolution < 2 {
            return Err(Error::InvalidArgument(
                "grid resolution must be at least 2".into(),
            ));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must lie strictly inside (0, 1), got {}",
                self.lambda
            )));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::InvalidArgument("cg_tol must be positive".into()));
        }
        Ok(())
    }

    fn cg_max_iter(&self) -> usize {
        self.cg_max_iter
            .unwrap_or(10 * self.resolution * self.resolution)
    }
}

/// The map from trajectory index to cluster index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Assignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }
}

/// Energy of a (fields, assignment) state, split per cluster.
#[derive(Debug, Clone)]
pub struct EnergyBreakdown {
    pub total: f64,
    /// λ (Σ_{s∈j} ω_s) ‖L X_j‖² per cluster.
    pub smooth: Vec<f64>,
    /// (1 − λ) Σ_{α∈j} ε(X_j, α) per cluster.
    pub fit: Vec<f64>,
}

/// One line of the energy/iteration log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "E_total")]
    pub e_total: f64,
    #[serde(rename = "E_smooth")]
    pub e_smooth: Vec<f64>,
    #[serde(rename = "E_fit")]
    pub e_fit: Vec<f64>,
    pub cluster_sizes: Vec<usize>,
    pub moved: usize,
    /// Energy entering the fit step (after any repair); test bookkeeping.
    #[serde(skip)]
    pub e_pre_fit: f64,
    /// Energy right after the fit step, before reassignment.
    #[serde(skip)]
    pub e_after_fit: f64,
    #[serde(skip)]
    pub repaired: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceStatus {
    /// The assignment repeated: a fixpoint.
    AssignmentFixpoint,
    /// Relative energy decrease fell below [`REL_ENERGY_TOL`].
    EnergyTolerance,
    /// The outer iteration cap was reached.
    MaxIterations,
}

/// Wall time spent in each phase, across the whole run.
#[derive(Debug, Clone, Copy, Default)]
pub struct PhaseTimings {
    pub fit: Duration,
    pub eval: Duration,
    pub assign: Duration,
}

#[derive(Debug, Clone)]
pub struct RunState {
    pub fields: Vec<VectorField>,
    pub assignment: Assignment,
    pub history: Vec<IterationRecord>,
    pub seed: u64,
    pub status: ConvergenceStatus,
    pub timings: PhaseTimings,
}

impl RunState {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }

    pub fn final_energy(&self) -> f64 {
        self.history.last().unwrap().e_total
    }
}

/// Precomputed machinery for one clustering problem: the grid over the
/// data's bounding box, its Laplacian, and the per-trajectory constraints.
/// Immutable once built; every method is read-only.
pub struct ClusterEngine {
    config: ClusteringConfig,
    grid: Grid,
    laplacian: SparseSymmetric,
    constraints: ConstraintSet,
    ids: Vec<String>,
}

impl ClusterEngine {
    pub fn new(config: &ClusteringConfig, set: &TrajectorySet) -> Result<ClusterEngine> {
        config.validate()?;
        if set.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory set".into()));
        }
        if set.len() < config.k {
            return Err(Error::InvalidArgument(format!(
                "{} trajectories cannot form {} clusters",
                set.len(),
                config.k
            )));
        }
        if config.pin_first.as_deref().is_some_and(|id| {
            !set.trajectories.iter().any(|t| t.id() == id)
        }) {
            return Err(Error::InvalidArgument(format!(
                "pinned seed trajectory `{}` not in the dataset",
                config.pin_first.as_deref().unwrap()
            )));
        }
        let grid = Grid::from_points(set.points(), config.resolution)?;
        let laplacian = cotangent_laplacian(&grid);
        let constraints = build_constraints(set, &grid)?;
        Ok(ClusterEngine {
            config: config.clone(),
            grid,
            laplacian,
            constraints,
            ids: set.trajectories.iter().map(|t| t.id().to_string()).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn laplacian(&self) -> &SparseSymmetric {
        &self.laplacian
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn n_trajectories(&self) -> usize {
        self.constraints.n_trajectories()
    }

    /// Trajectory ids, in set order (the order `Assignment` labels use).
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn groups(&self) -> &[TrajConstraints] {
        self.constraints.groups()
    }

    /// Mode-dependent per-trajectory cost against one field, given that
    /// field's precomputed ‖LX‖².
    fn traj_cost(&self, field: &VectorField, smooth: f64, traj: usize) -> f64 {
        let group = &self.groups()[traj];
        let eps = crate::field::traj_error_unchecked(field, group);
        let lambda = self.config.lambda;
        match self.config.mode {
            AssignMode::Weighted => (1.0 - lambda) * eps + lambda * group.weight * smooth,
            AssignMode::PaperLiteral => (1.0 - lambda) * eps + lambda * smooth,
        }
    }

    /// The n×k matrix of assignment costs. This is the error-evaluation
    /// phase of the algorithm; its cost is linear in k times the total
    /// segment count.
    pub fn evaluate_costs(&self, fields: &[VectorField]) -> Result<Vec<Vec<f64>>> {
        let smooth: Vec<f64> = fields
            .iter()
            .map(|f| {
                self.constraints.check_grid(f)?;
                crate::field::smoothness_energy(&self.laplacian, f)
            })
            .collect::<Result<_>>()?;
        Ok((0..self.n_trajectories())
            .map(|i| {
                fields
                    .iter()
                    .zip(&smooth)
                    .map(|(f, &s)| self.traj_cost(f, s, i))
                    .collect()
            })
            .collect())
    }

    /// Maps every trajectory to its best field; ties break to the lowest
    /// cluster index.
    pub fn assign(&self, fields: &[VectorField]) -> Result<Assignment> {
        let costs = self.evaluate_costs(fields)?;
        Ok(Assignment {
            labels: costs.iter().map(|row| argmin(row)).collect(),
            k: fields.len(),
        })
    }

    fn fit_members(
        &self,
        members: &[usize],
        warm: Option<&VectorField>,
    ) -> Result<VectorField> {
        let problem = FitProblem {
            grid: self.grid,
            laplacian: &self.laplacian,
            groups: members.iter().map(|&i| &self.groups()[i]).collect(),
            lambda: self.config.lambda,
            cg_tol: self.config.cg_tol,
            cg_max_iter: self.config.cg_max_iter(),
        };
        fit_vector_field(&problem, warm)
    }

    /// Total energy of a state and its per-cluster breakdown.
    pub fn total_energy(
        &self,
        fields: &[VectorField],
        assignment: &Assignment,
    ) -> Result<EnergyBreakdown> {
        if fields.len() != assignment.k {
            return Err(Error::InvalidArgument(format!(
                "{} fields for {} clusters",
                fields.len(),
                assignment.k
            )));
        }
        let mut smooth = Vec::with_capacity(fields.len());
        let mut fit = Vec::with_capacity(fields.len());
        for (j, field) in fields.iter().enumerate() {
            self.constraints.check_grid(field)?;
            let groups: Vec<&TrajConstraints> = assignment
                .members(j)
                .into_iter()
                .map(|i| &self.groups()[i])
                .collect();
            let (s, f) = objective_parts(&self.laplacian, self.config.lambda, &groups, field);
            smooth.push(s);
            fit.push(f);
        }
        let total = smooth.iter().sum::<f64>() + fit.iter().sum::<f64>();
        Ok(EnergyBreakdown { total, smooth, fit })
    }

    /// Farthest-first initialization: one random trajectory seeds the first
    /// field; each further seed is the trajectory with the worst best-case
    /// error against the fields built so far.
    fn initialize(
        &self,
        rng: &mut ChaCha8Rng,
        timings: &mut PhaseTimings,
    ) -> Result<(Vec<VectorField>, Assignment)> {
        let n = self.n_trajectories();
        let first = match &self.config.pin_first {
            Some(_) => self.pinned_index()?,
            None => rng.random_range(0..n),
        };
        let t0 = Instant::now();
        let mut fields = vec![self.fit_members(&[first], None)?];
        timings.fit += t0.elapsed();

        let mut best_cost = vec![f64::INFINITY; n];
        for _ in 1..self.config.k {
            let t0 = Instant::now();
            let last = fields.last().unwrap();
            let smooth = crate::field::smoothness_energy(&self.laplacian, last)?;
            for (i, best) in best_cost.iter_mut().enumerate() {
                *best = best.min(self.traj_cost(last, smooth, i));
            }
            let pick = argmax(&best_cost);
            timings.eval += t0.elapsed();
            let t0 = Instant::now();
            fields.push(self.fit_members(&[pick], None)?);
            timings.fit += t0.elapsed();
        }

        let t0 = Instant::now();
        let assignment = self.assign(&fields)?;
        timings.eval += t0.elapsed();
        Ok((fields, assignment))
    }

    fn pinned_index(&self) -> Result<usize> {
        let id = self.config.pin_first.as_deref().unwrap();
        self.ids
            .iter()
            .position(|t| t == id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown trajectory id `{id}`")))
    }

    /// Repopulates empty clusters by moving the worst-fitting half of the
    /// largest cluster's members (judged against that cluster's current
    /// field) into the empty one. Deterministic; returns how many clusters
    /// were repaired.
    fn repair_empty(&self, labels: &mut [usize], fields: &[VectorField]) -> usize {
        let k = fields.len();
        let mut repaired = 0;
        loop {
            let mut sizes = vec![0usize; k];
            for &l in labels.iter() {
                sizes[l] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else {
                break;
            };
            let largest = argmax_usize(&sizes);
            if sizes[largest] < 2 {
                break;
            }
            let smooth = crate::field::smoothness_energy(&self.laplacian, &fields[largest])
                .expect("fields and constraints share the engine grid");
            let mut members: Vec<(f64, usize)> = (0..labels.len())
                .filter(|&i| labels[i] == largest)
                .map(|i| (self.traj_cost(&fields[largest], smooth, i), i))
                .collect();
            members.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            for &(_, i) in members.iter().take(members.len() / 2) {
                labels[i] = empty;
            }
            repaired += 1;
        }
        repaired
    }

    /// Runs the alternating optimize/assign loop to convergence.
    pub fn run(&self) -> Result<RunState> {
        let mut timings = PhaseTimings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let (mut fields, mut assignment) = self.initialize(&mut rng, &mut timings)?;

        let e0 = self.total_energy(&fields, &assignment)?;
        let mut history = vec![IterationRecord {
            iter: 0,
            e_total: e0.total,
            e_smooth: e0.smooth,
            e_fit: e0.fit,
            cluster_sizes: assignment.cluster_sizes(),
            moved: 0,
            e_pre_fit: e0.total,
            e_after_fit: e0.total,
            repaired: 0,
        }];
        let mut prev_total = e0.total;
        let mut status = ConvergenceStatus::MaxIterations;

        for iter in 1..=self.config.max_iter {
            let repaired = self.repair_empty(&mut assignment.labels, &fields);
            let e_pre_fit = if repaired > 0 {
                self.total_energy(&fields, &assignment)?.total
            } else {
                prev_total
            };

            let t0 = Instant::now();
            for j in 0..self.config.k {
                let members = assignment.members(j);
                if members.is_empty() {
                    continue; // unreachable after repair while n >= k
                }
                fields[j] = self.fit_members(&members, Some(&fields[j]))?;
            }
            timings.fit += t0.elapsed();
            let e_after_fit = self.total_energy(&fields, &assignment)?.total;

            let t0 = Instant::now();
            let costs = self.evaluate_costs(&fields)?;
            timings.eval += t0.elapsed();
            let t0 = Instant::now();
            let new_labels: Vec<usize> = costs.iter().map(|row| argmin(row)).collect();
            let moved = new_labels
                .iter()
                .zip(&assignment.labels)
                .filter(|(a, b)| a != b)
                .count();
            assignment.labels = new_labels;
            timings.assign += t0.elapsed();

            let e = self.total_energy(&fields, &assignment)?;
            let e_total = e.total;
            history.push(IterationRecord {
                iter,
                e_total,
                e_smooth: e.smooth,
                e_fit: e.fit,
                cluster_sizes: assignment.cluster_sizes(),
                moved,
                e_pre_fit,
                e_after_fit,
                repaired,
            });

            if moved == 0 {
                status = ConvergenceStatus::AssignmentFixpoint;
                break;
            }
            let decrease = prev_total - e_total;
            if decrease < REL_ENERGY_TOL * prev_total.abs().max(f64::MIN_POSITIVE) {
                status = ConvergenceStatus::EnergyTolerance;
                break;
            }
            prev_total = e_total;
        }

        Ok(RunState {
            fields,
            assignment,
            history,
            seed: self.config.seed,
            status,
            timings,
        })
    }
}

/// Convenience entry point: builds the engine and runs the loop.
pub fn run(config: &ClusteringConfig, set: &TrajectorySet) -> Result<RunState> {
    ClusterEngine::new(config, set)?.run()
}

/// Result of re-clustering one cluster's trajectories.
pub struct SubclusterResult {
    pub run: RunState,
    /// Indices of the subclustered trajectories within the original set.
    pub members: Vec<usize>,
}

/// Re-runs the full algorithm on one cluster's trajectories, with a fresh
/// grid over their own bounding box. Trajectory ids survive end to end.
pub fn subcluster(
    set: &TrajectorySet,
    assignment: &Assignment,
    cluster: usize,
    config: &ClusteringConfig,
) -> Result<SubclusterResult> {
    if cluster >= assignment.k {
        return Err(Error::InvalidArgument(format!(
            "cluster {cluster} out of range (k = {})",
            assignment.k
        )));
    }
    let members = assignment.members(cluster);
    if members.is_empty() {
        return Err(Error::InvalidArgument(format!("cluster {cluster} is empty")));
    }
    let subset = TrajectorySet::new(
        members
            .iter()
            .map(|&i| set.trajectories[i].clone())
            .collect(),
    )?;
    Ok(SubclusterResult {
        run: run(config, &subset)?,
        members,
    })
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v < row[best] {
            best = j;
        }
    }
    best
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn argmax_usize(row: &[usize]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::synth::{two_circles, TwoCirclesSpec};
    use crate::trajectory::Trajectory;

    fn small_two_circles(seed: u64, per_pattern: usize) -> (TrajectorySet, Vec<usize>) {
        let data = two_circles(&TwoCirclesSpec {
            per_pattern,
            seed,
            ..TwoCirclesSpec::default()
        })
        .unwrap();
        let labels = data.iter().map(|(_, l)| *l).collect();
        let set = TrajectorySet::new(data.into_iter().map(|(t, _)| t).collect()).unwrap();
        (set, labels)
    }

    fn constant_field_set(v0: Vec2, count: usize) -> TrajectorySet {
        let mut trajs = Vec::new();
        for i in 0..count {
            let start = Vec2::new(0.05 * i as f64, 0.9 - 0.03 * i as f64);
            let pts: Vec<(Vec2, f64)> = (0..4)
                .map(|k| {
                    let t = 0.4 * k as f64;
                    (start + v0 * t, t)
                })
                .collect();
            trajs.push(Trajectory::new(format!("c{i}"), pts).unwrap());
        }
        TrajectorySet::new(trajs).unwrap()
    }

    fn agreement(labels: &[usize], truth: &[usize]) -> usize {
        let direct = labels.iter().zip(truth).filter(|(a, b)| a == b).count();
        let flipped = labels
            .iter()
            .zip(truth)
            .filter(|(a, b)| **a == 1 - **b)
            .count();
        direct.max(flipped)
    }

    #[test]
    fn k1_assigns_everything_to_cluster_zero() {
        let (set, _) = small_two_circles(3, 10);
        let state = run(&ClusteringConfig::new(1, 3), &set).unwrap();
        assert!(state.assignment.labels.iter().all(|&l| l == 0));
        // one fit, then the first assignment is already a fixpoint
        assert_eq!(state.iterations(), 1);
        assert_eq!(state.status, ConvergenceStatus::AssignmentFixpoint);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (set, _) = small_two_circles(5, 30);
        let config = ClusteringConfig {
            seed: 11,
            ..ClusteringConfig::new(2, 3)
        };
        let a = run(&config, &set).unwrap();
        let b = run(&config, &set).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.fields, b.fields);
    }

    #[test]
    fn rejects_more_clusters_than_trajectories() {
        let (set, _) = small_two_circles(0, 2);
        assert!(run(&ClusteringConfig::new(5, 3), &set).is_err());
    }

    #[test]
    fn init_seeds_come_from_different_circles() {
        // farthest-first: the second seed should land on the other pattern
        let (set, truth) = small_two_circles(7, 50);
        let mut hits = 0;
        let total = 100;
        for seed in 0..total {
            let config = ClusteringConfig {
                seed,
                max_iter: 0,
                ..ClusteringConfig::new(2, 3)
            };
            let engine = ClusterEngine::new(&config, &set).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut timings = PhaseTimings::default();
            let (fields, _) = engine.initialize(&mut rng, &mut timings).unwrap();
            // recover which trajectory seeded each field: the trajectory
            // with minimal cost against it
            let costs = engine.evaluate_costs(&fields).unwrap();
            let seed_traj: Vec<usize> = (0..2)
                .map(|j| {
                    (0..set.len())
                        .min_by(|&a, &b| costs[a][j].partial_cmp(&costs[b][j]).unwrap())
                        .unwrap()
                })
                .collect();
            if truth[seed_traj[0]] != truth[seed_traj[1]] {
                hits += 1;
            }
        }
        assert!(hits >= 95, "seeds separated in only {hits}/{total} runs");
    }

    #[test]
    fn assign_prefers_tangent_field() {
        let set = constant_field_set(Vec2::new(0.2, 0.0), 4);
        let config = ClusteringConfig::new(2, 3);
        let engine = ClusterEngine::new(&config, &set).unwrap();
        // two constant fields, equal (zero) Laplacian energy
        let tangent = VectorField::constant(*engine.grid(), Vec2::new(0.2, 0.0));
        let other = VectorField::constant(*engine.grid(), Vec2::new(-0.3, 0.1));
        let a = engine.assign(&[other.clone(), tangent.clone()]).unwrap();
        assert!(a.labels.iter().all(|&l| l == 1));
        // identical fields: tie-break sends everything to cluster 0
        let t = engine.assign(&[tangent.clone(), tangent]).unwrap();
        assert!(t.labels.iter().all(|&l| l == 0));
    }

    #[test]
    fn zero_field_energy_matches_closed_form() {
        let (set, _) = small_two_circles(1, 10);
        let config = ClusteringConfig::new(1, 3);
        let engine = ClusterEngine::new(&config, &set).unwrap();
        let zero = VectorField::zeros(*engine.grid());
        let assignment = Assignment {
            labels: vec![0; set.len()],
            k: 1,
        };
        let e = engine.total_energy(&[zero], &assignment).unwrap();
        let expected: f64 = (1.0 - config.lambda)
            * engine
                .constraints()
                .groups()
                .iter()
                .flat_map(|g| g.constraints.iter())
                .map(|c| c.weight * c.velocity.norm_sq())
                .sum::<f64>();
        assert!((e.total - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn tangent_constant_fields_give_zero_energy() {
        let v0 = Vec2::new(0.15, -0.1);
        let set = constant_field_set(v0, 6);
        let config = ClusteringConfig::new(2, 3);
        let engine = ClusterEngine::new(&config, &set).unwrap();
        let f = VectorField::constant(*engine.grid(), v0);
        let assignment = Assignment {
            labels: (0..6).map(|i| i % 2).collect(),
            k: 2,
        };
        let e = engine.total_energy(&[f.clone(), f], &assignment).unwrap();
        assert!(e.total < 1e-20);
    }

    #[test]
    fn constant_field_dataset_ends_below_zero_energy_certificate() {
        let v0 = Vec2::new(0.3, 0.05);
        let set = constant_field_set(v0, 8);
        let state = run(&ClusteringConfig::new(2, 3), &set).unwrap();
        assert!(state.final_energy() < 1e-10);
    }

    #[test]
    fn energy_is_monotone_across_half_steps_in_weighted_mode() {
        let (set, _) = small_two_circles(2, 60);
        let state = run(&ClusteringConfig::new(3, 3), &set).unwrap();
        for rec in &state.history[1..] {
            let slack = 1e-6 * rec.e_pre_fit.abs() + 1e-15;
            assert!(
                rec.e_after_fit <= rec.e_pre_fit + slack,
                "iter {}: fit raised energy {} -> {}",
                rec.iter,
                rec.e_pre_fit,
                rec.e_after_fit
            );
            assert!(
                rec.e_total <= rec.e_after_fit + 1e-6 * rec.e_after_fit.abs() + 1e-15,
                "iter {}: assign raised energy {} -> {}",
                rec.iter,
                rec.e_after_fit,
                rec.e_total
            );
        }
    }

    #[test]
    fn assignment_is_locally_optimal() {
        let (set, _) = small_two_circles(4, 20);
        let config = ClusteringConfig::new(2, 3);
        let engine = ClusterEngine::new(&config, &set).unwrap();
        let state = engine.run().unwrap();
        let costs = engine.evaluate_costs(&state.fields).unwrap();
        for (i, row) in costs.iter().enumerate() {
            let mine = row[state.assignment.labels[i]];
            for &c in row {
                assert!(mine <= c + 1e-15);
            }
        }
    }

    #[test]
    fn permutation_invariance_with_pinned_seed() {
        let (set, _) = small_two_circles(9, 24);
        let pinned = set.trajectories[5].id().to_string();
        let config = ClusteringConfig {
            pin_first: Some(pinned),
            ..ClusteringConfig::new(2, 3)
        };
        let forward = run(&config, &set).unwrap();

        let mut reversed_trajs = set.trajectories.clone();
        reversed_trajs.reverse();
        let reversed_set = TrajectorySet::new(reversed_trajs).unwrap();
        let backward = run(&config, &reversed_set).unwrap();

        let n = set.len();
        // same partition up to cluster relabeling
        let mut label_map = std::collections::HashMap::new();
        for i in 0..n {
            let a = forward.assignment.labels[i];
            let b = backward.assignment.labels[n - 1 - i];
            match label_map.entry(a) {
                std::collections::hash_map::Entry::Vacant(e) => {
                    e.insert(b);
                }
                std::collections::hash_map::Entry::Occupied(e) => {
                    assert_eq!(*e.get(), b, "partitions differ at trajectory {i}");
                }
            }
        }
    }

    #[test]
    fn repair_splits_largest_cluster_deterministically() {
        let (set, _) = small_two_circles(6, 20);
        let config = ClusteringConfig::new(3, 3);
        let engine = ClusterEngine::new(&config, &set).unwrap();
        let f = VectorField::constant(*engine.grid(), Vec2::new(0.1, 0.0));
        let fields = vec![f.clone(), f.clone(), f];
        let mut labels = vec![0usize; set.len()];
        let repaired = engine.repair_empty(&mut labels, &fields);
        assert_eq!(repaired, 2);
        let mut sizes = vec![0usize; 3];
        for &l in &labels {
            sizes[l] += 1;
        }
        assert!(sizes.iter().all(|&s| s > 0), "sizes {sizes:?}");
        // moving half of 40, then half of the remainder
        assert_eq!(sizes, vec![10, 20, 10]);

        let mut labels2 = vec![0usize; set.len()];
        let f2 = VectorField::constant(*engine.grid(), Vec2::new(0.1, 0.0));
        engine.repair_empty(&mut labels2, &vec![f2.clone(), f2.clone(), f2]);
        assert_eq!(labels, labels2);
    }

    #[test]
    fn subcluster_preserves_ids_and_partitions() {
        let (set, _) = small_two_circles(8, 15);
        let state = run(&ClusteringConfig::new(2, 3), &set).unwrap();
        let sub_config = ClusteringConfig::new(1, 3);
        for cluster in 0..2 {
            let members = state.assignment.members(cluster);
            if members.is_empty() {
                continue;
            }
            let sub = subcluster(&set, &state.assignment, cluster, &sub_config).unwrap();
            assert_eq!(sub.members, members);
            assert_eq!(sub.run.assignment.labels.len(), members.len());
        }
        assert!(subcluster(&set, &state.assignment, 99, &sub_config).is_err());
    }

    #[test]
    fn history_jsonl_schema() {
        let (set, _) = small_two_circles(0, 8);
        let state = run(&ClusteringConfig::new(2, 3), &set).unwrap();
        let line = serde_json::to_string(&state.history[0]).unwrap();
        for key in ["iter", "E_total", "E_smooth", "E_fit", "cluster_sizes", "moved"] {
            assert!(line.contains(key), "missing `{key}` in {line}");
        }
        assert!(!line.contains("e_pre_fit"));
    }
}
