//! Trajectory data model, CSV ingestion, preprocessing, and segment
//! construction.
//!
//! A trajectory is a time-stamped polyline with strictly increasing times,
//! treated as piecewise linear (constant velocity between samples). Each
//! segment of a tessellated trajectory carries a weight `ω = Δt / T`, its
//! share of the dataset's total timespan `T`; the weights of a set always
//! sum to 1.

use std::collections::HashMap;
use std::io::Read;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{FaceRef, Grid};

/// A time-stamped polyline with at least two samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    id: String,
    samples: Vec<(Vec2, f64)>,
}

impl Trajectory {
    pub fn new(id: impl Into<String>, samples: Vec<(Vec2, f64)>) -> Result<Trajectory> {
        let id = id.into();
        if samples.len() < 2 {
            return Err(Error::MalformedTrajectory {
                id,
                reason: format!("needs at least 2 samples, got {}", samples.len()),
            });
        }
        for pair in samples.windows(2) {
            if !(pair[1].1 > pair[0].1) {
                return Err(Error::MalformedTrajectory {
                    id,
                    reason: format!(
                        "times must strictly increase: {} then {}",
                        pair[0].1, pair[1].1
                    ),
                });
            }
        }
        if samples.iter().any(|(p, t)| !p.is_finite() || !t.is_finite()) {
            return Err(Error::MalformedTrajectory {
                id,
                reason: "non-finite sample".into(),
            });
        }
        Ok(Trajectory { id, samples })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn samples(&self) -> &[(Vec2, f64)] {
        &self.samples
    }

    pub fn timespan(&self) -> f64 {
        self.samples.last().unwrap().1 - self.samples[0].1
    }

    /// Cuts the trajectory at every inter-sample gap strictly larger than
    /// `factor` times this trajectory's median gap. Pieces with fewer than
    /// 2 samples are discarded; the second element counts them. When no gap
    /// splits, the trajectory is returned unchanged (id untouched).
    pub fn split_on_gaps(&self, factor: f64) -> (Vec<Trajectory>, usize) {
        let gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].1 - w[0].1).collect();
        self.split_at_threshold(factor * median(&gaps))
    }

    /// Single-pass split at an absolute gap threshold (strict inequality).
    /// Re-splitting any resulting piece at the same threshold is a no-op.
    pub fn split_at_threshold(&self, threshold: f64) -> (Vec<Trajectory>, usize) {
        let gaps: Vec<f64> = self.samples.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let mut pieces: Vec<Vec<(Vec2, f64)>> = vec![Vec::new()];
        for (i, &s) in self.samples.iter().enumerate() {
            if i > 0 && gaps[i - 1] > threshold {
                pieces.push(Vec::new());
            }
            pieces.last_mut().unwrap().push(s);
        }
        if pieces.len() == 1 {
            return (vec![self.clone()], 0);
        }
        let mut out = Vec::new();
        let mut dropped = 0;
        for (k, piece) in pieces.into_iter().enumerate() {
            if piece.len() < 2 {
                dropped += 1;
            } else {
                out.push(Trajectory::new(format!("{}.{}", self.id, k), piece).unwrap());
            }
        }
        (out, dropped)
    }

    /// Greedy thinning: keeps the first sample and every sample at least
    /// `min_dt` after the last kept one; the final sample is always kept.
    pub fn resample_min_interval(&self, min_dt: f64) -> Trajectory {
        let mut kept: Vec<(Vec2, f64)> = vec![self.samples[0]];
        for &s in &self.samples[1..] {
            if s.1 - kept.last().unwrap().1 >= min_dt {
                kept.push(s);
            }
        }
        let last = *self.samples.last().unwrap();
        if last.1 > kept.last().unwrap().1 {
            kept.push(last);
        }
        Trajectory::new(self.id.clone(), kept).unwrap()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// A set of trajectories; the unit the clustering operates on.
#[derive(Debug, Clone, Default)]
pub struct TrajectorySet {
    pub trajectories: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<TrajectorySet> {
        if trajectories.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory set".into()));
        }
        Ok(TrajectorySet { trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Total timespan T, the normalizer of all segment weights.
    pub fn total_timespan(&self) -> f64 {
        self.trajectories.iter().map(Trajectory::timespan).sum()
    }

    pub fn points(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.trajectories
            .iter()
            .flat_map(|t| t.samples().iter().map(|(p, _)| *p))
    }
}

/// Result of parsing a trajectory stream, with drop accounting.
#[derive(Debug)]
pub struct ParseReport {
    pub set: TrajectorySet,
    /// Ids dropped for having a single sample.
    pub dropped_single_sample: Vec<String>,
}

/// Parses CSV records `id,t,x,y` (header required, `#` comments allowed,
/// extra columns ignored) into a trajectory set. Records are grouped by id
/// and sorted by time; a duplicated timestamp within an id is an error;
/// ids with fewer than 2 samples are dropped and reported.
pub fn parse_trajectories<R: Read>(reader: R) -> Result<ParseReport> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr
        .headers()
        .map_err(|e| csv_error(&e))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing required column `{name}`"),
            })
    };
    let (ci, ct, cx, cy) = (col("id")?, col("t")?, col("x")?, col("y")?);

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<(Vec2, f64)>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(&e))?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |idx: usize| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected at least {} columns", idx + 1),
            })
        };
        let number = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx)?;
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("column `{name}`: `{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: format!("column `{name}`: non-finite value"),
                });
            }
            Ok(v)
        };
        let id = field(ci)?.to_string();
        let t = number(ct, "t")?;
        let p = Vec2::new(number(cx, "x")?, number(cy, "y")?);
        if !groups.contains_key(&id) {
            order.push(id.clone());
        }
        groups.entry(id).or_default().push((p, t));
    }

    let mut trajectories = Vec::new();
    let mut dropped = Vec::new();
    for id in order {
        let mut samples = groups.remove(&id).unwrap();
        samples.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        if samples.windows(2).any(|w| w[0].1 == w[1].1) {
            return Err(Error::MalformedTrajectory {
                id,
                reason: "duplicate timestamp".into(),
            });
        }
        if samples.len() < 2 {
            dropped.push(id);
        } else {
            trajectories.push(Trajectory::new(id, samples)?);
        }
    }
    Ok(ParseReport {
        set: TrajectorySet::new(trajectories)?,
        dropped_single_sample: dropped,
    })
}

fn csv_error(e: &csv::Error) -> Error {
    let line = match e.kind() {
        csv::ErrorKind::Utf8 { pos, .. } => pos.as_ref().map_or(0, |p| p.line()),
        _ => e.position().map_or(0, |p| p.line()),
    };
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Drop accounting for [`preprocess`].
#[derive(Debug, Default, Clone, Copy)]
pub struct PreprocessSummary {
    pub pieces_dropped: usize,
    pub trajectories_split: usize,
}

/// Applies the standard preprocessing pipeline: gap splitting first (the
/// resampling below changes the gap distribution), then resampling.
pub fn preprocess(
    set: TrajectorySet,
    split_factor: Option<f64>,
    min_dt: Option<f64>,
) -> Result<(TrajectorySet, PreprocessSummary)> {
    let mut summary = PreprocessSummary::default();
    let mut out = Vec::new();
    for traj in set.trajectories {
        let pieces = match split_factor {
            Some(f) => {
                let (pieces, dropped) = traj.split_on_gaps(f);
                summary.pieces_dropped += dropped;
                if pieces.len() > 1 || dropped > 0 {
                    summary.trajectories_split += 1;
                }
                pieces
            }
            None => vec![traj],
        };
        for piece in pieces {
            out.push(match min_dt {
                Some(dt) => piece.resample_min_interval(dt),
                None => piece,
            });
        }
    }
    Ok((TrajectorySet::new(out)?, summary))
}

/// One tessellated trajectory segment: lies in a single grid triangle,
/// carries its constant velocity and its share of the total timespan.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub p0: Vec2,
    pub p1: Vec2,
    pub t0: f64,
    pub t1: f64,
    /// Δposition / Δtime.
    pub velocity: Vec2,
    /// ω = Δtime / T.
    pub weight: f64,
    /// Index of the owning trajectory within its set.
    pub traj: usize,
    pub face: FaceRef,
}

/// Tessellates every trajectory against the grid and emits weighted
/// segments. Weights are normalized by the set's total timespan, so they
/// sum to 1 over the whole set. Tessellation happens per input segment and
/// the pieces inherit the parent's velocity exactly: recomputing finite
/// differences across an interpolated crossing time would lose digits to
/// cancellation when gaps are tiny against absolute times.
pub fn build_segments(set: &TrajectorySet, grid: &Grid) -> Result<Vec<Segment>> {
    let total = set.total_timespan();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument(
            "trajectory set has zero total timespan".into(),
        ));
    }
    let mut segments = Vec::new();
    for (index, traj) in set.trajectories.iter().enumerate() {
        for parent in traj.samples().windows(2) {
            let velocity = (parent[1].0 - parent[0].0) / (parent[1].1 - parent[0].1);
            let tessellated = grid.tessellate(parent).map_err(|e| match e {
                Error::OutOfDomain {
                    axis,
                    value,
                    min,
                    max,
                    ..
                } => Error::OutOfDomain {
                    subject: format!("trajectory {}", traj.id()),
                    axis,
                    value,
                    min,
                    max,
                },
                other => other,
            })?;
            for pair in tessellated.windows(2) {
                let ((p0, t0), (p1, t1)) = (pair[0], pair[1]);
                let midpoint = p0.lerp(p1, 0.5);
                let (face, _) = grid.locate(midpoint)?;
                segments.push(Segment {
                    p0,
                    p1,
                    t0,
                    t1,
                    velocity,
                    weight: (t1 - t0) / total,
                    traj: index,
                    face,
                });
            }
        }
    }
    Ok(segments)
}
