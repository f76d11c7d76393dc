//! Cross-view tracklet distances and propagable-distance clustering.
//!
//! The distance between two windowed tracklets is the mean normalized
//! epipolar distance over their shared frames. Tracklets without shared
//! frames get an incalculable distance, and same-camera tracklets that
//! share frames are forbidden from joining. Clustering is complete linkage
//! where a merge inherits the calculable side of an incalculable pair, so
//! tracklets that never co-occur can still end up in one cluster through a
//! third view.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalized_pair_distance, pose_pair_distance, GeometryError, Rig};
use crate::svtrack::Tracklet2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssocMode {
    /// Bounding-box centers.
    #[default]
    Box,
    /// Per-joint distances averaged over jointly valid keypoints.
    Pose,
}

impl fmt::Display for AssocMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssocMode::Box => "box",
            AssocMode::Pose => "pose",
        })
    }
}

impl std::str::FromStr for AssocMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "box" => Ok(Self::Box),
            "pose" => Ok(Self::Pose),
            other => Err(format!("unknown association mode `{other}` (box | pose)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackletDistance {
    Finite(f64),
    /// No shared frames: the distance cannot be computed.
    Incalculable,
    /// Same camera with shared frames: never the same person.
    Forbidden,
}

impl TrackletDistance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Self::Finite(d) => Some(d),
            _ => None,
        }
    }

    /// Distance of a merged cluster to a third cluster, given the two
    /// parts' distances to it.
    pub fn propagate(a: Self, b: Self) -> Self {
        use TrackletDistance::*;
        match (a, b) {
            (Incalculable, Incalculable) => Incalculable,
            (Incalculable, x) | (x, Incalculable) => x,
            (Forbidden, _) | (_, Forbidden) => Forbidden,
            (Finite(x), Finite(y)) => Finite(x.max(y)),
        }
    }
}

/// Per-frame normalized distances over the shared frames of two tracklets
/// from different cameras. Frames whose distance cannot be evaluated
/// (no common joint, zero-size box) are skipped.
pub fn pairwise_set_distance(
    a: &Tracklet2D,
    b: &Tracklet2D,
    rig: &Rig,
    mode: AssocMode,
) -> Result<Vec<f64>, GeometryError> {
    if a.camera_id == b.camera_id {
        return Err(GeometryError::SameCamera(a.camera_id));
    }
    let f = rig
        .fundamental(a.camera_id, b.camera_id)
        .ok_or(GeometryError::UnknownCamera(a.camera_id))?;
    let mut out = Vec::new();
    for t in a.common_frames(b) {
        let (oa, ob) = (&a.observations[&t], &b.observations[&t]);
        let d = match mode {
            AssocMode::Box => normalized_pair_distance(oa, ob, f),
            AssocMode::Pose => pose_pair_distance(oa, ob, f),
        };
        match d {
            Ok(d) => out.push(d),
            Err(
                GeometryError::NoCommonJoints
                | GeometryError::DegenerateBox
                | GeometryError::NullLine
                | GeometryError::MissingKeypoints,
            ) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

pub fn tracklet_distance(
    a: &Tracklet2D,
    b: &Tracklet2D,
    rig: &Rig,
    mode: AssocMode,
) -> Result<TrackletDistance, GeometryError> {
    if a.common_frames(b).next().is_none() {
        return Ok(TrackletDistance::Incalculable);
    }
    if a.camera_id == b.camera_id {
        return Ok(TrackletDistance::Forbidden);
    }
    let set = pairwise_set_distance(a, b, rig, mode)?;
    if set.is_empty() {
        return Ok(TrackletDistance::Incalculable);
    }
    Ok(TrackletDistance::Finite(
        set.iter().sum::<f64>() / set.len() as f64,
    ))
}

/// Symmetric matrix of tracklet distances; the diagonal is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<TrackletDistance>,
}

impl DistanceMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            data: vec![TrackletDistance::Incalculable; n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> TrackletDistance) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> TrackletDistance {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, d: TrackletDistance) {
        self.data[i * self.n + j] = d;
        self.data[j * self.n + i] = d;
    }

    pub fn compute(
        tracklets: &[&Tracklet2D],
        rig: &Rig,
        mode: AssocMode,
    ) -> Result<Self, GeometryError> {
        let mut m = Self::new(tracklets.len());
        for i in 0..tracklets.len() {
            for j in i + 1..tracklets.len() {
                m.set(i, j, tracklet_distance(tracklets[i], tracklets[j], rig, mode)?);
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeRecord {
    /// Cluster slots (lowest member index of each side) that were merged.
    pub left: usize,
    pub right: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet {
    /// Disjoint, sorted member lists ordered by their smallest member.
    pub clusters: Vec<Vec<usize>>,
    /// Distances between the final clusters, same order as `clusters`.
    pub distances: DistanceMatrix,
    /// Audit log of executed merges, in order.
    pub merges: Vec<MergeRecord>,
}

impl ClusterSet {
    pub fn cluster_of(&self, member: usize) -> Option<usize> {
        self.clusters.iter().position(|c| c.contains(&member))
    }
}

/// Greedy agglomerative clustering over a distance matrix with incalculable
/// entries. Ties between equally close pairs go to the lexicographically
/// smallest `(slot, slot)` pair.
#[allow(clippy::needless_range_loop)]
pub fn pdnc(distances: &DistanceMatrix, lambda: f64) -> ClusterSet {
    let n = distances.len();
    let mut d = distances.clone();
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut alive = vec![true; n];
    let mut merges = Vec::new();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in i + 1..n {
                if !alive[j] {
                    continue;
                }
                if let TrackletDistance::Finite(v) = d.get(i, j) {
                    if v < lambda && best.is_none_or(|(_, _, b)| v < b) {
                        best = Some((i, j, v));
                    }
                }
            }
        }
        let Some((i, j, v)) = best else { break };
        for q in 0..n {
            if alive[q] && q != i && q != j {
                d.set(i, q, TrackletDistance::propagate(d.get(i, q), d.get(j, q)));
            }
        }
        alive[j] = false;
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        members[i].sort_unstable();
        merges.push(MergeRecord {
            left: i,
            right: j,
            distance: v,
        });
    }
    let slots: Vec<usize> = (0..n).filter(|&i| alive[i]).collect();
    let final_d = DistanceMatrix::from_fn(slots.len(), |a, b| d.get(slots[a], slots[b]));
    ClusterSet {
        clusters: slots.iter().map(|&s| members[s].clone()).collect(),
        distances: final_d,
        merges,
    }
}

/// True when no cluster holds two same-camera tracklets with shared frames.
pub fn camera_exclusive(clusters: &[Vec<usize>], tracklets: &[&Tracklet2D]) -> bool {
    clusters.iter().all(|c| {
        c.iter().enumerate().all(|(k, &a)| {
            c[k + 1..].iter().all(|&b| {
                let (ta, tb) = (tracklets[a], tracklets[b]);
                ta.camera_id != tb.camera_id || ta.common_frames(tb).next().is_none()
            })
        })
    })
}

/// Conventional alternatives to propagation that substitute a constant for
/// incalculable distances. Kept for comparison runs.
pub mod baselines {
    use super::{DistanceMatrix, TrackletDistance};

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Strategy {
        /// Incalculable → 0, complete linkage.
        LowerBound,
        /// Incalculable → upper bound, complete linkage.
        UpperBoundComplete,
        /// Incalculable → upper bound, single linkage.
        UpperBoundSingle,
    }

    pub fn cluster(
        distances: &DistanceMatrix,
        lambda: f64,
        strategy: Strategy,
        upper_bound: f64,
    ) -> Vec<Vec<usize>> {
        let n = distances.len();
        let fill = match strategy {
            Strategy::LowerBound => 0.0,
            Strategy::UpperBoundComplete | Strategy::UpperBoundSingle => upper_bound,
        };
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if i != j {
                    *cell = match distances.get(i, j) {
                        TrackletDistance::Finite(v) => v,
                        TrackletDistance::Incalculable => fill,
                        TrackletDistance::Forbidden => f64::INFINITY,
                    };
                }
            }
        }
        let single = strategy == Strategy::UpperBoundSingle;
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut alive = vec![true; n];
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..n {
                for j in i + 1..n {
                    if alive[i] && alive[j] && d[i][j] < lambda && best.is_none_or(|b| d[i][j] < b.2) {
                        best = Some((i, j, d[i][j]));
                    }
                }
            }
            let Some((i, j, _)) = best else { break };
            for q in 0..n {
                if alive[q] && q != i && q != j {
                    let v = if single {
                        d[i][q].min(d[j][q])
                    } else {
                        d[i][q].max(d[j][q])
                    };
                    d[i][q] = v;
                    d[q][i] = v;
                }
            }
            alive[j] = false;
            let moved = std::mem::take(&mut members[j]);
            members[i].extend(moved);
            members[i].sort_unstable();
        }
        (0..n).filter(|&i| alive[i]).map(|i| members[i].clone()).collect()
    }
}
