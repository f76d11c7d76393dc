//! Multi-frame multi-view triangulation with majority-vote outlier rejection.
//!
//! Each tracklet of a cluster is densified by linear interpolation: gaps of
//! at most `φ` frames on both sides are filled, and every observed frame
//! also gets a smoothed duplicate fitted over its `±φ` neighbours. Every
//! cross-camera pair of entries at a frame is triangulated, the candidates
//! are grouped by complete linkage with cut `κ`, and the centroid of the
//! largest group is the fused position.
//!
//! Two single-frame comparators are provided: the mean of all observed pair
//! candidates, and pair-sampling RANSAC with a reprojection inlier test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;

use nalgebra::{Point2, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::AssocMode;
use crate::geometry::{
    triangulate_pair, triangulate_views, CameraId, Frame, GeometryError, Keypoint, Observation2D,
    Rig,
};
use crate::svtrack::Tracklet2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CmmtError {
    #[error("frame {0}: fewer than two cameras contribute")]
    EmptyFrame(Frame),
    #[error("no frame of the cluster yields a 3D position")]
    EmptyTracklet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriangulationMethod {
    #[default]
    Cmmt,
    Ransac,
    Plain,
}

impl fmt::Display for TriangulationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Cmmt => "cmmt",
            Self::Ransac => "ransac",
            Self::Plain => "plain",
        })
    }
}

impl std::str::FromStr for TriangulationMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cmmt" => Ok(Self::Cmmt),
            "ransac" => Ok(Self::Ransac),
            "plain" => Ok(Self::Plain),
            other => Err(format!("unknown method `{other}` (cmmt | ransac | plain)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmmtParams {
    /// Interpolation half-window φ in frames.
    pub phi: u32,
    /// Clustering cut κ in meters.
    pub kappa: f64,
    pub method: TriangulationMethod,
    pub ransac_iterations: u32,
    /// RANSAC inlier threshold as a fraction of the box scale `w + h`.
    pub ransac_threshold: f64,
    pub seed: u64,
}

impl Default for CmmtParams {
    fn default() -> Self {
        Self {
            phi: 7,
            kappa: 0.2,
            method: TriangulationMethod::Cmmt,
            ransac_iterations: 100,
            ransac_threshold: 0.05,
            seed: 0,
        }
    }
}

/// A fused position: one point in footprint mode, one optional point per
/// joint in pose mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Position3D(pub Vec<Option<Point3<f64>>>);

impl Position3D {
    pub fn point(p: Point3<f64>) -> Self {
        Self(vec![Some(p)])
    }

    pub fn joints(&self) -> &[Option<Point3<f64>>] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.iter().all(Option::is_none)
    }

    /// First valid joint; the point itself in footprint mode.
    pub fn primary(&self) -> Option<Point3<f64>> {
        self.0.iter().flatten().next().copied()
    }

    /// Mean Euclidean distance over joints valid in both positions.
    pub fn distance(&self, other: &Self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for (a, b) in self.0.iter().zip(&other.0) {
            if let (Some(a), Some(b)) = (a, b) {
                sum += (a - b).norm();
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet3D {
    pub keyframe: Frame,
    pub cluster_id: usize,
    pub positions: BTreeMap<Frame, Position3D>,
    /// Frames reconstructed without any observed (non-interpolated) entry.
    pub synthetic: BTreeSet<Frame>,
}

impl Tracklet3D {
    pub fn active_frames(&self) -> impl Iterator<Item = Frame> + '_ {
        self.positions.keys().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedTracklet {
    pub base: Tracklet2D,
    /// Synthesized observations: gap fills and smoothed duplicates.
    pub infill: BTreeMap<Frame, Observation2D>,
}

impl InterpolatedTracklet {
    /// Entries at `frame` as `(observation, synthetic)`; observed first.
    pub fn entries(&self, frame: Frame) -> impl Iterator<Item = (&Observation2D, bool)> {
        self.base
            .observations
            .get(&frame)
            .map(|o| (o, false))
            .into_iter()
            .chain(self.infill.get(&frame).map(|o| (o, true)))
    }

    pub fn frames(&self) -> BTreeSet<Frame> {
        self.base
            .observations
            .keys()
            .chain(self.infill.keys())
            .copied()
            .collect()
    }
}

fn observation_values(o: &Observation2D) -> Vec<Option<f64>> {
    let mut v = vec![Some(o.center.x), Some(o.center.y), Some(o.width), Some(o.height)];
    if let Some(kps) = &o.keypoints {
        for k in kps {
            if k.valid {
                v.extend([Some(k.position.x), Some(k.position.y)]);
            } else {
                v.extend([None, None]);
            }
        }
    }
    v
}

fn observation_from_values(
    template: &Observation2D,
    frame: Frame,
    values: &[Option<f64>],
    score: f64,
) -> Observation2D {
    let keypoints = template.keypoints.as_ref().map(|kps| {
        (0..kps.len())
            .map(|j| match (values[4 + 2 * j], values[5 + 2 * j]) {
                (Some(x), Some(y)) => Keypoint {
                    position: Point2::new(x, y),
                    valid: true,
                },
                _ => Keypoint {
                    position: Point2::origin(),
                    valid: false,
                },
            })
            .collect()
    });
    Observation2D {
        frame,
        camera_id: template.camera_id,
        center: Point2::new(values[0].unwrap_or(0.0), values[1].unwrap_or(0.0)),
        width: values[2].unwrap_or(1.0).max(1.0),
        height: values[3].unwrap_or(1.0).max(1.0),
        keypoints,
        score,
    }
}

fn linear_fit_at(samples: &[(f64, f64)], t: f64) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mf = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let mv = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sff: f64 = samples.iter().map(|s| (s.0 - mf).powi(2)).sum();
    if sff == 0.0 {
        return None;
    }
    let sfv: f64 = samples.iter().map(|s| (s.0 - mf) * (s.1 - mv)).sum();
    Some(mv + sfv / sff * (t - mf))
}

/// Densifies a tracklet inside `range`. Gap frames are filled only when the
/// nearest observations on both sides are within `phi` frames.
pub fn interpolate_tracklet(
    tracklet: &Tracklet2D,
    phi: u32,
    range: &Range<Frame>,
) -> InterpolatedTracklet {
    let obs = &tracklet.observations;
    let frames: Vec<Frame> = obs.keys().copied().collect();
    let mut infill = BTreeMap::new();
    let phi = phi.max(1);

    for pair in frames.windows(2) {
        let (f0, f1) = (pair[0], pair[1]);
        if f1 - f0 < 2 {
            continue;
        }
        let (o0, o1) = (&obs[&f0], &obs[&f1]);
        let (v0, v1) = (observation_values(o0), observation_values(o1));
        for t in f0 + 1..f1 {
            if t - f0 > phi || f1 - t > phi || !range.contains(&t) {
                continue;
            }
            let a = (t - f0) as f64 / (f1 - f0) as f64;
            let values: Vec<Option<f64>> = v0
                .iter()
                .zip(&v1)
                .map(|(x0, x1)| match (x0, x1) {
                    (Some(x0), Some(x1)) => Some(x0 + a * (x1 - x0)),
                    _ => None,
                })
                .collect();
            let score = o0.score + a * (o1.score - o0.score);
            infill.insert(t, observation_from_values(o0, t, &values, score));
        }
    }

    let all_values: Vec<(Frame, Vec<Option<f64>>)> = frames
        .iter()
        .map(|f| (*f, observation_values(&obs[f])))
        .collect();
    for (idx, &t) in frames.iter().enumerate() {
        if !range.contains(&t) {
            continue;
        }
        let lo = all_values[..idx].partition_point(|(f, _)| *f + phi < t);
        let hi = idx + all_values[idx..].partition_point(|(f, _)| *f <= t + phi);
        let neighbourhood = &all_values[lo..hi];
        if neighbourhood.len() < 2 {
            continue;
        }
        let own = &all_values[idx].1;
        let values: Vec<Option<f64>> = (0..own.len())
            .map(|c| {
                own[c]?;
                let samples: Vec<(f64, f64)> = neighbourhood
                    .iter()
                    .filter_map(|(f, v)| v[c].map(|x| (*f as f64, x)))
                    .collect();
                linear_fit_at(&samples, t as f64).or(own[c])
            })
            .collect();
        let o = &obs[&t];
        infill.insert(t, observation_from_values(o, t, &values, o.score));
    }

    InterpolatedTracklet {
        base: tracklet.clone(),
        infill,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub point: Point3<f64>,
    pub cameras: (CameraId, CameraId),
    pub synthetic: (bool, bool),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub frame: Frame,
    pub candidates: Vec<Candidate>,
}

/// One 2D point of one view at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewPoint {
    pub camera_id: CameraId,
    pub point: Point2<f64>,
    /// Box scale `w + h` of the observation the point belongs to.
    pub scale: f64,
    pub synthetic: bool,
}

/// Triangulates every pair of view points from distinct cameras; pairs with
/// a degenerate baseline or a point at infinity are skipped.
pub fn candidate_positions(
    frame: Frame,
    views: &[ViewPoint],
    rig: &Rig,
) -> Result<CandidateSet, CmmtError> {
    let cams: BTreeSet<CameraId> = views.iter().map(|v| v.camera_id).collect();
    if cams.len() < 2 {
        return Err(CmmtError::EmptyFrame(frame));
    }
    let mut candidates = Vec::new();
    for (i, a) in views.iter().enumerate() {
        for b in &views[i + 1..] {
            if a.camera_id == b.camera_id {
                continue;
            }
            let (Some(ca), Some(cb)) = (rig.camera(a.camera_id), rig.camera(b.camera_id)) else {
                continue;
            };
            match triangulate_pair(&a.point, &b.point, ca, cb) {
                Ok(t) => candidates.push(Candidate {
                    point: t.point,
                    cameras: (a.camera_id, b.camera_id),
                    synthetic: (a.synthetic, b.synthetic),
                }),
                Err(GeometryError::DegenerateBaseline | GeometryError::InfinitePoint) => {}
                Err(_) => {}
            }
        }
    }
    if candidates.is_empty() {
        return Err(CmmtError::EmptyFrame(frame));
    }
    Ok(CandidateSet { frame, candidates })
}

/// Agglomerative complete-linkage clustering of 3D points, merging while the
/// closest pair of clusters has a complete-link distance below `kappa`.
/// Clusters come back sorted by their smallest member.
pub fn complete_linkage_3d(points: &[Point3<f64>], kappa: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let mut d = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = (points[i] - points[j]).norm();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let mut alive = vec![true; n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    // Nearest live partner (index > i) of each row.
    let row_min = |d: &[f64], alive: &[bool], i: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, usize::MAX);
        for j in i + 1..n {
            if alive[j] && d[i * n + j] < best.0 {
                best = (d[i * n + j], j);
            }
        }
        best
    };
    let mut nearest: Vec<(f64, usize)> = (0..n).map(|i| row_min(&d, &alive, i)).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if alive[i] && nearest[i].1 != usize::MAX && nearest[i].0 < kappa && best.is_none_or(|b| nearest[i].0 < b.2) {
                best = Some((i, nearest[i].1, nearest[i].0));
            }
        }
        let Some((i, j, _)) = best else { break };
        for q in 0..n {
            if alive[q] && q != i && q != j {
                let v = d[i * n + q].max(d[j * n + q]);
                d[i * n + q] = v;
                d[q * n + i] = v;
            }
        }
        alive[j] = false;
        let moved = std::mem::take(&mut members[j]);
        members[i].extend(moved);
        // Complete-link distances only grow, so only rows that pointed at the
        // merged pair need a rescan.
        for q in 0..n {
            if alive[q] && (q == i || nearest[q].1 == i || nearest[q].1 == j) {
                nearest[q] = row_min(&d, &alive, q);
            }
        }
    }
    let mut out: Vec<Vec<usize>> = (0..n)
        .filter(|&i| alive[i])
        .map(|i| {
            let mut m = members[i].clone();
            m.sort_unstable();
            m
        })
        .collect();
    out.sort_by_key(|m| m[0]);
    out
}

fn centroid(points: &[Point3<f64>], idx: &[usize]) -> Point3<f64> {
    let sum = idx
        .iter()
        .fold(nalgebra::Vector3::zeros(), |acc, &i| acc + points[i].coords);
    Point3::from(sum / idx.len() as f64)
}

fn mean_spread(points: &[Point3<f64>], idx: &[usize]) -> f64 {
    if idx.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (k, &a) in idx.iter().enumerate() {
        for &b in &idx[k + 1..] {
            sum += (points[a] - points[b]).norm();
            n += 1;
        }
    }
    sum / n as f64
}

/// Index of the winning cluster: largest, then tightest, then lowest member.
pub fn largest_cluster(clusters: &[Vec<usize>], points: &[Point3<f64>]) -> Option<usize> {
    (0..clusters.len()).min_by(|&a, &b| {
        let (ca, cb) = (&clusters[a], &clusters[b]);
        cb.len()
            .cmp(&ca.len())
            .then_with(|| mean_spread(points, ca).total_cmp(&mean_spread(points, cb)))
            .then_with(|| ca.iter().min().cmp(&cb.iter().min()))
    })
}

/// Centroid of the largest cluster. Members farther than `kappa` from the
/// centroid are dropped and the centroid recomputed once.
pub fn fuse_largest(clusters: &[Vec<usize>], points: &[Point3<f64>], kappa: f64) -> Option<Point3<f64>> {
    let winner = &clusters[largest_cluster(clusters, points)?];
    let c = centroid(points, winner);
    let kept: Vec<usize> = winner
        .iter()
        .copied()
        .filter(|&i| (points[i] - c).norm() <= kappa)
        .collect();
    if kept.is_empty() || kept.len() == winner.len() {
        Some(c)
    } else {
        Some(centroid(points, &kept))
    }
}

/// Like [`fuse_largest`], but the centroid of the winning cluster is taken
/// over its `observed` members only when it has any. Infill candidates
/// still vote for the winner.
pub fn fuse_largest_observed(
    clusters: &[Vec<usize>],
    points: &[Point3<f64>],
    observed: &[bool],
    kappa: f64,
) -> Option<Point3<f64>> {
    let winner = &clusters[largest_cluster(clusters, points)?];
    let real: Vec<usize> = winner.iter().copied().filter(|&i| observed[i]).collect();
    if real.is_empty() {
        fuse_largest(std::slice::from_ref(winner), points, kappa)
    } else {
        fuse_largest(&[real], points, kappa)
    }
}

/// Mean of every pair candidate.
pub fn fuse_plain(points: &[Point3<f64>]) -> Option<Point3<f64>> {
    if points.is_empty() {
        return None;
    }
    let idx: Vec<usize> = (0..points.len()).collect();
    Some(centroid(points, &idx))
}

/// Pair-sampling RANSAC over view points; inliers reproject within
/// `threshold · scale` pixels. The winner is refined by triangulating all of
/// its inliers.
pub fn fuse_ransac(
    views: &[ViewPoint],
    rig: &Rig,
    iterations: u32,
    threshold: f64,
    rng: &mut impl Rng,
) -> Option<Point3<f64>> {
    let pairs: Vec<(usize, usize)> = (0..views.len())
        .flat_map(|i| (i + 1..views.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| views[i].camera_id != views[j].camera_id)
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let mut best: Option<(usize, f64, Vec<usize>, Point3<f64>)> = None;
    for _ in 0..iterations {
        let (i, j) = pairs[rng.random_range(0..pairs.len())];
        let (a, b) = (&views[i], &views[j]);
        let (Some(ca), Some(cb)) = (rig.camera(a.camera_id), rig.camera(b.camera_id)) else {
            continue;
        };
        let Ok(hyp) = triangulate_pair(&a.point, &b.point, ca, cb) else {
            continue;
        };
        let mut inliers = Vec::new();
        let mut err_sum = 0.0;
        for (k, v) in views.iter().enumerate() {
            let Some(cam) = rig.camera(v.camera_id) else { continue };
            if let Ok(p) = cam.project(&hyp.point) {
                let e = (p - v.point).norm();
                if e <= threshold * v.scale {
                    inliers.push(k);
                    err_sum += e;
                }
            }
        }
        let mean_err = err_sum / inliers.len().max(1) as f64;
        let better = match &best {
            None => true,
            Some((n, e, _, _)) => inliers.len() > *n || (inliers.len() == *n && mean_err < *e),
        };
        if better {
            best = Some((inliers.len(), mean_err, inliers, hyp.point));
        }
    }
    let (_, _, inliers, hyp) = best?;
    let cams: BTreeSet<CameraId> = inliers.iter().map(|&k| views[k].camera_id).collect();
    if cams.len() < 2 {
        return Some(hyp);
    }
    let refined: Vec<(Point2<f64>, &crate::geometry::CameraModel)> = inliers
        .iter()
        .filter_map(|&k| rig.camera(views[k].camera_id).map(|c| (views[k].point, c)))
        .collect();
    Some(triangulate_views(&refined).map(|t| t.point).unwrap_or(hyp))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CmmtDiagnostics {
    /// Frames with fewer than two contributing cameras.
    pub empty_frames: Vec<Frame>,
    /// Number of pair candidates per reconstructed frame (summed over joints).
    pub candidate_counts: Vec<(Frame, usize)>,
}

fn view_point(o: &Observation2D, joint: Option<usize>, synthetic: bool) -> Option<ViewPoint> {
    let point = match joint {
        None => o.center,
        Some(j) => {
            let k = o.keypoints.as_ref()?.get(j)?;
            if !k.valid {
                return None;
            }
            k.position
        }
    };
    Some(ViewPoint {
        camera_id: o.camera_id,
        point,
        scale: o.scale(),
        synthetic,
    })
}

fn frame_seed(seed: u64, keyframe: Frame, cluster: usize, frame: Frame, joint: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [keyframe as u64, cluster as u64, frame as u64, joint as u64] {
        h = (h ^ v).wrapping_mul(0x1000_0000_01b3).rotate_left(17);
    }
    h
}

/// Reconstructs the 3D tracklet of one cluster inside one window.
#[allow(clippy::too_many_arguments)]
pub fn cmmt(
    cluster: &[&Tracklet2D],
    keyframe: Frame,
    cluster_id: usize,
    range: &Range<Frame>,
    rig: &Rig,
    params: &CmmtParams,
    mode: AssocMode,
) -> Result<(Tracklet3D, CmmtDiagnostics), CmmtError> {
    let use_infill = params.method == TriangulationMethod::Cmmt;
    let merged: Vec<InterpolatedTracklet> = cluster
        .iter()
        .map(|t| {
            if use_infill {
                interpolate_tracklet(t, params.phi, range)
            } else {
                InterpolatedTracklet {
                    base: (*t).clone(),
                    infill: BTreeMap::new(),
                }
            }
        })
        .collect();
    let frames: BTreeSet<Frame> = merged
        .iter()
        .flat_map(|m| m.frames())
        .filter(|f| range.contains(f))
        .collect();
    let joints: Vec<Option<usize>> = match mode {
        AssocMode::Box => vec![None],
        AssocMode::Pose => {
            let n = cluster
                .iter()
                .flat_map(|t| t.observations.values())
                .find_map(|o| o.keypoints.as_ref().map(Vec::len))
                .unwrap_or(0);
            (0..n).map(Some).collect()
        }
    };

    let mut out = Tracklet3D {
        keyframe,
        cluster_id,
        positions: BTreeMap::new(),
        synthetic: BTreeSet::new(),
    };
    let mut diag = CmmtDiagnostics::default();
    for &t in &frames {
        let entries: Vec<(&Observation2D, bool)> =
            merged.iter().flat_map(|m| m.entries(t)).collect();
        let mut fused = Vec::with_capacity(joints.len());
        let mut count = 0usize;
        for (ji, &joint) in joints.iter().enumerate() {
            let views: Vec<ViewPoint> = entries
                .iter()
                .filter_map(|(o, s)| view_point(o, joint, *s))
                .collect();
            let point = match params.method {
                TriangulationMethod::Cmmt => match candidate_positions(t, &views, rig) {
                    Ok(set) => {
                        count += set.candidates.len();
                        let pts: Vec<Point3<f64>> = set.candidates.iter().map(|c| c.point).collect();
                        let observed: Vec<bool> =
                            set.candidates.iter().map(|c| c.synthetic == (false, false)).collect();
                        let clusters = complete_linkage_3d(&pts, params.kappa);
                        fuse_largest_observed(&clusters, &pts, &observed, params.kappa)
                    }
                    Err(_) => None,
                },
                TriangulationMethod::Plain => match candidate_positions(t, &views, rig) {
                    Ok(set) => {
                        count += set.candidates.len();
                        let pts: Vec<Point3<f64>> = set.candidates.iter().map(|c| c.point).collect();
                        fuse_plain(&pts)
                    }
                    Err(_) => None,
                },
                TriangulationMethod::Ransac => {
                    let cams: BTreeSet<CameraId> = views.iter().map(|v| v.camera_id).collect();
                    if cams.len() < 2 {
                        None
                    } else {
                        count += views.len();
                        let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(
                            params.seed,
                            keyframe,
                            cluster_id,
                            t,
                            ji,
                        ));
                        fuse_ransac(&views, rig, params.ransac_iterations, params.ransac_threshold, &mut rng)
                    }
                }
            };
            fused.push(point.filter(|p| p.coords.iter().all(|v| v.is_finite())));
        }
        let position = Position3D(fused);
        if position.is_empty() {
            diag.empty_frames.push(t);
            continue;
        }
        if entries.iter().all(|(_, synthetic)| *synthetic) {
            out.synthetic.insert(t);
        }
        diag.candidate_counts.push((t, count));
        out.positions.insert(t, position);
    }
    if out.positions.is_empty() {
        return Err(CmmtError::EmptyTracklet);
    }
    Ok((out, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::CameraModel;
    use nalgebra::{Matrix3, Vector3};
    use rand::Rng;

    fn rig(n: usize) -> (Rig, Vec<CameraModel>) {
        let k = Matrix3::new(900.0, 0.0, 640.0, 0.0, 900.0, 360.0, 0.0, 0.0, 1.0);
        let cams: Vec<CameraModel> = (0..n)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / n as f64;
                CameraModel::look_at(
                    i as u32,
                    k,
                    Point3::new(7.0 * a.cos(), 7.0 * a.sin(), 3.0),
                    Point3::new(0.0, 0.0, 0.5),
                    Some((1280, 720)),
                )
                .unwrap()
            })
            .collect();
        (Rig::new(cams.clone()).unwrap(), cams)
    }

    fn path(f: Frame) -> Point3<f64> {
        Point3::new(-1.0 + 0.03 * f as f64, 0.5 - 0.01 * f as f64, 0.0)
    }

    fn tracklet(cam: &CameraModel, frames: impl IntoIterator<Item = Frame>) -> Tracklet2D {
        let mut t = Tracklet2D::new(cam.camera_id, 0);
        for f in frames {
            let c = cam.project(&path(f)).unwrap();
            t.observations
                .insert(f, Observation2D::from_box(f, cam.camera_id, c, 50.0, 150.0, 1.0));
        }
        t
    }

    #[test]
    fn midpoint_gap_fill() {
        let (_, cams) = rig(2);
        let mut t = Tracklet2D::new(0, 0);
        for (f, x) in [(0u32, 10.0), (2, 20.0)] {
            t.observations
                .insert(f, Observation2D::from_box(f, cams[0].camera_id, Point2::new(x, 2.0 * x), 10.0, 30.0, 1.0));
        }
        let it = interpolate_tracklet(&t, 7, &(0..30));
        let mid = &it.infill[&1];
        assert_eq!(mid.center, Point2::new(15.0, 30.0));
        assert_eq!((mid.width, mid.height), (10.0, 30.0));
    }

    #[test]
    fn long_gap_is_not_filled() {
        let (_, cams) = rig(2);
        let t = tracklet(&cams[0], [0u32, 20]);
        let it = interpolate_tracklet(&t, 7, &(0..30));
        assert!((1..20).all(|f| !it.infill.contains_key(&f)));
    }

    #[test]
    fn interpolation_reproduces_linear_motion() {
        let mut t = Tracklet2D::new(0, 0);
        let line = |f: u32| Point2::new(100.0 + 3.5 * f as f64, 50.0 - 1.25 * f as f64);
        for f in (0..30u32).filter(|f| f % 3 != 2) {
            t.observations
                .insert(f, Observation2D::from_box(f, 0, line(f), 40.0, 120.0, 1.0));
        }
        let it = interpolate_tracklet(&t, 7, &(0..30));
        for f in (0..30u32).filter(|f| f % 3 == 2 && *f < 29) {
            let got = it.infill[&f].center;
            assert!((got - line(f)).norm() <= 1e-9, "frame {f}");
        }
        // smoothed duplicates of a noiseless line equal the observations
        for f in (0..30u32).filter(|f| f % 3 != 2) {
            assert!((it.infill[&f].center - line(f)).norm() <= 1e-9);
        }
    }

    #[test]
    fn candidate_counts() {
        let (rig, cams) = rig(3);
        let x = path(3);
        let vp = |c: &CameraModel, s: bool| ViewPoint {
            camera_id: c.camera_id,
            point: c.project(&x).unwrap(),
            scale: 200.0,
            synthetic: s,
        };
        let three = [vp(&cams[0], false), vp(&cams[1], false), vp(&cams[2], false)];
        let set = candidate_positions(3, &three, &rig).unwrap();
        assert_eq!(set.candidates.len(), 3);
        assert!(set.candidates.iter().all(|c| (c.point - x).norm() <= 1e-6));

        let four = [vp(&cams[0], false), vp(&cams[0], true), vp(&cams[1], false), vp(&cams[1], true)];
        let set = candidate_positions(3, &four, &rig).unwrap();
        assert_eq!(set.candidates.len(), 4);
        assert!(set.candidates.iter().all(|c| c.cameras.0 != c.cameras.1));

        assert_eq!(
            candidate_positions(3, &[vp(&cams[0], false), vp(&cams[0], true)], &rig),
            Err(CmmtError::EmptyFrame(3))
        );
    }

    #[test]
    fn linkage_examples() {
        let a = Point3::new(0.0, 0.0, 0.0);
        assert_eq!(complete_linkage_3d(&[a, Point3::new(0.1, 0.0, 0.0)], 0.2), vec![vec![0, 1]]);
        assert_eq!(
            complete_linkage_3d(&[a, Point3::new(0.5, 0.0, 0.0)], 0.2),
            vec![vec![0], vec![1]]
        );
    }

    // Textbook complete linkage: recompute every inter-cluster distance from
    // the raw points at each step.
    fn linkage_oracle(points: &[Point3<f64>], kappa: f64) -> Vec<Vec<usize>> {
        let mut clusters: Vec<Vec<usize>> = (0..points.len()).map(|i| vec![i]).collect();
        loop {
            let mut best: Option<(usize, usize, f64)> = None;
            for i in 0..clusters.len() {
                for j in i + 1..clusters.len() {
                    let mut d: f64 = 0.0;
                    for &a in &clusters[i] {
                        for &b in &clusters[j] {
                            d = d.max((points[a] - points[b]).norm());
                        }
                    }
                    if d < kappa && best.is_none_or(|b| d < b.2) {
                        best = Some((i, j, d));
                    }
                }
            }
            let Some((i, j, _)) = best else { break };
            let moved = clusters.remove(j);
            clusters[i].extend(moved);
        }
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.sort_by_key(|c| c[0]);
        clusters
    }

    #[test]
    fn linkage_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let pts: Vec<Point3<f64>> = (0..10)
                .map(|_| Point3::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), rng.random_range(0.0..0.5)))
                .collect();
            assert_eq!(complete_linkage_3d(&pts, 0.4), linkage_oracle(&pts, 0.4));
        }
    }

    #[test]
    fn majority_vote_rejects_outliers() {
        let gt = Point3::new(1.0, 2.0, 0.0);
        let pts = vec![
            gt + Vector3::new(0.05, 0.0, 0.0),
            gt + Vector3::new(-0.05, 0.0, 0.0),
            gt + Vector3::new(0.0, 0.05, 0.0),
            gt + Vector3::new(1.0, 0.0, 0.0),
            gt + Vector3::new(0.0, -1.0, 0.0),
        ];
        let clusters = complete_linkage_3d(&pts, 0.2);
        let fused = fuse_largest(&clusters, &pts, 0.2).unwrap();
        assert!((fused - gt).norm() <= 0.05);

        let single = [gt];
        assert_eq!(fuse_largest(&complete_linkage_3d(&single, 0.2), &single, 0.2), Some(gt));
    }

    #[test]
    fn minority_inliers_still_win() {
        // 2 of 5 candidates agree; the three outliers are mutually far apart.
        let gt = Point3::new(0.0, 0.0, 0.0);
        let pts = vec![
            Point3::new(3.0, 0.0, 0.0),
            gt + Vector3::new(0.03, 0.0, 0.0),
            Point3::new(0.0, -2.0, 1.0),
            gt + Vector3::new(-0.03, 0.0, 0.0),
            Point3::new(-1.5, 1.5, 0.0),
        ];
        let fused = fuse_largest(&complete_linkage_3d(&pts, 0.2), &pts, 0.2).unwrap();
        assert!((fused - gt).norm() <= 0.2);
        assert!((fused - gt).norm() <= 1e-12);
    }

    #[test]
    fn equal_size_tie_prefers_tighter_cluster() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.15, 0.0, 0.0),
            Point3::new(5.0, 0.0, 0.0),
            Point3::new(5.01, 0.0, 0.0),
        ];
        let clusters = complete_linkage_3d(&pts, 0.2);
        assert_eq!(clusters.len(), 2);
        let fused = fuse_largest(&clusters, &pts, 0.2).unwrap();
        assert!((fused.x - 5.005).abs() < 1e-12);
    }

    #[test]
    fn noiseless_cluster_is_exact() {
        let (rig, cams) = rig(3);
        let ts: Vec<Tracklet2D> = cams.iter().map(|c| tracklet(c, 0..30)).collect();
        let refs: Vec<&Tracklet2D> = ts.iter().collect();
        let (u, diag) = cmmt(&refs, 15, 0, &(0..30), &rig, &CmmtParams::default(), AssocMode::Box).unwrap();
        assert_eq!(u.positions.len(), 30);
        assert!(diag.empty_frames.is_empty());
        for (f, p) in &u.positions {
            assert!((p.primary().unwrap() - path(*f)).norm() <= 1e-6);
        }
    }

    #[test]
    fn single_camera_cluster_is_empty() {
        let (rig, cams) = rig(3);
        let t = tracklet(&cams[0], 0..10);
        assert_eq!(
            cmmt(&[&t], 5, 0, &(0..30), &rig, &CmmtParams::default(), AssocMode::Box).unwrap_err(),
            CmmtError::EmptyTracklet
        );
    }
}
