//! CLEAR MOT metrics, IDF1 and PCP over 3D trajectories.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::cmmt::Position3D;
use crate::geometry::Frame;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot read limb table {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid limb table: {0}")]
    Limbs(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsParams {
    /// Match gate in meters.
    pub threshold: f64,
    /// PCP tolerance as a fraction of the ground-truth limb length.
    pub pcp_alpha: f64,
}

impl Default for MetricsParams {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            pcp_alpha: 0.5,
        }
    }
}

/// Trajectories keyed by id, then frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    pub tracks: BTreeMap<u64, BTreeMap<Frame, Position3D>>,
}

impl TrajectorySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: u64, frame: Frame, position: Position3D) {
        self.tracks.entry(id).or_default().insert(frame, position);
    }

    pub fn frames(&self) -> BTreeSet<Frame> {
        self.tracks.values().flat_map(|t| t.keys().copied()).collect()
    }

    pub fn at(&self, frame: Frame) -> Vec<(u64, &Position3D)> {
        self.tracks
            .iter()
            .filter_map(|(id, t)| t.get(&frame).map(|p| (*id, p)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn detection_count(&self) -> usize {
        self.tracks.values().map(BTreeMap::len).sum()
    }

    /// Copy with every id replaced through `f`.
    pub fn relabeled(&self, mut f: impl FnMut(u64) -> u64) -> Self {
        Self {
            tracks: self.tracks.iter().map(|(id, t)| (f(*id), t.clone())).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameMatch {
    /// `(gt id, pred id, distance)`.
    pub matches: Vec<(u64, u64, f64)>,
    pub false_positives: Vec<u64>,
    pub misses: Vec<u64>,
}

/// Per-frame CLEAR correspondence: previous matches that are still present
/// and within `threshold` are kept, the rest is solved as a gated
/// minimum-cost assignment.
pub fn clear_match(
    gt: &[(u64, &Position3D)],
    pred: &[(u64, &Position3D)],
    threshold: f64,
    previous: &BTreeMap<u64, u64>,
) -> FrameMatch {
    let mut gt_done = vec![false; gt.len()];
    let mut pred_done = vec![false; pred.len()];
    let mut matches = Vec::new();
    for (gi, (gid, gp)) in gt.iter().enumerate() {
        let Some(pid) = previous.get(gid) else { continue };
        if let Some(pi) = pred.iter().position(|(id, _)| id == pid) {
            if pred_done[pi] {
                continue;
            }
            if let Some(d) = gp.distance(pred[pi].1).filter(|d| *d <= threshold) {
                gt_done[gi] = true;
                pred_done[pi] = true;
                matches.push((*gid, *pid, d));
            }
        }
    }
    let gi_left: Vec<usize> = (0..gt.len()).filter(|i| !gt_done[*i]).collect();
    let pi_left: Vec<usize> = (0..pred.len()).filter(|i| !pred_done[*i]).collect();
    let costs: Vec<Vec<Option<f64>>> = gi_left
        .iter()
        .map(|&g| {
            pi_left
                .iter()
                .map(|&p| gt[g].1.distance(pred[p].1).filter(|d| *d <= threshold))
                .collect()
        })
        .collect();
    for (r, c) in assignment::solve(&costs) {
        let (g, p) = (gi_left[r], pi_left[c]);
        gt_done[g] = true;
        pred_done[p] = true;
        matches.push((gt[g].0, pred[p].0, costs[r][c].unwrap_or(0.0)));
    }
    matches.sort_by_key(|m| m.0);
    FrameMatch {
        matches,
        false_positives: (0..pred.len()).filter(|i| !pred_done[*i]).map(|i| pred[i].0).collect(),
        misses: (0..gt.len()).filter(|i| !gt_done[*i]).map(|i| gt[i].0).collect(),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MotReport {
    pub mota: f64,
    pub idf1: f64,
    /// Fraction of ground-truth trajectories matched in more than 80% of
    /// their frames.
    pub mt: f64,
    /// Fraction matched in less than 20% of their frames.
    pub ml: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub gt_count: usize,
    pub matches: usize,
    /// Mean distance of matched pairs in meters.
    pub mean_error: f64,
}

impl MotReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        format!(
            "mota = {:.6}\nidf1 = {:.6}\nmt = {:.6}\nml = {:.6}\nfp = {}\nfn = {}\nids = {}\ngt = {}\nmatches = {}\nmean_error = {:.6}\n",
            self.mota, self.idf1, self.mt, self.ml, self.fp, self.fn_, self.ids, self.gt_count, self.matches, self.mean_error
        )
    }
}

/// CLEAR accumulation over every frame of either set. IDF1 is filled in as
/// well.
pub fn mota(gt: &TrajectorySet, pred: &TrajectorySet, threshold: f64) -> MotReport {
    let mut frames = gt.frames();
    frames.extend(pred.frames());
    let mut last: BTreeMap<u64, u64> = BTreeMap::new();
    let mut matched_frames: BTreeMap<u64, usize> = BTreeMap::new();
    let (mut fp, mut fn_, mut ids, mut gt_count, mut n_match) = (0, 0, 0, 0, 0);
    let mut err_sum = 0.0;
    for f in frames {
        let g = gt.at(f);
        let p = pred.at(f);
        gt_count += g.len();
        let m = clear_match(&g, &p, threshold, &last);
        fp += m.false_positives.len();
        fn_ += m.misses.len();
        for &(gid, pid, d) in &m.matches {
            if let Some(prev) = last.insert(gid, pid) {
                if prev != pid {
                    ids += 1;
                }
            }
            *matched_frames.entry(gid).or_default() += 1;
            n_match += 1;
            err_sum += d;
        }
    }
    let n_gt_tracks = gt.len().max(1) as f64;
    let ratio = |id: &u64, t: &BTreeMap<Frame, Position3D>| {
        matched_frames.get(id).copied().unwrap_or(0) as f64 / t.len().max(1) as f64
    };
    let mt = gt.tracks.iter().filter(|(id, t)| ratio(id, t) > 0.8).count() as f64 / n_gt_tracks;
    let ml = gt.tracks.iter().filter(|(id, t)| ratio(id, t) < 0.2).count() as f64 / n_gt_tracks;
    MotReport {
        mota: if gt_count == 0 {
            0.0
        } else {
            1.0 - (fp + fn_ + ids) as f64 / gt_count as f64
        },
        idf1: idf1(gt, pred, threshold),
        mt: if gt.is_empty() { 0.0 } else { mt },
        ml: if gt.is_empty() { 0.0 } else { ml },
        fp,
        fn_,
        ids,
        gt_count,
        matches: n_match,
        mean_error: if n_match == 0 { 0.0 } else { err_sum / n_match as f64 },
    }
}

/// Number of frames where trajectories `a` and `b` are within `threshold`.
fn co_tracked(a: &BTreeMap<Frame, Position3D>, b: &BTreeMap<Frame, Position3D>, threshold: f64) -> usize {
    a.iter()
        .filter(|(f, pa)| {
            b.get(f)
                .and_then(|pb| pa.distance(pb))
                .is_some_and(|d| d <= threshold)
        })
        .count()
}

/// Identity F1 under the one-to-one id mapping that maximises the number of
/// identity true positives.
pub fn idf1(gt: &TrajectorySet, pred: &TrajectorySet, threshold: f64) -> f64 {
    let total = gt.detection_count() + pred.detection_count();
    if total == 0 {
        return 1.0;
    }
    let gts: Vec<_> = gt.tracks.values().collect();
    let preds: Vec<_> = pred.tracks.values().collect();
    let tp: Vec<Vec<usize>> = gts
        .iter()
        .map(|g| preds.iter().map(|p| co_tracked(g, p, threshold)).collect())
        .collect();
    let costs: Vec<Vec<Option<f64>>> = tp
        .iter()
        .map(|row| row.iter().map(|v| Some(-(*v as f64))).collect())
        .collect();
    let idtp: usize = assignment::solve(&costs).iter().map(|&(g, p)| tp[g][p]).sum();
    2.0 * idtp as f64 / total as f64
}

/// Joint-index pairs forming the evaluated limbs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimbTable {
    pub limbs: Vec<[usize; 2]>,
    #[serde(default)]
    pub names: Vec<String>,
}

const DEFAULT_LIMBS: &str = include_str!("../config/limbs15.toml");

impl Default for LimbTable {
    fn default() -> Self {
        Self::parse(DEFAULT_LIMBS).expect("bundled limb table is valid")
    }
}

impl LimbTable {
    pub fn parse(text: &str) -> Result<Self, MetricsError> {
        let t: Self = toml::from_str(text).map_err(|e| MetricsError::Limbs(e.to_string()))?;
        if t.limbs.is_empty() {
            return Err(MetricsError::Limbs("no limbs".into()));
        }
        if !t.names.is_empty() && t.names.len() != t.limbs.len() {
            return Err(MetricsError::Limbs("names and limbs differ in length".into()));
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PcpReport {
    pub per_actor: BTreeMap<u64, f64>,
    pub average: f64,
}

fn limb_correct(gt: &Position3D, pred: &Position3D, limb: [usize; 2], alpha: f64) -> Option<bool> {
    let g = gt.joints();
    let (ga, gb) = (g.get(limb[0]).copied().flatten()?, g.get(limb[1]).copied().flatten()?);
    let length = (ga - gb).norm();
    let p = pred.joints();
    let (Some(pa), Some(pb)) = (p.get(limb[0]).copied().flatten(), p.get(limb[1]).copied().flatten()) else {
        return Some(false);
    };
    Some((pa - ga).norm() <= alpha * length && (pb - gb).norm() <= alpha * length)
}

/// Percentage of correct parts. Each ground-truth pose is compared with the
/// closest predicted pose of its frame; frames without any prediction count
/// every limb as wrong.
pub fn pcp(gt: &TrajectorySet, pred: &TrajectorySet, limbs: &LimbTable, alpha: f64) -> PcpReport {
    let mut per_actor = BTreeMap::new();
    for (id, track) in &gt.tracks {
        let (mut good, mut total) = (0usize, 0usize);
        for (f, gp) in track {
            let best = pred
                .at(*f)
                .into_iter()
                .filter_map(|(_, pp)| gp.distance(pp).map(|d| (d, pp)))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, pp)| pp);
            for &limb in &limbs.limbs {
                let verdict = match best {
                    Some(pp) => limb_correct(gp, pp, limb, alpha),
                    None => limb_correct(gp, &Position3D(Vec::new()), limb, alpha),
                };
                if let Some(ok) = verdict {
                    total += 1;
                    good += usize::from(ok);
                }
            }
        }
        if total > 0 {
            per_actor.insert(*id, good as f64 / total as f64);
        }
    }
    let average = if per_actor.is_empty() {
        0.0
    } else {
        per_actor.values().sum::<f64>() / per_actor.len() as f64
    };
    PcpReport { per_actor, average }
}
