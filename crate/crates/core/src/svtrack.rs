//! Per-camera multi-object tracker producing 2D tracklets.
//!
//! SORT-style management (IoU gating, tentative/confirmed tracks, max-age
//! termination) with a constant-velocity box model in place of a Kalman
//! filter.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::geometry::{CameraId, Frame, Observation2D};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvTrackError {
    #[error("camera {camera}: frame {frame} is not after the last processed frame {last}")]
    FrameRegression {
        camera: CameraId,
        frame: Frame,
        last: Frame,
    },
    #[error("detection for camera {got} / frame {frame} fed to tracker of camera {expected}")]
    ForeignDetection {
        expected: CameraId,
        got: CameraId,
        frame: Frame,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvTrackParams {
    pub iou_min: f64,
    pub max_age: u32,
    pub min_hits: u32,
    /// Weight of the previous velocity in the exponential smoothing.
    pub smoothing: f64,
}

impl Default for SvTrackParams {
    fn default() -> Self {
        Self {
            iou_min: 0.3,
            max_age: 10,
            min_hits: 2,
            smoothing: 0.5,
        }
    }
}

/// A time-indexed run of one camera's observations attributed to one local
/// track. Frames may have gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet2D {
    pub camera_id: CameraId,
    pub local_id: u64,
    pub observations: BTreeMap<Frame, Observation2D>,
    /// Tentative tracklets are kept for bookkeeping but skipped by the
    /// cross-view association.
    pub confirmed: bool,
}

impl Tracklet2D {
    pub fn new(camera_id: CameraId, local_id: u64) -> Self {
        Self {
            camera_id,
            local_id,
            observations: BTreeMap::new(),
            confirmed: true,
        }
    }

    pub fn active_frames(&self) -> impl Iterator<Item = Frame> + '_ {
        self.observations.keys().copied()
    }

    pub fn first_frame(&self) -> Option<Frame> {
        self.observations.keys().next().copied()
    }

    pub fn last_frame(&self) -> Option<Frame> {
        self.observations.keys().next_back().copied()
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn get(&self, frame: Frame) -> Option<&Observation2D> {
        self.observations.get(&frame)
    }

    /// Copy restricted to `range`, or `None` when nothing remains.
    pub fn restricted(&self, range: &Range<Frame>) -> Option<Self> {
        let observations: BTreeMap<_, _> = self
            .observations
            .range(range.clone())
            .map(|(f, o)| (*f, o.clone()))
            .collect();
        (!observations.is_empty()).then_some(Self {
            camera_id: self.camera_id,
            local_id: self.local_id,
            observations,
            confirmed: self.confirmed,
        })
    }

    /// Frames present in both tracklets, ascending.
    pub fn common_frames<'a>(&'a self, other: &'a Self) -> impl Iterator<Item = Frame> + 'a {
        self.observations
            .keys()
            .filter(move |f| other.observations.contains_key(f))
            .copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track2DState {
    pub local_id: u64,
    /// Current box estimate, advanced by `predict` every frame.
    pub last_box: Observation2D,
    /// `(dx, dy, dw, dh)` per frame.
    pub velocity: [f64; 4],
    pub age: u32,
    pub time_since_update: u32,
    pub hit_streak: u32,
    pub hits: u32,
    pub confirmed: bool,
    last_observed: Observation2D,
    history: BTreeMap<Frame, Observation2D>,
}

impl Track2DState {
    fn spawn(local_id: u64, det: &Observation2D, min_hits: u32) -> Self {
        let mut history = BTreeMap::new();
        history.insert(det.frame, det.clone());
        Self {
            local_id,
            last_box: det.clone(),
            velocity: [0.0; 4],
            age: 0,
            time_since_update: 0,
            hit_streak: 1,
            hits: 1,
            confirmed: min_hits <= 1,
            last_observed: det.clone(),
            history,
        }
    }

    fn update(&mut self, det: &Observation2D, params: &SvTrackParams) {
        let dt = det.frame.saturating_sub(self.last_observed.frame).max(1) as f64;
        let prev = &self.last_observed;
        let diff = [
            (det.center.x - prev.center.x) / dt,
            (det.center.y - prev.center.y) / dt,
            (det.width - prev.width) / dt,
            (det.height - prev.height) / dt,
        ];
        if self.hits == 1 {
            self.velocity = diff;
        } else {
            let s = params.smoothing;
            for (v, d) in self.velocity.iter_mut().zip(diff) {
                *v = s * *v + (1.0 - s) * d;
            }
        }
        self.last_box = det.clone();
        self.last_observed = det.clone();
        self.history.insert(det.frame, det.clone());
        self.time_since_update = 0;
        self.hits += 1;
        self.hit_streak += 1;
        if self.hit_streak >= params.min_hits {
            self.confirmed = true;
        }
    }

    fn advance(&mut self) {
        self.last_box = predict(self);
        self.last_box.frame += 1;
        self.age += 1;
        if self.time_since_update > 0 {
            self.hit_streak = 0;
        }
        self.time_since_update += 1;
    }

    pub fn to_tracklet(&self, camera_id: CameraId) -> Tracklet2D {
        Tracklet2D {
            camera_id,
            local_id: self.local_id,
            observations: self.history.clone(),
            confirmed: self.confirmed,
        }
    }
}

/// Box advanced one frame along the track's velocity; sizes stay ≥ 1 px.
pub fn predict(state: &Track2DState) -> Observation2D {
    let b = &state.last_box;
    let v = state.velocity;
    Observation2D {
        frame: b.frame,
        camera_id: b.camera_id,
        center: b.center + Vector2::new(v[0], v[1]),
        width: (b.width + v[2]).max(1.0),
        height: (b.height + v[3]).max(1.0),
        keypoints: None,
        score: b.score,
    }
}

pub fn iou(a: &Observation2D, b: &Observation2D) -> f64 {
    let [ax1, ay1, ax2, ay2] = a.corners();
    let [bx1, by1, bx2, by2] = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let union = a.width * a.height + b.width * b.height - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// One camera's tracker. Must be fed frames in increasing order.
#[derive(Debug, Clone)]
pub struct SingleViewTracker {
    camera_id: CameraId,
    params: SvTrackParams,
    tracks: Vec<Track2DState>,
    next_id: u64,
    last_frame: Option<Frame>,
}

impl SingleViewTracker {
    pub fn new(camera_id: CameraId, params: SvTrackParams) -> Self {
        Self {
            camera_id,
            params,
            tracks: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn camera_id(&self) -> CameraId {
        self.camera_id
    }

    pub fn tracks(&self) -> &[Track2DState] {
        &self.tracks
    }

    /// Processes the detections of `frame` and returns the tracklets of
    /// tracks terminated by this step.
    pub fn step(
        &mut self,
        frame: Frame,
        detections: &[Observation2D],
    ) -> Result<Vec<Tracklet2D>, SvTrackError> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(SvTrackError::FrameRegression {
                    camera: self.camera_id,
                    frame,
                    last,
                });
            }
        }
        if let Some(bad) = detections
            .iter()
            .find(|d| d.camera_id != self.camera_id || d.frame != frame)
        {
            return Err(SvTrackError::ForeignDetection {
                expected: self.camera_id,
                got: bad.camera_id,
                frame: bad.frame,
            });
        }
        let steps = self.last_frame.map_or(0, |last| frame - last);
        self.last_frame = Some(frame);
        for track in &mut self.tracks {
            for _ in 0..steps {
                track.advance();
            }
        }

        let costs: Vec<Vec<Option<f64>>> = self
            .tracks
            .iter()
            .map(|t| {
                detections
                    .iter()
                    .map(|d| {
                        let o = iou(&t.last_box, d);
                        (o >= self.params.iou_min).then_some(1.0 - o)
                    })
                    .collect()
            })
            .collect();
        let pairs = assignment::solve(&costs);
        let mut det_used = vec![false; detections.len()];
        for &(t, d) in &pairs {
            self.tracks[t].update(&detections[d], &self.params);
            det_used[d] = true;
        }
        for (d, det) in detections.iter().enumerate() {
            if !det_used[d] {
                self.tracks
                    .push(Track2DState::spawn(self.next_id, det, self.params.min_hits));
                self.next_id += 1;
            }
        }

        let max_age = self.params.max_age;
        let camera_id = self.camera_id;
        let mut ended = Vec::new();
        self.tracks.retain(|t| {
            if t.time_since_update > max_age {
                ended.push(t.to_tracklet(camera_id));
                false
            } else {
                true
            }
        });
        Ok(ended)
    }

    /// Snapshot of every live track as a tracklet.
    pub fn live_tracklets(&self) -> Vec<Tracklet2D> {
        self.tracks
            .iter()
            .map(|t| t.to_tracklet(self.camera_id))
            .collect()
    }

    /// Terminates every live track.
    pub fn finish(self) -> Vec<Tracklet2D> {
        self.live_tracklets()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point2;

    fn bx(frame: Frame, x: f64, y: f64, w: f64, h: f64) -> Observation2D {
        Observation2D::from_box(frame, 0, Point2::new(x, y), w, h, 1.0)
    }

    fn state(b: Observation2D, velocity: [f64; 4]) -> Track2DState {
        let mut s = Track2DState::spawn(0, &b, 2);
        s.velocity = velocity;
        s
    }

    #[test]
    fn predict_examples() {
        let p = predict(&state(bx(0, 10.0, 10.0, 4.0, 4.0), [1.0, 0.0, 0.0, 0.0]));
        assert_eq!(p.center, Point2::new(11.0, 10.0));
        let still = bx(0, 10.0, 10.0, 4.0, 4.0);
        let p = predict(&state(still.clone(), [0.0; 4]));
        assert_eq!((p.center, p.width, p.height), (still.center, still.width, still.height));
        let p = predict(&state(bx(0, 0.0, 0.0, 2.0, 2.0), [0.0, 0.0, -5.0, -5.0]));
        assert_eq!((p.width, p.height), (1.0, 1.0));
    }

    #[test]
    fn predict_after_two_frames() {
        let params = SvTrackParams::default();
        let mut s = Track2DState::spawn(0, &bx(0, 0.0, 0.0, 4.0, 4.0), 2);
        s.update(&bx(1, 2.0, 2.0, 4.0, 4.0), &params);
        // finite-difference velocity: (2 - 0) / 1 per frame
        let fd = [(2.0 - 0.0) / 1.0, (2.0 - 0.0) / 1.0];
        let p = predict(&s);
        assert_eq!(p.center, Point2::new(2.0 + fd[0], 2.0 + fd[1]));
        assert_eq!(p.center, Point2::new(4.0, 4.0));
    }

    #[test]
    fn iou_examples() {
        let a = bx(0, 0.5, 0.5, 1.0, 1.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(0, 5.0, 5.0, 1.0, 1.0)), 0.0);
        let half = bx(0, 1.0, 0.5, 1.0, 1.0);
        assert!((iou(&a, &half) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn match_increments_hit_streak_and_confirms() {
        let mut t = SingleViewTracker::new(0, SvTrackParams::default());
        t.step(0, &[bx(0, 50.0, 50.0, 20.0, 40.0)]).unwrap();
        assert!(!t.tracks()[0].confirmed);
        t.step(1, &[bx(1, 50.5, 50.0, 20.0, 40.0)]).unwrap();
        assert_eq!(t.tracks().len(), 1);
        assert_eq!(t.tracks()[0].hit_streak, 2);
        assert!(t.tracks()[0].confirmed);
    }

    #[test]
    fn terminates_after_max_age() {
        let params = SvTrackParams::default();
        let mut t = SingleViewTracker::new(0, params);
        t.step(0, &[bx(0, 50.0, 50.0, 20.0, 40.0)]).unwrap();
        let mut ended = Vec::new();
        for f in 1..=params.max_age {
            ended.extend(t.step(f, &[]).unwrap());
            assert!(ended.is_empty());
        }
        ended.extend(t.step(params.max_age + 1, &[]).unwrap());
        assert_eq!(ended.len(), 1);
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn frame_regression_is_rejected() {
        let mut t = SingleViewTracker::new(0, SvTrackParams::default());
        t.step(5, &[]).unwrap();
        assert!(matches!(t.step(5, &[]), Err(SvTrackError::FrameRegression { .. })));
        assert!(matches!(t.step(3, &[]), Err(SvTrackError::FrameRegression { .. })));
    }

    #[test]
    fn three_by_three_matches_permutation_oracle() {
        // Track boxes and detections chosen so every pair overlaps.
        let params = SvTrackParams {
            iou_min: 0.0,
            ..SvTrackParams::default()
        };
        let mut t = SingleViewTracker::new(0, params);
        let first = [
            bx(0, 100.0, 100.0, 40.0, 80.0),
            bx(0, 120.0, 100.0, 40.0, 80.0),
            bx(0, 140.0, 100.0, 40.0, 80.0),
        ];
        t.step(0, &first).unwrap();
        let dets = [
            bx(1, 136.0, 102.0, 40.0, 80.0),
            bx(1, 104.0, 98.0, 40.0, 80.0),
            bx(1, 121.0, 100.0, 40.0, 80.0),
        ];
        let iou_m: Vec<Vec<f64>> = t
            .tracks()
            .iter()
            .map(|tr| dets.iter().map(|d| iou(&predict(tr), d)).collect())
            .collect();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .max_by(|a, b| {
                let s = |p: &[usize; 3]| (0..3).map(|i| iou_m[i][p[i]]).sum::<f64>();
                s(a).total_cmp(&s(b))
            })
            .unwrap();
        t.step(1, &dets).unwrap();
        for (i, tr) in t.tracks().iter().enumerate() {
            assert_eq!(tr.last_box.center, dets[best[i]].center);
        }
    }

    #[test]
    fn restricted_preserves_gaps() {
        let mut tl = Tracklet2D::new(0, 1);
        for f in [3, 4, 7, 8, 12] {
            tl.observations.insert(f, bx(f, 0.0, 0.0, 1.0, 1.0));
        }
        let r = tl.restricted(&(4..9)).unwrap();
        assert_eq!(r.active_frames().collect::<Vec<_>>(), vec![4, 7, 8]);
        assert!(tl.restricted(&(20..30)).is_none());
    }
}
