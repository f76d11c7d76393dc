//! Streaming orchestration: per-camera tracking, windowing, association,
//! triangulation and linking.
//!
//! A window is processed as soon as its last frame has been pushed, so its
//! 3D tracklets are linked `latency()` frames after its keyframe.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::assoc::{pdnc, AssocMode, DistanceMatrix, MergeRecord};
use crate::cmmt::{cmmt, Tracklet3D};
use crate::config::PipelineConfig;
use crate::geometry::{CameraId, CameraModel, Frame, GeometryError, Observation2D, Rig};
use crate::linker::{Linker, LinkerError, LongTrack};
use crate::metrics::{self, LimbTable, MotReport, PcpReport, TrajectorySet};
use crate::svtrack::{SingleViewTracker, SvTrackError, Tracklet2D};
use crate::windows::{frame_range, WindowConfig};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid rig: {0}")]
    Rig(GeometryError),
    #[error("window at keyframe {keyframe}: {source}")]
    Association { keyframe: Frame, source: GeometryError },
    #[error("frame {frame}: {source}")]
    Tracking { frame: Frame, source: SvTrackError },
    #[error("frame {frame}: detection from unknown camera {camera}")]
    UnknownCamera { frame: Frame, camera: CameraId },
    #[error(transparent)]
    Linker(#[from] LinkerError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
}

/// Per-window diagnostics. Merge audit, cluster membership and candidate
/// counts are only filled in debug mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowReport {
    pub keyframe: Frame,
    pub range: std::ops::Range<Frame>,
    pub tracklets: usize,
    pub clusters: usize,
    pub merges: Vec<MergeRecord>,
    /// `(camera, local id)` members of each cluster.
    pub members: Vec<Vec<(CameraId, u64)>>,
    /// Frames without a 3D position, per cluster index.
    pub empty_frames: Vec<(usize, Vec<Frame>)>,
    pub candidate_counts: Vec<(usize, Vec<(Frame, usize)>)>,
    /// Clusters that yielded no 3D position at all.
    pub dropped: Vec<usize>,
    /// `(cluster index, global id)`.
    pub labels: Vec<(usize, u64)>,
    pub assoc_time: Duration,
    pub cmmt_time: Duration,
    pub link_time: Duration,
}

impl WindowReport {
    /// Human-readable audit lines.
    pub fn audit(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "window k={} [{}, {}) tracklets={} clusters={} dropped={:?}",
            self.keyframe, self.range.start, self.range.end, self.tracklets, self.clusters, self.dropped
        );
        for m in &self.merges {
            let _ = writeln!(s, "  merge {} <- {} d={:.6}", m.left, m.right, m.distance);
        }
        for (i, c) in self.members.iter().enumerate() {
            let _ = writeln!(s, "  cluster {i}: {c:?}");
        }
        for (c, counts) in &self.candidate_counts {
            let list: Vec<String> = counts.iter().map(|(f, n)| format!("{f}:{n}")).collect();
            let _ = writeln!(s, "  candidates cluster {c}: {}", list.join(" "));
        }
        for (c, frames) in &self.empty_frames {
            if !frames.is_empty() {
                let _ = writeln!(s, "  empty frames cluster {c}: {frames:?}");
            }
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOutput {
    pub tracks: TrajectorySet,
    pub windows: Vec<WindowReport>,
    pub frames: u32,
    /// Wall-clock time of the tracking stages.
    pub elapsed: Duration,
}

impl PipelineOutput {
    pub fn fps(&self) -> f64 {
        self.frames as f64 / self.elapsed.as_secs_f64().max(1e-12)
    }

    pub fn empty_frame_count(&self) -> usize {
        self.windows
            .iter()
            .flat_map(|w| &w.empty_frames)
            .map(|(_, f)| f.len())
            .sum()
    }
}

/// Processes one window of tracklets; shared by the streaming and the
/// tracklet-input entry points.
struct WindowStage {
    cfg: PipelineConfig,
    rig: Rig,
    linker: Linker,
    finalized: Vec<LongTrack>,
    reports: Vec<WindowReport>,
    debug: bool,
}

impl WindowStage {
    fn new(cfg: PipelineConfig, cameras: Vec<CameraModel>, debug: bool) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let rig = Rig::new(cameras).map_err(PipelineError::Rig)?;
        let linker = Linker::new(cfg.linker_params());
        Ok(Self {
            cfg,
            rig,
            linker,
            finalized: Vec::new(),
            reports: Vec::new(),
            debug,
        })
    }

    fn run(&mut self, keyframe: Frame, mut tracklets: Vec<Tracklet2D>) -> Result<&WindowReport, PipelineError> {
        let mode = self.cfg.assoc.mode;
        let range = frame_range(keyframe, self.cfg.window.size);
        tracklets.retain(|t| t.confirmed);
        tracklets.sort_by_key(|t| (t.camera_id, t.local_id));
        let t0 = Instant::now();
        let refs: Vec<&Tracklet2D> = tracklets.iter().collect();
        let d = DistanceMatrix::compute(&refs, &self.rig, mode)
            .map_err(|source| PipelineError::Association { keyframe, source })?;
        let clusters = pdnc(&d, self.cfg.assoc.lambda);
        let t1 = Instant::now();
        let mut report = WindowReport {
            keyframe,
            range: range.clone(),
            tracklets: tracklets.len(),
            clusters: clusters.clusters.len(),
            ..WindowReport::default()
        };
        if self.debug {
            report.merges = clusters.merges.clone();
            report.members = clusters
                .clusters
                .iter()
                .map(|c| c.iter().map(|&i| (refs[i].camera_id, refs[i].local_id)).collect())
                .collect();
        }
        let mut fused: Vec<Tracklet3D> = Vec::new();
        let mut origin: Vec<usize> = Vec::new();
        for (ci, members) in clusters.clusters.iter().enumerate() {
            let group: Vec<&Tracklet2D> = members.iter().map(|&i| refs[i]).collect();
            match cmmt(&group, keyframe, ci, &range, &self.rig, &self.cfg.cmmt, mode) {
                Ok((t, diag)) => {
                    report.empty_frames.push((ci, diag.empty_frames));
                    if self.debug {
                        report.candidate_counts.push((ci, diag.candidate_counts));
                    }
                    fused.push(t);
                    origin.push(ci);
                }
                Err(_) => report.dropped.push(ci),
            }
        }
        let t2 = Instant::now();
        let step = self.linker.push_window(keyframe, &fused)?;
        report.labels = step.labels.iter().map(|&(i, g)| (origin[i], g)).collect();
        self.finalized.extend(step.finalized);
        let t3 = Instant::now();
        report.assoc_time = t1 - t0;
        report.cmmt_time = t2 - t1;
        report.link_time = t3 - t2;
        self.reports.push(report);
        Ok(self.reports.last().expect("just pushed"))
    }

    fn finish(mut self) -> (TrajectorySet, Vec<WindowReport>) {
        self.finalized.extend(self.linker.finish());
        let mut tracks = TrajectorySet::new();
        for t in self.finalized {
            tracks.tracks.insert(t.global_id, t.positions);
        }
        (tracks, self.reports)
    }
}

/// Frame-by-frame pipeline over raw detections.
pub struct Pipeline {
    stage: WindowStage,
    window: WindowConfig,
    trackers: BTreeMap<CameraId, SingleViewTracker>,
    ended: Vec<Tracklet2D>,
    next_keyframe: Frame,
    next_frame: Frame,
    elapsed: Duration,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, cameras: Vec<CameraModel>, debug: bool) -> Result<Self, PipelineError> {
        let trackers = cameras
            .iter()
            .map(|c| (c.camera_id, SingleViewTracker::new(c.camera_id, cfg.svtrack)))
            .collect();
        let window = cfg.window;
        Ok(Self {
            stage: WindowStage::new(cfg, cameras, debug)?,
            window,
            trackers,
            ended: Vec::new(),
            next_keyframe: window.size / 2,
            next_frame: 0,
            elapsed: Duration::ZERO,
        })
    }

    fn window_tracklets(&self, keyframe: Frame) -> Vec<Tracklet2D> {
        let range = self.window.range(keyframe);
        self.ended
            .iter()
            .cloned()
            .chain(self.trackers.values().flat_map(|t| t.live_tracklets()))
            .filter_map(|t| t.restricted(&range))
            .collect()
    }

    fn run_next_window(&mut self) -> Result<WindowReport, PipelineError> {
        let k = self.next_keyframe;
        let tracklets = self.window_tracklets(k);
        let report = self.stage.run(k, tracklets)?.clone();
        self.next_keyframe += self.window.step;
        let start = self.window.range(self.next_keyframe).start;
        self.ended.retain(|t| t.last_frame().is_some_and(|l| l >= start));
        Ok(report)
    }

    /// Feeds every detection of `frame` (all cameras). Frames must be pushed
    /// in order without gaps; returns the reports of windows completed by
    /// this frame.
    pub fn push_frame(&mut self, frame: Frame, detections: &[Observation2D]) -> Result<Vec<WindowReport>, PipelineError> {
        let t0 = Instant::now();
        let mut per_cam: BTreeMap<CameraId, Vec<Observation2D>> = BTreeMap::new();
        for d in detections {
            if !self.trackers.contains_key(&d.camera_id) {
                return Err(PipelineError::UnknownCamera {
                    frame,
                    camera: d.camera_id,
                });
            }
            per_cam.entry(d.camera_id).or_default().push(d.clone());
        }
        for (cam, tracker) in self.trackers.iter_mut() {
            let dets = per_cam.remove(cam).unwrap_or_default();
            let ended = tracker
                .step(frame, &dets)
                .map_err(|source| PipelineError::Tracking { frame, source })?;
            self.ended.extend(ended);
        }
        self.next_frame = frame + 1;
        let mut out = Vec::new();
        while self.window.range(self.next_keyframe).end <= self.next_frame {
            out.push(self.run_next_window()?);
        }
        self.elapsed += t0.elapsed();
        Ok(out)
    }

    /// Processes the remaining partial windows and terminates every track.
    pub fn finish(mut self) -> Result<PipelineOutput, PipelineError> {
        let t0 = Instant::now();
        while self.next_frame > 0 && self.window.range(self.next_keyframe).start < self.next_frame {
            self.run_next_window()?;
        }
        let frames = self.next_frame;
        let (tracks, windows) = self.stage.finish();
        Ok(PipelineOutput {
            tracks,
            windows,
            frames,
            elapsed: self.elapsed + t0.elapsed(),
        })
    }
}

/// Runs the full pipeline over per-camera detection streams covering
/// `frames` frames.
pub fn run_detections(
    cfg: &PipelineConfig,
    cameras: &[CameraModel],
    streams: &BTreeMap<CameraId, Vec<Observation2D>>,
    frames: u32,
    debug: bool,
) -> Result<PipelineOutput, PipelineError> {
    let mut by_frame: BTreeMap<Frame, Vec<Observation2D>> = BTreeMap::new();
    for d in streams.values().flatten() {
        by_frame.entry(d.frame).or_default().push(d.clone());
    }
    let last = by_frame.keys().next_back().map_or(0, |f| f + 1);
    let frames = frames.max(last);
    let mut p = Pipeline::new(cfg.clone(), cameras.to_vec(), debug)?;
    let empty = Vec::new();
    for f in 0..frames {
        p.push_frame(f, by_frame.get(&f).unwrap_or(&empty))?;
    }
    p.finish()
}

/// Runs windowing, association, triangulation and linking over given 2D
/// tracklets, bypassing single-view tracking.
pub fn run_tracklets(
    cfg: &PipelineConfig,
    cameras: &[CameraModel],
    tracklets: &[Tracklet2D],
    frames: u32,
    debug: bool,
) -> Result<PipelineOutput, PipelineError> {
    let t0 = Instant::now();
    let mut stage = WindowStage::new(cfg.clone(), cameras.to_vec(), debug)?;
    let w = cfg.window;
    for k in crate::windows::keyframes(frames, w.size, w.step) {
        let range = w.range(k);
        let cropped: Vec<Tracklet2D> = tracklets.iter().filter_map(|t| t.restricted(&range)).collect();
        stage.run(k, cropped)?;
    }
    let (tracks, windows) = stage.finish();
    Ok(PipelineOutput {
        tracks,
        windows,
        frames,
        elapsed: t0.elapsed(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mot: MotReport,
    pub pcp: Option<PcpReport>,
}

pub fn evaluate(gt: &TrajectorySet, pred: &TrajectorySet, cfg: &PipelineConfig, limbs: &LimbTable) -> Evaluation {
    let mot = metrics::mota(gt, pred, cfg.metrics.threshold);
    let pcp = (cfg.assoc.mode == AssocMode::Pose).then(|| metrics::pcp(gt, pred, limbs, cfg.metrics.pcp_alpha));
    Evaluation { mot, pcp }
}
