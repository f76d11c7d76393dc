//! Online track-to-track linking of per-window 3D tracklets.
//!
//! Window tracklets are matched to the running long-term tracks by the mean
//! 3D distance over shared frames, solved as a gated rectangular assignment.
//! Matched tracklets extend their track (the newer window wins on shared
//! frames), unmatched tracklets open new tracks, and tracks left unmatched
//! for `max_window_misses` windows are finalized.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment;
use crate::cmmt::{Position3D, Tracklet3D};
use crate::geometry::Frame;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkerError {
    #[error("window keyframe {got} does not follow keyframe {last}")]
    OutOfOrderWindow { last: Frame, got: Frame },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkerParams {
    /// Maximum accepted link distance in meters.
    pub gate: f64,
    pub max_window_misses: u32,
}

impl Default for LinkerParams {
    fn default() -> Self {
        Self::FOOTPRINT
    }
}

impl LinkerParams {
    pub const FOOTPRINT: Self = Self {
        gate: 0.5,
        max_window_misses: 1,
    };
    pub const POSE: Self = Self {
        gate: 0.3,
        max_window_misses: 1,
    };
}

/// Mean distance over shared frames, `None` when no frame is shared.
pub fn tracklet3d_distance(
    a: &BTreeMap<Frame, Position3D>,
    b: &BTreeMap<Frame, Position3D>,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (f, pa) in a {
        if let Some(d) = b.get(f).and_then(|pb| pa.distance(pb)) {
            sum += d;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl AssignmentResult {
    pub fn matrix(&self, rows: usize, cols: usize) -> Vec<Vec<bool>> {
        let mut m = vec![vec![false; cols]; rows];
        for &(r, c) in &self.matches {
            m[r][c] = true;
        }
        m
    }
}

/// Minimum-cost partial matching; `None` entries and entries above `gate`
/// are never matched. Among feasible matchings the largest is preferred,
/// then the cheapest.
pub fn assign(distances: &[Vec<Option<f64>>], cols: usize, gate: f64) -> AssignmentResult {
    let rows = distances.len();
    let gated: Vec<Vec<Option<f64>>> = distances
        .iter()
        .map(|r| r.iter().map(|d| d.filter(|v| *v <= gate)).collect())
        .collect();
    let matches = assignment::solve(&gated);
    let mut row_used = vec![false; rows];
    let mut col_used = vec![false; cols];
    for &(r, c) in &matches {
        row_used[r] = true;
        col_used[c] = true;
    }
    AssignmentResult {
        matches,
        unmatched_rows: (0..rows).filter(|r| !row_used[*r]).collect(),
        unmatched_cols: (0..cols).filter(|c| !col_used[*c]).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTrack {
    pub global_id: u64,
    pub positions: BTreeMap<Frame, Position3D>,
    pub last_keyframe: Frame,
    pub misses: u32,
    /// `(keyframe, cluster_id)` of every window tracklet linked so far.
    pub sources: Vec<(Frame, usize)>,
}

impl LongTrack {
    fn absorb(&mut self, t: &Tracklet3D) {
        for (f, p) in &t.positions {
            self.positions.insert(*f, p.clone());
        }
        self.last_keyframe = t.keyframe;
        self.misses = 0;
        self.sources.push((t.keyframe, t.cluster_id));
    }
}

/// Result of linking one window.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkStep {
    pub assignment: AssignmentResult,
    /// Tracks that terminated in this step.
    pub finalized: Vec<LongTrack>,
    /// `(window tracklet index, global id)` for every tracklet of the window.
    pub labels: Vec<(usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct Linker {
    params: LinkerParams,
    tracks: Vec<LongTrack>,
    next_id: u64,
    last_keyframe: Option<Frame>,
}

impl Linker {
    pub fn new(params: LinkerParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 0,
            last_keyframe: None,
        }
    }

    pub fn active(&self) -> &[LongTrack] {
        &self.tracks
    }

    /// Distance matrix between live tracks (rows) and window tracklets.
    pub fn distances(&self, window: &[Tracklet3D]) -> Vec<Vec<Option<f64>>> {
        self.tracks
            .iter()
            .map(|lt| {
                window
                    .iter()
                    .map(|u| tracklet3d_distance(&lt.positions, &u.positions))
                    .collect()
            })
            .collect()
    }

    /// Links the 3D tracklets of the next window, in keyframe order.
    pub fn push_window(&mut self, keyframe: Frame, window: &[Tracklet3D]) -> Result<LinkStep, LinkerError> {
        if let Some(last) = self.last_keyframe {
            if keyframe <= last {
                return Err(LinkerError::OutOfOrderWindow { last, got: keyframe });
            }
        }
        self.last_keyframe = Some(keyframe);
        let d = self.distances(window);
        let result = assign(&d, window.len(), self.params.gate);
        Ok(self.manage(window, result))
    }

    /// Applies an assignment: extend matched tracks, spawn tracks for
    /// unmatched tracklets, age and finalize unmatched tracks.
    pub fn manage(&mut self, window: &[Tracklet3D], result: AssignmentResult) -> LinkStep {
        let mut labels = Vec::with_capacity(window.len());
        for &(r, c) in &result.matches {
            self.tracks[r].absorb(&window[c]);
            labels.push((c, self.tracks[r].global_id));
        }
        for &r in &result.unmatched_rows {
            self.tracks[r].misses += 1;
        }
        let mut fresh = Vec::new();
        for &c in &result.unmatched_cols {
            let mut lt = LongTrack {
                global_id: self.next_id,
                positions: BTreeMap::new(),
                last_keyframe: window[c].keyframe,
                misses: 0,
                sources: Vec::new(),
            };
            self.next_id += 1;
            lt.absorb(&window[c]);
            labels.push((c, lt.global_id));
            fresh.push(lt);
        }
        let limit = self.params.max_window_misses.max(1);
        let mut finalized = Vec::new();
        let mut kept = Vec::with_capacity(self.tracks.len() + fresh.len());
        for t in self.tracks.drain(..) {
            if t.misses >= limit {
                finalized.push(t);
            } else {
                kept.push(t);
            }
        }
        kept.extend(fresh);
        self.tracks = kept;
        labels.sort_unstable();
        LinkStep {
            assignment: result,
            finalized,
            labels,
        }
    }

    /// Finalizes every live track.
    pub fn finish(&mut self) -> Vec<LongTrack> {
        std::mem::take(&mut self.tracks)
    }
}
