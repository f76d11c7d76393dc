//! Sliding windows over the frame axis.
//!
//! A window anchored at keyframe `k` covers the half-open range
//! `[k - ⌊ν/2⌋, k + ⌈ν/2⌉)`. Keyframes start at `⌊ν/2⌋` and advance by `δ`,
//! so neighbouring windows share `ν - δ` frames.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Frame;
use crate::svtrack::Tracklet2D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowError {
    #[error("window size must be at least 1 and step must satisfy 1 <= step < size (got size {size}, step {step})")]
    InvalidConfig { size: u32, step: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// Window size ν in frames.
    pub size: u32,
    /// Step δ between keyframes.
    pub step: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self::EXPERIMENT
    }
}

impl WindowConfig {
    /// ν = 30, δ = 20.
    pub const EXPERIMENT: Self = Self { size: 30, step: 20 };
    /// ν = 50, δ = 30.
    pub const ABLATION: Self = Self { size: 50, step: 30 };

    pub fn new(size: u32, step: u32) -> Result<Self, WindowError> {
        let cfg = Self { size, step };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), WindowError> {
        if self.size == 0 || self.step == 0 || self.step >= self.size {
            return Err(WindowError::InvalidConfig {
                size: self.size,
                step: self.step,
            });
        }
        Ok(())
    }

    pub fn overlap(&self) -> u32 {
        self.size - self.step
    }

    /// Frames between a window's keyframe and its last frame; the linker
    /// can only commit a window once this many frames have arrived.
    pub fn latency(&self) -> u32 {
        self.size - self.size / 2
    }

    pub fn range(&self, keyframe: Frame) -> Range<Frame> {
        frame_range(keyframe, self.size)
    }
}

pub fn frame_range(keyframe: Frame, size: u32) -> Range<Frame> {
    let start = keyframe.saturating_sub(size / 2);
    let end = keyframe + size.div_ceil(2);
    start..end
}

/// Keyframes of every window needed to traverse `total_frames` frames.
pub fn keyframes(total_frames: u32, size: u32, step: u32) -> Vec<Frame> {
    let mut out = Vec::new();
    if total_frames == 0 || size == 0 || step == 0 {
        return out;
    }
    let mut k = size / 2;
    loop {
        out.push(k);
        let next = k + step;
        if next.saturating_sub(size / 2) > total_frames - 1 {
            break;
        }
        k = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub keyframe: Frame,
    pub range: Range<Frame>,
    pub tracklets: Vec<Tracklet2D>,
}

impl Window {
    pub fn confirmed(&self) -> impl Iterator<Item = &Tracklet2D> {
        self.tracklets.iter().filter(|t| t.confirmed)
    }
}

/// Restricts every tracklet to the window range, dropping empty crops.
pub fn crop(tracklets: &[Tracklet2D], keyframe: Frame, size: u32) -> Window {
    let range = frame_range(keyframe, size);
    let tracklets = tracklets
        .iter()
        .filter_map(|t| t.restricted(&range))
        .collect();
    Window {
        keyframe,
        range,
        tracklets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Observation2D;
    use nalgebra::Point2;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn tracklet(frames: impl IntoIterator<Item = Frame>) -> Tracklet2D {
        let mut t = Tracklet2D::new(2, 9);
        for f in frames {
            t.observations
                .insert(f, Observation2D::from_box(f, 2, Point2::new(0.0, 0.0), 1.0, 1.0, 1.0));
        }
        t
    }

    #[test]
    fn crop_examples() {
        let w = crop(&[tracklet(0..=100)], 50, 30);
        assert_eq!(w.range, 35..65);
        let frames: Vec<_> = w.tracklets[0].active_frames().collect();
        assert_eq!(frames.len(), 30);
        assert_eq!((frames[0], frames[29]), (35, 64));
        assert_eq!(w.tracklets[0].camera_id, 2);
        assert_eq!(w.tracklets[0].local_id, 9);

        assert!(crop(&[tracklet(200..210)], 50, 30).tracklets.is_empty());

        let gappy = tracklet([30, 36, 37, 41, 42, 43, 60, 70]);
        let w = crop(std::slice::from_ref(&gappy), 50, 30);
        let got: BTreeSet<_> = w.tracklets[0].active_frames().collect();
        let expect: BTreeSet<_> = gappy
            .active_frames()
            .collect::<BTreeSet<_>>()
            .intersection(&(35..65).collect())
            .copied()
            .collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn keyframe_examples() {
        assert_eq!(keyframes(100, 30, 20), vec![15, 35, 55, 75, 95]);
        let single = keyframes(10, 30, 20);
        assert_eq!(single.len(), 1);
        let r = frame_range(single[0], 30);
        assert!(r.start == 0 && r.end >= 10);
    }

    #[test]
    fn long_stream_enumeration() {
        let ks = keyframes(600, 50, 30);
        // enumeration oracle: walk window starts 0, 30, 60, ... while < 600
        let starts: Vec<u32> = (0..).map(|i| i * 30).take_while(|s| *s < 600).collect();
        assert_eq!(ks.len(), starts.len());
        assert_eq!(ks.len(), 20);
        for (k, s) in ks.iter().zip(&starts) {
            assert_eq!(frame_range(*k, 50).start, *s);
        }
        for pair in ks.windows(2) {
            let a = frame_range(pair[0], 50);
            let b = frame_range(pair[1], 50);
            assert_eq!(a.end - b.start, 20);
        }
    }

    #[test]
    fn config_validation() {
        assert!(WindowConfig::new(30, 20).is_ok());
        assert!(WindowConfig::new(30, 30).is_err());
        assert!(WindowConfig::new(30, 0).is_err());
        assert_eq!(WindowConfig::default(), WindowConfig::EXPERIMENT);
        assert_eq!(WindowConfig::EXPERIMENT.latency(), 15);
    }

    proptest! {
        #[test]
        fn windows_cover_stream(total in 1u32..400, size in 2u32..60, step_frac in 0.05f64..0.99) {
            let step = ((size as f64 * step_frac) as u32).clamp(1, size - 1);
            let ks = keyframes(total, size, step);
            let mut covered = vec![false; total as usize];
            for k in &ks {
                for f in frame_range(*k, size) {
                    if f < total {
                        covered[f as usize] = true;
                    }
                }
            }
            prop_assert!(covered.iter().all(|c| *c));
            for pair in ks.windows(2) {
                let a = frame_range(pair[0], size);
                let b = frame_range(pair[1], size);
                prop_assert_eq!(a.end - b.start, size - step);
            }
        }

        #[test]
        fn crop_is_idempotent(frames in proptest::collection::btree_set(0u32..200, 1..40), k in 0u32..200, size in 1u32..80) {
            let t = tracklet(frames);
            let once = crop(&[t], k, size);
            let twice = crop(&once.tracklets, k, size);
            prop_assert_eq!(once, twice);
        }
    }
}
