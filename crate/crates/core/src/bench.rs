//! Throughput over a grid of camera and person counts.

use std::fmt::Write as _;
use std::time::Duration;

use crate::assoc::AssocMode;
use crate::config::PipelineConfig;
use crate::pipeline::{run_detections, PipelineError};
use crate::sim::{generate_scene, render_detections, NoiseConfig, SceneConfig, SimError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub cameras: usize,
    pub persons: usize,
    pub frames: u32,
    /// Frames per second of the tracking stages, best of the repeats.
    pub fps: f64,
    /// Mean association time per window of the fastest repeat.
    pub assoc_per_window: Duration,
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub cameras: Vec<usize>,
    pub persons: Vec<usize>,
    pub frames: u32,
    pub repeats: usize,
    pub noise: NoiseConfig,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            cameras: vec![2, 4, 6],
            persons: vec![2, 4, 8],
            frames: 300,
            repeats: 3,
            noise: NoiseConfig::NONE,
            seed: 0,
        }
    }
}

pub fn run_cell(
    cfg: &PipelineConfig,
    cameras: usize,
    persons: usize,
    spec: &BenchSpec,
) -> Result<BenchCell, BenchError> {
    let scene = generate_scene(&SceneConfig {
        n_cameras: cameras,
        n_persons: persons,
        frames: spec.frames,
        seed: spec.seed,
        ..SceneConfig::default()
    })?;
    let rendered = render_detections(&scene, &spec.noise, AssocMode::Box)?;
    let streams = rendered.cameras.keys().map(|c| (*c, rendered.observations(*c))).collect();
    let mut best: Option<(Duration, Duration)> = None;
    for _ in 0..spec.repeats.max(1) {
        let out = run_detections(cfg, &scene.cameras, &streams, spec.frames, false)?;
        let assoc: Duration = out.windows.iter().map(|w| w.assoc_time).sum();
        let per_window = assoc / out.windows.len().max(1) as u32;
        if best.is_none_or(|(e, _)| out.elapsed < e) {
            best = Some((out.elapsed, per_window));
        }
    }
    let (elapsed, per_window) = best.expect("at least one repeat");
    Ok(BenchCell {
        cameras,
        persons,
        frames: spec.frames,
        fps: spec.frames as f64 / elapsed.as_secs_f64().max(1e-12),
        assoc_per_window: per_window,
    })
}

pub fn run_grid(cfg: &PipelineConfig, spec: &BenchSpec) -> Result<Vec<BenchCell>, BenchError> {
    let mut out = Vec::new();
    for &c in &spec.cameras {
        for &p in &spec.persons {
            out.push(run_cell(cfg, c, p, spec)?);
        }
    }
    Ok(out)
}

/// Whitespace-separated table with a header line.
pub fn format_table(cells: &[BenchCell]) -> String {
    let mut s = String::from("cameras persons frames fps assoc_us_per_window\n");
    for c in cells {
        let _ = writeln!(
            s,
            "{} {} {} {:.1} {:.1}",
            c.cameras,
            c.persons,
            c.frames,
            c.fps,
            c.assoc_per_window.as_secs_f64() * 1e6
        );
    }
    s
}

/// Cells whose FPS rises when one axis grows and the other is fixed.
pub fn monotonicity_violations(cells: &[BenchCell]) -> Vec<(&BenchCell, &BenchCell)> {
    let mut out = Vec::new();
    for a in cells {
        for b in cells {
            let camera_step = a.persons == b.persons && b.cameras > a.cameras;
            let person_step = a.cameras == b.cameras && b.persons > a.persons;
            if (camera_step || person_step) && b.fps > a.fps {
                out.push((a, b));
            }
        }
    }
    out
}

/// Least-squares slope of `ln(assoc time)` against `ln(persons · cameras)`.
pub fn assoc_loglog_slope(cells: &[BenchCell]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter(|c| !c.assoc_per_window.is_zero())
        .map(|c| (((c.persons * c.cameras) as f64).ln(), c.assoc_per_window.as_secs_f64().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(cameras: usize, persons: usize, fps: f64, us: u64) -> BenchCell {
        BenchCell {
            cameras,
            persons,
            frames: 100,
            fps,
            assoc_per_window: Duration::from_micros(us),
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let cells: Vec<BenchCell> = [(2, 2), (4, 4), (6, 8)]
            .iter()
            .map(|&(c, p)| cell(c, p, 1.0, ((c * p) as u64).pow(2)))
            .collect();
        assert!((assoc_loglog_slope(&cells).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn detects_violations() {
        let cells = vec![cell(2, 2, 100.0, 1), cell(4, 2, 120.0, 1), cell(2, 4, 90.0, 1)];
        let v = monotonicity_violations(&cells);
        assert_eq!(v.len(), 1);
        assert_eq!((v[0].1.cameras, v[0].1.persons), (4, 2));
    }

    #[test]
    fn table_has_one_row_per_cell() {
        let spec = BenchSpec {
            cameras: vec![2],
            persons: vec![1, 2],
            frames: 40,
            repeats: 1,
            ..BenchSpec::default()
        };
        let cells = run_grid(&PipelineConfig::default(), &spec).unwrap();
        assert_eq!(format_table(&cells).lines().count(), 3);
        assert!(cells.iter().all(|c| c.fps > 0.0));
    }
}
