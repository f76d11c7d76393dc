use std::collections::BTreeMap;

use mvtrack_core::assoc::AssocMode;
use mvtrack_core::metrics::{self, LimbTable, TrajectorySet};
use mvtrack_core::pipeline::{evaluate, run_detections};
use mvtrack_core::sim::{generate_scene, render_detections, NoiseConfig, SceneConfig};
use mvtrack_core::{PipelineConfig, Position3D};
use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn poses(frames: u32) -> TrajectorySet {
    generate_scene(&SceneConfig {
        frames,
        n_persons: 3,
        ..SceneConfig::default()
    })
    .unwrap()
    .poses
}

/// Every joint moved by `scale` times one fixed random offset.
fn perturbed(gt: &TrajectorySet, offsets: &[Vector3<f64>], scale: f64) -> TrajectorySet {
    let mut out = TrajectorySet::new();
    let mut k = 0;
    for (id, track) in &gt.tracks {
        for (f, p) in track {
            let joints = p
                .joints()
                .iter()
                .map(|j| {
                    k += 1;
                    j.map(|j| j + offsets[k % offsets.len()] * scale)
                })
                .collect();
            out.insert(*id, *f, Position3D(joints));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pcp_never_rises_with_noise(seed in 0u64..1000) {
        let gt = poses(20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets: Vec<Vector3<f64>> = (0..997)
            .map(|_| Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng)))
            .collect();
        let limbs = LimbTable::default();
        let sweep: Vec<f64> = [0.0, 0.02, 0.05, 0.1, 0.2, 0.4]
            .iter()
            .map(|&s| metrics::pcp(&gt, &perturbed(&gt, &offsets, s), &limbs, 0.5).average)
            .collect();
        prop_assert_eq!(sweep[0], 1.0);
        prop_assert!(sweep.windows(2).all(|w| w[1] <= w[0]), "{sweep:?}");
    }

    #[test]
    fn identity_and_relabeling(shift in 1u64..1000, drop_from in 5u32..30) {
        let gt = poses(30);
        let r = metrics::mota(&gt, &gt, 0.5);
        prop_assert_eq!((r.mota, r.fp, r.fn_, r.ids), (1.0, 0, 0, 0));
        let mut pred = gt.clone();
        for t in pred.tracks.values_mut() {
            t.retain(|f, _| *f < drop_from);
        }
        let a = metrics::idf1(&gt, &pred, 0.5);
        let b = metrics::idf1(&gt, &pred.relabeled(|id| id * 7 + shift), 0.5);
        prop_assert_eq!(a, b);
    }
}

#[test]
fn pose_pipeline_closes_with_full_pcp() {
    let scene = generate_scene(&SceneConfig {
        frames: 120,
        n_persons: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let r = render_detections(&scene, &NoiseConfig::NONE, AssocMode::Pose).unwrap();
    let streams: BTreeMap<_, _> = r.cameras.keys().map(|c| (*c, r.observations(*c))).collect();
    let mut cfg = PipelineConfig::default();
    cfg.assoc.mode = AssocMode::Pose;
    let out = run_detections(&cfg, &scene.cameras, &streams, 120, false).unwrap();
    let e = evaluate(&scene.poses, &out.tracks, &cfg, &LimbTable::default());
    assert_eq!((e.mot.mota, e.mot.ids), (1.0, 0));
    assert_eq!(e.pcp.unwrap().average, 1.0);
}

#[test]
fn noisy_pose_pipeline_keeps_most_limbs() {
    let scene = generate_scene(&SceneConfig {
        frames: 120,
        n_persons: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let noise = NoiseConfig {
        pixel_sigma: 2.0,
        miss_rate: 0.05,
        seed: 8,
        ..NoiseConfig::NONE
    };
    let r = render_detections(&scene, &noise, AssocMode::Pose).unwrap();
    let streams: BTreeMap<_, _> = r.cameras.keys().map(|c| (*c, r.observations(*c))).collect();
    let mut cfg = PipelineConfig::default();
    cfg.assoc.mode = AssocMode::Pose;
    let out = run_detections(&cfg, &scene.cameras, &streams, 120, false).unwrap();
    let e = evaluate(&scene.poses, &out.tracks, &cfg, &LimbTable::default());
    assert!(e.pcp.unwrap().average > 0.9);
    assert!(e.mot.mota > 0.9);
}
