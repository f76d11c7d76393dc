use std::collections::BTreeSet;

use mvtrack_core::assoc::{camera_exclusive, pdnc, AssocMode, DistanceMatrix, TrackletDistance};
use mvtrack_core::geometry::Rig;
use mvtrack_core::sim::{generate_scene, render_detections, NoiseConfig, SceneConfig};
use mvtrack_core::svtrack::Tracklet2D;
use mvtrack_core::windows::crop;
use proptest::prelude::*;

/// Complete linkage on the original matrix, merged while the closest pair
/// is below `lambda`.
fn complete_linkage(d: &[Vec<f64>], lambda: f64) -> BTreeSet<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let link = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| d[i][j]))
                    .fold(f64::NEG_INFINITY, f64::max);
                if link < lambda && best.is_none_or(|x| link < x.2) {
                    best = Some((a, b, link));
                }
            }
        }
        let Some((a, b, _)) = best else { break };
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        clusters[a].sort_unstable();
    }
    clusters.into_iter().collect()
}

/// Random tracklet-like instance: each element has a camera and an active
/// interval; same-camera overlapping pairs are Forbidden, disjoint pairs
/// Incalculable, everything else a random finite distance.
#[derive(Debug, Clone)]
struct Instance {
    cameras: Vec<u32>,
    spans: Vec<(u32, u32)>,
    matrix: DistanceMatrix,
}

fn instance(n: usize) -> impl Strategy<Value = Instance> {
    (
        proptest::collection::vec((0u32..4, 0u32..20, 1u32..20), n),
        proptest::collection::vec(0.0..1.0f64, n * n),
    )
        .prop_map(move |(elems, values)| {
            let cameras: Vec<u32> = elems.iter().map(|e| e.0).collect();
            let spans: Vec<(u32, u32)> = elems.iter().map(|e| (e.1, e.1 + e.2)).collect();
            let matrix = DistanceMatrix::from_fn(n, |i, j| {
                let (a, b) = (spans[i], spans[j]);
                if a.1 <= b.0 || b.1 <= a.0 {
                    TrackletDistance::Incalculable
                } else if cameras[i] == cameras[j] {
                    TrackletDistance::Forbidden
                } else {
                    TrackletDistance::Finite(values[i.min(j) * n + i.max(j)])
                }
            });
            Instance { cameras, spans, matrix }
        })
}

proptest! {
    #[test]
    fn reduces_to_complete_linkage(values in proptest::collection::vec(0.0..1.0f64, 64), lambda in 0.05..0.8f64) {
        let n = 8;
        let d: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { values[i.min(j) * n + i.max(j)] }).collect())
            .collect();
        let m = DistanceMatrix::from_fn(n, |i, j| TrackletDistance::Finite(d[i][j]));
        let got: BTreeSet<Vec<usize>> = pdnc(&m, lambda).clusters.into_iter().collect();
        prop_assert_eq!(got, complete_linkage(&d, lambda));
    }

    #[test]
    fn output_is_a_safe_exclusive_partition(inst in instance(10), lambda in 0.1..0.9f64) {
        let out = pdnc(&inst.matrix, lambda);
        let mut seen: Vec<usize> = out.clusters.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..10).collect::<Vec<_>>());
        for c in &out.clusters {
            for (k, &a) in c.iter().enumerate() {
                for &b in &c[k + 1..] {
                    let (sa, sb) = (inst.spans[a], inst.spans[b]);
                    let overlap = sa.0 < sb.1 && sb.0 < sa.1;
                    prop_assert!(!(overlap && inst.cameras[a] == inst.cameras[b]));
                }
            }
        }
        prop_assert!(out.merges.iter().all(|m| m.distance.is_finite() && m.distance < lambda));
        prop_assert_eq!(out.merges.len(), 10 - out.clusters.len());
    }

    #[test]
    fn deterministic(inst in instance(9), lambda in 0.1..0.9f64) {
        prop_assert_eq!(pdnc(&inst.matrix, lambda), pdnc(&inst.matrix, lambda));
    }
}

#[test]
fn simulated_window_clusters_by_person() {
    let scene = generate_scene(&SceneConfig {
        frames: 60,
        n_persons: 4,
        ..SceneConfig::default()
    })
    .unwrap();
    let rendered = render_detections(
        &scene,
        &NoiseConfig {
            pixel_sigma: 1.0,
            seed: 4,
            ..NoiseConfig::NONE
        },
        AssocMode::Box,
    )
    .unwrap();
    let rig = Rig::new(scene.cameras.clone()).unwrap();
    let window = crop(&rendered.labeled_tracklets(), 30, 30);
    let tracklets: Vec<&Tracklet2D> = window.tracklets.iter().collect();
    let m = DistanceMatrix::compute(&tracklets, &rig, AssocMode::Box).unwrap();
    let out = pdnc(&m, 0.3);
    assert!(camera_exclusive(&out.clusters, &tracklets));
    let persons: Vec<BTreeSet<u64>> = out
        .clusters
        .iter()
        .map(|c| c.iter().map(|&i| tracklets[i].local_id).collect())
        .collect();
    assert_eq!(out.clusters.len(), 4);
    assert!(persons.iter().all(|p| p.len() == 1));
}
