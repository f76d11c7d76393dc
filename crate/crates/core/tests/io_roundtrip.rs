use std::collections::BTreeMap;

use mvtrack_core::io::{
    format_tracks, load_calibration, load_detections, load_tracks, write_calibration, write_detections,
    write_tracks, IoError,
};
use mvtrack_core::pipeline::run_detections;
use mvtrack_core::sim::{generate_scene, render_detections, NoiseConfig, SceneConfig};
use mvtrack_core::{AssocMode, PipelineConfig};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-8 * a.abs().max(1.0)
}

#[test]
fn simulated_files_roundtrip_and_track_identically() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(&SceneConfig {
        frames: 90,
        n_persons: 3,
        ..SceneConfig::default()
    })
    .unwrap();
    let noise = NoiseConfig {
        pixel_sigma: 1.0,
        miss_rate: 0.05,
        fp_rate: 0.05,
        seed: 3,
        ..NoiseConfig::NONE
    };
    let rendered = render_detections(&scene, &noise, AssocMode::Box).unwrap();
    let streams: BTreeMap<_, _> = rendered.cameras.keys().map(|c| (*c, rendered.observations(*c))).collect();

    let (cal, det, gt) = (dir.path().join("cal.txt"), dir.path().join("det.txt"), dir.path().join("gt.txt"));
    write_calibration(&cal, &scene.cameras).unwrap();
    write_detections(&det, &streams).unwrap();
    write_tracks(&gt, &scene.footprints).unwrap();

    let cameras = load_calibration(&cal).unwrap();
    assert_eq!(cameras.len(), scene.cameras.len());
    for (a, b) in cameras.iter().zip(&scene.cameras) {
        assert_eq!(a.camera_id, b.camera_id);
        assert_eq!(a.image_size, b.image_size);
        assert!(a.projection.iter().zip(b.projection.iter()).all(|(x, y)| close(*x, *y)));
    }
    let loaded = load_detections(&det).unwrap();
    assert_eq!(loaded.keys().collect::<Vec<_>>(), streams.keys().collect::<Vec<_>>());
    for (cam, dets) in &streams {
        assert_eq!(loaded[cam].len(), dets.len());
        for (a, b) in loaded[cam].iter().zip(dets) {
            assert_eq!((a.frame, a.camera_id), (b.frame, b.camera_id));
            assert!(close(a.center.x, b.center.x) && close(a.center.y, b.center.y));
            assert!(close(a.width, b.width) && close(a.height, b.height));
        }
    }
    let truth = load_tracks(&gt).unwrap();
    assert_eq!(truth.detection_count(), scene.footprints.detection_count());

    // Same input through memory and through files: byte-identical output.
    let cfg = PipelineConfig::default();
    let a = run_detections(&cfg, &scene.cameras, &streams, 90, false).unwrap();
    let b = run_detections(&cfg, &cameras, &loaded, 90, false).unwrap();
    let c = run_detections(&cfg, &cameras, &loaded, 90, false).unwrap();
    assert_eq!(format_tracks(&b.tracks), format_tracks(&c.tracks));
    let ra = mvtrack_core::metrics::mota(&truth, &a.tracks, 0.5);
    let rb = mvtrack_core::metrics::mota(&truth, &b.tracks, 0.5);
    assert_eq!((ra.fp, ra.fn_, ra.ids), (rb.fp, rb.fn_, rb.ids));

    let out = dir.path().join("out.txt");
    write_tracks(&out, &b.tracks).unwrap();
    assert_eq!(std::fs::read_to_string(&out).unwrap(), format_tracks(&b.tracks));
}

#[test]
fn pose_tracks_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let scene = generate_scene(&SceneConfig {
        frames: 10,
        n_persons: 2,
        ..SceneConfig::default()
    })
    .unwrap();
    let path = dir.path().join("poses.txt");
    write_tracks(&path, &scene.poses).unwrap();
    let back = load_tracks(&path).unwrap();
    for (id, track) in &scene.poses.tracks {
        for (f, p) in track {
            let q = &back.tracks[id][f];
            assert_eq!(p.joints().len(), q.joints().len());
            assert!(p.distance(q).unwrap() < 1e-8);
        }
    }
}

#[test]
fn missing_file_names_the_path() {
    let err = load_detections(std::path::Path::new("/nonexistent/det.txt")).unwrap_err();
    assert!(matches!(err, IoError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/det.txt"));
}
