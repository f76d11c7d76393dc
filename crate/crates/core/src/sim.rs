//! Synthetic multi-camera scenes with ground truth and corrupted detections.
//!
//! Persons walk between random waypoints inside a rectangular arena and are
//! seen by pinhole cameras. Each person carries a 15-joint skeleton:
//! 0 pelvis, 1 neck, 2 head, 3-5 left shoulder/elbow/wrist,
//! 6-8 right shoulder/elbow/wrist, 9-11 left hip/knee/ankle,
//! 12-14 right hip/knee/ankle.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Point2, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assoc::AssocMode;
use crate::cmmt::Position3D;
use crate::geometry::{CameraId, CameraModel, Frame, GeometryError, Keypoint, Observation2D};
use crate::metrics::TrajectorySet;
use crate::svtrack::Tracklet2D;

pub const JOINTS: usize = 15;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub focal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CameraLayout {
    /// Evenly spaced on a circle around the arena center.
    Ring { radius: f64, height: f64, focal: f64 },
    Custom(Vec<CameraPose>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub n_persons: usize,
    pub n_cameras: usize,
    pub frames: u32,
    /// Half extents of the arena along x and y, centered at the origin.
    pub arena: [f64; 2],
    pub fps: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    /// Maximum heading change per frame in radians.
    pub turn_rate: f64,
    pub min_separation: f64,
    pub layout: CameraLayout,
    pub image_size: (u32, u32),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_persons: 5,
            n_cameras: 4,
            frames: 600,
            arena: [4.0, 4.0],
            fps: 25.0,
            speed: 1.2,
            turn_rate: 0.08,
            min_separation: 1.0,
            layout: CameraLayout::Ring {
                radius: 10.0,
                height: 4.0,
                focal: 900.0,
            },
            image_size: (1920, 1080),
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let cams = match &self.layout {
            CameraLayout::Ring { .. } => self.n_cameras,
            CameraLayout::Custom(c) => c.len(),
        };
        if cams < 2 {
            return Err(SimError::InvalidScene("at least two cameras are required".into()));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.arena.iter().all(|a| positive(*a)) || !positive(self.fps) || !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(SimError::InvalidScene("arena, fps and speed must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Gaussian pixel noise on box centers and keypoints.
    pub pixel_sigma: f64,
    pub miss_rate: f64,
    /// Expected false positives per camera-frame.
    pub fp_rate: f64,
    /// Probability that a person's local id in a camera swaps with another
    /// person's at a random frame.
    pub id_swap_rate: f64,
    /// Relative standard deviation of box width and height.
    pub bbox_scale_jitter: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::NONE
    }
}

impl NoiseConfig {
    pub const NONE: Self = Self {
        pixel_sigma: 0.0,
        miss_rate: 0.0,
        fp_rate: 0.0,
        id_swap_rate: 0.0,
        bbox_scale_jitter: 0.0,
        seed: 0,
    };

    pub fn validate(&self) -> Result<(), SimError> {
        let ok = self.pixel_sigma >= 0.0
            && (0.0..1.0).contains(&self.miss_rate)
            && (0.0..=1.0).contains(&self.fp_rate)
            && (0.0..=1.0).contains(&self.id_swap_rate)
            && self.bbox_scale_jitter >= 0.0;
        if ok || self.miss_rate == 1.0 {
            Ok(())
        } else {
            Err(SimError::InvalidNoise(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub cameras: Vec<CameraModel>,
    /// Ground footprints (z = 0).
    pub footprints: TrajectorySet,
    pub poses: TrajectorySet,
    /// Person height in meters.
    pub heights: BTreeMap<u64, f64>,
}

impl Scene {
    pub fn ground_truth(&self, mode: AssocMode) -> &TrajectorySet {
        match mode {
            AssocMode::Box => &self.footprints,
            AssocMode::Pose => &self.poses,
        }
    }
}

fn intrinsics(focal: f64, (w, h): (u32, u32)) -> Matrix3<f64> {
    Matrix3::new(focal, 0.0, w as f64 / 2.0, 0.0, focal, h as f64 / 2.0, 0.0, 0.0, 1.0)
}

pub fn build_cameras(cfg: &SceneConfig) -> Result<Vec<CameraModel>, SimError> {
    let poses: Vec<CameraPose> = match &cfg.layout {
        CameraLayout::Ring { radius, height, focal } => (0..cfg.n_cameras)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / cfg.n_cameras as f64 + 0.3;
                CameraPose {
                    eye: [radius * a.cos(), radius * a.sin(), *height],
                    target: [0.0, 0.0, 0.9],
                    focal: *focal,
                }
            })
            .collect(),
        CameraLayout::Custom(p) => p.clone(),
    };
    poses
        .iter()
        .enumerate()
        .map(|(i, p)| {
            CameraModel::look_at(
                i as CameraId,
                intrinsics(p.focal, cfg.image_size),
                Point3::from(p.eye),
                Point3::from(p.target),
                Some(cfg.image_size),
            )
            .map_err(SimError::from)
        })
        .collect()
}

/// Skeleton joints for a person at `ground` facing `heading`, scaled to
/// `height`, at gait phase `phase`.
pub fn skeleton(ground: Point3<f64>, heading: f64, height: f64, phase: f64) -> Vec<Point3<f64>> {
    let s = height / 1.75;
    let fwd = Vector3::new(heading.cos(), heading.sin(), 0.0);
    let left = Vector3::new(-heading.sin(), heading.cos(), 0.0);
    let sw = phase.sin();
    // (forward, left, up) offsets at unit scale
    let local: [(f64, f64, f64); JOINTS] = [
        (0.0, 0.0, 0.95),
        (0.0, 0.0, 1.50),
        (0.0, 0.0, 1.72),
        (0.0, 0.20, 1.45),
        (-0.10 * sw, 0.22, 1.17),
        (-0.20 * sw, 0.22, 0.92),
        (0.0, -0.20, 1.45),
        (0.10 * sw, -0.22, 1.17),
        (0.20 * sw, -0.22, 0.92),
        (0.0, 0.10, 0.92),
        (0.12 * sw, 0.10, 0.50),
        (0.25 * sw, 0.10, 0.08),
        (0.0, -0.10, 0.92),
        (-0.12 * sw, -0.10, 0.50),
        (-0.25 * sw, -0.10, 0.08),
    ];
    local
        .iter()
        .map(|&(f, l, u)| ground + s * (f * fwd + l * left + u * Vector3::z()))
        .collect()
}

struct Walker {
    pos: Point2<f64>,
    heading: f64,
    waypoint: Point2<f64>,
    travelled: f64,
}

fn random_in_arena(rng: &mut ChaCha8Rng, arena: [f64; 2], margin: f64) -> Point2<f64> {
    let ax = (arena[0] - margin).max(0.0);
    let ay = (arena[1] - margin).max(0.0);
    Point2::new(rng.random_range(-ax..=ax), rng.random_range(-ay..=ay))
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::PI;
    (a + t).rem_euclid(2.0 * t) - t
}

/// Ground-truth trajectories and cameras. Deterministic in `cfg.seed`.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SimError> {
    cfg.validate()?;
    let cameras = build_cameras(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut walkers: Vec<Walker> = Vec::with_capacity(cfg.n_persons);
    let mut heights = BTreeMap::new();
    for p in 0..cfg.n_persons {
        let mut pos = random_in_arena(&mut rng, cfg.arena, 0.3);
        for _ in 0..200 {
            if walkers.iter().all(|w| (w.pos - pos).norm() >= cfg.min_separation) {
                break;
            }
            pos = random_in_arena(&mut rng, cfg.arena, 0.3);
        }
        heights.insert(p as u64, rng.random_range(1.6..1.9));
        walkers.push(Walker {
            pos,
            heading: rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            waypoint: random_in_arena(&mut rng, cfg.arena, 0.5),
            travelled: rng.random_range(0.0..std::f64::consts::TAU),
        });
    }
    let step = cfg.speed / cfg.fps;
    let mut footprints = TrajectorySet::new();
    let mut poses = TrajectorySet::new();
    for f in 0..cfg.frames {
        for (id, w) in walkers.iter().enumerate() {
            let ground = Point3::new(w.pos.x, w.pos.y, 0.0);
            footprints.insert(id as u64, f, Position3D::point(ground));
            let joints = skeleton(ground, w.heading, heights[&(id as u64)], w.travelled * 4.0);
            poses.insert(id as u64, f, Position3D(joints.into_iter().map(Some).collect()));
        }
        for i in 0..walkers.len() {
            let w = &walkers[i];
            let to_goal = w.waypoint - w.pos;
            let mut waypoint = w.waypoint;
            if to_goal.norm() < 0.3 {
                waypoint = random_in_arena(&mut rng, cfg.arena, 0.5);
            }
            let desired = (waypoint.y - w.pos.y).atan2(waypoint.x - w.pos.x);
            let turn = wrap_angle(desired - w.heading).clamp(-cfg.turn_rate, cfg.turn_rate);
            let heading = wrap_angle(w.heading + turn);
            let mut next = w.pos + step * nalgebra::Vector2::new(heading.cos(), heading.sin());
            next.x = next.x.clamp(-cfg.arena[0], cfg.arena[0]);
            next.y = next.y.clamp(-cfg.arena[1], cfg.arena[1]);
            let blocked = walkers
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && (o.pos - next).norm() < cfg.min_separation && (o.pos - next).norm() < (o.pos - w.pos).norm());
            let w = &mut walkers[i];
            w.heading = heading;
            if blocked {
                w.waypoint = random_in_arena(&mut rng, cfg.arena, 0.5);
            } else {
                w.travelled += (next - w.pos).norm();
                w.pos = next;
                w.waypoint = waypoint;
            }
        }
    }
    Ok(Scene {
        config: cfg.clone(),
        cameras,
        footprints,
        poses,
        heights,
    })
}

/// One rendered detection with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedDetection {
    pub observation: Observation2D,
    /// Ground-truth person, `None` for false positives.
    pub person: Option<u64>,
    /// Per-camera local id after id swaps, `None` for false positives.
    pub local_id: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Rendered {
    /// Detections per camera in frame order.
    pub cameras: BTreeMap<CameraId, Vec<RenderedDetection>>,
    pub swaps: Vec<IdSwap>,
}

/// From `frame` on, `a` and `b` exchange local ids in `camera`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdSwap {
    pub camera: CameraId,
    pub frame: Frame,
    pub a: u64,
    pub b: u64,
}

impl Rendered {
    pub fn observations(&self, camera: CameraId) -> Vec<Observation2D> {
        self.cameras
            .get(&camera)
            .map(|d| d.iter().map(|r| r.observation.clone()).collect())
            .unwrap_or_default()
    }

    pub fn detection_count(&self) -> usize {
        self.cameras.values().map(Vec::len).sum()
    }

    /// Exchanges local ids of `a` and `b` from `swap.frame` on.
    pub fn apply_swap(&mut self, swap: IdSwap) {
        if let Some(dets) = self.cameras.get_mut(&swap.camera) {
            for d in dets.iter_mut().filter(|d| d.observation.frame >= swap.frame) {
                d.local_id = match d.local_id {
                    Some(x) if x == swap.a => Some(swap.b),
                    Some(x) if x == swap.b => Some(swap.a),
                    other => other,
                };
            }
        }
        self.swaps.push(swap);
    }

    /// 2D tracklets keyed by local id; false positives are dropped. All
    /// tracklets are confirmed.
    pub fn labeled_tracklets(&self) -> Vec<Tracklet2D> {
        let mut out = Vec::new();
        for (cam, dets) in &self.cameras {
            let mut by_id: BTreeMap<u64, Tracklet2D> = BTreeMap::new();
            for d in dets {
                if let Some(id) = d.local_id {
                    by_id
                        .entry(id)
                        .or_insert_with(|| Tracklet2D::new(*cam, id))
                        .observations
                        .insert(d.observation.frame, d.observation.clone());
                }
            }
            out.extend(by_id.into_values());
        }
        out
    }
}

fn person_observation(
    cam: &CameraModel,
    frame: Frame,
    ground: &Point3<f64>,
    joints: &[Option<Point3<f64>>],
    height: f64,
    mode: AssocMode,
) -> Option<Observation2D> {
    let foot = cam.project(ground).ok()?;
    if !cam.in_image(&foot) {
        return None;
    }
    match mode {
        AssocMode::Box => {
            let head = cam.project(&(ground + Vector3::new(0.0, 0.0, height))).ok()?;
            let h = (foot - head).norm();
            Some(Observation2D::from_box(frame, cam.camera_id, foot, 0.4 * h, h, 1.0))
        }
        AssocMode::Pose => {
            let kps: Option<Vec<Keypoint>> = joints
                .iter()
                .map(|j| {
                    let p = cam.project(j.as_ref()?).ok()?;
                    Some(Keypoint {
                        position: p,
                        valid: true,
                    })
                })
                .collect();
            Observation2D::from_keypoints(frame, cam.camera_id, kps?, 1.0)
        }
    }
}

fn camera_rng(seed: u64, camera: CameraId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(camera as u64 + 1);
    rng
}

/// Projects every person into every camera and corrupts the result.
/// Each camera draws from its own random stream, so cameras are independent.
pub fn render_detections(scene: &Scene, noise: &NoiseConfig, mode: AssocMode) -> Result<Rendered, SimError> {
    noise.validate()?;
    let mut out = Rendered::default();
    let frames = scene.config.frames;
    let pixel = Normal::new(0.0, noise.pixel_sigma.max(0.0)).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    let jitter =
        Normal::new(0.0, noise.bbox_scale_jitter.max(0.0)).map_err(|e| SimError::InvalidNoise(e.to_string()))?;
    for cam in &scene.cameras {
        let mut rng = camera_rng(noise.seed, cam.camera_id);
        let mut swaps = Vec::new();
        if noise.id_swap_rate > 0.0 && scene.config.n_persons >= 2 {
            for p in 0..scene.config.n_persons as u64 {
                if rng.random_bool(noise.id_swap_rate) {
                    let mut q = rng.random_range(0..scene.config.n_persons as u64 - 1);
                    if q >= p {
                        q += 1;
                    }
                    swaps.push(IdSwap {
                        camera: cam.camera_id,
                        frame: rng.random_range(0..frames.max(1)),
                        a: p,
                        b: q,
                    });
                }
            }
        }
        let mut dets = Vec::new();
        for f in 0..frames {
            let mut frame_dets: Vec<RenderedDetection> = Vec::new();
            for (pid, track) in &scene.footprints.tracks {
                let Some(ground) = track.get(&f).and_then(Position3D::primary) else {
                    continue;
                };
                let joints = scene.poses.tracks.get(pid).and_then(|t| t.get(&f));
                let joints = joints.map(|p| p.0.as_slice()).unwrap_or(&[]);
                let Some(mut obs) = person_observation(cam, f, &ground, joints, scene.heights[pid], mode) else {
                    continue;
                };
                if rng.random_bool(noise.miss_rate.clamp(0.0, 1.0)) {
                    continue;
                }
                if noise.pixel_sigma > 0.0 {
                    match &mut obs.keypoints {
                        Some(kps) => {
                            for k in kps.iter_mut() {
                                k.position += nalgebra::Vector2::new(pixel.sample(&mut rng), pixel.sample(&mut rng));
                            }
                            let kps = kps.clone();
                            obs = Observation2D::from_keypoints(f, cam.camera_id, kps, obs.score)
                                .expect("keypoints stay valid");
                        }
                        None => {
                            obs.center += nalgebra::Vector2::new(pixel.sample(&mut rng), pixel.sample(&mut rng));
                        }
                    }
                }
                if noise.bbox_scale_jitter > 0.0 {
                    obs.width *= (1.0 + jitter.sample(&mut rng)).max(0.2);
                    obs.height *= (1.0 + jitter.sample(&mut rng)).max(0.2);
                }
                frame_dets.push(RenderedDetection {
                    observation: obs,
                    person: Some(*pid),
                    local_id: Some(*pid),
                });
            }
            if noise.fp_rate > 0.0 && !frame_dets.is_empty() && rng.random_bool(noise.fp_rate) {
                let template = frame_dets[rng.random_range(0..frame_dets.len())].observation.clone();
                let (w, h) = cam.image_size.unwrap_or(scene.config.image_size);
                let center = Point2::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
                let shift = center - template.center;
                let obs = match template.keypoints {
                    Some(kps) => {
                        let moved = kps
                            .into_iter()
                            .map(|k| Keypoint {
                                position: k.position + shift,
                                valid: k.valid,
                            })
                            .collect();
                        Observation2D::from_keypoints(f, cam.camera_id, moved, 0.5).expect("template has keypoints")
                    }
                    None => Observation2D::from_box(f, cam.camera_id, center, template.width, template.height, 0.5),
                };
                frame_dets.push(RenderedDetection {
                    observation: obs,
                    person: None,
                    local_id: None,
                });
            }
            dets.extend(frame_dets);
        }
        out.cameras.insert(cam.camera_id, dets);
        swaps.sort_by_key(|s| s.frame);
        for s in swaps {
            out.apply_swap(s);
        }
    }
    Ok(out)
}

/// A named scene with its expected failure signature.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub scene: SceneConfig,
    pub noise: NoiseConfig,
    pub expected: &'static str,
}

pub fn degenerate_scenarios() -> Vec<Scenario> {
    let base = SceneConfig {
        frames: 200,
        n_persons: 3,
        ..SceneConfig::default()
    };
    let light = NoiseConfig {
        pixel_sigma: 1.0,
        seed: 1,
        ..NoiseConfig::NONE
    };
    vec![
        Scenario {
            name: "well-conditioned",
            scene: base.clone(),
            noise: light,
            expected: "no diagnostics",
        },
        Scenario {
            name: "single-camera-zone",
            scene: SceneConfig {
                layout: CameraLayout::Custom(vec![
                    CameraPose {
                        eye: [0.0, -10.0, 4.0],
                        target: [0.0, 0.0, 0.9],
                        focal: 900.0,
                    },
                    CameraPose {
                        eye: [-4.0, -6.0, 4.0],
                        target: [-2.5, -2.5, 0.0],
                        focal: 1400.0,
                    },
                ]),
                ..base.clone()
            },
            noise: light,
            expected: "empty-frame diagnostics wherever only camera 0 sees a person",
        },
        Scenario {
            name: "near-coincident-pair",
            scene: SceneConfig {
                layout: CameraLayout::Custom(vec![
                    CameraPose {
                        eye: [0.0, -10.0, 4.0],
                        target: [0.0, 0.0, 0.9],
                        focal: 900.0,
                    },
                    CameraPose {
                        eye: [0.25, -10.0, 4.0],
                        target: [0.0, 0.0, 0.9],
                        focal: 900.0,
                    },
                ]),
                ..base.clone()
            },
            noise: light,
            expected: "depth error grows with the short baseline",
        },
        Scenario {
            name: "crowded-cluster",
            scene: SceneConfig {
                n_persons: 8,
                arena: [1.5, 1.5],
                min_separation: 0.6,
                ..base
            },
            noise: light,
            expected: "overlapping boxes split clusters into duplicate tracks (false positives)",
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::triangulate_pair;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SceneConfig {
            frames: 100,
            ..SceneConfig::default()
        };
        let a = generate_scene(&cfg).unwrap();
        let b = generate_scene(&cfg).unwrap();
        assert_eq!(a, b);
        let noise = NoiseConfig {
            pixel_sigma: 2.0,
            miss_rate: 0.1,
            fp_rate: 0.05,
            ..NoiseConfig::NONE
        };
        assert_eq!(
            render_detections(&a, &noise, AssocMode::Box).unwrap(),
            render_detections(&b, &noise, AssocMode::Box).unwrap()
        );
        let c = generate_scene(&SceneConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.footprints, c.footprints);
    }

    #[test]
    fn trajectories_stay_in_arena() {
        let cfg = SceneConfig::default();
        let s = generate_scene(&cfg).unwrap();
        for t in s.footprints.tracks.values() {
            for p in t.values() {
                let p = p.primary().unwrap();
                assert!(p.x.abs() <= cfg.arena[0] && p.y.abs() <= cfg.arena[1]);
                assert_eq!(p.z, 0.0);
            }
        }
    }

    #[test]
    fn ring_defaults_see_the_arena() {
        let s = generate_scene(&SceneConfig::default()).unwrap();
        let (mut seen, mut total) = (0usize, 0usize);
        for cam in &s.cameras {
            for t in s.poses.tracks.values() {
                for p in t.values() {
                    total += 1;
                    let ok = p.joints().iter().flatten().all(|j| {
                        cam.project(j).is_ok_and(|x| x.x.is_finite() && x.y.is_finite() && cam.in_image(&x))
                    });
                    seen += usize::from(ok);
                }
            }
        }
        assert!(seen as f64 >= 0.95 * total as f64, "{seen}/{total}");
    }

    #[test]
    fn zero_noise_is_exact_projection() {
        let s = generate_scene(&SceneConfig {
            frames: 50,
            ..SceneConfig::default()
        })
        .unwrap();
        let r = render_detections(&s, &NoiseConfig::NONE, AssocMode::Box).unwrap();
        for (cam, dets) in &r.cameras {
            let cam = &s.cameras[*cam as usize];
            for d in dets {
                let p = d.person.unwrap();
                let g = s.footprints.tracks[&p][&d.observation.frame].primary().unwrap();
                assert_eq!(d.observation.center, cam.project(&g).unwrap());
            }
        }
        let r = render_detections(&s, &NoiseConfig::NONE, AssocMode::Pose).unwrap();
        let d = &r.cameras[&0][0];
        let joints = &s.poses.tracks[&d.person.unwrap()][&d.observation.frame];
        for (k, j) in d.observation.keypoints.as_ref().unwrap().iter().zip(joints.joints()) {
            assert_eq!(k.position, s.cameras[0].project(&j.unwrap()).unwrap());
        }
    }

    #[test]
    fn full_miss_rate_empties_streams() {
        let s = generate_scene(&SceneConfig {
            frames: 30,
            ..SceneConfig::default()
        })
        .unwrap();
        let noise = NoiseConfig {
            miss_rate: 1.0,
            ..NoiseConfig::NONE
        };
        assert_eq!(render_detections(&s, &noise, AssocMode::Box).unwrap().detection_count(), 0);
    }

    #[test]
    fn miss_rate_is_respected() {
        let s = generate_scene(&SceneConfig {
            frames: 600,
            ..SceneConfig::default()
        })
        .unwrap();
        let clean = render_detections(&s, &NoiseConfig::NONE, AssocMode::Box).unwrap().detection_count();
        assert!(clean >= 10_000);
        let noise = NoiseConfig {
            miss_rate: 0.1,
            seed: 3,
            ..NoiseConfig::NONE
        };
        let kept = render_detections(&s, &noise, AssocMode::Box).unwrap().detection_count();
        let miss = 1.0 - kept as f64 / clean as f64;
        assert!((miss - 0.1).abs() <= 0.01, "{miss}");
    }

    #[test]
    fn swaps_exchange_local_ids() {
        let s = generate_scene(&SceneConfig {
            frames: 40,
            ..SceneConfig::default()
        })
        .unwrap();
        let mut r = render_detections(&s, &NoiseConfig::NONE, AssocMode::Box).unwrap();
        r.apply_swap(IdSwap {
            camera: 1,
            frame: 20,
            a: 0,
            b: 1,
        });
        for d in &r.cameras[&1] {
            let expect = match (d.person, d.observation.frame >= 20) {
                (Some(0), true) => Some(1),
                (Some(1), true) => Some(0),
                (p, _) => p,
            };
            assert_eq!(d.local_id, expect);
        }
        let ts = r.labeled_tracklets();
        assert!(ts.iter().all(|t| t.confirmed));
    }

    #[test]
    fn short_baseline_inflates_triangulation_error() {
        let scenarios = degenerate_scenarios();
        let err = |name: &str| {
            let sc = scenarios.iter().find(|s| s.name == name).unwrap();
            let scene = generate_scene(&sc.scene).unwrap();
            let noise = Normal::new(0.0, 1.0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let (c0, c1) = (&scene.cameras[0], &scene.cameras[1]);
            let mut errs = Vec::new();
            for t in scene.footprints.tracks.values() {
                for p in t.values() {
                    let g = p.primary().unwrap() + Vector3::new(0.0, 0.0, 0.9);
                    let mut a = c0.project(&g).unwrap();
                    let mut b = c1.project(&g).unwrap();
                    a += nalgebra::Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    b += nalgebra::Vector2::new(noise.sample(&mut rng), noise.sample(&mut rng));
                    if let Ok(x) = triangulate_pair(&a, &b, c0, c1) {
                        errs.push((x.point - g).norm());
                    }
                }
            }
            errs.sort_by(f64::total_cmp);
            errs[errs.len() / 2]
        };
        let good = err("well-conditioned");
        let bad = err("near-coincident-pair");
        assert!(bad >= 5.0 * good, "{bad} vs {good}");
    }
}
