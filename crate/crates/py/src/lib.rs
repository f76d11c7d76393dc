//! Python bindings.
//!
//! Trajectories cross the boundary as `{id: {frame: [(x, y, z) | None, ...]}}`
//! and detections as `(frame, camera_id, x, y, w, h, score)` tuples with the
//! box center in `(x, y)`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::{Matrix3, Matrix3x4, Point2, Point3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use mvtrack_core::assoc::{self, AssocMode, DistanceMatrix, TrackletDistance};
use mvtrack_core::cmmt::{Position3D, TriangulationMethod};
use mvtrack_core::config::PipelineConfig as CoreConfig;
use mvtrack_core::geometry::{self, CameraModel as CoreCamera, Observation2D};
use mvtrack_core::metrics::{self, TrajectorySet};
use mvtrack_core::{io, pipeline, sim};

fn pt2(p: (f64, f64)) -> Point2<f64> {
    Point2::new(p.0, p.1)
}

fn pt3(p: (f64, f64, f64)) -> Point3<f64> {
    Point3::new(p.0, p.1, p.2)
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "CameraModel", module = "mvtrack", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyCamera {
    inner: CoreCamera,
}

#[pymethods]
impl PyCamera {
    /// Camera from a 3×4 projection matrix given as three rows.
    #[new]
    #[pyo3(signature = (camera_id, projection, image_size=None))]
    fn new(camera_id: u32, projection: [[f64; 4]; 3], image_size: Option<(u32, u32)>) -> PyResult<Self> {
        let inner = CoreCamera::new(camera_id, Matrix3x4::from_fn(|r, c| projection[r][c]), image_size).map_err(value_err)?;
        Ok(Self { inner })
    }

    /// Pinhole camera at `eye` looking at `target` with focal length in pixels.
    #[staticmethod]
    #[pyo3(signature = (camera_id, focal, eye, target, image_size=(1920, 1080)))]
    fn look_at(
        camera_id: u32,
        focal: f64,
        eye: (f64, f64, f64),
        target: (f64, f64, f64),
        image_size: (u32, u32),
    ) -> PyResult<Self> {
        let (cx, cy) = (image_size.0 as f64 / 2.0, image_size.1 as f64 / 2.0);
        let k = Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0);
        let inner = CoreCamera::look_at(camera_id, k, pt3(eye), pt3(target), Some(image_size)).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn camera_id(&self) -> u32 {
        self.inner.camera_id
    }

    #[getter]
    fn projection(&self) -> [[f64; 4]; 3] {
        let p = &self.inner.projection;
        std::array::from_fn(|r| std::array::from_fn(|c| p[(r, c)]))
    }

    #[getter]
    fn image_size(&self) -> Option<(u32, u32)> {
        self.inner.image_size
    }

    fn center(&self) -> (f64, f64, f64) {
        let c = self.inner.center();
        (c.x, c.y, c.z)
    }

    fn project(&self, point: (f64, f64, f64)) -> PyResult<(f64, f64)> {
        let p = self.inner.project(&pt3(point)).map_err(value_err)?;
        Ok((p.x, p.y))
    }

    fn __repr__(&self) -> String {
        format!("CameraModel(camera_id={})", self.inner.camera_id)
    }
}

fn cameras_of(cams: &[PyRef<'_, PyCamera>]) -> Vec<CoreCamera> {
    cams.iter().map(|c| c.inner.clone()).collect()
}

/// Normalized epipolar distance between two boxes `(x, y, w, h)`.
#[pyfunction]
fn normalized_pair_distance(
    camera_a: PyRef<'_, PyCamera>,
    box_a: (f64, f64, f64, f64),
    camera_b: PyRef<'_, PyCamera>,
    box_b: (f64, f64, f64, f64),
) -> PyResult<f64> {
    let rig = geometry::Rig::new(vec![camera_a.inner.clone(), camera_b.inner.clone()]).map_err(value_err)?;
    let a = Observation2D::from_box(0, camera_a.inner.camera_id, pt2((box_a.0, box_a.1)), box_a.2, box_a.3, 1.0);
    let b = Observation2D::from_box(0, camera_b.inner.camera_id, pt2((box_b.0, box_b.1)), box_b.2, box_b.3, 1.0);
    let f = rig
        .fundamental(a.camera_id, b.camera_id)
        .ok_or_else(|| PyValueError::new_err("cameras must have distinct ids"))?;
    geometry::normalized_pair_distance(&a, &b, f).map_err(value_err)
}

/// Linear triangulation from `[(camera, (u, v)), ...]`; returns the point
/// and the mean reprojection error in pixels.
#[pyfunction]
fn triangulate(views: Vec<(PyRef<'_, PyCamera>, (f64, f64))>) -> PyResult<((f64, f64, f64), f64)> {
    let data: Vec<(_, &CoreCamera)> = views.iter().map(|(c, p)| (pt2(*p), &c.inner)).collect();
    let t = geometry::triangulate_views(&data).map_err(value_err)?;
    Ok(((t.point.x, t.point.y, t.point.z), t.residual))
}

/// Propagating complete-linkage clustering. `None` marks an incalculable
/// distance and `inf` a forbidden pair; only the upper triangle is read.
#[pyfunction]
#[pyo3(signature = (distances, threshold=0.3))]
fn pdnc(distances: Vec<Vec<Option<f64>>>, threshold: f64) -> PyResult<Vec<Vec<usize>>> {
    let n = distances.len();
    if distances.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("distance matrix must be square"));
    }
    let m = DistanceMatrix::from_fn(n, |i, j| match distances[i][j] {
        None => TrackletDistance::Incalculable,
        Some(v) if v.is_infinite() => TrackletDistance::Forbidden,
        Some(v) => TrackletDistance::Finite(v),
    });
    Ok(assoc::pdnc(&m, threshold).clusters)
}

#[pyclass(name = "PipelineConfig", module = "mvtrack", skip_from_py_object)]
#[derive(Clone, Default)]
struct PyConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyConfig {
    /// Parses TOML text; the empty string gives the defaults.
    #[new]
    #[pyo3(signature = (toml=""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::parse(toml).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: CoreConfig::load(&path).map_err(value_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn window(&self) -> (u32, u32) {
        (self.inner.window.size, self.inner.window.step)
    }

    #[setter]
    fn set_window(&mut self, v: (u32, u32)) -> PyResult<()> {
        let w = mvtrack_core::windows::WindowConfig::new(v.0, v.1).map_err(value_err)?;
        self.inner.window = w;
        Ok(())
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.assoc.lambda
    }

    #[setter]
    fn set_lambda_(&mut self, v: f64) {
        self.inner.assoc.lambda = v;
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.assoc.mode.to_string()
    }

    #[setter]
    fn set_mode(&mut self, v: &str) -> PyResult<()> {
        self.inner.assoc.mode = v.parse::<AssocMode>().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn method(&self) -> String {
        self.inner.cmmt.method.to_string()
    }

    #[setter]
    fn set_method(&mut self, v: &str) -> PyResult<()> {
        self.inner.cmmt.method = v.parse::<TriangulationMethod>().map_err(value_err)?;
        Ok(())
    }

    #[getter]
    fn phi(&self) -> u32 {
        self.inner.cmmt.phi
    }

    #[setter]
    fn set_phi(&mut self, v: u32) {
        self.inner.cmmt.phi = v;
    }

    #[getter]
    fn kappa(&self) -> f64 {
        self.inner.cmmt.kappa
    }

    #[setter]
    fn set_kappa(&mut self, v: f64) {
        self.inner.cmmt.kappa = v;
    }
}

type PyPoint = Option<(f64, f64, f64)>;
type PyTracks = BTreeMap<u64, BTreeMap<u32, Vec<PyPoint>>>;

fn tracks_to_py(t: &TrajectorySet) -> PyTracks {
    t.tracks
        .iter()
        .map(|(id, tr)| {
            let frames = tr
                .iter()
                .map(|(f, p)| (*f, p.joints().iter().map(|j| j.map(|j| (j.x, j.y, j.z))).collect()))
                .collect();
            (*id, frames)
        })
        .collect()
}

fn tracks_from_py(t: PyTracks) -> TrajectorySet {
    let mut out = TrajectorySet::new();
    for (id, tr) in t {
        for (f, p) in tr {
            out.insert(id, f, Position3D(p.into_iter().map(|j| j.map(pt3)).collect()));
        }
    }
    out
}

type PyDetection = (u32, u32, f64, f64, f64, f64, f64);

/// Runs the tracker on in-memory detections.
#[pyfunction]
#[pyo3(signature = (cameras, detections, config=None))]
fn track(
    cameras: Vec<PyRef<'_, PyCamera>>,
    detections: Vec<PyDetection>,
    config: Option<PyRef<'_, PyConfig>>,
) -> PyResult<PyTracks> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let mut streams: BTreeMap<u32, Vec<Observation2D>> = BTreeMap::new();
    for (frame, cam, x, y, w, h, score) in detections {
        streams
            .entry(cam)
            .or_default()
            .push(Observation2D::from_box(frame, cam, pt2((x, y)), w, h, score));
    }
    for v in streams.values_mut() {
        v.sort_by_key(|o| o.frame);
    }
    let out = pipeline::run_detections(&cfg, &cameras_of(&cameras), &streams, 0, false).map_err(value_err)?;
    Ok(tracks_to_py(&out.tracks))
}

/// Runs the tracker on calibration and detection files.
#[pyfunction]
#[pyo3(signature = (calibration, detections, config=None))]
fn track_files(calibration: PathBuf, detections: PathBuf, config: Option<PyRef<'_, PyConfig>>) -> PyResult<PyTracks> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let cams = io::load_calibration(&calibration).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let streams = io::load_detections(&detections).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let out = pipeline::run_detections(&cfg, &cams, &streams, 0, false).map_err(value_err)?;
    Ok(tracks_to_py(&out.tracks))
}

/// CLEAR MOT and IDF1 scores as a dict.
#[pyfunction]
#[pyo3(signature = (ground_truth, predictions, threshold=0.5))]
fn evaluate(ground_truth: PyTracks, predictions: PyTracks, threshold: f64) -> BTreeMap<&'static str, f64> {
    let r = metrics::mota(&tracks_from_py(ground_truth), &tracks_from_py(predictions), threshold);
    BTreeMap::from([
        ("mota", r.mota),
        ("idf1", r.idf1),
        ("mt", r.mt),
        ("ml", r.ml),
        ("fp", r.fp as f64),
        ("fn", r.fn_ as f64),
        ("ids", r.ids as f64),
        ("mean_error", r.mean_error),
    ])
}

/// Synthetic scene: returns `(cameras, detections, ground_truth)`.
#[pyfunction]
#[pyo3(signature = (cameras=4, persons=5, frames=600, seed=0, pixel_sigma=0.0, miss_rate=0.0, fp_rate=0.0, noise_seed=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    cameras: usize,
    persons: usize,
    frames: u32,
    seed: u64,
    pixel_sigma: f64,
    miss_rate: f64,
    fp_rate: f64,
    noise_seed: u64,
) -> PyResult<(Vec<PyCamera>, Vec<PyDetection>, PyTracks)> {
    let scene = sim::generate_scene(&sim::SceneConfig {
        n_cameras: cameras,
        n_persons: persons,
        frames,
        seed,
        ..sim::SceneConfig::default()
    })
    .map_err(value_err)?;
    let noise = sim::NoiseConfig {
        pixel_sigma,
        miss_rate,
        fp_rate,
        seed: noise_seed,
        ..sim::NoiseConfig::NONE
    };
    let r = sim::render_detections(&scene, &noise, AssocMode::Box).map_err(value_err)?;
    let dets = r
        .cameras
        .values()
        .flatten()
        .map(|d| {
            let o = &d.observation;
            (o.frame, o.camera_id, o.center.x, o.center.y, o.width, o.height, o.score)
        })
        .collect();
    let cams = scene.cameras.iter().map(|c| PyCamera { inner: c.clone() }).collect();
    Ok((cams, dets, tracks_to_py(&scene.footprints)))
}

#[pyfunction]
fn load_tracks(path: PathBuf) -> PyResult<PyTracks> {
    let t = io::load_tracks(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    Ok(tracks_to_py(&t))
}

#[pyfunction]
fn write_tracks(path: PathBuf, tracks: PyTracks) -> PyResult<()> {
    io::write_tracks(&path, &tracks_from_py(tracks)).map_err(|e| PyIOError::new_err(e.to_string()))
}

#[pymodule]
fn mvtrack(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCamera>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(normalized_pair_distance, m)?)?;
    m.add_function(wrap_pyfunction!(triangulate, m)?)?;
    m.add_function(wrap_pyfunction!(pdnc, m)?)?;
    m.add_function(wrap_pyfunction!(track, m)?)?;
    m.add_function(wrap_pyfunction!(track_files, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(load_tracks, m)?)?;
    m.add_function(wrap_pyfunction!(write_tracks, m)?)?;
    Ok(())
}
