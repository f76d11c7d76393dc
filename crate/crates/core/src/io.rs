//! Plain-text record formats. One record per line, fields separated by single
//! spaces, `#` starts a comment line.
//!
//! Calibration: `camera_id p00 p01 .. p23 [width height]`.
//! Detections: `frame camera_id x y w h score [u0 v0 .. uK vK m0 .. mK]`
//! where `(x, y)` is the box center and `m` is a 0/1 keypoint validity mask.
//! Tracks: `id frame X Y Z [X0 Y0 Z0 .. XK YK ZK]`; with joints, the leading
//! triple is the first valid joint and missing joints are `nan nan nan`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix3x4, Point2, Point3};
use thiserror::Error;

use crate::cmmt::Position3D;
use crate::geometry::{CameraId, CameraModel, GeometryError, Keypoint, Observation2D};
use crate::metrics::TrajectorySet;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: expected {expected} keypoints, found {found}")]
    SchemaMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {source}")]
    Geometry { line: usize, source: GeometryError },
}

impl IoError {
    pub fn line(&self) -> Option<usize> {
        match self {
            Self::Parse { line, .. } | Self::SchemaMismatch { line, .. } | Self::Geometry { line, .. } => Some(*line),
            Self::Io { .. } => None,
        }
    }
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Formats like C's `%.9g`.
pub fn fmt_g9(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific notation");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.trim();
        (!l.is_empty() && !l.starts_with('#')).then(|| (i + 1, l.split_whitespace().collect()))
    })
}

fn num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T, IoError> {
    field.parse().map_err(|_| IoError::Parse {
        line,
        message: format!("invalid {what} `{field}`"),
    })
}

pub fn parse_calibration(text: &str) -> Result<Vec<CameraModel>, IoError> {
    let mut out = Vec::new();
    for (line, f) in records(text) {
        if f.len() != 13 && f.len() != 15 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 13 or 15 fields, found {}", f.len()),
            });
        }
        let id: CameraId = num(line, f[0], "camera id")?;
        let mut p = [0.0; 12];
        for (k, v) in p.iter_mut().enumerate() {
            *v = num(line, f[k + 1], "projection entry")?;
        }
        let size = if f.len() == 15 {
            Some((num(line, f[13], "width")?, num(line, f[14], "height")?))
        } else {
            None
        };
        let cam = CameraModel::new(id, Matrix3x4::from_row_slice(&p), size)
            .map_err(|source| IoError::Geometry { line, source })?;
        out.push(cam);
    }
    Ok(out)
}

pub fn format_calibration(cameras: &[CameraModel]) -> String {
    let mut s = String::new();
    for c in cameras {
        let _ = write!(s, "{}", c.camera_id);
        for r in 0..3 {
            for k in 0..4 {
                let _ = write!(s, " {}", fmt_g9(c.projection[(r, k)]));
            }
        }
        if let Some((w, h)) = c.image_size {
            let _ = write!(s, " {w} {h}");
        }
        s.push('\n');
    }
    s
}

pub fn load_calibration(path: &Path) -> Result<Vec<CameraModel>, IoError> {
    parse_calibration(&read(path)?)
}

pub fn write_calibration(path: &Path, cameras: &[CameraModel]) -> Result<(), IoError> {
    write(path, &format_calibration(cameras))
}

/// Detections per camera, sorted by frame.
pub type DetectionStreams = BTreeMap<CameraId, Vec<Observation2D>>;

pub fn parse_detections(text: &str) -> Result<DetectionStreams, IoError> {
    let mut out: DetectionStreams = BTreeMap::new();
    let mut schema: Option<usize> = None;
    for (line, f) in records(text) {
        if f.len() < 7 || (f.len() - 7) % 3 != 0 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 7 + 3K fields, found {}", f.len()),
            });
        }
        let k = (f.len() - 7) / 3;
        match schema {
            None => schema = Some(k),
            Some(expected) if expected != k => {
                return Err(IoError::SchemaMismatch {
                    line,
                    expected,
                    found: k,
                })
            }
            _ => {}
        }
        let frame = num(line, f[0], "frame")?;
        let cam = num(line, f[1], "camera id")?;
        let v: Vec<f64> = f[2..7]
            .iter()
            .map(|x| num::<f64>(line, x, "box field"))
            .collect::<Result<_, _>>()?;
        let mut obs = Observation2D::from_box(frame, cam, Point2::new(v[0], v[1]), v[2], v[3], v[4]);
        if k > 0 {
            let coords = &f[7..7 + 2 * k];
            let mask = &f[7 + 2 * k..];
            let mut kps = Vec::with_capacity(k);
            for j in 0..k {
                let valid = match mask[j] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(IoError::Parse {
                            line,
                            message: format!("invalid keypoint mask `{other}`"),
                        })
                    }
                };
                kps.push(Keypoint {
                    position: Point2::new(num(line, coords[2 * j], "keypoint")?, num(line, coords[2 * j + 1], "keypoint")?),
                    valid,
                });
            }
            obs.keypoints = Some(kps);
        }
        out.entry(cam).or_default().push(obs);
    }
    for v in out.values_mut() {
        v.sort_by_key(|o| o.frame);
    }
    Ok(out)
}

pub fn format_detections(streams: &DetectionStreams) -> String {
    let mut all: Vec<&Observation2D> = streams.values().flatten().collect();
    all.sort_by_key(|o| (o.frame, o.camera_id));
    let mut s = String::new();
    for o in all {
        let _ = write!(
            s,
            "{} {} {} {} {} {} {}",
            o.frame,
            o.camera_id,
            fmt_g9(o.center.x),
            fmt_g9(o.center.y),
            fmt_g9(o.width),
            fmt_g9(o.height),
            fmt_g9(o.score)
        );
        if let Some(kps) = &o.keypoints {
            for k in kps {
                let _ = write!(s, " {} {}", fmt_g9(k.position.x), fmt_g9(k.position.y));
            }
            for k in kps {
                s.push_str(if k.valid { " 1" } else { " 0" });
            }
        }
        s.push('\n');
    }
    s
}

pub fn load_detections(path: &Path) -> Result<DetectionStreams, IoError> {
    parse_detections(&read(path)?)
}

pub fn write_detections(path: &Path, streams: &DetectionStreams) -> Result<(), IoError> {
    write(path, &format_detections(streams))
}

fn triple(s: &mut String, p: Option<Point3<f64>>) {
    match p {
        Some(p) => {
            let _ = write!(s, " {} {} {}", fmt_g9(p.x), fmt_g9(p.y), fmt_g9(p.z));
        }
        None => s.push_str(" nan nan nan"),
    }
}

pub fn format_tracks(tracks: &TrajectorySet) -> String {
    let mut rows: Vec<(u32, u64, &Position3D)> = tracks
        .tracks
        .iter()
        .flat_map(|(id, t)| t.iter().map(move |(f, p)| (*f, *id, p)))
        .collect();
    rows.sort_by_key(|r| (r.0, r.1));
    let mut s = String::new();
    for (f, id, p) in rows {
        let _ = write!(s, "{id} {f}");
        triple(&mut s, p.primary());
        if p.0.len() > 1 {
            for j in &p.0 {
                triple(&mut s, *j);
            }
        }
        s.push('\n');
    }
    s
}

pub fn parse_tracks(text: &str) -> Result<TrajectorySet, IoError> {
    let mut out = TrajectorySet::new();
    let mut schema: Option<usize> = None;
    for (line, f) in records(text) {
        if f.len() < 5 || (f.len() - 2) % 3 != 0 {
            return Err(IoError::Parse {
                line,
                message: format!("expected 2 + 3K fields, found {}", f.len()),
            });
        }
        let triples = (f.len() - 2) / 3;
        match schema {
            None => schema = Some(triples),
            Some(expected) if expected != triples => {
                return Err(IoError::SchemaMismatch {
                    line,
                    expected: expected.saturating_sub(1),
                    found: triples - 1,
                })
            }
            _ => {}
        }
        let id = num(line, f[0], "track id")?;
        let frame = num(line, f[1], "frame")?;
        let mut pts = Vec::with_capacity(triples);
        for t in 0..triples {
            let x: f64 = num(line, f[2 + 3 * t], "coordinate")?;
            let y: f64 = num(line, f[3 + 3 * t], "coordinate")?;
            let z: f64 = num(line, f[4 + 3 * t], "coordinate")?;
            pts.push((x.is_finite() && y.is_finite() && z.is_finite()).then(|| Point3::new(x, y, z)));
        }
        let pos = if triples == 1 {
            Position3D(pts)
        } else {
            Position3D(pts.split_off(1))
        };
        out.insert(id, frame, pos);
    }
    Ok(out)
}

pub fn load_tracks(path: &Path) -> Result<TrajectorySet, IoError> {
    parse_tracks(&read(path)?)
}

pub fn write_tracks(path: &Path, tracks: &TrajectorySet) -> Result<(), IoError> {
    write(path, &format_tracks(tracks))
}
