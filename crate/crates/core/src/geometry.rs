//! Camera models, epipolar algebra, the box-normalized cross-view distance
//! and linear triangulation.
//!
//! Conventions: a fundamental matrix stored for the ordered pair `(i, j)`
//! maps a pixel of camera `i` to its epipolar line in camera `j`, so
//! `x_jᵀ F_ij x_i = 0` and `F_ji = F_ijᵀ`.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Point2, Point3, Vector3, Vector4};
use thiserror::Error;

pub type Frame = u32;
pub type CameraId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("projection matrix of camera {0} is not a finite rank-3 camera")]
    InvalidProjection(CameraId),
    #[error("cameras {0} and {1} share a center; epipole undefined")]
    DegenerateRig(CameraId, CameraId),
    #[error("epipolar line is the zero vector")]
    NullLine,
    #[error("box has zero scale (w + h = 0)")]
    DegenerateBox,
    #[error("observations share no valid joint")]
    NoCommonJoints,
    #[error("rays are parallel or cameras coincide")]
    DegenerateBaseline,
    #[error("triangulated point lies at infinity")]
    InfinitePoint,
    #[error("point is on or behind the principal plane")]
    BehindCamera,
    #[error("observations come from the same camera {0}")]
    SameCamera(CameraId),
    #[error("unknown camera {0}")]
    UnknownCamera(CameraId),
    #[error("observation needs keypoints")]
    MissingKeypoints,
}

/// A finite pinhole camera given by its 3×4 projection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub camera_id: CameraId,
    pub projection: Matrix3x4<f64>,
    pub image_size: Option<(u32, u32)>,
}

impl CameraModel {
    pub fn new(
        camera_id: CameraId,
        projection: Matrix3x4<f64>,
        image_size: Option<(u32, u32)>,
    ) -> Result<Self, GeometryError> {
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidProjection(camera_id));
        }
        let m = projection.fixed_view::<3, 3>(0, 0).into_owned();
        let scale = m.norm().max(f64::MIN_POSITIVE);
        if m.determinant().abs() <= 1e-12 * scale.powi(3) {
            return Err(GeometryError::InvalidProjection(camera_id));
        }
        Ok(Self {
            camera_id,
            projection,
            image_size,
        })
    }

    /// Camera center in world coordinates (right null vector of `P`).
    pub fn center(&self) -> Point3<f64> {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        let p4 = self.projection.column(3).into_owned();
        // Invertibility is checked in `new`.
        let inv = m.try_inverse().unwrap_or_else(Matrix3::zeros);
        Point3::from(-(inv * p4))
    }

    /// Signed depth of a world point; positive in front of the camera.
    pub fn depth(&self, x: &Point3<f64>) -> f64 {
        let m = self.projection.fixed_view::<3, 3>(0, 0).into_owned();
        let w = (self.projection * x.to_homogeneous())[2];
        let m3 = self.projection.fixed_view::<1, 3>(2, 0).norm();
        w * m.determinant().signum() / m3
    }

    /// Camera at `eye` looking at `target` with world +Z as up and image
    /// y pointing down.
    pub fn look_at(
        camera_id: CameraId,
        intrinsics: Matrix3<f64>,
        eye: Point3<f64>,
        target: Point3<f64>,
        image_size: Option<(u32, u32)>,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&Vector3::z());
        if right.norm() < 1e-9 {
            right = Vector3::x();
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * eye.coords);
        let mut rt = Matrix3x4::zeros();
        rt.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        rt.set_column(3, &t);
        Self::new(camera_id, intrinsics * rt, image_size)
    }

    pub fn project(&self, x: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
        project(self, x)
    }

    pub fn in_image(&self, p: &Point2<f64>) -> bool {
        match self.image_size {
            Some((w, h)) => p.x >= 0.0 && p.y >= 0.0 && p.x < w as f64 && p.y < h as f64,
            None => true,
        }
    }
}

/// Pinhole projection, rejecting points with non-positive depth.
pub fn project(camera: &CameraModel, x: &Point3<f64>) -> Result<Point2<f64>, GeometryError> {
    let h = camera.projection * x.to_homogeneous();
    let sign = camera
        .projection
        .fixed_view::<3, 3>(0, 0)
        .determinant()
        .signum();
    if h[2] * sign <= 0.0 {
        return Err(GeometryError::BehindCamera);
    }
    Ok(Point2::new(h[0] / h[2], h[1] / h[2]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalPair {
    pub from_camera: CameraId,
    pub to_camera: CameraId,
    pub f: Matrix3<f64>,
}

impl FundamentalPair {
    pub fn reversed(&self) -> Self {
        Self {
            from_camera: self.to_camera,
            to_camera: self.from_camera,
            f: self.f.transpose(),
        }
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `F = [e']ₓ P_j P_i⁺` with `e' = P_j C_i`, scaled to unit Frobenius norm.
pub fn fundamental_from_projections(
    from: &CameraModel,
    to: &CameraModel,
) -> Result<FundamentalPair, GeometryError> {
    let ci = from.center();
    let cj = to.center();
    let baseline = (ci - cj).norm();
    let extent = ci.coords.norm().max(cj.coords.norm()).max(1.0);
    if baseline <= 1e-12 * extent {
        return Err(GeometryError::DegenerateRig(from.camera_id, to.camera_id));
    }
    let pi = &from.projection;
    let pj = &to.projection;
    let ppt = pi * pi.transpose();
    let ppt_inv = ppt
        .try_inverse()
        .ok_or(GeometryError::InvalidProjection(from.camera_id))?;
    let pinv = pi.transpose() * ppt_inv;
    let epipole = pj * ci.to_homogeneous();
    let f = skew(&epipole) * pj * pinv;
    let norm = f.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(GeometryError::DegenerateRig(from.camera_id, to.camera_id));
    }
    Ok(FundamentalPair {
        from_camera: from.camera_id,
        to_camera: to.camera_id,
        f: f / norm,
    })
}

/// Line `a·x + b·y + c = 0`, coefficients unnormalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn epipolar_line(f: &Matrix3<f64>, x: &Point2<f64>) -> Result<Line, GeometryError> {
    let l = f * x.to_homogeneous();
    if l.x == 0.0 && l.y == 0.0 && l.z == 0.0 {
        return Err(GeometryError::NullLine);
    }
    Ok(Line {
        a: l.x,
        b: l.y,
        c: l.z,
    })
}

pub fn point_line_distance(x: &Point2<f64>, l: &Line) -> Result<f64, GeometryError> {
    let n = l.a.hypot(l.b);
    if n == 0.0 {
        return Err(GeometryError::NullLine);
    }
    Ok((l.a * x.x + l.b * x.y + l.c).abs() / n)
}

/// Unnormalized symmetric epipolar distance between two pixels.
pub fn symmetric_epipolar_distance(
    xa: &Point2<f64>,
    xb: &Point2<f64>,
    f_ab: &Matrix3<f64>,
) -> Result<f64, GeometryError> {
    let line_in_b = epipolar_line(f_ab, xa)?;
    let line_in_a = epipolar_line(&f_ab.transpose(), xb)?;
    Ok(point_line_distance(xa, &line_in_a)? + point_line_distance(xb, &line_in_b)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Point2<f64>,
    pub valid: bool,
}

/// One person detection in one camera at one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation2D {
    pub frame: Frame,
    pub camera_id: CameraId,
    pub center: Point2<f64>,
    pub width: f64,
    pub height: f64,
    pub keypoints: Option<Vec<Keypoint>>,
    pub score: f64,
}

impl Observation2D {
    pub fn from_box(
        frame: Frame,
        camera_id: CameraId,
        center: Point2<f64>,
        width: f64,
        height: f64,
        score: f64,
    ) -> Self {
        Self {
            frame,
            camera_id,
            center,
            width,
            height,
            keypoints: None,
            score,
        }
    }

    /// Builds an observation whose box is the tight enclosing box of the
    /// valid keypoints. Returns `None` when no keypoint is valid.
    pub fn from_keypoints(
        frame: Frame,
        camera_id: CameraId,
        keypoints: Vec<Keypoint>,
        score: f64,
    ) -> Option<Self> {
        let (lo, hi) = enclosing_box(&keypoints)?;
        Some(Self {
            frame,
            camera_id,
            center: nalgebra::center(&lo, &hi),
            width: (hi.x - lo.x).max(1.0),
            height: (hi.y - lo.y).max(1.0),
            keypoints: Some(keypoints),
            score,
        })
    }

    /// `(x1, y1, x2, y2)` corners.
    pub fn corners(&self) -> [f64; 4] {
        [
            self.center.x - self.width / 2.0,
            self.center.y - self.height / 2.0,
            self.center.x + self.width / 2.0,
            self.center.y + self.height / 2.0,
        ]
    }

    /// Denominator of the normalized distance, `|w + h|`.
    pub fn scale(&self) -> f64 {
        (self.width + self.height).abs()
    }
}

fn enclosing_box(keypoints: &[Keypoint]) -> Option<(Point2<f64>, Point2<f64>)> {
    let mut valid = keypoints.iter().filter(|k| k.valid).map(|k| k.position);
    let first = valid.next()?;
    Some(valid.fold((first, first), |(lo, hi), p| {
        (
            Point2::new(lo.x.min(p.x), lo.y.min(p.y)),
            Point2::new(hi.x.max(p.x), hi.y.max(p.y)),
        )
    }))
}

fn oriented(
    a: &Observation2D,
    b: &Observation2D,
    f_ab: &FundamentalPair,
) -> Result<Matrix3<f64>, GeometryError> {
    if a.camera_id == b.camera_id {
        return Err(GeometryError::SameCamera(a.camera_id));
    }
    if f_ab.from_camera == a.camera_id && f_ab.to_camera == b.camera_id {
        Ok(f_ab.f)
    } else if f_ab.from_camera == b.camera_id && f_ab.to_camera == a.camera_id {
        Ok(f_ab.f.transpose())
    } else {
        Err(GeometryError::UnknownCamera(a.camera_id))
    }
}

/// Epipolar distance of two points, each side divided by its box scale.
///
/// The two terms are always evaluated with the lower camera id first so the
/// result is bitwise symmetric in its arguments.
fn normalized_points(
    xa: &Point2<f64>,
    scale_a: f64,
    xb: &Point2<f64>,
    scale_b: f64,
    f_ab: &Matrix3<f64>,
    a_first: bool,
) -> Result<f64, GeometryError> {
    if scale_a == 0.0 || scale_b == 0.0 {
        return Err(GeometryError::DegenerateBox);
    }
    let (x1, s1, x2, s2, f12) = if a_first {
        (xa, scale_a, xb, scale_b, *f_ab)
    } else {
        (xb, scale_b, xa, scale_a, f_ab.transpose())
    };
    let line_in_2 = epipolar_line(&f12, x1)?;
    let line_in_1 = epipolar_line(&f12.transpose(), x2)?;
    Ok(point_line_distance(x1, &line_in_1)? / s1 + point_line_distance(x2, &line_in_2)? / s2)
}

/// Box-center distance normalized by `|w + h|` on each side.
pub fn normalized_pair_distance(
    a: &Observation2D,
    b: &Observation2D,
    f_ab: &FundamentalPair,
) -> Result<f64, GeometryError> {
    let f = oriented(a, b, f_ab)?;
    normalized_points(
        &a.center,
        a.scale(),
        &b.center,
        b.scale(),
        &f,
        a.camera_id < b.camera_id,
    )
}

/// Mean of the normalized distance over joints valid in both poses; the
/// denominators use each pose's enclosing box.
pub fn pose_pair_distance(
    a: &Observation2D,
    b: &Observation2D,
    f_ab: &FundamentalPair,
) -> Result<f64, GeometryError> {
    let f = oriented(a, b, f_ab)?;
    let (ka, kb) = match (&a.keypoints, &b.keypoints) {
        (Some(ka), Some(kb)) => (ka, kb),
        _ => return Err(GeometryError::MissingKeypoints),
    };
    let a_first = a.camera_id < b.camera_id;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (ja, jb) in ka.iter().zip(kb) {
        if ja.valid && jb.valid {
            sum += normalized_points(
                &ja.position,
                a.scale(),
                &jb.position,
                b.scale(),
                &f,
                a_first,
            )?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(GeometryError::NoCommonJoints);
    }
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangulation {
    pub point: Point3<f64>,
    /// Mean reprojection error in pixels over the contributing views.
    pub residual: f64,
}

/// Two-view linear triangulation.
pub fn triangulate_pair(
    xa: &Point2<f64>,
    xb: &Point2<f64>,
    pa: &CameraModel,
    pb: &CameraModel,
) -> Result<Triangulation, GeometryError> {
    if pa.camera_id == pb.camera_id {
        return Err(GeometryError::SameCamera(pa.camera_id));
    }
    triangulate_views(&[(*xa, pa), (*xb, pb)])
}

/// N-view linear triangulation: each view contributes the rows
/// `x·P₃ − P₁` and `y·P₃ − P₂`, every row scaled to unit norm before the
/// homogeneous system is solved by SVD.
pub fn triangulate_views(
    views: &[(Point2<f64>, &CameraModel)],
) -> Result<Triangulation, GeometryError> {
    if views.len() < 2 {
        return Err(GeometryError::DegenerateBaseline);
    }
    // Normal matrix AᵀA of the row-equilibrated system; its eigenvectors are
    // the right singular vectors of A and its eigenvalues the squared
    // singular values.
    let mut rows: Vec<Vector4<f64>> = Vec::with_capacity(2 * views.len());
    for (x, cam) in views {
        let p = &cam.projection;
        let p1 = p.row(0).transpose();
        let p2 = p.row(1).transpose();
        let p3 = p.row(2).transpose();
        for r in [p3 * x.x - p1, p3 * x.y - p2] {
            let n = r.norm();
            if n == 0.0 || !n.is_finite() {
                return Err(GeometryError::DegenerateBaseline);
            }
            rows.push(r / n);
        }
    }
    let solution = if rows.len() == 4 {
        let a = Matrix4::from_rows(&[
            rows[0].transpose(),
            rows[1].transpose(),
            rows[2].transpose(),
            rows[3].transpose(),
        ]);
        smallest_right_singular(&a)?
    } else {
        let mut ata = Matrix4::zeros();
        for r in &rows {
            ata += r * r.transpose();
        }
        smallest_eigen(&ata)?
    };
    if solution.w.abs() < 1e-12 {
        return Err(GeometryError::InfinitePoint);
    }
    let point = Point3::from_homogeneous(solution).ok_or(GeometryError::InfinitePoint)?;
    let mut residual = 0.0;
    for (x, cam) in views {
        let h = cam.projection * point.to_homogeneous();
        residual += (Point2::new(h.x / h.z, h.y / h.z) - x).norm();
    }
    Ok(Triangulation {
        point,
        residual: residual / views.len() as f64,
    })
}

fn smallest_right_singular(a: &Matrix4<f64>) -> Result<Vector4<f64>, GeometryError> {
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(GeometryError::DegenerateBaseline)?;
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let (s3, s4) = (s[order[2]], s[order[3]]);
    if (s3 - s4).abs() <= 1e-10 * s[order[0]].max(1.0) {
        return Err(GeometryError::DegenerateBaseline);
    }
    Ok(v_t.row(order[3]).transpose())
}

fn smallest_eigen(ata: &Matrix4<f64>) -> Result<Vector4<f64>, GeometryError> {
    let eig = ata.symmetric_eigen();
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let sv = |i: usize| eig.eigenvalues[order[i]].max(0.0).sqrt();
    if (sv(2) - sv(3)).abs() <= 1e-10 * sv(0).max(1.0) {
        return Err(GeometryError::DegenerateBaseline);
    }
    Ok(eig.eigenvectors.column(order[3]).into_owned())
}

/// Cameras of a calibrated rig plus the fundamental matrix of every ordered
/// camera pair, computed once at construction.
#[derive(Debug, Clone)]
pub struct Rig {
    cameras: Vec<CameraModel>,
    index: BTreeMap<CameraId, usize>,
    fundamentals: BTreeMap<(CameraId, CameraId), FundamentalPair>,
}

impl Rig {
    pub fn new(cameras: Vec<CameraModel>) -> Result<Self, GeometryError> {
        let mut index = BTreeMap::new();
        for (i, cam) in cameras.iter().enumerate() {
            if index.insert(cam.camera_id, i).is_some() {
                return Err(GeometryError::DegenerateRig(cam.camera_id, cam.camera_id));
            }
        }
        let mut fundamentals = BTreeMap::new();
        for (i, a) in cameras.iter().enumerate() {
            for b in &cameras[i + 1..] {
                let f = fundamental_from_projections(a, b)?;
                fundamentals.insert((b.camera_id, a.camera_id), f.reversed());
                fundamentals.insert((a.camera_id, b.camera_id), f);
            }
        }
        Ok(Self {
            cameras,
            index,
            fundamentals,
        })
    }

    pub fn cameras(&self) -> &[CameraModel] {
        &self.cameras
    }

    pub fn camera(&self, id: CameraId) -> Option<&CameraModel> {
        self.index.get(&id).map(|&i| &self.cameras[i])
    }

    pub fn fundamental(&self, from: CameraId, to: CameraId) -> Option<&FundamentalPair> {
        self.fundamentals.get(&(from, to))
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }
}
