use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::{Box2D, DepthImage, Point3, PointCloud};
use crate::error::{Error, Result};

const RIGID_TOLERANCE: f64 = 1e-6;

/// Pinhole intrinsics plus the two rigid transforms that place the camera and
/// the point sensor in a common frame.
///
/// `camera_extrinsics` is the camera pose (camera frame to common frame) and
/// `lidar_extrinsics` the sensor pose (sensor frame to common frame), so a
/// sensor point reaches the camera frame through `camera_extrinsics⁻¹ · lidar_extrinsics`.
/// Indoor scenes use an identity sensor pose.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    intrinsics: Matrix3<f64>,
    camera_extrinsics: Matrix4<f64>,
    lidar_extrinsics: Matrix4<f64>,
    sensor_to_camera: Matrix4<f64>,
    camera_to_sensor: Matrix4<f64>,
}

fn check_rigid(name: &str, m: &Matrix4<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCalibration(format!("{name} has non-finite entries")));
    }
    let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
    if bottom != [0.0, 0.0, 0.0, 1.0] {
        return Err(Error::InvalidCalibration(format!(
            "{name} bottom row must be [0 0 0 1], got {bottom:?}"
        )));
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let gram = r.transpose() * r;
    let off = (gram - Matrix3::identity()).abs().max();
    if off > RIGID_TOLERANCE {
        return Err(Error::InvalidCalibration(format!(
            "{name} rotation block is not orthonormal (deviation {off:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > RIGID_TOLERANCE {
        return Err(Error::InvalidCalibration(format!(
            "{name} rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

/// Inverse of a rigid transform: `[Rᵀ | -Rᵀ t]`.
fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
    let rt = r.transpose();
    let ti = -(rt * t);
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&rt);
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&ti);
    out
}

fn transform(m: &Matrix4<f64>, p: &Point3) -> Point3 {
    let h = m * Vector4::new(p.x, p.y, p.z, 1.0);
    Point3::new(h.x, h.y, h.z)
}

impl CameraCalibration {
    pub fn new(
        intrinsics: Matrix3<f64>,
        camera_extrinsics: Matrix4<f64>,
        lidar_extrinsics: Matrix4<f64>,
    ) -> Result<Self> {
        if intrinsics.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCalibration("intrinsics have non-finite entries".into()));
        }
        let lower = [intrinsics[(1, 0)], intrinsics[(2, 0)], intrinsics[(2, 1)]];
        if lower != [0.0, 0.0, 0.0] || intrinsics[(2, 2)] != 1.0 {
            return Err(Error::InvalidCalibration(
                "intrinsics must be upper triangular with a unit bottom-right entry".into(),
            ));
        }
        if intrinsics[(0, 0)] == 0.0 || intrinsics[(1, 1)] == 0.0 {
            return Err(Error::InvalidCalibration(
                "intrinsics are singular (zero focal length)".into(),
            ));
        }
        check_rigid("camera_extrinsics", &camera_extrinsics)?;
        check_rigid("lidar_extrinsics", &lidar_extrinsics)?;
        let sensor_to_camera = rigid_inverse(&camera_extrinsics) * lidar_extrinsics;
        let camera_to_sensor = rigid_inverse(&lidar_extrinsics) * camera_extrinsics;
        Ok(Self {
            intrinsics,
            camera_extrinsics,
            lidar_extrinsics,
            sensor_to_camera,
            camera_to_sensor,
        })
    }

    /// Pinhole camera with focal lengths, principal point and identity poses.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(
            Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0),
            Matrix4::identity(),
            Matrix4::identity(),
        )
    }

    pub fn intrinsics(&self) -> &Matrix3<f64> {
        &self.intrinsics
    }

    pub fn camera_extrinsics(&self) -> &Matrix4<f64> {
        &self.camera_extrinsics
    }

    pub fn lidar_extrinsics(&self) -> &Matrix4<f64> {
        &self.lidar_extrinsics
    }

    /// Composite sensor-to-camera transform.
    pub fn sensor_to_camera(&self) -> &Matrix4<f64> {
        &self.sensor_to_camera
    }

    pub fn to_camera(&self, p: &Point3) -> Point3 {
        transform(&self.sensor_to_camera, p)
    }

    pub fn from_camera(&self, p: &Point3) -> Point3 {
        transform(&self.camera_to_sensor, p)
    }

    /// Camera center expressed in the sensor frame.
    pub fn camera_center(&self) -> Point3 {
        self.from_camera(&Point3::ORIGIN)
    }

    /// Projects a point already in the camera frame. `None` when `z <= 0`.
    pub fn project_camera_point(&self, p: &Point3) -> Option<(f64, f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let q = self.intrinsics * p.to_vector();
        Some((q.x / q.z, q.y / q.z, p.z))
    }

    pub fn project(&self, p: &Point3) -> Projection {
        match self.project_camera_point(&self.to_camera(p)) {
            Some((u, v, depth)) => Projection::Visible { u, v, depth },
            None => Projection::BehindCamera,
        }
    }

    /// Viewing ray through pixel `(u, v)` in the camera frame, scaled so `z = 1`.
    pub fn pixel_ray(&self, u: f64, v: f64) -> Point3 {
        let k = &self.intrinsics;
        let yn = (v - k[(1, 2)]) / k[(1, 1)];
        let xn = (u - k[(0, 2)] - k[(0, 1)] * yn) / k[(0, 0)];
        Point3::new(xn, yn, 1.0)
    }

    /// Inverse of [`CameraCalibration::project`] for a pixel at camera depth `depth`.
    pub fn backproject_pixel(&self, u: f64, v: f64, depth: f64) -> Point3 {
        let cam = self.pixel_ray(u, v) * depth;
        self.from_camera(&Point3::new(cam.x, cam.y, depth))
    }
}

/// Result of projecting one point into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible { u: f64, v: f64, depth: f64 },
    BehindCamera,
}

impl Projection {
    pub fn visible(&self) -> Option<(f64, f64, f64)> {
        match *self {
            Projection::Visible { u, v, depth } => Some((u, v, depth)),
            Projection::BehindCamera => None,
        }
    }
}

/// Projects every point of `cloud`; the output is index-aligned with the input.
pub fn project_points(cloud: &PointCloud, calib: &CameraCalibration) -> Vec<Projection> {
    cloud.points().iter().map(|p| calib.project(p)).collect()
}

/// Foreground selection inside a detection box: pixels whose depth is within
/// `half_width` meters of the region's median valid depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForegroundBand {
    pub half_width: f64,
}

impl Default for ForegroundBand {
    fn default() -> Self {
        Self { half_width: 0.5 }
    }
}

impl ForegroundBand {
    pub fn unbounded() -> Self {
        Self {
            half_width: f64::INFINITY,
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Integer pixel span covered by the closed interval `[lo, hi]`, clipped to `0..len`.
fn pixel_span(lo: f64, hi: f64, len: usize) -> std::ops::Range<usize> {
    let start = lo.ceil().max(0.0);
    let end = (hi.floor() + 1.0).min(len as f64);
    if end <= start {
        return 0..0;
    }
    start as usize..end as usize
}

/// Back-projects the foreground pixels of `region` into the sensor frame.
///
/// Pixels with invalid depth are skipped. The region is clipped to the image;
/// an empty cloud means no pixel survived.
pub fn backproject_depth(
    depth: &DepthImage,
    calib: &CameraCalibration,
    region: &Box2D,
    band: ForegroundBand,
) -> PointCloud {
    let us = pixel_span(region.u_min, region.u_max, depth.width());
    let vs = pixel_span(region.v_min, region.v_max, depth.height());

    let mut samples = Vec::new();
    for v in vs {
        for u in us.clone() {
            if let Some(d) = depth.at(u, v) {
                samples.push((u, v, d));
            }
        }
    }
    if samples.is_empty() {
        return PointCloud::empty();
    }

    let mut sorted: Vec<f64> = samples.iter().map(|s| s.2).collect();
    sorted.sort_by(f64::total_cmp);
    let center = median(&sorted);

    let points = samples
        .into_iter()
        .filter(|&(_, _, d)| (d - center).abs() <= band.half_width)
        .map(|(u, v, d)| calib.backproject_pixel(u as f64, v as f64, d))
        .collect();
    PointCloud::new(points).expect("finite depths back-project to finite points")
}
