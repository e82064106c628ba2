//! On-disk formats for clouds, depth images and calibrations.
//!
//! * `PCF1`: magic, u32 point count, u8 intensity flag, then per point
//!   `x y z [intensity]` as little-endian f32.
//! * `DEP1`: magic, u32 width, u32 height, then row-major f32 depths.
//! * Calibration: `key = values` text with row-major matrices under
//!   `intrinsics` (9 values), `camera_extrinsics` and `lidar_extrinsics`
//!   (16 values each; the latter defaults to identity).

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Matrix4};

use super::{CameraCalibration, DepthImage, Point3, PointCloud};
use crate::binio::{len_u32, read_file, read_text, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::kv::KeyValues;

const CLOUD_MAGIC: &[u8; 4] = b"PCF1";
const DEPTH_MAGIC: &[u8; 4] = b"DEP1";

pub fn encode_point_cloud(cloud: &PointCloud) -> Vec<u8> {
    let mut buf = Vec::with_capacity(9 + cloud.len() * 16);
    buf.extend_from_slice(CLOUD_MAGIC);
    buf.put_u32(len_u32(cloud.len()));
    buf.put_u8(cloud.intensity().is_some() as u8);
    for (i, p) in cloud.points().iter().enumerate() {
        buf.put_f32(p.x as f32);
        buf.put_f32(p.y as f32);
        buf.put_f32(p.z as f32);
        if let Some(int) = cloud.intensity() {
            buf.put_f32(int[i]);
        }
    }
    buf
}

pub fn decode_point_cloud(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = ByteReader::new(bytes, "point cloud");
    r.expect_magic(CLOUD_MAGIC)?;
    let count = r.u32()? as usize;
    let has_intensity = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(Error::format("point cloud", format!("bad intensity flag {other}"))),
    };
    let stride = if has_intensity { 16 } else { 12 };
    if r.remaining() != count * stride {
        return Err(Error::format(
            "point cloud",
            format!("expected {} payload bytes, found {}", count * stride, r.remaining()),
        ));
    }
    let mut points = Vec::with_capacity(count);
    let mut intensity = Vec::new();
    for _ in 0..count {
        let (x, y, z) = (r.f32()?, r.f32()?, r.f32()?);
        points.push(Point3::new(x as f64, y as f64, z as f64));
        if has_intensity {
            intensity.push(r.f32()?);
        }
    }
    r.finish()?;
    let cloud = if has_intensity {
        PointCloud::with_intensity(points, intensity)
    } else {
        PointCloud::new(points)
    };
    cloud.map_err(|e| Error::format("point cloud", e.to_string()))
}

pub fn write_point_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    write_file(path, &encode_point_cloud(cloud))
}

pub fn read_point_cloud(path: &Path) -> Result<PointCloud> {
    decode_point_cloud(&read_file(path)?)
}

pub fn encode_depth_image(image: &DepthImage) -> Vec<u8> {
    let mut buf = Vec::with_capacity(12 + image.values().len() * 4);
    buf.extend_from_slice(DEPTH_MAGIC);
    buf.put_u32(len_u32(image.width()));
    buf.put_u32(len_u32(image.height()));
    for &d in image.values() {
        buf.put_f32(d as f32);
    }
    buf
}

pub fn decode_depth_image(bytes: &[u8]) -> Result<DepthImage> {
    let mut r = ByteReader::new(bytes, "depth image");
    r.expect_magic(DEPTH_MAGIC)?;
    let width = r.u32()? as usize;
    let height = r.u32()? as usize;
    let n = width
        .checked_mul(height)
        .filter(|n| n * 4 == r.remaining())
        .ok_or_else(|| Error::format("depth image", "payload size does not match dimensions"))?;
    let depth = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    DepthImage::new(width, height, depth)
}

pub fn write_depth_image(path: &Path, image: &DepthImage) -> Result<()> {
    write_file(path, &encode_depth_image(image))
}

pub fn read_depth_image(path: &Path) -> Result<DepthImage> {
    decode_depth_image(&read_file(path)?)
}

fn join_row_major<I: IntoIterator<Item = f64>>(values: I) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn format_calibration(calib: &CameraCalibration) -> String {
    let k = calib.intrinsics();
    let c = calib.camera_extrinsics();
    let l = calib.lidar_extrinsics();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# row-major; extrinsics map the sensor/camera frame into the common frame"
    );
    let _ = writeln!(
        out,
        "intrinsics = {}",
        join_row_major((0..9).map(|i| k[(i / 3, i % 3)]))
    );
    let _ = writeln!(
        out,
        "camera_extrinsics = {}",
        join_row_major((0..16).map(|i| c[(i / 4, i % 4)]))
    );
    let _ = writeln!(
        out,
        "lidar_extrinsics = {}",
        join_row_major((0..16).map(|i| l[(i / 4, i % 4)]))
    );
    out
}

pub fn parse_calibration(text: &str) -> Result<CameraCalibration> {
    let kv = KeyValues::parse(text, "calibration")?;
    for key in kv.keys() {
        if !matches!(key, "intrinsics" | "camera_extrinsics" | "lidar_extrinsics") {
            return Err(Error::format("calibration", format!("unknown key {key:?}")));
        }
    }
    let fixed = |key: &str, n: usize| -> Result<Option<Vec<f64>>> {
        match kv.floats(key)? {
            Some(v) if v.len() != n => Err(Error::format(
                "calibration",
                format!("{key} needs {n} values, found {}", v.len()),
            )),
            other => Ok(other),
        }
    };
    let k = fixed("intrinsics", 9)?.ok_or_else(|| Error::format("calibration", "missing intrinsics"))?;
    let cam =
        fixed("camera_extrinsics", 16)?.ok_or_else(|| Error::format("calibration", "missing camera_extrinsics"))?;
    let lidar = fixed("lidar_extrinsics", 16)?;
    CameraCalibration::new(
        Matrix3::from_row_slice(&k),
        Matrix4::from_row_slice(&cam),
        lidar.map_or_else(Matrix4::identity, |v| Matrix4::from_row_slice(&v)),
    )
}

pub fn write_calibration(path: &Path, calib: &CameraCalibration) -> Result<()> {
    write_file(path, format_calibration(calib).as_bytes())
}

pub fn read_calibration(path: &Path) -> Result<CameraCalibration> {
    parse_calibration(&read_text(path)?).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}
