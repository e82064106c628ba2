use nalgebra::{Matrix3, Vector3};

use super::{Box2D, CameraCalibration, Point3, PointCloud};
use crate::error::{Error, Result};

/// `normal · p + offset >= 0` defines the inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSpace {
    pub normal: Point3,
    pub offset: f64,
}

impl HalfSpace {
    pub fn eval(&self, p: &Point3) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// The volume swept by a detection box between two camera depths, expressed
/// in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frustum {
    /// Left, right, top and bottom planes through the camera center.
    pub sides: [HalfSpace; 4],
    /// Evaluates to the camera-frame depth of a point.
    pub depth: HalfSpace,
    pub near: f64,
    pub far: f64,
    apex: Point3,
    axis: Point3,
}

impl Frustum {
    /// Sides are closed, depth limits open.
    pub fn contains(&self, p: &Point3) -> bool {
        let z = self.depth.eval(p);
        z > self.near && z < self.far && self.sides.iter().all(|s| s.eval(p) >= 0.0)
    }

    /// Camera center in the sensor frame.
    pub fn apex(&self) -> Point3 {
        self.apex
    }

    /// Unit direction through the box center.
    pub fn axis(&self) -> Point3 {
        self.axis
    }

    /// Perpendicular distance from `p` to the line through the apex along the axis.
    pub fn axis_distance(&self, p: &Point3) -> f64 {
        let rel = *p - self.apex;
        let along = rel.dot(&self.axis);
        (rel.dot(&rel) - along * along).max(0.0).sqrt()
    }
}

pub fn build_frustum(box2d: &Box2D, calib: &CameraCalibration, near: f64, far: f64) -> Result<Frustum> {
    if !(near < far) {
        return Err(Error::InvalidRange { near, far });
    }
    if near < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "near plane {near} must be non-negative"
        )));
    }
    let k: &Matrix3<f64> = calib.intrinsics();
    let row0 = Vector3::new(k[(0, 0)], k[(0, 1)], k[(0, 2)]);
    let row1 = Vector3::new(k[(1, 0)], k[(1, 1)], k[(1, 2)]);
    let ez = Vector3::new(0.0, 0.0, 1.0);

    // Camera-frame normals: u >= u_min  <=>  (k0 - u_min e_z) · p >= 0 for z > 0, etc.
    let camera_normals = [
        row0 - ez * box2d.u_min,
        ez * box2d.u_max - row0,
        row1 - ez * box2d.v_min,
        ez * box2d.v_max - row1,
    ];

    let m = calib.sensor_to_camera();
    let rot: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
    let to_sensor = |n: Vector3<f64>| HalfSpace {
        normal: Point3::from_vector(&(rot.transpose() * n)),
        offset: n.dot(&t),
    };

    let sides = camera_normals.map(to_sensor);
    let depth = to_sensor(ez);

    let (uc, vc) = box2d.center();
    let apex = calib.camera_center();
    let ray = calib.from_camera(&calib.pixel_ray(uc, vc)) - apex;
    let axis = ray * (1.0 / ray.norm());

    Ok(Frustum {
        sides,
        depth,
        near,
        far,
        apex,
        axis,
    })
}

/// Points inside the frustum, in input order.
pub fn points_in_frustum(cloud: &PointCloud, frustum: &Frustum) -> PointCloud {
    let keep: Vec<usize> = cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| frustum.contains(p))
        .map(|(i, _)| i)
        .collect();
    cloud.select(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Projection;
    use nalgebra::{Matrix4, Rotation3, Translation3, Unit};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle(p: &Point3, b: &Box2D, calib: &CameraCalibration, near: f64, far: f64) -> bool {
        match calib.project(p) {
            Projection::Visible { u, v, depth } => b.contains_pixel(u, v) && depth > near && depth < far,
            Projection::BehindCamera => false,
        }
    }

    #[test]
    fn rejects_inverted_range() {
        let calib = CameraCalibration::pinhole(1.0, 1.0, 0.0, 0.0).unwrap();
        let b = Box2D::new(-1.0, -1.0, 1.0, 1.0, 1.0, 0).unwrap();
        assert!(matches!(
            build_frustum(&b, &calib, 5.0, 5.0),
            Err(Error::InvalidRange { .. })
        ));
    }

    #[test]
    fn full_image_box_contains_everything_in_range() {
        let calib = CameraCalibration::pinhole(100.0, 100.0, 50.0, 40.0).unwrap();
        let b = Box2D::new(0.0, 0.0, 100.0, 80.0, 1.0, 0).unwrap();
        let f = build_frustum(&b, &calib, 0.1, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let z = rng.random_range(0.2..99.0);
            let u = rng.random_range(0.0..100.0);
            let v = rng.random_range(0.0..80.0);
            let p = calib.backproject_pixel(u, v, z);
            assert!(f.contains(&p));
        }
        assert!(!f.contains(&Point3::new(0.0, 0.0, 100.5)));
        assert!(!f.contains(&Point3::new(0.0, 0.0, 0.05)));
    }

    #[test]
    fn box_corner_is_inside() {
        let calib = CameraCalibration::pinhole(2.0, 2.0, 1.0, 1.0).unwrap();
        let b = Box2D::new(3.0, 1.0, 5.0, 3.0, 1.0, 0).unwrap();
        let f = build_frustum(&b, &calib, 1.0, 7.0).unwrap();
        // Pixel (3, 1) at depth 4 -> (4, 0, 4); pixel (5, 3) at depth 4 -> (8, 4, 4).
        assert!(f.contains(&Point3::new(4.0, 0.0, 4.0)));
        assert!(f.contains(&Point3::new(8.0, 4.0, 4.0)));
        assert!(!f.contains(&Point3::new(3.99, 0.0, 4.0)));
    }

    #[test]
    fn membership_matches_projection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = Matrix3::new(400.0, 0.0, 320.0, 0.0, 400.0, 240.0, 0.0, 0.0, 1.0);
        let cam = Translation3::new(0.2, -0.1, 1.0).to_homogeneous()
            * Rotation3::from_axis_angle(&Unit::new_normalize(Vector3::new(0.2, 1.0, 0.1)), 0.3).to_homogeneous();
        let calib = CameraCalibration::new(k, cam, Matrix4::identity()).unwrap();
        let b = Box2D::new(200.0, 150.0, 420.0, 330.0, 0.9, 0).unwrap();
        let f = build_frustum(&b, &calib, 0.5, 30.0).unwrap();
        let points: Vec<Point3> = (0..1000)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-5.0..35.0),
                )
            })
            .collect();
        let mut inside = 0;
        for p in &points {
            let expected = oracle(p, &b, &calib, 0.5, 30.0);
            assert_eq!(f.contains(p), expected, "mismatch at {p:?}");
            inside += expected as usize;
        }
        assert!(inside > 10, "fixture should exercise the inside branch");

        let cloud = PointCloud::new(points.clone()).unwrap();
        let subset = points_in_frustum(&cloud, &f);
        let expected: Vec<Point3> = points
            .iter()
            .copied()
            .filter(|p| oracle(p, &b, &calib, 0.5, 30.0))
            .collect();
        assert_eq!(subset.points(), expected.as_slice());
    }

    #[test]
    fn axis_passes_through_box_center() {
        let calib = CameraCalibration::pinhole(2.0, 2.0, 1.0, 1.0).unwrap();
        let b = Box2D::new(0.0, 0.0, 2.0, 2.0, 1.0, 0).unwrap();
        let f = build_frustum(&b, &calib, 0.5, 10.0).unwrap();
        assert_eq!(f.axis(), Point3::new(0.0, 0.0, 1.0));
        assert!((f.axis_distance(&Point3::new(3.0, 4.0, 9.0)) - 5.0).abs() < 1e-12);
    }
}
