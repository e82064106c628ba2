use std::f64::consts::{PI, TAU};

use nalgebra::{Isometry3, Point3 as NPoint, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::Point3;

/// Solid primitives in a local frame with `z` up and the base on `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Cuboid { length: f64, width: f64, height: f64 },
    Cone { radius: f64, height: f64 },
    Sphere { radius: f64 },
    Cylinder { radius: f64, height: f64 },
}

impl Shape {
    pub fn height(&self) -> f64 {
        match *self {
            Shape::Cuboid { height, .. } | Shape::Cone { height, .. } | Shape::Cylinder { height, .. } => height,
            Shape::Sphere { radius } => 2.0 * radius,
        }
    }

    /// Radius of the footprint's bounding circle.
    pub fn footprint_radius(&self) -> f64 {
        match *self {
            Shape::Cuboid { length, width, .. } => 0.5 * length.hypot(width),
            Shape::Cone { radius, .. } | Shape::Sphere { radius } | Shape::Cylinder { radius, .. } => radius,
        }
    }

    pub fn surface_area(&self) -> f64 {
        match *self {
            Shape::Cuboid { length, width, height } => 2.0 * (length * width + length * height + width * height),
            Shape::Cone { radius, height } => PI * radius * (radius + radius.hypot(height)),
            Shape::Sphere { radius } => 4.0 * PI * radius * radius,
            Shape::Cylinder { radius, height } => TAU * radius * (radius + height),
        }
    }

    /// Every dimension multiplied by an independent factor from `range`.
    pub fn jittered<R: Rng>(&self, rng: &mut R, lo: f64, hi: f64) -> Shape {
        let mut j = || rng.random_range(lo..hi);
        match *self {
            Shape::Cuboid { length, width, height } => Shape::Cuboid {
                length: length * j(),
                width: width * j(),
                height: height * j(),
            },
            Shape::Cone { radius, height } => Shape::Cone {
                radius: radius * j(),
                height: height * j(),
            },
            Shape::Sphere { radius } => Shape::Sphere { radius: radius * j() },
            Shape::Cylinder { radius, height } => Shape::Cylinder {
                radius: radius * j(),
                height: height * j(),
            },
        }
    }

    pub fn scaled(&self, s: f64) -> Shape {
        match *self {
            Shape::Cuboid { length, width, height } => Shape::Cuboid {
                length: length * s,
                width: width * s,
                height: height * s,
            },
            Shape::Cone { radius, height } => Shape::Cone {
                radius: radius * s,
                height: height * s,
            },
            Shape::Sphere { radius } => Shape::Sphere { radius: radius * s },
            Shape::Cylinder { radius, height } => Shape::Cylinder {
                radius: radius * s,
                height: height * s,
            },
        }
    }

    /// A point drawn uniformly by area from the surface.
    pub fn sample_surface<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        match *self {
            Shape::Cuboid { length, width, height } => {
                let (hx, hy) = (0.5 * length, 0.5 * width);
                let faces = [
                    width * height,
                    width * height,
                    length * height,
                    length * height,
                    length * width,
                    length * width,
                ];
                let total: f64 = faces.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut face = 0;
                while face < 5 && pick >= faces[face] {
                    pick -= faces[face];
                    face += 1;
                }
                let a = rng.random_range(-1.0..1.0);
                let b = rng.random_range(0.0..1.0);
                match face {
                    0 => Vector3::new(-hx, a * hy, b * height),
                    1 => Vector3::new(hx, a * hy, b * height),
                    2 => Vector3::new(a * hx, -hy, b * height),
                    3 => Vector3::new(a * hx, hy, b * height),
                    4 => Vector3::new(a * hx, (2.0 * b - 1.0) * hy, 0.0),
                    _ => Vector3::new(a * hx, (2.0 * b - 1.0) * hy, height),
                }
            }
            Shape::Cone { radius, height } => {
                let lateral = PI * radius * radius.hypot(height);
                let base = PI * radius * radius;
                let theta = rng.random_range(0.0..TAU);
                if rng.random_range(0.0..lateral + base) < lateral {
                    // Distance from the apex grows with the square root of the area fraction.
                    let f = rng.random_range(0.0f64..1.0).sqrt();
                    let rho = radius * f;
                    Vector3::new(rho * theta.cos(), rho * theta.sin(), height * (1.0 - f))
                } else {
                    let rho = radius * rng.random_range(0.0f64..1.0).sqrt();
                    Vector3::new(rho * theta.cos(), rho * theta.sin(), 0.0)
                }
            }
            Shape::Sphere { radius } => {
                let g: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let v = Vector3::from(g).normalize();
                Vector3::new(0.0, 0.0, radius) + v * radius
            }
            Shape::Cylinder { radius, height } => {
                let side = TAU * radius * height;
                let caps = 2.0 * PI * radius * radius;
                let theta = rng.random_range(0.0..TAU);
                if rng.random_range(0.0..side + caps) < side {
                    Vector3::new(
                        radius * theta.cos(),
                        radius * theta.sin(),
                        rng.random_range(0.0..height),
                    )
                } else {
                    let rho = radius * rng.random_range(0.0f64..1.0).sqrt();
                    let z = if rng.random_bool(0.5) { 0.0 } else { height };
                    Vector3::new(rho * theta.cos(), rho * theta.sin(), z)
                }
            }
        }
    }

    /// Smallest `t > 0` with `o + t d` on the surface.
    pub fn intersect(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let mut best: Option<f64> = None;
        let mut consider = |t: f64| {
            if t > EPS && best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        };
        match *self {
            Shape::Cuboid { length, width, height } => {
                let lo = [-0.5 * length, -0.5 * width, 0.0];
                let hi = [0.5 * length, 0.5 * width, height];
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    if d[k].abs() < 1e-15 {
                        if o[k] < lo[k] || o[k] > hi[k] {
                            return None;
                        }
                    } else {
                        let a = (lo[k] - o[k]) / d[k];
                        let b = (hi[k] - o[k]) / d[k];
                        t0 = t0.max(a.min(b));
                        t1 = t1.min(a.max(b));
                    }
                }
                if t0 <= t1 {
                    consider(t0);
                    consider(t1);
                }
            }
            Shape::Sphere { radius } => {
                let c = o - Vector3::new(0.0, 0.0, radius);
                for t in quadratic_roots(d.dot(d), 2.0 * c.dot(d), c.dot(&c) - radius * radius) {
                    consider(t);
                }
            }
            Shape::Cylinder { radius, height } => {
                let a = d.x * d.x + d.y * d.y;
                let b = 2.0 * (o.x * d.x + o.y * d.y);
                let c = o.x * o.x + o.y * o.y - radius * radius;
                for t in quadratic_roots(a, b, c) {
                    let z = o.z + t * d.z;
                    if (0.0..=height).contains(&z) {
                        consider(t);
                    }
                }
                for plane in [0.0, height] {
                    if let Some(t) = plane_hit(o, d, plane, radius) {
                        consider(t);
                    }
                }
            }
            Shape::Cone { radius, height } => {
                let k2 = (radius / height).powi(2);
                let hz = height - o.z;
                let a = d.x * d.x + d.y * d.y - k2 * d.z * d.z;
                let b = 2.0 * (o.x * d.x + o.y * d.y + k2 * hz * d.z);
                let c = o.x * o.x + o.y * o.y - k2 * hz * hz;
                for t in quadratic_roots(a, b, c) {
                    let z = o.z + t * d.z;
                    if (0.0..=height).contains(&z) {
                        consider(t);
                    }
                }
                if let Some(t) = plane_hit(o, d, 0.0, radius) {
                    consider(t);
                }
            }
        }
        best
    }
}

fn plane_hit(o: &Vector3<f64>, d: &Vector3<f64>, z: f64, radius: f64) -> Option<f64> {
    if d.z.abs() < 1e-15 {
        return None;
    }
    let t = (z - o.z) / d.z;
    let (x, y) = (o.x + t * d.x, o.y + t * d.y);
    (x * x + y * y <= radius * radius).then_some(t)
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-15 {
        return if b.abs() < 1e-15 { Vec::new() } else { vec![-c / b] };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let s = disc.sqrt();
    // Numerically stable pair.
    let q = -0.5 * (b + b.signum() * s);
    let mut roots = if q == 0.0 { vec![0.0] } else { vec![q / a, c / q] };
    roots.sort_by(f64::total_cmp);
    roots
}

/// A placed primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub class_index: usize,
    pub shape: Shape,
    /// Local frame to scene frame.
    pub pose: Isometry3<f64>,
}

impl SceneObject {
    /// Center of the primitive's local bounding box, in the scene frame.
    pub fn center(&self) -> Point3 {
        let c = self.pose * NPoint::new(0.0, 0.0, 0.5 * self.shape.height());
        Point3::new(c.x, c.y, c.z)
    }

    pub fn sample_surface<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Point3> {
        (0..n)
            .map(|_| {
                let p = self.pose * NPoint::from(self.shape.sample_surface(rng));
                Point3::new(p.x, p.y, p.z)
            })
            .collect()
    }

    /// First hit distance along `origin + t * dir` (scene frame).
    pub fn intersect(&self, origin: &Point3, dir: &Point3) -> Option<f64> {
        let inv = self.pose.inverse();
        let o = inv * NPoint::new(origin.x, origin.y, origin.z);
        let d = inv.rotation * Vector3::new(dir.x, dir.y, dir.z);
        self.shape.intersect(&o.coords, &d)
    }
}
