//! Independent reference implementations used as test oracles. They favor
//! direct transcription over speed and share no code with the library.
#![allow(dead_code, clippy::needless_range_loop)]

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use rand::Rng;

/// A random rigid transform with translation in `[-t, t]^3`.
pub fn random_rigid<R: Rng>(rng: &mut R, t: f64) -> Matrix4<f64> {
    let axis = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let angle = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let r = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
    m[(0, 3)] = rng.random_range(-t..t);
    m[(1, 3)] = rng.random_range(-t..t);
    m[(2, 3)] = rng.random_range(-t..t);
    m
}

fn split(m: &Matrix4<f64>) -> (Matrix3<f64>, Vector3<f64>) {
    (
        m.fixed_view::<3, 3>(0, 0).into_owned(),
        Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
    )
}

/// Camera-frame coordinates of a sensor point: `R_cᵀ (R_l p + t_l - t_c)`.
pub fn sensor_to_camera(camera_pose: &Matrix4<f64>, sensor_pose: &Matrix4<f64>, p: [f64; 3]) -> Vector3<f64> {
    let (rc, tc) = split(camera_pose);
    let (rl, tl) = split(sensor_pose);
    let common = rl * Vector3::from(p) + tl;
    rc.transpose() * (common - tc)
}

/// Pixel and depth of a sensor point, or `None` when it is not in front.
pub fn project(
    k: &Matrix3<f64>,
    camera_pose: &Matrix4<f64>,
    sensor_pose: &Matrix4<f64>,
    p: [f64; 3],
) -> Option<(f64, f64, f64)> {
    let c = sensor_to_camera(camera_pose, sensor_pose, p);
    if c.z <= 0.0 {
        return None;
    }
    let h = k * c;
    Some((h.x / h.z, h.y / h.z, c.z))
}

/// Sensor point seen at pixel `(u, v)` with camera depth `d`.
pub fn backproject(
    k: &Matrix3<f64>,
    camera_pose: &Matrix4<f64>,
    sensor_pose: &Matrix4<f64>,
    u: f64,
    v: f64,
    d: f64,
) -> [f64; 3] {
    let ray = k.try_inverse().expect("invertible intrinsics") * Vector3::new(u, v, 1.0);
    let cam = ray * (d / ray.z);
    let (rc, tc) = split(camera_pose);
    let (rl, tl) = split(sensor_pose);
    let s = rl.transpose() * (rc * cam + tc - tl);
    [s.x, s.y, s.z]
}

/// Frustum membership by projection: depth strictly between the limits and
/// the pixel inside the closed box.
#[allow(clippy::too_many_arguments)]
pub fn in_frustum(
    k: &Matrix3<f64>,
    camera_pose: &Matrix4<f64>,
    sensor_pose: &Matrix4<f64>,
    bbox: [f64; 4],
    near: f64,
    far: f64,
    p: [f64; 3],
) -> bool {
    match project(k, camera_pose, sensor_pose, p) {
        Some((u, v, z)) => z > near && z < far && u >= bbox[0] && u <= bbox[2] && v >= bbox[1] && v <= bbox[3],
        None => false,
    }
}

/// Density-connected components by transitive closure. Clusters are
/// numbered by their lowest-index core point; a border point takes the
/// smallest id among clusters with a core point within `eps`.
pub fn dbscan(points: &[[f64; 3]], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let close = |a: &[f64; 3], b: &[f64; 3]| {
        let d: f64 = (0..3).map(|k| (a[k] - b[k]).powi(2)).sum();
        d <= eps * eps
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| close(&points[i], &points[j])).count() >= min_pts)
        .collect();
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            reach[i][j] = core[i] && core[j] && close(&points[i], &points[j]);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut id = vec![-1i32; n];
    let mut next = 0;
    for i in 0..n {
        if core[i] && id[i] < 0 {
            for j in 0..n {
                if j == i || reach[i][j] {
                    id[j] = next;
                }
            }
            next += 1;
        }
    }
    (0..n)
        .map(|i| {
            if core[i] {
                id[i]
            } else {
                (0..n)
                    .filter(|&j| core[j] && close(&points[i], &points[j]))
                    .map(|j| id[j])
                    .min()
                    .unwrap_or(-1)
            }
        })
        .collect()
}

/// Forward-mode dual number `v + d ε`.
#[derive(Debug, Clone, Copy)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Self {
        Self { v, d: 0.0 }
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        Self { v: e, d: self.d * e }
    }

    pub fn ln(self) -> Self {
        Self {
            v: self.v.ln(),
            d: self.d / self.v,
        }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual {
            v: self.v + o.v,
            d: self.d + o.d,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual {
            v: self.v - o.v,
            d: self.d - o.d,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        Dual {
            v: self.v / o.v,
            d: (self.d * o.v - self.v * o.d) / (o.v * o.v),
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

fn dot(a: &[f64], b: &[Dual]) -> Dual {
    a.iter()
        .zip(b)
        .fold(Dual::constant(0.0), |acc, (x, y)| acc + Dual::constant(*x) * *y)
}

/// `(1/N) Σ_i -log( e^{a_i·p_i/τ} / (e^{a_i·p_i/τ} + Σ_{j ∈ neg(i)} e^{a_i·p_j/τ}) )`.
pub fn contrastive_dual(
    anchors: &[Vec<f64>],
    points: &[Vec<Dual>],
    tau: f64,
    negative: &dyn Fn(usize, usize) -> bool,
) -> Dual {
    let n = anchors.len();
    let t = Dual::constant(tau);
    let mut total = Dual::constant(0.0);
    for i in 0..n {
        let pos = (dot(&anchors[i], &points[i]) / t).exp();
        let mut den = pos;
        for j in 0..n {
            if j != i && negative(i, j) {
                den = den + (dot(&anchors[i], &points[j]) / t).exp();
            }
        }
        total = total - (pos / den).ln();
    }
    total / Dual::constant(n as f64)
}

/// Value and full gradient with respect to every point coordinate, one
/// forward-mode pass per coordinate.
pub fn contrastive_with_grad(
    anchors: &[Vec<f64>],
    points: &[Vec<f64>],
    tau: f64,
    negative: &dyn Fn(usize, usize) -> bool,
) -> (f64, Vec<Vec<f64>>) {
    let lift = |seed: Option<(usize, usize)>| -> Vec<Vec<Dual>> {
        points
            .iter()
            .enumerate()
            .map(|(j, p)| {
                p.iter()
                    .enumerate()
                    .map(|(k, &v)| Dual {
                        v,
                        d: if seed == Some((j, k)) { 1.0 } else { 0.0 },
                    })
                    .collect()
            })
            .collect()
    };
    let value = contrastive_dual(anchors, &lift(None), tau, negative).v;
    let grad = points
        .iter()
        .enumerate()
        .map(|(j, p)| {
            (0..p.len())
                .map(|k| contrastive_dual(anchors, &lift(Some((j, k))), tau, negative).d)
                .collect()
        })
        .collect();
    (value, grad)
}

pub fn text_point(text: &[Vec<f64>], captions: &[usize], points: &[Vec<f64>], tau: f64) -> (f64, Vec<Vec<f64>>) {
    contrastive_with_grad(text, points, tau, &|i, j| captions[i] != captions[j])
}

pub fn image_point(image: &[Vec<f64>], points: &[Vec<f64>], tau: f64) -> (f64, Vec<Vec<f64>>) {
    contrastive_with_grad(image, points, tau, &|_, _| true)
}

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
