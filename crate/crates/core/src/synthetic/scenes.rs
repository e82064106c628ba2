use std::path::Path;

use nalgebra::{Isometry3, Matrix3, Rotation3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{class_names, write_text, SceneObject, CATALOG, SIZE_JITTER};
use crate::embedding::{EmbeddingTable, PromptTemplate, SyntheticEmbeddings};
use crate::error::{Error, Result};
use crate::evaluation::{format_labels, LabeledInstance};
use crate::geometry::io::{write_calibration, write_depth_image, write_point_cloud};
use crate::geometry::{Box2D, CameraCalibration, DepthImage, Point3, PointCloud, Projection};
use crate::proxy::{format_detections, instance_id, Detection, VocabularyList};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// LiDAR sweep with a forward camera.
    Outdoor,
    /// Rendered depth map from the camera itself.
    Indoor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub kind: SceneKind,
    pub classes: usize,
    pub train_objects_per_class: usize,
    pub train_scenes: usize,
    pub test_objects_per_class: usize,
    pub test_scenes: usize,
    pub seed: u64,
    pub embed_dim: usize,
    /// Weight of the per-crop direction added to a class anchor to form an
    /// image embedding.
    pub image_spread: f64,
    /// Low-score boxes per scene that the default score filter drops.
    pub distractors_per_scene: usize,
    pub template: PromptTemplate,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            kind: SceneKind::Outdoor,
            classes: 3,
            train_objects_per_class: 20,
            train_scenes: 5,
            test_objects_per_class: 10,
            test_scenes: 3,
            seed: 0,
            embed_dim: 16,
            image_spread: 0.5,
            distractors_per_scene: 2,
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SceneData {
    Cloud(PointCloud),
    Depth(DepthImage),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub calibration: CameraCalibration,
    pub data: SceneData,
    /// Object detections first, in object order, then distractors.
    pub detections: Vec<Detection>,
    /// Objects posed in the sensor frame.
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub name: String,
    pub scenes: Vec<Scene>,
    pub labels: Vec<LabeledInstance>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub vocab: VocabularyList,
    pub embeddings: EmbeddingTable,
    pub splits: Vec<Split>,
}

const OUTDOOR_SIZE: (usize, usize) = (1280, 720);
const INDOOR_SIZE: (usize, usize) = (640, 480);
const INDOOR_SCALE: f64 = 0.35;
const PLACEMENT_ATTEMPTS: usize = 5000;
const SCENE_ATTEMPTS: usize = 10;

fn intrinsics(f: f64, (w, h): (usize, usize)) -> Matrix3<f64> {
    Matrix3::new(
        f,
        0.0,
        0.5 * (w as f64 - 1.0),
        0.0,
        f,
        0.5 * (h as f64 - 1.0),
        0.0,
        0.0,
        1.0,
    )
}

fn outdoor_rig() -> Result<(CameraCalibration, Isometry3<f64>)> {
    let lidar = Isometry3::translation(0.0, 0.0, 1.8);
    // Camera axes (right, down, forward) in a world with x forward, y left, z up.
    let r = Matrix3::from_columns(&[
        Vector3::new(0.0, -1.0, 0.0),
        Vector3::new(0.0, 0.0, -1.0),
        Vector3::new(1.0, 0.0, 0.0),
    ]);
    let camera = Isometry3::from_parts(
        Translation3::new(0.3, 0.0, 1.6),
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r)),
    );
    let calib = CameraCalibration::new(
        intrinsics(500.0, OUTDOOR_SIZE),
        camera.to_homogeneous(),
        lidar.to_homogeneous(),
    )?;
    Ok((calib, lidar))
}

fn surface_points(object: &SceneObject) -> usize {
    ((20.0 * object.shape.surface_area()) as usize).clamp(300, 1500)
}

fn image_box(points: &[Point3], calib: &CameraCalibration, (w, h): (usize, usize)) -> Option<[f64; 4]> {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for p in points {
        match calib.project(p) {
            Projection::Visible { u, v, .. } => {
                b = [b[0].min(u), b[1].min(v), b[2].max(u), b[3].max(v)];
            }
            Projection::BehindCamera => return None,
        }
    }
    let margin = 2.0;
    let b = [b[0] - margin, b[1] - margin, b[2] + margin, b[3] + margin];
    let inside = b[0] >= 0.0 && b[1] >= 0.0 && b[2] <= w as f64 - 1.0 && b[3] <= h as f64 - 1.0;
    inside.then_some(b)
}

fn overlaps(a: &[f64; 4], b: &[f64; 4], gap: f64) -> bool {
    a[0] <= b[2] + gap && b[0] <= a[2] + gap && a[1] <= b[3] + gap && b[1] <= a[3] + gap
}

struct Placed {
    object: SceneObject,
    bbox: [f64; 4],
    points: Vec<Point3>,
}

/// Rejection-samples a pose whose image box is inside the frame and clear
/// of every box placed so far.
fn place(
    rng: &mut ChaCha8Rng,
    class_index: usize,
    placed: &[Placed],
    calib: &CameraCalibration,
    kind: SceneKind,
    lidar: &Isometry3<f64>,
) -> Result<Placed> {
    let size = match kind {
        SceneKind::Outdoor => OUTDOOR_SIZE,
        SceneKind::Indoor => INDOOR_SIZE,
    };
    for _ in 0..PLACEMENT_ATTEMPTS {
        let base = CATALOG[class_index].shape.jittered(rng, SIZE_JITTER.0, SIZE_JITTER.1);
        let yaw = rng.random_range(0.0..std::f64::consts::TAU);
        let (shape, pose) = match kind {
            SceneKind::Outdoor => {
                let x = rng.random_range(8.0..60.0);
                let y = rng.random_range(-1.2..1.2) * x;
                let world = Isometry3::new(Vector3::new(x, y, 0.0), Vector3::z() * yaw);
                (base, lidar.inverse() * world)
            }
            SceneKind::Indoor => {
                let z = rng.random_range(2.5..10.0);
                let x = rng.random_range(-0.75..0.75) * z;
                // Local z (up) maps to camera -y; the floor is 1 m below the camera.
                let upright =
                    UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[
                        Vector3::new(1.0, 0.0, 0.0),
                        Vector3::new(0.0, 0.0, 1.0),
                        Vector3::new(0.0, -1.0, 0.0),
                    ])));
                let pose = Isometry3::from_parts(Translation3::new(x, 1.0, z), upright)
                    * Isometry3::rotation(Vector3::z() * yaw);
                (base.scaled(INDOOR_SCALE), pose)
            }
        };
        let object = SceneObject {
            class_index,
            shape,
            pose,
        };
        let points = object.sample_surface(rng, surface_points(&object));
        let Some(bbox) = image_box(&points, calib, size) else {
            continue;
        };
        if placed.iter().any(|p| overlaps(&p.bbox, &bbox, 3.0)) {
            continue;
        }
        return Ok(Placed { object, bbox, points });
    }
    Err(Error::InvalidParameter(format!(
        "could not place a {} after {PLACEMENT_ATTEMPTS} attempts; use more scenes",
        CATALOG[class_index].name
    )))
}

fn ground(rng: &mut ChaCha8Rng, placed: &[Placed], lidar: &Isometry3<f64>) -> Vec<Point3> {
    let world_centers: Vec<(Point3, f64)> = placed
        .iter()
        .map(|p| {
            let c = *lidar * p.object.pose.translation.vector;
            (Point3::new(c.x, c.y, 0.0), p.object.shape.footprint_radius() + 0.7)
        })
        .collect();
    let mut out = Vec::new();
    for xi in 1..=65 {
        for yi in -75..=75 {
            let x = xi as f64 + rng.random_range(-0.15..0.15);
            let y = yi as f64 + rng.random_range(-0.15..0.15);
            let z = rng.random_range(-0.02..0.02);
            let p = Point3::new(x, y, 0.0);
            if world_centers.iter().any(|(c, r)| p.distance(c) < *r) {
                continue;
            }
            let s = lidar.inverse() * nalgebra::Point3::new(x, y, z);
            out.push(Point3::new(s.x, s.y, s.z));
        }
    }
    out
}

fn render_depth(placed: &[Placed], calib: &CameraCalibration) -> Result<DepthImage> {
    let (w, h) = INDOOR_SIZE;
    let mut depth = vec![0.0; w * h];
    for p in placed {
        let [u0, v0, u1, v1] = p.bbox;
        for v in (v0.ceil() as usize)..=(v1.floor() as usize) {
            for u in (u0.ceil() as usize)..=(u1.floor() as usize) {
                let ray = calib.pixel_ray(u as f64, v as f64);
                if let Some(t) = p.object.intersect(&Point3::ORIGIN, &ray) {
                    let cell = &mut depth[v * w + u];
                    if *cell == 0.0 || t < *cell {
                        *cell = t;
                    }
                }
            }
        }
    }
    DepthImage::new(w, h, depth)
}

fn make_scene(rng: &mut ChaCha8Rng, id: String, classes: &[usize], spec: &FixtureSpec) -> Result<Scene> {
    let (calib, lidar) = match spec.kind {
        SceneKind::Outdoor => outdoor_rig()?,
        SceneKind::Indoor => (
            CameraCalibration::new(
                intrinsics(400.0, INDOOR_SIZE),
                nalgebra::Matrix4::identity(),
                nalgebra::Matrix4::identity(),
            )?,
            Isometry3::identity(),
        ),
    };
    let mut placed: Vec<Placed> = Vec::new();
    for &c in classes {
        let p = place(rng, c, &placed, &calib, spec.kind, &lidar)?;
        placed.push(p);
    }
    let data = match spec.kind {
        SceneKind::Outdoor => {
            let mut points: Vec<Point3> = placed.iter().flat_map(|p| p.points.iter().copied()).collect();
            points.extend(ground(rng, &placed, &lidar));
            SceneData::Cloud(PointCloud::new(points)?)
        }
        SceneKind::Indoor => SceneData::Depth(render_depth(&placed, &calib)?),
    };
    let mut detections = Vec::new();
    for (i, p) in placed.iter().enumerate() {
        let [u0, v0, u1, v1] = p.bbox;
        detections.push(Detection {
            scene_id: id.clone(),
            index: i,
            bbox: Box2D::new(u0, v0, u1, v1, rng.random_range(0.5..1.0), p.object.class_index)?,
        });
    }
    let (w, h) = match spec.kind {
        SceneKind::Outdoor => OUTDOOR_SIZE,
        SceneKind::Indoor => INDOOR_SIZE,
    };
    for k in 0..spec.distractors_per_scene {
        let bw = rng.random_range(20.0..80.0);
        let bh = rng.random_range(20.0..80.0);
        let u = rng.random_range(0.0..w as f64 - bw);
        let v = rng.random_range(0.0..h as f64 - bh);
        detections.push(Detection {
            scene_id: id.clone(),
            index: placed.len() + k,
            bbox: Box2D::new(
                u,
                v,
                u + bw,
                v + bh,
                rng.random_range(0.05..0.25),
                rng.random_range(0..spec.classes),
            )?,
        });
    }
    Ok(Scene {
        id,
        calibration: calib,
        data,
        detections,
        objects: placed.into_iter().map(|p| p.object).collect(),
    })
}

fn make_split(
    rng: &mut ChaCha8Rng,
    name: &str,
    objects_per_class: usize,
    scenes: usize,
    spec: &FixtureSpec,
) -> Result<Split> {
    if scenes == 0 {
        return Err(Error::InvalidParameter(format!(
            "split {name} needs at least one scene"
        )));
    }
    // Dealt round-robin so every scene gets a balanced class mix.
    let classes: Vec<usize> = (0..spec.classes)
        .flat_map(|c| std::iter::repeat_n(c, objects_per_class))
        .collect();
    let mut out = Vec::with_capacity(scenes);
    let mut labels = Vec::new();
    for s in 0..scenes {
        let mut mine: Vec<usize> = classes.iter().skip(s).step_by(scenes).copied().collect();
        // Large catalog shapes come first, which keeps rejection sampling short.
        mine.sort_unstable();
        let id = format!("{name}-{s:03}");
        let mut attempt = 0;
        let scene = loop {
            match make_scene(rng, id.clone(), &mine, spec) {
                Err(e) if attempt + 1 < SCENE_ATTEMPTS => {
                    log::debug!("{id}: {e}; retrying");
                    attempt += 1;
                }
                other => break other?,
            }
        };
        for (i, obj) in scene.objects.iter().enumerate() {
            labels.push(LabeledInstance {
                instance_id: instance_id(&scene.id, i),
                true_class: obj.class_index,
                center: Some(obj.center()),
            });
        }
        out.push(scene);
    }
    Ok(Split {
        name: name.to_string(),
        scenes: out,
        labels,
    })
}

/// Builds a train and a test split from one seed.
pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    let names = class_names(spec.classes)?;
    let vocab = VocabularyList::new(names.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let splits = vec![
        make_split(&mut rng, "train", spec.train_objects_per_class, spec.train_scenes, spec)?,
        make_split(&mut rng, "test", spec.test_objects_per_class, spec.test_scenes, spec)?,
    ];
    let provider = SyntheticEmbeddings::new(
        spec.embed_dim,
        spec.seed ^ 0x00e3_b0c4_4298_fc1c,
        &names,
        spec.template.clone(),
        spec.image_spread,
    )?;
    let mut embeddings = EmbeddingTable::new(spec.embed_dim);
    for (k, name) in names.iter().enumerate() {
        embeddings.insert_text(&spec.template.fill(name), provider.anchor(k))?;
    }
    for split in &splits {
        for scene in &split.scenes {
            for d in &scene.detections {
                let id = instance_id(&d.scene_id, d.index);
                embeddings.insert_image(&id, provider.image_for_class(d.bbox.label_index, &id))?;
            }
        }
    }
    Ok(Fixture {
        vocab,
        embeddings,
        splits,
    })
}

/// Layout: `vocab.txt`, `embeddings.emb`, and per split `<split>/scenes/<id>.calib`
/// plus `<id>.pcf` or `<id>.dep`, `<split>/detections.tsv`, `<split>/labels.tsv`.
pub fn write_fixture(dir: &Path, fixture: &Fixture) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(dir)?;
    fixture.vocab.write(&dir.join("vocab.txt"))?;
    fixture.embeddings.write(&dir.join("embeddings.emb"))?;
    for split in &fixture.splits {
        let scenes_dir = dir.join(&split.name).join("scenes");
        mkdir(&scenes_dir)?;
        let mut detections = Vec::new();
        for scene in &split.scenes {
            write_calibration(&scenes_dir.join(format!("{}.calib", scene.id)), &scene.calibration)?;
            match &scene.data {
                SceneData::Cloud(c) => write_point_cloud(&scenes_dir.join(format!("{}.pcf", scene.id)), c)?,
                SceneData::Depth(d) => write_depth_image(&scenes_dir.join(format!("{}.dep", scene.id)), d)?,
            }
            detections.extend(scene.detections.iter().cloned());
        }
        write_text(
            &dir.join(&split.name).join("detections.tsv"),
            &format_detections(&detections),
        )?;
        write_text(&dir.join(&split.name).join("labels.tsv"), &format_labels(&split.labels))?;
    }
    Ok(())
}
