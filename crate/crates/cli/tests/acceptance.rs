//! Acceptance run: prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::Matrix3;
use pointalign_core::clustering::dbscan;
use pointalign_core::embedding::{EmbeddingVector, PromptTemplate, SyntheticEmbeddings};
use pointalign_core::encoder::{init_params, sample_points, EncoderConfig};
use pointalign_core::evaluation::{localization_pr, parse_labels, recognition_report};
use pointalign_core::geometry::{
    backproject_depth, build_frustum, points_in_frustum, project_points, Box2D, CameraCalibration, DepthImage,
    ForegroundBand, Point3, PointCloud,
};
use pointalign_core::synthetic::{class_names, object_cloud};
use pointalign_core::training::{batch_objective, loss_image_point, loss_text_point, Batch, TrainingConfig};
use pointalign_core::zero_shot::{ensemble, parse_logit_file, parse_predictions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_intrinsics(rng: &mut ChaCha8Rng, w: f64, h: f64) -> Matrix3<f64> {
    let fx = rng.random_range(200.0..1000.0);
    let fy = fx * rng.random_range(0.9..1.1);
    let skew = rng.random_range(-2.0..2.0);
    let cx = w * rng.random_range(0.4..0.6);
    let cy = h * rng.random_range(0.4..0.6);
    Matrix3::new(fx, skew, cx, 0.0, fy, cy, 0.0, 0.0, 1.0)
}

fn arr(p: &Point3) -> [f64; 3] {
    [p.x, p.y, p.z]
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn geometry_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (w, h) = (100usize, 100usize);
    let mut worst: f64 = 0.0;
    let mut total = 0;
    for _ in 0..20 {
        let k = random_intrinsics(&mut rng, w as f64, h as f64);
        let cam = oracles::random_rigid(&mut rng, 5.0);
        let sensor = oracles::random_rigid(&mut rng, 5.0);
        let calib = CameraCalibration::new(k, cam, sensor).map_err(|e| e.to_string())?;
        let depths: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.5..60.0)).collect();
        let image = DepthImage::new(w, h, depths.clone()).map_err(|e| e.to_string())?;
        let full = Box2D::new(0.0, 0.0, (w - 1) as f64, (h - 1) as f64, 1.0, 0).unwrap();
        let cloud = backproject_depth(&image, &calib, &full, ForegroundBand::unbounded());
        ensure(cloud.len() == w * h, || {
            format!("back-projected {} of {} pixels", cloud.len(), w * h)
        })?;
        let proj = project_points(&cloud, &calib);
        for (i, (p, pr)) in cloud.points().iter().zip(&proj).enumerate() {
            let (u, v, d) = pr.visible().ok_or("back-projected point behind the camera")?;
            let (pu, pv) = ((i % w) as f64, (i / w) as f64);
            let expect = oracles::backproject(&k, &cam, &sensor, pu, pv, depths[i]);
            let again = oracles::backproject(&k, &cam, &sensor, u, v, d);
            worst = worst.max(dist(arr(p), expect)).max(dist(arr(p), again));
            total += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-6, || format!("worst round-trip error {worst:e} m"))?;
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{total} points, worst {worst:.1e} m, {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn frustum_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (w, h) = (640.0, 480.0);
    let (mut mismatches, mut inside, mut checked) = (0, 0, 0);
    for _ in 0..50 {
        let k = random_intrinsics(&mut rng, w, h);
        let cam = oracles::random_rigid(&mut rng, 5.0);
        let sensor = oracles::random_rigid(&mut rng, 5.0);
        let calib = CameraCalibration::new(k, cam, sensor).map_err(|e| e.to_string())?;
        let u0 = rng.random_range(-50.0..w);
        let v0 = rng.random_range(-50.0..h);
        let bbox = [
            u0,
            v0,
            u0 + rng.random_range(5.0..300.0),
            v0 + rng.random_range(5.0..300.0),
        ];
        let b = Box2D::new(bbox[0], bbox[1], bbox[2], bbox[3], 1.0, 0).unwrap();
        let near = rng.random_range(0.1..3.0);
        let far = rng.random_range(10.0..60.0);
        let frustum = build_frustum(&b, &calib, near, far).map_err(|e| e.to_string())?;
        // Points spread around the box and across both depth limits, some behind the camera.
        let raw: Vec<[f64; 3]> = (0..1000)
            .map(|_| {
                let u = rng.random_range(bbox[0] - 100.0..bbox[2] + 100.0);
                let v = rng.random_range(bbox[1] - 100.0..bbox[3] + 100.0);
                let d = rng.random_range(-10.0..80.0);
                oracles::backproject(&k, &cam, &sensor, u, v, d)
            })
            .collect();
        let cloud = PointCloud::new(raw.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).unwrap();
        let got = points_in_frustum(&cloud, &frustum);
        let got: Vec<[f64; 3]> = got.points().iter().map(arr).collect();
        let expected: Vec<[f64; 3]> = raw
            .iter()
            .copied()
            .filter(|p| oracles::in_frustum(&k, &cam, &sensor, bbox, near, far, *p))
            .collect();
        checked += raw.len();
        inside += expected.len();
        if got != expected {
            mismatches += expected.len().abs_diff(got.len()).max(1);
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    ensure(inside > 1000, || {
        format!("only {inside} points inside; fixture too easy")
    })?;
    Ok(format!("{checked} points, {inside} inside, 0 mismatches"))
}

fn dbscan_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut clustered = 0;
    for c in 0..200 {
        let n = rng.random_range(1..=50);
        // Half the clouds sit on an integer lattice so distances tie with eps exactly.
        let lattice = c % 2 == 0;
        let pts: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                if lattice {
                    [0, 1, 2].map(|_| rng.random_range(0..4) as f64)
                } else {
                    [0, 1, 2].map(|_| rng.random_range(0.0..3.0))
                }
            })
            .collect();
        let eps = if lattice {
            [1.0, 1.5, 2.0][rng.random_range(0..3)]
        } else {
            rng.random_range(0.3..1.2)
        };
        let min_pts = rng.random_range(1..=6);
        let cloud = PointCloud::new(pts.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect()).unwrap();
        let got = dbscan(&cloud, eps, min_pts).map_err(|e| e.to_string())?;
        let expected = oracles::dbscan(&pts, eps, min_pts);
        ensure(got.labels() == expected.as_slice(), || {
            format!(
                "cloud {c} (n={n}, eps={eps}, min_pts={min_pts}): {:?} vs {expected:?}",
                got.labels()
            )
        })?;
        clustered += usize::from(got.cluster_count() > 1);
    }
    Ok(format!("200 clouds agree, {clustered} with several clusters"))
}

fn ev(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

fn loss_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=8);
        let dim = rng.random_range(2..=16);
        let tau = [0.07, 0.2, 1.0][rng.random_range(0..3)];
        let unit = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> { (0..n).map(|_| oracles::random_unit(rng, dim)).collect() };
        let (text, image, points) = (unit(&mut rng), unit(&mut rng), unit(&mut rng));
        let captions: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let batch = Batch::new(
            Vec::new(),
            text.iter().map(|v| ev(v)).collect(),
            image.iter().map(|v| ev(v)).collect(),
            captions.clone(),
        )
        .map_err(|e| e.to_string())?;
        let p: Vec<EmbeddingVector> = points.iter().map(|v| ev(v)).collect();
        let tp = loss_text_point(&batch, &p, tau).map_err(|e| e.to_string())?;
        let ip = loss_image_point(&batch, &p, tau).map_err(|e| e.to_string())?;
        let (tv, tg) = oracles::text_point(&text, &captions, &points, tau);
        let (iv, ig) = oracles::image_point(&image, &points, tau);
        worst = worst.max((tp.value - tv).abs()).max((ip.value - iv).abs());
        for j in 0..n {
            for k in 0..dim {
                worst = worst
                    .max((tp.grad[j][k] - tg[j][k]).abs())
                    .max((ip.grad[j][k] - ig[j][k]).abs());
            }
        }
    }
    ensure(worst <= 1e-10, || format!("worst deviation {worst:e}"))?;

    // Every other sample shares the caption, so the text term has no negatives.
    let n = 5;
    let batch = Batch::new(
        Vec::new(),
        (0..n).map(|_| ev(&oracles::random_unit(&mut rng, 8))).collect(),
        (0..n).map(|_| ev(&oracles::random_unit(&mut rng, 8))).collect(),
        vec![2; n],
    )
    .map_err(|e| e.to_string())?;
    let p: Vec<EmbeddingVector> = (0..n).map(|_| ev(&oracles::random_unit(&mut rng, 8))).collect();
    let tp = loss_text_point(&batch, &p, 0.07).map_err(|e| e.to_string())?;
    ensure(tp.value == 0.0, || format!("identical captions give loss {}", tp.value))?;
    ensure(tp.grad.iter().flatten().all(|g| *g == 0.0), || {
        "identical captions give a gradient".into()
    })?;
    let ip = loss_image_point(&batch, &p, 0.07).map_err(|e| e.to_string())?;
    ensure(ip.value > 0.0, || "image term lost its negatives".into())?;
    Ok(format!(
        "100 batches, worst {worst:.1e}; identical captions give zero text loss"
    ))
}

fn gradient_check() -> Outcome {
    let start = Instant::now();
    let encoder = EncoderConfig {
        hidden1: 16,
        hidden2: 32,
        hidden3: 16,
        embed_dim: 8,
        num_points: 8,
    };
    let config = TrainingConfig {
        batch_size: 4,
        encoder,
        ..TrainingConfig::default()
    };
    let names = class_names(3).map_err(|e| e.to_string())?;
    let provider = SyntheticEmbeddings::new(8, 5, &names, PromptTemplate::default(), 0.7).map_err(|e| e.to_string())?;
    let captions = vec![0, 1, 2, 0];
    let points = captions
        .iter()
        .enumerate()
        .map(|(i, &c)| sample_points(&object_cloud(c, 64, 50 + i as u64).unwrap(), 8, 7 + i as u64).unwrap())
        .collect();
    let text = captions.iter().map(|&c| provider.anchor(c)).collect();
    let image = captions
        .iter()
        .enumerate()
        .map(|(i, &c)| provider.image_for_class(c, &format!("a/{i}")))
        .collect();
    let batch = Batch::new(points, text, image, captions).map_err(|e| e.to_string())?;
    let params = init_params(23, encoder).map_err(|e| e.to_string())?;
    let objective = |p: &pointalign_core::encoder::EncoderParams| batch_objective(p, &batch, &config, None).unwrap();
    let analytic: Vec<f64> = objective(&params).1.tensors().concat();
    ensure(analytic.iter().any(|g| g.abs() > 1e-3), || {
        "gradient is trivially zero".into()
    })?;
    // Small enough that the stencil rarely straddles a ReLU or max-pool switch.
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let shifted = |delta: f64| {
            let mut p = params.clone();
            let mut k = i;
            for t in p.tensors_mut() {
                if k < t.len() {
                    t[k] += delta;
                    break;
                }
                k -= t.len();
            }
            objective(&p).0
        };
        let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-3, || format!("worst relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} parameters, worst relative error {worst:.1e}, {:.2} s",
        analytic.len(),
        elapsed.as_secs_f64()
    ))
}

fn pointalign(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pointalign"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "`pointalign {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

struct Run {
    dir: tempfile::TempDir,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

/// Fixture through evaluation with the toy settings: 3 classes of 20
/// training objects, τ = 0.07, λ1 = λ2 = 0.5, 500 steps.
fn toy_pipeline(workers: usize) -> Result<Run, String> {
    let run = Run {
        dir: tempfile::tempdir().map_err(|e| e.to_string())?,
    };
    let fx = run.path("fixture");
    pointalign(&[
        "make-fixture",
        "--out",
        s(&fx),
        "--seed",
        "7",
        "--classes",
        "3",
        "--objects-per-class",
        "20",
    ])?;
    let vocab = fx.join("vocab.txt");
    let emb = fx.join("embeddings.emb");
    for split in ["train", "test"] {
        pointalign(&[
            "collect",
            "--scenes",
            s(&fx.join(split).join("scenes")),
            "--detections",
            s(&fx.join(split).join("detections.tsv")),
            "--vocab",
            s(&vocab),
            "--embeddings",
            s(&emb),
            "--out",
            s(&run.path(&format!("{split}.trp"))),
            "--log",
            s(&run.path(&format!("{split}.log"))),
        ])?;
    }
    let workers = workers.to_string();
    pointalign(&[
        "pretrain",
        "--triplets",
        s(&run.path("train.trp")),
        "--vocab",
        s(&vocab),
        "--embeddings",
        s(&emb),
        "--out",
        s(&run.path("encoder.ckpt")),
        "--report",
        s(&run.path("training.txt")),
        "--temperature",
        "0.07",
        "--lambda1",
        "0.5",
        "--lambda2",
        "0.5",
        "--steps",
        "500",
        "--warmup",
        "30",
        "--batch-size",
        "20",
        "--hidden1",
        "32",
        "--hidden2",
        "64",
        "--hidden3",
        "64",
        "--embed-dim",
        "16",
        "--num-points",
        "256",
        "--seed",
        "7",
        "--workers",
        &workers,
    ])?;
    pointalign(&[
        "classify",
        "--checkpoint",
        s(&run.path("encoder.ckpt")),
        "--classes",
        s(&vocab),
        "--embeddings",
        s(&emb),
        "--triplets",
        s(&run.path("test.trp")),
        "--out",
        s(&run.path("predictions.tsv")),
    ])?;
    pointalign(&[
        "evaluate",
        "--predictions",
        s(&run.path("predictions.tsv")),
        "--labels",
        s(&fx.join("test").join("labels.tsv")),
        "--classes",
        s(&vocab),
        "--out",
        s(&run.path("eval.tsv")),
    ])?;
    Ok(run)
}

fn read(p: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn report_cell(report: &str, row: &str, col: usize) -> Option<String> {
    report
        .lines()
        .find(|l| l.split('\t').next() == Some(row))
        .and_then(|l| l.split('\t').nth(col))
        .map(str::to_string)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let run = toy_pipeline(1)?;
    let elapsed = start.elapsed();
    let report = String::from_utf8(read(&run.path("eval.tsv"))?).map_err(|e| e.to_string())?;
    let avg: f64 = report_cell(&report, "Avg.", 2)
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| format!("no Avg. row in\n{report}"))?;
    let instances = report_cell(&report, "Avg.", 1).unwrap_or_default();
    ensure(avg >= 0.95, || format!("Avg. top-1 {avg}\n{report}"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "Avg. top-1 {avg:.4} over {instances} held-out instances, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn prediction(id: &str, top: &[(usize, f64)]) -> String {
    let mut line = format!("{id}\t0\t0\t0");
    for (c, p) in top {
        line.push_str(&format!("\t{c}\t{p}"));
    }
    line
}

fn evaluation_oracle() -> Outcome {
    // Recognition, driven through the file formats.
    let names2: Vec<String> = vec!["a".into(), "b".into()];
    let labels = parse_labels("i0\t0\ni1\t0\ni2\t1\n", 2).map_err(|e| e.to_string())?;
    let all_right = parse_predictions(
        &[
            prediction("i0", &[(0, 0.9), (1, 0.1)]),
            prediction("i1", &[(0, 0.8), (1, 0.2)]),
            prediction("i2", &[(1, 0.7), (0, 0.3)]),
        ]
        .join("\n"),
    )
    .map_err(|e| e.to_string())?;
    let r = recognition_report(&all_right, &labels, &names2).map_err(|e| e.to_string())?;
    ensure(r.average_top1 == Some(1.0), || {
        format!("all correct gives {:?}", r.average_top1)
    })?;
    let half = parse_predictions(
        &[
            prediction("i0", &[(0, 0.9), (1, 0.1)]),
            prediction("i1", &[(1, 0.8), (0, 0.2)]),
            prediction("i2", &[(1, 0.7), (0, 0.3)]),
        ]
        .join("\n"),
    )
    .map_err(|e| e.to_string())?;
    let r = recognition_report(&half, &labels, &names2).map_err(|e| e.to_string())?;
    ensure(r.average_top1 == Some((0.5 + 1.0) / 2.0), || {
        format!("1/2 and 1/1 give {:?}", r.average_top1)
    })?;
    let names3: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
    let labels3 = parse_labels("j0\t0\nj1\t1\nj2\t2\n", 3).map_err(|e| e.to_string())?;
    let wrong = parse_predictions(
        &[
            prediction("j0", &[(2, 0.5), (1, 0.3), (0, 0.2)]),
            prediction("j1", &[(0, 0.5), (2, 0.3), (1, 0.2)]),
            prediction("j2", &[(1, 0.5), (0, 0.3), (2, 0.2)]),
        ]
        .join("\n"),
    )
    .map_err(|e| e.to_string())?;
    let r = recognition_report(&wrong, &labels3, &names3).map_err(|e| e.to_string())?;
    ensure(r.average_top5 == Some(1.0) && r.average_top1 == Some(0.0), || {
        format!("K=3 gives top-5 {:?}, top-1 {:?}", r.average_top5, r.average_top1)
    })?;

    // Localization at λ = 2 m.
    let o = Point3::new(0.0, 0.0, 0.0);
    let l = localization_pr(&[(Point3::new(1.0, 0.0, 0.0), 0)], &[(o, 0)], 2.0).map_err(|e| e.to_string())?;
    ensure(l.precision == Some(1.0) && l.recall == Some(1.0), || {
        format!("1 m pair gives {l:?}")
    })?;
    let l = localization_pr(&[(Point3::new(3.0, 0.0, 0.0), 0)], &[(o, 0)], 2.0).map_err(|e| e.to_string())?;
    ensure(l.precision == Some(0.0) && l.recall == Some(0.0), || {
        format!("3 m pair gives {l:?}")
    })?;
    let g1 = Point3::new(10.0, 0.0, 0.0);
    let l = localization_pr(
        &[
            (Point3::new(0.5, 0.0, 0.0), 0),
            (Point3::new(10.0, 1.0, 0.0), 0),
            (Point3::new(30.0, 0.0, 0.0), 0),
        ],
        &[(o, 0), (g1, 0)],
        2.0,
    )
    .map_err(|e| e.to_string())?;
    ensure(l.precision == Some(2.0 / 3.0) && l.recall == Some(1.0), || {
        format!("2 GT, 3 proxies gives {l:?}")
    })?;

    // The unweighted mean again, through the evaluate command.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).map(|_| p).map_err(|e| e.to_string())
    };
    let preds = write(
        "p.tsv",
        &[
            prediction("i0", &[(0, 0.9), (1, 0.1)]),
            prediction("i1", &[(1, 0.8), (0, 0.2)]),
            prediction("i2", &[(1, 0.7), (0, 0.3)]),
        ]
        .join("\n"),
    )?;
    let labels = write("l.tsv", "i0\t0\ni1\t0\ni2\t1\n")?;
    let classes = write("c.txt", "a\nb\n")?;
    let out = dir.path().join("r.tsv");
    pointalign(&[
        "evaluate",
        "--predictions",
        s(&preds),
        "--labels",
        s(&labels),
        "--classes",
        s(&classes),
        "--out",
        s(&out),
    ])?;
    let report = String::from_utf8(read(&out)?).map_err(|e| e.to_string())?;
    ensure(report_cell(&report, "Avg.", 2).as_deref() == Some("0.750000"), || {
        report.clone()
    })?;
    Ok("recognition 1.0 / 0.75 / top-5 1.0; localization (1,1) (0,0) (2/3,1)".into())
}

fn determinism() -> Outcome {
    let a = toy_pipeline(1)?;
    let b = toy_pipeline(2)?;
    let files = [
        "train.trp",
        "test.trp",
        "encoder.ckpt",
        "training.txt",
        "predictions.tsv",
        "eval.tsv",
    ];
    for f in files {
        ensure(read(&a.path(f))? == read(&b.path(f))?, || {
            format!("{f} differs between runs")
        })?;
    }
    let fixture_files = ["vocab.txt", "embeddings.emb", "train/detections.tsv", "test/labels.tsv"];
    for f in fixture_files {
        let (x, y) = (a.path("fixture").join(f), b.path("fixture").join(f));
        ensure(read(&x)? == read(&y)?, || format!("fixture {f} differs between runs"))?;
    }
    Ok(format!(
        "{} outputs byte-identical across two runs (1 and 2 workers)",
        files.len() + fixture_files.len()
    ))
}

fn ensemble_arithmetic() -> Outcome {
    // Table-style example: (0.6, 0.4) + (0.1, 0.9).
    let a = parse_logit_file("x\t0.6\t0.4\n", 2).map_err(|e| e.to_string())?;
    let b = parse_logit_file("x\t0.1\t0.9\n", 2).map_err(|e| e.to_string())?;
    let e = ensemble(&[&a[0].1, &b[0].1]).map_err(|e| e.to_string())?;
    let sum = [0.6 + 0.1, 0.4 + 0.9];
    let total = sum[0] + sum[1];
    ensure(e.probabilities() == [sum[0] / total, sum[1] / total], || {
        format!("{:?}", e.probabilities())
    })?;
    ensure(e.argmax() == 1, || "argmax of (0.7, 1.3) is not class 1".into())?;
    let single = ensemble(&[&a[0].1]).map_err(|e| e.to_string())?;
    ensure(single.argmax() == 0, || "single input changed its argmax".into())?;
    let agree = parse_logit_file("x\t0.7\t0.3\n", 2).map_err(|e| e.to_string())?;
    let both = ensemble(&[&a[0].1, &agree[0].1]).map_err(|e| e.to_string())?;
    ensure(both.argmax() == 0, || "agreeing inputs changed argmax".into())?;

    // Through classify: point probabilities plus one external file.
    let run = toy_pipeline(1)?;
    let fx = run.path("fixture");
    let plain = parse_predictions(&String::from_utf8(read(&run.path("predictions.tsv"))?).unwrap())
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut external = String::new();
    let mut extra = Vec::new();
    for p in &plain {
        let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let q: Vec<f64> = raw.iter().map(|r| r / z).collect();
        external.push_str(&format!("{}\t{}\t{}\t{}\n", p.instance_id, q[0], q[1], q[2]));
        extra.push(q);
    }
    let ext_path = run.path("external.tsv");
    std::fs::write(&ext_path, &external).map_err(|e| e.to_string())?;
    let out = run.path("ensembled.tsv");
    pointalign(&[
        "classify",
        "--checkpoint",
        s(&run.path("encoder.ckpt")),
        "--classes",
        s(&fx.join("vocab.txt")),
        "--embeddings",
        s(&fx.join("embeddings.emb")),
        "--triplets",
        s(&run.path("test.trp")),
        "--out",
        s(&out),
        "--ensemble",
        s(&ext_path),
    ])?;
    let combined = parse_predictions(&String::from_utf8(read(&out)?).unwrap()).map_err(|e| e.to_string())?;
    ensure(combined.len() == plain.len(), || "instance count changed".into())?;
    // Reparse the external file the way classify sees it.
    let q_rows = parse_logit_file(&external, 3).map_err(|e| e.to_string())?;
    for ((p, c), (_, q)) in plain.iter().zip(&combined).zip(&q_rows) {
        let mut point = [0.0; 3];
        for &(k, v) in &p.top {
            point[k] = v;
        }
        let sum: Vec<f64> = (0..3).map(|k| point[k] + q[k]).collect();
        let total: f64 = sum.iter().sum();
        for &(k, v) in &c.top {
            ensure(v == sum[k] / total, || {
                format!("{}: class {k} has {v}, expected {}", c.instance_id, sum[k] / total)
            })?;
        }
    }
    Ok(format!(
        "file pair sums to (0.7, 1.3) -> class 1; {} classified instances ensembled exactly",
        combined.len()
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("geometry round trip", geometry_round_trip),
        ("frustum oracle", frustum_oracle),
        ("dbscan oracle", dbscan_oracle),
        ("loss oracle", loss_oracle),
        ("gradient check", gradient_check),
        ("end-to-end toy run", end_to_end),
        ("evaluation metric oracle", evaluation_oracle),
        ("determinism", determinism),
        ("ensemble arithmetic", ensemble_arithmetic),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
