use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use pointalign_core::clustering::DbscanParams;
use pointalign_core::embedding::{EmbeddingProvider, EmbeddingTable, PromptTemplate};
use pointalign_core::encoder::{read_checkpoint, write_checkpoint};
use pointalign_core::evaluation::{localization_from_rows, read_labels, recognition_report};
use pointalign_core::geometry::io::{read_calibration, read_depth_image, read_point_cloud};
use pointalign_core::geometry::ForegroundBand;
use pointalign_core::proxy::{
    collect_indoor, collect_outdoor, read_detections, read_triplets, write_triplets, IndoorConfig, OutdoorConfig,
    TripletSet, VocabularyList,
};
use pointalign_core::synthetic::{generate, write_fixture, FixtureSpec, SceneKind};
use pointalign_core::training::{read_state, train, write_state, TrainingConfig, TrainingData};
use pointalign_core::zero_shot::{
    build_class_bank, classify_records, ensemble, format_predictions, read_logit_file, softmax, ClassifiedProxy,
    Prediction,
};
use pointalign_core::{Error, Result};

use crate::{ClassifyArgs, CollectArgs, EnsembleSpace, EvaluateArgs, Kind, MakeFixtureArgs, PretrainArgs};

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn require(paths: &[&Path]) -> Result<()> {
    for p in paths {
        if !p.exists() {
            return Err(Error::io(*p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    Ok(())
}

/// One class name per line, blank lines skipped.
fn read_class_names(path: &Path) -> Result<Vec<String>> {
    Ok(read_text(path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn make_fixture(a: &MakeFixtureArgs) -> Result<()> {
    let spec = FixtureSpec {
        kind: match a.kind {
            Kind::Outdoor => SceneKind::Outdoor,
            Kind::Indoor => SceneKind::Indoor,
        },
        classes: a.classes,
        train_objects_per_class: a.objects_per_class,
        train_scenes: a.scenes,
        test_objects_per_class: a.test_objects_per_class,
        test_scenes: a.test_scenes,
        seed: a.seed,
        embed_dim: a.embed_dim,
        image_spread: a.image_spread,
        distractors_per_scene: a.distractors,
        template: PromptTemplate::new(&a.template)?,
    };
    let fixture = generate(&spec)?;
    write_fixture(&a.out, &fixture)?;
    for split in &fixture.splits {
        log::info!(
            "{}: {} scenes, {} labeled instances",
            split.name,
            split.scenes.len(),
            split.labels.len()
        );
    }
    Ok(())
}

fn scene_ids(dir: &Path, detection_scenes: impl Iterator<Item = String>) -> Result<BTreeSet<String>> {
    let mut ids: BTreeSet<String> = detection_scenes.collect();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "calib") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.insert(stem.to_string());
            }
        }
    }
    Ok(ids)
}

pub fn collect(a: &CollectArgs) -> Result<()> {
    require(&[&a.scenes, &a.detections, &a.vocab, &a.embeddings])?;
    if !(a.near > 0.0 && a.near < a.far) {
        return Err(Error::Config(format!(
            "need 0 < near < far, got near {} far {}",
            a.near, a.far
        )));
    }
    if !(a.eps > 0.0) || a.min_pts == 0 {
        return Err(Error::Config(format!(
            "need eps > 0 and min_pts >= 1, got {} and {}",
            a.eps, a.min_pts
        )));
    }
    if !(a.depth_band > 0.0) {
        return Err(Error::Config(format!(
            "depth band must be positive, got {}",
            a.depth_band
        )));
    }
    let vocab = VocabularyList::read(&a.vocab)?;
    let provider = EmbeddingTable::read(&a.embeddings)?;
    let detections = read_detections(&a.detections, vocab.len(), a.score_threshold)?;
    let ids = scene_ids(&a.scenes, detections.all().iter().map(|d| d.scene_id.clone()))?;
    let outdoor = OutdoorConfig {
        near: a.near,
        far: a.far,
        dbscan: DbscanParams {
            eps: a.eps,
            min_pts: a.min_pts,
        },
        min_cluster_size: a.min_cluster_size,
    };
    let indoor = IndoorConfig {
        band: ForegroundBand {
            half_width: a.depth_band,
        },
        min_points: a.min_points,
    };

    let mut records = Vec::new();
    let mut log_text = String::new();
    for id in &ids {
        let scene_path = |ext: &str| a.scenes.join(format!("{id}.{ext}"));
        let calib = read_calibration(&scene_path("calib"))?;
        let dets = detections.for_scene(id);
        let outcome = match a.kind {
            Kind::Outdoor => {
                let cloud = read_point_cloud(&scene_path("pcf"))?;
                collect_outdoor(&cloud, &calib, &dets, &vocab, &provider, &outdoor)?
            }
            Kind::Indoor => {
                let depth = read_depth_image(&scene_path("dep"))?;
                collect_indoor(&depth, &calib, &dets, &vocab, &provider, &indoor)?
            }
        };
        let mut reasons: BTreeMap<&str, usize> = BTreeMap::new();
        for s in &outcome.skipped {
            *reasons.entry(s.reason.code()).or_default() += 1;
        }
        let mut line = format!(
            "{id}\trecords={}\tskipped={}",
            outcome.records.len(),
            outcome.skipped.len()
        );
        for (code, n) in reasons {
            let _ = write!(line, "\t{code}={n}");
        }
        log::info!("{line}");
        log_text.push_str(&line);
        log_text.push('\n');
        records.extend(outcome.records);
    }
    log::info!("{} records from {} scenes", records.len(), ids.len());
    write_triplets(
        &a.out,
        &TripletSet {
            dim: provider.dim(),
            records,
        },
    )?;
    if let Some(path) = &a.log {
        write_text(path, &log_text)?;
    }
    Ok(())
}

fn training_config(a: &PretrainArgs) -> Result<TrainingConfig> {
    let mut c = TrainingConfig::default();
    if let Some(path) = &a.config {
        c.apply_text(&read_text(path)?, &path.display().to_string())?;
    }
    macro_rules! set {
        ($($flag:ident => $($field:ident).+),* $(,)?) => {
            $(if let Some(v) = a.$flag { c.$($field).+ = v; })*
        };
    }
    set!(
        batch_size => batch_size,
        temperature => temperature,
        lambda1 => lambda1,
        lambda2 => lambda2,
        learning_rate => learning_rate,
        weight_decay => weight_decay,
        warmup => warmup_iters,
        epochs => total_epochs,
        seed => seed,
        repeat_threshold => repeat_threshold,
        workers => workers,
        hidden1 => encoder.hidden1,
        hidden2 => encoder.hidden2,
        hidden3 => encoder.hidden3,
        embed_dim => encoder.embed_dim,
        num_points => encoder.num_points,
    );
    if a.steps.is_some() {
        c.total_steps = a.steps;
    }
    c.validate()?;
    Ok(c)
}

pub fn pretrain(a: &PretrainArgs) -> Result<()> {
    require(&[&a.triplets, &a.vocab, &a.embeddings])?;
    let config = training_config(a)?;
    let template = PromptTemplate::new(&a.template)?;
    let provider = EmbeddingTable::read(&a.embeddings)?;
    if provider.dim() != config.encoder.embed_dim {
        return Err(Error::Config(format!(
            "encoder embed_dim {} differs from the embedding dimension {}",
            config.encoder.embed_dim,
            provider.dim()
        )));
    }
    let vocab = VocabularyList::read(&a.vocab)?;
    let triplets = read_triplets(&a.triplets)?;
    let data = TrainingData::new(triplets, &vocab, &template, &provider)?;
    let resume = a.resume.as_deref().map(|p| read_state(p, &config)).transpose()?;
    let outcome = train(&data, &config, resume, a.stop_after)?;
    let report = &outcome.report;
    if let (Some(first), Some(last)) = (report.initial_loss(), report.final_loss()) {
        log::info!("loss {first:.6} -> {last:.6} over {} steps", report.steps.len());
    }
    write_checkpoint(&a.out, &outcome.state.params)?;
    if let Some(path) = &a.report {
        write_text(path, &report.to_text())?;
    }
    if let Some(path) = &a.state {
        write_state(path, &outcome.state)?;
    }
    Ok(())
}

fn combine(point: &Prediction, extra: &[&[f64]], space: EnsembleSpace) -> Result<Prediction> {
    match space {
        EnsembleSpace::Probabilities => {
            let mut inputs = vec![point.probabilities()];
            inputs.extend_from_slice(extra);
            ensemble(&inputs)
        }
        EnsembleSpace::Logits => {
            // ln p differs from the raw point scores by a per-instance
            // constant, which the softmax cancels.
            let mut sum: Vec<f64> = point.probabilities().iter().map(|p| p.ln()).collect();
            for e in extra {
                if e.len() != sum.len() {
                    return Err(Error::DimensionMismatch {
                        expected: sum.len(),
                        actual: e.len(),
                    });
                }
                sum.iter_mut().zip(e.iter()).for_each(|(s, v)| *s += v);
            }
            Prediction::from_probabilities(softmax(&sum))
        }
    }
}

pub fn classify(a: &ClassifyArgs) -> Result<()> {
    require(&[&a.checkpoint, &a.classes, &a.embeddings, &a.triplets])?;
    require(&a.ensemble.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    if a.top_k == 0 {
        return Err(Error::Config("top-k must be at least 1".into()));
    }
    let names = read_class_names(&a.classes)?;
    let template = PromptTemplate::new(&a.template)?;
    let provider = EmbeddingTable::read(&a.embeddings)?;
    let bank = build_class_bank(&names, &template, &provider)?;
    let params = read_checkpoint(&a.checkpoint)?;
    let triplets = read_triplets(&a.triplets)?;
    let mut classified = classify_records(&params, &triplets.records, &bank, a.seed)?;

    let extra: Vec<(PathBuf, HashMap<String, Vec<f64>>)> = a
        .ensemble
        .iter()
        .map(|p| Ok((p.clone(), read_logit_file(p, names.len())?.into_iter().collect())))
        .collect::<Result<_>>()?;
    if !extra.is_empty() {
        for c in &mut classified {
            let scores = extra
                .iter()
                .map(|(path, rows)| {
                    rows.get(&c.instance_id).map(Vec::as_slice).ok_or_else(|| {
                        Error::format(
                            path.display().to_string(),
                            format!("no scores for instance {:?}", c.instance_id),
                        )
                    })
                })
                .collect::<Result<Vec<&[f64]>>>()?;
            c.prediction = combine(&c.prediction, &scores, a.ensemble_space)?;
        }
    }
    let rows: Vec<_> = classified.iter().map(|c: &ClassifiedProxy| c.to_row(a.top_k)).collect();
    log::info!("classified {} proxies over {} classes", rows.len(), names.len());
    write_text(&a.out, &format_predictions(&rows))
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    require(&[&a.predictions, &a.labels, &a.classes])?;
    let names = read_class_names(&a.classes)?;
    if names.is_empty() {
        return Err(Error::Config("class list is empty".into()));
    }
    let predictions = pointalign_core::zero_shot::read_predictions(&a.predictions)?;
    if let Some(p) = predictions
        .iter()
        .find(|p| p.top.is_empty() || p.top.iter().any(|t| t.0 >= names.len()))
    {
        return Err(Error::format(
            a.predictions.display().to_string(),
            format!(
                "instance {:?} has no class or one outside {} classes",
                p.instance_id,
                names.len()
            ),
        ));
    }
    let labels = read_labels(&a.labels, names.len())?;
    let mut report = recognition_report(&predictions, &labels, &names)?;
    if !a.no_localization && labels.iter().any(|l| l.center.is_some()) {
        report.localization = Some(localization_from_rows(&predictions, &labels, a.threshold)?);
    }
    if report.unpredicted > 0 {
        log::warn!("{} labeled instances have no prediction", report.unpredicted);
    }
    if let Some(avg) = report.average_top1 {
        log::info!("average top-1 {avg:.4}");
    }
    write_text(&a.out, &report.to_tsv())
}
