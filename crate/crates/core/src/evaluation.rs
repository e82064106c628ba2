//! Per-class recognition accuracy and center-distance localization scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::binio::read_text;
use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::zero_shot::PredictionRow;

/// Default center-distance threshold in meters.
pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInstance {
    pub instance_id: String,
    pub true_class: usize,
    pub center: Option<Point3>,
}

/// Tab-separated `instance_id class_index [cx cy cz]`; `#` starts a comment.
pub fn parse_labels(text: &str, classes: usize) -> Result<Vec<LabeledInstance>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::format("labels", format!("line {}: {msg}", i + 1));
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 && fields.len() != 5 {
            return Err(bad(format!("expected 2 or 5 fields, found {}", fields.len())));
        }
        let true_class: usize = fields[1]
            .parse()
            .map_err(|_| bad(format!("bad class {:?}", fields[1])))?;
        if true_class >= classes {
            return Err(bad(format!("class {true_class} out of range for {classes} classes")));
        }
        let center = if fields.len() == 5 {
            let c = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad coordinate {f:?}"))))
                .collect::<Result<Vec<_>>>()?;
            Some(Point3::new(c[0], c[1], c[2]))
        } else {
            None
        };
        if !seen.insert(fields[0].to_string()) {
            return Err(bad(format!("duplicate instance {:?}", fields[0])));
        }
        out.push(LabeledInstance {
            instance_id: fields[0].to_string(),
            true_class,
            center,
        });
    }
    Ok(out)
}

pub fn read_labels(path: &Path, classes: usize) -> Result<Vec<LabeledInstance>> {
    parse_labels(&read_text(path)?, classes).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

pub fn format_labels(labels: &[LabeledInstance]) -> String {
    let mut out = String::from("# instance_id\tclass_index\tcx\tcy\tcz\n");
    for l in labels {
        let _ = write!(out, "{}\t{}", l.instance_id, l.true_class);
        if let Some(c) = l.center {
            let _ = write!(out, "\t{}\t{}\t{}", c.x, c.y, c.z);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub name: String,
    pub instances: usize,
    /// `None` when the class has no evaluated instance.
    pub top1: Option<f64>,
    pub top5: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationScore {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `None` when there are no proxies.
    pub precision: Option<f64>,
    /// `None` when there are no ground truths.
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub classes: Vec<ClassScore>,
    /// Unweighted mean over classes with at least one instance.
    pub average_top1: Option<f64>,
    pub average_top5: Option<f64>,
    /// Labeled instances with no prediction; they do not enter accuracies.
    pub unpredicted: usize,
    pub localization: Option<LocalizationScore>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Scores every prediction against its label. A prediction whose instance
/// has no label is an error.
pub fn recognition_report(
    predictions: &[PredictionRow],
    labels: &[LabeledInstance],
    class_names: &[String],
) -> Result<EvalReport> {
    let by_id: BTreeMap<&str, &LabeledInstance> = labels.iter().map(|l| (l.instance_id.as_str(), l)).collect();
    let k = class_names.len();
    let mut counts = vec![0usize; k];
    let mut hits1 = vec![0usize; k];
    let mut hits5 = vec![0usize; k];
    let mut predicted = BTreeSet::new();
    for p in predictions {
        let label = by_id
            .get(p.instance_id.as_str())
            .ok_or_else(|| Error::MissingLabel(p.instance_id.clone()))?;
        let c = label.true_class;
        if c >= k {
            return Err(Error::InvalidParameter(format!(
                "label class {c} out of range for {k} classes"
            )));
        }
        predicted.insert(p.instance_id.as_str());
        counts[c] += 1;
        if p.top.first().map(|t| t.0) == Some(c) {
            hits1[c] += 1;
        }
        if p.top.iter().take(5).any(|t| t.0 == c) {
            hits5[c] += 1;
        }
    }
    let classes: Vec<ClassScore> = (0..k)
        .map(|c| {
            let n = counts[c];
            let frac = |h: usize| (n > 0).then(|| h as f64 / n as f64);
            ClassScore {
                name: class_names[c].clone(),
                instances: n,
                top1: frac(hits1[c]),
                top5: frac(hits5[c]),
            }
        })
        .collect();
    Ok(EvalReport {
        average_top1: mean(classes.iter().filter_map(|c| c.top1)),
        average_top5: mean(classes.iter().filter_map(|c| c.top5)),
        unpredicted: labels
            .iter()
            .filter(|l| !predicted.contains(l.instance_id.as_str()))
            .count(),
        classes,
        localization: None,
    })
}

/// Matches ground truths to same-class proxies one-to-one, greedily taking
/// the globally closest remaining pair first, and only pairs strictly closer
/// than `threshold`. Distance ties go to the lower proxy index, then the
/// lower ground-truth index.
pub fn localization_pr(
    proxies: &[(Point3, usize)],
    truths: &[(Point3, usize)],
    threshold: f64,
) -> Result<LocalizationScore> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "distance threshold must be positive, got {threshold}"
        )));
    }
    let mut pairs = Vec::new();
    for (pi, (pc, pk)) in proxies.iter().enumerate() {
        for (gi, (gc, gk)) in truths.iter().enumerate() {
            if pk == gk {
                let d = pc.distance(gc);
                if d < threshold {
                    pairs.push((d, pi, gi));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut proxy_used = vec![false; proxies.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut tp = 0;
    for (_, pi, gi) in pairs {
        if !proxy_used[pi] && !truth_used[gi] {
            proxy_used[pi] = true;
            truth_used[gi] = true;
            tp += 1;
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(LocalizationScore {
        threshold,
        true_positives: tp,
        false_positives: proxies.len() - tp,
        false_negatives: truths.len() - tp,
        precision: ratio(tp, proxies.len()),
        recall: ratio(tp, truths.len()),
    })
}

/// Localization over prediction rows (center and top-1 class) against the
/// labeled instances that carry a center.
pub fn localization_from_rows(
    predictions: &[PredictionRow],
    labels: &[LabeledInstance],
    threshold: f64,
) -> Result<LocalizationScore> {
    let proxies: Vec<(Point3, usize)> = predictions.iter().map(|p| (p.center, p.predicted_class())).collect();
    let truths: Vec<(Point3, usize)> = labels
        .iter()
        .filter_map(|l| l.center.map(|c| (c, l.true_class)))
        .collect();
    localization_pr(&proxies, &truths, threshold)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    /// One row per class, an `Avg.` row, then the localization row if any.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\tinstances\ttop1\ttop5\n");
        for c in &self.classes {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", c.name, c.instances, cell(c.top1), cell(c.top5));
        }
        let total: usize = self.classes.iter().map(|c| c.instances).sum();
        let _ = writeln!(
            out,
            "Avg.\t{}\t{}\t{}",
            total,
            cell(self.average_top1),
            cell(self.average_top5)
        );
        if let Some(l) = &self.localization {
            let _ = writeln!(
                out,
                "localization\tthreshold={}\tprecision={}\trecall={}\ttp={}\tfp={}\tfn={}",
                l.threshold,
                cell(l.precision),
                cell(l.recall),
                l.true_positives,
                l.false_positives,
                l.false_negatives
            );
        }
        out
    }
}
