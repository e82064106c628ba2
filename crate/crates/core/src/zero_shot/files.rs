use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::binio::read_text;
use crate::error::{Error, Result};
use crate::geometry::Point3;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l))
}

fn number<T: std::str::FromStr>(context: &str, lineno: usize, field: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::format(context, format!("line {lineno}: bad number {field:?}")))
}

/// `instance_id p_1 ... p_K`, tab-separated, one instance per line.
pub fn parse_logit_file(text: &str, classes: usize) -> Result<Vec<(String, Vec<f64>)>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != classes + 1 {
            return Err(Error::format(
                "logits",
                format!(
                    "line {lineno}: expected {} probabilities, found {}",
                    classes,
                    fields.len() - 1
                ),
            ));
        }
        let id = fields[0].trim().to_string();
        if !seen.insert(id.clone()) {
            return Err(Error::format(
                "logits",
                format!("line {lineno}: duplicate instance {id:?}"),
            ));
        }
        let probs = fields[1..]
            .iter()
            .map(|f| number("logits", lineno, f))
            .collect::<Result<Vec<f64>>>()?;
        out.push((id, probs));
    }
    Ok(out)
}

pub fn read_logit_file(path: &Path, classes: usize) -> Result<Vec<(String, Vec<f64>)>> {
    parse_logit_file(&read_text(path)?, classes).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

pub fn format_logit_file(rows: &[(String, Vec<f64>)]) -> String {
    let mut out = String::new();
    for (id, probs) in rows {
        out.push_str(id);
        for p in probs {
            let _ = write!(out, "\t{p}");
        }
        out.push('\n');
    }
    out
}

/// One classified proxy: its id, box center and best classes with their
/// probabilities, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub instance_id: String,
    pub center: Point3,
    pub top: Vec<(usize, f64)>,
}

impl PredictionRow {
    pub fn predicted_class(&self) -> usize {
        self.top[0].0
    }
}

/// `instance_id cx cy cz` followed by `class probability` pairs.
pub fn format_predictions(rows: &[PredictionRow]) -> String {
    let mut out = String::from("# instance_id\tcx\tcy\tcz\tthen class\tprobability pairs, best first\n");
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.instance_id, r.center.x, r.center.y, r.center.z);
        for (c, p) in &r.top {
            let _ = write!(out, "\t{c}\t{p}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRow>> {
    let ctx = "predictions";
    let mut out = Vec::new();
    for (lineno, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 6 || !(fields.len() - 4).is_multiple_of(2) {
            return Err(Error::format(ctx, format!("line {lineno}: malformed row")));
        }
        let center = Point3::new(
            number(ctx, lineno, fields[1])?,
            number(ctx, lineno, fields[2])?,
            number(ctx, lineno, fields[3])?,
        );
        let top = fields[4..]
            .chunks(2)
            .map(|pair| Ok((number(ctx, lineno, pair[0])?, number(ctx, lineno, pair[1])?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(PredictionRow {
            instance_id: fields[0].trim().to_string(),
            center,
            top,
        });
    }
    Ok(out)
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    parse_predictions(&read_text(path)?).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}
