use std::fmt::Write as _;
use std::path::Path;

use crate::binio::read_text;
use crate::error::{Error, Result};
use crate::geometry::Box2D;

/// Detections scoring below this are dropped on read.
pub const DEFAULT_SCORE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub scene_id: String,
    /// Position among this scene's lines in the source file, counted before
    /// score filtering so instance ids do not depend on the threshold.
    pub index: usize,
    pub bbox: Box2D,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn new(detections: Vec<Detection>) -> Self {
        Self { detections }
    }

    pub fn all(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn for_scene(&self, scene_id: &str) -> Vec<Detection> {
        self.detections
            .iter()
            .filter(|d| d.scene_id == scene_id)
            .cloned()
            .collect()
    }
}

/// Tab-separated `scene_id u_min v_min u_max v_max score caption_index`.
/// Lines starting with `#` are comments.
pub fn parse_detections(text: &str, vocab_size: usize, score_threshold: f64) -> Result<DetectionSet> {
    let mut per_scene: std::collections::HashMap<String, usize> = Default::default();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::format("detections", format!("line {}: {msg}", lineno + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(bad(format!("expected 7 tab-separated fields, found {}", fields.len())));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("bad number {:?}", fields[i])))
        };
        let label: usize = fields[6]
            .trim()
            .parse()
            .map_err(|_| bad(format!("bad caption index {:?}", fields[6])))?;
        if label >= vocab_size {
            return Err(bad(format!(
                "caption index {label} out of range for vocabulary of {vocab_size}"
            )));
        }
        let bbox = Box2D::new(num(1)?, num(2)?, num(3)?, num(4)?, num(5)?, label).map_err(|e| bad(e.to_string()))?;
        let scene_id = fields[0].trim().to_string();
        let counter = per_scene.entry(scene_id.clone()).or_insert(0);
        let index = *counter;
        *counter += 1;
        if bbox.score < score_threshold {
            continue;
        }
        out.push(Detection { scene_id, index, bbox });
    }
    Ok(DetectionSet::new(out))
}

pub fn read_detections(path: &Path, vocab_size: usize, score_threshold: f64) -> Result<DetectionSet> {
    parse_detections(&read_text(path)?, vocab_size, score_threshold).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

pub fn format_detections(detections: &[Detection]) -> String {
    let mut out = String::from("# scene_id\tu_min\tv_min\tu_max\tv_max\tscore\tcaption_index\n");
    for d in detections {
        let b = &d.bbox;
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            d.scene_id, b.u_min, b.v_min, b.u_max, b.v_max, b.score, b.label_index
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filters_low_scores_but_keeps_indices() {
        let text = "s0\t0\t0\t10\t10\t0.9\t1\ns0\t1\t1\t5\t5\t0.2\t0\ns0\t2\t2\t6\t6\t0.3\t0\ns1\t0\t0\t4\t4\t0.5\t2\n";
        let set = parse_detections(text, 3, DEFAULT_SCORE_THRESHOLD).unwrap();
        let s0 = set.for_scene("s0");
        assert_eq!(s0.len(), 2);
        assert_eq!(s0[0].index, 0);
        assert_eq!(s0[1].index, 2);
        assert_eq!(set.for_scene("s1")[0].index, 0);
        assert!(set.all().iter().all(|d| d.bbox.score >= 0.3));
    }

    #[test]
    fn rejects_out_of_range_label() {
        let err = parse_detections("s0\t0\t0\t1\t1\t0.9\t3\n", 3, 0.3).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn format_then_parse() {
        let d = Detection {
            scene_id: "a".into(),
            index: 0,
            bbox: Box2D::new(1.5, 2.0, 30.25, 40.0, 0.75, 1).unwrap(),
        };
        let set = parse_detections(&format_detections(std::slice::from_ref(&d)), 2, 0.0).unwrap();
        assert_eq!(set.all(), &[d]);
    }
}
