//! Frozen text and image embeddings and the providers that supply them.
//!
//! Text and image features come from outside this crate: either a
//! precomputed table (`EMB1` file) or a seeded synthetic generator that gives
//! every class a fixed anchor direction.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::{len_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const TABLE_MAGIC: &[u8; 4] = b"EMB1";
pub const TEXT_PREFIX: &str = "text:";
pub const IMAGE_PREFIX: &str = "image:";
pub const DEFAULT_TEMPLATE: &str = "point cloud of a {}.";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("embedding has non-finite components".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn normalize(&self) -> Result<EmbeddingVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::DegenerateEmbedding);
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A prompt with exactly one `{}` placeholder for the class name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    pub fn new(template: &str) -> Result<Self> {
        let count = template.matches("{}").count();
        if count != 1 {
            return Err(Error::PlaceholderCount(count));
        }
        Ok(Self {
            template: template.to_string(),
        })
    }

    pub fn fill(&self, class_name: &str) -> String {
        self.template.replacen("{}", class_name, 1)
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("default template has one placeholder")
    }
}

/// Identifies a detection crop. `caption` is the detector's label text.
#[derive(Debug, Clone, Copy)]
pub struct CropRef<'a> {
    pub crop_id: &'a str,
    pub caption: &'a str,
}

pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<EmbeddingVector>;
    fn embed_image(&self, crop: CropRef<'_>) -> Result<EmbeddingVector>;
}

/// Precomputed embeddings keyed by `text:<prompt>` and `image:<crop id>`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, EmbeddingVector>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: String, value: EmbeddingVector) -> Result<()> {
        if value.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: value.dim(),
            });
        }
        self.entries.insert(key, value);
        Ok(())
    }

    pub fn insert_text(&mut self, text: &str, value: EmbeddingVector) -> Result<()> {
        self.insert(format!("{TEXT_PREFIX}{text}"), value)
    }

    pub fn insert_image(&mut self, crop_id: &str, value: EmbeddingVector) -> Result<()> {
        self.insert(format!("{IMAGE_PREFIX}{crop_id}"), value)
    }

    pub fn get(&self, key: &str) -> Option<&EmbeddingVector> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(TABLE_MAGIC);
        buf.put_u32(len_u32(self.dim));
        buf.put_u32(len_u32(self.entries.len()));
        for (key, value) in &self.entries {
            buf.put_str(key);
            for &v in value.values() {
                buf.put_f32(v as f32);
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes, "embedding file");
        r.expect_magic(TABLE_MAGIC)?;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut table = Self::new(dim);
        for _ in 0..count {
            let key = r.string()?;
            let values = (0..dim).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
            let value = EmbeddingVector::new(values).map_err(|e| Error::format("embedding file", e.to_string()))?;
            if table.entries.insert(key.clone(), value).is_some() {
                return Err(Error::format("embedding file", format!("duplicate key {key:?}")));
            }
        }
        r.finish()?;
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_file(path)?)
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let key = format!("{TEXT_PREFIX}{text}");
        self.entries.get(&key).cloned().ok_or(Error::ProviderMiss(key))
    }

    fn embed_image(&self, crop: CropRef<'_>) -> Result<EmbeddingVector> {
        let key = format!("{IMAGE_PREFIX}{}", crop.crop_id);
        self.entries.get(&key).cloned().ok_or(Error::ProviderMiss(key))
    }
}

/// 64-bit FNV-1a, used to derive stable per-key seeds.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn gaussian_vector(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Seeded class-anchor generator.
///
/// Each class gets a unit anchor. When there are no more classes than
/// dimensions the anchors are orthonormal. Text embeddings of a class (bare
/// name or templated prompt) are its anchor; an image embedding is the
/// anchor plus `image_spread` times a unit direction derived from the crop
/// id, renormalized.
#[derive(Debug, Clone)]
pub struct SyntheticEmbeddings {
    dim: usize,
    seed: u64,
    classes: Vec<String>,
    anchors: Vec<Vec<f64>>,
    template: PromptTemplate,
    image_spread: f64,
}

impl SyntheticEmbeddings {
    pub fn new(dim: usize, seed: u64, classes: &[String], template: PromptTemplate, image_spread: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("embedding dimension must be positive".into()));
        }
        let orthogonal = classes.len() <= dim;
        let mut anchors: Vec<Vec<f64>> = Vec::with_capacity(classes.len());
        for k in 0..classes.len() {
            let mut v = gaussian_vector(dim, seed.wrapping_add(k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            if orthogonal {
                // Modified Gram-Schmidt, applied twice for numerical orthogonality.
                for _ in 0..2 {
                    for a in &anchors {
                        let proj = dot(&v, a);
                        v.iter_mut().zip(a).for_each(|(x, y)| *x -= proj * y);
                    }
                }
            }
            anchors.push(normalized(v));
        }
        Ok(Self {
            dim,
            seed,
            classes: classes.to_vec(),
            anchors,
            template,
            image_spread,
        })
    }

    pub fn anchor(&self, class_index: usize) -> EmbeddingVector {
        EmbeddingVector {
            values: self.anchors[class_index].clone(),
        }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn class_of(&self, text: &str) -> Option<usize> {
        self.classes
            .iter()
            .position(|c| c == text || self.template.fill(c) == text)
    }

    pub fn image_for_class(&self, class_index: usize, crop_id: &str) -> EmbeddingVector {
        let noise = normalized(gaussian_vector(self.dim, self.seed ^ fnv1a(crop_id.as_bytes())));
        let values = self.anchors[class_index]
            .iter()
            .zip(&noise)
            .map(|(a, n)| a + self.image_spread * n)
            .collect();
        EmbeddingVector {
            values: normalized(values),
        }
    }
}

impl EmbeddingProvider for SyntheticEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        self.class_of(text)
            .map(|k| self.anchor(k))
            .ok_or_else(|| Error::ProviderMiss(format!("{TEXT_PREFIX}{text}")))
    }

    fn embed_image(&self, crop: CropRef<'_>) -> Result<EmbeddingVector> {
        let k = self
            .class_of(crop.caption)
            .ok_or_else(|| Error::ProviderMiss(format!("{IMAGE_PREFIX}{}", crop.crop_id)))?;
        Ok(self.image_for_class(k, crop.crop_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("class{i}")).collect()
    }

    #[test]
    fn normalize_unit_and_degenerate() {
        let v = EmbeddingVector::new(vec![3.0, 4.0]).unwrap().normalize().unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        assert!(matches!(
            EmbeddingVector::zeros(3).normalize(),
            Err(Error::DegenerateEmbedding)
        ));
    }

    #[test]
    fn template_placeholder_count() {
        assert!(matches!(
            PromptTemplate::new("no slot"),
            Err(Error::PlaceholderCount(0))
        ));
        assert!(matches!(PromptTemplate::new("{} {}"), Err(Error::PlaceholderCount(2))));
        assert_eq!(PromptTemplate::default().fill("chair"), "point cloud of a chair.");
    }

    #[test]
    fn synthetic_anchors_orthonormal() {
        let s = SyntheticEmbeddings::new(8, 42, &names(5), PromptTemplate::default(), 0.3).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d = s.anchor(i).dot(&s.anchor(j));
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((d - expected).abs() < 1e-12, "{i} {j} {d}");
            }
        }
        assert_eq!(s.embed_text("point cloud of a class3.").unwrap(), s.anchor(3));
        assert_eq!(s.embed_text("class3").unwrap(), s.anchor(3));
        assert!(matches!(s.embed_text("sofa"), Err(Error::ProviderMiss(_))));
    }

    #[test]
    fn synthetic_images_are_deterministic_and_near_anchor() {
        let s = SyntheticEmbeddings::new(16, 7, &names(3), PromptTemplate::default(), 0.5).unwrap();
        let crop = CropRef {
            crop_id: "s0/1",
            caption: "class1",
        };
        let a = s.embed_image(crop).unwrap();
        assert_eq!(a, s.embed_image(crop).unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(a.dot(&s.anchor(1)) > a.dot(&s.anchor(0)));
        let other = s
            .embed_image(CropRef {
                crop_id: "s0/2",
                caption: "class1",
            })
            .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn table_lookup_and_encoding() {
        let mut t = EmbeddingTable::new(2);
        t.insert_text("a chair", EmbeddingVector::new(vec![0.5, -1.0]).unwrap())
            .unwrap();
        t.insert_image("s/0", EmbeddingVector::new(vec![1.0, 0.0]).unwrap())
            .unwrap();
        assert!(t.insert_text("bad", EmbeddingVector::new(vec![1.0]).unwrap()).is_err());
        let bytes = t.encode();
        assert_eq!(&bytes[..4], b"EMB1");
        let back = EmbeddingTable::decode(&bytes).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.embed_text("a chair").unwrap().values(), &[0.5, -1.0]);
        let miss = back
            .embed_image(CropRef {
                crop_id: "s/9",
                caption: "x",
            })
            .unwrap_err();
        assert!(miss.to_string().contains("image:s/9"));
        assert!(EmbeddingTable::decode(&bytes[..bytes.len() - 1]).is_err());
    }
}
