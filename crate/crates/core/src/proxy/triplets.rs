//! `TRP1` triplet file: magic, u32 embedding dimension, u32 record count, then
//! per record u32 caption index, the image embedding as f32, u32 point count,
//! f32 point triples, and length-prefixed scene and instance ids.

use std::path::Path;

use super::TripletRecord;
use crate::binio::{len_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

const MAGIC: &[u8; 4] = b"TRP1";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripletSet {
    pub dim: usize,
    pub records: Vec<TripletRecord>,
}

pub fn encode_triplets(set: &TripletSet) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.put_u32(len_u32(set.dim));
    buf.put_u32(len_u32(set.records.len()));
    for rec in &set.records {
        if rec.image_embedding.dim() != set.dim {
            return Err(Error::DimensionMismatch {
                expected: set.dim,
                actual: rec.image_embedding.dim(),
            });
        }
        if rec.point_proxy.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "record {} has an empty proxy",
                rec.instance_id
            )));
        }
        buf.put_u32(len_u32(rec.caption_index));
        for &v in rec.image_embedding.values() {
            buf.put_f32(v as f32);
        }
        buf.put_u32(len_u32(rec.point_proxy.len()));
        for p in rec.point_proxy.points() {
            buf.put_f32(p.x as f32);
            buf.put_f32(p.y as f32);
            buf.put_f32(p.z as f32);
        }
        buf.put_str(&rec.scene_id);
        buf.put_str(&rec.instance_id);
    }
    Ok(buf)
}

pub fn decode_triplets(bytes: &[u8]) -> Result<TripletSet> {
    let ctx = "triplet file";
    let mut r = ByteReader::new(bytes, ctx);
    r.expect_magic(MAGIC)?;
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(r.remaining() / 16));
    for _ in 0..count {
        let caption_index = r.u32()? as usize;
        let emb = (0..dim).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        let n = r.u32()? as usize;
        if n == 0 {
            return Err(Error::format(ctx, "record with empty point proxy"));
        }
        if n.saturating_mul(12) > r.remaining() {
            return Err(Error::format(ctx, "truncated point payload"));
        }
        let mut pts = Vec::with_capacity(n);
        for _ in 0..n {
            let (x, y, z) = (r.f32()?, r.f32()?, r.f32()?);
            pts.push(Point3::new(x.into(), y.into(), z.into()));
        }
        let scene_id = r.string()?;
        let instance_id = r.string()?;
        records.push(TripletRecord {
            caption_index,
            image_embedding: EmbeddingVector::new(emb).map_err(|e| Error::format(ctx, e.to_string()))?,
            point_proxy: PointCloud::new(pts).map_err(|e| Error::format(ctx, e.to_string()))?,
            scene_id,
            instance_id,
        });
    }
    r.finish()?;
    Ok(TripletSet { dim, records })
}

pub fn write_triplets(path: &Path, set: &TripletSet) -> Result<()> {
    write_file(path, &encode_triplets(set)?)
}

pub fn read_triplets(path: &Path) -> Result<TripletSet> {
    decode_triplets(&read_file(path)?)
}
