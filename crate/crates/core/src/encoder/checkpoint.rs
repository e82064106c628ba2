//! `ENC1` checkpoint: magic, u32 header `[3, hidden1, hidden2, hidden3,
//! embed_dim, num_points]`, then `W1 b1 W2 b2 W3 b3 W4 b4` as little-endian
//! f32 with weights row-major (`out x in`).
//!
//! Values are stored in single precision, so a checkpoint written from
//! freshly trained parameters rounds them; decoding and re-encoding is exact.

use std::path::Path;

use super::{EncoderConfig, EncoderParams};
use crate::binio::{len_u32, read_file, write_file, ByteReader, ByteWriter};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"ENC1";

pub fn encode_checkpoint(params: &EncoderParams) -> Vec<u8> {
    let cfg = params.config();
    let mut buf = Vec::with_capacity(28 + params.parameter_count() * 4);
    buf.extend_from_slice(MAGIC);
    for v in [3, cfg.hidden1, cfg.hidden2, cfg.hidden3, cfg.embed_dim, cfg.num_points] {
        buf.put_u32(len_u32(v));
    }
    for layer in params.layers() {
        for r in 0..layer.weight.nrows() {
            for c in 0..layer.weight.ncols() {
                buf.put_f32(layer.weight[(r, c)] as f32);
            }
        }
        for &b in layer.bias.iter() {
            buf.put_f32(b as f32);
        }
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<EncoderParams> {
    let ctx = "checkpoint";
    let mut r = ByteReader::new(bytes, ctx);
    r.expect_magic(MAGIC)?;
    let input = r.u32()?;
    if input != 3 {
        return Err(Error::format(ctx, format!("input width must be 3, found {input}")));
    }
    let config = EncoderConfig {
        hidden1: r.u32()? as usize,
        hidden2: r.u32()? as usize,
        hidden3: r.u32()? as usize,
        embed_dim: r.u32()? as usize,
        num_points: r.u32()? as usize,
    };
    config.validate().map_err(|e| Error::format(ctx, e.to_string()))?;
    let expected: usize = config.layer_shapes().iter().map(|(i, o)| i * o + o).sum();
    if r.remaining() != expected * 4 {
        return Err(Error::format(
            ctx,
            format!("expected {} tensor bytes, found {}", expected * 4, r.remaining()),
        ));
    }
    let mut params = EncoderParams::zeros(config);
    for layer in params.layers_mut().iter_mut() {
        for row in 0..layer.weight.nrows() {
            for col in 0..layer.weight.ncols() {
                layer.weight[(row, col)] = r.f32()?.into();
            }
        }
        for b in layer.bias.iter_mut() {
            *b = r.f32()?.into();
        }
    }
    r.finish()?;
    if !params.is_finite() {
        return Err(Error::format(ctx, "non-finite parameter"));
    }
    Ok(params)
}

pub fn write_checkpoint(path: &Path, params: &EncoderParams) -> Result<()> {
    write_file(path, &encode_checkpoint(params))
}

pub fn read_checkpoint(path: &Path) -> Result<EncoderParams> {
    decode_checkpoint(&read_file(path)?)
}
