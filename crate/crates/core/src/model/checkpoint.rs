//! Binary checkpoint format.
//!
//! ```text
//! u32 LE  metadata length
//! bytes   metadata: "key=value\n" lines (format_version, vocab, dim, layers,
//!         heads, ff, max_len, tensors)
//! repeated per tensor:
//!   u32 LE name length, name bytes (UTF-8)
//!   u32 LE rank, rank x u32 LE dims
//!   row-major f32 LE values
//! ```
//!
//! Values are stored as `f32`; parameters that are already `f32`-exact
//! (see [`DenoiserParams::round_to_f32`]) round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{RcdError, Result};

use super::params::{DenoiserParams, ModelDims};

pub const FORMAT_VERSION: u32 = 1;

fn parse_err(msg: impl Into<String>) -> RcdError {
    RcdError::Parse(msg.into())
}

pub fn write_checkpoint<W: Write>(params: &DenoiserParams, mut w: W) -> Result<()> {
    let dims = params.dims;
    let tensors = params.tensors();
    let meta = format!(
        "format_version={FORMAT_VERSION}\nvocab={}\ndim={}\nlayers={}\nheads={}\nff={}\nmax_len={}\ntensors={}\n",
        dims.vocab,
        dims.dim,
        dims.layers,
        dims.heads,
        dims.ff,
        dims.max_len,
        tensors.len()
    );
    w.write_all(&(meta.len() as u32).to_le_bytes())?;
    w.write_all(meta.as_bytes())?;
    for (name, shape, data) in tensors {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for dim in &shape {
            w.write_all(&(*dim as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(data.len() * 4);
        for x in data {
            buf.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| parse_err(format!("truncated checkpoint: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn parse_meta(text: &str) -> Result<(ModelDims, usize)> {
    let mut fields = std::collections::BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(format!("bad metadata line {line:?}")))?;
        let v: usize = v.parse().map_err(|_| parse_err(format!("non-integer metadata value {line:?}")))?;
        fields.insert(k.to_string(), v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| parse_err(format!("missing metadata key {k}")));
    let version = get("format_version")?;
    if version != FORMAT_VERSION as usize {
        return Err(parse_err(format!("unsupported checkpoint version {version}")));
    }
    let dims = ModelDims {
        vocab: get("vocab")?,
        dim: get("dim")?,
        layers: get("layers")?,
        heads: get("heads")?,
        ff: get("ff")?,
        max_len: get("max_len")?,
    };
    Ok((dims, get("tensors")?))
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<DenoiserParams> {
    let meta_len = read_u32(&mut r)? as usize;
    if meta_len > 1 << 16 {
        return Err(parse_err("metadata record too large"));
    }
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta).map_err(|e| parse_err(format!("truncated metadata: {e}")))?;
    let meta = String::from_utf8(meta).map_err(|_| parse_err("metadata is not UTF-8"))?;
    let (dims, count) = parse_meta(&meta)?;
    let mut params = DenoiserParams::zeros(dims)?;
    let expected: Vec<(String, Vec<usize>)> =
        params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    if count != expected.len() {
        return Err(RcdError::DimensionMismatch(format!(
            "checkpoint lists {count} tensors, architecture has {}",
            expected.len()
        )));
    }
    for ((want_name, want_shape), dst) in expected.into_iter().zip(params.tensors_mut()) {
        let name_len = read_u32(&mut r)? as usize;
        if name_len > 1024 {
            return Err(parse_err("tensor name too long"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|e| parse_err(format!("truncated tensor name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| parse_err("tensor name is not UTF-8"))?;
        if name != want_name {
            return Err(parse_err(format!("expected tensor {want_name}, found {name}")));
        }
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| read_u32(&mut r).map(|x| x as usize)).collect::<Result<Vec<_>>>()?;
        if shape != want_shape {
            return Err(RcdError::DimensionMismatch(format!(
                "tensor {name} has shape {shape:?}, expected {want_shape:?}"
            )));
        }
        let mut buf = vec![0u8; dst.len() * 4];
        r.read_exact(&mut buf).map_err(|e| parse_err(format!("truncated tensor {name}: {e}")))?;
        for (x, chunk) in dst.iter_mut().zip(buf.chunks_exact(4)) {
            *x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(parse_err("trailing bytes after last tensor"));
    }
    Ok(params)
}

pub fn save_checkpoint(params: &DenoiserParams, path: &Path) -> Result<()> {
    write_checkpoint(params, BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: &Path) -> Result<DenoiserParams> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
