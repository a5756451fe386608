//! Binary checkpoint: magic, version, a JSON header with the architecture
//! and vocabulary, then every tensor with its name, group and shape.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::trace::fnv1a64;
use crate::tensor::{Group, ParamStore, TensorSpec};
use crate::tokenizer::Vocab;

use super::{ArchConfig, ReasonPlan};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"RPCK";

#[derive(Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    vocab: String,
    meta: serde_json::Value,
}

fn group_code(g: Group) -> u8 {
    Group::ALL.iter().position(|&x| x == g).expect("known group") as u8
}

fn bad(message: impl Into<String>) -> Error {
    Error::Format { what: "checkpoint", message: message.into() }
}

pub fn encode_checkpoint(model: &ReasonPlan, meta: &serde_json::Value) -> Result<Vec<u8>> {
    let header = Header { arch: model.arch.clone(), vocab: model.vocab.to_text(), meta: meta.clone() };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let specs = model.params.specs();
    out.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for s in specs {
        out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
        out.extend_from_slice(s.name.as_bytes());
        out.push(group_code(s.group));
        out.extend_from_slice(&(s.shape.len() as u32).to_le_bytes());
        for &d in &s.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &model.params.data[s.offset..s.offset + s.len] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(bad("truncated file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Decodes a checkpoint, returning the model and the stored metadata.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ReasonPlan, serde_json::Value)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::SchemaVersion { expected: CHECKPOINT_VERSION, found: version });
    }
    let hlen = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)?;
    let vocab = Vocab::from_text(&header.vocab)?;
    let count = r.u32()? as usize;
    let mut specs = Vec::with_capacity(count);
    let mut data = Vec::new();
    for _ in 0..count {
        let nlen = r.u32()? as usize;
        let name = String::from_utf8(r.take(nlen)?.to_vec()).map_err(|_| bad("tensor name is not utf-8"))?;
        let g = r.take(1)?[0] as usize;
        let group = *Group::ALL.get(g).ok_or_else(|| bad(format!("unknown group {g}")))?;
        let ndim = r.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u64()? as usize);
        }
        let len: usize = shape.iter().product();
        let offset = data.len();
        let raw = r.take(len * 8)?;
        data.extend(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))));
        specs.push(TensorSpec { name, shape, group, offset, len });
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    let params = ParamStore::from_parts(specs, data);
    Ok((ReasonPlan::from_params(header.arch, vocab, params)?, header.meta))
}

pub fn save_checkpoint(path: &Path, model: &ReasonPlan, meta: &serde_json::Value) -> Result<u64> {
    let bytes = encode_checkpoint(model, meta)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(fnv1a64(&bytes))
}

pub fn load_checkpoint(path: &Path) -> Result<(ReasonPlan, serde_json::Value)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_checkpoint(&bytes)
}

/// Hash of the parameter values alone, independent of metadata.
pub fn checkpoint_hash(model: &ReasonPlan) -> u64 {
    let mut bytes = Vec::with_capacity(model.params.len() * 8);
    for s in model.params.specs() {
        bytes.extend_from_slice(s.name.as_bytes());
        for v in &model.params.data[s.offset..s.offset + s.len] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fnv1a64(&bytes)
}
