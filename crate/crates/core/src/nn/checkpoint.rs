//! `HFNN` checkpoints: magic, u32 version, u32 descriptor length, the
//! architecture descriptor text, u64 parameter count, then every parameter
//! as f64 in layer order (weights before biases). Little-endian.

use std::path::Path;

use super::{Architecture, Model};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HFNN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_bytes(model: &Model) -> Vec<u8> {
    let desc = model.architecture().to_text();
    let count = model.param_count();
    let mut out = Vec::with_capacity(24 + desc.len() + count * 8);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for p in model.params() {
        for v in &p.value {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    let short = || Error::ArchitectureMismatch("checkpoint is truncated".into());
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(short);
    let magic: [u8; 4] = take(0, 4)?.try_into().unwrap();
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { expected: CHECKPOINT_MAGIC, found: magic });
    }
    let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dlen = u32::from_le_bytes(take(8, 4)?.try_into().unwrap()) as usize;
    let desc = std::str::from_utf8(take(12, dlen)?)
        .map_err(|_| Error::ArchitectureMismatch("descriptor is not UTF-8".into()))?;
    let arch = Architecture::parse(desc)?;
    let mut at = 12 + dlen;
    let count = u64::from_le_bytes(take(at, 8)?.try_into().unwrap()) as usize;
    at += 8;
    let mut model = Model::new(&arch, 0)?;
    if count != model.param_count() {
        return Err(Error::ArchitectureMismatch(format!(
            "header declares {count} parameters, descriptor implies {}",
            model.param_count()
        )));
    }
    if bytes.len() != at + count * 8 {
        return Err(Error::ArchitectureMismatch(format!(
            "expected {} bytes, found {}",
            at + count * 8,
            bytes.len()
        )));
    }
    for p in model.params_mut() {
        for v in p.value.iter_mut() {
            *v = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
            at += 8;
        }
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    model_from_bytes(&std::fs::read(path)?)
}
