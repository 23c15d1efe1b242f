use std::path::Path;

use super::atomic_write;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SittaModel};
use crate::tensor::{Element, Tensor};

const MAGIC: &[u8; 4] = b"SITT";
pub const CHECKPOINT_VERSION: u16 = 1;
/// magic + version + body length
const PREFIX: usize = 4 + 2 + 8;

/// Serializes every parameter as little-endian f32.
///
/// Layout: `SITT`, u16 version, u64 length of everything between this field
/// and the trailing CRC, four u32 hyperparameters (texture_dim,
/// base_channels, res_blocks, image_side), u32 block count, then per block a
/// u32-prefixed UTF-8 name, u32 rank, u32 dims and the payload. A CRC32 of
/// all preceding bytes closes the file.
pub fn write_checkpoint<E: Element>(model: &SittaModel<E>) -> Vec<u8> {
    let cfg = model.config();
    let mut body = Vec::new();
    for v in [cfg.texture_dim, cfg.base_channels, cfg.res_blocks, cfg.image_side] {
        body.extend_from_slice(&(v as u32).to_le_bytes());
    }
    body.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, p) in model.store.iter() {
        body.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        body.extend_from_slice(p.name.as_bytes());
        let dims = p.value.shape().0;
        body.extend_from_slice(&(dims.len() as u32).to_le_bytes());
        for d in dims {
            body.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            body.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(PREFIX + body.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated while reading {what}")))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Parses bytes produced by [`write_checkpoint`].
pub fn read_checkpoint(bytes: &[u8]) -> Result<SittaModel> {
    if bytes.is_empty() {
        return Err(Error::Format("empty checkpoint".into()));
    }
    if bytes.len() < PREFIX || &bytes[..4] != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let body_len = u64::from_le_bytes(bytes[6..PREFIX].try_into().unwrap());
    let expected = (PREFIX as u64).saturating_add(body_len).saturating_add(4);
    if bytes.len() as u64 != expected {
        return Err(Error::Format(format!(
            "checkpoint is {} bytes, header says {expected}",
            bytes.len()
        )));
    }
    let split = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[split..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..split]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader {
        buf: &bytes[..split],
        pos: PREFIX,
    };
    let mut hp = [0usize; 4];
    for v in &mut hp {
        *v = r.u32("hyperparameters")? as usize;
    }
    let config = ModelConfig {
        texture_dim: hp[0],
        base_channels: hp[1],
        res_blocks: hp[2],
        image_side: hp[3],
    };
    let mut model = SittaModel::<f32>::new(config, 0)
        .map_err(|e| Error::Format(format!("bad hyperparameters: {e}")))?;
    let count = r.u32("block count")? as usize;
    if count != model.store.len() {
        return Err(Error::Format(format!(
            "checkpoint has {count} blocks, architecture has {}",
            model.store.len()
        )));
    }
    let ids: Vec<_> = model.store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(n, "name")?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("shape")? as usize);
        }
        let param = model.store.get(id);
        if name != param.name || dims != param.value.shape().0 {
            return Err(Error::Format(format!(
                "block '{name}' {dims:?} does not match expected '{}' {:?}",
                param.name,
                param.value.shape().0
            )));
        }
        let numel = param.value.numel();
        let raw = r.take(numel * 4, "payload")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        *model.store.value_mut(id) = Tensor::from_vec(param.value.shape(), data)?;
    }
    if r.pos != split {
        return Err(Error::Format(format!(
            "{} trailing bytes after last block",
            split - r.pos
        )));
    }
    Ok(model)
}

/// Atomically writes `model` to `path`.
pub fn save_checkpoint<E: Element>(model: &SittaModel<E>, path: &Path) -> Result<()> {
    atomic_write(path, &write_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<SittaModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}
