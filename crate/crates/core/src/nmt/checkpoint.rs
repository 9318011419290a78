//! Self-describing binary checkpoint: magic, version, config block, epoch,
//! validation loss, then named f32 tensors. All integers little-endian.

use std::path::Path;

use super::{NmtConfig, NmtModel};
use crate::numerics::{Parameterized, Tensor};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"RPNMTCK\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: NmtModel<f32>,
    /// 1-based epoch after which the parameters were captured; 0 if untrained.
    pub epoch: usize,
    pub valid_loss: f64,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format("truncated checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("non-UTF-8 string in checkpoint".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.model.config().to_text());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend_from_slice(&self.valid_loss.to_le_bytes());
        let params = self.model.parameters();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            put_str(&mut out, &p.name);
            let shape = p.value.shape();
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let config = NmtConfig::from_text(&r.string()?)?;
        let epoch = r.u64()? as usize;
        let valid_loss = f64::from_bits(r.u64()?);
        let mut model = NmtModel::<f32>::new(&config)?;
        let count = r.u32()? as usize;
        let mut params = model.parameters_mut();
        if count != params.len() {
            return Err(Error::Format(format!(
                "checkpoint has {count} tensors, config implies {}",
                params.len()
            )));
        }
        for p in params.iter_mut() {
            let name = r.string()?;
            if name != p.name {
                return Err(Error::Format(format!(
                    "expected tensor {:?}, found {name:?}",
                    p.name
                )));
            }
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if shape != p.value.shape() {
                return Err(Error::Format(format!(
                    "tensor {name}: shape {shape:?}, config implies {:?}",
                    p.value.shape()
                )));
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            p.value = Tensor::from_vec(&shape, data)?;
        }
        drop(params);
        if r.pos != buf.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            model,
            epoch,
            valid_loss,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&buf)
    }
}
