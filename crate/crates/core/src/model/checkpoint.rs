//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "MTMVCKPT"
//! endianness   2 bytes  0x02 0x01 (the u16 0x0102 written little-endian)
//! version      u32
//! header_len   u32      followed by a UTF-8 JSON header {config, shape}
//! count        u32      number of parameters, then per parameter:
//!   name_len   u32      followed by the UTF-8 name
//!   rows, cols u64, u64
//!   values     rows * cols f64
//! ```

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, ModelShape};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MTMVCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const ENDIAN_TAG: [u8; 2] = 0x0102u16.to_le_bytes();

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    shape: ModelShape,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            config: model.config.clone(),
            shape: model.shape,
            names: model.names.clone(),
            params: model.params.clone(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            shape: self.shape,
        })
        .expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&ENDIAN_TAG);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.names.iter().zip(&self.params) {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
        }
        let tag = r.take(2)?;
        if tag != ENDIAN_TAG {
            return Err(Error::Checkpoint(format!(
                "unsupported byte order tag {tag:02x?}"
            )));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        let count = r.u32()? as usize;
        let mut names = Vec::new();
        let mut params = Vec::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rows = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("rows overflow".into()))?;
            let cols = usize::try_from(r.u64()?).map_err(|_| Error::Checkpoint("cols overflow".into()))?;
            let bytes_needed = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .filter(|&n| n <= r.remaining())
                .ok_or_else(|| Error::Checkpoint(format!("parameter `{name}` is truncated")))?;
            let data = r
                .take(bytes_needed)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            names.push(name);
            params.push(Tensor::new(rows, cols, data)?);
        }
        if r.remaining() != 0 {
            return Err(Error::Checkpoint(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint {
            config: header.config,
            shape: header.shape,
            names,
            params,
        })
    }

    /// Rebuilds the model, checking names and shapes against the layout the
    /// stored configuration implies.
    pub fn into_model(self) -> Result<Model> {
        let mut model = Model::new(self.config, self.shape, 0)
            .map_err(|e| Error::Checkpoint(format!("stored configuration is invalid: {e}")))?;
        if model.names != self.names {
            return Err(Error::Checkpoint(
                "parameter names do not match the stored configuration".into(),
            ));
        }
        for (name, (have, want)) in self.names.iter().zip(self.params.iter().zip(&model.params)) {
            if have.shape() != want.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` is {:?}, expected {:?}",
                    have.shape(),
                    want.shape()
                )));
            }
        }
        model.params = self.params;
        Ok(model)
    }
}
