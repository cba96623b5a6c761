//! Binary checkpoint format (little-endian):
//!
//! ```text
//! magic      b"CPFN"
//! version    u32
//! meta_len   u32, then meta_len bytes of JSON (configs, step, stream
//!            state, running statistics)
//! n_arrays   u32, then per array:
//!            name_len u32, name bytes, ndim u32, dims u32 x ndim,
//!            f32 x prod(dims)
//! ```
//!
//! Arrays are the parameter tensors in layout order followed by the AdamW
//! first and second moments (`adam.m`, `adam.v`).

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::optim::AdamState;
use super::trainer::TrainConfig;
use crate::error::{CheckpointError, Error, Result};
use crate::model::{Layout, ModelConfig, Network, Parameters};

pub const MAGIC: &[u8; 4] = b"CPFN";
pub const FORMAT_VERSION: u32 = 1;

/// Position in the deterministic dataset stream of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub seed: u64,
    /// Index of the next training dataset to draw.
    pub next_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunningStats {
    /// Exponential moving averages of the two training loss terms.
    pub ema_assign: f64,
    pub ema_count: f64,
    pub last_val_acc: f64,
    pub last_val_nll: f64,
    pub datasets_seen: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub step: u64,
    pub params: Parameters<f32>,
    pub adam: AdamState,
    pub stream: StreamState,
    pub stats: RunningStats,
}

impl PartialEq for Parameters<f32> {
    fn eq(&self, other: &Self) -> bool {
        self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    step: u64,
    stream: StreamState,
    stats: RunningStats,
}

impl ModelCheckpoint {
    pub fn network(&self) -> Result<Network<f32>> {
        Network::new(self.model.clone(), self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let layout = Layout::new(&self.model);
        if self.params.data.len() != layout.total {
            return Err(Error::Config("parameter count does not match the model config".into()));
        }
        let meta = serde_json::to_vec(&Meta {
            model: self.model.clone(),
            train: self.train.clone(),
            step: self.step,
            stream: self.stream,
            stats: self.stats,
        })?;
        let mut out = Vec::with_capacity(16 + meta.len() + 12 * layout.total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&((layout.slots.len() + 2) as u32).to_le_bytes());
        let mut put = |name: &str, shape: &[usize], data: &[f32]| {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for slot in &layout.slots {
            put(&slot.name, &slot.shape, &self.params.data[slot.range.clone()]);
        }
        put("adam.m", &[layout.total], &self.adam.m);
        put("adam.v", &[layout.total], &self.adam.v);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4, "magic").ok() != Some(&MAGIC[..]) {
            return Err(CheckpointError::BadMagic.into());
        }
        let version = r.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch { found: version, expected: FORMAT_VERSION }.into());
        }
        let meta_len = r.u32("metadata length")? as usize;
        let meta: Meta = serde_json::from_slice(r.take(meta_len, "metadata")?)
            .map_err(|e| CheckpointError::Malformed(format!("metadata: {e}")))?;
        meta.model
            .validate()
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let layout = Layout::new(&meta.model);
        let n_arrays = r.u32("array count")? as usize;
        if n_arrays != layout.slots.len() + 2 {
            return Err(CheckpointError::Malformed(format!(
                "expected {} arrays, found {n_arrays}",
                layout.slots.len() + 2
            ))
            .into());
        }
        let mut params = vec![0.0f32; layout.total];
        let expected = layout
            .slots
            .iter()
            .map(|s| (s.name.clone(), s.shape.clone(), Some(s.range.clone())))
            .chain([
                ("adam.m".to_string(), vec![layout.total], None),
                ("adam.v".to_string(), vec![layout.total], None),
            ]);
        let mut moments = Vec::new();
        for (name, shape, range) in expected {
            let (found_name, found_shape) = r.array_header()?;
            if found_name != name {
                return Err(CheckpointError::Malformed(format!("expected array {name}, found {found_name}")).into());
            }
            if found_shape != shape {
                return Err(CheckpointError::ShapeMismatch { name, expected: shape, found: found_shape }.into());
            }
            let data = r.f32s(shape.iter().product())?;
            match range {
                Some(rg) => params[rg].copy_from_slice(&data),
                None => moments.push(data),
            }
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed("trailing bytes after last array".into()).into());
        }
        let v = moments.pop().unwrap();
        let m = moments.pop().unwrap();
        Ok(ModelCheckpoint {
            model: meta.model,
            train: meta.train,
            step: meta.step,
            params: Parameters { data: params },
            adam: AdamState { m, v },
            stream: meta.stream,
            stats: meta.stats,
        })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < len {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn array_header(&mut self) -> Result<(String, Vec<usize>), CheckpointError> {
        let len = self.u32("array name length")? as usize;
        let name = String::from_utf8(self.take(len, "array name")?.to_vec())
            .map_err(|_| CheckpointError::Malformed("array name is not utf-8".into()))?;
        let ndim = self.u32("array rank")? as usize;
        if ndim > 8 {
            return Err(CheckpointError::Malformed(format!("array {name} has rank {ndim}")));
        }
        let shape = (0..ndim)
            .map(|_| self.u32("array shape").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((name, shape))
    }

    fn f32s(&mut self, count: usize) -> Result<Vec<f32>, CheckpointError> {
        let raw = self.take(count * 4, "array data")?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: &Path) -> Result<()> {
    let bytes = ckpt.to_bytes()?;
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    ModelCheckpoint::from_bytes(&bytes)
}
