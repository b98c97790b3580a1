//! The RBC1 checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RBC1" | version u32 | hash_len u32 | hash utf8 | step u64 | update u64
//! | n_meta u32 | (key_len u32 | key | value u64)*
//! | n_tensors u32 | (name_len u32 | name | rank u32 | dims u64* | f32 data)*
//! | crc32 u32 over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rbc_grad::{Adam, AdamConfig, ParamStore, Tensor};

use crate::error::{io_err, CheckpointError, CoreError, Result};

pub const MAGIC: [u8; 4] = *b"RBC1";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    /// Environment steps consumed.
    pub step: u64,
    /// PPO updates completed.
    pub update: u64,
    pub meta: BTreeMap<String, u64>,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> std::result::Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Malformed("non-utf8 string".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        put_str(&mut out, &self.config_hash);
        out.extend(self.step.to_le_bytes());
        out.extend(self.update.to_le_bytes());
        out.extend((self.meta.len() as u32).to_le_bytes());
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            out.extend(v.to_le_bytes());
        }
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend((t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend((d as u64).to_le_bytes());
            }
            for &x in &t.data {
                out.extend(x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend(crc.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> std::result::Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let config_hash = r.string()?;
        let step = r.u64()?;
        let update = r.u64()?;
        let mut meta = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            meta.insert(k, r.u64()?);
        }
        let n = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..n {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|l| l.checked_mul(4))
                .ok_or_else(|| CheckpointError::Malformed(format!("tensor {name} is too large")))?;
            let data = r
                .take(len)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        let body = r.pos;
        let stored = r.u32()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::Malformed(format!(
                "{} trailing bytes after checksum",
                bytes.len() - r.pos
            )));
        }
        let computed = crc32fast::hash(&bytes[..body]);
        if stored != computed {
            return Err(CheckpointError::Checksum { stored, computed });
        }
        Ok(Self {
            config_hash,
            step,
            update,
            meta,
            tensors,
        })
    }

    /// Write to a temporary sibling and rename it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
            f.write_all(&self.encode()).map_err(io_err(&tmp))?;
            f.sync_all().map_err(io_err(&tmp))?;
        }
        std::fs::rename(&tmp, path).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        Ok(Self::decode(&bytes)?)
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f32]) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: data.to_vec(),
        });
    }

    /// Append every parameter under `prefix`.
    pub fn add_params(&mut self, prefix: &str, params: &ParamStore<f32>) {
        for (_, name, t) in params.iter() {
            self.push(format!("{prefix}{name}"), t.shape(), t.data());
        }
    }

    /// Append Adam moments under `prefix` and its step count as metadata.
    pub fn add_adam(&mut self, prefix: &str, adam: &Adam, params: &ParamStore<f32>) {
        for ((_, name, t), (m, v)) in params.iter().zip(adam.first_moments().iter().zip(adam.second_moments())) {
            self.push(format!("{prefix}m/{name}"), t.shape(), m);
            self.push(format!("{prefix}v/{name}"), t.shape(), v);
        }
        self.meta.insert(format!("{prefix}step"), adam.step_count());
    }

    fn expect(&self, name: &str, shape: &[usize]) -> std::result::Result<&NamedTensor, CheckpointError> {
        let t = self
            .tensor(name)
            .ok_or_else(|| CheckpointError::MissingTensor(name.to_string()))?;
        if t.shape != shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    /// Overwrite `params` from entries under `prefix`, validating shapes.
    pub fn restore_params(&self, prefix: &str, params: &mut ParamStore<f32>) -> Result<()> {
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let name = format!("{prefix}{}", params.name(id));
            let shape = params.get(id).shape().to_vec();
            let t = self.expect(&name, &shape)?;
            *params.get_mut(id) = Tensor::new(shape, t.data.clone()).map_err(CoreError::from)?;
        }
        Ok(())
    }

    pub fn restore_adam(&self, prefix: &str, config: AdamConfig, params: &ParamStore<f32>) -> Result<Adam> {
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (_, name, t) in params.iter() {
            m.push(self.expect(&format!("{prefix}m/{name}"), t.shape())?.data.clone());
            v.push(self.expect(&format!("{prefix}v/{name}"), t.shape())?.data.clone());
        }
        let step = *self
            .meta
            .get(&format!("{prefix}step"))
            .ok_or_else(|| CheckpointError::Malformed(format!("missing {prefix}step")))?;
        Ok(Adam::restore(config, params, step, m, v)?)
    }

    /// Reject a checkpoint written under a different configuration unless
    /// `allow` is set.
    pub fn check_config(&self, expected: &str, allow: bool) -> Result<()> {
        if !allow && self.config_hash != expected {
            return Err(CheckpointError::ConfigMismatch {
                expected: expected.to_string(),
                found: self.config_hash.clone(),
            }
            .into());
        }
        Ok(())
    }
}
