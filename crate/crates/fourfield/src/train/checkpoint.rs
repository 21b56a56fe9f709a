//! Versioned binary checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"4DGN"
//! version u32
//! step    u64
//! rng     seed[32] · word_pos u128 · stream u64
//! config  u32 length + UTF-8 key=value text
//! tensors u32 count, then per entry (sorted by name):
//!         u32 name_len · name · u8 dtype (0 = f64)
//!         u32 ndim · u64 extents · f64 payload
//! ```
//!
//! Network weights are stored as `p.<name>`, optimizer moments as
//! `adam.m.<name>` / `adam.v.<name>` / `adam.t.<name>`. Save, load, and
//! save again produces byte-identical files.

use super::adam::{Adam, Moments};
use super::{Model, Trainer};
use crate::config::TrainConfig;
use crate::error::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"4DGN";
pub const VERSION: u32 = 1;

/// Decoded checkpoint container.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub step: u64,
    pub rng_seed: [u8; 32],
    pub rng_word_pos: u128,
    pub rng_stream: u64,
    pub config_text: String,
    pub tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.rng_seed);
        out.extend_from_slice(&self.rng_word_pos.to_le_bytes());
        out.extend_from_slice(&self.rng_stream.to_le_bytes());
        let cfg = self.config_text.as_bytes();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, (shape, values)) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(0u8); // dtype f64
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::CorruptCheckpoint(format!(
                "bad magic {magic:?}, expected {MAGIC:?}"
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: VERSION,
            });
        }
        let step = r.u64()?;
        let mut rng_seed = [0u8; 32];
        rng_seed.copy_from_slice(r.take(32)?);
        let rng_word_pos = r.u128()?;
        let rng_stream = r.u64()?;
        let cfg_len = r.u32()? as usize;
        let config_text = String::from_utf8(r.take(cfg_len)?.to_vec())
            .map_err(|_| Error::CorruptCheckpoint("config block is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
            let dtype = r.take(1)?[0];
            if dtype != 0 {
                return Err(Error::CorruptCheckpoint(format!(
                    "unknown dtype {dtype} for `{name}`"
                )));
            }
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut values = Vec::with_capacity(n);
            for _ in 0..n {
                values.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            tensors.insert(name, (shape, values));
        }
        Ok(Checkpoint {
            version,
            step,
            rng_seed,
            rng_word_pos,
            rng_stream,
            config_text,
            tensors,
        })
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "truncated at byte {} (wanted {n} more of {})",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u128(&mut self) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
    }
}

/// Snapshot a trainer into a checkpoint container.
pub fn snapshot(trainer: &Trainer) -> Checkpoint {
    let mut tensors = BTreeMap::new();
    for p in trainer.model.params() {
        tensors.insert(format!("p.{}", p.name), (p.shape.clone(), p.values.clone()));
    }
    for (name, m) in &trainer.adam.state {
        let shape = vec![m.m.len()];
        tensors.insert(format!("adam.m.{name}"), (shape.clone(), m.m.clone()));
        tensors.insert(format!("adam.v.{name}"), (shape, m.v.clone()));
        tensors.insert(
            format!("adam.t.{name}"),
            (vec![1], vec![m.step as f64]),
        );
    }
    Checkpoint {
        version: VERSION,
        step: trainer.step,
        rng_seed: trainer.rng.get_seed(),
        rng_word_pos: trainer.rng.get_word_pos(),
        rng_stream: trainer.rng.get_stream(),
        config_text: trainer.cfg.serialize(),
        tensors,
    }
}

pub fn save_trainer(path: &Path, trainer: &Trainer) -> Result<()> {
    std::fs::write(path, snapshot(trainer).to_bytes()).map_err(|e| Error::io(path, e))
}

/// Restore a trainer: rebuild networks from the embedded config, then
/// overwrite weights, optimizer state, rng position and step counter.
pub fn load_trainer(path: &Path) -> Result<Trainer> {
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = Checkpoint::from_bytes(&data)?;
    trainer_from_checkpoint(&ckpt)
}

pub fn trainer_from_checkpoint(ckpt: &Checkpoint) -> Result<Trainer> {
    let cfg = TrainConfig::parse(&ckpt.config_text)?;
    let mut model = Model::init(&cfg);
    for p in model.params_mut() {
        let key = format!("p.{}", p.name);
        let (shape, values) = ckpt
            .tensors
            .get(&key)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor `{key}`")))?;
        if *shape != p.shape {
            return Err(Error::CheckpointShape {
                name: p.name.clone(),
                found: shape.clone(),
                expected: p.shape.clone(),
            });
        }
        p.values.clone_from(values);
    }
    let mut adam = Adam::new();
    for (key, (_, values)) in &ckpt.tensors {
        if let Some(name) = key.strip_prefix("adam.m.") {
            let v = ckpt
                .tensors
                .get(&format!("adam.v.{name}"))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing adam.v.{name}")))?;
            let t = ckpt
                .tensors
                .get(&format!("adam.t.{name}"))
                .ok_or_else(|| Error::CorruptCheckpoint(format!("missing adam.t.{name}")))?;
            adam.state.insert(
                name.to_string(),
                Moments {
                    m: values.clone(),
                    v: v.1.clone(),
                    step: t.1[0] as u64,
                },
            );
        }
    }
    let mut rng = ChaCha8Rng::from_seed(ckpt.rng_seed);
    rng.set_stream(ckpt.rng_stream);
    rng.set_word_pos(ckpt.rng_word_pos);
    Ok(Trainer {
        cfg,
        model,
        adam,
        rng,
        step: ckpt.step,
    })
}
