//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `TEMPORA\0`, format version `u32`, config
//! JSON, seed, feature scaling, model parameters, an optional training-state
//! block, and a trailing SHA-256 of everything before it.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::dataset::FeatureScaling;
use crate::error::{Error, Result};
use crate::model::{HybridForecaster, ModelConfig, ParamSet};
use crate::numerics::Tensor;
use crate::objectives::PolicyHead;

use super::optimizer::OptimizerState;
use super::trainer::TrainState;

pub const MAGIC: &[u8; 8] = b"TEMPORA\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Configuration echo; `config["model"]` rebuilds the architecture.
    pub config: serde_json::Value,
    pub seed: u64,
    pub scaling: FeatureScaling,
    /// Parameters of the model to serve (the best-validation snapshot).
    pub params: ParamSet,
    pub state: Option<TrainState>,
}

impl Checkpoint {
    pub fn model_config(&self) -> Result<ModelConfig> {
        let v = self
            .config
            .get("model")
            .ok_or_else(|| Error::InvalidData("checkpoint config has no model section".into()))?;
        Ok(serde_json::from_value(v.clone())?)
    }

    pub fn model(&self) -> Result<HybridForecaster> {
        HybridForecaster::from_params(self.model_config()?, self.params.clone())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.bytes(serde_json::to_string(&self.config)?.as_bytes());
        w.u64(self.seed);
        let s = &self.scaling;
        for v in [s.target_mean, s.target_std, s.price_mean, s.price_std] {
            w.f64(v);
        }
        w.params(&self.params);
        match &self.state {
            None => w.0.push(0),
            Some(st) => {
                w.0.push(1);
                w.u64(st.iteration as u64);
                w.0.push(st.stopped as u8);
                w.f64(st.best_val);
                w.u64(st.best_iteration as u64);
                match st.policy.baseline {
                    None => w.0.push(0),
                    Some(b) => {
                        w.0.push(1);
                        w.f64(b);
                    }
                }
                w.f64(st.policy.decay);
                w.u32(st.policy.grid.len() as u32);
                st.policy.grid.iter().for_each(|g| w.f64(*g));
                w.params(&st.params);
                w.u64(st.optimizer.step);
                for t in st.optimizer.m.iter().chain(&st.optimizer.v) {
                    t.data().iter().for_each(|v| w.f64(*v));
                }
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        Ok(w.0)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let fail = |offset, reason: &str| Error::Checkpoint {
            offset,
            reason: reason.to_string(),
        };
        if buf.len() < MAGIC.len() + 4 + 32 {
            return Err(fail(buf.len(), "file too short"));
        }
        if &buf[..8] != MAGIC {
            return Err(fail(0, "bad magic"));
        }
        let version = u32::from_le_bytes(buf[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(fail(8, &format!("unsupported version {version}, expected {CHECKPOINT_VERSION}")));
        }
        let body_len = buf.len() - 32;
        if Sha256::digest(&buf[..body_len]).as_slice() != &buf[body_len..] {
            return Err(fail(body_len, "checksum mismatch (truncated or corrupt)"));
        }
        let mut r = Reader {
            buf: &buf[..body_len],
            pos: 12,
        };
        let config: serde_json::Value = serde_json::from_slice(r.bytes()?).map_err(|e| fail(12, &e.to_string()))?;
        let seed = r.u64()?;
        let scaling = FeatureScaling {
            target_mean: r.f64()?,
            target_std: r.f64()?,
            price_mean: r.f64()?,
            price_std: r.f64()?,
        };
        let params = r.params()?;
        let state = match r.u8()? {
            0 => None,
            1 => {
                let iteration = r.u64()? as usize;
                let stopped = r.u8()? != 0;
                let best_val = r.f64()?;
                let best_iteration = r.u64()? as usize;
                let baseline = match r.u8()? {
                    0 => None,
                    _ => Some(r.f64()?),
                };
                let decay = r.f64()?;
                let k = r.u32()? as usize;
                let grid = (0..k).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                let current = r.params()?;
                let step = r.u64()?;
                let mut moments = |p: &ParamSet| -> Result<Vec<Tensor>> {
                    p.tensors()
                        .iter()
                        .map(|t| {
                            let data = (0..t.len()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
                            Tensor::new(t.shape().to_vec(), data)
                        })
                        .collect()
                };
                let m = moments(&current)?;
                let v = moments(&current)?;
                Some(TrainState {
                    iteration,
                    params: current,
                    optimizer: OptimizerState { m, v, step },
                    policy: PolicyHead { grid, baseline, decay },
                    best_val,
                    best_iteration,
                    best_params: params.clone(),
                    stopped,
                })
            }
            f => return Err(fail(r.pos - 1, &format!("bad state flag {f}"))),
        };
        if r.pos != r.buf.len() {
            return Err(fail(r.pos, "trailing bytes"));
        }
        Ok(Self {
            config,
            seed,
            scaling,
            params,
            state,
        })
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn params(&mut self, p: &ParamSet) {
        self.u32(p.len() as u32);
        for (name, t) in p.names().iter().zip(p.tensors()) {
            self.bytes(name.as_bytes());
            self.u32(t.shape().len() as u32);
            t.shape().iter().for_each(|d| self.u64(*d as u64));
            t.data().iter().for_each(|v| self.f64(*v));
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint {
                offset: self.pos,
                reason: format!("needed {n} bytes, {} left", self.buf.len() - self.pos),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }
    fn params(&mut self) -> Result<ParamSet> {
        let mut p = ParamSet::new();
        let n = self.u32()?;
        for _ in 0..n {
            let at = self.pos;
            let name = std::str::from_utf8(self.bytes()?)
                .map_err(|_| Error::Checkpoint {
                    offset: at,
                    reason: "parameter name is not UTF-8".into(),
                })?
                .to_string();
            let ndim = self.u32()? as usize;
            let shape = (0..ndim).map(|_| self.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let len: usize = shape.iter().product();
            let at = self.pos;
            let data = (0..len).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint {
                offset: at,
                reason: e.to_string(),
            })?;
            p.push(name, t);
        }
        Ok(p)
    }
}
