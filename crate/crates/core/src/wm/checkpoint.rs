//! World-model checkpoints.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic        4 bytes  "CWM1"
//! version      u16      1
//! config_hash  32 bytes
//! seed         u64
//! step         u64
//! activation   u8       0 = tanh
//! zero_output  u8
//! n_hidden     u16, then n_hidden × u32 hidden sizes
//! input, output u32
//! norm         mean, std, delta: 3 × 6 × f32
//! n_params     u32, then n_params × f32
//! ```
//!
//! A checkpoint holds weights rounded to single precision, so what is saved is
//! exactly what was evaluated in memory.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::mlp::{param_count, Mlp};
use super::{Activation, Arch, ForwardModel, Normalization, WMParams, FEATURES, INPUT};
use crate::codec::{Reader, Writer};
use crate::sim::SceneState;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CWM1";
pub const VERSION: u16 = 1;
const KIND: &str = "checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub params: WMParams,
}

fn round(v: f64) -> f64 {
    v as f32 as f64
}

impl Checkpoint {
    /// Single-precision copy of the model, without optimizer state.
    pub fn snapshot(wm: &WMParams) -> Checkpoint {
        let mut net = wm.net.clone();
        net.params.iter_mut().for_each(|p| *p = round(*p));
        let norm = Normalization {
            mean: wm.norm.mean.map(round),
            std: wm.norm.std.map(round),
            delta: wm.norm.delta.map(round),
        };
        Checkpoint {
            step: wm.train_steps,
            params: WMParams {
                arch: wm.arch.clone(),
                net,
                norm,
                train_steps: wm.train_steps,
                seed: wm.seed,
                adam: Default::default(),
            },
        }
    }

    /// Short content hash identifying the weights.
    pub fn fingerprint(&self) -> String {
        hex::encode(&Sha256::digest(encode(self, &[0; 32]))[..8])
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }
}

impl ForwardModel for Checkpoint {
    fn predict(&self, state: &SceneState) -> Result<SceneState> {
        self.params.predict(state)
    }

    fn fingerprint(&self) -> String {
        Checkpoint::fingerprint(self)
    }
}

pub fn encode(ckpt: &Checkpoint, config_hash: &[u8; 32]) -> Vec<u8> {
    let p = &ckpt.params;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.bytes(config_hash);
    w.u64(p.seed);
    w.u64(ckpt.step);
    w.u8(match p.arch.activation {
        Activation::Tanh => 0,
    });
    w.u8(p.arch.zero_output as u8);
    w.u16(p.arch.hidden.len() as u16);
    for &h in &p.arch.hidden {
        w.u32(h as u32);
    }
    w.u32(p.net.input_size() as u32);
    w.u32(p.net.output_size() as u32);
    for arr in [&p.norm.mean, &p.norm.std, &p.norm.delta] {
        for &v in arr {
            w.f32(v as f32);
        }
    }
    w.u32(p.net.params.len() as u32);
    for &v in &p.net.params {
        w.f32(v as f32);
    }
    w.buf
}

fn f32_array(r: &mut Reader) -> Result<[f64; FEATURES]> {
    let mut out = [0.0; FEATURES];
    for v in &mut out {
        *v = r.f32()? as f64;
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(Checkpoint, [u8; 32])> {
    let mut r = Reader::new(KIND, bytes);
    if r.take(4)? != MAGIC {
        return Err(Error::format(KIND, "bad magic"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::Version {
            kind: KIND,
            found: version as u32,
            supported: VERSION as u32,
        });
    }
    let hash = r.array::<32>()?;
    let seed = r.u64()?;
    let step = r.u64()?;
    let activation = match r.u8()? {
        0 => Activation::Tanh,
        a => return Err(Error::format(KIND, format!("unknown activation id {a}"))),
    };
    let zero_output = match r.u8()? {
        0 => false,
        1 => true,
        _ => return Err(Error::format(KIND, "bad zero_output flag")),
    };
    let n_hidden = r.u16()? as usize;
    r.ensure(n_hidden, 4)?;
    let hidden: Vec<usize> = (0..n_hidden)
        .map(|_| r.u32().map(|h| h as usize))
        .collect::<Result<_>>()?;
    let (input, output) = (r.u32()? as usize, r.u32()? as usize);
    if input != INPUT || output != FEATURES {
        return Err(Error::format(
            KIND,
            format!("unexpected network shape {input} → {output}"),
        ));
    }
    let arch = Arch {
        hidden,
        activation,
        zero_output,
    };
    let sizes = arch
        .sizes(INPUT, FEATURES)
        .map_err(|e| Error::format(KIND, e.to_string()))?;
    let norm = Normalization {
        mean: f32_array(&mut r)?,
        std: f32_array(&mut r)?,
        delta: f32_array(&mut r)?,
    };
    norm.validate()
        .map_err(|e| Error::format(KIND, e.to_string()))?;
    let n = r.count(4)?;
    if sizes.iter().any(|&s| s > 1 << 20) || n != param_count(&sizes) {
        return Err(Error::format(
            KIND,
            "parameter count does not match architecture",
        ));
    }
    let mut net = Mlp::zeros(&sizes)?;
    for p in &mut net.params {
        let v = r.f32()?;
        if !v.is_finite() {
            return Err(Error::format(KIND, "non-finite weight"));
        }
        *p = v as f64;
    }
    r.finish()?;
    let ckpt = Checkpoint {
        step,
        params: WMParams {
            arch,
            net,
            norm,
            train_steps: step,
            seed,
            adam: Default::default(),
        },
    };
    Ok((ckpt, hash))
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint, config_hash: &[u8; 32]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(ckpt, config_hash)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, [u8; 32])> {
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
