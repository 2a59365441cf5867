//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "AVGMCKP1"
//! config    u32 length + UTF-8 canonical run-config text
//! sections  u32 count, each:
//!   name    u16 length + UTF-8  ("params" | "targets")
//!   tensors u32 count, each:
//!     name  u16 length + UTF-8
//!     rank  u8, dims u32 each
//!     data  f64 bits, little-endian, row-major
//! ```
//!
//! Round trips are bit-exact: values are stored as raw f64 bits.

use std::fs;
use std::path::Path;

use avgm_core::harness::Learner;
use avgm_core::nn::ParamSet;
use avgm_core::TensorBuf;

use crate::config::RunConfig;
use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"AVGMCKP1";

fn put_str(buf: &mut Vec<u8>, s: &str) {
    let bytes = s.as_bytes();
    buf.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    buf.extend_from_slice(bytes);
}

fn put_tensors(buf: &mut Vec<u8>, ps: &ParamSet) {
    buf.extend_from_slice(&(ps.len() as u32).to_le_bytes());
    for p in ps.iter() {
        put_str(buf, &p.name);
        buf.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
}

pub fn encode(cfg: &RunConfig, learner: &dyn Learner) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    let text = cfg.serialize();
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    buf.extend_from_slice(&2u32.to_le_bytes());
    put_str(&mut buf, "params");
    put_tensors(&mut buf, learner.params());
    put_str(&mut buf, "targets");
    put_tensors(&mut buf, learner.targets());
    buf
}

pub fn save(path: &Path, cfg: &RunConfig, learner: &dyn Learner) -> Result<()> {
    fs::write(path, encode(cfg, learner))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(LabError::validation("truncated checkpoint"));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u16()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| LabError::validation("bad utf-8 in checkpoint"))
    }
}

pub struct Checkpoint {
    pub config: RunConfig,
    pub sections: Vec<(String, Vec<(String, TensorBuf)>)>,
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(LabError::validation(
            "not a checkpoint file (bad magic string)",
        ));
    }
    let clen = r.u32()? as usize;
    let text = String::from_utf8(r.take(clen)?.to_vec())
        .map_err(|_| LabError::validation("bad utf-8 in checkpoint config"))?;
    let config = RunConfig::parse(&text)?;
    let nsections = r.u32()?;
    let mut sections = Vec::new();
    for _ in 0..nsections {
        let sname = r.string()?;
        let ntensors = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..ntensors {
            let name = r.string()?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_bits(u64::from_le_bytes(
                    r.take(8)?.try_into().unwrap(),
                )));
            }
            tensors.push((name, TensorBuf::from_vec(&shape, data)));
        }
        sections.push((sname, tensors));
    }
    Ok(Checkpoint { config, sections })
}

pub fn load_file(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}

/// Copies a section's tensors into a parameter set, by name, insisting on
/// exact shape agreement. Mismatches name the offending tensor.
pub fn restore_section(ckpt: &Checkpoint, section: &str, ps: &mut ParamSet) -> Result<()> {
    let (_, tensors) = ckpt
        .sections
        .iter()
        .find(|(n, _)| n == section)
        .ok_or_else(|| LabError::validation(format!("checkpoint has no '{section}' section")))?;
    if tensors.len() != ps.len() {
        return Err(LabError::validation(format!(
            "checkpoint section '{section}' has {} tensors, the network has {}",
            tensors.len(),
            ps.len()
        )));
    }
    for (name, value) in tensors {
        let id = ps.find(name).ok_or_else(|| {
            LabError::validation(format!("checkpoint tensor '{name}' has no matching parameter"))
        })?;
        if ps.value(id).shape() != value.shape() {
            return Err(LabError::validation(format!(
                "tensor '{name}' has shape {:?} in the checkpoint but {:?} in the network",
                value.shape(),
                ps.value(id).shape()
            )));
        }
        *ps.value_mut(id) = value.clone();
    }
    Ok(())
}

/// Rebuilds a learner (with its target copies) from a checkpoint.
pub fn restore_learner(ckpt: &Checkpoint) -> Result<Box<dyn Learner>> {
    let env = crate::build::build_env(&ckpt.config)?;
    let dims = avgm_core::env::EnvDims::of(env.as_ref());
    let mut learner = crate::build::build_learner(&ckpt.config, dims)?;
    restore_section(ckpt, "params", learner.params_mut())?;
    restore_section(ckpt, "targets", learner.targets_mut())?;
    Ok(learner)
}
