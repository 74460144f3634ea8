//! Versioned binary container for named parameter tensors and optional Adam
//! state. All integers and floats are little-endian.
//!
//! ```text
//! magic      8 bytes  "VRUCKPT\0"
//! version    u32      = 1
//! meta_len   u32      followed by meta_len bytes of UTF-8 (free-form, JSON by convention)
//! n_tensors  u32      followed by n_tensors tensor records
//! has_adam   u8       0 or 1
//! [if has_adam]
//!   t        u64
//!   lr, beta1, beta2, eps   f64 each
//!   n_moments u32     followed by n_moments tensor records for m, then n_moments for v
//!
//! tensor record:
//!   name_len u32, name bytes (UTF-8)
//!   ndim     u32, dims u64 × ndim
//!   data     f64 × prod(dims)
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{NnError, Result};
use crate::optim::{AdamConfig, AdamState};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"VRUCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<(String, Tensor)>,
    pub optimizer: Option<AdamState>,
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, metadata: impl Into<String>, optimizer: Option<&AdamState>) -> Self {
        Checkpoint {
            metadata: metadata.into(),
            tensors: store.iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Copies tensors into `store` by name. Every parameter of the store must
    /// be present with a matching shape.
    pub fn restore_into(&self, store: &mut ParamStore) -> Result<()> {
        for p in store.iter_mut() {
            let (_, t) = self
                .tensors
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {}", p.name)))?;
            if t.shape() != p.value.shape() {
                return Err(NnError::Checkpoint(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        write_bytes(w, self.metadata.as_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            write_tensor(w, name, t)?;
        }
        match &self.optimizer {
            None => w.write_all(&[0u8])?,
            Some(adam) => {
                w.write_all(&[1u8])?;
                w.write_all(&adam.t.to_le_bytes())?;
                let c = adam.config;
                for f in [c.lr, c.beta1, c.beta2, c.eps] {
                    w.write_all(&f.to_le_bytes())?;
                }
                w.write_all(&(adam.m.len() as u32).to_le_bytes())?;
                let names = self.tensors.iter().map(|(n, _)| n.as_str());
                for (t, name) in adam.m.iter().zip(names.clone()) {
                    write_tensor(w, name, t)?;
                }
                for (t, name) in adam.v.iter().zip(names) {
                    write_tensor(w, name, t)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let metadata = String::from_utf8(read_bytes(r)?)
            .map_err(|_| NnError::Checkpoint("metadata is not UTF-8".into()))?;
        let n = read_u32(r)? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            tensors.push(read_tensor(r)?);
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let optimizer = match flag[0] {
            0 => None,
            1 => {
                let mut b8 = [0u8; 8];
                r.read_exact(&mut b8)?;
                let t = u64::from_le_bytes(b8);
                let mut f = [0.0; 4];
                for v in &mut f {
                    r.read_exact(&mut b8)?;
                    *v = f64::from_le_bytes(b8);
                }
                let k = read_u32(r)? as usize;
                let m = (0..k).map(|_| read_tensor(r).map(|(_, t)| t)).collect::<Result<Vec<_>>>()?;
                let v = (0..k).map(|_| read_tensor(r).map(|(_, t)| t)).collect::<Result<Vec<_>>>()?;
                Some(AdamState {
                    m,
                    v,
                    t,
                    config: AdamConfig {
                        lr: f[0],
                        beta1: f[1],
                        beta2: f[2],
                        eps: f[3],
                    },
                })
            }
            other => return Err(NnError::Checkpoint(format!("bad optimizer flag {other}"))),
        };
        Ok(Checkpoint {
            metadata,
            tensors,
            optimizer,
        })
    }
}

fn write_bytes(w: &mut impl Write, b: &[u8]) -> Result<()> {
    w.write_all(&(b.len() as u32).to_le_bytes())?;
    w.write_all(b)?;
    Ok(())
}

fn write_tensor(w: &mut impl Write, name: &str, t: &Tensor) -> Result<()> {
    write_bytes(w, name.as_bytes())?;
    w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read) -> Result<Vec<u8>> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_tensor(r: &mut impl Read) -> Result<(String, Tensor)> {
    let name = String::from_utf8(read_bytes(r)?)
        .map_err(|_| NnError::Checkpoint("tensor name is not UTF-8".into()))?;
    let ndim = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(ndim);
    let mut b8 = [0u8; 8];
    for _ in 0..ndim {
        r.read_exact(&mut b8)?;
        shape.push(u64::from_le_bytes(b8) as usize);
    }
    let len: usize = shape.iter().product();
    let mut raw = vec![0u8; len * 8];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((name, Tensor::from_vec(&shape, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_foreign_bytes() {
        let bytes = b"NOTACKPT\x01\0\0\0".to_vec();
        assert!(Checkpoint::read_from(&mut bytes.as_slice()).is_err());
    }

    #[test]
    fn restore_checks_shapes() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::zeros(&[2, 3]));
        let ck = Checkpoint::from_store(&a, "{}", None);
        let mut b = ParamStore::new();
        b.add("w", Tensor::zeros(&[3, 2]));
        assert!(ck.restore_into(&mut b).is_err());
        let mut c = ParamStore::new();
        c.add("other", Tensor::zeros(&[2, 3]));
        assert!(ck.restore_into(&mut c).is_err());
    }
}
