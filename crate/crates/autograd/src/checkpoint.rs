//! Length-prefixed binary checkpoint.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic       8 bytes  "TFCKPT\0\0"
//! version     u32      = 1
//! meta_len    u64      length of the metadata blob
//! meta        bytes    opaque to this module (callers store UTF-8 JSON)
//! n_params    u32
//! n_params times:
//!   name_len  u32, name bytes (UTF-8)
//!   rows      u32, cols u32
//!   trainable u8 (0/1)
//!   values    rows*cols f32
//! has_optim   u8 (0/1)
//! if has_optim:
//!   step      u64
//!   lr, beta1, beta2, eps, weight_decay   5 x f64
//!   n_params times: m values (f32, parameter shape), then v values
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::optim::{AdamW, OptimizerState};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"TFCKPT\0\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// Everything a checkpoint file carries.
pub struct CheckpointData {
    pub meta: Vec<u8>,
    pub params: ParamStore<f32>,
    pub optimizer: Option<OptimizerState<f32>>,
}

fn put_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f32s<T: Scalar>(w: &mut impl Write, t: &Tensor<T>) -> io::Result<()> {
    let mut buf = Vec::with_capacity(t.len() * 4);
    for v in t.data() {
        buf.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn write<T: Scalar>(
    w: &mut impl Write,
    meta: &[u8],
    params: &ParamStore<T>,
    optimizer: Option<&OptimizerState<T>>,
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    put_u32(w, VERSION)?;
    w.write_all(&(meta.len() as u64).to_le_bytes())?;
    w.write_all(meta)?;
    put_u32(w, params.len() as u32)?;
    for (_, p) in params.iter() {
        put_u32(w, p.name.len() as u32)?;
        w.write_all(p.name.as_bytes())?;
        put_u32(w, p.value.rows() as u32)?;
        put_u32(w, p.value.cols() as u32)?;
        w.write_all(&[p.trainable as u8])?;
        put_f32s(w, &p.value)?;
    }
    match optimizer {
        None => w.write_all(&[0])?,
        Some(o) => {
            w.write_all(&[1])?;
            w.write_all(&o.step.to_le_bytes())?;
            let h = o.hyper;
            for v in [h.lr, h.beta1, h.beta2, h.eps, h.weight_decay] {
                w.write_all(&v.to_le_bytes())?;
            }
            for (m, v) in o.m.iter().zip(&o.v) {
                put_f32s(w, m)?;
                put_f32s(w, v)?;
            }
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self, n: usize) -> Result<Vec<u8>, CheckpointError> {
        let mut b = vec![0u8; n];
        self.inner.read_exact(&mut b)?;
        Ok(b)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.array::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
    fn tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor<f32>, CheckpointError> {
        let raw = self.bytes(rows * cols * 4)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::from_vec(rows, cols, data).map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

pub fn read(r: impl Read) -> Result<CheckpointData, CheckpointError> {
    let mut r = Reader { inner: r };
    if &r.array::<8>()? != MAGIC {
        return Err(CheckpointError::Magic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::Version(version));
    }
    let meta_len = r.u64()? as usize;
    let meta = r.bytes(meta_len)?;
    let n = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..n {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.bytes(len)?)
            .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let trainable = r.u8()? != 0;
        let value = r.tensor(rows, cols)?;
        let id = params
            .insert(name, value)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        params.set_trainable(id, trainable);
    }
    let optimizer = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let hyper = AdamW {
                lr: r.f64()?,
                beta1: r.f64()?,
                beta2: r.f64()?,
                eps: r.f64()?,
                weight_decay: r.f64()?,
            };
            let mut m = Vec::with_capacity(n);
            let mut v = Vec::with_capacity(n);
            for (_, p) in params.iter() {
                let (rows, cols) = p.value.shape();
                m.push(r.tensor(rows, cols)?);
                v.push(r.tensor(rows, cols)?);
            }
            Some(OptimizerState { hyper, step, m, v })
        }
        b => return Err(CheckpointError::Malformed(format!("optimizer flag {b}"))),
    };
    Ok(CheckpointData {
        meta,
        params,
        optimizer,
    })
}
