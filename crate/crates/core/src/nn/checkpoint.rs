//! Binary checkpoint.
//!
//! ```text
//! magic      8 bytes  "TXIDNET1"
//! flags      u32      bit 0: inputs are RMS-normalized
//! input_len  u32
//! in_chans   u32
//! n_conv     u32, then (channels, kernel, pool) u32 each
//! n_dense    u32, then each width u32
//! tensors    f32, declaration order (conv w, b ..., dense w, b ...)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{Architecture, ConvSpec, NetworkParams};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TXIDNET1";
const FLAG_NORMALIZE: u32 = 1;
/// Guards against absurd headers before allocating.
const MAX_DIM: u32 = 1 << 20;

/// Trained parameters plus the input convention they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub normalize: bool,
}

pub fn encode(ckpt: &Checkpoint) -> Vec<u8> {
    let arch = &ckpt.params.arch;
    let mut out = Vec::with_capacity(64 + 4 * ckpt.params.num_params());
    out.extend_from_slice(MAGIC);
    let put = |v: usize, out: &mut Vec<u8>| out.extend_from_slice(&(v as u32).to_le_bytes());
    put(
        if ckpt.normalize {
            FLAG_NORMALIZE as usize
        } else {
            0
        },
        &mut out,
    );
    put(arch.input_len, &mut out);
    put(arch.input_channels, &mut out);
    put(arch.conv.len(), &mut out);
    for c in &arch.conv {
        put(c.channels, &mut out);
        put(c.kernel, &mut out);
        put(c.pool, &mut out);
    }
    put(arch.dense.len(), &mut out);
    for &w in &arch.dense {
        put(w, &mut out);
    }
    for t in ckpt.params.tensors() {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn dim(&mut self) -> Result<usize> {
        let v = self.u32()?;
        if v > MAX_DIM {
            return Err(bad(format!("dimension {v} out of range")));
        }
        Ok(v as usize)
    }
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        detail: detail.into(),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let flags = r.u32()?;
    if flags & !FLAG_NORMALIZE != 0 {
        return Err(bad(format!("unknown flags {flags:#x}")));
    }
    let input_len = r.dim()?;
    let input_channels = r.dim()?;
    let n_conv = r.dim()?;
    let mut conv = Vec::new();
    for _ in 0..n_conv.min(64) {
        conv.push(ConvSpec {
            channels: r.dim()?,
            kernel: r.dim()?,
            pool: r.dim()?,
        });
    }
    if conv.len() != n_conv {
        return Err(bad("too many conv layers"));
    }
    let n_dense = r.dim()?;
    if n_dense > 64 {
        return Err(bad("too many dense layers"));
    }
    let dense = (0..n_dense).map(|_| r.dim()).collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        input_len,
        input_channels,
        conv,
        dense,
    };
    let mut params = NetworkParams::<f32>::zeros(&arch).map_err(|e| bad(e.to_string()))?;
    let expected = params.num_params() * 4;
    if bytes.len() - r.pos != expected {
        return Err(bad(format!(
            "expected {expected} tensor bytes, found {}",
            bytes.len() - r.pos
        )));
    }
    for t in params.tensors_mut() {
        for v in t.iter_mut() {
            let b = r.take(4)?;
            *v = f32::from_le_bytes([b[0], b[1], b[2], b[3]]);
        }
    }
    if !params.is_finite() {
        return Err(bad("non-finite parameter"));
    }
    Ok(Checkpoint {
        params,
        normalize: flags & FLAG_NORMALIZE != 0,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
