//! Flat binary weight files.
//!
//! Layout, all little-endian: the 5 ASCII bytes `REAL1`; a `u32` count of
//! layer sizes; that many `u32` sizes; then for each layer its `(in, out)`
//! weight matrix row-major followed by its `out` biases, as `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::numkit::{Matrix, Mlp, OutputHead};
use crate::{Error, Result};

const MAGIC: &[u8; 5] = b"REAL1";

pub fn encode_weights(net: &Mlp) -> Vec<u8> {
    let sizes = net.sizes();
    let mut out = Vec::with_capacity(9 + 4 * sizes.len() + 8 * net.num_params());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        out.extend_from_slice(&(s as u32).to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_weights(bytes: &[u8], head: OutputHead) -> Result<Mlp> {
    let mut r = bytes;
    let mut magic = [0u8; 5];
    read_exact(&mut r, &mut magic)?;
    if &magic != MAGIC {
        return Err(Error::BadWeights("bad magic".into()));
    }
    let count = read_u32(&mut r)? as usize;
    if !(2..=1024).contains(&count) {
        return Err(Error::BadWeights(format!(
            "implausible layer count {count}"
        )));
    }
    let sizes = (0..count)
        .map(|_| read_u32(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = Vec::with_capacity(count - 1);
    let mut biases = Vec::with_capacity(count - 1);
    for pair in sizes.windows(2) {
        let w = (0..pair[0] * pair[1])
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let b = (0..pair[1])
            .map(|_| read_f64(&mut r))
            .collect::<Result<Vec<_>>>()?;
        weights
            .push(Matrix::new(pair[0], pair[1], w).map_err(|e| Error::BadWeights(e.to_string()))?);
        biases.push(b);
    }
    if !r.is_empty() {
        return Err(Error::BadWeights(format!("{} trailing bytes", r.len())));
    }
    Mlp::from_parts(weights, biases, head).map_err(|e| Error::BadWeights(e.to_string()))
}

pub fn save_weights(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&encode_weights(net))
        .map_err(|e| io_err(path, e))
}

pub fn load_weights(path: impl AsRef<Path>, head: OutputHead) -> Result<Mlp> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_weights(&bytes, head)
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::BadWeights("truncated".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut &[u8]) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}
