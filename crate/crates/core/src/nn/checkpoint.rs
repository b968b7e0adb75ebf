//! Binary parameter checkpoint.
//!
//! Layout, all integers little-endian:
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"SYLLNET\0"`  |
//! | version      | u32 (= 1)       |
//! | head         | u8 (0 softmax, 1 sigmoid) |
//! | input_size   | u32             |
//! | n_layers     | u32             |
//! | hidden sizes | u32 x n_layers  |
//! | output_size  | u32             |
//! | n_params     | u64             |
//! | theta        | f64 x n_params  |

use std::io::{Read, Write};

use super::{Head, Model, NetSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SYLLNET\0";
pub const VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &Model, w: &mut W) -> Result<()> {
    let spec = model.spec();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[match spec.head {
        Head::Softmax => 0u8,
        Head::Sigmoid => 1u8,
    }])?;
    w.write_all(&(spec.input_size as u32).to_le_bytes())?;
    w.write_all(&(spec.hidden_sizes.len() as u32).to_le_bytes())?;
    for h in &spec.hidden_sizes {
        w.write_all(&(*h as u32).to_le_bytes())?;
    }
    w.write_all(&(spec.output_size as u32).to_le_bytes())?;
    write_f64s(w, model.params())
}

pub fn read_model<R: Read>(r: &mut R) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a model checkpoint".into()));
    }
    let version = read_u32(r)?;
    if version > VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is newer than supported {VERSION}"
        )));
    }
    let mut head = [0u8; 1];
    r.read_exact(&mut head)?;
    let head = match head[0] {
        0 => Head::Softmax,
        1 => Head::Sigmoid,
        h => return Err(Error::Checkpoint(format!("unknown head tag {h}"))),
    };
    let input_size = read_u32(r)? as usize;
    let n_layers = read_u32(r)? as usize;
    let hidden_sizes = (0..n_layers)
        .map(|_| read_u32(r).map(|h| h as usize))
        .collect::<Result<Vec<_>>>()?;
    let output_size = read_u32(r)? as usize;
    let theta = read_f64s(r)?;
    Model::from_params(NetSpec::new(input_size, hidden_sizes, output_size, head), theta)
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    w.write_all(&(xs.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f64s<R: Read>(r: &mut R) -> Result<Vec<f64>> {
    let mut n = [0u8; 8];
    r.read_exact(&mut n)?;
    let n = u64::from_le_bytes(n) as usize;
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
