//! VPXW parameter checkpoints.
//!
//! Layout (little endian): magic `VPXW`, `u16` version, `u32` tensor count,
//! then per tensor a `u32`-length-prefixed UTF-8 name, a `u32`-count-prefixed
//! list of `u32` extents, and the `f32` payload.

use std::io::{Read, Write};

use crate::error::{Result, VolError};
use crate::params::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"VPXW";
pub const VERSION: u16 = 1;

pub fn write_checkpoint<S: Scalar, W: Write>(store: &ParameterStore<S>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for p in store.iter() {
        let name = p.name.as_bytes();
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name)?;
        let shape = p.tensor.shape();
        w.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.tensor.numel() * 4);
        for v in p.tensor.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(VolError::Format {
                offset: self.pos as u64,
                detail: format!(
                    "truncated {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Vec<(String, Tensor<f32>)>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if c.take(4, "magic")? != MAGIC {
        return Err(VolError::Format {
            offset: 0,
            detail: "bad magic, expected VPXW".into(),
        });
    }
    let version = u16::from_le_bytes(c.take(2, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(VolError::Format {
            offset: 4,
            detail: format!("unsupported version {version}"),
        });
    }
    let count = c.u32("tensor count")?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_at = c.pos;
        let len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| VolError::Format {
                offset: name_at as u64,
                detail: "name is not UTF-8".into(),
            })?
            .to_string();
        let ndim = c.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32("extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = c.take(n * 4, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push((name, Tensor::new(shape, data)?));
    }
    if c.pos != bytes.len() {
        return Err(VolError::Format {
            offset: c.pos as u64,
            detail: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamKind;
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(3, 0);
        let mut store = ParameterStore::<f32>::new();
        store
            .insert(
                "a.weight",
                Tensor::randn(&[2, 3, 3, 3, 3], 1.0, &mut rng),
                ParamKind::Learnable,
            )
            .unwrap();
        store
            .insert(
                "a.bias",
                Tensor::randn(&[2], 1.0, &mut rng),
                ParamKind::Learnable,
            )
            .unwrap();
        store
            .insert("bn.running_var", Tensor::full(&[2], 1.0), ParamKind::Buffer)
            .unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&store, &mut bytes).unwrap();
        let entries = read_checkpoint(bytes.as_slice()).unwrap();
        let mut copy = store.clone();
        copy.iter_mut().for_each(|p| p.tensor.data_mut().fill(0.0));
        copy.load(entries).unwrap();
        for (a, b) in store.iter().zip(copy.iter()) {
            let ab: Vec<u32> = a.tensor.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u32> = b.tensor.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
        let mut again = Vec::new();
        write_checkpoint(&copy, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn truncation_reports_offset() {
        let mut store = ParameterStore::<f32>::new();
        store
            .insert("w", Tensor::full(&[4], 1.0), ParamKind::Learnable)
            .unwrap();
        let mut bytes = Vec::new();
        write_checkpoint(&store, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 3);
        // header 10, name len 4 + 1, rank 4 + extent 4 => payload starts at 23
        match read_checkpoint(bytes.as_slice()) {
            Err(VolError::Format { offset, .. }) => assert_eq!(offset, 23),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_magic() {
        assert!(matches!(
            read_checkpoint(&b"XXXX\x01\x00\x00\x00\x00\x00"[..]),
            Err(VolError::Format { offset: 0, .. })
        ));
    }
}
