//! Scalar volumes and the VOLB container.
//!
//! VOLB layout (little endian): magic `VOLB`, `u16` version 1, three `u32`
//! extents `(D, H, W)`, `u8` dtype (1 = f32), six zero bytes, then `D*H*W`
//! `f32` voxels in row-major order with W fastest.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use volcore::{Scalar, Tensor};

use crate::error::{Error, Result};

pub const VOLB_MAGIC: &[u8; 4] = b"VOLB";
pub const VOLB_VERSION: u16 = 1;
pub const VOLB_HEADER_LEN: usize = 25;
const DTYPE_F32: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    shape: [usize; 3],
    voxels: Vec<f32>,
    /// Source scan id, when known.
    pub meta: Option<String>,
}

impl Volume {
    pub fn new(shape: [usize; 3], voxels: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != voxels.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} voxels, got {}",
                voxels.len()
            )));
        }
        Ok(Volume {
            shape,
            voxels,
            meta: None,
        })
    }

    pub fn filled(shape: [usize; 3], value: f32) -> Self {
        Volume {
            shape,
            voxels: vec![value; shape.iter().product()],
            meta: None,
        }
    }

    pub fn from_fn(shape: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut voxels = Vec::with_capacity(shape.iter().product());
        for z in 0..shape[0] {
            for y in 0..shape[1] {
                for x in 0..shape[2] {
                    voxels.push(f(z, y, x));
                }
            }
        }
        Volume {
            shape,
            voxels,
            meta: None,
        }
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = Some(meta.into());
        self
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn voxels_mut(&mut self) -> &mut [f32] {
        &mut self.voxels
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.shape[1] + y) * self.shape[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> f32 {
        self.voxels[self.index(z, y, x)]
    }

    /// Edge length when all three extents agree.
    pub fn cubic_edge(&self) -> Option<usize> {
        (self.shape[0] == self.shape[1] && self.shape[1] == self.shape[2]).then_some(self.shape[0])
    }

    pub fn is_finite(&self) -> bool {
        self.voxels.iter().all(|v| v.is_finite())
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.voxels
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// `[1, 1, D, H, W]` tensor for the model.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let data = self.voxels.iter().map(|&v| S::from_f64(v as f64)).collect();
        Tensor::new(
            vec![1, 1, self.shape[0], self.shape[1], self.shape[2]],
            data,
        )
        .expect("volume buffer matches its shape")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(VOLB_HEADER_LEN + 4 * self.voxels.len());
        out.extend_from_slice(VOLB_MAGIC);
        out.extend_from_slice(&VOLB_VERSION.to_le_bytes());
        for &d in &self.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.push(DTYPE_F32);
        out.extend_from_slice(&[0u8; 6]);
        for v in &self.voxels {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |offset: usize, detail: String| Error::Format {
            offset: offset as u64,
            detail,
        };
        if bytes.len() < VOLB_HEADER_LEN {
            return Err(fail(
                bytes.len(),
                format!(
                    "truncated header: {} of {VOLB_HEADER_LEN} bytes",
                    bytes.len()
                ),
            ));
        }
        if &bytes[0..4] != VOLB_MAGIC {
            return Err(fail(0, "bad magic, expected VOLB".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VOLB_VERSION {
            return Err(fail(4, format!("unsupported version {version}")));
        }
        let mut shape = [0usize; 3];
        for (i, d) in shape.iter_mut().enumerate() {
            let at = 6 + 4 * i;
            *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        }
        if bytes[18] != DTYPE_F32 {
            return Err(fail(18, format!("unsupported dtype {}", bytes[18])));
        }
        if let Some(pos) = bytes[19..25].iter().position(|&b| b != 0) {
            return Err(fail(19 + pos, "reserved bytes must be zero".into()));
        }
        let payload = &bytes[VOLB_HEADER_LEN..];
        let n: usize = shape.iter().product();
        if !payload.len().is_multiple_of(4) {
            let whole = payload.len() / 4;
            if whole < n {
                return Err(fail(
                    VOLB_HEADER_LEN + payload.len(),
                    format!("truncated payload: {} of {} bytes", payload.len(), n * 4),
                ));
            }
            return Err(fail(
                VOLB_HEADER_LEN + whole * 4,
                "payload is not a whole number of f32".into(),
            ));
        }
        let found = payload.len() / 4;
        if found < n {
            return Err(fail(
                VOLB_HEADER_LEN + payload.len(),
                format!("truncated payload: header declares {n} voxels ({shape:?}), found {found}"),
            ));
        }
        if found > n {
            return Err(fail(
                VOLB_HEADER_LEN + n * 4,
                format!(
                    "shape/payload mismatch: header declares {n} voxels ({shape:?}), found {found}"
                ),
            ));
        }
        let voxels = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Volume::new(shape, voxels)
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let mut bytes = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    Volume::from_bytes(&bytes)
}

pub fn write_volume(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(&volume.to_bytes())?;
    w.flush()?;
    Ok(())
}
