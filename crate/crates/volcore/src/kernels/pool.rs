use crate::error::{Result, VolError};
use crate::par;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeom {
    pub channels: usize,
    pub input: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub output: [usize; 3],
}

impl PoolGeom {
    pub fn new(op: &'static str, shape: &[usize], kernel: usize, stride: usize) -> Result<Self> {
        if shape.len() != 5 {
            return Err(VolError::dim(op, "rank", format!("input shape {shape:?}")));
        }
        if kernel == 0 || stride == 0 {
            return Err(VolError::Parameter(format!(
                "{op}: kernel and stride must be >= 1"
            )));
        }
        let mut output = [0; 3];
        for a in 0..3 {
            let e = shape[2 + a];
            if e < kernel {
                return Err(VolError::dim(
                    op,
                    (2 + a).to_string(),
                    format!("extent {e} smaller than kernel {kernel}"),
                ));
            }
            output[a] = (e - kernel) / stride + 1;
        }
        Ok(PoolGeom {
            channels: shape[0] * shape[1],
            input: [shape[2], shape[3], shape[4]],
            kernel,
            stride,
            output,
        })
    }

    pub fn output_shape(&self, shape: &[usize]) -> Vec<usize> {
        vec![
            shape[0],
            shape[1],
            self.output[0],
            self.output[1],
            self.output[2],
        ]
    }

    fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    fn out_volume(&self) -> usize {
        self.output.iter().product()
    }
}

/// Windowed max. Returns the output and, per output voxel, the flat input
/// index that won. Ties go to the lowest linear index.
pub fn maxpool3d_forward<S: Scalar>(g: &PoolGeom, input: &[S]) -> (Vec<S>, Vec<usize>) {
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let [_, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    // (value, argmax) pairs per channel, written in channel chunks.
    let mut packed = vec![(S::zero(), 0usize); g.channels * out_vol];
    par::for_each_chunk_mut(&mut packed, out_vol, |c, dst| {
        let base = c * in_vol;
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = S::neg_infinity();
                    let mut arg = usize::MAX;
                    for kz in 0..g.kernel {
                        for ky in 0..g.kernel {
                            for kx in 0..g.kernel {
                                let iz = z * g.stride + kz;
                                let iy = y * g.stride + ky;
                                let ix = x * g.stride + kx;
                                let idx = base + (iz * ih + iy) * iw + ix;
                                let v = input[idx];
                                // Scan order is increasing linear index within
                                // a channel, so strict `>` keeps the lowest.
                                if v > best || arg == usize::MAX || (v == best && idx < arg) {
                                    best = v;
                                    arg = idx;
                                }
                            }
                        }
                    }
                    dst[(z * oh + y) * ow + x] = (best, arg);
                }
            }
        }
    });
    packed.into_iter().unzip()
}

pub fn maxpool3d_backward<S: Scalar>(g: &PoolGeom, argmax: &[usize], grad_out: &[S]) -> Vec<S> {
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let mut gin = vec![S::zero(); g.channels * in_vol];
    par::for_each_chunk_mut(&mut gin, in_vol, |c, dst| {
        let base = c * in_vol;
        for o in c * out_vol..(c + 1) * out_vol {
            dst[argmax[o] - base] += grad_out[o];
        }
    });
    gin
}

pub fn avgpool3d_forward<S: Scalar>(g: &PoolGeom, input: &[S]) -> Vec<S> {
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let [_, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let scale = S::one() / S::from_usize(g.kernel * g.kernel * g.kernel);
    let mut out = vec![S::zero(); g.channels * out_vol];
    par::for_each_chunk_mut(&mut out, out_vol, |c, dst| {
        let src = &input[c * in_vol..][..in_vol];
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = S::zero();
                    for kz in 0..g.kernel {
                        for ky in 0..g.kernel {
                            let row =
                                ((z * g.stride + kz) * ih + y * g.stride + ky) * iw + x * g.stride;
                            acc += src[row..row + g.kernel].iter().copied().sum::<S>();
                        }
                    }
                    dst[(z * oh + y) * ow + x] = acc * scale;
                }
            }
        }
    });
    out
}

pub fn avgpool3d_backward<S: Scalar>(g: &PoolGeom, grad_out: &[S]) -> Vec<S> {
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let [_, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let scale = S::one() / S::from_usize(g.kernel * g.kernel * g.kernel);
    let mut gin = vec![S::zero(); g.channels * in_vol];
    par::for_each_chunk_mut(&mut gin, in_vol, |c, dst| {
        let src = &grad_out[c * out_vol..][..out_vol];
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let gv = src[(z * oh + y) * ow + x] * scale;
                    for kz in 0..g.kernel {
                        for ky in 0..g.kernel {
                            let row =
                                ((z * g.stride + kz) * ih + y * g.stride + ky) * iw + x * g.stride;
                            for d in &mut dst[row..row + g.kernel] {
                                *d += gv;
                            }
                        }
                    }
                }
            }
        }
    });
    gin
}

/// Nearest-neighbour upsampling by an integer factor on every spatial axis.
pub fn upsample_nearest_forward<S: Scalar>(shape: &[usize], input: &[S], factor: usize) -> Vec<S> {
    let channels = shape[0] * shape[1];
    let [d, h, w] = [shape[2], shape[3], shape[4]];
    let (od, oh, ow) = (d * factor, h * factor, w * factor);
    let in_vol = d * h * w;
    let out_vol = od * oh * ow;
    let mut out = vec![S::zero(); channels * out_vol];
    par::for_each_chunk_mut(&mut out, out_vol, |c, dst| {
        let src = &input[c * in_vol..][..in_vol];
        for z in 0..od {
            for y in 0..oh {
                let srow = &src[((z / factor) * h + y / factor) * w..][..w];
                let drow = &mut dst[(z * oh + y) * ow..][..ow];
                for (x, v) in drow.iter_mut().enumerate() {
                    *v = srow[x / factor];
                }
            }
        }
    });
    out
}

pub fn upsample_nearest_backward<S: Scalar>(
    shape: &[usize],
    grad_out: &[S],
    factor: usize,
) -> Vec<S> {
    let channels = shape[0] * shape[1];
    let [d, h, w] = [shape[2], shape[3], shape[4]];
    let (od, oh, ow) = (d * factor, h * factor, w * factor);
    let in_vol = d * h * w;
    let out_vol = od * oh * ow;
    let mut gin = vec![S::zero(); channels * in_vol];
    par::for_each_chunk_mut(&mut gin, in_vol, |c, dst| {
        let src = &grad_out[c * out_vol..][..out_vol];
        for z in 0..od {
            for y in 0..oh {
                let grow = &src[(z * oh + y) * ow..][..ow];
                let drow = &mut dst[((z / factor) * h + y / factor) * w..][..w];
                for (x, &gv) in grow.iter().enumerate() {
                    drow[x / factor] += gv;
                }
            }
        }
    });
    gin
}
