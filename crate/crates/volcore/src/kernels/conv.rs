//! Direct 3D cross-correlation over `[N, C, D, H, W]` buffers.

use crate::error::{Result, VolError};
use crate::par;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub cin: usize,
    pub cout: usize,
    pub input: [usize; 3],
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output: [usize; 3],
}

impl ConvGeom {
    pub fn new(
        input_shape: &[usize],
        weight_shape: &[usize],
        bias_len: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        if input_shape.len() != 5 {
            return Err(VolError::dim(
                "conv3d",
                "rank",
                format!("input shape {input_shape:?}"),
            ));
        }
        if weight_shape.len() != 5 {
            return Err(VolError::dim(
                "conv3d",
                "rank",
                format!("weight shape {weight_shape:?}"),
            ));
        }
        let k = weight_shape[2];
        if weight_shape[3] != k || weight_shape[4] != k {
            return Err(VolError::dim(
                "conv3d",
                "kernel",
                format!("kernel must be cubic, got {weight_shape:?}"),
            ));
        }
        if k != 1 && k != 3 {
            return Err(VolError::Parameter(format!(
                "conv3d kernel {k} not in {{1, 3}}"
            )));
        }
        if stride == 0 {
            return Err(VolError::Parameter("conv3d stride must be >= 1".into()));
        }
        if weight_shape[1] != input_shape[1] {
            return Err(VolError::dim(
                "conv3d",
                "1 (channels)",
                format!(
                    "input has {} channels, weight expects {}",
                    input_shape[1], weight_shape[1]
                ),
            ));
        }
        if bias_len != weight_shape[0] {
            return Err(VolError::dim(
                "conv3d",
                "0 (bias)",
                format!(
                    "bias has {bias_len} entries for {} filters",
                    weight_shape[0]
                ),
            ));
        }
        let mut output = [0; 3];
        for (a, out) in output.iter_mut().enumerate() {
            let padded = input_shape[2 + a] + 2 * padding;
            if padded < k {
                return Err(VolError::dim(
                    "conv3d",
                    (2 + a).to_string(),
                    format!("padded extent {padded} smaller than kernel {k}"),
                ));
            }
            *out = (padded - k) / stride + 1;
        }
        Ok(ConvGeom {
            batch: input_shape[0],
            cin: input_shape[1],
            cout: weight_shape[0],
            input: [input_shape[2], input_shape[3], input_shape[4]],
            kernel: k,
            stride,
            padding,
            output,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![
            self.batch,
            self.cout,
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

    /// Input coordinate for output index `o` and kernel tap `k`, if in bounds.
    #[inline]
    fn source(&self, o: usize, k: usize, extent: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < extent).then_some(pos as usize)
    }

    /// Output range `[lo, hi)` along the innermost axis whose sources lie in bounds.
    #[inline]
    fn valid_range(&self, k: usize) -> (usize, usize) {
        let w = self.input[2] as isize;
        let s = self.stride as isize;
        let off = k as isize - self.padding as isize;
        // need 0 <= o*s + off <= w-1
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi_incl = (w - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, self.output[2] as isize);
        (lo.min(hi) as usize, hi as usize)
    }
}

pub fn conv3d_forward<S: Scalar>(g: &ConvGeom, input: &[S], weight: &[S], bias: &[S]) -> Vec<S> {
    let k = g.kernel;
    let k3 = k * k * k;
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let [_, ih, iw] = g.input;
    let [od, oh, ow] = g.output;
    let mut out = vec![S::zero(); g.batch * g.cout * out_vol];
    par::for_each_chunk_mut(&mut out, out_vol, |idx, dst| {
        let n = idx / g.cout;
        let co = idx % g.cout;
        dst.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..g.cin {
            let src = &input[(n * g.cin + ci) * in_vol..][..in_vol];
            let wbase = (co * g.cin + ci) * k3;
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let wv = weight[wbase + (kd * k + kh) * k + kw];
                        let (lo, hi) = g.valid_range(kw);
                        if lo >= hi {
                            continue;
                        }
                        for z in 0..od {
                            let Some(sz) = g.source(z, kd, g.input[0]) else {
                                continue;
                            };
                            for y in 0..oh {
                                let Some(sy) = g.source(y, kh, ih) else {
                                    continue;
                                };
                                let row = &mut dst[(z * oh + y) * ow..][..ow];
                                let srow = &src[(sz * ih + sy) * iw..][..iw];
                                axpy_row(g, wv, srow, row, kw, lo, hi);
                            }
                        }
                    }
                }
            }
        }
    });
    out
}

#[inline]
fn axpy_row<S: Scalar>(
    g: &ConvGeom,
    wv: S,
    srow: &[S],
    row: &mut [S],
    kw: usize,
    lo: usize,
    hi: usize,
) {
    let start = lo * g.stride + kw - g.padding;
    if g.stride == 1 {
        for (d, &s) in row[lo..hi].iter_mut().zip(&srow[start..start + (hi - lo)]) {
            *d += wv * s;
        }
    } else {
        for (j, d) in row[lo..hi].iter_mut().enumerate() {
            *d += wv * srow[start + j * g.stride];
        }
    }
}

pub struct ConvGrads<S> {
    pub input: Option<Vec<S>>,
    pub weight: Vec<S>,
    pub bias: Vec<S>,
}

pub fn conv3d_backward<S: Scalar>(
    g: &ConvGeom,
    input: &[S],
    weight: &[S],
    grad_out: &[S],
    need_input: bool,
) -> ConvGrads<S> {
    let k = g.kernel;
    let k3 = k * k * k;
    let in_vol = g.in_volume();
    let out_vol = g.out_volume();
    let [id, ih, iw] = g.input;
    let [od, oh, ow] = g.output;

    let grad_input = need_input.then(|| {
        let mut gin = vec![S::zero(); g.batch * g.cin * in_vol];
        par::for_each_chunk_mut(&mut gin, in_vol, |idx, dst| {
            let n = idx / g.cin;
            let ci = idx % g.cin;
            for co in 0..g.cout {
                let gsrc = &grad_out[(n * g.cout + co) * out_vol..][..out_vol];
                let wbase = (co * g.cin + ci) * k3;
                for kd in 0..k {
                    for kh in 0..k {
                        for kw in 0..k {
                            let wv = weight[wbase + (kd * k + kh) * k + kw];
                            let (lo, hi) = g.valid_range(kw);
                            if lo >= hi {
                                continue;
                            }
                            let start = lo * g.stride + kw - g.padding;
                            for z in 0..od {
                                let Some(sz) = g.source(z, kd, id) else {
                                    continue;
                                };
                                for y in 0..oh {
                                    let Some(sy) = g.source(y, kh, ih) else {
                                        continue;
                                    };
                                    let grow = &gsrc[(z * oh + y) * ow..][..ow];
                                    let drow = &mut dst[(sz * ih + sy) * iw..][..iw];
                                    if g.stride == 1 {
                                        for (d, &gv) in drow[start..start + (hi - lo)]
                                            .iter_mut()
                                            .zip(&grow[lo..hi])
                                        {
                                            *d += wv * gv;
                                        }
                                    } else {
                                        for (j, &gv) in grow[lo..hi].iter().enumerate() {
                                            drow[start + j * g.stride] += wv * gv;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
        gin
    });

    let mut grad_weight = vec![S::zero(); g.cout * g.cin * k3];
    par::for_each_chunk_mut(&mut grad_weight, g.cin * k3, |co, dst| {
        for ci in 0..g.cin {
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let (lo, hi) = g.valid_range(kw);
                        let mut acc = S::zero();
                        if lo < hi {
                            let start = lo * g.stride + kw - g.padding;
                            for n in 0..g.batch {
                                let gsrc = &grad_out[(n * g.cout + co) * out_vol..][..out_vol];
                                let src = &input[(n * g.cin + ci) * in_vol..][..in_vol];
                                for z in 0..od {
                                    let Some(sz) = g.source(z, kd, id) else {
                                        continue;
                                    };
                                    for y in 0..oh {
                                        let Some(sy) = g.source(y, kh, ih) else {
                                            continue;
                                        };
                                        let grow = &gsrc[(z * oh + y) * ow..][..ow];
                                        let srow = &src[(sz * ih + sy) * iw..][..iw];
                                        let mut part = S::zero();
                                        if g.stride == 1 {
                                            for (&gv, &sv) in grow[lo..hi]
                                                .iter()
                                                .zip(&srow[start..start + (hi - lo)])
                                            {
                                                part += gv * sv;
                                            }
                                        } else {
                                            for (j, &gv) in grow[lo..hi].iter().enumerate() {
                                                part += gv * srow[start + j * g.stride];
                                            }
                                        }
                                        acc += part;
                                    }
                                }
                            }
                        }
                        dst[ci * k3 + (kd * k + kh) * k + kw] = acc;
                    }
                }
            }
        }
    });

    let grad_bias = (0..g.cout)
        .map(|co| {
            let mut acc = S::zero();
            for n in 0..g.batch {
                acc += grad_out[(n * g.cout + co) * out_vol..][..out_vol]
                    .iter()
                    .copied()
                    .sum::<S>();
            }
            acc
        })
        .collect();

    ConvGrads {
        input: grad_input,
        weight: grad_weight,
        bias: grad_bias,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Seven nested loops, no bounds tricks.
    fn reference(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let k = g.kernel;
        let [d, h, wd] = g.input;
        let [od, oh, ow] = g.output;
        let mut out = vec![0.0; g.batch * g.cout * od * oh * ow];
        for n in 0..g.batch {
            for co in 0..g.cout {
                for z in 0..od {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut acc = b[co];
                            for ci in 0..g.cin {
                                for kd in 0..k {
                                    for kh in 0..k {
                                        for kw in 0..k {
                                            let iz =
                                                (z * g.stride + kd) as isize - g.padding as isize;
                                            let iy =
                                                (y * g.stride + kh) as isize - g.padding as isize;
                                            let ix =
                                                (xx * g.stride + kw) as isize - g.padding as isize;
                                            if iz < 0
                                                || iy < 0
                                                || ix < 0
                                                || iz >= d as isize
                                                || iy >= h as isize
                                                || ix >= wd as isize
                                            {
                                                continue;
                                            }
                                            let xi = (((n * g.cin + ci) * d + iz as usize) * h
                                                + iy as usize)
                                                * wd
                                                + ix as usize;
                                            let wi =
                                                (((co * g.cin + ci) * k + kd) * k + kh) * k + kw;
                                            acc += x[xi] * w[wi];
                                        }
                                    }
                                }
                            }
                            out[(((n * g.cout + co) * od + z) * oh + y) * ow + xx] = acc;
                        }
                    }
                }
            }
        }
        out
    }

    fn random(n: usize, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.normal()).collect()
    }

    #[test]
    fn matches_nested_loop_reference() {
        let mut rng = Rng::new(11, 0);
        for (stride, padding, edge) in [(1, 1, 4), (1, 0, 5), (2, 1, 5), (2, 0, 6)] {
            let g = ConvGeom::new(
                &[1, 2, edge, edge, edge],
                &[3, 2, 3, 3, 3],
                3,
                stride,
                padding,
            )
            .unwrap();
            let x = random(2 * edge * edge * edge, &mut rng);
            let w = random(3 * 2 * 27, &mut rng);
            let b = random(3, &mut rng);
            let fast = conv3d_forward(&g, &x, &w, &b);
            let slow = reference(&g, &x, &w, &b);
            for (a, r) in fast.iter().zip(&slow) {
                assert!((a - r).abs() <= 1e-6 * r.abs().max(1.0), "{a} vs {r}");
            }
        }
    }

    #[test]
    fn extents_follow_floor_formula() {
        let g = ConvGeom::new(&[1, 1, 7, 6, 5], &[1, 1, 3, 3, 3], 1, 2, 1).unwrap();
        assert_eq!(g.output, [4, 3, 3]);
        let g = ConvGeom::new(&[1, 1, 3, 3, 3], &[1, 1, 3, 3, 3], 1, 1, 0).unwrap();
        assert_eq!(g.output, [1, 1, 1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            ConvGeom::new(&[1, 2, 4, 4, 4], &[3, 1, 3, 3, 3], 3, 1, 1),
            Err(VolError::Dimension { .. })
        ));
        assert!(ConvGeom::new(&[1, 1, 2, 2, 2], &[1, 1, 3, 3, 3], 1, 1, 0).is_err());
        assert!(ConvGeom::new(&[1, 1, 4, 4, 4], &[1, 1, 5, 5, 5], 1, 1, 0).is_err());
        assert!(ConvGeom::new(&[1, 1, 4, 4, 4], &[1, 1, 3, 3, 3], 2, 1, 0).is_err());
    }
}
