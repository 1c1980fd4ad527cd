//! Per-channel batch normalization over `[N, C, ...]`.

use crate::par;
use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Saved forward state needed by the backward pass.
#[derive(Clone, Debug)]
pub struct BnSaved<S> {
    pub xhat: Vec<S>,
    pub inv_std: Vec<S>,
    pub train: bool,
}

pub struct BnForward<S> {
    pub output: Vec<S>,
    pub saved: BnSaved<S>,
    /// Batch mean and unbiased variance per channel (train mode only).
    pub batch_stats: Option<(Vec<S>, Vec<S>)>,
}

fn channel_values<S: Scalar>(
    x: &[S],
    n: usize,
    c: usize,
    ch: usize,
    spatial: usize,
) -> impl Iterator<Item = S> + '_ {
    (0..n).flat_map(move |b| x[(b * c + ch) * spatial..][..spatial].iter().copied())
}

pub fn batchnorm_forward<S: Scalar>(
    x: &[S],
    shape: &[usize],
    gamma: &[S],
    beta: &[S],
    running: Option<(&[S], &[S])>,
    train: bool,
) -> BnForward<S> {
    let n = shape[0];
    let c = shape[1];
    let spatial: usize = shape[2..].iter().product();
    let m = n * spatial;
    let eps = S::from_f64(BN_EPS);

    let stats: Vec<(S, S, S)> = par::map_indices(c, |ch| {
        if train {
            let mean = channel_values(x, n, c, ch, spatial).sum::<S>() / S::from_usize(m);
            let var = channel_values(x, n, c, ch, spatial)
                .map(|v| (v - mean) * (v - mean))
                .sum::<S>()
                / S::from_usize(m);
            (mean, var, S::one() / (var + eps).sqrt())
        } else {
            let (rm, rv) = running.expect("eval mode needs running statistics");
            (rm[ch], rv[ch], S::one() / (rv[ch] + eps).sqrt())
        }
    });

    let mut xhat = vec![S::zero(); x.len()];
    let mut output = vec![S::zero(); x.len()];
    for b in 0..n {
        for (ch, &(mean, _, inv)) in stats.iter().enumerate() {
            let off = (b * c + ch) * spatial;
            for i in off..off + spatial {
                let h = (x[i] - mean) * inv;
                xhat[i] = h;
                output[i] = gamma[ch] * h + beta[ch];
            }
        }
    }

    let batch_stats = train.then(|| {
        let unbias = if m > 1 {
            S::from_usize(m) / S::from_usize(m - 1)
        } else {
            S::one()
        };
        let means = stats.iter().map(|s| s.0).collect();
        let vars = stats.iter().map(|s| s.1 * unbias).collect();
        (means, vars)
    });

    BnForward {
        output,
        saved: BnSaved {
            xhat,
            inv_std: stats.iter().map(|s| s.2).collect(),
            train,
        },
        batch_stats,
    }
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<S: Scalar>(
    shape: &[usize],
    gamma: &[S],
    saved: &BnSaved<S>,
    grad_out: &[S],
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let n = shape[0];
    let c = shape[1];
    let spatial: usize = shape[2..].iter().product();
    let m = S::from_usize(n * spatial);

    let sums: Vec<(S, S)> = par::map_indices(c, |ch| {
        let mut sum_g = S::zero();
        let mut sum_gx = S::zero();
        for b in 0..n {
            let off = (b * c + ch) * spatial;
            let r = off..off + spatial;
            for (&g, &x) in grad_out[r.clone()].iter().zip(&saved.xhat[r]) {
                sum_g += g;
                sum_gx += g * x;
            }
        }
        (sum_g, sum_gx)
    });

    let mut gin = vec![S::zero(); grad_out.len()];
    for b in 0..n {
        for (ch, &(sum_g, sum_gx)) in sums.iter().enumerate() {
            let off = (b * c + ch) * spatial;
            let scale = gamma[ch] * saved.inv_std[ch];
            for i in off..off + spatial {
                gin[i] = if saved.train {
                    scale * (grad_out[i] - sum_g / m - saved.xhat[i] * sum_gx / m)
                } else {
                    scale * grad_out[i]
                };
            }
        }
    }
    let ggamma = sums.iter().map(|s| s.1).collect();
    let gbeta = sums.iter().map(|s| s.0).collect();
    (gin, ggamma, gbeta)
}
