use crate::error::{Result, VolError};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub fn relu<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter()
        .map(|&v| if v > S::zero() { v } else { S::zero() })
        .collect()
}

/// Subgradient 0 at 0.
pub fn relu_backward<S: Scalar>(x: &[S], grad_out: &[S]) -> Vec<S> {
    x.iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v > S::zero() { g } else { S::zero() })
        .collect()
}

pub fn sigmoid<S: Scalar>(x: &[S]) -> Vec<S> {
    x.iter()
        .map(|&v| {
            if v >= S::zero() {
                S::one() / (S::one() + (-v).exp())
            } else {
                let e = v.exp();
                e / (S::one() + e)
            }
        })
        .collect()
}

pub fn sigmoid_backward<S: Scalar>(y: &[S], grad_out: &[S]) -> Vec<S> {
    y.iter()
        .zip(grad_out)
        .map(|(&s, &g)| g * s * (S::one() - s))
        .collect()
}

pub fn check_dropout_p(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(VolError::Parameter(format!(
            "dropout p = {p} outside [0, 1)"
        )));
    }
    Ok(())
}

/// Per-element multiplier: `0` for dropped, `1/(1-p)` for kept.
pub fn dropout_mask<S: Scalar>(len: usize, p: f64, rng: &mut Rng) -> Result<Vec<S>> {
    check_dropout_p(p)?;
    let keep = S::from_f64(1.0 / (1.0 - p));
    Ok((0..len)
        .map(|_| {
            if p > 0.0 && rng.bernoulli(p) {
                S::zero()
            } else {
                keep
            }
        })
        .collect())
}

/// `y[n, o] = sum_i x[n, i] * w[o, i] + b[o]`.
pub fn linear_forward<S: Scalar>(
    x: &[S],
    w: &[S],
    b: &[S],
    n: usize,
    fin: usize,
    fout: usize,
) -> Vec<S> {
    let mut y = vec![S::zero(); n * fout];
    for r in 0..n {
        let xr = &x[r * fin..][..fin];
        for o in 0..fout {
            let wr = &w[o * fin..][..fin];
            let mut acc = b[o];
            for (&a, &c) in xr.iter().zip(wr) {
                acc += a * c;
            }
            y[r * fout + o] = acc;
        }
    }
    y
}

/// Returns `(grad_x, grad_w, grad_b)`.
pub fn linear_backward<S: Scalar>(
    x: &[S],
    w: &[S],
    grad_out: &[S],
    n: usize,
    fin: usize,
    fout: usize,
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut gx = vec![S::zero(); n * fin];
    let mut gw = vec![S::zero(); fout * fin];
    let mut gb = vec![S::zero(); fout];
    for r in 0..n {
        let xr = &x[r * fin..][..fin];
        for o in 0..fout {
            let g = grad_out[r * fout + o];
            gb[o] += g;
            let wr = &w[o * fin..][..fin];
            for (d, &wv) in gx[r * fin..][..fin].iter_mut().zip(wr) {
                *d += g * wv;
            }
            for (d, &xv) in gw[o * fin..][..fin].iter_mut().zip(xr) {
                *d += g * xv;
            }
        }
    }
    (gx, gw, gb)
}

pub fn mse<S: Scalar>(pred: &[S], target: &[S]) -> S {
    let n = S::from_usize(pred.len());
    pred.iter()
        .zip(target)
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum::<S>()
        / n
}

pub fn mse_backward<S: Scalar>(pred: &[S], target: &[S], grad: S) -> (Vec<S>, Vec<S>) {
    let scale = grad * S::from_f64(2.0) / S::from_usize(pred.len());
    let gp: Vec<S> = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| scale * (p - t))
        .collect();
    let gt = gp.iter().map(|&v| -v).collect();
    (gp, gt)
}

/// Row-wise softmax with max subtraction.
pub fn softmax<S: Scalar>(logits: &[S], n: usize, k: usize) -> Vec<S> {
    let mut out = vec![S::zero(); n * k];
    for r in 0..n {
        let row = &logits[r * k..][..k];
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let exps: Vec<S> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: S = exps.iter().copied().sum();
        for (o, e) in out[r * k..][..k].iter_mut().zip(exps) {
            *o = e / total;
        }
    }
    out
}

pub fn check_labels(targets: &[usize], k: usize) -> Result<()> {
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(VolError::Label {
            label: bad,
            classes: k,
        });
    }
    Ok(())
}

/// Mean negative log-likelihood of softmax(logits). Returns the loss and
/// the softmax probabilities for reuse in the backward pass.
pub fn cross_entropy<S: Scalar>(logits: &[S], targets: &[usize], k: usize) -> (S, Vec<S>) {
    let n = targets.len();
    let mut total = S::zero();
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * k..][..k];
        let max = row.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<S>().ln() + max;
        total += lse - row[t];
    }
    (total / S::from_usize(n), softmax(logits, n, k))
}

pub fn cross_entropy_backward<S: Scalar>(
    probs: &[S],
    targets: &[usize],
    k: usize,
    grad: S,
) -> Vec<S> {
    let n = targets.len();
    let scale = grad / S::from_usize(n);
    let mut g: Vec<S> = probs.iter().map(|&p| p * scale).collect();
    for (r, &t) in targets.iter().enumerate() {
        g[r * k + t] = g[r * k + t] - scale;
    }
    g
}
