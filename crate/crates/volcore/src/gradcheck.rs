//! Central finite-difference verification of analytic gradients.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamKind, ParameterStore};

/// Finite-difference step used unless a caller picks another.
pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

#[derive(Clone, Debug)]
pub struct BlockError {
    pub name: String,
    pub count: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.blocks.iter().map(|b| b.count).sum()
    }
}

/// Compares backprop against central differences for every learnable entry
/// of `store`.
///
/// `build` must construct the same scalar loss on every call; it receives the
/// freshly bound parameters and the store (for running statistics). Any
/// randomness inside it must be re-seeded per call.
pub fn grad_check<F>(
    store: &mut ParameterStore<f64>,
    step: f64,
    mut build: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &Bound, &mut ParameterStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = store.bind(&mut g);
    let loss = build(&mut g, &bound, store)?;
    let grads = g.backward(loss)?;

    let names: Vec<String> = store
        .iter()
        .filter(|p| p.kind == ParamKind::Learnable)
        .map(|p| p.name.clone())
        .collect();
    let mut report = GradCheckReport::default();
    for name in names {
        let analytic = match grads.get(bound.get(&name)?) {
            Some(a) => a.to_vec(),
            None => vec![0.0; store.get(&name)?.numel()],
        };
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let orig = store.get(&name)?.data()[i];
            store.get_mut(&name)?.data_mut()[i] = orig + step;
            let plus = eval(store, &mut build)?;
            store.get_mut(&name)?.data_mut()[i] = orig - step;
            let minus = eval(store, &mut build)?;
            store.get_mut(&name)?.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(a, numeric));
        }
        report.blocks.push(BlockError {
            name,
            count: analytic.len(),
            max_rel_error: worst,
        });
    }
    Ok(report)
}

fn eval<F>(store: &mut ParameterStore<f64>, build: &mut F) -> Result<f64>
where
    F: FnMut(&mut Graph<f64>, &Bound, &mut ParameterStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let bound = store.bind_frozen(&mut g);
    let loss = build(&mut g, &bound, store)?;
    Ok(g.value(loss).item())
}

/// Outcome of the randomized per-operation sweep.
#[derive(Clone, Debug)]
pub struct OpSweep {
    pub op: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
}

/// Runs `trials` randomized finite-difference checks for every
/// differentiable operation on small random shapes.
pub fn sweep_ops(trials: usize, seed: u64) -> Result<Vec<OpSweep>> {
    use crate::graph::Mode;
    use crate::params::kaiming_normal;
    use crate::rng::Rng;
    use crate::tensor::Tensor;

    type Case = fn(&mut Rng) -> Result<f64>;

    fn reduce(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
        let mut r = Rng::new(seed, 99);
        let n = g.value(out).numel();
        let w = (0..n).map(|_| r.normal()).collect();
        g.dot_const(out, w)
    }

    fn store_with(entries: Vec<(&str, Tensor<f64>)>) -> ParameterStore<f64> {
        let mut s = ParameterStore::new();
        for (n, t) in entries {
            s.insert(n, t, ParamKind::Learnable).unwrap();
        }
        s
    }

    fn conv(r: &mut Rng) -> Result<f64> {
        let k = if r.bernoulli(0.3) { 1 } else { 3 };
        let cin = r.int_inclusive(1, 2);
        let cout = r.int_inclusive(1, 3);
        let e = r.int_inclusive(k.max(2), 4);
        let pad = if k == 3 { r.int_inclusive(0, 1) } else { 0 };
        let stride = r.int_inclusive(1, 2);
        let n = r.int_inclusive(1, 2);
        let mut s = store_with(vec![
            ("x", Tensor::randn(&[n, cin, e, e, e], 1.0, r)),
            (
                "w",
                kaiming_normal(&[cout, cin, k, k, k], cin * k * k * k, r),
            ),
            ("b", Tensor::randn(&[cout], 0.1, r)),
        ]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.conv3d(b.get("x")?, b.get("w")?, b.get("b")?, stride, pad)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn maxpool(r: &mut Rng) -> Result<f64> {
        let e = 2 * r.int_inclusive(1, 3);
        let c = r.int_inclusive(1, 3);
        let mut s = store_with(vec![("x", Tensor::randn(&[1, c, e, e, e], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.maxpool3d(b.get("x")?, 2, 2)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn avgpool(r: &mut Rng) -> Result<f64> {
        let e = 2 * r.int_inclusive(1, 3);
        let c = r.int_inclusive(1, 3);
        let global = r.bernoulli(0.5);
        let mut s = store_with(vec![("x", Tensor::randn(&[2, c, e, e, e], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let x = b.get("x")?;
            let y = if global {
                g.global_avgpool3d(x)?
            } else {
                g.avgpool3d(x, 2, 2)?
            };
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn batchnorm(r: &mut Rng) -> Result<f64> {
        let c = r.int_inclusive(1, 3);
        let e = r.int_inclusive(1, 3);
        let n = if e == 1 { 3 } else { r.int_inclusive(1, 2) };
        let mode = if r.bernoulli(0.75) {
            Mode::Train
        } else {
            Mode::Eval
        };
        let mut s = store_with(vec![
            ("x", Tensor::randn(&[n, c, e, e, e], 1.5, r)),
            ("gamma", Tensor::uniform(&[c], 0.5, 1.5, r)),
            ("beta", Tensor::randn(&[c], 0.5, r)),
        ]);
        s.insert("rm", Tensor::randn(&[c], 0.1, r), ParamKind::Buffer)?;
        s.insert("rv", Tensor::uniform(&[c], 0.5, 1.5, r), ParamKind::Buffer)?;
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, store| {
            // running stats are restored so eval mode sees fixed statistics
            let saved = (store.get("rm")?.clone(), store.get("rv")?.clone());
            let y = g.batchnorm3d(
                b.get("x")?,
                b.get("gamma")?,
                b.get("beta")?,
                store.running("rm", "rv")?,
                mode,
            )?;
            *store.get_mut("rm")? = saved.0;
            *store.get_mut("rv")? = saved.1;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn relu(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(2, 40);
        let mut s = store_with(vec![("x", Tensor::randn(&[1, n], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.relu(b.get("x")?)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn sigmoid(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(2, 40);
        let mut s = store_with(vec![("x", Tensor::randn(&[1, n], 3.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.sigmoid(b.get("x")?)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn dropout(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(2, 40);
        let p = 0.1 + 0.8 * r.uniform();
        let mut s = store_with(vec![("x", Tensor::randn(&[1, n], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let mut mask_rng = Rng::new(seed, 7);
            let y = g.dropout(b.get("x")?, p, Mode::Train, &mut mask_rng)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn linear(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(1, 4);
        let fin = r.int_inclusive(1, 6);
        let fout = r.int_inclusive(1, 5);
        let mut s = store_with(vec![
            ("x", Tensor::randn(&[n, fin], 1.0, r)),
            ("w", Tensor::randn(&[fout, fin], 1.0, r)),
            ("b", Tensor::randn(&[fout], 1.0, r)),
        ]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.linear(b.get("x")?, b.get("w")?, b.get("b")?)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn flatten(r: &mut Rng) -> Result<f64> {
        let e = r.int_inclusive(1, 3);
        let mut s = store_with(vec![("x", Tensor::randn(&[2, 2, e, e, e], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.flatten(b.get("x")?)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn upsample(r: &mut Rng) -> Result<f64> {
        let e = r.int_inclusive(1, 3);
        let f = r.int_inclusive(1, 3);
        let mut s = store_with(vec![("x", Tensor::randn(&[1, 2, e, e, e], 1.0, r))]);
        let seed = r.next_u64();
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            let y = g.upsample_nearest(b.get("x")?, f)?;
            reduce(g, y, seed)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn mse(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(1, 30);
        let mut s = store_with(vec![
            ("p", Tensor::randn(&[n], 1.0, r)),
            ("t", Tensor::randn(&[n], 1.0, r)),
        ]);
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            g.mse(b.get("p")?, b.get("t")?)
        })
        .map(|rep| rep.max_rel_error())
    }

    fn cross_entropy(r: &mut Rng) -> Result<f64> {
        let n = r.int_inclusive(1, 4);
        let k = r.int_inclusive(2, 24);
        let targets: Vec<usize> = (0..n).map(|_| r.index(k)).collect();
        let mut s = store_with(vec![("z", Tensor::randn(&[n, k], 2.0, r))]);
        grad_check(&mut s, DEFAULT_STEP, |g, b, _| {
            g.cross_entropy(b.get("z")?, &targets)
        })
        .map(|rep| rep.max_rel_error())
    }

    let cases: [(&'static str, Case); 12] = [
        ("conv3d", conv),
        ("maxpool3d", maxpool),
        ("avgpool3d", avgpool),
        ("batchnorm3d", batchnorm),
        ("relu", relu),
        ("sigmoid", sigmoid),
        ("dropout", dropout),
        ("linear", linear),
        ("flatten", flatten),
        ("upsample_nearest", upsample),
        ("mse", mse),
        ("cross_entropy", cross_entropy),
    ];
    let mut out = Vec::new();
    for (i, (op, case)) in cases.iter().enumerate() {
        let mut rng = Rng::new(seed, i as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..trials {
            worst = worst.max(case(&mut rng)?);
        }
        out.push(OpSweep {
            op,
            trials,
            max_rel_error: worst,
        });
    }
    Ok(out)
}
