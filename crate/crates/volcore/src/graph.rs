//! Tape-based reverse-mode automatic differentiation.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order. The backward sweep walks it in reverse and accumulates
//! into parent gradients in a fixed order, which keeps results bit-identical
//! regardless of how the kernels parallelize internally.

use crate::error::{Result, VolError};
use crate::kernels::conv::{conv3d_backward, conv3d_forward, ConvGeom};
use crate::kernels::dense;
use crate::kernels::norm::{batchnorm_backward, batchnorm_forward, BnSaved, BN_MOMENTUM};
use crate::kernels::pool::{self, PoolGeom};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{check_rank, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

/// Mutable running statistics of one batch-norm layer.
pub struct BnRunning<'a, S> {
    pub mean: &'a mut [S],
    pub var: &'a mut [S],
}

enum Op<S> {
    Leaf,
    Conv {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
    },
    MaxPool {
        input: Var,
        geom: PoolGeom,
        argmax: Vec<usize>,
    },
    AvgPool {
        input: Var,
        geom: PoolGeom,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<S>,
    },
    Relu {
        input: Var,
    },
    Sigmoid {
        input: Var,
    },
    Dropout {
        input: Var,
        mask: Vec<S>,
    },
    Reshape {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<S>,
    },
    Dot {
        input: Var,
        weights: Vec<S>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor<S>,
        op: Op<S>,
        parents: &[Var],
    ) -> Result<Var> {
        if !value.is_finite() {
            return Err(VolError::NonFinite { op: op_name });
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, false)
    }

    /// A leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.leaf(value, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn conv3d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(
            self.shape(x),
            self.shape(weight),
            self.value(bias).numel(),
            stride,
            padding,
        )?;
        let out = conv3d_forward(
            &geom,
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let t = Tensor::new(geom.output_shape(), out)?;
        self.push(
            "conv3d",
            t,
            Op::Conv {
                input: x,
                weight,
                bias,
                geom,
            },
            &[x, weight, bias],
        )
    }

    pub fn maxpool3d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let geom = PoolGeom::new("maxpool3d", &shape, kernel, stride)?;
        let (out, argmax) = pool::maxpool3d_forward(&geom, self.value(x).data());
        let t = Tensor::new(geom.output_shape(&shape), out)?;
        self.push(
            "maxpool3d",
            t,
            Op::MaxPool {
                input: x,
                geom,
                argmax,
            },
            &[x],
        )
    }

    pub fn avgpool3d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let geom = PoolGeom::new("avgpool3d", &shape, kernel, stride)?;
        let out = pool::avgpool3d_forward(&geom, self.value(x).data());
        let t = Tensor::new(geom.output_shape(&shape), out)?;
        self.push("avgpool3d", t, Op::AvgPool { input: x, geom }, &[x])
    }

    /// Average over each channel's whole (cubic) spatial extent.
    pub fn global_avgpool3d(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        check_rank("global_avgpool3d", self.value(x), 5)?;
        if shape[2] != shape[3] || shape[2] != shape[4] {
            return Err(VolError::dim(
                "global_avgpool3d",
                "2..5",
                format!("non-cubic {shape:?}"),
            ));
        }
        self.avgpool3d(x, shape[2], shape[2])
    }

    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        check_rank("upsample_nearest", self.value(x), 5)?;
        if factor == 0 {
            return Err(VolError::Parameter("upsample factor must be >= 1".into()));
        }
        let shape = self.shape(x).to_vec();
        let out = pool::upsample_nearest_forward(&shape, self.value(x).data(), factor);
        let oshape = vec![
            shape[0],
            shape[1],
            shape[2] * factor,
            shape[3] * factor,
            shape[4] * factor,
        ];
        let t = Tensor::new(oshape, out)?;
        self.push(
            "upsample_nearest",
            t,
            Op::Upsample { input: x, factor },
            &[x],
        )
    }

    pub fn batchnorm3d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: BnRunning<'_, S>,
        mode: Mode,
    ) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() < 2 {
            return Err(VolError::dim(
                "batchnorm3d",
                "rank",
                format!("shape {shape:?}"),
            ));
        }
        let c = shape[1];
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.value(v).numel() != c {
                return Err(VolError::dim(
                    "batchnorm3d",
                    "1 (channels)",
                    format!(
                        "{name} has {} entries for {c} channels",
                        self.value(v).numel()
                    ),
                ));
            }
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(VolError::dim(
                "batchnorm3d",
                "1 (channels)",
                "running stats length",
            ));
        }
        let train = mode == Mode::Train;
        let per_channel = shape[0] * shape[2..].iter().product::<usize>();
        if train && per_channel < 2 {
            return Err(VolError::DegenerateBatch {
                op: "batchnorm3d",
                detail: format!("{per_channel} value per channel in train mode"),
            });
        }
        let fwd = batchnorm_forward(
            self.value(x).data(),
            &shape,
            self.value(gamma).data(),
            self.value(beta).data(),
            Some((&*running.mean, &*running.var)),
            train,
        );
        if let Some((bm, bv)) = &fwd.batch_stats {
            let m = S::from_f64(BN_MOMENTUM);
            for ch in 0..c {
                running.mean[ch] = (S::one() - m) * running.mean[ch] + m * bm[ch];
                running.var[ch] = (S::one() - m) * running.var[ch] + m * bv[ch];
            }
        }
        let t = Tensor::new(shape, fwd.output)?;
        self.push(
            "batchnorm3d",
            t,
            Op::BatchNorm {
                input: x,
                gamma,
                beta,
                saved: fwd.saved,
            },
            &[x, gamma, beta],
        )
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape().to_vec(), dense::relu(v.data()))?;
        self.push("relu", t, Op::Relu { input: x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        let t = Tensor::new(v.shape().to_vec(), dense::sigmoid(v.data()))?;
        self.push("sigmoid", t, Op::Sigmoid { input: x }, &[x])
    }

    /// Inverted dropout. Identity in eval mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, rng: &mut Rng) -> Result<Var> {
        dense::check_dropout_p(p)?;
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let v = self.value(x);
        let mask = dense::dropout_mask::<S>(v.numel(), p, rng)?;
        let data = v.data().iter().zip(&mask).map(|(&a, &m)| a * m).collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push("dropout", t, Op::Dropout { input: x, mask }, &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push("reshape", t, Op::Reshape { input: x }, &[x])
    }

    /// `[N, ...] -> [N, features]`.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x);
        let n = shape[0];
        let f = shape[1..].iter().product();
        self.reshape(x, vec![n, f])
    }

    /// `x: [N, in]`, `weight: [out, in]`, `bias: [out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        check_rank("linear", self.value(x), 2)?;
        check_rank("linear", self.value(weight), 2)?;
        let (n, fin) = (self.shape(x)[0], self.shape(x)[1]);
        let (fout, win) = (self.shape(weight)[0], self.shape(weight)[1]);
        if win != fin {
            return Err(VolError::dim(
                "linear",
                "1 (features)",
                format!("input {fin} vs weight {win}"),
            ));
        }
        if self.value(bias).numel() != fout {
            return Err(VolError::dim(
                "linear",
                "0 (bias)",
                format!("{} vs {fout}", self.value(bias).numel()),
            ));
        }
        let y = dense::linear_forward(
            self.value(x).data(),
            self.value(weight).data(),
            self.value(bias).data(),
            n,
            fin,
            fout,
        );
        let t = Tensor::new(vec![n, fout], y)?;
        self.push(
            "linear",
            t,
            Op::Linear {
                input: x,
                weight,
                bias,
            },
            &[x, weight, bias],
        )
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(VolError::dim(
                "mse",
                "all",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let l = dense::mse(self.value(pred).data(), self.value(target).data());
        self.push(
            "mse",
            Tensor::scalar(l),
            Op::Mse { pred, target },
            &[pred, target],
        )
    }

    /// Mean softmax cross-entropy. `logits: [N, K]`, one class index per row.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        check_rank("cross_entropy", self.value(logits), 2)?;
        let (n, k) = (self.shape(logits)[0], self.shape(logits)[1]);
        if targets.len() != n {
            return Err(VolError::dim(
                "cross_entropy",
                "0",
                format!("{n} rows vs {} targets", targets.len()),
            ));
        }
        dense::check_labels(targets, k)?;
        let (l, probs) = dense::cross_entropy(self.value(logits).data(), targets, k);
        self.push(
            "cross_entropy",
            Tensor::scalar(l),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        )
    }

    /// `sum(x * weights)` as a scalar; used to reduce arbitrary outputs for checks.
    pub fn dot_const(&mut self, x: Var, weights: Vec<S>) -> Result<Var> {
        if weights.len() != self.value(x).numel() {
            return Err(VolError::dim(
                "dot_const",
                "all",
                "weight count differs from input",
            ));
        }
        let s = self
            .value(x)
            .data()
            .iter()
            .zip(&weights)
            .map(|(&a, &w)| a * w)
            .sum::<S>();
        self.push(
            "dot_const",
            Tensor::scalar(s),
            Op::Dot { input: x, weights },
            &[x],
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).numel() != 1 {
            return Err(VolError::dim(
                "backward",
                "all",
                "loss must hold one element",
            ));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let contributions = self.node_backward(node, &g)?;
            grads[idx] = Some(g);
            for (parent, pg) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut grads[parent.0] {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, &b)| *a += b),
                    slot @ None => *slot = Some(pg),
                }
            }
        }
        for (i, g) in grads.iter().enumerate() {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(VolError::NonFinite {
                        op: op_name(&self.nodes[i].op),
                    });
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn node_backward(&self, node: &Node<S>, g: &[S]) -> Result<Vec<(Var, Vec<S>)>> {
        Ok(match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv {
                input,
                weight,
                bias,
                geom,
            } => {
                let gr = conv3d_backward(
                    geom,
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    self.wants(*input),
                );
                let mut out = vec![(*weight, gr.weight), (*bias, gr.bias)];
                if let Some(gi) = gr.input {
                    out.push((*input, gi));
                }
                out
            }
            Op::MaxPool {
                input,
                geom,
                argmax,
            } => {
                vec![(*input, pool::maxpool3d_backward(geom, argmax, g))]
            }
            Op::AvgPool { input, geom } => vec![(*input, pool::avgpool3d_backward(geom, g))],
            Op::Upsample { input, factor } => {
                vec![(
                    *input,
                    pool::upsample_nearest_backward(self.shape(*input), g, *factor),
                )]
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            } => {
                let (gi, gg, gb) =
                    batchnorm_backward(self.shape(*input), self.value(*gamma).data(), saved, g);
                vec![(*input, gi), (*gamma, gg), (*beta, gb)]
            }
            Op::Relu { input } => {
                vec![(*input, dense::relu_backward(self.value(*input).data(), g))]
            }
            Op::Sigmoid { input } => vec![(*input, dense::sigmoid_backward(node.value.data(), g))],
            Op::Dropout { input, mask } => {
                vec![(*input, g.iter().zip(mask).map(|(&a, &m)| a * m).collect())]
            }
            Op::Reshape { input } => vec![(*input, g.to_vec())],
            Op::Linear {
                input,
                weight,
                bias,
            } => {
                let (n, fin) = (self.shape(*input)[0], self.shape(*input)[1]);
                let fout = self.shape(*weight)[0];
                let (gx, gw, gb) = dense::linear_backward(
                    self.value(*input).data(),
                    self.value(*weight).data(),
                    g,
                    n,
                    fin,
                    fout,
                );
                vec![(*input, gx), (*weight, gw), (*bias, gb)]
            }
            Op::Mse { pred, target } => {
                let (gp, gt) =
                    dense::mse_backward(self.value(*pred).data(), self.value(*target).data(), g[0]);
                vec![(*pred, gp), (*target, gt)]
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let k = self.shape(*logits)[1];
                vec![(
                    *logits,
                    dense::cross_entropy_backward(probs, targets, k, g[0]),
                )]
            }
            Op::Dot { input, weights } => {
                vec![(*input, weights.iter().map(|&w| w * g[0]).collect())]
            }
        })
    }
}

fn op_name<S>(op: &Op<S>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv { .. } => "conv3d",
        Op::MaxPool { .. } => "maxpool3d",
        Op::AvgPool { .. } => "avgpool3d",
        Op::Upsample { .. } => "upsample_nearest",
        Op::BatchNorm { .. } => "batchnorm3d",
        Op::Relu { .. } => "relu",
        Op::Sigmoid { .. } => "sigmoid",
        Op::Dropout { .. } => "dropout",
        Op::Reshape { .. } => "reshape",
        Op::Linear { .. } => "linear",
        Op::Mse { .. } => "mse",
        Op::CrossEntropy { .. } => "cross_entropy",
        Op::Dot { .. } => "dot_const",
    }
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients<S> {
    grads: Vec<Option<Vec<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&[S]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}
