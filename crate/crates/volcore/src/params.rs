use std::collections::HashMap;

use crate::error::{Result, VolError};
use crate::graph::{BnRunning, Graph, Var};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    /// Trained by the optimizer.
    Learnable,
    /// Persistent state such as batch-norm running statistics.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param<S> {
    pub name: String,
    pub tensor: Tensor<S>,
    pub kind: ParamKind,
}

/// Named, insertion-ordered parameter storage.
#[derive(Clone, Debug, Default)]
pub struct ParameterStore<S> {
    params: Vec<Param<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParameterStore<S> {
    pub fn new() -> Self {
        ParameterStore {
            params: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor<S>,
        kind: ParamKind,
    ) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(VolError::Parameter(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param { name, tensor, kind });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.index
            .get(name)
            .map(|&i| &self.params[i].tensor)
            .ok_or_else(|| VolError::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.params[i].tensor),
            None => Err(VolError::UnknownParameter(name.to_string())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<S>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<S>> {
        self.params.iter_mut()
    }

    /// Number of learnable scalars.
    pub fn learnable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Learnable)
            .map(|p| p.tensor.numel())
            .sum()
    }

    /// Running mean and variance of one batch-norm layer, borrowed together.
    pub fn running(&mut self, mean: &str, var: &str) -> Result<BnRunning<'_, S>> {
        let i = *self
            .index
            .get(mean)
            .ok_or_else(|| VolError::UnknownParameter(mean.to_string()))?;
        let j = *self
            .index
            .get(var)
            .ok_or_else(|| VolError::UnknownParameter(var.to_string()))?;
        if i == j {
            return Err(VolError::Parameter(
                "running mean and var must differ".into(),
            ));
        }
        let (lo, hi, swap) = if i < j { (i, j, false) } else { (j, i, true) };
        let (left, right) = self.params.split_at_mut(hi);
        let a = left[lo].tensor.data_mut();
        let b = right[0].tensor.data_mut();
        Ok(if swap {
            BnRunning { mean: b, var: a }
        } else {
            BnRunning { mean: a, var: b }
        })
    }

    /// Inserts every learnable parameter into `g` as a gradient-tracked leaf.
    pub fn bind(&self, g: &mut Graph<S>) -> Bound {
        self.bind_with(g, true)
    }

    /// Inserts every learnable parameter as a constant.
    pub fn bind_frozen(&self, g: &mut Graph<S>) -> Bound {
        self.bind_with(g, false)
    }

    fn bind_with(&self, g: &mut Graph<S>, track: bool) -> Bound {
        let mut vars = HashMap::new();
        let mut order = Vec::new();
        for p in self
            .params
            .iter()
            .filter(|p| p.kind == ParamKind::Learnable)
        {
            let v = if track {
                g.param(p.tensor.clone())
            } else {
                g.input(p.tensor.clone())
            };
            vars.insert(p.name.clone(), v);
            order.push((p.name.clone(), v));
        }
        Bound { vars, order }
    }

    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        ParameterStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                    kind: p.kind,
                })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// Replaces values from `(name, tensor)` pairs; names and shapes must
    /// match this store exactly.
    pub fn load(&mut self, entries: Vec<(String, Tensor<f32>)>) -> Result<()> {
        if entries.len() != self.params.len() {
            return Err(VolError::Parameter(format!(
                "checkpoint has {} tensors, model expects {}",
                entries.len(),
                self.params.len()
            )));
        }
        for (name, t) in entries {
            let dst = self.get_mut(&name)?;
            if dst.shape() != t.shape() {
                return Err(VolError::dim(
                    "load",
                    name,
                    format!(
                        "checkpoint shape {:?} vs model {:?}",
                        t.shape(),
                        dst.shape()
                    ),
                ));
            }
            *dst = t.cast();
        }
        Ok(())
    }
}

/// Parameter-name to graph-variable mapping for one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: HashMap<String, Var>,
    order: Vec<(String, Var)>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| VolError::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.order.iter().map(|(n, v)| (n.as_str(), *v))
    }
}

/// Kaiming (He) normal initialization: `N(0, 2 / fan_in)`.
pub fn kaiming_normal<S: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<S> {
    Tensor::randn(shape, (2.0 / fan_in as f64).sqrt(), rng)
}
