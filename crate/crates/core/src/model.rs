//! Seven-block 3D CNN encoder, pretext heads and representation extraction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use volcore::checkpoint::{read_checkpoint, write_checkpoint};
use volcore::gradcheck::{grad_check, GradCheckReport};
use volcore::{
    kaiming_normal, Bound, Graph, Mode, ParamKind, ParameterStore, Rng, Scalar, Tensor, Var,
    VolError,
};

use crate::error::{Error, Result};
use crate::volume::Volume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper192,
    Desk32,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper192" => Ok(Preset::Paper192),
            "desk32" => Ok(Preset::Desk32),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Age,
    Rotation,
    Reconstruction,
    Multihead,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Age => "age",
            Task::Rotation => "rotation",
            Task::Reconstruction => "reconstruction",
            Task::Multihead => "multihead",
        }
    }

    fn has(self, head: Task) -> bool {
        self == head || self == Task::Multihead
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "age" => Ok(Task::Age),
            "rotation" => Ok(Task::Rotation),
            "reconstruction" => Ok(Task::Reconstruction),
            "multihead" => Ok(Task::Multihead),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

pub const PAPER_WIDTHS: [usize; 7] = [32, 64, 128, 256, 256, 64, 64];
pub const DESK_WIDTHS: [usize; 7] = [4, 8, 16, 32, 32, 32, 32];
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: Preset,
    pub input_edge: usize,
    pub widths: [usize; 7],
    pub dropout_p: f64,
    pub task: Task,
    pub rotation_classes: usize,
}

impl ModelConfig {
    pub fn paper192(task: Task) -> Self {
        ModelConfig {
            preset: Preset::Paper192,
            input_edge: 192,
            widths: PAPER_WIDTHS,
            dropout_p: DEFAULT_DROPOUT,
            task,
            rotation_classes: 24,
        }
    }

    pub fn desk32(task: Task) -> Self {
        ModelConfig {
            preset: Preset::Desk32,
            input_edge: 32,
            widths: DESK_WIDTHS,
            dropout_p: DEFAULT_DROPOUT,
            task,
            rotation_classes: 24,
        }
    }

    pub fn for_preset(preset: Preset, task: Task) -> Self {
        match preset {
            Preset::Paper192 => Self::paper192(task),
            Preset::Desk32 => Self::desk32(task),
        }
    }

    /// Blocks followed by a max pool.
    pub fn pooled_blocks(&self) -> usize {
        match self.preset {
            Preset::Paper192 => 5,
            Preset::Desk32 => 4,
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        let arch = |stage: String, detail: String| Error::Architecture { stage, detail };
        if self.widths.contains(&0) {
            return Err(arch("config".into(), "channel widths must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Parameter(format!(
                "dropout p = {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if self.task.has(Task::Rotation) && self.rotation_classes < 2 {
            return Err(Error::Config(
                "rotation head needs at least 2 classes".into(),
            ));
        }
        let mut e = self.input_edge;
        let mut edges = vec![e];
        for b in 1..=self.pooled_blocks() {
            if e < 2 {
                return Err(arch(
                    format!("block {b} maxpool"),
                    format!("extent {e} below pool size 2"),
                ));
            }
            e /= 2;
            edges.push(e);
        }
        let last_pooled = e;
        let feature_edge = match self.preset {
            Preset::Desk32 => 1,
            Preset::Paper192 => {
                if e < 2 {
                    return Err(arch(
                        "block 7 avgpool".into(),
                        format!("extent {e} below pool size 2"),
                    ));
                }
                let a = (e - 2) / 2 + 1;
                if a < 3 {
                    return Err(arch(
                        "block 7 conv".into(),
                        format!("extent {a} after avgpool below valid 3x3x3 kernel"),
                    ));
                }
                a - 2
            }
        };
        let decoder_ok = last_pooled.is_multiple_of(feature_edge)
            && last_pooled << self.pooled_blocks() == self.input_edge;
        if self.task.has(Task::Reconstruction) && !decoder_ok {
            return Err(arch(
                "decoder".into(),
                format!(
                    "input edge {} is not {} times a power-of-two multiple of the bottleneck",
                    self.input_edge, last_pooled
                ),
            ));
        }
        Ok(Layout {
            block_edges: edges,
            last_pooled_edge: last_pooled,
            feature_edge,
            representation_dim: self.widths[6] * feature_edge.pow(3),
        })
    }

    pub fn representation_dim(&self) -> Result<usize> {
        Ok(self.layout()?.representation_dim)
    }

    /// Exact learnable parameter count, from the configuration alone.
    pub fn parameter_count(&self) -> Result<usize> {
        let layout = self.layout()?;
        let conv = |cin: usize, cout: usize, k: usize| k * k * k * cin * cout + cout;
        let bn = |c: usize| 2 * c;
        let w = self.widths;
        let mut n = 0;
        let mut cin = 1;
        for &cout in &w[..5] {
            n += conv(cin, cout, 3) + bn(cout);
            cin = cout;
        }
        n += conv(w[4], w[5], 1) + bn(w[5]);
        n += conv(w[5], w[6], self.block7_kernel());
        let d = layout.representation_dim;
        if self.task.has(Task::Age) {
            n += d + 1;
        }
        if self.task.has(Task::Rotation) {
            n += d * self.rotation_classes + self.rotation_classes;
        }
        if self.task.has(Task::Reconstruction) {
            let mut c = w[6];
            for i in 0..self.pooled_blocks() {
                let out = w[self.pooled_blocks() - 1 - i];
                n += conv(c, out, 3) + bn(out);
                c = out;
            }
            n += conv(c, 1, 3);
        }
        Ok(n)
    }

    fn block7_kernel(&self) -> usize {
        match self.preset {
            Preset::Paper192 => 3,
            Preset::Desk32 => 1,
        }
    }
}

/// Spatial extents implied by a configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    /// Input edge followed by the edge after each pooled block.
    pub block_edges: Vec<usize>,
    pub last_pooled_edge: usize,
    /// Spatial edge of the block-7 output.
    pub feature_edge: usize,
    pub representation_dim: usize,
}

fn add_conv<S: Scalar>(
    store: &mut ParameterStore<S>,
    name: &str,
    cin: usize,
    cout: usize,
    k: usize,
    rng: &mut Rng,
) -> Result<()> {
    let w = kaiming_normal(&[cout, cin, k, k, k], cin * k * k * k, rng);
    store.insert(format!("{name}.conv.w"), w, ParamKind::Learnable)?;
    store.insert(
        format!("{name}.conv.b"),
        Tensor::zeros(&[cout]),
        ParamKind::Learnable,
    )?;
    Ok(())
}

fn add_bn<S: Scalar>(store: &mut ParameterStore<S>, name: &str, c: usize) -> Result<()> {
    store.insert(
        format!("{name}.bn.gamma"),
        Tensor::full(&[c], S::one()),
        ParamKind::Learnable,
    )?;
    store.insert(
        format!("{name}.bn.beta"),
        Tensor::zeros(&[c]),
        ParamKind::Learnable,
    )?;
    store.insert(
        format!("{name}.bn.mean"),
        Tensor::zeros(&[c]),
        ParamKind::Buffer,
    )?;
    store.insert(
        format!("{name}.bn.var"),
        Tensor::full(&[c], S::one()),
        ParamKind::Buffer,
    )?;
    Ok(())
}

fn add_linear<S: Scalar>(
    store: &mut ParameterStore<S>,
    name: &str,
    fin: usize,
    fout: usize,
    rng: &mut Rng,
) -> Result<()> {
    store.insert(
        format!("{name}.w"),
        kaiming_normal(&[fout, fin], fin, rng),
        ParamKind::Learnable,
    )?;
    store.insert(
        format!("{name}.b"),
        Tensor::zeros(&[fout]),
        ParamKind::Learnable,
    )?;
    Ok(())
}

/// Initializes the encoder and every head the task needs.
pub fn build_parameters<S: Scalar>(cfg: &ModelConfig, rng: &mut Rng) -> Result<ParameterStore<S>> {
    let layout = cfg.layout()?;
    let mut store = ParameterStore::new();
    let w = cfg.widths;
    let mut cin = 1;
    for (b, &cout) in w[..5].iter().enumerate() {
        let name = format!("enc.b{}", b + 1);
        add_conv(&mut store, &name, cin, cout, 3, rng)?;
        add_bn(&mut store, &name, cout)?;
        cin = cout;
    }
    add_conv(&mut store, "enc.b6", w[4], w[5], 1, rng)?;
    add_bn(&mut store, "enc.b6", w[5])?;
    add_conv(&mut store, "enc.b7", w[5], w[6], cfg.block7_kernel(), rng)?;
    let d = layout.representation_dim;
    if cfg.task.has(Task::Age) {
        add_linear(&mut store, "head.age", d, 1, rng)?;
    }
    if cfg.task.has(Task::Rotation) {
        add_linear(&mut store, "head.rot", d, cfg.rotation_classes, rng)?;
    }
    if cfg.task.has(Task::Reconstruction) {
        let mut c = w[6];
        for i in 0..cfg.pooled_blocks() {
            let out = w[cfg.pooled_blocks() - 1 - i];
            let name = format!("dec.up{}", i + 1);
            add_conv(&mut store, &name, c, out, 3, rng)?;
            add_bn(&mut store, &name, out)?;
            c = out;
        }
        add_conv(&mut store, "dec.out", c, 1, 3, rng)?;
    }
    Ok(store)
}

#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    /// Block-7 output `[N, C, e, e, e]`, the decoder input.
    pub map: Var,
    /// Flattened `[N, representation_dim]`.
    pub features: Var,
}

fn conv_bn<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    store: &mut ParameterStore<S>,
    name: &str,
    x: Var,
    padding: usize,
    mode: Mode,
) -> Result<Var> {
    let y = g.conv3d(
        x,
        bound.get(&format!("{name}.conv.w"))?,
        bound.get(&format!("{name}.conv.b"))?,
        1,
        padding,
    )?;
    let running = store.running(&format!("{name}.bn.mean"), &format!("{name}.bn.var"))?;
    Ok(g.batchnorm3d(
        y,
        bound.get(&format!("{name}.bn.gamma"))?,
        bound.get(&format!("{name}.bn.beta"))?,
        running,
        mode,
    )?)
}

/// Runs the seven encoder blocks on `x: [N, 1, e, e, e]`.
pub fn encoder_forward<S: Scalar>(
    cfg: &ModelConfig,
    g: &mut Graph<S>,
    bound: &Bound,
    store: &mut ParameterStore<S>,
    x: Var,
    mode: Mode,
    rng: &mut Rng,
) -> Result<EncoderOutput> {
    let shape = g.shape(x).to_vec();
    let e = cfg.input_edge;
    if shape.len() != 5 || shape[1] != 1 || shape[2..] != [e, e, e] {
        return Err(Error::Shape(format!(
            "encoder expects [N, 1, {e}, {e}, {e}], got {shape:?}"
        )));
    }
    let mut h = x;
    for b in 1..=5 {
        let name = format!("enc.b{b}");
        h = conv_bn(g, bound, store, &name, h, 1, mode)?;
        if b <= cfg.pooled_blocks() {
            h = g.maxpool3d(h, 2, 2)?;
        }
        h = g.relu(h)?;
    }
    h = conv_bn(g, bound, store, "enc.b6", h, 0, mode)?;
    h = g.relu(h)?;
    h = match cfg.preset {
        Preset::Desk32 => g.global_avgpool3d(h)?,
        Preset::Paper192 => g.avgpool3d(h, 2, 2)?,
    };
    h = g.dropout(h, cfg.dropout_p, mode, rng)?;
    let map = g.conv3d(
        h,
        bound.get("enc.b7.conv.w")?,
        bound.get("enc.b7.conv.b")?,
        1,
        0,
    )?;
    let features = g.flatten(map)?;
    Ok(EncoderOutput { map, features })
}

fn head_params(bound: &Bound, name: &str) -> Result<(Var, Var)> {
    match (
        bound.get(&format!("{name}.w")),
        bound.get(&format!("{name}.b")),
    ) {
        (Ok(w), Ok(b)) => Ok((w, b)),
        _ => Err(Error::Config(format!(
            "model has no {name} parameters for this task"
        ))),
    }
}

/// `[N, d] -> [N, 1]` standardized age prediction.
pub fn age_head<S: Scalar>(g: &mut Graph<S>, bound: &Bound, features: Var) -> Result<Var> {
    let (w, b) = head_params(bound, "head.age")?;
    Ok(g.linear(features, w, b)?)
}

/// `[N, d] -> [N, K]` rotation logits.
pub fn rotation_head<S: Scalar>(g: &mut Graph<S>, bound: &Bound, features: Var) -> Result<Var> {
    let (w, b) = head_params(bound, "head.rot")?;
    Ok(g.linear(features, w, b)?)
}

/// Mirrors the pooled blocks back up to `[N, 1, e, e, e]` in `[0, 1]`.
pub fn decoder_forward<S: Scalar>(
    cfg: &ModelConfig,
    g: &mut Graph<S>,
    bound: &Bound,
    store: &mut ParameterStore<S>,
    map: Var,
    mode: Mode,
) -> Result<Var> {
    if !cfg.task.has(Task::Reconstruction) {
        return Err(Error::Config(format!(
            "task {} has no decoder",
            cfg.task.name()
        )));
    }
    let layout = cfg.layout()?;
    let mut h = g.upsample_nearest(map, layout.last_pooled_edge / layout.feature_edge)?;
    for i in 1..=cfg.pooled_blocks() {
        h = g.upsample_nearest(h, 2)?;
        h = conv_bn(g, bound, store, &format!("dec.up{i}"), h, 1, mode)?;
        h = g.relu(h)?;
    }
    let y = g.conv3d(
        h,
        bound.get("dec.out.conv.w")?,
        bound.get("dec.out.conv.b")?,
        1,
        1,
    )?;
    Ok(g.sigmoid(y)?)
}

/// Stacks cubic volumes into `[N, 1, e, e, e]`.
pub fn batch_tensor<S: Scalar>(volumes: &[&Volume]) -> Result<Tensor<S>> {
    let items: Vec<Tensor<S>> = volumes.iter().map(|v| v.to_tensor()).collect();
    Ok(Tensor::stack(&items)?)
}

const STREAM_INIT: u64 = 0x1a17;

#[derive(Clone, Debug)]
pub struct SslModel {
    pub config: ModelConfig,
    pub params: ParameterStore<f32>,
}

impl SslModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed, STREAM_INIT);
        let params = build_parameters(&config, &mut rng)?;
        Ok(SslModel { config, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.learnable_count()
    }

    /// Eval-mode representations, one vector per volume.
    pub fn extract(&self, volumes: &[&Volume]) -> Result<Vec<Vec<f32>>> {
        if volumes.is_empty() {
            return Ok(Vec::new());
        }
        let mut store = self.params.clone();
        let mut g = Graph::new();
        let bound = store.bind_frozen(&mut g);
        let x = g.input(batch_tensor(volumes)?);
        let mut rng = Rng::new(0, 0);
        let out = encoder_forward(
            &self.config,
            &mut g,
            &bound,
            &mut store,
            x,
            Mode::Eval,
            &mut rng,
        )?;
        let f = g.value(out.features);
        let d = f.shape()[1];
        Ok(f.data().chunks(d).map(|c| c.to_vec()).collect())
    }

    /// Writes `model.vpxw` and `model.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let mut w = BufWriter::new(File::create(dir.join("model.vpxw"))?);
        write_checkpoint(&self.params, &mut w)?;
        w.flush()?;
        let mut c = BufWriter::new(File::create(dir.join("model.json"))?);
        serde_json::to_writer_pretty(&mut c, &self.config)?;
        c.write_all(b"\n")?;
        c.flush()?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config: ModelConfig =
            serde_json::from_reader(BufReader::new(File::open(dir.join("model.json"))?))?;
        let mut model = SslModel::new(config, 0)?;
        let entries = read_checkpoint(BufReader::new(File::open(dir.join("model.vpxw"))?))?;
        model.params.load(entries)?;
        Ok(model)
    }
}

/// Central-difference step for whole-model checks. With a 32^3 input, a
/// 1e-5 step moves enough pre-activations across ReLU and max-pool switch
/// points to dominate the first block's error; 1e-6 stays clear of them.
pub const MODEL_CHECK_STEP: f64 = 1e-6;

/// Finite-difference check of the full encoder plus one head at 64-bit, in
/// train mode with a fixed dropout mask, on a random batch.
pub fn grad_check_model(
    cfg: &ModelConfig,
    head: Task,
    batch: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if head == Task::Multihead || !cfg.task.has(head) {
        return Err(Error::Config(format!(
            "cannot check head {} of a {} model",
            head.name(),
            cfg.task.name()
        )));
    }
    let mut rng = Rng::new(seed, STREAM_INIT);
    let mut store: ParameterStore<f64> = build_parameters(cfg, &mut rng)?;
    let e = cfg.input_edge;
    let x = Tensor::<f64>::uniform(&[batch, 1, e, e, e], 0.0, 1.0, &mut rng);
    let ages = Tensor::<f64>::randn(&[batch, 1], 1.0, &mut rng);
    let labels: Vec<usize> = (0..batch)
        .map(|_| rng.index(cfg.rotation_classes))
        .collect();
    let to_vol = |e: Error| match e {
        Error::Tensor(v) => v,
        other => VolError::Parameter(other.to_string()),
    };
    let report = grad_check(&mut store, MODEL_CHECK_STEP, |g, bound, store| {
        let mut drop_rng = Rng::new(seed, 0xd40);
        let input = g.input(x.clone());
        let enc = encoder_forward(cfg, g, bound, store, input, Mode::Train, &mut drop_rng)
            .map_err(to_vol)?;
        match head {
            Task::Age => {
                let p = age_head(g, bound, enc.features).map_err(to_vol)?;
                let t = g.input(ages.clone());
                g.mse(p, t)
            }
            Task::Rotation => {
                let l = rotation_head(g, bound, enc.features).map_err(to_vol)?;
                g.cross_entropy(l, &labels)
            }
            _ => {
                let r =
                    decoder_forward(cfg, g, bound, store, enc.map, Mode::Train).map_err(to_vol)?;
                let t = g.input(x.clone());
                g.mse(r, t)
            }
        }
    })?;
    Ok(report)
}
