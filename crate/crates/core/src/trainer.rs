//! Pretext training: Adam, step schedule, random crop and the per-task loops.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use volcore::{Bound, Gradients, Graph, Mode, ParamKind, ParameterStore, Rng, Tensor, VolError};

use crate::error::{Error, Result};
use crate::model::{
    age_head, batch_tensor, decoder_forward, encoder_forward, rotation_head, SslModel, Task,
};
use crate::phantom::{CohortRole, ScanRecord};
use crate::rotgrid::{dedup_classes, LabelScheme, LabelTable};
use crate::volume::Volume;

/// Age targets are standardized as `(age - AGE_CENTER) / AGE_SCALE`.
pub const AGE_CENTER: f64 = 63.0;
pub const AGE_SCALE: f64 = 19.0;

const STREAM_SHUFFLE: u64 = 0x5e1;
const STREAM_CROP: u64 = 0xc40;
const STREAM_ROTATION: u64 = 0x407;
const STREAM_DROPOUT: u64 = 0xd40;
const STREAM_HEADS: u64 = 0x4ead;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub batch_size: usize,
    /// `(source_edge, target_edge)`.
    pub crop: Option<(usize, usize)>,
    pub seed: u64,
    pub label_scheme: LabelScheme,
}

impl TrainConfig {
    /// Batch sizes 15 / 20 / 12 / 12 and 50 epochs, cropping 200 to 192.
    pub fn paper(task: Task) -> Self {
        let batch_size = match task {
            Task::Age => 15,
            Task::Rotation => 20,
            Task::Reconstruction | Task::Multihead => 12,
        };
        TrainConfig {
            task,
            epochs: 50,
            base_lr: 0.001,
            lr_step: 20,
            lr_gamma: 0.5,
            batch_size,
            crop: Some((200, 192)),
            seed: 0,
            label_scheme: LabelScheme::Unique24,
        }
    }

    pub fn desk(task: Task) -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            crop: None,
            ..TrainConfig::paper(task)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return Err(Error::Config(format!(
                "lr_gamma {} outside (0, 1]",
                self.lr_gamma
            )));
        }
        if self.lr_step < 1 {
            return Err(Error::Config("lr_step must be >= 1".into()));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config(format!(
                "base_lr {} must be positive",
                self.base_lr
            )));
        }
        if let Some((src, dst)) = self.crop {
            if dst > src {
                return Err(Error::Config(format!(
                    "crop target {dst} larger than source {src}"
                )));
            }
        }
        Ok(())
    }
}

/// `base_lr * gamma^floor(epoch / step)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.base_lr * cfg.lr_gamma.powi((epoch / cfg.lr_step) as i32)
}

/// Uniform sub-cube of edge `target`; returns the crop and its offsets.
pub fn random_crop(v: &Volume, target: usize, rng: &mut Rng) -> Result<(Volume, [usize; 3])> {
    let edge = v.cubic_edge().ok_or_else(|| {
        Error::Shape(format!(
            "random_crop needs a cubic volume, got {:?}",
            v.shape()
        ))
    })?;
    if target > edge || target == 0 {
        return Err(Error::Parameter(format!(
            "crop edge {target} not in [1, {edge}]"
        )));
    }
    let off = [0; 3].map(|_| rng.int_inclusive(0, edge - target));
    let mut out = Volume::from_fn([target; 3], |z, y, x| {
        v.get(z + off[0], y + off[1], x + off[2])
    });
    out.meta = v.meta.clone();
    Ok((out, off))
}

/// Adam with per-parameter step counts; a parameter only advances when it
/// receives a gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    state: BTreeMap<String, AdamSlot>,
}

#[derive(Clone, Debug)]
struct AdamSlot {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            state: BTreeMap::new(),
        }
    }
}

impl Adam {
    pub fn step(
        &mut self,
        store: &mut ParameterStore<f32>,
        bound: &Bound,
        grads: &Gradients<f32>,
        lr: f64,
        include: impl Fn(&str) -> bool,
    ) {
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        for p in store.iter_mut() {
            if p.kind != ParamKind::Learnable || !include(&p.name) {
                continue;
            }
            let Ok(var) = bound.get(&p.name) else {
                continue;
            };
            let Some(g) = grads.get(var) else { continue };
            let slot = self
                .state
                .entry(p.name.clone())
                .or_insert_with(|| AdamSlot {
                    m: vec![0.0; g.len()],
                    v: vec![0.0; g.len()],
                    t: 0,
                });
            slot.t += 1;
            let c1 = 1.0 - self.beta1.powi(slot.t);
            let c2 = 1.0 - self.beta2.powi(slot.t);
            let step = (lr * c2.sqrt() / c1) as f32;
            let eps = (self.eps * c2.sqrt()) as f32;
            for (((w, &gi), m), v) in p
                .tensor
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(slot.m.iter_mut())
                .zip(slot.v.iter_mut())
            {
                *m = b1 * *m + (1.0 - b1) * gi;
                *v = b2 * *v + (1.0 - b2) * gi * gi;
                *w -= step * *m / (v.sqrt() + eps);
            }
        }
    }
}

/// Pretraining volumes with their records. Construction refuses records
/// from the evaluation cohort, so training can never read them.
#[derive(Debug)]
pub struct TrainSet<'a> {
    volumes: Vec<&'a Volume>,
    records: Vec<&'a ScanRecord>,
}

impl<'a> TrainSet<'a> {
    pub fn new(volumes: &'a [Volume], records: &'a [ScanRecord]) -> Result<Self> {
        if volumes.len() != records.len() {
            return Err(Error::Data(format!(
                "{} volumes for {} records",
                volumes.len(),
                records.len()
            )));
        }
        if let Some(r) = records.iter().find(|r| r.cohort != CohortRole::Pretrain) {
            return Err(Error::Leakage(format!(
                "training access to evaluation scan {} (subject {})",
                r.scan_id, r.subject_id
            )));
        }
        Ok(TrainSet {
            volumes: volumes.iter().collect(),
            records: records.iter().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    pub fn volume(&self, i: usize) -> &Volume {
        self.volumes[i]
    }

    pub fn record(&self, i: usize) -> &ScanRecord {
        self.records[i]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean loss per head, weighted by batch size.
    pub losses: BTreeMap<String, f64>,
    /// Rotation training accuracy (train-mode predictions).
    pub accuracy: Option<f64>,
    /// Age mean absolute error in years (train-mode predictions).
    pub age_mae: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Wall-clock seconds per epoch; kept apart from the reproducible log.
    pub timings: Vec<f64>,
    /// Head order per multi-head batch.
    pub head_orders: Vec<[Task; 3]>,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let epochs = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<EpochLog>, _>>()?;
        Ok(TrainLog {
            epochs,
            ..TrainLog::default()
        })
    }

    pub fn loss(&self, epoch: usize, head: &str) -> Option<f64> {
        self.epochs.get(epoch)?.losses.get(head).copied()
    }
}

/// Inputs for one head on one batch.
enum Target {
    Age(Vec<f64>),
    Rotation(Vec<usize>),
    Reconstruction,
}

struct StepStats {
    loss: f64,
    correct: usize,
    abs_error_years: f64,
}

fn head_prefix(head: Task) -> &'static str {
    match head {
        Task::Age => "head.age.",
        Task::Rotation => "head.rot.",
        Task::Reconstruction => "dec.",
        Task::Multihead => unreachable!("multihead is not a single head"),
    }
}

#[allow(clippy::too_many_arguments)]
fn step_head(
    model: &mut SslModel,
    adam: &mut Adam,
    head: Task,
    x: Tensor<f32>,
    target: &Target,
    lr: f64,
    rng: &mut Rng,
    context: (usize, usize),
) -> Result<StepStats> {
    let numeric = |e: Error| match e {
        Error::Tensor(VolError::NonFinite { .. }) => Error::NonFiniteLoss {
            head: head.name().into(),
            epoch: context.0,
            batch: context.1,
        },
        other => other,
    };
    let mut run = || -> Result<StepStats> {
        let cfg = &model.config;
        let mut g = Graph::new();
        let bound = model.params.bind(&mut g);
        let input = g.input(x.clone());
        let enc = encoder_forward(
            cfg,
            &mut g,
            &bound,
            &mut model.params,
            input,
            Mode::Train,
            rng,
        )?;
        let mut stats = StepStats {
            loss: 0.0,
            correct: 0,
            abs_error_years: 0.0,
        };
        let loss = match target {
            Target::Age(ages) => {
                let pred = age_head(&mut g, &bound, enc.features)?;
                let t: Vec<f32> = ages
                    .iter()
                    .map(|a| ((a - AGE_CENTER) / AGE_SCALE) as f32)
                    .collect();
                let tv = g.input(Tensor::new(vec![ages.len(), 1], t)?);
                for (p, a) in g.value(pred).data().iter().zip(ages) {
                    stats.abs_error_years += (*p as f64 * AGE_SCALE + AGE_CENTER - a).abs();
                }
                g.mse(pred, tv)?
            }
            Target::Rotation(labels) => {
                let logits = rotation_head(&mut g, &bound, enc.features)?;
                let k = g.shape(logits)[1];
                for (row, &l) in g.value(logits).data().chunks(k).zip(labels) {
                    let arg = row
                        .iter()
                        .enumerate()
                        .fold(
                            (0, f32::NEG_INFINITY),
                            |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                        )
                        .0;
                    stats.correct += (arg == l) as usize;
                }
                g.cross_entropy(logits, labels)?
            }
            Target::Reconstruction => {
                let recon =
                    decoder_forward(cfg, &mut g, &bound, &mut model.params, enc.map, Mode::Train)?;
                let tv = g.input(x.clone());
                g.mse(recon, tv)?
            }
        };
        stats.loss = g.value(loss).item() as f64;
        if !stats.loss.is_finite() {
            return Err(Error::Tensor(VolError::NonFinite { op: "loss" }));
        }
        let grads = g.backward(loss)?;
        let prefix = head_prefix(head);
        adam.step(&mut model.params, &bound, &grads, lr, |name| {
            name.starts_with("enc.") || name.starts_with(prefix)
        });
        Ok(stats)
    };
    run().map_err(numeric)
}

fn check_setup(model: &SslModel, data: &TrainSet, cfg: &TrainConfig) -> Result<Option<LabelTable>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let mc = &model.config;
    let compatible = mc.task == cfg.task || mc.task == Task::Multihead;
    if !compatible {
        return Err(Error::Config(format!(
            "model built for {} cannot train {}",
            mc.task.name(),
            cfg.task.name()
        )));
    }
    let edge = match cfg.crop {
        Some((src, dst)) => {
            if dst != mc.input_edge {
                return Err(Error::Config(format!(
                    "crop target {dst} differs from model input edge {}",
                    mc.input_edge
                )));
            }
            src
        }
        None => mc.input_edge,
    };
    for i in 0..data.len() {
        if data.volume(i).shape() != [edge; 3] {
            return Err(Error::Shape(format!(
                "training volume {} has shape {:?}, expected {edge}^3",
                data.record(i).scan_id,
                data.volume(i).shape()
            )));
        }
    }
    let needs_rotation = cfg.task == Task::Rotation || cfg.task == Task::Multihead;
    Ok(if needs_rotation {
        let table = dedup_classes(cfg.label_scheme);
        if table.classes != mc.rotation_classes {
            return Err(Error::Config(format!(
                "label scheme has {} classes, rotation head has {}",
                table.classes, mc.rotation_classes
            )));
        }
        Some(table)
    } else {
        None
    })
}

struct Streams {
    shuffle: Rng,
    crop: Rng,
    rotation: Rng,
    dropout: Rng,
    heads: Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Streams {
            shuffle: Rng::new(seed, STREAM_SHUFFLE),
            crop: Rng::new(seed, STREAM_CROP),
            rotation: Rng::new(seed, STREAM_ROTATION),
            dropout: Rng::new(seed, STREAM_DROPOUT),
            heads: Rng::new(seed, STREAM_HEADS),
        }
    }
}

fn batch_volumes(
    data: &TrainSet,
    idx: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<Vec<Volume>> {
    idx.iter()
        .map(|&i| match cfg.crop {
            Some((_, dst)) => Ok(random_crop(data.volume(i), dst, rng)?.0),
            None => Ok(data.volume(i).clone()),
        })
        .collect()
}

fn rotated_batch(
    vols: &[Volume],
    table: &LabelTable,
    rng: &mut Rng,
) -> Result<(Vec<Volume>, Vec<usize>)> {
    let mut out = Vec::with_capacity(vols.len());
    let mut labels = Vec::with_capacity(vols.len());
    for v in vols {
        let class = rng.index(table.classes);
        let spec = table.representative(class).expect("every class has a spec");
        out.push(crate::rotgrid::apply(spec, v)?);
        labels.push(class);
    }
    Ok((out, labels))
}

#[derive(Default)]
struct Accum {
    loss: f64,
    items: usize,
    correct: usize,
    abs_error: f64,
}

impl Accum {
    fn add(&mut self, s: &StepStats, n: usize) {
        self.loss += s.loss * n as f64;
        self.items += n;
        self.correct += s.correct;
        self.abs_error += s.abs_error_years;
    }
}

fn epoch_log(epoch: usize, lr: f64, acc: &BTreeMap<Task, Accum>) -> EpochLog {
    let losses = acc
        .iter()
        .map(|(t, a)| (t.name().to_string(), a.loss / a.items as f64))
        .collect();
    EpochLog {
        epoch,
        lr,
        losses,
        accuracy: acc
            .get(&Task::Rotation)
            .map(|a| a.correct as f64 / a.items as f64),
        age_mae: acc.get(&Task::Age).map(|a| a.abs_error / a.items as f64),
    }
}

fn head_target(head: Task, data: &TrainSet, idx: &[usize], labels: &[usize]) -> Target {
    match head {
        Task::Age => Target::Age(idx.iter().map(|&i| data.record(i).age).collect()),
        Task::Rotation => Target::Rotation(labels.to_vec()),
        _ => Target::Reconstruction,
    }
}

/// Trains a single head (`age`, `rotation` or `reconstruction`).
pub fn train_task(model: &mut SslModel, data: &TrainSet, cfg: &TrainConfig) -> Result<TrainLog> {
    if cfg.task == Task::Multihead {
        return train_multihead(model, data, cfg);
    }
    let table = check_setup(model, data, cfg)?;
    let mut streams = Streams::new(cfg.seed);
    let mut adam = Adam::default();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_at(epoch, cfg);
        let order = streams.shuffle.permutation(data.len());
        let mut acc: BTreeMap<Task, Accum> = BTreeMap::new();
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let vols = batch_volumes(data, idx, cfg, &mut streams.crop)?;
            let (vols, labels) = match &table {
                Some(t) => rotated_batch(&vols, t, &mut streams.rotation)?,
                None => (vols, Vec::new()),
            };
            let x = batch_tensor(&vols.iter().collect::<Vec<_>>())?;
            let target = head_target(cfg.task, data, idx, &labels);
            let stats = step_head(
                model,
                &mut adam,
                cfg.task,
                x,
                &target,
                lr,
                &mut streams.dropout,
                (epoch, b),
            )?;
            acc.entry(cfg.task).or_default().add(&stats, idx.len());
        }
        log.epochs.push(epoch_log(epoch, lr, &acc));
        log.timings.push(start.elapsed().as_secs_f64());
    }
    Ok(log)
}

pub const HEADS: [Task; 3] = [Task::Age, Task::Rotation, Task::Reconstruction];

/// Uniformly random order of the three heads.
pub fn draw_head_order(rng: &mut Rng) -> [Task; 3] {
    let perm = rng.permutation(3);
    [HEADS[perm[0]], HEADS[perm[1]], HEADS[perm[2]]]
}

/// Per batch, visits the three heads in a random order and takes one
/// optimizer step per head on that head's loss alone.
pub fn train_multihead(
    model: &mut SslModel,
    data: &TrainSet,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    if model.config.task != Task::Multihead || cfg.task != Task::Multihead {
        return Err(Error::Config(
            "multi-head training needs a multihead model and config".into(),
        ));
    }
    let table = check_setup(model, data, cfg)?.expect("multihead uses rotation labels");
    let mut streams = Streams::new(cfg.seed);
    let mut adam = Adam::default();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = lr_at(epoch, cfg);
        let order = streams.shuffle.permutation(data.len());
        let mut acc: BTreeMap<Task, Accum> = BTreeMap::new();
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let vols = batch_volumes(data, idx, cfg, &mut streams.crop)?;
            let (rotated, labels) = rotated_batch(&vols, &table, &mut streams.rotation)?;
            let heads = draw_head_order(&mut streams.heads);
            log.head_orders.push(heads);
            for head in heads {
                let source = if head == Task::Rotation {
                    &rotated
                } else {
                    &vols
                };
                let x = batch_tensor(&source.iter().collect::<Vec<_>>())?;
                let target = head_target(head, data, idx, &labels);
                let stats = step_head(
                    model,
                    &mut adam,
                    head,
                    x,
                    &target,
                    lr,
                    &mut streams.dropout,
                    (epoch, b),
                )?;
                acc.entry(head).or_default().add(&stats, idx.len());
            }
        }
        log.epochs.push(epoch_log(epoch, lr, &acc));
        log.timings.push(start.elapsed().as_secs_f64());
    }
    Ok(log)
}

/// Eval-mode pretext performance on a training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PretextEval {
    pub rotation_accuracy: Option<f64>,
    pub age_mae: Option<f64>,
    pub reconstruction_loss: Option<f64>,
}

/// Scores every head of `model` in eval mode (no dropout, running batch-norm
/// statistics). Rotation labels are drawn from `seed`; crops, when
/// configured, are taken at the centre.
pub fn evaluate_pretext(
    model: &SslModel,
    data: &TrainSet,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<PretextEval> {
    let table = check_setup(model, data, cfg)?;
    let mc = &model.config;
    let mut rng = Rng::new(seed, STREAM_ROTATION);
    let mut store = model.params.clone();
    let mut correct = 0;
    let mut abs_err = 0.0;
    let mut recon = 0.0;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(cfg.batch_size.max(1)) {
        let vols: Vec<Volume> = chunk
            .iter()
            .map(|&i| match cfg.crop {
                Some((src, dst)) => {
                    let o = (src - dst) / 2;
                    let v = data.volume(i);
                    Volume::from_fn([dst; 3], |z, y, x| v.get(z + o, y + o, x + o))
                }
                None => data.volume(i).clone(),
            })
            .collect();
        let mut forward = |input: &[Volume], head: Task| -> Result<Vec<f32>> {
            let mut g = Graph::new();
            let bound = store.bind_frozen(&mut g);
            let x = g.input(batch_tensor(&input.iter().collect::<Vec<_>>())?);
            let enc = encoder_forward(
                mc,
                &mut g,
                &bound,
                &mut store,
                x,
                Mode::Eval,
                &mut Rng::new(0, 0),
            )?;
            let out = match head {
                Task::Age => age_head(&mut g, &bound, enc.features)?,
                Task::Rotation => rotation_head(&mut g, &bound, enc.features)?,
                _ => {
                    let r = decoder_forward(mc, &mut g, &bound, &mut store, enc.map, Mode::Eval)?;
                    let t = g.input(batch_tensor(&input.iter().collect::<Vec<_>>())?);
                    let loss = g.mse(r, t)?;
                    g.reshape(loss, vec![1])?
                }
            };
            Ok(g.value(out).data().to_vec())
        };
        if let Some(t) = &table {
            let (rot, labels) = rotated_batch(&vols, t, &mut rng)?;
            let logits = forward(&rot, Task::Rotation)?;
            let k = t.classes;
            for (row, &l) in logits.chunks(k).zip(&labels) {
                let arg = row
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f32::NEG_INFINITY),
                        |b, (i, &v)| if v > b.1 { (i, v) } else { b },
                    )
                    .0;
                correct += (arg == l) as usize;
            }
        }
        if mc.task == Task::Age || mc.task == Task::Multihead {
            let pred = forward(&vols, Task::Age)?;
            for (p, &i) in pred.iter().zip(chunk) {
                abs_err += (*p as f64 * AGE_SCALE + AGE_CENTER - data.record(i).age).abs();
            }
        }
        if mc.task == Task::Reconstruction || mc.task == Task::Multihead {
            recon += forward(&vols, Task::Reconstruction)?[0] as f64 * chunk.len() as f64;
        }
    }
    let n = data.len() as f64;
    let has = |t: Task| mc.task == t || mc.task == Task::Multihead;
    Ok(PretextEval {
        rotation_accuracy: table.map(|_| correct as f64 / n),
        age_mae: has(Task::Age).then(|| abs_err / n),
        reconstruction_loss: has(Task::Reconstruction).then(|| recon / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_points() {
        let cfg = TrainConfig::paper(Task::Age);
        assert_eq!(lr_at(0, &cfg), 0.001);
        assert_eq!(lr_at(19, &cfg), 0.001);
        assert_eq!(lr_at(20, &cfg), 0.0005);
        assert_eq!(lr_at(40, &cfg), 0.00025);
    }

    #[test]
    fn paper_batch_sizes() {
        let sizes: Vec<usize> = [
            Task::Age,
            Task::Rotation,
            Task::Reconstruction,
            Task::Multihead,
        ]
        .iter()
        .map(|&t| TrainConfig::paper(t).batch_size)
        .collect();
        assert_eq!(sizes, vec![15, 20, 12, 12]);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::desk(Task::Age);
        c.lr_gamma = 0.0;
        assert!(c.validate().is_err());
        c.lr_gamma = 1.0;
        c.crop = Some((32, 36));
        assert!(c.validate().is_err());
        c.crop = None;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn crop_bounds() {
        let v = Volume::filled([8, 8, 8], 1.0);
        let mut rng = Rng::new(0, 0);
        assert!(random_crop(&v, 9, &mut rng).is_err());
        let (c, off) = random_crop(&v, 8, &mut rng).unwrap();
        assert_eq!(off, [0, 0, 0]);
        assert_eq!(c, v);
    }
}
