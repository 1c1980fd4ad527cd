//! One function per subcommand. Each reads its settings, writes its outputs
//! and the resolved config into the run directory, and never touches inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use volpretext::cohort::{audit_leakage, grouped_kfold, select_scans, SplitPlan};
use volpretext::eval::{
    evaluate_downstream, format_table, DownstreamConfig, DownstreamReport, FeatureRow,
    FeatureTable, ForestConfig, SvmConfig,
};
use volpretext::model::{ModelConfig, Preset, SslModel, Task};
use volpretext::phantom::{
    generate_cohort, read_manifest, write_manifest, CohortRole, CohortSpec, ScanRecord,
};
use volpretext::prep::{preprocess_pipeline, ClaheParams};
use volpretext::rotgrid::LabelScheme;
use volpretext::trainer::{train_task, TrainConfig, TrainLog, TrainSet};
use volpretext::{read_volume, write_volume, Volume};

use crate::config::{CliResult, Failure, Settings, EXIT_LEAKAGE};
use crate::report;

pub const MANIFEST: &str = "manifest.jsonl";
pub const VOLUMES: &str = "volumes";

/// Global settings shared by every subcommand.
pub struct Run {
    pub seed: u64,
    pub preset: Preset,
    pub out: PathBuf,
}

pub fn resolve_run(s: &mut Settings) -> CliResult<Run> {
    let seed = s.u64("seed", 0)?;
    let preset = s.parsed("preset", "desk32")?;
    let out = s.path("out")?;
    let precision = s.string("precision", "f32")?;
    if precision != "f32" {
        return Err(Failure::config(format!(
            "precision '{precision}' is not supported; training runs in f32"
        )));
    }
    Ok(Run { seed, preset, out })
}

/// Creates the run directory and records the resolved settings.
fn open_run(run: &Run, s: &Settings) -> CliResult<()> {
    fs::create_dir_all(&run.out)?;
    write_new(&run.out.join("config.json"), s.resolved_json().as_bytes())
}

/// Outputs are write-once; an existing file is never replaced.
fn write_new(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut f = OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(path)
        .map_err(|e| Failure::config(format!("cannot create {}: {e}", path.display())))?;
    f.write_all(bytes)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::data(e.to_string()))?;
    text.push('\n');
    write_new(path, text.as_bytes())
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> CliResult<Vec<ScanRecord>> {
    let f = File::open(path)
        .map_err(|e| Failure::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(read_manifest(BufReader::new(f))?)
}

fn volume_path(dir: &Path, scan_id: &str) -> PathBuf {
    dir.join(VOLUMES).join(format!("{scan_id}.volb"))
}

fn load_volumes(dir: &Path, records: &[ScanRecord]) -> CliResult<Vec<Volume>> {
    records
        .iter()
        .map(|r| {
            let p = volume_path(dir, &r.scan_id);
            read_volume(&p).map_err(|e| Failure::data(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn save_cohort(out: &Path, volumes: &[Volume], records: &[ScanRecord]) -> CliResult<()> {
    let mut buf = Vec::new();
    write_manifest(records, &mut buf)?;
    write_new(&out.join(MANIFEST), &buf)?;
    fs::create_dir_all(out.join(VOLUMES))?;
    for (v, r) in volumes.iter().zip(records) {
        let p = volume_path(out, &r.scan_id);
        if p.exists() {
            return Err(Failure::config(format!(
                "refusing to overwrite {}",
                p.display()
            )));
        }
        write_volume(v, &p)?;
    }
    Ok(())
}

fn default_edge(preset: Preset) -> usize {
    ModelConfig::for_preset(preset, Task::Age).input_edge
}

pub fn gen(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let role = match s.string("gen.role", "pretrain")?.as_str() {
        "pretrain" => CohortRole::Pretrain,
        "eval" => CohortRole::Eval,
        other => {
            return Err(Failure::config(format!(
                "gen.role '{other}' is not pretrain|eval"
            )))
        }
    };
    let base = match role {
        CohortRole::Pretrain => CohortSpec::pretrain(200, default_edge(run.preset), run.seed),
        CohortRole::Eval => CohortSpec {
            scans_max: 3,
            ..CohortSpec::eval(100, default_edge(run.preset), run.seed)
        },
    };
    let spec = CohortSpec {
        n_subjects: s.usize("gen.subjects", base.n_subjects)?,
        grid: s.usize("gen.grid", base.grid)?,
        scans_min: s.usize("gen.scans_min", base.scans_min)?,
        scans_max: s.usize("gen.scans_max", base.scans_max)?,
        ad_fraction: s.f64("gen.ad_fraction", base.ad_fraction)?,
        noise_sigma: s.f64("gen.noise_sigma", base.noise_sigma)?,
        severity_min: s.f64("gen.severity_min", base.severity_min)?,
        severity_max: s.f64("gen.severity_max", base.severity_max)?,
        ..base
    };
    open_run(&run, s)?;
    let (volumes, records) = generate_cohort(&spec)?;
    write_json(&run.out.join("cohort.json"), &spec)?;
    save_cohort(&run.out, &volumes, &records)?;
    println!(
        "{} scans of {} subjects -> {}",
        records.len(),
        spec.n_subjects,
        run.out.display()
    );
    Ok(())
}

pub fn prep(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let input = s.path("prep.input")?;
    let clahe_default = match run.preset {
        Preset::Paper192 => ClaheParams::paper(),
        Preset::Desk32 => ClaheParams::desk(),
    };
    // The paper preset crops 200 to 192 during training.
    let edge_default = match run.preset {
        Preset::Paper192 => 200,
        Preset::Desk32 => 32,
    };
    let edge = s.usize("prep.edge", edge_default)?;
    let clahe = ClaheParams {
        tiles_per_axis: s.usize("prep.clahe.tiles_per_axis", clahe_default.tiles_per_axis)?,
        bins: s.usize("prep.clahe.bins", clahe_default.bins)?,
        clip_limit: s.f64("prep.clahe.clip_limit", clahe_default.clip_limit)?,
    };
    clahe.validate()?;
    let records = load_manifest(&input.join(MANIFEST))?;
    open_run(&run, s)?;
    let stamp = format!(
        "resize {edge}^3, minmax, clahe tiles={} bins={} clip={}",
        clahe.tiles_per_axis, clahe.bins, clahe.clip_limit
    );
    let mut out = Vec::with_capacity(records.len());
    for (v, r) in load_volumes(&input, &records)?.iter().zip(&records) {
        let p = preprocess_pipeline(v, [edge; 3], &clahe)?;
        out.push(p.with_meta(format!("{}; {stamp}", r.scan_id)));
    }
    save_cohort(&run.out, &out, &records)?;
    println!(
        "{} volumes preprocessed -> {}",
        records.len(),
        run.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Timings {
    total_seconds: f64,
    epoch_seconds: Vec<f64>,
}

pub fn pretrain(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let data_dir = s.path("pretrain.data")?;
    let task: Task = s.parsed("pretrain.task", "rotation")?;
    let base = match run.preset {
        Preset::Paper192 => TrainConfig::paper(task),
        Preset::Desk32 => TrainConfig::desk(task),
    };
    let (src0, dst0) = base.crop.unwrap_or((0, 0));
    let crop = match (
        s.usize("pretrain.crop_source", src0)?,
        s.usize("pretrain.crop_target", dst0)?,
    ) {
        (0, 0) => None,
        (a, b) if a > 0 && b > 0 => Some((a, b)),
        _ => {
            return Err(Failure::config(
                "pretrain.crop_source and pretrain.crop_target must both be 0 or both positive",
            ))
        }
    };
    let cfg = TrainConfig {
        task,
        epochs: s.usize("pretrain.epochs", base.epochs)?,
        batch_size: s.usize("pretrain.batch_size", base.batch_size)?,
        base_lr: s.f64("pretrain.base_lr", base.base_lr)?,
        lr_step: s.usize("pretrain.lr_step", base.lr_step)?,
        lr_gamma: s.f64("pretrain.lr_gamma", base.lr_gamma)?,
        crop,
        seed: run.seed,
        label_scheme: s.parsed::<LabelScheme>("pretrain.label_scheme", "unique24")?,
    };
    cfg.validate()?;
    let mut model_cfg = ModelConfig::for_preset(run.preset, task);
    model_cfg.dropout_p = s.f64("pretrain.dropout_p", model_cfg.dropout_p)?;
    model_cfg.rotation_classes = match cfg.label_scheme {
        LabelScheme::Unique24 => 24,
        LabelScheme::Paper32 => 32,
    };
    model_cfg.layout()?;

    let records = load_manifest(&data_dir.join(MANIFEST))?;
    let volumes = load_volumes(&data_dir, &records)?;
    let data = TrainSet::new(&volumes, &records)?;
    open_run(&run, s)?;
    let start = Instant::now();
    let mut model = SslModel::new(model_cfg, run.seed)?;
    let log = train_task(&mut model, &data, &cfg)?;
    model.save(&run.out)?;
    write_new(&run.out.join("trainlog.jsonl"), log.to_jsonl()?.as_bytes())?;
    write_json(
        &run.out.join("timings.json"),
        &Timings {
            total_seconds: start.elapsed().as_secs_f64(),
            epoch_seconds: log.timings.clone(),
        },
    )?;
    if let Some(last) = log.epochs.last() {
        let losses: Vec<String> = last
            .losses
            .iter()
            .map(|(k, v)| format!("{k} {v:.4}"))
            .collect();
        println!("epoch {}: {}", last.epoch, losses.join(", "));
    }
    Ok(())
}

fn center_crop(v: &Volume, edge: usize) -> CliResult<Volume> {
    let e = v
        .cubic_edge()
        .ok_or_else(|| Failure::data(format!("volume shape {:?} is not cubic", v.shape())))?;
    if e < edge {
        return Err(Failure::data(format!(
            "volume edge {e} smaller than model input {edge}"
        )));
    }
    if e == edge {
        return Ok(v.clone());
    }
    let o = (e - edge) / 2;
    Ok(Volume::from_fn([edge; 3], |z, y, x| {
        v.get(z + o, y + o, x + o)
    }))
}

pub fn extract(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let model_dir = s.path("extract.model")?;
    let data_dir = s.path("extract.data")?;
    let threshold = s.f64("extract.cdr_threshold", 0.5)?;
    let batch = s.usize("extract.batch", 16)?.max(1);
    let model = SslModel::load(&model_dir)?;
    let manifest = load_manifest(&data_dir.join(MANIFEST))?;
    let kept = select_scans(&manifest, threshold)?;
    let edge = model.config.input_edge;
    open_run(&run, s)?;
    let mut rows = Vec::with_capacity(kept.len());
    for chunk in kept.chunks(batch) {
        let vols = load_volumes(&data_dir, chunk)?
            .iter()
            .map(|v| center_crop(v, edge))
            .collect::<CliResult<Vec<_>>>()?;
        let refs: Vec<&Volume> = vols.iter().collect();
        for (f, r) in model.extract(&refs)?.into_iter().zip(chunk) {
            rows.push(FeatureRow {
                scan_id: r.scan_id.clone(),
                subject_id: r.subject_id.clone(),
                label: r.diagnosis,
                features: f,
            });
        }
    }
    let table = FeatureTable {
        provenance: model_dir.join("model.vpxw").display().to_string(),
        rows,
    };
    write_new(&run.out.join("features.csv"), table.to_csv()?.as_bytes())?;
    let mut buf = Vec::new();
    write_manifest(&kept, &mut buf)?;
    write_new(&run.out.join("selected.jsonl"), &buf)?;
    println!(
        "{} of {} scans -> {} features each",
        kept.len(),
        manifest.len(),
        table.dim()
    );
    Ok(())
}

pub fn eval(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let path = s.path("eval.features")?;
    let svm = SvmConfig {
        c: s.f64("eval.svm.c", SvmConfig::default().c)?,
        epochs: s.usize("eval.svm.epochs", SvmConfig::default().epochs)?,
        seed: run.seed,
    };
    let forest = ForestConfig {
        trees: s.usize("eval.forest.trees", ForestConfig::default().trees)?,
        min_samples_split: s.usize(
            "eval.forest.min_samples_split",
            ForestConfig::default().min_samples_split,
        )?,
        seed: run.seed,
    };
    let cfg = DownstreamConfig {
        k: s.usize("eval.k", 10)?,
        seed: run.seed,
        svm,
        forest,
    };
    let table = FeatureTable::from_csv(&read_text(&path)?, path.display().to_string())?;
    open_run(&run, s)?;
    let report = evaluate_downstream(&table, &cfg)?;
    write_json(&run.out.join("metrics.json"), &report)?;
    write_json(&run.out.join("plan.json"), &report.plan)?;
    let text = format_table(&[&report.svc, &report.rfc]);
    write_new(&run.out.join("metrics.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn audit(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let manifest_path = s.path("audit.manifest")?;
    let plan_path = s.opt_path("audit.plan")?;
    let pretrain_path = s.opt_path("audit.pretrain_manifest")?;
    let k = s.usize("audit.k", 10)?;
    let manifest = load_manifest(&manifest_path)?;
    let plan: SplitPlan = match &plan_path {
        Some(p) => serde_json::from_str(&read_text(p)?)
            .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?,
        None => grouped_kfold(&manifest, k, run.seed)?,
    };
    let pretrain: BTreeSet<String> = match &pretrain_path {
        Some(p) => load_manifest(p)?
            .into_iter()
            .map(|r| r.subject_id)
            .collect(),
        None => BTreeSet::new(),
    };
    open_run(&run, s)?;
    let report = audit_leakage(&manifest, &plan, &pretrain)?;
    write_json(&run.out.join("leakage.json"), &report)?;
    if report.is_clean() {
        println!("no leakage found");
        Ok(())
    } else {
        for v in &report.violations {
            println!("{:?}: {}", v.kind, v.detail);
        }
        Err(Failure {
            code: EXIT_LEAKAGE,
            message: format!("{} leakage violation(s)", report.violations.len()),
        })
    }
}

/// One input directory of `report`: any run holding a train log and/or
/// downstream metrics.
pub struct RunArtifacts {
    pub label: String,
    pub log: Option<TrainLog>,
    pub metrics: Option<DownstreamReport>,
}

pub fn report(s: &mut Settings) -> CliResult<()> {
    let run = resolve_run(s)?;
    let inputs = s.paths("report.inputs")?;
    if inputs.is_empty() {
        return Err(Failure::config(
            "report needs at least one input run directory",
        ));
    }
    let mut runs = Vec::new();
    let mut labels = BTreeMap::new();
    for dir in &inputs {
        let base = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let n = labels.entry(base.clone()).or_insert(0usize);
        *n += 1;
        let label = if *n == 1 { base } else { format!("{base}-{n}") };
        let log_path = dir.join("trainlog.jsonl");
        let log = if log_path.exists() {
            Some(TrainLog::from_jsonl(&read_text(&log_path)?)?)
        } else {
            None
        };
        let metrics_path = dir.join("metrics.json");
        let metrics = if metrics_path.exists() {
            Some(
                serde_json::from_str(&read_text(&metrics_path)?)
                    .map_err(|e| Failure::data(format!("{}: {e}", metrics_path.display())))?,
            )
        } else {
            None
        };
        if log.is_none() && metrics.is_none() {
            return Err(Failure::data(format!(
                "{} holds neither trainlog.jsonl nor metrics.json",
                dir.display()
            )));
        }
        runs.push(RunArtifacts {
            label,
            log,
            metrics,
        });
    }
    open_run(&run, s)?;
    for (name, body) in report::render(&runs) {
        write_new(&run.out.join(name), body.as_bytes())?;
    }
    println!("report for {} run(s) -> {}", runs.len(), run.out.display());
    Ok(())
}
