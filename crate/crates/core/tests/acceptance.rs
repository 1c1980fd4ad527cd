//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p volpretext --test acceptance -- 1 3 5`.

// Negated comparisons are deliberate: a NaN metric must fail.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use volcore::gradcheck::sweep_ops;
use volcore::Rng;
use volpretext::cohort::{
    audit_leakage, grouped_kfold, inject_fault, select_scans, AuditCase, LeakageKind,
};
use volpretext::eval::{
    compute_metrics, evaluate_downstream, DownstreamConfig, FeatureRow, FeatureTable,
};
use volpretext::model::{grad_check_model, ModelConfig, SslModel, Task};
use volpretext::phantom::{
    generate_cohort, manifest_to_string, ventricle_voxel_count, CohortRole, CohortSpec, Diagnosis,
    ScanRecord,
};
use volpretext::prep::{
    clahe3d, minmax_normalize, preprocess_pipeline, resize_trilinear, ClaheParams,
};
use volpretext::rotgrid::{dedup_classes, AxisTransform, LabelScheme};
use volpretext::trainer::{evaluate_pretext, lr_at, train_task, TrainConfig, TrainLog, TrainSet};
use volpretext::Volume;

mod common;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn criterion_1() -> Outcome {
    let rows = [
        ((0.278, 0.912), 0.190),
        ((0.417, 0.892), 0.309),
        ((0.000, 1.000), 0.000),
    ];
    let mut parts = Vec::new();
    for ((sen, spe), j) in rows {
        // 1000 positives and 1000 negatives realise the published rates exactly.
        let tp = (sen * 1000.0f64).round() as usize;
        let tn = (spe * 1000.0f64).round() as usize;
        let labels: Vec<bool> = (0..2000).map(|i| i < 1000).collect();
        let preds: Vec<bool> = (0..2000)
            .map(|i| if i < 1000 { i < tp } else { i - 1000 >= tn })
            .collect();
        let scores: Vec<f64> = preds.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
        let row = compute_metrics(&labels, &preds, &scores).map_err(err)?;
        let got = row.j_stat.ok_or("J undefined")?;
        ensure(round3(got) == j, format!("({sen}, {spe}) gave J {got}"))?;
        parts.push(format!("J({sen:.3},{spe:.3})={:.3}", round3(got)));
    }
    Ok(parts.join(" "))
}

fn criterion_2() -> Outcome {
    let sweeps = sweep_ops(20, 2024).map_err(err)?;
    let mut worst: f64 = 0.0;
    for s in &sweeps {
        ensure(s.trials >= 20, format!("{} ran {} trials", s.op, s.trials))?;
        ensure(
            s.max_rel_error <= 1e-4,
            format!("{} rel error {:.2e}", s.op, s.max_rel_error),
        )?;
        worst = worst.max(s.max_rel_error);
    }
    let cfg = ModelConfig {
        widths: [2; 7],
        ..ModelConfig::desk32(Task::Multihead)
    };
    let mut heads = Vec::new();
    for head in [Task::Age, Task::Rotation, Task::Reconstruction] {
        let r = grad_check_model(&cfg, head, 2, 11).map_err(err)?;
        ensure(
            r.max_rel_error() <= 1e-4,
            format!("{} head rel error {:.2e}", head.name(), r.max_rel_error()),
        )?;
        heads.push(format!(
            "{} {:.1e} over {}",
            head.name(),
            r.max_rel_error(),
            r.checked()
        ));
    }
    Ok(format!(
        "{} ops x20 trials, max {worst:.1e}; model: {}",
        sweeps.len(),
        heads.join(", ")
    ))
}

fn criterion_3() -> Outcome {
    let unique = dedup_classes(LabelScheme::Unique24);
    ensure(
        unique.classes == 24,
        format!("unique24 produced {} classes", unique.classes),
    )?;
    let paper = dedup_classes(LabelScheme::Paper32);
    ensure(
        paper.classes == 32,
        format!("paper32 produced {} classes", paper.classes),
    )?;
    let dups = paper.duplicates().len();
    ensure(dups > 0, "paper32 duplicate report is empty")?;
    let v = Volume::from_fn([7; 3], |z, y, x| ((z * 49 + y * 7 + x) as f32 * 0.37).sin());
    let group = AxisTransform::proper_rotations();
    for t in &group {
        let back = t.inverse().apply(&t.apply(&v).map_err(err)?).map_err(err)?;
        let exact = back
            .voxels()
            .iter()
            .zip(v.voxels())
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(exact, format!("inverse of {t:?} is not bit-exact"))?;
    }
    Ok(format!(
        "64 specs -> 24 images; paper32: 32 classes, {dups} duplicates; {} inverses exact",
        group.len()
    ))
}

fn criterion_4() -> Outcome {
    let cfg = ModelConfig::paper192(Task::Age);
    let n = cfg.parameter_count().map_err(err)?;
    ensure(
        (2_500_000..=3_500_000).contains(&n),
        format!("count {n} outside [2.5M, 3.5M]"),
    )?;
    let rot = ModelConfig::paper192(Task::Rotation)
        .parameter_count()
        .map_err(err)?;
    ensure(
        (2_500_000..=3_500_000).contains(&rot),
        format!("rotation count {rot} outside budget"),
    )?;
    Ok(format!("paper192 + age head: {n}; + rotation head: {rot}"))
}

fn criterion_5() -> Outcome {
    let cfg = TrainConfig::paper(Task::Age);
    let got = [lr_at(0, &cfg), lr_at(20, &cfg), lr_at(40, &cfg)];
    ensure(got == [0.001, 0.0005, 0.00025], format!("schedule {got:?}"))?;
    Ok(format!("{got:?}"))
}

fn random_manifest(rng: &mut Rng) -> Vec<ScanRecord> {
    let n = 2 + rng.index(40);
    let mut out = Vec::new();
    for s in 0..n {
        for v in 0..1 + rng.index(4) {
            out.push(ScanRecord {
                subject_id: format!("S{s}"),
                scan_id: format!("S{s}_v{v}"),
                acquired_day: v as i64 * 365,
                age: 60.0,
                diagnosis: Diagnosis::CN,
                cdr_history: vec![(0, 0.0)],
                parent_scan_id: None,
                cohort: CohortRole::Eval,
            });
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = Rng::new(6, 0);
    let none = BTreeSet::new();
    for trial in 0..1000 {
        let m = random_manifest(&mut rng);
        let subjects = m
            .iter()
            .map(|r| r.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let k = 1 + rng.index(subjects.min(10));
        let plan = grouped_kfold(&m, k, rng.next_u64()).map_err(err)?;
        let mut folds: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
        for r in &m {
            folds
                .entry(&r.subject_id)
                .or_default()
                .insert(plan.assignments[&r.scan_id]);
        }
        ensure(
            folds.values().all(|f| f.len() == 1),
            format!("trial {trial}: subject crosses folds"),
        )?;
        let report = audit_leakage(&m, &plan, &none).map_err(err)?;
        ensure(
            report.count(LeakageKind::A) == 0,
            format!("trial {trial}: type-A finding"),
        )?;
    }
    let mut planted = 0;
    let mut detected = 0;
    let mut clean = 0;
    for trial in 0..1000u64 {
        let m = random_manifest(&mut rng);
        let subjects = m
            .iter()
            .map(|r| r.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .len();
        let k = 2 + rng.index(subjects.min(10) - 1);
        let case = AuditCase {
            plan: grouped_kfold(&m, k, trial).map_err(err)?,
            manifest: m,
            pretrain_subjects: (0..10).map(|i| format!("P{i}")).collect(),
        };
        let report =
            audit_leakage(&case.manifest, &case.plan, &case.pretrain_subjects).map_err(err)?;
        ensure(
            report.is_clean(),
            format!("false positive on clean plan {trial}"),
        )?;
        clean += 1;
        for kind in [LeakageKind::A, LeakageKind::B, LeakageKind::C] {
            let bad = inject_fault(&case, kind, &mut rng).map_err(err)?;
            let r = audit_leakage(&bad.manifest, &bad.plan, &bad.pretrain_subjects).map_err(err)?;
            planted += 1;
            if r.count(kind) > 0 {
                detected += 1;
            }
        }
    }
    ensure(
        detected == planted,
        format!("detected {detected}/{planted} planted faults"),
    )?;
    Ok(format!("1000 plans without crossings; {detected}/{planted} faults detected, 0/{clean} false positives"))
}

const GRID: usize = 32;

fn prep_all(volumes: &[Volume]) -> Result<Vec<Volume>, String> {
    volumes
        .iter()
        .map(|v| preprocess_pipeline(v, [GRID; 3], &ClaheParams::desk()).map_err(err))
        .collect()
}

struct Pretrained {
    records: Vec<ScanRecord>,
    models: Vec<(Task, SslModel)>,
}

fn pretrain_cohort() -> Result<(Vec<Volume>, Vec<ScanRecord>), String> {
    let (raw, records) = generate_cohort(&CohortSpec::pretrain(200, GRID, 7)).map_err(err)?;
    Ok((prep_all(&raw)?, records))
}

fn train(task: Task, data: &TrainSet) -> Result<(SslModel, TrainLog), String> {
    let mut model = SslModel::new(ModelConfig::desk32(task), 0).map_err(err)?;
    let cfg = TrainConfig {
        seed: 0,
        ..TrainConfig::desk(task)
    };
    let log = train_task(&mut model, data, &cfg).map_err(err)?;
    Ok((model, log))
}

fn criterion_7(store: &mut Option<Pretrained>) -> Outcome {
    let (vols, records) = pretrain_cohort()?;
    let data = TrainSet::new(&vols, &records).map_err(err)?;
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut models = Vec::new();

    let (m, log) = train(Task::Rotation, &data)?;
    let last = log.epochs.last().ok_or("no epochs")?;
    let acc = last.accuracy.ok_or("no accuracy")?;
    let eval_acc = evaluate_pretext(&m, &data, &TrainConfig::desk(Task::Rotation), 1)
        .map_err(err)?
        .rotation_accuracy
        .unwrap_or(f64::NAN);
    lines.push(format!("rotation acc {acc:.3} (eval-mode {eval_acc:.3})"));
    if !(acc > 0.125) {
        failures.push(format!("rotation accuracy {acc:.3} <= 0.125"));
    }
    models.push((Task::Rotation, m));

    let (m, log) = train(Task::Reconstruction, &data)?;
    let first = log.loss(0, "reconstruction").ok_or("no loss")?;
    let final_ = log
        .loss(log.epochs.len() - 1, "reconstruction")
        .ok_or("no loss")?;
    lines.push(format!("recon {first:.4} -> {final_:.4}"));
    if !(final_ < 0.5 * first) {
        failures.push(format!(
            "reconstruction {final_:.4} not below half of {first:.4}"
        ));
    }
    models.push((Task::Reconstruction, m));

    let (m, log) = train(Task::Age, &data)?;
    let ages: Vec<f64> = records.iter().map(|r| r.age).collect();
    let mean = ages.iter().sum::<f64>() / ages.len() as f64;
    let baseline = ages.iter().map(|a| (a - mean).abs()).sum::<f64>() / ages.len() as f64;
    let mae = log.epochs.last().and_then(|e| e.age_mae).ok_or("no MAE")?;
    let eval_mae = evaluate_pretext(&m, &data, &TrainConfig::desk(Task::Age), 1)
        .map_err(err)?
        .age_mae
        .unwrap_or(f64::NAN);
    lines.push(format!(
        "age MAE {mae:.2}y vs baseline {baseline:.2}y (eval-mode {eval_mae:.2}y)"
    ));
    if !(mae < baseline) {
        failures.push(format!("age MAE {mae:.2} not below baseline {baseline:.2}"));
    }
    models.push((Task::Age, m));

    let (m, log) = train(Task::Multihead, &data)?;
    let last = log.epochs.len() - 1;
    let mut heads = Vec::new();
    for head in ["age", "rotation", "reconstruction"] {
        let a = log.loss(0, head).ok_or("missing head loss")?;
        let b = log.loss(last, head).ok_or("missing head loss")?;
        heads.push(format!("{head} {a:.3}->{b:.3}"));
        if !(b < a) {
            failures.push(format!("multihead {head} loss {b:.4} not below {a:.4}"));
        }
    }
    lines.push(format!("multihead {}", heads.join(" ")));
    models.push((Task::Multihead, m));

    *store = Some(Pretrained { records, models });
    if failures.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!("{} [{}]", failures.join("; "), lines.join("; ")))
    }
}

fn feature_table(
    model: &SslModel,
    vols: &[&Volume],
    recs: &[&ScanRecord],
    provenance: &str,
) -> Result<FeatureTable, String> {
    let mut rows = Vec::new();
    for (chunk_v, chunk_r) in vols.chunks(16).zip(recs.chunks(16)) {
        let feats = model.extract(chunk_v).map_err(err)?;
        for (f, r) in feats.into_iter().zip(chunk_r) {
            rows.push(FeatureRow {
                scan_id: r.scan_id.clone(),
                subject_id: r.subject_id.clone(),
                label: r.diagnosis,
                features: f,
            });
        }
    }
    Ok(FeatureTable {
        provenance: provenance.into(),
        rows,
    })
}

fn criterion_8(store: &mut Option<Pretrained>) -> Outcome {
    if store.is_none() {
        let (vols, records) = pretrain_cohort()?;
        let data = TrainSet::new(&vols, &records).map_err(err)?;
        let (m, _) = train(Task::Rotation, &data)?;
        *store = Some(Pretrained {
            records,
            models: vec![(Task::Rotation, m)],
        });
    }
    let pre = store.as_ref().unwrap();
    let spec = CohortSpec {
        noise_sigma: 0.05,
        scans_max: 2,
        ..CohortSpec::eval(100, GRID, 8)
    };
    let (raw, manifest) = generate_cohort(&spec).map_err(err)?;
    let n_ad = manifest
        .iter()
        .filter(|r| r.diagnosis == Diagnosis::AD)
        .map(|r| &r.subject_id)
        .collect::<BTreeSet<_>>()
        .len();
    ensure(n_ad == 50, format!("{n_ad} AD subjects"))?;
    let kept = select_scans(&manifest, 0.5).map_err(err)?;
    let prepped = prep_all(&raw)?;
    let index: BTreeMap<&str, usize> = manifest
        .iter()
        .enumerate()
        .map(|(i, r)| (r.scan_id.as_str(), i))
        .collect();
    let vols: Vec<&Volume> = kept
        .iter()
        .map(|r| &prepped[index[r.scan_id.as_str()]])
        .collect();
    let recs: Vec<&ScanRecord> = kept.iter().collect();

    let pretrain_subjects: BTreeSet<String> =
        pre.records.iter().map(|r| r.subject_id.clone()).collect();
    let plan = grouped_kfold(&kept, 10, 0).map_err(err)?;
    let audit = audit_leakage(&kept, &plan, &pretrain_subjects).map_err(err)?;
    ensure(
        audit.is_clean(),
        format!("leakage audit: {:?}", audit.violations),
    )?;

    let cfg = DownstreamConfig::default();
    let mut best: f64 = 0.0;
    let mut parts = Vec::new();
    for (task, model) in &pre.models {
        let table = feature_table(model, &vols, &recs, task.name())?;
        let report = evaluate_downstream(&table, &cfg).map_err(err)?;
        let svc = report.svc.auc.mean.unwrap_or(0.0);
        let rfc = report.rfc.auc.mean.unwrap_or(0.0);
        best = best.max(svc).max(rfc);
        parts.push(format!("{} SVC {svc:.3} RFC {rfc:.3}", task.name()));
    }
    let oracle_rows = kept
        .iter()
        .map(|r| FeatureRow {
            scan_id: r.scan_id.clone(),
            subject_id: r.subject_id.clone(),
            label: r.diagnosis,
            features: vec![ventricle_voxel_count(&raw[index[r.scan_id.as_str()]]) as f32],
        })
        .collect();
    let oracle = evaluate_downstream(
        &FeatureTable {
            provenance: "oracle".into(),
            rows: oracle_rows,
        },
        &cfg,
    )
    .map_err(err)?;
    let oracle_auc = oracle
        .svc
        .auc
        .mean
        .unwrap_or(0.0)
        .max(oracle.rfc.auc.mean.unwrap_or(0.0));
    let detail = format!(
        "{}; ventricle oracle {oracle_auc:.3}; {} scans kept",
        parts.join("; "),
        kept.len()
    );
    ensure(
        best >= 0.70,
        format!("best pretext AUC {best:.3} < 0.70 [{detail}]"),
    )?;
    ensure(
        oracle_auc >= 0.95,
        format!("oracle AUC {oracle_auc:.3} < 0.95 [{detail}]"),
    )?;
    Ok(detail)
}

/// gen -> prep -> pretrain -> extract -> eval at small scale, writing every
/// artifact under `dir`.
fn end_to_end(dir: &Path) -> Result<(), String> {
    let write = |name: &str, bytes: &[u8]| std::fs::write(dir.join(name), bytes).map_err(err);
    let (pre_raw, pre_recs) = generate_cohort(&CohortSpec::pretrain(12, GRID, 31)).map_err(err)?;
    let (ev_raw, ev_recs) = generate_cohort(&CohortSpec {
        scans_max: 2,
        ..CohortSpec::eval(20, GRID, 32)
    })
    .map_err(err)?;
    write(
        "pretrain.jsonl",
        manifest_to_string(&pre_recs).map_err(err)?.as_bytes(),
    )?;
    write(
        "eval.jsonl",
        manifest_to_string(&ev_recs).map_err(err)?.as_bytes(),
    )?;
    let pre = prep_all(&pre_raw)?;
    let data = TrainSet::new(&pre, &pre_recs).map_err(err)?;
    let mut model = SslModel::new(ModelConfig::desk32(Task::Multihead), 5).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 2,
        seed: 5,
        ..TrainConfig::desk(Task::Multihead)
    };
    let log = train_task(&mut model, &data, &cfg).map_err(err)?;
    write("trainlog.jsonl", log.to_jsonl().map_err(err)?.as_bytes())?;
    model.save(dir).map_err(err)?;
    let model = SslModel::load(dir).map_err(err)?;
    let kept = select_scans(&ev_recs, 0.5).map_err(err)?;
    let ev = prep_all(&ev_raw)?;
    let index: BTreeMap<&str, usize> = ev_recs
        .iter()
        .enumerate()
        .map(|(i, r)| (r.scan_id.as_str(), i))
        .collect();
    let vols: Vec<&Volume> = kept
        .iter()
        .map(|r| &ev[index[r.scan_id.as_str()]])
        .collect();
    let table = feature_table(
        &model,
        &vols,
        &kept.iter().collect::<Vec<_>>(),
        "model.vpxw",
    )?;
    write("features.csv", table.to_csv().map_err(err)?.as_bytes())?;
    let report = evaluate_downstream(
        &table,
        &DownstreamConfig {
            k: 5,
            seed: 5,
            ..DownstreamConfig::default()
        },
    )
    .map_err(err)?;
    write(
        "metrics.json",
        serde_json::to_string_pretty(&report)
            .map_err(err)?
            .as_bytes(),
    )?;
    Ok(())
}

fn criterion_9() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    end_to_end(a.path())?;
    end_to_end(b.path())?;
    let mut names = Vec::new();
    for entry in std::fs::read_dir(a.path()).map_err(err)? {
        let name = entry.map_err(err)?.file_name();
        let x = std::fs::read(a.path().join(&name)).map_err(err)?;
        let y = std::fs::read(b.path().join(&name)).map_err(err)?;
        ensure(
            x == y,
            format!("{} differs between runs", name.to_string_lossy()),
        )?;
        names.push(name.to_string_lossy().into_owned());
    }
    names.sort();
    for required in ["model.vpxw", "features.csv", "metrics.json"] {
        ensure(
            names.iter().any(|n| n == required),
            format!("{required} missing"),
        )?;
    }
    Ok(format!("identical: {}", names.join(", ")))
}

fn criterion_10() -> Outcome {
    let mut rng = Rng::new(10, 0);
    for _ in 0..20 {
        let shape = [0; 3].map(|_| 1 + rng.index(8));
        let v = Volume::from_fn(shape, |_, _, _| (rng.normal() * 50.0) as f32);
        if v.min_max().0 == v.min_max().1 {
            continue;
        }
        let (lo, hi) = minmax_normalize(&v).min_max();
        ensure(lo == 0.0 && hi == 1.0, format!("minmax range [{lo}, {hi}]"))?;
    }
    for c in [0.0f32, 0.25, 0.5, 1.0] {
        let v = Volume::filled([16; 3], c);
        ensure(
            clahe3d(&v, &ClaheParams::desk()).map_err(err)? == v,
            format!("clahe changed constant {c}"),
        )?;
    }
    let v = Volume::from_fn([16; 3], |z, y, x| {
        let r =
            ((z as f32 - 7.5).powi(2) + (y as f32 - 6.0).powi(2) + (x as f32 - 9.0).powi(2)).sqrt();
        (0.5 + 0.5 * (r * 0.7).sin() * (-r / 12.0).exp()).clamp(0.0, 1.0)
    });
    let p = ClaheParams {
        tiles_per_axis: 2,
        bins: 64,
        clip_limit: 2.0,
    };
    let fast = clahe3d(&v, &p).map_err(err)?;
    let slow = common::naive_clahe(&v, 2, 64, 2.0);
    let diff = fast
        .voxels()
        .iter()
        .zip(slow.voxels())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    ensure(
        diff <= 1e-6,
        format!("clahe vs reference max diff {diff:e}"),
    )?;
    let raw = Volume::filled([176, 256, 256], 0.0);
    let out = resize_trilinear(&raw, [192; 3]).map_err(err)?;
    ensure(
        out.shape() == [192; 3],
        format!("resize gave {:?}", out.shape()),
    )?;
    Ok(format!("minmax exact, clahe identity on constants, reference diff {diff:.1e}, 176x256x256 -> 192^3"))
}

fn main() -> ExitCode {
    let selected: BTreeSet<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let wanted = |n: usize| selected.is_empty() || selected.contains(&n);
    let mut pretrained: Option<Pretrained> = None;
    let budgets: [(usize, &str, u64); 10] = [
        (1, "metric arithmetic", 1),
        (2, "gradient correctness", 300),
        (3, "rotation group", 10),
        (4, "parameter budget", 10),
        (5, "lr schedule", 1),
        (6, "leakage safety", 60),
        (7, "desk-scale learnability", 1800),
        (8, "desk-scale downstream", 600),
        (9, "determinism", 600),
        (10, "preprocessing contracts", 60),
    ];
    let mut failed = 0;
    for (n, name, budget) in budgets {
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(&mut pretrained),
            8 => criterion_8(&mut pretrained),
            9 => criterion_9(),
            _ => criterion_10(),
        }))
        .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|d| {
            if elapsed > Duration::from_secs(budget) {
                Err(format!("over runtime budget of {budget}s [{d}]"))
            } else {
                Ok(d)
            }
        });
        let secs = elapsed.as_secs_f64();
        match result {
            Ok(d) => println!("criterion {n:>2} PASS  {name} ({secs:.1}s): {d}"),
            Err(e) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name} ({secs:.1}s): {e}");
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all selected criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}
