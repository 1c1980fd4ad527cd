use std::collections::BTreeSet;

use proptest::prelude::*;
use volcore::Rng;
use volpretext::model::{ModelConfig, SslModel, Task};
use volpretext::phantom::{generate_cohort, CohortRole, CohortSpec, ScanRecord};
use volpretext::trainer::{
    draw_head_order, lr_at, random_crop, train_task, TrainConfig, TrainLog, TrainSet,
};
use volpretext::{Error, Volume};

fn tiny(task: Task) -> ModelConfig {
    ModelConfig {
        widths: [2; 7],
        ..ModelConfig::desk32(task)
    }
}

fn small_cfg(task: Task) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        seed: 3,
        ..TrainConfig::desk(task)
    }
}

fn pretrain_data(n: usize, grid: usize) -> (Vec<Volume>, Vec<ScanRecord>) {
    generate_cohort(&CohortSpec::pretrain(n, grid, 17)).unwrap()
}

#[test]
fn schedule_matches_the_published_values() {
    let cfg = TrainConfig::paper(Task::Age);
    assert_eq!(lr_at(0, &cfg), 0.001);
    assert_eq!(lr_at(20, &cfg), 0.0005);
    assert_eq!(lr_at(40, &cfg), 0.00025);
    assert_eq!(lr_at(19, &cfg), 0.001);
    let flat = TrainConfig {
        lr_gamma: 1.0,
        ..cfg
    };
    assert!((0..100).all(|e| lr_at(e, &flat) == 0.001));
}

#[test]
fn paper_batch_sizes_per_task() {
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
    assert_eq!(TrainConfig::paper(Task::Age).crop, Some((200, 192)));
    assert_eq!(TrainConfig::paper(Task::Age).epochs, 50);
}

#[test]
fn paper_crop_offsets_stay_in_range() {
    let v = Volume::filled([200; 3], 0.5);
    let mut rng = Rng::new(1, 0);
    for _ in 0..20 {
        let (c, off) = random_crop(&v, 192, &mut rng).unwrap();
        assert_eq!(c.shape(), [192; 3]);
        assert!(off.iter().all(|&o| o <= 8));
    }
}

#[test]
fn full_size_crop_is_identity() {
    let v = Volume::from_fn([5; 3], |z, y, x| (z * 25 + y * 5 + x) as f32);
    let (c, off) = random_crop(&v, 5, &mut Rng::new(0, 0)).unwrap();
    assert_eq!(off, [0, 0, 0]);
    assert_eq!(c, v);
    assert!(random_crop(&v, 6, &mut Rng::new(0, 0)).is_err());
}

#[test]
fn crop_offsets_are_uniform() {
    let v = Volume::filled([36; 3], 0.0);
    let mut rng = Rng::new(2024, 0);
    let draws = 10_000;
    let mut counts = vec![0usize; 125];
    for _ in 0..draws {
        let (_, o) = random_crop(&v, 32, &mut rng).unwrap();
        counts[o[0] * 25 + o[1] * 5 + o[2]] += 1;
    }
    let expected = draws as f64 / 125.0;
    let tolerance = 5.0 * expected.sqrt();
    for (cell, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - expected).abs() <= tolerance,
            "cell {cell}: {c} vs {expected}"
        );
    }
}

#[test]
fn every_head_order_occurs() {
    let mut rng = Rng::new(5, 0);
    let orders: BTreeSet<[Task; 3]> = (0..600).map(|_| draw_head_order(&mut rng)).collect();
    assert_eq!(orders.len(), 6);
}

#[test]
fn training_is_bit_reproducible() {
    let (vols, recs) = pretrain_data(8, 32);
    let data = TrainSet::new(&vols, &recs).unwrap();
    for task in [Task::Age, Task::Multihead] {
        let run = || {
            let mut m = SslModel::new(tiny(task), 1).unwrap();
            let log = train_task(&mut m, &data, &small_cfg(task)).unwrap();
            (m, log)
        };
        let (m1, l1) = run();
        let (m2, l2) = run();
        assert_eq!(l1.to_jsonl().unwrap(), l2.to_jsonl().unwrap());
        assert_eq!(l1.epochs, l2.epochs);
        assert_eq!(l1.head_orders, l2.head_orders);
        for (p, q) in m1.params.iter().zip(m2.params.iter()) {
            assert_eq!(p.tensor, q.tensor, "{}", p.name);
        }
        assert_eq!(l1.epochs.len(), 2);
        for (i, e) in l1.epochs.iter().enumerate() {
            assert_eq!(e.epoch, i);
            assert!(e.losses.values().all(|l| l.is_finite()));
        }
        if task == Task::Multihead {
            assert_eq!(l1.head_orders.len(), 4);
            assert_eq!(l1.epochs[0].losses.len(), 3);
        }
        let back = TrainLog::from_jsonl(&l1.to_jsonl().unwrap()).unwrap();
        assert_eq!(back.epochs, l1.epochs);
    }
}

#[test]
fn cropping_trains_on_larger_sources() {
    let (vols, recs) = pretrain_data(4, 36);
    let data = TrainSet::new(&vols, &recs).unwrap();
    let cfg = TrainConfig {
        crop: Some((36, 32)),
        epochs: 1,
        ..small_cfg(Task::Rotation)
    };
    let mut m = SslModel::new(tiny(Task::Rotation), 1).unwrap();
    let log = train_task(&mut m, &data, &cfg).unwrap();
    assert!(log.epochs[0].accuracy.is_some());
    let uncropped = TrainConfig { crop: None, ..cfg };
    assert!(matches!(
        train_task(&mut m, &data, &uncropped),
        Err(Error::Shape(_))
    ));
}

#[test]
fn evaluation_scans_are_refused() {
    let (vols, mut recs) = pretrain_data(3, 16);
    recs[1].cohort = CohortRole::Eval;
    assert!(matches!(
        TrainSet::new(&vols, &recs),
        Err(Error::Leakage(_))
    ));
}

#[test]
fn non_finite_loss_aborts_with_context() {
    let (vols, recs) = pretrain_data(4, 32);
    let data = TrainSet::new(&vols, &recs).unwrap();
    let mut m = SslModel::new(tiny(Task::Age), 1).unwrap();
    m.params.get_mut("head.age.b").unwrap().data_mut()[0] = f32::NAN;
    match train_task(&mut m, &data, &small_cfg(Task::Age)) {
        Err(Error::NonFiniteLoss { head, epoch, batch }) => {
            assert_eq!((head.as_str(), epoch, batch), ("age", 0, 0));
        }
        other => panic!("expected numeric abort, got {other:?}"),
    }
}

#[test]
fn empty_and_mismatched_setups_are_rejected() {
    let data = TrainSet::new(&[], &[]).unwrap();
    let mut m = SslModel::new(tiny(Task::Age), 1).unwrap();
    assert!(matches!(
        train_task(&mut m, &data, &small_cfg(Task::Age)),
        Err(Error::Data(_))
    ));
    let (vols, recs) = pretrain_data(2, 32);
    let data = TrainSet::new(&vols, &recs).unwrap();
    assert!(matches!(
        train_task(&mut m, &data, &small_cfg(Task::Rotation)),
        Err(Error::Config(_))
    ));
    let mut rot = SslModel::new(tiny(Task::Rotation), 1).unwrap();
    let paper32 = TrainConfig {
        label_scheme: volpretext::rotgrid::LabelScheme::Paper32,
        ..small_cfg(Task::Rotation)
    };
    assert!(matches!(
        train_task(&mut rot, &data, &paper32),
        Err(Error::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn crops_are_verbatim_sub_blocks(seed in any::<u64>(), edge in 1usize..10, cut in 0usize..10) {
        let target = edge - cut.min(edge - 1);
        let mut rng = Rng::new(seed, 1);
        let v = Volume::from_fn([edge; 3], |_, _, _| rng.uniform() as f32);
        let (c, off) = random_crop(&v, target, &mut rng).unwrap();
        for z in 0..target {
            for y in 0..target {
                for x in 0..target {
                    prop_assert_eq!(c.get(z, y, x), v.get(z + off[0], y + off[1], x + off[2]));
                }
            }
        }
    }

    #[test]
    fn schedule_is_non_increasing(step in 1usize..30, gamma in 0.01f64..=1.0, epochs in 1usize..200) {
        let cfg = TrainConfig { lr_step: step, lr_gamma: gamma, ..TrainConfig::paper(Task::Age) };
        for e in 1..epochs {
            prop_assert!(lr_at(e, &cfg) <= lr_at(e - 1, &cfg));
        }
    }
}
