//! Parallel versus serial timings of the desk-scale pipeline stages.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use volcore::par;
use volpretext::model::{ModelConfig, SslModel, Task};
use volpretext::phantom::{generate_cohort, CohortSpec};
use volpretext::prep::{clahe3d, ClaheParams};
use volpretext::trainer::{train_task, TrainConfig, TrainSet};

const PATHS: [(&str, bool); 2] = [("parallel", false), ("serial", true)];

fn stages(c: &mut Criterion) {
    let (vols, recs) = generate_cohort(&CohortSpec::pretrain(8, 32, 1)).unwrap();
    let data = TrainSet::new(&vols, &recs).unwrap();
    let model = SslModel::new(ModelConfig::desk32(Task::Rotation), 0).unwrap();
    let refs: Vec<_> = vols.iter().collect();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::desk(Task::Rotation)
    };

    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for (name, serial) in PATHS {
        par::set_serial(serial);
        group.bench_function(format!("clahe_32/{name}"), |b| {
            b.iter(|| black_box(clahe3d(&vols[0], &ClaheParams::desk()).unwrap()))
        });
        group.bench_function(format!("extract_8x32/{name}"), |b| {
            b.iter(|| black_box(model.extract(&refs).unwrap()))
        });
        group.bench_function(format!("rotation_epoch_8x32/{name}"), |b| {
            b.iter(|| {
                let mut m = model.clone();
                black_box(train_task(&mut m, &data, &cfg).unwrap())
            })
        });
    }
    par::set_serial(false);
    group.finish();
}

criterion_group!(benches, stages);
criterion_main!(benches);
