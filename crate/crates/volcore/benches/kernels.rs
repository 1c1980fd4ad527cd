//! Parallel versus serial timings of the hot kernels. Run with
//! `cargo bench -p volcore`; build with `--no-default-features` to time the
//! rayon-free build.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use volcore::{kaiming_normal, par, Graph, Rng, Tensor};

const PATHS: [(&str, bool); 2] = [("parallel", false), ("serial", true)];

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f32> {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.normal() as f32).collect(),
    )
    .unwrap()
}

fn conv_inputs(edge: usize) -> (Tensor<f32>, Tensor<f32>, Tensor<f32>) {
    let mut rng = Rng::new(1, 0);
    let x = random(&[4, 8, edge, edge, edge], &mut rng);
    let w = kaiming_normal(&[16, 8, 3, 3, 3], 8 * 27, &mut rng);
    let b = Tensor::zeros(&[16]);
    (x, w, b)
}

fn conv3d(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv3d");
    group.sample_size(10);
    for edge in [8, 16] {
        let (x, w, b) = conv_inputs(edge);
        for (name, serial) in PATHS {
            par::set_serial(serial);
            group.bench_with_input(
                BenchmarkId::new(format!("forward/{name}"), edge),
                &edge,
                |bch, _| {
                    bch.iter(|| {
                        let mut g = Graph::new();
                        let (xv, wv, bv) =
                            (g.input(x.clone()), g.param(w.clone()), g.param(b.clone()));
                        black_box(g.conv3d(xv, wv, bv, 1, 1).unwrap());
                    })
                },
            );
            group.bench_with_input(
                BenchmarkId::new(format!("forward_backward/{name}"), edge),
                &edge,
                |bch, _| {
                    bch.iter(|| {
                        let mut g = Graph::new();
                        let (xv, wv, bv) =
                            (g.param(x.clone()), g.param(w.clone()), g.param(b.clone()));
                        let y = g.conv3d(xv, wv, bv, 1, 1).unwrap();
                        let r = g.relu(y).unwrap();
                        let p = g.global_avgpool3d(r).unwrap();
                        let f = g.flatten(p).unwrap();
                        let n = g.shape(f).iter().product();
                        let loss = g.dot_const(f, vec![1.0; n]).unwrap();
                        black_box(g.backward(loss).unwrap());
                    })
                },
            );
        }
    }
    par::set_serial(false);
    group.finish();
}

fn pooling(c: &mut Criterion) {
    let mut group = c.benchmark_group("maxpool3d");
    let x = random(&[4, 16, 32, 32, 32], &mut Rng::new(2, 0));
    for (name, serial) in PATHS {
        par::set_serial(serial);
        group.bench_function(name, |bch| {
            bch.iter(|| {
                let mut g = Graph::new();
                let xv = g.input(x.clone());
                black_box(g.maxpool3d(xv, 2, 2).unwrap());
            })
        });
    }
    par::set_serial(false);
    group.finish();
}

/// Per-voxel work shaped like the equalization blend: each output reads a
/// small neighbourhood of lookup tables.
fn map_indices(c: &mut Criterion) {
    let mut group = c.benchmark_group("map_indices");
    let tables: Vec<f32> = (0..8 * 256).map(|i| (i % 256) as f32 / 255.0).collect();
    let n = 64 * 64 * 64;
    for (name, serial) in PATHS {
        par::set_serial(serial);
        group.bench_function(name, |bch| {
            bch.iter(|| {
                black_box(par::map_indices(n, |i| {
                    let bin = i % 256;
                    (0..8).map(|t| tables[t * 256 + bin]).sum::<f32>() / 8.0
                }))
            })
        });
    }
    par::set_serial(false);
    group.finish();
}

criterion_group!(benches, conv3d, pooling, map_indices);
criterion_main!(benches);
