use volcore::{Graph, Mode, Rng, Tensor};
use volpretext::model::{
    age_head, build_parameters, decoder_forward, encoder_forward, grad_check_model, rotation_head,
    ModelConfig, SslModel, Task,
};
use volpretext::{Error, Volume};

fn tiny(task: Task) -> ModelConfig {
    ModelConfig {
        widths: [2; 7],
        ..ModelConfig::desk32(task)
    }
}

fn random_volume(edge: usize, seed: u64) -> Volume {
    let mut rng = Rng::new(seed, 5);
    Volume::from_fn([edge; 3], |_, _, _| rng.uniform() as f32)
}

#[test]
fn paper_preset_fits_the_parameter_budget() {
    let encoder_only = {
        let cfg = ModelConfig::paper192(Task::Age);
        cfg.parameter_count().unwrap() - (cfg.representation_dim().unwrap() + 1)
    };
    assert_eq!(encoder_only, 3_060_992);
    for task in [Task::Age, Task::Rotation] {
        let n = ModelConfig::paper192(task).parameter_count().unwrap();
        assert!((2_500_000..=3_500_000).contains(&n), "{task:?}: {n}");
    }
    // The mirrored decoder roughly doubles the total.
    let recon = ModelConfig::paper192(Task::Reconstruction)
        .parameter_count()
        .unwrap();
    assert!(recon > 2 * encoder_only);
}

#[test]
fn built_parameters_match_the_count() {
    for task in [Task::Age, Task::Rotation, Task::Multihead] {
        let cfg = ModelConfig::paper192(task);
        let store = build_parameters::<f32>(&cfg, &mut Rng::new(0, 0)).unwrap();
        assert_eq!(store.learnable_count(), cfg.parameter_count().unwrap());
    }
    let cfg = ModelConfig::desk32(Task::Multihead);
    let model = SslModel::new(cfg.clone(), 1).unwrap();
    assert_eq!(model.parameter_count(), cfg.parameter_count().unwrap());
}

#[test]
fn representation_dims_follow_the_block_arithmetic() {
    assert_eq!(
        ModelConfig::paper192(Task::Age)
            .representation_dim()
            .unwrap(),
        64
    );
    let desk = ModelConfig::desk32(Task::Age);
    assert_eq!(desk.representation_dim().unwrap(), desk.widths[6]);
    let layout = ModelConfig::paper192(Task::Age).layout().unwrap();
    assert_eq!(layout.block_edges, vec![192, 96, 48, 24, 12, 6]);
    assert_eq!(layout.feature_edge, 1);
}

#[test]
fn incompatible_edge_names_the_failing_stage() {
    let cfg = ModelConfig {
        input_edge: 100,
        ..ModelConfig::paper192(Task::Age)
    };
    match cfg.layout() {
        Err(Error::Architecture { stage, .. }) => assert_eq!(stage, "block 7 conv"),
        other => panic!("expected architecture error, got {other:?}"),
    }
    let cfg = ModelConfig {
        input_edge: 24,
        ..ModelConfig::desk32(Task::Reconstruction)
    };
    match cfg.layout() {
        Err(Error::Architecture { stage, .. }) => assert_eq!(stage, "decoder"),
        other => panic!("expected architecture error, got {other:?}"),
    }
}

#[test]
fn same_seed_same_initial_parameters() {
    let a = SslModel::new(ModelConfig::desk32(Task::Multihead), 7).unwrap();
    let b = SslModel::new(ModelConfig::desk32(Task::Multihead), 7).unwrap();
    for (p, q) in a.params.iter().zip(b.params.iter()) {
        assert_eq!(p.name, q.name);
        assert_eq!(p.tensor, q.tensor);
    }
}

#[test]
fn head_output_lengths() {
    for classes in [24, 32] {
        let cfg = ModelConfig {
            rotation_classes: classes,
            ..tiny(Task::Rotation)
        };
        let mut store = build_parameters::<f32>(&cfg, &mut Rng::new(0, 0)).unwrap();
        let mut g = Graph::new();
        let bound = store.bind_frozen(&mut g);
        let x = g.input(random_volume(32, 1).to_tensor());
        let enc = encoder_forward(
            &cfg,
            &mut g,
            &bound,
            &mut store,
            x,
            Mode::Eval,
            &mut Rng::new(0, 0),
        )
        .unwrap();
        let logits = rotation_head(&mut g, &bound, enc.features).unwrap();
        assert_eq!(g.shape(logits), &[1, classes]);
        assert!(age_head(&mut g, &bound, enc.features).is_err());
        assert!(matches!(
            decoder_forward(&cfg, &mut g, &bound, &mut store, enc.map, Mode::Eval),
            Err(Error::Config(_))
        ));
    }
}

#[test]
fn zero_features_give_the_age_bias() {
    let cfg = tiny(Task::Age);
    let store = build_parameters::<f64>(&cfg, &mut Rng::new(3, 0)).unwrap();
    let mut g = Graph::new();
    let bound = store.bind_frozen(&mut g);
    let d = cfg.representation_dim().unwrap();
    let f = g.input(Tensor::zeros(&[2, d]));
    let out = age_head(&mut g, &bound, f).unwrap();
    let bias = store.get("head.age.b").unwrap().data()[0];
    assert_eq!(g.value(out).data(), &[bias, bias]);
}

#[test]
fn decoder_restores_the_input_shape() {
    for cfg in [
        ModelConfig {
            widths: [1; 7],
            ..ModelConfig::paper192(Task::Reconstruction)
        },
        tiny(Task::Reconstruction),
    ] {
        let e = cfg.input_edge;
        let mut store = build_parameters::<f32>(&cfg, &mut Rng::new(0, 0)).unwrap();
        let mut g = Graph::new();
        let bound = store.bind_frozen(&mut g);
        let x = g.input(random_volume(e, 2).to_tensor());
        let enc = encoder_forward(
            &cfg,
            &mut g,
            &bound,
            &mut store,
            x,
            Mode::Eval,
            &mut Rng::new(0, 0),
        )
        .unwrap();
        let y = decoder_forward(&cfg, &mut g, &bound, &mut store, enc.map, Mode::Eval).unwrap();
        assert_eq!(g.shape(y), &[1, 1, e, e, e]);
        assert!(g.value(y).data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn extraction_is_deterministic_and_batch_independent() {
    let model = SslModel::new(ModelConfig::desk32(Task::Rotation), 4).unwrap();
    let vols: Vec<Volume> = (0..3).map(|i| random_volume(32, 10 + i)).collect();
    let refs: Vec<&Volume> = vols.iter().collect();
    let batch = model.extract(&refs).unwrap();
    assert_eq!(batch, model.extract(&refs).unwrap());
    assert_eq!(batch[0].len(), model.config.representation_dim().unwrap());
    for (i, v) in vols.iter().enumerate() {
        let single = model.extract(&[v]).unwrap();
        for (a, b) in single[0].iter().zip(&batch[i]) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
    assert!(model.extract(&[&random_volume(16, 0)]).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = SslModel::new(ModelConfig::desk32(Task::Multihead), 9).unwrap();
    model.save(dir.path()).unwrap();
    let back = SslModel::load(dir.path()).unwrap();
    assert_eq!(back.config, model.config);
    let v = random_volume(32, 3);
    assert_eq!(back.extract(&[&v]).unwrap(), model.extract(&[&v]).unwrap());
}

#[test]
fn full_model_gradients_match_finite_differences() {
    for head in [Task::Age, Task::Rotation, Task::Reconstruction] {
        let report = grad_check_model(&tiny(Task::Multihead), head, 2, 11).unwrap();
        assert!(report.checked() > 1000);
        assert!(
            report.max_rel_error() <= 1e-4,
            "{head:?}: {}",
            report.max_rel_error()
        );
    }
    assert!(grad_check_model(&tiny(Task::Age), Task::Rotation, 2, 0).is_err());
}
