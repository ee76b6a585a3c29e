use ambient_agitation::data_model::{AcousticReduction, Channel, Deployment};
use ambient_agitation::evaluation::{
    assemble_dataset, collect_observations, read_dataset_csv, train_on, write_dataset_csv,
    LayoutDescriptor, ModelBundle, ModelKind, ProtocolConfig,
};
use ambient_agitation::features::{DiffMode, FeatureLayout};
use ambient_agitation::lstm::{fit_lstm, LstmHyper, SeqData};
use ambient_agitation::signal::NormalizationMode;
use ambient_agitation::synth::{
    generate, generate_to_dir, GeneratorConfig, TriggerKind, TriggerRule,
};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(id: &str, seed: u64) -> GeneratorConfig {
    GeneratorConfig {
        id: id.into(),
        seed,
        duration_days: 3.0,
        n_nodes: 2,
        target_per_week: 35.0,
        rules: vec![TriggerRule::new(TriggerKind::NoiseSpike)],
        ..Default::default()
    }
}

fn quick_protocol() -> ProtocolConfig {
    let mut cfg = ProtocolConfig {
        seed: 1,
        folds: 3,
        importance_repeats: 2,
        ..Default::default()
    };
    cfg.gbt.n_trees = 15;
    cfg.lstm.hidden = 8;
    cfg.lstm.max_epochs = 4;
    cfg
}

#[test]
fn generated_files_ingest_cleanly_and_match_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("clean", 11);
    let (manifest, truth) = generate_to_dir(&cfg, dir.path().join("raw")).unwrap();
    let (loaded, quality) = Deployment::load(&manifest, AcousticReduction::default()).unwrap();
    assert!(quality.warnings.is_empty(), "{:?}", quality.warnings);
    assert_eq!(loaded.labels.len(), truth.records.len());

    let memory = generate(&cfg).unwrap().deployment;
    assert_eq!(loaded.labels, memory.labels);
    for (node, streams) in &memory.nodes {
        for c in Channel::ALL {
            let (a, b) = (streams.get(c), loaded.nodes[node].get(c));
            assert_eq!(a.missing, b.missing);
            let worst = a
                .values
                .iter()
                .zip(&b.values)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "{node}/{c}: {worst}");
        }
    }
}

#[test]
fn canonical_round_trip_is_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let dep = generate(&small("canon", 12)).unwrap().deployment;
    let manifest = dep.save(dir.path()).unwrap();
    let (back, quality) = Deployment::load(&manifest, AcousticReduction::default()).unwrap();
    assert_eq!(back, dep);
    assert_eq!(quality.labels, dep.labels.len());
}

#[test]
fn generator_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("bytes", 13);
    generate_to_dir(&cfg, dir.path().join("a")).unwrap();
    generate_to_dir(&cfg, dir.path().join("b")).unwrap();
    for f in [
        "sensors.csv",
        "labels.csv",
        "track.csv",
        "manifest.json",
        "ground_truth.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
    let other = generate(&GeneratorConfig { seed: 14, ..cfg }).unwrap();
    assert_ne!(
        other.deployment.labels,
        generate(&small("bytes", 13)).unwrap().deployment.labels
    );
}

#[test]
fn dataset_csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_protocol();
    let pool = collect_observations(generate(&small("csv", 15)).unwrap().deployment, &cfg).unwrap();
    let data = assemble_dataset("csv", &[&pool], &cfg).unwrap();
    let path = dir.path().join("csv.csv");
    write_dataset_csv(&path, &data).unwrap();
    let back = read_dataset_csv(&path, "csv").unwrap();
    assert_eq!(back.table, data.table);
    assert_eq!(back.split, data.split);
    assert_eq!(back.anchors, data.anchors);
    assert_eq!(back.nodes, data.nodes);
}

#[test]
fn bundles_reload_with_identical_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick_protocol();
    let pool =
        collect_observations(generate(&small("bundle", 16)).unwrap().deployment, &cfg).unwrap();
    let data = assemble_dataset("bundle", &[&pool], &cfg).unwrap();
    let test = data.test();
    for kind in ModelKind::ALL {
        let outcome = train_on(&data, kind, &cfg).unwrap();
        let before = outcome.model.predict_proba(test.rows.view()).unwrap();
        let bundle = ModelBundle::new(
            outcome,
            "bundle",
            "hash".into(),
            cfg.seed,
            LayoutDescriptor::new(FeatureLayout { n_windows: 9 }, DiffMode::Absolute),
            cfg.normalization,
            data.stats.clone(),
            &data.split,
        );
        let path = dir.path().join(format!("{kind}.json"));
        bundle.save(&path).unwrap();
        let back = ModelBundle::load(&path).unwrap();
        assert_eq!(back, bundle);
        assert_eq!(back.model.predict_proba(test.rows.view()).unwrap(), before);
    }
}

#[test]
fn train_only_normalization_keeps_features_in_range() {
    let cfg = ProtocolConfig {
        normalization: NormalizationMode::TrainOnly,
        ..quick_protocol()
    };
    let pool =
        collect_observations(generate(&small("trainonly", 17)).unwrap().deployment, &cfg).unwrap();
    let data = assemble_dataset("trainonly", &[&pool], &cfg).unwrap();
    let layout = FeatureLayout { n_windows: 9 };
    for (i, row) in data.train().rows.outer_iter().enumerate() {
        for c in Channel::ALL {
            let max_col = layout.index(0, c, ambient_agitation::features::FeatureKind::Max);
            assert!(
                (0.0..=100.0).contains(&row[max_col]),
                "train row {i} {c}: {}",
                row[max_col]
            );
        }
    }
    train_on(&data, ModelKind::Gbt, &cfg).unwrap();
}

fn separable(n: usize, seed: u64) -> (Array3<f64>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let x = Array3::from_shape_fn((n, 4, 3), |(i, t, k)| {
        let shift = if y[i] == 1 && t == 3 && k == 0 {
            3.0
        } else {
            0.0
        };
        shift + rng.random_range(-0.5..0.5)
    });
    (x, y)
}

#[test]
fn lstm_learns_a_separable_task() {
    let (x, y) = separable(64, 1);
    let (xv, yv) = separable(32, 2);
    let hyper = LstmHyper {
        hidden: 8,
        max_epochs: 60,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let (model, log) = fit_lstm(
        SeqData { x: x.view(), y: &y },
        Some(SeqData {
            x: xv.view(),
            y: &yv,
        }),
        &hyper,
        3,
    )
    .unwrap();
    let probs = model.predict_sequences(xv.view()).unwrap();
    let correct = probs
        .iter()
        .zip(&yv)
        .filter(|(p, &t)| (**p >= 0.5) == (t == 1))
        .count();
    assert_eq!(correct, yv.len(), "{:?}", log.valid_weighted_f1);
    assert!(log.train_loss.last().unwrap() < &log.train_loss[0]);
}

#[test]
fn patience_zero_stops_after_first_stall() {
    let (x, y) = separable(32, 4);
    // Validation labels unrelated to the inputs stall quickly.
    let (xv, _) = separable(16, 5);
    let yv: Vec<u8> = (0..16).map(|i| u8::from(i < 8)).collect();
    let hyper = LstmHyper {
        hidden: 4,
        max_epochs: 50,
        patience: 0,
        ..Default::default()
    };
    let (_, log) = fit_lstm(
        SeqData { x: x.view(), y: &y },
        Some(SeqData {
            x: xv.view(),
            y: &yv,
        }),
        &hyper,
        6,
    )
    .unwrap();
    assert!(log.stopped_early);
    let n = log.valid_weighted_f1.len();
    assert_eq!(n, log.chosen_epoch + 1, "one stalled epoch ends training");
    let best = log.valid_weighted_f1[log.chosen_epoch - 1];
    assert!(log.valid_weighted_f1[..log.chosen_epoch - 1]
        .iter()
        .all(|&f| f < best));
}

#[test]
fn lstm_without_validation_runs_every_epoch() {
    let (x, y) = separable(16, 7);
    let hyper = LstmHyper {
        hidden: 4,
        max_epochs: 7,
        ..Default::default()
    };
    let (_, log) = fit_lstm(SeqData { x: x.view(), y: &y }, None, &hyper, 8).unwrap();
    assert_eq!(log.train_loss.len(), 7);
    assert_eq!(log.chosen_epoch, 7);
    assert!(!log.stopped_early);
}
