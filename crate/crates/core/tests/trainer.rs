use ddjscc_core::autodiff::AdamConfig;
use ddjscc_core::dataset::{synth_dataset, Provenance, Split};
use ddjscc_core::trainer::{
    baseline_suite, sample_episode, train, train_fixed_baseline, train_step, EpochLedger, Episode, TrainOptions,
};
use ddjscc_core::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tiny(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 5,
        lr: 1e-3,
        widths: [4, 4],
        seed: 3,
        ..TrainConfig::default()
    }
}

fn codec_for(cfg: &TrainConfig, set: &ImageSet) -> Codec {
    Codec::new(cfg.arch(set.images[0].shape()).unwrap(), cfg.seed).unwrap()
}

#[test]
fn fixed_mode_always_samples_its_depth() {
    let cfg = TrainConfig {
        mode: TrainedMode::Fixed(4),
        ..TrainConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!((0..1000).all(|_| sample_episode(&cfg, &mut rng).n == 4));
}

#[test]
fn dynamic_depths_are_uniform() {
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut counts = [0usize; 8];
    for _ in 0..60_000 {
        counts[sample_episode(&cfg, &mut rng).n] += 1;
    }
    assert_eq!(counts[0] + counts[1], 0);
    for (n, &count) in counts.iter().enumerate().skip(2) {
        let f = count as f64 / 60_000.0;
        assert!((f - 1.0 / 6.0).abs() <= 0.01, "n={n}: {f}");
    }
}

#[test]
fn snr_draws_cover_the_training_range() {
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws: Vec<Episode> = (0..100_000).map(|_| sample_episode(&cfg, &mut rng)).collect();
    let snr: Vec<f64> = draws.iter().map(|e| e.snr_db).collect();
    let min = snr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = snr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = snr.iter().sum::<f64>() / snr.len() as f64;
    assert!(min >= 0.0 && max <= 27.0);
    assert!((mean - 13.5).abs() <= 0.1, "{mean}");
    assert!(draws.iter().all(|e| (0.1..=0.9).contains(&e.cr)));
}

#[test]
fn every_depth_appears_within_six_hundred_batches() {
    let cfg = TrainConfig::default();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = [false; 8];
        for _ in 0..600 {
            seen[sample_episode(&cfg, &mut rng).n] = true;
        }
        assert!(seen[2..].iter().all(|&s| s));
    }
}

#[test]
fn zero_learning_rate_repeats_the_loss() {
    let cfg = tiny(1);
    let set = synth_dataset(5, 8, 1).unwrap();
    let mut codec = codec_for(&cfg, &set);
    let batch = set.stack(0..5).unwrap();
    let ep = Episode {
        n: 5,
        snr_db: 10.0,
        cr: 0.3,
    };
    let adam = AdamConfig::with_lr(0.0);
    let mut losses = Vec::new();
    for _ in 0..2 {
        let mut noise = ChaCha8Rng::seed_from_u64(4);
        losses.push(train_step(&mut codec, &batch, &ep, &Channel::awgn(), &adam, &mut noise).unwrap());
    }
    assert_eq!(losses[0], losses[1]);
}

#[test]
fn one_step_does_not_raise_the_loss_much() {
    let set = synth_dataset(40, 8, 2).unwrap();
    let mut passes = 0;
    for trial in 0..20u64 {
        let cfg = TrainConfig {
            seed: trial,
            ..tiny(1)
        };
        let mut codec = codec_for(&cfg, &set);
        let start = (trial as usize % 8) * 5;
        let batch = set.stack(start..start + 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let ep = sample_episode(&cfg, &mut rng);
        let adam = AdamConfig::with_lr(1e-4);
        let before = train_step(&mut codec, &batch, &ep, &Channel::awgn(), &adam, &mut ChaCha8Rng::seed_from_u64(trial))
            .unwrap();
        let after = train_step(
            &mut codec,
            &batch,
            &ep,
            &Channel::awgn(),
            &AdamConfig::with_lr(0.0),
            &mut ChaCha8Rng::seed_from_u64(trial),
        )
        .unwrap();
        if after <= 1.1 * before {
            passes += 1;
        }
    }
    assert!(passes > 10, "{passes}/20");
}

#[test]
fn skipped_layers_are_bit_identical_after_a_step() {
    let cfg = tiny(1);
    let set = synth_dataset(5, 8, 3).unwrap();
    let mut codec = codec_for(&cfg, &set);
    let before = codec.clone();
    let batch = set.stack(0..5).unwrap();
    let ep = Episode {
        n: 3,
        snr_db: 5.0,
        cr: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_step(&mut codec, &batch, &ep, &Channel::awgn(), &cfg.adam(), &mut rng).unwrap();
    for i in 1..=8 {
        let ids: Vec<_> = codec.encoder_layer_params(i).into_iter().chain(codec.decoder_layer_params(i)).collect();
        let changed = ids.iter().any(|&id| codec.params().value(id).data() != before.params().value(id).data());
        if i <= 3 || i == 8 {
            assert!(changed, "active layer {i} did not move");
        } else {
            assert!(!changed, "skipped layer {i} moved");
        }
    }
}

#[test]
fn loop_arithmetic_and_validation() {
    let set = synth_dataset(10, 8, 4).unwrap();
    assert!(matches!(train(&set, &tiny(0), TrainOptions::default()), Err(Error::Usage(_))));
    let out = train(&set, &tiny(1), TrainOptions::default()).unwrap();
    assert_eq!(out.stats.len(), 1);
    assert_eq!(out.stats[0].n_counts.values().sum::<usize>(), 2);
    let empty = ImageSet {
        images: vec![],
        split: Split::Train,
        provenance: Provenance::Synthetic { seed: 0 },
    };
    assert!(matches!(train(&empty, &tiny(1), TrainOptions::default()), Err(Error::Usage(_))));
    let bad = TrainConfig {
        cr_range: [0.5, 0.2],
        ..tiny(1)
    };
    assert!(matches!(train(&set, &bad, TrainOptions::default()), Err(Error::Usage(_))));
}

#[test]
fn non_finite_loss_reports_divergence_position() {
    let mut set = synth_dataset(10, 8, 5).unwrap();
    for img in &mut set.images {
        img.data_mut()[0] = f64::NAN;
    }
    match train(&set, &tiny(1), TrainOptions::default()) {
        Err(Error::Divergence { epoch, batch, .. }) => assert_eq!((epoch, batch), (1, 1)),
        other => panic!("expected divergence, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn run_directory_and_determinism() {
    let set = synth_dataset(20, 8, 6).unwrap();
    let val = synth_dataset(4, 8, 7).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let cfg = tiny(3);
    for d in &dirs {
        train(
            &set,
            &cfg,
            TrainOptions {
                run_dir: Some(d.path()),
                validation: Some(&val),
                ..Default::default()
            },
        )
        .unwrap();
    }
    for k in 1..=3 {
        let name = format!("epoch_{k}.ckpt");
        let a = std::fs::read(dirs[0].path().join(&name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    assert!(dirs[0].path().join("best.ckpt").exists());
    let stats = std::fs::read_to_string(dirs[0].path().join("stats.csv")).unwrap();
    let lines: Vec<&str> = stats.lines().collect();
    assert_eq!(lines[0], "epoch,mean_loss,duration_s,n2,n3,n4,n5,n6,n7,val_psnr_db");
    assert_eq!(lines.len(), 4);
    let config: TrainConfig =
        serde_json::from_str(&std::fs::read_to_string(dirs[0].path().join("config.json")).unwrap()).unwrap();
    assert_eq!(config, cfg);

    // A shorter run from the same seed is a prefix of the longer one: the
    // parameters are initialized once and only updated afterwards.
    let short = tempfile::tempdir().unwrap();
    train(
        &set,
        &tiny(1),
        TrainOptions {
            run_dir: Some(short.path()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(
        std::fs::read(short.path().join("epoch_1.ckpt")).unwrap(),
        std::fs::read(dirs[0].path().join("epoch_1.ckpt")).unwrap()
    );
}

#[test]
fn baselines_and_epoch_ledger() {
    let dynamic = TrainConfig::default();
    let suite = baseline_suite(&dynamic, 30);
    assert_eq!(suite.len(), 6);
    let seeds: std::collections::BTreeSet<u64> = suite.iter().map(|c| c.seed).collect();
    assert_eq!(seeds.len(), 6);
    assert!(!seeds.contains(&dynamic.seed));
    let ledger = EpochLedger::from_configs(&dynamic, &suite);
    assert_eq!(ledger.total_fixed_epochs, 180);
    assert_eq!(ledger.ratio, 60.0 / 180.0);
    assert!(ledger.is_consistent());
    let paper_scale = EpochLedger::new(700, (2..8).map(|n| (n, 200)).collect());
    assert_eq!(paper_scale.total_fixed_epochs, 1200);
    assert!((paper_scale.ratio - 0.5833).abs() < 1e-4);

    let set = synth_dataset(10, 8, 8).unwrap();
    assert!(train_fixed_baseline(&set, &tiny(1), TrainOptions::default()).is_err());
    let fixed = TrainConfig {
        mode: TrainedMode::Fixed(7),
        ..tiny(1)
    };
    let out = train_fixed_baseline(&set, &fixed, TrainOptions::default()).unwrap();
    assert_eq!(out.codec.mode(), TrainedMode::Fixed(7));
    assert_eq!(out.stats[0].n_counts.keys().copied().collect::<Vec<_>>(), vec![7]);
    // Same architecture as a dynamic model.
    let dyn_codec = codec_for(&tiny(1), &set);
    for (a, b) in out.codec.params().ids().zip(dyn_codec.params().ids()) {
        assert_eq!(out.codec.params().value(a).shape(), dyn_codec.params().value(b).shape());
    }
}
