use ddjscc_core::dataset::synth_dataset;
use ddjscc_core::evaluator::{
    compare_dynamic_vs_fixed, evaluate_grid, export_results, import_sweep_csv, psnr, reconstruct, CellResult,
    SweepRow, Thresholds,
};
use ddjscc_core::trainer::EpochLedger;
use ddjscc_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_codec(mode: TrainedMode) -> Codec {
    let arch = Arch {
        height: 8,
        width: 8,
        width1: 3,
        width2: 4,
        ..Arch::default()
    };
    let mut c = Codec::new(arch, 1).unwrap();
    c.set_mode(mode);
    c
}

fn spec(n_points: Vec<usize>, trials: usize) -> SweepSpec {
    SweepSpec {
        snr_points: vec![0.0, 10.0],
        cr_points: vec![0.25, 0.5],
        n_points,
        trials,
        ..SweepSpec::default_for(8, 5)
    }
}

#[test]
fn psnr_examples() {
    let x = Tensor::full(&[4], 0.3);
    let p = psnr(&x, &x, 1.0).unwrap();
    assert!(p.capped);
    assert!((p.db - 99.0).abs() <= 1e-10);

    let a = Tensor::zeros(&[2]);
    let b = Tensor::full(&[2], 0.1);
    let p = psnr(&a, &b, 1.0).unwrap();
    assert!(!p.capped);
    assert!((p.db - 20.0).abs() <= 1e-10);

    // mse = 255^2 / 10 from a constant offset of 255 / sqrt(10).
    let b = Tensor::full(&[3], 255.0 / 10f64.sqrt());
    let p = psnr(&Tensor::zeros(&[3]), &b, 255.0).unwrap();
    assert!((p.db - 10.0).abs() <= 1e-10, "{}", p.db);

    assert!(matches!(psnr(&a, &Tensor::zeros(&[3]), 1.0), Err(Error::Dimension(_))));
}

#[test]
fn noiseless_reconstruction_ignores_the_generator() {
    let codec = small_codec(TrainedMode::Dynamic);
    let x = synth_dataset(3, 8, 1).unwrap().stack(0..3).unwrap();
    let cond = Conditioning::new(5.0, 0.25).unwrap();
    let cfg = LayerConfig::from_depth(4, 8).unwrap();
    let ch = Channel {
        mode: ChannelMode::Noiseless,
        p_max: 1.0,
    };
    let a = reconstruct(&codec, &x, &cond, &cfg, &ch, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = reconstruct(&codec, &x, &cond, &cfg, &ch, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(a.data(), b.data());
    assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn noiseless_cells_have_no_trial_variance() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(1, 8, 2).unwrap();
    let s = SweepSpec {
        channel: Channel {
            mode: ChannelMode::Noiseless,
            p_max: 1.0,
        },
        ..spec(vec![3], 4)
    };
    let r = evaluate_grid(&codec, None, &test, &s, 1).unwrap();
    for c in &r.cells {
        assert_eq!(c.stderr_db, 0.0);
        assert_eq!(c.samples, 4);
    }
}

#[test]
fn grid_is_reproducible_and_schedule_independent() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(6, 8, 3).unwrap();
    let s = spec(vec![2, 5, 7], 2);
    let a = evaluate_grid(&codec, None, &test, &s, 1).unwrap();
    let b = evaluate_grid(&codec, None, &test, &s, 1).unwrap();
    let c = evaluate_grid(&codec, None, &test, &s, 3).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.cells.len(), 12);
    assert!(a.cells.iter().all(|c| c.samples == 12 && c.mean_psnr_db.is_finite()));
}

#[test]
fn fixed_models_only_run_at_their_depth() {
    let codec = small_codec(TrainedMode::Fixed(2));
    let test = synth_dataset(2, 8, 4).unwrap();
    let err = evaluate_grid(&codec, None, &test, &spec(vec![5], 1), 1);
    assert!(matches!(err, Err(Error::Protocol(_))));
    assert!(evaluate_grid(&codec, None, &test, &spec(vec![2], 1), 1).is_ok());
}

#[test]
fn empty_grids_are_rejected_up_front() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(2, 8, 4).unwrap();
    for s in [
        SweepSpec {
            snr_points: vec![],
            ..spec(vec![2], 1)
        },
        spec(vec![], 1),
        spec(vec![2], 0),
    ] {
        assert!(matches!(evaluate_grid(&codec, None, &test, &s, 1), Err(Error::Usage(_))));
    }
}

fn cell(n: usize, snr_db: f64, cr: f64, mean: f64, se: f64) -> CellResult {
    CellResult {
        n,
        snr_db,
        cr,
        mean_psnr_db: mean,
        stderr_db: se,
        samples: 10,
        capped: 0,
    }
}

fn result(model: TrainedMode, n_points: Vec<usize>, cells: Vec<CellResult>) -> SweepResult {
    SweepResult {
        model,
        checkpoint: None,
        spec: spec(n_points, 1),
        cells,
    }
}

#[test]
fn self_comparison_has_zero_deltas() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(2, 8, 5).unwrap();
    let r = evaluate_grid(&codec, None, &test, &spec(vec![2, 3], 1), 1).unwrap();
    let report = compare_dynamic_vs_fixed(&r, std::slice::from_ref(&r), &EpochLedger::new(1, vec![(2, 1)]), Thresholds::default())
        .unwrap();
    assert!(report.cells.iter().all(|c| c.delta_db == Some(0.0)));
    assert!(report.per_n.iter().all(|d| d.delta_db == Some(0.0)));
}

#[test]
fn per_depth_average_is_unweighted_and_checks_apply_margins() {
    let dynamic = result(
        TrainedMode::Dynamic,
        vec![2, 3],
        vec![
            cell(2, 0.0, 0.25, 10.0, 0.1),
            cell(2, 10.0, 0.25, 14.0, 0.1),
            cell(2, 0.0, 0.5, 11.0, 0.1),
            cell(2, 10.0, 0.5, 15.0, 0.1),
            cell(3, 0.0, 0.25, 9.8, 0.1),
            cell(3, 10.0, 0.25, 13.9, 0.1),
            cell(3, 0.0, 0.5, 10.8, 0.1),
            cell(3, 10.0, 0.5, 14.9, 0.1),
        ],
    );
    let fixed2 = result(
        TrainedMode::Fixed(2),
        vec![2],
        vec![
            cell(2, 0.0, 0.25, 10.0, 0.1),
            cell(2, 10.0, 0.25, 14.0, 0.1),
            cell(2, 0.0, 0.5, 11.0, 0.1),
            // Drops with SNR by more than one pooled standard error.
            cell(2, 10.0, 0.5, 10.5, 0.1),
        ],
    );
    let ledger = EpochLedger::new(60, vec![(2, 30)]);
    let report = compare_dynamic_vs_fixed(&dynamic, &[fixed2], &ledger, Thresholds::default()).unwrap();
    assert_eq!(report.per_n[0].dynamic_db, (10.0 + 14.0 + 11.0 + 15.0) / 4.0);
    assert!((report.per_n[1].dynamic_db - 12.35).abs() < 1e-12);
    assert_eq!(report.per_n[0].fixed_db, Some((10.0 + 14.0 + 11.0 + 10.5) / 4.0));
    assert_eq!(report.per_n[1].fixed_db, None);
    let check = |name: &str| report.checks.iter().find(|c| c.name == name).unwrap().passed;
    // 12.35 vs 12.5 is within the 0.3 dB slack.
    assert!(check("depth_monotone"));
    assert!(check("dynamic_vs_fixed"));
    assert!(check("snr_monotone[dynamic]"));
    assert!(!check("snr_monotone[fixed2]"));
    assert!(check("epoch_ledger"));
    assert!(!report.passed);
    assert_eq!(report.ledger.ratio, 2.0);

    let mut other = dynamic.clone();
    other.spec.seed += 1;
    assert!(matches!(
        compare_dynamic_vs_fixed(&dynamic, &[other], &ledger, Thresholds::default()),
        Err(Error::Usage(_))
    ));
}

#[test]
fn csv_export_round_trips() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(3, 8, 6).unwrap();
    let r = evaluate_grid(&codec, None, &test, &spec(vec![2, 4], 2), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, json_path) = export_results(dir.path(), std::slice::from_ref(&r), None).unwrap();
    assert_eq!(import_sweep_csv(&csv_path).unwrap(), SweepRow::rows(&r));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(json_path).unwrap()).unwrap();
    assert_eq!(json["sweeps"][0]["model"]["kind"], "dynamic");

    let again = tempfile::tempdir().unwrap();
    let r2 = evaluate_grid(&codec, None, &test, &spec(vec![2, 4], 2), 1).unwrap();
    let (csv2, _) = export_results(again.path(), &[r2], None).unwrap();
    assert_eq!(std::fs::read(&csv_path).unwrap(), std::fs::read(csv2).unwrap());
}

#[test]
fn one_cell_one_trial_is_two_lines() {
    let codec = small_codec(TrainedMode::Dynamic);
    let test = synth_dataset(1, 8, 7).unwrap();
    let s = SweepSpec {
        snr_points: vec![3.0],
        cr_points: vec![0.25],
        ..spec(vec![2], 1)
    };
    let r = evaluate_grid(&codec, None, &test, &s, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (csv_path, _) = export_results(dir.path(), &[r], None).unwrap();
    let text = std::fs::read_to_string(csv_path).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(text.lines().next().unwrap(), "model,n,snr_db,cr,mean_psnr_db,stderr_db,samples");
}

proptest! {
    #[test]
    fn psnr_agrees_with_log_form(seed in any::<u64>(), max_i in 0.5f64..300.0) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::from_fn(&[16], |_| rng.random_range(0.0..1.0));
        let b = Tensor::from_fn(&[16], |_| rng.random_range(0.0..1.0));
        let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 16.0;
        let p = psnr(&a, &b, max_i).unwrap();
        prop_assert!((p.db - (10.0 * (max_i * max_i).log10() - 10.0 * mse.log10())).abs() <= 1e-10);
    }
}
