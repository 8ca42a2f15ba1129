//! End-to-end behavior of the joint training procedure.

use featimp_core::data::{holdout_split, Dataset};
use featimp_core::estimator::train::{
    batch_gradients, capture_targets, heldout_spearman, joint_train, BatchTargets,
};
use featimp_core::estimator::{JointTrainConfig, LossEstimator, Objective};
use featimp_core::nn::Mlp;
use featimp_core::seeds::{derive, Stream};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Two linearly separable 2-d blobs.
fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % 2;
        let center = if label == 0 { (-2.0, -2.0) } else { (2.0, 2.0) };
        features.push(center.0 + rng.random_range(-1.0..1.0));
        features.push(center.1 + rng.random_range(-1.0..1.0));
        labels.push(label);
    }
    Dataset::new(features, labels, vec!["x".into(), "y".into()], 2).unwrap()
}

#[test]
fn separable_blobs_reach_low_training_loss() {
    let dataset = blobs(200, 1);
    let mut model = Mlp::new(&[2, 8, 2], 0.0, 2).unwrap();
    let mut estimator = LossEstimator::for_model(&model, 3).unwrap();
    let mut config = JointTrainConfig::contrastive(50, 4);
    config.batch_size = 10;
    config.lr = 0.01;
    let history = joint_train(&dataset, &mut model, &mut estimator, &config).unwrap();
    let final_loss = history.epochs.last().unwrap().loss;
    assert!(final_loss < 0.1, "final training loss {final_loss}");
}

#[test]
fn zero_aux_weight_leaves_estimator_untouched() {
    let dataset = blobs(100, 5);
    let mut model = Mlp::new(&[2, 6, 2], 0.0, 6).unwrap();
    let mut estimator = LossEstimator::for_model(&model, 7).unwrap();
    let before = estimator.params_flat();
    let mut config = JointTrainConfig::contrastive(5, 8);
    config.batch_size = 20;
    config.aux_weight = 0.0;
    joint_train(&dataset, &mut model, &mut estimator, &config).unwrap();
    // the estimator is only reached through the auxiliary loss
    assert_eq!(estimator.params_flat(), before);
}

#[test]
fn training_is_bitwise_reproducible() {
    let dataset = blobs(80, 9);
    let run = || {
        let mut model = Mlp::new(&[2, 6, 2], 0.0, 10).unwrap();
        let mut estimator = LossEstimator::for_model(&model, 11).unwrap();
        let mut config = JointTrainConfig::dropout_calibration(3, 12);
        config.batch_size = 16;
        config.mc_passes = 5;
        let history = joint_train(&dataset, &mut model, &mut estimator, &config).unwrap();
        (model.params_flat(), estimator.params_flat(), history)
    };
    let (m1, e1, h1) = run();
    let (m2, e2, h2) = run();
    assert_eq!(m1, m2);
    assert_eq!(e1, e2);
    assert_eq!(h1, h2);
}

#[test]
fn contrastive_training_beats_the_untrained_estimator() {
    let dataset = blobs(300, 13);
    let mut model = Mlp::new(&[2, 8, 2], 0.0, 14).unwrap();
    let mut estimator = LossEstimator::for_model(&model, 15).unwrap();
    let untrained = estimator.clone();
    let mut config = JointTrainConfig::contrastive(60, 16);
    config.batch_size = 30;
    joint_train(&dataset, &mut model, &mut estimator, &config).unwrap();

    let (_, heldout) = holdout_split(
        dataset.num_samples(),
        config.val_fraction,
        derive(config.seed, Stream::HoldoutSplit),
    );
    let trained_rho = heldout_spearman(&model, &estimator, &dataset, &heldout).unwrap();
    let untrained_rho = heldout_spearman(&model, &untrained, &dataset, &heldout).unwrap();
    assert!(
        trained_rho > untrained_rho,
        "trained {trained_rho} vs untrained {untrained_rho}"
    );
}

#[test]
fn odd_batch_size_is_rejected_for_contrastive() {
    let dataset = blobs(40, 17);
    let mut model = Mlp::new(&[2, 4, 2], 0.0, 18).unwrap();
    let mut estimator = LossEstimator::for_model(&model, 19).unwrap();
    let mut config = JointTrainConfig::contrastive(1, 20);
    config.batch_size = 7;
    assert!(joint_train(&dataset, &mut model, &mut estimator, &config).is_err());
}

#[test]
fn history_row_zero_is_the_untrained_state() {
    let dataset = blobs(60, 21);
    let mut model = Mlp::new(&[2, 4, 2], 0.0, 22).unwrap();
    let mut estimator = LossEstimator::for_model(&model, 23).unwrap();
    let mut config = JointTrainConfig::contrastive(4, 24);
    config.batch_size = 10;
    let history = joint_train(&dataset, &mut model, &mut estimator, &config).unwrap();
    assert_eq!(history.epochs.len(), 5);
    assert_eq!(history.epochs[0].epoch, 0);
    assert!(history.epochs[0].loss > history.epochs[4].loss);
}

/// Perturbing captured targets without flipping any ordering or hinge
/// activation must leave every parameter gradient bit-identical: targets are
/// constants, not differentiation paths.
#[test]
fn loss_targets_receive_no_gradient() {
    let dataset = blobs(24, 25);
    let model = Mlp::new(&[2, 6, 2], 0.0, 26).unwrap();
    let estimator = LossEstimator::for_model(&model, 27).unwrap();

    let inputs: Vec<&[f64]> = (0..8).map(|i| dataset.sample(i)).collect();
    let labels: Vec<usize> = (0..8).map(|i| dataset.label(i)).collect();

    // contrastive mode
    let config = JointTrainConfig::contrastive(1, 28);
    let targets = capture_targets(&model, &inputs, &labels, &config, 0).unwrap();
    let (_, mg, eg) = batch_gradients(&model, &estimator, &inputs, &targets, &config).unwrap();
    let mut nudged = targets.clone();
    for (k, v) in nudged.true_losses.iter_mut().enumerate() {
        // order-preserving nudge
        *v += 1e-9 * (k as f64 + 1.0);
    }
    let (_, mg2, eg2) = batch_gradients(&model, &estimator, &inputs, &nudged, &config).unwrap();
    assert_eq!(mg.flat(), mg2.flat());
    assert_eq!(eg.flat(), eg2.flat());

    // calibration mode: nudge the interval endpoints without crossing kinks
    let mut model_dc = Mlp::new(&[2, 6, 2], 0.2, 26).unwrap();
    model_dc.set_params_flat(&model.params_flat()).unwrap();
    let mut config_dc = JointTrainConfig::dropout_calibration(1, 29);
    config_dc.mc_passes = 4;
    let targets_dc = capture_targets(&model_dc, &inputs, &labels, &config_dc, 77).unwrap();
    let (_, mg, eg) =
        batch_gradients(&model_dc, &estimator, &inputs, &targets_dc, &config_dc).unwrap();
    let nudged_dc = BatchTargets {
        intervals: targets_dc
            .intervals
            .iter()
            .map(|&(m, s)| (m + 1e-9, s + 1e-9))
            .collect(),
        ..targets_dc.clone()
    };
    let (_, mg2, eg2) =
        batch_gradients(&model_dc, &estimator, &inputs, &nudged_dc, &config_dc).unwrap();
    assert_eq!(mg.flat(), mg2.flat());
    assert_eq!(eg.flat(), eg2.flat());
    assert_eq!(config_dc.objective, Objective::DropoutCalibration);
}

/// The full joint objective (main + weighted auxiliary) must differentiate
/// correctly through the tap injections in both modes.
#[test]
fn joint_gradients_match_finite_differences() {
    let dataset = blobs(16, 30);
    let inputs: Vec<&[f64]> = (0..8).map(|i| dataset.sample(i)).collect();
    let labels: Vec<usize> = (0..8).map(|i| dataset.label(i)).collect();

    for (objective_name, dropout, config) in [
        ("contrastive", 0.0, JointTrainConfig::contrastive(1, 31)),
        ("calibration", 0.3, {
            let mut c = JointTrainConfig::dropout_calibration(1, 31);
            c.mc_passes = 3;
            c.calibration_margin = 0.05;
            c
        }),
    ] {
        let model = Mlp::new(&[2, 5, 4, 2], dropout, 32).unwrap();
        let estimator = LossEstimator::for_model(&model, 33).unwrap();
        let targets = capture_targets(&model, &inputs, &labels, &config, 55).unwrap();
        let (_, mg, eg) =
            batch_gradients(&model, &estimator, &inputs, &targets, &config).unwrap();

        let n_model = model.param_count();
        let mut analytic = mg.flat();
        analytic.extend(eg.flat());
        let mut joint = model.params_flat();
        joint.extend(estimator.params_flat());

        let report = featimp_core::gradcheck::check_gradients(
            |params| {
                let mut m = model.clone();
                m.set_params_flat(&params[..n_model]).unwrap();
                let mut e = estimator.clone();
                e.set_params_flat(&params[n_model..]).unwrap();
                featimp_core::estimator::train::evaluate_batch(&m, &e, &inputs, &targets, &config)
                    .unwrap()
                    .total
            },
            &joint,
            &analytic,
            1e-4,
            1e-4,
            1e-8,
        )
        .unwrap_or_else(|e| panic!("{objective_name}: {e}"));
        assert!(
            report.checked > report.skipped,
            "{objective_name}: too many kink skips ({report:?})"
        );
    }
}
