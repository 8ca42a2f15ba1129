// temporary tuning harness for the acceptance-scale experiments
use featimp_core::data::holdout_split;
use featimp_core::estimator::heldout_spearman;
use featimp_core::seeds::{derive, Stream};
use featimp_core::stats::{mean, percentile, spearman};
use featimp_core::*;
use std::time::Instant;

fn median_dlo(
    model: &Mlp,
    ds: &Dataset,
    rows: &[usize],
    k: f64,
    strategy: &MaskingStrategy,
    rankings: impl Fn(usize) -> Vec<usize>,
) -> f64 {
    let scores: Vec<f64> = rows
        .iter()
        .map(|&i| delta_log_odds(model, ds.sample(i), &rankings(i), k, strategy).unwrap())
        .collect();
    percentile(&scores, 50.0)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(100);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let strategy_arg: String = args.get(3).cloned().unwrap_or_else(|| "zero".into());

    let mut c6_corr_est = Vec::new();
    let mut c6_corr_rand = Vec::new();
    let mut c6_var_est = Vec::new();
    let mut c6_var_rand = Vec::new();

    for seed in 0..seeds {
        let t0 = Instant::now();
        let spec = ShiftSpec::sampled(20, 5000, 4, seed);
        let triple = generate_triple(&spec).unwrap();
        let ds = &triple.original;
        let strategy = if strategy_arg == "mean" { MaskingStrategy::feature_mean_of(ds) } else { MaskingStrategy::Zero };

        let mut config = JointTrainConfig::contrastive(epochs, seed);
        if let Some(m) = args.get(4) { config.margin = m.parse().unwrap(); }
        config.lr = 0.001;
        let hidden: Vec<usize> = args.get(5).map(|s| s.split(',').map(|v| v.parse().unwrap()).collect()).unwrap_or_else(|| vec![64, 32]);
        if let Some(lr) = args.get(6) { config.lr = lr.parse().unwrap(); }
        if let Some(b) = args.get(8) { config.batch_size = b.parse().unwrap(); }
        if let Some(w) = args.get(9) { config.aux_weight = w.parse().unwrap(); }
        let mut dims = vec![20usize]; dims.extend_from_slice(&hidden); dims.push(4);
        let mut model = Mlp::new(&dims, 0.0, derive(seed, Stream::ModelInit)).unwrap();
        let mut est =
            {
            let units: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(16);
            let taps: Vec<usize> = (0..model.num_hidden_layers()).collect();
            LossEstimator::new(&model, taps, units, derive(seed, Stream::EstimatorInit)).unwrap()
        };
        joint_train(ds, &mut model, &mut est, &config).unwrap();

        let (_, val) = holdout_split(ds.num_samples(), 0.1, derive(seed, Stream::HoldoutSplit));
        let rows: Vec<usize> = val.iter().copied().take(200).collect();

        // criterion 4: delta-log-odds vs random at k=15
        let est_rankings: Vec<(usize, Vec<usize>)> = rows
            .iter()
            .map(|&i| {
                (
                    i,
                    granger_scores(&model, &est, ds.sample(i), &strategy, i)
                        .unwrap()
                        .ranking,
                )
            })
            .collect();
        let lookup = |i: usize, set: &[(usize, Vec<usize>)]| {
            set.iter().find(|(j, _)| *j == i).unwrap().1.clone()
        };
        let med_est = median_dlo(&model, ds, &rows, 15.0, &strategy, |i| {
            lookup(i, &est_rankings)
        });
        let med_rand = median_dlo(&model, ds, &rows, 15.0, &strategy, |i| {
            random_ranking_baseline(20, derive(seed, Stream::RandomRanking(i as u64))).unwrap()
        });

        // criterion 5: per-sample rank agreement with the oracle
        let rhos: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let e = granger_scores(&model, &est, ds.sample(i), &strategy, i).unwrap();
                let o =
                    oracle_granger_scores(&model, ds.sample(i), ds.label(i), &strategy, i).unwrap();
                spearman(&e.deltas, &o.deltas)
            })
            .collect();
        let mean_rho = mean(&rhos);

        // criterion 6: shifted sets at k=25
        let shift_rows: Vec<usize> = (0..200).collect();
        for (set, est_meds, rand_meds) in [
            (&triple.corr_shifted, &mut c6_corr_est, &mut c6_corr_rand),
            (&triple.var_shifted, &mut c6_var_est, &mut c6_var_rand),
        ] {
            let m_est = median_dlo(&model, set, &shift_rows, 25.0, &strategy, |i| {
                granger_scores(&model, &est, set.sample(i), &strategy, i)
                    .unwrap()
                    .ranking
            });
            let m_rand = median_dlo(&model, set, &shift_rows, 25.0, &strategy, |i| {
                random_ranking_baseline(20, derive(seed ^ 0xA5, Stream::RandomRanking(i as u64)))
                    .unwrap()
            });
            est_meds.push(m_est);
            rand_meds.push(m_rand);
        }

        // criterion 7: severity monotonicity over the held-out rows, with a
        // calibration-trained estimator
        let mut dc_config = JointTrainConfig::dropout_calibration(
            args.get(10).map(|s| s.parse().unwrap()).unwrap_or(30), seed);
        if let Some(t) = args.get(11) { dc_config.mc_passes = t.parse().unwrap(); }
        dc_config.lr = 0.001;
        let mut dc_model = Mlp::new(&dims, 0.1, derive(seed, Stream::ModelInit)).unwrap();
        let mut dc_est = {
            let units: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(16);
            let taps: Vec<usize> = (0..dc_model.num_hidden_layers()).collect();
            LossEstimator::new(&dc_model, taps, units, derive(seed, Stream::EstimatorInit)).unwrap()
        };
        joint_train(ds, &mut dc_model, &mut dc_est, &dc_config).unwrap();
        let sweep_ds = ds.subset(&val);
        let curve =
            severity_sweep(&dc_model, &dc_est, &sweep_ds, &[0.0, 0.5, 1.0, 2.0, 4.0], seed)
                .unwrap();
        let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1);

        // criterion 5 with the calibration-trained pair
        let dc_rhos: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let e = granger_scores(&dc_model, &dc_est, ds.sample(i), &strategy, i).unwrap();
                let o = oracle_granger_scores(&dc_model, ds.sample(i), ds.label(i), &strategy, i)
                    .unwrap();
                spearman(&e.deltas, &o.deltas)
            })
            .collect();
        let dc_c5 = mean(&dc_rhos);
        let mut dc_correct = 0;
        for &i in &val {
            let t = dc_model.forward(ds.sample(i)).unwrap();
            let pred = t.logits.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            if pred == ds.label(i) { dc_correct += 1; }
        }
        println!("    dc acc {:.2}", dc_correct as f64 / val.len() as f64);
        let dc_med_est = median_dlo(&dc_model, ds, &rows, 15.0, &strategy, |i| {
            granger_scores(&dc_model, &dc_est, ds.sample(i), &strategy, i)
                .unwrap()
                .ranking
        });

        let rho_val = heldout_spearman(&model, &est, ds, &val).unwrap();
        let mut correct = 0;
        for &i in &val {
            let t = model.forward(ds.sample(i)).unwrap();
            let pred = t.logits.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            if pred == ds.label(i) { correct += 1; }
        }
        let acc = correct as f64 / val.len() as f64;
        println!(
            "seed {seed}: acc {acc:.2} rho {rho_val:.3} | c4 est {med_est:+.3} rand {med_rand:+.3} | c5 {mean_rho:.3} dc_c5 {dc_c5:.3} dc_c4 {dc_med_est:+.3} | c7 {monotone} {:?} [{:.0}s]",
            curve.iter().map(|c| (c.1 * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
    println!(
        "c6 corr: est avg {:+.3} rand avg {:+.3} | var: est avg {:+.3} rand avg {:+.3}",
        mean(&c6_corr_est),
        mean(&c6_corr_rand),
        mean(&c6_var_est),
        mean(&c6_var_rand)
    );
}
