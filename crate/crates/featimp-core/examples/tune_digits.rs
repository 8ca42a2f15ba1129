// temporary tuning harness for the digit-style experiments
use featimp_core::data::holdout_split;
use featimp_core::estimator::heldout_spearman;
use featimp_core::seeds::{derive, Stream};
use featimp_core::stats::{mean, percentile, spearman};
use featimp_core::*;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(60);
    let seeds: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let hidden: Vec<usize> = args
        .get(3)
        .map(|s| s.split(',').map(|v| v.parse().unwrap()).collect())
        .unwrap_or_else(|| vec![64, 32]);
    let strategy = MaskingStrategy::Zero;

    for seed in 0..seeds {
        let t0 = Instant::now();
        let ds = digit_style_dataset(2000, derive(seed, Stream::DataGen(9)));
        let mut config = if args.get(5).map(|s| s == "dc").unwrap_or(false) { JointTrainConfig::dropout_calibration(epochs, seed) } else { JointTrainConfig::contrastive(epochs, seed) };
        if let Some(lr) = args.get(4) {
            config.lr = lr.parse().unwrap();
        }
        let mut dims = vec![64usize];
        dims.extend_from_slice(&hidden);
        dims.push(10);
        let dropout = if args.get(5).map(|s| s == "dc").unwrap_or(false) { 0.1 } else { 0.0 };
        let mut model = Mlp::new(&dims, dropout, derive(seed, Stream::ModelInit)).unwrap();
        let mut est =
            LossEstimator::for_model(&model, derive(seed, Stream::EstimatorInit)).unwrap();
        joint_train(&ds, &mut model, &mut est, &config).unwrap();

        let (_, val) = holdout_split(ds.num_samples(), 0.1, derive(seed, Stream::HoldoutSplit));
        let rho = heldout_spearman(&model, &est, &ds, &val).unwrap();

        let argmax = |logits: &[f64]| {
            logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };

        // accuracy + criterion 10 flip rate (top-10 zero-masking flips the
        // argmax of correctly classified held-out samples)
        let mut correct_rows = Vec::new();
        for &i in &val {
            let t = model.forward(ds.sample(i)).unwrap();
            if argmax(&t.logits) == ds.label(i) {
                correct_rows.push(i);
            }
        }
        let acc = correct_rows.len() as f64 / val.len() as f64;
        let mut flips = 0;
        let mut c5_rhos = Vec::new();
        for &i in &correct_rows {
            let scores = granger_scores(&model, &est, ds.sample(i), &strategy, i).unwrap();
            let mut masked = ds.sample(i).to_vec();
            for &j in &scores.ranking[..10] {
                masked[j] = 0.0;
            }
            let t = model.forward(&masked).unwrap();
            if argmax(&t.logits) != ds.label(i) {
                flips += 1;
            }
            let oracle =
                oracle_granger_scores(&model, ds.sample(i), ds.label(i), &strategy, i).unwrap();
            c5_rhos.push(spearman(&scores.deltas, &oracle.deltas));
        }
        let flip_rate = flips as f64 / correct_rows.len().max(1) as f64;

        // criterion 4 on digits: delta-log-odds vs random at k=15 (10 features)
        let dlo = |ranking_for: &dyn Fn(usize) -> Vec<usize>| {
            let scores: Vec<f64> = val
                .iter()
                .map(|&i| {
                    delta_log_odds(&model, ds.sample(i), &ranking_for(i), 15.0, &strategy).unwrap()
                })
                .collect();
            percentile(&scores, 50.0)
        };
        let med_est = dlo(&|i| {
            granger_scores(&model, &est, ds.sample(i), &strategy, i)
                .unwrap()
                .ranking
        });
        let med_rand = dlo(&|i| {
            random_ranking_baseline(64, derive(seed, Stream::RandomRanking(i as u64))).unwrap()
        });

        // criterion 7 analogue on digits
        let sweep_ds = digit_style_dataset(500, derive(seed, Stream::DataGen(10)));
        let curve =
            severity_sweep(&model, &est, &sweep_ds, &[0.0, 0.5, 1.0, 2.0, 4.0], seed).unwrap();
        let monotone = curve.windows(2).all(|w| w[1].1 >= w[0].1);

        println!(
            "seed {seed}: acc {acc:.2} rho {rho:.3} | flip {flip_rate:.2} | c4 est {med_est:+.3} rand {med_rand:+.3} | c5 {:.3} | c7 {monotone} {:?} [{:.0}s]",
            mean(&c5_rhos),
            curve.iter().map(|c| (c.1 * 100.0).round() / 100.0).collect::<Vec<_>>(),
            t0.elapsed().as_secs_f64()
        );
    }
}
