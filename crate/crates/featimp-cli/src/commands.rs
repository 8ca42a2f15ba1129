//! Implementations of the five subcommands.
//!
//! Commands validate and load every input before writing anything, so a
//! failing run leaves no partial artifacts.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use featimp_core::attribution::{
    granger_scores, oracle_granger_scores, write_attributions_csv, AttributionResult,
    MaskingStrategy,
};
use featimp_core::data::Dataset;
use featimp_core::estimator::{joint_train, LossEstimator};
use featimp_core::evaluation::{
    evaluate_explainer, random_ranking_baseline, severity_sweep as sweep, write_sweep_csv,
    EvalReport,
};
use featimp_core::nn::{load_model, save_model, Mlp};
use featimp_core::seeds::{derive, Stream};
use featimp_core::synth::{generate_triple, ShiftSpec};

use crate::config::TrainFileConfig;
use crate::manifest::Manifest;
use crate::{
    CliError, EvaluateArgs, ExplainArgs, SeveritySweepArgs, SynthGenArgs, TrainArgs,
};

fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Dataset::from_csv(path)
        .map_err(|e| CliError::user(format!("cannot load dataset {}: {e}", path.display())))
}

fn load_model_file(path: &Path) -> Result<(Mlp, Option<LossEstimator>), CliError> {
    load_model(path)
        .map_err(|e| CliError::user(format!("cannot load model {}: {e}", path.display())))
}

fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::user(format!("cannot create {}: {e}", path.display())))
}

fn parse_strategy(spec: &str, reference: &Dataset) -> Result<MaskingStrategy, CliError> {
    match spec {
        "zero" => Ok(MaskingStrategy::Zero),
        "feature_mean" | "feature-mean" => Ok(MaskingStrategy::feature_mean_of(reference)),
        other => {
            if let Some(value) = other.strip_prefix("constant:") {
                let value: f64 = value.parse().map_err(|_| {
                    CliError::user(format!("bad constant in strategy `{other}`"))
                })?;
                if !value.is_finite() {
                    return Err(CliError::user("strategy constant must be finite"));
                }
                Ok(MaskingStrategy::Constant(value))
            } else {
                Err(CliError::user(format!(
                    "unknown strategy `{other}` (expected zero, constant:<value>, or feature_mean)"
                )))
            }
        }
    }
}

fn parse_index_list(text: &str) -> Result<Vec<usize>, CliError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    trimmed
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|_| CliError::user(format!("bad sample index `{part}`")))
        })
        .collect()
}

fn par_map<T, U, F>(workers: usize, items: &[T], f: F) -> Result<Vec<U>, CliError>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U, CliError> + Sync,
{
    if workers <= 1 {
        items.iter().map(&f).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::internal(format!("thread pool: {e}")))?;
        pool.install(|| items.par_iter().map(&f).collect())
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let file_config = TrainFileConfig::load(&args.config)?;
    let resolved = file_config.resolve(args.seed);
    let dataset = load_dataset(&args.data)?;

    let mut dims = vec![dataset.num_features()];
    dims.extend_from_slice(&resolved.hidden_layers);
    dims.push(dataset.num_classes());
    let mut model = Mlp::new(
        &dims,
        resolved.dropout_rate,
        derive(resolved.seed, Stream::ModelInit),
    )?;
    let estimator_seed = derive(resolved.seed, Stream::EstimatorInit);
    let mut estimator = match &resolved.taps {
        Some(taps) => {
            LossEstimator::new(&model, taps.clone(), resolved.estimator_units, estimator_seed)?
        }
        None => LossEstimator::new(
            &model,
            (0..model.num_hidden_layers()).collect(),
            resolved.estimator_units,
            estimator_seed,
        )?,
    };

    let history = joint_train(
        &dataset,
        &mut model,
        &mut estimator,
        &resolved.joint_train_config(),
    )?;

    ensure_out_dir(&args.out)?;
    save_model(&model, Some(&estimator), args.out.join("model.bin"))?;
    history.write_csv(args.out.join("history.csv"))?;
    Manifest::new("train", resolved.seed, &resolved)
        .input("config", &args.config)
        .input("data", &args.data)
        .output("model.bin")
        .output("history.csv")
        .write(&args.out)?;

    let last = history.epochs.last().expect("history has rows");
    println!(
        "trained {} epochs: loss {:.6}, aux {:.6}, held-out spearman {:.4}",
        last.epoch, last.loss, last.aux_loss, last.spearman
    );
    Ok(())
}

#[derive(Serialize)]
struct ExplainOutput<'a> {
    schema_version: u32,
    strategy: String,
    results: &'a [AttributionResult],
}

#[derive(Serialize)]
struct ExplainConfigEcho {
    strategy: String,
    samples: Vec<usize>,
    workers: usize,
}

pub fn explain(args: ExplainArgs) -> Result<(), CliError> {
    let (model, estimator) = load_model_file(&args.model)?;
    let estimator = estimator.ok_or_else(|| {
        CliError::user("model file carries no loss estimator; retrain with `featimp train`")
    })?;
    let dataset = load_dataset(&args.data)?;
    if dataset.num_features() != model.num_inputs() {
        return Err(CliError::user(format!(
            "dataset has {} features, model expects {}",
            dataset.num_features(),
            model.num_inputs()
        )));
    }
    let strategy = parse_strategy(&args.strategy, &dataset)?;
    let sample_ids: Vec<usize> = if args.all {
        (0..dataset.num_samples()).collect()
    } else {
        parse_index_list(&args.samples)?
    };
    for &id in &sample_ids {
        if id >= dataset.num_samples() {
            return Err(CliError::user(format!(
                "sample {id} out of range (dataset has {} rows)",
                dataset.num_samples()
            )));
        }
    }

    let results = par_map(args.workers, &sample_ids, |&id| {
        granger_scores(&model, &estimator, dataset.sample(id), &strategy, id).map_err(CliError::from)
    })?;

    ensure_out_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&ExplainOutput {
        schema_version: 1,
        strategy: strategy.id(),
        results: &results,
    })
    .map_err(|e| CliError::internal(format!("attribution serialization: {e}")))?;
    std::fs::write(args.out.join("attributions.json"), json + "\n")
        .map_err(|e| CliError::user(format!("cannot write attributions.json: {e}")))?;
    write_attributions_csv(
        &results,
        dataset.feature_names(),
        &strategy.id(),
        args.out.join("attributions.csv"),
    )?;
    Manifest::new(
        "explain",
        0,
        &ExplainConfigEcho {
            strategy: strategy.id(),
            samples: sample_ids.clone(),
            workers: args.workers,
        },
    )
    .input("model", &args.model)
    .input("data", &args.data)
    .output("attributions.json")
    .output("attributions.csv")
    .write(&args.out)?;

    println!(
        "explained {} samples with strategy {}",
        results.len(),
        strategy.id()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluateConfigEcho {
    k_percent: f64,
    strategy: String,
    explainers: Vec<String>,
    workers: usize,
    plot_data: bool,
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let (model, estimator) = load_model_file(&args.model)?;
    let dataset = load_dataset(&args.data)?;
    if dataset.num_features() != model.num_inputs() {
        return Err(CliError::user(format!(
            "dataset has {} features, model expects {}",
            dataset.num_features(),
            model.num_inputs()
        )));
    }
    let strategy = parse_strategy(&args.strategy, &dataset)?;
    let explainer_ids: Vec<String> = args
        .explainers
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if explainer_ids.is_empty() {
        return Err(CliError::user("no explainers requested"));
    }

    let sample_ids: Vec<usize> = (0..dataset.num_samples()).collect();
    let mut reports: Vec<EvalReport> = Vec::new();
    for id in &explainer_ids {
        let rankings: Vec<Vec<usize>> = match id.as_str() {
            "granger_estimated" => {
                let estimator = estimator.as_ref().ok_or_else(|| {
                    CliError::user("explainer granger_estimated needs a model with an estimator")
                })?;
                par_map(args.workers, &sample_ids, |&i| {
                    granger_scores(&model, estimator, dataset.sample(i), &strategy, i)
                        .map(|r| r.ranking)
                        .map_err(CliError::from)
                })?
            }
            "granger_oracle" => par_map(args.workers, &sample_ids, |&i| {
                oracle_granger_scores(&model, dataset.sample(i), dataset.label(i), &strategy, i)
                    .map(|r| r.ranking)
                    .map_err(CliError::from)
            })?,
            "random" => sample_ids
                .iter()
                .map(|&i| {
                    random_ranking_baseline(
                        dataset.num_features(),
                        derive(args.seed, Stream::RandomRanking(i as u64)),
                    )
                    .map_err(CliError::from)
                })
                .collect::<Result<_, _>>()?,
            other => {
                return Err(CliError::user(format!(
                    "unknown explainer `{other}` (expected granger_estimated, granger_oracle, or random)"
                )))
            }
        };
        let report = evaluate_explainer(
            &model,
            id,
            |i, _x| Ok(rankings[i].clone()),
            &dataset,
            args.k_percent,
            &strategy,
        )?;
        reports.push(report);
    }

    ensure_out_dir(&args.out)?;
    let mut outputs = Vec::new();
    for report in &reports {
        let json_name = format!("report_{}.json", report.explainer);
        let csv_name = format!("report_{}.csv", report.explainer);
        let json = serde_json::to_string_pretty(report)
            .map_err(|e| CliError::internal(format!("report serialization: {e}")))?;
        std::fs::write(args.out.join(&json_name), json + "\n")
            .map_err(|e| CliError::user(format!("cannot write {json_name}: {e}")))?;
        report.write_csv(args.out.join(&csv_name))?;
        outputs.push(json_name);
        outputs.push(csv_name);
        println!(
            "{} @ k={}%: median {:.4} (p25 {:.4}, p75 {:.4})",
            report.explainer, report.k_percent, report.median, report.p25, report.p75
        );
    }
    if args.plot_data {
        let path = args.out.join("plot_data.csv");
        let mut writer = csv::Writer::from_path(&path)
            .map_err(|e| CliError::user(format!("cannot write plot_data.csv: {e}")))?;
        writer
            .write_record(["explainer", "k", "score"])
            .and_then(|()| {
                for report in &reports {
                    for s in &report.per_sample {
                        writer.write_record([
                            report.explainer.clone(),
                            report.k_percent.to_string(),
                            s.delta_log_odds.to_string(),
                        ])?;
                    }
                }
                writer.flush()?;
                Ok(())
            })
            .map_err(|e| CliError::user(format!("cannot write plot_data.csv: {e}")))?;
        outputs.push("plot_data.csv".into());
    }

    let echo = EvaluateConfigEcho {
        k_percent: args.k_percent,
        strategy: strategy.id(),
        explainers: explainer_ids,
        workers: args.workers,
        plot_data: args.plot_data,
    };
    let mut manifest = Manifest::new("evaluate", args.seed, &echo)
        .input("model", &args.model)
        .input("data", &args.data);
    for name in outputs {
        manifest = manifest.output(&name);
    }
    manifest.write(&args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct SynthConfigEcho {
    spec: ShiftSpec,
    correlation_clamped: f64,
    shifted_correlation_clamped: f64,
}

pub fn synth_gen(args: SynthGenArgs) -> Result<(), CliError> {
    let spec = if args.draw_params {
        ShiftSpec::sampled(args.dims, args.samples, args.classes, args.seed)
    } else {
        ShiftSpec {
            dims: args.dims,
            samples: args.samples,
            mean: args.mean,
            correlation: args.correlation,
            correlation_shift: args.correlation_shift,
            variance_increase: args.variance_increase,
            classes: args.classes,
            seed: args.seed,
        }
    };
    let triple = generate_triple(&spec)?;

    ensure_out_dir(&args.out)?;
    triple.original.write_csv(args.out.join("original.csv"))?;
    triple
        .corr_shifted
        .write_csv(args.out.join("corr_shifted.csv"))?;
    triple
        .var_shifted
        .write_csv(args.out.join("var_shifted.csv"))?;
    Manifest::new(
        "synth-gen",
        spec.seed,
        &SynthConfigEcho {
            spec,
            correlation_clamped: triple.realized.original,
            shifted_correlation_clamped: triple.realized.shifted,
        },
    )
    .output("original.csv")
    .output("corr_shifted.csv")
    .output("var_shifted.csv")
    .write(&args.out)?;

    println!(
        "generated triple: dims {}, samples {}, classes {}",
        spec.dims, spec.samples, spec.classes
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepConfigEcho {
    levels: Vec<f64>,
}

pub fn severity_sweep(args: SeveritySweepArgs) -> Result<(), CliError> {
    let (model, estimator) = load_model_file(&args.model)?;
    let estimator = estimator
        .ok_or_else(|| CliError::user("severity sweep needs a model with an estimator"))?;
    let dataset = load_dataset(&args.data)?;
    let levels: Vec<f64> = args
        .levels
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::user(format!("bad noise level `{part}`")))
        })
        .collect::<Result<_, _>>()?;
    let curve = sweep(&model, &estimator, &dataset, &levels, args.seed)?;

    ensure_out_dir(&args.out)?;
    write_sweep_csv(&curve, args.out.join("sweep.csv"))?;
    Manifest::new("severity-sweep", args.seed, &SweepConfigEcho { levels })
        .input("model", &args.model)
        .input("data", &args.data)
        .output("sweep.csv")
        .write(&args.out)?;

    for (sigma, mean) in &curve {
        println!("sigma {sigma}: mean estimate {mean:.6}");
    }
    Ok(())
}
