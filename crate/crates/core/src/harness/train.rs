use rand::seq::SliceRandom;

use super::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{baseline_center, baseline_random, MetricsReport, SampleOutcome};
use crate::model::{Model, ModelInput};
use crate::rng::{derive_seed, rng_from_seed};
use crate::synth::{augment_record, Record, CATALOG};
use crate::tensor::{Adam, AdamConfig};
use crate::text::{build_vocab, tokenize};

const MODEL_SEED_TAG: u64 = 0x6d6f_6465_6c;
const SHUFFLE_SEED_TAG: u64 = 0x7368_7566;
const AUGMENT_SEED_TAG: u64 = 0x6175_676d;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: Option<MetricsReport>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.9}"))
}

impl EpochLog {
    pub fn line(&self) -> String {
        let d = self.dev.as_ref();
        format!(
            "epoch={} train_loss={:.9} dev_mse_start={} dev_ta_start={} dev_mse_end={} dev_ta_end={}",
            self.epoch,
            self.train_loss,
            fmt_opt(d.map(|r| r.mse_start)),
            fmt_opt(d.map(|r| r.ta_start)),
            fmt_opt(d.and_then(|r| r.mse_end)),
            fmt_opt(d.and_then(|r| r.ta_end)),
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev TA (the last epoch when
    /// there is no dev set).
    pub model: Model,
    pub history: Vec<EpochLog>,
    /// 0 when no epoch ran.
    pub best_epoch: usize,
}

fn check_catalog(records: &[Record]) -> Result<()> {
    for (k, r) in records.iter().enumerate() {
        if r.catalog.len() != CATALOG.len() || r.catalog.iter().zip(CATALOG).any(|(a, b)| a != b) {
            return Err(Error::Config(format!(
                "record {k} uses a catalog that does not match the model vocabulary of object types"
            )));
        }
    }
    Ok(())
}

fn record_input(model: &Model, r: &Record) -> Result<ModelInput> {
    let scene = r.scene()?;
    let tokens = tokenize(&r.instruction);
    if tokens.is_empty() {
        return Err(Error::EmptyInput(format!("record with seed {} has an empty instruction", r.seed)));
    }
    ModelInput::new(model.vocab().ids(&tokens), &scene, model.config())
}

pub fn model_inputs(model: &Model, records: &[Record]) -> Result<Vec<ModelInput>> {
    records.iter().map(|r| record_input(model, r)).collect()
}

fn evaluate_inputs(model: &Model, inputs: &[ModelInput], records: &[Record], tol: f64) -> Result<MetricsReport> {
    let mut samples = Vec::with_capacity(records.len());
    for (input, r) in inputs.iter().zip(records) {
        let p = model.predict(input)?;
        samples.push(SampleOutcome {
            pred_start: p.start,
            gold_start: r.gold_start,
            pred_end: p.end,
            gold_end: r.gold_end,
        });
    }
    MetricsReport::compute(samples, tol)
}

/// Metrics of a trained model on `records`, reduced in record order.
pub fn evaluate(model: &Model, records: &[Record], tol: f64) -> Result<MetricsReport> {
    check_catalog(records)?;
    let inputs = model_inputs(model, records)?;
    evaluate_inputs(model, &inputs, records, tol)
}

/// Metrics of the constant-center or uniform-random predictor.
pub fn evaluate_baseline(random: bool, records: &[Record], seed: u64, tol: f64) -> Result<MetricsReport> {
    let mut rng = rng_from_seed(seed);
    let samples = records
        .iter()
        .map(|r| {
            let (s, e) = if random {
                (baseline_random(&mut rng), baseline_random(&mut rng))
            } else {
                (baseline_center(), baseline_center())
            };
            SampleOutcome {
                pred_start: s,
                gold_start: r.gold_start,
                pred_end: e,
                gold_end: r.gold_end,
            }
        })
        .collect();
    MetricsReport::compute(samples, tol)
}

/// Fresh model with a vocabulary built from the training instructions.
pub fn init_model(cfg: &RunConfig, train: &[Record]) -> Result<Model> {
    let kind = cfg
        .model
        .trainable()
        .ok_or_else(|| Error::Config(format!("model {:?} has no parameters to train", cfg.model)))?;
    if train.is_empty() {
        return Err(Error::EmptyInput("training split is empty".into()));
    }
    check_catalog(train)?;
    let corpus: Vec<Vec<String>> = train.iter().map(|r| tokenize(&r.instruction)).collect();
    let vocab = build_vocab(&corpus, cfg.min_count)?;
    Model::new(cfg.model_config(vocab.len()), kind, vocab, derive_seed(cfg.seed, &[MODEL_SEED_TAG]))
}

/// Minibatch Adam on the MAE loss with per-epoch dev evaluation, keeping
/// the best-dev-TA parameters and stopping after `patience` epochs without
/// improvement. `on_epoch` sees each log entry as it is produced.
pub fn train_model(
    cfg: &RunConfig,
    train: &[Record],
    dev: &[Record],
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut model = init_model(cfg, train)?;
    check_catalog(dev)?;
    let train_inputs = model_inputs(&model, train)?;
    let dev_inputs = model_inputs(&model, dev)?;
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
        model.params(),
    );

    let mut best = model.params().clone();
    let mut best_ta = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let cell = cfg.data_config().cell();
    for epoch in 1..=cfg.epochs {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, &[SHUFFLE_SEED_TAG, epoch as u64]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.params_mut().zero_grads();
            for &k in batch {
                let r = &train[k];
                let variant = if cfg.augment {
                    let mut arng = rng_from_seed(derive_seed(cfg.seed, &[AUGMENT_SEED_TAG, epoch as u64, k as u64]));
                    augment_record(r, &cfg.region, cell, &mut arng)?
                } else {
                    None
                };
                loss_sum += match variant {
                    Some(v) => {
                        let input = record_input(&model, &v)?;
                        model.accumulate_loss(&input, v.gold_start, v.gold_end)?
                    }
                    None => model.accumulate_loss(&train_inputs[k], r.gold_start, r.gold_end)?,
                };
            }
            model.params_mut().scale_grads(1.0 / batch.len() as f64);
            adam.step(model.params_mut())?;
        }
        let dev_report = if dev.is_empty() {
            None
        } else {
            Some(evaluate_inputs(&model, &dev_inputs, dev, cfg.tol)?)
        };
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev: dev_report,
        };
        on_epoch(&log);
        let ta = log.dev.as_ref().map_or(f64::INFINITY, |r| r.ta_start);
        if ta > best_ta || log.dev.is_none() {
            best_ta = ta;
            best_epoch = epoch;
            best = model.params().clone();
        }
        history.push(log);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    *model.params_mut() = best;
    model.params_mut().zero_grads();
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}
