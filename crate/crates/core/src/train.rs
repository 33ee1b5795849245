//! Joint optimisation of the GNN and predictor with validation-based early
//! stopping and collapse detection.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::examples::{Example, ExampleScope, ExampleSet};
use crate::graph::Graph;
use crate::model::{Adjacency, GnnConfig, NodePredictor};
use crate::nn::{Adam, AdamConfig};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// `None` means `max(32, num_nodes / 16)`.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            max_epochs: 50,
            patience: 8,
            validation_fraction: 0.10,
            batch_size: None,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return invalid("max_epochs must be at least 1");
        }
        if self.patience >= self.max_epochs {
            return invalid(format!(
                "patience ({}) must be smaller than max_epochs ({})",
                self.patience, self.max_epochs
            ));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return invalid(format!("validation fraction {} outside (0, 1)", self.validation_fraction));
        }
        if self.batch_size == Some(0) {
            return invalid("batch size must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid(format!("learning rate {} must be positive", self.learning_rate));
        }
        Ok(())
    }

    pub fn resolved_batch_size(&self, num_nodes: usize) -> usize {
        self.batch_size.unwrap_or_else(|| default_batch_size(num_nodes))
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

pub fn default_batch_size(num_nodes: usize) -> usize {
    (num_nodes / 16).max(32)
}

/// What the patience rule says after an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    /// New best validation loss; its parameters should be kept.
    Improved,
    Continue,
    /// `patience` epochs in a row failed to beat the best.
    Stop,
}

/// Keeps epoch `i` once it beats every one of the next `patience` epochs.
/// Only a strictly lower loss counts as an improvement. Epochs are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best_epoch: usize,
    best_loss: f64,
    epochs_seen: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best_epoch: 0,
            best_loss: f64::INFINITY,
            epochs_seen: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        self.epochs_seen += 1;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = self.epochs_seen;
            return StopDecision::Improved;
        }
        if self.epochs_seen - self.best_epoch >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// 0 until some finite loss has been observed.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Replays a validation-loss trace through the patience rule; returns
/// `(epochs_run, best_epoch, stopped_early)`.
pub fn simulate_early_stopping(val_losses: &[f64], patience: usize) -> (usize, usize, bool) {
    let mut es = EarlyStopping::new(patience);
    for (i, &l) in val_losses.iter().enumerate() {
        if es.observe(l) == StopDecision::Stop {
            return (i + 1, es.best_epoch(), true);
        }
    }
    (val_losses.len(), es.best_epoch(), false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// 1-based; 0 if no epoch finished.
    pub best_epoch: usize,
    /// `None` if no epoch finished.
    pub best_val_loss: Option<f64>,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub steps: u64,
    pub batch_size: usize,
    pub num_optimization_examples: usize,
    pub num_validation_examples: usize,
    /// Validation accuracy (percent) of the restored parameters.
    pub val_accuracy: f64,
    pub meaningless: bool,
    pub abort_reason: Option<String>,
    pub init_seed: u64,
    /// Seconds; not serialised so that reports stay reproducible.
    #[serde(skip)]
    pub wall_time: f64,
}

/// Per-step context handed to a [`TrainObserver`].
#[derive(Clone, Debug)]
pub struct StepInfo<'a> {
    pub epoch: usize,
    pub step: u64,
    pub batch: &'a [&'a Example],
    pub loss: f64,
}

/// Instrumentation hooks. `after_backward` sees the gradients of exactly
/// one batch before the optimizer consumes them.
pub trait TrainObserver {
    fn after_backward(&mut self, _info: &StepInfo<'_>, _model: &NodePredictor) {}
    fn after_epoch(&mut self, _epoch: usize, _train_loss: f64, _val_loss: f64) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// True when all thresholded predictions agree, or accuracy sits within two
/// points of 50% while the predictions barely vary.
pub fn detect_meaningless(predictions: &[f64], labels: &[f64]) -> bool {
    if predictions.is_empty() {
        return true;
    }
    let first = predictions[0] >= 0.5;
    if predictions.iter().all(|&p| (p >= 0.5) == first) {
        return true;
    }
    let n = predictions.len() as f64;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    let acc = 100.0 * correct as f64 / n;
    let mean = predictions.iter().sum::<f64>() / n;
    let var = predictions.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    (acc - 50.0).abs() <= 2.0 && var < 1e-6
}

/// Splits example indices into (optimisation, validation).
pub fn validation_split(n: usize, fraction: f64, split_seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::NoExamples(format!("{n} training examples; at least 2 are needed")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(split_seed));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

/// Trains a freshly initialised model on `examples` over `g_train`, which
/// must carry node features.
pub fn train(
    g_train: &Graph,
    examples: &ExampleSet,
    config: &TrainConfig,
    model_config: &GnnConfig,
) -> Result<(NodePredictor, TrainReport)> {
    train_observed(g_train, examples, config, model_config, &mut NoObserver)
}

pub fn train_observed(
    g_train: &Graph,
    examples: &ExampleSet,
    config: &TrainConfig,
    model_config: &GnnConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(NodePredictor, TrainReport)> {
    config.validate()?;
    if examples.scope != ExampleScope::Train {
        return invalid("training requires a train-scope example set");
    }
    let n = g_train.num_nodes();
    if let Some(ex) = examples
        .examples
        .iter()
        .find(|e| e.target >= n || e.members.iter().any(|&m| m >= n))
    {
        return invalid(format!("example for target {} lies outside the training graph", ex.target));
    }
    let features = g_train
        .features()
        .ok_or_else(|| Error::InvalidArgument("training graph has no node features".into()))?;
    let init_seed = seed::derive(config.seed, "init");
    let mut model = NodePredictor::new(model_config.clone(), init_seed)?;
    let adj = Adjacency::from_graph(g_train);
    let started = Instant::now();

    let (opt_idx, val_idx) = validation_split(examples.len(), config.validation_fraction, seed::derive(config.seed, "validation"))?;
    let val: Vec<&Example> = val_idx.iter().map(|&i| &examples.examples[i]).collect();
    let val_labels: Vec<f64> = val.iter().map(|e| f64::from(e.label)).collect();
    let batch_size = config.resolved_batch_size(n);
    let shuffle_seed = seed::derive(config.seed, "shuffle");

    let mut adam = Adam::new(config.adam(), &model.params());
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.snapshot();
    let mut report = TrainReport {
        epochs_run: 0,
        stopped_early: false,
        best_epoch: 0,
        best_val_loss: None,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        steps: 0,
        batch_size,
        num_optimization_examples: opt_idx.len(),
        num_validation_examples: val.len(),
        val_accuracy: 0.0,
        meaningless: false,
        abort_reason: None,
        init_seed,
        wall_time: 0.0,
    };

    'epochs: for epoch in 1..=config.max_epochs {
        let mut order = opt_idx.clone();
        order.shuffle(&mut seed::rng(seed::derive_index(shuffle_seed, epoch as u64)));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples.examples[i]).collect();
            let loss = match model.loss_and_grad(&adj, features, &batch) {
                Ok((loss, _)) => loss,
                Err(Error::NonFinite(what)) => {
                    report.abort_reason = Some(format!("non-finite {what} in epoch {epoch}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            report.steps += 1;
            observer.after_backward(
                &StepInfo {
                    epoch,
                    step: report.steps,
                    batch: &batch,
                    loss,
                },
                &model,
            );
            if let Err(Error::NonFinite(what)) = adam.step(&mut model.params_mut()) {
                report.abort_reason = Some(format!("non-finite {what} in epoch {epoch}"));
                break 'epochs;
            }
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / opt_idx.len() as f64;
        let val_loss = match model.loss(&adj, features, &val) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NonFinite(_)) => {
                report.abort_reason = Some(format!("non-finite validation loss in epoch {epoch}"));
                break;
            }
            Err(e) => return Err(e),
        };
        report.epochs_run = epoch;
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        observer.after_epoch(epoch, train_loss, val_loss);
        match stopper.observe(val_loss) {
            StopDecision::Improved => best = model.snapshot(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                report.stopped_early = true;
                break;
            }
        }
    }

    model.restore(&best)?;
    report.best_epoch = stopper.best_epoch();
    report.best_val_loss = (stopper.best_epoch() > 0).then(|| stopper.best_loss());
    let emb = model.embed(&adj, features)?;
    let probs = model.score(&emb, &val)?;
    let correct = probs
        .iter()
        .zip(&val_labels)
        .filter(|(&p, &y)| (p >= 0.5) == (y >= 0.5))
        .count();
    report.val_accuracy = 100.0 * correct as f64 / val.len() as f64;
    report.meaningless = report.abort_reason.is_some() || detect_meaningless(&probs, &val_labels);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok((model, report))
}
