use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{EncodedExample, Network, Params};
use super::vocab::{Vocabulary, UNK};
use super::{Seq2SeqModel, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub validation_split: f64,
    pub learning_rate: f64,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub optimizer: Optimizer,
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 70,
            batch_size: 64,
            validation_split: 0.2,
            learning_rate: 0.01,
            seed: 0,
            embed_dim: 64,
            hidden_dim: 128,
            optimizer: Optimizer::Adam,
            clip_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("example {0} has an empty input or output")]
    EmptyExample(usize),
    #[error("token `{token}` in example {example} is not in the vocabulary")]
    UnknownToken { example: usize, token: String },
    #[error("invalid config: {0}")]
    InvalidConfig(&'static str),
    #[error("loss became non-finite in epoch {epoch}")]
    Divergence { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub total_seconds: f64,
}

impl TrainingReport {
    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.train_loss)
    }
}

impl TrainConfig {
    fn check(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1"));
        }
        if !(self.validation_split >= 0.0 && self.validation_split < 1.0) {
            return Err(TrainError::InvalidConfig("validation split must be in [0, 1)"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(TrainError::InvalidConfig("layer sizes must be positive"));
        }
        Ok(())
    }
}

/// Adam moment estimates, kept alongside a model so that fine-tuning
/// continues from the state training ended in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerState {
    m: Params<f32>,
    v: Params<f32>,
    step: i32,
}

impl OptimizerState {
    fn new(like: &Params<f32>) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub(crate) fn matches(&self, params: &Params<f32>) -> bool {
        let shape = |p: &Params<f32>| p.tensors().iter().map(|(_, t)| t.len()).collect::<Vec<_>>();
        shape(&self.m) == shape(params) && shape(&self.v) == shape(params)
    }
}

pub(crate) fn encode_examples(dataset: &[TrainingExample], vocab: &Vocabulary) -> Result<Vec<EncodedExample>, TrainError> {
    dataset
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            if ex.input.is_empty() || ex.output.is_empty() {
                return Err(TrainError::EmptyExample(i));
            }
            let lookup = |tok: &String| {
                vocab.get(tok).filter(|&idx| idx != UNK).ok_or_else(|| TrainError::UnknownToken {
                    example: i,
                    token: tok.clone(),
                })
            };
            let input = ex.input.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
            let output = ex.output.iter().map(lookup).collect::<Result<Vec<_>, _>>()?;
            Ok(EncodedExample::new(input, output))
        })
        .collect()
}

/// Batches of similar length: shuffle, sort within windows of 16 batches,
/// then shuffle the batch order.
fn bucketed_batches(examples: &[EncodedExample], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for window in order.chunks(batch_size * 16) {
        let mut window = window.to_vec();
        window.sort_by_key(|&i| (examples[i].target.len(), examples[i].input.len()));
        batches.extend(window.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

fn apply_update(net: &mut Network<f32>, mut grads: Params<f32>, config: &TrainConfig, state: &mut OptimizerState) {
    let norm = grads.norm();
    let clip = config.clip_norm as f32;
    if clip > 0.0 && norm > clip {
        grads.scale(clip / norm);
    }
    let lr = config.learning_rate as f32;
    match config.optimizer {
        Optimizer::Sgd => {
            for ((_, p), (_, g)) in net.params.tensors_mut().into_iter().zip(grads.tensors()) {
                p.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
        }
        Optimizer::Adam => {
            const B1: f32 = 0.9;
            const B2: f32 = 0.999;
            const EPS: f32 = 1e-8;
            state.step += 1;
            let c1 = 1.0 - B1.powi(state.step);
            let c2 = 1.0 - B2.powi(state.step);
            let params = net.params.tensors_mut();
            let ms = state.m.tensors_mut();
            let vs = state.v.tensors_mut();
            for ((((_, p), (_, g)), (_, m)), (_, v)) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
                for i in 0..p.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
    }
}

/// Token-weighted mean loss without gradients.
pub(crate) fn evaluate_loss(net: &Network<f32>, examples: &[EncodedExample]) -> f64 {
    let (mut total, mut tokens) = (0.0, 0usize);
    for chunk in examples.chunks(256) {
        let refs: Vec<&EncodedExample> = chunk.iter().collect();
        let out = net.run_batch(&refs, false);
        total += out.loss as f64 * out.tokens as f64;
        tokens += out.tokens;
    }
    total / tokens.max(1) as f64
}

fn run_epoch(
    net: &mut Network<f32>,
    examples: &[EncodedExample],
    config: &TrainConfig,
    state: &mut OptimizerState,
    rng: &mut ChaCha8Rng,
    epoch: usize,
) -> Result<f64, TrainError> {
    let (mut total, mut tokens) = (0.0, 0usize);
    for batch in bucketed_batches(examples, config.batch_size, rng) {
        let refs: Vec<&EncodedExample> = batch.iter().map(|&i| &examples[i]).collect();
        let out = net.run_batch(&refs, true);
        if !out.loss.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        total += out.loss as f64 * out.tokens as f64;
        tokens += out.tokens;
        apply_update(net, out.grads.expect("requested gradients"), config, state);
    }
    if !net.params.all_finite() {
        return Err(TrainError::Divergence { epoch });
    }
    Ok(total / tokens.max(1) as f64)
}

/// Trains a fresh model. The last `validation_split` fraction of the
/// dataset is held out for validation loss and never trained on.
pub fn train(dataset: &[TrainingExample], config: &TrainConfig) -> Result<(Seq2SeqModel, TrainingReport), TrainError> {
    train_with_vocab(dataset, config, Vocabulary::standard())
}

pub fn train_with_vocab(
    dataset: &[TrainingExample],
    config: &TrainConfig,
    vocab: Vocabulary,
) -> Result<(Seq2SeqModel, TrainingReport), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    config.check()?;
    let encoded = encode_examples(dataset, &vocab)?;
    let held_out = ((dataset.len() as f64) * config.validation_split).floor() as usize;
    let held_out = held_out.min(dataset.len() - 1);
    let (train_set, val_set) = encoded.split_at(dataset.len() - held_out);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let network = Network::init(vocab.len(), config.embed_dim, config.hidden_dim, &mut rng);
    let mut model = Seq2SeqModel::from_parts(vocab, network, config.clone());
    let mut state = OptimizerState::new(&model.network.params);
    let started = Instant::now();
    let mut report = TrainingReport::default();
    for epoch in 1..=config.epochs {
        let t0 = Instant::now();
        let train_loss = run_epoch(&mut model.network, train_set, config, &mut state, &mut rng, epoch)?;
        let val_loss = (!val_set.is_empty()).then(|| evaluate_loss(&model.network, val_set));
        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            seconds: t0.elapsed().as_secs_f64(),
        };
        tracing::info!(epoch, train_loss, ?val_loss, "epoch finished");
        report.epochs.push(stats);
    }
    report.total_seconds = started.elapsed().as_secs_f64();
    model.optimizer_state = Some(state);
    Ok((model, report))
}

impl Seq2SeqModel {
    /// Continues training for `epochs` passes over the whole of `dataset`
    /// (no hold-out), starting from the current weights.
    pub fn fine_tune(&mut self, dataset: &[TrainingExample], epochs: usize) -> Result<TrainingReport, TrainError> {
        if dataset.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        let encoded = encode_examples(dataset, &self.vocab)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ (dataset.len() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut state = self
            .optimizer_state
            .take()
            .unwrap_or_else(|| OptimizerState::new(&self.network.params));
        let config = self.config.clone();
        let started = Instant::now();
        let mut report = TrainingReport::default();
        let mut candidate = self.network.clone();
        for epoch in 1..=epochs {
            let t0 = Instant::now();
            let train_loss = run_epoch(&mut candidate, &encoded, &config, &mut state, &mut rng, epoch)?;
            report.epochs.push(EpochStats {
                epoch,
                train_loss,
                val_loss: None,
                seconds: t0.elapsed().as_secs_f64(),
            });
        }
        report.total_seconds = started.elapsed().as_secs_f64();
        self.network = candidate;
        self.optimizer_state = Some(state);
        Ok(report)
    }
}

/// Appends `corrected` to the dataset and fine-tunes for one epoch over the
/// grown dataset. Duplicates are kept.
pub fn incorporate_feedback(
    model: &mut Seq2SeqModel,
    dataset: &mut Vec<TrainingExample>,
    corrected: TrainingExample,
) -> Result<TrainingReport, TrainError> {
    encode_examples(std::slice::from_ref(&corrected), &model.vocab)?;
    dataset.push(corrected);
    match model.fine_tune(dataset, 1) {
        Ok(report) => Ok(report),
        Err(e) => {
            dataset.pop();
            Err(e)
        }
    }
}
