//! Training loop with block mixing, Adam, validation ER and early stopping,
//! plus frame-level detection with a trained model.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EventRoll;
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, FeatureMatrix};
use crate::metrics::{score, SegmentCounts, DEFAULT_SEGMENT_FRAMES};
use crate::model::adam::{clip_gradient_norm, AdamConfig, AdamState};
use crate::model::mix::block_mix;
use crate::model::network::{backward, forward, NetworkParams, Reduction};
use crate::model::scaler::Scaler;
use crate::model::sequence::{join_sequences, split_sequences, SequenceBatch, DEFAULT_SEQUENCE_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_layers: Vec<usize>,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Stop once this many epochs in a row fail to lower validation ER.
    pub patience: usize,
    /// Sequences per gradient step.
    pub batch_size: usize,
    /// Mixed sequences added per epoch, as a fraction of the originals.
    pub mix_ratio: f64,
    pub sequence_length: usize,
    pub segment_frames: usize,
    pub threshold: f64,
    /// Stop as soon as validation ER falls strictly below this.
    pub target_error_rate: Option<f64>,
    pub seed: u64,
    /// Worker threads for gradient evaluation; results do not depend on it.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![32, 32],
            adam: AdamConfig::default(),
            clip_norm: 5.0,
            max_epochs: 2000,
            patience: 100,
            batch_size: 32,
            mix_ratio: 0.5,
            sequence_length: DEFAULT_SEQUENCE_LENGTH,
            segment_frames: DEFAULT_SEGMENT_FRAMES,
            threshold: 0.5,
            target_error_rate: None,
            seed: 0,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return bad("hidden layers must be nonempty and nonzero");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        if self.max_epochs == 0 || self.batch_size == 0 || self.sequence_length == 0 || self.segment_frames == 0 {
            return bad("max_epochs, batch_size, sequence_length and segment_frames must be positive");
        }
        if !(self.mix_ratio >= 0.0 && self.mix_ratio.is_finite()) {
            return bad("mix_ratio must be non-negative");
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad("threshold must lie in [0, 1)");
        }
        Ok(())
    }

    fn worker_count(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }
}

/// Features of one recording with its reference roll.
#[derive(Debug, Clone)]
pub struct LabeledFeatures {
    pub id: String,
    pub features: FeatureMatrix,
    pub roll: EventRoll,
}

/// Everything needed to turn raw features into an event roll.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: NetworkParams,
    pub scaler: Scaler,
    pub classes: Vec<String>,
    pub layout: FeatureLayout,
    pub sequence_length: usize,
}

impl Model {
    fn check(&self, features: &FeatureMatrix) -> Result<()> {
        if features.width() != self.params.input_size() {
            return Err(Error::SizeMismatch(format!(
                "features have {} columns, model expects {}",
                features.width(),
                self.params.input_size()
            )));
        }
        Ok(())
    }

    /// Per-frame posteriors of unscaled features, `frames × classes`.
    pub fn posteriors(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check(features)?;
        let c = self.classes.len();
        let mut batch = split_sequences(features, None, c, self.sequence_length)?;
        self.scaler.apply_batch(&mut batch)?;
        let out = forward(&self.params, &batch)?;
        Ok(join_sequences(&out, c, features.frames()))
    }

    pub fn detect(&self, features: &FeatureMatrix, threshold: f64) -> Result<EventRoll> {
        let p = self.posteriors(features)?;
        threshold_posteriors(&p, features.frames(), &self.classes, threshold)
    }
}

/// A class is active where its posterior is strictly greater than `threshold`.
pub fn threshold_posteriors(posteriors: &[f64], frames: usize, classes: &[String], threshold: f64) -> Result<EventRoll> {
    if posteriors.len() != frames * classes.len() {
        return Err(Error::SizeMismatch(format!(
            "{} posteriors for {frames} frames × {} classes",
            posteriors.len(),
            classes.len()
        )));
    }
    let activity = posteriors.iter().map(|&p| u8::from(p > threshold)).collect();
    EventRoll::from_activity(activity, frames, classes.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_er: f64,
    pub validation_f: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,validation_er,validation_f\n");
        for r in &self.records {
            // round-trip precision so reruns can be compared byte for byte
            let _ = writeln!(s, "{},{:?},{:?},{:?}", r.epoch, r.train_loss, r.validation_er, r.validation_f);
        }
        s
    }

    /// Record with the lowest validation ER (earliest on ties).
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.validation_er <= r.validation_er => Some(b),
            _ => Some(r),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: NetworkParams,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub best_error_rate: f64,
    pub best_params: NetworkParams,
    pub since_improvement: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = NetworkParams::init(layer_sizes, &mut rng)?;
        Ok(Self {
            adam: AdamState::new(params.len()),
            best_params: params.clone(),
            params,
            epoch: 0,
            best_error_rate: f64::INFINITY,
            since_improvement: 0,
            rng,
        })
    }
}

pub struct Trainer {
    config: TrainConfig,
    classes: Vec<String>,
    layout: FeatureLayout,
    scaler: Scaler,
    train_raw: SequenceBatch,
    log_columns: Vec<bool>,
    validation: Vec<(FeatureMatrix, EventRoll)>,
    state: TrainState,
    log: TrainingLog,
}

impl Trainer {
    /// Fits the scaler on `train` and initialises a fresh network. With no
    /// validation recordings, early stopping watches the training recordings.
    pub fn new(train: &[LabeledFeatures], validation: &[LabeledFeatures], config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidParameter("no training recordings".into()))?;
        let mut sizes = vec![first.features.width()];
        sizes.extend(&config.hidden_layers);
        sizes.push(first.roll.class_count());
        let state = TrainState::new(&sizes, config.seed)?;
        Self::resume(train, validation, config, state, TrainingLog::default(), None)
    }

    /// Continues from a saved state; with the same data and configuration the
    /// remaining epochs match an uninterrupted run exactly.
    pub fn resume(
        train: &[LabeledFeatures],
        validation: &[LabeledFeatures],
        config: TrainConfig,
        state: TrainState,
        log: TrainingLog,
        scaler: Option<Scaler>,
    ) -> Result<Self> {
        config.validate()?;
        let first = train
            .first()
            .ok_or_else(|| Error::InvalidParameter("no training recordings".into()))?;
        let classes = first.roll.classes().to_vec();
        let layout = first.features.layout().clone();
        for r in train.iter().chain(validation) {
            if r.roll.classes() != classes.as_slice() || r.features.layout() != &layout {
                return Err(Error::SizeMismatch(format!(
                    "recording {} differs in classes or feature layout from {}",
                    r.id, first.id
                )));
            }
            if r.roll.frames() != r.features.frames() {
                return Err(Error::SizeMismatch(format!(
                    "recording {}: {} feature frames, {} roll frames",
                    r.id,
                    r.features.frames(),
                    r.roll.frames()
                )));
            }
        }
        if state.params.input_size() != layout.width() || state.params.output_size() != classes.len() {
            return Err(Error::SizeMismatch("saved network does not fit the data".into()));
        }
        let scaler = match scaler {
            Some(s) => s,
            None => Scaler::fit(&train.iter().map(|r| &r.features).collect::<Vec<_>>())?,
        };
        let mut train_raw = SequenceBatch::empty(config.sequence_length, layout.width(), classes.len());
        for r in train {
            train_raw.extend(&split_sequences(&r.features, Some(&r.roll), classes.len(), config.sequence_length)?)?;
        }
        let watched = if validation.is_empty() { train } else { validation };
        let validation = watched
            .iter()
            .map(|r| Ok((r.features.clone(), r.roll.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            log_columns: layout.log_energy_columns(),
            config,
            classes,
            layout,
            scaler,
            train_raw,
            validation,
            state,
            log,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn model_with(&self, params: NetworkParams) -> Model {
        Model {
            params,
            scaler: self.scaler.clone(),
            classes: self.classes.clone(),
            layout: self.layout.clone(),
            sequence_length: self.config.sequence_length,
        }
    }

    /// The network with the lowest validation ER so far.
    pub fn best_model(&self) -> Model {
        self.model_with(self.state.best_params.clone())
    }

    pub fn current_model(&self) -> Model {
        self.model_with(self.state.params.clone())
    }

    pub fn should_stop(&self) -> bool {
        let s = &self.state;
        if s.epoch >= self.config.max_epochs {
            return true;
        }
        if let Some(target) = self.config.target_error_rate {
            if s.best_error_rate < target {
                return true;
            }
        }
        // a zero count means the last epoch improved (or none ran yet)
        s.since_improvement > 0 && s.since_improvement >= self.config.patience
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let cfg = &self.config;
        let mixed = block_mix(&self.train_raw, &self.log_columns, cfg.mix_ratio, &mut self.state.rng)?;
        let mut all = self.train_raw.clone();
        all.extend(&mixed)?;
        self.scaler.apply_batch(&mut all)?;
        let mut order: Vec<usize> = (0..all.len()).collect();
        order.shuffle(&mut self.state.rng);

        let classes = self.classes.len() as f64;
        let (mut loss_total, mut cells_total) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = all.select(chunk);
            let cells = batch.valid_frames() as f64 * classes;
            if cells == 0.0 {
                continue;
            }
            let (loss_sum, mut grad) = summed_gradient(&self.state.params, &batch, cfg.worker_count())?;
            if !loss_sum.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch: self.state.epoch + 1,
                    loss: loss_sum / cells,
                });
            }
            grad.iter_mut().for_each(|g| *g /= cells);
            clip_gradient_norm(&mut grad, cfg.clip_norm);
            self.state.adam.update(self.state.params.values_mut(), &grad, &cfg.adam)?;
            if self.state.params.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    epoch: self.state.epoch + 1,
                    loss: loss_sum / cells,
                });
            }
            loss_total += loss_sum;
            cells_total += cells;
        }
        let train_loss = if cells_total > 0.0 { loss_total / cells_total } else { 0.0 };

        let counts = self.validation_counts()?;
        let (er, f) = (counts.error_rate(), counts.f_score());
        self.state.epoch += 1;
        if er < self.state.best_error_rate {
            self.state.best_error_rate = er;
            self.state.best_params = self.state.params.clone();
            self.state.since_improvement = 0;
        } else {
            self.state.since_improvement += 1;
        }
        let record = EpochRecord {
            epoch: self.state.epoch,
            train_loss,
            validation_er: er,
            validation_f: f,
        };
        self.log.records.push(record);
        Ok(record)
    }

    fn validation_counts(&self) -> Result<SegmentCounts> {
        let model = self.current_model();
        let mut total = SegmentCounts::default();
        for (features, roll) in &self.validation {
            let sys = model.detect(features, self.config.threshold)?;
            total.add(&score(roll, &sys, self.config.segment_frames)?);
        }
        Ok(total)
    }

    /// Runs epochs until a stopping rule fires; `on_epoch` sees each record.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochRecord)) -> Result<()> {
        while !self.should_stop() {
            let r = self.run_epoch()?;
            on_epoch(&r);
        }
        Ok(())
    }
}

/// Summed loss and gradient over a batch. Sequences are spread across
/// threads, but their gradients are added in sequence order so the result is
/// the same for any thread count.
fn summed_gradient(params: &NetworkParams, batch: &SequenceBatch, threads: usize) -> Result<(f64, Vec<f64>)> {
    let n = batch.len();
    let per_seq: Vec<Result<(f64, Vec<f64>)>> = if threads <= 1 || n <= 1 {
        (0..n).map(|s| backward(params, &batch.select(&[s]), Reduction::Sum)).collect()
    } else {
        let workers = threads.min(n);
        let mut slots: Vec<Option<Result<(f64, Vec<f64>)>>> = (0..n).map(|_| None).collect();
        std::thread::scope(|scope| {
            for (w, chunk) in slots.chunks_mut(n.div_ceil(workers)).enumerate() {
                let base = w * n.div_ceil(workers);
                scope.spawn(move || {
                    for (i, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(backward(params, &batch.select(&[base + i]), Reduction::Sum));
                    }
                });
            }
        });
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    };
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for r in per_seq {
        let (l, g) = r?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss, grad))
}

/// Trains to completion and returns the best model with its log.
pub fn train(
    train: &[LabeledFeatures],
    validation: &[LabeledFeatures],
    config: TrainConfig,
) -> Result<(Model, TrainingLog)> {
    let mut t = Trainer::new(train, validation, config)?;
    t.run(|_| {})?;
    Ok((t.best_model(), t.log.clone()))
}
