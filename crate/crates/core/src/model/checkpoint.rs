//! Binary checkpoint of a model, optionally with the full training state.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "SEDCKPT\0", u32 version
//! u32 sequence length
//! u32 layer count, u32 × layer sizes
//! u32 block count, (u32 len + name, u32 width) × blocks
//! u32 class count, (u32 len + name) × classes
//! f64 array scaler mean, f64 array scaler std      (u64 length + values)
//! f64 array best parameters
//! u8 training flag, and when 1:
//!   f64 array current parameters
//!   u64 Adam step, f64 array m, f64 array v
//!   u64 epoch, f64 best ER, u64 epochs since improvement
//!   32 bytes RNG seed, u64 RNG stream, u128 RNG word position (lo, hi)
//!   u64 log length, (u64 epoch, f64 loss, f64 ER, f64 F) × records
//! ```

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::binio::{write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, LayoutBlock};
use crate::model::adam::AdamState;
use crate::model::network::NetworkParams;
use crate::model::scaler::Scaler;
use crate::model::train::{EpochRecord, Model, TrainState, Trainer, TrainingLog};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEDCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub training: Option<(TrainState, TrainingLog)>,
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.best_model(),
            training: Some((self.state().clone(), self.log().clone())),
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let m = &ckpt.model;
    let mut w = ByteWriter::new();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.u32(m.sequence_length as u32);
    let sizes = m.params.layer_sizes();
    w.u32(sizes.len() as u32);
    for &s in sizes {
        w.u32(s as u32);
    }
    w.u32(m.layout.blocks().len() as u32);
    for b in m.layout.blocks() {
        w.str(&b.name);
        w.u32(b.width as u32);
    }
    w.u32(m.classes.len() as u32);
    for c in &m.classes {
        w.str(c);
    }
    w.f64s(m.scaler.mean());
    w.f64s(m.scaler.std());
    w.f64s(m.params.values());
    match &ckpt.training {
        None => w.u8(0),
        Some((state, log)) => {
            w.u8(1);
            w.f64s(state.params.values());
            w.u64(state.adam.step);
            w.f64s(&state.adam.m);
            w.f64s(&state.adam.v);
            w.u64(state.epoch as u64);
            w.f64(state.best_error_rate);
            w.u64(state.since_improvement as u64);
            w.bytes(&state.rng.get_seed());
            w.u64(state.rng.get_stream());
            let pos = state.rng.get_word_pos();
            w.u64(pos as u64);
            w.u64((pos >> 64) as u64);
            w.u64(log.records.len() as u64);
            for r in &log.records {
                w.u64(r.epoch as u64);
                w.f64(r.train_loss);
                w.f64(r.validation_er);
                w.f64(r.validation_f);
            }
        }
    }
    w.finish()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    r.expect_version(CHECKPOINT_VERSION)?;
    let sequence_length = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers > 64 {
        return Err(Error::Container(format!("{n_layers} layers is implausible")));
    }
    let sizes = (0..n_layers).map(|_| Ok(r.u32()? as usize)).collect::<Result<Vec<_>>>()?;
    let n_blocks = r.u32()? as usize;
    let mut blocks = Vec::new();
    for _ in 0..n_blocks {
        let name = r.str()?;
        let width = r.u32()? as usize;
        blocks.push(LayoutBlock { name, width });
    }
    let layout = FeatureLayout::new(blocks);
    let n_classes = r.u32()? as usize;
    let classes = (0..n_classes).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let scaler = Scaler::from_parts(r.f64s()?, r.f64s()?)?;
    let params = NetworkParams::from_values(&sizes, r.f64s()?)?;
    if layout.width() != params.input_size() || scaler.width() != params.input_size() || classes.len() != params.output_size() {
        return Err(Error::Container("checkpoint sections disagree on shapes".into()));
    }
    if sequence_length == 0 {
        return Err(Error::Container("zero sequence length".into()));
    }
    let model = Model {
        params,
        scaler,
        classes,
        layout,
        sequence_length,
    };
    let training = match r.u8()? {
        0 => None,
        1 => {
            let current = NetworkParams::from_values(&sizes, r.f64s()?)?;
            let step = r.u64()?;
            let (m, v) = (r.f64s()?, r.f64s()?);
            if m.len() != current.len() || v.len() != current.len() {
                return Err(Error::Container("Adam moments do not match the parameters".into()));
            }
            let epoch = r.u64()? as usize;
            let best_error_rate = r.f64()?;
            let since_improvement = r.u64()? as usize;
            let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
            let stream = r.u64()?;
            let pos = r.u64()? as u128 | ((r.u64()? as u128) << 64);
            let mut rng = ChaCha8Rng::from_seed(seed);
            rng.set_stream(stream);
            rng.set_word_pos(pos);
            let n = r.u64()? as usize;
            let mut records = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                records.push(EpochRecord {
                    epoch: r.u64()? as usize,
                    train_loss: r.f64()?,
                    validation_er: r.f64()?,
                    validation_f: r.f64()?,
                });
            }
            let state = TrainState {
                best_params: model.params.clone(),
                params: current,
                adam: AdamState { m, v, step },
                epoch,
                best_error_rate,
                since_improvement,
                rng,
            };
            Some((state, TrainingLog { records }))
        }
        f => return Err(Error::Container(format!("bad training flag {f}"))),
    };
    r.finish()?;
    Ok(Checkpoint { model, training })
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
