//! Per-dimension standardisation fitted on training frames only.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::model::sequence::SequenceBatch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Scaler {
    /// Population mean and standard deviation over every frame of `parts`.
    /// Constant dimensions get a standard deviation of 1.
    pub fn fit(parts: &[&FeatureMatrix]) -> Result<Self> {
        let width = parts
            .first()
            .map(|m| m.width())
            .ok_or_else(|| Error::InvalidParameter("cannot fit a scaler on no data".into()))?;
        if parts.iter().any(|m| m.width() != width) {
            return Err(Error::SizeMismatch("feature matrices of different widths".into()));
        }
        let n: usize = parts.iter().map(|m| m.frames()).sum();
        if n == 0 {
            return Err(Error::InvalidParameter("cannot fit a scaler on zero frames".into()));
        }
        let mut mean = vec![0.0; width];
        for m in parts {
            for t in 0..m.frames() {
                for (a, v) in mean.iter_mut().zip(m.row(t)) {
                    *a += v;
                }
            }
        }
        mean.iter_mut().for_each(|a| *a /= n as f64);
        let mut var = vec![0.0; width];
        for m in parts {
            for t in 0..m.frames() {
                for ((a, v), mu) in var.iter_mut().zip(m.row(t)).zip(&mean) {
                    *a += (v - mu) * (v - mu);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn from_parts(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() || std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter("scaler needs matching lengths and positive deviations".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    fn check(&self, width: usize) -> Result<()> {
        if width != self.width() {
            return Err(Error::SizeMismatch(format!(
                "scaler fitted on {} dimensions, got {width}",
                self.width()
            )));
        }
        Ok(())
    }

    fn scale_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check(features.width())?;
        let mut values = features.values().to_vec();
        for row in values.chunks_mut(self.width()) {
            self.scale_row(row);
        }
        FeatureMatrix::new(values, features.frames(), features.layout().clone())
    }

    /// Scales valid frames in place and zeroes padded ones.
    pub fn apply_batch(&self, batch: &mut SequenceBatch) -> Result<()> {
        self.check(batch.input_dim())?;
        let (steps, d) = (batch.sequence_length(), batch.input_dim());
        for s in 0..batch.len() {
            let mask = batch.mask(s).to_vec();
            let x = batch.inputs_mut(s);
            for t in 0..steps {
                let row = &mut x[t * d..(t + 1) * d];
                if mask[t] == 0.0 {
                    row.fill(0.0);
                } else {
                    self.scale_row(row);
                }
            }
        }
        Ok(())
    }
}
