//! Fixed-length training sequences with a validity mask.

use crate::dataset::EventRoll;
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const DEFAULT_SEQUENCE_LENGTH: usize = 25;

/// Sequences of equal length stored back to back. Padded frames have mask 0.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    steps: usize,
    input_dim: usize,
    classes: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    mask: Vec<f64>,
}

impl SequenceBatch {
    pub fn empty(steps: usize, input_dim: usize, classes: usize) -> Self {
        Self {
            steps,
            input_dim,
            classes,
            inputs: Vec::new(),
            targets: Vec::new(),
            mask: Vec::new(),
        }
    }

    pub fn push(&mut self, inputs: &[f64], targets: &[f64], mask: &[f64]) -> Result<()> {
        if inputs.len() != self.steps * self.input_dim
            || targets.len() != self.steps * self.classes
            || mask.len() != self.steps
        {
            return Err(Error::SizeMismatch(format!(
                "sequence of {} inputs / {} targets / {} mask values does not fit {} steps × {} features × {} classes",
                inputs.len(),
                targets.len(),
                mask.len(),
                self.steps,
                self.input_dim,
                self.classes
            )));
        }
        self.inputs.extend_from_slice(inputs);
        self.targets.extend_from_slice(targets);
        self.mask.extend_from_slice(mask);
        Ok(())
    }

    pub fn extend(&mut self, other: &SequenceBatch) -> Result<()> {
        for s in 0..other.len() {
            self.push(other.inputs(s), other.targets(s), other.mask(s))?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        if self.steps == 0 {
            0
        } else {
            self.mask.len() / self.steps
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sequence_length(&self) -> usize {
        self.steps
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self, s: usize) -> &[f64] {
        let n = self.steps * self.input_dim;
        &self.inputs[s * n..(s + 1) * n]
    }

    pub fn inputs_mut(&mut self, s: usize) -> &mut [f64] {
        let n = self.steps * self.input_dim;
        &mut self.inputs[s * n..(s + 1) * n]
    }

    pub fn targets(&self, s: usize) -> &[f64] {
        let n = self.steps * self.classes;
        &self.targets[s * n..(s + 1) * n]
    }

    pub fn mask(&self, s: usize) -> &[f64] {
        &self.mask[s * self.steps..(s + 1) * self.steps]
    }

    pub fn targets_all(&self) -> &[f64] {
        &self.targets
    }

    pub fn mask_all(&self) -> &[f64] {
        &self.mask
    }

    pub fn valid_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0.0).count()
    }

    pub fn select(&self, indices: &[usize]) -> SequenceBatch {
        let mut out = SequenceBatch::empty(self.steps, self.input_dim, self.classes);
        for &s in indices {
            out.push(self.inputs(s), self.targets(s), self.mask(s))
                .expect("same shape");
        }
        out
    }
}

/// Cuts a recording into consecutive sequences of `steps` frames; the last
/// one is zero-padded. Without a roll, targets are all zero.
pub fn split_sequences(
    features: &FeatureMatrix,
    roll: Option<&EventRoll>,
    class_count: usize,
    steps: usize,
) -> Result<SequenceBatch> {
    if steps == 0 {
        return Err(Error::InvalidParameter("sequence length must be positive".into()));
    }
    if let Some(r) = roll {
        if r.frames() != features.frames() || r.class_count() != class_count {
            return Err(Error::SizeMismatch(format!(
                "roll is {} frames × {} classes, features have {} frames and {class_count} classes are expected",
                r.frames(),
                r.class_count(),
                features.frames()
            )));
        }
    }
    let d = features.width();
    let frames = features.frames();
    let mut batch = SequenceBatch::empty(steps, d, class_count);
    let mut start = 0;
    while start < frames {
        let mut x = vec![0.0; steps * d];
        let mut y = vec![0.0; steps * class_count];
        let mut m = vec![0.0; steps];
        for (i, t) in (start..frames.min(start + steps)).enumerate() {
            x[i * d..(i + 1) * d].copy_from_slice(features.row(t));
            if let Some(r) = roll {
                for (k, &a) in r.row(t).iter().enumerate() {
                    y[i * class_count + k] = a as f64;
                }
            }
            m[i] = 1.0;
        }
        batch.push(&x, &y, &m)?;
        start += steps;
    }
    Ok(batch)
}

/// Per-frame rows (`width` values each) from sequence outputs, without padding.
pub fn join_sequences(values: &[f64], width: usize, frames: usize) -> Vec<f64> {
    // only the last sequence carries padding, so the frames are a prefix
    values[..frames * width].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureLayout;

    fn ramp(frames: usize, d: usize) -> FeatureMatrix {
        let v = (0..frames * d).map(|i| i as f64).collect();
        FeatureMatrix::new(v, frames, FeatureLayout::single("x", d)).unwrap()
    }

    #[test]
    fn sixty_frames_give_three_sequences_with_padding() {
        let f = ramp(60, 2);
        let b = split_sequences(&f, None, 1, 25).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.valid_frames(), 60);
        assert_eq!(b.mask(2).iter().filter(|&&m| m == 1.0).count(), 10);
        assert!(b.inputs(2)[20..].iter().all(|&v| v == 0.0));
        assert_eq!(b.inputs(1)[0], 50.0);
    }

    #[test]
    fn exact_multiple_has_no_padding() {
        let b = split_sequences(&ramp(50, 1), None, 2, 25).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.mask_all().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn targets_follow_roll() {
        let mut roll = EventRoll::zeros(30, vec!["a".into(), "b".into()]);
        roll.set(26, 1, true);
        let b = split_sequences(&ramp(30, 1), Some(&roll), 2, 25).unwrap();
        assert_eq!(b.targets(1)[3], 1.0);
        assert_eq!(b.targets_all().iter().sum::<f64>(), 1.0);
        assert!(split_sequences(&ramp(31, 1), Some(&roll), 2, 25).is_err());
    }

    #[test]
    fn join_inverts_split() {
        let f = ramp(61, 3);
        let b = split_sequences(&f, None, 1, 25).unwrap();
        let flat: Vec<f64> = (0..b.len()).flat_map(|s| b.inputs(s).to_vec()).collect();
        assert_eq!(join_sequences(&flat, 3, 61), f.values());
    }
}
