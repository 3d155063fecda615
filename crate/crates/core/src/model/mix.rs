//! Block mixing: extra training sequences made by overlaying two existing ones.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::sequence::SequenceBatch;

/// Mixes `round(ratio · n)` random pairs of distinct sequences from `batch`
/// (raw, unscaled features) and returns only the new sequences.
///
/// Log-energy columns are combined as `ln(eᵃ + eᵇ)`, every other column takes
/// the element-wise maximum. Targets are OR-ed, and a mixed frame is valid
/// only where both parents are valid.
pub fn block_mix(
    batch: &SequenceBatch,
    log_energy_columns: &[bool],
    ratio: f64,
    rng: &mut impl Rng,
) -> Result<SequenceBatch> {
    let d = batch.input_dim();
    if log_energy_columns.len() != d {
        return Err(Error::SizeMismatch(format!(
            "{} column flags for {d} features",
            log_energy_columns.len()
        )));
    }
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidParameter(format!("mix ratio {ratio} must be non-negative")));
    }
    let n = batch.len();
    let mut out = SequenceBatch::empty(batch.sequence_length(), d, batch.class_count());
    if n < 2 {
        return Ok(out);
    }
    let count = (ratio * n as f64).round() as usize;
    for _ in 0..count {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let x: Vec<f64> = batch
            .inputs(a)
            .iter()
            .zip(batch.inputs(b))
            .enumerate()
            .map(|(i, (&u, &v))| {
                if log_energy_columns[i % d] {
                    log_add(u, v)
                } else {
                    u.max(v)
                }
            })
            .collect();
        let y: Vec<f64> = batch
            .targets(a)
            .iter()
            .zip(batch.targets(b))
            .map(|(&u, &v)| if u != 0.0 || v != 0.0 { 1.0 } else { 0.0 })
            .collect();
        let m: Vec<f64> = batch.mask(a).iter().zip(batch.mask(b)).map(|(&u, &v)| u.min(v)).collect();
        out.push(&x, &y, &m)?;
    }
    Ok(out)
}

fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
