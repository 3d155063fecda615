//! Cross-validation folds over whole recordings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// 1-based.
    pub fold_index: usize,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

/// Partitions recordings so that each one is tested exactly once, then holds
/// out a seeded random `validation_fraction` of each fold's training
/// recordings (at least one whenever two or more are available).
pub fn make_folds(
    recordings: &[String],
    fold_count: usize,
    validation_fraction: f64,
    seed: u64,
) -> Result<Vec<FoldSplit>> {
    if fold_count == 0 || recordings.len() < fold_count {
        return Err(Error::TooFewRecordings {
            have: recordings.len(),
            need: fold_count.max(1),
        });
    }
    if !(0.0..1.0).contains(&validation_fraction) {
        return Err(Error::InvalidParameter(format!(
            "validation fraction {validation_fraction} must be in [0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..recordings.len()).collect();
    order.shuffle(&mut rng);
    let fold_of: Vec<usize> = {
        let mut f = vec![0; recordings.len()];
        for (pos, &idx) in order.iter().enumerate() {
            f[idx] = pos % fold_count;
        }
        f
    };

    (0..fold_count)
        .map(|k| {
            let test: Vec<String> = (0..recordings.len())
                .filter(|&i| fold_of[i] == k)
                .map(|i| recordings[i].clone())
                .collect();
            let mut rest: Vec<usize> = (0..recordings.len()).filter(|&i| fold_of[i] != k).collect();
            let n_val = if validation_fraction > 0.0 && rest.len() >= 2 {
                ((validation_fraction * rest.len() as f64).round() as usize).clamp(1, rest.len() - 1)
            } else {
                0
            };
            let (picked, _) = rest.partial_shuffle(&mut rng, n_val);
            let mut picked = picked.to_vec();
            picked.sort_unstable();
            let validation = picked.iter().map(|&i| recordings[i].clone()).collect();
            rest.sort_unstable();
            let train = rest
                .iter()
                .filter(|i| !picked.contains(i))
                .map(|&i| recordings[i].clone())
                .collect();
            Ok(FoldSplit {
                fold_index: k + 1,
                train,
                validation,
                test,
            })
        })
        .collect()
}
