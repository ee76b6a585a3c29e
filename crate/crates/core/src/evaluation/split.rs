use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;

/// Row indices of the two halves of a split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y == 1)].push(i);
    }
    out
}

/// Splits each class separately: `round(n_c · fraction)` of its rows, chosen
/// by a seeded shuffle, go to the train side.
pub fn stratified_split(labels: &[u8], fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(seed, "split"));
    let mut split = Split {
        train: Vec::new(),
        test: Vec::new(),
    };
    for mut idx in class_indices(labels) {
        idx.shuffle(&mut rng);
        let k = (idx.len() as f64 * fraction).round() as usize;
        split.train.extend_from_slice(&idx[..k]);
        split.test.extend_from_slice(&idx[k..]);
    }
    split.train.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Assigns every row to one of `k` folds, dealing each shuffled class round
/// robin so fold sizes and class proportions differ by at most one. Folds
/// whose validation part lacks a class are redrawn with a new seed offset.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    const ATTEMPTS: u64 = 10;
    for attempt in 0..ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive_indexed(seed, "folds", attempt));
        let mut fold_of = vec![0usize; labels.len()];
        let mut next = 0;
        for mut idx in class_indices(labels) {
            idx.shuffle(&mut rng);
            for i in idx {
                fold_of[i] = next;
                next = (next + 1) % k;
            }
        }
        let folds: Vec<Split> = (0..k)
            .map(|f| {
                let (test, train) = (0..labels.len()).partition(|&i| fold_of[i] == f);
                Split { train, test }
            })
            .collect();
        let two_classes = |idx: &[usize]| {
            let pos = idx.iter().filter(|&&i| labels[i] == 1).count();
            pos > 0 && pos < idx.len()
        };
        if folds
            .iter()
            .all(|s| two_classes(&s.test) && two_classes(&s.train))
        {
            return Ok(folds);
        }
        log::warn!("fold assignment {attempt} left a single-class fold, redrawing");
    }
    Err(Error::Folds {
        attempts: ATTEMPTS as usize,
    })
}
