use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    /// Dataset positions, ascending.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldSplit {
    pub fn train_ids<'d>(&self, d: &'d Dataset) -> Vec<&'d str> {
        self.train.iter().map(|&i| d.records()[i].id.as_str()).collect()
    }

    pub fn test_ids<'d>(&self, d: &'d Dataset) -> Vec<&'d str> {
        self.test.iter().map(|&i| d.records()[i].id.as_str()).collect()
    }
}

/// Stratified k-fold split.
///
/// Each class's members are shuffled with the seeded generator and dealt to
/// folds round-robin; the dealing position carries over from one class to the
/// next so overall fold sizes also differ by at most one.
pub fn split_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Argument(format!("k must be >= 2, got {k}")));
    }
    if k > dataset.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the number of samples ({})",
            dataset.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; dataset.len()];
    let mut next = 0usize;
    for class in 0..dataset.num_classes() {
        let mut members: Vec<usize> = dataset
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == class)
            .map(|(i, _)| i)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..dataset.len()).partition(|&i| fold_of[i] == f);
            FoldSplit {
                fold_index: f,
                train,
                test,
            }
        })
        .collect())
}
