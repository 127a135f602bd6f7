use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledImage;
use crate::error::{Error, Result};

/// Fold assignment keyed by group id. Every group belongs to exactly one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub folds: usize,
    pub fold_of_group: BTreeMap<u64, usize>,
}

impl SplitPlan {
    pub fn fold_of(&self, group: u64) -> Option<usize> {
        self.fold_of_group.get(&group).copied()
    }

    pub fn groups_in(&self, fold: usize) -> Vec<u64> {
        self.fold_of_group.iter().filter(|(_, &f)| f == fold).map(|(&g, _)| g).collect()
    }

    /// Sample indices `(train, validation)` for one fold.
    pub fn partition(&self, samples: &[LabeledImage], fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..samples.len()).partition(|&i| self.fold_of(samples[i].group) != Some(fold))
    }
}

/// Shuffles the distinct groups by `seed` and deals them round-robin.
pub fn grouped_kfold(samples: &[LabeledImage], k: usize, seed: u64) -> Result<SplitPlan> {
    if k < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 folds, got {k}")));
    }
    let mut groups: Vec<u64> = samples.iter().map(|s| s.group).collect();
    groups.sort_unstable();
    groups.dedup();
    if groups.len() < k {
        return Err(Error::InvalidInput(format!("{} groups cannot fill {k} folds", groups.len())));
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of_group = groups.into_iter().enumerate().map(|(i, g)| (g, i % k)).collect();
    Ok(SplitPlan { folds: k, fold_of_group })
}
