//! 2×2 contingency control over `(y1, y2)`.
//!
//! Cells are indexed `2·y1 + y2`, i.e. `(0,0), (0,1), (1,0), (1,1)`; the
//! "diagonal" cells are those with `y1 == y2`.

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::notch::{apply_notch_image, NotchSpec};
use super::LabeledImage;
use crate::error::{Error, Result};

pub fn cell_index(y1: u8, y2: u8) -> usize {
    2 * y1 as usize + y2 as usize
}

pub fn cell_counts(samples: &[LabeledImage]) -> [usize; 4] {
    let mut c = [0; 4];
    for s in samples {
        c[s.cell()] += 1;
    }
    c
}

/// Pearson correlation of the two binary labels from cell counts.
pub fn phi_coefficient(c: [usize; 4]) -> f64 {
    let [n00, n01, n10, n11] = c.map(|v| v as f64);
    let denom = ((n00 + n01) * (n10 + n11) * (n00 + n10) * (n01 + n11)).sqrt();
    if denom == 0.0 {
        return 0.0;
    }
    (n11 * n00 - n10 * n01) / denom
}

/// Integer apportionment of `total` by `weights` (largest remainder; ties
/// go to the lower index). The result always sums to `total`.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Target joint distribution with balanced marginals: diagonal cells get
/// `p/2` each, off-diagonal cells `(1−p)/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContingencySpec {
    pub diagonal_mass: f64,
    pub total: usize,
}

impl ContingencySpec {
    pub fn new(diagonal_mass: f64, total: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&diagonal_mass) {
            return Err(Error::InvalidInput(format!("diagonal mass {diagonal_mass} outside [0, 1]")));
        }
        Ok(Self { diagonal_mass, total })
    }

    pub fn targets(&self) -> [f64; 4] {
        let p = self.diagonal_mass;
        [p / 2.0, (1.0 - p) / 2.0, (1.0 - p) / 2.0, p / 2.0]
    }

    pub fn cell_counts(&self, total: usize) -> [usize; 4] {
        let v = largest_remainder(total, &self.targets());
        [v[0], v[1], v[2], v[3]]
    }
}

/// Result of a contingency-controlled draw. `shrunk_from` is set when the
/// pool could not supply the requested total.
#[derive(Clone, Debug)]
pub struct Subsample {
    pub samples: Vec<LabeledImage>,
    pub shrunk_from: Option<usize>,
}

fn cell_members(pool: &[LabeledImage]) -> [Vec<usize>; 4] {
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, s) in pool.iter().enumerate() {
        cells[s.cell()].push(i);
    }
    cells
}

/// Draws without replacement so that cell counts follow `spec`. When a cell
/// is short, the total shrinks to the largest feasible value that keeps
/// the target proportions.
pub fn subsample_contingency(pool: &[LabeledImage], spec: &ContingencySpec, seed: u64) -> Result<Subsample> {
    let mut cells = cell_members(pool);
    let supply = cells.each_ref().map(|c| c.len());
    let targets = spec.targets();
    for (i, (&t, &s)) in targets.iter().zip(&supply).enumerate() {
        if t > 0.0 && s == 0 {
            return Err(Error::EmptyCell {
                y1: (i / 2) as u8,
                y2: (i % 2) as u8,
            });
        }
    }
    let mut total = targets
        .iter()
        .zip(&supply)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, s)| (*s as f64 / t + 1e-9).floor() as usize)
        .fold(spec.total, usize::min);
    while total > 0 && spec.cell_counts(total).iter().zip(&supply).any(|(c, s)| c > s) {
        total -= 1;
    }
    let shrunk_from = (total < spec.total).then_some(spec.total);
    if let Some(requested) = shrunk_from {
        warn!("insufficient pool: requested {requested} samples, drawing {total}");
    }
    let counts = spec.cell_counts(total);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(total);
    for (members, &k) in cells.iter_mut().zip(&counts) {
        members.shuffle(&mut rng);
        samples.extend(members[..k].iter().map(|&i| pool[i].clone()));
    }
    samples.shuffle(&mut rng);
    Ok(Subsample { samples, shrunk_from })
}

/// Tops every cell up to the largest cell count with with-replacement draws
/// from that cell; all original samples are kept.
pub fn rebalance_oversample(train: &[LabeledImage], seed: u64) -> Result<Vec<LabeledImage>> {
    let cells = cell_members(train);
    if let Some(i) = cells.iter().position(|c| c.is_empty()) {
        return Err(Error::EmptyCell {
            y1: (i / 2) as u8,
            y2: (i % 2) as u8,
        });
    }
    let target = cells.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<LabeledImage> = train.to_vec();
    for members in &cells {
        for _ in members.len()..target {
            out.push(train[members[rng.gen_range(0..members.len())]].clone());
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Original,
    Balanced,
    Inverted,
}

impl TestKind {
    pub const ALL: [TestKind; 3] = [TestKind::Original, TestKind::Balanced, TestKind::Inverted];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::Original => "original",
            TestKind::Balanced => "balanced",
            TestKind::Inverted => "inverted",
        }
    }
}

/// Builds a held-out evaluation distribution from a pool that shares no
/// group with training: the training correlation (`p_train`), none (`½`),
/// or reversed (`1 − p_train`).
pub fn make_test_split(pool: &[LabeledImage], kind: TestKind, total: usize, p_train: f64, seed: u64) -> Result<Subsample> {
    match kind {
        TestKind::Original => subsample_contingency(pool, &ContingencySpec::new(p_train, total)?, seed),
        TestKind::Balanced => subsample_contingency(pool, &ContingencySpec::new(0.5, total)?, seed),
        TestKind::Inverted => subsample_contingency(pool, &ContingencySpec::new(1.0 - p_train, total)?, seed),
    }
}

/// Assigns `y2` against the existing `y1` so that the joint follows
/// diagonal mass `p` within each `y1` class, then applies the notch filter
/// to exactly the `y2 = 1` images.
pub fn confound_by_notch(samples: &[LabeledImage], p: f64, notch: &NotchSpec, seed: u64) -> Result<Vec<LabeledImage>> {
    notch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = samples.to_vec();
    for class in 0..=1u8 {
        let mut members: Vec<usize> = (0..out.len()).filter(|&i| out[i].y1 == class).collect();
        members.shuffle(&mut rng);
        // weights for (y2 = 0, y2 = 1) within this class
        let w = if class == 0 { [p, 1.0 - p] } else { [1.0 - p, p] };
        let k = largest_remainder(members.len(), &w);
        for (rank, &i) in members.iter().enumerate() {
            out[i].y2 = u8::from(rank >= k[0]);
        }
    }
    for (s, orig) in out.iter_mut().zip(samples) {
        if s.y2 == 1 {
            s.pixels = apply_notch_image(&orig.pixels, orig.side, notch)?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confounds::generate_toy;
    use proptest::prelude::*;

    fn pool_with(counts: [usize; 4]) -> Vec<LabeledImage> {
        let mut out = Vec::new();
        for (cell, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                out.push(LabeledImage {
                    side: 1,
                    pixels: vec![0.0],
                    y1: (cell / 2) as u8,
                    y2: (cell % 2) as u8,
                    group: out.len() as u64,
                });
            }
        }
        out
    }

    #[test]
    fn strong_and_null_correlation_targets() {
        let pool = pool_with([500; 4]);
        let s = subsample_contingency(&pool, &ContingencySpec::new(0.95, 400).unwrap(), 1).unwrap();
        assert_eq!(cell_counts(&s.samples), [190, 10, 10, 190]);
        assert!(s.shrunk_from.is_none());
        assert!(phi_coefficient(cell_counts(&s.samples)) >= 0.88);
        assert!((phi_coefficient([190, 10, 10, 190]) - 0.9).abs() < 1e-12);
        let s = subsample_contingency(&pool, &ContingencySpec::new(0.5, 400).unwrap(), 1).unwrap();
        assert_eq!(cell_counts(&s.samples), [100, 100, 100, 100]);
    }

    #[test]
    fn short_cell_shrinks_total() {
        let pool = pool_with([500, 5, 500, 500]);
        let s = subsample_contingency(&pool, &ContingencySpec::new(0.95, 400).unwrap(), 3).unwrap();
        assert_eq!(s.shrunk_from, Some(400));
        assert_eq!(cell_counts(&s.samples), [95, 5, 5, 95]);
    }

    #[test]
    fn empty_needed_cell_is_an_error() {
        let pool = pool_with([10, 0, 10, 10]);
        assert!(matches!(
            subsample_contingency(&pool, &ContingencySpec::new(0.9, 20).unwrap(), 0),
            Err(Error::EmptyCell { y1: 0, y2: 1 })
        ));
        // a zero-mass cell may be empty
        let s = subsample_contingency(&pool, &ContingencySpec::new(1.0, 20).unwrap(), 0).unwrap();
        assert_eq!(cell_counts(&s.samples), [10, 0, 0, 10]);
    }

    #[test]
    fn draws_without_replacement() {
        let pool = generate_toy(800, 4);
        let s = subsample_contingency(&pool, &ContingencySpec::new(0.8, 300).unwrap(), 9).unwrap();
        let mut groups: Vec<u64> = s.samples.iter().map(|x| x.group).collect();
        groups.sort();
        groups.dedup();
        assert_eq!(groups.len(), 300);
    }

    #[test]
    fn rebalance_examples() {
        let train = pool_with([190, 10, 10, 190]);
        let out = rebalance_oversample(&train, 2).unwrap();
        assert_eq!(cell_counts(&out), [190; 4]);
        assert_eq!(out.len(), 760);
        assert_eq!(phi_coefficient(cell_counts(&out)), 0.0);
        let mut seen: Vec<u64> = out.iter().map(|s| s.group).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 400, "every original sample retained");

        let uniform = pool_with([3; 4]);
        let mut a: Vec<u64> = rebalance_oversample(&uniform, 5).unwrap().iter().map(|s| s.group).collect();
        a.sort();
        assert_eq!(a, (0..12).collect::<Vec<_>>());

        let single = pool_with([4, 1, 4, 4]);
        let out = rebalance_oversample(&single, 1).unwrap();
        assert_eq!(out.iter().filter(|s| s.cell() == 1).count(), 4);
        assert!(out.iter().filter(|s| s.cell() == 1).all(|s| s.group == 4));
        assert!(matches!(rebalance_oversample(&pool_with([4, 0, 4, 4]), 1), Err(Error::EmptyCell { .. })));
    }

    #[test]
    fn test_split_kinds() {
        let pool = pool_with([250; 4]);
        let inv = make_test_split(&pool, TestKind::Inverted, 200, 0.95, 1).unwrap();
        assert_eq!(cell_counts(&inv.samples), [5, 95, 95, 5]);
        let bal = make_test_split(&pool, TestKind::Balanced, 200, 0.95, 1).unwrap();
        assert_eq!(cell_counts(&bal.samples), [50; 4]);
        let orig = make_test_split(&pool, TestKind::Original, 200, 0.95, 1).unwrap();
        assert_eq!(cell_counts(&orig.samples), [95, 5, 5, 95]);
    }

    #[test]
    fn notch_confounding_assigns_and_filters() {
        let base = generate_toy(400, 6);
        let out = confound_by_notch(&base, 0.95, &NotchSpec::default(), 3).unwrap();
        assert_eq!(cell_counts(&out), [190, 10, 10, 190]);
        assert_eq!(out.iter().filter(|s| s.y2 == 1).count(), 200);
        for (a, b) in out.iter().zip(&base) {
            assert_eq!(a.y1, b.y1);
            if a.y2 == 0 {
                assert_eq!(a.pixels, b.pixels);
            } else {
                assert_ne!(a.pixels, b.pixels);
            }
        }
        let indep = confound_by_notch(&base, 0.5, &NotchSpec::default(), 3).unwrap();
        let c = cell_counts(&indep);
        assert!((c[1] as i64 - 100).abs() <= 1 && (c[3] as i64 - 100).abs() <= 1);
    }

    proptest! {
        #[test]
        fn marginals_within_one_of_half(p in 0.0f64..=1.0, total in 1usize..2000) {
            let c = ContingencySpec::new(p, total).unwrap().cell_counts(total);
            prop_assert_eq!(c.iter().sum::<usize>(), total);
            let half = total as f64 / 2.0;
            prop_assert!(((c[0] + c[1]) as f64 - half).abs() <= 1.0);
            prop_assert!(((c[0] + c[2]) as f64 - half).abs() <= 1.0);
        }
    }
}
