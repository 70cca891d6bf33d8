//! Train/test splitting and class rebalancing.
//!
//! Every operation takes the run's master seed and draws from its own named
//! stream (see [`crate::seed`]), so the three steps never share randomness.

use rand::seq::{index, SliceRandom};
use rand::Rng;

use crate::error::{Error, Result};
use crate::labeler::TriLabel;
use crate::seed::{stage, stage_rng};

pub const DEFAULT_SPLIT_RATIO: f64 = 0.8;

/// A token list with its three-class label.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub tokens: Vec<String>,
    pub label: TriLabel,
}

/// Items that carry a three-class label.
pub trait Labeled {
    fn label(&self) -> TriLabel;
}

impl Labeled for LabeledExample {
    fn label(&self) -> TriLabel {
        self.label
    }
}

impl Labeled for TriLabel {
    fn label(&self) -> TriLabel {
        *self
    }
}

/// Counts in class order (−1, 0, 1).
pub fn class_counts<T: Labeled>(items: &[T]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    for item in items {
        counts[item.label().index()] += 1;
    }
    counts
}

fn require_all_classes(counts: &[usize; 3]) -> Result<()> {
    for label in TriLabel::ALL {
        if counts[label.index()] == 0 {
            return Err(Error::MissingClass(label.to_string()));
        }
    }
    Ok(())
}

fn members<T: Labeled>(items: &[T]) -> [Vec<usize>; 3] {
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for (i, item) in items.iter().enumerate() {
        by_class[item.label().index()].push(i);
    }
    by_class
}

/// Train and test partitions plus the source row of every element.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPair<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

pub fn train_size(n: usize, ratio: f64) -> usize {
    (ratio * n as f64).round() as usize
}

/// Seeded permutation of `0..n` cut at `round(ratio·n)`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("split ratio {ratio} outside (0, 1)")));
    }
    if n == 0 {
        return Err(Error::Empty("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stage_rng(seed, stage::SPLIT));
    let test = order.split_off(train_size(n, ratio));
    Ok((order, test))
}

/// Unstratified shuffled split.
pub fn split<T: Clone>(data: &[T], ratio: f64, seed: u64) -> Result<SplitPair<T>> {
    let (train_indices, test_indices) = split_indices(data.len(), ratio, seed)?;
    Ok(SplitPair {
        train: train_indices.iter().map(|&i| data[i].clone()).collect(),
        test: test_indices.iter().map(|&i| data[i].clone()).collect(),
        train_indices,
        test_indices,
    })
}

/// Indices of the oversampled set: every original in order, followed by
/// uniform with-replacement draws per minority class (class order −1, 0, 1)
/// until each class reaches the largest class count.
pub fn oversample_indices<T: Labeled>(items: &[T], seed: u64) -> Result<Vec<usize>> {
    let counts = class_counts(items);
    require_all_classes(&counts)?;
    let target = counts.iter().copied().max().unwrap_or(0);
    let mut rng = stage_rng(seed, stage::OVERSAMPLE);
    let mut out: Vec<usize> = (0..items.len()).collect();
    for pool in members(items) {
        for _ in pool.len()..target {
            out.push(pool[rng.random_range(0..pool.len())]);
        }
    }
    Ok(out)
}

pub fn oversample<T: Labeled + Clone>(items: &[T], seed: u64) -> Result<Vec<T>> {
    Ok(oversample_indices(items, seed)?
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}

/// Indices (ascending) keeping `min(class counts)` members of each class,
/// drawn uniformly without replacement.
pub fn prebalance_indices<T: Labeled>(items: &[T], seed: u64) -> Result<Vec<usize>> {
    let counts = class_counts(items);
    require_all_classes(&counts)?;
    let keep = counts.iter().copied().min().unwrap_or(0);
    let mut rng = stage_rng(seed, stage::PREBALANCE);
    let mut out = Vec::with_capacity(3 * keep);
    for pool in members(items) {
        out.extend(index::sample(&mut rng, pool.len(), keep).into_iter().map(|j| pool[j]));
    }
    out.sort_unstable();
    Ok(out)
}

/// Undersamples every class to the smallest class count.
pub fn prebalance_undersample<T: Labeled + Clone>(items: &[T], seed: u64) -> Result<Vec<T>> {
    Ok(prebalance_indices(items, seed)?
        .into_iter()
        .map(|i| items[i].clone())
        .collect())
}
