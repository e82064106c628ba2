//! Repeat-factor sampling for long-tailed class distributions.
//!
//! A record of class `c` appears `max(1, ceil(sqrt(t / f_c)))` times per
//! epoch, where `f_c` is the fraction of records labeled `c` and `t` the
//! repeat threshold. Each epoch is an independent seeded shuffle of that
//! multiset; the stream never ends.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_REPEAT_THRESHOLD: f64 = 0.01;

/// Repeat factor per class, keyed by class index.
pub fn repeat_factors(labels: &[usize], threshold: f64) -> Result<BTreeMap<usize, usize>> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "repeat threshold {threshold} must be non-negative"
        )));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let total = labels.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(class, count)| {
            let freq = count as f64 / total;
            let raw = (threshold / freq).sqrt();
            // Relative slack keeps exact integers from rounding up.
            let factor = (raw * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            (class, factor)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct RepeatFactorSampler {
    base: Vec<usize>,
    epoch: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl RepeatFactorSampler {
    /// `labels[i]` is the class of record `i`.
    pub fn new(labels: &[usize], threshold: f64, seed: u64) -> Result<Self> {
        let factors = repeat_factors(labels, threshold)?;
        let base: Vec<usize> = labels
            .iter()
            .enumerate()
            .flat_map(|(i, l)| std::iter::repeat_n(i, factors[l]))
            .collect();
        Ok(Self {
            epoch: Vec::with_capacity(base.len()),
            cursor: 0,
            base,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// Draws per epoch (the size of the repeated multiset).
    pub fn epoch_len(&self) -> usize {
        self.base.len()
    }
}

impl Iterator for RepeatFactorSampler {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.cursor == self.epoch.len() {
            self.epoch.clear();
            self.epoch.extend_from_slice(&self.base);
            self.epoch.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let out = self.epoch[self.cursor];
        self.cursor += 1;
        Some(out)
    }
}
