//! Mini-batch selection policies behind a common interface.
//!
//! A selector owns whatever per-instance state its policy needs (prediction
//! histories, uncertainty matrices, pre-built batch assignments) and is
//! driven by the training loop in a fixed rhythm per epoch:
//!
//! 1. `on_epoch_start` recomputes epoch-level state (correlation, weights,
//!    sampling distribution) before any batch is drawn;
//! 2. `next_batch` yields training-set indices for each of the
//!    `floor(n / b)` batches;
//! 3. `on_batch_forward` observes the freshly computed probabilities for
//!    those indices so histories stay current;
//! 4. during warm-up, `warmup_fill_indices` lists the instances the epoch's
//!    batches did not cover, and the loop forwards them without training so
//!    every prediction history fills at the same rate.
//!
//! Every policy runs plain shuffled batches for the first `warmup` epochs,
//! consuming the shared RNG identically, so trajectories across selectors
//! diverge only once the selective phase begins.

mod balance;
mod external;
mod history_score;
mod ours;
mod random;

pub use balance::BalanceSelector;
pub use external::ExternalSelector;
pub use history_score::{HistoryScoreSelector, ScoreMeasure};
pub use ours::{OursConfig, OursSelector};
pub use random::RandomSelector;

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampler::SamplingDistribution;

/// The available policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectorKind {
    Ours,
    Random,
    Balance,
    ActiveBias,
    RecencyBias,
    External,
}

impl SelectorKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.trim() {
            "ours" => Ok(SelectorKind::Ours),
            "random" => Ok(SelectorKind::Random),
            "balance" => Ok(SelectorKind::Balance),
            "active" => Ok(SelectorKind::ActiveBias),
            "recency" => Ok(SelectorKind::RecencyBias),
            "external" => Ok(SelectorKind::External),
            other => Err(Error::Config(format!(
                "unknown selector '{other}' (expected ours, random, balance, active, recency, external)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            SelectorKind::Ours => "ours",
            SelectorKind::Random => "random",
            SelectorKind::Balance => "balance",
            SelectorKind::ActiveBias => "active",
            SelectorKind::RecencyBias => "recency",
            SelectorKind::External => "external",
        }
    }
}

impl std::fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Batch policy interface; indices are positions within the training fold.
pub trait BatchSelector {
    fn kind(&self) -> SelectorKind;

    /// Epoch numbers are 1-based; epochs `<= warmup` must behave exactly
    /// like [`RandomSelector`].
    fn on_epoch_start(&mut self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<()>;

    fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<usize>>;

    /// Observes model outputs for `indices` (same row order).  Called for
    /// every forward pass the loop performs, training or not.
    fn on_batch_forward(&mut self, indices: &[usize], probs: ArrayView2<'_, f64>) -> Result<()>;

    /// Instances this epoch's batches left uncovered; only meaningful
    /// during warm-up, where the loop forwards them without training.
    fn warmup_fill_indices(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Effective selection pressure of the distribution used this epoch;
    /// 1 for uniform phases and pressure-free policies.
    fn pressure(&self) -> f64 {
        1.0
    }

    /// Per-(instance, label) uncertainty, when the policy keeps one.
    fn uncertainty_matrix(&self) -> Option<ArrayView2<'_, f64>> {
        None
    }

    /// Label-correlation matrix, when the policy keeps one.
    fn correlation(&self) -> Option<ArrayView2<'_, f64>> {
        None
    }

    /// Per-instance sample weights in [0, 1], when the policy keeps them.
    fn sample_weights(&self) -> Option<ArrayView1<'_, f64>> {
        None
    }

    /// Current sampling distribution, when one is active.
    fn probabilities(&self) -> Option<&SamplingDistribution> {
        None
    }
}

/// Shuffled-order chunking shared by the random policy and every
/// selector's warm-up phase.
#[derive(Debug, Clone)]
pub(crate) struct ShuffledChunks {
    order: Vec<usize>,
    cursor: usize,
    batch: usize,
}

impl ShuffledChunks {
    pub fn new(n: usize, batch: usize) -> Result<Self> {
        if batch == 0 || batch > n {
            return Err(Error::Config(format!(
                "batch size {batch} must be between 1 and the {n} training instances"
            )));
        }
        Ok(ShuffledChunks {
            order: (0..n).collect(),
            cursor: 0,
            batch,
        })
    }

    pub fn reshuffle(&mut self, rng: &mut ChaCha8Rng) {
        self.order.shuffle(rng);
        self.cursor = 0;
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len() / self.batch
    }

    pub fn next_chunk(&mut self) -> Result<Vec<usize>> {
        if self.cursor + self.batch > self.order.len() {
            return Err(Error::Precondition(format!(
                "epoch exhausted after {} batches",
                self.batches_per_epoch()
            )));
        }
        let chunk = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        Ok(chunk)
    }

    /// The permutation tail the epoch's full batches do not reach.
    pub fn leftover(&self) -> Vec<usize> {
        let covered = self.batches_per_epoch() * self.batch;
        self.order[covered..].to_vec()
    }
}
