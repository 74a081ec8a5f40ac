//! Label-balanced batching.
//!
//! Each epoch shuffles the training instances and deals them greedily
//! into `floor(n / b)` batches, always placing the next instance into the
//! unfilled batch whose label counts would end up closest (in L1 distance)
//! to the global per-batch target.  Ties break toward the batch with the
//! most remaining room, then the lowest index.  Instances carrying at
//! least one positive label are dealt before all-negative ones: the latter
//! leave every batch's deviation unchanged, so placing them early would
//! only burn capacity that positive rows still need.  The assignment is a
//! deterministic function of the shuffle.

use ndarray::{Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{BatchSelector, SelectorKind, ShuffledChunks};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BalanceSelector {
    labels: Array2<u8>,
    batch: usize,
    chunks: ShuffledChunks,
    /// Per-batch positive count targets: global positives scaled by b/n.
    target: Vec<f64>,
    batches: Vec<Vec<usize>>,
    cursor: usize,
}

impl BalanceSelector {
    pub fn new(labels: ArrayView2<'_, u8>, batch: usize) -> Result<Self> {
        let n = labels.nrows();
        let q = labels.ncols();
        let chunks = ShuffledChunks::new(n, batch)?;
        let target = (0..q)
            .map(|j| {
                let pos = labels.column(j).iter().filter(|&&y| y == 1).count();
                pos as f64 * batch as f64 / n as f64
            })
            .collect();
        Ok(BalanceSelector {
            labels: labels.to_owned(),
            batch,
            chunks,
            target,
            batches: Vec::new(),
            cursor: 0,
        })
    }

    fn build_batches(&mut self) {
        let n = self.labels.nrows();
        let q = self.labels.ncols();
        let nb = n / self.batch;
        let mut counts = vec![vec![0usize; q]; nb];
        let mut sizes = vec![0usize; nb];
        let mut batches: Vec<Vec<usize>> = vec![Vec::with_capacity(self.batch); nb];
        // consume the shuffled order through the shared chunker so the RNG
        // stream advances exactly like the random policy's
        let mut order = Vec::with_capacity(nb * self.batch);
        while let Ok(chunk) = self.chunks.next_chunk() {
            order.extend(chunk);
        }
        let (carrying, vacant): (Vec<usize>, Vec<usize>) = order
            .into_iter()
            .partition(|&i| (0..q).any(|j| self.labels[[i, j]] == 1));
        for i in carrying.into_iter().chain(vacant) {
            let mut best: Option<(usize, f64, usize)> = None;
            for (f, size) in sizes.iter().enumerate() {
                if *size >= self.batch {
                    continue;
                }
                let mut dev = 0.0;
                for (j, c) in counts[f].iter().enumerate() {
                    let after = c + usize::from(self.labels[[i, j]] == 1);
                    dev += (after as f64 - self.target[j]).abs();
                }
                let room = self.batch - size;
                let wins = match best {
                    None => true,
                    Some((_, d, r)) => dev < d || (dev == d && room > r),
                };
                if wins {
                    best = Some((f, dev, room));
                }
            }
            let (f, _, _) = best.expect("full batches cannot exhaust before the order does");
            for (j, c) in counts[f].iter_mut().enumerate() {
                *c += usize::from(self.labels[[i, j]] == 1);
            }
            sizes[f] += 1;
            batches[f].push(i);
        }
        self.batches = batches;
        self.cursor = 0;
    }
}

impl BatchSelector for BalanceSelector {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Balance
    }

    fn on_epoch_start(&mut self, _epoch: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.chunks.reshuffle(rng);
        self.build_batches();
        Ok(())
    }

    fn next_batch(&mut self, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if self.cursor >= self.batches.len() {
            return Err(Error::Precondition(format!(
                "epoch exhausted after {} batches",
                self.batches.len()
            )));
        }
        let b = self.batches[self.cursor].clone();
        self.cursor += 1;
        Ok(b)
    }

    fn on_batch_forward(&mut self, _indices: &[usize], _probs: ArrayView2<'_, f64>) -> Result<()> {
        Ok(())
    }

    fn warmup_fill_indices(&self) -> Vec<usize> {
        self.chunks.leftover()
    }
}
