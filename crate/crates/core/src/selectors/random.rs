//! Uniform shuffled batching, the reference policy every other selector
//! must match during warm-up.

use ndarray::ArrayView2;
use rand_chacha::ChaCha8Rng;

use super::{BatchSelector, SelectorKind, ShuffledChunks};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct RandomSelector {
    chunks: ShuffledChunks,
}

impl RandomSelector {
    pub fn new(n: usize, batch: usize) -> Result<Self> {
        Ok(RandomSelector {
            chunks: ShuffledChunks::new(n, batch)?,
        })
    }
}

impl BatchSelector for RandomSelector {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Random
    }

    fn on_epoch_start(&mut self, _epoch: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.chunks.reshuffle(rng);
        Ok(())
    }

    fn next_batch(&mut self, _rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        self.chunks.next_chunk()
    }

    fn on_batch_forward(&mut self, _indices: &[usize], _probs: ArrayView2<'_, f64>) -> Result<()> {
        Ok(())
    }

    fn warmup_fill_indices(&self) -> Vec<usize> {
        self.chunks.leftover()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn epoch_covers_every_index_once() {
        let mut sel = RandomSelector::new(10, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        sel.on_epoch_start(1, &mut rng).unwrap();
        let mut seen = Vec::new();
        for _ in 0..3 {
            seen.extend(sel.next_batch(&mut rng).unwrap());
        }
        seen.extend(sel.warmup_fill_indices());
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_batches() {
        let run = |seed| {
            let mut sel = RandomSelector::new(8, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sel.on_epoch_start(1, &mut rng).unwrap();
            (
                sel.next_batch(&mut rng).unwrap(),
                sel.next_batch(&mut rng).unwrap(),
            )
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn overdrawing_an_epoch_errors() {
        let mut sel = RandomSelector::new(6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        sel.on_epoch_start(1, &mut rng).unwrap();
        sel.next_batch(&mut rng).unwrap();
        sel.next_batch(&mut rng).unwrap();
        assert!(sel.next_batch(&mut rng).is_err());
    }

    #[test]
    fn rejects_oversized_batch() {
        assert!(RandomSelector::new(4, 5).is_err());
        assert!(RandomSelector::new(4, 0).is_err());
    }
}
