//! History-statistic baselines: active bias and recency bias.
//!
//! Both score each instance by summing a per-label statistic of its
//! prediction history, then push the scores through the same min-max
//! normalization, quantization, and pressure-decayed sampling as the main
//! policy.  They differ only in the statistic:
//!
//! * active bias uses the variance-corrected standard deviation over the
//!   full prediction stream, favoring instances the model keeps changing
//!   its mind about;
//! * recency bias uses the entropy of the binarized sliding window,
//!   favoring instances whose recent thresholded predictions disagree.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{BatchSelector, SelectorKind, ShuffledChunks};
use crate::correlation::minmax_unit;
use crate::error::{Error, Result};
use crate::sampler::{draw_batch, selection_probabilities, PressureSchedule, SamplingDistribution};
use crate::uncertainty::HistoryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMeasure {
    /// Full-stream corrected standard deviation.
    HistoryStd,
    /// Binarized sliding-window entropy.
    WindowBinaryEntropy,
}

#[derive(Debug, Clone)]
pub struct HistoryScoreSelector {
    measure: ScoreMeasure,
    batch: usize,
    warmup: usize,
    schedule: PressureSchedule,
    store: HistoryStore,
    w: Array1<f64>,
    dist: Option<SamplingDistribution>,
    warm: ShuffledChunks,
    epoch: usize,
}

impl HistoryScoreSelector {
    /// `window` is the sliding-window length; the recency measure needs
    /// `warmup >= window` so windows are full when the selective phase
    /// starts, and the active measure needs `warmup >= 2` for a defined
    /// standard deviation.
    pub fn new(
        measure: ScoreMeasure,
        n: usize,
        q: usize,
        batch: usize,
        warmup: usize,
        window: usize,
        schedule: PressureSchedule,
    ) -> Result<Self> {
        match measure {
            ScoreMeasure::HistoryStd => {
                if warmup < 2 {
                    return Err(Error::Config(format!(
                        "active-bias selection needs at least 2 warm-up epochs, got {warmup}"
                    )));
                }
            }
            ScoreMeasure::WindowBinaryEntropy => {
                if warmup < window {
                    return Err(Error::Config(format!(
                        "recency-bias selection needs warmup >= window, got {warmup} < {window}"
                    )));
                }
            }
        }
        Ok(HistoryScoreSelector {
            measure,
            batch,
            warmup,
            schedule,
            store: HistoryStore::new(n, q, window),
            w: Array1::from_elem(n, 0.5),
            dist: None,
            warm: ShuffledChunks::new(n, batch)?,
            epoch: 0,
        })
    }

    fn in_warmup(&self) -> bool {
        self.epoch <= self.warmup
    }

    fn instance_score(&self, i: usize) -> Result<f64> {
        let q = self.store.q();
        let mut sum = 0.0;
        for j in 0..q {
            let h = self.store.get(i, j);
            sum += match self.measure {
                ScoreMeasure::HistoryStd => h.history_std()?,
                ScoreMeasure::WindowBinaryEntropy => h.window_binary_entropy()?,
            };
        }
        Ok(sum)
    }
}

impl BatchSelector for HistoryScoreSelector {
    fn kind(&self) -> SelectorKind {
        match self.measure {
            ScoreMeasure::HistoryStd => SelectorKind::ActiveBias,
            ScoreMeasure::WindowBinaryEntropy => SelectorKind::RecencyBias,
        }
    }

    fn on_epoch_start(&mut self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.epoch = epoch;
        if self.in_warmup() {
            self.warm.reshuffle(rng);
            self.dist = None;
            return Ok(());
        }
        let n = self.store.n();
        let mut scores = Array1::zeros(n);
        for i in 0..n {
            scores[i] = self.instance_score(i).map_err(|e| match e {
                Error::Precondition(msg) => Error::Invariant(format!(
                    "selective epoch {epoch} with unfilled history: {msg}"
                )),
                other => other,
            })?;
        }
        self.w = minmax_unit(scores.view())?;
        let s_t = self.schedule.pressure_at(epoch);
        self.dist = Some(selection_probabilities(self.w.view(), s_t)?);
        Ok(())
    }

    fn next_batch(&mut self, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if self.in_warmup() {
            return self.warm.next_chunk();
        }
        let dist = self
            .dist
            .as_ref()
            .ok_or_else(|| Error::Precondition("next_batch before on_epoch_start".into()))?;
        draw_batch(dist, self.batch, rng)
    }

    fn on_batch_forward(&mut self, indices: &[usize], probs: ArrayView2<'_, f64>) -> Result<()> {
        let q = self.store.q();
        if probs.dim() != (indices.len(), q) {
            return Err(Error::ShapeMismatch {
                context: "on_batch_forward",
                expected: format!("{} x {}", indices.len(), q),
                actual: format!("{} x {}", probs.nrows(), probs.ncols()),
            });
        }
        for (r, &i) in indices.iter().enumerate() {
            for j in 0..q {
                self.store.push(i, j, probs[[r, j]])?;
            }
        }
        Ok(())
    }

    fn warmup_fill_indices(&self) -> Vec<usize> {
        if self.in_warmup() {
            self.warm.leftover()
        } else {
            Vec::new()
        }
    }

    fn pressure(&self) -> f64 {
        if self.in_warmup() || self.epoch == 0 {
            1.0
        } else {
            self.schedule.pressure_at(self.epoch)
        }
    }

    fn sample_weights(&self) -> Option<ArrayView1<'_, f64>> {
        Some(self.w.view())
    }

    fn probabilities(&self) -> Option<&SamplingDistribution> {
        self.dist.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;

    fn sched() -> PressureSchedule {
        PressureSchedule::new(10.0, 2, 12).unwrap()
    }

    fn drive_warmup(sel: &mut HistoryScoreSelector, probs_per_epoch: &[Array2<f64>]) {
        let n = probs_per_epoch[0].nrows();
        let idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (e, probs) in probs_per_epoch.iter().enumerate() {
            sel.on_epoch_start(e + 1, &mut rng).unwrap();
            sel.on_batch_forward(&idx, probs.view()).unwrap();
        }
    }

    #[test]
    fn active_bias_prefers_high_variance_instances() {
        let mut sel =
            HistoryScoreSelector::new(ScoreMeasure::HistoryStd, 4, 1, 2, 2, 2, sched()).unwrap();
        let e1 = ndarray::array![[0.1], [0.5], [0.9], [0.5]];
        let e2 = ndarray::array![[0.9], [0.5], [0.1], [0.5]];
        drive_warmup(&mut sel, &[e1, e2]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        sel.on_epoch_start(3, &mut rng).unwrap();
        let w = sel.sample_weights().unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[2], 1.0);
        assert_eq!(w[1], 0.0);
        let dist = sel.probabilities().unwrap();
        assert!(dist.get(0) > dist.get(1));
    }

    #[test]
    fn recency_bias_scores_flip_flopping_windows() {
        let mut sel =
            HistoryScoreSelector::new(ScoreMeasure::WindowBinaryEntropy, 3, 1, 1, 2, 2, sched())
                .unwrap();
        // instance 0 crosses the 0.5 threshold, instance 1 stays high,
        // instance 2 stays low
        let e1 = ndarray::array![[0.4], [0.8], [0.2]];
        let e2 = ndarray::array![[0.6], [0.9], [0.1]];
        drive_warmup(&mut sel, &[e1, e2]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        sel.on_epoch_start(3, &mut rng).unwrap();
        let w = sel.sample_weights().unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 0.0);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn selective_epoch_with_missing_history_is_an_invariant_error() {
        let mut sel =
            HistoryScoreSelector::new(ScoreMeasure::HistoryStd, 4, 1, 2, 2, 2, sched()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        sel.on_epoch_start(1, &mut rng).unwrap();
        sel.on_epoch_start(2, &mut rng).unwrap();
        assert!(matches!(
            sel.on_epoch_start(3, &mut rng),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn config_guards_reject_short_warmup() {
        assert!(HistoryScoreSelector::new(
            ScoreMeasure::WindowBinaryEntropy,
            4,
            1,
            2,
            1,
            3,
            sched()
        )
        .is_err());
        assert!(
            HistoryScoreSelector::new(ScoreMeasure::HistoryStd, 4, 1, 2, 1, 3, sched()).is_err()
        );
    }

    #[test]
    fn equal_scores_fall_back_to_uniform() {
        let mut sel =
            HistoryScoreSelector::new(ScoreMeasure::HistoryStd, 3, 1, 1, 2, 2, sched()).unwrap();
        let e1 = ndarray::array![[0.2], [0.2], [0.2]];
        let e2 = ndarray::array![[0.8], [0.8], [0.8]];
        drive_warmup(&mut sel, &[e1, e2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        sel.on_epoch_start(3, &mut rng).unwrap();
        let dist = sel.probabilities().unwrap();
        for i in 0..3 {
            assert!((dist.get(i) - 1.0 / 3.0).abs() <= 1e-15);
        }
    }
}
