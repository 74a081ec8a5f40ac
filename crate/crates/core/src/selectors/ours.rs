//! The uncertainty-guided policy.
//!
//! Each epoch of the selective phase recomputes, in order: the label
//! correlation matrix from the current uncertainty matrix, the
//! correlation-weighted per-instance weights, and the quantized sampling
//! distribution at the epoch's decayed pressure.  The uncertainty matrix
//! itself is updated continuously as forward passes stream through
//! `on_batch_forward`: each (instance, label) entry combines the entropy
//! of the newest prediction with the mean absolute change over the last
//! `window` predictions, once that window has filled.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{BatchSelector, SelectorKind, ShuffledChunks};
use crate::correlation::{correlation_matrix, sample_weights, weighted_uncertainty};
use crate::error::{Error, Result};
use crate::sampler::{draw_batch, selection_probabilities, PressureSchedule, SamplingDistribution};
use crate::uncertainty::{combined_uncertainty, current_entropy, HistoryStore};

#[derive(Debug, Clone)]
pub struct OursConfig {
    pub batch: usize,
    /// Warm-up epochs of plain shuffled batching.
    pub warmup: usize,
    /// Sliding-window length for the fluctuation measure.
    pub window: usize,
    /// Histogram bins for the correlation estimate.
    pub tau: usize,
    /// Fluctuation-vs-entropy mix; 0 is pure entropy, 1 pure fluctuation.
    pub lambda1: f64,
    pub schedule: PressureSchedule,
    /// Ablation switch: skip the correlation estimate and weight by raw
    /// row sums.
    pub identity_correlation: bool,
}

#[derive(Debug, Clone)]
pub struct OursSelector {
    cfg: OursConfig,
    n: usize,
    q: usize,
    store: HistoryStore,
    u: Array2<f64>,
    c: Array2<f64>,
    w: Array1<f64>,
    dist: Option<SamplingDistribution>,
    warm: ShuffledChunks,
    epoch: usize,
    batches_drawn: usize,
}

impl OursSelector {
    pub fn new(n: usize, q: usize, cfg: OursConfig) -> Result<Self> {
        if cfg.window < 2 {
            return Err(Error::Config(format!(
                "window must be at least 2, got {}",
                cfg.window
            )));
        }
        if cfg.warmup < 1 {
            return Err(Error::Config("warmup must be at least 1 epoch".into()));
        }
        if !(0.0..=1.0).contains(&cfg.lambda1) {
            return Err(Error::Config(format!(
                "lambda1 must be in [0, 1], got {}",
                cfg.lambda1
            )));
        }
        if q == 0 {
            return Err(Error::Config("need at least one label".into()));
        }
        let warm = ShuffledChunks::new(n, cfg.batch)?;
        Ok(OursSelector {
            n,
            q,
            store: HistoryStore::new(n, q, cfg.window),
            u: Array2::zeros((n, q)),
            c: Array2::eye(q),
            w: Array1::from_elem(n, 0.5),
            dist: None,
            warm,
            epoch: 0,
            batches_drawn: 0,
            cfg,
        })
    }

    fn in_warmup(&self) -> bool {
        self.epoch <= self.cfg.warmup
    }

    pub fn config(&self) -> &OursConfig {
        &self.cfg
    }
}

impl BatchSelector for OursSelector {
    fn kind(&self) -> SelectorKind {
        SelectorKind::Ours
    }

    fn on_epoch_start(&mut self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.epoch = epoch;
        self.batches_drawn = 0;
        if self.in_warmup() {
            self.warm.reshuffle(rng);
            self.dist = None;
            return Ok(());
        }
        if self.store.min_count() == 0 {
            return Err(Error::Invariant(format!(
                "selective epoch {epoch} reached with an instance never forwarded; \
                 warm-up must touch every instance"
            )));
        }
        let s_t = self.cfg.schedule.pressure_at(epoch);
        self.c = if self.cfg.identity_correlation {
            Array2::eye(self.q)
        } else {
            correlation_matrix(self.u.view(), self.cfg.tau)?
        };
        let u_bar = weighted_uncertainty(self.u.view(), self.c.view())?;
        self.w = sample_weights(u_bar.view())?;
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
        self.batches_drawn += 1;
        draw_batch(dist, self.cfg.batch, rng)
    }

    fn on_batch_forward(&mut self, indices: &[usize], probs: ArrayView2<'_, f64>) -> Result<()> {
        if probs.dim() != (indices.len(), self.q) {
            return Err(Error::ShapeMismatch {
                context: "on_batch_forward",
                expected: format!("{} x {}", indices.len(), self.q),
                actual: format!("{} x {}", probs.nrows(), probs.ncols()),
            });
        }
        for (r, &i) in indices.iter().enumerate() {
            if i >= self.n {
                return Err(Error::Domain {
                    name: "instance index",
                    value: i as f64,
                    expected: "within the training fold",
                });
            }
            for j in 0..self.q {
                let p = probs[[r, j]];
                self.store.push(i, j, p)?;
                let h = self.store.get(i, j);
                // the combined measure is defined only once the window is
                // full; until then the entry keeps its initial zero
                if h.is_full() {
                    let d = h.window_abs_diff()?;
                    let e = current_entropy(p)?;
                    self.u[[i, j]] = combined_uncertainty(d, e, self.cfg.lambda1)?;
                }
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
            self.cfg.schedule.pressure_at(self.epoch)
        }
    }

    fn uncertainty_matrix(&self) -> Option<ArrayView2<'_, f64>> {
        Some(self.u.view())
    }

    fn correlation(&self) -> Option<ArrayView2<'_, f64>> {
        Some(self.c.view())
    }

    fn sample_weights(&self) -> Option<ArrayView1<'_, f64>> {
        Some(self.w.view())
    }

    fn probabilities(&self) -> Option<&SamplingDistribution> {
        self.dist.as_ref()
    }
}
