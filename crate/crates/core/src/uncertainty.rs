//! Per-(instance, label) uncertainty measures over streams of predicted
//! probabilities.
//!
//! Each tracked pair keeps the last `T` predictions in a ring buffer plus
//! running moments over the *entire* stream.  The sliding window feeds the
//! fluctuation measure (mean absolute difference of adjacent predictions)
//! and the binarized-window entropy; the full-stream moments feed the
//! variance-corrected standard deviation used by the active-bias baseline.

use crate::error::{check_unit, Error, Result};

/// Shannon entropy of a Bernoulli(p) variable in bits.
///
/// Defined as `-(p log2 p + (1-p) log2 (1-p))` with the usual convention
/// `0 log 0 = 0`, so the endpoints give exactly 0 and `p = 0.5` gives
/// exactly 1.
pub fn current_entropy(p: f64) -> Result<f64> {
    check_unit("p", p)?;
    Ok(binary_entropy(p))
}

fn binary_entropy(p: f64) -> f64 {
    let mut h = 0.0;
    if p > 0.0 {
        h -= p * p.log2();
    }
    if p < 1.0 {
        h -= (1.0 - p) * (1.0 - p).log2();
    }
    h
}

/// Convex combination of fluctuation `d` and entropy `e`:
/// `u = lambda1 * d + (1 - lambda1) * e`.
///
/// `lambda1 = 0` reduces to the entropy alone and `lambda1 = 1` to the
/// fluctuation alone; both reductions are exact, which the ablation modes
/// rely on.
pub fn combined_uncertainty(d: f64, e: f64, lambda1: f64) -> Result<f64> {
    check_unit("d", d)?;
    check_unit("e", e)?;
    check_unit("lambda1", lambda1)?;
    if lambda1 == 0.0 {
        return Ok(e);
    }
    if lambda1 == 1.0 {
        return Ok(d);
    }
    Ok(lambda1 * d + (1.0 - lambda1) * e)
}

/// Bounded history of predicted probabilities for one (instance, label) pair.
///
/// Holds at most `capacity` recent values (the sliding window) and, in
/// parallel, Welford-style running moments over everything ever pushed.
#[derive(Debug, Clone)]
pub struct PredictionHistory {
    capacity: usize,
    buf: Vec<f64>,
    /// Index of the oldest element once the buffer is full.
    start: usize,
    count: u64,
    mean: f64,
    m2: f64,
}

impl PredictionHistory {
    /// `capacity` is the window length `T`; it must be at least 1.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be at least 1");
        PredictionHistory {
            capacity,
            buf: Vec::with_capacity(capacity),
            start: 0,
            count: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    pub fn push(&mut self, p: f64) -> Result<()> {
        check_unit("prediction", p)?;
        if self.buf.len() < self.capacity {
            self.buf.push(p);
        } else {
            self.buf[self.start] = p;
            self.start = (self.start + 1) % self.capacity;
        }
        self.count += 1;
        let delta = p - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (p - self.mean);
        Ok(())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Number of values currently in the window.
    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.capacity
    }

    /// Total number of values ever pushed.
    pub fn total_count(&self) -> u64 {
        self.count
    }

    /// Running mean over the entire stream.
    pub fn stream_mean(&self) -> f64 {
        self.mean
    }

    /// Window contents oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        let len = self.buf.len();
        let start = if self.is_full() { self.start } else { 0 };
        (0..len).map(move |k| self.buf[(start + k) % len.max(1)])
    }

    /// Mean absolute difference of adjacent window entries:
    /// `d = sum |p_k - p_{k-1}| / (T - 1)`.
    ///
    /// Requires a full window with `T >= 2`; callers are expected to hold
    /// this off until warm-up has filled the window.
    pub fn window_abs_diff(&self) -> Result<f64> {
        if self.capacity < 2 {
            return Err(Error::Precondition(
                "window_abs_diff needs a window of at least 2".into(),
            ));
        }
        if !self.is_full() {
            return Err(Error::Precondition(format!(
                "window holds {} of {} values",
                self.buf.len(),
                self.capacity
            )));
        }
        let mut sum = 0.0;
        let mut prev = None;
        for p in self.iter() {
            if let Some(q) = prev {
                sum += f64::abs(p - q);
            }
            prev = Some(p);
        }
        Ok(sum / (self.capacity - 1) as f64)
    }

    /// Entropy of the window after thresholding each prediction at 0.5.
    ///
    /// Predictions `>= 0.5` count as positive; the result is the binary
    /// entropy of the positive fraction, in bits.
    pub fn window_binary_entropy(&self) -> Result<f64> {
        if !self.is_full() {
            return Err(Error::Precondition(format!(
                "window holds {} of {} values",
                self.buf.len(),
                self.capacity
            )));
        }
        let ones = self.iter().filter(|&p| p >= 0.5).count();
        Ok(binary_entropy(ones as f64 / self.capacity as f64))
    }

    /// Variance-corrected standard deviation over the entire stream:
    /// `sqrt(var + var^2 / (count - 1))` with `var` the population variance.
    ///
    /// Needs at least two pushed values.
    pub fn history_std(&self) -> Result<f64> {
        if self.count < 2 {
            return Err(Error::Precondition(format!(
                "history_std needs at least 2 values, have {}",
                self.count
            )));
        }
        let var = self.m2 / self.count as f64;
        Ok((var + var * var / (self.count - 1) as f64).sqrt())
    }

    /// Population variance over the entire stream (0 before the second push).
    pub fn stream_variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2 / self.count as f64
        }
    }
}

/// Dense n x q grid of prediction histories.
#[derive(Debug, Clone)]
pub struct HistoryStore {
    n: usize,
    q: usize,
    items: Vec<PredictionHistory>,
}

impl HistoryStore {
    pub fn new(n: usize, q: usize, window: usize) -> Self {
        HistoryStore {
            n,
            q,
            items: vec![PredictionHistory::new(window); n * q],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn get(&self, i: usize, j: usize) -> &PredictionHistory {
        &self.items[i * self.q + j]
    }

    pub fn push(&mut self, i: usize, j: usize, p: f64) -> Result<()> {
        self.items[i * self.q + j].push(p)
    }

    /// Smallest total push count over all pairs.
    pub fn min_count(&self) -> u64 {
        self.items.iter().map(|h| h.count).min().unwrap_or(0)
    }

    pub fn all_full(&self) -> bool {
        self.items.iter().all(|h| h.is_full())
    }
}
