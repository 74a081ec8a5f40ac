//! Weight-quantized sampling with decaying selection pressure.
//!
//! Sample weights in [0, 1] are quantized into n+1 levels and converted to
//! selection probabilities `P_i proportional to s^(-Q(w_i)/n)`, where the
//! pressure `s` starts at `s0` and decays geometrically to 1 over the
//! selective phase of training.  At `s = 1` the distribution is exactly
//! uniform; larger `s` concentrates mass on high-weight instances while
//! every instance keeps probability at least `s^-1 / n`.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use crate::error::{check_unit, Error, Result};

/// Quantization level `floor((1 - w) * n)`, clamped to [0, n].
///
/// High weights map to low levels: `w = 1` gives 0, `w = 0` gives n.  The
/// tiny pre-floor nudge keeps values that are one representation error shy
/// of an integer (such as `(1 - 0.37) * 100`) on the intended level.
pub fn quantize(w: f64, n: usize) -> Result<usize> {
    check_unit("w", w)?;
    if n == 0 {
        return Err(Error::Domain {
            name: "n",
            value: 0.0,
            expected: "a positive level count",
        });
    }
    let raw = ((1.0 - w) * n as f64 + 1e-9).floor() as usize;
    Ok(raw.min(n))
}

/// Geometric decay of the selection pressure from `s0` down to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureSchedule {
    s0: f64,
    t_start: usize,
    t_end: usize,
}

impl PressureSchedule {
    pub fn new(s0: f64, t_start: usize, t_end: usize) -> Result<Self> {
        if !(s0 > 1.0) || !s0.is_finite() {
            return Err(Error::Domain {
                name: "s0",
                value: s0,
                expected: "(1, inf)",
            });
        }
        if t_start >= t_end {
            return Err(Error::Config(format!(
                "pressure schedule needs t_start < t_end, got {t_start} >= {t_end}"
            )));
        }
        Ok(PressureSchedule { s0, t_start, t_end })
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn t_start(&self) -> usize {
        self.t_start
    }

    pub fn t_end(&self) -> usize {
        self.t_end
    }

    /// Pressure at epoch `t`: `s0 ^ (1 - (t - t_start) / (t_end - t_start))`.
    ///
    /// Exactly `s0` at the start and exactly 1 at the end.  Epochs outside
    /// the window clamp to the nearer endpoint with a warning.
    pub fn pressure_at(&self, t: usize) -> f64 {
        let t = if t < self.t_start {
            log::warn!(
                "pressure requested at epoch {t} before schedule start {}; clamping",
                self.t_start
            );
            self.t_start
        } else if t > self.t_end {
            log::warn!(
                "pressure requested at epoch {t} after schedule end {}; clamping",
                self.t_end
            );
            self.t_end
        } else {
            t
        };
        let frac = (t - self.t_start) as f64 / (self.t_end - self.t_start) as f64;
        self.s0.powf(1.0 - frac)
    }
}

/// A validated discrete distribution over instance indices: every entry is
/// strictly positive and the entries sum to 1.
#[derive(Debug, Clone)]
pub struct SamplingDistribution {
    p: Array1<f64>,
}

impl SamplingDistribution {
    fn new(p: Array1<f64>) -> Result<Self> {
        let sum: f64 = p.sum();
        if p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::Invariant(
                "sampling distribution has a non-positive entry".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!(
                "sampling distribution sums to {sum}, expected 1"
            )));
        }
        Ok(SamplingDistribution { p })
    }

    /// Uniform distribution over `n` indices.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition(
                "uniform distribution over 0 items".into(),
            ));
        }
        SamplingDistribution::new(Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn probabilities(&self) -> ArrayView1<'_, f64> {
        self.p.view()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.p[i]
    }
}

/// Converts normalized weights into selection probabilities at pressure
/// `s_t >= 1`.
///
/// `P_i = s_t^(-Q(w_i)/n) / Z`.  Every probability is at least
/// `s_t^-1 / n` before normalization, so nothing is ever starved, and
/// `s_t = 1` yields the uniform distribution exactly.
pub fn selection_probabilities(w: ArrayView1<'_, f64>, s_t: f64) -> Result<SamplingDistribution> {
    if w.is_empty() {
        return Err(Error::Precondition(
            "selection over an empty weight vector".into(),
        ));
    }
    if !(s_t >= 1.0) || !s_t.is_finite() {
        return Err(Error::Domain {
            name: "s_t",
            value: s_t,
            expected: "[1, inf)",
        });
    }
    let n = w.len();
    let mut factors = Array1::<f64>::zeros(n);
    for (i, &wi) in w.iter().enumerate() {
        let level = quantize(wi, n)?;
        factors[i] = s_t.powf(-(level as f64) / n as f64);
    }
    let z = factors.sum();
    SamplingDistribution::new(factors / z)
}

/// Draws `b` distinct indices without replacement, each pick weighted by
/// the remaining probability mass.
pub fn draw_batch<R: Rng + ?Sized>(
    dist: &SamplingDistribution,
    b: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let n = dist.len();
    if b == 0 || b > n {
        return Err(Error::Domain {
            name: "b",
            value: b as f64,
            expected: "1..=n batch size",
        });
    }
    let p = dist.probabilities();
    let mut taken = vec![false; n];
    let mut remaining: f64 = 1.0;
    let mut out = Vec::with_capacity(b);
    for _ in 0..b {
        let target = rng.random::<f64>() * remaining;
        let mut cum = 0.0;
        let mut pick = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            cum += p[i];
            if cum > target {
                pick = Some(i);
                break;
            }
        }
        // float drift can leave cum a hair under target; fall back to the
        // last untaken index
        let i = pick.unwrap_or_else(|| (0..n).rev().find(|&i| !taken[i]).unwrap());
        taken[i] = true;
        remaining -= p[i];
        out.push(i);
    }
    Ok(out)
}
