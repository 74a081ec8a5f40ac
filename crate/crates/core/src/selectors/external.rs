//! Selection driven by a user-supplied score file.
//!
//! The file carries one line per selective epoch, each line holding `n`
//! comma-separated real scores (higher means select more).  Line `k` is
//! used for epoch `warmup + k`; when the file runs out the last line keeps
//! applying.  Lines starting with `#` and blank lines are skipped.  Scores
//! go through the same min-max, quantization, and pressure pipeline as the
//! built-in policies.

use std::io::BufRead;
use std::path::Path;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand_chacha::ChaCha8Rng;

use super::{BatchSelector, SelectorKind, ShuffledChunks};
use crate::correlation::minmax_unit;
use crate::error::{Error, Result};
use crate::sampler::{draw_batch, selection_probabilities, PressureSchedule, SamplingDistribution};

#[derive(Debug, Clone)]
pub struct ExternalSelector {
    rows: Vec<Array1<f64>>,
    batch: usize,
    warmup: usize,
    schedule: PressureSchedule,
    w: Array1<f64>,
    dist: Option<SamplingDistribution>,
    warm: ShuffledChunks,
    epoch: usize,
}

impl ExternalSelector {
    pub fn from_path(
        path: &Path,
        n: usize,
        batch: usize,
        warmup: usize,
        schedule: PressureSchedule,
    ) -> Result<Self> {
        let display = path.display().to_string();
        let file = std::fs::File::open(path).map_err(|e| Error::Parse {
            path: display.clone(),
            line: 0,
            message: format!("cannot open: {e}"),
        })?;
        Self::from_reader(
            std::io::BufReader::new(file),
            &display,
            n,
            batch,
            warmup,
            schedule,
        )
    }

    pub fn from_reader<R: BufRead>(
        reader: R,
        path: &str,
        n: usize,
        batch: usize,
        warmup: usize,
        schedule: PressureSchedule,
    ) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = t
                .split(',')
                .map(|tok| {
                    tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.into(),
                        line: i + 1,
                        message: format!("bad score '{}'", tok.trim()),
                    })
                })
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    message: format!("expected {n} scores, got {}", vals.len()),
                });
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    path: path.into(),
                    line: i + 1,
                    message: "non-finite score".into(),
                });
            }
            rows.push(Array1::from_vec(vals));
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                path: path.into(),
                line: 0,
                message: "score file has no data lines".into(),
            });
        }
        Ok(ExternalSelector {
            rows,
            batch,
            warmup,
            schedule,
            w: Array1::from_elem(n, 0.5),
            dist: None,
            warm: ShuffledChunks::new(n, batch)?,
            epoch: 0,
        })
    }

    fn in_warmup(&self) -> bool {
        self.epoch <= self.warmup
    }
}

impl BatchSelector for ExternalSelector {
    fn kind(&self) -> SelectorKind {
        SelectorKind::External
    }

    fn on_epoch_start(&mut self, epoch: usize, rng: &mut ChaCha8Rng) -> Result<()> {
        self.epoch = epoch;
        if self.in_warmup() {
            self.warm.reshuffle(rng);
            self.dist = None;
            return Ok(());
        }
        let idx = (epoch - self.warmup - 1).min(self.rows.len() - 1);
        self.w = minmax_unit(self.rows[idx].view())?;
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

    fn on_batch_forward(&mut self, _indices: &[usize], _probs: ArrayView2<'_, f64>) -> Result<()> {
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
    use rand::SeedableRng;
    use std::io::Cursor;

    fn sched() -> PressureSchedule {
        PressureSchedule::new(10.0, 1, 10).unwrap()
    }

    fn build(text: &str, n: usize) -> Result<ExternalSelector> {
        ExternalSelector::from_reader(Cursor::new(text), "scores", n, 2, 1, sched())
    }

    #[test]
    fn uses_line_per_epoch_then_repeats_last() {
        let mut sel = build("# comment\n1,2,3,4\n4,3,2,1\n", 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        sel.on_epoch_start(1, &mut rng).unwrap();
        sel.on_epoch_start(2, &mut rng).unwrap();
        let w2 = sel.sample_weights().unwrap().to_owned();
        assert_eq!(w2.to_vec(), vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
        sel.on_epoch_start(3, &mut rng).unwrap();
        let w3 = sel.sample_weights().unwrap().to_owned();
        assert_eq!(w3.to_vec(), vec![1.0, 2.0 / 3.0, 1.0 / 3.0, 0.0]);
        // file exhausted: epoch 4 reuses the final line
        sel.on_epoch_start(4, &mut rng).unwrap();
        assert_eq!(sel.sample_weights().unwrap().to_owned(), w3);
    }

    #[test]
    fn rejects_wrong_score_count() {
        assert!(build("1,2,3\n", 4).is_err());
    }

    #[test]
    fn rejects_unparseable_and_non_finite() {
        assert!(build("1,x,3,4\n", 4).is_err());
        assert!(build("1,inf,3,4\n", 4).is_err());
    }

    #[test]
    fn rejects_empty_file() {
        assert!(build("# nothing\n\n", 4).is_err());
    }

    #[test]
    fn draws_follow_the_scores() {
        let mut sel = build("0,0,0,10\n", 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        sel.on_epoch_start(1, &mut rng).unwrap();
        sel.on_epoch_start(2, &mut rng).unwrap();
        let dist = sel.probabilities().unwrap();
        assert!(dist.get(3) > dist.get(0));
    }
}
