//! Experiment configuration: a flat `key = value` text format plus the
//! same setter surface for command-line overrides.
//!
//! A config file is read line by line.  Blank lines and lines starting
//! with `#` are skipped; everything else must be `key = value`.  Unknown
//! keys are errors rather than warnings so a typo cannot silently fall
//! back to a default.  Command-line flags reuse [`ExperimentConfig::set`],
//! which keeps the two entry points identical.
//!
//! The dataset field accepts either a path to an `.mll` file or a
//! `synth:` descriptor (`synth:scene`, `synth:default`,
//! `synth:n=400,q=6,seed=3`) that generates data in memory.
//!
//! Grid lists (`s0_grid`, `window_grid`, `lambda1_grid`) expand into
//! extra experiment cells for the uncertainty-driven selector only; the
//! baselines have no use for those hyperparameters and run once per fold
//! at the base configuration.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::PressureSchedule;
use crate::selectors::SelectorKind;
use crate::synthetic::SyntheticSpec;

/// Which per-epoch snapshot an inspection run should write.
///
/// `U` is the instance-by-label uncertainty matrix, `C` the label
/// correlation matrix, `w` the per-instance sample weights, and `P` the
/// selection distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpKind {
    Uncertainty,
    Correlation,
    Weights,
    Probabilities,
}

impl DumpKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "U" => Ok(DumpKind::Uncertainty),
            "C" => Ok(DumpKind::Correlation),
            "w" => Ok(DumpKind::Weights),
            "P" => Ok(DumpKind::Probabilities),
            other => Err(Error::Config(format!(
                "unknown dump kind {other:?}; expected U, C, w, or P"
            ))),
        }
    }

    /// Short code used in output file names.
    pub fn code(self) -> &'static str {
        match self {
            DumpKind::Uncertainty => "U",
            DumpKind::Correlation => "C",
            DumpKind::Weights => "w",
            DumpKind::Probabilities => "P",
        }
    }
}

impl fmt::Display for DumpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Everything a training or experiment run needs, with defaults matching
/// the reference hyperparameters: batch 128, five warm-up epochs, window
/// 5, lambda1 0.5, initial pressure 100, ten uncertainty bins, one hidden
/// layer of 128 units, Adam at 1e-3 with weight decay 1e-4, five folds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Path to an `.mll` file, or a `synth:` descriptor.
    pub dataset: String,
    /// Selection policies to run; experiments iterate over all of them.
    pub selectors: Vec<SelectorKind>,
    pub batch_size: usize,
    pub epochs: usize,
    /// Uniform random epochs before any selector activates.
    pub warmup: usize,
    /// Sliding-window length for prediction histories.
    pub window: usize,
    /// Mix between fluctuation (1.0) and entropy (0.0) in the
    /// per-label uncertainty.
    pub lambda1: f64,
    /// Initial selection pressure; decays to 1 over the selective phase.
    pub s0: f64,
    /// Number of histogram bins when estimating label correlation.
    pub tau: usize,
    /// Hidden layer widths; empty means a single sigmoid layer.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Cross-validation fold count.
    pub folds: usize,
    /// Restrict `train`/`inspect` to one fold; experiments ignore this.
    pub fold: Option<usize>,
    pub seed: u64,
    pub out_dir: String,
    /// Parallel worker slots for experiment cells.
    pub jobs: usize,
    /// Re-run a full forward pass over the training fold at the start of
    /// every selective epoch so histories reflect the current model.
    pub refresh_full_epoch: bool,
    /// Replace the estimated correlation matrix with the identity
    /// (ablation: per-label uncertainty only).
    pub identity_c: bool,
    /// Snapshots to write each selective epoch during `inspect`.
    pub dump: Vec<DumpKind>,
    /// Two selective epochs whose correlation matrices get differenced.
    pub corr_diff: Option<(usize, usize)>,
    pub s0_grid: Vec<f64>,
    pub window_grid: Vec<usize>,
    pub lambda1_grid: Vec<f64>,
    /// Score file for the external selector, one line per selective epoch.
    pub external_scores: Option<String>,
    /// First selective epoch of the pressure decay; defaults to warmup+1.
    pub pressure_start: Option<usize>,
    /// Epoch at which pressure reaches 1; defaults to the last epoch.
    pub pressure_end: Option<usize>,
    /// Persist the best-validation model parameters per fold.
    pub save_params: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: String::new(),
            selectors: vec![SelectorKind::Ours, SelectorKind::Random],
            batch_size: 128,
            epochs: 100,
            warmup: 5,
            window: 5,
            lambda1: 0.5,
            s0: 100.0,
            tau: 10,
            hidden: vec![128],
            learning_rate: 1e-3,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            folds: 5,
            fold: None,
            seed: 0,
            out_dir: "runs".into(),
            jobs: 1,
            refresh_full_epoch: false,
            identity_c: false,
            dump: Vec::new(),
            corr_diff: None,
            s0_grid: Vec::new(),
            window_grid: Vec::new(),
            lambda1_grid: Vec::new(),
            external_scores: None,
            pressure_start: None,
            pressure_end: None,
            save_params: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!(
            "{key} = {other}: expected true or false"
        ))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|item| parse_num(key, item.trim()))
        .collect()
}

impl ExperimentConfig {
    /// Reads a config file, starting from the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected key = value, got {line:?}"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment.  Command-line overrides go
    /// through here as well, after the file has been read.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => self.dataset = value.to_string(),
            "selectors" => {
                self.selectors = value
                    .split(',')
                    .map(|s| SelectorKind::parse(s.trim()))
                    .collect::<Result<_>>()?;
            }
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "warmup" => self.warmup = parse_num(key, value)?,
            "window" => self.window = parse_num(key, value)?,
            "lambda1" => self.lambda1 = parse_num(key, value)?,
            "s0" => self.s0 = parse_num(key, value)?,
            "tau" => self.tau = parse_num(key, value)?,
            "hidden" => self.hidden = parse_list(key, value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "folds" => self.folds = parse_num(key, value)?,
            "fold" => self.fold = Some(parse_num(key, value)?),
            "seed" => self.seed = parse_num(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "jobs" => self.jobs = parse_num(key, value)?,
            "refresh_full_epoch" => self.refresh_full_epoch = parse_bool(key, value)?,
            "identity_c" => self.identity_c = parse_bool(key, value)?,
            "dump" => {
                self.dump = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(DumpKind::parse)
                    .collect::<Result<_>>()?;
            }
            "corr_diff" => {
                let (a, b) = value.split_once(',').ok_or_else(|| {
                    Error::Config(format!(
                        "corr_diff = {value}: expected two epochs like 30,70"
                    ))
                })?;
                self.corr_diff = Some((parse_num(key, a.trim())?, parse_num(key, b.trim())?));
            }
            "s0_grid" => self.s0_grid = parse_list(key, value)?,
            "window_grid" => self.window_grid = parse_list(key, value)?,
            "lambda1_grid" => self.lambda1_grid = parse_list(key, value)?,
            "external_scores" => self.external_scores = Some(value.to_string()),
            "pressure_start" => self.pressure_start = Some(parse_num(key, value)?),
            "pressure_end" => self.pressure_end = Some(parse_num(key, value)?),
            "save_params" => self.save_params = parse_bool(key, value)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// The pressure decay window for a run of `self.epochs` epochs:
    /// explicit overrides win, otherwise decay spans the selective phase.
    pub fn schedule(&self) -> Result<PressureSchedule> {
        let start = self.pressure_start.unwrap_or(self.warmup + 1);
        let end = self
            .pressure_end
            .unwrap_or_else(|| self.epochs.max(start + 1));
        PressureSchedule::new(self.s0, start, end)
    }

    /// Checks cross-field consistency.  Call after all overrides are in.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.dataset.is_empty() {
            return fail("dataset is required".into());
        }
        if let Some(desc) = self.dataset.strip_prefix("synth:") {
            SyntheticSpec::from_descriptor(desc)?;
        }
        if self.selectors.is_empty() {
            return fail("at least one selector is required".into());
        }
        for (i, a) in self.selectors.iter().enumerate() {
            if self.selectors[..i].contains(a) {
                return fail(format!("selector {a} listed twice"));
            }
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.epochs == 0 {
            return fail("epochs must be positive".into());
        }
        if self.warmup == 0 {
            return fail("warmup must be at least 1 epoch".into());
        }
        if self.window < 2 {
            return fail(format!("window must be at least 2, got {}", self.window));
        }
        if self.tau == 0 {
            return fail("tau must be at least 1 bin".into());
        }
        for &l in std::iter::once(&self.lambda1).chain(&self.lambda1_grid) {
            if !(0.0..=1.0).contains(&l) {
                return fail(format!("lambda1 {l} outside [0, 1]"));
            }
        }
        for &s in std::iter::once(&self.s0).chain(&self.s0_grid) {
            if !(s > 1.0) || !s.is_finite() {
                return fail(format!("s0 {s} must be finite and greater than 1"));
            }
        }
        for &t in &self.window_grid {
            if t < 2 {
                return fail(format!("window_grid entry {t} must be at least 2"));
            }
        }
        for &h in &self.hidden {
            if h == 0 {
                return fail("hidden widths must be positive".into());
            }
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return fail(format!(
                "weight_decay {} must be non-negative",
                self.weight_decay
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} {b} outside [0, 1)"));
            }
        }
        if self.folds < 2 {
            return fail(format!("folds must be at least 2, got {}", self.folds));
        }
        if let Some(f) = self.fold {
            if f >= self.folds {
                return fail(format!("fold {f} out of range for {} folds", self.folds));
            }
        }
        if self.jobs == 0 {
            return fail("jobs must be at least 1".into());
        }
        let start = self.pressure_start.unwrap_or(self.warmup + 1);
        let end = self
            .pressure_end
            .unwrap_or_else(|| self.epochs.max(start + 1));
        if start <= self.warmup {
            return fail(format!(
                "pressure decay starts at epoch {start} but warm-up runs through epoch {}",
                self.warmup
            ));
        }
        if start >= end {
            return fail(format!(
                "pressure decay window {start}..{end} must move forward"
            ));
        }
        if self.selectors.contains(&SelectorKind::ActiveBias) && self.warmup < 2 {
            return fail("the variance-history selector needs at least 2 warm-up epochs".into());
        }
        if self.selectors.contains(&SelectorKind::RecencyBias) && self.warmup < self.window {
            return fail(format!(
                "the recency selector needs warmup >= window ({} < {})",
                self.warmup, self.window
            ));
        }
        if self.selectors.contains(&SelectorKind::External) && self.external_scores.is_none() {
            return fail("the external selector needs an external_scores file".into());
        }
        if let Some((a, b)) = self.corr_diff {
            if a >= b {
                return fail(format!("corr_diff epochs {a},{b} must be increasing"));
            }
            if a <= self.warmup {
                return fail(format!(
                    "corr_diff epoch {a} falls inside the {}-epoch warm-up; no correlation matrix exists there",
                    self.warmup
                ));
            }
            if b > self.epochs {
                return fail(format!(
                    "corr_diff epoch {b} beyond the final epoch {}",
                    self.epochs
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn valid() -> ExperimentConfig {
        ExperimentConfig {
            dataset: "synth:default".into(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.warmup, 5);
        assert_eq!(cfg.window, 5);
        assert_eq!(cfg.lambda1, 0.5);
        assert_eq!(cfg.s0, 100.0);
        assert_eq!(cfg.tau, 10);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.hidden, vec![128]);
        assert_eq!(cfg.learning_rate, 1e-3);
        assert_eq!(cfg.weight_decay, 1e-4);
        assert_eq!((cfg.beta1, cfg.beta2), (0.9, 0.999));
        assert_eq!(cfg.epochs, 100);
    }

    #[test]
    fn file_round_trip_with_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# comparison run").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "dataset = synth:scene").unwrap();
        writeln!(f, "selectors = ours, random, balance").unwrap();
        writeln!(f, "epochs = 80").unwrap();
        writeln!(f, "hidden = 64,32").unwrap();
        writeln!(f, "s0_grid = 2, 100").unwrap();
        writeln!(f, "dump = U,w").unwrap();
        writeln!(f, "corr_diff = 30,70").unwrap();
        writeln!(f, "refresh_full_epoch = true").unwrap();
        drop(f);
        let cfg = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(cfg.dataset, "synth:scene");
        assert_eq!(
            cfg.selectors,
            vec![
                SelectorKind::Ours,
                SelectorKind::Random,
                SelectorKind::Balance
            ]
        );
        assert_eq!(cfg.epochs, 80);
        assert_eq!(cfg.hidden, vec![64, 32]);
        assert_eq!(cfg.s0_grid, vec![2.0, 100.0]);
        assert_eq!(cfg.dump, vec![DumpKind::Uncertainty, DumpKind::Weights]);
        assert_eq!(cfg.corr_diff, Some((30, 70)));
        assert!(cfg.refresh_full_epoch);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_an_error_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "dataset = x\nbatchsize = 4\n").unwrap();
        let err = ExperimentConfig::from_file(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("batchsize"), "{msg}");
        assert!(msg.contains(":2"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "dataset = x\nepochs\n").unwrap();
        let err = ExperimentConfig::from_file(&path).unwrap_err();
        assert!(err.to_string().contains(":2"), "{err}");
    }

    #[test]
    fn cli_override_reuses_the_setter() {
        let mut cfg = valid();
        cfg.set("seed", "9").unwrap();
        cfg.set("selectors", "recency").unwrap();
        cfg.set("warmup", "6").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.selectors, vec![SelectorKind::RecencyBias]);
        cfg.validate().unwrap();
    }

    #[test]
    fn validation_rejects_inconsistent_fields() {
        let cases: &[(&str, &str)] = &[
            ("lambda1", "1.5"),
            ("s0", "1.0"),
            ("window", "1"),
            ("beta1", "1.0"),
            ("folds", "1"),
            ("learning_rate", "0"),
            ("batch_size", "0"),
            ("warmup", "0"),
            ("jobs", "0"),
        ];
        for (key, value) in cases {
            let mut cfg = valid();
            cfg.set(key, value).unwrap();
            assert!(cfg.validate().is_err(), "{key}={value} should fail");
        }
    }

    #[test]
    fn selector_specific_guards() {
        let mut cfg = valid();
        cfg.set("selectors", "active").unwrap();
        cfg.set("warmup", "1").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = valid();
        cfg.set("selectors", "recency").unwrap();
        cfg.set("warmup", "3").unwrap();
        cfg.set("window", "5").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = valid();
        cfg.set("selectors", "external").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("external_scores", "scores.txt").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn duplicate_selectors_rejected() {
        let mut cfg = valid();
        cfg.set("selectors", "ours,random,ours").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("twice"), "{err}");
    }

    #[test]
    fn fold_bounds_and_pressure_window() {
        let mut cfg = valid();
        cfg.set("fold", "5").unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = valid();
        cfg.set("pressure_start", "3").unwrap();
        assert!(cfg.validate().is_err(), "decay cannot start inside warm-up");

        let mut cfg = valid();
        cfg.set("pressure_start", "40").unwrap();
        cfg.set("pressure_end", "20").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn corr_diff_bounds() {
        let mut cfg = valid();
        cfg.set("corr_diff", "70,30").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("corr_diff", "3,70").unwrap();
        assert!(cfg.validate().is_err(), "epoch 3 is inside warm-up");
        cfg.set("corr_diff", "30,700").unwrap();
        assert!(cfg.validate().is_err(), "epoch 700 beyond the run");
        cfg.set("corr_diff", "30,70").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn schedule_spans_the_selective_phase_by_default() {
        let mut cfg = valid();
        cfg.set("epochs", "60").unwrap();
        let sched = cfg.schedule().unwrap();
        assert_eq!(sched.pressure_at(6), 100.0);
        assert_eq!(sched.pressure_at(60), 1.0);
    }

    #[test]
    fn bad_synth_descriptor_caught_at_validation() {
        let mut cfg = valid();
        cfg.dataset = "synth:bogus=1".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dump_kind_parse_and_code() {
        for code in ["U", "C", "w", "P"] {
            assert_eq!(DumpKind::parse(code).unwrap().code(), code);
        }
        assert!(DumpKind::parse("Q").is_err());
    }
}
