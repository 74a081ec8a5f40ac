//! Cross-validated training runs and the experiment driver built on them.
//!
//! A run is fully determined by its configuration and master seed: fold
//! assignment, model initialization, epoch shuffles, and batch draws all
//! pull from ChaCha streams derived through [`derive_seed`], so re-running
//! the same config reproduces every output file byte for byte apart from
//! the wall-clock column.  Every selector sharing a fold also shares that
//! fold's stream, which makes warm-up epochs bitwise identical across
//! policies and pairs their comparisons on the same model initialization.
//!
//! Experiment cells (selector, grid point, fold) execute on a small worker
//! pool without shared mutable state; results are placed by index, so
//! output order does not depend on scheduling.  A failing cell is recorded
//! in `failures.csv` and the rest of the run continues.

use std::collections::VecDeque;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DumpKind, ExperimentConfig};
use crate::data::{self, FoldPlan, MinMaxScaler, MultiLabelDataset, SplitIndices};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvaluationReport};
use crate::model::{bce_loss, AdamState, MlpParams};
use crate::selectors::{
    BalanceSelector, BatchSelector, ExternalSelector, HistoryScoreSelector, OursConfig,
    OursSelector, RandomSelector, ScoreMeasure, SelectorKind,
};
use crate::synthetic::{self, SyntheticSpec};

/// Column order of the per-epoch CSV files.  Wall-clock comes last so
/// determinism checks can strip a single trailing column.
pub const EPOCH_CSV_HEADER: &str = "epoch,selector,fold,train_loss,val_macro_auc,\
val_ranking_loss,val_hamming_loss,pressure,wall_secs";

const SUMMARY_HEADER: &str = "selector,fold,best_epoch,best_val_macro_auc,test_macro_auc,\
test_ranking_loss,test_hamming_loss,best_val_macro_auc_std,test_macro_auc_std";

/// One training epoch's log line.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Cell label: the selector name, plus grid coordinates when sweeping.
    pub selector: String,
    pub fold: usize,
    pub train_loss: f64,
    pub val_macro_auc: f64,
    pub val_ranking_loss: f64,
    pub val_hamming_loss: f64,
    /// Selection pressure in force this epoch; 1 outside the selective
    /// phase and for pressure-free policies.
    pub pressure: f64,
    pub wall_secs: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.selector,
            self.fold,
            self.train_loss,
            self.val_macro_auc,
            self.val_ranking_loss,
            self.val_hamming_loss,
            self.pressure,
            self.wall_secs
        )
    }
}

/// Selector state captured right after an epoch's distribution was built.
#[derive(Debug, Clone)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub u: Option<Array2<f64>>,
    pub c: Option<Array2<f64>>,
    pub w: Option<Array1<f64>>,
    pub p: Option<Array1<f64>>,
}

/// Everything one (selector, fold) training run produces.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub records: Vec<EpochRecord>,
    /// Epoch with the highest validation Macro-AUC; ties go to the
    /// earliest epoch.
    pub best_epoch: usize,
    pub best_val_macro_auc: f64,
    /// Test metrics of the best-validation-epoch parameters.
    pub test: EvaluationReport,
    pub params: Option<MlpParams>,
    pub snapshots: Vec<EpochSnapshot>,
}

/// FNV-1a over the master seed's bytes followed by the tag, giving each
/// component of a run (fold plan, per-fold streams) an independent seed
/// that is stable across platforms and releases.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in master.to_le_bytes().iter().chain(tag.as_bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Resolves the config's dataset field: a `synth:` descriptor generates
/// data in memory, anything else is read as an `.mll` file.
pub fn load_dataset(spec: &str) -> Result<MultiLabelDataset> {
    if let Some(desc) = spec.strip_prefix("synth:") {
        synthetic::generate(&SyntheticSpec::from_descriptor(desc)?)
    } else {
        data::load_mll(Path::new(spec))
    }
}

/// Stratified fold assignment for this config.  The plan depends only on
/// the dataset and master seed, never on selector or grid choices, so all
/// cells of an experiment share it.
pub fn make_plan(cfg: &ExperimentConfig, dataset: &MultiLabelDataset) -> Result<FoldPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "folds"));
    data::stratified_kfold(dataset.labels.view(), cfg.folds, &mut rng)
}

fn take_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

fn build_selector(
    cfg: &ExperimentConfig,
    kind: SelectorKind,
    n: usize,
    q: usize,
    train_labels: &Array2<u8>,
) -> Result<Box<dyn BatchSelector>> {
    let b = cfg.batch_size;
    Ok(match kind {
        SelectorKind::Ours => Box::new(OursSelector::new(
            n,
            q,
            OursConfig {
                batch: b,
                warmup: cfg.warmup,
                window: cfg.window,
                tau: cfg.tau,
                lambda1: cfg.lambda1,
                schedule: cfg.schedule()?,
                identity_correlation: cfg.identity_c,
            },
        )?),
        SelectorKind::Random => Box::new(RandomSelector::new(n, b)?),
        SelectorKind::Balance => Box::new(BalanceSelector::new(train_labels.view(), b)?),
        SelectorKind::ActiveBias => Box::new(HistoryScoreSelector::new(
            ScoreMeasure::HistoryStd,
            n,
            q,
            b,
            cfg.warmup,
            cfg.window,
            cfg.schedule()?,
        )?),
        SelectorKind::RecencyBias => Box::new(HistoryScoreSelector::new(
            ScoreMeasure::WindowBinaryEntropy,
            n,
            q,
            b,
            cfg.warmup,
            cfg.window,
            cfg.schedule()?,
        )?),
        SelectorKind::External => {
            let path = cfg.external_scores.as_ref().ok_or_else(|| {
                Error::Config("the external selector needs an external_scores file".into())
            })?;
            Box::new(ExternalSelector::from_path(
                Path::new(path),
                n,
                b,
                cfg.warmup,
                cfg.schedule()?,
            )?)
        }
    })
}

/// Trains the config's first selector on one fold of the split plan.
///
/// Features are min-max scaled on the training rows only.  Each epoch
/// runs `floor(n_train / batch)` training batches; during warm-up the
/// shuffle's uncovered tail gets an inference-only forward pass so every
/// prediction history grows once per epoch.  Validation is scored after
/// every epoch and the best epoch's parameters are kept for the final
/// test evaluation.
pub fn run_fold(
    cfg: &ExperimentConfig,
    dataset: &MultiLabelDataset,
    split: &SplitIndices,
    fold: usize,
    label: &str,
    want_snapshots: bool,
) -> Result<FoldOutcome> {
    let kind = *cfg
        .selectors
        .first()
        .ok_or_else(|| Error::Config("no selector configured".into()))?;
    let n_train = split.train.len();
    let q = dataset.q();
    if cfg.batch_size > n_train {
        return Err(Error::Config(format!(
            "batch size {} exceeds the {} training instances of fold {}",
            cfg.batch_size, n_train, fold
        )));
    }

    let scaler = MinMaxScaler::fit(dataset.features.view(), &split.train)?;
    let features = scaler.transform(dataset.features.view());
    let train_labels = dataset.gather_labels(&split.train);
    let val_x = take_rows(&features, &split.val);
    let val_y = dataset.gather_labels(&split.val);
    let test_x = take_rows(&features, &split.test);
    let test_y = dataset.gather_labels(&split.test);

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &format!("fold{fold}")));
    let widths: Vec<usize> = std::iter::once(dataset.d())
        .chain(cfg.hidden.iter().copied())
        .chain(std::iter::once(q))
        .collect();
    let mut model = MlpParams::init(&widths, &mut rng)?;
    let mut adam = AdamState::new(
        &model,
        cfg.learning_rate,
        cfg.beta1,
        cfg.beta2,
        cfg.weight_decay,
    )?;
    let mut selector = build_selector(cfg, kind, n_train, q, &train_labels)?;

    let batches = n_train / cfg.batch_size;
    let to_rows = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| split.train[i]).collect() };
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.clone();

    for epoch in 1..=cfg.epochs {
        let tick = Instant::now();
        let selective = epoch > cfg.warmup;
        if selective && cfg.refresh_full_epoch {
            let all: Vec<usize> = (0..n_train).collect();
            for chunk in all.chunks(cfg.batch_size) {
                let x = take_rows(&features, &to_rows(chunk));
                let p = model.forward(x.view())?;
                selector.on_batch_forward(chunk, p.view())?;
            }
        }
        selector.on_epoch_start(epoch, &mut rng)?;
        if want_snapshots && selective {
            let keep_c = cfg.dump.contains(&DumpKind::Correlation)
                || cfg.corr_diff.is_some_and(|(a, b)| epoch == a || epoch == b);
            snapshots.push(EpochSnapshot {
                epoch,
                u: cfg
                    .dump
                    .contains(&DumpKind::Uncertainty)
                    .then(|| selector.uncertainty_matrix().map(|v| v.to_owned()))
                    .flatten(),
                c: keep_c
                    .then(|| selector.correlation().map(|v| v.to_owned()))
                    .flatten(),
                w: cfg
                    .dump
                    .contains(&DumpKind::Weights)
                    .then(|| selector.sample_weights().map(|v| v.to_owned()))
                    .flatten(),
                p: cfg
                    .dump
                    .contains(&DumpKind::Probabilities)
                    .then(|| {
                        selector
                            .probabilities()
                            .map(|d| d.probabilities().to_owned())
                    })
                    .flatten(),
            });
        }

        let mut loss_sum = 0.0;
        for _ in 0..batches {
            let idx = selector.next_batch(&mut rng)?;
            let rows = to_rows(&idx);
            let x = take_rows(&features, &rows);
            let y = dataset.gather_labels_f64(&rows);
            let p = model.forward(x.view())?;
            selector.on_batch_forward(&idx, p.view())?;
            loss_sum += bce_loss(p.view(), y.view())?;
            let grads = model.backward(x.view(), y.view(), cfg.weight_decay)?;
            adam.step(&mut model, &grads)?;
        }
        let fill = selector.warmup_fill_indices();
        if !fill.is_empty() {
            let x = take_rows(&features, &to_rows(&fill));
            let p = model.forward(x.view())?;
            selector.on_batch_forward(&fill, p.view())?;
        }
        let train_loss = loss_sum / batches as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "training loss at fold {fold} epoch {epoch}"
            )));
        }

        let val_scores = model.forward(val_x.view())?;
        let val = evaluate(val_scores.view(), val_y.view())?;
        if val.macro_auc > best_auc {
            best_auc = val.macro_auc;
            best_epoch = epoch;
            best_params = model.clone();
        }
        records.push(EpochRecord {
            epoch,
            selector: label.to_string(),
            fold,
            train_loss,
            val_macro_auc: val.macro_auc,
            val_ranking_loss: val.ranking_loss,
            val_hamming_loss: val.hamming_loss,
            pressure: selector.pressure(),
            wall_secs: tick.elapsed().as_secs_f64(),
        });
    }

    let test_scores = best_params.forward(test_x.view())?;
    let test = evaluate(test_scores.view(), test_y.view())?;
    Ok(FoldOutcome {
        records,
        best_epoch,
        best_val_macro_auc: best_auc,
        test,
        params: cfg.save_params.then_some(best_params),
        snapshots,
    })
}

/// One selector at one grid point; folds multiply this further.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub kind: SelectorKind,
    pub s0: f64,
    pub window: usize,
    pub lambda1: f64,
    pub label: String,
}

/// Expands the selector list against the grid lists.  Grids apply to the
/// uncertainty-driven selector only; labels grow a suffix per swept
/// dimension so output files stay distinct.
pub fn expand_cells(cfg: &ExperimentConfig) -> Vec<CellSpec> {
    let mut cells = Vec::new();
    for &kind in &cfg.selectors {
        if kind != SelectorKind::Ours {
            cells.push(CellSpec {
                kind,
                s0: cfg.s0,
                window: cfg.window,
                lambda1: cfg.lambda1,
                label: kind.name().to_string(),
            });
            continue;
        }
        let s0s = if cfg.s0_grid.is_empty() {
            vec![cfg.s0]
        } else {
            cfg.s0_grid.clone()
        };
        let windows = if cfg.window_grid.is_empty() {
            vec![cfg.window]
        } else {
            cfg.window_grid.clone()
        };
        let l1s = if cfg.lambda1_grid.is_empty() {
            vec![cfg.lambda1]
        } else {
            cfg.lambda1_grid.clone()
        };
        for &s0 in &s0s {
            for &window in &windows {
                for &lambda1 in &l1s {
                    let mut label = kind.name().to_string();
                    if !cfg.s0_grid.is_empty() {
                        label.push_str(&format!("_s0-{s0}"));
                    }
                    if !cfg.window_grid.is_empty() {
                        label.push_str(&format!("_T-{window}"));
                    }
                    if !cfg.lambda1_grid.is_empty() {
                        label.push_str(&format!("_l1-{lambda1}"));
                    }
                    cells.push(CellSpec {
                        kind,
                        s0,
                        window,
                        lambda1,
                        label,
                    });
                }
            }
        }
    }
    cells
}

fn cell_config(base: &ExperimentConfig, cell: &CellSpec) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.selectors = vec![cell.kind];
    cfg.s0 = cell.s0;
    cfg.window = cell.window;
    cfg.lambda1 = cell.lambda1;
    cfg
}

/// One (cell, fold) result; errors are kept as text so a partial failure
/// can be recorded without aborting the experiment.
#[derive(Debug)]
pub struct CellRun {
    pub label: String,
    pub fold: usize,
    pub outcome: std::result::Result<FoldOutcome, String>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub out_dir: PathBuf,
    pub runs: Vec<CellRun>,
    pub summary_path: PathBuf,
}

fn write_lines<I>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for line in lines {
        writeln!(out, "{}", line.as_ref())?;
    }
    out.flush()?;
    Ok(())
}

fn matrix_lines(m: ArrayView2<'_, f64>) -> Vec<String> {
    m.rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

fn vector_lines(v: ArrayView1<'_, f64>) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn sample_std(vals: &[f64], mean: f64) -> f64 {
    if vals.len() < 2 {
        return 0.0;
    }
    (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt()
}

/// Runs every (selector, grid point, fold) combination and writes
/// `epochs_<label>_<fold>.csv` per cell plus `summary.csv` (one row per
/// fold and a mean row per label, with fold standard deviations on the
/// mean row).  Failed cells land in `failures.csv`; everything else is
/// unaffected by them.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset)?;
    let plan = make_plan(cfg, &dataset)?;
    let cells = expand_cells(cfg);
    let folds = cfg.folds;

    let queue: Mutex<VecDeque<(usize, usize)>> = Mutex::new(
        (0..cells.len())
            .flat_map(|c| (0..folds).map(move |f| (c, f)))
            .collect(),
    );
    let total = cells.len() * folds;
    let results: Mutex<Vec<Option<std::result::Result<FoldOutcome, String>>>> =
        Mutex::new((0..total).map(|_| None).collect());

    let workers = cfg.jobs.min(total).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().expect("queue lock").pop_front();
                let Some((ci, fold)) = job else { break };
                let run_cfg = cell_config(cfg, &cells[ci]);
                let outcome = plan
                    .split(fold)
                    .and_then(|split| {
                        run_fold(&run_cfg, &dataset, &split, fold, &cells[ci].label, false)
                    })
                    .map_err(|e| e.to_string());
                results.lock().expect("results lock")[ci * folds + fold] = Some(outcome);
            });
        }
    });

    let results = results.into_inner().expect("results lock");
    let mut runs = Vec::with_capacity(total);
    for (ci, cell) in cells.iter().enumerate() {
        for fold in 0..folds {
            runs.push(CellRun {
                label: cell.label.clone(),
                fold,
                outcome: results[ci * folds + fold]
                    .as_ref()
                    .expect("every job ran")
                    .clone(),
            });
        }
    }

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    for run in &runs {
        if let Ok(outcome) = &run.outcome {
            let path = out_dir.join(format!("epochs_{}_{}.csv", run.label, run.fold));
            let lines = std::iter::once(EPOCH_CSV_HEADER.to_string())
                .chain(outcome.records.iter().map(EpochRecord::csv_row));
            write_lines(&path, lines)?;
        }
    }

    let mut summary = vec![SUMMARY_HEADER.to_string()];
    for cell in &cells {
        let mut best_epochs = Vec::new();
        let mut best_vals = Vec::new();
        let mut test_aucs = Vec::new();
        let mut test_rls = Vec::new();
        let mut test_hls = Vec::new();
        for run in runs.iter().filter(|r| r.label == cell.label) {
            let Ok(o) = &run.outcome else { continue };
            summary.push(format!(
                "{},{},{},{},{},{},{},,",
                cell.label,
                run.fold,
                o.best_epoch,
                o.best_val_macro_auc,
                o.test.macro_auc,
                o.test.ranking_loss,
                o.test.hamming_loss
            ));
            best_epochs.push(o.best_epoch as f64);
            best_vals.push(o.best_val_macro_auc);
            test_aucs.push(o.test.macro_auc);
            test_rls.push(o.test.ranking_loss);
            test_hls.push(o.test.hamming_loss);
        }
        if best_vals.is_empty() {
            continue;
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (me, mv, ma) = (mean(&best_epochs), mean(&best_vals), mean(&test_aucs));
        summary.push(format!(
            "{},mean,{},{},{},{},{},{},{}",
            cell.label,
            me,
            mv,
            ma,
            mean(&test_rls),
            mean(&test_hls),
            sample_std(&best_vals, mv),
            sample_std(&test_aucs, ma)
        ));
    }
    let summary_path = out_dir.join("summary.csv");
    write_lines(&summary_path, &summary)?;

    let failures: Vec<String> = runs
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .err()
                .map(|e| format!("{},{},{}", r.label, r.fold, csv_quote(e)))
        })
        .collect();
    if !failures.is_empty() {
        let lines = std::iter::once("selector,fold,error".to_string()).chain(failures);
        write_lines(&out_dir.join("failures.csv"), lines)?;
    }

    Ok(ExperimentOutput {
        out_dir,
        runs,
        summary_path,
    })
}

/// Output of a single `train` invocation.
#[derive(Debug)]
pub struct TrainOutput {
    pub fold: usize,
    pub outcome: FoldOutcome,
    pub epochs_csv: PathBuf,
    pub params_path: Option<PathBuf>,
}

/// Trains the first configured selector on one fold (default fold 0) and
/// writes its epoch log, plus the best parameters when requested.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.dataset)?;
    let plan = make_plan(cfg, &dataset)?;
    let fold = cfg.fold.unwrap_or(0);
    let split = plan.split(fold)?;
    let label = cfg.selectors[0].name().to_string();
    let outcome = run_fold(cfg, &dataset, &split, fold, &label, false)?;

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let epochs_csv = out_dir.join(format!("epochs_{label}_{fold}.csv"));
    let lines = std::iter::once(EPOCH_CSV_HEADER.to_string())
        .chain(outcome.records.iter().map(EpochRecord::csv_row));
    write_lines(&epochs_csv, lines)?;

    let params_path = match &outcome.params {
        Some(params) => {
            let path = out_dir.join(format!("params_{label}_{fold}.txt"));
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path)?);
            params.save(&mut out)?;
            out.flush()?;
            Some(path)
        }
        None => None,
    };
    Ok(TrainOutput {
        fold,
        outcome,
        epochs_csv,
        params_path,
    })
}

fn supported_dumps(kind: SelectorKind) -> &'static [DumpKind] {
    match kind {
        SelectorKind::Ours => &[
            DumpKind::Uncertainty,
            DumpKind::Correlation,
            DumpKind::Weights,
            DumpKind::Probabilities,
        ],
        SelectorKind::ActiveBias | SelectorKind::RecencyBias | SelectorKind::External => {
            &[DumpKind::Weights, DumpKind::Probabilities]
        }
        SelectorKind::Random | SelectorKind::Balance => &[],
    }
}

/// Trains one fold with snapshotting on and writes the requested per-epoch
/// CSVs: `U_epoch_<t>.csv`, `corr_epoch_<t>.csv`, `w_epoch_<t>.csv`,
/// `P_epoch_<t>.csv`, and `corr_diff_<a>_<b>.csv` holding the later
/// correlation matrix minus the earlier one.  Returns the written paths.
pub fn inspect(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.dump.is_empty() && cfg.corr_diff.is_none() {
        return Err(Error::Config(
            "nothing to inspect; set dump (U,C,w,P) or corr_diff".into(),
        ));
    }
    let kind = cfg.selectors[0];
    let allowed = supported_dumps(kind);
    for d in &cfg.dump {
        if !allowed.contains(d) {
            return Err(Error::Config(format!(
                "the {kind} selector keeps no {d} snapshot"
            )));
        }
    }
    if cfg.corr_diff.is_some() && kind != SelectorKind::Ours {
        return Err(Error::Config(format!(
            "corr_diff needs the ours selector, not {kind}"
        )));
    }

    let dataset = load_dataset(&cfg.dataset)?;
    let plan = make_plan(cfg, &dataset)?;
    let fold = cfg.fold.unwrap_or(0);
    let split = plan.split(fold)?;
    let outcome = run_fold(cfg, &dataset, &split, fold, kind.name(), true)?;

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let mut written = Vec::new();
    for snap in &outcome.snapshots {
        let t = snap.epoch;
        if let Some(u) = &snap.u {
            let path = out_dir.join(format!("U_epoch_{t}.csv"));
            write_lines(&path, matrix_lines(u.view()))?;
            written.push(path);
        }
        let keep_c = cfg.dump.contains(&DumpKind::Correlation);
        if let (true, Some(c)) = (keep_c, &snap.c) {
            let path = out_dir.join(format!("corr_epoch_{t}.csv"));
            write_lines(&path, matrix_lines(c.view()))?;
            written.push(path);
        }
        if let Some(w) = &snap.w {
            let path = out_dir.join(format!("w_epoch_{t}.csv"));
            write_lines(&path, vector_lines(w.view()))?;
            written.push(path);
        }
        if let Some(p) = &snap.p {
            let path = out_dir.join(format!("P_epoch_{t}.csv"));
            write_lines(&path, vector_lines(p.view()))?;
            written.push(path);
        }
    }
    if let Some((a, b)) = cfg.corr_diff {
        let find = |t: usize| {
            outcome
                .snapshots
                .iter()
                .find(|s| s.epoch == t)
                .and_then(|s| s.c.as_ref())
                .ok_or_else(|| Error::Invariant(format!("no correlation snapshot at epoch {t}")))
        };
        let (ca, cb) = (find(a)?, find(b)?);
        let diff = cb - ca;
        let path = out_dir.join(format!("corr_diff_{a}_{b}.csv"));
        write_lines(&path, matrix_lines(diff.view()))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            dataset: "synth:n=50,d=6,q=3,seed=5".into(),
            batch_size: 8,
            epochs: 4,
            warmup: 2,
            window: 2,
            folds: 5,
            hidden: vec![8],
            out_dir: out.display().to_string(),
            ..ExperimentConfig::default()
        }
    }

    fn run_one(cfg: &ExperimentConfig, kind: SelectorKind) -> FoldOutcome {
        let mut cfg = cfg.clone();
        cfg.selectors = vec![kind];
        let dataset = load_dataset(&cfg.dataset).unwrap();
        let plan = make_plan(&cfg, &dataset).unwrap();
        let split = plan.split(0).unwrap();
        run_fold(&cfg, &dataset, &split, 0, kind.name(), false).unwrap()
    }

    fn comparable(r: &EpochRecord) -> (usize, usize, f64, f64, f64, f64, f64) {
        (
            r.epoch,
            r.fold,
            r.train_loss,
            r.val_macro_auc,
            r.val_ranking_loss,
            r.val_hamming_loss,
            r.pressure,
        )
    }

    #[test]
    fn warmup_only_runs_match_random_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.epochs = 2;
        let baseline = run_one(&cfg, SelectorKind::Random);
        for kind in [
            SelectorKind::Ours,
            SelectorKind::ActiveBias,
            SelectorKind::RecencyBias,
        ] {
            let other = run_one(&cfg, kind);
            let a: Vec<_> = baseline.records.iter().map(comparable).collect();
            let b: Vec<_> = other.records.iter().map(comparable).collect();
            assert_eq!(a, b, "{kind} warm-up diverged from random");
            assert_eq!(other.test.macro_auc, baseline.test.macro_auc);
            assert_eq!(other.best_epoch, baseline.best_epoch);
        }
    }

    #[test]
    fn rerun_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_cfg(dir.path());
        let first = run_one(&cfg, SelectorKind::Ours);
        let second = run_one(&cfg, SelectorKind::Ours);
        let a: Vec<_> = first.records.iter().map(comparable).collect();
        let b: Vec<_> = second.records.iter().map(comparable).collect();
        assert_eq!(a, b);
        assert_eq!(first.best_epoch, second.best_epoch);
        assert_eq!(first.test.macro_auc, second.test.macro_auc);
        assert_eq!(first.test.ranking_loss, second.test.ranking_loss);
        assert_eq!(first.test.hamming_loss, second.test.hamming_loss);
    }

    #[test]
    fn selective_phase_reports_decaying_pressure() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.epochs = 5;
        let outcome = run_one(&cfg, SelectorKind::Ours);
        let pressures: Vec<f64> = outcome.records.iter().map(|r| r.pressure).collect();
        assert_eq!(&pressures[..2], &[1.0, 1.0]);
        assert_eq!(pressures[2], 100.0);
        assert!(pressures[3] < pressures[2] && pressures[3] > pressures[4]);
        assert_eq!(pressures[4], 1.0);
    }

    #[test]
    fn experiment_layout_summary_and_means() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(&dir.path().join("exp"));
        cfg.folds = 3;
        cfg.selectors = vec![SelectorKind::Ours, SelectorKind::Random];
        let out = run_experiment(&cfg).unwrap();
        for label in ["ours", "random"] {
            for fold in 0..3 {
                assert!(out
                    .out_dir
                    .join(format!("epochs_{label}_{fold}.csv"))
                    .is_file());
            }
        }
        assert!(!out.out_dir.join("failures.csv").exists());

        let summary = std::fs::read_to_string(&out.summary_path).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(
            lines.len(),
            1 + 2 * (3 + 1),
            "3 fold rows + 1 mean row per selector"
        );

        // the mean row must equal a recomputation from its fold rows
        for label in ["ours", "random"] {
            let rows: Vec<Vec<&str>> = lines[1..]
                .iter()
                .filter(|l| l.starts_with(&format!("{label},")))
                .map(|l| l.split(',').collect())
                .collect();
            let folds: Vec<&Vec<&str>> = rows.iter().filter(|r| r[1] != "mean").collect();
            let mean_row = rows.iter().find(|r| r[1] == "mean").unwrap();
            assert_eq!(folds.len(), 3);
            for col in [3, 4] {
                let vals: Vec<f64> = folds.iter().map(|r| r[col].parse().unwrap()).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let reported: f64 = mean_row[col].parse().unwrap();
                assert!((mean - reported).abs() < 1e-12, "{label} col {col}");
            }
            assert!(mean_row[7].parse::<f64>().unwrap() >= 0.0);
        }
    }

    #[test]
    fn grid_expansion_labels_cells() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(&dir.path().join("grid"));
        cfg.folds = 2;
        cfg.epochs = 3;
        cfg.selectors = vec![SelectorKind::Ours];
        cfg.s0_grid = vec![2.0, 100.0];
        let cells = expand_cells(&cfg);
        assert_eq!(cells.len(), 2);
        assert_eq!(cells[0].label, "ours_s0-2");
        assert_eq!(cells[1].label, "ours_s0-100");

        let out = run_experiment(&cfg).unwrap();
        assert!(out.out_dir.join("epochs_ours_s0-2_0.csv").is_file());
        assert!(out.out_dir.join("epochs_ours_s0-100_1.csv").is_file());
        let summary = std::fs::read_to_string(&out.summary_path).unwrap();
        assert_eq!(summary.lines().count(), 1 + 2 * (2 + 1));
    }

    #[test]
    fn failed_cell_is_recorded_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(&dir.path().join("partial"));
        cfg.folds = 2;
        cfg.selectors = vec![SelectorKind::External, SelectorKind::Random];
        cfg.external_scores = Some(dir.path().join("missing.txt").display().to_string());
        let out = run_experiment(&cfg).unwrap();
        let failures = std::fs::read_to_string(out.out_dir.join("failures.csv")).unwrap();
        assert_eq!(failures.lines().count(), 1 + 2, "both external folds fail");
        assert!(failures.contains("external,0"), "{failures}");
        assert!(out.out_dir.join("epochs_random_0.csv").is_file());
        let summary = std::fs::read_to_string(&out.summary_path).unwrap();
        assert!(summary.lines().any(|l| l.starts_with("random,mean")));
        assert!(!summary.lines().any(|l| l.starts_with("external")));
    }

    #[test]
    fn jobs_do_not_change_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut one = tiny_cfg(&dir.path().join("serial"));
        one.folds = 2;
        one.selectors = vec![SelectorKind::Ours, SelectorKind::Random];
        let mut two = one.clone();
        two.out_dir = dir.path().join("parallel").display().to_string();
        two.jobs = 3;
        let a = run_experiment(&one).unwrap();
        let b = run_experiment(&two).unwrap();
        let read = |out: &ExperimentOutput, name: &str| {
            let text = std::fs::read_to_string(out.out_dir.join(name)).unwrap();
            text.lines()
                .map(|l| {
                    l.rsplit_once(',')
                        .map(|(head, _)| head.to_string())
                        .unwrap()
                })
                .collect::<Vec<_>>()
        };
        for name in ["epochs_ours_0.csv", "epochs_random_1.csv"] {
            assert_eq!(read(&a, name), read(&b, name), "{name}");
        }
        assert_eq!(
            std::fs::read_to_string(&a.summary_path).unwrap(),
            std::fs::read_to_string(&b.summary_path).unwrap()
        );
    }

    #[test]
    fn inspect_writes_requested_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(&dir.path().join("inspect"));
        cfg.selectors = vec![SelectorKind::Ours];
        cfg.dump = vec![
            DumpKind::Uncertainty,
            DumpKind::Correlation,
            DumpKind::Weights,
            DumpKind::Probabilities,
        ];
        cfg.corr_diff = Some((3, 4));
        let written = inspect(&cfg).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        for t in [3, 4] {
            for stem in ["U_epoch", "corr_epoch", "w_epoch", "P_epoch"] {
                assert!(names.contains(&format!("{stem}_{t}.csv")), "{names:?}");
            }
        }
        assert!(names.contains(&"corr_diff_3_4.csv".to_string()));

        let parse = |name: &str| -> Vec<Vec<f64>> {
            std::fs::read_to_string(written[0].parent().unwrap().join(name))
                .unwrap()
                .lines()
                .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
                .collect()
        };
        let c3 = parse("corr_epoch_3.csv");
        assert_eq!(c3.len(), 3);
        for (i, row) in c3.iter().enumerate() {
            assert_eq!(row[i], 1.0, "unit diagonal");
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, c3[j][i], "symmetry");
            }
        }
        for row in parse("U_epoch_4.csv") {
            for v in row {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        let (c4, diff) = (parse("corr_epoch_4.csv"), parse("corr_diff_3_4.csv"));
        for (i, row) in diff.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - (c4[i][j] - c3[i][j])).abs() < 1e-15);
            }
        }
        let p: Vec<f64> =
            std::fs::read_to_string(written[0].parent().unwrap().join("P_epoch_3.csv"))
                .unwrap()
                .lines()
                .map(|l| l.parse().unwrap())
                .collect();
        assert_eq!(p.len(), 30, "one probability per training instance");
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inspect_rejects_unsupported_dump() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(dir.path());
        cfg.selectors = vec![SelectorKind::Random];
        cfg.dump = vec![DumpKind::Uncertainty];
        assert!(inspect(&cfg).is_err());

        let mut cfg = tiny_cfg(dir.path());
        cfg.selectors = vec![SelectorKind::RecencyBias];
        cfg.dump = vec![DumpKind::Correlation];
        assert!(inspect(&cfg).is_err());
    }

    #[test]
    fn train_writes_epoch_log_and_params() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_cfg(&dir.path().join("train"));
        cfg.selectors = vec![SelectorKind::Ours];
        cfg.save_params = true;
        let out = run_training(&cfg).unwrap();
        assert!(out.epochs_csv.is_file());
        let text = std::fs::read_to_string(&out.epochs_csv).unwrap();
        assert_eq!(text.lines().next().unwrap(), EPOCH_CSV_HEADER);
        assert_eq!(text.lines().count(), 1 + cfg.epochs);
        let params_path = out.params_path.expect("save_params was set");
        let loaded = MlpParams::load(std::io::BufReader::new(
            std::fs::File::open(&params_path).unwrap(),
        ))
        .unwrap();
        assert_eq!(loaded.widths(), &[6, 8, 3]);
    }

    #[test]
    fn derive_seed_is_stable_and_separates_tags() {
        assert_eq!(derive_seed(7, "folds"), derive_seed(7, "folds"));
        assert_ne!(derive_seed(7, "folds"), derive_seed(7, "fold0"));
        assert_ne!(derive_seed(7, "folds"), derive_seed(8, "folds"));
    }

    #[test]
    fn load_dataset_handles_synth_and_files() {
        let ds = load_dataset("synth:default").unwrap();
        assert_eq!(ds.n(), 400);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiny.mll");
        data::write_mll(&ds, &path).unwrap();
        let back = load_dataset(&path.display().to_string()).unwrap();
        assert_eq!(back.features, ds.features);
        assert!(load_dataset("synth:bad=1").is_err());
        assert!(load_dataset("/nonexistent/file.mll").is_err());
    }
}
