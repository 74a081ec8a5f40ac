//! Command-line front end for the training engine.
//!
//! A run is described by a flat `key = value` config file; the flags below
//! override individual keys.  Exit codes distinguish configuration
//! problems (2), data loading problems (3), and numeric failures (4).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ubatch_core::config::ExperimentConfig;
use ubatch_core::harness;
use ubatch_core::Error;

#[derive(Parser)]
#[command(
    name = "ubatch",
    version,
    about = "Multi-label training with uncertainty-guided mini-batch selection"
)]
struct Cli {
    /// Config file with key = value lines; flags override its keys
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Master seed behind fold assignment, weight init, and batch draws
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for CSV outputs
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<String>,

    /// Comma-separated selectors: ours, random, balance, active, recency,
    /// external
    #[arg(long, global = true, value_name = "LIST")]
    selector: Option<String>,

    /// Worker slots for experiment cells
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Per-epoch snapshots for inspect, any of U, C, w, P
    #[arg(long, global = true, value_name = "LIST")]
    dump: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the first configured selector on one fold, logging every epoch
    Train,
    /// Run every selector and grid point across all folds and summarize
    Experiment,
    /// Re-run one fold, dumping selector internals per selective epoch
    Inspect,
    /// Parse the config, check it, and print the resolved settings
    ValidateConfig,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Some(list) = &cli.selector {
        cfg.set("selectors", list)?;
    }
    if let Some(jobs) = cli.jobs {
        cfg.jobs = jobs;
    }
    if let Some(list) = &cli.dump {
        cfg.set("dump", list)?;
    }
    Ok(cfg)
}

fn print_resolved(cfg: &ExperimentConfig) {
    let selectors: Vec<&str> = cfg.selectors.iter().map(|s| s.name()).collect();
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    println!("dataset = {}", cfg.dataset);
    println!("selectors = {}", selectors.join(","));
    println!("batch_size = {}", cfg.batch_size);
    println!("epochs = {}", cfg.epochs);
    println!("warmup = {}", cfg.warmup);
    println!("window = {}", cfg.window);
    println!("lambda1 = {}", cfg.lambda1);
    println!("s0 = {}", cfg.s0);
    println!("tau = {}", cfg.tau);
    println!("hidden = {}", join(&cfg.hidden));
    println!("learning_rate = {}", cfg.learning_rate);
    println!("weight_decay = {}", cfg.weight_decay);
    println!("beta1 = {}", cfg.beta1);
    println!("beta2 = {}", cfg.beta2);
    println!("folds = {}", cfg.folds);
    if let Some(fold) = cfg.fold {
        println!("fold = {fold}");
    }
    println!("seed = {}", cfg.seed);
    println!("out_dir = {}", cfg.out_dir);
    println!("jobs = {}", cfg.jobs);
    if cfg.refresh_full_epoch {
        println!("refresh_full_epoch = true");
    }
    if cfg.identity_c {
        println!("identity_c = true");
    }
    if !cfg.dump.is_empty() {
        let codes: Vec<&str> = cfg.dump.iter().map(|d| d.code()).collect();
        println!("dump = {}", codes.join(","));
    }
    if let Some((a, b)) = cfg.corr_diff {
        println!("corr_diff = {a},{b}");
    }
    if !cfg.s0_grid.is_empty() {
        let vals: Vec<String> = cfg.s0_grid.iter().map(f64::to_string).collect();
        println!("s0_grid = {}", vals.join(","));
    }
    if !cfg.window_grid.is_empty() {
        println!("window_grid = {}", join(&cfg.window_grid));
    }
    if !cfg.lambda1_grid.is_empty() {
        let vals: Vec<String> = cfg.lambda1_grid.iter().map(f64::to_string).collect();
        println!("lambda1_grid = {}", vals.join(","));
    }
    if let Some(path) = &cfg.external_scores {
        println!("external_scores = {path}");
    }
    if let Some(t) = cfg.pressure_start {
        println!("pressure_start = {t}");
    }
    if let Some(t) = cfg.pressure_end {
        println!("pressure_end = {t}");
    }
    if cfg.save_params {
        println!("save_params = true");
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = build_config(cli)?;
    match cli.command {
        Command::Train => {
            let out = harness::run_training(&cfg)?;
            let fold = &out.outcome;
            println!(
                "fold {}: best epoch {} (validation macro-auc {:.6})",
                out.fold, fold.best_epoch, fold.best_val_macro_auc
            );
            println!(
                "test: macro-auc {:.6}, ranking loss {:.6}, hamming loss {:.6}",
                fold.test.macro_auc, fold.test.ranking_loss, fold.test.hamming_loss
            );
            println!("epoch log: {}", out.epochs_csv.display());
            if let Some(path) = &out.params_path {
                println!("parameters: {}", path.display());
            }
        }
        Command::Experiment => {
            let out = harness::run_experiment(&cfg)?;
            let mut failed = 0usize;
            for cell in &out.runs {
                match &cell.outcome {
                    Ok(fold) => println!(
                        "{} fold {}: best epoch {}, validation macro-auc {:.6}, \
                         test macro-auc {:.6}",
                        cell.label,
                        cell.fold,
                        fold.best_epoch,
                        fold.best_val_macro_auc,
                        fold.test.macro_auc
                    ),
                    Err(reason) => {
                        failed += 1;
                        println!("{} fold {}: failed: {reason}", cell.label, cell.fold);
                    }
                }
            }
            println!("summary: {}", out.summary_path.display());
            if failed > 0 {
                println!(
                    "{failed} of {} cells failed; details in failures.csv",
                    out.runs.len()
                );
            }
        }
        Command::Inspect => {
            let files = harness::inspect(&cfg)?;
            for path in &files {
                println!("{}", path.display());
            }
            log::info!("wrote {} snapshot files", files.len());
        }
        Command::ValidateConfig => {
            cfg.validate()?;
            println!("config ok");
            print_resolved(&cfg);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
