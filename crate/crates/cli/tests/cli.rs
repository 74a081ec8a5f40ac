//! End-to-end checks of the compiled binary: subcommand behaviour, flag
//! overrides, output files, and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn ubatch(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ubatch"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    let base = "dataset = synth:n=60,d=8,q=4,seed=3\n\
                selectors = ours\n\
                batch_size = 8\n\
                epochs = 6\n\
                warmup = 2\n\
                window = 2\n\
                folds = 3\n\
                hidden = 8\n\
                s0 = 20\n";
    std::fs::write(&path, format!("{base}{extra}")).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn validate_config_echoes_resolved_settings() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = ubatch(&["validate-config", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("config ok"), "{text}");
    assert!(text.contains("selectors = ours"), "{text}");
    assert!(text.contains("s0 = 20"), "{text}");
}

#[test]
fn flags_override_config_file_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "seed = 4\n");
    let out = ubatch(
        &[
            "validate-config",
            "--config",
            &cfg,
            "--selector",
            "random,balance",
            "--seed",
            "99",
            "--jobs",
            "2",
            "--out",
            "elsewhere",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("selectors = random,balance"), "{text}");
    assert!(text.contains("seed = 99"), "{text}");
    assert!(text.contains("jobs = 2"), "{text}");
    assert!(text.contains("out_dir = elsewhere"), "{text}");
}

#[test]
fn train_writes_one_epoch_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("logs");
    let out = ubatch(
        &[
            "train",
            "--config",
            &cfg,
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("best epoch"), "{}", stdout(&out));
    let log = std::fs::read_to_string(out_dir.join("epochs_ours_0.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,selector,fold,train_loss,val_macro_auc,val_ranking_loss,\
         val_hamming_loss,pressure,wall_secs"
    );
    assert_eq!(lines.count(), 6, "one row per epoch");
}

#[test]
fn experiment_writes_summary_for_each_selector() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("exp");
    let out = ubatch(
        &[
            "experiment",
            "--config",
            &cfg,
            "--selector",
            "ours,random",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    for needle in ["ours,mean", "random,mean"] {
        assert!(
            summary.contains(needle),
            "summary missing {needle}:\n{summary}"
        );
    }
    for f in 0..3 {
        assert!(out_dir.join(format!("epochs_ours_{f}.csv")).exists());
        assert!(out_dir.join(format!("epochs_random_{f}.csv")).exists());
    }
}

#[test]
fn inspect_dumps_selective_epoch_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("snaps");
    let out = ubatch(
        &[
            "inspect",
            "--config",
            &cfg,
            "--dump",
            "U,C",
            "--out",
            out_dir.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    // selective epochs are 3..=6 with warmup = 2
    for t in 3..=6 {
        assert!(
            out_dir.join(format!("U_epoch_{t}.csv")).exists(),
            "epoch {t}"
        );
        assert!(
            out_dir.join(format!("corr_epoch_{t}.csv")).exists(),
            "epoch {t}"
        );
    }
    assert!(
        !out_dir.join("w_epoch_3.csv").exists(),
        "w was not requested"
    );
}

#[test]
fn semantic_config_problems_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    // the random selector has no uncertainty matrix to dump
    let out = ubatch(
        &[
            "inspect",
            "--config",
            &cfg,
            "--selector",
            "random",
            "--dump",
            "U",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));

    let out = ubatch(
        &["train", "--config", &cfg, "--selector", "bogus"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(
        stderr(&out).contains("unknown selector"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn file_problems_exit_3_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let out = ubatch(&["train", "--config", "absent.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "dataset = synth:default\nfrobnicate = 1\n").unwrap();
    let out = ubatch(
        &["validate-config", "--config", bad.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("bad.cfg:2"), "{}", stderr(&out));

    let cfg = write_config(dir.path(), "dataset = nosuch.mll\n");
    let out = ubatch(&["train", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn rerunning_train_reproduces_the_log_except_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let strip_wall = |text: &str| {
        text.lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_owned())
            .collect::<Vec<_>>()
            .join("\n")
    };
    let mut logs = Vec::new();
    for round in 0..2 {
        let out_dir = dir.path().join(format!("round{round}"));
        let out = ubatch(
            &[
                "train",
                "--config",
                &cfg,
                "--seed",
                "11",
                "--out",
                out_dir.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let text = std::fs::read_to_string(out_dir.join("epochs_ours_0.csv")).unwrap();
        logs.push(strip_wall(&text));
    }
    assert_eq!(logs[0], logs[1]);
}
