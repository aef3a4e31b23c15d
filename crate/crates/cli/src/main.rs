use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use txid_core::dataset::{read_dataset, Split, SplitPart};
use txid_core::experiment::{
    claims_for, report_dir, run_generation, run_study, split_for, train_config, Claim,
    ExperimentConfig, Study,
};
use txid_core::nn::{
    evaluate, history_csv, read_checkpoint, train_with, write_checkpoint, Checkpoint,
};

/// Header failures allowed per scheduled packet.
const MAX_HEADER_FAILURE_RATE: f64 = 1e-3;

#[derive(Parser)]
#[command(
    name = "txid",
    version,
    about = "Simulated RF transmitter fingerprinting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or reuse) the dataset a config describes.
    Generate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a network on a dataset directory.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Supplies architecture, training recipe and split seed.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Supplies the split seed when scoring the test part.
        #[arg(long)]
        config: Option<PathBuf>,
        /// `test` scores the held-out split, `all` the whole dataset.
        #[arg(long, value_enum, default_value_t = Part::Test)]
        part: Part,
    },
    /// Run one of the studies and check its ordering claims.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-check every study table in a directory.
    Report { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Part {
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    SignalType,
    EnvChange,
    CrossScenario,
}

impl From<StudyKind> for Study {
    fn from(k: StudyKind) -> Self {
        match k {
            StudyKind::SignalType => Study::SignalType,
            StudyKind::EnvChange => Study::EnvChange,
            StudyKind::CrossScenario => Study::CrossScenario,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display()))
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn print_claims(claims: &[Claim]) -> bool {
    for c in claims {
        println!("{}", c.line());
    }
    claims.iter().all(|c| c.passed)
}

fn verdict(passed: bool, what: &str) -> String {
    format!("{} {what}", if passed { "PASS" } else { "FAIL" })
}

fn run(cli: Cli) -> Result<bool> {
    let mut log = |msg: &str| eprintln!("{msg}");
    match cli.command {
        Command::Generate { config } => {
            let cfg = load_config(Some(&config))?;
            let report = run_generation(&cfg)?;
            let s = report.stats;
            println!("dataset {}", report.dir.display());
            if report.cached {
                println!("(cached)");
            }
            println!("counts {:?}", report.manifest.counts);
            println!(
                "scheduled {} decoded {} header_failed {} no_frame {} mismatched {}",
                s.scheduled, s.decoded, s.header_failed, s.no_frame, s.mismatched
            );
            let ok_ids = s.mismatched == 0;
            let ok_rate = s.header_failure_rate() < MAX_HEADER_FAILURE_RATE;
            println!("{}", verdict(ok_ids, "receiver: no decoded-id mismatches"));
            println!(
                "{}",
                verdict(
                    ok_rate,
                    &format!(
                        "receiver: header-failure rate {:.4}% < 0.1%",
                        100.0 * s.header_failure_rate()
                    )
                )
            );
            Ok(ok_ids && ok_rate)
        }
        Command::Train {
            dataset,
            out,
            config,
        } => {
            let cfg = load_config(config.as_deref())?;
            let ds = read_dataset(&dataset)?;
            let arch = cfg.arch.build(ds.n_classes());
            let tc = train_config(&cfg);
            let split = split_for(&cfg, &ds);
            let (params, history) = train_with(&ds, &split, &arch, &tc, |r| {
                log(&format!(
                    "epoch {} loss {:.4} val_acc {:.4}",
                    r.epoch, r.train_loss, r.val_acc
                ))
            })?;
            write_checkpoint(
                &out,
                &Checkpoint {
                    params,
                    normalize: tc.normalize,
                },
            )?;
            let hist = out.with_extension("history.csv");
            std::fs::write(&hist, history_csv(&history))
                .with_context(|| format!("writing {}", hist.display()))?;
            println!("checkpoint {}", out.display());
            println!("history {}", hist.display());
            Ok(true)
        }
        Command::Evaluate {
            ckpt,
            dataset,
            config,
            part,
        } => {
            let cfg = load_config(config.as_deref())?;
            let model = read_checkpoint(&ckpt)?;
            let ds = read_dataset(&dataset)?;
            let split = match part {
                Part::Test => split_for(&cfg, &ds),
                Part::All => Split::all_test(ds.len()),
            };
            let ev = evaluate(&model.params, &ds, &split, SplitPart::Test, model.normalize)?;
            println!("accuracy {:.6} over {} examples", ev.accuracy, ev.total());
            println!("confusion (rows = true emitter):");
            for row in &ev.confusion {
                let cells: Vec<String> = row.iter().map(|c| format!("{c:6}")).collect();
                println!("{}", cells.join(" "));
            }
            Ok(true)
        }
        Command::Study { kind, config } => {
            let cfg = load_config(Some(&config))?;
            let table = run_study(kind.into(), &cfg, &mut log)?;
            table.write(&cfg.out_dir)?;
            report_dir(&cfg.out_dir)?;
            let claims = claims_for(&table)?;
            println!(
                "table {}",
                cfg.out_dir.join(table.study.csv_name()).display()
            );
            Ok(print_claims(&claims))
        }
        Command::Report { dir } => {
            if !dir.is_dir() {
                bail!("{} is not a directory", dir.display());
            }
            let claims = report_dir(&dir)?;
            Ok(print_claims(&claims))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
