use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::generate::run_generation;
use crate::channel::Scenario;
use crate::dataset::{read_dataset, split_shuffle, Dataset, Split, SplitPart};
use crate::error::{Error, Result};
use crate::nn::{
    evaluate, history_csv, read_checkpoint, train_with, write_checkpoint, Checkpoint, TrainConfig,
};
use crate::signal::PayloadKind;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

/// Progress sink for long runs.
pub type Log<'a> = &'a mut dyn FnMut(&str);

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dir: PathBuf,
    pub checkpoint: Checkpoint,
    pub cached: bool,
}

/// Training recipe of `cfg` with the split/init seed taken from its seeds.
pub fn train_config(cfg: &ExperimentConfig) -> TrainConfig {
    TrainConfig {
        seed: cfg.seeds.train,
        ..cfg.train.clone()
    }
}

pub fn split_for(cfg: &ExperimentConfig, ds: &Dataset) -> Split {
    split_shuffle(ds, cfg.seeds.train)
}

/// Generates the dataset if needed and trains on it (or loads the cached
/// checkpoint).
pub fn train_model(cfg: &ExperimentConfig, log: Log<'_>) -> Result<TrainedModel> {
    let dir = cfg.model_dir();
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    if ckpt_path.is_file() {
        return Ok(TrainedModel {
            checkpoint: read_checkpoint(&ckpt_path)?,
            dir,
            cached: true,
        });
    }
    let gen = run_generation(cfg)?;
    let ds = read_dataset(&gen.dir)?;
    let split = split_for(cfg, &ds);
    let tc = train_config(cfg);
    let arch = cfg.architecture();
    let label = format!("{} {}", cfg.scenario.as_str(), cfg.payload_kind.as_str());
    let (params, history) = train_with(&ds, &split, &arch, &tc, |r| {
        log(&format!(
            "  {label}: epoch {} loss {:.4} val_acc {:.4}",
            r.epoch, r.train_loss, r.val_acc
        ))
    })?;
    let checkpoint = Checkpoint {
        params,
        normalize: tc.normalize,
    };
    let tmp = dir.with_extension("partial");
    fs::create_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
    write_checkpoint(&tmp.join(CHECKPOINT_FILE), &checkpoint)?;
    let hist = tmp.join(HISTORY_FILE);
    fs::write(&hist, history_csv(&history)).map_err(|e| Error::io(&hist, e))?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::rename(&tmp, &dir).map_err(|e| Error::io(&dir, e))?;
    Ok(TrainedModel {
        dir,
        checkpoint,
        cached: false,
    })
}

pub fn evaluate_on(
    model: &Checkpoint,
    ds: &Dataset,
    split: &Split,
    part: SplitPart,
) -> Result<(f64, usize)> {
    let ev = evaluate(&model.params, ds, split, part, model.normalize)?;
    Ok((ev.accuracy, ev.total() as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Study {
    SignalType,
    EnvChange,
    CrossScenario,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::SignalType, Study::EnvChange, Study::CrossScenario];

    pub fn as_str(self) -> &'static str {
        match self {
            Study::SignalType => "signal-type",
            Study::EnvChange => "env-change",
            Study::CrossScenario => "cross-scenario",
        }
    }

    pub fn csv_name(self) -> &'static str {
        match self {
            Study::SignalType => "signal_type.csv",
            Study::EnvChange => "env_change.csv",
            Study::CrossScenario => "cross_scenario.csv",
        }
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown study {s:?}")))
    }
}

pub const TEST_OWN: &str = "own";
pub const TEST_ENV_CHANGE: &str = "env-change";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub replicate: usize,
    pub train_scenario: Scenario,
    /// `own`, `env-change` or the test scenario's name.
    pub test: String,
    pub payload_kind: PayloadKind,
    pub accuracy: f64,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub study: Study,
    pub rows: Vec<ResultRow>,
}

const CSV_HEADER: &str = "replicate,train_scenario,test,payload_kind,accuracy,n_test";

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{}\n",
                r.replicate,
                r.train_scenario.as_str(),
                r.test,
                r.payload_kind.as_str(),
                r.accuracy,
                r.n_test
            ));
        }
        out
    }

    pub fn from_csv(study: Study, text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "result table",
            detail,
        };
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad(format!("line {}: expected 6 fields", i + 2)));
            }
            let num = |s: &str| bad(format!("line {}: bad number {s:?}", i + 2));
            rows.push(ResultRow {
                replicate: f[0].parse().map_err(|_| num(f[0]))?,
                train_scenario: f[1].parse()?,
                test: f[2].to_string(),
                payload_kind: f[3].parse()?,
                accuracy: f[4].parse().map_err(|_| num(f[4]))?,
                n_test: f[5].parse().map_err(|_| num(f[5]))?,
            });
        }
        let table = Self { study, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.rows {
            if !(0.0..=1.0).contains(&r.accuracy) || r.n_test == 0 {
                return Err(Error::Format {
                    what: "result table",
                    detail: format!("row {r:?} out of range"),
                });
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(self.study.csv_name());
        fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Accuracies of matching rows, in replicate order.
    pub fn values(&self, train: Scenario, test: &str, payload: PayloadKind) -> Vec<f64> {
        let mut rows: Vec<&ResultRow> = self
            .rows
            .iter()
            .filter(|r| r.train_scenario == train && r.test == test && r.payload_kind == payload)
            .collect();
        rows.sort_by_key(|r| r.replicate);
        rows.iter().map(|r| r.accuracy).collect()
    }

    pub fn mean(&self, train: Scenario, test: &str, payload: PayloadKind) -> Option<f64> {
        let v = self.values(train, test, payload);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn replicates(&self) -> usize {
        self.rows.iter().map(|r| r.replicate + 1).max().unwrap_or(0)
    }
}

fn cell(
    base: &ExperimentConfig,
    r: usize,
    scenario: Scenario,
    payload: PayloadKind,
) -> ExperimentConfig {
    ExperimentConfig {
        scenario,
        payload_kind: payload,
        env_change: false,
        seeds: base.seeds.replicate(r),
        ..base.clone()
    }
}

/// Trains on `cfg` and scores its own test split.
fn own_accuracy(cfg: &ExperimentConfig, log: Log<'_>) -> Result<(Checkpoint, f64, usize)> {
    let model = train_model(cfg, log)?;
    let ds = read_dataset(&cfg.dataset_dir())?;
    let (acc, n) = evaluate_on(
        &model.checkpoint,
        &ds,
        &split_for(cfg, &ds),
        SplitPart::Test,
    )?;
    Ok((model.checkpoint, acc, n))
}

/// Payload kind x {Plain, VaryingAmplitude}, each scored on its own test split.
pub fn run_signal_type_study(base: &ExperimentConfig, log: Log<'_>) -> Result<ResultTable> {
    base.validate()?;
    let mut rows = Vec::new();
    for r in 0..base.replicates {
        for scenario in [Scenario::Plain, Scenario::VaryingAmplitude] {
            for payload in PayloadKind::ALL {
                let cfg = cell(base, r, scenario, payload);
                log(&format!(
                    "signal-type replicate {r}: {} {}",
                    scenario.as_str(),
                    payload.as_str()
                ));
                let (_, accuracy, n_test) = own_accuracy(&cfg, log)?;
                rows.push(ResultRow {
                    replicate: r,
                    train_scenario: scenario,
                    test: TEST_OWN.into(),
                    payload_kind: payload,
                    accuracy,
                    n_test,
                });
            }
        }
    }
    Ok(ResultTable {
        study: Study::SignalType,
        rows,
    })
}

/// Static payload; each scenario is scored on its own test split and on a
/// full dataset recorded after the room changed.
pub fn run_env_change_study(base: &ExperimentConfig, log: Log<'_>) -> Result<ResultTable> {
    base.validate()?;
    let mut rows = Vec::new();
    for r in 0..base.replicates {
        for scenario in Scenario::ALL {
            let cfg = cell(base, r, scenario, PayloadKind::Static);
            log(&format!("env-change replicate {r}: {}", scenario.as_str()));
            let (model, accuracy, n_test) = own_accuracy(&cfg, log)?;
            let changed_cfg = ExperimentConfig {
                env_change: true,
                ..cfg.clone()
            };
            let gen = run_generation(&changed_cfg)?;
            let changed = read_dataset(&gen.dir)?;
            let (acc_changed, n_changed) = evaluate_on(
                &model,
                &changed,
                &Split::all_test(changed.len()),
                SplitPart::Test,
            )?;
            for (test, accuracy, n_test) in [
                (TEST_OWN, accuracy, n_test),
                (TEST_ENV_CHANGE, acc_changed, n_changed),
            ] {
                rows.push(ResultRow {
                    replicate: r,
                    train_scenario: scenario,
                    test: test.into(),
                    payload_kind: PayloadKind::Static,
                    accuracy,
                    n_test,
                });
            }
        }
    }
    Ok(ResultTable {
        study: Study::EnvChange,
        rows,
    })
}

/// Static payload, 3 x 3 train/test scenario matrix over one shared set of
/// emitters and one room.
pub fn run_cross_scenario_study(base: &ExperimentConfig, log: Log<'_>) -> Result<ResultTable> {
    base.validate()?;
    let mut rows = Vec::new();
    for r in 0..base.replicates {
        let mut tests = Vec::new();
        for scenario in Scenario::ALL {
            let cfg = cell(base, r, scenario, PayloadKind::Static);
            run_generation(&cfg)?;
            let ds = read_dataset(&cfg.dataset_dir())?;
            let split = split_for(&cfg, &ds);
            tests.push((scenario, ds, split));
        }
        for train in Scenario::ALL {
            let cfg = cell(base, r, train, PayloadKind::Static);
            log(&format!(
                "cross-scenario replicate {r}: train {}",
                train.as_str()
            ));
            let model = train_model(&cfg, log)?.checkpoint;
            for (test, ds, split) in &tests {
                let (accuracy, n_test) = evaluate_on(&model, ds, split, SplitPart::Test)?;
                rows.push(ResultRow {
                    replicate: r,
                    train_scenario: train,
                    test: test.as_str().into(),
                    payload_kind: PayloadKind::Static,
                    accuracy,
                    n_test,
                });
            }
        }
    }
    Ok(ResultTable {
        study: Study::CrossScenario,
        rows,
    })
}

pub fn run_study(study: Study, base: &ExperimentConfig, log: Log<'_>) -> Result<ResultTable> {
    match study {
        Study::SignalType => run_signal_type_study(base, log),
        Study::EnvChange => run_env_change_study(base, log),
        Study::CrossScenario => run_cross_scenario_study(base, log),
    }
}
