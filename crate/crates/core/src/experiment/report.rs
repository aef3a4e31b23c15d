use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::study::{ResultTable, Study, TEST_ENV_CHANGE, TEST_OWN};
use crate::channel::Scenario;
use crate::error::{Error, Result};
use crate::signal::PayloadKind;

/// Ordering margin in accuracy units (2 percentage points).
pub const MARGIN: f64 = 0.02;
/// Allowed RandomBits/Noise gap (5 percentage points).
pub const NOISE_GAP: f64 = 0.05;

pub const SUMMARY_FILE: &str = "summary.md";

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub study: Study,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Claim {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!(
            "{verdict} {}: {} ({})",
            self.study.as_str(),
            self.name,
            self.detail
        )
    }
}

fn pts(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

fn missing(what: &str) -> Error {
    Error::Format {
        what: "result table",
        detail: format!("no rows for {what}"),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn signal_type_claims(t: &ResultTable) -> Result<Vec<Claim>> {
    let mut claims = Vec::new();
    for sc in [Scenario::Plain, Scenario::VaryingAmplitude] {
        let get = |p: PayloadKind| {
            t.mean(sc, TEST_OWN, p)
                .ok_or_else(|| missing(&format!("{} {}", sc.as_str(), p.as_str())))
        };
        let (s, r, n) = (
            get(PayloadKind::Static)?,
            get(PayloadKind::RandomBits)?,
            get(PayloadKind::Noise)?,
        );
        claims.push(Claim {
            study: Study::SignalType,
            name: format!("{}: Static >= RandomBits - 2 pts", sc.as_str()),
            passed: s >= r - MARGIN,
            detail: format!("Static {} vs RandomBits {}", pts(s), pts(r)),
        });
        claims.push(Claim {
            study: Study::SignalType,
            name: format!("{}: |RandomBits - Noise| <= 5 pts", sc.as_str()),
            passed: (r - n).abs() <= NOISE_GAP,
            detail: format!("RandomBits {} vs Noise {}", pts(r), pts(n)),
        });
    }
    Ok(claims)
}

/// Mean over replicates of (own - changed) accuracy.
pub fn env_drop(t: &ResultTable, sc: Scenario) -> Result<f64> {
    let own = t.values(sc, TEST_OWN, PayloadKind::Static);
    let changed = t.values(sc, TEST_ENV_CHANGE, PayloadKind::Static);
    if own.is_empty() || own.len() != changed.len() {
        return Err(missing(&format!("env-change {}", sc.as_str())));
    }
    Ok(mean(
        &own.iter()
            .zip(&changed)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    ))
}

pub fn env_change_claims(t: &ResultTable) -> Result<Vec<Claim>> {
    let p = env_drop(t, Scenario::Plain)?;
    let v = env_drop(t, Scenario::VaryingAmplitude)?;
    let r = env_drop(t, Scenario::Robot)?;
    Ok(vec![
        Claim {
            study: Study::EnvChange,
            name: "drop(Plain) > drop(VaryingAmplitude)".into(),
            passed: p > v,
            detail: format!("drops {} vs {}", pts(p), pts(v)),
        },
        Claim {
            study: Study::EnvChange,
            name: "drop(VaryingAmplitude) > drop(Robot) - 2 pts".into(),
            passed: v > r - MARGIN,
            detail: format!("drops {} vs {}", pts(v), pts(r)),
        },
    ])
}

/// Mean over replicates of the lowest accuracy on another scenario.
pub fn worst_cross(t: &ResultTable, train: Scenario) -> Result<f64> {
    let reps = t.replicates();
    let mut worst = Vec::with_capacity(reps);
    for rep in 0..reps {
        let w = t
            .rows
            .iter()
            .filter(|r| r.replicate == rep && r.train_scenario == train && r.test != train.as_str())
            .map(|r| r.accuracy)
            .fold(f64::INFINITY, f64::min);
        if w.is_infinite() {
            return Err(missing(&format!(
                "cross-scenario {} replicate {rep}",
                train.as_str()
            )));
        }
        worst.push(w);
    }
    if worst.is_empty() {
        return Err(missing("cross-scenario"));
    }
    Ok(mean(&worst))
}

pub fn cross_scenario_claims(t: &ResultTable) -> Result<Vec<Claim>> {
    let robot = worst_cross(t, Scenario::Robot)?;
    let plain = worst_cross(t, Scenario::Plain)?;
    Ok(vec![Claim {
        study: Study::CrossScenario,
        name: "worst cross-test(Robot) >= worst cross-test(Plain) + 2 pts".into(),
        passed: robot >= plain + MARGIN,
        detail: format!("Robot {} vs Plain {}", pts(robot), pts(plain)),
    }])
}

pub fn claims_for(t: &ResultTable) -> Result<Vec<Claim>> {
    match t.study {
        Study::SignalType => signal_type_claims(t),
        Study::EnvChange => env_change_claims(t),
        Study::CrossScenario => cross_scenario_claims(t),
    }
}

fn means_markdown(t: &ResultTable, out: &mut String) {
    let mut keys: Vec<(Scenario, String, PayloadKind)> = Vec::new();
    for r in &t.rows {
        let k = (r.train_scenario, r.test.clone(), r.payload_kind);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let _ = writeln!(
        out,
        "| train | test | payload | mean accuracy (%) | per replicate |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|");
    for (sc, test, p) in keys {
        let v = t.values(sc, &test, p);
        let each: Vec<String> = v.iter().map(|&a| pts(a)).collect();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            sc.as_str(),
            test,
            p.as_str(),
            pts(mean(&v)),
            each.join(" ")
        );
    }
}

/// Writes one CSV per table and `summary.md`; returns the claims checked.
pub fn emit_report(tables: &[ResultTable], dir: &Path) -> Result<Vec<Claim>> {
    let mut summary = String::from("# Study summary\n");
    let mut claims = Vec::new();
    for t in tables {
        t.write(dir)?;
        let _ = writeln!(summary, "\n## {}\n", t.study.as_str());
        means_markdown(t, &mut summary);
        let c = claims_for(t)?;
        summary.push('\n');
        for claim in &c {
            let _ = writeln!(summary, "- {}", claim.line());
        }
        claims.extend(c);
    }
    let failed = claims.iter().filter(|c| !c.passed).count();
    let _ = writeln!(summary, "\n{} claims, {} failed", claims.len(), failed);
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary).map_err(|e| Error::io(&path, e))?;
    Ok(claims)
}

/// Every study table found in `dir`.
pub fn load_tables(dir: &Path) -> Result<Vec<ResultTable>> {
    let mut tables = Vec::new();
    for study in Study::ALL {
        let path = dir.join(study.csv_name());
        if path.is_file() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            tables.push(ResultTable::from_csv(study, &text)?);
        }
    }
    Ok(tables)
}

/// Re-checks every table in `dir` and rewrites the summary.
pub fn report_dir(dir: &Path) -> Result<Vec<Claim>> {
    let tables = load_tables(dir)?;
    if tables.is_empty() {
        return Err(Error::invalid(format!(
            "no study tables in {}",
            dir.display()
        )));
    }
    emit_report(&tables, dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::study::ResultRow;

    fn row(rep: usize, train: Scenario, test: &str, p: PayloadKind, acc: f64) -> ResultRow {
        ResultRow {
            replicate: rep,
            train_scenario: train,
            test: test.into(),
            payload_kind: p,
            accuracy: acc,
            n_test: 100,
        }
    }

    fn cross(robot_worst: f64, plain_worst: f64) -> ResultTable {
        let mut rows = vec![];
        for train in Scenario::ALL {
            for test in Scenario::ALL {
                let acc = if train == test {
                    0.99
                } else if train == Scenario::Robot {
                    robot_worst
                } else if train == Scenario::Plain {
                    plain_worst
                } else {
                    0.9
                };
                rows.push(row(0, train, test.as_str(), PayloadKind::Static, acc));
            }
        }
        ResultTable {
            study: Study::CrossScenario,
            rows,
        }
    }

    #[test]
    fn cross_claim_uses_off_diagonal_minimum() {
        assert!(cross_scenario_claims(&cross(0.8, 0.7)).unwrap()[0].passed);
        assert!(!cross_scenario_claims(&cross(0.71, 0.7)).unwrap()[0].passed);
    }

    #[test]
    fn csv_round_trip_and_deterministic_summary() {
        let t = cross(0.8, 0.5);
        let back = ResultTable::from_csv(Study::CrossScenario, &t.to_csv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.to_csv().lines().count(), t.rows.len() + 1);
        let dir = tempfile::tempdir().unwrap();
        let c1 = emit_report(&[t.clone()], dir.path()).unwrap();
        let s1 = fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        let c2 = report_dir(dir.path()).unwrap();
        let s2 = fs::read(dir.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(s1, s2);
        let text = String::from_utf8(s1).unwrap();
        assert_eq!(
            text.lines()
                .filter(|l| l.contains("PASS ") || l.contains("FAIL "))
                .count(),
            1
        );
    }

    #[test]
    fn env_and_signal_claims() {
        let mut rows = vec![];
        for (sc, own, changed) in [
            (Scenario::Plain, 0.99, 0.6),
            (Scenario::VaryingAmplitude, 0.98, 0.8),
            (Scenario::Robot, 0.97, 0.95),
        ] {
            rows.push(row(0, sc, TEST_OWN, PayloadKind::Static, own));
            rows.push(row(0, sc, TEST_ENV_CHANGE, PayloadKind::Static, changed));
        }
        let t = ResultTable {
            study: Study::EnvChange,
            rows,
        };
        assert!(env_change_claims(&t).unwrap().iter().all(|c| c.passed));

        let mut rows = vec![];
        for sc in [Scenario::Plain, Scenario::VaryingAmplitude] {
            for (p, acc) in [
                (PayloadKind::Static, 0.95),
                (PayloadKind::RandomBits, 0.96),
                (PayloadKind::Noise, 0.90),
            ] {
                rows.push(row(0, sc, TEST_OWN, p, acc));
            }
        }
        let t = ResultTable {
            study: Study::SignalType,
            rows,
        };
        let c = signal_type_claims(&t).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c[0].passed && !c[1].passed);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(ResultTable::from_csv(Study::SignalType, "nope\n").is_err());
        let bad = "replicate,train_scenario,test,payload_kind,accuracy,n_test\n0,Plain,own,Static,1.5,10\n";
        assert!(ResultTable::from_csv(Study::SignalType, bad).is_err());
    }
}
