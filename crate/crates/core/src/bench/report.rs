use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::run::{RunRecord, RunStatus};
use crate::confounds::TestKind;
use crate::error::{Error, Result};
use crate::trainer::{Method, Objective};

/// Rounds half away from zero to an integer.
pub fn round_half_away(v: f64) -> i64 {
    v.round() as i64
}

fn pm(mean: f64, sd: f64) -> String {
    if mean.is_nan() {
        return "n/a".into();
    }
    format!("{}±{}", round_half_away(mean), round_half_away(sd))
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or(String::new(), |v| format!("{v:.digits$}"))
}

/// Rendered CSV tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Tables {
    /// Rows are method × prevalence; cells are `mean±sd` AUROC percent.
    pub auroc: String,
    /// Fold-mean kNN subspace-label accuracies on the balanced split.
    pub confusion: String,
    /// Dominance against mean training minutes per fold. Shared-latent
    /// methods are left out: their dominance is undefined.
    pub dominance_time: String,
}

pub fn render_tables(records: &[RunRecord]) -> Result<Tables> {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| !r.folds.is_empty()).collect();
    if ok.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut auroc = String::from("method,prevalence,original,balanced,inverted,status\n");
    let mut confusion = String::from("method,prevalence,z1_y1,z1_y2,z2_y1,z2_y2,z_y1,z_y2\n");
    let mut dominance_time = String::from("method,prevalence,dominance,minutes,epochs\n");
    for r in ok {
        let status = match r.status {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        };
        let cells: Vec<String> = TestKind::ALL.iter().map(|&k| {
            let (m, s) = r.auroc(k);
            pm(m, s)
        }).collect();
        writeln!(auroc, "{},{},{},{status}", r.method, r.prevalence, cells.join(",")).unwrap();
        let entries: Vec<String> = ["z1_y1", "z1_y2", "z2_y1", "z2_y2", "z_y1", "z_y2"].iter().map(|n| opt(r.confusion_entry(n), 1)).collect();
        writeln!(confusion, "{},{},{}", r.method, r.prevalence, entries.join(",")).unwrap();
        if let Some(d) = r.dominance() {
            writeln!(dominance_time, "{},{},{d:.4},{:.4},{:.1}", r.method, r.prevalence, r.minutes(), r.mean_epochs()).unwrap();
        }
    }
    Ok(Tables {
        auroc,
        confusion,
        dominance_time,
    })
}

/// ΔAUROC (percentage points, fold means) of every method against
/// `baseline` at the same prevalence.
pub fn sweep_delta(records: &[RunRecord], baseline: Method) -> Result<String> {
    if records.is_empty() {
        return Err(Error::EmptyReport);
    }
    let mut out = String::from("method,prevalence,delta_original,delta_balanced,delta_inverted\n");
    for r in records {
        let Some(base) = records.iter().find(|b| b.method == baseline && b.prevalence == r.prevalence) else {
            continue;
        };
        let d: Vec<String> = TestKind::ALL.iter().map(|&k| format!("{:.2}", r.auroc(k).0 - base.auroc(k).0)).collect();
        writeln!(out, "{},{},{}", r.method, r.prevalence, d.join(",")).unwrap();
    }
    Ok(out)
}

/// Per-record aggregates as pretty JSON.
pub fn summary_json(records: &[RunRecord]) -> Result<String> {
    let rows: Vec<_> = records
        .iter()
        .map(|r| {
            let auroc: serde_json::Map<String, serde_json::Value> = TestKind::ALL
                .iter()
                .map(|&k| {
                    let (m, s) = r.auroc(k);
                    (k.name().to_string(), json!({ "mean": m, "sd": s }))
                })
                .collect();
            json!({
                "method": r.method.to_string(),
                "prevalence": r.prevalence,
                "status": r.status,
                "folds": r.folds.len(),
                "auroc": auroc,
                "dominance": r.dominance(),
                "minutes": r.minutes(),
                "epochs": r.mean_epochs(),
            })
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)?)
}

/// Writes `auroc.csv`, `confusion.csv`, `dominance_time.csv` and
/// `summary.json` into `dir`.
pub fn write_tables(dir: &Path, records: &[RunRecord]) -> Result<Tables> {
    let t = render_tables(records)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("auroc.csv"), &t.auroc)?;
    fs::write(dir.join("confusion.csv"), &t.confusion)?;
    fs::write(dir.join("dominance_time.csv"), &t.dominance_time)?;
    fs::write(dir.join("summary.json"), summary_json(records)?)?;
    Ok(t)
}

/// True when a method has a defined dominance score.
pub fn has_dominance(method: Method) -> bool {
    method.objective != Objective::AdvCl
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evalkit::{diagonal_dominance, ConfusionMatrix, EvalReport};
    use std::collections::BTreeMap;

    pub(crate) fn record(method: &str, p: f64, folds: &[(f64, f64, f64)]) -> RunRecord {
        let method: Method = method.parse().unwrap();
        let folds = folds
            .iter()
            .enumerate()
            .map(|(i, &(o, b, inv))| {
                let auroc: BTreeMap<String, f64> = [("original", o), ("balanced", b), ("inverted", inv)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
                let confusion = if method.objective == Objective::AdvCl {
                    ConfusionMatrix::Shared { z_y1: 90.0, z_y2: 80.0 }
                } else {
                    ConfusionMatrix::from_grid([[90.0 + i as f64, 60.0], [55.0, 95.0]])
                };
                EvalReport {
                    fold: i,
                    auroc,
                    dominance: diagonal_dominance(&confusion).ok(),
                    confusion,
                    epochs: 10 + i,
                    best_epoch: 5,
                    val_auroc: 90.0,
                    train_seconds: 30.0,
                }
            })
            .collect();
        RunRecord {
            config_hash: "x".into(),
            method,
            prevalence: p,
            lambda: 1.0,
            status: RunStatus::Ok,
            error: None,
            folds,
            started_unix: 0.0,
            finished_unix: 1.0,
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(render_tables(&[]), Err(Error::EmptyReport)));
    }

    #[test]
    fn single_record_single_row() {
        let t = render_tables(&[record("erm", 0.95, &[(99.0, 80.0, 60.0)])]).unwrap();
        assert_eq!(t.auroc.lines().count(), 2);
        assert_eq!(t.auroc.lines().nth(1).unwrap(), "erm,0.95,99±0,80±0,60±0,ok");
        assert_eq!(t.dominance_time.lines().count(), 2);
    }

    #[test]
    fn cells_round_half_away_from_zero() {
        assert_eq!(round_half_away(84.5), 85);
        assert_eq!(round_half_away(-0.5), -1);
        assert_eq!(round_half_away(84.49), 84);
        // folds 84 and 85: mean 84.5, sd √0.5 ≈ 0.71
        let t = render_tables(&[record("dcor+rebal", 0.7, &[(84.0, 84.0, 84.0), (85.0, 85.0, 85.0)])]).unwrap();
        assert_eq!(t.auroc.lines().nth(1).unwrap(), "dcor+rebal,0.7,85±1,85±1,85±1,ok");
    }

    #[test]
    fn dominance_column_matches_recomputation() {
        let recs = [record("erm", 0.95, &[(1.0, 1.0, 1.0); 3]), record("advcl", 0.95, &[(1.0, 1.0, 1.0); 3])];
        let t = render_tables(&recs).unwrap();
        let rows: Vec<&str> = t.dominance_time.lines().skip(1).collect();
        assert_eq!(rows.len(), 1, "shared-latent rows are omitted");
        let d: f64 = rows[0].split(',').nth(2).unwrap().parse().unwrap();
        let expect: f64 = (0..3).map(|i| diagonal_dominance(&ConfusionMatrix::from_grid([[90.0 + i as f64, 60.0], [55.0, 95.0]])).unwrap()).sum::<f64>() / 3.0;
        assert!((d - expect).abs() < 1e-4 && (0.0..=1.0).contains(&d));
        assert!(!has_dominance("advcl+rebal".parse().unwrap()));
    }

    #[test]
    fn baseline_delta_is_zero() {
        let recs = [record("erm", 0.7, &[(90.0, 80.0, 70.0)]), record("dcor", 0.7, &[(91.0, 85.0, 80.0)]), record("erm", 0.98, &[(95.0, 75.0, 55.0)])];
        let csv = sweep_delta(&recs, Method::ERM).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "erm,0.7,0.00,0.00,0.00");
        assert_eq!(lines[2], "dcor,0.7,1.00,5.00,10.00");
        assert_eq!(lines[3], "erm,0.98,0.00,0.00,0.00");
    }
}
