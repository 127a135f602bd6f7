use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::config_hash;
use super::data::{load_or_build, Dataset};
use crate::confounds::{rebalance_oversample, LabeledImage, TestKind};
use crate::error::{Error, Result};
use crate::evalkit::{evaluate_model, mean_sd, primary_auroc, EvalReport};
use crate::trainer::{fit, load_checkpoint, save_checkpoint, History, Method, ModelState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// All folds of one method at one prevalence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub method: Method,
    pub prevalence: f64,
    pub lambda: f64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub folds: Vec<EvalReport>,
    pub started_unix: f64,
    pub finished_unix: f64,
}

impl RunRecord {
    /// Fold mean and sample standard deviation of AUROC (percent).
    pub fn auroc(&self, kind: TestKind) -> (f64, f64) {
        let v: Vec<f64> = self.folds.iter().filter_map(|f| f.auroc.get(kind.name()).copied()).collect();
        mean_sd(&v)
    }

    /// Fold-mean dominance; `None` when undefined for this layout.
    pub fn dominance(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.folds.iter().map(|f| f.dominance).collect();
        v.filter(|v| !v.is_empty()).map(|v| mean_sd(&v).0)
    }

    /// Mean training wall time per fold, in minutes.
    pub fn minutes(&self) -> f64 {
        mean_sd(&self.folds.iter().map(|f| f.train_seconds / 60.0).collect::<Vec<_>>()).0
    }

    pub fn mean_epochs(&self) -> f64 {
        mean_sd(&self.folds.iter().map(|f| f.epochs as f64).collect::<Vec<_>>()).0
    }

    pub fn confusion_entry(&self, name: &str) -> Option<f64> {
        let v: Option<Vec<f64>> = self.folds.iter().map(|f| f.confusion.get(name)).collect();
        v.filter(|v| !v.is_empty()).map(|v| mean_sd(&v).0)
    }

    /// File stem used for this cell's outputs, e.g. `dcor+rebal_p0.95`.
    pub fn stem(&self) -> String {
        cell_stem(self.method, self.prevalence)
    }
}

pub fn cell_stem(method: Method, p: f64) -> String {
    format!("{method}_p{p}")
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn cell_hash(cfg: &ExperimentConfig, method: Method, p: f64) -> String {
    let mut c = cfg.clone();
    c.out = PathBuf::new();
    config_hash(&(&c, method.to_string(), p))
}

/// Where a fold's checkpoint lives under an output directory.
pub fn checkpoint_dir(out: &Path, method: Method, p: f64, fold: usize) -> PathBuf {
    out.join("checkpoints").join(cell_stem(method, p)).join(format!("fold{fold}"))
}

/// Trained model for one fold plus what evaluation needs.
pub struct FoldModel {
    pub fold: usize,
    pub state: ModelState,
    pub history: History,
}

/// Trains one fold: grouped split, optional oversampling of the training
/// part, early stopping on the validation part.
pub fn train_fold(cfg: &ExperimentConfig, data: &Dataset, method: Method, fold: usize) -> Result<FoldModel> {
    let tc = cfg.train_config(method, fold);
    let (train, val) = data.fold(fold);
    let train = if method.rebalance { rebalance_oversample(&train, tc.seed)? } else { train };
    let state = ModelState::new(cfg.encoder_config(method), &tc)?;
    info!("{method} p={} fold {fold}: {} train / {} val", data.prevalence, train.len(), val.len());
    let res = fit(state, &train, &val, &tc).map_err(|e| e.error)?;
    Ok(FoldModel {
        fold,
        state: res.state,
        history: res.history,
    })
}

/// Evaluates a trained fold on the three test distributions. The kNN
/// reference set is the fold's training part before any oversampling.
pub fn evaluate_fold(cfg: &ExperimentConfig, data: &Dataset, model: &FoldModel) -> Result<EvalReport> {
    let (reference, val): (Vec<LabeledImage>, Vec<LabeledImage>) = data.fold(model.fold);
    let (auroc, confusion, dominance) = evaluate_model(&model.state, &reference, &data.tests, cfg.k_nn)?;
    Ok(EvalReport {
        fold: model.fold,
        auroc,
        confusion,
        dominance,
        epochs: model.history.epochs.len(),
        best_epoch: model.history.best_epoch,
        val_auroc: primary_auroc(&model.state, &val)?,
        train_seconds: model.history.seconds,
    })
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
}

fn finish(cfg: &ExperimentConfig, method: Method, p: f64, started: f64, outcomes: Vec<Result<EvalReport>>) -> RunRecord {
    let mut folds = Vec::new();
    let mut errors = Vec::new();
    for (fold, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => folds.push(r),
            Err(e) => {
                error!("{method} p={p} fold {fold} failed: {e}");
                errors.push(format!("fold {fold}: {e}"));
            }
        }
    }
    RunRecord {
        config_hash: cell_hash(cfg, method, p),
        method,
        prevalence: p,
        lambda: cfg.lambda_for(method),
        status: if errors.is_empty() { RunStatus::Ok } else { RunStatus::Failed },
        error: (!errors.is_empty()).then(|| errors.join("; ")),
        folds,
        started_unix: started,
        finished_unix: unix_now(),
    }
}

/// Trains and evaluates all folds of one grid cell, `jobs` folds at a time.
/// With `out`, each fold's checkpoint and history are saved.
pub fn run_cell(cfg: &ExperimentConfig, data: &Dataset, method: Method, jobs: usize, out: Option<&Path>) -> Result<RunRecord> {
    let started = unix_now();
    let outcomes: Vec<Result<EvalReport>> = pool(jobs)?.install(|| {
        (0..cfg.folds)
            .into_par_iter()
            .map(|fold| {
                let model = train_fold(cfg, data, method, fold)?;
                if let Some(out) = out {
                    let dir = checkpoint_dir(out, method, data.prevalence, fold);
                    let best_val = model.history.best().map_or(f64::NAN, |e| e.val_loss);
                    save_checkpoint(&dir, &model.state, &cfg.train_config(method, fold), best_val)?;
                    fs::write(dir.join("history.json"), serde_json::to_string_pretty(&model.history)?)?;
                }
                evaluate_fold(cfg, data, &model)
            })
            .collect()
    });
    Ok(finish(cfg, method, data.prevalence, started, outcomes))
}

/// Evaluates saved checkpoints of one grid cell.
pub fn eval_cell(cfg: &ExperimentConfig, data: &Dataset, method: Method, out: &Path) -> Result<RunRecord> {
    let started = unix_now();
    let outcomes = (0..cfg.folds)
        .map(|fold| {
            let dir = checkpoint_dir(out, method, data.prevalence, fold);
            let (state, _) = load_checkpoint(&dir)?;
            let history: History = serde_json::from_str(&fs::read_to_string(dir.join("history.json"))?)?;
            evaluate_fold(cfg, data, &FoldModel { fold, state, history })
        })
        .collect();
    Ok(finish(cfg, method, data.prevalence, started, outcomes))
}

/// Every method at every prevalence in `grid`. Fold failures mark the
/// record failed without stopping the grid.
pub fn run_experiment(cfg: &ExperimentConfig, grid: &[f64], jobs: usize, out: Option<&Path>) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &p in grid {
        let data = match out {
            Some(o) => load_or_build(cfg, o, p)?,
            None => super::data::build_dataset(cfg, p)?,
        };
        for &method in &cfg.methods {
            let t = Instant::now();
            let rec = run_cell(cfg, &data, method, jobs, out.map(|o| o.join("sweep")).as_deref())?;
            info!(
                "{method} p={p}: inverted {:.1} balanced {:.1} ({:.0}s)",
                rec.auroc(TestKind::Inverted).0,
                rec.auroc(TestKind::Balanced).0,
                t.elapsed().as_secs_f64()
            );
            if let Some(o) = out {
                write_records(&records_path(o, &rec), std::slice::from_ref(&rec))?;
            }
            records.push(rec);
        }
    }
    Ok(records)
}

pub fn records_path(out: &Path, rec: &RunRecord) -> PathBuf {
    out.join("records").join(format!("{}.jsonl", rec.stem()))
}

/// Writes records as JSON lines, replacing the file.
pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut f = fs::File::create(path)?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// All `*.jsonl` files in `dir`, in file-name order.
pub fn read_records_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut files: Vec<PathBuf> = match fs::read_dir(dir) {
        Ok(rd) => rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "jsonl")).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_records(&f)?);
    }
    Ok(out)
}
