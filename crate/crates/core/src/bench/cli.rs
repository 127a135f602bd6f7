//! Command-line front end: `gen-data`, `train`, `eval`, `sweep`, `report`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};

use super::config::{load_config, to_ini_string, ExperimentConfig};
use super::data::{build_dataset, dataset_dir, load_or_build, write_dataset};
use super::report::{sweep_delta, write_tables};
use super::run::{checkpoint_dir, eval_cell, read_records_dir, records_path, run_cell, run_experiment, write_records};
use crate::error::{Error, Result};
use crate::evalkit::scatter_export;
use crate::trainer::{load_checkpoint, Method};

/// Environment variable that overrides `--out`.
pub const OUT_ENV: &str = "DISBENCH_OUT";

#[derive(Debug, Parser)]
#[command(name = "disbench", version, about = "Shortcut-mitigation benchmark on confounded toy images")]
pub struct Cli {
    /// INI config file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory (`DISBENCH_OUT` takes precedence).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Folds trained concurrently.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Materialise datasets and fold assignments for every prevalence in the grid.
    GenData,
    /// Train all folds of one method at one prevalence and save checkpoints.
    Train(CellArgs),
    /// Evaluate saved checkpoints and write the run record.
    Eval(CellArgs),
    /// Train and evaluate the full method × prevalence grid.
    Sweep,
    /// Render tables, scatter plots and a JSON summary from run records.
    Report,
}

#[derive(Debug, clap::Args)]
pub struct CellArgs {
    /// Method name, e.g. `erm` or `dcor+rebal`; defaults to the first configured method.
    #[arg(long)]
    pub method: Option<Method>,
    /// Training diagonal mass; defaults to `experiment.prevalence`.
    #[arg(long)]
    pub prevalence: Option<f64>,
}

struct Context {
    cfg: ExperimentConfig,
    out: PathBuf,
    jobs: usize,
}

fn context(cli: &Cli) -> Result<Context> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = std::env::var_os(OUT_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| cli.out.clone())
        .unwrap_or_else(|| cfg.out.clone());
    cfg.out = out.clone();
    if cli.jobs == 0 {
        return Err(Error::config("jobs", "must be at least 1"));
    }
    Ok(Context { cfg, out, jobs: cli.jobs })
}

fn cell(ctx: &Context, args: &CellArgs) -> Result<(Method, f64)> {
    let method = args.method.unwrap_or(ctx.cfg.methods[0]);
    let p = args.prevalence.unwrap_or(ctx.cfg.prevalence);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config("prevalence", format!("{p} is outside (0, 1)")));
    }
    Ok((method, p))
}

fn gen_data(ctx: &Context) -> Result<()> {
    for &p in &ctx.cfg.prevalence_grid {
        let dir = dataset_dir(&ctx.out, p);
        write_dataset(&dir, &build_dataset(&ctx.cfg, p)?)?;
        println!("{}", dir.display());
    }
    fs::write(ctx.out.join("config.ini"), to_ini_string(&ctx.cfg))?;
    Ok(())
}

fn train(ctx: &Context, args: &CellArgs) -> Result<()> {
    let (method, p) = cell(ctx, args)?;
    let data = load_or_build(&ctx.cfg, &ctx.out, p)?;
    let rec = run_cell(&ctx.cfg, &data, method, ctx.jobs, Some(&ctx.out))?;
    if let Some(e) = &rec.error {
        return Err(Error::NumericalError(e.clone()));
    }
    for f in &rec.folds {
        println!("fold {}: {} epochs (best {}), val AUROC {:.1}", f.fold, f.epochs, f.best_epoch, f.val_auroc);
    }
    Ok(())
}

fn eval(ctx: &Context, args: &CellArgs) -> Result<()> {
    let (method, p) = cell(ctx, args)?;
    let data = load_or_build(&ctx.cfg, &ctx.out, p)?;
    let rec = eval_cell(&ctx.cfg, &data, method, &ctx.out)?;
    let path = records_path(&ctx.out, &rec);
    write_records(&path, std::slice::from_ref(&rec))?;
    let report = ctx.out.join("reports").join(format!("{}.json", rec.stem()));
    fs::create_dir_all(report.parent().unwrap())?;
    fs::write(&report, serde_json::to_string_pretty(&rec)?)?;
    println!("{}", report.display());
    match &rec.error {
        Some(e) => Err(Error::InvalidInput(e.clone())),
        None => Ok(()),
    }
}

fn sweep(ctx: &Context) -> Result<()> {
    let records = run_experiment(&ctx.cfg, &ctx.cfg.prevalence_grid, ctx.jobs, Some(&ctx.out))?;
    let delta = sweep_delta(&records, Method::ERM)?;
    fs::write(ctx.out.join("sweep_delta.csv"), &delta)?;
    print!("{delta}");
    Ok(())
}

/// First existing fold-0 checkpoint for a cell, from `train` or `sweep`.
fn find_checkpoint(out: &Path, method: Method, p: f64) -> Option<PathBuf> {
    [checkpoint_dir(out, method, p, 0), checkpoint_dir(&out.join("sweep"), method, p, 0)]
        .into_iter()
        .find(|d| d.join("meta.json").exists())
}

fn report(ctx: &Context) -> Result<()> {
    let records = read_records_dir(&ctx.out.join("records"))?;
    let dir = ctx.out.join("report");
    let tables = write_tables(&dir, &records)?;
    print!("{}", tables.auroc);
    for rec in &records {
        let Some(ckpt) = find_checkpoint(&ctx.out, rec.method, rec.prevalence) else {
            continue;
        };
        let (state, _) = load_checkpoint(&ckpt)?;
        if state.config.shared {
            continue;
        }
        let data = load_or_build(&ctx.cfg, &ctx.out, rec.prevalence)?;
        let balanced = &data.tests[&crate::confounds::TestKind::Balanced];
        let z = state.embed(balanced)?;
        let d1 = state.config.split.0;
        if d1 != 2 {
            warn!("{}: z1 has {d1} dimensions, skipping scatter", rec.stem());
            continue;
        }
        let y2: Vec<u8> = balanced.iter().map(|s| s.y2).collect();
        let (_, svg) = scatter_export(z.slice(ndarray::s![.., ..2]), &y2, &dir.join(format!("scatter_{}", rec.stem())))?;
        info!("wrote {}", svg.display());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    let ctx = context(cli)?;
    fs::create_dir_all(&ctx.out)?;
    match &cli.command {
        Command::GenData => gen_data(&ctx),
        Command::Train(a) => train(&ctx, a),
        Command::Eval(a) => eval(&ctx, a),
        Command::Sweep => sweep(&ctx),
        Command::Report => report(&ctx),
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for
/// usage errors, 1 for configuration and runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
