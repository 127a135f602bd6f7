//! Experiment orchestration, configuration, persistence formats and report
//! rendering.

pub mod cli;
mod config;
mod data;
mod report;
mod run;
mod tensor;

pub use config::{load_config, parse_config, to_ini_string, ConfoundKind, DatasetConfig, ExperimentConfig};
pub use data::{build_dataset, dataset_dir, load_or_build, read_dataset, write_dataset, Dataset, HELDOUT_GROUP_OFFSET};
pub use report::{has_dominance, render_tables, round_half_away, summary_json, sweep_delta, write_tables, Tables};
pub use run::{
    cell_stem, checkpoint_dir, eval_cell, evaluate_fold, read_records, read_records_dir, records_path, run_cell, run_experiment, train_fold,
    write_records, FoldModel, RunRecord, RunStatus,
};
pub use tensor::{Tensor, TensorData};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the compact JSON form of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serialises");
    hex::encode(Sha256::digest(&json))
}
