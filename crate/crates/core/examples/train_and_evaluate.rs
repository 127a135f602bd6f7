//! Trains ERM and dcor+rebal on one fold of a small confounded dataset and
//! prints the AUROC on each test distribution plus the latent confusion
//! matrix.
//!
//!     cargo run --release --example train_and_evaluate

use disbench::bench::{build_dataset, evaluate_fold, train_fold, ExperimentConfig};
use disbench::trainer::{Architecture, Method, Objective};

fn main() -> disbench::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = ExperimentConfig {
        architecture: Architecture::Mlp,
        ..Default::default()
    };
    cfg.dataset.train_count = 2000;
    cfg.dataset.noise = 0.6;
    cfg.train.max_epochs = 8;
    // the default dcor weight of 1 stalls a model this small
    cfg.lambdas.insert(Objective::Dcor, 0.1);
    let data = build_dataset(&cfg, 0.95)?;

    for method in ["erm", "dcor+rebal"] {
        let method: Method = method.parse()?;
        let model = train_fold(&cfg, &data, method, 0)?;
        let report = evaluate_fold(&cfg, &data, &model)?;
        println!("{method}: best epoch {} of {}", report.best_epoch, report.epochs);
        for (split, v) in &report.auroc {
            println!("  auroc {split:<9} {v:.1}");
        }
        for (name, v) in report.confusion.entries() {
            println!("  knn {name:<6} {v:.1}");
        }
    }
    Ok(())
}
