//! Tiny grid run (two methods, two prevalences, two folds) rendered into
//! the report tables.

use disbench::bench::{render_tables, run_experiment, ExperimentConfig};
use disbench::trainer::Architecture;

fn main() -> disbench::Result<()> {
    let mut cfg = ExperimentConfig {
        methods: vec!["erm".parse()?, "rebal".parse()?],
        folds: 2,
        architecture: Architecture::Mlp,
        ..Default::default()
    };
    cfg.dataset.train_count = 800;
    cfg.dataset.heldout_count = 800;
    cfg.dataset.test_count = 200;
    cfg.dataset.noise = 0.6;
    cfg.train.max_epochs = 4;

    let records = run_experiment(&cfg, &[0.85, 0.95], 1, None)?;
    let tables = render_tables(&records)?;
    println!("{}\n{}\n{}", tables.auroc, tables.confusion, tables.dominance_time);
    Ok(())
}
