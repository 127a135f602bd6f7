use std::collections::BTreeSet;
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Batch, ModelState};
use super::objectives::{dataset_loss, estimator_step, train_step, PenaltyContext};
use super::TrainConfig;
use crate::confounds::LabeledImage;
use crate::error::{Error, Result};
use crate::evalkit::primary_auroc;
use crate::nn::Params;

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Records one epoch's validation loss; true if it is a new best.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> bool {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean objective over the epoch's encoder updates.
    pub train_loss: f64,
    pub val_loss: f64,
    /// Primary-task validation AUROC, percent; `None` if a class is missing.
    pub val_auroc: Option<f64>,
    /// Mean dependence measure over the epoch's encoder updates.
    pub dependence: Option<f64>,
    pub skipped_penalties: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch of the returned snapshot (1-based; 0 if none completed).
    pub best_epoch: usize,
    pub encoder_updates: usize,
    pub estimator_updates: usize,
    pub truncated_cycles: usize,
    pub stopped_early: bool,
    pub seconds: f64,
}

impl History {
    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

#[derive(Debug)]
pub struct FitResult {
    pub state: ModelState,
    pub history: History,
}

/// A failed fit: the cause, the best snapshot so far and the partial history.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct FitError {
    pub error: Error,
    pub last_good: Box<ModelState>,
    pub history: History,
}

fn check_disjoint(train: &[LabeledImage], val: &[LabeledImage]) -> Result<()> {
    let groups: BTreeSet<u64> = train.iter().map(|s| s.group).collect();
    if let Some(s) = val.iter().find(|s| groups.contains(&s.group)) {
        return Err(Error::InvalidInput(format!("group {} appears in both training and validation data", s.group)));
    }
    Ok(())
}

/// Trains with early stopping on validation classification loss and returns
/// the snapshot with the lowest validation loss.
pub fn fit(state: ModelState, train: &[LabeledImage], val: &[LabeledImage], cfg: &TrainConfig) -> std::result::Result<FitResult, FitError> {
    fit_with(state, train, val, cfg, &mut |s, _| dataset_loss(s, val))
}

pub(crate) fn fit_with(
    mut state: ModelState,
    train: &[LabeledImage],
    val: &[LabeledImage],
    cfg: &TrainConfig,
    val_loss: &mut dyn FnMut(&ModelState, usize) -> Result<f64>,
) -> std::result::Result<FitResult, FitError> {
    let start = Instant::now();
    let mut history = History::default();
    let fail = |error: Error, last_good: ModelState, history: History| FitError {
        error,
        last_good: Box::new(last_good),
        history,
    };
    if let Err(e) = cfg.validate().and_then(|_| check_disjoint(train, val)) {
        return Err(fail(e, state, history));
    }
    if train.len() < 2 || val.is_empty() {
        return Err(fail(Error::InvalidInput("need at least 2 training and 1 validation sample".into()), state, history));
    }

    let mine = cfg.method.objective.uses_mine();
    let cycle = if mine { cfg.mine_steps } else { 1 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let base_ctx = PenaltyContext::from_config(cfg);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = state.clone();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let epoch_start = Instant::now();
        order.shuffle(&mut rng);
        let batches: Vec<&[usize]> = order.chunks(cfg.batch_size).filter(|b| b.len() >= 2).collect();
        let (mut loss_sum, mut dep_sum, mut dep_count, mut steps, mut skipped) = (0.0, 0.0, 0usize, 0usize, 0usize);

        for (b, idx) in batches.iter().enumerate() {
            let batch = Batch::gather(train, idx);
            let ctx = if mine { base_ctx.clone().with_random_perm(batch.n, &mut rng) } else { base_ctx.clone() };
            if b % cycle != 0 {
                if let Err(e) = estimator_step(&mut state, &batch, &ctx) {
                    return Err(fail(e, best, history));
                }
                continue;
            }
            match train_step(&mut state, &batch, cfg, &ctx) {
                Ok(eval) => {
                    loss_sum += eval.value;
                    steps += 1;
                    skipped += usize::from(eval.skipped);
                    if let Some(d) = eval.dependence {
                        dep_sum += d;
                        dep_count += 1;
                    }
                }
                Err(e) => return Err(fail(e, best, history)),
            }
        }
        if mine && batches.len() % cycle != 0 {
            history.truncated_cycles += 1;
            debug!("epoch {epoch}: MINE cycle truncated after {} of {cycle} batches", batches.len() % cycle);
        }
        if skipped > 0 {
            warn!("epoch {epoch}: dependence penalty skipped on {skipped} degenerate batches");
        }
        if !state.all_finite() {
            return Err(fail(Error::NumericalError("non-finite parameters".into()), best, history));
        }
        state.epoch = epoch;

        let vl = match val_loss(&state, epoch) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => return Err(fail(Error::NumericalError(format!("validation loss {v} at epoch {epoch}")), best, history)),
            Err(e) => return Err(fail(e, best, history)),
        };
        let record = EpochRecord {
            epoch,
            train_loss: if steps > 0 { loss_sum / steps as f64 } else { f64::NAN },
            val_loss: vl,
            val_auroc: primary_auroc(&state, val).ok(),
            dependence: (dep_count > 0).then(|| dep_sum / dep_count as f64),
            skipped_penalties: skipped,
            seconds: epoch_start.elapsed().as_secs_f64(),
        };
        info!("epoch {epoch}: train {:.4} val {:.4}", record.train_loss, vl);
        history.epochs.push(record);
        history.encoder_updates = state.encoder_updates;
        history.estimator_updates = state.estimator_updates;
        if stopper.observe(epoch, vl) {
            best = state.clone();
            history.best_epoch = epoch;
        }
        if stopper.should_stop() {
            history.stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    history.seconds = start.elapsed().as_secs_f64();
    Ok(FitResult { state: best, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confounds::generate_toy;
    use crate::trainer::{Architecture, EncoderConfig, Method, Objective};

    fn small_cfg(method: Method) -> TrainConfig {
        TrainConfig {
            batch_size: 32,
            max_epochs: 3,
            lr: 3e-3,
            ..TrainConfig::for_method(method)
        }
    }

    fn small_model(cfg: &TrainConfig) -> ModelState {
        let enc = cfg.encoder_for(&EncoderConfig::default());
        ModelState::new(enc, cfg).unwrap()
    }

    #[test]
    fn early_stopping_rule() {
        let mut s = EarlyStopping::new(2);
        assert!(s.observe(1, 1.0));
        assert!(!s.observe(2, 1.0));
        assert!(!s.should_stop());
        assert!(s.observe(3, 0.5));
        assert!(!s.observe(4, 0.6));
        assert!(!s.observe(5, 0.7));
        assert!(s.should_stop());
        assert_eq!(s.best_epoch, 3);
    }

    #[test]
    fn patience_one_with_rising_loss_returns_first_epoch() {
        let data = generate_toy(120, 1);
        let (train, val) = data.split_at(80);
        let cfg = TrainConfig { patience: 1, max_epochs: 10, ..small_cfg(Method::ERM) };
        let mut snapshots = Vec::new();
        let res = fit_with(small_model(&cfg), train, val, &cfg, &mut |s, e| {
            snapshots.push(s.to_flat());
            Ok(e as f64)
        })
        .unwrap();
        assert_eq!(res.history.epochs.len(), 2);
        assert_eq!(res.history.best_epoch, 1);
        assert_eq!(res.state.epoch, 1);
        assert_eq!(res.state.to_flat(), snapshots[0]);
    }

    #[test]
    fn overlapping_groups_are_rejected() {
        let data = generate_toy(40, 1);
        let cfg = small_cfg(Method::ERM);
        let err = fit(small_model(&cfg), &data[..30], &data[20..], &cfg).unwrap_err();
        assert!(matches!(err.error, Error::InvalidInput(_)));
    }

    #[test]
    fn mine_schedule_counts() {
        // 100 batches of 2 per epoch.
        let data = generate_toy(220, 3);
        let (train, val) = data.split_at(200);
        for (nb, enc, est) in [(5, 20, 80), (1, 100, 0), (3, 34, 66)] {
            let cfg = TrainConfig {
                batch_size: 2,
                max_epochs: 1,
                mine_steps: nb,
                ..small_cfg(Method::new(Objective::Mine, false))
            };
            let res = fit(small_model(&cfg), train, val, &cfg).unwrap();
            assert_eq!((res.history.encoder_updates, res.history.estimator_updates), (enc, est), "N_B={nb}");
            assert_eq!(res.history.truncated_cycles, usize::from(100 % nb != 0));
        }
    }

    #[test]
    fn deterministic_history() {
        let data = generate_toy(200, 2);
        let (train, val) = data.split_at(150);
        for m in ["erm", "dcor", "mine", "advcl"] {
            let cfg = small_cfg(m.parse().unwrap());
            let a = fit(small_model(&cfg), train, val, &cfg).unwrap();
            let b = fit(small_model(&cfg), train, val, &cfg).unwrap();
            assert_eq!(a.state.to_flat(), b.state.to_flat(), "{m}");
            for (x, y) in a.history.epochs.iter().zip(&b.history.epochs) {
                assert_eq!((x.train_loss, x.val_loss, x.dependence), (y.train_loss, y.val_loss, y.dependence));
            }
        }
    }

    #[test]
    fn returned_snapshot_has_minimal_val_loss() {
        let data = generate_toy(240, 5);
        let (train, val) = data.split_at(160);
        let cfg = TrainConfig { max_epochs: 6, ..small_cfg("dcor".parse().unwrap()) };
        let res = fit(small_model(&cfg), train, val, &cfg).unwrap();
        let best = dataset_loss(&res.state, val).unwrap();
        for e in &res.history.epochs {
            assert!(best <= e.val_loss + 1e-12);
        }
        assert_eq!(best, res.history.best().unwrap().val_loss);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        // Both labels are clearly drawn; a balanced set is linearly separable
        // in pixel space, so the MLP encoder must fit it.
        let data = generate_toy(600, 11);
        let (train, val) = data.split_at(480);
        let cfg = TrainConfig {
            max_epochs: 50,
            lr: 3e-3,
            batch_size: 32,
            ..TrainConfig::for_method(Method::ERM)
        };
        let enc = EncoderConfig {
            architecture: Architecture::Mlp,
            ..EncoderConfig::default()
        };
        let res = fit(ModelState::new(enc, &cfg).unwrap(), train, val, &cfg).unwrap();
        let best = res.history.best().unwrap().val_loss;
        assert!(best < 0.05, "val loss {best}");
    }
}
