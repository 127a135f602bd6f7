//! Latent-split classifier (encoder + two linear heads), the training
//! objectives and the fit loop with validation-based model selection.
//!
//! Objectives:
//!
//! - **ERM**: `½(CE₁ + CE₂)` with `z₁ → y₁` and `z₂ → y₂`.
//! - **Dependence-penalised** (dCor, MMD, MINE): ERM plus `λ·D(z₁, z₂)`.
//! - **Adversarial** (shared latent): head 2 learns `y₂` from `z` while the
//!   encoder receives its gradient through a gradient reversal layer.
//!
//! Each may be combined with contingency rebalancing of the training set.

mod checkpoint;
mod estimator;
mod fit;
mod loss;
mod model;
mod objectives;
mod optim;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use estimator::{fit_estimator, EstimatorLog, EstimatorSchedule};
pub use fit::{fit, EarlyStopping, EpochRecord, FitError, FitResult, History};
pub use loss::{cross_entropy, cross_entropy_with_grad};
pub use model::{Architecture, Batch, Encoder, EncoderCache, EncoderConfig, ForwardPass, ModelState};
pub use objectives::{
    gradient_check,
    adversarial_step, classification_loss, disent_loss, estimator_step, grl_backward, grl_forward, objective_value,
    objective_with_grad, split_latent, train_step, ObjectiveEval, PenaltyContext,
};
pub use optim::AdamW;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dependence::{KernelSpec, Measure};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Erm,
    AdvCl,
    Dcor,
    Mmd,
    Mine,
}

impl Objective {
    pub fn measure(self) -> Option<Measure> {
        match self {
            Objective::Dcor => Some(Measure::Dcor),
            Objective::Mmd => Some(Measure::Mmd),
            Objective::Mine => Some(Measure::Mine),
            Objective::Erm | Objective::AdvCl => None,
        }
    }

    pub fn uses_mine(self) -> bool {
        self == Objective::Mine
    }

    /// Weight used when a config does not set one. These are desk-scale
    /// starting points, not tuned values.
    pub fn default_lambda(self) -> f64 {
        match self {
            Objective::Erm => 0.0,
            Objective::AdvCl | Objective::Dcor | Objective::Mmd => 1.0,
            Objective::Mine => 0.1,
        }
    }

    fn stem(self) -> &'static str {
        match self {
            Objective::Erm => "erm",
            Objective::AdvCl => "advcl",
            Objective::Dcor => "dcor",
            Objective::Mmd => "mmd",
            Objective::Mine => "mine",
        }
    }
}

/// Objective plus optional rebalancing. Plain ERM with rebalancing is
/// called `rebal`; everything else appends `+rebal`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Method {
    pub objective: Objective,
    pub rebalance: bool,
}

impl Method {
    pub const fn new(objective: Objective, rebalance: bool) -> Self {
        Self { objective, rebalance }
    }

    pub const ERM: Method = Method::new(Objective::Erm, false);

    pub fn all() -> Vec<Method> {
        [Objective::Erm, Objective::AdvCl, Objective::Dcor, Objective::Mine, Objective::Mmd]
            .into_iter()
            .flat_map(|o| [Method::new(o, false), Method::new(o, true)])
            .collect()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.objective, self.rebalance) {
            (Objective::Erm, true) => f.write_str("rebal"),
            (o, false) => f.write_str(o.stem()),
            (o, true) => write!(f, "{}+rebal", o.stem()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "rebal" {
            return Ok(Method::new(Objective::Erm, true));
        }
        let (stem, rebalance) = match s.strip_suffix("+rebal") {
            Some(stem) => (stem, true),
            None => (s.as_str(), false),
        };
        let objective = match stem {
            "erm" => Objective::Erm,
            "advcl" => Objective::AdvCl,
            "dcor" => Objective::Dcor,
            "mmd" => Objective::Mmd,
            "mine" => Objective::Mine,
            other => return Err(Error::InvalidInput(format!("unknown method `{other}`"))),
        };
        Ok(Method::new(objective, rebalance))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: Method,
    /// Dependence-penalty or adversary weight.
    pub lambda: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    /// MINE cycle length `N_B`: one encoder update, then `N_B − 1`
    /// estimator-only updates.
    pub mine_steps: usize,
    pub mine_hidden: usize,
    pub mine_ema: bool,
    pub mmd_cross_unbiased: bool,
    pub kernel: KernelSpec,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::ERM,
            lambda: 0.0,
            batch_size: 128,
            lr: 1e-3,
            weight_decay: 1e-5,
            max_epochs: 30,
            patience: 10,
            mine_steps: 5,
            mine_hidden: 64,
            mine_ema: false,
            mmd_cross_unbiased: false,
            kernel: KernelSpec::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn for_method(method: Method) -> Self {
        Self {
            method,
            lambda: method.objective.default_lambda(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be a finite value >= 0, got {}", self.lambda)));
        }
        if self.patience < 1 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        if self.mine_steps < 1 {
            return Err(Error::config("mine_steps", "must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("batch_size", "must be at least 2"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        Ok(())
    }

    /// The encoder layout this method trains: adversarial training reads one
    /// shared latent with both heads.
    pub fn encoder_for(&self, base: &EncoderConfig) -> EncoderConfig {
        EncoderConfig {
            shared: self.method.objective == Objective::AdvCl,
            ..base.clone()
        }
    }
}
