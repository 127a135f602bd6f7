use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{EncoderConfig, ModelState};
use super::TrainConfig;
use crate::bench::{config_hash, Tensor};
use crate::error::{Error, Result};
use crate::nn::Params;

/// JSON sidecar written next to the parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_hash: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    /// Parameter tensor names in load order.
    pub tensors: Vec<String>,
}

fn file_name(tensor: &str) -> String {
    format!("{tensor}.dten")
}

fn visit_all(state: &ModelState, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
    state.visit(f);
    if let Some(m) = &state.mine {
        m.visit(f);
    }
}

/// Writes one `DTEN` file (f32) per parameter tensor plus `meta.json`.
/// Optimizer moments are not saved.
pub fn save_checkpoint(dir: &Path, state: &ModelState, train: &TrainConfig, val_loss: f64) -> Result<CheckpointMeta> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    let mut result = Ok(());
    visit_all(state, &mut |name, shape, data| {
        if result.is_err() {
            return;
        }
        let t = Tensor::f32(shape.to_vec(), data.iter().map(|&v| v as f32).collect());
        result = t.and_then(|t| t.write(&dir.join(file_name(name))));
        names.push(name.to_string());
    });
    result?;
    let meta = CheckpointMeta {
        config_hash: config_hash(&(&state.config, train)),
        epoch: state.epoch,
        val_loss,
        encoder: state.config.clone(),
        train: train.clone(),
        tensors: names,
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(meta)
}

/// Rebuilds a model from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelState, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    if config_hash(&(&meta.encoder, &meta.train)) != meta.config_hash {
        return Err(Error::Format("checkpoint config hash does not match its config".into()));
    }
    let mut state = ModelState::new(meta.encoder.clone(), &meta.train)?;
    state.epoch = meta.epoch;
    let mut result = Ok(());
    let mut load = |name: &str, data: &mut [f64]| {
        if result.is_err() {
            return;
        }
        result = Tensor::read(&dir.join(file_name(name))).and_then(|t| {
            let v = t.as_f32().ok_or_else(|| Error::Format(format!("{name}: expected f32 tensor")))?;
            if v.len() != data.len() {
                return Err(Error::ShapeMismatch(format!("{name}: {} values, model has {}", v.len(), data.len())));
            }
            data.iter_mut().zip(v).for_each(|(d, &s)| *d = s as f64);
            Ok(())
        });
    };
    state.visit_mut(&mut load);
    if let Some(m) = state.mine.as_mut() {
        m.visit_mut(&mut load);
    }
    result?;
    Ok((state, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::Method;

    #[test]
    fn round_trip_through_f32() {
        for method in ["erm", "mine+rebal", "advcl"] {
            let train = TrainConfig::for_method(method.parse::<Method>().unwrap());
            let mut state = ModelState::new(train.encoder_for(&EncoderConfig::default()), &TrainConfig { seed: 3, ..train.clone() }).unwrap();
            state.epoch = 4;
            let dir = tempfile::tempdir().unwrap();
            let train = TrainConfig { seed: 3, ..train };
            let meta = save_checkpoint(dir.path(), &state, &train, 0.25).unwrap();
            let (back, meta2) = load_checkpoint(dir.path()).unwrap();
            assert_eq!(meta, meta2);
            assert_eq!(back.epoch, 4);
            let rounded: Vec<f64> = state.to_flat().iter().map(|&v| v as f32 as f64).collect();
            assert_eq!(back.to_flat(), rounded);
            assert_eq!(back.mine.is_some(), state.mine.is_some());
        }
    }

    #[test]
    fn tampered_meta_is_rejected() {
        let train = TrainConfig::default();
        let state = ModelState::new(EncoderConfig::default(), &train).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_checkpoint(dir.path(), &state, &train, 0.1).unwrap();
        let p = dir.path().join("meta.json");
        let text = fs::read_to_string(&p).unwrap().replace("\"lr\": 0.001", "\"lr\": 0.002");
        fs::write(&p, text).unwrap();
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Format(_))));
    }
}
