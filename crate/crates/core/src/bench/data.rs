use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::{ConfoundKind, ExperimentConfig};
use super::tensor::Tensor;
use crate::confounds::{confound_by_notch, grouped_kfold, make_test_split, subsample_contingency, ContingencySpec, LabeledImage, NotchSpec, SplitPlan, TestKind, ToyGenerator};
use crate::error::{Error, Result};

/// Group ids of the held-out pool start here, so they never collide with
/// training groups.
pub const HELDOUT_GROUP_OFFSET: u64 = 1 << 40;

/// Everything one prevalence level needs: the confounded training set, its
/// grouped folds and the three test distributions.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub prevalence: f64,
    pub train: Vec<LabeledImage>,
    pub plan: SplitPlan,
    pub tests: BTreeMap<TestKind, Vec<LabeledImage>>,
}

impl Dataset {
    /// `(fold training set, validation set)`.
    pub fn fold(&self, fold: usize) -> (Vec<LabeledImage>, Vec<LabeledImage>) {
        let (tr, va) = self.plan.partition(&self.train, fold);
        (tr.iter().map(|&i| self.train[i].clone()).collect(), va.iter().map(|&i| self.train[i].clone()).collect())
    }
}

fn prevalence_salt(p: f64) -> u64 {
    (p * 1e6).round() as u64
}

/// Balanced pool of `count` images in which `y2` is the configured confounder.
fn balanced_pool(cfg: &ExperimentConfig, count: usize, first_group: u64, seed: u64) -> Result<Vec<LabeledImage>> {
    let d = &cfg.dataset;
    let generator = ToyGenerator {
        half_size: d.glyph_size,
        jitter: d.jitter,
        noise_sigma: d.noise,
        first_group,
        ..ToyGenerator::default()
    };
    match d.confound {
        ConfoundKind::Stroke => Ok(generator.generate(count, seed)),
        ConfoundKind::Notch => {
            // Thin strokes only; the notch filter becomes the confounder.
            let thin: Vec<LabeledImage> = generator.generate(2 * count, seed).into_iter().filter(|s| s.y2 == 0).collect();
            confound_by_notch(&thin, 0.5, &NotchSpec::default(), seed ^ 0x6e6f_7463)
        }
    }
}

/// Materialises the dataset for training diagonal mass `p`. The raw pools
/// do not depend on `p`; only the contingency subsampling does.
pub fn build_dataset(cfg: &ExperimentConfig, p: f64) -> Result<Dataset> {
    let d = &cfg.dataset;
    let salt = prevalence_salt(p);
    let pool = balanced_pool(cfg, 2 * d.train_count, 0, cfg.seed)?;
    let train = subsample_contingency(&pool, &ContingencySpec::new(p, d.train_count)?, cfg.seed ^ salt)?;
    if let Some(requested) = train.shrunk_from {
        return Err(Error::InvalidInput(format!("training pool too small for {requested} samples at p={p}")));
    }
    let heldout = balanced_pool(cfg, d.heldout_count, HELDOUT_GROUP_OFFSET, cfg.seed.wrapping_add(1))?;
    let mut tests = BTreeMap::new();
    for kind in TestKind::ALL {
        let split = make_test_split(&heldout, kind, d.test_count, p, cfg.seed.wrapping_add(2) ^ salt)?;
        if split.shrunk_from.is_some() {
            return Err(Error::InvalidInput(format!("held-out pool too small for the {} split at p={p}", kind.name())));
        }
        tests.insert(kind, split.samples);
    }
    let plan = grouped_kfold(&train.samples, cfg.folds, cfg.seed)?;
    Ok(Dataset {
        prevalence: p,
        train: train.samples,
        plan,
        tests,
    })
}

/// Directory holding the materialised data for one prevalence.
pub fn dataset_dir(out: &Path, p: f64) -> PathBuf {
    out.join("data").join(format!("p{p}"))
}

fn images_tensor(images: &[LabeledImage]) -> Result<Tensor> {
    let side = images.first().map_or(16, |s| s.side);
    Tensor::f32(vec![images.len(), side, side], images.iter().flat_map(|s| s.pixels.iter().copied()).collect())
}

const MANIFEST_HEADER: &str = "id,y1,y2,group,split,fold";

/// Writes `images_<split>.dten` per split and `manifest.csv`
/// (`id,y1,y2,group,split,fold`; `id` is the row in that split's tensor).
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut manifest = format!("{MANIFEST_HEADER}\n");
    let mut write_split = |name: &str, images: &[LabeledImage], fold_of: &dyn Fn(&LabeledImage) -> String| -> Result<()> {
        images_tensor(images)?.write(&dir.join(format!("images_{name}.dten")))?;
        for (i, s) in images.iter().enumerate() {
            writeln!(manifest, "{i},{},{},{},{name},{}", s.y1, s.y2, s.group, fold_of(s)).unwrap();
        }
        Ok(())
    };
    write_split("train", &data.train, &|s| data.plan.fold_of(s.group).map_or(String::new(), |f| f.to_string()))?;
    for (kind, images) in &data.tests {
        write_split(kind.name(), images, &|_| String::new())?;
    }
    fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path, prevalence: f64) -> Result<Dataset> {
    let text = fs::read_to_string(dir.join("manifest.csv"))?;
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::Format(format!("{}: unexpected manifest header", dir.display())));
    }
    let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
    let mut splits: BTreeMap<String, Vec<LabeledImage>> = BTreeMap::new();
    let mut fold_of_group = BTreeMap::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::Format(format!("manifest line {}: `{line}`", n + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let id: usize = f[0].parse().map_err(|_| bad())?;
        let (y1, y2): (u8, u8) = (f[1].parse().map_err(|_| bad())?, f[2].parse().map_err(|_| bad())?);
        let group: u64 = f[3].parse().map_err(|_| bad())?;
        let split = f[4].to_string();
        if !tensors.contains_key(&split) {
            tensors.insert(split.clone(), Tensor::read(&dir.join(format!("images_{split}.dten")))?);
        }
        let t = &tensors[&split];
        let (side, pixels) = match (t.dims.as_slice(), t.as_f32()) {
            ([_, h, w], Some(v)) if h == w => (*h, v),
            _ => return Err(Error::Format(format!("images_{split}.dten is not an N×S×S f32 tensor"))),
        };
        let px = pixels.get(id * side * side..(id + 1) * side * side).ok_or_else(bad)?;
        if !f[5].is_empty() {
            fold_of_group.insert(group, f[5].parse::<usize>().map_err(|_| bad())?);
        }
        let rows = splits.entry(split).or_default();
        if rows.len() != id {
            return Err(bad());
        }
        rows.push(LabeledImage {
            side,
            pixels: px.to_vec(),
            y1,
            y2,
            group,
        });
    }
    let mut tests = BTreeMap::new();
    for kind in crate::confounds::TestKind::ALL {
        let images = splits.remove(kind.name()).ok_or_else(|| Error::Format(format!("manifest has no {} split", kind.name())))?;
        tests.insert(kind, images);
    }
    let folds = fold_of_group.values().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        prevalence,
        train: splits.remove("train").ok_or_else(|| Error::Format("manifest has no train split".into()))?,
        plan: SplitPlan { folds, fold_of_group },
        tests,
    })
}

/// Materialised data if present under `out`, otherwise built in memory.
pub fn load_or_build(cfg: &ExperimentConfig, out: &Path, p: f64) -> Result<Dataset> {
    let dir = dataset_dir(out, p);
    if dir.join("manifest.csv").exists() {
        let data = read_dataset(&dir, p)?;
        if data.plan.folds == cfg.folds {
            return Ok(data);
        }
        log::warn!("{} has {} folds, config asks for {}; rebuilding in memory", dir.display(), data.plan.folds, cfg.folds);
    }
    build_dataset(cfg, p)
}
