use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ini::{Ini, ParseOption};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::{Architecture, EncoderConfig, Method, Objective, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfoundKind {
    /// `y2` is stroke thickness.
    Stroke,
    /// `y2` marks images passed through the radial notch filter.
    Notch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub confound: ConfoundKind,
    /// Training set size after contingency subsampling.
    pub train_count: usize,
    /// Balanced held-out pool the test distributions are drawn from.
    pub heldout_count: usize,
    /// Size of each test distribution.
    pub test_count: usize,
    pub noise: f64,
    pub jitter: i64,
    /// Glyph half extent in pixels.
    pub glyph_size: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            confound: ConfoundKind::Stroke,
            train_count: 4000,
            heldout_count: 1000,
            test_count: 500,
            noise: 0.05,
            jitter: 2,
            glyph_size: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub methods: Vec<Method>,
    /// Diagonal mass of the training contingency table for `train`/`eval`.
    pub prevalence: f64,
    /// Values visited by `sweep`.
    pub prevalence_grid: Vec<f64>,
    pub folds: usize,
    pub k_nn: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub architecture: Architecture,
    /// Shared optimisation settings; `method`, `lambda` and `seed` are set
    /// per run.
    pub train: TrainConfig,
    pub lambdas: BTreeMap<Objective, f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            methods: vec![Method::ERM],
            prevalence: 0.95,
            prevalence_grid: vec![0.70, 0.85, 0.90, 0.93, 0.95, 0.98],
            folds: 5,
            k_nn: 30,
            seed: 0,
            out: PathBuf::from("runs"),
            architecture: Architecture::Conv3,
            train: TrainConfig::default(),
            lambdas: [Objective::AdvCl, Objective::Dcor, Objective::Mine, Objective::Mmd]
                .into_iter()
                .map(|o| (o, o.default_lambda()))
                .collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let prev = |field: &str, p: f64| -> Result<()> {
            if p > 0.0 && p < 1.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("{p} is outside (0, 1)")))
            }
        };
        prev("experiment.prevalence", self.prevalence)?;
        if self.prevalence_grid.is_empty() {
            return Err(Error::config("experiment.prevalence_grid", "must not be empty"));
        }
        for &p in &self.prevalence_grid {
            prev("experiment.prevalence_grid", p)?;
        }
        if self.methods.is_empty() {
            return Err(Error::config("experiment.methods", "must list at least one method"));
        }
        if self.folds < 2 {
            return Err(Error::config("experiment.folds", "must be at least 2"));
        }
        if self.k_nn == 0 {
            return Err(Error::config("experiment.k_nn", "must be positive"));
        }
        let d = &self.dataset;
        if d.train_count < 4 * self.folds {
            return Err(Error::config("dataset.train_count", "too small for the fold count"));
        }
        if d.test_count == 0 || d.heldout_count < d.test_count {
            return Err(Error::config("dataset.test_count", "must be positive and at most heldout_count"));
        }
        if !(d.noise >= 0.0) {
            return Err(Error::config("dataset.noise", "must be non-negative"));
        }
        if d.jitter < 0 || d.glyph_size == 0 || (d.glyph_size as i64 + d.jitter + 2) > 8 {
            return Err(Error::config("dataset.jitter", "glyph plus jitter must fit the 16-pixel canvas"));
        }
        for (o, &l) in &self.lambdas {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config(format!("lambda.{}", Method::new(*o, false)), "must be a finite value >= 0"));
            }
        }
        self.train.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: format!("train.{field}"),
                message,
            },
            other => other,
        })
    }

    pub fn lambda_for(&self, method: Method) -> f64 {
        match method.objective {
            Objective::Erm => 0.0,
            o => self.lambdas.get(&o).copied().unwrap_or_else(|| o.default_lambda()),
        }
    }

    /// Training settings for one method and fold; fold `f` trains with seed
    /// `seed + f`.
    pub fn train_config(&self, method: Method, fold: usize) -> TrainConfig {
        TrainConfig {
            method,
            lambda: self.lambda_for(method),
            seed: self.seed.wrapping_add(fold as u64),
            ..self.train.clone()
        }
    }

    pub fn encoder_config(&self, method: Method) -> EncoderConfig {
        let base = EncoderConfig {
            architecture: self.architecture,
            ..EncoderConfig::default()
        };
        self.train_config(method, 0).encoder_for(&base)
    }
}

const KEYS: &[(&str, &[&str])] = &[
    ("dataset", &["confound", "train_count", "heldout_count", "test_count", "noise", "jitter", "glyph_size"]),
    ("experiment", &["methods", "prevalence", "prevalence_grid", "folds", "k_nn", "seed", "out", "architecture"]),
    (
        "train",
        &["batch_size", "lr", "weight_decay", "max_epochs", "patience", "mine_steps", "mine_hidden", "mine_ema", "mmd_cross_unbiased", "bandwidths"],
    ),
    ("lambda", &["advcl", "dcor", "mine", "mmd"]),
];

fn parse_value<T: std::str::FromStr>(field: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::config(field, format!("cannot parse `{raw}`")))
}

fn parse_list<T: std::str::FromStr>(field: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_value(field, s)).collect()
}

fn parse_bool(field: &str, raw: &str) -> Result<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(field, format!("expected a boolean, got `{raw}`"))),
    }
}

/// Parses an INI-style config: `[section]` headers, `key = value` lines and
/// `#`/`;` comments. Unknown sections or keys are errors;
/// `experiment.methods` is required and everything else has a default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let opt = ParseOption {
        enabled_quote: false,
        enabled_escape: false,
        ..ParseOption::default()
    };
    let ini = Ini::load_from_str_opt(text, opt).map_err(|e| Error::Format(format!("config: {e}")))?;
    let mut cfg = ExperimentConfig::default();
    let mut saw_methods = false;

    for (section, props) in ini.iter() {
        let Some(section) = section else {
            if let Some((key, _)) = props.iter().next() {
                return Err(Error::config(key, "keys must be inside a [section]"));
            }
            continue;
        };
        let allowed = KEYS
            .iter()
            .find(|(s, _)| *s == section)
            .map(|(_, k)| *k)
            .ok_or_else(|| Error::config(section, "unknown section"))?;
        for (key, raw) in props.iter() {
            let field = format!("{section}.{key}");
            if !allowed.contains(&key) {
                return Err(Error::config(&field, "unknown key"));
            }
            let f = field.as_str();
            match (section, key) {
                ("dataset", "confound") => {
                    cfg.dataset.confound = match raw.trim() {
                        "stroke" => ConfoundKind::Stroke,
                        "notch" => ConfoundKind::Notch,
                        other => return Err(Error::config(f, format!("expected stroke or notch, got `{other}`"))),
                    }
                }
                ("dataset", "train_count") => cfg.dataset.train_count = parse_value(f, raw)?,
                ("dataset", "heldout_count") => cfg.dataset.heldout_count = parse_value(f, raw)?,
                ("dataset", "test_count") => cfg.dataset.test_count = parse_value(f, raw)?,
                ("dataset", "noise") => cfg.dataset.noise = parse_value(f, raw)?,
                ("dataset", "jitter") => cfg.dataset.jitter = parse_value(f, raw)?,
                ("dataset", "glyph_size") => cfg.dataset.glyph_size = parse_value(f, raw)?,
                ("experiment", "methods") => {
                    cfg.methods = raw
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.parse::<Method>().map_err(|e| Error::config(f, e.to_string())))
                        .collect::<Result<_>>()?;
                    saw_methods = true;
                }
                ("experiment", "prevalence") => cfg.prevalence = parse_value(f, raw)?,
                ("experiment", "prevalence_grid") => cfg.prevalence_grid = parse_list(f, raw)?,
                ("experiment", "folds") => cfg.folds = parse_value(f, raw)?,
                ("experiment", "k_nn") => cfg.k_nn = parse_value(f, raw)?,
                ("experiment", "seed") => cfg.seed = parse_value(f, raw)?,
                ("experiment", "out") => cfg.out = PathBuf::from(raw.trim()),
                ("experiment", "architecture") => {
                    cfg.architecture = match raw.trim() {
                        "conv3" => Architecture::Conv3,
                        "mlp" => Architecture::Mlp,
                        other => return Err(Error::config(f, format!("expected conv3 or mlp, got `{other}`"))),
                    }
                }
                ("train", "batch_size") => cfg.train.batch_size = parse_value(f, raw)?,
                ("train", "lr") => cfg.train.lr = parse_value(f, raw)?,
                ("train", "weight_decay") => cfg.train.weight_decay = parse_value(f, raw)?,
                ("train", "max_epochs") => cfg.train.max_epochs = parse_value(f, raw)?,
                ("train", "patience") => cfg.train.patience = parse_value(f, raw)?,
                ("train", "mine_steps") => cfg.train.mine_steps = parse_value(f, raw)?,
                ("train", "mine_hidden") => cfg.train.mine_hidden = parse_value(f, raw)?,
                ("train", "mine_ema") => cfg.train.mine_ema = parse_bool(f, raw)?,
                ("train", "mmd_cross_unbiased") => cfg.train.mmd_cross_unbiased = parse_bool(f, raw)?,
                ("train", "bandwidths") => {
                    cfg.train.kernel = crate::dependence::KernelSpec::new(parse_list(f, raw)?).map_err(|e| Error::config(f, e.to_string()))?
                }
                ("lambda", name) => {
                    let objective = name.parse::<Method>().expect("listed key").objective;
                    cfg.lambdas.insert(objective, parse_value(f, raw)?);
                }
                _ => unreachable!("key list and match arms agree"),
            }
        }
    }
    if !saw_methods {
        return Err(Error::config("experiment.methods", "required key is missing"));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Serialises every field; `parse_config(&to_ini_string(c)) == c`.
pub fn to_ini_string(cfg: &ExperimentConfig) -> String {
    let d = &cfg.dataset;
    let t = &cfg.train;
    let mut s = String::new();
    let confound = match d.confound {
        ConfoundKind::Stroke => "stroke",
        ConfoundKind::Notch => "notch",
    };
    let arch = match cfg.architecture {
        Architecture::Conv3 => "conv3",
        Architecture::Mlp => "mlp",
    };
    writeln!(s, "[dataset]\nconfound = {confound}\ntrain_count = {}\nheldout_count = {}\ntest_count = {}", d.train_count, d.heldout_count, d.test_count).unwrap();
    writeln!(s, "noise = {:?}\njitter = {}\nglyph_size = {}\n", d.noise, d.jitter, d.glyph_size).unwrap();
    writeln!(s, "[experiment]\nmethods = {}\nprevalence = {:?}", join(&cfg.methods), cfg.prevalence).unwrap();
    let grid: Vec<String> = cfg.prevalence_grid.iter().map(|p| format!("{p:?}")).collect();
    writeln!(s, "prevalence_grid = {}\nfolds = {}\nk_nn = {}\nseed = {}", grid.join(", "), cfg.folds, cfg.k_nn, cfg.seed).unwrap();
    writeln!(s, "out = {}\narchitecture = {arch}\n", cfg.out.display()).unwrap();
    writeln!(s, "[train]\nbatch_size = {}\nlr = {:?}\nweight_decay = {:?}\nmax_epochs = {}\npatience = {}", t.batch_size, t.lr, t.weight_decay, t.max_epochs, t.patience).unwrap();
    writeln!(s, "mine_steps = {}\nmine_hidden = {}\nmine_ema = {}\nmmd_cross_unbiased = {}", t.mine_steps, t.mine_hidden, t.mine_ema, t.mmd_cross_unbiased).unwrap();
    let bw: Vec<String> = t.kernel.bandwidths().iter().map(|b| format!("{b:?}")).collect();
    writeln!(s, "bandwidths = {}\n", bw.join(", ")).unwrap();
    s.push_str("[lambda]\n");
    for (o, l) in &cfg.lambdas {
        writeln!(s, "{} = {l:?}", Method::new(*o, false)).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_config() {
        let cfg = parse_config("[dataset]\n[experiment]\nmethods = erm\n[train]\n").unwrap();
        assert_eq!(cfg.prevalence, 0.95);
        assert_eq!(cfg.folds, 5);
        assert_eq!(cfg.k_nn, 30);
        assert_eq!(cfg.prevalence_grid, vec![0.70, 0.85, 0.90, 0.93, 0.95, 0.98]);
        assert_eq!(cfg.dataset.train_count, 4000);
        assert_eq!(cfg.train.batch_size, 128);
        assert_eq!(cfg, ExperimentConfig::default());
    }

    fn field_of(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn named_errors() {
        assert!(field_of("[experiment]\nmethods = erm\nprevalence = 1.2\n").contains("prevalence"));
        assert_eq!(field_of("[experiment]\nfolds = 3\n"), "experiment.methods");
        assert_eq!(field_of("[experiment]\nmethods = erm\nfodls = 3\n"), "experiment.fodls");
        assert_eq!(field_of("[experiment]\nmethods = erm, dcorr\n"), "experiment.methods");
        assert_eq!(field_of("[experimnt]\nmethods = erm\n"), "experimnt");
        assert_eq!(field_of("[experiment]\nmethods = erm\n[train]\npatience = 0\n"), "train.patience");
        assert_eq!(field_of("[experiment]\nmethods = erm\n[lambda]\ndcor = -1\n"), "lambda.dcor");
        assert_eq!(field_of("[experiment]\nmethods = erm\n[train]\nlr = fast\n"), "train.lr");
    }

    #[test]
    fn comments_and_lists() {
        let text = "# top comment\n[experiment]\n; another\nmethods = erm, dcor+rebal ,advcl\nprevalence_grid = 0.7,0.98\n[lambda]\ndcor = 2.5\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.methods.len(), 3);
        assert_eq!(cfg.methods[1].to_string(), "dcor+rebal");
        assert_eq!(cfg.prevalence_grid, vec![0.7, 0.98]);
        assert_eq!(cfg.lambda_for("dcor+rebal".parse().unwrap()), 2.5);
        assert_eq!(cfg.lambda_for(Method::ERM), 0.0);
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(parse_config(&to_ini_string(&cfg)).unwrap(), cfg);
        cfg.methods = Method::all();
        cfg.prevalence = 0.9;
        cfg.prevalence_grid = vec![0.7, 0.93];
        cfg.dataset.confound = ConfoundKind::Notch;
        cfg.dataset.noise = 0.123456789;
        cfg.architecture = Architecture::Mlp;
        cfg.train.lr = 3e-3;
        cfg.train.mine_ema = true;
        cfg.train.kernel = crate::dependence::KernelSpec::new(vec![0.5, 1.0]).unwrap();
        cfg.lambdas.insert(Objective::Mine, 0.05);
        cfg.seed = 42;
        cfg.out = PathBuf::from("/tmp/some dir/x");
        assert_eq!(parse_config(&to_ini_string(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn fold_seeds() {
        let cfg = ExperimentConfig { seed: 10, ..Default::default() };
        assert_eq!(cfg.train_config(Method::ERM, 3).seed, 13);
        assert!(cfg.encoder_config("advcl".parse().unwrap()).shared);
        assert!(!cfg.encoder_config("dcor".parse().unwrap()).shared);
    }
}
