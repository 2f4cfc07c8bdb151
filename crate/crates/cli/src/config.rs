//! Run configuration: plain `key=value` files, the same keys mirrored as
//! command-line flags (flags win), and a resolved manifest that reproduces a
//! run bit-exactly when fed back in as a config file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ancm_core::linalg::Shape;
use ancm_core::metrics::MetricKind;
use ancm_core::optim::TrainConfig;

/// A configuration error; always maps to exit code 2.
pub type ConfigError = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Blobs,
    Digits,
    Idx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Toy2d,
    MnistMini,
    Mnist2dviz,
}

impl Preset {
    pub fn input_shape(self) -> Shape {
        match self {
            Preset::Toy2d => Shape::Flat(2),
            Preset::MnistMini | Preset::Mnist2dviz => Shape::Image {
                channels: 1,
                height: 28,
                width: 28,
            },
        }
    }

    pub fn feature_dim(self) -> usize {
        match self {
            Preset::Toy2d | Preset::Mnist2dviz => 2,
            Preset::MnistMini => 64,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Preset::Toy2d => "toy2d",
            Preset::MnistMini => "mnist-mini",
            Preset::Mnist2dviz => "mnist-2dviz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Encm,
    Cncm,
    Softmax,
}

impl LossKind {
    pub fn metric(self) -> Option<MetricKind> {
        match self {
            LossKind::Encm => Some(MetricKind::Euclidean),
            LossKind::Cncm => Some(MetricKind::Cosine),
            LossKind::Softmax => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            LossKind::Encm => "encm",
            LossKind::Cncm => "cncm",
            LossKind::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnchorMethodKey {
    Polar2d,
    Orthonormal,
    Repulsion,
}

impl AnchorMethodKey {
    fn name(self) -> &'static str {
        match self {
            AnchorMethodKey::Polar2d => "polar2d",
            AnchorMethodKey::Orthonormal => "orthonormal",
            AnchorMethodKey::Repulsion => "repulsion",
        }
    }
}

/// Every recognized key, unresolved: `None` means "not set anywhere".
/// Defaults are applied at `resolve` time so a written manifest always
/// carries the complete effective configuration.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    dataset: Option<DatasetKind>,
    preset: Option<Preset>,
    loss: Option<LossKind>,
    anchor_method: Option<AnchorMethodKey>,
    anchor_seed: Option<u64>,
    anchor_iterations: Option<usize>,
    train_images: Option<PathBuf>,
    train_labels: Option<PathBuf>,
    test_images: Option<PathBuf>,
    test_labels: Option<PathBuf>,
    classes: Option<usize>,
    dim: Option<usize>,
    per_class: Option<usize>,
    spread: Option<f64>,
    center_scale: Option<f64>,
    data_seed: Option<u64>,
    train_count: Option<usize>,
    test_count: Option<usize>,
    lr: Option<f64>,
    momentum: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    dropout: Option<f64>,
    seed: Option<u64>,
    plateau_window: Option<usize>,
    plateau_factor: Option<f64>,
    plateau_min_rel_improvement: Option<f64>,
    normalize: Option<bool>,
    out_dir: Option<PathBuf>,
}

fn parse<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| format!("{key}: expected {what}, got {value:?}"))
}

impl RunConfig {
    /// Sets one key from its textual value — the single parser behind both
    /// config files and command-line flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "dataset" => {
                self.dataset = Some(match value {
                    "blobs" => DatasetKind::Blobs,
                    "digits" => DatasetKind::Digits,
                    "idx" => DatasetKind::Idx,
                    other => return Err(format!("dataset: unknown source {other:?}")),
                })
            }
            "preset" => {
                self.preset = Some(match value {
                    "toy2d" => Preset::Toy2d,
                    "mnist-mini" => Preset::MnistMini,
                    "mnist-2dviz" => Preset::Mnist2dviz,
                    other => return Err(format!("preset: unknown preset {other:?}")),
                })
            }
            "loss" => {
                self.loss = Some(match value {
                    "encm" => LossKind::Encm,
                    "cncm" => LossKind::Cncm,
                    "softmax" => LossKind::Softmax,
                    other => return Err(format!("loss: unknown loss {other:?}")),
                })
            }
            "anchor_method" => {
                self.anchor_method = Some(match value {
                    "polar2d" => AnchorMethodKey::Polar2d,
                    "orthonormal" => AnchorMethodKey::Orthonormal,
                    "repulsion" => AnchorMethodKey::Repulsion,
                    other => return Err(format!("anchor_method: unknown method {other:?}")),
                })
            }
            "anchor_seed" => self.anchor_seed = Some(parse(key, value, "an unsigned integer")?),
            "anchor_iterations" => {
                self.anchor_iterations = Some(parse(key, value, "an unsigned integer")?)
            }
            "train_images" => self.train_images = Some(PathBuf::from(value)),
            "train_labels" => self.train_labels = Some(PathBuf::from(value)),
            "test_images" => self.test_images = Some(PathBuf::from(value)),
            "test_labels" => self.test_labels = Some(PathBuf::from(value)),
            "classes" => self.classes = Some(parse(key, value, "an unsigned integer")?),
            "dim" => self.dim = Some(parse(key, value, "an unsigned integer")?),
            "per_class" => self.per_class = Some(parse(key, value, "an unsigned integer")?),
            "spread" => self.spread = Some(parse(key, value, "a number")?),
            "center_scale" => self.center_scale = Some(parse(key, value, "a number")?),
            "data_seed" => self.data_seed = Some(parse(key, value, "an unsigned integer")?),
            "train_count" => self.train_count = Some(parse(key, value, "an unsigned integer")?),
            "test_count" => self.test_count = Some(parse(key, value, "an unsigned integer")?),
            "lr" => self.lr = Some(parse(key, value, "a number")?),
            "momentum" => self.momentum = Some(parse(key, value, "a number")?),
            "weight_decay" => self.weight_decay = Some(parse(key, value, "a number")?),
            "batch_size" => self.batch_size = Some(parse(key, value, "an unsigned integer")?),
            "epochs" => self.epochs = Some(parse(key, value, "an unsigned integer")?),
            "dropout" => self.dropout = Some(parse(key, value, "a number")?),
            "seed" => self.seed = Some(parse(key, value, "an unsigned integer")?),
            "plateau_window" => {
                self.plateau_window = Some(parse(key, value, "an unsigned integer")?)
            }
            "plateau_factor" => self.plateau_factor = Some(parse(key, value, "a number")?),
            "plateau_min_rel_improvement" => {
                self.plateau_min_rel_improvement = Some(parse(key, value, "a number")?)
            }
            "normalize" => {
                self.normalize = Some(match value {
                    "global" => true,
                    "none" => false,
                    other => return Err(format!("normalize: expected global or none, got {other:?}")),
                })
            }
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            other => return Err(format!("unknown configuration key {other:?}")),
        }
        Ok(())
    }

    /// Parses a `key=value` config file: one pair per line, `#` comments and
    /// blank lines ignored.
    pub fn from_file(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected key=value, got {line:?}",
                    path.display(),
                    lineno + 1
                ));
            };
            config
                .set(key.trim(), value.trim())
                .map_err(|e| format!("{}:{}: {e}", path.display(), lineno + 1))?;
        }
        Ok(config)
    }

    /// Applies defaults and the `ANCM_SEED` fallback, checks the structural
    /// invariants, and returns the complete effective plan.
    pub fn resolve(&self) -> Result<Plan, ConfigError> {
        let seed = match self.seed {
            Some(s) => s,
            None => match std::env::var("ANCM_SEED") {
                Ok(text) => text
                    .parse()
                    .map_err(|_| format!("ANCM_SEED: expected an unsigned integer, got {text:?}"))?,
                Err(_) => 0,
            },
        };

        let loss = self.loss.ok_or("loss is required (encm, cncm, or softmax)")?;
        let anchors = match loss {
            LossKind::Softmax => {
                if self.anchor_method.is_some()
                    || self.anchor_seed.is_some()
                    || self.anchor_iterations.is_some()
                {
                    return Err(
                        "loss=softmax forbids anchor settings (anchor_method, anchor_seed, \
                         anchor_iterations)"
                            .into(),
                    );
                }
                None
            }
            LossKind::Encm | LossKind::Cncm => Some(AnchorPlan {
                method: self
                    .anchor_method
                    .ok_or("encm/cncm require anchor_method (polar2d, orthonormal, repulsion)")?,
                seed: self.anchor_seed.unwrap_or(seed),
                iterations: self.anchor_iterations.unwrap_or(500),
            }),
        };

        let dataset = match self.dataset.ok_or("dataset is required (blobs, digits, or idx)")? {
            DatasetKind::Blobs => DatasetPlan::Blobs {
                classes: self.classes.unwrap_or(4),
                dim: self.dim.unwrap_or(2),
                per_class: self.per_class.unwrap_or(200),
                spread: self.spread.unwrap_or(0.1),
                center_scale: self.center_scale.unwrap_or(1.0),
                data_seed: self.data_seed.unwrap_or(42),
            },
            DatasetKind::Digits => DatasetPlan::Digits {
                train_count: self.train_count.unwrap_or(10_000),
                test_count: self.test_count.unwrap_or(2_000),
                data_seed: self.data_seed.unwrap_or(42),
            },
            DatasetKind::Idx => {
                let train_images = self
                    .train_images
                    .clone()
                    .ok_or("dataset=idx requires train_images")?;
                let train_labels = self
                    .train_labels
                    .clone()
                    .ok_or("dataset=idx requires train_labels")?;
                let test = match (self.test_images.clone(), self.test_labels.clone()) {
                    (Some(i), Some(l)) => Some((i, l)),
                    (None, None) => None,
                    _ => {
                        return Err(
                            "test_images and test_labels must be given together".into()
                        )
                    }
                };
                for path in [Some(&train_images), Some(&train_labels)]
                    .into_iter()
                    .flatten()
                    .chain(test.iter().flat_map(|(i, l)| [i, l]))
                {
                    if !path.exists() {
                        return Err(format!("dataset file not found: {}", path.display()));
                    }
                }
                DatasetPlan::Idx {
                    train_images,
                    train_labels,
                    test,
                }
            }
        };

        let preset = self
            .preset
            .ok_or("preset is required (toy2d, mnist-mini, or mnist-2dviz)")?;
        if let DatasetPlan::Blobs { dim, .. } = dataset {
            if Shape::Flat(dim) != preset.input_shape() {
                return Err(format!(
                    "preset {} expects inputs of shape {}, blobs have dimension {dim}",
                    preset.name(),
                    preset.input_shape()
                ));
            }
        }
        if matches!(dataset, DatasetPlan::Digits { .. }) && preset == Preset::Toy2d {
            return Err("preset toy2d takes 2-dimensional inputs, digits are 28x28 images".into());
        }

        let defaults = TrainConfig::default();
        let mut train = TrainConfig {
            lr: self.lr.unwrap_or(defaults.lr),
            momentum: self.momentum.unwrap_or(defaults.momentum),
            weight_decay: self.weight_decay.unwrap_or(defaults.weight_decay),
            batch_size: self.batch_size.unwrap_or(defaults.batch_size),
            max_epochs: self.epochs.unwrap_or(defaults.max_epochs),
            dropout: self.dropout.unwrap_or(defaults.dropout),
            seed,
            ..defaults
        };
        if let Some(w) = self.plateau_window {
            train.plateau.window = w;
        }
        if let Some(f) = self.plateau_factor {
            train.plateau.factor = f;
        }
        if let Some(m) = self.plateau_min_rel_improvement {
            train.plateau.min_rel_improvement = m;
        }

        Ok(Plan {
            // Blob data is generated in feature-space units around the anchors;
            // normalizing it would shift the centers off the anchors, so it
            // defaults off. Pixel data defaults to global normalization.
            normalize: self
                .normalize
                .unwrap_or(!matches!(dataset, DatasetPlan::Blobs { .. })),
            dataset,
            preset,
            loss,
            anchors,
            train,
            seed,
            out_dir: self.out_dir.clone().unwrap_or_else(|| PathBuf::from("ancm-run")),
        })
    }
}

#[derive(Debug, Clone)]
pub enum DatasetPlan {
    Blobs {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        center_scale: f64,
        data_seed: u64,
    },
    Digits {
        train_count: usize,
        test_count: usize,
        data_seed: u64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test: Option<(PathBuf, PathBuf)>,
    },
}

#[derive(Debug, Clone)]
pub struct AnchorPlan {
    pub method: AnchorMethodKey,
    pub seed: u64,
    pub iterations: usize,
}

/// The complete effective configuration of a run: every value concrete, so
/// the manifest written from it replays the run without consulting defaults.
#[derive(Debug, Clone)]
pub struct Plan {
    pub dataset: DatasetPlan,
    pub preset: Preset,
    pub loss: LossKind,
    pub anchors: Option<AnchorPlan>,
    pub train: TrainConfig,
    pub normalize: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Plan {
    /// The manifest: sorted `key=value` lines holding the full effective
    /// configuration. Feeding this file back through `--config` replays the
    /// run bit-exactly.
    pub fn manifest(&self) -> String {
        let mut keys: BTreeMap<&str, String> = BTreeMap::new();
        match &self.dataset {
            DatasetPlan::Blobs {
                classes,
                dim,
                per_class,
                spread,
                center_scale,
                data_seed,
            } => {
                keys.insert("dataset", "blobs".into());
                keys.insert("classes", classes.to_string());
                keys.insert("dim", dim.to_string());
                keys.insert("per_class", per_class.to_string());
                keys.insert("spread", spread.to_string());
                keys.insert("center_scale", center_scale.to_string());
                keys.insert("data_seed", data_seed.to_string());
            }
            DatasetPlan::Digits {
                train_count,
                test_count,
                data_seed,
            } => {
                keys.insert("dataset", "digits".into());
                keys.insert("train_count", train_count.to_string());
                keys.insert("test_count", test_count.to_string());
                keys.insert("data_seed", data_seed.to_string());
            }
            DatasetPlan::Idx {
                train_images,
                train_labels,
                test,
            } => {
                keys.insert("dataset", "idx".into());
                keys.insert("train_images", train_images.display().to_string());
                keys.insert("train_labels", train_labels.display().to_string());
                if let Some((i, l)) = test {
                    keys.insert("test_images", i.display().to_string());
                    keys.insert("test_labels", l.display().to_string());
                }
            }
        }
        keys.insert("preset", self.preset.name().into());
        keys.insert("loss", self.loss.name().into());
        if let Some(a) = &self.anchors {
            keys.insert("anchor_method", a.method.name().into());
            keys.insert("anchor_seed", a.seed.to_string());
            keys.insert("anchor_iterations", a.iterations.to_string());
        }
        keys.insert("lr", self.train.lr.to_string());
        keys.insert("momentum", self.train.momentum.to_string());
        keys.insert("weight_decay", self.train.weight_decay.to_string());
        keys.insert("batch_size", self.train.batch_size.to_string());
        keys.insert("epochs", self.train.max_epochs.to_string());
        keys.insert("dropout", self.train.dropout.to_string());
        keys.insert("seed", self.seed.to_string());
        keys.insert("plateau_window", self.train.plateau.window.to_string());
        keys.insert("plateau_factor", self.train.plateau.factor.to_string());
        keys.insert(
            "plateau_min_rel_improvement",
            self.train.plateau.min_rel_improvement.to_string(),
        );
        keys.insert(
            "normalize",
            if self.normalize { "global" } else { "none" }.into(),
        );
        keys.insert("out_dir", self.out_dir.display().to_string());

        let mut out = String::new();
        for (key, value) in keys {
            let _ = writeln!(out, "{key}={value}");
        }
        out
    }
}
