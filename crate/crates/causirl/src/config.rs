//! Run configuration files.
//!
//! A run is described by a sectioned TOML document with sections `[dataset]`,
//! `[model]`, `[penalty]`, `[train]`, `[eval]` and `[sweep]`. Every key has a
//! default (the synthetic benchmark recipe), unknown keys are rejected, and
//! presets for the three built-in experiments are provided.

use serde::{Deserialize, Serialize};

use crate::distances::DistanceKind;
use crate::error::{Error, Result};
use crate::penalties::{PenaltyKind, PenaltyVariant};

/// `[dataset]`: which dataset to run on and how to split it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// "synthetic", "adult" or "german".
    pub kind: String,
    /// Synthetic only: total sample count.
    pub n: usize,
    /// Synthetic only: held-out test sample count.
    pub n_test: usize,
    /// Synthetic only: number of domains (2 is the standard benchmark).
    pub domains: usize,
    /// Adult/German: directory holding the raw UCI files. Empty string means
    /// `$CAUSIRL_DATA_DIR` or `data/`.
    pub data_dir: String,
    /// German only: test fraction for the stratified split.
    pub test_fraction: f64,
    /// German only: seed of the stratified split.
    pub split_seed: u64,
    /// Adult/German: keep the sensitive column in the feature matrix.
    pub include_sensitive: bool,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            kind: "synthetic".into(),
            n: 1000,
            n_test: 200,
            domains: 2,
            data_dir: String::new(),
            test_fraction: 0.2,
            split_seed: 0,
            include_sensitive: true,
        }
    }
}

/// `[model]`: encoder and discriminator architectures.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Encoder hidden layer widths; empty means a linear encoder.
    pub encoder_hidden: Vec<usize>,
    /// Insert batch normalization after each encoder hidden layer.
    pub encoder_batchnorm: bool,
    /// Latent representation width.
    pub latent: usize,
    /// Target discriminator hidden widths; empty means one linear layer.
    pub target_disc_hidden: Vec<usize>,
    /// Adversary discriminator hidden widths.
    pub adversary_disc_hidden: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            encoder_hidden: vec![10],
            encoder_batchnorm: true,
            latent: 5,
            target_disc_hidden: vec![],
            adversary_disc_hidden: vec![],
        }
    }
}

/// `[penalty]`: invariance penalty selection.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySection {
    /// "causirl" (random-mixture) or "pairwise" (all-pairs baseline).
    pub variant: String,
    /// "mmd" or "coral".
    pub distance: String,
    pub lambda: f64,
}

impl Default for PenaltySection {
    fn default() -> Self {
        PenaltySection {
            variant: "causirl".into(),
            distance: "mmd".into(),
            lambda: 1.0,
        }
    }
}

/// `[train]`: encoder optimization recipe.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    /// Per-domain batch size.
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            weight_decay: 5e-5,
            seed: 0,
        }
    }
}

/// `[eval]`: frozen-encoder discriminator protocol.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub target_epochs: usize,
    pub adversary_epochs: usize,
    /// Discriminator Adam learning rate (cosine annealed).
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            target_epochs: 100,
            adversary_epochs: 150,
            lr: 1e-3,
            weight_decay: 1e-3,
            batch_size: 64,
        }
    }
}

/// `[sweep]`: the λ × seed grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            lambdas: vec![0.0, 0.1, 0.5, 1.0, 5.0, 10.0],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfigFile {
    pub dataset: DatasetSection,
    pub model: ModelSection,
    pub penalty: PenaltySection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

impl RunConfigFile {
    pub fn from_toml_str(s: &str) -> Result<RunConfigFile> {
        let cfg: RunConfigFile =
            toml::from_str(s).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<RunConfigFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self.dataset.kind.as_str() {
            "synthetic" | "adult" | "german" => {}
            other => return Err(Error::Config(format!("unknown dataset kind {other:?}"))),
        }
        if self.train.epochs < 1 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.train.batch_size < 2 {
            return Err(Error::Config("train.batch_size must be at least 2".into()));
        }
        if self.dataset.kind == "synthetic" {
            if self.dataset.domains < 2 {
                return Err(Error::Config("dataset.domains must be at least 2".into()));
            }
            if self.dataset.n_test >= self.dataset.n {
                return Err(Error::Config("dataset.n_test must be below dataset.n".into()));
            }
        }
        if self.model.latent == 0 {
            return Err(Error::Config("model.latent must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(Error::Config("dataset.test_fraction must be in [0, 1)".into()));
        }
        if self.sweep.lambdas.is_empty() || self.sweep.seeds.is_empty() {
            return Err(Error::Config("sweep grid must be non-empty".into()));
        }
        self.penalty_kind()?;
        Ok(())
    }

    /// Resolve the `[penalty]` section into the typed penalty description.
    pub fn penalty_kind(&self) -> Result<PenaltyKind> {
        let variant = match self.penalty.variant.as_str() {
            "causirl" => PenaltyVariant::CausIrlMixture,
            "pairwise" => PenaltyVariant::PairwiseBaseline,
            other => return Err(Error::Config(format!("unknown penalty variant {other:?}"))),
        };
        let distance = match self.penalty.distance.as_str() {
            "mmd" => DistanceKind::mmd_default(),
            "coral" => DistanceKind::Coral,
            other => return Err(Error::Config(format!("unknown distance {other:?}"))),
        };
        Ok(PenaltyKind {
            variant,
            distance,
            lambda: self.penalty.lambda,
        })
    }

    /// The synthetic benchmark recipe (also the default config).
    pub fn synthetic_preset() -> RunConfigFile {
        RunConfigFile::default()
    }

    /// UCI Adult recipe: one hidden layer of 7, latent 2, 64/32
    /// discriminators, Adam 1e-4 with weight decay 5e-2 for 150 epochs.
    pub fn adult_preset() -> RunConfigFile {
        let mut cfg = RunConfigFile::default();
        cfg.dataset.kind = "adult".into();
        cfg.model.encoder_hidden = vec![7];
        cfg.model.encoder_batchnorm = false;
        cfg.model.latent = 2;
        cfg.model.target_disc_hidden = vec![64, 32];
        cfg.model.adversary_disc_hidden = vec![64, 32];
        cfg.train.epochs = 150;
        cfg.train.batch_size = 128;
        cfg.train.lr = 1e-4;
        cfg.train.weight_decay = 5e-2;
        cfg.eval.batch_size = 128;
        cfg
    }

    /// UCI German Credit recipe: hidden layers 15 and 8, latent 32, 10/10
    /// discriminators, batch size 64.
    pub fn german_preset() -> RunConfigFile {
        let mut cfg = RunConfigFile::default();
        cfg.dataset.kind = "german".into();
        cfg.model.encoder_hidden = vec![15, 8];
        cfg.model.encoder_batchnorm = false;
        cfg.model.latent = 32;
        cfg.model.target_disc_hidden = vec![10, 10];
        cfg.model.adversary_disc_hidden = vec![10, 10];
        cfg.train.epochs = 150;
        cfg.train.batch_size = 64;
        cfg.train.lr = 1e-4;
        cfg.train.weight_decay = 5e-2;
        cfg.eval.batch_size = 64;
        cfg
    }

    pub fn preset(name: &str) -> Result<RunConfigFile> {
        match name {
            "synthetic" => Ok(Self::synthetic_preset()),
            "adult" => Ok(Self::adult_preset()),
            "german" => Ok(Self::german_preset()),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}
