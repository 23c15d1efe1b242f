use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Flat `key = value` run configuration (TOML syntax, no tables).
///
/// Every field is optional; missing keys keep the caller's defaults and
/// unknown keys are rejected. Strings are quoted, e.g.
///
/// ```text
/// iters = 300
/// lambda_kl = 0.01
/// mode = "single-to-multi"
/// label_policy = "texture"
/// content_dir = "data/healthy"
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub iters: Option<usize>,
    pub image_side: Option<usize>,
    pub seed: Option<u64>,
    pub log_every: Option<usize>,
    pub perceptual_seed: Option<u64>,
    pub augment: Option<bool>,

    pub texture_dim: Option<usize>,
    pub base_channels: Option<usize>,
    pub res_blocks: Option<usize>,

    pub lambda_idt: Option<f64>,
    pub lambda_rec: Option<f64>,
    pub lambda_kl: Option<f64>,
    pub lambda_f: Option<f64>,

    pub content_dir: Option<PathBuf>,
    pub content_label: Option<String>,
    pub texture_dir: Option<PathBuf>,
    pub texture_label: Option<String>,
    pub mode: Option<String>,
    pub label_policy: Option<String>,
    /// Content images per texture source in single-to-multi mode.
    pub k: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_text().as_bytes())
    }

    /// Config holding every training field of `cfg`.
    pub fn from_train(cfg: &TrainConfig) -> Self {
        RunConfig {
            lr: Some(cfg.lr),
            beta1: Some(cfg.beta1),
            beta2: Some(cfg.beta2),
            iters: Some(cfg.iters),
            image_side: Some(cfg.image_side),
            seed: Some(cfg.seed),
            log_every: Some(cfg.log_every),
            perceptual_seed: Some(cfg.perceptual_seed),
            augment: Some(cfg.augment),
            texture_dim: Some(cfg.model.texture_dim),
            base_channels: Some(cfg.model.base_channels),
            res_blocks: Some(cfg.model.res_blocks),
            lambda_idt: Some(cfg.weights.lambda_idt),
            lambda_rec: Some(cfg.weights.lambda_rec),
            lambda_kl: Some(cfg.weights.lambda_kl),
            lambda_f: Some(cfg.weights.lambda_f),
            ..Default::default()
        }
    }

    /// `base` with every present training key overridden, then validated.
    /// `image_side` sets both the training and the model side.
    pub fn apply_train(&self, base: &TrainConfig) -> Result<TrainConfig> {
        let mut c = base.clone();
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),+ $(,)?) => {
                $(if let Some(v) = self.$src.clone() { c.$($dst).+ = v; })+
            };
        }
        set!(
            lr => lr, beta1 => beta1, beta2 => beta2, iters => iters, seed => seed,
            log_every => log_every, perceptual_seed => perceptual_seed, augment => augment,
            texture_dim => model.texture_dim, base_channels => model.base_channels,
            res_blocks => model.res_blocks,
            lambda_idt => weights.lambda_idt, lambda_rec => weights.lambda_rec,
            lambda_kl => weights.lambda_kl, lambda_f => weights.lambda_f,
        );
        if let Some(side) = self.image_side {
            c = c.with_side(side);
        }
        c.validate()?;
        Ok(c)
    }
}
