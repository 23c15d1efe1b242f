//! Dataset augmentation by per-pair texture translation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{atomic_write, load_image, save_checkpoint, save_image, ImageSet, RunConfig};
use crate::model::DomainId;
use crate::tensor::{mix_seed, Rng, Tensor};
use crate::trainer::{resize_bilinear, train_pair, TrainConfig, Trainer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// A fresh model per (content, texture) pair.
    SingleToSingle,
    /// One model per texture image, trained across all content images.
    SingleToMulti,
}

/// Which input decides the label of a generated image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelPolicy {
    TextureLabel,
    ContentLabel,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::SingleToSingle => "single-to-single",
            Mode::SingleToMulti => "single-to-multi",
        }
    }
}

impl LabelPolicy {
    pub fn name(self) -> &'static str {
        match self {
            LabelPolicy::TextureLabel => "texture",
            LabelPolicy::ContentLabel => "content",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for LabelPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-to-single" => Ok(Mode::SingleToSingle),
            "single-to-multi" => Ok(Mode::SingleToMulti),
            _ => Err(Error::Argument(format!(
                "unknown mode '{s}', expected single-to-single or single-to-multi"
            ))),
        }
    }
}

impl FromStr for LabelPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "texture" => Ok(LabelPolicy::TextureLabel),
            "content" => Ok(LabelPolicy::ContentLabel),
            _ => Err(Error::Argument(format!(
                "unknown label policy '{s}', expected texture or content"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AugJob {
    pub content_set: ImageSet,
    pub texture_set: ImageSet,
    pub mode: Mode,
    pub label_policy: LabelPolicy,
    pub train_cfg: TrainConfig,
    pub output_dir: PathBuf,
}

impl AugJob {
    /// Builds a job from config keys. `mode`, `label_policy`, `content_dir`,
    /// `texture_dir` and `output_dir` are required; labels default to the
    /// directory names.
    pub fn from_config(rc: &RunConfig, base: &TrainConfig) -> Result<Self> {
        fn need<'a, T>(v: &'a Option<T>, key: &str) -> Result<&'a T> {
            v.as_ref()
                .ok_or_else(|| Error::Argument(format!("augmentation config is missing '{key}'")))
        }
        let mode: Mode = need(&rc.mode, "mode")?.parse()?;
        let label_policy: LabelPolicy = need(&rc.label_policy, "label_policy")?.parse()?;
        let dir_label = |dir: &Path, given: &Option<String>| {
            given.clone().unwrap_or_else(|| {
                dir.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "unlabeled".into())
            })
        };
        let cdir = need(&rc.content_dir, "content_dir")?;
        let tdir = need(&rc.texture_dir, "texture_dir")?;
        Ok(AugJob {
            content_set: ImageSet::from_dir(cdir, &dir_label(cdir, &rc.content_label))?,
            texture_set: ImageSet::from_dir(tdir, &dir_label(tdir, &rc.texture_label))?,
            mode,
            label_policy,
            train_cfg: rc.apply_train(base)?,
            output_dir: need(&rc.output_dir, "output_dir")?.clone(),
        })
    }
}

pub const MANIFEST_HEADER: [&str; 6] = [
    "output_path",
    "content_path",
    "texture_path",
    "label",
    "seed",
    "mode",
];

/// One line of the output manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ManifestRecord {
    pub output_path: PathBuf,
    pub content_path: PathBuf,
    pub texture_path: PathBuf,
    pub label: String,
    pub seed: u64,
    pub mode: String,
}

#[derive(Clone, Debug, Default)]
pub struct AugOutput {
    /// Generated images (AugSetB).
    pub set: ImageSet,
    pub records: Vec<ManifestRecord>,
    pub models_trained: usize,
    /// Checkpoints written in single-to-multi mode.
    pub checkpoints: Vec<PathBuf>,
}

impl AugOutput {
    fn extend(&mut self, other: AugOutput) {
        self.set.items.extend(other.set.items);
        self.records.extend(other.records);
        self.models_trained += other.models_trained;
        self.checkpoints.extend(other.checkpoints);
    }

    /// CSV with one row per generated image; the header is written even
    /// when there are no rows.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        w.write_record(MANIFEST_HEADER)
            .map_err(|e| Error::Job(format!("manifest: {e}")))?;
        for r in &self.records {
            w.serialize(r)
                .map_err(|e| Error::Job(format!("manifest: {e}")))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::Job(format!("manifest: {e}")))?;
        atomic_write(path, &bytes)
    }
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

/// Loads every readable item, logging and skipping the rest.
fn load_readable(set: &ImageSet, side: usize) -> Vec<(usize, Tensor)> {
    set.items
        .iter()
        .enumerate()
        .filter_map(|(i, (p, _))| {
            match load_image(p).and_then(|t| fit(&t, side)) {
                Ok(t) => Some((i, t)),
                Err(e) => {
                    log::warn!("skipping unreadable image: {e}");
                    None
                }
            }
        })
        .collect()
}

fn fit(t: &Tensor, side: usize) -> Result<Tensor> {
    let s = t.shape();
    if s.h() == side && s.w() == side {
        Ok(t.clone())
    } else {
        resize_bilinear(t, side, side)
    }
}

fn check_job(job: &AugJob, mode: Mode) -> Result<()> {
    if job.mode != mode {
        return Err(Error::Argument(format!(
            "job mode is {}, expected {mode}",
            job.mode
        )));
    }
    if job.content_set.is_empty() {
        return Err(Error::Argument("content set is empty".into()));
    }
    if job.texture_set.is_empty() {
        return Err(Error::Argument("texture set is empty".into()));
    }
    job.train_cfg.validate()?;
    std::fs::create_dir_all(&job.output_dir).map_err(|e| Error::io(&job.output_dir, e))
}

struct Emit<'a> {
    job: &'a AugJob,
    ci: usize,
    ti: usize,
    seed: u64,
}

impl Emit<'_> {
    fn write(&self, image: &Tensor) -> Result<(PathBuf, ManifestRecord)> {
        let (cp, cl) = &self.job.content_set.items[self.ci];
        let (tp, tl) = &self.job.texture_set.items[self.ti];
        let out = self.job.output_dir.join(format!(
            "{}__x__{}__{}.png",
            stem(cp),
            stem(tp),
            self.seed
        ));
        save_image(image, &out)?;
        let label = match self.job.label_policy {
            LabelPolicy::TextureLabel => tl.clone(),
            LabelPolicy::ContentLabel => cl.clone(),
        };
        let rec = ManifestRecord {
            output_path: out.clone(),
            content_path: cp.clone(),
            texture_path: tp.clone(),
            label,
            seed: self.seed,
            mode: self.job.mode.name().into(),
        };
        Ok((out, rec))
    }
}

fn output_tag(job: &AugJob) -> String {
    match job.label_policy {
        LabelPolicy::TextureLabel => job.texture_set.domain_tag.clone(),
        LabelPolicy::ContentLabel => job.content_set.domain_tag.clone(),
    }
}

fn collect(job: &AugJob, results: Vec<(PathBuf, ManifestRecord)>, models: usize, ckpts: Vec<PathBuf>) -> AugOutput {
    let mut set = ImageSet::new(output_tag(job));
    let mut records = Vec::with_capacity(results.len());
    for (p, r) in results {
        set.push(p, r.label.clone());
        records.push(r);
    }
    AugOutput {
        set,
        records,
        models_trained: models,
        checkpoints: ckpts,
    }
}

fn skip_failed<T>(what: impl FnOnce() -> String, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("skipping {}: {e}", what());
            None
        }
    }
}

fn run_single_to_single(job: &AugJob) -> Result<AugOutput> {
    check_job(job, Mode::SingleToSingle)?;
    let side = job.train_cfg.image_side;
    let contents = load_readable(&job.content_set, side);
    let textures = load_readable(&job.texture_set, side);
    let pairs: Vec<_> = contents
        .iter()
        .flat_map(|c| textures.iter().map(move |t| (c, t)))
        .collect();
    let results = pairs
        .par_iter()
        .map(|((ci, content), (ti, texture))| -> Result<_> {
            let seed = mix_seed(job.train_cfg.seed, ((*ci as u64) << 32) | *ti as u64);
            let cfg = TrainConfig {
                seed,
                ..job.train_cfg.clone()
            };
            let (model, _) = train_pair(content, texture, &cfg)?;
            let out = model.translate(content, texture, DomainId::B)?;
            Emit {
                job,
                ci: *ci,
                ti: *ti,
                seed,
            }
            .write(&out)
        })
        .collect::<Vec<_>>();
    let models = pairs.len();
    let results = pairs
        .iter()
        .zip(results)
        .filter_map(|(((ci, _), (ti, _)), r)| {
            skip_failed(|| format!("pair ({ci}, {ti})"), r)
        })
        .collect();
    Ok(collect(job, results, models, Vec::new()))
}

fn run_single_to_multi(job: &AugJob) -> Result<AugOutput> {
    check_job(job, Mode::SingleToMulti)?;
    let side = job.train_cfg.image_side;
    let contents = load_readable(&job.content_set, side);
    let textures = load_readable(&job.texture_set, side);
    if contents.is_empty() {
        return Err(Error::Job("no readable content image".into()));
    }
    let model_dir = job.output_dir.join("models");
    let per_texture = textures
        .par_iter()
        .map(|(ti, texture)| -> Result<_> {
            let seed = mix_seed(job.train_cfg.seed, *ti as u64);
            let cfg = TrainConfig {
                seed,
                ..job.train_cfg.clone()
            };
            let mut trainer = Trainer::<f32>::new(cfg.clone())?;
            let mut order_rng = Rng::new(seed).fork(2);
            let mut order: Vec<usize> = (0..contents.len()).collect();
            for it in 0..cfg.iters {
                let k = it % order.len();
                if k == 0 {
                    order_rng.shuffle(&mut order);
                }
                trainer.step(&contents[order[k]].1, texture)?;
            }
            std::fs::create_dir_all(&model_dir).map_err(|e| Error::io(&model_dir, e))?;
            let (tp, _) = &job.texture_set.items[*ti];
            let ckpt = model_dir.join(format!("{}__{seed}.ckpt", stem(tp)));
            save_checkpoint(&trainer.model, &ckpt)?;
            let mut outs = Vec::with_capacity(contents.len());
            for (ci, content) in &contents {
                let out = trainer.model.translate(content, texture, DomainId::B)?;
                outs.push(
                    Emit {
                        job,
                        ci: *ci,
                        ti: *ti,
                        seed,
                    }
                    .write(&out)?,
                );
            }
            Ok((ckpt, outs))
        })
        .collect::<Vec<_>>();
    let models = per_texture.len();
    let mut ckpts = Vec::with_capacity(models);
    let mut results = Vec::new();
    for ((ti, _), r) in textures.iter().zip(per_texture) {
        if let Some((c, outs)) = skip_failed(|| format!("texture image {ti}"), r) {
            ckpts.push(c);
            results.extend(outs);
        }
    }
    Ok(collect(job, results, models, ckpts))
}

/// Writes the manifest, then fails if nothing was produced.
fn finish(out: AugOutput, manifest: &Path) -> Result<AugOutput> {
    out.write_manifest(manifest)?;
    if out.records.is_empty() {
        return Err(Error::Job("no output image was produced".into()));
    }
    Ok(out)
}

/// Trains one fresh model per (content, texture) pair and writes
/// `|content|·|texture|` translations plus `manifest.csv` into the output dir.
pub fn augment_single_to_single(job: &AugJob) -> Result<AugOutput> {
    let out = run_single_to_single(job)?;
    finish(out, &job.output_dir.join("manifest.csv"))
}

/// Trains one model per texture image, cycling through the content images in
/// a shuffled round-robin for `iters` steps, saves it under `models/` and
/// translates every content image with it.
pub fn augment_single_to_multi(job: &AugJob) -> Result<AugOutput> {
    let out = run_single_to_multi(job)?;
    finish(out, &job.output_dir.join("manifest.csv"))
}

pub fn run_job(job: &AugJob) -> Result<AugOutput> {
    match job.mode {
        Mode::SingleToSingle => augment_single_to_single(job),
        Mode::SingleToMulti => augment_single_to_multi(job),
    }
}

/// Within-class augmentation: every image serves once as the texture source
/// for the `k` images that follow it (cyclically) as content. Outputs keep
/// the class label. A class with one image yields nothing.
pub fn fewshot_within_class_augment(
    class_images: &ImageSet,
    k: usize,
    mode: Mode,
    train_cfg: &TrainConfig,
    output_dir: &Path,
) -> Result<AugOutput> {
    let n = class_images.len();
    let empty = || AugOutput {
        set: ImageSet::new(class_images.domain_tag.clone()),
        ..Default::default()
    };
    if n < 2 {
        log::warn!(
            "class '{}' has {n} image(s); skipping within-class augmentation",
            class_images.domain_tag
        );
        return Ok(empty());
    }
    if k > n - 1 {
        return Err(Error::Argument(format!(
            "k = {k} exceeds the {} other images of the class",
            n - 1
        )));
    }
    let mut total = empty();
    if k == 0 {
        return Ok(total);
    }
    for ti in 0..n {
        let content_set = ImageSet {
            items: (1..=k).map(|d| class_images.items[(ti + d) % n].clone()).collect(),
            domain_tag: class_images.domain_tag.clone(),
        };
        let job = AugJob {
            content_set,
            texture_set: ImageSet {
                items: vec![class_images.items[ti].clone()],
                domain_tag: class_images.domain_tag.clone(),
            },
            mode,
            label_policy: LabelPolicy::ContentLabel,
            train_cfg: TrainConfig {
                seed: mix_seed(train_cfg.seed, ti as u64),
                ..train_cfg.clone()
            },
            output_dir: output_dir.to_path_buf(),
        };
        let out = match mode {
            Mode::SingleToSingle => run_single_to_single(&job)?,
            Mode::SingleToMulti => run_single_to_multi(&job)?,
        };
        total.extend(out);
    }
    finish(total, &output_dir.join("manifest.csv"))
}

/// Cycles through `set` until it holds exactly `target_count` items.
pub fn repeat_baseline(set: &ImageSet, target_count: usize) -> Result<ImageSet> {
    if set.is_empty() {
        return Err(Error::Argument("cannot repeat an empty set".into()));
    }
    if target_count < set.len() {
        return Err(Error::Argument(format!(
            "target count {target_count} is below the set size {}",
            set.len()
        )));
    }
    Ok(ImageSet {
        items: set.items.iter().cycle().take(target_count).cloned().collect(),
        domain_tag: set.domain_tag.clone(),
    })
}
