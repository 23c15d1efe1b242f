use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use sitta::augmentor::{run_job, AugJob};
use sitta::downstream::{
    run_bench, translate_minority, BenchProtocol, ClassifierSpec, Composition, LongTailSetup,
};
use sitta::io::{
    atomic_write, load_checkpoint, load_image, make_synthetic_domain_pair, save_checkpoint,
    save_image, tile_grid, write_synthetic_set, ImageSet, RunConfig, ShapeKind, SyntheticSpec,
    TextureKind,
};
use sitta::losses::{FeaturePyramid, LossReport};
use sitta::metrics::{
    embed_for_fid, feature_reconstruction_loss, frechet_distance, perceptual_patch_distance,
};
use sitta::model::DomainId;
use sitta::tensor::mix_seed;
use sitta::trainer::{resize_bilinear, train_pair_observed, TrainConfig};
use sitta::{Error, Tensor};

use crate::run_manifest::RunManifest;
use crate::{
    AugmentArgs, BenchArgs, Direction, EvalArgs, GenDataArgs, Metric, TrainArgs, TrainFlags,
    TranslateArgs, UsageError,
};

/// Input-validation failures become usage errors; I/O failures stay runtime errors.
fn usage<T>(r: sitta::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io { .. } => anyhow::Error::new(e),
        other => anyhow::Error::new(UsageError(other.to_string())),
    })
}

fn run_config(flags: &TrainFlags, seed: Option<u64>) -> Result<RunConfig> {
    let mut rc = match &flags.config {
        Some(p) => usage(RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    macro_rules! over {
        ($($f:ident => $k:ident),+ $(,)?) => { $(if let Some(v) = flags.$f { rc.$k = Some(v); })+ };
    }
    over!(
        iters => iters, size => image_side, lr => lr, base_channels => base_channels,
        texture_dim => texture_dim, log_every => log_every, lambda_idt => lambda_idt,
        lambda_rec => lambda_rec, lambda_kl => lambda_kl, lambda_f => lambda_f,
    );
    if flags.no_augment {
        rc.augment = Some(false);
    }
    if seed.is_some() {
        rc.seed = seed;
    }
    Ok(rc)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn fit(t: &Tensor, side: usize) -> Result<Tensor> {
    let s = t.shape();
    if s.h() == side && s.w() == side {
        Ok(t.clone())
    } else {
        Ok(resize_bilinear(t, side, side)?)
    }
}

pub fn train(a: TrainArgs) -> Result<()> {
    let rc = run_config(&a.train, Some(a.seed))?;
    let cfg = usage(rc.apply_train(&TrainConfig::default()))?;
    let content = load_image(&a.content)?;
    let texture = load_image(&a.texture)?;
    create_dir(&a.out)?;
    info!(
        "training {} iterations at {}px, seed {}",
        cfg.iters, cfg.image_side, cfg.seed
    );

    let every = cfg.log_every.max(1);
    let (model, history) = train_pair_observed(&content, &texture, &cfg, |i, r, _| {
        if i == 0 || (i + 1) % every == 0 {
            info!("iter {:>5}  total {:.4}  idt {:.4}  rec {:.4}  adv_d {:.4}", i + 1, r.total, r.idt, r.rec, r.adv_d);
        }
        ControlFlow::Continue(())
    })?;

    let mut man = RunManifest::new("train", Some(cfg.seed));
    let ckpt = a.out.join("model.ckpt");
    save_checkpoint(&model, &ckpt)?;
    man.add("checkpoint", &ckpt);

    let mut csv = String::from(LossReport::CSV_HEADER);
    csv.push('\n');
    for (i, r) in history.iter().enumerate() {
        csv.push_str(&r.csv_row(i));
        csv.push('\n');
    }
    let losses = a.out.join("losses.csv");
    atomic_write(&losses, csv.as_bytes())?;
    man.add("loss_log", &losses);

    let side = cfg.image_side;
    let (ia, ib) = (fit(&content, side)?, fit(&texture, side)?);
    let grid = tile_grid(&[
        vec![
            ia.clone(),
            model.translate(&ia, &ib, DomainId::B)?,
            model.translate(&ia, &ia, DomainId::A)?,
        ],
        vec![
            ib.clone(),
            model.translate(&ib, &ia, DomainId::A)?,
            model.translate(&ib, &ib, DomainId::B)?,
        ],
    ])?;
    let grid_path = a.out.join("grid.png");
    save_image(&grid, &grid_path)?;
    man.add("comparison_grid", &grid_path);

    let cfg_path = a.out.join("config.toml");
    RunConfig::from_train(&cfg).save(&cfg_path)?;
    man.add("config", &cfg_path);
    man.write(&a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}

pub fn translate(a: TranslateArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let mut content = load_image(&a.content)?;
    let mut texture = load_image(&a.texture)?;
    if let Some(side) = a.size {
        content = fit(&content, side)?;
        texture = fit(&texture, side)?;
    }
    let domain = match a.direction {
        Direction::A => DomainId::A,
        Direction::B => DomainId::B,
    };
    let out = model.translate(&content, &texture, domain)?;
    let dir = match a.out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    save_image(&out, &a.out)?;
    let mut man = RunManifest::new("translate", None);
    man.add("image", &a.out);
    man.write(&dir)?;
    Ok(())
}

/// Relative paths in a job file are taken relative to the file's directory.
fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

pub fn augment(a: AugmentArgs) -> Result<()> {
    let mut rc = usage(RunConfig::load(&a.job))?;
    let base = a.job.parent().unwrap_or(Path::new("")).to_path_buf();
    rebase(&base, &mut rc.content_dir);
    rebase(&base, &mut rc.texture_dir);
    rebase(&base, &mut rc.output_dir);
    let flags = run_config(&a.train, Some(a.seed))?;
    let mut merged = merge(rc, flags);
    if let Some(o) = a.out {
        merged.output_dir = Some(o);
    }
    let job = usage(AugJob::from_config(&merged, &TrainConfig::default()))?;
    info!(
        "{} job: {} content x {} texture images, {} iterations at {}px",
        job.mode,
        job.content_set.len(),
        job.texture_set.len(),
        job.train_cfg.iters,
        job.train_cfg.image_side
    );
    let result = run_job(&job);

    let mut man = RunManifest::new("augment", Some(job.train_cfg.seed));
    let manifest = job.output_dir.join("manifest.csv");
    if manifest.exists() {
        man.add("manifest", &manifest);
    }
    if let Ok(out) = &result {
        for (p, _) in &out.set.items {
            man.add("image", p);
        }
        for c in &out.checkpoints {
            man.add("checkpoint", c);
        }
        info!("{} images, {} models trained", out.set.len(), out.models_trained);
    }
    if job.output_dir.is_dir() {
        man.write(&job.output_dir)?;
    }
    result?;
    Ok(())
}

/// Keys present in `over` replace those in `base`.
fn merge(base: RunConfig, over: RunConfig) -> RunConfig {
    macro_rules! pick {
        ($($f:ident),+ $(,)?) => { RunConfig { $($f: over.$f.or(base.$f),)+ } };
    }
    pick!(
        lr, beta1, beta2, iters, image_side, seed, log_every, perceptual_seed, augment,
        texture_dim, base_channels, res_blocks, lambda_idt, lambda_rec, lambda_kl, lambda_f,
        content_dir, content_label, texture_dir, texture_label, mode, label_policy, k,
        output_dir,
    )
}

fn load_set(dir: &Path, size: Option<usize>) -> Result<(ImageSet, Vec<Tensor>)> {
    let set = ImageSet::from_dir(dir, "")?;
    if set.is_empty() {
        anyhow::bail!("{} contains no .png or .ppm images", dir.display());
    }
    let mut imgs = set.load_all()?;
    if let Some(side) = size {
        imgs = imgs.iter().map(|t| fit(t, side)).collect::<Result<_>>()?;
    }
    Ok((set, imgs))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let (_, xa) = load_set(&a.set_a, a.size)?;
    let (_, xb) = load_set(&a.set_b, a.size)?;
    let backbone = FeaturePyramid::<f32>::new(a.backbone_seed);
    let mut report = String::from("metric,value\n");
    for m in &a.metrics {
        let v = match m {
            Metric::Fid => {
                frechet_distance(&embed_for_fid(&xa, &backbone)?, &embed_for_fid(&xb, &backbone)?)?
            }
            Metric::Lpips | Metric::Vgg => {
                if xa.len() != xb.len() {
                    anyhow::bail!(
                        "{m} pairs images by name and needs equal set sizes, got {} and {}",
                        xa.len(),
                        xb.len()
                    );
                }
                let mut acc = 0.0;
                for (x, y) in xa.iter().zip(&xb) {
                    acc += if *m == Metric::Lpips {
                        perceptual_patch_distance(x, y, &backbone)?
                    } else {
                        feature_reconstruction_loss(x, y, &backbone)?
                    };
                }
                acc / xa.len() as f64
            }
        };
        info!("{m}: {v:.6}");
        report.push_str(&format!("{m},{v}\n"));
    }
    let dir = match a.out.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    create_dir(&dir)?;
    atomic_write(&a.out, report.as_bytes())?;
    print!("{report}");
    let mut man = RunManifest::new("eval", None);
    man.add("report", &a.out);
    man.write(&dir)?;
    Ok(())
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let compositions = a
        .compositions
        .iter()
        .map(|c| usage(c.parse::<Composition>()))
        .collect::<Result<Vec<_>>>()?;
    if a.seeds == 0 {
        return Err(UsageError("--seeds must be at least 1".into()).into());
    }
    let rc = run_config(&a.train, Some(a.seed))?;
    let cfg = usage(rc.apply_train(&TrainConfig::default().with_side(64)))?;
    let setup = LongTailSetup {
        majority: a.majority,
        minority: a.minority,
        test_per_class: a.test_per_class,
        side: cfg.image_side,
        seed: a.seed,
        ..LongTailSetup::default()
    };
    create_dir(&a.out)?;
    let mut man = RunManifest::new("bench", Some(a.seed));
    let mut data = usage(setup.materialize(&a.out.join("data")))?;
    for (p, _) in data.majority.items.iter().chain(&data.minority.items).chain(&data.test.items) {
        man.add("data_image", p);
    }
    if compositions
        .iter()
        .any(|c| matches!(c, Composition::Sitta | Composition::SittaPlusRepeat))
    {
        info!("translating the minority texture onto {} images", data.majority.len());
        let dir = a.out.join("sitta");
        let set = translate_minority(&data, &cfg, &dir)?;
        for (p, _) in &set.items {
            man.add("sitta_image", p);
        }
        man.add("manifest", dir.join("manifest.csv"));
        data.sitta = Some(set);
    }
    let protocol = BenchProtocol {
        compositions,
        classifier: ClassifierSpec {
            input_side: cfg.image_side,
            epochs: a.epochs,
            ..ClassifierSpec::default()
        },
        seeds: (0..a.seeds as u64).map(|i| a.seed + i).collect(),
    };
    let table = run_bench(&protocol, &data)?;
    let results = a.out.join("results.csv");
    table.write_csv(&results)?;
    man.add("results", &results);
    man.write(&a.out)?;
    print!("{}", String::from_utf8_lossy(&table.to_csv()?));
    Ok(())
}

pub fn gen_data(a: GenDataArgs) -> Result<()> {
    let texture: TextureKind = usage(a.texture.parse())?;
    let shape: ShapeKind = usage(a.shape.parse())?;
    let spec = SyntheticSpec {
        texture,
        shape,
        side: a.side,
        count: a.count,
        seed: a.seed,
    };
    usage(spec.validate())?;
    create_dir(&a.out)?;
    let mut man = RunManifest::new("gen-data", Some(a.seed));
    let sets = match &a.texture_b {
        Some(tb) => {
            let spec_b = SyntheticSpec {
                texture: usage(tb.parse())?,
                seed: mix_seed(a.seed, 1),
                ..spec
            };
            let (x, y) = make_synthetic_domain_pair(&spec, &spec_b, &a.out)?;
            vec![x, y]
        }
        None => vec![write_synthetic_set(&spec, texture.name(), &a.out)?],
    };
    for s in &sets {
        for (p, _) in &s.items {
            man.add("image", p);
        }
        info!("{}: {} images", s.domain_tag, s.len());
    }
    man.write(&a.out)?;
    Ok(())
}
