//! Adam, input augmentation and the alternating per-pair training loop.

use std::ops::ControlFlow;

use crate::error::{Error, Result};
use crate::losses::{
    generator_adversarial, loss_adversarial, loss_cycle, loss_identity, loss_kl, loss_perceptual,
    loss_total, FeaturePyramid, GeneratorTerms, LossReport, LossWeights, Side,
};
use crate::model::{DomainId, ModelConfig, SittaModel};
use crate::nn::{Graph, ParamId, ParamStore};
use crate::tensor::{Element, Rng, Tensor};

/// Adam moments for one parameter.
#[derive(Clone, Debug)]
pub struct AdamState<E: Element = f32> {
    pub m: Tensor<E>,
    pub v: Tensor<E>,
    pub t: u64,
}

impl<E: Element> AdamState<E> {
    pub fn new(like: &Tensor<E>) -> Self {
        AdamState {
            m: Tensor::zeros(like.shape()),
            v: Tensor::zeros(like.shape()),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
pub fn adam_step<E: Element>(
    param: &mut Tensor<E>,
    grad: &Tensor<E>,
    state: &mut AdamState<E>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<()> {
    if param.shape() != grad.shape() || state.m.shape() != param.shape() {
        return Err(Error::Dimension(format!(
            "adam: parameter {} vs gradient {}",
            param.shape(),
            grad.shape()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    let (m, v) = (state.m.data_mut(), state.v.data_mut());
    for (i, p) in param.data_mut().iter_mut().enumerate() {
        let g = grad.data()[i].as_f64();
        let mi = beta1 * m[i].as_f64() + (1.0 - beta1) * g;
        let vi = beta2 * v[i].as_f64() + (1.0 - beta2) * g * g;
        m[i] = E::from_f64_lossy(mi);
        v[i] = E::from_f64_lossy(vi);
        let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
        *p = E::from_f64_lossy(p.as_f64() - update);
    }
    Ok(())
}

/// Adam over a subset of a parameter store.
#[derive(Clone, Debug)]
pub struct Adam<E: Element = f32> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    states: Vec<Option<AdamState<E>>>,
}

impl<E: Element> Adam<E> {
    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps: 1e-8,
            states: Vec::new(),
        }
    }

    pub fn step(
        &mut self,
        store: &mut ParamStore<E>,
        grads: &[(ParamId, Tensor<E>)],
    ) -> Result<()> {
        for (id, g) in grads {
            let i = id.index();
            if self.states.len() <= i {
                self.states.resize(i + 1, None);
            }
            let value = store.value_mut(*id);
            let state = self.states[i].get_or_insert_with(|| AdamState::new(value));
            adam_step(value, g, state, self.lr, self.beta1, self.beta2, self.eps)?;
        }
        Ok(())
    }
}

/// Mirror image along the width axis.
pub fn hflip<E: Element>(image: &Tensor<E>) -> Tensor<E> {
    let w = image.shape().w();
    Tensor::from_fn(image.shape(), |[n, c, y, x]| image.at([n, c, y, w - 1 - x]))
}

/// Square window `side`×`side` starting at (top, left).
pub fn crop<E: Element>(
    image: &Tensor<E>,
    top: usize,
    left: usize,
    side: usize,
) -> Result<Tensor<E>> {
    let s = image.shape();
    if top + side > s.h() || left + side > s.w() || side == 0 {
        return Err(Error::Argument(format!(
            "crop {side}px at ({top},{left}) exceeds {s}"
        )));
    }
    Ok(Tensor::from_fn(
        [s.n(), s.c(), side, side],
        |[n, c, y, x]| image.at([n, c, top + y, left + x]),
    ))
}

/// Bilinear resize with half-pixel centers; the identity when sizes match.
pub fn resize_bilinear<E: Element>(
    image: &Tensor<E>,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor<E>> {
    let s = image.shape();
    if out_h == 0 || out_w == 0 || s.h() == 0 || s.w() == 0 {
        return Err(Error::Argument(format!(
            "cannot resize {s} to {out_h}x{out_w}"
        )));
    }
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (inp - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_h, s.h());
    let xs = axis(out_w, s.w());
    Ok(Tensor::from_fn(
        [s.n(), s.c(), out_h, out_w],
        |[n, c, y, x]| {
            let (y0, y1, fy) = ys[y];
            let (x0, x1, fx) = xs[x];
            let p = |yy, xx| image.at([n, c, yy, xx]).as_f64();
            let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
            let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
            E::from_f64_lossy(top * (1.0 - fy) + bottom * fy)
        },
    ))
}

/// Concrete choice of augmentation for one view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub flip: bool,
    pub center: bool,
    /// Crop side as a fraction of the short image side.
    pub scale: f64,
}

impl AugmentParams {
    pub fn sample(rng: &mut Rng) -> Self {
        AugmentParams {
            flip: rng.bernoulli(0.5),
            center: rng.bernoulli(0.5),
            scale: rng.uniform(0.7, 1.0),
        }
    }
}

pub const MIN_AUGMENT_SIDE: usize = 16;

/// Random flip, then a centre or random square crop of 70–100 % of the short
/// side, then bilinear resize to `target_side`².
pub fn augment_input<E: Element>(
    image: &Tensor<E>,
    rng: &mut Rng,
    target_side: usize,
) -> Result<Tensor<E>> {
    let params = AugmentParams::sample(rng);
    apply_augment(image, &params, rng, target_side)
}

pub fn apply_augment<E: Element>(
    image: &Tensor<E>,
    params: &AugmentParams,
    rng: &mut Rng,
    target_side: usize,
) -> Result<Tensor<E>> {
    let s = image.shape();
    if s.h() < MIN_AUGMENT_SIDE || s.w() < MIN_AUGMENT_SIDE {
        return Err(Error::Argument(format!(
            "image {}x{} is below the {MIN_AUGMENT_SIDE}px augmentation minimum",
            s.h(),
            s.w()
        )));
    }
    if !(0.0..=1.0).contains(&params.scale) || params.scale == 0.0 {
        return Err(Error::Argument(format!(
            "crop scale {} outside (0, 1]",
            params.scale
        )));
    }
    let flipped;
    let src = if params.flip {
        flipped = hflip(image);
        &flipped
    } else {
        image
    };
    let short = s.h().min(s.w());
    let side = ((params.scale * short as f64).round() as usize).clamp(1, short);
    let (top, left) = if params.center {
        ((s.h() - side) / 2, (s.w() - side) / 2)
    } else {
        (rng.below(s.h() - side + 1), rng.below(s.w() - side + 1))
    };
    let cropped = crop(src, top, left, side)?;
    resize_bilinear(&cropped, target_side, target_side)
}

/// Hyperparameters of one per-pair training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub iters: usize,
    pub image_side: usize,
    pub seed: u64,
    pub weights: LossWeights,
    pub log_every: usize,
    pub model: ModelConfig,
    /// Seed of the frozen perceptual feature pyramid.
    pub perceptual_seed: u64,
    /// Disable to train on plain resized inputs.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-4,
            beta1: 0.5,
            beta2: 0.999,
            iters: 800,
            image_side: 288,
            seed: 0,
            weights: LossWeights::default(),
            log_every: 100,
            model: ModelConfig::default(),
            perceptual_seed: 1234,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::Argument("iters must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Argument(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if self.image_side != self.model.image_side {
            return Err(Error::Argument(format!(
                "image_side {} differs from the model's {}",
                self.image_side, self.model.image_side
            )));
        }
        self.weights.validate()?;
        self.model.validate()
    }

    /// Config whose model trains at `side` pixels.
    pub fn with_side(mut self, side: usize) -> Self {
        self.image_side = side;
        self.model.image_side = side;
        self
    }
}

/// Model, optimizers and RNG of an ongoing training run.
pub struct Trainer<E: Element = f32> {
    pub model: SittaModel<E>,
    cfg: TrainConfig,
    opt_g: Adam<E>,
    opt_d: Adam<E>,
    pyramid: FeaturePyramid<E>,
    rng: Rng,
    iter: usize,
}

impl<E: Element> Trainer<E> {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = SittaModel::new(cfg.model, crate::tensor::mix_seed(cfg.seed, 0x6d6f64656c))?;
        Ok(Trainer {
            model,
            opt_g: Adam::new(cfg.lr, cfg.beta1, cfg.beta2),
            opt_d: Adam::new(cfg.lr, cfg.beta1, cfg.beta2),
            pyramid: FeaturePyramid::new(cfg.perceptual_seed),
            rng: Rng::new(cfg.seed).fork(1),
            iter: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    fn view(&mut self, image: &Tensor<E>) -> Result<Tensor<E>> {
        let side = self.cfg.image_side;
        if self.cfg.augment {
            augment_input(image, &mut self.rng, side)
        } else {
            resize_bilinear(image, side, side)
        }
    }

    /// One iteration: discriminator update, then generator update.
    pub fn step(&mut self, i_a: &Tensor<E>, i_b: &Tensor<E>) -> Result<LossReport> {
        let iter = self.iter;
        let a = self.view(i_a)?;
        let b = self.view(i_b)?;
        let model = &self.model;

        let mut g = Graph::new(SittaModel::<E>::generator_groups());
        let av = g.input(a.clone());
        let bv = g.input(b.clone());
        let out = model.forward_pair(&mut g, av, bv)?;

        // discriminator on detached translations
        let mut gd = Graph::new(SittaModel::<E>::discriminator_groups());
        let mut d_total = None;
        for (domain, real, fake) in [
            (DomainId::A, &a, g.tape.value(out.b2a)),
            (DomainId::B, &b, g.tape.value(out.a2b)),
        ] {
            let rv = gd.input(real.clone());
            let fv = gd.input(fake.clone());
            let dr = model.discriminate(&mut gd, domain, rv)?;
            let df = model.discriminate(&mut gd, domain, fv)?;
            let l = loss_adversarial(&mut gd.tape, dr, df, Side::Discriminator)?;
            d_total = Some(match d_total {
                Some(t) => gd.tape.add(t, l)?,
                None => l,
            });
        }
        let d_total = d_total.expect("two domains");
        let adv_d = gd.tape.scalar(d_total);
        if !adv_d.is_finite() {
            return Err(Error::NonFinite {
                iter,
                component: "adv_d",
            });
        }
        let mut d_grads = gd.tape.backward(d_total)?;
        let d_grads = gd.param_grads(&model.store, &mut d_grads);
        drop(gd);
        self.opt_d.step(&mut self.model.store, &d_grads)?;
        let model = &self.model;

        // generator against the updated, frozen discriminators
        let logits_a = model.discriminate(&mut g, DomainId::A, out.b2a)?;
        let logits_b = model.discriminate(&mut g, DomainId::B, out.a2b)?;
        let t = &mut g.tape;
        let adv_a = generator_adversarial(t, logits_a);
        let adv_b = generator_adversarial(t, logits_b);
        let adv = t.add(adv_a, adv_b)?;
        let idt = loss_identity(t, out.aa, av, out.bb, bv)?;
        let rec = loss_cycle(t, out.aba, av, out.bab, bv)?;
        let kl_a = loss_kl(t, out.texture_a);
        let kl_b = loss_kl(t, out.texture_b);
        let kl = t.add(kl_a, kl_b)?;
        let pa = loss_perceptual(t, out.a2b, av, &self.pyramid)?;
        let pb = loss_perceptual(t, out.b2a, bv, &self.pyramid)?;
        let perceptual = t.add(pa, pb)?;
        let terms = GeneratorTerms {
            adv,
            idt,
            rec,
            kl,
            perceptual,
        };
        let total = loss_total(t, &terms, &self.cfg.weights)?;
        let report = LossReport::read(t, &terms, total, adv_d);
        if let Some(component) = report.non_finite_component() {
            return Err(Error::NonFinite { iter, component });
        }
        let mut grads = g.tape.backward(total)?;
        let grads = g.param_grads(&model.store, &mut grads);
        drop(g);
        self.opt_g.step(&mut self.model.store, &grads)?;
        self.iter += 1;
        Ok(report)
    }
}

/// Trains a fresh model on one (A, B) pair for `cfg.iters` iterations.
pub fn train_pair<E: Element>(
    i_a: &Tensor<E>,
    i_b: &Tensor<E>,
    cfg: &TrainConfig,
) -> Result<(SittaModel<E>, Vec<LossReport>)> {
    train_pair_observed(i_a, i_b, cfg, |_, _, _| ControlFlow::Continue(()))
}

/// As [`train_pair`], calling `observer(iter, report, model)` after every
/// iteration; returning `Break` stops early.
pub fn train_pair_observed<E: Element>(
    i_a: &Tensor<E>,
    i_b: &Tensor<E>,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &LossReport, &SittaModel<E>) -> ControlFlow<()>,
) -> Result<(SittaModel<E>, Vec<LossReport>)> {
    for (name, img) in [("A", i_a), ("B", i_b)] {
        let s = img.shape();
        if s.n() != 1 || s.c() != 3 {
            return Err(Error::Dimension(format!(
                "input {name} must be a single RGB image, got {s}"
            )));
        }
    }
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.iters);
    for it in 0..cfg.iters {
        let report = trainer.step(i_a, i_b)?;
        history.push(report);
        if observer(it, &report, &trainer.model).is_break() {
            break;
        }
    }
    Ok((trainer.model, history))
}

/// `decode(direction, En_T(texture), En_C(content))`; the model is not modified.
pub fn translate<E: Element>(
    model: &SittaModel<E>,
    content: &Tensor<E>,
    texture: &Tensor<E>,
    direction: DomainId,
) -> Result<Tensor<E>> {
    model.translate(content, texture, direction)
}
