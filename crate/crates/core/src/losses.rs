//! Training objective: adversarial, identity, cycle, texture-code and
//! perceptual terms and their weighted sum.

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Element, PadMode, Rng, Tape, Tensor, Var};

/// Weights of the non-adversarial terms. The adversarial term has weight 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_idt: f64,
    pub lambda_rec: f64,
    pub lambda_kl: f64,
    pub lambda_f: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_idt: 10.0,
            lambda_rec: 10.0,
            lambda_kl: 0.01,
            lambda_f: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_idt,
            self.lambda_rec,
            self.lambda_kl,
            self.lambda_f,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Argument(format!(
                "loss weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Generator-side loss components. `T` is a tape node or a plain value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorTerms<T> {
    pub adv: T,
    pub idt: T,
    pub rec: T,
    pub kl: T,
    pub perceptual: T,
}

/// Scalar values of every loss term for one iteration.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub adv_g: f64,
    pub adv_d: f64,
    pub idt: f64,
    pub rec: f64,
    pub kl: f64,
    pub perceptual: f64,
    pub total: f64,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "iter,adv_g,adv_d,idt,rec,kl,perceptual,total";

    /// Weighted total from plain component values.
    pub fn compose(terms: GeneratorTerms<f64>, adv_d: f64, w: &LossWeights) -> Result<LossReport> {
        let mut tape = Tape::<f64>::new();
        let mut c = |v: f64| tape.constant(Tensor::scalar(v));
        let vars = GeneratorTerms {
            adv: c(terms.adv),
            idt: c(terms.idt),
            rec: c(terms.rec),
            kl: c(terms.kl),
            perceptual: c(terms.perceptual),
        };
        let total = loss_total(&mut tape, &vars, w)?;
        Ok(LossReport::read(&tape, &vars, total, adv_d))
    }

    /// Reads component values off a tape.
    pub fn read<E: Element>(
        tape: &Tape<E>,
        terms: &GeneratorTerms<Var>,
        total: Var,
        adv_d: f64,
    ) -> LossReport {
        LossReport {
            adv_g: tape.scalar(terms.adv),
            adv_d,
            idt: tape.scalar(terms.idt),
            rec: tape.scalar(terms.rec),
            kl: tape.scalar(terms.kl),
            perceptual: tape.scalar(terms.perceptual),
            total: tape.scalar(total),
        }
    }

    pub fn csv_row(&self, iter: usize) -> String {
        format!(
            "{iter},{},{},{},{},{},{},{}",
            self.adv_g, self.adv_d, self.idt, self.rec, self.kl, self.perceptual, self.total
        )
    }

    /// First non-finite component, if any.
    pub fn non_finite_component(&self) -> Option<&'static str> {
        [
            ("adv_g", self.adv_g),
            ("adv_d", self.adv_d),
            ("idt", self.idt),
            ("rec", self.rec),
            ("kl", self.kl),
            ("perceptual", self.perceptual),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(name, _)| name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Generator,
    Discriminator,
}

/// Cross-entropy GAN loss on patch logits.
///
/// Discriminator: `mean softplus(-real) + mean softplus(fake)`.
/// Generator (non-saturating): `mean softplus(-fake)`; `d_real` only has its
/// shape checked.
pub fn loss_adversarial<E: Element>(
    tape: &mut Tape<E>,
    d_real: Var,
    d_fake: Var,
    side: Side,
) -> Result<Var> {
    let (sr, sf) = (tape.shape(d_real), tape.shape(d_fake));
    if sr != sf {
        return Err(dim_err!("logit maps differ: {sr} vs {sf}"));
    }
    match side {
        Side::Generator => Ok(generator_adversarial(tape, d_fake)),
        Side::Discriminator => {
            let neg = tape.neg(d_real);
            let real = tape.softplus(neg);
            let real = tape.mean(real);
            let fake = tape.softplus(d_fake);
            let fake = tape.mean(fake);
            tape.add(real, fake)
        }
    }
}

/// `-mean log σ(fake)`.
pub fn generator_adversarial<E: Element>(tape: &mut Tape<E>, d_fake: Var) -> Var {
    let neg = tape.neg(d_fake);
    let sp = tape.softplus(neg);
    tape.mean(sp)
}

/// `mean|i_aa - i_a| + mean|i_bb - i_b|`.
pub fn loss_identity<E: Element>(
    tape: &mut Tape<E>,
    i_aa: Var,
    i_a: Var,
    i_bb: Var,
    i_b: Var,
) -> Result<Var> {
    let a = tape.l1_distance(i_aa, i_a)?;
    let b = tape.l1_distance(i_bb, i_b)?;
    tape.add(a, b)
}

/// `mean|i_ba - i_a| + mean|i_ab - i_b|`.
pub fn loss_cycle<E: Element>(
    tape: &mut Tape<E>,
    i_ba: Var,
    i_a: Var,
    i_ab: Var,
    i_b: Var,
) -> Result<Var> {
    loss_identity(tape, i_ba, i_a, i_ab, i_b)
}

/// Mean square of the texture code (all batch items and components).
pub fn loss_kl<E: Element>(tape: &mut Tape<E>, t: Var) -> Var {
    let sq = tape.square(t);
    tape.mean(sq)
}

/// Fixed random convolutional feature extractor, 3→16→32→64 channels, each
/// stage a stride-2 3×3 convolution followed by ReLU.
#[derive(Clone, Debug)]
pub struct FeaturePyramid<E: Element = f32> {
    seed: u64,
    stages: Vec<(Tensor<E>, Tensor<E>)>,
}

impl<E: Element> FeaturePyramid<E> {
    pub const WIDTHS: [usize; 4] = [3, 16, 32, 64];

    pub fn new(seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let stages = Self::WIDTHS
            .windows(2)
            .map(|w| {
                let (ci, co) = (w[0], w[1]);
                let std = (2.0 / (ci * 9) as f64).sqrt();
                (
                    Tensor::randn([co, ci, 3, 3], std, &mut rng),
                    Tensor::zeros([co, 1, 1, 1]),
                )
            })
            .collect();
        FeaturePyramid { seed, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Activations after each stage.
    pub fn features(&self, tape: &mut Tape<E>, x: Var) -> Result<Vec<Var>> {
        let s = tape.shape(x);
        if s.c() != 3 {
            return Err(dim_err!("feature pyramid expects RGB input, got {s}"));
        }
        let mut out = Vec::with_capacity(self.stages.len());
        let mut h = x;
        for (w, b) in &self.stages {
            let w = tape.constant(w.clone());
            let b = tape.constant(b.clone());
            h = tape.conv2d(h, w, Some(b), 2, PadMode::Zero(1))?;
            h = tape.relu(h);
            out.push(h);
        }
        Ok(out)
    }

    /// Spatially pooled final-stage features, one 64-vector per batch item.
    pub fn pooled_final(&self, image: &Tensor<E>) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let x = tape.constant(image.clone());
        let last = *self.features(&mut tape, x)?.last().expect("pyramid has stages");
        let pooled = tape.global_avg_pool(last);
        let v = tape.value(pooled);
        Ok((0..v.shape().n())
            .map(|b| (0..v.shape().c()).map(|k| v.at([b, k, 0, 0]).as_f64()).collect())
            .collect())
    }
}

/// Sum over pyramid levels of the mean squared feature difference. The
/// reference is detached so gradients reach `out` only.
pub fn loss_perceptual<E: Element>(
    tape: &mut Tape<E>,
    out: Var,
    reference: Var,
    backbone: &FeaturePyramid<E>,
) -> Result<Var> {
    let (so, sr) = (tape.shape(out), tape.shape(reference));
    if so != sr {
        return Err(dim_err!("perceptual loss inputs differ: {so} vs {sr}"));
    }
    let reference = tape.detach(reference);
    let fo = backbone.features(tape, out)?;
    let fr = backbone.features(tape, reference)?;
    let mut total: Option<Var> = None;
    for (a, b) in fo.into_iter().zip(fr) {
        let d = tape.squared_distance(a, b)?;
        total = Some(match total {
            Some(t) => tape.add(t, d)?,
            None => d,
        });
    }
    Ok(total.expect("pyramid has stages"))
}

/// `adv + λ_idt·idt + λ_rec·rec + λ_kl·kl + λ_f·perceptual`.
pub fn loss_total<E: Element>(
    tape: &mut Tape<E>,
    terms: &GeneratorTerms<Var>,
    w: &LossWeights,
) -> Result<Var> {
    w.validate()?;
    let mut total = terms.adv;
    for (v, lambda) in [
        (terms.idt, w.lambda_idt),
        (terms.rec, w.lambda_rec),
        (terms.kl, w.lambda_kl),
        (terms.perceptual, w.lambda_f),
    ] {
        let scaled = tape.mul_scalar(v, lambda);
        total = tape.add(total, scaled)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, SittaModel};
    use crate::nn::{Graph, Group, GroupSet};
    use crate::tensor::Rng;
    use proptest::prelude::{prop_assert, proptest, Strategy};

    fn scalar_loss(f: impl Fn(&mut Tape<f64>) -> Result<Var>) -> f64 {
        let mut t = Tape::new();
        let v = f(&mut t).unwrap();
        t.scalar(v)
    }

    fn logits(v: f64) -> Tensor<f64> {
        Tensor::full([1, 1, 4, 4], v)
    }

    #[test]
    fn adversarial_reference_values() {
        let d = scalar_loss(|t| {
            let r = t.constant(logits(0.0));
            let f = t.constant(logits(0.0));
            loss_adversarial(t, r, f, Side::Discriminator)
        });
        assert!((d - 2.0 * 2f64.ln()).abs() < 1e-12);
        let g = scalar_loss(|t| {
            let r = t.constant(logits(0.0));
            let f = t.constant(logits(0.0));
            loss_adversarial(t, r, f, Side::Generator)
        });
        assert!((g - 2f64.ln()).abs() < 1e-12);
        let perfect = scalar_loss(|t| {
            let r = t.constant(logits(1e4));
            let f = t.constant(logits(-1e4));
            loss_adversarial(t, r, f, Side::Discriminator)
        });
        assert!(perfect.abs() < 1e-12 && perfect.is_finite());
        let mismatch = {
            let mut t = Tape::<f64>::new();
            let r = t.constant(logits(0.0));
            let f = t.constant(Tensor::zeros([1, 1, 2, 2]));
            loss_adversarial(&mut t, r, f, Side::Generator)
        };
        assert!(mismatch.is_err());
    }

    #[test]
    fn identity_loss_values() {
        let mut rng = Rng::new(4);
        let x = Tensor::<f64>::uniform([1, 3, 5, 5], -1.0, 1.0, &mut rng);
        let zero = scalar_loss(|t| {
            let a = t.constant(x.clone());
            loss_identity(t, a, a, a, a)
        });
        assert_eq!(zero, 0.0);
        let half = scalar_loss(|t| {
            let a = t.constant(Tensor::full([1, 3, 4, 4], 0.25));
            let b = t.constant(Tensor::full([1, 3, 4, 4], -0.25));
            loss_identity(t, a, b, b, a)
        });
        assert!((half - 1.0).abs() < 1e-12);

        let ts: Vec<_> = (0..4)
            .map(|_| Tensor::<f64>::uniform([2, 3, 4, 5], -1.0, 1.0, &mut rng))
            .collect();
        let oracle = |p: &Tensor<f64>, q: &Tensor<f64>| {
            let mut s = 0.0;
            for i in 0..p.numel() {
                s += (p.data()[i] - q.data()[i]).abs();
            }
            s / p.numel() as f64
        };
        let expected = oracle(&ts[0], &ts[1]) + oracle(&ts[2], &ts[3]);
        let got = scalar_loss(|t| {
            let v: Vec<_> = ts.iter().map(|x| t.constant(x.clone())).collect();
            loss_identity(t, v[0], v[1], v[2], v[3])
        });
        assert!((got - expected).abs() < 1e-6);
        let swapped = scalar_loss(|t| {
            let v: Vec<_> = ts.iter().map(|x| t.constant(x.clone())).collect();
            loss_cycle(t, v[2], v[3], v[0], v[1])
        });
        assert!((got - swapped).abs() < 1e-12);
    }

    #[test]
    fn kl_values() {
        let z = scalar_loss(|t| {
            Ok({
                let v = t.constant(Tensor::zeros([1, 8, 1, 1]));
                loss_kl(t, v)
            })
        });
        assert_eq!(z, 0.0);
        let one = scalar_loss(|t| {
            Ok({
                let v = t.constant(Tensor::full([1, 8, 1, 1], 1.0));
                loss_kl(t, v)
            })
        });
        assert_eq!(one, 1.0);
    }

    #[test]
    fn perceptual_properties() {
        let pyr = FeaturePyramid::<f64>::new(17);
        let mut rng = Rng::new(3);
        let x = Tensor::<f64>::uniform([1, 3, 32, 32], -1.0, 1.0, &mut rng);
        let y = Tensor::<f64>::uniform([1, 3, 32, 32], -1.0, 1.0, &mut rng);
        let eval = |a: &Tensor<f64>, b: &Tensor<f64>| {
            scalar_loss(|t| {
                let (a, b) = (t.constant(a.clone()), t.constant(b.clone()));
                loss_perceptual(t, a, b, &pyr)
            })
        };
        assert_eq!(eval(&x, &x), 0.0);
        let xy = eval(&x, &y);
        assert!(xy > 0.0);
        assert!((xy - eval(&y, &x)).abs() < 1e-12);
        let mid = x.zip_map(&y, |a, b| 0.5 * (a + b)).unwrap();
        assert!(eval(&mid, &y) < xy);
    }

    #[test]
    fn perceptual_gradient_reaches_output_only() {
        let pyr = FeaturePyramid::<f64>::new(1);
        let mut rng = Rng::new(9);
        let mut t = Tape::new();
        let a = t.leaf(Tensor::uniform([1, 3, 16, 16], -1.0, 1.0, &mut rng), true);
        let b = t.leaf(Tensor::uniform([1, 3, 16, 16], -1.0, 1.0, &mut rng), true);
        let l = loss_perceptual(&mut t, a, b, &pyr).unwrap();
        let mut g = t.backward(l).unwrap();
        assert!(g.take(a).unwrap().data().iter().any(|v| *v != 0.0));
        assert!(g
            .take(b)
            .is_none_or(|gb| gb.data().iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn total_is_the_weighted_sum() {
        let zero = GeneratorTerms {
            adv: 0.0,
            idt: 0.0,
            rec: 0.0,
            kl: 0.0,
            perceptual: 0.0,
        };
        assert_eq!(
            LossReport::compose(zero, 0.0, &LossWeights::default())
                .unwrap()
                .total,
            0.0
        );

        let only_rec = LossWeights {
            lambda_idt: 0.0,
            lambda_rec: 1.0,
            lambda_kl: 0.0,
            lambda_f: 0.0,
        };
        let terms = GeneratorTerms {
            adv: 0.0,
            idt: 0.7,
            rec: 0.3,
            kl: 2.0,
            perceptual: 5.0,
        };
        assert!((LossReport::compose(terms, 0.0, &only_rec).unwrap().total - 0.3).abs() < 1e-15);

        let w = LossWeights::default();
        let terms = GeneratorTerms {
            adv: 0.9,
            idt: 0.2,
            rec: 0.1,
            kl: 3.0,
            perceptual: 0.4,
        };
        let base = LossReport::compose(terms, 1.1, &w).unwrap();
        let w2 = LossWeights {
            lambda_idt: 2.0 * w.lambda_idt,
            lambda_rec: 2.0 * w.lambda_rec,
            lambda_kl: 2.0 * w.lambda_kl,
            lambda_f: 2.0 * w.lambda_f,
        };
        let doubled = LossReport::compose(terms, 1.1, &w2).unwrap();
        assert!(((doubled.total - 0.9) - 2.0 * (base.total - 0.9)).abs() < 1e-12);
        assert_eq!(base.adv_d, 1.1);

        let neg = LossWeights {
            lambda_kl: -0.1,
            ..w
        };
        assert!(matches!(
            LossReport::compose(terms, 0.0, &neg),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn generator_loss_reaches_generator_groups_only() {
        let cfg = ModelConfig {
            texture_dim: 8,
            base_channels: 4,
            res_blocks: 2,
            image_side: 32,
        };
        let model = SittaModel::<f32>::new(cfg, 5).unwrap();
        let pyr = FeaturePyramid::<f32>::new(2);
        let mut rng = Rng::new(6);
        let mut g = Graph::new(SittaModel::<f32>::generator_groups());
        let a = g.input(Tensor::uniform([1, 3, 32, 32], -1.0, 1.0, &mut rng));
        let b = g.input(Tensor::uniform([1, 3, 32, 32], -1.0, 1.0, &mut rng));
        let out = model.forward_pair(&mut g, a, b).unwrap();
        let fake_b = model
            .discriminate(&mut g, crate::model::DomainId::B, out.a2b)
            .unwrap();
        let fake_a = model
            .discriminate(&mut g, crate::model::DomainId::A, out.b2a)
            .unwrap();
        let tape = &mut g.tape;
        let adv_b = generator_adversarial(tape, fake_b);
        let adv_a = generator_adversarial(tape, fake_a);
        let adv = tape.add(adv_a, adv_b).unwrap();
        let idt = loss_identity(tape, out.aa, a, out.bb, b).unwrap();
        let rec = loss_cycle(tape, out.aba, a, out.bab, b).unwrap();
        let ka = loss_kl(tape, out.texture_a);
        let kb = loss_kl(tape, out.texture_b);
        let kl = tape.add(ka, kb).unwrap();
        let pa = loss_perceptual(tape, out.a2b, a, &pyr).unwrap();
        let pb = loss_perceptual(tape, out.b2a, b, &pyr).unwrap();
        let perceptual = tape.add(pa, pb).unwrap();
        let terms = GeneratorTerms {
            adv,
            idt,
            rec,
            kl,
            perceptual,
        };
        let total = loss_total(tape, &terms, &LossWeights::default()).unwrap();
        let mut grads = g.tape.backward(total).unwrap();
        let pg = g.param_grads(&model.store, &mut grads);

        let mut nonzero_by_group = std::collections::BTreeMap::<Group, bool>::new();
        for (id, grad) in &pg {
            let e = nonzero_by_group
                .entry(model.store.get(*id).group)
                .or_insert(false);
            *e |= grad.data().iter().any(|v| *v != 0.0);
        }
        for group in [
            Group::TextureEncoder,
            Group::ContentEncoder,
            Group::DecoderA,
            Group::DecoderB,
        ] {
            assert_eq!(nonzero_by_group.get(&group), Some(&true), "{group:?}");
        }
        assert!(!nonzero_by_group.contains_key(&Group::DiscriminatorA));
        assert!(!nonzero_by_group.contains_key(&Group::DiscriminatorB));
        // discriminator weights were bound but frozen
        let d_ids = model.store.ids_in(GroupSet::of(&[Group::DiscriminatorA]));
        assert!(d_ids
            .iter()
            .all(|id| !g.tape.requires_grad(g.bound_var(*id).unwrap())));
    }

    fn tensor3() -> impl Strategy<Value = [Tensor<f64>; 3]> {
        proptest::collection::vec(-1.0f64..1.0, 3 * 12).prop_map(|v| {
            let mk = |i: usize| {
                Tensor::from_vec([1, 3, 2, 2], v[i * 12..(i + 1) * 12].to_vec()).unwrap()
            };
            [mk(0), mk(1), mk(2)]
        })
    }

    proptest! {
        #[test]
        fn l1_terms_obey_triangle_inequality([x, y, z] in tensor3()) {
            let d = |p: &Tensor<f64>, q: &Tensor<f64>| scalar_loss(|t| {
                let (p, q) = (t.constant(p.clone()), t.constant(q.clone()));
                loss_identity(t, p, q, p, q)
            });
            prop_assert!(d(&x, &y) <= d(&x, &z) + d(&z, &y) + 1e-12);
            prop_assert!(d(&x, &y) >= 0.0);
        }

        #[test]
        fn generator_adversarial_is_non_negative(v in -50.0f64..50.0) {
            let g = scalar_loss(|t| {
                let f = t.constant(logits(v));
                Ok(generator_adversarial(t, f))
            });
            prop_assert!(g >= 0.0);
        }
    }
}
