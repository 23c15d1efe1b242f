//! The translation network: a shared texture encoder, a shared content
//! encoder with positional-moment extraction, one decoder and one patch
//! discriminator per domain.
//!
//! Channel plan for base width `ch`:
//!
//! ```text
//! texture encoder  3 →ch (s1) →2ch (s2) →4ch (s2) →4ch (s1) → GAP → linear → d_T
//! content encoder  3 →ch (s1) →2ch (s2, pono #1) →4ch (s2, pono #2) → residual ×2
//! decoder          residual ×2 (AdaIN from texture MLP)
//!                  → conv 4ch→2ch, inject #2, ↑2 → conv 2ch→ch, inject #1, ↑2
//!                  → conv ch→3 → tanh
//! discriminator    3 →ch →2ch →4ch (all s2, leaky 0.2) → conv →1   (H/8 × W/8 logits)
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{dim_err, Error, Result};
use crate::nn::{
    adaptive_instance_norm, channel_slice, Conv, Graph, Group, GroupSet, Init, ParamStore,
};
use crate::pono::{inject_moments, pono_normalize, MomentPair};
use crate::tensor::{Element, PadMode, Rng, Tensor, Var};

/// Image domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DomainId {
    A,
    B,
}

impl DomainId {
    pub fn other(self) -> DomainId {
        match self {
            DomainId::A => DomainId::B,
            DomainId::B => DomainId::A,
        }
    }
}

impl fmt::Display for DomainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainId::A => "a",
            DomainId::B => "b",
        })
    }
}

impl FromStr for DomainId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(DomainId::A),
            "b" => Ok(DomainId::B),
            other => Err(Error::Argument(format!(
                "unknown domain '{other}' (expected a or b)"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    /// Length of the texture code.
    pub texture_dim: usize,
    /// Width of the first convolution; deeper stages use 2× and 4×.
    pub base_channels: usize,
    pub res_blocks: usize,
    /// Side length the model is trained at. Inference accepts other sizes.
    pub image_side: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            texture_dim: 8,
            base_channels: 8,
            res_blocks: 2,
            image_side: 288,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.texture_dim == 0 || self.base_channels == 0 {
            return Err(Error::Argument(
                "texture_dim and base_channels must be positive".into(),
            ));
        }
        if self.image_side < 16 || !self.image_side.is_multiple_of(8) {
            return Err(Error::Argument(format!(
                "image_side {} must be a multiple of 8 and at least 16",
                self.image_side
            )));
        }
        Ok(())
    }
}

const INIT: Init = Init::Normal(0.02);
const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Debug)]
struct TextureEncoder {
    convs: Vec<Conv>,
    head: Conv,
}

#[derive(Clone, Debug)]
struct ResBlock {
    a: Conv,
    b: Conv,
}

#[derive(Clone, Debug)]
struct ContentEncoder {
    stem: Conv,
    down1: Conv,
    down2: Conv,
    res: Vec<ResBlock>,
}

#[derive(Clone, Debug)]
struct Decoder {
    mlp_hidden: Conv,
    mlp_out: Conv,
    res: Vec<ResBlock>,
    up2: Conv,
    up1: Conv,
    to_rgb: Conv,
}

#[derive(Clone, Debug)]
struct Discriminator {
    convs: Vec<Conv>,
    head: Conv,
}

/// Content map plus the moments removed at the two downsampling stages.
#[derive(Clone, Copy, Debug)]
pub struct ContentBundle {
    /// (B, 4·base, H/4, W/4)
    pub content: Var,
    /// Stage 1 (H/2) then stage 2 (H/4).
    pub stage_moments: [MomentPair; 2],
}

/// Normalized activations at each moment-extraction stage, for inspection.
#[derive(Clone, Copy, Debug)]
pub struct ContentTrace {
    pub normalized: [Var; 2],
}

/// Every tensor produced by one joint forward pass over an (A, B) pair.
#[derive(Clone, Copy, Debug)]
pub struct PairOutputs {
    pub texture_a: Var,
    pub texture_b: Var,
    pub content_a: ContentBundle,
    pub content_b: ContentBundle,
    /// A's content rendered with B's texture (I'_B).
    pub a2b: Var,
    /// B's content rendered with A's texture (I'_A).
    pub b2a: Var,
    /// I_AA
    pub aa: Var,
    /// I_BB
    pub bb: Var,
    /// De_A(T_A, En_C(I'_B)) (I'_BA)
    pub aba: Var,
    /// De_B(T_B, En_C(I'_A)) (I'_AB)
    pub bab: Var,
}

/// Complete parameter set and architecture.
#[derive(Clone, Debug)]
pub struct SittaModel<E: Element = f32> {
    config: ModelConfig,
    pub store: ParamStore<E>,
    en_t: TextureEncoder,
    en_c: ContentEncoder,
    de_a: Decoder,
    de_b: Decoder,
    d_a: Discriminator,
    d_b: Discriminator,
}

pub const GENERATOR_GROUPS: [Group; 4] = [
    Group::TextureEncoder,
    Group::ContentEncoder,
    Group::DecoderA,
    Group::DecoderB,
];
pub const DISCRIMINATOR_GROUPS: [Group; 2] = [Group::DiscriminatorA, Group::DiscriminatorB];

impl<E: Element> SittaModel<E> {
    /// Fresh model with N(0, 0.02²) weights and zero biases drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut store = ParamStore::new();
        let ch = config.base_channels;
        let reflect = |p| PadMode::Reflect(p);

        let s = &mut store;
        let r = &mut rng;
        let en_t = TextureEncoder {
            convs: vec![
                Conv::new(
                    s,
                    "en_t.conv0",
                    Group::TextureEncoder,
                    3,
                    ch,
                    3,
                    1,
                    reflect(1),
                    INIT,
                    r,
                ),
                Conv::new(
                    s,
                    "en_t.conv1",
                    Group::TextureEncoder,
                    ch,
                    2 * ch,
                    4,
                    2,
                    reflect(1),
                    INIT,
                    r,
                ),
                Conv::new(
                    s,
                    "en_t.conv2",
                    Group::TextureEncoder,
                    2 * ch,
                    4 * ch,
                    4,
                    2,
                    reflect(1),
                    INIT,
                    r,
                ),
                Conv::new(
                    s,
                    "en_t.conv3",
                    Group::TextureEncoder,
                    4 * ch,
                    4 * ch,
                    3,
                    1,
                    reflect(1),
                    INIT,
                    r,
                ),
            ],
            head: Conv::linear(
                s,
                "en_t.head",
                Group::TextureEncoder,
                4 * ch,
                config.texture_dim,
                INIT,
                r,
            ),
        };

        let res_blocks =
            |s: &mut ParamStore<E>, r: &mut Rng, prefix: &str, group: Group| -> Vec<ResBlock> {
                (0..config.res_blocks)
                    .map(|i| ResBlock {
                        a: Conv::new(
                            s,
                            &format!("{prefix}.res{i}.a"),
                            group,
                            4 * ch,
                            4 * ch,
                            3,
                            1,
                            reflect(1),
                            INIT,
                            r,
                        ),
                        b: Conv::new(
                            s,
                            &format!("{prefix}.res{i}.b"),
                            group,
                            4 * ch,
                            4 * ch,
                            3,
                            1,
                            reflect(1),
                            INIT,
                            r,
                        ),
                    })
                    .collect()
            };

        let en_c = ContentEncoder {
            stem: Conv::new(
                s,
                "en_c.stem",
                Group::ContentEncoder,
                3,
                ch,
                3,
                1,
                reflect(1),
                INIT,
                r,
            ),
            down1: Conv::new(
                s,
                "en_c.down1",
                Group::ContentEncoder,
                ch,
                2 * ch,
                4,
                2,
                reflect(1),
                INIT,
                r,
            ),
            down2: Conv::new(
                s,
                "en_c.down2",
                Group::ContentEncoder,
                2 * ch,
                4 * ch,
                4,
                2,
                reflect(1),
                INIT,
                r,
            ),
            res: res_blocks(s, r, "en_c", Group::ContentEncoder),
        };

        let adain_params = 2 * 2 * config.res_blocks * 4 * ch;
        let decoder = |s: &mut ParamStore<E>, r: &mut Rng, prefix: &str, group: Group| Decoder {
            mlp_hidden: Conv::linear(
                s,
                &format!("{prefix}.mlp0"),
                group,
                config.texture_dim,
                4 * ch,
                INIT,
                r,
            ),
            mlp_out: Conv::linear(
                s,
                &format!("{prefix}.mlp1"),
                group,
                4 * ch,
                adain_params,
                INIT,
                r,
            ),
            res: res_blocks(s, r, prefix, group),
            up2: Conv::new(
                s,
                &format!("{prefix}.up2"),
                group,
                4 * ch,
                2 * ch,
                3,
                1,
                reflect(1),
                INIT,
                r,
            ),
            up1: Conv::new(
                s,
                &format!("{prefix}.up1"),
                group,
                2 * ch,
                ch,
                3,
                1,
                reflect(1),
                INIT,
                r,
            ),
            to_rgb: Conv::new(
                s,
                &format!("{prefix}.to_rgb"),
                group,
                ch,
                3,
                3,
                1,
                reflect(1),
                INIT,
                r,
            ),
        };
        let de_a = decoder(s, r, "de_a", Group::DecoderA);
        let de_b = decoder(s, r, "de_b", Group::DecoderB);

        let discriminator =
            |s: &mut ParamStore<E>, r: &mut Rng, prefix: &str, group: Group| Discriminator {
                convs: vec![
                    Conv::new(
                        s,
                        &format!("{prefix}.conv0"),
                        group,
                        3,
                        ch,
                        4,
                        2,
                        PadMode::Zero(1),
                        INIT,
                        r,
                    ),
                    Conv::new(
                        s,
                        &format!("{prefix}.conv1"),
                        group,
                        ch,
                        2 * ch,
                        4,
                        2,
                        PadMode::Zero(1),
                        INIT,
                        r,
                    ),
                    Conv::new(
                        s,
                        &format!("{prefix}.conv2"),
                        group,
                        2 * ch,
                        4 * ch,
                        4,
                        2,
                        PadMode::Zero(1),
                        INIT,
                        r,
                    ),
                ],
                head: Conv::new(
                    s,
                    &format!("{prefix}.head"),
                    group,
                    4 * ch,
                    1,
                    3,
                    1,
                    PadMode::Zero(1),
                    INIT,
                    r,
                ),
            };
        let d_a = discriminator(s, r, "d_a", Group::DiscriminatorA);
        let d_b = discriminator(s, r, "d_b", Group::DiscriminatorB);

        Ok(SittaModel {
            config,
            store,
            en_t,
            en_c,
            de_a,
            de_b,
            d_a,
            d_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same architecture and weights in another element type.
    pub fn cast<F: Element>(&self) -> SittaModel<F> {
        SittaModel {
            config: self.config,
            store: self.store.cast(),
            en_t: self.en_t.clone(),
            en_c: self.en_c.clone(),
            de_a: self.de_a.clone(),
            de_b: self.de_b.clone(),
            d_a: self.d_a.clone(),
            d_b: self.d_b.clone(),
        }
    }

    fn check_rgb(&self, g: &Graph<E>, image: Var, multiple: usize) -> Result<()> {
        let s = g.tape.shape(image);
        if s.c() != 3 {
            return Err(dim_err!("expected an RGB image, got {s}"));
        }
        if !s.h().is_multiple_of(multiple) || !s.w().is_multiple_of(multiple) || s.h() == 0 {
            return Err(dim_err!(
                "image {}x{} must have sides divisible by {multiple}",
                s.h(),
                s.w()
            ));
        }
        Ok(())
    }

    /// Texture code of shape (B, d_T, 1, 1).
    pub fn encode_texture(&self, g: &mut Graph<E>, image: Var) -> Result<Var> {
        self.check_rgb(g, image, 1)?;
        let s = g.tape.shape(image);
        if s.h() < 16 || s.w() < 16 {
            return Err(dim_err!(
                "texture encoder needs at least 16x16 input, got {s}"
            ));
        }
        let mut x = image;
        for conv in &self.en_t.convs {
            x = conv.forward(g, &self.store, x)?;
            x = g.tape.relu(x);
        }
        let pooled = g.tape.global_avg_pool(x);
        self.en_t.head.forward(g, &self.store, pooled)
    }

    pub fn encode_content(&self, g: &mut Graph<E>, image: Var) -> Result<ContentBundle> {
        Ok(self.encode_content_traced(g, image)?.0)
    }

    /// Content encoding that also returns the positionally normalized stage activations.
    pub fn encode_content_traced(
        &self,
        g: &mut Graph<E>,
        image: Var,
    ) -> Result<(ContentBundle, ContentTrace)> {
        self.check_rgb(g, image, 4)?;
        let en = &self.en_c;
        let x = en.stem.forward(g, &self.store, image)?;
        let x = g.tape.relu(x);

        let x = en.down1.forward(g, &self.store, x)?;
        let (n1, m1) = pono_normalize(&mut g.tape, x)?;
        let x = g.tape.relu(n1);

        let x = en.down2.forward(g, &self.store, x)?;
        let (n2, m2) = pono_normalize(&mut g.tape, x)?;
        let mut x = g.tape.relu(n2);

        for block in &en.res {
            let h = block.a.forward(g, &self.store, x)?;
            let h = g.tape.relu(h);
            let h = block.b.forward(g, &self.store, h)?;
            x = g.tape.add(x, h)?;
        }
        Ok((
            ContentBundle {
                content: x,
                stage_moments: [m1, m2],
            },
            ContentTrace {
                normalized: [n1, n2],
            },
        ))
    }

    fn decoder(&self, domain: DomainId) -> &Decoder {
        match domain {
            DomainId::A => &self.de_a,
            DomainId::B => &self.de_b,
        }
    }

    fn discriminator(&self, domain: DomainId) -> &Discriminator {
        match domain {
            DomainId::A => &self.d_a,
            DomainId::B => &self.d_b,
        }
    }

    /// Renders `content` with `texture` in `domain`; output in [-1, 1].
    pub fn decode(
        &self,
        g: &mut Graph<E>,
        domain: DomainId,
        texture: Var,
        content: &ContentBundle,
    ) -> Result<Var> {
        let de = self.decoder(domain);
        let ch4 = 4 * self.config.base_channels;
        let ts = g.tape.shape(texture);
        let cs = g.tape.shape(content.content);
        if ts.0 != [cs.n(), self.config.texture_dim, 1, 1] {
            return Err(dim_err!(
                "texture code {ts} does not match content batch {cs}"
            ));
        }

        let h = de.mlp_hidden.forward(g, &self.store, texture)?;
        let h = g.tape.relu(h);
        let affine = de.mlp_out.forward(g, &self.store, h)?;
        let mut slot = 0;
        let mut next_affine = |g: &mut Graph<E>| -> Result<(Var, Var)> {
            let scale = channel_slice(&mut g.tape, affine, slot * ch4, ch4)?;
            let shift = channel_slice(&mut g.tape, affine, (slot + 1) * ch4, ch4)?;
            slot += 2;
            Ok((scale, shift))
        };

        let mut x = content.content;
        for block in &de.res {
            let h = block.a.forward(g, &self.store, x)?;
            let (s, b) = next_affine(g)?;
            let h = adaptive_instance_norm(&mut g.tape, h, s, b)?;
            let h = g.tape.relu(h);
            let h = block.b.forward(g, &self.store, h)?;
            let (s, b) = next_affine(g)?;
            let h = adaptive_instance_norm(&mut g.tape, h, s, b)?;
            x = g.tape.add(x, h)?;
        }

        let [m1, m2] = &content.stage_moments;
        let x = de.up2.forward_upsampled(g, &self.store, x)?;
        let x = inject_moments(&mut g.tape, x, m2)?;
        let x = g.tape.relu(x);

        let x = de.up1.forward_upsampled(g, &self.store, x)?;
        let x = inject_moments(&mut g.tape, x, m1)?;
        let x = g.tape.relu(x);

        let x = de.to_rgb.forward(g, &self.store, x)?;
        Ok(g.tape.tanh(x))
    }

    /// Patch logits of shape (B, 1, H/8, W/8).
    pub fn discriminate(&self, g: &mut Graph<E>, domain: DomainId, image: Var) -> Result<Var> {
        self.check_rgb(g, image, 8)?;
        let d = self.discriminator(domain);
        let mut x = image;
        for conv in &d.convs {
            x = conv.forward(g, &self.store, x)?;
            x = g.tape.leaky_relu(x, LEAKY_SLOPE);
        }
        d.head.forward(g, &self.store, x)
    }

    /// Translations, identities and cycles for one (A, B) pair in a single graph.
    pub fn forward_pair(&self, g: &mut Graph<E>, a: Var, b: Var) -> Result<PairOutputs> {
        let (sa, sb) = (g.tape.shape(a), g.tape.shape(b));
        if sa != sb {
            return Err(dim_err!("pair inputs differ in shape: {sa} vs {sb}"));
        }
        let texture_a = self.encode_texture(g, a)?;
        let texture_b = self.encode_texture(g, b)?;
        let content_a = self.encode_content(g, a)?;
        let content_b = self.encode_content(g, b)?;

        let a2b = self.decode(g, DomainId::B, texture_b, &content_a)?;
        let b2a = self.decode(g, DomainId::A, texture_a, &content_b)?;
        let aa = self.decode(g, DomainId::A, texture_a, &content_a)?;
        let bb = self.decode(g, DomainId::B, texture_b, &content_b)?;

        let content_a2b = self.encode_content(g, a2b)?;
        let aba = self.decode(g, DomainId::A, texture_a, &content_a2b)?;
        let content_b2a = self.encode_content(g, b2a)?;
        let bab = self.decode(g, DomainId::B, texture_b, &content_b2a)?;

        Ok(PairOutputs {
            texture_a,
            texture_b,
            content_a,
            content_b,
            a2b,
            b2a,
            aa,
            bb,
            aba,
            bab,
        })
    }

    /// Inference-only translation: `content` rendered with the texture of
    /// `texture` through the decoder of `domain`.
    pub fn translate(
        &self,
        content: &Tensor<E>,
        texture: &Tensor<E>,
        domain: DomainId,
    ) -> Result<Tensor<E>> {
        let mut g = Graph::inference();
        let c = g.input(content.clone());
        let t = g.input(texture.clone());
        let code = self.encode_texture(&mut g, t)?;
        let bundle = self.encode_content(&mut g, c)?;
        let out = self.decode(&mut g, domain, code, &bundle)?;
        Ok(g.tape.value(out).clone())
    }

    /// Texture code of a single image as plain values.
    pub fn texture_code(&self, image: &Tensor<E>) -> Result<Tensor<E>> {
        let mut g = Graph::inference();
        let x = g.input(image.clone());
        let t = self.encode_texture(&mut g, x)?;
        Ok(g.tape.value(t).clone())
    }

    pub fn generator_groups() -> GroupSet {
        GroupSet::of(&GENERATOR_GROUPS)
    }

    pub fn discriminator_groups() -> GroupSet {
        GroupSet::of(&DISCRIMINATOR_GROUPS)
    }
}
