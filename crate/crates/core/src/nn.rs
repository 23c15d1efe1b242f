//! Parameter storage and graph binding shared by every network in the crate.

use crate::error::{dim_err, Error, Result};
use crate::tensor::{Element, Grads, PadMode, Rng, Tape, Tensor, Var};

/// Which sub-network a parameter belongs to. Optimizers and gradient
/// routing select parameters by group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    TextureEncoder,
    ContentEncoder,
    DecoderA,
    DecoderB,
    DiscriminatorA,
    DiscriminatorB,
    Classifier,
}

impl Group {
    const fn bit(self) -> u32 {
        1 << self as u32
    }
}

/// Set of parameter groups.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GroupSet(u32);

impl GroupSet {
    pub const NONE: GroupSet = GroupSet(0);

    pub fn of(groups: &[Group]) -> Self {
        GroupSet(groups.iter().fold(0, |acc, g| acc | g.bit()))
    }

    pub fn contains(&self, g: Group) -> bool {
        self.0 & g.bit() != 0
    }
}

/// Index of a parameter inside its [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param<E: Element> {
    pub name: String,
    pub group: Group,
    pub value: Tensor<E>,
}

/// Flat, ordered collection of named parameters.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<E: Element> {
    params: Vec<Param<E>>,
}

impl<E: Element> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, group: Group, value: Tensor<E>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            group,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param<E> {
        &self.params[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<E> {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param<E>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn ids_in(&self, groups: GroupSet) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| groups.contains(p.group))
            .map(|(id, _)| id)
            .collect()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Same parameters converted to another element type.
    pub fn cast<F: Element>(&self) -> ParamStore<F> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    group: p.group,
                    value: p.value.cast(),
                })
                .collect(),
        }
    }
}

/// A tape plus lazily bound parameter leaves.
///
/// Each parameter is placed on the tape once, at first use, as a leaf that
/// requires gradient only when its group is in the trainable set. A graph
/// binds parameters of a single store.
pub struct Graph<E: Element = f32> {
    pub tape: Tape<E>,
    bound: Vec<Option<Var>>,
    trainable: GroupSet,
}

impl<E: Element> Graph<E> {
    pub fn new(trainable: GroupSet) -> Self {
        Graph {
            tape: Tape::new(),
            bound: Vec::new(),
            trainable,
        }
    }

    /// Graph in which no parameter receives a gradient.
    pub fn inference() -> Self {
        Self::new(GroupSet::NONE)
    }

    pub fn param(&mut self, store: &ParamStore<E>, id: ParamId) -> Var {
        if self.bound.len() <= id.0 {
            self.bound.resize(id.0 + 1, None);
        }
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let p = store.get(id);
        let v = self
            .tape
            .leaf(p.value.clone(), self.trainable.contains(p.group));
        self.bound[id.0] = Some(v);
        v
    }

    /// Tape node of an already bound parameter.
    pub fn bound_var(&self, id: ParamId) -> Option<Var> {
        self.bound.get(id.0).copied().flatten()
    }

    pub fn input(&mut self, t: Tensor<E>) -> Var {
        self.tape.constant(t)
    }

    /// Gradients of every bound trainable parameter, in store order.
    pub fn param_grads(
        &self,
        store: &ParamStore<E>,
        grads: &mut Grads<E>,
    ) -> Vec<(ParamId, Tensor<E>)> {
        let mut out = Vec::new();
        for (i, slot) in self.bound.iter().enumerate() {
            let Some(v) = *slot else { continue };
            let id = ParamId(i);
            if !self.trainable.contains(store.get(id).group) {
                continue;
            }
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(store.get(id).value.shape()));
            out.push((id, g));
        }
        out
    }
}

/// Weight initialization scheme.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    /// N(0, std²) weights, zero bias.
    Normal(f64),
    /// N(0, 2/fan_in) weights, zero bias.
    He,
}

/// Convolution layer descriptor: parameter handles plus geometry.
#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: PadMode,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new<E: Element>(
        store: &mut ParamStore<E>,
        name: &str,
        group: Group,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        pad: PadMode,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        let std = match init {
            Init::Normal(s) => s,
            Init::He => (2.0 / (c_in * k * k) as f64).sqrt(),
        };
        let weight = store.add(
            format!("{name}.weight"),
            group,
            Tensor::randn([c_out, c_in, k, k], std, rng),
        );
        let bias = store.add(
            format!("{name}.bias"),
            group,
            Tensor::zeros([c_out, 1, 1, 1]),
        );
        Conv {
            weight,
            bias,
            stride,
            pad,
        }
    }

    /// Fully connected layer as a 1×1 convolution on (B,C,1,1) inputs.
    pub fn linear<E: Element>(
        store: &mut ParamStore<E>,
        name: &str,
        group: Group,
        c_in: usize,
        c_out: usize,
        init: Init,
        rng: &mut Rng,
    ) -> Self {
        Self::new(
            store,
            name,
            group,
            c_in,
            c_out,
            1,
            1,
            PadMode::None,
            init,
            rng,
        )
    }

    pub fn forward<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        x: Var,
    ) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.tape.conv2d(x, w, Some(b), self.stride, self.pad)
    }

    /// Nearest 2× upsampling then this layer. Only 3×3 reflect(1) stride-1 layers.
    pub fn forward_upsampled<E: Element>(
        &self,
        g: &mut Graph<E>,
        store: &ParamStore<E>,
        x: Var,
    ) -> Result<Var> {
        if self.stride != 1 || self.pad != PadMode::Reflect(1) {
            return Err(Error::Argument(
                "fused upsampling needs a stride-1 reflect(1) layer".into(),
            ));
        }
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.tape.upsample_conv3x3(x, w, Some(b))
    }

    pub fn out_channels<E: Element>(&self, store: &ParamStore<E>) -> usize {
        store.get(self.weight).value.shape().n()
    }
}

/// Instance normalization over H,W followed by a per-sample, per-channel
/// affine transform: `(1 + scale) * norm(x) + shift`. `scale` and `shift`
/// are (B,C,1,1).
pub fn adaptive_instance_norm<E: Element>(
    tape: &mut Tape<E>,
    x: Var,
    scale: Var,
    shift: Var,
) -> Result<Var> {
    const EPS: f64 = 1e-5;
    let shape = tape.shape(x);
    for v in [scale, shift] {
        let s = tape.shape(v);
        if s.0 != [shape.n(), shape.c(), 1, 1] {
            return Err(dim_err!(
                "AdaIN parameters {s} do not match features {shape}"
            ));
        }
    }
    let spatial = [false, false, true, true];
    let mean = tape.mean_axes(x, spatial);
    let mean = tape.broadcast(mean, shape)?;
    let centered = tape.sub(x, mean)?;
    let sq = tape.square(centered);
    let var = tape.mean_axes(sq, spatial);
    let var = tape.add_scalar(var, EPS);
    let std = tape.sqrt(var);
    let std = tape.broadcast(std, shape)?;
    let normed = tape.div(centered, std)?;
    let gain = tape.add_scalar(scale, 1.0);
    let gain = tape.broadcast(gain, shape)?;
    let shift = tape.broadcast(shift, shape)?;
    let y = tape.mul(normed, gain)?;
    tape.add(y, shift)
}

/// Slices channels `[start, start + len)` of a (B,C,1,1) vector via a fixed
/// selection convolution, keeping the operation differentiable.
pub fn channel_slice<E: Element>(
    tape: &mut Tape<E>,
    x: Var,
    start: usize,
    len: usize,
) -> Result<Var> {
    let c = tape.shape(x).c();
    if start + len > c {
        return Err(dim_err!(
            "channel slice {start}..{} of {c} channels",
            start + len
        ));
    }
    let sel = Tensor::from_fn([len, c, 1, 1], |[o, i, _, _]| {
        if i == start + o {
            E::one()
        } else {
            E::zero()
        }
    });
    let sel = tape.constant(sel);
    tape.conv2d(x, sel, None, 1, PadMode::None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_binds_each_parameter_once() {
        let mut rng = Rng::new(0);
        let mut store = ParamStore::<f32>::new();
        let conv = Conv::new(
            &mut store,
            "c",
            Group::ContentEncoder,
            2,
            3,
            3,
            1,
            PadMode::Zero(1),
            Init::Normal(0.02),
            &mut rng,
        );
        let mut g = Graph::new(GroupSet::of(&[Group::ContentEncoder]));
        let a = g.param(&store, conv.weight);
        let b = g.param(&store, conv.weight);
        assert_eq!(a, b);
        assert!(g.tape.requires_grad(a));

        let mut frozen = Graph::<f32>::inference();
        let w = frozen.param(&store, conv.weight);
        assert!(!frozen.tape.requires_grad(w));
    }

    #[test]
    fn channel_slice_selects_range() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn([2, 5, 1, 1], |[b, c, _, _]| {
            (b * 10 + c) as f64
        }));
        let s = channel_slice(&mut tape, x, 1, 3).unwrap();
        assert_eq!(tape.value(s).data(), &[1.0, 2.0, 3.0, 11.0, 12.0, 13.0]);
    }
}
