//! Minimal reverse-mode tensor engine.
//!
//! Values are rank-4 NCHW arrays ([`Tensor`]). Differentiable computation is
//! recorded on a [`Tape`] and differentiated with [`Tape::backward`]. The
//! element type is generic so that the same code path can be run in `f32` for
//! training and in `f64` for finite-difference verification.

mod conv;
mod gradcheck;
mod rng;
mod tape;

use std::fmt;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{dim_err, Result};

pub use conv::PadMode;
pub use gradcheck::grad_check;
pub use rng::{mix_seed, Rng};
pub use tape::{Activation, Grads, Tape, Var};

/// Floating point storage type of a tensor.
pub trait Element:
    Float + FromPrimitive + ToPrimitive + Default + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    /// `c = alpha * a @ b + beta * c` with arbitrary row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    /// Runs `f` with two reusable per-thread work buffers of unspecified
    /// contents.
    fn with_scratch<R>(f: impl FnOnce(&mut Vec<Self>, &mut Vec<Self>) -> R) -> R;

    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every float element")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float element converts to f64")
    }
}

macro_rules! impl_element {
    ($t:ty, $gemm:path) => {
        impl Element for $t {
            fn with_scratch<R>(f: impl FnOnce(&mut Vec<Self>, &mut Vec<Self>) -> R) -> R {
                thread_local! {
                    static SCRATCH: std::cell::RefCell<(Vec<$t>, Vec<$t>)> = const {
                        std::cell::RefCell::new((Vec::new(), Vec::new()))
                    };
                }
                SCRATCH.with(|cell| match cell.try_borrow_mut() {
                    Ok(mut bufs) => {
                        let (a, b) = &mut *bufs;
                        f(a, b)
                    }
                    Err(_) => f(&mut Vec::new(), &mut Vec::new()),
                })
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                rsa: isize,
                csa: isize,
                b: &[Self],
                rsb: isize,
                csb: isize,
                beta: Self,
                c: &mut [Self],
                rsc: isize,
                csc: isize,
            ) {
                if m == 0 || n == 0 {
                    return;
                }
                let span = |rows: usize, cols: usize, rs: isize, cs: isize| {
                    if rows == 0 || cols == 0 {
                        0
                    } else {
                        (rows - 1) * rs as usize + (cols - 1) * cs as usize + 1
                    }
                };
                assert!(a.len() >= span(m, k, rsa, csa));
                assert!(b.len() >= span(k, n, rsb, csb));
                assert!(c.len() >= span(m, n, rsc, csc));
                // SAFETY: the asserts above bound every index the kernel touches,
                // all strides are non-negative and `c` is exclusively borrowed.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        alpha,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        rsc,
                        csc,
                    );
                }
            }
        }
    };
}

impl_element!(f32, matrixmultiply::sgemm);
impl_element!(f64, matrixmultiply::dgemm);

/// NCHW shape.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub const fn scalar() -> Self {
        Shape([1, 1, 1, 1])
    }

    pub fn n(&self) -> usize {
        self.0[0]
    }
    pub fn c(&self) -> usize {
        self.0[1]
    }
    pub fn h(&self) -> usize {
        self.0[2]
    }
    pub fn w(&self) -> usize {
        self.0[3]
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> [usize; 4] {
        let [_, c, h, w] = self.0;
        [c * h * w, h * w, w, 1]
    }

    /// Shape with the flagged axes collapsed to 1.
    pub fn reduced(&self, axes: [bool; 4]) -> Shape {
        let mut s = self.0;
        for (d, &r) in s.iter_mut().zip(axes.iter()) {
            if r {
                *d = 1;
            }
        }
        Shape(s)
    }

    /// True when `self` can be broadcast to `target` (every dim equal or 1).
    pub fn broadcasts_to(&self, target: &Shape) -> bool {
        self.0
            .iter()
            .zip(target.0.iter())
            .all(|(&s, &t)| s == t || s == 1)
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "{n}x{c}x{h}x{w}")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(v: [usize; 4]) -> Self {
        Shape(v)
    }
}

/// Dense row-major NCHW array.
#[derive(Clone, PartialEq)]
pub struct Tensor<E = f32> {
    shape: Shape,
    data: Vec<E>,
}

impl<E: Element> Tensor<E> {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<E>) -> Result<Self> {
        let shape = shape.into();
        if shape.numel() != data.len() {
            return Err(dim_err!(
                "shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn full(shape: impl Into<Shape>, value: E) -> Self {
        let shape = shape.into();
        Tensor {
            data: vec![value; shape.numel()],
            shape,
        }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, E::zero())
    }

    pub fn scalar(value: E) -> Self {
        Self::full(Shape::scalar(), value)
    }

    pub fn from_fn(shape: impl Into<Shape>, mut f: impl FnMut([usize; 4]) -> E) -> Self {
        let shape = shape.into();
        let [n, c, h, w] = shape.0;
        let mut data = Vec::with_capacity(shape.numel());
        for i in 0..n {
            for j in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f([i, j, y, x]));
                    }
                }
            }
        }
        Tensor { shape, data }
    }

    /// Samples from N(0, std²).
    pub fn randn(shape: impl Into<Shape>, std: f64, rng: &mut Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| E::from_f64_lossy(rng.normal() * std))
            .collect();
        Tensor { shape, data }
    }

    /// Samples from U[lo, hi).
    pub fn uniform(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut Rng) -> Self {
        let shape = shape.into();
        let data = (0..shape.numel())
            .map(|_| E::from_f64_lossy(lo + (hi - lo) * rng.next_f64()))
            .collect();
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<E> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn offset(&self, idx: [usize; 4]) -> usize {
        let s = self.shape.strides();
        idx[0] * s[0] + idx[1] * s[1] + idx[2] * s[2] + idx[3] * s[3]
    }

    #[inline]
    pub fn at(&self, idx: [usize; 4]) -> E {
        self.data[self.offset(idx)]
    }

    #[inline]
    pub fn set(&mut self, idx: [usize; 4], v: E) {
        let o = self.offset(idx);
        self.data[o] = v;
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> E {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(E) -> E) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(E, E) -> E) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err!("shape {} vs {}", self.shape, other.shape));
        }
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn reshape(&self, shape: impl Into<Shape>) -> Result<Self> {
        Tensor::from_vec(shape, self.data.clone())
    }

    /// Converts every element to another float type.
    pub fn cast<F: Element>(&self) -> Tensor<F> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|&v| F::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_f64(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean_f64(&self) -> f64 {
        self.sum_f64() / self.data.len().max(1) as f64
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Selects one batch item as a 1×C×H×W tensor.
    pub fn batch_item(&self, i: usize) -> Result<Self> {
        let [n, c, h, w] = self.shape.0;
        if i >= n {
            return Err(dim_err!("batch index {i} out of range for {}", self.shape));
        }
        let len = c * h * w;
        Tensor::from_vec([1, c, h, w], self.data[i * len..(i + 1) * len].to_vec())
    }

    /// Stacks equally-shaped tensors along the batch axis.
    pub fn stack(items: &[Tensor<E>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| dim_err!("cannot stack zero tensors"))?;
        let [_, c, h, w] = first.shape.0;
        let mut n = 0;
        let mut data = Vec::new();
        for t in items {
            let [tn, tc, th, tw] = t.shape.0;
            if (tc, th, tw) != (c, h, w) {
                return Err(dim_err!("stack: {} vs {}", t.shape, first.shape));
            }
            n += tn;
            data.extend_from_slice(&t.data);
        }
        Tensor::from_vec([n, c, h, w], data)
    }
}

impl<E: Element> fmt::Debug for Tensor<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "Tensor({}, [", self.shape)?;
        for (i, v) in self.data.iter().take(SHOWN).enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", ...")?;
        }
        write!(f, "])")
    }
}
