//! Spatial kernels: padding, im2col convolution, nearest upsampling.

use super::{Element, Shape, Tensor};
use crate::error::{dim_err, Result};

/// Border handling for convolutions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// No padding ("valid" convolution).
    None,
    /// Pad with zeros on every side.
    Zero(usize),
    /// Mirror the border without repeating the edge pixel.
    Reflect(usize),
}

impl PadMode {
    pub fn amount(&self) -> usize {
        match *self {
            PadMode::None => 0,
            PadMode::Zero(p) | PadMode::Reflect(p) => p,
        }
    }
}

#[inline]
fn reflect_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

pub(crate) fn pad_forward<E: Element>(x: &Tensor<E>, mode: PadMode) -> Result<Tensor<E>> {
    let p = mode.amount();
    if p == 0 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.shape().0;
    let reflect = matches!(mode, PadMode::Reflect(_));
    if reflect && (p >= h || p >= w) {
        return Err(dim_err!(
            "reflection pad {p} needs spatial dims > {p}, got {h}x{w}"
        ));
    }
    let (ho, wo) = (h + 2 * p, w + 2 * p);
    let mut out = Vec::with_capacity(n * c * ho * wo);
    for s in x.data().chunks_exact(h * w) {
        for yo in 0..ho {
            let src_row = if reflect {
                Some(reflect_index(yo as isize - p as isize, h))
            } else if yo >= p && yo < h + p {
                Some(yo - p)
            } else {
                None
            };
            let Some(y) = src_row else {
                out.resize(out.len() + wo, E::zero());
                continue;
            };
            let row = &s[y * w..(y + 1) * w];
            if reflect {
                out.extend((0..p).map(|j| row[p - j]));
                out.extend_from_slice(row);
                out.extend((0..p).map(|j| row[w - 2 - j]));
            } else {
                out.resize(out.len() + p, E::zero());
                out.extend_from_slice(row);
                out.resize(out.len() + p, E::zero());
            }
        }
    }
    Tensor::from_vec([n, c, ho, wo], out)
}

pub(crate) fn pad_backward<E: Element>(g: &Tensor<E>, in_shape: Shape, mode: PadMode) -> Tensor<E> {
    let p = mode.amount();
    if p == 0 {
        return g.clone();
    }
    let [n, c, h, w] = in_shape.0;
    let (ho, wo) = (h + 2 * p, w + 2 * p);
    let mut out = Vec::with_capacity(n * c * h * w);
    for s in g.data().chunks_exact(ho * wo) {
        let start = out.len();
        for y in 0..h {
            out.extend_from_slice(&s[(y + p) * wo + p..(y + p) * wo + p + w]);
        }
        if let PadMode::Reflect(_) = mode {
            let d = &mut out[start..];
            for yo in 0..ho {
                let y = reflect_index(yo as isize - p as isize, h);
                let srow = &s[yo * wo..(yo + 1) * wo];
                let drow = &mut d[y * w..(y + 1) * w];
                if yo < p || yo >= h + p {
                    for (xo, &v) in srow.iter().enumerate() {
                        let xx = reflect_index(xo as isize - p as isize, w);
                        drow[xx] = drow[xx] + v;
                    }
                } else {
                    for j in 0..p {
                        drow[1 + j] = drow[1 + j] + srow[p - 1 - j];
                        drow[w - 2 - j] = drow[w - 2 - j] + srow[p + w + j];
                    }
                }
            }
        }
    }
    Tensor::from_vec(in_shape, out).expect("pad gradient shape")
}

/// Output spatial size of a valid convolution.
pub(crate) fn conv_out_dims(h: usize, w: usize, k: usize, stride: usize) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(dim_err!("convolution stride must be positive"));
    }
    if k > h || k > w {
        return Err(dim_err!("kernel {k}x{k} larger than padded input {h}x{w}"));
    }
    Ok(((h - k) / stride + 1, (w - k) / stride + 1))
}

struct Geometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<E: Element>(x: &[E], g: &Geometry, cols: &mut Vec<E>) {
    cols.clear();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                for oh in 0..g.ho {
                    let src = &plane[(oh * g.stride + ki) * g.w + kj..];
                    let span = &src[..(g.wo - 1) * g.stride + 1];
                    if g.stride == 1 {
                        cols.extend_from_slice(span);
                    } else {
                        cols.extend(span.iter().step_by(g.stride));
                    }
                }
            }
        }
    }
    debug_assert_eq!(cols.len(), g.rows() * g.cols());
}

fn col2im<E: Element>(cols: &[E], g: &Geometry, dx: &mut [E]) {
    let p = g.cols();
    let mut r = 0;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[r * p..(r + 1) * p];
                for oh in 0..g.ho {
                    let base = (oh * g.stride + ki) * g.w + kj;
                    let src = &row[oh * g.wo..(oh + 1) * g.wo];
                    let dst = &mut plane[base..base + (g.wo - 1) * g.stride + 1];
                    if g.stride == 1 {
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d = *d + v;
                        }
                    } else {
                        for (d, &v) in dst.iter_mut().step_by(g.stride).zip(src) {
                            *d = *d + v;
                        }
                    }
                }
                r += 1;
            }
        }
    }
}

fn geometry<E: Element>(x: &Tensor<E>, weight: &Tensor<E>, stride: usize) -> Result<Geometry> {
    let [_, c, h, w] = x.shape().0;
    let [_, wc, kh, kw] = weight.shape().0;
    if kh != kw {
        return Err(dim_err!("only square kernels are supported, got {kh}x{kw}"));
    }
    if wc != c {
        return Err(dim_err!(
            "weight expects {wc} input channels, input {} has {c}",
            x.shape()
        ));
    }
    let (ho, wo) = conv_out_dims(h, w, kh, stride)?;
    Ok(Geometry {
        c,
        h,
        w,
        k: kh,
        stride,
        ho,
        wo,
    })
}

/// (d_input, d_weight, d_bias), each present only when requested.
pub(crate) type ConvGrads<E> = (Option<Tensor<E>>, Option<Tensor<E>>, Option<Tensor<E>>);

/// Valid convolution of an already padded input. `weight` is (C_out, C_in, k, k).
pub(crate) fn conv_forward<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
    stride: usize,
) -> Result<Tensor<E>> {
    let g = geometry(x, weight, stride)?;
    let n = x.shape().n();
    let co = weight.shape().n();
    if let Some(b) = bias {
        if b.numel() != co {
            return Err(dim_err!(
                "bias has {} values for {co} output channels",
                b.numel()
            ));
        }
    }
    let (rows, p) = (g.rows(), g.cols());
    let mut out = Tensor::zeros([n, co, g.ho, g.wo]);
    let in_len = g.c * g.h * g.w;
    E::with_scratch(|cols, _| {
        for i in 0..n {
            let xi = &x.data()[i * in_len..(i + 1) * in_len];
            let oi = &mut out.data_mut()[i * co * p..(i + 1) * co * p];
            if let Some(b) = bias {
                for (o, &bv) in b.data().iter().enumerate() {
                    oi[o * p..(o + 1) * p].fill(bv);
                }
            }
            let (a, rsa) = if g.k == 1 && g.stride == 1 {
                (xi, p as isize)
            } else {
                im2col(xi, &g, cols);
                (&cols[..], p as isize)
            };
            let beta = if bias.is_some() { E::one() } else { E::zero() };
            E::gemm(
                co,
                rows,
                p,
                E::one(),
                weight.data(),
                rows as isize,
                1,
                a,
                rsa,
                1,
                beta,
                oi,
                p as isize,
                1,
            );
        }
    });
    Ok(out)
}

/// Gradients of a valid convolution: (d_input, d_weight, d_bias).
pub(crate) fn conv_backward<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    stride: usize,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> Result<ConvGrads<E>> {
    let g = geometry(x, weight, stride)?;
    let n = x.shape().n();
    let co = weight.shape().n();
    let (rows, p) = (g.rows(), g.cols());
    let in_len = g.c * g.h * g.w;
    let direct = g.k == 1 && g.stride == 1;

    // With few output channels the scatter form below runs a thin gemm over a
    // large column buffer; correlating the padded gradient is much cheaper.
    let gather = need_input && stride == 1 && !direct && co <= g.c;
    let mut dx = (need_input && !gather).then(|| Tensor::zeros(x.shape()));
    let mut dw = need_weight.then(|| Tensor::zeros(weight.shape()));
    let need_input = need_input && !gather;
    E::with_scratch(|cols, dcols| {
        if need_input && !direct {
            dcols.resize(rows * p, E::zero());
        }
        for i in 0..n {
            let gi = &grad_out.data()[i * co * p..(i + 1) * co * p];
            let xi = &x.data()[i * in_len..(i + 1) * in_len];
            if let Some(dw) = dw.as_mut() {
                let src = if direct {
                    xi
                } else {
                    im2col(xi, &g, cols);
                    &cols[..]
                };
                // dW(co×rows) += dY(co×p) · colsᵀ(p×rows)
                E::gemm(
                    co,
                    p,
                    rows,
                    E::one(),
                    gi,
                    p as isize,
                    1,
                    src,
                    1,
                    p as isize,
                    E::one(),
                    dw.data_mut(),
                    rows as isize,
                    1,
                );
            }
            if let Some(dx) = dx.as_mut() {
                let dxi = &mut dx.data_mut()[i * in_len..(i + 1) * in_len];
                // dcols(rows×p) = Wᵀ(rows×co) · dY(co×p)
                if direct {
                    E::gemm(
                        rows,
                        co,
                        p,
                        E::one(),
                        weight.data(),
                        1,
                        rows as isize,
                        gi,
                        p as isize,
                        1,
                        E::zero(),
                        dxi,
                        p as isize,
                        1,
                    );
                } else {
                    E::gemm(
                        rows,
                        co,
                        p,
                        E::one(),
                        weight.data(),
                        1,
                        rows as isize,
                        gi,
                        p as isize,
                        1,
                        E::zero(),
                        &mut dcols[..rows * p],
                        p as isize,
                        1,
                    );
                    col2im(dcols, &g, dxi);
                }
            }
        }
    });

    if gather {
        let padded = pad_forward(grad_out, PadMode::Zero(g.k - 1))?;
        dx = Some(conv_forward(&padded, &flip_transpose(weight), None, 1)?);
    }

    let db = need_bias.then(|| {
        let mut acc = vec![0.0f64; co];
        for i in 0..n {
            for (o, a) in acc.iter_mut().enumerate() {
                let start = (i * co + o) * p;
                *a += grad_out.data()[start..start + p]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
        }
        Tensor::from_vec(
            [co, 1, 1, 1],
            acc.into_iter().map(E::from_f64_lossy).collect(),
        )
        .expect("bias gradient shape")
    });
    Ok((dx, dw, db))
}

/// (C_out, C_in, k, k) -> (C_in, C_out, k, k) with both spatial axes reversed.
fn flip_transpose<E: Element>(weight: &Tensor<E>) -> Tensor<E> {
    let [co, ci, k, _] = weight.shape().0;
    let src = weight.data();
    let mut out = Tensor::zeros([ci, co, k, k]);
    let dst = out.data_mut();
    for o in 0..co {
        for c in 0..ci {
            for i in 0..k {
                for j in 0..k {
                    dst[((c * co + o) * k + k - 1 - i) * k + k - 1 - j] =
                        src[((o * ci + c) * k + i) * k + j];
                }
            }
        }
    }
    out
}

pub(crate) fn upsample_forward<E: Element>(x: &Tensor<E>, factor: usize) -> Tensor<E> {
    let [n, c, h, w] = x.shape().0;
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Tensor::zeros([n, c, ho, wo]);
    let src = x.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * ho * wo..(plane + 1) * ho * wo];
        for yo in 0..ho {
            let row = &s[(yo / factor) * w..(yo / factor + 1) * w];
            for xo in 0..wo {
                d[yo * wo + xo] = row[xo / factor];
            }
        }
    }
    out
}

pub(crate) fn upsample_backward<E: Element>(
    g: &Tensor<E>,
    in_shape: Shape,
    factor: usize,
) -> Tensor<E> {
    let [n, c, h, w] = in_shape.0;
    let (ho, wo) = (h * factor, w * factor);
    let mut out = Tensor::zeros(in_shape);
    let src = g.data();
    let dst = out.data_mut();
    for plane in 0..n * c {
        let s = &src[plane * ho * wo..(plane + 1) * ho * wo];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for yo in 0..ho {
            for xo in 0..wo {
                let i = (yo / factor) * w + xo / factor;
                d[i] = d[i] + s[yo * wo + xo];
            }
        }
    }
    out
}

/// Kernel row `k` of a 3×3 filter lands on low-resolution tap `(k + 1 - phase) / 2`
/// once the input has been nearest-upsampled by 2.
#[inline]
fn fold_tap(phase: usize, k: usize) -> usize {
    (k + 1 - phase) / 2
}

/// (C_out, C_in, 3, 3) filter folded to the 2×2 filter seen by output phase (a, b).
fn fold_weight<E: Element>(weight: &Tensor<E>, a: usize, b: usize) -> Tensor<E> {
    let [co, ci, _, _] = weight.shape().0;
    let mut out = Tensor::zeros([co, ci, 2, 2]);
    let (src, dst) = (weight.data(), out.data_mut());
    for oc in 0..co * ci {
        for ky in 0..3 {
            for kx in 0..3 {
                let d = oc * 4 + fold_tap(a, ky) * 2 + fold_tap(b, kx);
                dst[d] = dst[d] + src[oc * 9 + ky * 3 + kx];
            }
        }
    }
    out
}

/// Edge-replicated (H+1)×(W+1) window of `x` starting one pixel up-left, shifted by (a, b).
fn phase_window<E: Element>(x: &Tensor<E>, a: usize, b: usize) -> Tensor<E> {
    let [n, c, h, w] = x.shape().0;
    let (hp, wp) = (h + 1, w + 1);
    let mut out = Tensor::zeros([n, c, hp, wp]);
    let (src, dst) = (x.data(), out.data_mut());
    for plane in 0..n * c {
        let s = &src[plane * h * w..(plane + 1) * h * w];
        let d = &mut dst[plane * hp * wp..(plane + 1) * hp * wp];
        for r in 0..hp {
            let y = (r + a).saturating_sub(1).min(h - 1);
            let sr = &s[y * w..(y + 1) * w];
            let dr = &mut d[r * wp..(r + 1) * wp];
            if b == 0 {
                dr[0] = sr[0];
                dr[1..].copy_from_slice(sr);
            } else {
                dr[..w].copy_from_slice(sr);
                dr[w] = sr[w - 1];
            }
        }
    }
    out
}

fn phase_window_backward<E: Element>(g: &Tensor<E>, a: usize, b: usize, dx: &mut Tensor<E>) {
    let [n, c, h, w] = dx.shape().0;
    let (hp, wp) = (h + 1, w + 1);
    let (src, dst) = (g.data(), dx.data_mut());
    for plane in 0..n * c {
        let s = &src[plane * hp * wp..(plane + 1) * hp * wp];
        let d = &mut dst[plane * h * w..(plane + 1) * h * w];
        for r in 0..hp {
            let y = (r + a).saturating_sub(1).min(h - 1);
            let sr = &s[r * wp..(r + 1) * wp];
            let dr = &mut d[y * w..(y + 1) * w];
            let (body, edge, at) = if b == 0 {
                (&sr[1..], sr[0], 0)
            } else {
                (&sr[..w], sr[w], w - 1)
            };
            for (v, &g) in dr.iter_mut().zip(body) {
                *v = *v + g;
            }
            dr[at] = dr[at] + edge;
        }
    }
}

fn check_upconv<E: Element>(x: &Tensor<E>, weight: &Tensor<E>) -> Result<()> {
    let [_, c, h, w] = x.shape().0;
    let ws = weight.shape().0;
    if ws[1] != c || ws[2] != 3 || ws[3] != 3 {
        return Err(dim_err!(
            "upsampling conv needs a (C_out, {c}, 3, 3) filter, got {}",
            weight.shape()
        ));
    }
    if h == 0 || w == 0 {
        return Err(dim_err!("upsampling conv on empty input {}", x.shape()));
    }
    Ok(())
}

/// Nearest 2× upsampling followed by a 3×3 convolution with reflect(1) padding,
/// computed as four 2×2 convolutions on the low-resolution input.
pub(crate) fn upconv_forward<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    bias: Option<&Tensor<E>>,
) -> Result<Tensor<E>> {
    check_upconv(x, weight)?;
    let [n, _, h, w] = x.shape().0;
    let co = weight.shape().n();
    let mut out = Tensor::zeros([n, co, 2 * h, 2 * w]);
    for a in 0..2 {
        for b in 0..2 {
            let y = conv_forward(&phase_window(x, a, b), &fold_weight(weight, a, b), bias, 1)?;
            let (src, dst) = (y.data(), out.data_mut());
            for plane in 0..n * co {
                let s = &src[plane * h * w..(plane + 1) * h * w];
                let d = &mut dst[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                for i in 0..h {
                    let row = &mut d[(2 * i + a) * 2 * w..(2 * i + a + 1) * 2 * w];
                    for j in 0..w {
                        row[2 * j + b] = s[i * w + j];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`upconv_forward`]: (d_input, d_weight, d_bias).
pub(crate) fn upconv_backward<E: Element>(
    x: &Tensor<E>,
    weight: &Tensor<E>,
    grad_out: &Tensor<E>,
    need_input: bool,
    need_weight: bool,
    need_bias: bool,
) -> Result<ConvGrads<E>> {
    check_upconv(x, weight)?;
    let [n, ci, h, w] = x.shape().0;
    let co = weight.shape().n();
    if grad_out.shape().0 != [n, co, 2 * h, 2 * w] {
        return Err(dim_err!("upsampling conv gradient has shape {}", grad_out.shape()));
    }
    let mut dx = need_input.then(|| Tensor::zeros(x.shape()));
    let mut dw = need_weight.then(|| Tensor::zeros(weight.shape()));
    let mut db = None;
    for a in 0..2 {
        for b in 0..2 {
            let mut gy = Tensor::zeros([n, co, h, w]);
            {
                let (src, dst) = (grad_out.data(), gy.data_mut());
                for plane in 0..n * co {
                    let s = &src[plane * 4 * h * w..(plane + 1) * 4 * h * w];
                    let d = &mut dst[plane * h * w..(plane + 1) * h * w];
                    for i in 0..h {
                        let row = &s[(2 * i + a) * 2 * w..(2 * i + a + 1) * 2 * w];
                        for j in 0..w {
                            d[i * w + j] = row[2 * j + b];
                        }
                    }
                }
            }
            let window = phase_window(x, a, b);
            let (dwin, dwab, dbab) = conv_backward(
                &window,
                &fold_weight(weight, a, b),
                &gy,
                1,
                need_input,
                need_weight,
                need_bias,
            )?;
            if let (Some(dx), Some(dwin)) = (dx.as_mut(), dwin) {
                phase_window_backward(&dwin, a, b, dx);
            }
            if let (Some(dw), Some(dwab)) = (dw.as_mut(), dwab) {
                let (src, dst) = (dwab.data(), dw.data_mut());
                for oc in 0..co * ci {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let d = oc * 9 + ky * 3 + kx;
                            dst[d] = dst[d] + src[oc * 4 + fold_tap(a, ky) * 2 + fold_tap(b, kx)];
                        }
                    }
                }
            }
            if let Some(dbab) = dbab {
                db = Some(match db {
                    None => dbab,
                    Some(acc) => {
                        let mut acc: Tensor<E> = acc;
                        for (v, &d) in acc.data_mut().iter_mut().zip(dbab.data()) {
                            *v = *v + d;
                        }
                        acc
                    }
                });
            }
        }
    }
    Ok((dx, dw, db))
}
