//! Positional normalization: per-position channel moments, their removal,
//! and their re-injection into later feature maps.

use crate::error::{dim_err, Result};
use crate::tensor::{Element, Tape, Var};

/// Variance floor inside the square root of the positional std.
pub const PONO_EPS: f64 = 1e-5;

/// Per-position channel mean (`beta`) and std (`gamma`), each (B,1,H,W).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentPair {
    pub beta: Var,
    pub gamma: Var,
    pub epsilon: f64,
}

pub fn extract_moments<E: Element>(tape: &mut Tape<E>, x: Var) -> Result<MomentPair> {
    extract_moments_eps(tape, x, PONO_EPS)
}

/// `beta = mean_c x`, `gamma = sqrt(mean_c (x - beta)^2 + eps)`.
pub fn extract_moments_eps<E: Element>(
    tape: &mut Tape<E>,
    x: Var,
    epsilon: f64,
) -> Result<MomentPair> {
    let shape = tape.shape(x);
    if shape.c() == 0 {
        return Err(dim_err!("positional moments need at least one channel"));
    }
    let channel_axis = [false, true, false, false];
    let beta = tape.mean_axes(x, channel_axis);
    let beta_full = tape.broadcast(beta, shape)?;
    let centered = tape.sub(x, beta_full)?;
    let sq = tape.square(centered);
    let var = tape.mean_axes(sq, channel_axis);
    let var = tape.add_scalar(var, epsilon);
    let gamma = tape.sqrt(var);
    Ok(MomentPair {
        beta,
        gamma,
        epsilon,
    })
}

/// Standardizes every position across channels and returns the removed moments.
pub fn pono_normalize<E: Element>(tape: &mut Tape<E>, x: Var) -> Result<(Var, MomentPair)> {
    let moments = extract_moments(tape, x)?;
    let shape = tape.shape(x);
    let beta = tape.broadcast(moments.beta, shape)?;
    let gamma = tape.broadcast(moments.gamma, shape)?;
    let centered = tape.sub(x, beta)?;
    let normalized = tape.div(centered, gamma)?;
    Ok((normalized, moments))
}

/// `out = gamma * f + beta`, broadcasting the moments over channels.
///
/// When the moments were taken at a different resolution than `f`, they are
/// resized with nearest-neighbour replication by an integer factor.
pub fn inject_moments<E: Element>(tape: &mut Tape<E>, f: Var, moments: &MomentPair) -> Result<Var> {
    let shape = tape.shape(f);
    let beta = resize_to(tape, moments.beta, shape.h(), shape.w())?;
    let gamma = resize_to(tape, moments.gamma, shape.h(), shape.w())?;
    let beta = tape.broadcast(beta, shape)?;
    let gamma = tape.broadcast(gamma, shape)?;
    let scaled = tape.mul(gamma, f)?;
    tape.add(scaled, beta)
}

fn resize_to<E: Element>(tape: &mut Tape<E>, m: Var, h: usize, w: usize) -> Result<Var> {
    let s = tape.shape(m);
    if (s.h(), s.w()) == (h, w) {
        return Ok(m);
    }
    let fits = s.h() > 0 && h.is_multiple_of(s.h()) && w.is_multiple_of(s.w()) && h / s.h() == w / s.w();
    if !fits {
        return Err(dim_err!(
            "moments at {}x{} cannot be resized to {h}x{w}",
            s.h(),
            s.w()
        ));
    }
    tape.upsample_nearest(m, h / s.h())
}
