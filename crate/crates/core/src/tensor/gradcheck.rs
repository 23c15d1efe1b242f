use super::{Element, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares autodiff against central differences.
///
/// `f` rebuilds the computation on a fresh tape from the given input var and
/// must return a single-element node. Returns the maximum over input elements
/// of `|a - n| / max(|a|, |n|, 1e-8)` where `a` is the analytic and `n` the
/// numeric derivative.
pub fn grad_check<E, F>(f: F, input: &Tensor<E>, eps: f64) -> Result<f64>
where
    E: Element,
    F: Fn(&mut Tape<E>, Var) -> Result<Var>,
{
    let eval = |x: Tensor<E>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.leaf(x, false);
        let out = f(&mut tape, v)?;
        Ok(tape.scalar(out))
    };

    let mut tape = Tape::new();
    let x = tape.leaf(input.clone(), true);
    let out = f(&mut tape, x)?;
    if tape.value(out).numel() != 1 {
        return Err(Error::Contract(format!(
            "grad_check target must be scalar, got {}",
            tape.shape(out)
        )));
    }
    let analytic = tape
        .backward(out)?
        .take(x)
        .unwrap_or_else(|| Tensor::zeros(input.shape()));

    let mut worst = 0.0f64;
    for i in 0..input.numel() {
        let base = input.data()[i].as_f64();
        let mut plus = input.clone();
        plus.data_mut()[i] = E::from_f64_lossy(base + eps);
        let mut minus = input.clone();
        minus.data_mut()[i] = E::from_f64_lossy(base - eps);
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        let a = analytic.data()[i].as_f64();
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
