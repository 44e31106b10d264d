use super::{Tape, Tensor, Var};
use crate::error::{BianError, Result};

/// Central-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-6;

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// `f` records its computation on the tape it is given, reading the
/// parameters from the supplied handles, and returns a `1×1` output.
/// Returns the maximum over every parameter entry of
/// `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(params: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.constant(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out);
        if v.shape() != (1, 1) {
            return Err(BianError::shape("grad_check output", v.shape(), (1, 1)));
        }
        let v = v.data()[0];
        if !v.is_finite() {
            return Err(BianError::NonFinite("grad_check objective".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).data()[0].is_finite() {
        return Err(BianError::NonFinite("grad_check objective".into()));
    }
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
        .collect();

    let mut work: Vec<Tensor> = params.to_vec();
    let mut worst: f64 = 0.0;
    for pi in 0..params.len() {
        for e in 0..params[pi].len() {
            let orig = params[pi].data()[e];
            work[pi].data_mut()[e] = orig + GRAD_CHECK_STEP;
            let up = eval(&work)?;
            work[pi].data_mut()[e] = orig - GRAD_CHECK_STEP;
            let down = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * GRAD_CHECK_STEP);
            let a = analytic[pi].data()[e];
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
