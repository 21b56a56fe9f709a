//! Central-difference gradient checking.
//!
//! The verification workhorse: every network in the crate is validated by
//! comparing its reverse-mode gradients against finite differences. The
//! finite-difference path re-evaluates the function on fresh graphs and
//! never touches the backward machinery it is checking.

use super::{Graph, Tensor};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Coordinates compared against central differences.
    pub checked: usize,
    /// Coordinates skipped because a perturbation crossed an activation
    /// kink (leaky-relu input changed sign between x−ε and x+ε).
    pub excluded: usize,
}

/// Compare reverse-mode gradients of `f` (a scalar-valued tensor function)
/// against central finite differences at `x0`.
///
/// Relative error per coordinate is |a−b| / max(1, |a|, |b|).
pub fn grad_check<F>(f: F, shape: &[usize], x0: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&Graph, &Tensor) -> Result<Tensor>,
{
    // Analytic gradient.
    let g = Graph::new();
    let x = g.leaf(shape, x0, true)?;
    let y = f(&g, &x)?;
    if y.numel() != 1 {
        return Err(crate::error::Error::NonScalarLoss(y.shape().to_vec()));
    }
    let grads = y.backward(&[&x])?;
    let analytic = grads.get(&x).unwrap().to_vec();

    let eval = |values: &[f64]| -> Result<(f64, Vec<bool>)> {
        let g = Graph::new();
        let x = g.leaf(shape, values, false)?;
        let y = f(&g, &x)?;
        Ok((y.item(), g.kink_signature()))
    };

    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut probe = x0.to_vec();
    for i in 0..x0.len() {
        probe[i] = x0[i] + eps;
        let (y_plus, sig_plus) = eval(&probe)?;
        probe[i] = x0[i] - eps;
        let (y_minus, sig_minus) = eval(&probe)?;
        probe[i] = x0[i];

        if sig_plus != sig_minus {
            excluded += 1;
            continue;
        }
        let numeric = (y_plus - y_minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
        max_rel_err = max_rel_err.max(rel);
        checked += 1;
    }

    Ok(GradCheckReport {
        max_rel_err,
        checked,
        excluded,
    })
}
