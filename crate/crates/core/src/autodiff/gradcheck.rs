//! Central finite-difference gradient checking.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Perturbation size.
    pub eps: f64,
    /// Magnitude floor in the relative-error denominator, so entries whose
    /// true gradient is ~0 are judged on absolute error.
    pub floor: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            eps: 1e-5,
            floor: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// `(input index, flat element index)` of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares reverse-mode gradients of `f` against central differences with
/// respect to every element of every input.
///
/// `f` must build a scalar loss from the supplied leaves and be
/// deterministic; it is re-run twice per element.
pub fn check_gradients<F>(inputs: &[Tensor], cfg: GradCheck, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for (ti, input) in inputs.iter().enumerate() {
        for e in 0..input.len() {
            let orig = input.data()[e];
            work[ti].data_mut()[e] = orig + cfg.eps;
            let plus = eval(&work)?;
            work[ti].data_mut()[e] = orig - cfg.eps;
            let minus = eval(&work)?;
            work[ti].data_mut()[e] = orig;

            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let exact = analytic[ti].data()[e];
            if !numeric.is_finite() || !exact.is_finite() {
                return Err(Error::Backward(format!(
                    "non-finite gradient at input {ti} element {e}"
                )));
            }
            let abs = (numeric - exact).abs();
            let rel = abs / numeric.abs().max(exact.abs()).max(cfg.floor);
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (ti, e);
            }
            report.max_abs_err = report.max_abs_err.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}
