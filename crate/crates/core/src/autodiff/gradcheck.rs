//! Central finite-difference check of reverse-mode gradients.

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Magnitudes below this floor are compared absolutely rather than
    /// relatively. Central differences at `h = 1e-5` carry round-off of about
    /// `1e-16 · |loss| / h ≈ 1e-11`, so the floor keeps that noise two orders
    /// below a `1e-5` tolerance.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, floor: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter, element) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(floor);
    (analytic - numeric).abs() / scale
}

/// Compares the tape's gradients of `loss` at `point` against central differences.
///
/// `loss` receives a fresh tape and one parameter slot per tensor in `point`,
/// and must return a scalar slot.
pub fn grad_check<F>(loss: F, point: &[Tensor]) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with(loss, point, GradCheckConfig::default())
}

pub fn grad_check_with<F>(loss: F, point: &[Tensor], config: GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |params: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = loss(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|p| tape.param(p.clone())).collect();
    let out = loss(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, analytic: 0.0, numeric: 0.0 };
    let mut probe = point.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).data().to_vec();
        for (ei, &a) in analytic.iter().enumerate() {
            let original = probe[pi].data()[ei];
            probe[pi].data_mut()[ei] = original + config.step;
            let up = eval(&probe)?;
            probe[pi].data_mut()[ei] = original - config.step;
            let down = eval(&probe)?;
            probe[pi].data_mut()[ei] = original;

            let numeric = (up - down) / (2.0 * config.step);
            let err = relative_error(a, numeric, config.floor);
            if err > report.max_rel_error || report.worst.is_none() {
                report = GradCheckReport { max_rel_error: err, worst: Some((pi, ei)), analytic: a, numeric };
            }
        }
    }
    Ok(report)
}
