//! Central-difference verification of analytic gradients.
//!
//! Every parameter is perturbed by `+-h`; a parameter is skipped when either
//! perturbation flips any ReLU mask, since the objective is not
//! differentiable across a kink. Relative error is
//! `|analytic - numeric| / max(|analytic|, |numeric|, 1e-6)`; the floor
//! keeps parameters with vanishing gradients from reporting rounding noise.

use alloc::format;
use alloc::vec::Vec;

use super::{Sequential, Tensor};
use crate::{Error, Result};

pub const MAX_CHECKED_PARAMS: usize = 10_000;
pub const DEFAULT_STEP: f64 = 1e-5;
const DENOMINATOR_FLOOR: f64 = 1e-6;

/// A scalar objective over a fixed input, differentiable in its parameters.
pub trait GradProbe {
    /// Forward pass only.
    fn objective(&mut self) -> Result<f64>;
    /// Zeroes gradients, then runs forward and backward so every parameter's
    /// grad slot holds d objective / d parameter.
    fn objective_with_grad(&mut self) -> Result<f64>;
    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>>;
    /// ReLU masks recorded by the most recent forward pass.
    fn relu_masks(&self) -> Vec<bool>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub max_relative_error: f64,
    /// `(tensor index, element index)` of the worst parameter.
    pub worst: Option<(usize, usize)>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_relative_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn finite_difference_check<P: GradProbe>(probe: &mut P, tolerance: f64, step: f64) -> Result<GradCheckReport> {
    let total: usize = probe.params_mut().iter().map(|p| p.len()).sum();
    if total > MAX_CHECKED_PARAMS {
        return Err(Error::usage(format!(
            "gradient check over {total} parameters exceeds the limit of {MAX_CHECKED_PARAMS}"
        )));
    }
    probe.objective_with_grad()?;
    let baseline_masks = probe.relu_masks();
    let analytic: Vec<Vec<f64>> = probe
        .params_mut()
        .iter()
        .map(|p| p.grad().map(<[f64]>::to_vec).unwrap_or_default())
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        skipped_at_kinks: 0,
        max_relative_error: 0.0,
        worst: None,
        tolerance,
    };
    for (ti, grads) in analytic.iter().enumerate() {
        for (ei, &a) in grads.iter().enumerate() {
            let original = probe.params_mut()[ti].data()[ei];
            probe.params_mut()[ti].data_mut()[ei] = original + step;
            let plus = probe.objective()?;
            let plus_masks = probe.relu_masks();
            probe.params_mut()[ti].data_mut()[ei] = original - step;
            let minus = probe.objective()?;
            let minus_masks = probe.relu_masks();
            probe.params_mut()[ti].data_mut()[ei] = original;
            if plus_masks != baseline_masks || minus_masks != baseline_masks {
                report.skipped_at_kinks += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some((ti, ei));
            }
        }
    }
    Ok(report)
}

/// Probe over a [`Sequential`]: objective is `sum(weights * output)`.
pub struct SequentialProbe {
    pub net: Sequential<f64>,
    pub input: Tensor<f64>,
    pub output_weights: Vec<f64>,
}

impl GradProbe for SequentialProbe {
    fn objective(&mut self) -> Result<f64> {
        let out = self.net.forward(self.input.clone())?;
        Ok(out.data().iter().zip(&self.output_weights).map(|(y, w)| y * w).sum())
    }

    fn objective_with_grad(&mut self) -> Result<f64> {
        for p in self.net.params_mut() {
            p.zero_grad();
        }
        let out = self.net.forward(self.input.clone())?;
        let value = out.data().iter().zip(&self.output_weights).map(|(y, w)| y * w).sum();
        let seed = Tensor::new(out.shape().to_vec(), self.output_weights.clone())?;
        self.net.backward(&seed)?;
        Ok(value)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor<f64>> {
        self.net.params_mut()
    }

    fn relu_masks(&self) -> Vec<bool> {
        self.net.relu_masks()
    }
}
