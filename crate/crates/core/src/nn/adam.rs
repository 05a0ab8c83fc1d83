use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use super::{Real, Tensor};
use crate::{Error, Result};

/// Adam moments for an ordered parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<R> {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub first_moment: Vec<Vec<R>>,
    pub second_moment: Vec<Vec<R>>,
}

impl<R: Real> AdamState<R> {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(param_lens: &[usize]) -> Self {
        Self::with_hyper(param_lens, Self::BETA1, Self::BETA2, Self::EPSILON)
    }

    pub fn with_hyper(param_lens: &[usize], beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            step: 0,
            beta1,
            beta2,
            epsilon,
            first_moment: param_lens.iter().map(|&n| vec![R::zero(); n]).collect(),
            second_moment: param_lens.iter().map(|&n| vec![R::zero(); n]).collect(),
        }
    }

    pub fn for_params(params: &[&mut Tensor<R>]) -> Self {
        let lens: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(&lens)
    }

    /// One bias-corrected Adam update from the parameters' gradient slots.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Tensor<R>], lr: f64) -> Result<()> {
        if params.len() != self.first_moment.len() {
            return Err(Error::usage(format!(
                "adam: {} parameter tensors, state tracks {}",
                params.len(),
                self.first_moment.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            let grad = p.grad().ok_or_else(|| Error::usage(format!("adam: parameter {i} has no gradient slot")))?;
            if grad.len() != self.first_moment[i].len() {
                return Err(Error::usage(format!("adam: parameter {i} changed length")));
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::training(format!("adam: non-finite gradient in parameter {i}; update aborted")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (R::of(self.beta1), R::of(self.beta2));
        let (one_b1, one_b2) = (R::of(1.0 - self.beta1), R::of(1.0 - self.beta2));
        let correction1 = R::of(1.0 - Float::powi(self.beta1, t));
        let correction2 = R::of(1.0 - Float::powi(self.beta2, t));
        let (lr, eps) = (R::of(lr), R::of(self.epsilon));
        for ((p, m), v) in params.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            let (data, grad) = p.data_and_grad_mut();
            let grad = grad.expect("checked above");
            for (((theta, &g), m), v) in data.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<R: Real>(params: &mut [&mut Tensor<R>], max_norm: f64) -> f64 {
    let norm = params
        .iter()
        .filter_map(|p| p.grad())
        .flat_map(|g| g.iter())
        .map(|g| g.f64() * g.f64())
        .sum::<f64>();
    let norm = Float::sqrt(norm);
    if norm > max_norm && norm > 0.0 {
        let scale = R::of(max_norm / norm);
        for p in params.iter_mut() {
            if let Some(g) = p.grad_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn param(values: &[f64], grads: &[f64]) -> Tensor<f64> {
        let mut t = Tensor::from_f64(vec![values.len()], values).unwrap().with_grad();
        t.grad_mut().unwrap().copy_from_slice(grads);
        t
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = param(&[0.5], &[1.0]);
        let mut state = AdamState::<f64>::new(&[1]);
        state.step(&mut [&mut p], 1e-3).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((p.data()[0] - (0.5 - 1e-3)).abs() < 1e-10);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_learning_rate_still_updates_moments() {
        let mut p = param(&[2.0, -1.0], &[0.3, -0.7]);
        let mut state = AdamState::<f64>::new(&[2]);
        state.step(&mut [&mut p], 0.0).unwrap();
        assert_eq!(p.data(), &[2.0, -1.0]);
        assert!((state.first_moment[0][0] - 0.03).abs() < 1e-15);
        assert!((state.second_moment[0][1] - 0.001 * 0.49).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_aborts_without_touching_anything() {
        let mut p = param(&[1.0, 2.0], &[0.1, f64::NAN]);
        let mut state = AdamState::<f64>::new(&[2]);
        let before = state.clone();
        assert!(matches!(state.step(&mut [&mut p], 0.1), Err(Error::Training(_))));
        assert_eq!(state, before);
        assert_eq!(p.data(), &[1.0, 2.0]);
    }

    #[test]
    fn grad_norm_clipping_caps_the_norm() {
        let mut p = param(&[0.0, 0.0], &[3.0, 4.0]);
        let norm = clip_grad_norm(&mut [&mut p], 1.0);
        assert_eq!(norm, 5.0);
        let g = p.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn zero_gradient_is_a_fixed_point(
            values in prop::collection::vec(-10.0f64..10.0, 1..20),
            steps in 1usize..30,
            lr in 0.0f64..1.0,
        ) {
            let mut p = param(&values, &vec![0.0; values.len()]);
            let mut state = AdamState::<f64>::new(&[values.len()]);
            for _ in 0..steps {
                state.step(&mut [&mut p], lr).unwrap();
            }
            prop_assert_eq!(p.data(), &values[..]);
            prop_assert_eq!(state.step, steps as u64);
        }
    }
}
