use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Real;
use crate::{Error, Result};

/// Dense row-major array with an optional gradient slot of the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R> {
    shape: Vec<usize>,
    data: Vec<R>,
    grad: Option<Vec<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn new(shape: Vec<usize>, data: Vec<R>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!("tensor extents must be positive, got {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::config(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor { shape, data: vec![R::zero(); len], grad: None }
    }

    pub fn from_f64(shape: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&x| R::of(x)).collect())
    }

    /// Attaches a zeroed gradient slot.
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![R::zero(); self.data.len()]);
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<R> {
        self.data
    }

    pub fn grad(&self) -> Option<&[R]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [R]> {
        self.grad.as_deref_mut()
    }

    /// Data and gradient borrowed together, for optimizer updates.
    pub fn data_and_grad_mut(&mut self) -> (&mut [R], Option<&mut [R]>) {
        (&mut self.data, self.grad.as_deref_mut())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = R::zero());
        }
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::config(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
            && self.grad.as_ref().is_none_or(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| S::of(x.f64())).collect(),
            grad: self.grad.as_ref().map(|g| g.iter().map(|&x| S::of(x.f64())).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Config(_))
        ));
        assert!(Tensor::<f64>::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_slot_tracks_data_length() {
        let mut t = Tensor::<f32>::zeros(vec![4, 5]).with_grad();
        assert_eq!(t.grad().unwrap().len(), t.len());
        t.grad_mut().unwrap()[3] = 2.0;
        t.zero_grad();
        assert!(t.grad().unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn reshape_preserves_element_count() {
        let t = Tensor::<f64>::zeros(vec![2, 3, 4]);
        assert_eq!(t.clone().reshape(vec![2, 12]).unwrap().shape(), &[2, 12]);
        assert!(t.reshape(vec![5, 5]).is_err());
    }

    #[test]
    fn non_finite_values_are_detected() {
        let mut t = Tensor::<f64>::zeros(vec![3]).with_grad();
        assert!(t.is_finite());
        t.grad_mut().unwrap()[1] = f64::NAN;
        assert!(!t.is_finite());
    }
}
