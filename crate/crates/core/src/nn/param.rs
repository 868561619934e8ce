use crate::rng::RngStream;
use crate::scalar::Scalar;

use super::Tensor;

/// A named trainable tensor with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub velocity: Tensor<T>,
    /// Frozen parameters accumulate no gradient and are never updated.
    pub frozen: bool,
}

impl<T: Scalar> Param<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        let velocity = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            velocity,
            frozen: false,
        }
    }

    /// Uniform in ±√(6/(fan_in+fan_out)).
    pub fn glorot(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut RngStream,
    ) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::lit(rng.uniform(-limit, limit))).collect();
        Self::new(name, Tensor::new(shape.to_vec(), data).expect("shape matches data"))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }

    /// `v ← momentum·v + g; p ← p − lr·v`, then clears the gradient.
    pub fn sgd_step(&mut self, lr: T, momentum: T) {
        if !self.frozen {
            let v = self.velocity.data_mut();
            let g = self.grad.data();
            let p = self.value.data_mut();
            for i in 0..p.len() {
                v[i] = momentum * v[i] + g[i];
                p[i] -= lr * v[i];
            }
        }
        self.zero_grad();
    }
}

/// Applies one momentum-SGD update to every parameter.
pub fn sgd_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Param<T>>,
    lr: T,
    momentum: T,
) {
    for p in params {
        p.sgd_step(lr, momentum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(p: f64) -> Param<f64> {
        Param::new("p", Tensor::from_vec(vec![p]))
    }

    #[test]
    fn plain_step() {
        let mut p = scalar_param(1.0);
        p.grad.data_mut()[0] = 0.5;
        sgd_step([&mut p], 0.1, 0.0);
        assert!((p.value.data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn momentum_recursion() {
        let mut p = scalar_param(0.0);
        for _ in 0..2 {
            p.grad.data_mut()[0] = 1.0;
            p.sgd_step(0.1, 0.9);
        }
        // v1 = 1, v2 = 1.9
        assert!((p.value.data()[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_noop_and_frozen_never_moves() {
        let mut p = scalar_param(3.0);
        p.sgd_step(0.5, 0.9);
        assert_eq!(p.value.data()[0], 3.0);
        p.frozen = true;
        p.grad.data_mut()[0] = 10.0;
        p.sgd_step(0.5, 0.9);
        assert_eq!(p.value.data()[0], 3.0);
        assert_eq!(p.grad.data()[0], 0.0);
    }
}
