//! Minimal trainable-layer toolkit: explicit forward/backward passes over
//! `ndarray` tensors. Deterministic by construction — batch members are
//! processed in parallel but every reduction runs in fixed index order, so
//! two runs with the same seed produce bit-identical results.

mod adam;
mod conv;
mod norm;
mod pool;

pub use adam::Adam;
pub use conv::Conv2d;
pub use norm::{BatchNorm2d, BnCache, FeatureNorm, FeatureNormCache};
pub use pool::{MaxPool2d, PoolCache};

use ndarray::{Array4, ArrayD};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One trainable tensor with its gradient and Adam moment buffers.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: ArrayD<f32>,
    pub grad: ArrayD<f32>,
    pub m: ArrayD<f32>,
    pub v: ArrayD<f32>,
}

impl Param {
    pub fn new(value: ArrayD<f32>) -> Self {
        let grad = ArrayD::zeros(value.raw_dim());
        let m = ArrayD::zeros(value.raw_dim());
        let v = ArrayD::zeros(value.raw_dim());
        Param { value, grad, m, v }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::new(ArrayD::zeros(shape.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Gaussian init with the given standard deviation.
pub fn normal_init(shape: &[usize], std: f32, rng: &mut ChaCha8Rng) -> Param {
    let n: usize = shape.iter().product();
    let data: Vec<f32> = (0..n)
        .map(|_| {
            // Box-Muller from two uniform draws keeps us independent of
            // distribution-crate version changes.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random::<f64>();
            ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32 * std
        })
        .collect();
    Param::new(ArrayD::from_shape_vec(shape.to_vec(), data).unwrap())
}

pub fn relu(x: &Array4<f32>) -> Array4<f32> {
    x.mapv(|v| v.max(0.0))
}

/// Gradient through ReLU given the forward *output* (positive where active).
pub fn relu_backward(dy: &Array4<f32>, y: &Array4<f32>) -> Array4<f32> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |g, &out| {
        if out <= 0.0 {
            *g = 0.0;
        }
    });
    dx
}

pub fn sigmoid_f64(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn normal_init_is_seeded() {
        let a = normal_init(&[4, 3], 0.1, &mut ChaCha8Rng::seed_from_u64(7));
        let b = normal_init(&[4, 3], 0.1, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a.value, b.value);
        assert!(a.grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn relu_and_backward() {
        let x = Array4::from_shape_fn((1, 1, 2, 2), |(_, _, i, j)| (i as f32 - 0.5) * (j as f32 + 1.0));
        let y = relu(&x);
        assert!(y.iter().all(|&v| v >= 0.0));
        let dy = Array4::from_elem((1, 1, 2, 2), 1.0f32);
        let dx = relu_backward(&dy, &y);
        for ((g, &out), &_inp) in dx.iter().zip(y.iter()).zip(x.iter()) {
            assert_eq!(*g, if out > 0.0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn sigmoid_extremes() {
        assert!((sigmoid_f64(0.0) - 0.5).abs() < 1e-12);
        assert!(sigmoid_f64(-40.0) > 0.0);
        assert!(sigmoid_f64(-40.0) < 1e-15);
        assert!(sigmoid_f64(40.0) < 1.0 + 1e-15);
    }
}
