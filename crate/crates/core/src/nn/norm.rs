//! Batch normalization. Training mode normalizes with batch statistics and
//! keeps running estimates for inference mode. Statistics are accumulated in
//! f64 and always in fixed index order.

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array3, Array4, Axis};

use super::Param;

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch norm over (B, C, H, W).
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param, // (C)
    pub beta: Param,  // (C)
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    channels: usize,
}

/// Saved intermediates for the backward pass.
pub struct BnCache {
    pub x_hat: Array4<f32>,
    pub inv_std: Array1<f32>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::new(ndarray::ArrayD::from_elem(vec![channels], 1.0f32)),
            beta: Param::zeros(&[channels]),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            channels,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    fn batch_stats(&self, x: &Array4<f32>) -> (Array1<f64>, Array1<f64>) {
        let (b, c, h, w) = x.dim();
        let n = (b * h * w) as f64;
        let mut mean = Array1::<f64>::zeros(c);
        let mut var = Array1::<f64>::zeros(c);
        for ch in 0..c {
            let view = x.slice(ndarray::s![.., ch, .., ..]);
            let sum: f64 = view.iter().map(|&v| v as f64).sum();
            let mu = sum / n;
            let ss: f64 = view.iter().map(|&v| (v as f64 - mu).powi(2)).sum();
            mean[ch] = mu;
            var[ch] = ss / n;
        }
        (mean, var)
    }

    pub fn forward_train(&mut self, x: &Array4<f32>) -> (Array4<f32>, BnCache) {
        let (mean, var) = self.batch_stats(x);
        for ch in 0..self.channels {
            self.running_mean[ch] = ((1.0 - BN_MOMENTUM) * self.running_mean[ch] as f64
                + BN_MOMENTUM * mean[ch]) as f32;
            self.running_var[ch] = ((1.0 - BN_MOMENTUM) * self.running_var[ch] as f64
                + BN_MOMENTUM * var[ch]) as f32;
        }
        let inv_std: Array1<f32> =
            Array1::from_iter(var.iter().map(|&v| (1.0 / (v + BN_EPS).sqrt()) as f32));
        let mean32: Array1<f32> = mean.mapv(|v| v as f32);
        let (x_hat, y) = self.normalize(x, &mean32, &inv_std);
        (y, BnCache { x_hat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array4<f32>) -> Array4<f32> {
        let inv_std: Array1<f32> = self
            .running_var
            .mapv(|v| (1.0 / (v as f64 + BN_EPS).sqrt()) as f32);
        let (_, y) = self.normalize(x, &self.running_mean.clone(), &inv_std);
        y
    }

    fn normalize(
        &self,
        x: &Array4<f32>,
        mean: &Array1<f32>,
        inv_std: &Array1<f32>,
    ) -> (Array4<f32>, Array4<f32>) {
        let gamma: Vec<f32> = self.gamma.value.iter().copied().collect();
        let beta: Vec<f32> = self.beta.value.iter().copied().collect();
        let mut x_hat = x.clone();
        x_hat
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut sample| {
                for ch in 0..self.channels {
                    let mut plane = sample.slice_mut(ndarray::s![ch, .., ..]);
                    plane.mapv_inplace(|v| (v - mean[ch]) * inv_std[ch]);
                }
            });
        let mut y = x_hat.clone();
        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut sample| {
                for ch in 0..self.channels {
                    let mut plane = sample.slice_mut(ndarray::s![ch, .., ..]);
                    plane.mapv_inplace(|v| v * gamma[ch] + beta[ch]);
                }
            });
        (x_hat, y)
    }

    pub fn backward(&mut self, cache: &BnCache, dy: &Array4<f32>) -> Array4<f32> {
        let (b, c, h, w) = dy.dim();
        let n = (b * h * w) as f64;
        let gamma: Vec<f32> = self.gamma.value.iter().copied().collect();

        let mut sum_dy = vec![0.0f64; c];
        let mut sum_dy_xhat = vec![0.0f64; c];
        for ch in 0..c {
            let dyv = dy.slice(ndarray::s![.., ch, .., ..]);
            let xh = cache.x_hat.slice(ndarray::s![.., ch, .., ..]);
            for (&g, &xv) in dyv.iter().zip(xh.iter()) {
                sum_dy[ch] += g as f64;
                sum_dy_xhat[ch] += g as f64 * xv as f64;
            }
        }

        {
            let mut ggrad = self
                .gamma
                .grad
                .view_mut()
                .into_shape_with_order(c)
                .unwrap();
            let mut bgrad = self.beta.grad.view_mut().into_shape_with_order(c).unwrap();
            for ch in 0..c {
                ggrad[ch] += sum_dy_xhat[ch] as f32;
                bgrad[ch] += sum_dy[ch] as f32;
            }
        }

        let mean_dy: Vec<f32> = sum_dy.iter().map(|&v| (v / n) as f32).collect();
        let mean_dy_xhat: Vec<f32> = sum_dy_xhat.iter().map(|&v| (v / n) as f32).collect();
        let scale: Vec<f32> = (0..c).map(|ch| gamma[ch] * cache.inv_std[ch]).collect();

        let mut dx = dy.clone();
        dx.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(cache.x_hat.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut dsample, xh)| {
                for ch in 0..c {
                    let mut plane = dsample.slice_mut(ndarray::s![ch, .., ..]);
                    let xplane = xh.slice(ndarray::s![ch, .., ..]);
                    for (g, &xv) in plane.iter_mut().zip(xplane.iter()) {
                        *g = scale[ch] * (*g - mean_dy[ch] - xv * mean_dy_xhat[ch]);
                    }
                }
            });
        let _ = (h, w);
        dx
    }
}

/// Batch norm over the last axis of (B, T, F): one statistic per feature
/// bin, pooled over batch and time. Applied to the raw log-mel input.
#[derive(Debug, Clone)]
pub struct FeatureNorm {
    pub gamma: Param, // (F)
    pub beta: Param,  // (F)
    pub running_mean: Array1<f32>,
    pub running_var: Array1<f32>,
    bins: usize,
}

pub struct FeatureNormCache {
    pub x_hat: Array3<f32>,
    pub inv_std: Array1<f32>,
}

impl FeatureNorm {
    pub fn new(bins: usize) -> Self {
        FeatureNorm {
            gamma: Param::new(ndarray::ArrayD::from_elem(vec![bins], 1.0f32)),
            beta: Param::zeros(&[bins]),
            running_mean: Array1::zeros(bins),
            running_var: Array1::ones(bins),
            bins,
        }
    }

    pub fn forward_train(&mut self, x: &Array3<f32>) -> (Array3<f32>, FeatureNormCache) {
        let (b, t, f) = x.dim();
        assert_eq!(f, self.bins);
        let n = (b * t) as f64;
        let mut mean = vec![0.0f64; f];
        let mut var = vec![0.0f64; f];
        for bin in 0..f {
            let view = x.slice(ndarray::s![.., .., bin]);
            let sum: f64 = view.iter().map(|&v| v as f64).sum();
            let mu = sum / n;
            let ss: f64 = view.iter().map(|&v| (v as f64 - mu).powi(2)).sum();
            mean[bin] = mu;
            var[bin] = ss / n;
        }
        for bin in 0..f {
            self.running_mean[bin] = ((1.0 - BN_MOMENTUM) * self.running_mean[bin] as f64
                + BN_MOMENTUM * mean[bin]) as f32;
            self.running_var[bin] = ((1.0 - BN_MOMENTUM) * self.running_var[bin] as f64
                + BN_MOMENTUM * var[bin]) as f32;
        }
        let inv_std: Array1<f32> =
            Array1::from_iter(var.iter().map(|&v| (1.0 / (v + BN_EPS).sqrt()) as f32));
        let mean32: Vec<f32> = mean.iter().map(|&v| v as f32).collect();

        let mut x_hat = x.clone();
        for bin in 0..f {
            let mut view = x_hat.slice_mut(ndarray::s![.., .., bin]);
            view.mapv_inplace(|v| (v - mean32[bin]) * inv_std[bin]);
        }
        let y = self.affine(&x_hat);
        (y, FeatureNormCache { x_hat, inv_std })
    }

    pub fn forward_eval(&self, x: &Array3<f32>) -> Array3<f32> {
        let mut x_hat = x.clone();
        for bin in 0..self.bins {
            let mu = self.running_mean[bin];
            let inv = (1.0 / (self.running_var[bin] as f64 + BN_EPS).sqrt()) as f32;
            let mut view = x_hat.slice_mut(ndarray::s![.., .., bin]);
            view.mapv_inplace(|v| (v - mu) * inv);
        }
        self.affine(&x_hat)
    }

    fn affine(&self, x_hat: &Array3<f32>) -> Array3<f32> {
        let gamma: Vec<f32> = self.gamma.value.iter().copied().collect();
        let beta: Vec<f32> = self.beta.value.iter().copied().collect();
        let mut y = x_hat.clone();
        for bin in 0..self.bins {
            let mut view = y.slice_mut(ndarray::s![.., .., bin]);
            view.mapv_inplace(|v| v * gamma[bin] + beta[bin]);
        }
        y
    }

    pub fn backward(&mut self, cache: &FeatureNormCache, dy: &Array3<f32>) -> Array3<f32> {
        let (b, t, f) = dy.dim();
        let n = (b * t) as f64;
        let gamma: Vec<f32> = self.gamma.value.iter().copied().collect();

        let mut dx = dy.clone();
        {
            let mut ggrad = self
                .gamma
                .grad
                .view_mut()
                .into_shape_with_order(f)
                .unwrap();
            let mut bgrad = self.beta.grad.view_mut().into_shape_with_order(f).unwrap();
            for bin in 0..f {
                let dyv = dy.slice(ndarray::s![.., .., bin]);
                let xh = cache.x_hat.slice(ndarray::s![.., .., bin]);
                let mut sum_dy = 0.0f64;
                let mut sum_dy_xhat = 0.0f64;
                for (&g, &xv) in dyv.iter().zip(xh.iter()) {
                    sum_dy += g as f64;
                    sum_dy_xhat += g as f64 * xv as f64;
                }
                ggrad[bin] += sum_dy_xhat as f32;
                bgrad[bin] += sum_dy as f32;
                let mean_dy = (sum_dy / n) as f32;
                let mean_dy_xhat = (sum_dy_xhat / n) as f32;
                let scale = gamma[bin] * cache.inv_std[bin];
                let mut dxv = dx.slice_mut(ndarray::s![.., .., bin]);
                for (g, &xv) in dxv.iter_mut().zip(xh.iter()) {
                    *g = scale * (*g - mean_dy - xv * mean_dy_xhat);
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn train_output_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Array4::from_shape_fn((4, 3, 5, 6), |_| rng.random::<f32>() * 3.0 + 1.0);
        let mut bn = BatchNorm2d::new(3);
        let (y, _) = bn.forward_train(&x);
        for ch in 0..3 {
            let view = y.slice(ndarray::s![.., ch, .., ..]);
            let n = view.len() as f64;
            let mean: f64 = view.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var: f64 = view.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "var {var}");
        }
    }

    #[test]
    fn eval_mode_is_deterministic_and_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = Array4::from_shape_fn((2, 2, 4, 4), |_| rng.random::<f32>());
        let mut bn = BatchNorm2d::new(2);
        for _ in 0..5 {
            let _ = bn.forward_train(&x);
        }
        let a = bn.forward_eval(&x);
        let b = bn.forward_eval(&x);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Array4::from_shape_fn((2, 2, 3, 3), |_| rng.random::<f32>() * 2.0 - 1.0);
        let coeff = Array4::from_shape_fn((2, 2, 3, 3), |_| rng.random::<f32>() - 0.5);

        let mut bn = BatchNorm2d::new(2);
        let (_, cache) = bn.forward_train(&x);
        let dx = bn.backward(&cache, &coeff);

        let eps = 1e-2f32;
        for &idx in &[(0usize, 0usize, 0usize, 0usize), (1, 1, 2, 2), (0, 1, 1, 0)] {
            let mut bn2 = BatchNorm2d::new(2);
            let mut xp = x.clone();
            xp[idx] += eps;
            let (yp, _) = bn2.forward_train(&xp);
            let lp: f32 = (&yp * &coeff).sum();
            let mut bn3 = BatchNorm2d::new(2);
            let mut xm = x.clone();
            xm[idx] -= eps;
            let (ym, _) = bn3.forward_train(&xm);
            let lm: f32 = (&ym * &coeff).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (dx[idx] - fd).abs() < 2e-2,
                "dx {got} vs fd {fd}",
                got = dx[idx]
            );
        }
    }

    #[test]
    fn feature_norm_normalizes_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Array3::from_shape_fn((3, 10, 4), |_| rng.random::<f32>() * 4.0 - 7.0);
        let mut fnorm = FeatureNorm::new(4);
        let (y, _) = fnorm.forward_train(&x);
        for bin in 0..4 {
            let view = y.slice(ndarray::s![.., .., bin]);
            let n = view.len() as f64;
            let mean: f64 = view.iter().map(|&v| v as f64).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4);
        }
    }
}
