//! Adam optimizer with bias correction. Moment buffers live inside each
//! [`Param`]; the optimizer only tracks the shared step counter, so two
//! models never share state unless they share the same `Adam` instance.

use serde::{Deserialize, Serialize};

use super::Param;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub step: u64,
}

impl Default for Adam {
    fn default() -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
        }
    }
}

impl Adam {
    /// Apply one update to every parameter using its accumulated gradient,
    /// then clear the gradients.
    pub fn step(&mut self, params: &mut [&mut Param], lr: f32) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - (self.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.beta2 as f64).powf(t);
        for p in params.iter_mut() {
            let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
            ndarray::Zip::from(&mut p.m)
                .and(&p.grad)
                .for_each(|m, &g| *m = b1 * *m + (1.0 - b1) * g);
            ndarray::Zip::from(&mut p.v)
                .and(&p.grad)
                .for_each(|v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
            ndarray::Zip::from(&mut p.value)
                .and(&p.m)
                .and(&p.v)
                .for_each(|x, &m, &v| {
                    let m_hat = m as f64 / bc1;
                    let v_hat = v as f64 / bc2;
                    *x -= (lr as f64 * m_hat / (v_hat.sqrt() + eps as f64)) as f32;
                });
            p.grad.fill(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descends_a_quadratic() {
        // minimize (x - 3)^2
        let mut p = Param::new(ndarray::ArrayD::from_elem(vec![1], 0.0f32));
        let mut adam = Adam::default();
        for _ in 0..2000 {
            let x = p.value[[0]];
            p.grad[[0]] = 2.0 * (x - 3.0);
            adam.step(&mut [&mut p], 0.05);
        }
        assert!((p.value[[0]] - 3.0).abs() < 1e-2, "got {}", p.value[[0]]);
    }

    #[test]
    fn zero_gradient_means_no_motion_from_rest() {
        let mut p = Param::new(ndarray::ArrayD::from_elem(vec![3], 1.5f32));
        let mut adam = Adam::default();
        for _ in 0..10 {
            adam.step(&mut [&mut p], 0.1);
        }
        assert!(p.value.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn step_clears_gradients() {
        let mut p = Param::new(ndarray::ArrayD::from_elem(vec![2], 0.0f32));
        p.grad.fill(1.0);
        let mut adam = Adam::default();
        adam.step(&mut [&mut p], 0.01);
        assert!(p.grad.iter().all(|&g| g == 0.0));
    }
}
