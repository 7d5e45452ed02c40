//! 2D convolution (stride 1, same padding) via im2col + GEMM.

use ndarray::parallel::prelude::*;
use ndarray::{s, Array1, Array2, Array4, ArrayView3, Axis};
use rand_chacha::ChaCha8Rng;

use super::{normal_init, Param};

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param, // (cout, cin, kh, kw)
    pub bias: Param,   // (cout)
    cout: usize,
    cin: usize,
    kh: usize,
    kw: usize,
}

impl Conv2d {
    /// He-normal initialized convolution with odd kernel sides.
    pub fn new(cin: usize, cout: usize, kh: usize, kw: usize, rng: &mut ChaCha8Rng) -> Self {
        assert!(kh % 2 == 1 && kw % 2 == 1, "same padding needs odd kernels");
        let std = (2.0 / (cin * kh * kw) as f32).sqrt();
        Conv2d {
            weight: normal_init(&[cout, cin, kh, kw], std, rng),
            bias: Param::zeros(&[cout]),
            cout,
            cin,
            kh,
            kw,
        }
    }

    fn weight2d(&self) -> Array2<f32> {
        self.weight
            .value
            .view()
            .into_shape_with_order((self.cout, self.cin * self.kh * self.kw))
            .unwrap()
            .to_owned()
    }

    pub fn forward(&self, x: &Array4<f32>) -> Array4<f32> {
        let (batch, cin, h, w) = x.dim();
        assert_eq!(cin, self.cin, "channel mismatch");
        let w2 = self.weight2d();
        let bias: Vec<f32> = self.bias.value.iter().copied().collect();

        let mut y = Array4::zeros((batch, self.cout, h, w));
        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(mut yb, xb)| {
                let cols = im2col(&xb, self.kh, self.kw);
                let out = w2.dot(&cols); // (cout, h*w)
                for c in 0..self.cout {
                    let mut plane = yb.slice_mut(s![c, .., ..]);
                    let src = out.row(c);
                    for (dst, &v) in plane.iter_mut().zip(src.iter()) {
                        *dst = v + bias[c];
                    }
                }
            });
        y
    }

    /// Accumulates weight/bias gradients, returns the input gradient.
    pub fn backward(&mut self, x: &Array4<f32>, dy: &Array4<f32>) -> Array4<f32> {
        let (batch, _, h, w) = x.dim();
        let k = self.cin * self.kh * self.kw;
        let w2 = self.weight2d();

        let mut dx = Array4::zeros(x.raw_dim());
        let per_sample: Vec<(Array2<f32>, Array1<f32>)> = dx
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .zip(dy.axis_iter(Axis(0)).into_par_iter())
            .map(|((mut dxb, xb), dyb)| {
                let dy_flat = dyb
                    .into_shape_with_order((self.cout, h * w))
                    .unwrap()
                    .to_owned();
                // dX = col2im(W^T · dY)
                let dcols = w2.t().dot(&dy_flat); // (k, h*w)
                col2im_into(&dcols, &mut dxb.view_mut(), self.cin, h, w, self.kh, self.kw);
                // dW = dY · cols^T (im2col recomputed rather than cached)
                let cols = im2col(&xb, self.kh, self.kw);
                let dw2 = dy_flat.dot(&cols.t()); // (cout, k)
                let db = dy_flat.sum_axis(Axis(1)); // (cout)
                (dw2, db)
            })
            .collect();

        let mut dw2_total = Array2::<f32>::zeros((self.cout, k));
        let mut db_total = Array1::<f32>::zeros(self.cout);
        for (dw2, db) in per_sample {
            dw2_total += &dw2;
            db_total += &db;
        }
        let _ = batch;

        let mut wgrad = self
            .weight
            .grad
            .view_mut()
            .into_shape_with_order((self.cout, k))
            .unwrap();
        wgrad += &dw2_total;
        let mut bgrad = self
            .bias
            .grad
            .view_mut()
            .into_shape_with_order(self.cout)
            .unwrap();
        bgrad += &db_total;

        dx
    }
}

/// Unfold (cin, h, w) into (cin*kh*kw, h*w) patches with zero padding.
fn im2col(x: &ArrayView3<f32>, kh: usize, kw: usize) -> Array2<f32> {
    let (cin, h, w) = x.dim();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut cols = Array2::zeros((cin * kh * kw, h * w));
    for c in 0..cin {
        let plane = x.index_axis(Axis(0), c);
        for ki in 0..kh {
            for kj in 0..kw {
                let row = c * kh * kw + ki * kw + kj;
                let mut out_row = cols.row_mut(row);
                for i in 0..h {
                    let si = i as isize + ki as isize - ph as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let src = plane.row(si as usize);
                    // source column range for this kernel offset
                    let j0 = pw.saturating_sub(kj);
                    let j1 = (w + pw).saturating_sub(kj).min(w);
                    for j in j0..j1 {
                        let sj = j + kj - pw;
                        out_row[i * w + j] = src[sj];
                    }
                }
            }
        }
    }
    cols
}

/// Fold (cin*kh*kw, h*w) patch gradients back into an input-shaped tensor.
fn col2im_into(
    cols: &Array2<f32>,
    out: &mut ndarray::ArrayViewMut3<f32>,
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) {
    let (ph, pw) = (kh / 2, kw / 2);
    for c in 0..cin {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = cols.row(c * kh * kw + ki * kw + kj);
                for i in 0..h {
                    let si = i as isize + ki as isize - ph as isize;
                    if si < 0 || si >= h as isize {
                        continue;
                    }
                    let j0 = pw.saturating_sub(kj);
                    let j1 = (w + pw).saturating_sub(kj).min(w);
                    for j in j0..j1 {
                        let sj = j + kj - pw;
                        out[[c, si as usize, sj]] += row[i * w + j];
                    }
                }
            }
        }
    }
}

/// Reference convolution used by the tests: direct nested loops.
#[cfg(test)]
fn conv_naive(x: &Array4<f32>, weight: &Array4<f32>, bias: &Array1<f32>) -> Array4<f32> {
    let (batch, cin, h, w) = x.dim();
    let (cout, _, kh, kw) = weight.dim();
    let (ph, pw) = (kh / 2, kw / 2);
    let mut y = Array4::zeros((batch, cout, h, w));
    for b in 0..batch {
        for co in 0..cout {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        for ki in 0..kh {
                            for kj in 0..kw {
                                let si = i as isize + ki as isize - ph as isize;
                                let sj = j as isize + kj as isize - pw as isize;
                                if si >= 0 && sj >= 0 && (si as usize) < h && (sj as usize) < w {
                                    acc += x[[b, ci, si as usize, sj as usize]]
                                        * weight[[co, ci, ki, kj]];
                                }
                            }
                        }
                    }
                    y[[b, co, i, j]] = acc;
                }
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;
    use rand::{Rng, SeedableRng};

    fn random4(shape: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f32> {
        Array4::from_shape_fn(shape, |_| rng.random::<f32>() * 2.0 - 1.0)
    }

    #[test]
    fn forward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let conv = Conv2d::new(3, 5, 3, 3, &mut rng);
        let x = random4((2, 3, 7, 6), &mut rng);
        let y = conv.forward(&x);
        let weight4 = conv
            .weight
            .value
            .view()
            .into_dimensionality::<ndarray::Ix4>()
            .unwrap()
            .to_owned();
        let bias1 = conv
            .bias
            .value
            .view()
            .into_dimensionality::<ndarray::Ix1>()
            .unwrap()
            .to_owned();
        let want = conv_naive(&x, &weight4, &bias1);
        for (a, b) in y.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut conv = Conv2d::new(2, 3, 3, 3, &mut rng);
        let x = random4((1, 2, 4, 4), &mut rng);
        // scalar loss: weighted sum of outputs
        let coeff = random4((1, 3, 4, 4), &mut rng);

        let y = conv.forward(&x);
        let _loss: f32 = (&y * &coeff).sum();
        let dx = conv.backward(&x, &coeff);

        let eps = 1e-3f32;
        // input gradient
        for &idx in &[(0usize, 0usize, 0usize, 0usize), (0, 1, 2, 3), (0, 0, 3, 1)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let lp: f32 = (&conv.forward(&xp) * &coeff).sum();
            let mut xm = x.clone();
            xm[idx] -= eps;
            let lm: f32 = (&conv.forward(&xm) * &coeff).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!((dx[idx] - fd).abs() < 1e-2, "dx {exp} vs fd {fd}", exp = dx[idx]);
        }
        // weight gradient
        for flat in [0usize, 7, 23] {
            let mut wp: ArrayD<f32> = conv.weight.value.clone();
            wp.as_slice_mut().unwrap()[flat] += eps;
            let saved = std::mem::replace(&mut conv.weight.value, wp);
            let lp: f32 = (&conv.forward(&x) * &coeff).sum();
            let mut wm = saved.clone();
            wm.as_slice_mut().unwrap()[flat] -= eps;
            conv.weight.value = wm;
            let lm: f32 = (&conv.forward(&x) * &coeff).sum();
            conv.weight.value = saved;
            let fd = (lp - lm) / (2.0 * eps);
            let got = conv.weight.grad.as_slice().unwrap()[flat];
            assert!((got - fd).abs() < 1e-2, "dw {got} vs fd {fd}");
        }
    }

    #[test]
    fn grads_accumulate_across_calls() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::new(1, 1, 3, 3, &mut rng);
        let x = random4((1, 1, 3, 3), &mut rng);
        let dy = random4((1, 1, 3, 3), &mut rng);
        conv.backward(&x, &dy);
        let once = conv.weight.grad.clone();
        conv.backward(&x, &dy);
        let twice = conv.weight.grad.clone();
        for (a, b) in once.iter().zip(twice.iter()) {
            assert!((2.0 * a - b).abs() < 1e-5);
        }
    }
}
