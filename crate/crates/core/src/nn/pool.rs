//! Non-overlapping max pooling; output sides are floor divisions and any
//! remainder rows/columns are dropped.

use ndarray::parallel::prelude::*;
use ndarray::{Array4, Axis};

#[derive(Debug, Clone, Copy)]
pub struct MaxPool2d {
    pub pool_h: usize,
    pub pool_w: usize,
}

pub struct PoolCache {
    /// Flat input index (i * W + j) of the max per output cell.
    pub argmax: Array4<u32>,
    pub input_dim: (usize, usize, usize, usize),
}

impl MaxPool2d {
    pub fn new(pool_h: usize, pool_w: usize) -> Self {
        assert!(pool_h >= 1 && pool_w >= 1);
        MaxPool2d { pool_h, pool_w }
    }

    pub fn out_dim(&self, h: usize, w: usize) -> (usize, usize) {
        (h / self.pool_h, w / self.pool_w)
    }

    pub fn forward(&self, x: &Array4<f32>) -> (Array4<f32>, PoolCache) {
        let (b, c, h, w) = x.dim();
        let (oh, ow) = self.out_dim(h, w);
        let mut y = Array4::zeros((b, c, oh, ow));
        let mut argmax = Array4::<u32>::zeros((b, c, oh, ow));

        y.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(argmax.axis_iter_mut(Axis(0)).into_par_iter())
            .zip(x.axis_iter(Axis(0)).into_par_iter())
            .for_each(|((mut yb, mut ab), xb)| {
                for ch in 0..c {
                    let plane = xb.index_axis(Axis(0), ch);
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let mut best = f32::NEG_INFINITY;
                            let mut best_idx = 0u32;
                            for di in 0..self.pool_h {
                                for dj in 0..self.pool_w {
                                    let i = oi * self.pool_h + di;
                                    let j = oj * self.pool_w + dj;
                                    let v = plane[[i, j]];
                                    // first max wins ties for determinism
                                    if v > best {
                                        best = v;
                                        best_idx = (i * w + j) as u32;
                                    }
                                }
                            }
                            yb[[ch, oi, oj]] = best;
                            ab[[ch, oi, oj]] = best_idx;
                        }
                    }
                }
            });

        (
            y,
            PoolCache {
                argmax,
                input_dim: (b, c, h, w),
            },
        )
    }

    pub fn backward(&self, cache: &PoolCache, dy: &Array4<f32>) -> Array4<f32> {
        let (b, c, h, w) = cache.input_dim;
        let (_, _, oh, ow) = dy.dim();
        let mut dx = Array4::zeros((b, c, h, w));
        dx.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(dy.axis_iter(Axis(0)).into_par_iter())
            .zip(cache.argmax.axis_iter(Axis(0)).into_par_iter())
            .for_each(|((mut dxb, dyb), ab)| {
                for ch in 0..c {
                    for oi in 0..oh {
                        for oj in 0..ow {
                            let flat = ab[[ch, oi, oj]] as usize;
                            dxb[[ch, flat / w, flat % w]] += dyb[[ch, oi, oj]];
                        }
                    }
                }
            });
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pools_and_drops_remainder() {
        let x = Array4::from_shape_fn((1, 1, 5, 4), |(_, _, i, j)| (i * 4 + j) as f32);
        let pool = MaxPool2d::new(2, 2);
        let (y, _) = pool.forward(&x);
        assert_eq!(y.dim(), (1, 1, 2, 2));
        assert_eq!(
            y.index_axis(Axis(0), 0).index_axis(Axis(0), 0),
            array![[5.0, 7.0], [13.0, 15.0]]
        );
    }

    #[test]
    fn backward_routes_to_argmax() {
        let x = Array4::from_shape_fn((1, 1, 4, 4), |(_, _, i, j)| ((i * 4 + j) as f32).sin());
        let pool = MaxPool2d::new(2, 2);
        let (y, cache) = pool.forward(&x);
        let dy = Array4::from_elem(y.raw_dim(), 1.0f32);
        let dx = pool.backward(&cache, &dy);
        // exactly one nonzero per pooling window, at the max position
        assert_eq!(dx.iter().filter(|&&v| v != 0.0).count(), 4);
        let total: f32 = dx.sum();
        assert_eq!(total, 4.0);
        for oi in 0..2 {
            for oj in 0..2 {
                let mut max_v = f32::NEG_INFINITY;
                let mut max_pos = (0, 0);
                for di in 0..2 {
                    for dj in 0..2 {
                        let (i, j) = (oi * 2 + di, oj * 2 + dj);
                        if x[[0, 0, i, j]] > max_v {
                            max_v = x[[0, 0, i, j]];
                            max_pos = (i, j);
                        }
                    }
                }
                assert_eq!(dx[[0, 0, max_pos.0, max_pos.1]], 1.0);
            }
        }
    }

    #[test]
    fn unit_pool_is_identity() {
        let x = Array4::from_shape_fn((2, 2, 3, 3), |(b, c, i, j)| (b + c + i + j) as f32);
        let pool = MaxPool2d::new(1, 1);
        let (y, cache) = pool.forward(&x);
        assert_eq!(y, x);
        let dx = pool.backward(&cache, &x);
        assert_eq!(dx, x);
    }
}
