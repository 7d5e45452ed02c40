//! Class-wise attention pooling over encoder frames, with per-class subspace
//! masks.
//!
//! For class `c`, frames are scored as `z_ct = w_c . x'_t + b_c` where `x'`
//! keeps only the first `dims[c]` feature coordinates. Attention weights are
//! `softmax_t(z_ct / d)` (the divisor is the full embedding dimension), the
//! contextual vector is the attention-weighted frame sum in the same
//! subspace, and the sigmoid of the raw score doubles as the frame-level
//! probability. A per-class linear head on the contextual vector gives the
//! clip-level probability.
//!
//! Everything is generic over `f32`/`f64`; softmax and sigmoid accumulate in
//! f64 either way so attention rows stay on the simplex to tight tolerance.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, NdFloat};

use crate::nn::sigmoid_f64;

/// Trainable attention + classifier parameters, viewed per call.
pub struct HeadParams<'a, F> {
    /// Attention weight vectors, one row per class: (C, d).
    pub att_w: ArrayView2<'a, F>,
    /// Attention biases: (C).
    pub att_b: ArrayView1<'a, F>,
    /// Classifier weight vectors: (C, d).
    pub cls_w: ArrayView2<'a, F>,
    /// Classifier biases: (C).
    pub cls_b: ArrayView1<'a, F>,
    /// Per-class subspace prefix length, each in [1, d].
    pub dims: &'a [usize],
}

pub struct AttentionOutput<F> {
    /// Raw per-frame scores before any squashing: (T, C).
    pub scores: Array2<F>,
    /// Attention rows on the simplex: (C, T).
    pub attention: Array2<F>,
    /// Contextual vectors, masked to each class subspace: (C, d).
    pub contextual: Array2<F>,
    /// Sigmoid of the scores: (T, C).
    pub frame_probs: Array2<F>,
    /// Classifier logits: (C).
    pub clip_logits: Array1<F>,
    /// Sigmoid of the logits: (C).
    pub clip_probs: Array1<F>,
}

pub struct AttentionGrads<F> {
    pub d_att_w: Array2<F>,
    pub d_att_b: Array1<F>,
    pub d_cls_w: Array2<F>,
    pub d_cls_b: Array1<F>,
    pub d_x: Array2<F>,
}

fn masked_rows<F: NdFloat>(m: &ArrayView2<F>, dims: &[usize]) -> Array2<F> {
    let mut out = m.to_owned();
    for (c, &k) in dims.iter().enumerate() {
        if k < out.ncols() {
            out.slice_mut(s![c, k..]).fill(F::zero());
        }
    }
    out
}

fn sig<F: NdFloat>(z: F) -> F {
    F::from(sigmoid_f64(z.to_f64().unwrap())).unwrap()
}

pub fn attention_forward<F: NdFloat>(x: &ArrayView2<F>, p: &HeadParams<F>) -> AttentionOutput<F> {
    let (t_frames, d) = x.dim();
    let n_classes = p.att_w.nrows();
    debug_assert_eq!(p.att_w.ncols(), d);
    debug_assert_eq!(p.dims.len(), n_classes);

    let w_masked = masked_rows(&p.att_w, p.dims);
    // scores[t, c] = w'_c . x_t + b_c
    let mut scores = x.dot(&w_masked.t());
    for mut row in scores.rows_mut() {
        for (c, s) in row.iter_mut().enumerate() {
            *s = *s + p.att_b[c];
        }
    }

    // softmax over frames at temperature d, accumulated in f64
    let temp = d as f64;
    let mut attention = Array2::<F>::zeros((n_classes, t_frames));
    for c in 0..n_classes {
        let col: Vec<f64> = scores.column(c).iter().map(|z| z.to_f64().unwrap() / temp).collect();
        let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = col.iter().map(|z| (z - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (t, e) in exps.iter().enumerate() {
            attention[[c, t]] = F::from(e / sum).unwrap();
        }
    }

    // contextual vectors in each class subspace
    let mut contextual = attention.dot(x);
    for (c, &k) in p.dims.iter().enumerate() {
        if k < d {
            contextual.slice_mut(s![c, k..]).fill(F::zero());
        }
    }

    let frame_probs = scores.mapv(sig);

    let mut clip_logits = Array1::<F>::zeros(n_classes);
    for c in 0..n_classes {
        clip_logits[c] = p.cls_w.row(c).dot(&contextual.row(c)) + p.cls_b[c];
    }
    let clip_probs = clip_logits.mapv(sig);

    AttentionOutput {
        scores,
        attention,
        contextual,
        frame_probs,
        clip_logits,
        clip_probs,
    }
}

/// Backward pass. `d_clip_logits` is the loss gradient at the classifier
/// logits; `d_frame_probs`, when given, is the loss gradient at the sigmoid
/// frame probabilities.
pub fn attention_backward<F: NdFloat>(
    x: &ArrayView2<F>,
    p: &HeadParams<F>,
    fwd: &AttentionOutput<F>,
    d_clip_logits: &ArrayView1<F>,
    d_frame_probs: Option<&ArrayView2<F>>,
) -> AttentionGrads<F> {
    let (t_frames, d) = x.dim();
    let n_classes = p.att_w.nrows();
    let temp = d as f64;

    // classifier: logit_c = u_c . h_c + v_c
    let d_cls_b = d_clip_logits.to_owned();
    let mut d_cls_w = Array2::<F>::zeros((n_classes, d));
    let mut d_contextual = Array2::<F>::zeros((n_classes, d));
    for c in 0..n_classes {
        let g = d_clip_logits[c];
        for j in 0..d {
            d_cls_w[[c, j]] = g * fwd.contextual[[c, j]];
        }
        let k = p.dims[c];
        for j in 0..k {
            d_contextual[[c, j]] = g * p.cls_w[[c, j]];
        }
    }

    // attention weights: da[c, t] = dh_c . x_t
    let d_attention = d_contextual.dot(&x.t()); // (C, T)

    // softmax backward in f64, including the 1/temp factor
    let mut d_scores = Array2::<F>::zeros((t_frames, n_classes));
    for c in 0..n_classes {
        let a: Vec<f64> = fwd.attention.row(c).iter().map(|v| v.to_f64().unwrap()).collect();
        let da: Vec<f64> = d_attention.row(c).iter().map(|v| v.to_f64().unwrap()).collect();
        let inner: f64 = a.iter().zip(da.iter()).map(|(&ai, &di)| ai * di).sum();
        for t in 0..t_frames {
            d_scores[[t, c]] = F::from(a[t] * (da[t] - inner) / temp).unwrap();
        }
    }

    // frame-probability path: p = sigmoid(score)
    if let Some(dfp) = d_frame_probs {
        for t in 0..t_frames {
            for c in 0..n_classes {
                let pv = fwd.frame_probs[[t, c]];
                d_scores[[t, c]] = d_scores[[t, c]] + dfp[[t, c]] * pv * (F::one() - pv);
            }
        }
    }

    // score = w'_c . x_t + b_c
    let d_att_b = d_scores.t().sum_axis(ndarray::Axis(1)); // (C)
    let mut d_att_w = d_scores.t().dot(x); // (C, d), mask below
    for (c, &k) in p.dims.iter().enumerate() {
        if k < d {
            d_att_w.slice_mut(s![c, k..]).fill(F::zero());
        }
    }

    // dx from both the score path and the weighted-sum path
    let w_masked = masked_rows(&p.att_w, p.dims);
    let mut d_x = d_scores.dot(&w_masked); // (T, d)
    d_x = d_x + fwd.attention.t().dot(&d_contextual); // (T,C)·(C,d)

    AttentionGrads {
        d_att_w,
        d_att_b,
        d_cls_w,
        d_cls_b,
        d_x,
    }
}
