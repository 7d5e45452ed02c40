//! The tagging/detection models: a CNN encoder (batch-norm front end, three
//! conv blocks, three max-pool stages) followed by class-wise attention
//! pooling and per-class sigmoid classifiers.
//!
//! Two roles share this structure. The fine-time student keeps full time
//! resolution (frequency-only pooling) for sharp frame predictions; the
//! coarse-time teacher pools time aggressively for a wide receptive field
//! and a smaller parameter count, which makes it the stronger tagger.

pub mod attention;
mod checkpoint;
mod tensorio;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};

use ndarray::parallel::prelude::*;
use ndarray::{Array1, Array2, Array3, Array4, Axis};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    relu, relu_backward, BatchNorm2d, BnCache, Conv2d, FeatureNorm, FeatureNormCache, MaxPool2d,
    Param, PoolCache,
};
use attention::{attention_backward, attention_forward, AttentionOutput, HeadParams};

/// Which of the two co-trained roles a model plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Fine-time student: full time resolution, better localization.
    Ps,
    /// Coarse-time teacher: wide receptive field, better tagging.
    Pt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub channels: [usize; 3],
    pub kernel: (usize, usize),
    pub time_pool: [usize; 3],
    pub freq_pool: [usize; 3],
    pub n_mels: usize,
    pub input_frames: usize,
}

impl EncoderConfig {
    /// Reference student: time resolution preserved, frequency pooled away.
    pub fn ps_reference() -> Self {
        EncoderConfig {
            variant: Variant::Ps,
            channels: [64, 128, 160],
            kernel: (3, 3),
            time_pool: [1, 1, 1],
            freq_pool: [4, 4, 4],
            n_mels: 64,
            input_frames: 500,
        }
    }

    /// Reference teacher: narrower channels, 4x time pooling at every stage.
    pub fn pt_reference() -> Self {
        EncoderConfig {
            variant: Variant::Pt,
            channels: [48, 64, 160],
            kernel: (3, 3),
            time_pool: [4, 4, 4],
            freq_pool: [4, 4, 4],
            n_mels: 64,
            input_frames: 500,
        }
    }

    pub fn total_time_pool(&self) -> usize {
        self.time_pool.iter().product()
    }

    /// Encoder output frames: floor division at each pooling stage.
    pub fn output_frames(&self) -> usize {
        self.time_pool.iter().fold(self.input_frames, |t, &p| t / p)
    }

    pub fn output_bins(&self) -> usize {
        self.freq_pool.iter().fold(self.n_mels, |f, &p| f / p)
    }

    /// Dimension of the high-level frame features (channels x leftover bins).
    pub fn embed_dim(&self) -> usize {
        self.channels[2] * self.output_bins()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.0 % 2 == 0 || self.kernel.1 % 2 == 0 {
            return Err(Error::invalid("kernel sides must be odd"));
        }
        if self.channels.iter().any(|&c| c == 0) {
            return Err(Error::invalid("channel counts must be positive"));
        }
        if self.time_pool.iter().any(|&p| p == 0) || self.freq_pool.iter().any(|&p| p == 0) {
            return Err(Error::invalid("pool factors must be positive"));
        }
        if self.output_frames() == 0 || self.output_bins() == 0 {
            return Err(Error::invalid(
                "pooling collapses the input to nothing; reduce pool factors",
            ));
        }
        Ok(())
    }
}

/// Full per-clip model output.
#[derive(Debug, Clone)]
pub struct ProbabilitySet {
    pub clip_id: String,
    /// (C) clip-level probabilities.
    pub clip_probs: Vec<f32>,
    /// (T', C) frame-level probabilities.
    pub frame_probs: Array2<f32>,
    /// (C, T') attention rows, each on the simplex.
    pub attention: Array2<f32>,
    /// (C, d) contextual vectors.
    pub contextual: Array2<f32>,
}

/// Clip-level binary prediction: probability at or above the threshold.
pub fn clip_prediction(clip_probs: &[f32], alpha: f32) -> Vec<bool> {
    clip_probs.iter().map(|&p| p >= alpha).collect()
}

/// Frame-level binary prediction gated by the clip prediction: the frame
/// probability is multiplied by the 0/1 clip decision before thresholding,
/// so a rejected class is all-zero regardless of its frames.
pub fn frame_prediction(
    frame_probs: &Array2<f32>,
    clip_pred: &[bool],
    alpha: f32,
) -> Array2<u8> {
    let (t, c) = frame_probs.dim();
    assert_eq!(c, clip_pred.len(), "class count mismatch");
    Array2::from_shape_fn((t, c), |(ti, ci)| {
        let gate = if clip_pred[ci] { 1.0 } else { 0.0 };
        u8::from(frame_probs[[ti, ci]] * gate >= alpha)
    })
}

struct ConvBlock {
    conv: Conv2d,
    bn: BatchNorm2d,
}

struct BlockCache {
    conv_in: Array4<f32>,
    bn: BnCache,
    relu_out: Array4<f32>,
}

pub struct TrainCache {
    fnorm: FeatureNormCache,
    blocks: Vec<BlockCache>,
    pools: Vec<PoolCache>,
    encoded: Array3<f32>,
    att: Vec<AttentionOutput<f32>>,
    input_dim: (usize, usize, usize),
}

impl TrainCache {
    pub fn clip_probs(&self) -> Array2<f32> {
        let b = self.att.len();
        let c = self.att.first().map_or(0, |a| a.clip_probs.len());
        Array2::from_shape_fn((b, c), |(i, j)| self.att[i].clip_probs[j])
    }

    pub fn clip_logits(&self) -> Array2<f32> {
        let b = self.att.len();
        let c = self.att.first().map_or(0, |a| a.clip_logits.len());
        Array2::from_shape_fn((b, c), |(i, j)| self.att[i].clip_logits[j])
    }
}

pub struct SedModel {
    pub config: EncoderConfig,
    pub n_classes: usize,
    /// Per-class subspace prefix lengths (all equal to `d` when disabled).
    pub subspace_dims: Vec<usize>,
    input_norm: FeatureNorm,
    blocks: Vec<ConvBlock>,
    pools: Vec<MaxPool2d>,
    att_w: Param,
    att_b: Param,
    cls_w: Param,
    cls_b: Param,
}

impl SedModel {
    pub fn new(
        config: EncoderConfig,
        n_classes: usize,
        subspace_dims: Vec<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim();
        if subspace_dims.len() != n_classes {
            return Err(Error::invalid("one subspace dimension per class required"));
        }
        if subspace_dims.iter().any(|&k| k == 0 || k > d) {
            return Err(Error::invalid(format!(
                "subspace dimensions must lie in [1, {d}]"
            )));
        }

        let (kh, kw) = config.kernel;
        let mut blocks = Vec::new();
        let mut cin = 1;
        for &cout in &config.channels {
            blocks.push(ConvBlock {
                conv: Conv2d::new(cin, cout, kh, kw, rng),
                bn: BatchNorm2d::new(cout),
            });
            cin = cout;
        }
        let pools = (0..3)
            .map(|i| MaxPool2d::new(config.time_pool[i], config.freq_pool[i]))
            .collect();

        let head_std = (1.0 / d as f32).sqrt();
        Ok(SedModel {
            input_norm: FeatureNorm::new(config.n_mels),
            blocks,
            pools,
            att_w: crate::nn::normal_init(&[n_classes, d], head_std, rng),
            att_b: Param::zeros(&[n_classes]),
            cls_w: crate::nn::normal_init(&[n_classes, d], head_std, rng),
            cls_b: Param::zeros(&[n_classes]),
            config,
            n_classes,
            subspace_dims,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim()
    }

    fn check_input(&self, x: &Array3<f32>) -> Result<()> {
        let (_, t, f) = x.dim();
        if t != self.config.input_frames || f != self.config.n_mels {
            return Err(Error::ShapeMismatch {
                expected: format!("(*, {}, {})", self.config.input_frames, self.config.n_mels),
                got: format!("{:?}", x.dim()),
            });
        }
        Ok(())
    }

    fn head_params(&self) -> HeadParams<'_, f32> {
        HeadParams {
            att_w: self
                .att_w
                .value
                .view()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap(),
            att_b: self
                .att_b
                .value
                .view()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap(),
            cls_w: self
                .cls_w
                .value
                .view()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap(),
            cls_b: self
                .cls_b
                .value
                .view()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap(),
            dims: &self.subspace_dims,
        }
    }

    /// Flatten encoder output (B, C, T', F') to frame features (B, T', C*F').
    fn to_frames(y: &Array4<f32>) -> Array3<f32> {
        let (b, c, t, f) = y.dim();
        let permuted = y.view().permuted_axes([0, 2, 1, 3]);
        let standard = permuted.as_standard_layout().to_owned();
        standard.into_shape_with_order((b, t, c * f)).unwrap()
    }

    fn from_frames(d3: &Array3<f32>, c: usize, f: usize) -> Array4<f32> {
        let (b, t, _) = d3.dim();
        let reshaped = d3.view().into_shape_with_order((b, t, c, f)).unwrap();
        let permuted = reshaped.permuted_axes([0, 2, 1, 3]);
        permuted.as_standard_layout().to_owned()
    }

    /// Training-mode forward pass; batch statistics drive normalization.
    pub fn train_forward(&mut self, x: &Array3<f32>) -> Result<TrainCache> {
        self.check_input(x)?;
        let (b, t, f) = x.dim();
        let (normed, fnorm_cache) = self.input_norm.forward_train(x);
        let mut cur = normed.insert_axis(Axis(1)); // (B, 1, T, F)

        let mut block_caches = Vec::new();
        let mut pool_caches = Vec::new();
        for i in 0..self.blocks.len() {
            let conv_in = cur;
            let conv_out = self.blocks[i].conv.forward(&conv_in);
            let (bn_out, bn_cache) = self.blocks[i].bn.forward_train(&conv_out);
            let relu_out = relu(&bn_out);
            let (pooled, pool_cache) = self.pools[i].forward(&relu_out);
            block_caches.push(BlockCache {
                conv_in,
                bn: bn_cache,
                relu_out,
            });
            pool_caches.push(pool_cache);
            cur = pooled;
        }

        let encoded = Self::to_frames(&cur);
        let params = self.head_params();
        let att: Vec<AttentionOutput<f32>> = (0..b)
            .into_par_iter()
            .map(|i| attention_forward(&encoded.index_axis(Axis(0), i), &params))
            .collect();

        Ok(TrainCache {
            fnorm: fnorm_cache,
            blocks: block_caches,
            pools: pool_caches,
            encoded,
            att,
            input_dim: (b, t, f),
        })
    }

    /// Backward from clip-logit gradients; accumulates into parameter grads.
    pub fn backward(&mut self, cache: &TrainCache, d_clip_logits: &Array2<f32>) {
        let (b, _, _) = cache.input_dim;
        let (_, tprime, d) = cache.encoded.dim();
        assert_eq!(d_clip_logits.nrows(), b);

        let params = self.head_params();
        let per_sample: Vec<attention::AttentionGrads<f32>> = (0..b)
            .into_par_iter()
            .map(|i| {
                attention_backward(
                    &cache.encoded.index_axis(Axis(0), i),
                    &params,
                    &cache.att[i],
                    &d_clip_logits.row(i),
                    None,
                )
            })
            .collect();

        let mut d_encoded = Array3::<f32>::zeros((b, tprime, d));
        {
            let mut aw = self
                .att_w
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap();
            let mut ab = self
                .att_b
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap();
            let mut cw = self
                .cls_w
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix2>()
                .unwrap();
            let mut cb = self
                .cls_b
                .grad
                .view_mut()
                .into_dimensionality::<ndarray::Ix1>()
                .unwrap();
            for (i, g) in per_sample.iter().enumerate() {
                aw += &g.d_att_w;
                ab += &g.d_att_b;
                cw += &g.d_cls_w;
                cb += &g.d_cls_b;
                d_encoded.index_axis_mut(Axis(0), i).assign(&g.d_x);
            }
        }

        let c3 = self.config.channels[2];
        let fbins = self.config.output_bins();
        let mut d_cur = Self::from_frames(&d_encoded, c3, fbins);

        for i in (0..self.blocks.len()).rev() {
            let d_pool = self.pools[i].backward(&cache.pools[i], &d_cur);
            let d_relu = relu_backward(&d_pool, &cache.blocks[i].relu_out);
            let d_bn = self.blocks[i].bn.backward(&cache.blocks[i].bn, &d_relu);
            d_cur = self.blocks[i].conv.backward(&cache.blocks[i].conv_in, &d_bn);
        }

        let d_input = d_cur.remove_axis(Axis(1));
        let _ = self.input_norm.backward(&cache.fnorm, &d_input);
    }

    /// Inference-mode forward: running statistics, no caches, full outputs.
    pub fn infer(&self, x: &Array3<f32>, clip_ids: &[String]) -> Result<Vec<ProbabilitySet>> {
        self.check_input(x)?;
        let b = x.dim().0;
        assert_eq!(clip_ids.len(), b);

        let normed = self.input_norm.forward_eval(x);
        let mut cur = normed.insert_axis(Axis(1));
        for i in 0..self.blocks.len() {
            let conv_out = self.blocks[i].conv.forward(&cur);
            let bn_out = self.blocks[i].bn.forward_eval(&conv_out);
            let relu_out = relu(&bn_out);
            let (pooled, _) = self.pools[i].forward(&relu_out);
            cur = pooled;
        }
        let encoded = Self::to_frames(&cur);

        let params = self.head_params();
        let outs: Vec<AttentionOutput<f32>> = (0..b)
            .into_par_iter()
            .map(|i| attention_forward(&encoded.index_axis(Axis(0), i), &params))
            .collect();

        Ok(outs
            .into_iter()
            .zip(clip_ids.iter())
            .map(|(o, id)| ProbabilitySet {
                clip_id: id.clone(),
                clip_probs: o.clip_probs.to_vec(),
                frame_probs: o.frame_probs,
                attention: o.attention,
                contextual: o.contextual,
            })
            .collect())
    }

    /// All trainable parameters in fixed registration order.
    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = vec![
            &mut self.input_norm.gamma,
            &mut self.input_norm.beta,
        ];
        for b in &mut self.blocks {
            out.push(&mut b.conv.weight);
            out.push(&mut b.conv.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.att_w);
        out.push(&mut self.att_b);
        out.push(&mut self.cls_w);
        out.push(&mut self.cls_b);
        out
    }

    /// Total trainable scalar count.
    pub fn count_parameters(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Named tensors for checkpointing: parameter values plus normalization
    /// running statistics.
    pub fn export_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f32>)> {
        let mut out = Vec::new();
        let push = |out: &mut Vec<(String, Vec<usize>, Vec<f32>)>, name: &str, p: &Param| {
            out.push((
                name.to_string(),
                p.value.shape().to_vec(),
                p.value.iter().copied().collect(),
            ));
        };
        push(&mut out, "input_norm.gamma", &self.input_norm.gamma);
        push(&mut out, "input_norm.beta", &self.input_norm.beta);
        out.push((
            "input_norm.running_mean".into(),
            vec![self.input_norm.running_mean.len()],
            self.input_norm.running_mean.to_vec(),
        ));
        out.push((
            "input_norm.running_var".into(),
            vec![self.input_norm.running_var.len()],
            self.input_norm.running_var.to_vec(),
        ));
        for (i, b) in self.blocks.iter().enumerate() {
            push(&mut out, &format!("block{i}.conv.weight"), &b.conv.weight);
            push(&mut out, &format!("block{i}.conv.bias"), &b.conv.bias);
            push(&mut out, &format!("block{i}.bn.gamma"), &b.bn.gamma);
            push(&mut out, &format!("block{i}.bn.beta"), &b.bn.beta);
            out.push((
                format!("block{i}.bn.running_mean"),
                vec![b.bn.running_mean.len()],
                b.bn.running_mean.to_vec(),
            ));
            out.push((
                format!("block{i}.bn.running_var"),
                vec![b.bn.running_var.len()],
                b.bn.running_var.to_vec(),
            ));
        }
        push(&mut out, "att_w", &self.att_w);
        push(&mut out, "att_b", &self.att_b);
        push(&mut out, "cls_w", &self.cls_w);
        push(&mut out, "cls_b", &self.cls_b);
        out
    }

    pub fn import_tensors(&mut self, tensors: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        use std::collections::HashMap;
        let map: HashMap<&str, (&Vec<usize>, &Vec<f32>)> = tensors
            .iter()
            .map(|(n, s, d)| (n.as_str(), (s, d)))
            .collect();
        let fetch = |name: &str| -> Result<(&Vec<usize>, &Vec<f32>)> {
            map.get(name)
                .copied()
                .ok_or_else(|| Error::invalid(format!("checkpoint missing tensor {name:?}")))
        };
        let set_param = |p: &mut Param, name: &str, got: (&Vec<usize>, &Vec<f32>)| -> Result<()> {
            if p.value.shape() != got.0.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{name}: {:?}", p.value.shape()),
                    got: format!("{:?}", got.0),
                });
            }
            p.value = ndarray::ArrayD::from_shape_vec(got.0.clone(), got.1.clone()).unwrap();
            Ok(())
        };

        set_param(&mut self.input_norm.gamma, "input_norm.gamma", fetch("input_norm.gamma")?)?;
        set_param(&mut self.input_norm.beta, "input_norm.beta", fetch("input_norm.beta")?)?;
        let rm = fetch("input_norm.running_mean")?;
        self.input_norm.running_mean = Array1::from_vec(rm.1.clone());
        let rv = fetch("input_norm.running_var")?;
        self.input_norm.running_var = Array1::from_vec(rv.1.clone());
        for i in 0..self.blocks.len() {
            let b = &mut self.blocks[i];
            set_param(&mut b.conv.weight, "conv.weight", fetch(&format!("block{i}.conv.weight"))?)?;
            set_param(&mut b.conv.bias, "conv.bias", fetch(&format!("block{i}.conv.bias"))?)?;
            set_param(&mut b.bn.gamma, "bn.gamma", fetch(&format!("block{i}.bn.gamma"))?)?;
            set_param(&mut b.bn.beta, "bn.beta", fetch(&format!("block{i}.bn.beta"))?)?;
            let rm = fetch(&format!("block{i}.bn.running_mean"))?;
            b.bn.running_mean = Array1::from_vec(rm.1.clone());
            let rv = fetch(&format!("block{i}.bn.running_var"))?;
            b.bn.running_var = Array1::from_vec(rv.1.clone());
        }
        set_param(&mut self.att_w, "att_w", fetch("att_w")?)?;
        set_param(&mut self.att_b, "att_b", fetch("att_b")?)?;
        set_param(&mut self.cls_w, "cls_w", fetch("cls_w")?)?;
        set_param(&mut self.cls_b, "cls_b", fetch("cls_b")?)?;
        Ok(())
    }
}
