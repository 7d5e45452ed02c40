//! Model checkpoints: parameter tensors plus enough metadata to rebuild the
//! model and to refuse mismatched vocabularies or feature front ends.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::vocab::EventVocabulary;

use super::tensorio::{read_container, write_container};
use super::{EncoderConfig, SedModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub encoder: EncoderConfig,
    pub classes: Vec<String>,
    pub vocab_fingerprint: String,
    pub feature: FeatureConfig,
    pub subspace_dims: Vec<usize>,
    pub epoch: usize,
    pub val_f1: f64,
}

pub fn save_checkpoint(path: &Path, model: &SedModel, meta: &CheckpointMeta) -> Result<()> {
    let header = serde_json::to_string(meta)
        .map_err(|e| Error::invalid(format!("metadata serialization failed: {e}")))?;
    write_container(path, &header, &model.export_tensors())
}

/// Load a checkpoint, verifying it against the expected vocabulary and
/// feature configuration when given.
pub fn load_checkpoint(
    path: &Path,
    expect_vocab: Option<&EventVocabulary>,
    expect_features: Option<&FeatureConfig>,
) -> Result<(SedModel, CheckpointMeta)> {
    let (header, tensors) = read_container(path)?;
    let meta: CheckpointMeta = serde_json::from_str(&header).map_err(|e| Error::Container {
        path: path.to_path_buf(),
        msg: format!("bad metadata: {e}"),
    })?;

    if let Some(vocab) = expect_vocab {
        if vocab.fingerprint() != meta.vocab_fingerprint {
            return Err(Error::FingerprintMismatch {
                what: "vocabulary".into(),
            });
        }
    }
    if let Some(features) = expect_features {
        if features != &meta.feature {
            return Err(Error::FingerprintMismatch {
                what: "feature configuration".into(),
            });
        }
    }

    // weights are overwritten immediately, any seed works here
    let mut model = SedModel::new(
        meta.encoder.clone(),
        meta.classes.len(),
        meta.subspace_dims.clone(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )?;
    model.import_tensors(&tensors)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;
    use ndarray::Array3;

    fn setup() -> (SedModel, CheckpointMeta, EventVocabulary, FeatureConfig) {
        let cfg = EncoderConfig {
            variant: Variant::Ps,
            channels: [2, 2, 3],
            kernel: (3, 3),
            time_pool: [1, 1, 1],
            freq_pool: [2, 2, 2],
            n_mels: 8,
            input_frames: 10,
        };
        let vocab = EventVocabulary::new(["A", "B"]).unwrap();
        let features = FeatureConfig {
            sample_rate: 8000,
            n_mels: 8,
            fft_size: 512,
            target_frames: 10,
            hop_ms: 1000,
            frame_length_ms: 2000,
            ..FeatureConfig::default()
        };
        let d = cfg.embed_dim();
        let model = SedModel::new(
            cfg.clone(),
            2,
            vec![d, d],
            &mut ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        let meta = CheckpointMeta {
            encoder: cfg,
            classes: vocab.classes().to_vec(),
            vocab_fingerprint: vocab.fingerprint(),
            feature: features.clone(),
            subspace_dims: vec![d, d],
            epoch: 3,
            val_f1: 0.5,
        };
        (model, meta, vocab, features)
    }

    #[test]
    fn checkpoint_round_trip_preserves_outputs() {
        let (model, meta, vocab, features) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model, &meta).unwrap();

        let (loaded, meta2) = load_checkpoint(&path, Some(&vocab), Some(&features)).unwrap();
        assert_eq!(meta2.epoch, 3);
        let x = Array3::from_shape_fn((1, 10, 8), |(_, t, f)| ((t * 8 + f) as f32).sin());
        let ids = vec!["clip".to_string()];
        let a = model.infer(&x, &ids).unwrap();
        let b = loaded.infer(&x, &ids).unwrap();
        assert_eq!(a[0].clip_probs, b[0].clip_probs);
        assert_eq!(a[0].frame_probs, b[0].frame_probs);
    }

    #[test]
    fn fingerprint_mismatch_is_refused() {
        let (model, meta, _, features) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &model, &meta).unwrap();

        let other_vocab = EventVocabulary::new(["A", "B", "C"]).unwrap();
        assert!(matches!(
            load_checkpoint(&path, Some(&other_vocab), None),
            Err(Error::FingerprintMismatch { .. })
        ));

        let mut other_features = features.clone();
        other_features.sample_rate = 16_000;
        assert!(matches!(
            load_checkpoint(&path, None, Some(&other_features)),
            Err(Error::FingerprintMismatch { .. })
        ));
    }
}
