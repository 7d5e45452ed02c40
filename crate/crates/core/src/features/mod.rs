//! Log-mel feature extraction.
//!
//! Audio is framed with 50% overlap, windowed, zero-padded to the FFT size,
//! projected onto a triangular mel bank and log-compressed. Every clip comes
//! out as a fixed `target_frames x n_mels` grid so the models downstream
//! never see ragged inputs.

mod mel;
mod resample;
pub mod store;
pub mod wav;

pub use mel::MelBank;
pub use resample::resample;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude floor applied before the log.
pub const MEL_EPS: f32 = 1e-10;

/// `ln(MEL_EPS)`: the value silence maps to, also used as padding fill.
pub fn log_floor() -> f32 {
    MEL_EPS.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    pub n_mels: usize,
    pub frame_length_ms: u32,
    pub hop_ms: u32,
    pub fft_size: usize,
    pub target_frames: usize,
    /// Lower edge of the mel bank in Hz.
    #[serde(default)]
    pub fmin_hz: f32,
    /// Upper edge of the mel bank in Hz; `None` means Nyquist.
    #[serde(default)]
    pub fmax_hz: Option<f32>,
}

impl Default for FeatureConfig {
    /// The reference configuration: 44.1 kHz audio, 40 ms frames with 50%
    /// overlap, FFT 2048, 64 mel bands, 10 s clips -> 500 frames.
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 44_100,
            n_mels: 64,
            frame_length_ms: 40,
            hop_ms: 20,
            fft_size: 2048,
            target_frames: 500,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }
}

impl FeatureConfig {
    pub fn frame_samples(&self) -> usize {
        (self.sample_rate as u64 * self.frame_length_ms as u64 / 1000) as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.sample_rate as u64 * self.hop_ms as u64 / 1000) as usize
    }

    pub fn fmax(&self) -> f32 {
        self.fmax_hz.unwrap_or(self.sample_rate as f32 / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop_ms * 2 != self.frame_length_ms {
            return Err(Error::invalid(format!(
                "hop must be half the frame length (got {} / {})",
                self.hop_ms, self.frame_length_ms
            )));
        }
        if self.target_frames as u64 * self.hop_ms as u64 != 10_000 {
            return Err(Error::invalid(format!(
                "target_frames x hop_ms must cover 10s, got {} x {}",
                self.target_frames, self.hop_ms
            )));
        }
        if self.frame_samples() > self.fft_size {
            return Err(Error::invalid(format!(
                "frame ({} samples) exceeds fft_size {}",
                self.frame_samples(),
                self.fft_size
            )));
        }
        if self.n_mels == 0 || self.sample_rate == 0 {
            return Err(Error::invalid("n_mels and sample_rate must be positive"));
        }
        Ok(())
    }
}

/// Fixed-size log-mel grid for one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub clip_id: String,
    pub values: Array2<f32>,
}

impl FeatureMatrix {
    pub fn new(clip_id: impl Into<String>, values: Array2<f32>) -> Self {
        FeatureMatrix {
            clip_id: clip_id.into(),
            values,
        }
    }

    pub fn extract(
        clip_id: impl Into<String>,
        samples: &[f32],
        sample_rate: u32,
        config: &FeatureConfig,
    ) -> Result<Self> {
        Ok(FeatureMatrix {
            clip_id: clip_id.into(),
            values: extract_logmel(samples, sample_rate, config)?,
        })
    }
}

/// Compute the log-mel grid for a mono waveform already at the configured
/// sample rate. The output always has exactly `target_frames` rows.
pub fn extract_logmel(
    samples: &[f32],
    sample_rate: u32,
    config: &FeatureConfig,
) -> Result<Array2<f32>> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::invalid("empty waveform"));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("waveform contains non-finite samples"));
    }
    if sample_rate != config.sample_rate {
        return Err(Error::invalid(format!(
            "waveform rate {} does not match config rate {}; resample first",
            sample_rate, config.sample_rate
        )));
    }

    let bank = MelBank::new(config);
    let raw = bank.spectrogram(samples);
    Ok(pad_or_trim(&raw, config.target_frames))
}

/// Force a frame grid to exactly `target` rows: truncate the tail or pad it
/// with the log floor.
pub fn pad_or_trim(frames: &Array2<f32>, target: usize) -> Array2<f32> {
    let (rows, cols) = frames.dim();
    if rows == target {
        return frames.clone();
    }
    let mut out = Array2::from_elem((target, cols), log_floor());
    let keep = rows.min(target);
    out.slice_mut(ndarray::s![..keep, ..])
        .assign(&frames.slice(ndarray::s![..keep, ..]));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_config() -> FeatureConfig {
        FeatureConfig {
            sample_rate: 8000,
            n_mels: 16,
            frame_length_ms: 40,
            hop_ms: 20,
            fft_size: 512,
            target_frames: 500,
            fmin_hz: 0.0,
            fmax_hz: None,
        }
    }

    #[test]
    fn silence_maps_to_log_floor() {
        let cfg = toy_config();
        let samples = vec![0.0f32; 8000 * 10];
        let m = extract_logmel(&samples, 8000, &cfg).unwrap();
        assert_eq!(m.dim(), (500, 16));
        for &v in m.iter() {
            assert_eq!(v, log_floor());
        }
    }

    #[test]
    fn ten_seconds_gives_target_frames() {
        let cfg = toy_config();
        let samples: Vec<f32> = (0..8000 * 10).map(|i| (i as f32 * 0.01).sin() * 0.1).collect();
        let m = extract_logmel(&samples, 8000, &cfg).unwrap();
        assert_eq!(m.dim(), (500, 16));
    }

    #[test]
    fn short_and_long_inputs_still_fixed_shape() {
        let cfg = toy_config();
        let short: Vec<f32> = vec![0.1; 8000]; // 1 s
        let long: Vec<f32> = vec![0.1; 8000 * 12]; // 12 s
        assert_eq!(extract_logmel(&short, 8000, &cfg).unwrap().dim(), (500, 16));
        assert_eq!(extract_logmel(&long, 8000, &cfg).unwrap().dim(), (500, 16));
    }

    #[test]
    fn rejects_empty_and_nonfinite() {
        let cfg = toy_config();
        assert!(extract_logmel(&[], 8000, &cfg).is_err());
        assert!(extract_logmel(&[0.0, f32::NAN], 8000, &cfg).is_err());
        assert!(extract_logmel(&[0.1; 100], 44_100, &cfg).is_err());
    }

    #[test]
    fn pad_or_trim_cases() {
        let base = Array2::from_shape_fn((503, 4), |(i, j)| (i * 4 + j) as f32);
        let trimmed = pad_or_trim(&base, 500);
        assert_eq!(trimmed.dim(), (500, 4));
        assert_eq!(trimmed[[499, 3]], base[[499, 3]]);

        let short = base.slice(ndarray::s![..498, ..]).to_owned();
        let padded = pad_or_trim(&short, 500);
        assert_eq!(padded.dim(), (500, 4));
        assert_eq!(padded[[497, 0]], short[[497, 0]]);
        assert_eq!(padded[[498, 0]], log_floor());
        assert_eq!(padded[[499, 3]], log_floor());

        let same = pad_or_trim(&trimmed, 500);
        assert_eq!(same, trimmed);
    }

    #[test]
    fn scaling_shifts_log_by_ln10() {
        // broadband signal so every mel band carries real energy
        let cfg = toy_config();
        let mut state = 0x2545f491u64;
        let samples: Vec<f32> = (0..8000 * 10)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 33) as f32 / (1u64 << 31) as f32 - 0.5) * 0.4
            })
            .collect();
        let scaled: Vec<f32> = samples.iter().map(|s| s * 10.0).collect();
        let a = extract_logmel(&samples, 8000, &cfg).unwrap();
        let b = extract_logmel(&scaled, 8000, &cfg).unwrap();
        let ln10 = 10.0f32.ln();
        for (&x, &y) in a.iter().zip(b.iter()) {
            assert!(
                ((y - x) - ln10).abs() < 1e-3,
                "shift {} expected {} (x={x})",
                y - x,
                ln10
            );
        }
    }

    #[test]
    fn no_nan_inf_and_floor_respected() {
        let cfg = toy_config();
        let samples: Vec<f32> = (0..8000 * 10).map(|i| ((i % 97) as f32 / 97.0 - 0.5) * 0.8).collect();
        let m = extract_logmel(&samples, 8000, &cfg).unwrap();
        for &v in m.iter() {
            assert!(v.is_finite());
            assert!(v >= log_floor());
        }
    }

    #[test]
    fn pure_tone_argmax_matches_direct_dft() {
        let cfg = toy_config();
        let freq = 1000.0f64;
        let n = 8000 * 10;
        let samples: Vec<f32> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 8000.0).sin() as f32 * 0.5)
            .collect();
        let m = extract_logmel(&samples, 8000, &cfg).unwrap();

        // Oracle: direct DFT of one windowed frame, projected through the
        // same bank, entirely independent of the FFT path.
        let bank = MelBank::new(&cfg);
        let frame_len = cfg.frame_samples();
        let mut windowed = vec![0.0f64; cfg.fft_size];
        for i in 0..frame_len {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / frame_len as f64).cos();
            windowed[i] = samples[i] as f64 * w;
        }
        let bins = cfg.fft_size / 2 + 1;
        let mut mag = vec![0.0f64; bins];
        for (k, m) in mag.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (t, &x) in windowed.iter().enumerate() {
                let phase = -2.0 * std::f64::consts::PI * k as f64 * t as f64 / cfg.fft_size as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            *m = (re * re + im * im).sqrt();
        }
        let mut oracle_mel = vec![0.0f64; cfg.n_mels];
        for (b, o) in oracle_mel.iter_mut().enumerate() {
            *o = bank
                .filter_row(b)
                .iter()
                .zip(mag.iter())
                .map(|(&f, &m)| f as f64 * m)
                .sum();
        }
        let oracle_argmax = oracle_mel
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;

        // every row of the extracted grid peaks in the same band
        for (t, row) in m.outer_iter().enumerate() {
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(argmax, oracle_argmax, "frame {t}");
        }
    }
}
