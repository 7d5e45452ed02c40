//! STFT framing and the triangular mel filter bank.

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::{FeatureConfig, MEL_EPS};

fn hz_to_mel(hz: f32) -> f32 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f32) -> f32 {
    700.0 * (10.0f32.powf(mel / 2595.0) - 1.0)
}

/// Precomputed mel projection for one feature configuration.
pub struct MelBank {
    filters: Array2<f32>, // (n_mels, n_bins)
    window: Vec<f32>,     // periodic Hann, frame length
    fft: Arc<dyn Fft<f32>>,
    frame_len: usize,
    hop: usize,
    fft_size: usize,
}

impl MelBank {
    pub fn new(config: &FeatureConfig) -> Self {
        let frame_len = config.frame_samples();
        let hop = config.hop_samples();
        let fft_size = config.fft_size;
        let n_bins = fft_size / 2 + 1;

        let fmin = config.fmin_hz.max(0.0);
        let fmax = config.fmax().min(config.sample_rate as f32 / 2.0);
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let n_mels = config.n_mels;
        let edges: Vec<f32> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f32 / (n_mels + 1) as f32))
            .collect();

        let bin_hz = config.sample_rate as f32 / fft_size as f32;
        let mut filters = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f32 * bin_hz;
                let w = if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                if w > 0.0 {
                    filters[[m, k]] = w;
                }
            }
        }

        let window: Vec<f32> = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (2.0 * std::f32::consts::PI * i as f32 / frame_len as f32).cos())
            .collect();

        let fft = FftPlanner::new().plan_fft_forward(fft_size);

        MelBank {
            filters,
            window,
            fft,
            frame_len,
            hop,
            fft_size,
        }
    }

    pub fn filter_row(&self, m: usize) -> Vec<f32> {
        self.filters.row(m).to_vec()
    }

    /// Log-mel magnitude grid with one row per hop; the last frames are
    /// zero-padded where the signal runs out.
    pub fn spectrogram(&self, samples: &[f32]) -> Array2<f32> {
        let n_frames = samples.len().div_ceil(self.hop);
        let n_bins = self.fft_size / 2 + 1;
        let n_mels = self.filters.nrows();
        let mut out = Array2::zeros((n_frames, n_mels));

        let mut buf = vec![Complex::new(0.0f32, 0.0f32); self.fft_size];
        let mut mags = vec![0.0f32; n_bins];
        for t in 0..n_frames {
            let start = t * self.hop;
            buf.fill(Complex::new(0.0, 0.0));
            let avail = samples.len().saturating_sub(start).min(self.frame_len);
            for i in 0..avail {
                buf[i] = Complex::new(samples[start + i] * self.window[i], 0.0);
            }
            self.fft.process(&mut buf);
            for (k, m) in mags.iter_mut().enumerate() {
                *m = buf[k].norm();
            }
            for m in 0..n_mels {
                let e: f32 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(mags.iter())
                    .map(|(&f, &x)| f * x)
                    .sum();
                out[[t, m]] = e.max(MEL_EPS).ln();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_round_trip() {
        for hz in [0.0f32, 100.0, 440.0, 1000.0, 4000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 0.1, "hz {hz}");
        }
    }

    #[test]
    fn filters_cover_every_band() {
        let cfg = FeatureConfig {
            sample_rate: 8000,
            n_mels: 16,
            fft_size: 512,
            ..FeatureConfig::default()
        };
        let bank = MelBank::new(&cfg);
        for m in 0..16 {
            let sum: f32 = bank.filter_row(m).iter().sum();
            assert!(sum > 0.0, "band {m} is empty");
        }
    }

    #[test]
    fn frame_count_is_ceil_of_hop_division() {
        let cfg = FeatureConfig {
            sample_rate: 8000,
            n_mels: 8,
            fft_size: 512,
            ..FeatureConfig::default()
        };
        let bank = MelBank::new(&cfg);
        // 8000 samples, hop 160 -> 50 frames; one extra sample -> 51
        assert_eq!(bank.spectrogram(&vec![0.1; 8000]).nrows(), 50);
        assert_eq!(bank.spectrogram(&vec![0.1; 8001]).nrows(), 51);
    }
}
