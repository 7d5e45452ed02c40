//! Offline band-limited resampling via a Hann-windowed sinc kernel.

use crate::error::{Error, Result};

const HALF_TAPS: usize = 24;

/// Resample a whole buffer. Output length is `round(n * to / from)`. The
/// kernel is gain-normalized per output sample so DC is preserved exactly.
pub fn resample(samples: &[f32], from_rate: u32, to_rate: u32) -> Result<Vec<f32>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::invalid("sample rates must be positive"));
    }
    if from_rate == to_rate {
        return Ok(samples.to_vec());
    }
    if samples.is_empty() {
        return Ok(Vec::new());
    }

    let ratio = to_rate as f64 / from_rate as f64;
    let out_len = (samples.len() as f64 * ratio).round() as usize;
    // cutoff relative to the input Nyquist; lowpass when decimating
    let cutoff = ratio.min(1.0);
    let half_width = (HALF_TAPS as f64 / cutoff).ceil() as isize;

    let mut out = Vec::with_capacity(out_len);
    for j in 0..out_len {
        let center = j as f64 / ratio;
        let k0 = center.floor() as isize - half_width;
        let k1 = center.floor() as isize + half_width + 1;
        let mut acc = 0.0f64;
        let mut gain = 0.0f64;
        for k in k0..=k1 {
            let u = center - k as f64;
            let w = hann_sinc(u, cutoff, half_width as f64);
            if w == 0.0 {
                continue;
            }
            gain += w;
            if k >= 0 && (k as usize) < samples.len() {
                acc += w * samples[k as usize] as f64;
            }
        }
        out.push(if gain != 0.0 { (acc / gain) as f32 } else { 0.0 });
    }
    Ok(out)
}

fn hann_sinc(u: f64, cutoff: f64, half_width: f64) -> f64 {
    if u.abs() >= half_width {
        return 0.0;
    }
    let sinc = if u == 0.0 {
        1.0
    } else {
        let x = std::f64::consts::PI * cutoff * u;
        x.sin() / x
    };
    let hann = 0.5 + 0.5 * (std::f64::consts::PI * u / half_width).cos();
    cutoff * sinc * hann
}
