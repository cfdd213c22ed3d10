//! Log-mel filterbank features, the handcrafted baseline front-end.

use ndarray::Array2;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::corpus::{FeatureSequence, Waveform};
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequency (Hz) of triangular mel filter `bin` out of `n_mels`
/// spanning 0..Nyquist.
pub(crate) fn mel_center_hz(n_mels: usize, sample_rate: u32, bin: usize) -> f64 {
    let max_mel = hz_to_mel(sample_rate as f64 / 2.0);
    mel_to_hz(max_mel * (bin + 1) as f64 / (n_mels + 1) as f64)
}

/// Triangular filters (unit peak) over the FFT bin frequencies.
fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Array2<f64> {
    let n_bins = n_fft / 2 + 1;
    let max_mel = hz_to_mel(sample_rate as f64 / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(max_mel * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut filters = Array2::zeros((n_mels, n_bins));
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f > lo && f < center {
                (f - lo) / (center - lo)
            } else if (f - center).abs() < 1e-12 {
                1.0
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            filters[[m, k]] = w;
        }
    }
    filters
}

/// Standard log-mel filterbank: Hann-windowed frames, magnitude spectrum,
/// triangular mel filters, natural log with a 1e-10 floor.
/// `T = 1 + floor((len - win) / hop)`.
pub fn compute_fbank(
    wave: &Waveform,
    n_mels: usize,
    win_ms: f64,
    hop_ms: f64,
) -> Result<FeatureSequence> {
    let rate = wave.sample_rate as f64;
    let win = (win_ms / 1000.0 * rate).round() as usize;
    let hop = ((hop_ms / 1000.0 * rate).round() as usize).max(1);
    if wave.len() < win {
        return Err(Error::TooShort {
            needed: win,
            got: wave.len(),
        });
    }
    let n_frames = 1 + (wave.len() - win) / hop;
    let n_fft = win.next_power_of_two();
    let n_bins = n_fft / 2 + 1;

    let window: Vec<f64> = (0..win)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos()))
        .collect();
    let filters = mel_filterbank(n_mels, n_fft, wave.sample_rate);

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut frames = Array2::zeros((n_frames, n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    for t in 0..n_frames {
        let start = t * hop;
        for (i, slot) in buf.iter_mut().enumerate() {
            let s = if i < win { wave.samples[start + i] * window[i] } else { 0.0 };
            *slot = Complex::new(s, 0.0);
        }
        fft.process(&mut buf);
        for m in 0..n_mels {
            let mut energy = 0.0;
            for k in 0..n_bins {
                let w = filters[[m, k]];
                if w > 0.0 {
                    energy += w * buf[k].norm();
                }
            }
            frames[[t, m]] = energy.max(LOG_FLOOR).ln();
        }
    }
    Ok(FeatureSequence {
        frames,
        frame_rate: rate / hop as f64,
    })
}
