//! Dominant spectral pitch candidates from a thresholded,
//! parabolically interpolated magnitude spectrum.

use serde::{Deserialize, Serialize};

use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::features::layout::{FeatureLayout, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub f_min: f64,
    pub f_max: f64,
    /// Peaks below `threshold × frame maximum magnitude` are ignored.
    pub threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f_min: 100.0,
            f_max: 4000.0,
            threshold: 0.1,
        }
    }
}

/// A pitch candidate; `frequency == 0` means no peak was found.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PitchEstimate {
    pub frequency: f64,
    pub periodicity: f64,
}

/// Pitch candidates of one frame, strongest first, at most `top_k` of them.
pub fn frame_pitches(
    spec: &Spectrogram,
    t: usize,
    top_k: usize,
    config: &PitchConfig,
) -> Vec<PitchEstimate> {
    let frame = spec.frame(t);
    let mags: Vec<f64> = frame.iter().map(|c| c.norm()).collect();
    let frame_max = mags.iter().copied().fold(0.0, f64::max);
    if frame_max <= 0.0 {
        return Vec::new();
    }
    let bin_hz = spec.sample_rate() as f64 / spec.fft_size() as f64;
    let k_lo = ((config.f_min / bin_hz).round() as usize).max(1);
    let k_hi = ((config.f_max / bin_hz).round() as usize).min(mags.len() - 2);
    let floor = config.threshold * frame_max;

    let mut peaks = Vec::new();
    for k in k_lo..=k_hi {
        let m = mags[k];
        if m < floor || m <= mags[k - 1] || m < mags[k + 1] {
            continue;
        }
        let (a, b, c) = (mags[k - 1].ln(), m.ln(), mags[k + 1].ln());
        let curvature = a - 2.0 * b + c;
        let offset = if curvature < 0.0 && a.is_finite() && c.is_finite() {
            0.5 * (a - c) / curvature
        } else {
            0.0
        };
        let log_mag = b - 0.25 * (a - c) * offset;
        // the range limits the peak bin; refinement may step slightly past it
        let frequency = (k as f64 + offset) * bin_hz;
        let estimate = PitchEstimate {
            frequency,
            periodicity: (log_mag.exp() / frame_max).clamp(0.0, 1.0),
        };
        peaks.push((log_mag, estimate));
    }
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0));
    peaks.into_iter().take(top_k).map(|(_, p)| p).collect()
}

/// `top_k` (frequency, periodicity) pairs per frame; width 2 for `top_k = 1`
/// and 6 for `top_k = 3`. Missing candidates are `(0, 0)`.
pub fn extract_pitch(spec: &Spectrogram, top_k: usize, config: &PitchConfig) -> Result<FeatureMatrix> {
    let name = match top_k {
        1 => "pitch",
        3 => "pitch3",
        other => {
            return Err(Error::InvalidParameter(format!(
                "pitch candidate count must be 1 or 3, got {other}"
            )))
        }
    };
    if !(config.f_min > 0.0 && config.f_min < config.f_max) {
        return Err(Error::InvalidParameter("invalid pitch frequency range".into()));
    }
    let mut values = Vec::with_capacity(spec.frame_count() * 2 * top_k);
    for t in 0..spec.frame_count() {
        let found = frame_pitches(spec, t, top_k, config);
        for i in 0..top_k {
            let p = found.get(i).copied().unwrap_or_default();
            values.push(p.frequency);
            values.push(p.periodicity);
        }
    }
    FeatureMatrix::new(values, spec.frame_count(), FeatureLayout::single(name, 2 * top_k))
}
