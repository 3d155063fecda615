//! Triangular mel filterbank and log mel-band energies.

use std::ops::Range;

use crate::audio::Spectrogram;
use crate::error::{Error, Result};
use crate::features::layout::{FeatureLayout, FeatureMatrix};

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `band_count + 2` frequencies equally spaced on the mel scale; band `b`
/// rises from edge `b`, peaks at edge `b + 1` and falls to edge `b + 2`.
pub fn mel_edges(band_count: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (0..band_count + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (band_count + 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    support: Vec<Range<usize>>,
    edges: Vec<f64>,
    fft_size: usize,
    sample_rate: u32,
}

impl MelFilterbank {
    pub fn new(
        band_count: usize,
        fft_size: usize,
        sample_rate: u32,
        f_min: f64,
        f_max: f64,
    ) -> Result<Self> {
        if band_count == 0 {
            return Err(Error::InvalidParameter("band count must be at least 1".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(Error::InvalidParameter(format!(
                "mel range [{f_min}, {f_max}] Hz is invalid for sample rate {sample_rate}"
            )));
        }
        if fft_size < 2 {
            return Err(Error::InvalidParameter("fft size too small".into()));
        }
        let edges = mel_edges(band_count, f_min, f_max);
        let bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Vec::with_capacity(band_count);
        let mut support = Vec::with_capacity(band_count);
        for b in 0..band_count {
            let (left, center, right) = (edges[b], edges[b + 1], edges[b + 2]);
            let w: Vec<f64> = (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let rise = (f - left) / (center - left);
                    let fall = (right - f) / (right - center);
                    rise.min(fall).max(0.0)
                })
                .collect();
            let first = w.iter().position(|&v| v > 0.0);
            let last = w.iter().rposition(|&v| v > 0.0);
            match (first, last) {
                (Some(a), Some(z)) => support.push(a..z + 1),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "mel band {b} ({left:.1}-{right:.1} Hz) contains no FFT bin; \
                         use fewer bands or a larger FFT"
                    )))
                }
            }
            weights.push(w);
        }
        Ok(Self {
            weights,
            support,
            edges,
            fft_size,
            sample_rate,
        })
    }

    /// Bands spanning `0 .. sample_rate / 2`.
    pub fn full_range(band_count: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        Self::new(band_count, fft_size, sample_rate, 0.0, sample_rate as f64 / 2.0)
    }

    pub fn band_count(&self) -> usize {
        self.weights.len()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Weights of band `b` over all `fft_size/2 + 1` bins.
    pub fn band(&self, b: usize) -> &[f64] {
        &self.weights[b]
    }

    /// Bins with nonzero weight in band `b`.
    pub fn support(&self, b: usize) -> Range<usize> {
        self.support[b].clone()
    }

    /// Triangle edge and peak frequencies, `band_count + 2` values.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn center_frequency(&self, b: usize) -> f64 {
        self.edges[b + 1]
    }

    pub fn matches(&self, spec: &Spectrogram) -> bool {
        self.fft_size == spec.fft_size() && self.sample_rate == spec.sample_rate()
    }
}

/// `ln(Σ_k H_b(k) |X(k,t)|² + floor)` for every frame and band.
pub fn extract_log_mel(
    spec: &Spectrogram,
    fb: &MelFilterbank,
    log_floor: f64,
) -> Result<FeatureMatrix> {
    if !fb.matches(spec) {
        return Err(Error::SizeMismatch(format!(
            "filterbank built for fft {} at {} Hz, spectrogram has fft {} at {} Hz",
            fb.fft_size,
            fb.sample_rate,
            spec.fft_size(),
            spec.sample_rate()
        )));
    }
    let bands = fb.band_count();
    let mut values = Vec::with_capacity(spec.frame_count() * bands);
    for t in 0..spec.frame_count() {
        let frame = spec.frame(t);
        for b in 0..bands {
            let range = fb.support(b);
            let energy: f64 = fb.band(b)[range.clone()]
                .iter()
                .zip(&frame[range])
                .map(|(h, x)| h * x.norm_sqr())
                .sum();
            values.push((energy + log_floor).ln());
        }
    }
    FeatureMatrix::new(values, spec.frame_count(), FeatureLayout::single("mel", bands))
}
