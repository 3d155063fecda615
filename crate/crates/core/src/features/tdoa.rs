//! Per-band time difference of arrival from GCC-PHAT.
//!
//! For band `b` and frame `t` the correlation over integer lags `Δ` is
//!
//! ```text
//! R_b(Δ, t) = Σ_k H_b(k) · X1(k,t) X2*(k,t) / (|X1(k,t)| |X2(k,t)|) · e^(-i 2π k Δ / N)
//! ```
//!
//! summed over the full (two-sided) spectrum, and the delay is the lag of the
//! correlation peak. Positive delays mean channel 2 lags channel 1. The lag
//! search is restricted to `[-2τ_max, 2τ_max]`, which is also the truncation
//! range of the emitted values.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{ms_to_samples, AudioClip, FrameGrid, FrameTransform, Spectrogram, Window};
use crate::error::{Error, Result};
use crate::features::layout::{FeatureLayout, FeatureMatrix};
use crate::features::mel::MelFilterbank;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdoaConfig {
    /// Distance between the two microphones in metres.
    pub mic_spacing_m: f64,
    pub speed_of_sound: f64,
    pub band_count: usize,
    /// Analysis window lengths, ascending.
    pub window_ms: Vec<f64>,
    pub window: Window,
    /// Bins whose magnitude product is below this fraction of the frame's
    /// largest product are excluded from the correlation.
    pub phat_floor: f64,
}

impl Default for TdoaConfig {
    fn default() -> Self {
        Self {
            mic_spacing_m: 0.20,
            speed_of_sound: 343.0,
            band_count: 5,
            window_ms: vec![120.0, 240.0, 480.0],
            window: Window::Hamming,
            phat_floor: 1e-6,
        }
    }
}

impl TdoaConfig {
    /// Largest physical inter-microphone delay in samples.
    pub fn tau_max(&self, sample_rate: u32) -> usize {
        (self.mic_spacing_m / self.speed_of_sound * sample_rate as f64).ceil() as usize
    }

    /// Lag search bound, `2 τ_max`.
    pub fn max_lag(&self, sample_rate: u32) -> usize {
        2 * self.tau_max(sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mic_spacing_m > 0.0 && self.speed_of_sound > 0.0) {
            return Err(Error::InvalidParameter(
                "microphone spacing and speed of sound must be positive".into(),
            ));
        }
        if self.band_count == 0 || self.window_ms.is_empty() {
            return Err(Error::InvalidParameter(
                "TDOA needs at least one band and one window".into(),
            ));
        }
        if self.window_ms.iter().any(|w| *w <= 0.0) {
            return Err(Error::InvalidParameter("TDOA windows must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TdoaVariant {
    /// Per-band median across windows, then a 3-frame temporal median.
    Median,
    /// All windows side by side.
    Concatenated,
}

/// `e^(-i 2π m / N)` for `m in 0..N`.
struct Twiddles {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Twiddles {
    fn new(n: usize) -> Self {
        let (cos, sin) = (0..n)
            .map(|m| {
                let theta = 2.0 * PI * m as f64 / n as f64;
                (theta.cos(), theta.sin())
            })
            .unzip();
        Self { cos, sin }
    }
}

/// PHAT-normalised cross spectrum `X1 X2* / |X1 X2|` over the one-sided bins,
/// with weak bins zeroed.
fn phat_cross_spectrum(x1: &[Complex64], x2: &[Complex64], floor: f64) -> Vec<Complex64> {
    let products: Vec<Complex64> = x1.iter().zip(x2).map(|(a, b)| a * b.conj()).collect();
    let peak = products.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let cutoff = (floor * peak).max(f64::MIN_POSITIVE);
    products
        .into_iter()
        .map(|p| {
            let mag = p.norm();
            if mag < cutoff {
                Complex64::default()
            } else {
                p / mag
            }
        })
        .collect()
}

/// Candidate lags in tie-break order: 0, -1, +1, -2, +2, ...
fn lag_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|l| [-l, l]))
}

fn band_peak(
    cross: &[Complex64],
    fb: &MelFilterbank,
    b: usize,
    max_lag: usize,
    twiddles: &Twiddles,
) -> i64 {
    let n = fb.fft_size();
    let nyquist = n / 2;
    let support = fb.support(b);
    let weights = fb.band(b);
    // two-sided sum folded onto the one-sided bins
    let q: Vec<(usize, Complex64)> = support
        .clone()
        .map(|k| {
            let fold = if k == 0 || k == nyquist { 1.0 } else { 2.0 };
            (k, cross[k] * (fold * weights[k]))
        })
        .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
        .collect();

    let mut best_lag = 0;
    let mut best = f64::NEG_INFINITY;
    for lag in lag_order(max_lag) {
        let step = lag.rem_euclid(n as i64) as usize;
        let mut r = 0.0;
        for &(k, c) in &q {
            let m = (k * step) % n;
            r += c.re * twiddles.cos[m] + c.im * twiddles.sin[m];
        }
        if r > best {
            best = r;
            best_lag = lag;
        }
    }
    best_lag
}

/// Delay of band `b` at frame `t`, searched over `[-max_lag, max_lag]`.
pub fn gcc_phat_band(
    spec1: &Spectrogram,
    spec2: &Spectrogram,
    fb: &MelFilterbank,
    t: usize,
    b: usize,
    max_lag: usize,
    phat_floor: f64,
) -> Result<i64> {
    if !spec1.is_compatible(spec2) {
        return Err(Error::SizeMismatch("spectrograms do not share a grid".into()));
    }
    if !fb.matches(spec1) {
        return Err(Error::SizeMismatch("filterbank does not match spectrogram".into()));
    }
    if b >= fb.band_count() || t >= spec1.frame_count() {
        return Err(Error::InvalidParameter(format!(
            "band {b} / frame {t} out of range"
        )));
    }
    let cross = phat_cross_spectrum(spec1.frame(t), spec2.frame(t), phat_floor);
    Ok(band_peak(&cross, fb, b, max_lag, &Twiddles::new(fb.fft_size())))
}

/// Per-window delay tracks: `result[w][t * bands + b]`.
pub fn multi_window_delays(
    clip: &AudioClip,
    grid: &FrameGrid,
    config: &TdoaConfig,
) -> Result<Vec<Vec<i64>>> {
    if !clip.is_stereo() {
        return Err(Error::RequiresStereo("TDOA extraction"));
    }
    config.validate()?;
    grid.validate()?;
    let sr = clip.sample_rate();
    let frames = grid.frame_count(clip.len(), sr);
    if frames == 0 {
        return Err(Error::ClipTooShort {
            samples: clip.len(),
            frame: grid.frame_samples(sr),
        });
    }
    let max_lag = config.max_lag(sr);
    let bands = config.band_count;

    let mut out = Vec::with_capacity(config.window_ms.len());
    for &ms in &config.window_ms {
        let len = ms_to_samples(ms, sr).max(1);
        let n = len.next_power_of_two();
        let fb = MelFilterbank::full_range(bands, n, sr)?;
        let twiddles = Twiddles::new(n);
        let mut left = FrameTransform::new(config.window, len, n);
        let mut right = FrameTransform::new(config.window, len, n);
        let mut track = Vec::with_capacity(frames * bands);
        for t in 0..frames {
            let start = grid.frame_center(t, sr) as isize - (len / 2) as isize;
            let x1 = left.transform(clip.channel(0), start);
            let x2 = right.transform(clip.channel(1), start);
            let cross = phat_cross_spectrum(x1, x2, config.phat_floor);
            track.extend((0..bands).map(|b| band_peak(&cross, &fb, b, max_lag, &twiddles)));
        }
        out.push(track);
    }
    Ok(out)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Temporal median with a 3-frame kernel. Edge frames use the neighbours that
/// exist; with two values the lower one is taken.
pub fn median_filter3(track: &[f64]) -> Vec<f64> {
    (0..track.len())
        .map(|t| {
            let lo = t.saturating_sub(1);
            let hi = (t + 2).min(track.len());
            let mut window = track[lo..hi].to_vec();
            lower_median(&mut window)
        })
        .collect()
}

/// `tdoa` (median) or `tdoa3` (concatenated) features on the frame grid.
pub fn extract_tdoa(
    clip: &AudioClip,
    grid: &FrameGrid,
    variant: TdoaVariant,
    config: &TdoaConfig,
) -> Result<FeatureMatrix> {
    let tracks = multi_window_delays(clip, grid, config)?;
    let bands = config.band_count;
    let windows = tracks.len();
    let frames = tracks[0].len() / bands;

    match variant {
        TdoaVariant::Concatenated => {
            let mut values = Vec::with_capacity(frames * bands * windows);
            for t in 0..frames {
                for track in &tracks {
                    values.extend(track[t * bands..(t + 1) * bands].iter().map(|&d| d as f64));
                }
            }
            FeatureMatrix::new(values, frames, FeatureLayout::single("tdoa3", bands * windows))
        }
        TdoaVariant::Median => {
            let mut columns: Vec<Vec<f64>> = (0..bands)
                .map(|b| {
                    (0..frames)
                        .map(|t| {
                            let mut across: Vec<f64> =
                                tracks.iter().map(|tr| tr[t * bands + b] as f64).collect();
                            lower_median(&mut across)
                        })
                        .collect()
                })
                .collect();
            for column in &mut columns {
                *column = median_filter3(column);
            }
            let values = (0..frames)
                .flat_map(|t| columns.iter().map(move |c| c[t]))
                .collect();
            FeatureMatrix::new(values, frames, FeatureLayout::single("tdoa", bands))
        }
    }
}
