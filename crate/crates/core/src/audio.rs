//! Audio front end: WAV decoding, channel handling, framing and the STFT.
//!
//! Every feature extractor works on the same frame grid. A frame `t` covers
//! samples `[t * hop, t * hop + frame)` and its reference instant is the frame
//! center; the trailing partial frame is dropped.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multichannel PCM audio with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() || channels.len() > 2 {
            return Err(Error::InvalidClip(format!(
                "channel count must be 1 or 2, got {}",
                channels.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidClip("channels differ in length".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn stereo(left: Vec<f64>, right: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![left, right], sample_rate)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn is_stereo(&self) -> bool {
        self.channels.len() == 2
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, index: usize) -> &[f64] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    /// A clip holding only one of this clip's channels.
    pub fn select_channel(&self, index: usize) -> AudioClip {
        AudioClip {
            channels: vec![self.channels[index].clone()],
            sample_rate: self.sample_rate,
        }
    }
}

/// Reads a 16- or 24-bit little-endian PCM RIFF/WAVE file.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let unreadable = |reason: String| Error::UnreadableAudio {
        path: path.to_path_buf(),
        reason,
    };
    let unsupported = |reason: String| Error::UnsupportedEncoding {
        path: path.to_path_buf(),
        reason,
    };

    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => unsupported("unsupported WAVE format".into()),
        other => unreadable(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(unsupported("floating-point samples".into()));
    }
    if spec.bits_per_sample != 16 && spec.bits_per_sample != 24 {
        return Err(unsupported(format!(
            "{}-bit samples (only 16 and 24 are supported)",
            spec.bits_per_sample
        )));
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(unsupported(format!("{} channels", spec.channels)));
    }

    let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
    let n_channels = spec.channels as usize;
    let frames = reader.duration() as usize;
    if frames == 0 {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    let mut channels = vec![Vec::with_capacity(frames); n_channels];
    for (i, sample) in reader.samples::<i32>().enumerate() {
        let value = sample.map_err(|e| unreadable(e.to_string()))?;
        channels[i % n_channels].push(value as f64 / scale);
    }
    let len = channels[0].len();
    if len == 0 {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    if channels.iter().any(|c| c.len() != len) {
        return Err(unreadable("truncated sample data".into()));
    }
    AudioClip::new(channels, spec.sample_rate)
}

/// Header facts of a WAV file, read without decoding samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub channels: u16,
    pub sample_rate: u32,
    pub bits_per_sample: u16,
    pub frames: u32,
}

pub fn probe_wav(path: impl AsRef<Path>) -> Result<WavInfo> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::Unsupported => Error::UnsupportedEncoding {
            path: path.to_path_buf(),
            reason: "unsupported WAVE format".into(),
        },
        other => Error::UnreadableAudio {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    Ok(WavInfo {
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        bits_per_sample: spec.bits_per_sample,
        frames: reader.duration(),
    })
}

/// Writes a clip as little-endian integer PCM. Amplitudes are scaled by
/// `2^(bits-1)`, rounded and saturated, which makes decode/encode/decode exact.
pub fn encode_wav(clip: &AudioClip, path: impl AsRef<Path>, bits_per_sample: u16) -> Result<()> {
    let path = path.as_ref();
    if bits_per_sample != 16 && bits_per_sample != 24 {
        return Err(Error::InvalidParameter(format!(
            "cannot encode {bits_per_sample}-bit PCM"
        )));
    }
    let spec = hound::WavSpec {
        channels: clip.channel_count() as u16,
        sample_rate: clip.sample_rate,
        bits_per_sample,
        sample_format: hound::SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_io)?;
    let scale = (1i64 << (bits_per_sample - 1)) as f64;
    let (lo, hi) = (-scale, scale - 1.0);
    for i in 0..clip.len() {
        for ch in &clip.channels {
            let v = (ch[i] * scale).round().clamp(lo, hi) as i32;
            writer.write_sample(v).map_err(to_io)?;
        }
    }
    writer.finalize().map_err(to_io)
}

/// Averages the two channels of a stereo clip.
pub fn downmix_to_mono(clip: &AudioClip) -> Result<AudioClip> {
    if !clip.is_stereo() {
        return Err(Error::RequiresStereo("downmix_to_mono"));
    }
    let samples = clip.channels[0]
        .iter()
        .zip(&clip.channels[1])
        .map(|(l, r)| (l + r) / 2.0)
        .collect();
    AudioClip::mono(samples, clip.sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    /// Periodic Hamming window.
    Hamming,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / len as f64).cos())
                .collect(),
        }
    }
}

/// Framing parameters in milliseconds. Converted to samples with the clip's
/// actual sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameGrid {
    pub frame_length_ms: f64,
    pub hop_length_ms: f64,
    pub window: Window,
}

impl Default for FrameGrid {
    fn default() -> Self {
        Self {
            frame_length_ms: 40.0,
            hop_length_ms: 20.0,
            window: Window::Hamming,
        }
    }
}

pub(crate) fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

impl FrameGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_length_ms > 0.0 && self.frame_length_ms > 0.0) {
            return Err(Error::InvalidParameter(
                "frame and hop lengths must be positive".into(),
            ));
        }
        if self.hop_length_ms > self.frame_length_ms {
            return Err(Error::InvalidParameter(format!(
                "hop {} ms exceeds frame {} ms",
                self.hop_length_ms, self.frame_length_ms
            )));
        }
        Ok(())
    }

    pub fn frame_samples(&self, sample_rate: u32) -> usize {
        ms_to_samples(self.frame_length_ms, sample_rate)
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        ms_to_samples(self.hop_length_ms, sample_rate)
    }

    /// `floor((n - frame) / hop) + 1`, or 0 when the clip is shorter than a frame.
    pub fn frame_count(&self, num_samples: usize, sample_rate: u32) -> usize {
        let frame = self.frame_samples(sample_rate);
        let hop = self.hop_samples(sample_rate);
        if num_samples < frame || hop == 0 {
            0
        } else {
            (num_samples - frame) / hop + 1
        }
    }

    /// Sample index of the center of frame `t`.
    pub fn frame_center(&self, t: usize, sample_rate: u32) -> usize {
        t * self.hop_samples(sample_rate) + self.frame_samples(sample_rate) / 2
    }

    /// Smallest power of two that holds one frame.
    pub fn default_fft_size(&self, sample_rate: u32) -> usize {
        self.frame_samples(sample_rate).next_power_of_two()
    }

    pub fn timing(&self, sample_rate: u32) -> FrameTiming {
        let sr = sample_rate as f64;
        FrameTiming {
            hop_secs: self.hop_samples(sample_rate) as f64 / sr,
            center_offset_secs: (self.frame_samples(sample_rate) / 2) as f64 / sr,
        }
    }
}

/// Maps frame indices to times: frame `t` is centered at
/// `t * hop_secs + center_offset_secs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub hop_secs: f64,
    pub center_offset_secs: f64,
}

impl FrameTiming {
    pub fn center(&self, t: usize) -> f64 {
        t as f64 * self.hop_secs + self.center_offset_secs
    }
}

/// One channel's short-time spectrum: `frame_count × (fft_size/2 + 1)` bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    bins: Vec<Complex64>,
    fft_size: usize,
    frame_count: usize,
    channel_index: usize,
    sample_rate: u32,
    grid: FrameGrid,
}

impl Spectrogram {
    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn bin_count(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn channel_index(&self) -> usize {
        self.channel_index
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn grid(&self) -> &FrameGrid {
        &self.grid
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let n = self.bin_count();
        &self.bins[t * n..(t + 1) * n]
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn is_compatible(&self, other: &Spectrogram) -> bool {
        self.fft_size == other.fft_size
            && self.frame_count == other.frame_count
            && self.sample_rate == other.sample_rate
            && self.grid == other.grid
    }
}

/// Reusable forward transform of windowed, zero-padded frames.
pub(crate) struct FrameTransform {
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    window: Vec<f64>,
    fft_size: usize,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl FrameTransform {
    pub(crate) fn new(window: Window, frame_len: usize, fft_size: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Self {
            fft,
            window: window.coefficients(frame_len),
            fft_size,
            buffer: vec![Complex64::default(); fft_size],
            scratch,
        }
    }

    /// Transforms `signal[start .. start + frame_len]`, where `start` may run
    /// past either end of the signal; missing samples are zeros.
    pub(crate) fn transform(&mut self, signal: &[f64], start: isize) -> &[Complex64] {
        self.buffer.fill(Complex64::default());
        for (n, w) in self.window.iter().enumerate() {
            let idx = start + n as isize;
            if idx >= 0 && (idx as usize) < signal.len() {
                self.buffer[n] = Complex64::new(signal[idx as usize] * w, 0.0);
            }
        }
        self.fft
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        &self.buffer[..self.fft_size / 2 + 1]
    }
}

/// Windowed, zero-padded STFT of every channel of `clip`.
pub fn stft(clip: &AudioClip, grid: &FrameGrid, fft_size: usize) -> Result<Vec<Spectrogram>> {
    grid.validate()?;
    let sr = clip.sample_rate();
    let frame = grid.frame_samples(sr);
    let hop = grid.hop_samples(sr);
    if !fft_size.is_power_of_two() || fft_size < frame {
        return Err(Error::InvalidParameter(format!(
            "fft size {fft_size} must be a power of two no smaller than the frame ({frame} samples)"
        )));
    }
    let frame_count = grid.frame_count(clip.len(), sr);
    if frame_count == 0 {
        return Err(Error::ClipTooShort {
            samples: clip.len(),
            frame,
        });
    }

    let mut transform = FrameTransform::new(grid.window, frame, fft_size);
    let bin_count = fft_size / 2 + 1;
    Ok(clip
        .channels()
        .iter()
        .enumerate()
        .map(|(channel_index, samples)| {
            let mut bins = Vec::with_capacity(frame_count * bin_count);
            for t in 0..frame_count {
                bins.extend_from_slice(transform.transform(samples, (t * hop) as isize));
            }
            Spectrogram {
                bins,
                fft_size,
                frame_count,
                channel_index,
                sample_rate: sr,
                grid: *grid,
            }
        })
        .collect())
}
