//! Feature families and their assembly into combination matrices.

pub mod container;
pub mod layout;
pub mod mel;
pub mod pitch;
pub mod tdoa;

use serde::{Deserialize, Serialize};

use crate::audio::{downmix_to_mono, stft, AudioClip, FrameGrid};
use crate::error::{Error, Result};

pub use layout::{
    BlockSpec, ChannelMode, Combination, FeatureKind, FeatureLayout, FeatureMatrix, LayoutBlock,
    ABLATION_COMBINATIONS,
};
pub use container::{
    decode_features, encode_features, read_features, write_features, write_features_csv, FEATURE_MAGIC,
    FEATURE_VERSION,
};
pub use mel::{extract_log_mel, hz_to_mel, mel_to_hz, MelFilterbank};
pub use pitch::{extract_pitch, PitchConfig, PitchEstimate};
pub use tdoa::{extract_tdoa, gcc_phat_band, median_filter3, TdoaConfig, TdoaVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub grid: FrameGrid,
    /// Defaults to the smallest power of two holding one frame.
    pub fft_size: Option<usize>,
    pub mel_bands: usize,
    /// Added to band power before the logarithm.
    pub log_floor: f64,
    pub pitch: PitchConfig,
    pub tdoa: TdoaConfig,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            grid: FrameGrid::default(),
            fft_size: None,
            mel_bands: 40,
            log_floor: 1e-10,
            pitch: PitchConfig::default(),
            tdoa: TdoaConfig::default(),
        }
    }
}

impl FeatureConfig {
    pub fn fft_size(&self, sample_rate: u32) -> usize {
        self.fft_size
            .unwrap_or_else(|| self.grid.default_fft_size(sample_rate))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.tdoa.validate()?;
        if self.mel_bands == 0 {
            return Err(Error::InvalidParameter("mel band count must be positive".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::InvalidParameter("log floor must be positive".into()));
        }
        Ok(())
    }
}

/// Computes one block for every channel it covers.
fn extract_block(
    block: &BlockSpec,
    clip: &AudioClip,
    mono: &mut Option<AudioClip>,
    config: &FeatureConfig,
) -> Result<FeatureMatrix> {
    let sr = clip.sample_rate();
    if block.channels == ChannelMode::Pair {
        let variant = match block.kind {
            FeatureKind::Tdoa => TdoaVariant::Median,
            _ => TdoaVariant::Concatenated,
        };
        return extract_tdoa(clip, &config.grid, variant, &config.tdoa);
    }

    let source: &AudioClip = match block.channels {
        ChannelMode::Mono if clip.is_stereo() => mono.get_or_insert(downmix_to_mono(clip)?),
        _ => clip,
    };
    let fft_size = config.fft_size(sr);
    let specs = stft(source, &config.grid, fft_size)?;
    let parts = match block.kind {
        FeatureKind::Mel => {
            let fb = MelFilterbank::full_range(config.mel_bands, fft_size, sr)?;
            specs
                .iter()
                .map(|s| extract_log_mel(s, &fb, config.log_floor))
                .collect::<Result<Vec<_>>>()?
        }
        FeatureKind::Pitch | FeatureKind::Pitch3 => {
            let top_k = if block.kind == FeatureKind::Pitch { 1 } else { 3 };
            specs
                .iter()
                .map(|s| extract_pitch(s, top_k, &config.pitch))
                .collect::<Result<Vec<_>>>()?
        }
        FeatureKind::Tdoa | FeatureKind::Tdoa3 => unreachable!("spatial blocks handled above"),
    };
    FeatureMatrix::hstack(&parts)
}

/// Builds the feature matrix for a combination such as `mel_2;tdoa;pitch_2`.
///
/// Blocks are concatenated in the listed order; `_1` blocks use the
/// downmixed signal and `_2` blocks place the left channel before the right.
pub fn assemble_features(
    clip: &AudioClip,
    combination: &Combination,
    config: &FeatureConfig,
) -> Result<FeatureMatrix> {
    config.validate()?;
    if combination.needs_stereo() && !clip.is_stereo() {
        return Err(Error::RequiresStereo("feature combination"));
    }
    let mut mono = None;
    let parts = combination
        .blocks()
        .iter()
        .map(|b| extract_block(b, clip, &mut mono, config))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::hstack(&parts)?.relabel(combination.layout())
}
