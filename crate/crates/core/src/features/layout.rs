use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five feature families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Mel,
    Pitch,
    Pitch3,
    Tdoa,
    Tdoa3,
}

impl FeatureKind {
    /// Columns produced for a single channel (or, for TDOA, a channel pair).
    pub fn width(self) -> usize {
        match self {
            FeatureKind::Mel => 40,
            FeatureKind::Pitch => 2,
            FeatureKind::Pitch3 => 6,
            FeatureKind::Tdoa => 5,
            FeatureKind::Tdoa3 => 15,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Mel => "mel",
            FeatureKind::Pitch => "pitch",
            FeatureKind::Pitch3 => "pitch3",
            FeatureKind::Tdoa => "tdoa",
            FeatureKind::Tdoa3 => "tdoa3",
        }
    }

    pub fn is_spatial(self) -> bool {
        matches!(self, FeatureKind::Tdoa | FeatureKind::Tdoa3)
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mel" => FeatureKind::Mel,
            "pitch" => FeatureKind::Pitch,
            "pitch3" => FeatureKind::Pitch3,
            "tdoa" => FeatureKind::Tdoa,
            "tdoa3" => FeatureKind::Tdoa3,
            other => return Err(Error::UnknownBlock(other.to_string())),
        })
    }
}

/// Channel subscript of a spectral block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelMode {
    /// `_1`: computed on the downmixed mono signal.
    Mono,
    /// `_2`: computed on left and right, concatenated left first.
    Stereo,
    /// TDOA blocks compare the two channels and carry no subscript.
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: FeatureKind,
    pub channels: ChannelMode,
}

impl BlockSpec {
    pub fn width(&self) -> usize {
        match self.channels {
            ChannelMode::Stereo => 2 * self.kind.width(),
            ChannelMode::Mono | ChannelMode::Pair => self.kind.width(),
        }
    }

    pub fn needs_stereo(&self) -> bool {
        self.channels != ChannelMode::Mono
    }
}

impl fmt::Display for BlockSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.channels {
            ChannelMode::Mono => write!(f, "{}_1", self.kind.name()),
            ChannelMode::Stereo => write!(f, "{}_2", self.kind.name()),
            ChannelMode::Pair => f.write_str(self.kind.name()),
        }
    }
}

impl FromStr for BlockSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, subscript) = match s.rsplit_once('_') {
            Some((name, sub)) => (name, Some(sub)),
            None => (s, None),
        };
        let kind: FeatureKind = name.parse().map_err(|_| Error::UnknownBlock(s.to_string()))?;
        let channels = match (kind.is_spatial(), subscript) {
            (true, None) => ChannelMode::Pair,
            (false, Some("1")) => ChannelMode::Mono,
            (false, Some("2")) => ChannelMode::Stereo,
            _ => return Err(Error::UnknownBlock(s.to_string())),
        };
        Ok(BlockSpec { kind, channels })
    }
}

/// An ordered feature combination such as `mel_2;tdoa;pitch_2`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Combination(Vec<BlockSpec>);

impl Combination {
    pub fn blocks(&self) -> &[BlockSpec] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.iter().map(BlockSpec::width).sum()
    }

    pub fn needs_stereo(&self) -> bool {
        self.0.iter().any(BlockSpec::needs_stereo)
    }

    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout::new(
            self.0
                .iter()
                .map(|b| LayoutBlock {
                    name: b.to_string(),
                    width: b.width(),
                })
                .collect(),
        )
    }

    /// Filesystem-friendly rendering, e.g. `mel_2+tdoa+pitch_2`.
    pub fn slug(&self) -> String {
        self.to_string().replace(';', "+")
    }
}

impl FromStr for Combination {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let blocks = s
            .split(';')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<BlockSpec>>>()?;
        if blocks.is_empty() {
            return Err(Error::UnknownBlock(s.to_string()));
        }
        Ok(Combination(blocks))
    }
}

impl TryFrom<String> for Combination {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Combination> for String {
    fn from(value: Combination) -> Self {
        value.to_string()
    }
}

impl fmt::Display for Combination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(";")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// The fourteen combinations evaluated in the reference ablation table, in
/// table order.
pub const ABLATION_COMBINATIONS: [&str; 14] = [
    "mel_1",
    "mel_1;pitch_1",
    "mel_1;pitch3_1",
    "mel_1;tdoa",
    "mel_1;tdoa3",
    "mel_2",
    "mel_2;pitch_2",
    "mel_2;pitch3_2",
    "mel_2;tdoa",
    "mel_2;tdoa3",
    "mel_2;tdoa3;pitch_2",
    "mel_2;tdoa3;pitch3_2",
    "mel_2;tdoa;pitch_2",
    "mel_2;tdoa;pitch3_2",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutBlock {
    pub name: String,
    pub width: usize,
}

/// Named column blocks of a feature matrix, in column order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureLayout {
    blocks: Vec<LayoutBlock>,
}

impl FeatureLayout {
    pub fn new(blocks: Vec<LayoutBlock>) -> Self {
        Self { blocks }
    }

    pub fn single(name: impl Into<String>, width: usize) -> Self {
        Self::new(vec![LayoutBlock {
            name: name.into(),
            width,
        }])
    }

    pub fn blocks(&self) -> &[LayoutBlock] {
        &self.blocks
    }

    pub fn width(&self) -> usize {
        self.blocks.iter().map(|b| b.width).sum()
    }

    pub fn concat(&self, other: &FeatureLayout) -> FeatureLayout {
        let mut blocks = self.blocks.clone();
        blocks.extend(other.blocks.iter().cloned());
        FeatureLayout { blocks }
    }

    /// Per column, whether it holds log-energies (the `mel` family).
    pub fn log_energy_columns(&self) -> Vec<bool> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let is_mel = b.name == "mel" || b.name.starts_with("mel_");
                std::iter::repeat(is_mel).take(b.width)
            })
            .collect()
    }
}

/// Frames × dimensions real matrix, row-major, with a named layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    frames: usize,
    layout: FeatureLayout,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, frames: usize, layout: FeatureLayout) -> Result<Self> {
        let width = layout.width();
        if values.len() != frames * width {
            return Err(Error::SizeMismatch(format!(
                "{} values for {frames} frames of width {width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("feature values must be finite".into()));
        }
        Ok(Self {
            values,
            frames,
            layout,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn width(&self) -> usize {
        self.layout.width()
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.values[t * w..(t + 1) * w]
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.width() + d]
    }

    /// Keeps the first `frames` rows.
    pub fn truncated(&self, frames: usize) -> FeatureMatrix {
        let frames = frames.min(self.frames);
        FeatureMatrix {
            values: self.values[..frames * self.width()].to_vec(),
            frames,
            layout: self.layout.clone(),
        }
    }

    /// Side-by-side concatenation; the result has as many frames as the
    /// shorter input.
    pub fn hstack(parts: &[FeatureMatrix]) -> Result<FeatureMatrix> {
        let frames = parts.iter().map(|p| p.frames).min().unwrap_or(0);
        let layout = parts
            .iter()
            .fold(FeatureLayout::default(), |acc, p| acc.concat(&p.layout));
        let mut values = Vec::with_capacity(frames * layout.width());
        for t in 0..frames {
            for p in parts {
                values.extend_from_slice(p.row(t));
            }
        }
        FeatureMatrix::new(values, frames, layout)
    }

    /// Same values under a different layout of equal width.
    pub fn relabel(self, layout: FeatureLayout) -> Result<FeatureMatrix> {
        if layout.width() != self.width() {
            return Err(Error::SizeMismatch(format!(
                "layout width {} does not match matrix width {}",
                layout.width(),
                self.width()
            )));
        }
        Ok(FeatureMatrix {
            values: self.values,
            frames: self.frames,
            layout,
        })
    }
}
