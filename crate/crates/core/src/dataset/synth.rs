//! Synthetic binaural scenes with known events and planted integer delays.
//!
//! Each event is band-limited noise or a harmonic tone confined to a range of
//! the 5-band mel partition used by the TDOA features. The left channel gets
//! the source signal and the right channel the same signal delayed by the
//! event's integer delay, so per-band delays are known exactly.
//!
//! Plan files hold one event per line, tab- or whitespace-separated:
//!
//! ```text
//! # class   bands  delay  onset  offset  kind
//! engine    0-1    10     0.5    4.0     noise
//! bird      3-4    -10    1.0    3.0     harmonic:2200
//! ```

use std::f64::consts::PI;
use std::ops::RangeInclusive;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::dataset::annotations::{Event, EventList};
use crate::error::{Error, Result};
use crate::features::mel::mel_edges;

/// Written `noise` or `harmonic:<f0>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SourceKind {
    Noise,
    /// Harmonics `h · f0` with amplitude `1/h`, restricted to the band range.
    Harmonic { f0: f64 },
}

impl std::str::FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_kind(s)
            .filter(|k| !matches!(k, SourceKind::Harmonic { f0 } if !(*f0 > 0.0 && f0.is_finite())))
            .ok_or_else(|| Error::InvalidScene(format!("source kind `{s}` must be `noise` or `harmonic:<f0>`")))
    }
}

impl TryFrom<String> for SourceKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SourceKind> for String {
    fn from(k: SourceKind) -> String {
        k.to_string()
    }
}

impl std::fmt::Display for SourceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceKind::Noise => write!(f, "noise"),
            SourceKind::Harmonic { f0 } => write!(f, "harmonic:{f0}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedEvent {
    pub class: String,
    pub bands: RangeInclusive<usize>,
    /// Samples by which the right channel lags the left.
    pub delay: i64,
    pub onset: f64,
    pub offset: f64,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenePlan {
    pub events: Vec<PlannedEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub sample_rate: u32,
    pub duration_secs: f64,
    pub band_count: usize,
    /// Largest accepted |delay| in samples, normally `2 τ_max`.
    pub max_delay: usize,
    /// RMS level of each rendered event.
    pub level: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            duration_secs: 30.0,
            band_count: 5,
            max_delay: 20,
            level: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub clip: AudioClip,
    pub truth: EventList,
    pub plan: ScenePlan,
}

/// Frequency span owned by bands `first..=last` of a `band_count`-band mel
/// partition of `0 .. sample_rate/2`: from the midpoint below the first
/// band's peak to the midpoint above the last band's peak.
pub fn band_frequency_range(bands: &RangeInclusive<usize>, band_count: usize, sample_rate: u32) -> (f64, f64) {
    let e = mel_edges(band_count, 0.0, sample_rate as f64 / 2.0);
    let (first, last) = (*bands.start(), *bands.end());
    let lo = if first == 0 { e[0] } else { 0.5 * (e[first] + e[first + 1]) };
    let hi = if last + 1 == band_count {
        e[band_count + 1]
    } else {
        0.5 * (e[last + 1] + e[last + 2])
    };
    (lo, hi)
}

fn rms_normalise(signal: &mut [f64], level: f64) {
    let rms = (signal.iter().map(|v| v * v).sum::<f64>() / signal.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        let g = level / rms;
        signal.iter_mut().for_each(|v| *v *= g);
    }
}

fn band_noise(len: usize, lo: f64, hi: f64, sample_rate: u32, rng: &mut impl Rng) -> Vec<f64> {
    let mut buf: Vec<Complex64> = (0..len)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let bin_hz = sample_rate as f64 / len as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * bin_hz;
        if k == 0 || f < lo || f > hi {
            *c = Complex64::default();
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.into_iter().map(|c| c.re).collect()
}

/// Renders the plan into a stereo clip. Ground truth merges overlapping
/// events of the same class.
pub fn synthesize_scene(plan: &ScenePlan, config: &SceneConfig, rng: &mut impl Rng) -> Result<SyntheticScene> {
    if config.sample_rate == 0 || !(config.duration_secs > 0.0) || config.band_count == 0 {
        return Err(Error::InvalidScene("invalid scene configuration".into()));
    }
    let sr = config.sample_rate;
    let total = (config.duration_secs * sr as f64).round() as usize;
    let mut left = vec![0.0; total];
    let mut right = vec![0.0; total];

    for (i, e) in plan.events.iter().enumerate() {
        let bad = |msg: String| Error::InvalidScene(format!("event {} ({}): {msg}", i + 1, e.class));
        if !(e.onset >= 0.0 && e.onset < e.offset && e.offset <= config.duration_secs + 1e-9) {
            return Err(bad(format!("interval [{}, {}) outside the clip", e.onset, e.offset)));
        }
        if e.delay.unsigned_abs() as usize > config.max_delay {
            return Err(bad(format!("delay {} exceeds ±{}", e.delay, config.max_delay)));
        }
        if e.bands.is_empty() || *e.bands.end() >= config.band_count {
            return Err(bad(format!("band range {:?} outside 0..{}", e.bands, config.band_count)));
        }
        let (lo, hi) = band_frequency_range(&e.bands, config.band_count, sr);
        let start = (e.onset * sr as f64).round() as usize;
        let end = ((e.offset * sr as f64).round() as usize).min(total);
        let len = end - start;
        let pad = e.delay.unsigned_abs() as usize;

        // source[j] is the signal at time (start - pad + j)
        let mut source = match e.kind {
            SourceKind::Noise => band_noise(len + 2 * pad, lo, hi, sr, rng),
            SourceKind::Harmonic { f0 } => {
                if !(f0 > 0.0) {
                    return Err(bad("harmonic f0 must be positive".into()));
                }
                let harmonics: Vec<usize> = (1..)
                    .take_while(|h| *h as f64 * f0 <= hi)
                    .filter(|h| *h as f64 * f0 >= lo)
                    .collect();
                if harmonics.is_empty() {
                    return Err(bad(format!("no harmonic of {f0} Hz in {lo:.0}-{hi:.0} Hz")));
                }
                (0..len + 2 * pad)
                    .map(|j| {
                        let t = (start as f64 - pad as f64 + j as f64) / sr as f64;
                        harmonics
                            .iter()
                            .map(|&h| (2.0 * PI * h as f64 * f0 * t).sin() / h as f64)
                            .sum()
                    })
                    .collect()
            }
        };
        rms_normalise(&mut source, config.level);
        for n in 0..len {
            left[start + n] += source[pad + n];
            right[start + n] += source[(pad as i64 + n as i64 - e.delay) as usize];
        }
    }

    let mut by_class: Vec<(String, f64, f64)> = plan
        .events
        .iter()
        .map(|e| (e.class.clone(), e.onset, e.offset))
        .collect();
    by_class.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<Event> = Vec::new();
    for (class, onset, offset) in by_class {
        match merged.last_mut() {
            Some(last) if last.label == class && onset <= last.offset => {
                last.offset = last.offset.max(offset);
            }
            _ => merged.push(Event {
                onset,
                offset,
                label: class,
            }),
        }
    }
    merged.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.label.cmp(&b.label)));

    Ok(SyntheticScene {
        clip: AudioClip::stereo(left, right, sr)?,
        truth: EventList::new(merged),
        plan: plan.clone(),
    })
}

fn parse_bands(s: &str) -> Option<RangeInclusive<usize>> {
    match s.split_once('-') {
        Some((a, b)) => Some(a.trim().parse().ok()?..=b.trim().parse().ok()?),
        None => {
            let b = s.trim().parse().ok()?;
            Some(b..=b)
        }
    }
}

fn parse_kind(s: &str) -> Option<SourceKind> {
    match s.split_once(':') {
        None if s == "noise" => Some(SourceKind::Noise),
        Some(("harmonic", f0)) => Some(SourceKind::Harmonic { f0: f0.parse().ok()? }),
        _ => None,
    }
}

pub fn parse_scene_plan(text: &str) -> Result<ScenePlan> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| Error::Annotation {
            path: "scene plan".into(),
            line: i + 1,
            message: message.to_string(),
        };
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        if fields.len() != 6 {
            return Err(err("expected `class bands delay onset offset kind`"));
        }
        events.push(PlannedEvent {
            class: fields[0].to_string(),
            bands: parse_bands(fields[1]).ok_or_else(|| err("bad band range"))?,
            delay: fields[2].parse().map_err(|_| err("bad delay"))?,
            onset: fields[3].parse().map_err(|_| err("bad onset"))?,
            offset: fields[4].parse().map_err(|_| err("bad offset"))?,
            kind: parse_kind(fields[5]).ok_or_else(|| err("kind must be `noise` or `harmonic:<f0>`"))?,
        });
    }
    Ok(ScenePlan { events })
}

pub fn format_scene_plan(plan: &ScenePlan) -> String {
    let mut out = String::from("# class\tbands\tdelay\tonset\toffset\tkind\n");
    for e in &plan.events {
        let kind = e.kind;
        out.push_str(&format!(
            "{}\t{}-{}\t{}\t{:.3}\t{:.3}\t{}\n",
            e.class,
            e.bands.start(),
            e.bands.end(),
            e.delay,
            e.onset,
            e.offset,
            kind
        ));
    }
    out
}

/// A sound class for random scene generation: where it sits spectrally and
/// spatially.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTemplate {
    pub class: String,
    pub bands: RangeInclusive<usize>,
    pub delay: i64,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Timeline {
    pub min_event_secs: f64,
    pub max_event_secs: f64,
    pub min_gap_secs: f64,
    pub max_gap_secs: f64,
}

impl Default for Timeline {
    fn default() -> Self {
        Self {
            min_event_secs: 1.0,
            max_event_secs: 4.0,
            min_gap_secs: 0.5,
            max_gap_secs: 4.0,
        }
    }
}

/// Independent on/off timelines per template, so events of different classes
/// overlap freely.
pub fn random_scene_plan(
    templates: &[EventTemplate],
    duration_secs: f64,
    timeline: &Timeline,
    rng: &mut impl Rng,
) -> ScenePlan {
    let mut events = Vec::new();
    for tpl in templates {
        let mut t = rng.gen_range(0.0..timeline.max_gap_secs);
        while t + timeline.min_event_secs <= duration_secs {
            let len = rng.gen_range(timeline.min_event_secs..=timeline.max_event_secs);
            let end = (t + len).min(duration_secs);
            events.push(PlannedEvent {
                class: tpl.class.clone(),
                bands: tpl.bands.clone(),
                delay: tpl.delay,
                onset: t,
                offset: end,
                kind: tpl.kind,
            });
            t = end + rng.gen_range(timeline.min_gap_secs..=timeline.max_gap_secs);
        }
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset));
    ScenePlan { events }
}
