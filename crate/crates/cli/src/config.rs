//! Run configuration: a TOML file plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};

use sed_core::dataset::{EventTemplate, SceneConfig, SourceKind, Timeline};
use sed_core::features::{Combination, FeatureConfig, ABLATION_COMBINATIONS};
use sed_core::metrics::Aggregation;
use sed_core::model::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Holds `audio/<context>/*.wav` and `meta/<context>/*.ann`.
    pub data_root: PathBuf,
    /// Contexts to process; empty means every directory under `audio/`.
    pub contexts: Vec<String>,
    /// Combination used by extract, train, evaluate and detect.
    pub features: Combination,
    /// Rows of the ablation table.
    pub combinations: Vec<Combination>,
    pub out: PathBuf,
    pub folds: usize,
    pub validation_fraction: f64,
    pub aggregation: Aggregation,
    pub feature: FeatureConfig,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            contexts: Vec::new(),
            features: "mel_2;tdoa".parse().expect("valid"),
            combinations: ABLATION_COMBINATIONS.iter().map(|s| s.parse().expect("valid")).collect(),
            out: PathBuf::from("out"),
            folds: 4,
            validation_fraction: 0.2,
            aggregation: Aggregation::Micro,
            feature: FeatureConfig::default(),
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Recordings per context.
    pub count: usize,
    pub scene: SceneConfig,
    pub timeline: Timeline,
    pub classes: Vec<TemplateSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 8,
            scene: SceneConfig::default(),
            timeline: Timeline::default(),
            classes: vec![
                TemplateSpec {
                    class: "tone".into(),
                    bands: [0, 2],
                    delay: 0,
                    kind: SourceKind::Harmonic { f0: 220.0 },
                },
                TemplateSpec {
                    class: "hiss".into(),
                    bands: [3, 4],
                    delay: 6,
                    kind: SourceKind::Noise,
                },
                TemplateSpec {
                    class: "rumble".into(),
                    bands: [0, 1],
                    delay: -6,
                    kind: SourceKind::Noise,
                },
            ],
        }
    }
}

/// One synthetic sound class: inclusive band range, right-channel delay in
/// samples and source kind (`noise` or `harmonic:<f0>`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    pub class: String,
    pub bands: [usize; 2],
    pub delay: i64,
    pub kind: SourceKind,
}

impl TemplateSpec {
    pub fn template(&self) -> EventTemplate {
        EventTemplate {
            class: self.class.clone(),
            bands: self.bands[0]..=self.bands[1],
            delay: self.delay,
            kind: self.kind,
        }
    }
}

/// Values given on the command line; `None` keeps the file's value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub context: Option<String>,
    pub features: Option<Combination>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub out: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub data_root: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(c) = &o.context {
            self.contexts = vec![c.clone()];
        }
        if let Some(f) = &o.features {
            self.features = f.clone();
        }
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(k) = o.folds {
            self.folds = k;
        }
        if let Some(p) = &o.out {
            self.out = p.clone();
        }
        if let Some(t) = o.threshold {
            self.train.threshold = t;
        }
        if let Some(d) = &o.data_root {
            self.data_root = d.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.feature.validate()?;
        self.train.validate()?;
        if self.folds < 2 {
            // one fold would leave nothing to train on
            bail!("folds must be at least 2");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            bail!("validation_fraction must lie in [0, 1)");
        }
        if self.combinations.is_empty() {
            bail!("combinations must not be empty");
        }
        for t in &self.synth.classes {
            if t.bands[0] > t.bands[1] || t.bands[1] >= self.synth.scene.band_count {
                bail!("class {}: bands {:?} outside 0..{}", t.class, t.bands, self.synth.scene.band_count);
            }
        }
        let tl = &self.synth.timeline;
        if !(tl.min_event_secs > 0.0 && tl.min_event_secs <= tl.max_event_secs && tl.min_gap_secs >= 0.0 && tl.min_gap_secs <= tl.max_gap_secs) {
            bail!("synth timeline bounds are inconsistent");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn flags_win_over_file() {
        let mut c: RunConfig = toml::from_str("folds = 3\nfeatures = \"mel_1\"\n[train]\nseed = 4\n").unwrap();
        assert_eq!(c.folds, 3);
        c.apply(&Overrides {
            folds: Some(5),
            seed: Some(9),
            context: Some("home".into()),
            ..Default::default()
        });
        assert_eq!((c.folds, c.train.seed), (5, 9));
        assert_eq!(c.features.to_string(), "mel_1");
        assert_eq!(c.contexts, vec!["home".to_string()]);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(toml::from_str::<RunConfig>("fold = 3").is_err());
        assert!(toml::from_str::<RunConfig>("features = \"mel_3\"").is_err());
        for k in [0, 1] {
            let c: RunConfig = toml::from_str(&format!("folds = {k}")).unwrap();
            assert!(c.validate().is_err());
        }
    }
}
