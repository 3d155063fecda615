//! Cross-validated experiments over one or more acoustic contexts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioClip;
use crate::dataset::{
    class_vocabulary, make_folds, random_scene_plan, rasterize, synthesize_scene, EventList, EventTemplate, FoldSplit,
    SceneConfig, Timeline,
};
use crate::error::{Error, Result};
use crate::features::{assemble_features, Combination, FeatureConfig};
use crate::metrics::{combine_folds, score, Aggregation, MetricReport, ResultTable, SegmentCounts};
use crate::model::{EpochRecord, LabeledFeatures, Model, TrainConfig, Trainer, TrainingLog};

/// Audio with its annotations.
#[derive(Debug, Clone)]
pub struct Recording {
    pub id: String,
    pub clip: AudioClip,
    pub events: EventList,
}

/// Recordings of one acoustic context; each context gets its own models.
#[derive(Debug, Clone)]
pub struct Context {
    pub name: String,
    pub recordings: Vec<Recording>,
}

impl Context {
    /// Sorted union of the labels used in this context.
    pub fn classes(&self) -> Vec<String> {
        class_vocabulary(self.recordings.iter().map(|r| &r.events))
    }

    pub fn ids(&self) -> Vec<String> {
        self.recordings.iter().map(|r| r.id.clone()).collect()
    }
}

/// Features for `combination` plus the reference roll on the same frames.
pub fn prepare_recording(
    rec: &Recording,
    combination: &Combination,
    features: &FeatureConfig,
    classes: &[String],
) -> Result<LabeledFeatures> {
    let matrix = assemble_features(&rec.clip, combination, features)?;
    let timing = features.grid.timing(rec.clip.sample_rate());
    let roll = rasterize(&rec.events, matrix.frames(), classes, &timing)?;
    Ok(LabeledFeatures {
        id: rec.id.clone(),
        features: matrix,
        roll,
    })
}

/// Seed for one fold, derived from the root seed so every fold differs but
/// all of them are fixed by it.
pub fn fold_seed(root: u64, fold_index: usize) -> u64 {
    root.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold_index as u64)
}

pub fn evaluate_model(
    model: &Model,
    recordings: &[&LabeledFeatures],
    threshold: f64,
    segment_frames: usize,
) -> Result<SegmentCounts> {
    let mut total = SegmentCounts::default();
    for r in recordings {
        if r.features.layout() != &model.layout {
            return Err(Error::SizeMismatch(format!(
                "recording {} has a different feature layout than the model",
                r.id
            )));
        }
        let sys = model.detect(&r.features, threshold)?;
        total.add(&score(&r.roll, &sys, segment_frames)?);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub split: FoldSplit,
    pub model: Model,
    pub log: TrainingLog,
    pub counts: SegmentCounts,
}

fn pick<'a>(data: &'a [LabeledFeatures], ids: &[String]) -> Result<Vec<&'a LabeledFeatures>> {
    ids.iter()
        .map(|id| {
            data.iter()
                .find(|r| &r.id == id)
                .ok_or_else(|| Error::InvalidParameter(format!("fold refers to unknown recording {id}")))
        })
        .collect()
}

/// Trains one model per fold and scores it on that fold's test recordings.
/// `progress` sees `(fold_index, record)` after every epoch.
pub fn cross_validate(
    data: &[LabeledFeatures],
    folds: &[FoldSplit],
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &EpochRecord),
) -> Result<Vec<FoldOutcome>> {
    let mut out = Vec::new();
    for split in folds {
        let train: Vec<LabeledFeatures> = pick(data, &split.train)?.into_iter().cloned().collect();
        let val: Vec<LabeledFeatures> = pick(data, &split.validation)?.into_iter().cloned().collect();
        let test = pick(data, &split.test)?;
        let cfg = TrainConfig {
            seed: fold_seed(config.seed, split.fold_index),
            ..config.clone()
        };
        let mut trainer = Trainer::new(&train, &val, cfg)?;
        trainer.run(|r| progress(split.fold_index, r))?;
        let model = trainer.best_model();
        let counts = evaluate_model(&model, &test, config.threshold, config.segment_frames)?;
        out.push(FoldOutcome {
            split: split.clone(),
            model,
            log: trainer.log().clone(),
            counts,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    pub fold_count: usize,
    pub validation_fraction: f64,
    pub aggregation: Aggregation,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            fold_count: 4,
            validation_fraction: 0.2,
            aggregation: Aggregation::Micro,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ContextResult {
    pub context: String,
    pub report: MetricReport,
    pub folds: Vec<FoldOutcome>,
}

/// Full protocol for one context and one feature combination.
pub fn run_context(
    context: &Context,
    combination: &Combination,
    features: &FeatureConfig,
    train: &TrainConfig,
    protocol: &ProtocolConfig,
    progress: impl FnMut(usize, &EpochRecord),
) -> Result<ContextResult> {
    let classes = context.classes();
    let data = context
        .recordings
        .iter()
        .map(|r| prepare_recording(r, combination, features, &classes))
        .collect::<Result<Vec<_>>>()?;
    let folds = make_folds(&context.ids(), protocol.fold_count, protocol.validation_fraction, train.seed)?;
    let outcomes = cross_validate(&data, &folds, train, progress)?;
    let counts: Vec<SegmentCounts> = outcomes.iter().map(|o| o.counts).collect();
    Ok(ContextResult {
        context: context.name.clone(),
        report: combine_folds(&counts, protocol.aggregation)?,
        folds: outcomes,
    })
}

/// One row per combination over every context. A failing row is reported in
/// the second list and the remaining rows still run.
pub fn ablate(
    contexts: &[Context],
    combinations: &[Combination],
    features: &FeatureConfig,
    train: &TrainConfig,
    protocol: &ProtocolConfig,
    mut progress: impl FnMut(&Combination, &str, usize, &EpochRecord),
) -> Result<(ResultTable, Vec<(Combination, Error)>)> {
    let mut table = ResultTable::new(contexts.iter().map(|c| c.name.clone()).collect());
    let mut failures = Vec::new();
    for comb in combinations {
        let row: Result<Vec<MetricReport>> = contexts
            .iter()
            .map(|ctx| {
                run_context(ctx, comb, features, train, protocol, |f, r| progress(comb, &ctx.name, f, r))
                    .map(|r| r.report)
            })
            .collect();
        match row {
            Ok(reports) => table.push(comb.to_string(), reports)?,
            Err(e) => failures.push((comb.clone(), e)),
        }
    }
    Ok((table, failures))
}

/// `count` random scenes built from `templates`, named `scene_00`, `scene_01`, ...
pub fn synthetic_context(
    name: &str,
    templates: &[EventTemplate],
    count: usize,
    scene: &SceneConfig,
    timeline: &Timeline,
    seed: u64,
) -> Result<Context> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let recordings = (0..count)
        .map(|i| {
            let plan = random_scene_plan(templates, scene.duration_secs, timeline, &mut rng);
            let s = synthesize_scene(&plan, scene, &mut rng)?;
            Ok(Recording {
                id: format!("scene_{i:02}"),
                clip: s.clip,
                events: s.truth,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Context {
        name: name.to_string(),
        recordings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SourceKind;
    use crate::metrics::DEFAULT_SEGMENT_FRAMES;
    use crate::model::{NetworkParams, Scaler};

    fn templates() -> Vec<EventTemplate> {
        vec![
            EventTemplate { class: "hum".into(), bands: 0..=1, delay: 0, kind: SourceKind::Harmonic { f0: 220.0 } },
            EventTemplate { class: "hiss".into(), bands: 3..=4, delay: 6, kind: SourceKind::Noise },
        ]
    }

    fn tiny_context() -> Context {
        let scene = SceneConfig { duration_secs: 8.0, ..Default::default() };
        synthetic_context("lab", &templates(), 4, &scene, &Timeline::default(), 3).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig { hidden_layers: vec![4], max_epochs: 2, batch_size: 8, threads: 1, ..TrainConfig::default() }
    }

    #[test]
    fn prepared_roll_matches_features() {
        let ctx = tiny_context();
        let comb: Combination = "mel_2;tdoa".parse().unwrap();
        let r = prepare_recording(&ctx.recordings[0], &comb, &FeatureConfig::default(), &ctx.classes()).unwrap();
        assert_eq!(r.features.width(), 85);
        assert_eq!(r.features.frames(), r.roll.frames());
        assert_eq!(r.roll.classes(), &["hiss".to_string(), "hum".to_string()]);
        assert!(r.roll.active_cells() > 0);
    }

    #[test]
    fn zero_network_scores_error_rate_one() {
        let ctx = tiny_context();
        let comb: Combination = "mel_1".parse().unwrap();
        let data: Vec<_> = ctx
            .recordings
            .iter()
            .map(|r| prepare_recording(r, &comb, &FeatureConfig::default(), &ctx.classes()).unwrap())
            .collect();
        let model = Model {
            params: NetworkParams::zeros(&[40, 4, 2]).unwrap(),
            scaler: Scaler::fit(&[&data[0].features]).unwrap(),
            classes: ctx.classes(),
            layout: data[0].features.layout().clone(),
            sequence_length: 25,
        };
        let refs: Vec<&LabeledFeatures> = data.iter().collect();
        let c = evaluate_model(&model, &refs, 0.5, DEFAULT_SEGMENT_FRAMES).unwrap();
        assert!(c.n > 0);
        assert_eq!(c.error_rate(), 1.0);
    }

    #[test]
    fn oracle_model_scores_zero() {
        // a "model" whose only input is the reference itself
        let ctx = tiny_context();
        let comb: Combination = "mel_1".parse().unwrap();
        let r = prepare_recording(&ctx.recordings[0], &comb, &FeatureConfig::default(), &ctx.classes()).unwrap();
        let c = score(&r.roll, &r.roll, DEFAULT_SEGMENT_FRAMES).unwrap();
        assert_eq!(c.error_rate(), 0.0);
    }

    #[test]
    fn ablation_rows_and_failures() {
        let ctx = tiny_context();
        let protocol = ProtocolConfig { fold_count: 2, ..Default::default() };
        let combos: Vec<Combination> = ["mel_1", "tdoa"].iter().map(|s| s.parse().unwrap()).collect();
        let mono = Context {
            name: "mono".into(),
            recordings: ctx
                .recordings
                .iter()
                .map(|r| Recording { clip: r.clip.select_channel(0), ..r.clone() })
                .collect(),
        };
        let (table, failures) =
            ablate(&[ctx.clone(), mono], &combos, &FeatureConfig::default(), &quick(), &protocol, |_, _, _, _| {})
                .unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0].label, "mel_1");
        assert_eq!(failures.len(), 1);
        assert!(matches!(failures[0].1, Error::RequiresStereo(_)));
    }

    #[test]
    fn single_combination_ablation_equals_context_run() {
        let ctx = tiny_context();
        let protocol = ProtocolConfig { fold_count: 2, ..Default::default() };
        let comb: Combination = "mel_1".parse().unwrap();
        let direct = run_context(&ctx, &comb, &FeatureConfig::default(), &quick(), &protocol, |_, _| {}).unwrap();
        let (table, _) =
            ablate(&[ctx], &[comb], &FeatureConfig::default(), &quick(), &protocol, |_, _, _, _| {}).unwrap();
        assert_eq!(table.rows[0].reports[0], direct.report);
        assert_eq!(direct.folds.len(), 2);
        assert_eq!(direct.folds.iter().map(|f| f.split.test.len()).sum::<usize>(), 4);
    }
}
