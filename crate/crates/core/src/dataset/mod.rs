//! Annotated recordings, cross-validation folds and synthetic scenes.

pub mod annotations;
pub mod folds;
pub mod synth;

use std::collections::BTreeSet;

pub use annotations::{
    decode_roll, encode_roll, parse_annotation_text, parse_annotations, rasterize, read_roll,
    roll_to_events, write_roll, Event, EventList, EventRoll,
};
pub use folds::{make_folds, FoldSplit};
pub use synth::{
    band_frequency_range, format_scene_plan, parse_scene_plan, random_scene_plan,
    synthesize_scene, EventTemplate, PlannedEvent, SceneConfig, ScenePlan, SourceKind,
    SyntheticScene, Timeline,
};

/// Sorted union of the labels in `lists`.
pub fn class_vocabulary<'a>(lists: impl IntoIterator<Item = &'a EventList>) -> Vec<String> {
    lists
        .into_iter()
        .flat_map(|l| l.events.iter().map(|e| e.label.clone()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}
