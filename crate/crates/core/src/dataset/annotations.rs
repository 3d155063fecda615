//! Event annotations and their frame-level rasterization.

use std::collections::BTreeSet;
use std::path::Path;

use crate::audio::FrameTiming;
use crate::binio::{write_atomic, ByteReader, ByteWriter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub onset: f64,
    pub offset: f64,
    pub label: String,
}

/// Annotated events of one recording. Events may overlap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventList {
    pub events: Vec<Event>,
    pub source: String,
    pub context: String,
}

impl EventList {
    pub fn new(events: Vec<Event>) -> Self {
        Self {
            events,
            ..Default::default()
        }
    }

    /// Sorted, de-duplicated labels.
    pub fn labels(&self) -> BTreeSet<String> {
        self.events.iter().map(|e| e.label.clone()).collect()
    }

    pub fn to_annotation_text(&self) -> String {
        self.events
            .iter()
            .map(|e| format!("{:.6}\t{:.6}\t{}\n", e.onset, e.offset, e.label))
            .collect()
    }
}

fn parse_field(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses annotation text: one event per line as onset, offset and label.
/// Tab-separated lines may carry leading columns (file, scene) and trailing
/// ones, which are ignored; whitespace-separated lines take the rest of the
/// line as the label.
pub fn parse_annotation_text(text: &str, origin: &str) -> Result<EventList> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Annotation {
            path: origin.to_string(),
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').map(str::trim).collect()
        } else {
            line.split_whitespace().collect()
        };
        let start = (0..fields.len().saturating_sub(1))
            .find(|&j| parse_field(fields[j]).is_some() && parse_field(fields[j + 1]).is_some())
            .ok_or_else(|| err(format!("expected `onset offset label`, got `{line}`")))?;
        let onset = parse_field(fields[start]).unwrap();
        let offset = parse_field(fields[start + 1]).unwrap();
        let label = if line.contains('\t') {
            fields.get(start + 2).map(|s| s.to_string()).unwrap_or_default()
        } else {
            fields[start + 2..].join(" ")
        };
        if label.is_empty() {
            return Err(err("missing event label".into()));
        }
        if onset < 0.0 {
            return Err(err(format!("negative onset {onset}")));
        }
        if onset >= offset {
            return Err(err(format!("onset {onset} is not before offset {offset}")));
        }
        events.push(Event {
            onset,
            offset,
            label,
        });
    }
    Ok(EventList {
        events,
        source: String::new(),
        context: String::new(),
    })
}

pub fn parse_annotations(path: impl AsRef<Path>) -> Result<EventList> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut list = parse_annotation_text(&text, &path.display().to_string())?;
    list.source = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(list)
}

/// Binary frames × classes activity matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRoll {
    activity: Vec<u8>,
    frames: usize,
    classes: Vec<String>,
}

impl EventRoll {
    pub fn zeros(frames: usize, classes: Vec<String>) -> Self {
        Self {
            activity: vec![0; frames * classes.len()],
            frames,
            classes,
        }
    }

    pub fn from_activity(activity: Vec<u8>, frames: usize, classes: Vec<String>) -> Result<Self> {
        if activity.len() != frames * classes.len() {
            return Err(Error::SizeMismatch(format!(
                "{} cells for {frames} frames × {} classes",
                activity.len(),
                classes.len()
            )));
        }
        if activity.iter().any(|&v| v > 1) {
            return Err(Error::InvalidParameter("roll entries must be 0 or 1".into()));
        }
        Ok(Self {
            activity,
            frames,
            classes,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn get(&self, t: usize, c: usize) -> bool {
        self.activity[t * self.classes.len() + c] != 0
    }

    pub fn set(&mut self, t: usize, c: usize, active: bool) {
        let n = self.classes.len();
        self.activity[t * n + c] = active as u8;
    }

    pub fn row(&self, t: usize) -> &[u8] {
        let n = self.classes.len();
        &self.activity[t * n..(t + 1) * n]
    }

    pub fn activity(&self) -> &[u8] {
        &self.activity
    }

    pub fn truncated(&self, frames: usize) -> EventRoll {
        let frames = frames.min(self.frames);
        EventRoll {
            activity: self.activity[..frames * self.classes.len()].to_vec(),
            frames,
            classes: self.classes.clone(),
        }
    }

    pub fn active_cells(&self) -> usize {
        self.activity.iter().filter(|&&v| v != 0).count()
    }
}

/// Marks frame `t` active for class `c` when the frame center lies in
/// `[onset, offset)` of an event labelled `c`.
pub fn rasterize(
    events: &EventList,
    frames: usize,
    class_order: &[String],
    timing: &FrameTiming,
) -> Result<EventRoll> {
    let mut roll = EventRoll::zeros(frames, class_order.to_vec());
    for e in &events.events {
        let c = class_order
            .iter()
            .position(|l| *l == e.label)
            .ok_or_else(|| Error::UnknownLabel(e.label.clone()))?;
        let first = ((e.onset - timing.center_offset_secs) / timing.hop_secs)
            .floor()
            .max(0.0) as usize;
        for t in first..frames {
            let center = timing.center(t);
            if center >= e.offset {
                break;
            }
            if center >= e.onset {
                roll.set(t, c, true);
            }
        }
    }
    Ok(roll)
}

/// Converts runs of active frames back to events. A run covering frames
/// `a..b` becomes `[center(a), center(b))`.
pub fn roll_to_events(roll: &EventRoll, timing: &FrameTiming) -> EventList {
    let mut events = Vec::new();
    for (c, label) in roll.classes().iter().enumerate() {
        let mut start = None;
        for t in 0..=roll.frames() {
            let active = t < roll.frames() && roll.get(t, c);
            match (active, start) {
                (true, None) => start = Some(t),
                (false, Some(a)) => {
                    events.push(Event {
                        onset: timing.center(a),
                        offset: timing.center(t),
                        label: label.clone(),
                    });
                    start = None;
                }
                _ => {}
            }
        }
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.label.cmp(&b.label)));
    EventList::new(events)
}

pub const ROLL_MAGIC: &[u8; 8] = b"SEDROLL\0";
pub const ROLL_VERSION: u32 = 1;

/// Binary roll container: magic, version, frames, class count, class names,
/// then one byte per cell, row-major.
pub fn encode_roll(roll: &EventRoll) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(ROLL_MAGIC);
    w.u32(ROLL_VERSION);
    w.u32(roll.frames as u32);
    w.u32(roll.classes.len() as u32);
    for c in &roll.classes {
        w.str(c);
    }
    w.bytes(&roll.activity);
    w.finish()
}

pub fn decode_roll(bytes: &[u8]) -> Result<EventRoll> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(ROLL_MAGIC)?;
    r.expect_version(ROLL_VERSION)?;
    let frames = r.u32()? as usize;
    let class_count = r.u32()? as usize;
    let classes = (0..class_count)
        .map(|_| r.str())
        .collect::<Result<Vec<_>>>()?;
    let activity = r.take(frames * class_count)?.to_vec();
    r.finish()?;
    EventRoll::from_activity(activity, frames, classes)
}

pub fn write_roll(roll: &EventRoll, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_roll(roll))
}

pub fn read_roll(path: impl AsRef<Path>) -> Result<EventRoll> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_roll(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::FrameGrid;
    use proptest::prelude::*;

    fn timing() -> FrameTiming {
        FrameGrid::default().timing(16000)
    }

    fn classes(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn parses_tab_line() {
        let list = parse_annotation_text("12.38\t15.10\tdog barking\n", "x").unwrap();
        assert_eq!(
            list.events,
            vec![Event {
                onset: 12.38,
                offset: 15.10,
                label: "dog barking".into()
            }]
        );
    }

    #[test]
    fn tolerates_leading_columns() {
        let text = "audio/home/a001.wav\thome\t1.5\t2.0\tobject banging\tm\n\
                    0.5 0.75 people walking\n";
        let list = parse_annotation_text(text, "x").unwrap();
        assert_eq!(list.events[0].label, "object banging");
        assert_eq!(list.events[0].onset, 1.5);
        assert_eq!(list.events[1].label, "people walking");
    }

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_annotation_text("", "x").unwrap().events.is_empty());
        assert!(parse_annotation_text("\n\n", "x").unwrap().events.is_empty());
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse_annotation_text("1.0\t2.0\ta\n5.0\t4.0\tb\n", "ann.txt").unwrap_err();
        match err {
            Error::Annotation { line, path, .. } => {
                assert_eq!(line, 2);
                assert_eq!(path, "ann.txt");
            }
            other => panic!("{other}"),
        }
        assert!(matches!(
            parse_annotation_text("garbage line\n", "x"),
            Err(Error::Annotation { line: 1, .. })
        ));
        assert!(parse_annotation_text("1.0\t2.0\n", "x").is_err());
    }

    #[test]
    fn whole_clip_event_is_all_ones() {
        let events = EventList::new(vec![Event {
            onset: 0.0,
            offset: 10.0,
            label: "a".into(),
        }]);
        let roll = rasterize(&events, 100, &classes(&["a", "b"]), &timing()).unwrap();
        assert!((0..100).all(|t| roll.get(t, 0) && !roll.get(t, 1)));
    }

    #[test]
    fn overlap_has_two_active_classes() {
        let events = EventList::new(vec![
            Event { onset: 0.1, offset: 0.5, label: "speech".into() },
            Event { onset: 0.3, offset: 0.9, label: "car".into() },
        ]);
        let t = timing();
        let roll = rasterize(&events, 60, &classes(&["car", "speech"]), &t).unwrap();
        for f in 0..60 {
            let c = t.center(f);
            assert_eq!(roll.get(f, 1), (0.1..0.5).contains(&c));
            assert_eq!(roll.get(f, 0), (0.3..0.9).contains(&c));
        }
        assert!((0..60).any(|f| roll.row(f).iter().sum::<u8>() == 2));
    }

    #[test]
    fn empty_list_gives_zero_roll() {
        let roll = rasterize(&EventList::default(), 30, &classes(&["a"]), &timing()).unwrap();
        assert_eq!(roll.active_cells(), 0);
        assert!(roll_to_events(&roll, &timing()).events.is_empty());
    }

    #[test]
    fn unknown_label_rejected() {
        let events = EventList::new(vec![Event { onset: 0.0, offset: 1.0, label: "x".into() }]);
        assert!(matches!(
            rasterize(&events, 10, &classes(&["a"]), &timing()),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn roll_container_round_trip() {
        let events = EventList::new(vec![Event { onset: 0.2, offset: 0.6, label: "b".into() }]);
        let roll = rasterize(&events, 40, &classes(&["a", "b"]), &timing()).unwrap();
        assert_eq!(decode_roll(&encode_roll(&roll)).unwrap(), roll);
        assert!(decode_roll(&encode_roll(&roll)[..20]).is_err());
    }

    fn disjoint_intervals() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.05f64..2.0, 0.1f64..3.0), 0..6).prop_map(|parts| {
            let mut t = 0.0;
            parts
                .into_iter()
                .map(|(gap, len)| {
                    let onset = t + gap;
                    t = onset + len;
                    (onset, t)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn rasterize_and_back_recovers_boundaries(intervals in disjoint_intervals()) {
            let t = timing();
            let text: String = intervals.iter().map(|(a, b)| format!("{a}\t{b}\tx\n")).collect();
            let events = parse_annotation_text(&text, "p").unwrap();
            let frames = 1600;
            let roll = rasterize(&events, frames, &classes(&["x"]), &t).unwrap();
            let back = roll_to_events(&roll, &t);
            prop_assert_eq!(back.events.len(), intervals.len());
            for (e, (a, b)) in back.events.iter().zip(&intervals) {
                prop_assert!((e.onset - a).abs() <= t.hop_secs + 1e-9);
                prop_assert!((e.offset - b).abs() <= t.hop_secs + 1e-9);
            }
        }
    }
}
