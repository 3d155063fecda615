//! Segment-based error rate and F-score.
//!
//! Rolls are cut into fixed segments (one second by default) starting at the
//! first frame; a class is active in a segment when any of its frames is.
//! Counts are summed before ratios are taken, across segments and folds.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::EventRoll;
use crate::error::{Error, Result};

/// One second at a 20 ms hop.
pub const DEFAULT_SEGMENT_FRAMES: usize = 50;

/// Per-class activity of each segment; the trailing partial segment counts.
pub fn segmentize(roll: &EventRoll, frames_per_segment: usize) -> Result<EventRoll> {
    if frames_per_segment == 0 {
        return Err(Error::InvalidParameter("segments need at least one frame".into()));
    }
    let segments = roll.frames().div_ceil(frames_per_segment);
    let mut out = EventRoll::zeros(segments, roll.classes().to_vec());
    for t in 0..roll.frames() {
        for (c, &a) in roll.row(t).iter().enumerate() {
            if a != 0 {
                out.set(t / frames_per_segment, c, true);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub segments: u64,
    /// Active reference segment-classes.
    pub n: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub s: u64,
    pub d: u64,
    pub i: u64,
}

impl SegmentCounts {
    /// Counts for one segment given per-class reference and system activity.
    pub fn segment(reference: &[u8], system: &[u8]) -> Self {
        let mut c = SegmentCounts {
            segments: 1,
            ..Default::default()
        };
        for (&r, &s) in reference.iter().zip(system) {
            match (r != 0, s != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, true) => c.fp += 1,
                (false, false) => {}
            }
        }
        c.n = c.tp + c.fn_;
        c.s = c.fn_.min(c.fp);
        c.d = c.fn_.saturating_sub(c.fp);
        c.i = c.fp.saturating_sub(c.fn_);
        c
    }

    pub fn add(&mut self, other: &SegmentCounts) {
        self.segments += other.segments;
        self.n += other.n;
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.s += other.s;
        self.d += other.d;
        self.i += other.i;
    }

    pub fn error_rate(&self) -> f64 {
        if self.n == 0 {
            if self.s + self.d + self.i == 0 {
                0.0
            } else {
                // insertions with nothing to detect; the ratio is unbounded
                f64::INFINITY
            }
        } else {
            (self.s + self.d + self.i) as f64 / self.n as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// Percentage in `[0, 100]`.
    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            100.0 * 2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Compares two rolls of the same shape segment by segment.
pub fn score(reference: &EventRoll, system: &EventRoll, frames_per_segment: usize) -> Result<SegmentCounts> {
    if reference.classes() != system.classes() {
        return Err(Error::SizeMismatch(format!(
            "reference classes {:?} differ from system classes {:?}",
            reference.classes(),
            system.classes()
        )));
    }
    if reference.frames() != system.frames() {
        return Err(Error::SizeMismatch(format!(
            "reference has {} frames, system has {}",
            reference.frames(),
            system.frames()
        )));
    }
    let r = segmentize(reference, frames_per_segment)?;
    let s = segmentize(system, frames_per_segment)?;
    let mut total = SegmentCounts::default();
    for k in 0..r.frames() {
        total.add(&SegmentCounts::segment(r.row(k), s.row(k)));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Sum counts across folds, then compute.
    #[default]
    Micro,
    /// Average the per-fold scores.
    Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub error_rate: f64,
    pub f_score: f64,
    pub counts: SegmentCounts,
}

impl MetricReport {
    pub fn from_counts(counts: SegmentCounts) -> Self {
        Self {
            error_rate: counts.error_rate(),
            f_score: counts.f_score(),
            counts,
        }
    }
}

pub fn combine_folds(folds: &[SegmentCounts], aggregation: Aggregation) -> Result<MetricReport> {
    if folds.is_empty() {
        return Err(Error::InvalidParameter("no folds to combine".into()));
    }
    let mut total = SegmentCounts::default();
    for f in folds {
        total.add(f);
    }
    Ok(match aggregation {
        Aggregation::Micro => MetricReport::from_counts(total),
        Aggregation::Macro => {
            let k = folds.len() as f64;
            MetricReport {
                error_rate: folds.iter().map(|f| f.error_rate()).sum::<f64>() / k,
                f_score: folds.iter().map(|f| f.f_score()).sum::<f64>() / k,
                counts: total,
            }
        }
    })
}

/// Rows of feature combinations against columns of contexts, with the mean
/// of the per-context scores in a final column.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub contexts: Vec<String>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub label: String,
    /// One report per context, in `contexts` order.
    pub reports: Vec<MetricReport>,
}

impl ResultRow {
    pub fn average(&self) -> (f64, f64) {
        let k = self.reports.len().max(1) as f64;
        (
            self.reports.iter().map(|r| r.error_rate).sum::<f64>() / k,
            self.reports.iter().map(|r| r.f_score).sum::<f64>() / k,
        )
    }
}

impl ResultTable {
    pub fn new(contexts: Vec<String>) -> Self {
        Self {
            contexts,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: impl Into<String>, reports: Vec<MetricReport>) -> Result<()> {
        if reports.len() != self.contexts.len() {
            return Err(Error::SizeMismatch(format!(
                "{} reports for {} contexts",
                reports.len(),
                self.contexts.len()
            )));
        }
        self.rows.push(ResultRow {
            label: label.into(),
            reports,
        });
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("features");
        for c in self.contexts.iter().map(String::as_str).chain(["average"]) {
            let _ = write!(s, ",{c}_er,{c}_f");
        }
        s.push('\n');
        for row in &self.rows {
            s.push_str(&csv_field(&row.label));
            for r in &row.reports {
                let _ = write!(s, ",{:.4},{:.1}", r.error_rate, r.f_score);
            }
            let (er, f) = row.average();
            let _ = writeln!(s, ",{er:.4},{f:.1}");
        }
        s
    }

    pub fn to_text(&self) -> String {
        let label_w = self.rows.iter().map(|r| r.label.len()).chain([8]).max().unwrap();
        let headers: Vec<&str> = self.contexts.iter().map(String::as_str).chain(["Average"]).collect();
        let col_w = headers.iter().map(|h| h.len()).chain([12]).max().unwrap();
        let mut s = format!("{:label_w$}", "");
        for h in &headers {
            let _ = write!(s, " | {h:^col_w$}");
        }
        s.push('\n');
        let _ = write!(s, "{:label_w$}", "Features");
        for _ in &headers {
            let _ = write!(s, " | {:>5} {:>6}", "ER", "F");
            s.push_str(&" ".repeat(col_w - 12));
        }
        s.push('\n');
        s.push_str(&"-".repeat(label_w + headers.len() * (col_w + 3)));
        s.push('\n');
        for row in &self.rows {
            let _ = write!(s, "{:label_w$}", row.label);
            let avg = row.average();
            for (er, f) in row.reports.iter().map(|r| (r.error_rate, r.f_score)).chain([avg]) {
                let _ = write!(s, " | {er:>5.2} {f:>6.1}");
                s.push_str(&" ".repeat(col_w - 12));
            }
            s.push('\n');
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn roll(frames: usize, n: usize, active: &[(usize, usize)]) -> EventRoll {
        let mut r = EventRoll::zeros(frames, classes(n));
        for &(t, c) in active {
            r.set(t, c, true);
        }
        r
    }

    #[test]
    fn segment_lengths() {
        assert_eq!(segmentize(&roll(100, 1, &[]), 50).unwrap().frames(), 2);
        assert_eq!(segmentize(&roll(101, 1, &[]), 50).unwrap().frames(), 3);
        let s = segmentize(&roll(120, 2, &[(73, 1)]), 50).unwrap();
        assert_eq!(s.active_cells(), 1);
        assert!(s.get(1, 1));
        assert_eq!(segmentize(&roll(120, 2, &[]), 50).unwrap().active_cells(), 0);
    }

    #[test]
    fn silent_system() {
        let r = roll(150, 2, &[(0, 0), (60, 0), (60, 1), (149, 1)]);
        let c = score(&r, &roll(150, 2, &[]), 50).unwrap();
        assert_eq!(c.n, 4);
        assert_eq!(c.d, 4);
        assert_eq!(c.error_rate(), 1.0);
        assert_eq!(c.f_score(), 0.0);
    }

    #[test]
    fn substitution_example() {
        let c = SegmentCounts::segment(&[1, 1, 0], &[0, 1, 1]);
        assert_eq!((c.tp, c.fp, c.fn_, c.s, c.d, c.i, c.n), (1, 1, 1, 1, 0, 0, 2));
        assert_eq!(c.error_rate(), 0.5);
    }

    #[test]
    fn identical_rolls_are_perfect() {
        let r = roll(100, 3, &[(3, 0), (77, 2)]);
        let c = score(&r, &r, 50).unwrap();
        assert_eq!(c.error_rate(), 0.0);
        assert_eq!(c.f_score(), 100.0);
    }

    #[test]
    fn empty_everything() {
        let c = score(&roll(10, 2, &[]), &roll(10, 2, &[]), 50).unwrap();
        assert_eq!(c.error_rate(), 0.0);
        assert_eq!(c.f_score(), 0.0);
    }

    #[test]
    fn micro_versus_macro() {
        let a = SegmentCounts { n: 4, s: 1, d: 1, ..Default::default() };
        let b = SegmentCounts { n: 1, i: 1, tp: 1, ..Default::default() };
        let micro = combine_folds(&[a, b], Aggregation::Micro).unwrap();
        assert!((micro.error_rate - 0.6).abs() < 1e-15);
        let macro_ = combine_folds(&[a, b], Aggregation::Macro).unwrap();
        assert!((macro_.error_rate - 0.75).abs() < 1e-15);
        assert!(combine_folds(&[], Aggregation::Micro).is_err());
    }

    #[test]
    fn single_and_repeated_folds() {
        let a = SegmentCounts::segment(&[1, 1, 0, 1], &[0, 1, 1, 1]);
        let one = combine_folds(&[a], Aggregation::Micro).unwrap();
        assert_eq!(one, MetricReport::from_counts(a));
        let two = combine_folds(&[a, a], Aggregation::Micro).unwrap();
        assert_eq!(two.error_rate, one.error_rate);
        assert_eq!(two.f_score, one.f_score);
    }

    #[test]
    fn mismatched_rolls() {
        assert!(score(&roll(10, 2, &[]), &roll(11, 2, &[]), 50).is_err());
        assert!(score(&roll(10, 2, &[]), &roll(10, 3, &[]), 50).is_err());
    }

    #[test]
    fn table_layout() {
        let mut t = ResultTable::new(vec!["home".into(), "street".into()]);
        let r = |er, f| MetricReport { error_rate: er, f_score: f, counts: SegmentCounts::default() };
        t.push("mel_1", vec![r(0.8, 40.0), r(0.6, 60.0)]).unwrap();
        assert!(t.push("x", vec![r(0.1, 1.0)]).is_err());
        let csv = t.to_csv();
        assert_eq!(csv.lines().next().unwrap(), "features,home_er,home_f,street_er,street_f,average_er,average_f");
        assert_eq!(csv.lines().nth(1).unwrap(), "mel_1,0.8000,40.0,0.6000,60.0,0.7000,50.0");
        let text = t.to_text();
        assert!(text.contains("Average") && text.contains(" 0.70   50.0"));
        let widths: Vec<usize> = text.lines().filter(|l| !l.starts_with('-')).map(|l| l.len()).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]), "{text}");
    }

    fn arb_pair() -> impl Strategy<Value = (EventRoll, EventRoll)> {
        (1usize..200, 1usize..5).prop_flat_map(|(frames, n)| {
            (
                proptest::collection::vec(0u8..2, frames * n),
                proptest::collection::vec(0u8..2, frames * n),
            )
                .prop_map(move |(a, b)| {
                    (
                        EventRoll::from_activity(a, frames, classes(n)).unwrap(),
                        EventRoll::from_activity(b, frames, classes(n)).unwrap(),
                    )
                })
        })
    }

    proptest! {
        #[test]
        fn self_score_is_perfect((r, _) in arb_pair()) {
            let c = score(&r, &r, 50).unwrap();
            prop_assert_eq!(c.error_rate(), 0.0);
            prop_assert!(c.n == 0 || c.f_score() == 100.0);
        }

        #[test]
        fn class_permutation_is_irrelevant((r, s) in arb_pair()) {
            let n = r.class_count();
            let perm = |x: &EventRoll| {
                let mut out = EventRoll::zeros(x.frames(), classes(n));
                for t in 0..x.frames() {
                    for c in 0..n {
                        out.set(t, n - 1 - c, x.get(t, c));
                    }
                }
                out
            };
            prop_assert_eq!(score(&r, &s, 50).unwrap(), score(&perm(&r), &perm(&s), 50).unwrap());
        }

        #[test]
        fn flipping_a_correct_cell_never_helps((r, s) in arb_pair(), pick in any::<proptest::sample::Index>()) {
            let rs = segmentize(&r, 50).unwrap();
            let ss = segmentize(&s, 50).unwrap();
            let agree: Vec<(usize, usize)> = (0..rs.frames())
                .flat_map(|k| (0..rs.class_count()).map(move |c| (k, c)))
                .filter(|&(k, c)| rs.get(k, c) == ss.get(k, c))
                .collect();
            prop_assume!(!agree.is_empty() && rs.active_cells() > 0);
            let (k, c) = agree[pick.index(agree.len())];
            let mut worse = ss.clone();
            worse.set(k, c, !ss.get(k, c));
            let before = score(&rs, &ss, 1).unwrap().error_rate();
            let after = score(&rs, &worse, 1).unwrap().error_rate();
            prop_assert!(after >= before);
        }
    }
}
