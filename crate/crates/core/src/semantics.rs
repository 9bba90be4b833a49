//! Landmark-level semantic labels and the category → orientation prior.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::OrientationTarget;
use crate::geometry::BoundingBox2D;

/// Width/height standard deviation (pixels) at or above which a track is rejected.
pub const DEFAULT_VARIANCE_THRESHOLD_PX: f64 = 50.0;

const DEFAULT_TABLE: &str = include_str!("../data/categories.tsv");

#[derive(Debug, Error)]
pub enum SemanticsError {
    #[error("track {0} has no detections")]
    EmptyTrack(u64),
    #[error("track {track}: score vector has {got} entries, vocabulary has {expected}")]
    ScoreLength { track: u64, expected: usize, got: usize },
    #[error("category table line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("reading category table: {0}")]
    Io(#[from] std::io::Error),
}

/// Case-insensitive mapping from category label to orientation target.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CategoryTable {
    entries: BTreeMap<String, OrientationTarget>,
}

fn normalize_label(label: &str) -> String {
    label.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl CategoryTable {
    /// Parses `label<TAB>horizontal|vertical|unassigned` lines. Blank lines
    /// and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, SemanticsError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (label, kind) = line.split_once('\t').ok_or_else(|| SemanticsError::Parse {
                line: idx + 1,
                reason: "expected a tab separating label and orientation".into(),
            })?;
            let target = kind
                .parse::<OrientationTarget>()
                .map_err(|reason| SemanticsError::Parse { line: idx + 1, reason })?;
            let label = normalize_label(label);
            if label.is_empty() {
                return Err(SemanticsError::Parse { line: idx + 1, reason: "empty label".into() });
            }
            entries.insert(label, target);
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SemanticsError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The shipped table of object classes used for the desk sequences.
    pub fn default_table() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled category table parses")
    }

    pub fn lookup(&self, label: &str) -> OrientationTarget {
        self.entries
            .get(&normalize_label(label))
            .copied()
            .unwrap_or(OrientationTarget::Unassigned)
    }

    pub fn labels(&self) -> impl Iterator<Item = (&str, OrientationTarget)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub pose_index: usize,
    #[serde(rename = "box", with = "box_array")]
    pub bbox: BoundingBox2D<f64>,
    pub scores: Vec<f64>,
}

/// All detections associated with one physical object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTrack {
    pub id: u64,
    /// Category labels indexing every detection's score vector.
    pub vocabulary: Vec<String>,
    pub detections: Vec<Detection>,
}

mod box_array {
    use super::BoundingBox2D;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(b: &BoundingBox2D<f64>, s: S) -> Result<S::Ok, S::Error> {
        b.to_array().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BoundingBox2D<f64>, D::Error> {
        let a = <[f64; 4]>::deserialize(d)?;
        Ok(BoundingBox2D::from_array(a))
    }
}

/// Mean score vector of a track and its most likely label. Ties go to the
/// lexicographically smallest label.
pub fn aggregate_label(track: &DetectionTrack) -> Result<(String, Vec<f64>), SemanticsError> {
    if track.detections.is_empty() {
        return Err(SemanticsError::EmptyTrack(track.id));
    }
    let n = track.vocabulary.len();
    let mut mean = vec![0.0; n];
    for det in &track.detections {
        if det.scores.len() != n {
            return Err(SemanticsError::ScoreLength { track: track.id, expected: n, got: det.scores.len() });
        }
        for (m, s) in mean.iter_mut().zip(&det.scores) {
            *m += s;
        }
    }
    let count = track.detections.len() as f64;
    for m in mean.iter_mut() {
        *m /= count;
    }
    let best = (0..n)
        .max_by(|&a, &b| {
            mean[a]
                .partial_cmp(&mean[b])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| track.vocabulary[b].cmp(&track.vocabulary[a]))
        })
        .map(|i| track.vocabulary[i].clone())
        .unwrap_or_default();
    Ok((best, mean))
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    (values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// True when the population standard deviation of box widths or heights
/// reaches `threshold_px`.
pub fn reject_high_variance(track: &DetectionTrack, threshold_px: f64) -> Result<bool, SemanticsError> {
    if track.detections.is_empty() {
        return Err(SemanticsError::EmptyTrack(track.id));
    }
    let widths = track.detections.iter().map(|d| d.bbox.width());
    let heights = track.detections.iter().map(|d| d.bbox.height());
    Ok(population_std(widths) >= threshold_px || population_std(heights) >= threshold_px)
}

pub fn orientation_target(label: &str, table: &CategoryTable) -> OrientationTarget {
    table.lookup(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn det(pose_index: usize, w: f64, h: f64, scores: &[f64]) -> Detection {
        Detection {
            pose_index,
            bbox: BoundingBox2D::new(10.0, 20.0, 10.0 + w, 20.0 + h),
            scores: scores.to_vec(),
        }
    }

    fn track(dets: Vec<Detection>) -> DetectionTrack {
        DetectionTrack { id: 7, vocabulary: vec!["bottle".into(), "cup".into()], detections: dets }
    }

    #[test]
    fn default_table_entries() {
        let t = CategoryTable::default_table();
        assert_eq!(t.len(), 22);
        assert_eq!(orientation_target("bottle", &t), OrientationTarget::Vertical);
        assert_eq!(orientation_target("book", &t), OrientationTarget::Horizontal);
        assert_eq!(orientation_target("sports ball", &t), OrientationTarget::Unassigned);
        assert_eq!(orientation_target("  Cell   Phone ", &t), OrientationTarget::Horizontal);
        assert_eq!(orientation_target("giraffe", &t), OrientationTarget::Unassigned);
    }

    #[test]
    fn table_parse_errors() {
        assert!(CategoryTable::parse("bottle vertical").is_err());
        assert!(CategoryTable::parse("bottle\tsideways").is_err());
        let t = CategoryTable::parse("# c\n\nBottle\tVERTICAL\r\n").unwrap();
        assert_eq!(t.lookup("bottle"), OrientationTarget::Vertical);
    }

    #[test]
    fn aggregate_examples() {
        let t = track(vec![det(0, 1.0, 1.0, &[0.9, 0.1]), det(1, 1.0, 1.0, &[0.8, 0.2])]);
        let (label, mean) = aggregate_label(&t).unwrap();
        assert_eq!(label, "bottle");
        assert!((mean[0] - 0.85).abs() < 1e-15);

        let single = track(vec![det(0, 1.0, 1.0, &[0.3, 0.7])]);
        assert_eq!(aggregate_label(&single).unwrap().0, "cup");

        let mut tie = track(vec![det(0, 1.0, 1.0, &[0.6, 0.4]), det(1, 1.0, 1.0, &[0.4, 0.6])]);
        tie.vocabulary = vec!["vase".into(), "cup".into()];
        assert_eq!(aggregate_label(&tie).unwrap().0, "cup");

        assert!(matches!(aggregate_label(&track(vec![])), Err(SemanticsError::EmptyTrack(7))));
        assert!(matches!(
            aggregate_label(&track(vec![det(0, 1.0, 1.0, &[1.0])])),
            Err(SemanticsError::ScoreLength { .. })
        ));
    }

    #[test]
    fn variance_rejection_boundary() {
        let constant = track(vec![det(0, 80.0, 60.0, &[1.0, 0.0]); 5]);
        assert!(!reject_high_variance(&constant, 50.0).unwrap());
        // widths {100, 200}: population σ = 50 exactly
        let wide = track(vec![det(0, 100.0, 60.0, &[1.0, 0.0]), det(1, 200.0, 60.0, &[1.0, 0.0])]);
        assert!(reject_high_variance(&wide, 50.0).unwrap());
        let below = track(vec![det(0, 100.0, 60.0, &[1.0, 0.0]), det(1, 199.8, 80.0, &[1.0, 0.0])]);
        assert!(!reject_high_variance(&below, 50.0).unwrap());
        let tall = track(vec![det(0, 50.0, 10.0, &[1.0, 0.0]), det(1, 50.0, 110.0, &[1.0, 0.0])]);
        assert!(reject_high_variance(&tall, 50.0).unwrap());
        assert!(reject_high_variance(&track(vec![]), 50.0).is_err());
    }

    proptest! {
        #[test]
        fn aggregate_is_permutation_invariant(scores in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..12), rot in 0usize..12) {
            let dets: Vec<_> = scores.iter().enumerate().map(|(i, (a, b))| det(i, 1.0, 1.0, &[*a, *b])).collect();
            let mut permuted = dets.clone();
            let k = rot % permuted.len();
            permuted.rotate_left(k);
            permuted.reverse();
            let (l1, m1) = aggregate_label(&track(dets)).unwrap();
            let (l2, m2) = aggregate_label(&track(permuted)).unwrap();
            prop_assert_eq!(l1, l2);
            for (a, b) in m1.iter().zip(&m2) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn variance_scales_with_coordinates(ws in proptest::collection::vec(1.0f64..300.0, 2..10), k in 0.1f64..10.0) {
            let base = track(ws.iter().enumerate().map(|(i, w)| det(i, *w, 10.0, &[1.0, 0.0])).collect());
            let scaled = track(ws.iter().enumerate().map(|(i, w)| det(i, w * k, 10.0 * k, &[1.0, 0.0])).collect());
            let s0 = population_std(base.detections.iter().map(|d| d.bbox.width()));
            let s1 = population_std(scaled.detections.iter().map(|d| d.bbox.width()));
            prop_assert!((s1 - k * s0).abs() <= 1e-9 * (1.0 + s1));
        }

        #[test]
        fn lookup_is_total(label in ".*") {
            let t = CategoryTable::default_table();
            let _ = orientation_target(&label, &t);
        }
    }
}
