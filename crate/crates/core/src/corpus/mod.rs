//! Dataset manifests, weak/strong label files and the label statistics
//! consumed by the per-class subspace assignment.

mod labels;

pub use labels::{
    format_strong_labels, format_weak_labels, parse_strong_labels, parse_weak_labels,
};

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::EventVocabulary;

/// Which training/evaluation role a clip plays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    /// Weakly annotated training clip (tags, no timestamps).
    Weak,
    /// Unlabeled training clip.
    Unlabeled,
    /// Strongly annotated synthetic clip; its labels are weakened for training.
    Synthetic,
    /// Strongly annotated held-out clip.
    Validation,
}

impl Subset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weak" => Some(Subset::Weak),
            "unlabeled" => Some(Subset::Unlabeled),
            "synthetic" => Some(Subset::Synthetic),
            "validation" => Some(Subset::Validation),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Subset::Weak => "weak",
            Subset::Unlabeled => "unlabeled",
            Subset::Synthetic => "synthetic",
            Subset::Validation => "validation",
        }
    }
}

/// One audio clip in a dataset manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipRecord {
    pub clip_id: String,
    pub audio_path: PathBuf,
    pub subset: Subset,
    pub duration_s: f64,
}

/// Clip-level tag set, no timestamps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeakLabel {
    pub clip_id: String,
    pub events: BTreeSet<String>,
}

impl WeakLabel {
    pub fn new(clip_id: impl Into<String>, events: impl IntoIterator<Item = impl Into<String>>) -> Self {
        WeakLabel {
            clip_id: clip_id.into(),
            events: events.into_iter().map(Into::into).collect(),
        }
    }

    /// Binary class-presence vector in vocabulary order.
    pub fn to_mask(&self, vocab: &EventVocabulary) -> Vec<bool> {
        let mut mask = vec![false; vocab.len()];
        for e in &self.events {
            if let Some(i) = vocab.index_of(e) {
                mask[i] = true;
            }
        }
        mask
    }
}

/// A timed event: class plus onset/offset in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub class: String,
    pub onset_s: f64,
    pub offset_s: f64,
}

impl DetectionEvent {
    pub fn new(class: impl Into<String>, onset_s: f64, offset_s: f64) -> Self {
        DetectionEvent {
            class: class.into(),
            onset_s,
            offset_s,
        }
    }

    pub fn length_s(&self) -> f64 {
        self.offset_s - self.onset_s
    }
}

/// All timed events of one clip, ordered by onset.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongAnnotation {
    pub clip_id: String,
    pub events: Vec<DetectionEvent>,
}

/// Discard timestamps: per clip, the set of distinct event classes.
pub fn weaken(annotations: &[StrongAnnotation]) -> Vec<WeakLabel> {
    annotations
        .iter()
        .map(|a| WeakLabel {
            clip_id: a.clip_id.clone(),
            events: a.events.iter().map(|e| e.class.clone()).collect(),
        })
        .collect()
}

/// Per-class clip counts by label cardinality.
///
/// `counts[c][i]` is the number of clips whose tag set has exactly `i`
/// classes, one of which is class `c`. Column 0 is structurally zero; the
/// width adapts to the largest cardinality observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceTable {
    counts: Vec<Vec<u64>>,
}

impl CooccurrenceTable {
    pub fn zeros(n_classes: usize, max_cardinality: usize) -> Self {
        CooccurrenceTable {
            counts: vec![vec![0; max_cardinality + 1]; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn max_cardinality(&self) -> usize {
        self.counts.first().map_or(0, |row| row.len().saturating_sub(1))
    }

    /// Set the count of clips containing `cardinality` classes including
    /// class `c`. Cardinality 0 is structurally zero and rejected.
    pub fn set_count(&mut self, c: usize, cardinality: usize, n: u64) {
        assert!(cardinality >= 1, "cardinality is at least 1");
        assert!(cardinality < self.counts[c].len(), "cardinality out of range");
        self.counts[c][cardinality] = n;
    }

    /// Count of clips containing `cardinality` classes including class `c`;
    /// zero outside the recorded range.
    pub fn count(&self, c: usize, cardinality: usize) -> u64 {
        self.counts
            .get(c)
            .and_then(|row| row.get(cardinality))
            .copied()
            .unwrap_or(0)
    }

    pub fn row(&self, c: usize) -> &[u64] {
        &self.counts[c]
    }

    pub fn scale(&self, factor: u64) -> Self {
        CooccurrenceTable {
            counts: self
                .counts
                .iter()
                .map(|row| row.iter().map(|&n| n * factor).collect())
                .collect(),
        }
    }
}

/// Tally clip-level label co-occurrence over a weak label list.
pub fn count_cooccurrence(
    labels: &[WeakLabel],
    vocab: &EventVocabulary,
) -> Result<CooccurrenceTable> {
    let max_card = labels.iter().map(|l| l.events.len()).max().unwrap_or(0);
    let mut table = CooccurrenceTable::zeros(vocab.len(), max_card);
    for label in labels {
        let card = label.events.len();
        for class in &label.events {
            let c = vocab
                .index_of(class)
                .ok_or_else(|| Error::invalid(format!("class {class:?} not in vocabulary")))?;
            table.counts[c][card] += 1;
        }
    }
    Ok(table)
}

/// Parse a dataset manifest: `clip_id<TAB>path<TAB>subset<TAB>duration_s`.
/// An optional header line (first field `clip_id`) is skipped. Paths are
/// interpreted relative to `data_root`.
pub fn parse_manifest(text: &str, data_root: &Path) -> Result<Vec<ClipRecord>> {
    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if lineno == 0 && fields.first().map(|f| f.trim()) == Some("clip_id") {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let clip_id = fields[0].trim().to_string();
        if clip_id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty clip_id".into(),
            });
        }
        if !seen.insert(clip_id.clone()) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate clip_id {clip_id:?}"),
            });
        }
        let subset = Subset::parse(fields[2].trim()).ok_or_else(|| Error::Parse {
            line,
            msg: format!("unknown subset {:?}", fields[2].trim()),
        })?;
        let duration_s: f64 = fields[3].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad duration {:?}", fields[3].trim()),
        })?;
        if !(duration_s > 0.0) {
            return Err(Error::Parse {
                line,
                msg: format!("duration must be positive, got {duration_s}"),
            });
        }
        records.push(ClipRecord {
            clip_id,
            audio_path: data_root.join(fields[1].trim()),
            subset,
            duration_s,
        });
    }
    Ok(records)
}

pub fn format_manifest(records: &[ClipRecord], data_root: &Path) -> String {
    let mut out = String::from("clip_id\tpath\tsubset\tduration_s\n");
    for r in records {
        let rel = r
            .audio_path
            .strip_prefix(data_root)
            .unwrap_or(&r.audio_path);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.clip_id,
            rel.display(),
            r.subset.as_str(),
            r.duration_s
        ));
    }
    out
}
