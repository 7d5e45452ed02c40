//! Scoring of system output against strong references: event-based macro F1
//! with onset/offset collars, segment-based macro F1 over fixed 1 s cells,
//! and clip-level (tagging) macro F1.
//!
//! Matching is greedy in onset order with one-to-one consumption, the
//! convention of the standard SED evaluation toolkit; the test suite backs
//! it with an exhaustive optimal-matching oracle.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{StrongAnnotation, WeakLabel};
use crate::error::{Error, Result};
use crate::vocab::EventVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollarConfig {
    /// Absolute onset tolerance in seconds.
    pub onset_collar_s: f64,
    /// Absolute offset tolerance in seconds.
    pub offset_collar_s: f64,
    /// Relative offset tolerance as a fraction of the reference length; the
    /// effective offset tolerance is the max of the two.
    pub offset_collar_rel: f64,
    /// Segment length for the segment-based measure.
    pub segment_length_s: f64,
}

impl Default for CollarConfig {
    fn default() -> Self {
        CollarConfig {
            onset_collar_s: 0.2,
            offset_collar_s: 0.2,
            offset_collar_rel: 0.2,
            segment_length_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreVariant {
    Event,
    Segment,
    Clip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScore {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ClassScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class scores plus the unweighted macro average over all classes,
/// zero-support classes included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub variant: ScoreVariant,
    pub classes: Vec<String>,
    pub per_class: Vec<ClassScore>,
    pub macro_f1: f64,
}

impl ScoreReport {
    fn from_counts(
        variant: ScoreVariant,
        vocab: &EventVocabulary,
        counts: &[(u64, u64, u64)],
    ) -> Self {
        let per_class: Vec<ClassScore> = counts
            .iter()
            .map(|&(tp, fp, fn_)| ClassScore::from_counts(tp, fp, fn_))
            .collect();
        let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len().max(1) as f64;
        ScoreReport {
            variant,
            classes: vocab.classes().to_vec(),
            per_class,
            macro_f1,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("class\ttp\tfp\tfn\tprecision\trecall\tf1\n");
        for (name, s) in self.classes.iter().zip(self.per_class.iter()) {
            writeln!(
                out,
                "{name}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                s.tp, s.fp, s.fn_, s.precision, s.recall, s.f1
            )
            .unwrap();
        }
        writeln!(out, "macro_f1\t\t\t\t\t\t{:.6}", self.macro_f1).unwrap();
        out
    }

    pub fn summary(&self) -> String {
        let kind = match self.variant {
            ScoreVariant::Event => "event-based",
            ScoreVariant::Segment => "segment-based",
            ScoreVariant::Clip => "clip-level",
        };
        format!("{kind} macro F1: {:.4}", self.macro_f1)
    }
}

/// Collar rule for one (reference, prediction) pair of the same class.
fn collar_match(r: &EventSpan, p: &EventSpan, collars: &CollarConfig) -> bool {
    let onset_ok = (p.onset - r.onset).abs() <= collars.onset_collar_s + 1e-12;
    let tol = collars
        .offset_collar_s
        .max(collars.offset_collar_rel * (r.offset - r.onset));
    let offset_ok = (p.offset - r.offset).abs() <= tol + 1e-12;
    onset_ok && offset_ok
}

#[derive(Debug, Clone, Copy)]
struct EventSpan {
    onset: f64,
    offset: f64,
}

/// Group events per (clip, class), sorted by onset.
fn group_events<'a>(
    annotations: &'a [StrongAnnotation],
    vocab: &EventVocabulary,
) -> Result<HashMap<(&'a str, usize), Vec<EventSpan>>> {
    let mut map: HashMap<(&str, usize), Vec<EventSpan>> = HashMap::new();
    for ann in annotations {
        for e in &ann.events {
            let c = vocab
                .index_of(&e.class)
                .ok_or_else(|| Error::invalid(format!("class {:?} not in vocabulary", e.class)))?;
            map.entry((ann.clip_id.as_str(), c)).or_default().push(EventSpan {
                onset: e.onset_s,
                offset: e.offset_s,
            });
        }
    }
    for spans in map.values_mut() {
        spans.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());
    }
    Ok(map)
}

fn check_bounds(annotations: &[StrongAnnotation], durations: &HashMap<String, f64>) -> Result<()> {
    for ann in annotations {
        if let Some(&dur) = durations.get(&ann.clip_id) {
            for e in &ann.events {
                if e.onset_s < 0.0 || e.offset_s > dur + 1e-9 {
                    return Err(Error::invalid(format!(
                        "event ({}, {}, {}) outside [0, {dur}] for clip {}",
                        e.class, e.onset_s, e.offset_s, ann.clip_id
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Greedy one-to-one matching per (clip, class): references in onset order
/// each consume the first compatible unmatched prediction. Returns pooled
/// (tp, fp, fn) per class.
pub fn match_events(
    refs: &[StrongAnnotation],
    preds: &[StrongAnnotation],
    vocab: &EventVocabulary,
    collars: &CollarConfig,
    durations: Option<&HashMap<String, f64>>,
) -> Result<Vec<(u64, u64, u64)>> {
    if let Some(durations) = durations {
        check_bounds(refs, durations)?;
        check_bounds(preds, durations)?;
    }
    let ref_map = group_events(refs, vocab)?;
    let pred_map = group_events(preds, vocab)?;

    let mut counts = vec![(0u64, 0u64, 0u64); vocab.len()];
    let empty: Vec<EventSpan> = Vec::new();

    // visit the union of keys deterministically
    let mut keys: Vec<(&str, usize)> = ref_map.keys().chain(pred_map.keys()).copied().collect();
    keys.sort();
    keys.dedup();

    for key in keys {
        let rs = ref_map.get(&key).unwrap_or(&empty);
        let ps = pred_map.get(&key).unwrap_or(&empty);
        let mut used = vec![false; ps.len()];
        let mut tp = 0u64;
        for r in rs {
            for (j, p) in ps.iter().enumerate() {
                if !used[j] && collar_match(r, p, collars) {
                    used[j] = true;
                    tp += 1;
                    break;
                }
            }
        }
        let c = key.1;
        counts[c].0 += tp;
        counts[c].1 += ps.len() as u64 - tp;
        counts[c].2 += rs.len() as u64 - tp;
    }
    Ok(counts)
}

/// Event-based macro F1: counts pooled over all clips within each class,
/// then averaged across classes.
pub fn event_based_f1(
    refs: &[StrongAnnotation],
    preds: &[StrongAnnotation],
    vocab: &EventVocabulary,
    collars: &CollarConfig,
    durations: Option<&HashMap<String, f64>>,
) -> Result<ScoreReport> {
    let counts = match_events(refs, preds, vocab, collars, durations)?;
    Ok(ScoreReport::from_counts(ScoreVariant::Event, vocab, &counts))
}

/// Segment-based macro F1: each clip is cut into fixed-length segments and a
/// (segment, class) cell is active when any event of that class overlaps it.
pub fn segment_based_f1(
    refs: &[StrongAnnotation],
    preds: &[StrongAnnotation],
    vocab: &EventVocabulary,
    segment_length_s: f64,
    durations: &HashMap<String, f64>,
) -> Result<ScoreReport> {
    if !(segment_length_s > 0.0) {
        return Err(Error::invalid("segment length must be positive"));
    }
    let ref_map = group_events(refs, vocab)?;
    let pred_map = group_events(preds, vocab)?;

    let mut clip_ids: Vec<&str> = refs
        .iter()
        .map(|a| a.clip_id.as_str())
        .chain(preds.iter().map(|a| a.clip_id.as_str()))
        .collect();
    clip_ids.sort();
    clip_ids.dedup();

    let mut counts = vec![(0u64, 0u64, 0u64); vocab.len()];
    let empty: Vec<EventSpan> = Vec::new();
    for clip_id in clip_ids {
        let dur = durations.get(clip_id).copied().ok_or_else(|| {
            Error::invalid(format!("duration unknown for clip {clip_id:?}"))
        })?;
        let n_segments = (dur / segment_length_s).ceil() as usize;
        for c in 0..vocab.len() {
            let rs = ref_map.get(&(clip_id, c)).unwrap_or(&empty);
            let ps = pred_map.get(&(clip_id, c)).unwrap_or(&empty);
            for seg in 0..n_segments {
                let s0 = seg as f64 * segment_length_s;
                let s1 = s0 + segment_length_s;
                let active = |spans: &[EventSpan]| {
                    spans.iter().any(|e| e.onset < s1 && e.offset > s0)
                };
                match (active(rs), active(ps)) {
                    (true, true) => counts[c].0 += 1,
                    (false, true) => counts[c].1 += 1,
                    (true, false) => counts[c].2 += 1,
                    (false, false) => {}
                }
            }
        }
    }
    Ok(ScoreReport::from_counts(ScoreVariant::Segment, vocab, &counts))
}

/// Clip-level (tagging) macro F1 over weak label sets.
pub fn clip_f1(
    ref_tags: &[WeakLabel],
    pred_tags: &[WeakLabel],
    vocab: &EventVocabulary,
) -> Result<ScoreReport> {
    let mut pred_map: HashMap<&str, &WeakLabel> = HashMap::new();
    for p in pred_tags {
        pred_map.insert(p.clip_id.as_str(), p);
    }
    let mut counts = vec![(0u64, 0u64, 0u64); vocab.len()];
    let mut seen: Vec<&str> = Vec::new();
    for r in ref_tags {
        seen.push(r.clip_id.as_str());
        let rmask = r.to_mask(vocab);
        let pmask = pred_map
            .get(r.clip_id.as_str())
            .map(|p| p.to_mask(vocab))
            .unwrap_or_else(|| vec![false; vocab.len()]);
        for c in 0..vocab.len() {
            match (rmask[c], pmask[c]) {
                (true, true) => counts[c].0 += 1,
                (false, true) => counts[c].1 += 1,
                (true, false) => counts[c].2 += 1,
                (false, false) => {}
            }
        }
    }
    // predictions for clips without reference rows are all false positives
    for p in pred_tags {
        if !seen.contains(&p.clip_id.as_str()) {
            for c in p.to_mask(vocab).iter().enumerate().filter(|(_, &m)| m) {
                counts[c.0].1 += 1;
            }
        }
    }
    Ok(ScoreReport::from_counts(ScoreVariant::Clip, vocab, &counts))
}

/// Clip F1 straight from binary masks (model-facing convenience).
pub fn clip_f1_from_masks(
    refs: &[Vec<bool>],
    preds: &[Vec<bool>],
    vocab: &EventVocabulary,
) -> ScoreReport {
    assert_eq!(refs.len(), preds.len());
    let mut counts = vec![(0u64, 0u64, 0u64); vocab.len()];
    for (r, p) in refs.iter().zip(preds.iter()) {
        for c in 0..vocab.len() {
            match (r[c], p[c]) {
                (true, true) => counts[c].0 += 1,
                (false, true) => counts[c].1 += 1,
                (true, false) => counts[c].2 += 1,
                (false, false) => {}
            }
        }
    }
    ScoreReport::from_counts(ScoreVariant::Clip, vocab, &counts)
}
