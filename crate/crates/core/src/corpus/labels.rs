//! TSV label file parsing and formatting.
//!
//! Weak files: `filename<TAB>comma-separated labels`, one clip per line.
//! Strong files: `filename<TAB>onset<TAB>offset<TAB>event_label`, one event
//! per line, grouped by file on read. Both accept an optional header line.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::vocab::EventVocabulary;

use super::{DetectionEvent, StrongAnnotation, WeakLabel};

fn is_header(fields: &[&str]) -> bool {
    fields.first().map(|f| f.trim()) == Some("filename")
}

/// Parse a weak label file. Duplicate (clip, class) pairs collapse to one;
/// repeated rows for a clip merge into one tag set.
pub fn parse_weak_labels(text: &str, vocab: &EventVocabulary) -> Result<Vec<WeakLabel>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_clip: std::collections::HashMap<String, BTreeSet<String>> =
        std::collections::HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if lineno == 0 && is_header(&fields) {
            continue;
        }
        if fields.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 tab-separated fields, got {}", fields.len()),
            });
        }
        let clip_id = fields[0].trim();
        if clip_id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty filename".into(),
            });
        }
        let mut events = BTreeSet::new();
        for label in fields[1].split(',') {
            let label = label.trim();
            if label.is_empty() {
                continue;
            }
            vocab.require(label, line)?;
            events.insert(label.to_string());
        }
        if events.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "labeled clip must carry at least one event class".into(),
            });
        }
        let entry = by_clip.entry(clip_id.to_string()).or_insert_with(|| {
            order.push(clip_id.to_string());
            BTreeSet::new()
        });
        entry.extend(events);
    }

    Ok(order
        .into_iter()
        .map(|clip_id| {
            let events = by_clip.remove(&clip_id).unwrap();
            WeakLabel { clip_id, events }
        })
        .collect())
}

pub fn format_weak_labels(labels: &[WeakLabel]) -> String {
    let mut out = String::from("filename\tevent_labels\n");
    for l in labels {
        let events: Vec<&str> = l.events.iter().map(|s| s.as_str()).collect();
        out.push_str(&format!("{}\t{}\n", l.clip_id, events.join(",")));
    }
    out
}

/// Parse a strong label file. Events are grouped by file and sorted by onset.
pub fn parse_strong_labels(text: &str, vocab: &EventVocabulary) -> Result<Vec<StrongAnnotation>> {
    let mut order: Vec<String> = Vec::new();
    let mut by_clip: std::collections::HashMap<String, Vec<DetectionEvent>> =
        std::collections::HashMap::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if lineno == 0 && is_header(&fields) {
            continue;
        }
        if fields.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let clip_id = fields[0].trim();
        if clip_id.is_empty() {
            return Err(Error::Parse {
                line,
                msg: "empty filename".into(),
            });
        }
        let onset_s: f64 = fields[1].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad onset {:?}", fields[1].trim()),
        })?;
        let offset_s: f64 = fields[2].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad offset {:?}", fields[2].trim()),
        })?;
        if !onset_s.is_finite() || !offset_s.is_finite() || onset_s < 0.0 {
            return Err(Error::Parse {
                line,
                msg: format!("times must be finite and non-negative: {onset_s} / {offset_s}"),
            });
        }
        if offset_s <= onset_s {
            return Err(Error::Parse {
                line,
                msg: format!("inverted interval: offset {offset_s} <= onset {onset_s}"),
            });
        }
        let label = fields[3].trim();
        vocab.require(label, line)?;

        let entry = by_clip.entry(clip_id.to_string()).or_insert_with(|| {
            order.push(clip_id.to_string());
            Vec::new()
        });
        entry.push(DetectionEvent::new(label, onset_s, offset_s));
    }

    Ok(order
        .into_iter()
        .map(|clip_id| {
            let mut events = by_clip.remove(&clip_id).unwrap();
            events.sort_by(|a, b| {
                a.onset_s
                    .partial_cmp(&b.onset_s)
                    .unwrap()
                    .then(a.offset_s.partial_cmp(&b.offset_s).unwrap())
                    .then(a.class.cmp(&b.class))
            });
            StrongAnnotation { clip_id, events }
        })
        .collect())
}

pub fn format_strong_labels(annotations: &[StrongAnnotation]) -> String {
    let mut out = String::from("filename\tonset\toffset\tevent_label\n");
    for a in annotations {
        for e in &a.events {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                a.clip_id, e.onset_s, e.offset_s, e.class
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> EventVocabulary {
        EventVocabulary::new(["Cat", "Dog", "Speech"]).unwrap()
    }

    #[test]
    fn weak_basic_lines() {
        let labels = parse_weak_labels("a.wav\tDog,Speech\nb.wav\tCat\n", &vocab()).unwrap();
        assert_eq!(labels.len(), 2);
        assert_eq!(labels[0], WeakLabel::new("a.wav", ["Dog", "Speech"]));
        assert_eq!(labels[1], WeakLabel::new("b.wav", ["Cat"]));
    }

    #[test]
    fn weak_unknown_class_reports_line() {
        let err = parse_weak_labels("a.wav\tDog\nc.wav\tDragon\n", &vocab()).unwrap_err();
        match err {
            Error::UnknownClass { line, name } => {
                assert_eq!(line, 2);
                assert_eq!(name, "Dragon");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn weak_trims_and_dedups() {
        let labels = parse_weak_labels("a.wav\t Dog , Dog ,Cat\n", &vocab()).unwrap();
        assert_eq!(labels[0], WeakLabel::new("a.wav", ["Cat", "Dog"]));
    }

    #[test]
    fn weak_merges_repeated_clip_rows() {
        let labels = parse_weak_labels("a.wav\tDog\na.wav\tCat\n", &vocab()).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0], WeakLabel::new("a.wav", ["Cat", "Dog"]));
    }

    #[test]
    fn weak_skips_header_and_rejects_malformed() {
        let labels = parse_weak_labels("filename\tevent_labels\na.wav\tDog\n", &vocab()).unwrap();
        assert_eq!(labels.len(), 1);
        assert!(parse_weak_labels("a.wav\n", &vocab()).is_err());
        assert!(parse_weak_labels("a.wav\t\n", &vocab()).is_err());
        assert!(parse_weak_labels("a.wav\tDog\textra\n", &vocab()).is_err());
    }

    #[test]
    fn strong_basic_and_grouping() {
        let text = "a.wav\t1.0\t2.5\tDog\na.wav\t0.5\t0.9\tCat\n";
        let anns = parse_strong_labels(text, &vocab()).unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].events.len(), 2);
        // sorted by onset
        assert_eq!(anns[0].events[0].class, "Cat");
        assert_eq!(anns[0].events[1], DetectionEvent::new("Dog", 1.0, 2.5));
    }

    #[test]
    fn strong_rejects_inverted_and_nonnumeric() {
        assert!(parse_strong_labels("a.wav\t2.0\t1.0\tDog\n", &vocab()).is_err());
        assert!(parse_strong_labels("a.wav\t1.0\t1.0\tDog\n", &vocab()).is_err());
        assert!(parse_strong_labels("a.wav\tx\t1.0\tDog\n", &vocab()).is_err());
        assert!(parse_strong_labels("a.wav\t-1.0\t1.0\tDog\n", &vocab()).is_err());
    }

    #[test]
    fn round_trip_both_formats() {
        let weak = vec![
            WeakLabel::new("a.wav", ["Dog", "Speech"]),
            WeakLabel::new("b.wav", ["Cat"]),
        ];
        assert_eq!(
            parse_weak_labels(&format_weak_labels(&weak), &vocab()).unwrap(),
            weak
        );

        let strong = vec![StrongAnnotation {
            clip_id: "a.wav".into(),
            events: vec![
                DetectionEvent::new("Cat", 0.25, 1.5),
                DetectionEvent::new("Dog", 1.0, 2.5),
            ],
        }];
        assert_eq!(
            parse_strong_labels(&format_strong_labels(&strong), &vocab()).unwrap(),
            strong
        );
    }
}
