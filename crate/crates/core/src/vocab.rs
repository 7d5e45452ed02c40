//! Event class vocabulary.
//!
//! Class order is fixed (alphabetical for the domestic-audio set) so that
//! every per-class table in the system — co-occurrence counts, subspace
//! dimensions, median windows, score reports — indexes the same way across
//! runs.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The ten domestic sound event classes, in fixed alphabetical order.
pub const DOMESTIC_CLASSES: [&str; 10] = [
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
];

/// Ordered list of event class names. The index of a class is its identity
/// everywhere else in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventVocabulary {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl EventVocabulary {
    pub fn new(classes: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.is_empty() {
            return Err(Error::invalid("vocabulary must not be empty"));
        }
        let mut index = HashMap::new();
        for (i, c) in classes.iter().enumerate() {
            if index.insert(c.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate class name {c:?}")));
            }
        }
        Ok(EventVocabulary { classes, index })
    }

    /// The standard ten-class domestic configuration.
    pub fn domestic() -> Self {
        Self::new(DOMESTIC_CLASSES).expect("static class list is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.classes[idx]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str, line: usize) -> Result<usize> {
        self.index_of(name).ok_or_else(|| Error::UnknownClass {
            line,
            name: name.to_string(),
        })
    }

    /// Stable digest of the ordered class list; stored in checkpoints so that
    /// a model trained against one vocabulary refuses to score another.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for c in &self.classes {
            hasher.update(c.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domestic_is_alphabetical() {
        let v = EventVocabulary::domestic();
        let mut sorted = v.classes().to_vec();
        sorted.sort();
        assert_eq!(sorted, v.classes());
        assert_eq!(v.len(), 10);
    }

    #[test]
    fn index_round_trips() {
        let v = EventVocabulary::domestic();
        for (i, c) in v.classes().iter().enumerate() {
            assert_eq!(v.index_of(c), Some(i));
            assert_eq!(v.name(i), c);
        }
        assert_eq!(v.index_of("Dragon"), None);
    }

    #[test]
    fn fingerprint_tracks_order() {
        let a = EventVocabulary::new(["Dog", "Cat"]).unwrap();
        let b = EventVocabulary::new(["Cat", "Dog"]).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), EventVocabulary::new(["Dog", "Cat"]).unwrap().fingerprint());
    }

    #[test]
    fn rejects_duplicates_and_empty() {
        assert!(EventVocabulary::new(["Dog", "Dog"]).is_err());
        assert!(EventVocabulary::new(Vec::<String>::new()).is_err());
    }
}
