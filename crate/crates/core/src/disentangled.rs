//! Per-class feature subspace assignment.
//!
//! Classes that often appear alone in training clips get the full embedding
//! space; classes that mostly co-occur with others are restricted to a
//! low-dimensional prefix of it. The assignment is computed from clip-level
//! label statistics only — nothing is learned here.
//!
//! For class `c` with weighted single-label frequency fraction `f_c` the
//! subspace dimension is `ceil(((1 - m) * f_c + m) * d)`, so the most
//! frequent class always keeps all `d` coordinates and no class drops below
//! `ceil(m * d)`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::CooccurrenceTable;
use crate::error::{Error, Result};
use crate::vocab::EventVocabulary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfConfig {
    /// Floor fraction that keeps rare classes from collapsing to nothing.
    pub m: f64,
    /// Full embedding dimension.
    pub d: usize,
    /// Importance weight per label cardinality, 1-based: `weights[0]`
    /// applies to single-label clips. Missing entries are zero.
    pub cardinality_weights: Vec<f64>,
}

impl DfConfig {
    pub fn new(m: f64, d: usize) -> Self {
        DfConfig {
            m,
            d,
            cardinality_weights: vec![1.0],
        }
    }

    /// Reference configuration: m = 0.04, only single-label clips count.
    pub fn reference(d: usize) -> Self {
        Self::new(0.04, d)
    }

    pub fn weight(&self, cardinality: usize) -> f64 {
        if cardinality == 0 {
            return 0.0;
        }
        self.cardinality_weights
            .get(cardinality - 1)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.m) {
            return Err(Error::invalid(format!("m must be in [0,1), got {}", self.m)));
        }
        if self.d == 0 {
            return Err(Error::invalid("d must be positive"));
        }
        Ok(())
    }
}

/// Subspace dimensions for every class, in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DfAssignment {
    pub d: usize,
    /// Weighted frequency fraction per class, in [0, 1].
    pub fractions: Vec<f64>,
    /// Subspace dimension per class, in [1, d].
    pub dims: Vec<usize>,
}

impl DfAssignment {
    /// Trivial assignment: every class keeps the full space.
    pub fn full(n_classes: usize, d: usize) -> Self {
        DfAssignment {
            d,
            fractions: vec![1.0; n_classes],
            dims: vec![d; n_classes],
        }
    }

    pub fn from_counts(counts: &CooccurrenceTable, config: &DfConfig) -> Result<Self> {
        config.validate()?;
        let fractions = compute_fractions(counts, config)?;
        let dims = fractions
            .iter()
            .map(|&f| subspace_dim(f, config))
            .collect::<Result<Vec<_>>>()?;
        Ok(DfAssignment {
            d: config.d,
            fractions,
            dims,
        })
    }

    /// Binary basis-selection masks, one `d`-vector per class with the first
    /// `dims[c]` entries set.
    pub fn masks(&self) -> Vec<Vec<bool>> {
        self.dims
            .iter()
            .map(|&k| (0..self.d).map(|j| j < k).collect())
            .collect()
    }

    /// Audit report: `class<TAB>fraction<TAB>dim`.
    pub fn report(&self, vocab: &EventVocabulary) -> String {
        let mut out = String::from("class\tfraction\tdim\n");
        for (c, name) in vocab.classes().iter().enumerate() {
            writeln!(out, "{name}\t{:.6}\t{}", self.fractions[c], self.dims[c]).unwrap();
        }
        out
    }
}

/// Weighted single-label frequency fraction per class: each class's
/// cardinality-weighted clip count divided by the maximum over classes.
/// Errors when every class has weight zero (e.g. no single-label clips
/// anywhere under the default weights).
pub fn compute_fractions(counts: &CooccurrenceTable, config: &DfConfig) -> Result<Vec<f64>> {
    let scores: Vec<f64> = (0..counts.n_classes())
        .map(|c| {
            (1..=counts.max_cardinality())
                .map(|i| config.weight(i) * counts.count(c, i) as f64)
                .sum()
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(Error::invalid(
            "cannot normalize class frequencies: no class has positive weighted count",
        ));
    }
    Ok(scores.iter().map(|s| s / max).collect())
}

/// Subspace dimension for one class: `ceil(((1 - m) * f + m) * d)`, clamped
/// to at least 1. Values within 1e-9 of an integer are snapped before the
/// ceiling so that e.g. f = 1 yields exactly d instead of d + 1 through
/// float drift.
pub fn subspace_dim(fraction: f64, config: &DfConfig) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "fraction must be in [0,1], got {fraction}"
        )));
    }
    let x = ((1.0 - config.m) * fraction + config.m) * config.d as f64;
    let snapped = if (x - x.round()).abs() < 1e-9 { x.round() } else { x };
    let k = snapped.ceil() as usize;
    Ok(k.clamp(1, config.d))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Build a table directly: `rows[c][i]` is the clip count at cardinality
    /// `i + 1` for class `c`.
    fn table(rows: Vec<Vec<u64>>) -> CooccurrenceTable {
        let max_card = rows.iter().map(|r| r.len()).max().unwrap_or(1);
        let mut t = CooccurrenceTable::zeros(rows.len(), max_card);
        for (c, row) in rows.iter().enumerate() {
            for (i, &n) in row.iter().enumerate() {
                t.set_count(c, i + 1, n);
            }
        }
        t
    }

    #[test]
    fn fractions_are_single_label_ratios_under_default_weights() {
        // N_c1 = (10, 5, 0)
        let t = table(vec![vec![10], vec![5], vec![0]]);
        let cfg = DfConfig::reference(160);
        let f = compute_fractions(&t, &cfg).unwrap();
        assert_eq!(f, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn equal_counts_give_all_ones() {
        let t = table(vec![vec![7], vec![7], vec![7]]);
        let f = compute_fractions(&t, &DfConfig::reference(160)).unwrap();
        assert_eq!(f, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn general_weights_follow_the_weighted_sum() {
        // class 0: 4 single-label + 2 double-label clips; class 1: 8 double-label.
        // with r = (1, 0.5): scores (5, 4), max 5 -> fractions (1.0, 0.8)
        let t = table(vec![vec![4, 2], vec![0, 8]]);
        let mut cfg = DfConfig::reference(160);
        cfg.cardinality_weights = vec![1.0, 0.5];
        let f = compute_fractions(&t, &cfg).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-12);
        assert!((f[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn no_single_label_clips_is_an_error() {
        let t = table(vec![vec![0, 3], vec![0, 3]]);
        assert!(compute_fractions(&t, &DfConfig::reference(160)).is_err());
    }

    #[test]
    fn dim_formula_reference_points() {
        let cfg = DfConfig::reference(160);
        assert_eq!(subspace_dim(1.0, &cfg).unwrap(), 160);
        assert_eq!(subspace_dim(0.0, &cfg).unwrap(), 7); // ceil(6.4)
        assert_eq!(subspace_dim(0.15, &cfg).unwrap(), 30); // ceil(29.44)
    }

    #[test]
    fn dims_stay_in_range() {
        let cfg = DfConfig::reference(160);
        for i in 0..=100 {
            let f = i as f64 / 100.0;
            let k = subspace_dim(f, &cfg).unwrap();
            assert!((7..=160).contains(&k), "f={f} k={k}");
        }
        assert!(subspace_dim(1.5, &cfg).is_err());
        assert!(subspace_dim(-0.1, &cfg).is_err());
    }

    #[test]
    fn masks_are_nested_prefixes() {
        let assignment = DfAssignment {
            d: 8,
            fractions: vec![1.0, 0.0, 0.5],
            dims: vec![8, 1, 4],
        };
        let masks = assignment.masks();
        assert!(masks[0].iter().all(|&b| b));
        assert_eq!(masks[1], vec![true, false, false, false, false, false, false, false]);
        assert_eq!(masks[2][..4], [true; 4]);
        assert_eq!(masks[2][4..], [false; 4]);
        // nested: smaller dim's mask is a subset of the larger's
        for j in 0..8 {
            if masks[1][j] {
                assert!(masks[2][j]);
            }
            if masks[2][j] {
                assert!(masks[0][j]);
            }
        }
    }

    #[test]
    fn scale_invariance_of_counts() {
        let t = table(vec![vec![3, 1], vec![9, 0], vec![1, 5]]);
        let cfg = DfConfig::reference(160);
        let a = DfAssignment::from_counts(&t, &cfg).unwrap();
        let b = DfAssignment::from_counts(&t.scale(17), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_lists_every_class() {
        let vocab = EventVocabulary::new(["A", "B"]).unwrap();
        let a = DfAssignment::full(2, 16);
        let report = a.report(&vocab);
        assert!(report.contains("A\t1.000000\t16"));
        assert!(report.contains("B\t1.000000\t16"));
    }
}
