//! Median-split multidimensional k-anonymization and its distinct
//! l-diversity variant.
//!
//! Partitions are cut at the (lower) median of the widest dimension, widths
//! measured after min-max normalization over the input table. Rows equal to
//! the median go left. If the widest dimension yields a side that breaks the
//! guard, narrower dimensions are tried in turn; a partition with no allowable
//! cut becomes an equivalence class whose box is the tight envelope of its
//! members.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassValue, Dataset, Fragment, GeneralizedValue};

/// How the class attribute of an equivalence class is released.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PublishMode {
    /// One class value per tuple.
    TupleLevel,
    /// Each distinct class value once; the remaining tuples carry an
    /// ambiguous (blank) class.
    EcLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    /// One interval per fragment feature, in fragment order.
    pub qi_box: Vec<GeneralizedValue>,
    /// Tuple-level: the class multiset. EC-level: the published class values,
    /// each mapped to its frequency before conversion.
    pub class_counts: BTreeMap<ClassValue, usize>,
    pub publish_mode: PublishMode,
    /// Source rows, ascending.
    pub row_ids: Vec<usize>,
}

impl EquivalenceClass {
    /// A tuple-level class with the given class multiset, an empty box and
    /// placeholder row ids `0..size`.
    pub fn from_counts(counts: impl IntoIterator<Item = (ClassValue, usize)>) -> Self {
        let class_counts: BTreeMap<ClassValue, usize> =
            counts.into_iter().filter(|&(_, n)| n > 0).collect();
        let size = class_counts.values().sum();
        EquivalenceClass {
            qi_box: Vec::new(),
            class_counts,
            publish_mode: PublishMode::TupleLevel,
            row_ids: (0..size).collect(),
        }
    }

    /// An EC-level class of `size` tuples publishing `classes`.
    pub fn ec_level(size: usize, classes: impl IntoIterator<Item = ClassValue>) -> Self {
        let class_counts: BTreeMap<ClassValue, usize> = classes.into_iter().map(|c| (c, 1)).collect();
        assert!(class_counts.len() <= size, "more class values than tuples");
        EquivalenceClass {
            qi_box: Vec::new(),
            class_counts,
            publish_mode: PublishMode::EcLevel,
            row_ids: (0..size).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.row_ids.len()
    }

    pub fn distinct_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_set(&self) -> impl Iterator<Item = ClassValue> + '_ {
        self.class_counts.keys().copied()
    }

    pub fn frequency(&self, class: ClassValue) -> usize {
        self.class_counts.get(&class).copied().unwrap_or(0)
    }

    /// Tuples without a published class value. Always zero at tuple level.
    pub fn ambiguous_slots(&self) -> usize {
        match self.publish_mode {
            PublishMode::TupleLevel => 0,
            PublishMode::EcLevel => self.size() - self.distinct_classes(),
        }
    }

    /// Most frequent class value, smallest code on ties.
    pub fn majority(&self) -> Option<ClassValue> {
        self.class_counts
            .iter()
            .fold(None, |best: Option<(ClassValue, usize)>, (&c, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((c, n)),
            })
            .map(|(c, _)| c)
    }

    /// Least frequent class value, smallest code on ties.
    pub fn minority(&self) -> Option<ClassValue> {
        self.class_counts
            .iter()
            .fold(None, |best: Option<(ClassValue, usize)>, (&c, &n)| match best {
                Some((_, m)) if m <= n => best,
                _ => Some((c, n)),
            })
            .map(|(c, _)| c)
    }

    pub fn shares_class_with(&self, other: &EquivalenceClass) -> bool {
        self.class_counts.keys().any(|c| other.class_counts.contains_key(c))
    }

    pub fn contains_point(&self, values: &[f64]) -> bool {
        values.len() == self.qi_box.len()
            && self.qi_box.iter().zip(values).all(|(g, &v)| g.contains(v))
    }
}

/// One anonymized fragment: its features and the equivalence classes that
/// cover its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnonymizedFragment {
    /// Feature ordinals of the original table, matching `qi_box` order.
    pub fragment: Fragment,
    pub k: usize,
    pub classes: Vec<EquivalenceClass>,
}

impl AnonymizedFragment {
    pub fn row_count(&self) -> usize {
        self.classes.iter().map(EquivalenceClass::size).sum()
    }

    /// Publication mode shared by the classes; tuple-level when empty.
    pub fn publish_mode(&self) -> PublishMode {
        self.classes
            .first()
            .map_or(PublishMode::TupleLevel, |eq| eq.publish_mode)
    }

    /// Reassigns the feature ordinals this fragment stands for.
    pub fn with_fragment(mut self, fragment: Fragment) -> Result<Self> {
        if fragment.len() != self.fragment.len() {
            return Err(Error::ShapeMismatch(format!(
                "fragment has {} features, boxes have {}",
                fragment.len(),
                self.fragment.len()
            )));
        }
        self.fragment = fragment;
        Ok(self)
    }
}

/// Conditions every side of a cut must meet.
#[derive(Debug, Clone, Default)]
pub struct SplitGuard {
    pub k: usize,
    /// Minimum distinct class values per side.
    pub l: Option<usize>,
    /// Class values every side must keep.
    pub required: Option<BTreeSet<ClassValue>>,
}

impl SplitGuard {
    fn allows(&self, rows: &[usize], classes: &[ClassValue]) -> bool {
        if rows.len() < self.k {
            return false;
        }
        if self.l.is_none() && self.required.is_none() {
            return true;
        }
        let present: BTreeSet<ClassValue> = rows.iter().map(|&r| classes[r]).collect();
        if let Some(l) = self.l {
            if present.len() < l {
                return false;
            }
        }
        match &self.required {
            Some(req) => req.is_subset(&present),
            None => true,
        }
    }
}

pub fn mondrian_k_anonymize(data: &Dataset, k: usize) -> Result<AnonymizedFragment> {
    anonymize(
        data,
        &SplitGuard {
            k,
            ..SplitGuard::default()
        },
    )
}

/// Like [`mondrian_k_anonymize`], but both sides of every cut must also keep
/// `l` distinct class values.
pub fn mondrian_l_diverse(data: &Dataset, k: usize, l: usize) -> Result<AnonymizedFragment> {
    if l < 2 {
        return Err(Error::InvalidParameter(format!("l must be at least 2, got {l}")));
    }
    anonymize(
        data,
        &SplitGuard {
            k,
            l: Some(l),
            required: None,
        },
    )
}

/// Runs median Mondrian under an arbitrary guard. The fragment of the result
/// lists `data`'s own feature ordinals.
pub fn anonymize(data: &Dataset, guard: &SplitGuard) -> Result<AnonymizedFragment> {
    if guard.k < 2 {
        return Err(Error::InvalidParameter(format!("k must be at least 2, got {}", guard.k)));
    }
    let n = data.row_count();
    if n < guard.k {
        return Err(Error::TooFewRows { rows: n, k: guard.k });
    }
    let classes = data.class_values();
    let all_rows: Vec<usize> = (0..n).collect();
    if let Some(l) = guard.l {
        let found = data.distinct_classes().len();
        if found < l {
            return Err(Error::InsufficientDiversity { found, l });
        }
    }
    if !guard.allows(&all_rows, &classes) {
        return Err(Error::InvalidParameter(
            "the whole table already violates the split guard".into(),
        ));
    }

    let dims = data.feature_count();
    let columns: Vec<&[f64]> = (0..dims).map(|d| data.feature_column(d)).collect();
    let ranges = data.feature_ranges();

    let mut leaves: Vec<Vec<usize>> = Vec::new();
    let mut pending = vec![all_rows];
    while let Some(rows) = pending.pop() {
        match best_cut(&rows, &columns, &ranges, guard, &classes) {
            Some((left, right)) => {
                pending.push(right);
                pending.push(left);
            }
            None => leaves.push(rows),
        }
    }

    let mut eqs: Vec<EquivalenceClass> = leaves
        .into_iter()
        .map(|mut rows| {
            rows.sort_unstable();
            let qi_box = columns
                .iter()
                .map(|col| {
                    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                        (lo.min(col[r]), hi.max(col[r]))
                    });
                    GeneralizedValue { lower: lo, upper: hi }
                })
                .collect();
            let mut class_counts = BTreeMap::new();
            for &r in &rows {
                *class_counts.entry(classes[r]).or_insert(0) += 1;
            }
            EquivalenceClass {
                qi_box,
                class_counts,
                publish_mode: PublishMode::TupleLevel,
                row_ids: rows,
            }
        })
        .collect();
    eqs.sort_by(compare_boxes);

    Ok(AnonymizedFragment {
        fragment: Fragment::new((0..dims).collect())?,
        k: guard.k,
        classes: eqs,
    })
}

/// Orders classes by their lower bounds, then upper bounds, then rows.
pub(crate) fn compare_boxes(a: &EquivalenceClass, b: &EquivalenceClass) -> Ordering {
    let lowers = a
        .qi_box
        .iter()
        .zip(&b.qi_box)
        .map(|(x, y)| x.lower.total_cmp(&y.lower))
        .find(|o| o.is_ne());
    let uppers = || {
        a.qi_box
            .iter()
            .zip(&b.qi_box)
            .map(|(x, y)| x.upper.total_cmp(&y.upper))
            .find(|o| o.is_ne())
    };
    lowers
        .or_else(uppers)
        .unwrap_or_else(|| a.row_ids.cmp(&b.row_ids))
}

fn best_cut(
    rows: &[usize],
    columns: &[&[f64]],
    ranges: &[(f64, f64)],
    guard: &SplitGuard,
    classes: &[ClassValue],
) -> Option<(Vec<usize>, Vec<usize>)> {
    if rows.len() < 2 * guard.k {
        return None;
    }
    let mut widths: Vec<(usize, f64)> = columns
        .iter()
        .enumerate()
        .filter_map(|(d, col)| {
            let span = ranges[d].1 - ranges[d].0;
            if span <= 0.0 {
                return None;
            }
            let (lo, hi) = rows
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(col[r]), hi.max(col[r])));
            let w = (hi - lo) / span;
            (w > 0.0).then_some((d, w))
        })
        .collect();
    // widest first; stable sort keeps the lowest index first among equals
    widths.sort_by(|a, b| b.1.total_cmp(&a.1));

    let mut values: Vec<f64> = Vec::with_capacity(rows.len());
    for (d, _) in widths {
        let col = columns[d];
        values.clear();
        values.extend(rows.iter().map(|&r| col[r]));
        values.sort_unstable_by(f64::total_cmp);
        let median = values[(values.len() - 1) / 2];
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= median);
        if !left.is_empty()
            && !right.is_empty()
            && guard.allows(&left, classes)
            && guard.allows(&right, classes)
        {
            return Some((left, right));
        }
    }
    None
}
