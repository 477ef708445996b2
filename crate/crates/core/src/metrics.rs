//! Utility of a publication: generalization loss, a nearest-neighbor
//! classifier per fragment with score-weighted voting, and class distortion.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassValue, Dataset};
use crate::mondrian::{AnonymizedFragment, PublishMode};

pub const DEFAULT_NEIGHBORS: usize = 5;

/// Average generalization width per published cell, each width divided by
/// the attribute's range in the original table. `ranges` is indexed by
/// feature ordinal. Attributes with an empty range contribute nothing.
pub fn information_loss(fragments: &[AnonymizedFragment], ranges: &[(f64, f64)]) -> Result<f64> {
    let rows = fragments.first().map_or(0, AnonymizedFragment::row_count);
    let attributes: usize = fragments.iter().map(|f| f.fragment.len()).sum();
    if rows == 0 || attributes == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for frag in fragments {
        if frag.row_count() != rows {
            return Err(Error::ShapeMismatch(format!(
                "fragments hold {} and {} rows",
                rows,
                frag.row_count()
            )));
        }
        for eq in &frag.classes {
            let mut per_row = 0.0;
            for (g, &f) in eq.qi_box.iter().zip(frag.fragment.features()) {
                let &(lo, hi) = ranges.get(f).ok_or(Error::IndexOutOfRange {
                    index: f,
                    len: ranges.len(),
                })?;
                if hi > lo {
                    per_row += g.width() / (hi - lo);
                }
            }
            sum += per_row * eq.size() as f64;
        }
    }
    Ok(sum / (rows as f64 * attributes as f64))
}

/// Nearest-neighbor classifier over one anonymized fragment. Every class is
/// represented by the midpoints of its box, scaled to the fragment's overall
/// envelope, and stands for one training tuple per published class value.
#[derive(Debug, Clone)]
pub struct KnnModel {
    features: Vec<usize>,
    lower: Vec<f64>,
    span: Vec<f64>,
    points: Vec<Vec<f64>>,
    /// Training tuples per class, most frequent value first.
    votes: Vec<Vec<(ClassValue, usize)>>,
}

impl KnnModel {
    pub fn new(train: &AnonymizedFragment) -> Result<Self> {
        if train.classes.is_empty() {
            return Err(Error::Empty("training fragment has no classes".into()));
        }
        let dims = train.fragment.len();
        let mut lower = vec![f64::INFINITY; dims];
        let mut upper = vec![f64::NEG_INFINITY; dims];
        for eq in &train.classes {
            if eq.qi_box.len() != dims {
                return Err(Error::ShapeMismatch(format!(
                    "class box has {} dimensions, fragment {dims}",
                    eq.qi_box.len()
                )));
            }
            for (d, g) in eq.qi_box.iter().enumerate() {
                lower[d] = lower[d].min(g.lower);
                upper[d] = upper[d].max(g.upper);
            }
        }
        let span: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| u - l).collect();
        let mut model = KnnModel {
            features: train.fragment.features().to_vec(),
            lower,
            span,
            points: Vec::new(),
            votes: Vec::new(),
        };
        for eq in &train.classes {
            let mid: Vec<f64> = eq.qi_box.iter().map(|g| g.midpoint()).collect();
            model.points.push(model.scale(&mid));
            let mut v: Vec<(ClassValue, usize)> = eq
                .class_counts
                .iter()
                .map(|(&c, &n)| match eq.publish_mode {
                    PublishMode::TupleLevel => (c, n),
                    PublishMode::EcLevel => (c, 1),
                })
                .collect();
            v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            model.votes.push(v);
        }
        Ok(model)
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    fn scale(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .enumerate()
            .map(|(d, &v)| {
                if self.span[d] > 0.0 {
                    (v - self.lower[d]) / self.span[d]
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Label and its vote share among the `neighbors` nearest training
    /// tuples. `row` holds this fragment's feature values in fragment order.
    /// Classes at the same distance as the last admitted neighbor share the
    /// remaining votes in proportion to their tuples.
    pub fn predict(&self, row: &[f64], neighbors: usize) -> Result<(ClassValue, f64)> {
        if row.len() != self.lower.len() {
            return Err(Error::ShapeMismatch(format!(
                "test row has {} values, fragment {}",
                row.len(),
                self.lower.len()
            )));
        }
        if neighbors == 0 {
            return Err(Error::InvalidParameter("neighbors must be positive".into()));
        }
        let q = self.scale(row);
        let mut order: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let mut tally: BTreeMap<ClassValue, f64> = BTreeMap::new();
        let mut left = neighbors as f64;
        let mut i = 0;
        while i < order.len() && left > 0.0 {
            let mut j = i;
            while j < order.len() && order[j].0 == order[i].0 {
                j += 1;
            }
            let tuples: usize = order[i..j]
                .iter()
                .map(|&(_, e)| self.votes[e].iter().map(|v| v.1).sum::<usize>())
                .sum();
            let weight = if tuples as f64 <= left { 1.0 } else { left / tuples as f64 };
            for &(_, e) in &order[i..j] {
                for &(c, n) in &self.votes[e] {
                    *tally.entry(c).or_insert(0.0) += weight * n as f64;
                }
            }
            left -= weight * tuples as f64;
            i = j;
        }
        let taken: f64 = tally.values().sum();
        let (label, votes) = argmax(&tally).ok_or(Error::Empty("no training tuples".into()))?;
        Ok((label, votes / taken))
    }
}

/// Largest value, smallest key on ties.
fn argmax(tally: &BTreeMap<ClassValue, f64>) -> Option<(ClassValue, f64)> {
    tally.iter().fold(None, |best, (&c, &v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((c, v)),
    })
}

/// Classifies with one [`KnnModel`] per fragment.
pub fn knn_predict(train: &AnonymizedFragment, row: &[f64], neighbors: usize) -> Result<(ClassValue, f64)> {
    KnnModel::new(train)?.predict(row, neighbors)
}

/// Ensemble over fragments: every fragment votes for its label with its
/// score; the label with the largest total wins.
#[derive(Debug, Clone)]
pub struct Ensemble {
    models: Vec<KnnModel>,
    neighbors: usize,
}

impl Ensemble {
    pub fn new(fragments: &[AnonymizedFragment], neighbors: usize) -> Result<Self> {
        Ok(Ensemble {
            models: fragments.iter().map(KnnModel::new).collect::<Result<_>>()?,
            neighbors,
        })
    }

    /// `row` holds all feature values, indexed by ordinal.
    pub fn predict(&self, row: &[f64]) -> Result<ClassValue> {
        let mut tally: BTreeMap<ClassValue, f64> = BTreeMap::new();
        for m in &self.models {
            let values: Vec<f64> = m
                .features
                .iter()
                .map(|&f| row.get(f).copied().ok_or(Error::IndexOutOfRange { index: f, len: row.len() }))
                .collect::<Result<_>>()?;
            let (label, score) = m.predict(&values, self.neighbors)?;
            *tally.entry(label).or_insert(0.0) += score;
        }
        argmax(&tally).map(|p| p.0).ok_or(Error::Empty("no fragments".into()))
    }
}

pub fn ensemble_predict(fragments: &[AnonymizedFragment], row: &[f64], neighbors: usize) -> Result<ClassValue> {
    Ensemble::new(fragments, neighbors)?.predict(row)
}

/// One-vs-rest F1 per class, averaged with weights equal to each class's
/// share of `truth`.
pub fn weighted_f_from_predictions(truth: &[ClassValue], predicted: &[ClassValue]) -> Result<f64> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("no test rows".into()));
    }
    let mut support: BTreeMap<ClassValue, usize> = BTreeMap::new();
    let mut hits: BTreeMap<ClassValue, usize> = BTreeMap::new();
    let mut calls: BTreeMap<ClassValue, usize> = BTreeMap::new();
    for (&t, &p) in truth.iter().zip(predicted) {
        *support.entry(t).or_insert(0) += 1;
        *calls.entry(p).or_insert(0) += 1;
        if t == p {
            *hits.entry(t).or_insert(0) += 1;
        }
    }
    let n = truth.len() as f64;
    let mut total = 0.0;
    for (c, &s) in &support {
        let tp = hits.get(c).copied().unwrap_or(0) as f64;
        let called = calls.get(c).copied().unwrap_or(0) as f64;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (s as f64 + called) };
        total += s as f64 / n * f1;
    }
    Ok(total)
}

/// Weighted F-measure of the fragment ensemble on `test`, whose class codes
/// must follow the training table's.
pub fn weighted_f_measure(fragments: &[AnonymizedFragment], test: &Dataset, neighbors: usize) -> Result<f64> {
    let ensemble = Ensemble::new(fragments, neighbors)?;
    let predicted: Vec<ClassValue> = (0..test.row_count())
        .into_par_iter()
        .map(|r| ensemble.predict(&test.feature_row(r)))
        .collect::<Result<_>>()?;
    weighted_f_from_predictions(&test.class_values(), &predicted)
}

/// Class values changed between two versions of the same publication:
/// tuples moved to another value at tuple level, values dropped at class
/// level.
pub fn distortion_count(before: &[AnonymizedFragment], after: &[AnonymizedFragment]) -> Result<usize> {
    if before.len() != after.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} fragments before, {} after",
            before.len(),
            after.len()
        )));
    }
    let mut total = 0;
    for (fb, fa) in before.iter().zip(after) {
        if fb.classes.len() != fa.classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} classes before, {} after",
                fb.classes.len(),
                fa.classes.len()
            )));
        }
        for (b, a) in fb.classes.iter().zip(&fa.classes) {
            if a.size() != b.size() {
                return Err(Error::ShapeMismatch("class sizes differ".into()));
            }
            total += match a.publish_mode {
                PublishMode::TupleLevel => b
                    .class_counts
                    .iter()
                    .map(|(c, &n)| n.saturating_sub(a.frequency(*c)))
                    .sum::<usize>(),
                PublishMode::EcLevel => b.class_set().filter(|c| !a.class_counts.contains_key(c)).count(),
            };
        }
    }
    Ok(total)
}

/// One row of a metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub k: usize,
    pub l: Option<usize>,
    pub delta: Option<f64>,
    pub dims: usize,
    pub strategy: String,
    pub info_loss: f64,
    pub weighted_f: Option<f64>,
    pub distortions: usize,
}

pub fn write_metrics<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Publication(format!("cannot write metrics: {e}")))?;
    }
    w.flush().map_err(|e| Error::io("metrics", e))?;
    Ok(())
}

pub fn write_metrics_file(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(file, rows)
}
