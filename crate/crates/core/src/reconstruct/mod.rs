//! Join non-reconstructability: checking whether published fragments can be
//! equijoined on the class attribute into groups smaller than `k`, and the
//! three strategies for preventing it.
//!
//! Two equivalence classes from different fragments join into
//! `sum_c freq(c, a) * freq(c, b)` tuples over their shared class values.
//! A fragmentation is safe when every joinable pair yields zero or at least
//! `k` tuples.

mod enforce;
mod graph;
mod versions;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ClassValue;
use crate::mondrian::{AnonymizedFragment, EquivalenceClass, PublishMode};

pub use enforce::{dgbe_enforce, delta_enforce, naive_enforce, purify_multiway, verify_delta};
pub use graph::{DependencyGraph, NodeRef};
pub use versions::{binomial, EXHAUSTIVE_LIMIT, count_versions, eta, eta_by_enumeration, EtaCache, EtaCounts};

/// Enforcement strategy for the non-reconstructability condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Every class is collapsed to its majority value.
    Naive,
    /// Dependency-graph walk changing one tuple at a time.
    Dgbe,
    /// Class-level publishing with a minimum equijoin selectivity.
    Delta,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Naive => "naive",
            Strategy::Dgbe => "dgbe",
            Strategy::Delta => "delta",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Strategy::Naive),
            "dgbe" => Ok(Strategy::Dgbe),
            "delta" => Ok(Strategy::Delta),
            other => Err(Error::InvalidParameter(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnforcementReport {
    pub strategy: Strategy,
    /// Tuple-level class values changed (naive, dgbe).
    pub distorted_class_values: usize,
    /// Class values dropped from class-level equivalence classes.
    pub removed_class_values: usize,
    /// Pair checks performed (join sizes or selectivities evaluated).
    pub pairs_checked: usize,
}

impl EnforcementReport {
    pub fn new(strategy: Strategy) -> Self {
        EnforcementReport {
            strategy,
            distorted_class_values: 0,
            removed_class_values: 0,
            pairs_checked: 0,
        }
    }

    /// Changed plus removed class values.
    pub fn total(&self) -> usize {
        self.distorted_class_values + self.removed_class_values
    }
}

/// A joinable pair that breaks the threshold.
///
/// At stage 1 the left side is a single class.
/// Later stages join the intermediate result of fragments `0..=stage-1` with
/// fragment `stage`; the left side then lists one class per joined fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub stage: usize,
    pub left: Vec<(usize, usize)>,
    pub fragment_b: usize,
    pub eq_b: usize,
    /// Join size, or selectivity for class-level checks.
    pub measure: f64,
    pub threshold: f64,
}

impl Violation {
    fn pair(fa: usize, ea: usize, fb: usize, eb: usize, measure: f64, threshold: f64) -> Self {
        Violation {
            stage: 1,
            left: vec![(fa, ea)],
            fragment_b: fb,
            eq_b: eb,
            measure,
            threshold,
        }
    }

    /// `fragment_a` cell of the violation report: fragment ids joined by `+`.
    pub fn fragment_a(&self) -> String {
        join_ids(self.left.iter().map(|p| p.0))
    }

    pub fn eq_a(&self) -> String {
        join_ids(self.left.iter().map(|p| p.1))
    }
}

fn join_ids(ids: impl Iterator<Item = usize>) -> String {
    ids.map(|i| i.to_string()).collect::<Vec<_>>().join("+")
}

/// Tuples produced by equijoining two classes on the class attribute.
pub fn eq_join_size(a: &EquivalenceClass, b: &EquivalenceClass) -> u64 {
    let (small, large) = if a.class_counts.len() <= b.class_counts.len() {
        (a, b)
    } else {
        (b, a)
    };
    small
        .class_counts
        .iter()
        .filter_map(|(c, &n)| large.class_counts.get(c).map(|&m| n as u64 * m as u64))
        .sum()
}

/// Every pair with `0 < join size < k` between two tuple-level fragments.
/// Fragment ids in the violations are 0 and 1.
pub fn check_non_reconstructability(
    f1: &AnonymizedFragment,
    f2: &AnonymizedFragment,
    k: usize,
) -> Vec<Violation> {
    pair_violations(0, f1, 1, f2, k)
}

pub(crate) fn pair_violations(
    ia: usize,
    fa: &AnonymizedFragment,
    ib: usize,
    fb: &AnonymizedFragment,
    k: usize,
) -> Vec<Violation> {
    let mut out = Vec::new();
    for (ea, a) in fa.classes.iter().enumerate() {
        for (eb, b) in fb.classes.iter().enumerate() {
            let size = eq_join_size(a, b);
            if size > 0 && size < k as u64 {
                out.push(Violation::pair(ia, ea, ib, eb, size as f64, k as f64));
            }
        }
    }
    out
}

/// Class counts of a partial join.
type Counts = Vec<(ClassValue, u64)>;
/// `(fragment, class)` pairs that produced a partial join.
type Origin = Vec<(usize, usize)>;

/// Checks the consecutive joins `I1 = F0 ⋈ F1`, `I2 = I1 ⋈ F2`, and so on.
/// Intermediate results are kept as class-count tables; identical tables are
/// checked once.
pub fn check_multiway(fragments: &[AnonymizedFragment], k: usize) -> Result<Vec<Violation>> {
    if fragments.len() < 2 {
        return Err(Error::InvalidParameter(
            "multiway check needs at least two fragments".into(),
        ));
    }
    let threshold = k as u64;
    // each intermediate table: counts plus the classes that produced it
    let mut current: Vec<(Counts, Origin)> = fragments[0]
        .classes
        .iter()
        .enumerate()
        .map(|(i, eq)| {
            let counts = eq.class_counts.iter().map(|(&c, &n)| (c, n as u64)).collect();
            (counts, vec![(0, i)])
        })
        .collect();
    let mut violations = Vec::new();
    for (stage, right) in fragments.iter().enumerate().skip(1) {
        let mut next: HashMap<Counts, Origin> = HashMap::new();
        for (counts, origin) in &current {
            for (eb, b) in right.classes.iter().enumerate() {
                let joined: Vec<(ClassValue, u64)> = counts
                    .iter()
                    .filter_map(|&(c, n)| b.class_counts.get(&c).map(|&m| (c, n * m as u64)))
                    .collect();
                let size: u64 = joined.iter().map(|p| p.1).sum();
                if size == 0 {
                    continue;
                }
                if size < threshold {
                    violations.push(Violation {
                        stage,
                        left: origin.clone(),
                        fragment_b: stage,
                        eq_b: eb,
                        measure: size as f64,
                        threshold: k as f64,
                    });
                }
                if stage + 1 < fragments.len() {
                    next.entry(joined).or_insert_with(|| {
                        let mut o = origin.clone();
                        o.push((stage, eb));
                        o
                    });
                }
            }
        }
        let mut tables: Vec<_> = next.into_iter().collect();
        tables.sort_by(|a, b| a.1.cmp(&b.1));
        current = tables;
    }
    Ok(violations)
}

/// Pairwise check across every pair of fragments.
pub fn check_all_pairs(fragments: &[AnonymizedFragment], k: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    for i in 0..fragments.len() {
        for j in i + 1..fragments.len() {
            out.extend(pair_violations(i, &fragments[i], j, &fragments[j], k));
        }
    }
    out
}

/// Converts a tuple-level fragment to class-level publishing. Each class keeps
/// the pre-conversion frequencies of its values, which are not published but
/// guide later removals.
pub fn to_ec_level(fragment: &AnonymizedFragment) -> AnonymizedFragment {
    let mut out = fragment.clone();
    for eq in &mut out.classes {
        eq.publish_mode = PublishMode::EcLevel;
    }
    out
}
