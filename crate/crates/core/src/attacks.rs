//! The adversary's view of a publication: membership likelihood of a subject
//! and an audit of the published fragments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldiversity::{verify_ldiv_classes, LdivJoinFailure};
use crate::model::{ClassValue, Dataset};
use crate::mondrian::{AnonymizedFragment, EquivalenceClass, PublishMode};
use crate::reconstruct::{check_multiway, verify_delta, Violation};

/// Tuples a class contributes to a class-attribute join, per value. A
/// class-level class contributes each listed value once; its ambiguous slots
/// join nothing.
fn join_weights(eq: &EquivalenceClass) -> impl Iterator<Item = (ClassValue, u128)> + '_ {
    eq.class_counts.iter().map(move |(&c, &n)| {
        let w = match eq.publish_mode {
            PublishMode::TupleLevel => n,
            PublishMode::EcLevel => 1,
        };
        (c, w as u128)
    })
}

fn product_sum(tables: &[BTreeMap<ClassValue, u128>]) -> Result<u128> {
    let Some((first, rest)) = tables.split_first() else {
        return Ok(0);
    };
    let mut total = 0u128;
    'values: for (c, &w) in first {
        let mut prod = w;
        for t in rest {
            match t.get(c) {
                Some(&x) => prod = prod.checked_mul(x).ok_or(Error::CountOverflow)?,
                None => continue 'values,
            }
        }
        total = total.checked_add(prod).ok_or(Error::CountOverflow)?;
    }
    Ok(total)
}

/// Class index of the equivalence class containing `values`, if any.
fn locate(fragment: &AnonymizedFragment, index: usize, values: &[f64]) -> Result<Option<usize>> {
    let mut hits = fragment
        .classes
        .iter()
        .enumerate()
        .filter(|(_, eq)| eq.contains_point(values))
        .map(|(i, _)| i);
    let first = hits.next();
    let extra = hits.count();
    if extra > 0 {
        return Err(Error::AmbiguousMatch {
            fragment: index,
            matches: extra + 1,
        });
    }
    Ok(first)
}

/// Likelihood that a subject with feature values `subject` (indexed by
/// feature ordinal) is in the publication: the join size of the classes it
/// falls into, over the join size of the whole fragments. Zero when some
/// fragment has no class containing the subject.
pub fn membership_likelihood(subject: &[f64], fragments: &[AnonymizedFragment]) -> Result<f64> {
    if fragments.is_empty() {
        return Err(Error::Empty("no fragments".into()));
    }
    let mut matched = Vec::with_capacity(fragments.len());
    for (i, frag) in fragments.iter().enumerate() {
        let values = subject_slice(subject, frag)?;
        match locate(frag, i, &values)? {
            Some(e) => matched.push(join_weights(&frag.classes[e]).collect::<BTreeMap<_, _>>()),
            None => return Ok(0.0),
        }
    }
    let totals: Vec<BTreeMap<ClassValue, u128>> = fragments
        .iter()
        .map(|frag| {
            let mut t = BTreeMap::new();
            for eq in &frag.classes {
                for (c, w) in join_weights(eq) {
                    *t.entry(c).or_insert(0) += w;
                }
            }
            t
        })
        .collect();
    let denominator = product_sum(&totals)?;
    if denominator == 0 {
        return Ok(0.0);
    }
    Ok(product_sum(&matched)? as f64 / denominator as f64)
}

fn subject_slice(subject: &[f64], frag: &AnonymizedFragment) -> Result<Vec<f64>> {
    frag.fragment
        .features()
        .iter()
        .map(|&f| {
            subject.get(f).copied().ok_or(Error::IndexOutOfRange {
                index: f,
                len: subject.len(),
            })
        })
        .collect()
}

/// Subjects for membership sampling: `members` rows drawn from the table and
/// `non_members` synthetic rows drawn uniformly from each feature's range.
pub fn sample_subjects(dataset: &Dataset, members: usize, non_members: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranges = dataset.feature_ranges();
    let mut out = Vec::with_capacity(members + non_members);
    if dataset.row_count() > 0 {
        for _ in 0..members {
            out.push(dataset.feature_row(rng.random_range(0..dataset.row_count())));
        }
    }
    for _ in 0..non_members {
        out.push(
            ranges
                .iter()
                .map(|&(lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect(),
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipStats {
    pub subjects: usize,
    pub matched: usize,
    pub ambiguous: usize,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AuditOptions {
    pub k: usize,
    /// Audit as an l-diversity publication.
    pub l: Option<usize>,
    /// Audit as a selectivity publication.
    pub delta: Option<f64>,
    /// Source segment of every class, per fragment (l-diversity only).
    pub segments: Option<Vec<Vec<usize>>>,
    pub subjects: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub checks: Vec<CheckResult>,
    pub violations: Vec<Violation>,
    pub ldiv_failures: Vec<(usize, usize, LdivJoinFailure)>,
    pub membership: Option<MembershipStats>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{status}  {}: {}", c.name, c.detail);
        }
        for v in &self.violations {
            let _ = writeln!(
                out,
                "  violation: fragment {} class {} with fragment {} class {}: {} (threshold {})",
                v.fragment_a(),
                v.eq_a(),
                v.fragment_b,
                v.eq_b,
                v.measure,
                v.threshold
            );
        }
        for (fa, fb, f) in &self.ldiv_failures {
            let _ = writeln!(
                out,
                "  l-diversity join: fragment {fa} class {} with fragment {fb} class {}: {} tuples, {} values",
                f.eq_a, f.eq_b, f.join_size, f.distinct_values
            );
        }
        if let Some(m) = &self.membership {
            let _ = writeln!(
                out,
                "membership likelihood over {} subjects ({} matched, {} ambiguous): min {:.3e} median {:.3e} max {:.3e}",
                m.subjects, m.matched, m.ambiguous, m.min, m.median, m.max
            );
        }
        out
    }
}

/// Checks a publication for per-class anonymity and join safety, and samples
/// membership likelihoods.
///
/// For l-diversity the join check pairs classes from the same segment when
/// the segment map is known, and otherwise pairs classes with identical class
/// sets; classes from different segments are not expected to satisfy the
/// pairwise `k` condition.
pub fn audit(published: &[AnonymizedFragment], options: &AuditOptions) -> Result<AuditReport> {
    let k = options.k;
    let mut checks = Vec::new();
    let mut violations = Vec::new();
    let mut ldiv_failures = Vec::new();

    let small: Vec<String> = published
        .iter()
        .enumerate()
        .flat_map(|(f, frag)| {
            frag.classes
                .iter()
                .enumerate()
                .filter(|(_, eq)| eq.size() < k)
                .map(move |(e, eq)| format!("{f}/{e} has {}", eq.size()))
        })
        .collect();
    checks.push(CheckResult {
        name: "fragment k-anonymity".into(),
        passed: small.is_empty(),
        detail: if small.is_empty() {
            format!("every class has at least {k} tuples")
        } else {
            small.join(", ")
        },
    });

    if published.len() >= 2 {
        if let Some(l) = options.l {
            let thin: Vec<String> = published
                .iter()
                .enumerate()
                .flat_map(|(f, frag)| {
                    frag.classes
                        .iter()
                        .enumerate()
                        .filter(|(_, eq)| eq.distinct_classes() < l)
                        .map(move |(e, eq)| format!("{f}/{e} has {}", eq.distinct_classes()))
                })
                .collect();
            checks.push(CheckResult {
                name: "fragment l-diversity".into(),
                passed: thin.is_empty(),
                detail: if thin.is_empty() {
                    format!("every class has at least {l} class values")
                } else {
                    thin.join(", ")
                },
            });
            let mut pairs = 0;
            for a in 0..published.len() {
                for b in a + 1..published.len() {
                    let groups = pair_groups(published, options.segments.as_deref(), a, b);
                    for (xs, ys, level) in groups {
                        let ca: Vec<_> = xs.iter().map(|&i| published[a].classes[i].clone()).collect();
                        let cb: Vec<_> = ys.iter().map(|&j| published[b].classes[j].clone()).collect();
                        let report = verify_ldiv_classes(&ca, &cb, k, level);
                        pairs += report.pairs_checked;
                        for mut f in report.failures {
                            f.eq_a = xs[f.eq_a];
                            f.eq_b = ys[f.eq_b];
                            ldiv_failures.push((a, b, f));
                        }
                    }
                }
            }
            let basis = if options.segments.is_some() {
                "same-segment"
            } else {
                "equal class set"
            };
            checks.push(CheckResult {
                name: "l-diversity join".into(),
                passed: ldiv_failures.is_empty(),
                detail: format!("{pairs} {basis} pairs, {} failures", ldiv_failures.len()),
            });
        } else if let Some(delta) = options.delta {
            violations = verify_delta(published, delta, k)?;
            checks.push(CheckResult {
                name: "equijoin selectivity".into(),
                passed: violations.is_empty(),
                detail: format!("{} pairs below delta = {delta}", violations.len()),
            });
        } else {
            violations = check_multiway(published, k)?;
            checks.push(CheckResult {
                name: "join non-reconstructability".into(),
                passed: violations.is_empty(),
                detail: format!("{} joins with fewer than {k} tuples", violations.len()),
            });
        }
    }

    let membership = if options.subjects.is_empty() {
        None
    } else {
        let results: Vec<Result<f64>> = options
            .subjects
            .par_iter()
            .map(|s| membership_likelihood(s, published))
            .collect();
        let mut values = Vec::new();
        let mut ambiguous = 0;
        for r in results {
            match r {
                Ok(v) => values.push(v),
                Err(Error::AmbiguousMatch { .. }) => ambiguous += 1,
                Err(e) => return Err(e),
            }
        }
        values.sort_by(f64::total_cmp);
        let pick = |i: usize| values.get(i).copied().unwrap_or(0.0);
        Some(MembershipStats {
            subjects: options.subjects.len(),
            matched: values.iter().filter(|&&v| v > 0.0).count(),
            ambiguous,
            min: pick(0),
            median: if values.is_empty() { 0.0 } else { pick((values.len() - 1) / 2) },
            max: values.last().copied().unwrap_or(0.0),
        })
    };

    Ok(AuditReport {
        checks,
        violations,
        ldiv_failures,
        membership,
    })
}

/// Groups of classes of fragments `a` and `b` expected to join safely, with
/// the diversity level each join must show.
fn pair_groups(
    published: &[AnonymizedFragment],
    segments: Option<&[Vec<usize>]>,
    a: usize,
    b: usize,
) -> Vec<(Vec<usize>, Vec<usize>, usize)> {
    type Key = Vec<ClassValue>;
    let mut by_key: BTreeMap<(usize, Key), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (side, f) in [(0, a), (1, b)] {
        for (e, eq) in published[f].classes.iter().enumerate() {
            let set: Key = eq.class_set().collect();
            let group = match segments {
                Some(s) => s[f][e],
                None => 0,
            };
            let key = match segments {
                Some(_) => (group, Vec::new()),
                None => (0, set),
            };
            let slot = by_key.entry(key).or_default();
            if side == 0 {
                slot.0.push(e);
            } else {
                slot.1.push(e);
            }
        }
    }
    by_key
        .into_values()
        .filter(|(x, y)| !x.is_empty() && !y.is_empty())
        .map(|(x, y)| {
            let level = x
                .iter()
                .flat_map(|&i| published[a].classes[i].class_set())
                .chain(y.iter().flat_map(|&j| published[b].classes[j].class_set()))
                .collect::<BTreeSet<_>>()
                .len();
            (x, y, level)
        })
        .collect()
}
