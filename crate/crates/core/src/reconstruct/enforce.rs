use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::mondrian::{AnonymizedFragment, EquivalenceClass, PublishMode};

use super::graph::DependencyGraph;
use super::versions::EtaCache;
use super::{check_multiway, eq_join_size, EnforcementReport, Strategy, Violation};

fn require_mode(fragments: &[AnonymizedFragment], mode: PublishMode) -> Result<()> {
    let wrong = fragments
        .iter()
        .flat_map(|f| &f.classes)
        .any(|eq| eq.publish_mode != mode);
    if wrong {
        let name = match mode {
            PublishMode::TupleLevel => "tuple-level",
            PublishMode::EcLevel => "class-level",
        };
        return Err(Error::InvalidParameter(format!("enforcement expects {name} classes")));
    }
    Ok(())
}

/// Collapses `eq` to its majority value; returns the tuples changed.
fn purify(eq: &mut EquivalenceClass) -> usize {
    let Some(major) = eq.majority() else { return 0 };
    let size = eq.size();
    let changed = size - eq.frequency(major);
    eq.class_counts.clear();
    eq.class_counts.insert(major, size);
    changed
}

/// Replaces every class's values with its majority value.
pub fn naive_enforce(fragments: &mut [AnonymizedFragment]) -> Result<EnforcementReport> {
    require_mode(fragments, PublishMode::TupleLevel)?;
    let mut report = EnforcementReport::new(Strategy::Naive);
    for eq in fragments.iter_mut().flat_map(|f| f.classes.iter_mut()) {
        report.distorted_class_values += purify(eq);
    }
    Ok(report)
}

/// Moves one tuple of the rarest non-majority value to the majority value.
fn shift_one(eq: &mut EquivalenceClass) -> bool {
    let Some(major) = eq.majority() else { return false };
    let minor = eq
        .class_counts
        .iter()
        .filter(|(&c, _)| c != major)
        .fold(None, |best: Option<(_, usize)>, (&c, &n)| match best {
            Some((_, m)) if m <= n => best,
            _ => Some((c, n)),
        });
    let Some((minor, n)) = minor else { return false };
    if n == 1 {
        eq.class_counts.remove(&minor);
    } else {
        eq.class_counts.insert(minor, n - 1);
    }
    *eq.class_counts.get_mut(&major).expect("majority present") += 1;
    true
}

/// Drops the value with the lowest pre-conversion frequency.
fn drop_rarest(eq: &mut EquivalenceClass) -> Option<usize> {
    if eq.class_counts.len() < 2 {
        return None;
    }
    let minor = eq.minority()?;
    eq.class_counts.remove(&minor)
}

/// Shared walk of the dependency graph. `violates` tests a live pair and
/// `change` modifies the neighbor, returning false when it cannot.
fn walk<V, C>(
    fragments: &mut [AnonymizedFragment],
    graph: &DependencyGraph,
    report: &mut EnforcementReport,
    mut violates: V,
    mut change: C,
) -> Result<()>
where
    V: FnMut(&EquivalenceClass, &EquivalenceClass) -> Result<bool>,
    C: FnMut(&mut EquivalenceClass, &mut EnforcementReport) -> bool,
{
    let n = graph.node_count();
    let mut budget = vec![0usize; graph.component_count()];
    for id in 0..n {
        let node = graph.node(id);
        budget[graph.component_of(id)] += fragments[node.fragment].classes[node.eq].size();
    }
    for b in &mut budget {
        *b = b.saturating_mul(*b);
    }
    let mut visited = vec![false; n];
    let mut queued = vec![false; n];

    let get = |fragments: &[AnonymizedFragment], id: usize| -> EquivalenceClass {
        let node = graph.node(id);
        fragments[node.fragment].classes[node.eq].clone()
    };
    let mut step = |fragments: &mut [AnonymizedFragment], id: usize, report: &mut EnforcementReport| -> Result<()> {
        let component = graph.component_of(id);
        let node = graph.node(id);
        if budget[component] == 0 || !change(&mut fragments[node.fragment].classes[node.eq], report) {
            return Err(Error::EnforcementStuck { component });
        }
        budget[component] -= 1;
        Ok(())
    };

    let mut queue = VecDeque::new();
    for &root in graph.roots() {
        queue.push_back(root);
        queued[root] = true;
        while let Some(current) = queue.pop_front() {
            visited[current] = true;
            for un in graph.neighbors(current) {
                if visited[un] {
                    continue;
                }
                report.pairs_checked += 1;
                loop {
                    let cur = get(fragments, current);
                    if !violates(&cur, &get(fragments, un))? {
                        break;
                    }
                    step(fragments, un, report)?;
                    // restore pairs between `un` and nodes already settled
                    let settled: Vec<usize> =
                        graph.neighbors(un).into_iter().filter(|&v| visited[v] && v != current).collect();
                    loop {
                        let mine = get(fragments, un);
                        let mut broken = false;
                        for &v in &settled {
                            report.pairs_checked += 1;
                            if violates(&mine, &get(fragments, v))? {
                                broken = true;
                                break;
                            }
                        }
                        if !broken {
                            break;
                        }
                        step(fragments, un, report)?;
                    }
                }
                if !queued[un] {
                    queued[un] = true;
                    queue.push_back(un);
                }
            }
        }
    }
    Ok(())
}

/// Dependency-graph enforcement: walks each component breadth-first and, while
/// the current class and an unvisited neighbor join into fewer than `k`
/// tuples, moves one of the neighbor's rarest tuples to its majority value.
/// With more than two fragments, classes still breaking a multiway join are
/// collapsed to their majority afterwards.
pub fn dgbe_enforce(
    fragments: &mut [AnonymizedFragment],
    graph: &DependencyGraph,
    k: usize,
) -> Result<EnforcementReport> {
    require_mode(fragments, PublishMode::TupleLevel)?;
    let mut report = EnforcementReport::new(Strategy::Dgbe);
    let threshold = k as u64;
    walk(
        fragments,
        graph,
        &mut report,
        |a, b| {
            let size = eq_join_size(a, b);
            Ok(size > 0 && size < threshold)
        },
        |eq, report| {
            let moved = shift_one(eq);
            if moved {
                report.distorted_class_values += 1;
            }
            moved
        },
    )?;
    if fragments.len() > 2 {
        report.distorted_class_values += purify_multiway(fragments, k)?;
    }
    Ok(report)
}

/// Collapses the right-hand class of every multiway violation until the
/// consecutive joins are clean. Returns the tuples changed.
pub fn purify_multiway(fragments: &mut [AnonymizedFragment], k: usize) -> Result<usize> {
    let mut changed = 0;
    loop {
        let violations = check_multiway(fragments, k)?;
        if violations.is_empty() {
            return Ok(changed);
        }
        let mut progress = false;
        for v in violations {
            let eq = &mut fragments[v.fragment_b].classes[v.eq_b];
            if eq.distinct_classes() > 1 {
                changed += purify(eq);
                progress = true;
            }
        }
        if !progress {
            return Err(Error::Internal(
                "multiway violation between classes that are already pure".into(),
            ));
        }
    }
}

/// Selectivity enforcement on class-level fragments: while a class and an
/// unvisited neighbor share values and their selectivity is below `delta`,
/// the neighbor drops its least frequent value.
pub fn delta_enforce(
    fragments: &mut [AnonymizedFragment],
    graph: &DependencyGraph,
    delta: f64,
    k: usize,
) -> Result<EnforcementReport> {
    check_delta(delta)?;
    require_mode(fragments, PublishMode::EcLevel)?;
    let mut report = EnforcementReport::new(Strategy::Delta);
    let mut cache = EtaCache::default();
    walk(
        fragments,
        graph,
        &mut report,
        |a, b| below(&mut cache, a, b, delta, k),
        |eq, report| {
            let dropped = drop_rarest(eq).is_some();
            if dropped {
                report.removed_class_values += 1;
            }
            dropped
        },
    )?;
    Ok(report)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1], got {delta}")));
    }
    Ok(())
}

fn below(cache: &mut EtaCache, a: &EquivalenceClass, b: &EquivalenceClass, delta: f64, k: usize) -> Result<bool> {
    if !a.shares_class_with(b) {
        return Ok(false);
    }
    let counts = cache.counts(a, b, k)?;
    Ok((counts.preserving as f64) < delta * counts.total as f64)
}

/// Every pair of classes, across every pair of fragments, that shares a value
/// and has selectivity below `delta`.
pub fn verify_delta(fragments: &[AnonymizedFragment], delta: f64, k: usize) -> Result<Vec<Violation>> {
    check_delta(delta)?;
    let mut cache = EtaCache::default();
    let mut out = Vec::new();
    for i in 0..fragments.len() {
        for j in i + 1..fragments.len() {
            for (ea, a) in fragments[i].classes.iter().enumerate() {
                for (eb, b) in fragments[j].classes.iter().enumerate() {
                    if below(&mut cache, a, b, delta, k)? {
                        out.push(Violation::pair(i, ea, j, eb, cache.eta(a, b, k)?, delta));
                    }
                }
            }
        }
    }
    Ok(out)
}
