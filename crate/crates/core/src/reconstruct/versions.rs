//! Versions of class-level equivalence classes and equijoin selectivity.
//!
//! A class-level class of `s` tuples publishing `m` values can stand for any
//! frequency vector with every entry at least one and total `s`; each such
//! vector is one version. Selectivity `eta(a, b, k)` is the fraction of
//! version pairs whose join has at least `k` tuples.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::ClassValue;
use crate::mondrian::EquivalenceClass;

/// Version pairs above the limit are counted with the frequency-vector
/// recurrence instead of being enumerated.
pub const EXHAUSTIVE_LIMIT: u128 = 100_000;

/// Binomial coefficient in 128-bit arithmetic.
pub fn binomial(n: u64, r: u64) -> Result<u128> {
    if r > n {
        return Ok(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        // acc * (n - i) is divisible by i + 1 at every step
        acc = acc
            .checked_mul((n - i) as u128)
            .ok_or(Error::CountOverflow)?
            / (i as u128 + 1);
    }
    Ok(acc)
}

/// Number of versions of a class-level equivalence class.
pub fn count_versions(eq: &EquivalenceClass) -> Result<u128> {
    versions_of(eq.size() as u64, eq.distinct_classes() as u64)
}

fn versions_of(size: u64, values: u64) -> Result<u128> {
    if values == 0 || values > size {
        return Err(Error::InvalidParameter(format!(
            "{values} class values cannot fill {size} tuples"
        )));
    }
    binomial(size - 1, values - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EtaCounts {
    /// Version pairs joining into at least `k` tuples.
    pub preserving: u128,
    pub total: u128,
}

impl EtaCounts {
    pub fn ratio(&self) -> f64 {
        self.preserving as f64 / self.total as f64
    }
}

/// Everything selectivity depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Shape {
    size_a: u64,
    values_a: u64,
    size_b: u64,
    values_b: u64,
    shared: u64,
    k: u64,
}

impl Shape {
    fn of(a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<Self> {
        let shared = a.class_set().filter(|c| b.class_counts.contains_key(c)).count();
        if shared == 0 {
            return Err(Error::NoSharedClass);
        }
        Ok(Shape {
            size_a: a.size() as u64,
            values_a: a.distinct_classes() as u64,
            size_b: b.size() as u64,
            values_b: b.distinct_classes() as u64,
            shared: shared as u64,
            k: k as u64,
        })
    }

    fn total(&self) -> Result<u128> {
        versions_of(self.size_a, self.values_a)?
            .checked_mul(versions_of(self.size_b, self.values_b)?)
            .ok_or(Error::CountOverflow)
    }
}

/// Selectivity of two class-level equivalence classes.
pub fn eta(a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<f64> {
    EtaCache::default().eta(a, b, k)
}

/// Memoized selectivity.
#[derive(Debug, Default)]
pub struct EtaCache {
    memo: HashMap<Shape, EtaCounts>,
}

impl EtaCache {
    pub fn eta(&mut self, a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<f64> {
        self.counts(a, b, k).map(|c| c.ratio())
    }

    pub fn counts(&mut self, a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<EtaCounts> {
        let shape = Shape::of(a, b, k)?;
        if let Some(&hit) = self.memo.get(&shape) {
            return Ok(hit);
        }
        let total = shape.total()?;
        let counts = if total <= EXHAUSTIVE_LIMIT {
            enumerate_shape(&shape)?
        } else {
            count_by_vectors(&shape)?
        };
        self.memo.insert(shape, counts);
        Ok(counts)
    }

    /// Forces the frequency-vector count regardless of size.
    pub fn counts_by_vectors(a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<EtaCounts> {
        count_by_vectors(&Shape::of(a, b, k)?)
    }
}

/// All compositions of `total` into `parts` positive integers.
fn compositions(total: u64, parts: u64) -> Vec<Vec<u64>> {
    fn go(left: u64, parts: u64, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 1..=left - (parts - 1) {
            prefix.push(first);
            go(left - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && parts <= total {
        go(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

fn enumerate_shape(shape: &Shape) -> Result<EtaCounts> {
    let r = shape.shared as usize;
    let a = compositions(shape.size_a, shape.values_a);
    let b = compositions(shape.size_b, shape.values_b);
    let mut preserving = 0u128;
    for va in &a {
        for vb in &b {
            let join: u64 = va[..r].iter().zip(&vb[..r]).map(|(x, y)| x * y).sum();
            if join >= shape.k {
                preserving += 1;
            }
        }
    }
    Ok(EtaCounts {
        preserving,
        total: shape.total()?,
    })
}

/// Counts version pairs by walking the shared values one at a time.
///
/// The state after `d` shared values is the excess (frequency minus one)
/// spent on each side and the join size so far. Only states still below `k`
/// are tracked; each surviving final state is weighted by the ways the
/// remaining excess can go to the values the two sides do not share.
fn count_by_vectors(shape: &Shape) -> Result<EtaCounts> {
    let total = shape.total()?;
    let excess_a = shape.size_a - shape.values_a;
    let excess_b = shape.size_b - shape.values_b;
    let own_a = shape.values_a - shape.shared;
    let own_b = shape.values_b - shape.shared;
    let k = shape.k;

    let mut states: HashMap<(u64, u64, u64), u128> = HashMap::new();
    states.insert((0, 0, 0), 1);
    for _ in 0..shape.shared {
        let mut next: HashMap<(u64, u64, u64), u128> = HashMap::new();
        for (&(ea, eb, acc), &n) in &states {
            for fa in 1..=1 + excess_a - ea {
                if acc + fa >= k {
                    break;
                }
                for fb in 1..=1 + excess_b - eb {
                    let joined = acc + fa * fb;
                    if joined >= k {
                        break;
                    }
                    let slot = next.entry((ea + fa - 1, eb + fb - 1, joined)).or_insert(0);
                    *slot = slot.checked_add(n).ok_or(Error::CountOverflow)?;
                }
            }
        }
        states = next;
    }

    let completions = |excess: u64, own: u64, spent: u64| -> Result<u128> {
        let left = excess - spent;
        if own == 0 {
            Ok(u128::from(left == 0))
        } else {
            binomial(left + own - 1, own - 1)
        }
    };
    let mut failing = 0u128;
    for (&(ea, eb, _), &n) in &states {
        let w = completions(excess_a, own_a, ea)?
            .checked_mul(completions(excess_b, own_b, eb)?)
            .and_then(|w| w.checked_mul(n))
            .ok_or(Error::CountOverflow)?;
        failing = failing.checked_add(w).ok_or(Error::CountOverflow)?;
    }
    Ok(EtaCounts {
        preserving: total - failing,
        total,
    })
}

/// Selectivity counted by joining every version of `a` with every version of
/// `b`, matching class values by identity.
pub fn eta_by_enumeration(a: &EquivalenceClass, b: &EquivalenceClass, k: usize) -> Result<EtaCounts> {
    Shape::of(a, b, k)?;
    let ca: Vec<ClassValue> = a.class_set().collect();
    let cb: Vec<ClassValue> = b.class_set().collect();
    let va = compositions(a.size() as u64, ca.len() as u64);
    let vb = compositions(b.size() as u64, cb.len() as u64);
    let mut preserving = 0u128;
    for x in &va {
        for y in &vb {
            let mut join = 0u64;
            for (i, c) in ca.iter().enumerate() {
                if let Ok(j) = cb.binary_search(c) {
                    join += x[i] * y[j];
                }
            }
            if join >= k as u64 {
                preserving += 1;
            }
        }
    }
    Ok(EtaCounts {
        preserving,
        total: (va.len() * vb.len()) as u128,
    })
}
