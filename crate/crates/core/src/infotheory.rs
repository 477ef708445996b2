//! Mutual information and the fragmentation objective.
//!
//! Numeric attributes are discretized into equal-width bins before any
//! entropy is taken; categorical codes are used as they are. All quantities
//! are in bits.
//!
//! The fragmentation objective sums, over fragments, the mean relevance of
//! the fragment's features to the class minus their mean pairwise
//! redundancy:
//!
//! ```text
//! score(F) = sum_t [ (1/|A_t|) sum_{j in A_t} I(class, j)
//!                  - (1/|A_t|^2) sum_{i in A_t} sum_{j in A_t} I(i, j) ]
//! ```
//!
//! The redundancy sum runs over all ordered pairs, diagonal included, so a
//! lone feature contributes `I(class, f) - H(f)`.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AttributeKind, Dataset, Fragment, Fragmentation};

pub const DEFAULT_BINS: usize = 10;

/// Equal-width bin index of every value. A constant column maps to bin 0.
pub fn discretize(column: &[f64], bins: usize) -> Vec<u32> {
    let (lo, hi) = column
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let last = bins.saturating_sub(1) as u32;
    column
        .iter()
        .map(|&v| {
            if span > 0.0 {
                (((v - lo) / span * bins as f64).floor() as u32).min(last)
            } else {
                0
            }
        })
        .collect()
}

// Counts are sorted before summation so that any two tables with the same
// multiset of cell counts get bit-identical entropies.
fn entropy_from_counts(mut counts: Vec<usize>, n: usize) -> f64 {
    counts.sort_unstable();
    let n = n as f64;
    counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn entropy_of_codes(codes: &[u32]) -> f64 {
    let mut counts: HashMap<u32, usize> = HashMap::new();
    for &c in codes {
        *counts.entry(c).or_default() += 1;
    }
    entropy_from_counts(counts.into_values().collect(), codes.len())
}

pub fn joint_entropy_of_codes(x: &[u32], y: &[u32]) -> f64 {
    let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *counts.entry((a, b)).or_default() += 1;
    }
    entropy_from_counts(counts.into_values().collect(), x.len())
}

/// `H(X) + H(Y) - H(X,Y)` on already-discretized columns, clamped at zero.
pub fn mutual_information_of_codes(x: &[u32], y: &[u32]) -> f64 {
    let mi = entropy_of_codes(x) + entropy_of_codes(y) - joint_entropy_of_codes(x, y);
    mi.max(0.0)
}

fn check_bins(bins: usize) -> Result<()> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    Ok(())
}

/// Shannon entropy (bits) of the equal-width binned column.
pub fn entropy(column: &[f64], bins: usize) -> Result<f64> {
    check_bins(bins)?;
    if column.is_empty() {
        return Err(Error::Empty("entropy of an empty column".into()));
    }
    Ok(entropy_of_codes(&discretize(column, bins)))
}

/// Mutual information (bits) between two equal-width binned columns.
pub fn mutual_information(x: &[f64], y: &[f64], bins: usize) -> Result<f64> {
    check_bins(bins)?;
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::Empty("mutual information of empty columns".into()));
    }
    Ok(mutual_information_of_codes(
        &discretize(x, bins),
        &discretize(y, bins),
    ))
}

/// Symmetric matrix of pairwise mutual information over the features and the
/// class. Entry `(i, i)` is the entropy of attribute `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMatrix {
    names: Vec<String>,
    values: Vec<f64>,
    dim: usize,
    class_index: usize,
}

impl MiMatrix {
    /// Builds a matrix from explicit values; features occupy indices
    /// `0..dim-1` and the class the last index. Rejects asymmetric or
    /// negative input.
    pub fn from_rows(names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim < 2 || names.len() != dim {
            return Err(Error::InvalidParameter(
                "matrix needs at least one feature plus the class, and one name per row".into(),
            ));
        }
        let mut values = Vec::with_capacity(dim * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::LengthMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) || v != rows[j][i] {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i},{j}) must be finite, non-negative and symmetric"
                    )));
                }
                values.push(v);
            }
        }
        Ok(MiMatrix {
            names,
            values,
            dim,
            class_index: dim - 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feature_count(&self) -> usize {
        self.dim - 1
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    /// `I(class, feature)`.
    pub fn relevance(&self, feature: usize) -> f64 {
        self.get(self.class_index, feature)
    }

    /// The sub-matrix over `features` (in the given order) and the class.
    pub fn restrict(&self, features: &[usize]) -> MiMatrix {
        let idx: Vec<usize> = features
            .iter()
            .copied()
            .chain(std::iter::once(self.class_index))
            .collect();
        let dim = idx.len();
        let mut values = Vec::with_capacity(dim * dim);
        for &i in &idx {
            for &j in &idx {
                values.push(self.get(i, j));
            }
        }
        MiMatrix {
            names: idx.iter().map(|&i| self.names[i].clone()).collect(),
            values,
            dim,
            class_index: dim - 1,
        }
    }

    /// CSV with attribute names along the first row and column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for name in &self.names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for i in 0..self.dim {
            out.push_str(&self.names[i]);
            for j in 0..self.dim {
                let _ = write!(out, ",{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise mutual information over every feature and the class.
pub fn build_mi_matrix(dataset: &Dataset, bins: usize) -> Result<MiMatrix> {
    check_bins(bins)?;
    let n = dataset.feature_count();
    if n == 0 {
        return Err(Error::InvalidParameter("dataset has no feature attributes".into()));
    }
    if dataset.row_count() == 0 {
        return Err(Error::Empty("dataset has no rows".into()));
    }
    log::debug!("building {n}+1 square MI matrix with {bins} bins");

    let mut codes: Vec<Vec<u32>> = (0..n)
        .map(|f| match dataset.feature_kind(f) {
            AttributeKind::Numeric => discretize(dataset.feature_column(f), bins),
            AttributeKind::Categorical => {
                dataset.feature_column(f).iter().map(|&v| v as u32).collect()
            }
        })
        .collect();
    codes.push(dataset.class_values().iter().map(|c| c.0).collect());

    let dim = n + 1;
    let pairs: Vec<(usize, usize)> = (0..dim).flat_map(|i| (i..dim).map(move |j| (i, j))).collect();
    let cells: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                entropy_of_codes(&codes[i])
            } else {
                mutual_information_of_codes(&codes[i], &codes[j])
            }
        })
        .collect();
    let mut values = vec![0.0; dim * dim];
    for (&(i, j), v) in pairs.iter().zip(cells) {
        values[i * dim + j] = v;
        values[j * dim + i] = v;
    }
    let mut names: Vec<String> = (0..n).map(|f| dataset.schema().feature_name(f).to_string()).collect();
    names.push(dataset.schema().class_name().to_string());
    Ok(MiMatrix {
        names,
        values,
        dim,
        class_index: n,
    })
}

fn check_fragments(fragments: &[Fragment], mi: &MiMatrix) -> Result<()> {
    let mut seen = vec![false; mi.feature_count()];
    for frag in fragments {
        for &f in frag.features() {
            let slot = seen.get_mut(f).ok_or(Error::IndexOutOfRange {
                index: f,
                len: mi.feature_count(),
            })?;
            if *slot {
                return Err(Error::InvalidFragmentation(format!(
                    "feature {f} appears in two fragments"
                )));
            }
            *slot = true;
        }
    }
    Ok(())
}

fn fragment_term(features: &[usize], mi: &MiMatrix) -> f64 {
    let size = features.len() as f64;
    let relevance: f64 = features.iter().map(|&j| mi.relevance(j)).sum();
    let redundancy: f64 = features
        .iter()
        .flat_map(|&i| features.iter().map(move |&j| mi.get(i, j)))
        .sum();
    relevance / size - redundancy / (size * size)
}

/// Fragmentation score: relevance minus redundancy, summed over fragments.
/// Accepts partial fragmentations (not every feature assigned).
pub fn fmrmr(fragments: &[Fragment], mi: &MiMatrix) -> Result<f64> {
    check_fragments(fragments, mi)?;
    Ok(fragments.iter().map(|f| fragment_term(f.features(), mi)).sum())
}

/// Running sums for one fragment under construction.
#[derive(Debug, Clone, Default)]
struct FragmentSums {
    size: usize,
    relevance: f64,
    redundancy: f64,
}

impl FragmentSums {
    fn term(relevance: f64, redundancy: f64, size: usize) -> f64 {
        if size == 0 {
            return 0.0;
        }
        let s = size as f64;
        relevance / s - redundancy / (s * s)
    }

    /// Score change from adding `attr`, given `cross = sum_{j in F} I(attr, j)`.
    fn gain(&self, attr: usize, cross: f64, mi: &MiMatrix) -> f64 {
        let after = Self::term(
            self.relevance + mi.relevance(attr),
            self.redundancy + 2.0 * cross + mi.get(attr, attr),
            self.size + 1,
        );
        after - Self::term(self.relevance, self.redundancy, self.size)
    }

    fn add(&mut self, attr: usize, cross: f64, mi: &MiMatrix) {
        self.relevance += mi.relevance(attr);
        self.redundancy += 2.0 * cross + mi.get(attr, attr);
        self.size += 1;
    }
}

/// Change in [`fmrmr`] if the unassigned feature `attr` joined fragment
/// `target`. `target == fragments.len()` means a new, empty fragment.
pub fn fmrmr_contribution(
    attr: usize,
    target: usize,
    fragments: &[Fragment],
    mi: &MiMatrix,
) -> Result<f64> {
    check_fragments(fragments, mi)?;
    if attr >= mi.feature_count() {
        return Err(Error::IndexOutOfRange {
            index: attr,
            len: mi.feature_count(),
        });
    }
    if fragments.iter().any(|f| f.contains(attr)) {
        return Err(Error::AlreadyAssigned(attr));
    }
    let members: &[usize] = match fragments.get(target) {
        Some(f) => f.features(),
        None if target == fragments.len() => &[],
        None => {
            return Err(Error::IndexOutOfRange {
                index: target,
                len: fragments.len(),
            })
        }
    };
    let mut sums = FragmentSums::default();
    let mut placed: Vec<usize> = Vec::with_capacity(members.len());
    for &m in members {
        let cross: f64 = placed.iter().map(|&p| mi.get(m, p)).sum();
        sums.add(m, cross, mi);
        placed.push(m);
    }
    let cross: f64 = members.iter().map(|&m| mi.get(attr, m)).sum();
    Ok(sums.gain(attr, cross, mi))
}

struct Greedy {
    members: [Vec<usize>; 2],
    sums: [FragmentSums; 2],
    // cross[t][a] = sum of I(a, j) over j already in fragment t
    cross: [Vec<f64>; 2],
    assigned: Vec<bool>,
}

impl Greedy {
    fn place(&mut self, t: usize, attr: usize, mi: &MiMatrix) {
        self.sums[t].add(attr, self.cross[t][attr], mi);
        self.members[t].push(attr);
        self.assigned[attr] = true;
        for (a, c) in self.cross[t].iter_mut().enumerate() {
            *c += mi.get(a, attr);
        }
    }
}

/// Greedy binary fragmentation.
///
/// The two features with the highest mutual information seed different
/// fragments. Each remaining feature is then placed, one at a time, where it
/// raises the score the most, taking the best (feature, fragment) move over
/// all unassigned features each round. Ties go to the lowest feature ordinal,
/// then to the first fragment.
pub fn construct_fragments(mi: &MiMatrix) -> Result<Fragmentation> {
    let n = mi.feature_count();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "binary fragmentation needs at least 2 features, got {n}"
        )));
    }

    let mut seeds = (0, 1);
    for i in 0..n {
        for j in i + 1..n {
            if mi.get(i, j) > mi.get(seeds.0, seeds.1) {
                seeds = (i, j);
            }
        }
    }

    let mut state = Greedy {
        members: [vec![], vec![]],
        sums: [FragmentSums::default(), FragmentSums::default()],
        cross: [vec![0.0; n], vec![0.0; n]],
        assigned: vec![false; n],
    };
    state.place(0, seeds.0, mi);
    state.place(1, seeds.1, mi);

    for _ in 2..n {
        let mut best: Option<(usize, usize)> = None;
        let mut best_gain = f64::NEG_INFINITY;
        for attr in (0..n).filter(|&a| !state.assigned[a]) {
            for t in 0..2 {
                let gain = state.sums[t].gain(attr, state.cross[t][attr], mi);
                if best.is_none() || gain > best_gain {
                    best = Some((attr, t));
                    best_gain = gain;
                }
            }
        }
        let (attr, t) = best.expect("an unassigned feature remains");
        state.place(t, attr, mi);
    }

    let [a, b] = state.members;
    Fragmentation::new(vec![Fragment::new(a)?, Fragment::new(b)?], n)
}

/// Applies [`construct_fragments`] repeatedly, always splitting the largest
/// current fragment (lowest index on ties), until `parts` fragments exist.
pub fn construct_fragments_recursive(mi: &MiMatrix, parts: usize) -> Result<Fragmentation> {
    let n = mi.feature_count();
    if parts < 2 {
        return Err(Error::InvalidParameter(format!("parts must be at least 2, got {parts}")));
    }
    if parts > n {
        return Err(Error::InvalidParameter(format!(
            "cannot cut {n} features into {parts} fragments"
        )));
    }
    let mut frags: Vec<Vec<usize>> = construct_fragments(mi)?
        .fragments()
        .iter()
        .map(|f| f.features().to_vec())
        .collect();
    while frags.len() < parts {
        let idx = (0..frags.len())
            .fold(0, |best, i| if frags[i].len() > frags[best].len() { i } else { best });
        let local = frags[idx].clone();
        let split = construct_fragments(&mi.restrict(&local))?;
        let mut halves = split
            .fragments()
            .iter()
            .map(|f| f.features().iter().map(|&j| local[j]).collect::<Vec<_>>());
        frags[idx] = halves.next().expect("binary split");
        frags.insert(idx + 1, halves.next().expect("binary split"));
    }
    let fragments = frags.into_iter().map(Fragment::new).collect::<Result<Vec<_>>>()?;
    Fragmentation::new(fragments, n)
}
