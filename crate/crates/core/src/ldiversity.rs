//! Fragmentation-based distinct l-diversity.
//!
//! Rows are first clustered top-down into segments that each keep at least
//! `k` rows and `l` class values. Every segment is cut vertically along the
//! fragmentation into chunks, each chunk is anonymized on its own with every
//! equivalence class required to keep the segment's full class set, and the
//! chunks of one fragment are merged and shuffled.
//!
//! Because two classes from the same segment carry the same class set, their
//! equijoin has exactly the segment's diversity and at least as many tuples as
//! either class.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{project, ClassValue, Dataset, Fragmentation};
use crate::mondrian::{anonymize, AnonymizedFragment, EquivalenceClass, SplitGuard};
use crate::reconstruct::eq_join_size;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub row_ids: Vec<usize>,
    pub classes: BTreeSet<ClassValue>,
}

impl Segment {
    pub fn diversity_level(&self) -> usize {
        self.classes.len()
    }
}

/// One segment's slice of one fragment, anonymized.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub segment_id: usize,
    pub fragment_id: usize,
    pub diversity_level: usize,
    /// Row ids refer to the input table.
    pub anonymized: AnonymizedFragment,
}

#[derive(Debug, Clone)]
pub struct LdiverseOutput {
    pub fragmentation: Fragmentation,
    pub segments: Vec<Segment>,
    pub chunks: Vec<Chunk>,
    /// Published fragments, equivalence classes shuffled.
    pub fragments: Vec<AnonymizedFragment>,
    /// Source segment of every published class, per fragment.
    pub segment_of: Vec<Vec<usize>>,
}

fn gini(counts: &BTreeMap<ClassValue, usize>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.values().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn tally(rows: &[usize], classes: &[ClassValue]) -> BTreeMap<ClassValue, usize> {
    let mut out = BTreeMap::new();
    for &r in rows {
        *out.entry(classes[r]).or_insert(0) += 1;
    }
    out
}

/// Clusters rows into segments by repeated median cuts, picking the cut with
/// the largest weighted Gini reduction of the class. A segment is final when
/// no cut leaves both halves with `k` rows and `l` class values.
pub fn segment(dataset: &Dataset, k: usize, l: usize) -> Result<Vec<Segment>> {
    if k < 2 || l < 2 {
        return Err(Error::InvalidParameter(format!(
            "k and l must be at least 2, got k = {k}, l = {l}"
        )));
    }
    let n = dataset.row_count();
    if n < k {
        return Err(Error::TooFewRows { rows: n, k });
    }
    let found = dataset.distinct_classes().len();
    if found < l {
        return Err(Error::InsufficientDiversity { found, l });
    }
    let classes = dataset.class_values();
    let columns: Vec<&[f64]> = (0..dataset.feature_count())
        .map(|d| dataset.feature_column(d))
        .collect();

    let mut done = Vec::new();
    let mut pending = vec![(0..n).collect::<Vec<usize>>()];
    while let Some(rows) = pending.pop() {
        let parent = tally(&rows, &classes);
        let parent_gini = gini(&parent, rows.len());
        let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
        let mut values = Vec::with_capacity(rows.len());
        for col in &columns {
            values.clear();
            values.extend(rows.iter().map(|&r| col[r]));
            values.sort_unstable_by(f64::total_cmp);
            let median = values[(values.len() - 1) / 2];
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| col[r] <= median);
            if left.len() < k || right.len() < k {
                continue;
            }
            let (lt, rt) = (tally(&left, &classes), tally(&right, &classes));
            if lt.len() < l || rt.len() < l {
                continue;
            }
            let total = rows.len() as f64;
            let gain = parent_gini
                - (left.len() as f64 / total) * gini(&lt, left.len())
                - (right.len() as f64 / total) * gini(&rt, right.len());
            if best.as_ref().is_none_or(|b| gain > b.0) {
                best = Some((gain, left, right));
            }
        }
        match best {
            Some((_, left, right)) => {
                pending.push(right);
                pending.push(left);
            }
            None => {
                let mut rows = rows;
                rows.sort_unstable();
                done.push(Segment {
                    classes: parent.keys().copied().collect(),
                    row_ids: rows,
                });
            }
        }
    }
    done.sort_by(|a, b| a.row_ids.cmp(&b.row_ids));
    Ok(done)
}

/// Runs segmentation, chunking, per-chunk anonymization and merging for a
/// given fragmentation.
pub fn ldiverse_pipeline(
    dataset: &Dataset,
    fragmentation: &Fragmentation,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<LdiverseOutput> {
    if fragmentation.feature_count() != dataset.feature_count() {
        return Err(Error::ShapeMismatch(format!(
            "fragmentation covers {} features, table has {}",
            fragmentation.feature_count(),
            dataset.feature_count()
        )));
    }
    let segments = segment(dataset, k, l)?;
    let jobs: Vec<(usize, usize)> = (0..segments.len())
        .flat_map(|s| (0..fragmentation.len()).map(move |f| (s, f)))
        .collect();
    let chunks: Vec<Chunk> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let seg = &segments[s];
            let fragment = &fragmentation.fragments()[f];
            let rows = project(&dataset.select_rows(&seg.row_ids), fragment)?;
            let guard = SplitGuard {
                k,
                l: Some(seg.diversity_level()),
                required: Some(seg.classes.clone()),
            };
            let mut anonymized = anonymize(&rows, &guard)?.with_fragment(fragment.clone())?;
            for eq in &mut anonymized.classes {
                for r in &mut eq.row_ids {
                    *r = seg.row_ids[*r];
                }
            }
            Ok(Chunk {
                segment_id: s,
                fragment_id: f,
                diversity_level: seg.diversity_level(),
                anonymized,
            })
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fragments = Vec::with_capacity(fragmentation.len());
    let mut segment_of = Vec::with_capacity(fragmentation.len());
    for (f, fragment) in fragmentation.fragments().iter().enumerate() {
        let mut tagged: Vec<(usize, EquivalenceClass)> = chunks
            .iter()
            .filter(|c| c.fragment_id == f)
            .flat_map(|c| c.anonymized.classes.iter().map(move |eq| (c.segment_id, eq.clone())))
            .collect();
        tagged.shuffle(&mut rng);
        let (segs, classes): (Vec<usize>, Vec<EquivalenceClass>) = tagged.into_iter().unzip();
        fragments.push(AnonymizedFragment {
            fragment: fragment.clone(),
            k,
            classes,
        });
        segment_of.push(segs);
    }
    Ok(LdiverseOutput {
        fragmentation: fragmentation.clone(),
        segments,
        chunks,
        fragments,
        segment_of,
    })
}

/// A joined pair that is too small or does not carry exactly the segment's
/// class values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdivJoinFailure {
    pub eq_a: usize,
    pub eq_b: usize,
    pub join_size: u64,
    pub distinct_values: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LdivJoinReport {
    pub pairs_checked: usize,
    pub failures: Vec<LdivJoinFailure>,
}

impl LdivJoinReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Joins every class of one chunk with every class of another chunk of the
/// same segment and checks that each join has at least `k` tuples and
/// exactly the segment's diversity level.
pub fn verify_ldiv_join(a: &Chunk, b: &Chunk, k: usize) -> Result<LdivJoinReport> {
    if a.segment_id != b.segment_id {
        return Err(Error::InvalidParameter(format!(
            "chunks belong to segments {} and {}",
            a.segment_id, b.segment_id
        )));
    }
    Ok(verify_ldiv_classes(&a.anonymized.classes, &b.anonymized.classes, k, a.diversity_level))
}

/// The same check over bare class lists.
pub fn verify_ldiv_classes(
    a: &[EquivalenceClass],
    b: &[EquivalenceClass],
    k: usize,
    level: usize,
) -> LdivJoinReport {
    let mut report = LdivJoinReport::default();
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            report.pairs_checked += 1;
            let join_size = eq_join_size(x, y);
            let distinct_values = x.class_set().filter(|c| y.class_counts.contains_key(c)).count();
            if join_size < k as u64 || distinct_values != level {
                report.failures.push(LdivJoinFailure {
                    eq_a: i,
                    eq_b: j,
                    join_size,
                    distinct_values,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Fragment;
    use proptest::prelude::*;

    fn table(cols: Vec<Vec<f64>>, classes: &[u32]) -> Dataset {
        Dataset::from_numeric(cols, classes).unwrap()
    }

    fn two_fragments() -> Fragmentation {
        Fragmentation::new(vec![Fragment::new(vec![0]).unwrap(), Fragment::new(vec![1]).unwrap()], 2).unwrap()
    }

    #[test]
    fn no_valid_split_gives_one_segment() {
        // every cut leaves a side with a single class
        let ds = table(vec![vec![0.0, 1.0, 2.0, 3.0]], &[0, 0, 1, 1]);
        let segs = segment(&ds, 2, 2).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].diversity_level(), 2);
    }

    #[test]
    fn separated_clusters_split() {
        let k = 4;
        // two clusters far apart on feature 0, each with classes {0, 1}
        let f0 = vec![0.0, 0.1, 0.2, 0.3, 10.0, 10.1, 10.2, 10.3];
        let f1 = vec![5.0, 3.0, 4.0, 6.0, 1.0, 7.0, 2.0, 8.0];
        let classes = [0, 1, 0, 1, 0, 1, 1, 0];
        let ds = table(vec![f0, f1], &classes);
        let segs = segment(&ds, k, 2).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].row_ids, vec![0, 1, 2, 3]);
        assert_eq!(segs[1].row_ids, vec![4, 5, 6, 7]);
        // simulate the stop rule: neither half can be cut again with k = 4
        for s in &segs {
            assert!(s.row_ids.len() < 2 * k);
        }
    }

    #[test]
    fn rejects_bad_preconditions() {
        let ds = table(vec![vec![0.0, 1.0, 2.0]], &[0, 0, 0]);
        assert!(matches!(segment(&ds, 2, 2), Err(Error::InsufficientDiversity { found: 1, l: 2 })));
        assert!(matches!(segment(&ds, 4, 1), Err(Error::InvalidParameter(_))));
        assert!(matches!(segment(&ds, 4, 2), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn hand_join_passes() {
        let a = EquivalenceClass::from_counts([(ClassValue(0), 3), (ClassValue(1), 2)]);
        let b = EquivalenceClass::from_counts([(ClassValue(0), 2), (ClassValue(1), 3)]);
        let report = verify_ldiv_classes(std::slice::from_ref(&a), &[b], 5, 2);
        assert!(report.passed());
        assert_eq!(eq_join_size(&a, &a), 13);
    }

    #[test]
    fn single_segment_pipeline() {
        let ds = table(vec![vec![0.0, 1.0, 2.0, 3.0], vec![5.0, 6.0, 7.0, 8.0]], &[0, 0, 1, 1]);
        let out = ldiverse_pipeline(&ds, &two_fragments(), 2, 2, 9).unwrap();
        assert_eq!(out.segments.len(), 1);
        assert_eq!(out.fragments.len(), 2);
        for f in &out.fragments {
            assert_eq!(f.classes.len(), 1);
            assert_eq!(f.row_count(), 4);
        }
    }

    fn random_dataset() -> impl Strategy<Value = (Dataset, usize, usize)> {
        (20usize..120, 2u32..5).prop_flat_map(|(rows, nc)| {
            (
                prop::collection::vec(prop::collection::vec(0u8..30, rows), 3),
                prop::collection::vec(0..nc, rows),
                2usize..6,
                2usize..=nc as usize,
            )
                .prop_map(|(cols, classes, k, l)| {
                    let cols = cols.into_iter().map(|c| c.into_iter().map(f64::from).collect()).collect();
                    (Dataset::from_numeric(cols, &classes).unwrap(), k, l)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn pipeline_properties((ds, k, l) in random_dataset(), seed in 0u64..50) {
            prop_assume!(ds.distinct_classes().len() >= l && ds.row_count() >= k);
            let frag = Fragmentation::new(
                vec![Fragment::new(vec![0, 2]).unwrap(), Fragment::new(vec![1]).unwrap()],
                3,
            ).unwrap();
            let out = ldiverse_pipeline(&ds, &frag, k, l, seed).unwrap();
            let classes = ds.class_values();

            // segments partition the rows and keep their recorded level
            let mut seen = vec![0; ds.row_count()];
            for s in &out.segments {
                prop_assert!(s.row_ids.len() >= k);
                prop_assert!(s.diversity_level() >= l);
                let recount: BTreeSet<_> = s.row_ids.iter().map(|&r| classes[r]).collect();
                prop_assert_eq!(&recount, &s.classes);
                for &r in &s.row_ids { seen[r] += 1; }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));

            // published classes: k rows, at least the segment's level, true counts
            for (f, frag_out) in out.fragments.iter().enumerate() {
                prop_assert_eq!(frag_out.row_count(), ds.row_count());
                for (e, eq) in frag_out.classes.iter().enumerate() {
                    let level = out.segments[out.segment_of[f][e]].diversity_level();
                    prop_assert!(eq.size() >= k);
                    let recount: BTreeSet<_> = eq.row_ids.iter().map(|&r| classes[r]).collect();
                    prop_assert!(recount.len() >= level);
                    prop_assert_eq!(recount.len(), eq.distinct_classes());
                }
            }

            // same-segment chunk joins
            for a in &out.chunks {
                for b in &out.chunks {
                    if a.segment_id == b.segment_id && a.fragment_id < b.fragment_id {
                        prop_assert!(verify_ldiv_join(a, b, k).unwrap().passed());
                    }
                }
            }
        }
    }

    #[test]
    fn corrupted_chunk_is_reported() {
        let cols = vec![
            (0..40).map(|i| (i % 10) as f64).collect(),
            (0..40).map(|i| ((i * 7) % 13) as f64).collect(),
        ];
        let classes: Vec<u32> = (0..40).map(|i| (i % 3) as u32).collect();
        let ds = table(cols, &classes);
        let out = ldiverse_pipeline(&ds, &two_fragments(), 3, 2, 1).unwrap();
        let a = out.chunks.iter().find(|c| c.fragment_id == 0).unwrap();
        let mut b = out
            .chunks
            .iter()
            .find(|c| c.fragment_id == 1 && c.segment_id == a.segment_id)
            .unwrap()
            .clone();
        assert!(verify_ldiv_join(a, &b, 3).unwrap().passed());
        let eq = &mut b.anonymized.classes[0];
        let dropped = *eq.class_counts.keys().next().unwrap();
        let n = eq.class_counts.remove(&dropped).unwrap();
        *eq.class_counts.values_mut().next().unwrap() += n;
        assert!(!verify_ldiv_join(a, &b, 3).unwrap().passed());
    }
}
