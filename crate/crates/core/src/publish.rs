//! On-disk form of a publication.
//!
//! An output directory holds `fragment_{i}.csv` per fragment, `manifest.json`
//! with every run parameter, and `enforcement.json` when join protection ran.
//! Each fragment CSV starts with an `eq` column naming the equivalence class,
//! then the fragment's features (`lo..hi`, or a bare value for a point), then
//! the class. Tuple-level classes emit one row per tuple. EC-level classes
//! emit one row per published class value followed by rows with a blank class
//! for the ambiguous slots.
//!
//! With debug output enabled, `debug/fragment_{i}.csv` repeats each fragment
//! with a `segment` column after `eq`. Published files never carry it.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mondrian::{AnonymizedFragment, EquivalenceClass, PublishMode};
use crate::model::{load_csv_aligned, ClassValue, Dataset, Fragment, Fragmentation, GeneralizedValue, Schema};
use crate::pipeline::{PipelineConfig, Publication};
use crate::reconstruct::{EnforcementReport, Violation};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENFORCEMENT_FILE: &str = "enforcement.json";
pub const DEBUG_DIR: &str = "debug";
const EQ_COLUMN: &str = "eq";
const SEGMENT_COLUMN: &str = "segment";
const FORMAT_VERSION: u32 = 1;

pub fn fragment_file_name(index: usize) -> String {
    format!("fragment_{index}.csv")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub schema: Schema,
    /// Feature names of every fragment.
    pub fragments: Vec<Vec<String>>,
    /// Class labels in code order.
    pub class_labels: Vec<String>,
    /// Code-to-label dictionaries of categorical features.
    pub categories: BTreeMap<String, Vec<String>>,
    pub publish_mode: PublishMode,
    pub rows: usize,
}

impl Manifest {
    pub fn new(publication: &Publication, dataset: &Dataset) -> Self {
        let schema = dataset.schema();
        Manifest {
            format_version: FORMAT_VERSION,
            config: publication.config.clone(),
            schema: schema.clone(),
            fragments: publication
                .fragmentation
                .fragments()
                .iter()
                .map(|f| f.features().iter().map(|&o| schema.feature_name(o).to_string()).collect())
                .collect(),
            class_labels: dataset.class_labels().to_vec(),
            categories: schema
                .feature_columns()
                .iter()
                .filter_map(|&c| dataset.dictionary(c).map(|d| (schema.attributes()[c].name.clone(), d.to_vec())))
                .collect(),
            publish_mode: publication
                .fragments
                .first()
                .map_or(PublishMode::TupleLevel, |f| f.publish_mode()),
            rows: dataset.row_count(),
        }
    }

    pub fn fragmentation(&self) -> Result<Fragmentation> {
        let fragments = self
            .fragments
            .iter()
            .map(|names| {
                let ordinals = names
                    .iter()
                    .map(|n| {
                        self.schema
                            .feature_ordinal(n)
                            .ok_or_else(|| Error::Publication(format!("manifest names unknown feature `{n}`")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Fragment::new(ordinals)
            })
            .collect::<Result<Vec<_>>>()?;
        Fragmentation::new(fragments, self.schema.feature_count())
    }

    /// An empty table carrying the run's schema and dictionaries, for loading
    /// further data with matching codes.
    pub fn reference_dataset(&self) -> Result<Dataset> {
        let class = self.schema.class_column();
        let dictionaries = self
            .schema
            .attributes()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                if i == class {
                    Some(self.class_labels.clone())
                } else {
                    self.categories.get(&a.name).cloned()
                }
            })
            .collect();
        Dataset::new(self.schema.clone(), vec![Vec::new(); self.schema.len()], dictionaries)
    }

    /// Loads a table against the run's schema with the run's codes and
    /// feature order, whatever its column order.
    pub fn load_table(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        let table = load_csv_aligned(path, &self.schema, &self.reference_dataset()?)?;
        let order = (0..self.schema.feature_count())
            .map(|o| {
                let name = self.schema.feature_name(o);
                table
                    .schema()
                    .feature_ordinal(name)
                    .ok_or_else(|| Error::Schema(format!("table lacks feature `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        table.select_features(&order)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Publication(format!("{}: {e}", path.display())))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Publication(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        Ok(manifest)
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::Publication(format!("{other:?}")),
    }
}

/// Writes one fragment. `segments`, when given, adds the debug segment column.
pub fn write_fragment<W: Write>(
    writer: W,
    fragment: &AnonymizedFragment,
    schema: &Schema,
    class_labels: &[String],
    segments: Option<&[usize]>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec![EQ_COLUMN.to_string()];
    if segments.is_some() {
        header.push(SEGMENT_COLUMN.to_string());
    }
    header.extend(fragment.fragment.features().iter().map(|&o| schema.feature_name(o).to_string()));
    header.push(schema.class_name().to_string());
    out.write_record(&header).map_err(csv_error)?;

    let label = |c: ClassValue| -> Result<&str> {
        class_labels
            .get(c.0 as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::Publication(format!("class code {c} has no label")))
    };
    for (e, eq) in fragment.classes.iter().enumerate() {
        let mut prefix = vec![e.to_string()];
        if let Some(seg) = segments {
            let s = seg.get(e).ok_or(Error::IndexOutOfRange { index: e, len: seg.len() })?;
            prefix.push(s.to_string());
        }
        prefix.extend(eq.qi_box.iter().map(GeneralizedValue::to_string));
        let mut labels: Vec<&str> = Vec::with_capacity(eq.size());
        match eq.publish_mode {
            PublishMode::TupleLevel => {
                for (&c, &n) in &eq.class_counts {
                    let l = label(c)?;
                    labels.extend(std::iter::repeat_n(l, n));
                }
            }
            PublishMode::EcLevel => {
                for c in eq.class_set() {
                    labels.push(label(c)?);
                }
                labels.extend(std::iter::repeat_n("", eq.ambiguous_slots()));
            }
        }
        for l in labels {
            let mut record = prefix.clone();
            record.push(l.to_string());
            out.write_record(&record).map_err(csv_error)?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// A fragment read back from CSV, with its debug segment column if present.
#[derive(Debug, Clone)]
pub struct ReadFragment {
    pub fragment: AnonymizedFragment,
    pub segments: Option<Vec<usize>>,
}

/// Reads one fragment written by [`write_fragment`]. Rows of one class must be
/// contiguous and agree on the box.
pub fn read_fragment<R: Read>(
    reader: R,
    fragment: &Fragment,
    schema: &Schema,
    class_labels: &[String],
    mode: PublishMode,
    k: usize,
) -> Result<ReadFragment> {
    let mut input = csv::Reader::from_reader(reader);
    let header: Vec<String> = input.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let with_segment = header.get(1).map(String::as_str) == Some(SEGMENT_COLUMN);
    let lead = if with_segment { 2 } else { 1 };
    let mut expected = vec![EQ_COLUMN.to_string()];
    if with_segment {
        expected.push(SEGMENT_COLUMN.to_string());
    }
    expected.extend(fragment.features().iter().map(|&o| schema.feature_name(o).to_string()));
    expected.push(schema.class_name().to_string());
    if header != expected {
        return Err(Error::Publication(format!(
            "header {header:?} does not match manifest {expected:?}"
        )));
    }
    let codes: BTreeMap<&str, ClassValue> = class_labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), ClassValue(i as u32)))
        .collect();

    struct Pending {
        id: String,
        segment: Option<usize>,
        qi_box: Vec<GeneralizedValue>,
        counts: BTreeMap<ClassValue, usize>,
        size: usize,
    }
    let mut classes = Vec::new();
    let mut segments = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut current: Option<Pending> = None;
    let finish = |p: Pending, classes: &mut Vec<EquivalenceClass>, segments: &mut Vec<usize>| {
        let mut eq = match mode {
            PublishMode::TupleLevel => EquivalenceClass::from_counts(p.counts),
            PublishMode::EcLevel => EquivalenceClass::ec_level(p.size, p.counts.into_keys()),
        };
        eq.qi_box = p.qi_box;
        classes.push(eq);
        segments.extend(p.segment);
    };

    for (i, record) in input.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(csv_error)?;
        let bad = |column: &str, message: String| Error::Parse {
            row: line,
            column: column.to_string(),
            message,
        };
        let id = &record[0];
        let segment = if with_segment {
            Some(record[1].parse::<usize>().map_err(|e| bad(SEGMENT_COLUMN, e.to_string()))?)
        } else {
            None
        };
        let qi_box = fragment
            .features()
            .iter()
            .enumerate()
            .map(|(j, &o)| record[lead + j].parse::<GeneralizedValue>().map_err(|e| bad(schema.feature_name(o), e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let label = &record[lead + fragment.len()];

        if current.as_ref().is_none_or(|p| p.id != id) {
            if !seen.insert(id.to_string()) {
                return Err(bad(EQ_COLUMN, format!("rows of class `{id}` are not contiguous")));
            }
            if let Some(p) = current.take() {
                finish(p, &mut classes, &mut segments);
            }
            current = Some(Pending {
                id: id.to_string(),
                segment,
                qi_box: qi_box.clone(),
                counts: BTreeMap::new(),
                size: 0,
            });
        }
        let p = current.as_mut().expect("set above");
        if p.qi_box != qi_box || p.segment != segment {
            return Err(bad(EQ_COLUMN, format!("class `{id}` has inconsistent rows")));
        }
        p.size += 1;
        if label.is_empty() {
            if mode == PublishMode::TupleLevel {
                return Err(bad(schema.class_name(), "blank class in a tuple-level fragment".into()));
            }
            continue;
        }
        let code = *codes
            .get(label)
            .ok_or_else(|| bad(schema.class_name(), format!("unknown class label `{label}`")))?;
        let n = p.counts.entry(code).or_insert(0);
        *n += 1;
        if mode == PublishMode::EcLevel && *n > 1 {
            return Err(bad(schema.class_name(), format!("class value `{label}` listed twice")));
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut classes, &mut segments);
    }
    Ok(ReadFragment {
        fragment: AnonymizedFragment {
            fragment: fragment.clone(),
            k,
            classes,
        },
        segments: with_segment.then_some(segments),
    })
}

/// Writes the publication into `dir`, creating it if needed.
pub fn write_publication(dir: impl AsRef<Path>, publication: &Publication, dataset: &Dataset, debug: bool) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest::new(publication, dataset);
    let schema = dataset.schema();
    for (i, fragment) in publication.fragments.iter().enumerate() {
        let path = dir.join(fragment_file_name(i));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_fragment(std::io::BufWriter::new(file), fragment, schema, &manifest.class_labels, None)?;
    }
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    let enforcement = dir.join(ENFORCEMENT_FILE);
    match &publication.report {
        Some(report) => write_json(&enforcement, report)?,
        None if enforcement.exists() => fs::remove_file(&enforcement).map_err(|e| Error::io(&enforcement, e))?,
        None => {}
    }
    if debug {
        let debug_dir = dir.join(DEBUG_DIR);
        fs::create_dir_all(&debug_dir).map_err(|e| Error::io(&debug_dir, e))?;
        for (i, fragment) in publication.fragments.iter().enumerate() {
            let segments: Vec<usize> = match &publication.segment_of {
                Some(s) => s[i].clone(),
                None => vec![0; fragment.classes.len()],
            };
            let path = debug_dir.join(fragment_file_name(i));
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            write_fragment(std::io::BufWriter::new(file), fragment, schema, &manifest.class_labels, Some(&segments))?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A publication read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedPublication {
    pub manifest: Manifest,
    pub fragmentation: Fragmentation,
    pub fragments: Vec<AnonymizedFragment>,
    pub report: Option<EnforcementReport>,
    /// Segment map from the debug copies, when they exist.
    pub segment_of: Option<Vec<Vec<usize>>>,
}

pub fn load_publication(dir: impl AsRef<Path>) -> Result<LoadedPublication> {
    let dir = dir.as_ref();
    let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
    let fragmentation = manifest.fragmentation()?;
    let read = |path: &Path, fragment: &Fragment| -> Result<ReadFragment> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        read_fragment(
            std::io::BufReader::new(file),
            fragment,
            &manifest.schema,
            &manifest.class_labels,
            manifest.publish_mode,
            manifest.config.k,
        )
    };
    let fragments = fragmentation
        .fragments()
        .iter()
        .enumerate()
        .map(|(i, f)| read(&dir.join(fragment_file_name(i)), f).map(|r| r.fragment))
        .collect::<Result<Vec<_>>>()?;

    let debug_dir = dir.join(DEBUG_DIR);
    let segment_of = if debug_dir.is_dir() {
        let mut all = Vec::new();
        for (i, f) in fragmentation.fragments().iter().enumerate() {
            let r = read(&debug_dir.join(fragment_file_name(i)), f)?;
            let segments = r
                .segments
                .ok_or_else(|| Error::Publication(format!("debug fragment {i} has no segment column")))?;
            if segments.len() != fragments[i].classes.len() {
                return Err(Error::Publication(format!("debug fragment {i} does not match the published one")));
            }
            all.push(segments);
        }
        Some(all)
    } else {
        None
    };

    let enforcement = dir.join(ENFORCEMENT_FILE);
    let report = if enforcement.exists() {
        let text = fs::read_to_string(&enforcement).map_err(|e| Error::io(&enforcement, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Publication(format!("{ENFORCEMENT_FILE}: {e}")))?)
    } else {
        None
    };
    Ok(LoadedPublication {
        manifest,
        fragmentation,
        fragments,
        report,
        segment_of,
    })
}

/// Writes violations with columns
/// `fragment_a,eq_a,fragment_b,eq_b,join_size_or_eta,threshold`.
pub fn write_violations<W: Write>(writer: W, violations: &[Violation]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["fragment_a", "eq_a", "fragment_b", "eq_b", "join_size_or_eta", "threshold"])
        .map_err(csv_error)?;
    for v in violations {
        out.write_record([
            v.fragment_a(),
            v.eq_a(),
            v.fragment_b.to_string(),
            v.eq_b.to_string(),
            v.measure.to_string(),
            v.threshold.to_string(),
        ])
        .map_err(csv_error)?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{run, Model};
    use crate::reconstruct::Strategy;
    use crate::synthetic::{correlated_table, SyntheticSpec};

    fn data() -> Dataset {
        correlated_table(&SyntheticSpec {
            rows: 300,
            dims: 5,
            classes: 3,
            seed: 9,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    type Stripped = Vec<Vec<(Vec<GeneralizedValue>, Vec<ClassValue>, usize)>>;

    fn strip(fragments: &[AnonymizedFragment]) -> Stripped {
        fragments
            .iter()
            .map(|f| {
                f.classes
                    .iter()
                    .map(|eq| (eq.qi_box.clone(), eq.class_set().collect(), eq.size()))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn tuple_level_round_trip() {
        let ds = data();
        let publication = run(&ds, &PipelineConfig { k: 6, ..PipelineConfig::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_publication(dir.path(), &publication, &ds, false).unwrap();
        let loaded = load_publication(dir.path()).unwrap();
        assert_eq!(loaded.fragmentation, publication.fragmentation);
        assert_eq!(loaded.report, publication.report);
        assert!(loaded.segment_of.is_none());
        for (a, b) in loaded.fragments.iter().zip(&publication.fragments) {
            assert_eq!(a.classes.len(), b.classes.len());
            for (x, y) in a.classes.iter().zip(&b.classes) {
                assert_eq!(x.qi_box, y.qi_box);
                assert_eq!(x.class_counts, y.class_counts);
            }
        }
    }

    #[test]
    fn tables_load_in_run_order() {
        let ds = data();
        let publication = run(&ds, &PipelineConfig { k: 6, ..PipelineConfig::default() }).unwrap();
        let manifest = Manifest::new(&publication, &ds);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        // columns reversed, class labels in a different first-appearance order
        let mut text = String::from("class,f4,f3,f2,f1,f0\n");
        for r in (0..ds.row_count()).rev() {
            let row = ds.feature_row(r);
            text.push_str(ds.class_label(ds.class_value(r)));
            for v in row.iter().rev() {
                text.push_str(&format!(",{v}"));
            }
            text.push('\n');
        }
        fs::write(&path, text).unwrap();
        let loaded = manifest.load_table(&path).unwrap();
        assert_eq!(loaded.feature_row(0), ds.feature_row(ds.row_count() - 1));
        assert_eq!(loaded.class_value(0), ds.class_value(ds.row_count() - 1));
        assert_eq!(loaded.class_labels(), ds.class_labels());
    }

    #[test]
    fn ec_level_round_trip() {
        let ds = data();
        let config = PipelineConfig {
            k: 6,
            strategy: Strategy::Delta,
            ..PipelineConfig::default()
        };
        let publication = run(&ds, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_publication(dir.path(), &publication, &ds, false).unwrap();
        let loaded = load_publication(dir.path()).unwrap();
        assert_eq!(loaded.manifest.publish_mode, PublishMode::EcLevel);
        assert_eq!(strip(&loaded.fragments), strip(&publication.fragments));
    }

    #[test]
    fn ec_level_rows_list_values_then_blanks() {
        let mut eq = EquivalenceClass::ec_level(4, [ClassValue(1), ClassValue(0)]);
        eq.qi_box = vec![GeneralizedValue::new(1.0, 2.5).unwrap()];
        let fragment = AnonymizedFragment {
            fragment: Fragment::new(vec![0]).unwrap(),
            k: 2,
            classes: vec![eq],
        };
        let schema = Schema::parse("a=numeric,feature\ny=categorical,class\n").unwrap();
        let labels = vec!["no".to_string(), "yes".to_string()];
        let mut buf = Vec::new();
        write_fragment(&mut buf, &fragment, &schema, &labels, None).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "eq,a,y\n0,1..2.5,no\n0,1..2.5,yes\n0,1..2.5,\n0,1..2.5,\n");
    }

    #[test]
    fn debug_copies_carry_segments() {
        let ds = data();
        let config = PipelineConfig {
            model: Model::LDiversity,
            k: 5,
            l: Some(2),
            ..PipelineConfig::default()
        };
        let publication = run(&ds, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_publication(dir.path(), &publication, &ds, true).unwrap();
        let published = fs::read_to_string(dir.path().join(fragment_file_name(0))).unwrap();
        assert!(!published.lines().next().unwrap().contains(SEGMENT_COLUMN));
        let loaded = load_publication(dir.path()).unwrap();
        assert_eq!(loaded.segment_of, publication.segment_of);
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let schema = Schema::parse("a=numeric,feature\ny=categorical,class\n").unwrap();
        let labels = vec!["no".to_string(), "yes".to_string()];
        let fragment = Fragment::new(vec![0]).unwrap();
        let read = |text: &str, mode| read_fragment(text.as_bytes(), &fragment, &schema, &labels, mode, 2);
        assert!(read("eq,a,y\n0,1,no\n1,2,no\n0,1,no\n", PublishMode::TupleLevel).is_err());
        assert!(read("eq,a,y\n0,1,no\n0,2,no\n", PublishMode::TupleLevel).is_err());
        assert!(read("eq,a,y\n0,1,maybe\n", PublishMode::TupleLevel).is_err());
        assert!(read("eq,a,y\n0,1,\n", PublishMode::TupleLevel).is_err());
        assert!(read("eq,b,y\n0,1,no\n", PublishMode::TupleLevel).is_err());
        assert!(read("eq,a,y\n0,1,no\n0,1,no\n", PublishMode::EcLevel).is_err());
        let ok = read("eq,a,y\n0,1,no\n0,1,\n", PublishMode::EcLevel).unwrap();
        assert_eq!(ok.fragment.classes[0].size(), 2);
        assert_eq!(ok.fragment.classes[0].ambiguous_slots(), 1);
    }

    #[test]
    fn violations_csv() {
        let v = Violation {
            stage: 2,
            left: vec![(0, 3), (1, 4)],
            fragment_b: 2,
            eq_b: 7,
            measure: 3.0,
            threshold: 5.0,
        };
        let mut buf = Vec::new();
        write_violations(&mut buf, &[v]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "fragment_a,eq_a,fragment_b,eq_b,join_size_or_eta,threshold\n0+1,3+4,2,7,3,5\n"
        );
    }
}
