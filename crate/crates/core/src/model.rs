//! Tables, schemas, generalized values and fragments.
//!
//! A [`Dataset`] is column-major and immutable once built. Every attribute is
//! stored as `f64`; categorical attributes hold ordinal codes assigned in
//! first-appearance order and keep a code-to-label dictionary. The class
//! attribute is always dictionary-encoded, whatever kind the schema declares,
//! because joins between fragments match on class *labels*.
//!
//! Feature attributes are addressed by their *feature ordinal*: the position
//! among feature-role attributes in schema order. Fragments, mutual
//! information matrices and equivalence-class boxes all speak in ordinals.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeKind {
    Numeric,
    /// Ordinal-encoded categorical. Codes are treated as numbers downstream.
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Class,
    /// Carried through ingestion but never fragmented or generalized.
    Sensitive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub name: String,
    pub kind: AttributeKind,
    pub role: Role,
}

impl AttributeSchema {
    pub fn new(name: impl Into<String>, kind: AttributeKind, role: Role) -> Self {
        AttributeSchema {
            name: name.into(),
            kind,
            role,
        }
    }
}

/// An ordered attribute list with exactly one class attribute and unique
/// names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AttributeSchema>", into = "Vec<AttributeSchema>")]
pub struct Schema {
    attributes: Vec<AttributeSchema>,
    features: Vec<usize>,
    class: usize,
}

impl Schema {
    pub fn new(attributes: Vec<AttributeSchema>) -> Result<Self> {
        let mut seen = HashSet::new();
        for a in &attributes {
            if a.name.is_empty() {
                return Err(Error::Schema("attribute with empty name".into()));
            }
            if !seen.insert(a.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        let classes: Vec<usize> = attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == Role::Class)
            .map(|(i, _)| i)
            .collect();
        if classes.len() != 1 {
            return Err(Error::Schema(format!(
                "exactly one class attribute required, found {}",
                classes.len()
            )));
        }
        let features = attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == Role::Feature)
            .map(|(i, _)| i)
            .collect();
        Ok(Schema {
            attributes,
            features,
            class: classes[0],
        })
    }

    /// Parses the `name=kind,role` line format. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut attributes = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Schema(format!("line {}: {msg}: `{line}`", lineno + 1));
            let (name, spec) = line.split_once('=').ok_or_else(|| bad("expected name=kind,role"))?;
            let (kind, role) = spec.split_once(',').ok_or_else(|| bad("expected kind,role"))?;
            let kind = match kind.trim() {
                "numeric" => AttributeKind::Numeric,
                "categorical" => AttributeKind::Categorical,
                _ => return Err(bad("kind must be numeric or categorical")),
            };
            let role = match role.trim() {
                "feature" => Role::Feature,
                "class" => Role::Class,
                "sensitive" => Role::Sensitive,
                _ => return Err(bad("role must be feature, class or sensitive")),
            };
            attributes.push(AttributeSchema::new(name.trim(), kind, role));
        }
        Schema::new(attributes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text)
    }

    /// Renders the schema back into the line format accepted by [`Schema::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in &self.attributes {
            let kind = match a.kind {
                AttributeKind::Numeric => "numeric",
                AttributeKind::Categorical => "categorical",
            };
            let role = match a.role {
                Role::Feature => "feature",
                Role::Class => "class",
                Role::Sensitive => "sensitive",
            };
            out.push_str(&format!("{}={kind},{role}\n", a.name));
        }
        out
    }

    pub fn attributes(&self) -> &[AttributeSchema] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    /// Column indices of the feature attributes, in ordinal order.
    pub fn feature_columns(&self) -> &[usize] {
        &self.features
    }

    pub fn class_column(&self) -> usize {
        self.class
    }

    pub fn feature_count(&self) -> usize {
        self.features.len()
    }

    pub fn feature_name(&self, ordinal: usize) -> &str {
        &self.attributes[self.features[ordinal]].name
    }

    pub fn class_name(&self) -> &str {
        &self.attributes[self.class].name
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn feature_ordinal(&self, name: &str) -> Option<usize> {
        self.features
            .iter()
            .position(|&c| self.attributes[c].name == name)
    }
}

impl TryFrom<Vec<AttributeSchema>> for Schema {
    type Error = Error;
    fn try_from(v: Vec<AttributeSchema>) -> Result<Self> {
        Schema::new(v)
    }
}

impl From<Schema> for Vec<AttributeSchema> {
    fn from(s: Schema) -> Self {
        s.attributes
    }
}

/// A class-attribute code. Codes follow first appearance in the source data,
/// so the smallest code is the first label seen; ties anywhere in the crate
/// resolve toward the smallest code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassValue(pub u32);

impl fmt::Display for ClassValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Vec<f64>>,
    dictionaries: Vec<Option<Vec<String>>>,
    row_count: usize,
}

impl Dataset {
    /// Builds a dataset from raw columns. `dictionaries[i]` must be present
    /// for categorical columns and for the class column.
    pub fn new(
        schema: Schema,
        columns: Vec<Vec<f64>>,
        dictionaries: Vec<Option<Vec<String>>>,
    ) -> Result<Self> {
        if columns.len() != schema.len() || dictionaries.len() != schema.len() {
            return Err(Error::LengthMismatch {
                left: schema.len(),
                right: columns.len(),
            });
        }
        let row_count = columns.first().map_or(0, Vec::len);
        for (i, col) in columns.iter().enumerate() {
            if col.len() != row_count {
                return Err(Error::LengthMismatch {
                    left: row_count,
                    right: col.len(),
                });
            }
            let attr = &schema.attributes()[i];
            let encoded = attr.kind == AttributeKind::Categorical || i == schema.class_column();
            match (&dictionaries[i], encoded) {
                (Some(dict), true) => {
                    if let Some(bad) = col
                        .iter()
                        .find(|&&v| v < 0.0 || v.fract() != 0.0 || v as usize >= dict.len())
                    {
                        return Err(Error::Schema(format!(
                            "`{}` holds code {bad} outside its dictionary",
                            attr.name
                        )));
                    }
                }
                (None, true) => {
                    return Err(Error::Schema(format!("`{}` needs a dictionary", attr.name)))
                }
                (_, false) => {
                    if let Some(bad) = col.iter().find(|v| !v.is_finite()) {
                        return Err(Error::Schema(format!(
                            "`{}` holds non-finite value {bad}",
                            attr.name
                        )));
                    }
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            dictionaries,
            row_count,
        })
    }

    /// Convenience constructor: numeric features named `f0, f1, ...` and a
    /// class attribute `class` whose labels are `c0, c1, ...`.
    pub fn from_numeric(features: Vec<Vec<f64>>, classes: &[u32]) -> Result<Self> {
        let mut attrs: Vec<AttributeSchema> = (0..features.len())
            .map(|i| AttributeSchema::new(format!("f{i}"), AttributeKind::Numeric, Role::Feature))
            .collect();
        attrs.push(AttributeSchema::new(
            "class",
            AttributeKind::Categorical,
            Role::Class,
        ));
        let labels = (0..=classes.iter().copied().max().unwrap_or(0))
            .map(|c| format!("c{c}"))
            .collect();
        let mut dicts = vec![None; features.len()];
        dicts.push(Some(labels));
        let mut columns = features;
        columns.push(classes.iter().map(|&c| f64::from(c)).collect());
        Dataset::new(Schema::new(attrs)?, columns, dicts)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn feature_count(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn feature_column(&self, ordinal: usize) -> &[f64] {
        &self.columns[self.schema.feature_columns()[ordinal]]
    }

    pub fn feature_kind(&self, ordinal: usize) -> AttributeKind {
        self.schema.attributes()[self.schema.feature_columns()[ordinal]].kind
    }

    pub fn dictionary(&self, index: usize) -> Option<&[String]> {
        self.dictionaries[index].as_deref()
    }

    pub fn class_value(&self, row: usize) -> ClassValue {
        ClassValue(self.columns[self.schema.class_column()][row] as u32)
    }

    pub fn class_values(&self) -> Vec<ClassValue> {
        self.columns[self.schema.class_column()]
            .iter()
            .map(|&v| ClassValue(v as u32))
            .collect()
    }

    pub fn class_labels(&self) -> &[String] {
        self.dictionaries[self.schema.class_column()]
            .as_deref()
            .expect("class column is always dictionary-encoded")
    }

    pub fn class_label(&self, value: ClassValue) -> &str {
        &self.class_labels()[value.0 as usize]
    }

    pub fn distinct_classes(&self) -> BTreeSet<ClassValue> {
        self.class_values().into_iter().collect()
    }

    /// One row's feature values, by ordinal.
    pub fn feature_row(&self, row: usize) -> Vec<f64> {
        self.schema
            .feature_columns()
            .iter()
            .map(|&c| self.columns[c][row])
            .collect()
    }

    /// `(min, max)` of every feature over all rows.
    pub fn feature_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.feature_count())
            .map(|f| {
                self.feature_column(f)
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                        (lo.min(v), hi.max(v))
                    })
            })
            .collect()
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&r| col[r]).collect())
                .collect(),
            dictionaries: self.dictionaries.clone(),
            row_count: rows.len(),
        }
    }

    /// Keeps the listed features (by ordinal, in the given order), the class
    /// attribute and any sensitive attributes.
    pub fn select_features(&self, ordinals: &[usize]) -> Result<Dataset> {
        let mut keep = Vec::new();
        for &o in ordinals {
            if o >= self.feature_count() {
                return Err(Error::IndexOutOfRange {
                    index: o,
                    len: self.feature_count(),
                });
            }
            keep.push(self.schema.feature_columns()[o]);
        }
        for (i, a) in self.schema.attributes().iter().enumerate() {
            if a.role != Role::Feature {
                keep.push(i);
            }
        }
        self.keep_columns(&keep)
    }

    fn keep_columns(&self, keep: &[usize]) -> Result<Dataset> {
        let attrs = keep
            .iter()
            .map(|&i| self.schema.attributes()[i].clone())
            .collect();
        Ok(Dataset {
            schema: Schema::new(attrs)?,
            columns: keep.iter().map(|&i| self.columns[i].clone()).collect(),
            dictionaries: keep.iter().map(|&i| self.dictionaries[i].clone()).collect(),
            row_count: self.row_count,
        })
    }
}

/// Reads a CSV file against `schema`. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, None)
}

/// Like [`load_csv`] but starts every dictionary from `reference`, so a test
/// split loaded separately shares class and category codes with training data.
pub fn load_csv_aligned(
    path: impl AsRef<Path>,
    schema: &Schema,
    reference: &Dataset,
) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, Some(reference))
}

/// Parses comma-separated UTF-8 with a header row. Header names must be the
/// schema's names (any order); the resulting dataset follows header order.
/// Missing cells are rejected, never imputed.
pub fn read_csv<R: Read>(input: R, schema: &Schema, reference: Option<&Dataset>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(Error::Empty("no header row".into())),
        Some(r) => r.map_err(|e| parse_error(1, "<header>", e))?,
    };
    if header.iter().all(str::is_empty) {
        return Err(Error::Empty("no header row".into()));
    }

    let mut attrs = Vec::with_capacity(header.len());
    for name in header.iter() {
        let pos = schema
            .position(name)
            .ok_or_else(|| Error::Schema(format!("header column `{name}` is not in the schema")))?;
        attrs.push(schema.attributes()[pos].clone());
    }
    if attrs.len() != schema.len() {
        let missing: Vec<_> = schema
            .attributes()
            .iter()
            .filter(|a| !header.iter().any(|h| h == a.name))
            .map(|a| a.name.as_str())
            .collect();
        return Err(Error::Schema(format!(
            "header lacks schema attributes {missing:?}"
        )));
    }
    let schema = Schema::new(attrs)?;
    let class_col = schema.class_column();

    let mut dictionaries: Vec<Option<Vec<String>>> = schema
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let encoded = a.kind == AttributeKind::Categorical || i == class_col;
            encoded.then(|| {
                reference
                    .and_then(|r| r.schema.position(&a.name).and_then(|p| r.dictionary(p)))
                    .map(<[String]>::to_vec)
                    .unwrap_or_default()
            })
        })
        .collect();
    let mut lookups: Vec<HashMap<String, usize>> = dictionaries
        .iter()
        .map(|d| {
            d.iter()
                .flatten()
                .enumerate()
                .map(|(i, s)| (s.clone(), i))
                .collect()
        })
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (idx, record) in records.enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| parse_error(line, "<record>", e))?;
        if record.len() == 1 && record.get(0) == Some("") {
            continue;
        }
        for (col, attr) in schema.attributes().iter().enumerate() {
            let cell = record.get(col).unwrap_or("");
            if cell.is_empty() {
                return Err(Error::Parse {
                    row: line,
                    column: attr.name.clone(),
                    message: "missing value".into(),
                });
            }
            let value = match dictionaries[col].as_mut() {
                Some(dict) => {
                    let next = dict.len();
                    let code = *lookups[col].entry(cell.to_string()).or_insert_with(|| {
                        dict.push(cell.to_string());
                        next
                    });
                    code as f64
                }
                None => {
                    let v: f64 = cell.parse().map_err(|_| Error::Parse {
                        row: line,
                        column: attr.name.clone(),
                        message: format!("`{cell}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: line,
                            column: attr.name.clone(),
                            message: format!("`{cell}` is not finite"),
                        });
                    }
                    v
                }
            };
            columns[col].push(value);
        }
        if record.len() > schema.len() {
            return Err(Error::Parse {
                row: line,
                column: "<extra>".into(),
                message: format!("{} cells for {} columns", record.len(), schema.len()),
            });
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Empty("no data rows".into()));
    }
    Dataset::new(schema, columns, dictionaries)
}

fn parse_error(row: usize, column: &str, e: csv::Error) -> Error {
    Error::Parse {
        row,
        column: column.into(),
        message: e.to_string(),
    }
}

/// A closed interval standing in for a generalized attribute value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedValue {
    pub lower: f64,
    pub upper: f64,
}

impl GeneralizedValue {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower <= upper {
            Ok(GeneralizedValue { lower, upper })
        } else {
            Err(Error::InvalidParameter(format!(
                "interval lower {lower} exceeds upper {upper}"
            )))
        }
    }

    pub fn point(v: f64) -> Self {
        GeneralizedValue { lower: v, upper: v }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        self.lower + self.width() / 2.0
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn is_point(&self) -> bool {
        self.lower == self.upper
    }
}

/// `lower..upper`, or the bare value for a point.
impl fmt::Display for GeneralizedValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_point() {
            write!(f, "{}", self.lower)
        } else {
            write!(f, "{}..{}", self.lower, self.upper)
        }
    }
}

impl FromStr for GeneralizedValue {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("`{s}` is not a generalized value"));
        match s.split_once("..") {
            Some((lo, hi)) => {
                GeneralizedValue::new(lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?)
            }
            None => s.parse().map(GeneralizedValue::point).map_err(|_| bad()),
        }
    }
}

/// A non-empty, ascending set of feature ordinals. The class attribute is
/// implicitly part of every fragment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    features: Vec<usize>,
}

impl Fragment {
    pub fn new(mut features: Vec<usize>) -> Result<Self> {
        features.sort_unstable();
        features.dedup();
        if features.is_empty() {
            return Err(Error::InvalidFragmentation("empty fragment".into()));
        }
        Ok(Fragment { features })
    }

    pub fn features(&self) -> &[usize] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn contains(&self, ordinal: usize) -> bool {
        self.features.binary_search(&ordinal).is_ok()
    }
}

/// Disjoint fragments covering every feature exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragmentation {
    fragments: Vec<Fragment>,
}

impl Fragmentation {
    pub fn new(fragments: Vec<Fragment>, feature_count: usize) -> Result<Self> {
        let mut owner = vec![None; feature_count];
        for (i, frag) in fragments.iter().enumerate() {
            for &f in frag.features() {
                let slot = owner.get_mut(f).ok_or_else(|| {
                    Error::InvalidFragmentation(format!("feature {f} >= feature count {feature_count}"))
                })?;
                if let Some(j) = *slot {
                    return Err(Error::InvalidFragmentation(format!(
                        "feature {f} appears in fragments {j} and {i}"
                    )));
                }
                *slot = Some(i);
            }
        }
        if let Some(f) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidFragmentation(format!(
                "feature {f} is not in any fragment"
            )));
        }
        Ok(Fragmentation { fragments })
    }

    /// The trivial fragmentation: every feature in one fragment.
    pub fn single(feature_count: usize) -> Result<Self> {
        Fragmentation::new(vec![Fragment::new((0..feature_count).collect())?], feature_count)
    }

    pub fn fragments(&self) -> &[Fragment] {
        &self.fragments
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.fragments.iter().map(Fragment::len).sum()
    }
}

/// The fragment's feature columns (in fragment order) plus the class column.
/// Row order is preserved; sensitive attributes are dropped.
pub fn project(dataset: &Dataset, fragment: &Fragment) -> Result<Dataset> {
    let mut keep = Vec::with_capacity(fragment.len() + 1);
    for &o in fragment.features() {
        let col = *dataset
            .schema()
            .feature_columns()
            .get(o)
            .ok_or(Error::IndexOutOfRange {
                index: o,
                len: dataset.feature_count(),
            })?;
        keep.push(col);
    }
    keep.push(dataset.schema().class_column());
    dataset.keep_columns(&keep)
}
