//! Loaders and preprocessing for the UCI Adult and German Credit datasets.
//!
//! Both loaders parse the published file formats bit-exactly: Adult is
//! comma-separated with a `?` missing marker and a test file whose labels
//! carry a trailing period; German Credit is whitespace-separated coded
//! attributes with an integer label (1 = good, 2 = bad). Which columns are
//! continuous versus categorical is fixed by the checked-in schema files
//! under `assets/`.
//!
//! Preprocessing is a fit/apply split: one-hot category lists and
//! standardization statistics are computed from the training split only, and
//! applying the fitted [`Preprocessor`] to any split reuses those statistics.
//! Files are never downloaded implicitly; see [`crate::fetch`].

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::rng::substream;

const ADULT_SCHEMA_TOML: &str = include_str!("../assets/adult.schema.toml");
const GERMAN_SCHEMA_TOML: &str = include_str!("../assets/german.schema.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Categorical,
    Continuous,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

/// Per-dataset column schema, loaded from the checked-in TOML assets.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub name: String,
    pub target: String,
    pub sensitive: String,
    pub columns: Vec<Column>,
}

impl Schema {
    pub fn adult() -> Schema {
        toml::from_str(ADULT_SCHEMA_TOML).expect("embedded adult schema is valid")
    }

    pub fn german() -> Schema {
        toml::from_str(GERMAN_SCHEMA_TOML).expect("embedded german schema is valid")
    }

    /// Index of the sensitive attribute among the feature columns, if it is
    /// one (Adult's `sex` is; German's gender is derived from
    /// `personal-status-sex`).
    pub fn sensitive_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.name == self.sensitive)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Cat(String),
    Num(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularRow {
    pub values: Vec<Value>,
    /// Binary prediction target (Adult: income > 50K; German: good credit).
    pub target: u8,
    /// Binary sensitive attribute (1 = male for both datasets).
    pub sensitive: u8,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    pub schema: Schema,
    pub rows: Vec<TabularRow>,
}

impl TabularDataset {
    pub fn train_rows(&self) -> Vec<&TabularRow> {
        self.rows.iter().filter(|r| r.split == Split::Train).collect()
    }

    pub fn test_rows(&self) -> Vec<&TabularRow> {
        self.rows.iter().filter(|r| r.split == Split::Test).collect()
    }

    /// Fraction of rows carrying the majority target label.
    pub fn majority_target_fraction(&self) -> f64 {
        majority_fraction(self.rows.iter().map(|r| r.target))
    }

    /// Fraction of rows carrying the majority sensitive label.
    pub fn majority_sensitive_fraction(&self) -> f64 {
        majority_fraction(self.rows.iter().map(|r| r.sensitive))
    }
}

fn majority_fraction(labels: impl Iterator<Item = u8>) -> f64 {
    let mut ones = 0usize;
    let mut n = 0usize;
    for l in labels {
        ones += l as usize;
        n += 1;
    }
    let p = ones as f64 / n as f64;
    p.max(1.0 - p)
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_adult_lines<I: Iterator<Item = String>>(
    lines: I,
    split: Split,
    file: &str,
    schema: &Schema,
) -> Result<Vec<TabularRow>> {
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        // the published test file opens with a "|1x3 Cross validator" banner
        if line.is_empty() || line.starts_with('|') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != schema.columns.len() + 1 {
            return Err(parse_err(
                file,
                lineno,
                format!("expected {} fields, found {}", schema.columns.len() + 1, fields.len()),
            ));
        }
        // rows with any missing value are dropped, per the usual protocol
        if fields.iter().any(|f| *f == "?") {
            continue;
        }
        let mut values = Vec::with_capacity(schema.columns.len());
        let mut sensitive = None;
        for (col, field) in schema.columns.iter().zip(&fields) {
            match col.kind {
                ColumnKind::Continuous => {
                    let v: f64 = field.parse().map_err(|_| {
                        parse_err(file, lineno, format!("column {}: not a number: {field:?}", col.name))
                    })?;
                    values.push(Value::Num(v));
                }
                ColumnKind::Categorical => {
                    if col.name == schema.sensitive {
                        sensitive = Some(match *field {
                            "Male" => 1,
                            "Female" => 0,
                            other => {
                                return Err(parse_err(
                                    file,
                                    lineno,
                                    format!("unknown sex value {other:?}"),
                                ))
                            }
                        });
                    }
                    values.push(Value::Cat(field.to_string()));
                }
            }
        }
        // labels in the test file are suffixed with "."
        let label = fields[schema.columns.len()].trim_end_matches('.');
        let target = match label {
            ">50K" => 1,
            "<=50K" => 0,
            other => return Err(parse_err(file, lineno, format!("unknown label {other:?}"))),
        };
        rows.push(TabularRow {
            values,
            target,
            sensitive: sensitive.expect("schema names sex as a column"),
            split,
        });
    }
    Ok(rows)
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = String>> {
    let file = File::open(path).map_err(|e| {
        Error::Input(format!("cannot open {}: {e}", path.display()))
    })?;
    Ok(BufReader::new(file).lines().map_while(|l| l.ok()))
}

/// Load the UCI Adult dataset from the published train and test files,
/// dropping rows with missing values and normalizing labels across the two
/// file conventions.
pub fn load_adult(data_path: &Path, test_path: &Path) -> Result<TabularDataset> {
    let schema = Schema::adult();
    let mut rows = parse_adult_lines(
        read_lines(data_path)?,
        Split::Train,
        &data_path.display().to_string(),
        &schema,
    )?;
    rows.extend(parse_adult_lines(
        read_lines(test_path)?,
        Split::Test,
        &test_path.display().to_string(),
        &schema,
    )?);
    Ok(TabularDataset { schema, rows })
}

fn parse_german_lines<I: Iterator<Item = String>>(
    lines: I,
    file: &str,
    schema: &Schema,
) -> Result<Vec<TabularRow>> {
    let mut rows = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != schema.columns.len() + 1 {
            return Err(parse_err(
                file,
                lineno,
                format!("expected {} fields, found {}", schema.columns.len() + 1, fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(schema.columns.len());
        let mut sensitive = None;
        for (col, field) in schema.columns.iter().zip(&fields) {
            match col.kind {
                ColumnKind::Continuous => {
                    let v: f64 = field.parse().map_err(|_| {
                        parse_err(file, lineno, format!("column {}: not a number: {field:?}", col.name))
                    })?;
                    values.push(Value::Num(v));
                }
                ColumnKind::Categorical => {
                    if !field.starts_with('A') || field[1..].parse::<u32>().is_err() {
                        return Err(parse_err(
                            file,
                            lineno,
                            format!("column {}: unknown code {field:?}", col.name),
                        ));
                    }
                    if col.name == schema.sensitive {
                        sensitive = Some(match *field {
                            "A92" | "A95" => 0,
                            "A91" | "A93" | "A94" => 1,
                            other => {
                                return Err(parse_err(
                                    file,
                                    lineno,
                                    format!("unknown personal-status code {other:?}"),
                                ))
                            }
                        });
                    }
                    values.push(Value::Cat(field.to_string()));
                }
            }
        }
        let target = match fields[schema.columns.len()] {
            "1" => 1, // good credit
            "2" => 0, // bad credit
            other => return Err(parse_err(file, lineno, format!("unknown label {other:?}"))),
        };
        rows.push(TabularRow {
            values,
            target,
            sensitive: sensitive.expect("schema names personal-status-sex as a column"),
            split: Split::Train,
        });
    }
    Ok(rows)
}

/// Load the UCI Statlog German Credit dataset. All rows start out in the
/// train split; use [`stratified_split`] to carve out a test set.
pub fn load_german(path: &Path) -> Result<TabularDataset> {
    let schema = Schema::german();
    let rows = parse_german_lines(read_lines(path)?, &path.display().to_string(), &schema)?;
    Ok(TabularDataset { schema, rows })
}

/// Seeded stratified-by-target split: `test_fraction` of each target class is
/// reassigned to the test split.
pub fn stratified_split(dataset: &mut TabularDataset, test_fraction: f64, seed: u64) -> Result<()> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::Input(format!("test fraction {test_fraction} not in [0, 1)")));
    }
    let mut rng = substream(seed, "tabular-split");
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = dataset
            .rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.target == class)
            .map(|(i, _)| i)
            .collect();
        for i in (1..idx.len()).rev() {
            let j = rng.gen_range(0..=i);
            idx.swap(i, j);
        }
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        for &i in &idx[..n_test] {
            dataset.rows[i].split = Split::Test;
        }
        for &i in &idx[n_test..] {
            dataset.rows[i].split = Split::Train;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
enum ColumnStats {
    /// Sorted category list frozen at fit time.
    Categories(Vec<String>),
    Standardize { mean: f64, std: f64 },
}

/// One-hot maps and standardization statistics, fit on the training split
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    stats: Vec<ColumnStats>,
    include_sensitive: bool,
    sensitive_column: Option<usize>,
    n_columns: usize,
}

/// Output of [`Preprocessor::apply`].
#[derive(Debug, Clone)]
pub struct Encoded {
    pub features: Array2<f64>,
    pub targets: Vec<usize>,
    pub sensitive: Vec<usize>,
    /// Number of category values not seen at fit time (mapped to zero blocks).
    pub unseen_categories: usize,
}

impl Preprocessor {
    /// Fit category lists and standardization statistics on `rows`, which
    /// should be the training split only. With `include_sensitive` false the
    /// sensitive column's block is excluded from the feature matrix.
    pub fn fit(schema: &Schema, rows: &[&TabularRow], include_sensitive: bool) -> Result<Preprocessor> {
        if rows.is_empty() {
            return Err(Error::Input("cannot fit a preprocessor on an empty split".into()));
        }
        let mut stats = Vec::with_capacity(schema.columns.len());
        for (c, col) in schema.columns.iter().enumerate() {
            match col.kind {
                ColumnKind::Categorical => {
                    let cats: BTreeSet<String> = rows
                        .iter()
                        .map(|r| match &r.values[c] {
                            Value::Cat(s) => s.clone(),
                            Value::Num(_) => unreachable!("schema says categorical"),
                        })
                        .collect();
                    stats.push(ColumnStats::Categories(cats.into_iter().collect()));
                }
                ColumnKind::Continuous => {
                    let xs: Vec<f64> = rows
                        .iter()
                        .map(|r| match r.values[c] {
                            Value::Num(v) => v,
                            Value::Cat(_) => unreachable!("schema says continuous"),
                        })
                        .collect();
                    let n = xs.len() as f64;
                    let mean = xs.iter().sum::<f64>() / n;
                    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                    let std = var.sqrt();
                    if std <= 0.0 {
                        return Err(Error::Input(format!(
                            "degenerate continuous column {:?}: zero variance on the training split",
                            col.name
                        )));
                    }
                    stats.push(ColumnStats::Standardize { mean, std });
                }
            }
        }
        Ok(Preprocessor {
            stats,
            include_sensitive,
            sensitive_column: schema.sensitive_column(),
            n_columns: schema.columns.len(),
        })
    }

    /// Total feature dimension after one-hot expansion.
    pub fn feature_dim(&self) -> usize {
        self.stats
            .iter()
            .enumerate()
            .filter(|(c, _)| self.include_sensitive || Some(*c) != self.sensitive_column)
            .map(|(_, s)| match s {
                ColumnStats::Categories(cats) => cats.len(),
                ColumnStats::Standardize { .. } => 1,
            })
            .sum()
    }

    /// Encode rows into a dense feature matrix using the fitted statistics.
    /// Category values unseen at fit time map to an all-zero block and are
    /// counted in `unseen_categories`.
    pub fn apply(&self, rows: &[&TabularRow]) -> Result<Encoded> {
        if let Some(r) = rows.first() {
            if r.values.len() != self.n_columns {
                return Err(Error::Input(format!(
                    "schema mismatch: preprocessor fitted on {} columns, rows have {}",
                    self.n_columns,
                    r.values.len()
                )));
            }
        }
        let dim = self.feature_dim();
        let mut features = Array2::zeros((rows.len(), dim));
        let mut unseen = 0usize;
        for (i, row) in rows.iter().enumerate() {
            let mut j = 0usize;
            for (c, stat) in self.stats.iter().enumerate() {
                if !self.include_sensitive && Some(c) == self.sensitive_column {
                    continue;
                }
                match (stat, &row.values[c]) {
                    (ColumnStats::Categories(cats), Value::Cat(v)) => {
                        match cats.binary_search(v) {
                            Ok(k) => features[[i, j + k]] = 1.0,
                            Err(_) => unseen += 1,
                        }
                        j += cats.len();
                    }
                    (ColumnStats::Standardize { mean, std }, Value::Num(v)) => {
                        features[[i, j]] = (v - mean) / std;
                        j += 1;
                    }
                    _ => {
                        return Err(Error::Input(format!(
                            "schema mismatch at column {c}: value kind disagrees with the fitted schema"
                        )))
                    }
                }
            }
        }
        Ok(Encoded {
            features,
            targets: rows.iter().map(|r| r.target as usize).collect(),
            sensitive: rows.iter().map(|r| r.sensitive as usize).collect(),
            unseen_categories: unseen,
        })
    }
}

/// Directory where dataset files are expected: `$CAUSIRL_DATA_DIR`, or
/// `data/` under the current directory.
pub fn data_dir() -> PathBuf {
    std::env::var_os("CAUSIRL_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

/// Archive export: one column per schema attribute plus target, sensitive and
/// split provenance.
pub fn write_archive_csv<W: std::io::Write>(dataset: &TabularDataset, mut w: W) -> Result<()> {
    let names: Vec<&str> = dataset.schema.columns.iter().map(|c| c.name.as_str()).collect();
    writeln!(w, "{},target,sensitive,split", names.join(","))?;
    for row in &dataset.rows {
        for v in &row.values {
            match v {
                Value::Cat(s) => write!(w, "{s},")?,
                Value::Num(x) => write!(w, "{x},")?,
            }
        }
        writeln!(w, "{},{},{}", row.target, row.sensitive, row.split.as_str())?;
    }
    Ok(())
}
