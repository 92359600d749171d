//! Labeled data matrices and delimited-text ingestion.
//!
//! The canonical orientation is rows-as-samples. Files ship as delimited
//! text (tab or comma, auto-detected): the first row holds feature ids,
//! the first column sample ids. A separate two-column labels file maps
//! sample id to class name. Omics matrices frequently arrive transposed
//! (genes as rows); `LoadOptions::transpose` handles that without
//! rewriting the file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n×p observation matrix with per-sample class labels.
///
/// Labels are stored as indices into `class_names`; class names are sorted
/// lexicographically so the class order does not depend on file row order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabeledDataset {
    matrix: Array2<f64>,
    feature_ids: Vec<String>,
    sample_ids: Vec<String>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl LabeledDataset {
    /// Builds a dataset from pre-resolved label indices.
    pub fn new(
        matrix: Array2<f64>,
        feature_ids: Vec<String>,
        sample_ids: Vec<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let (n, p) = matrix.dim();
        if feature_ids.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "{} feature ids for {p} columns",
                feature_ids.len()
            )));
        }
        if sample_ids.len() != n || labels.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} sample ids / {} labels for {n} rows",
                sample_ids.len(),
                labels.len()
            )));
        }
        if class_names.len() < 2 {
            return Err(Error::TooFewClasses {
                got: class_names.len(),
            });
        }
        check_unique(&feature_ids, "feature id")?;
        check_unique(&sample_ids, "sample id")?;
        check_unique(&class_names, "class name")?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::Data(format!(
                "label index {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if let Some((row, col)) = first_non_finite(&matrix) {
            return Err(Error::Data(format!(
                "non-finite value at sample {:?}, feature {:?}",
                sample_ids[row], feature_ids[col]
            )));
        }
        Ok(Self {
            matrix,
            feature_ids,
            sample_ids,
            labels,
            class_names,
        })
    }

    /// Builds a dataset from per-sample class names, assigning stable
    /// (lexicographic) class indices.
    pub fn from_named_labels(
        matrix: Array2<f64>,
        feature_ids: Vec<String>,
        sample_ids: Vec<String>,
        label_names: &[String],
    ) -> Result<Self> {
        if label_names.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} rows",
                label_names.len(),
                matrix.nrows()
            )));
        }
        let mut class_names: Vec<String> = label_names.to_vec();
        class_names.sort();
        class_names.dedup();
        let index: HashMap<&str, usize> = class_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let labels = label_names.iter().map(|l| index[l.as_str()]).collect();
        Self::new(matrix, feature_ids, sample_ids, labels, class_names)
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.matrix.row(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// Number of samples per class, indexed by class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Restricts the dataset to a strictly increasing list of feature indices.
    pub fn subset_features(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty feature subset".into()));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "feature subset must be strictly increasing".into(),
            ));
        }
        if *indices.last().unwrap() >= self.n_features() {
            return Err(Error::DimensionMismatch(format!(
                "feature index {} out of range for p={}",
                indices.last().unwrap(),
                self.n_features()
            )));
        }
        Ok(Self {
            matrix: self.matrix.select(Axis(1), indices),
            feature_ids: indices
                .iter()
                .map(|&i| self.feature_ids[i].clone())
                .collect(),
            sample_ids: self.sample_ids.clone(),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        })
    }

    /// Restricts the dataset to a list of sample indices, keeping the full
    /// class table so label indices stay aligned across subsets.
    pub fn subset_samples(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument("empty sample subset".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_samples()) {
            return Err(Error::DimensionMismatch(format!(
                "sample index {bad} out of range for n={}",
                self.n_samples()
            )));
        }
        Ok(Self {
            matrix: self.matrix.select(Axis(0), indices),
            feature_ids: self.feature_ids.clone(),
            sample_ids: indices
                .iter()
                .map(|&i| self.sample_ids[i].clone())
                .collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        })
    }

    /// Writes the matrix in the canonical delimited layout (samples as rows).
    pub fn write_matrix<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        write!(w, "id")?;
        for f in &self.feature_ids {
            write!(w, "\t{f}")?;
        }
        writeln!(w)?;
        for (i, sid) in self.sample_ids.iter().enumerate() {
            write!(w, "{sid}")?;
            for v in self.matrix.row(i) {
                write!(w, "\t{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes the two-column sample-to-class labels table.
    pub fn write_labels<W: Write + ?Sized>(&self, w: &mut W) -> Result<()> {
        for (sid, &l) in self.sample_ids.iter().zip(&self.labels) {
            writeln!(w, "{sid}\t{}", self.class_names[l])?;
        }
        Ok(())
    }

    pub fn save_matrix(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_matrix(&mut w)
    }

    pub fn save_labels(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_labels(&mut w)
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashMap::with_capacity(ids.len());
    for id in ids {
        if let Some(()) = seen.insert(id.as_str(), ()) {
            return Err(Error::Data(format!("duplicate {what} {id:?}")));
        }
    }
    Ok(())
}

fn first_non_finite(m: &Array2<f64>) -> Option<(usize, usize)> {
    m.indexed_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|((r, c), _)| (r, c))
}

/// How to handle missing cells in the input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPolicy {
    /// Fail on the first missing cell.
    #[default]
    Reject,
    /// Replace missing cells by the feature mean, with a logged warning.
    ImputeMean,
}

/// Ingestion options.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Input matrix has features as rows and samples as columns.
    pub transpose: bool,
    pub missing: MissingPolicy,
    /// Explicit delimiter; auto-detected from the header when `None`.
    pub delimiter: Option<u8>,
}

/// What ingestion changed, for provenance.
#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    /// Feature ids dropped because the column was constant.
    pub dropped_constant_features: Vec<String>,
    pub imputed_cells: usize,
}

struct RawTable {
    col_ids: Vec<String>,
    row_ids: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

type CellAccessor = Box<dyn Fn(usize, usize) -> Option<f64>>;

fn detect_delimiter(path: &Path) -> Result<u8> {
    let content = std::fs::read_to_string(path)?;
    let first = content.lines().next().unwrap_or("");
    let tabs = first.matches('\t').count();
    let commas = first.matches(',').count();
    if tabs == 0 && commas == 0 {
        return Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: "no tab or comma delimiter found in header".into(),
        });
    }
    Ok(if tabs >= commas { b'\t' } else { b',' })
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "na" | "Na" | "NaN" | "nan" | "N/A" | "null" | "NULL"
    )
}

fn parse_table(path: &Path, delimiter: Option<u8>) -> Result<RawTable> {
    let delim = match delimiter {
        Some(d) => d,
        None => detect_delimiter(path)?,
    };
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delim)
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| parse_err(0, e.to_string()))?;

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(1, e.to_string()))?,
        None => return Err(parse_err(1, "empty file".into())),
    };
    if header.len() < 2 {
        return Err(parse_err(
            1,
            "header needs an id column plus data columns".into(),
        ));
    }
    let col_ids: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();

    let mut row_ids = Vec::new();
    let mut cells = Vec::new();
    for (idx, rec) in records.enumerate() {
        let line = idx + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != col_ids.len() + 1 {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", col_ids.len() + 1, rec.len()),
            ));
        }
        row_ids.push(rec[0].trim().to_string());
        let mut row = Vec::with_capacity(col_ids.len());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            if is_missing(cell) {
                row.push(None);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    parse_err(
                        line,
                        format!("non-numeric cell {:?} in column {:?}", cell, col_ids[j]),
                    )
                })?;
                row.push(Some(v));
            }
        }
        cells.push(row);
    }
    if cells.is_empty() {
        return Err(parse_err(2, "no data rows".into()));
    }
    Ok(RawTable {
        col_ids,
        row_ids,
        cells,
    })
}

fn parse_labels_file(
    path: &Path,
    delimiter: Option<u8>,
    sample_ids: &[String],
) -> Result<Vec<String>> {
    let content = std::fs::read_to_string(path)?;
    let delim = match delimiter {
        Some(d) => d as char,
        None => {
            let first = content.lines().next().unwrap_or("");
            if first.matches('\t').count() >= first.matches(',').count() && first.contains('\t') {
                '\t'
            } else if first.contains(',') {
                ','
            } else {
                '\t'
            }
        }
    };
    let known: HashMap<&str, usize> = sample_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut assigned: Vec<Option<String>> = vec![None; sample_ids.len()];
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, delim);
        let id = parts.next().unwrap_or("").trim();
        let class = parts.next().unwrap_or("").trim();
        if class.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: format!("expected <sample id>{delim}<class>"),
            });
        }
        match known.get(id) {
            Some(&i) => {
                if assigned[i].is_some() {
                    return Err(Error::Data(format!(
                        "duplicate label row for sample {id:?}"
                    )));
                }
                assigned[i] = Some(class.to_string());
            }
            None if idx == 0 => {
                // First row with an unknown id is treated as a header.
                log::debug!("treating first labels row {line:?} as a header");
            }
            None => {
                log::warn!("ignoring label for unknown sample {id:?}");
            }
        }
    }
    let missing: Vec<&String> = sample_ids
        .iter()
        .zip(&assigned)
        .filter(|(_, a)| a.is_none())
        .map(|(s, _)| s)
        .collect();
    if !missing.is_empty() {
        let shown: Vec<String> = missing.iter().take(5).map(|s| format!("{s:?}")).collect();
        return Err(Error::Data(format!(
            "{} sample(s) without a label, e.g. {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    Ok(assigned.into_iter().map(Option::unwrap).collect())
}

/// Loads and validates a labeled dataset from a matrix file and a labels file.
///
/// Constant features are dropped with a warning and recorded in the returned
/// [`LoadReport`]; samples lacking a label are an error.
pub fn load_dataset(
    matrix_path: &Path,
    labels_path: &Path,
    options: &LoadOptions,
) -> Result<(LabeledDataset, LoadReport)> {
    let table = parse_table(matrix_path, options.delimiter)?;
    let (sample_ids, feature_ids, get): (Vec<String>, Vec<String>, CellAccessor) =
        if options.transpose {
            let cells = table.cells;
            (
                table.col_ids,
                table.row_ids,
                Box::new(move |s, f| cells[f][s]),
            )
        } else {
            let cells = table.cells;
            (
                table.row_ids,
                table.col_ids,
                Box::new(move |s, f| cells[s][f]),
            )
        };
    let n = sample_ids.len();
    let p = feature_ids.len();

    let mut report = LoadReport::default();
    let mut matrix = Array2::<f64>::zeros((n, p));
    for f in 0..p {
        let observed: Vec<f64> = (0..n).filter_map(|s| get(s, f)).collect();
        if observed.is_empty() {
            return Err(Error::Data(format!(
                "feature {:?} has no observed values",
                feature_ids[f]
            )));
        }
        let mean = observed.iter().sum::<f64>() / observed.len() as f64;
        for s in 0..n {
            match get(s, f) {
                Some(v) => matrix[(s, f)] = v,
                None => match options.missing {
                    MissingPolicy::Reject => {
                        return Err(Error::Data(format!(
                            "missing value for sample {:?}, feature {:?} (use mean imputation to allow)",
                            sample_ids[s], feature_ids[f]
                        )));
                    }
                    MissingPolicy::ImputeMean => {
                        matrix[(s, f)] = mean;
                        report.imputed_cells += 1;
                    }
                },
            }
        }
    }
    if report.imputed_cells > 0 {
        log::warn!(
            "imputed {} missing cell(s) with feature means",
            report.imputed_cells
        );
    }

    // Constant columns carry no information and break standardization.
    let keep: Vec<usize> = (0..p)
        .filter(|&f| {
            let col = matrix.column(f);
            let constant = col.iter().all(|&v| v == col[0]);
            if constant {
                report
                    .dropped_constant_features
                    .push(feature_ids[f].clone());
            }
            !constant
        })
        .collect();
    if !report.dropped_constant_features.is_empty() {
        log::warn!(
            "dropped {} constant feature(s): {}",
            report.dropped_constant_features.len(),
            report
                .dropped_constant_features
                .iter()
                .take(5)
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    if keep.is_empty() {
        return Err(Error::Data("all features are constant".into()));
    }
    let (matrix, feature_ids) = if keep.len() == p {
        (matrix, feature_ids)
    } else {
        (
            matrix.select(Axis(1), &keep),
            keep.iter().map(|&f| feature_ids[f].clone()).collect(),
        )
    };

    let label_names = parse_labels_file(labels_path, options.delimiter, &sample_ids)?;
    let dataset = LabeledDataset::from_named_labels(matrix, feature_ids, sample_ids, &label_names)?;
    Ok((dataset, report))
}
