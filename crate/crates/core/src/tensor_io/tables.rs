use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{ensure, invalid, Error, Result};

pub const DEFAULT_CLAMP_EPS: f64 = 1e-6;

/// Class-labelled embedding vectors, one row per example.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: DMatrix<f64>,
    labels: Vec<usize>,
    class_names: Vec<String>,
}

impl EmbeddingSet {
    /// Labels must already be dense indices into `class_names`.
    pub fn new(
        vectors: DMatrix<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        ensure!(
            vectors.nrows() >= 2,
            "embedding set needs at least 2 rows, got {}",
            vectors.nrows()
        );
        ensure!(
            vectors.ncols() >= 1,
            "embedding dimension must be at least 1"
        );
        ensure!(
            labels.len() == vectors.nrows(),
            "{} labels for {} embedding rows",
            labels.len(),
            vectors.nrows()
        );
        let k = class_names.len();
        ensure!(
            labels.iter().all(|&l| l < k),
            "label index out of range for {k} classes"
        );
        ensure!(
            vectors.iter().all(|v| v.is_finite()),
            "embedding contains non-finite values"
        );
        Ok(Self {
            vectors,
            labels,
            class_names,
        })
    }

    /// Build from raw labels of any hashable type, re-indexing them densely
    /// in order of first appearance.
    pub fn from_labelled<L: AsRef<str>>(vectors: DMatrix<f64>, raw_labels: &[L]) -> Result<Self> {
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut class_names = Vec::new();
        let labels = raw_labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l).or_insert_with(|| {
                    class_names.push(l.to_string());
                    class_names.len() - 1
                })
            })
            .collect();
        Self::new(vectors, labels, class_names)
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

fn parse_cell(cell: &str, what: &'static str, row: usize, col: usize) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            what,
            format!("row {row}, column {col}: '{cell}' is not a number"),
        )
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Parse an embeddings CSV with header `label,e0,...,e{p-1}`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse("embeddings", e))?
        .clone();
    ensure!(
        header.len() >= 2,
        "embeddings header needs a label column and at least one value column"
    );
    let p = header.len() - 1;

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse("embeddings", e))?;
        let row = i + 2;
        if record.len() != header.len() {
            return Err(Error::parse(
                "embeddings",
                format!(
                    "ragged row {row}: {} cells, header has {}",
                    record.len(),
                    header.len()
                ),
            ));
        }
        labels.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).enumerate() {
            values.push(parse_cell(cell, "embeddings", row, j + 1)?);
        }
    }
    ensure!(
        labels.len() >= 2,
        "embeddings file needs at least 2 rows, got {}",
        labels.len()
    );
    let vectors = DMatrix::from_row_slice(labels.len(), p, &values);
    EmbeddingSet::from_labelled(vectors, &labels)
}

/// Clamp an accuracy into `[eps, 1 - eps]` so its logit is finite.
pub fn clamp_accuracy(acc: f64, eps: f64) -> f64 {
    acc.clamp(eps, 1.0 - eps)
}

/// Models × datasets grid of clamped top-1 accuracies.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    models: Vec<String>,
    datasets: Vec<String>,
    acc: Vec<Vec<f64>>,
}

impl AccuracyTable {
    /// Validate raw accuracies in `[0, 1]` and clamp them with `clamp_eps`.
    pub fn new(
        models: Vec<String>,
        datasets: Vec<String>,
        acc: Vec<Vec<f64>>,
        clamp_eps: f64,
    ) -> Result<Self> {
        ensure!(
            clamp_eps > 0.0 && clamp_eps < 0.5,
            "clamp epsilon {clamp_eps} must lie in (0, 0.5)"
        );
        ensure!(
            models.len() >= 2,
            "accuracy table needs at least 2 models, got {}",
            models.len()
        );
        ensure!(
            !datasets.is_empty(),
            "accuracy table needs at least 1 dataset"
        );
        ensure!(
            acc.len() == models.len(),
            "{} accuracy rows for {} models",
            acc.len(),
            models.len()
        );
        let mut seen = HashSet::new();
        for m in &models {
            ensure!(seen.insert(m.as_str()), "duplicate model_id '{m}'");
        }
        let acc = acc
            .into_iter()
            .zip(&models)
            .map(|(row, model)| {
                ensure!(
                    row.len() == datasets.len(),
                    "model '{model}' has {} cells, expected {}",
                    row.len(),
                    datasets.len()
                );
                row.into_iter()
                    .zip(&datasets)
                    .map(|(v, d)| {
                        if !(0.0..=1.0).contains(&v) {
                            return Err(invalid!(
                                "accuracy {v} for model '{model}' on '{d}' is outside [0, 1]"
                            ));
                        }
                        Ok(clamp_accuracy(v, clamp_eps))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            models,
            datasets,
            acc,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn datasets(&self) -> &[String] {
        &self.datasets
    }

    pub fn get(&self, model: usize, dataset: usize) -> f64 {
        self.acc[model][dataset]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.acc
    }
}

/// Parse an accuracy CSV: first column is the model id, every other column
/// is a dataset.
pub fn load_accuracy_table(path: impl AsRef<Path>, clamp_eps: f64) -> Result<AccuracyTable> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let header = reader
        .headers()
        .map_err(|e| Error::parse("accuracy table", e))?
        .clone();
    ensure!(
        header.len() >= 2,
        "accuracy table needs a model column and at least one dataset"
    );
    let datasets: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

    let mut models = Vec::new();
    let mut acc = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse("accuracy table", e))?;
        let row = i + 2;
        if record.len() != header.len() {
            return Err(Error::parse(
                "accuracy table",
                format!(
                    "row {row} has {} cells, header has {}",
                    record.len(),
                    header.len()
                ),
            ));
        }
        models.push(record[0].to_string());
        let cells = record
            .iter()
            .enumerate()
            .skip(1)
            .map(|(j, cell)| {
                if cell.is_empty() {
                    Err(Error::parse(
                        "accuracy table",
                        format!("row {row}, column {j}: missing cell"),
                    ))
                } else {
                    parse_cell(cell, "accuracy table", row, j)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        acc.push(cells);
    }
    AccuracyTable::new(models, datasets, acc, clamp_eps)
}
