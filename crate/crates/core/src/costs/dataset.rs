use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("cannot read {path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{path} contains no data rows")]
    Empty { path: PathBuf },
    #[error("line {line}: cell `{cell}` is not numeric")]
    Malformed { line: usize, cell: String },
    #[error("line {line}: column {column} missing (row has {width} cells)")]
    MissingColumn { line: usize, column: usize, width: usize },
    #[error("rows have inconsistent feature dimension")]
    Ragged,
    #[error("cannot split {rows} rows among {agents} agents")]
    TooManyAgents { rows: usize, agents: usize },
}

/// Feature/target pairs sharing one feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<(Vec<f64>, f64)>,
    source: PathBuf,
}

impl Dataset {
    pub fn from_rows(rows: Vec<(Vec<f64>, f64)>, source: impl Into<PathBuf>) -> Result<Self, DatasetError> {
        if let Some((first, _)) = rows.first() {
            let d = first.len();
            if rows.iter().any(|(f, _)| f.len() != d) {
                return Err(DatasetError::Ragged);
            }
        }
        Ok(Self { rows, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn feature_dimension(&self) -> usize {
        self.rows.first().map_or(0, |(f, _)| f.len())
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], &f64)> {
        self.rows.iter().map(|(f, y)| (f.as_slice(), y))
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    /// Keeps the first `n` rows in file order.
    pub fn truncated(mut self, n: usize) -> Self {
        self.rows.truncate(n);
        self
    }
}

fn split_cells(line: &str) -> Vec<&str> {
    if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Reads a comma- or whitespace-separated numeric table. A first line with
/// any non-numeric cell is treated as a header and skipped.
pub fn load_csv_dataset(
    path: &Path,
    feature_columns: &[usize],
    target_column: usize,
) -> Result<Dataset, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_owned(),
        reason: e.to_string(),
    })?;
    parse_table(&text, path, feature_columns, target_column)
}

fn parse_table(
    text: &str,
    path: &Path,
    feature_columns: &[usize],
    target_column: usize,
) -> Result<Dataset, DatasetError> {
    let mut rows = Vec::new();
    let mut first = true;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells = split_cells(raw);
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
        if std::mem::take(&mut first) && parsed.iter().any(Option::is_none) {
            continue;
        }
        let pick = |column: usize| -> Result<f64, DatasetError> {
            match parsed.get(column) {
                None => Err(DatasetError::MissingColumn { line, column, width: cells.len() }),
                Some(None) => Err(DatasetError::Malformed { line, cell: cells[column].to_owned() }),
                Some(Some(v)) => Ok(*v),
            }
        };
        let features = feature_columns.iter().map(|&c| pick(c)).collect::<Result<Vec<_>, _>>()?;
        let target = pick(target_column)?;
        rows.push((features, target));
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty { path: path.to_owned() });
    }
    Dataset::from_rows(rows, path)
}

/// Assigns every row to an agent uniformly at random, redrawing the whole
/// assignment until no agent is empty. After `MAX_REDRAWS` failed draws the
/// first `n_agents` rows of a shuffled order seed one agent each and the rest
/// stay uniform.
pub fn partition_dataset(
    data: &Dataset,
    n_agents: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Dataset>, DatasetError> {
    const MAX_REDRAWS: usize = 10_000;
    let rows = data.len();
    if n_agents == 0 || n_agents > rows {
        return Err(DatasetError::TooManyAgents { rows, agents: n_agents });
    }
    let mut owner = vec![0usize; rows];
    let mut ok = false;
    for _ in 0..MAX_REDRAWS {
        let mut counts = vec![0usize; n_agents];
        for o in owner.iter_mut() {
            *o = rng.gen_range(0..n_agents);
            counts[*o] += 1;
        }
        if counts.iter().all(|&c| c > 0) {
            ok = true;
            break;
        }
    }
    if !ok {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(rng);
        for (k, &r) in order.iter().enumerate() {
            owner[r] = if k < n_agents { k } else { rng.gen_range(0..n_agents) };
        }
    }
    let mut parts = vec![Vec::new(); n_agents];
    for (row, &o) in data.rows.iter().zip(&owner) {
        parts[o].push(row.clone());
    }
    parts
        .into_iter()
        .map(|p| Dataset::from_rows(p, data.source.clone()))
        .collect()
}
