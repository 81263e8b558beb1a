//! Owner datasets, CSV ingestion, and the vertical (column-wise) division of
//! noisy data into per-fog-node shards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::dp::{FeatureBounds, PrivacyBudget};

/// Name of the mandatory trailing CSV column.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV at line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("header mismatch: expected [{expected}], found [{found}]")]
    HeaderMismatch { expected: String, found: String },
    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column:?}: {value:?} is not a finite decimal number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: label {value:?} is not a declared class")]
    UnknownLabel { row: usize, value: String },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("schema mismatch between datasets")]
    SchemaMismatch,
    #[error("duplicate row key {0}")]
    DuplicateRow(RowKey),
    #[error("assembly failed: column {0} is not covered by any shard")]
    MissingColumn(usize),
    #[error("assembly failed: column {0} appears in more than one shard")]
    DuplicateColumn(usize),
    #[error("assembly failed: column {0} is outside the schema")]
    ColumnOutOfRange(usize),
    #[error("assembly failed: shard on {fog} has inconsistent row keys (first mismatch at {key})")]
    InconsistentRowKeys { fog: FogId, key: RowKey },
}

/// Identifier of a data owner, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OwnerId(pub u32);

impl fmt::Display for OwnerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DO{}", self.0)
    }
}

/// Identifier of a fog node, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct FogId(pub u32);

impl fmt::Display for FogId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FN{}", self.0)
    }
}

/// Global row identity: the owner and the row's position in that owner's
/// dataset. Lets shards from independent fog nodes line up again without a
/// coordinator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RowKey {
    pub owner: OwnerId,
    pub row: usize,
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.owner, self.row)
    }
}

/// Dense row-major matrix of reals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != rows * cols {
            return Err(DataError::Invalid(format!(
                "{} values do not fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(cols: usize, rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(DataError::Invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.rows).map(move |r| self.row(r))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Selects the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Selects the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Matrix {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }

    /// True when both matrices have the same shape and identical bit patterns.
    pub fn bit_eq(&self, other: &Matrix) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Column names, declared per-column bounds and the class label set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schema {
    feature_names: Vec<String>,
    feature_bounds: Vec<FeatureBounds>,
    class_labels: Vec<String>,
}

impl Schema {
    /// Class labels are stored sorted; their order is the canonical class order.
    pub fn new(
        feature_names: Vec<String>,
        feature_bounds: Vec<FeatureBounds>,
        class_labels: impl IntoIterator<Item = String>,
    ) -> Result<Self, DataError> {
        if feature_names.is_empty() {
            return Err(DataError::Schema("at least one feature is required".into()));
        }
        let mut seen = BTreeSet::new();
        for name in &feature_names {
            if name.is_empty() {
                return Err(DataError::Schema("feature names must be nonempty".into()));
            }
            if name == LABEL_COLUMN {
                return Err(DataError::Schema(format!(
                    "{LABEL_COLUMN:?} is reserved for the class column"
                )));
            }
            if !seen.insert(name.as_str()) {
                return Err(DataError::Schema(format!("duplicate feature name {name:?}")));
            }
        }
        if feature_bounds.len() != feature_names.len() {
            return Err(DataError::Schema(format!(
                "{} bounds for {} features",
                feature_bounds.len(),
                feature_names.len()
            )));
        }
        let labels: BTreeSet<String> = class_labels.into_iter().collect();
        if labels.is_empty() {
            return Err(DataError::Schema("at least one class label is required".into()));
        }
        if labels.iter().any(String::is_empty) {
            return Err(DataError::Schema("class labels must be nonempty".into()));
        }
        Ok(Self {
            feature_names,
            feature_bounds,
            class_labels: labels.into_iter().collect(),
        })
    }

    /// Derives a schema from a CSV file: names from the header, bounds from
    /// the observed column ranges, classes from the distinct labels.
    ///
    /// The resulting bounds are treated as public. Use [`Schema::new`] when
    /// domain bounds are known independently of the data.
    pub fn infer_from_csv(path: &Path) -> Result<Self, DataError> {
        let (names, records) = read_records(path)?;
        let m = names.len();
        let mut lo = vec![f64::INFINITY; m];
        let mut hi = vec![f64::NEG_INFINITY; m];
        let mut labels = BTreeSet::new();
        for (row, record) in records.iter().enumerate() {
            let (values, label) = parse_record(row + 1, &names, record)?;
            for (j, v) in values.into_iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
            labels.insert(label.to_string());
        }
        if records.is_empty() {
            return Err(DataError::Invalid(format!("{} has no data rows", path.display())));
        }
        let bounds = lo
            .into_iter()
            .zip(hi)
            .map(|(l, h)| FeatureBounds::new(l, h).map_err(|e| DataError::Schema(e.to_string())))
            .collect::<Result<_, _>>()?;
        Schema::new(names, bounds, labels)
    }

    pub fn width(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn bounds(&self) -> &[FeatureBounds] {
        &self.feature_bounds
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_labels
            .binary_search_by(|c| c.as_str().cmp(label))
            .ok()
    }

    pub fn supports_classification(&self) -> bool {
        self.class_labels.len() >= 2
    }
}

/// One owner's raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct OwnerDataset {
    owner: OwnerId,
    schema: Arc<Schema>,
    features: Matrix,
    labels: Vec<String>,
}

impl OwnerDataset {
    pub fn new(
        owner: OwnerId,
        schema: Arc<Schema>,
        features: Matrix,
        labels: Vec<String>,
    ) -> Result<Self, DataError> {
        check_shape(&schema, &features, &labels)?;
        Ok(Self {
            owner,
            schema,
            features,
            labels,
        })
    }

    pub fn owner(&self) -> OwnerId {
        self.owner
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Feature matrix with every cell clamped into its declared bounds.
    pub fn clipped_features(&self) -> Matrix {
        let mut out = self.features.clone();
        for r in 0..out.rows() {
            for (c, b) in self.schema.bounds().iter().enumerate() {
                out.set(r, c, b.clip(out.get(r, c)));
            }
        }
        out
    }

    /// Subset of rows (in the given order) under the same owner; row indices
    /// are renumbered from zero.
    pub fn select_rows(&self, rows: &[usize]) -> OwnerDataset {
        OwnerDataset {
            owner: self.owner,
            schema: Arc::clone(&self.schema),
            features: self.features.select_rows(rows),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
        }
    }

    pub fn with_owner(mut self, owner: OwnerId) -> OwnerDataset {
        self.owner = owner;
        self
    }

    /// Deals rows round-robin to `n` owners: row `i` goes to owner
    /// `(i mod n) + 1`.
    pub fn distribute(&self, n: usize) -> Result<Vec<OwnerDataset>, DataError> {
        if n == 0 {
            return Err(DataError::Invalid("owner count must be at least 1".into()));
        }
        Ok((0..n)
            .map(|k| {
                let rows: Vec<usize> = (k..self.len()).step_by(n).collect();
                self.select_rows(&rows).with_owner(OwnerId(k as u32 + 1))
            })
            .collect())
    }
}

fn check_shape(schema: &Schema, features: &Matrix, labels: &[String]) -> Result<(), DataError> {
    if features.cols() != schema.width() {
        return Err(DataError::Invalid(format!(
            "{} feature columns, schema declares {}",
            features.cols(),
            schema.width()
        )));
    }
    if features.rows() != labels.len() {
        return Err(DataError::Invalid(format!(
            "{} feature rows but {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if let Some((row, value)) = labels
        .iter()
        .enumerate()
        .find(|(_, l)| schema.class_index(l).is_none())
    {
        return Err(DataError::UnknownLabel {
            row: row + 1,
            value: value.clone(),
        });
    }
    Ok(())
}

/// Perturbed records, possibly pooled from several owners.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDataset {
    schema: Arc<Schema>,
    row_keys: Vec<RowKey>,
    features: Matrix,
    labels: Vec<String>,
    budgets: BTreeMap<OwnerId, PrivacyBudget>,
}

impl NoisyDataset {
    pub fn new(
        schema: Arc<Schema>,
        row_keys: Vec<RowKey>,
        features: Matrix,
        labels: Vec<String>,
        budgets: BTreeMap<OwnerId, PrivacyBudget>,
    ) -> Result<Self, DataError> {
        check_shape(&schema, &features, &labels)?;
        if row_keys.len() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} row keys for {} rows",
                row_keys.len(),
                labels.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for k in &row_keys {
            if !seen.insert(*k) {
                return Err(DataError::DuplicateRow(*k));
            }
        }
        for b in budgets.values() {
            if b.per_feature().len() != schema.width() {
                return Err(DataError::Invalid(format!(
                    "budget covers {} features, schema has {}",
                    b.per_feature().len(),
                    schema.width()
                )));
            }
        }
        Ok(Self {
            schema,
            row_keys,
            features,
            labels,
            budgets,
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn budgets(&self) -> &BTreeMap<OwnerId, PrivacyBudget> {
        &self.budgets
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Column slice of a noisy dataset held by one fog node. Never carries labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shard {
    fog: FogId,
    columns: Vec<usize>,
    row_keys: Vec<RowKey>,
    values: Matrix,
}

impl Shard {
    pub fn new(
        fog: FogId,
        columns: Vec<usize>,
        row_keys: Vec<RowKey>,
        values: Matrix,
    ) -> Result<Self, DataError> {
        if columns.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Invalid(
                "shard columns must be strictly increasing".into(),
            ));
        }
        if values.cols() != columns.len() || values.rows() != row_keys.len() {
            return Err(DataError::Invalid(format!(
                "shard values are {}x{}, expected {}x{}",
                values.rows(),
                values.cols(),
                row_keys.len(),
                columns.len()
            )));
        }
        Ok(Self {
            fog,
            columns,
            row_keys,
            values,
        })
    }

    pub fn fog(&self) -> FogId {
        self.fog
    }

    /// Zero-based schema column indices, strictly increasing.
    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Owners whose rows appear in this shard.
    pub fn owners(&self) -> BTreeSet<OwnerId> {
        self.row_keys.iter().map(|k| k.owner).collect()
    }
}

/// Labels and the public budget parameters, routed separately from features.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelShard {
    fog: FogId,
    row_keys: Vec<RowKey>,
    labels: Vec<String>,
    budgets: BTreeMap<OwnerId, PrivacyBudget>,
}

impl LabelShard {
    pub fn fog(&self) -> FogId {
        self.fog
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn budgets(&self) -> &BTreeMap<OwnerId, PrivacyBudget> {
        &self.budgets
    }

    pub fn owners(&self) -> BTreeSet<OwnerId> {
        self.row_keys.iter().map(|k| k.owner).collect()
    }
}

/// Fog node that receives every label shard.
pub const LABEL_FOG: FogId = FogId(1);

/// Output of [`vertical_partition`]: exactly `s` feature shards (some may be
/// empty when `s > m`) and the label shard.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub feature_shards: Vec<Shard>,
    pub labels: LabelShard,
}

/// Fog node that stores zero-based column `col` when there are `s` fog nodes.
pub fn fog_for_column(col: usize, s: usize) -> FogId {
    FogId((col % s) as u32 + 1)
}

/// Zero-based columns stored on `fog`.
pub fn columns_for_fog(fog: FogId, m: usize, s: usize) -> Vec<usize> {
    let first = fog.0 as usize - 1;
    (first..m).step_by(s).collect()
}

/// Splits a noisy dataset by column, round-robin across `s` fog nodes.
pub fn vertical_partition(data: &NoisyDataset, s: usize) -> Result<Partition, DataError> {
    if s == 0 {
        return Err(DataError::Invalid("fog node count must be at least 1".into()));
    }
    let m = data.schema.width();
    let feature_shards = (1..=s as u32)
        .map(|j| {
            let fog = FogId(j);
            let columns = columns_for_fog(fog, m, s);
            let values = data.features.select_columns(&columns);
            Shard {
                fog,
                columns,
                row_keys: data.row_keys.clone(),
                values,
            }
        })
        .collect();
    Ok(Partition {
        feature_shards,
        labels: LabelShard {
            fog: LABEL_FOG,
            row_keys: data.row_keys.clone(),
            labels: data.labels.clone(),
            budgets: data.budgets.clone(),
        },
    })
}

/// Inverse of [`vertical_partition`]. The label shard fixes the row order;
/// every feature shard must carry the identical row keys.
pub fn reassemble(
    shards: &[Shard],
    labels: &LabelShard,
    schema: &Arc<Schema>,
) -> Result<NoisyDataset, DataError> {
    let m = schema.width();
    let mut source: Vec<Option<(usize, usize)>> = vec![None; m];
    for (si, shard) in shards.iter().enumerate() {
        if shard.row_keys != labels.row_keys {
            let key = shard
                .row_keys
                .iter()
                .zip(&labels.row_keys)
                .find(|(a, b)| a != b)
                .map(|(a, _)| *a)
                .or_else(|| {
                    shard
                        .row_keys
                        .get(labels.row_keys.len())
                        .or_else(|| labels.row_keys.get(shard.row_keys.len()))
                        .copied()
                })
                .expect("unequal key lists differ somewhere");
            return Err(DataError::InconsistentRowKeys {
                fog: shard.fog,
                key,
            });
        }
        for (ci, &col) in shard.columns.iter().enumerate() {
            let slot = source.get_mut(col).ok_or(DataError::ColumnOutOfRange(col))?;
            if slot.is_some() {
                return Err(DataError::DuplicateColumn(col));
            }
            *slot = Some((si, ci));
        }
    }
    let source = source
        .into_iter()
        .enumerate()
        .map(|(col, s)| s.ok_or(DataError::MissingColumn(col)))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = labels.row_keys.len();
    let mut features = Matrix::zeros(rows, m);
    for r in 0..rows {
        for (col, &(si, ci)) in source.iter().enumerate() {
            features.set(r, col, shards[si].values.get(r, ci));
        }
    }
    NoisyDataset::new(
        Arc::clone(schema),
        labels.row_keys.clone(),
        features,
        labels.labels.clone(),
        labels.budgets.clone(),
    )
}

/// Pools several noisy datasets into one, ordered by row key (owner id, then
/// row index) regardless of input order.
pub fn union_owners(datasets: &[NoisyDataset]) -> Result<NoisyDataset, DataError> {
    let first = datasets
        .first()
        .ok_or_else(|| DataError::Invalid("union of zero datasets".into()))?;
    if datasets.iter().any(|d| d.schema != first.schema) {
        return Err(DataError::SchemaMismatch);
    }
    let mut budgets = BTreeMap::new();
    for d in datasets {
        for (owner, b) in &d.budgets {
            if let Some(prev) = budgets.insert(*owner, b.clone()) {
                if prev != *b {
                    return Err(DataError::Invalid(format!(
                        "conflicting budgets recorded for {owner}"
                    )));
                }
            }
        }
    }
    let mut index: Vec<(RowKey, usize, usize)> = datasets
        .iter()
        .enumerate()
        .flat_map(|(di, d)| d.row_keys.iter().enumerate().map(move |(r, k)| (*k, di, r)))
        .collect();
    index.sort_by_key(|(k, _, _)| *k);
    if let Some(w) = index.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::DuplicateRow(w[0].0));
    }
    let m = first.schema.width();
    let mut data = Vec::with_capacity(index.len() * m);
    let mut labels = Vec::with_capacity(index.len());
    let mut keys = Vec::with_capacity(index.len());
    for (k, di, r) in index {
        data.extend_from_slice(datasets[di].features.row(r));
        labels.push(datasets[di].labels[r].clone());
        keys.push(k);
    }
    let rows = keys.len();
    Ok(NoisyDataset {
        schema: Arc::clone(&first.schema),
        row_keys: keys,
        features: Matrix::from_vec(rows, m, data)?,
        labels,
        budgets,
    })
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers().map_err(csv_error)?.clone();
    if header.iter().next_back() != Some(LABEL_COLUMN) || header.len() < 2 {
        return Err(DataError::HeaderMismatch {
            expected: format!("<features>..., {LABEL_COLUMN}"),
            found: header.iter().collect::<Vec<_>>().join(", "),
        });
    }
    let names = header
        .iter()
        .take(header.len() - 1)
        .map(str::to_string)
        .collect();
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(csv_error)?;
    Ok((names, records))
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => DataError::Io {
            path: PathBuf::new(),
            source,
        },
        kind => DataError::Csv {
            line,
            message: format!("{kind:?}"),
        },
    }
}

fn parse_record<'r>(
    row: usize,
    names: &[String],
    record: &'r csv::StringRecord,
) -> Result<(Vec<f64>, &'r str), DataError> {
    if record.len() != names.len() + 1 {
        return Err(DataError::RaggedRow {
            row,
            expected: names.len() + 1,
            found: record.len(),
        });
    }
    let values = names
        .iter()
        .zip(record.iter())
        .map(|(name, cell)| {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::NonNumeric {
                    row,
                    column: name.clone(),
                    value: cell.to_string(),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((values, &record[names.len()]))
}

/// Reads a headed CSV whose columns are the schema's features followed by
/// `label`. Rows are reported 1-based, counting data rows only. The dataset
/// is attributed to owner 1; see [`OwnerDataset::distribute`].
pub fn load_csv(path: &Path, schema: &Arc<Schema>) -> Result<OwnerDataset, DataError> {
    let (names, records) = read_records(path)?;
    if names != schema.feature_names() {
        let mut expected = schema.feature_names().to_vec();
        expected.push(LABEL_COLUMN.into());
        let mut found = names;
        found.push(LABEL_COLUMN.into());
        return Err(DataError::HeaderMismatch {
            expected: expected.join(", "),
            found: found.join(", "),
        });
    }
    let mut data = Vec::with_capacity(records.len() * names.len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, record) in records.iter().enumerate() {
        let row = i + 1;
        let (values, label) = parse_record(row, &names, record)?;
        if schema.class_index(label).is_none() {
            return Err(DataError::UnknownLabel {
                row,
                value: label.to_string(),
            });
        }
        data.extend(values);
        labels.push(label.to_string());
    }
    let features = Matrix::from_vec(labels.len(), names.len(), data)?;
    OwnerDataset::new(OwnerId(1), Arc::clone(schema), features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::Epsilon;
    use std::io::Write;

    fn schema(m: usize) -> Arc<Schema> {
        Arc::new(
            Schema::new(
                (0..m).map(|j| format!("f{j}")).collect(),
                vec![FeatureBounds::new(0.0, 1.0).unwrap(); m],
                ["a".to_string(), "b".to_string()],
            )
            .unwrap(),
        )
    }

    fn noisy(owner: u32, rows: usize, m: usize) -> NoisyDataset {
        let schema = schema(m);
        let features = Matrix::from_vec(
            rows,
            m,
            (0..rows * m).map(|i| owner as f64 * 100.0 + i as f64).collect(),
        )
        .unwrap();
        let keys = (0..rows)
            .map(|row| RowKey {
                owner: OwnerId(owner),
                row,
            })
            .collect();
        let labels = (0..rows)
            .map(|r| if r % 2 == 0 { "a" } else { "b" }.to_string())
            .collect();
        let budgets = BTreeMap::from([(
            OwnerId(owner),
            crate::dp::split_budget(Epsilon::INFINITY, m).unwrap(),
        )]);
        NoisyDataset::new(schema, keys, features, labels, budgets).unwrap()
    }

    fn write_csv(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    fn iris_like_schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec!["x".into(), "y".into()],
                vec![FeatureBounds::new(0.0, 10.0).unwrap(); 2],
                ["setosa".into(), "versicolor".into()],
            )
            .unwrap(),
        )
    }

    #[test]
    fn schema_rejects_duplicates_and_empties() {
        let b = vec![FeatureBounds::new(0.0, 1.0).unwrap(); 2];
        assert!(Schema::new(vec!["a".into(), "a".into()], b.clone(), ["x".into()]).is_err());
        assert!(Schema::new(vec!["a".into(), "".into()], b.clone(), ["x".into()]).is_err());
        assert!(Schema::new(vec![], vec![], ["x".into()]).is_err());
        assert!(Schema::new(vec!["a".into(), "b".into()], b, Vec::<String>::new()).is_err());
    }

    #[test]
    fn load_well_formed_csv() {
        let f = write_csv("x,y,label\n1,2,setosa\n3.5,4,versicolor\n0,0,setosa\n");
        let d = load_csv(f.path(), &iris_like_schema()).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.features().row(1), &[3.5, 4.0]);
        assert_eq!(d.labels()[1], "versicolor");
    }

    #[test]
    fn load_rejects_unknown_label_with_row() {
        let f = write_csv("x,y,label\n1,2,setosa\n3,4,versicolour\n");
        match load_csv(f.path(), &iris_like_schema()) {
            Err(DataError::UnknownLabel { row, value }) => {
                assert_eq!(row, 2);
                assert_eq!(value, "versicolour");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_rejects_bad_header_and_cells() {
        let f = write_csv("x,z,label\n1,2,setosa\n");
        assert!(matches!(
            load_csv(f.path(), &iris_like_schema()),
            Err(DataError::HeaderMismatch { .. })
        ));
        let f = write_csv("x,y\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &iris_like_schema()),
            Err(DataError::HeaderMismatch { .. })
        ));
        let f = write_csv("x,y,label\n1,abc,setosa\n");
        match load_csv(f.path(), &iris_like_schema()) {
            Err(DataError::NonNumeric { row, column, .. }) => {
                assert_eq!((row, column.as_str()), (1, "y"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let f = write_csv("x,y,label\n1,NaN,setosa\n");
        assert!(matches!(
            load_csv(f.path(), &iris_like_schema()),
            Err(DataError::NonNumeric { .. })
        ));
        let f = write_csv("x,y,label\n1,2\n");
        assert!(matches!(
            load_csv(f.path(), &iris_like_schema()),
            Err(DataError::RaggedRow { row: 1, .. })
        ));
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), &iris_like_schema()),
            Err(DataError::Io { .. })
        ));
    }

    #[test]
    fn infer_schema_from_csv() {
        let f = write_csv("x,y,label\n1,2,b\n-3,4,a\n");
        let s = Schema::infer_from_csv(f.path()).unwrap();
        assert_eq!(s.feature_names(), &["x", "y"]);
        assert_eq!(s.class_labels(), &["a", "b"]);
        assert_eq!((s.bounds()[0].lo(), s.bounds()[0].hi()), (-3.0, 1.0));
    }

    #[test]
    fn partition_three_by_three() {
        let p = vertical_partition(&noisy(1, 2, 3), 3).unwrap();
        let cols: Vec<_> = p.feature_shards.iter().map(|s| s.columns().to_vec()).collect();
        assert_eq!(cols, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(p.labels.fog(), FogId(1));
    }

    #[test]
    fn partition_round_robin_and_empty() {
        let p = vertical_partition(&noisy(1, 2, 5), 2).unwrap();
        let cols: Vec<_> = p.feature_shards.iter().map(|s| s.columns().to_vec()).collect();
        assert_eq!(cols, vec![vec![0, 2, 4], vec![1, 3]]);

        let p = vertical_partition(&noisy(1, 2, 2), 3).unwrap();
        assert_eq!(p.feature_shards.len(), 3);
        assert!(p.feature_shards[2].is_empty());
        assert!(vertical_partition(&noisy(1, 2, 2), 0).is_err());
    }

    #[test]
    fn reassemble_round_trip_small() {
        let d = noisy(1, 4, 3);
        for s in 1..=4 {
            let p = vertical_partition(&d, s).unwrap();
            let back = reassemble(&p.feature_shards, &p.labels, d.schema()).unwrap();
            assert_eq!(back, d);
        }
    }

    #[test]
    fn reassemble_detects_missing_duplicate_and_keys() {
        let d = noisy(1, 4, 3);
        let p = vertical_partition(&d, 3).unwrap();
        let missing = vec![p.feature_shards[0].clone(), p.feature_shards[2].clone()];
        assert!(matches!(
            reassemble(&missing, &p.labels, d.schema()),
            Err(DataError::MissingColumn(1))
        ));
        let mut dup = p.feature_shards.clone();
        dup.push(p.feature_shards[1].clone());
        assert!(matches!(
            reassemble(&dup, &p.labels, d.schema()),
            Err(DataError::DuplicateColumn(1))
        ));
        let other = vertical_partition(&noisy(2, 4, 3), 3).unwrap();
        let mixed = vec![
            p.feature_shards[0].clone(),
            other.feature_shards[1].clone(),
            p.feature_shards[2].clone(),
        ];
        assert!(matches!(
            reassemble(&mixed, &p.labels, d.schema()),
            Err(DataError::InconsistentRowKeys { fog: FogId(2), .. })
        ));
    }

    #[test]
    fn union_sorts_by_owner() {
        let a = noisy(1, 2, 2);
        let b = noisy(2, 3, 2);
        let u = union_owners(&[b.clone(), a.clone()]).unwrap();
        assert_eq!(u.len(), 5);
        assert_eq!(u.row_keys()[0].owner, OwnerId(1));
        assert_eq!(u.row_keys()[4], RowKey { owner: OwnerId(2), row: 2 });
        assert_eq!(u, union_owners(&[a.clone(), b]).unwrap());
        assert_eq!(union_owners(std::slice::from_ref(&a)).unwrap(), a);
        assert!(matches!(
            union_owners(&[a.clone(), a.clone()]),
            Err(DataError::DuplicateRow(_))
        ));
        assert!(matches!(
            union_owners(&[a, noisy(2, 2, 3)]),
            Err(DataError::SchemaMismatch)
        ));
    }

    #[test]
    fn distribute_round_robin() {
        let s = iris_like_schema();
        let f = Matrix::from_vec(5, 2, (0..10).map(f64::from).collect()).unwrap();
        let d = OwnerDataset::new(OwnerId(1), s, f, vec!["setosa".to_string(); 5]).unwrap();
        let parts = d.distribute(2).unwrap();
        assert_eq!(parts[0].len(), 3);
        assert_eq!(parts[1].owner(), OwnerId(2));
        assert_eq!(parts[1].features().row(0), &[2.0, 3.0]);
    }
}
