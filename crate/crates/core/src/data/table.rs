use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::encode::{positional_encode, CategoricalEncoding, FeatureKind, FeatureSpec, FeatureValue};
use super::schema::{ColumnKind, Schema, TaskKind};
use super::split::SplitIndices;
use crate::error::{Error, Result};
use crate::math::Tensor;

/// Stored feature column: category codes or raw (unstandardized) numbers.
#[derive(Clone, Debug, PartialEq)]
pub enum Column {
    Categorical(Vec<u32>),
    Continuous(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Categorical(v) => v.len(),
            Column::Continuous(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn raw(&self, row: usize) -> f64 {
        match self {
            Column::Categorical(v) => v[row] as f64,
            Column::Continuous(v) => v[row],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Classes { labels: Vec<String> },
    /// Regression targets are trained on a standardized scale.
    Real { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

/// Encoded targets for a batch of rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// Standardized values.
    Real(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Targets {
        match self {
            Targets::Classes(v) => Targets::Classes(rows.iter().map(|&r| v[r]).collect()),
            Targets::Real(v) => Targets::Real(rows.iter().map(|&r| v[r]).collect()),
        }
    }
}

/// Encoded feature matrices (one `[n, width_i]` tensor per feature) and
/// targets for a set of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedBatch {
    pub features: Vec<Tensor>,
    pub targets: Targets,
}

impl EncodedBatch {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> EncodedBatch {
        EncodedBatch {
            features: self.features.iter().map(|f| f.select_rows(rows)).collect(),
            targets: self.targets.select(rows),
        }
    }
}

/// Typed, immutable tabular data with feature metadata and its split.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetTable {
    features: Vec<FeatureSpec>,
    columns: Vec<Column>,
    target_name: String,
    target_spec: TargetSpec,
    target: Target,
    task: TaskKind,
    splits: SplitIndices,
    rejected_rows: usize,
}

const MISSING_MARKERS: [&str; 4] = ["", "NA", "N/A", "?"];

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    MISSING_MARKERS.iter().any(|m| t.eq_ignore_ascii_case(m)) || t.eq_ignore_ascii_case("nan")
}

/// Sorts labels numerically when they all parse as numbers, otherwise
/// lexicographically.
fn sorted_vocabulary(labels: BTreeSet<String>) -> Vec<String> {
    let mut v: Vec<String> = labels.into_iter().collect();
    let numeric: Option<Vec<f64>> = v.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(v).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        v = pairs.into_iter().map(|p| p.1).collect();
    }
    v
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Reads a CSV file with a header row and types it according to `schema`.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<DatasetTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::ingestion(None, None, format!("header: {e}")))?
        .iter()
        .map(|h| h.trim().to_owned())
        .collect();
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::ingestion(Some(i + 1), None, e.to_string()))?;
        records.push(rec.iter().map(str::to_owned).collect::<Vec<_>>());
    }
    DatasetTable::from_records(schema, &headers, records)
}

impl DatasetTable {
    /// Builds a table from string records laid out as `headers`. Data rows
    /// are numbered from 1 in error messages.
    pub fn from_records(schema: &Schema, headers: &[String], records: Vec<Vec<String>>) -> Result<Self> {
        schema.validate()?;
        let position: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
        if position.len() != headers.len() {
            return Err(Error::ingestion(None, None, "duplicate header names"));
        }
        for h in headers {
            if h != &schema.target && !schema.columns.iter().any(|c| &c.name == h) {
                return Err(Error::ingestion(None, Some(h), "column not declared in schema"));
            }
        }
        for c in &schema.columns {
            if c.kind != ColumnKind::Ignore && !position.contains_key(c.name.as_str()) {
                return Err(Error::ingestion(None, Some(&c.name), "declared column missing from file"));
            }
        }
        let target_pos = *position
            .get(schema.target.as_str())
            .ok_or_else(|| Error::ingestion(None, Some(&schema.target), "target column missing from file"))?;

        let feature_cols: Vec<(&str, ColumnKind, usize)> = schema
            .features()
            .map(|c| (c.name.as_str(), c.kind, position[c.name.as_str()]))
            .collect();

        // Pass 1: drop incomplete rows, parse numbers, collect vocabularies.
        let mut rejected = 0usize;
        let mut kept: Vec<Vec<String>> = Vec::with_capacity(records.len());
        for (i, rec) in records.into_iter().enumerate() {
            let row_no = i + 1;
            if rec.len() != headers.len() {
                return Err(Error::ingestion(
                    Some(row_no),
                    None,
                    format!("expected {} fields, found {}", headers.len(), rec.len()),
                ));
            }
            let missing = feature_cols.iter().any(|&(_, _, p)| is_missing(&rec[p])) || is_missing(&rec[target_pos]);
            if missing {
                rejected += 1;
                continue;
            }
            for &(name, kind, p) in &feature_cols {
                if kind == ColumnKind::Continuous {
                    parse_number(&rec[p], row_no, name)?;
                }
            }
            if schema.task == TaskKind::Regression {
                parse_number(&rec[target_pos], row_no, &schema.target)?;
            }
            kept.push(rec);
        }
        let n = kept.len();

        let mut columns = Vec::with_capacity(feature_cols.len());
        let mut vocabularies: Vec<Option<Vec<String>>> = Vec::with_capacity(feature_cols.len());
        for &(name, kind, p) in &feature_cols {
            match kind {
                ColumnKind::Categorical => {
                    let labels: BTreeSet<String> = kept.iter().map(|r| r[p].trim().to_owned()).collect();
                    let vocab = sorted_vocabulary(labels);
                    let index: HashMap<&str, u32> =
                        vocab.iter().enumerate().map(|(i, v)| (v.as_str(), i as u32)).collect();
                    columns.push(Column::Categorical(kept.iter().map(|r| index[r[p].trim()]).collect()));
                    vocabularies.push(Some(vocab));
                }
                ColumnKind::Continuous => {
                    let values = kept.iter().map(|r| r[p].trim().parse::<f64>().expect("checked")).collect();
                    columns.push(Column::Continuous(values));
                    vocabularies.push(None);
                }
                ColumnKind::Ignore => unreachable!("filtered"),
            }
            let _ = name;
        }

        let splits = SplitIndices::new(n, schema.split, schema.seed)?;

        let mut features = Vec::with_capacity(feature_cols.len());
        for ((&(name, _, _), column), vocab) in feature_cols.iter().zip(&columns).zip(vocabularies) {
            let freqs = schema.positional_frequencies.clone();
            let spec = match vocab {
                Some(vocab) => {
                    let mut spec = FeatureSpec::categorical(name, vocab, freqs)?;
                    if let FeatureKind::Categorical {
                        encoding: CategoricalEncoding::Codes { mean, std },
                        ..
                    } = &mut spec.kind
                    {
                        let (m, s) = mean_std(splits.train.iter().map(|&r| column.raw(r)));
                        if !(s > 0.0) {
                            return Err(Error::ingestion(None, Some(name), "constant on the training split"));
                        }
                        *mean = m;
                        *std = s;
                    }
                    spec
                }
                None => {
                    let (m, s) = mean_std(splits.train.iter().map(|&r| column.raw(r)));
                    FeatureSpec::continuous(name, m, s, freqs)?
                }
            };
            features.push(spec);
        }

        let (target_spec, target) = match schema.task {
            TaskKind::Regression => {
                let values: Vec<f64> = kept
                    .iter()
                    .map(|r| r[target_pos].trim().parse::<f64>().expect("checked"))
                    .collect();
                let (mean, std) = mean_std(splits.train.iter().map(|&r| values[r]));
                if !(std > 0.0) {
                    return Err(Error::ingestion(None, Some(&schema.target), "constant regression target"));
                }
                (TargetSpec::Real { mean, std }, Target::Real(values))
            }
            task => {
                let labels = match &schema.classes {
                    Some(declared) => declared.clone(),
                    None => sorted_vocabulary(kept.iter().map(|r| r[target_pos].trim().to_owned()).collect()),
                };
                if task == TaskKind::Binary && labels.len() != 2 {
                    return Err(Error::ingestion(
                        None,
                        Some(&schema.target),
                        format!("binary task needs exactly 2 classes, found {}", labels.len()),
                    ));
                }
                let index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
                let mut values = Vec::with_capacity(n);
                for (i, r) in kept.iter().enumerate() {
                    let label = r[target_pos].trim();
                    let c = *index.get(label).ok_or_else(|| {
                        Error::ingestion(Some(i + 1), Some(&schema.target), format!("undeclared class `{label}`"))
                    })?;
                    values.push(c);
                }
                (TargetSpec::Classes { labels }, Target::Classes(values))
            }
        };

        let table = Self {
            features,
            columns,
            target_name: schema.target.clone(),
            target_spec,
            target,
            task: schema.task,
            splits,
            rejected_rows: rejected,
        };
        table.check_positional_injectivity()?;
        Ok(table)
    }

    /// Distinct training values of a positionally encoded feature must not
    /// share an encoding.
    fn check_positional_injectivity(&self) -> Result<()> {
        for (spec, column) in self.features.iter().zip(&self.columns) {
            if spec.encoded_width() == spec.cardinality().unwrap_or(usize::MAX) {
                continue;
            }
            let distinct: BTreeSet<u64> = self.splits.train.iter().map(|&r| column.raw(r).to_bits()).collect();
            let mut seen: HashMap<Vec<u64>, f64> = HashMap::with_capacity(distinct.len());
            for bits in distinct {
                let x = f64::from_bits(bits);
                let code: Vec<u64> = positional_encode(spec.standardize(x), &spec.positional_frequencies)
                    .iter()
                    .map(|v| v.to_bits())
                    .collect();
                if let Some(prev) = seen.insert(code, x) {
                    return Err(Error::ingestion(
                        None,
                        Some(&spec.name),
                        format!("values {prev} and {x} share a positional encoding"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.target_len()
    }

    fn target_len(&self) -> usize {
        match &self.target {
            Target::Classes(v) => v.len(),
            Target::Real(v) => v.len(),
        }
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn column(&self, i: usize) -> &Column {
        &self.columns[i]
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn target_spec(&self) -> &TargetSpec {
        &self.target_spec
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn task(&self) -> TaskKind {
        self.task
    }

    pub fn splits(&self) -> &SplitIndices {
        &self.splits
    }

    pub fn rejected_rows(&self) -> usize {
        self.rejected_rows
    }

    /// Number of prediction outputs: class count, or 1 for regression.
    pub fn output_width(&self) -> usize {
        match &self.target_spec {
            TargetSpec::Classes { labels } => labels.len(),
            TargetSpec::Real { .. } => 1,
        }
    }

    /// Raw value of feature `i` in `row`.
    pub fn value(&self, i: usize, row: usize) -> FeatureValue {
        match (&self.columns[i], self.features[i].vocabulary()) {
            (Column::Categorical(codes), Some(vocab)) => FeatureValue::Label(vocab[codes[row] as usize].clone()),
            (column, _) => FeatureValue::Number(column.raw(row)),
        }
    }

    /// Feature `i` of `row` after standardization (identity for one-hot).
    pub fn standardized(&self, i: usize, row: usize) -> f64 {
        self.features[i].standardize(self.columns[i].raw(row))
    }

    pub fn encode_rows(&self, rows: &[usize]) -> EncodedBatch {
        let features = self
            .features
            .iter()
            .zip(&self.columns)
            .map(|(spec, column)| {
                let w = spec.encoded_width();
                let mut data = Vec::with_capacity(rows.len() * w);
                for &r in rows {
                    spec.encode_stored(column.raw(r), &mut data);
                }
                Tensor::matrix(rows.len(), w, data).expect("encoded width")
            })
            .collect();
        let targets = match (&self.target, &self.target_spec) {
            (Target::Classes(v), _) => Targets::Classes(rows.iter().map(|&r| v[r]).collect()),
            (Target::Real(v), TargetSpec::Real { mean, std }) => {
                Targets::Real(rows.iter().map(|&r| (v[r] - mean) / std).collect())
            }
            _ => unreachable!("target and spec agree"),
        };
        EncodedBatch { features, targets }
    }

    /// SHA-256 over the typed schema: feature specs, target spec, task.
    pub fn schema_hash(&self) -> String {
        #[derive(Serialize)]
        struct Canonical<'a> {
            features: &'a [FeatureSpec],
            target: &'a str,
            target_spec: &'a TargetSpec,
            task: TaskKind,
        }
        let bytes = serde_json::to_vec(&Canonical {
            features: &self.features,
            target: &self.target_name,
            target_spec: &self.target_spec,
            task: self.task,
        })
        .expect("serializable");
        hex(&Sha256::digest(bytes))
    }

    /// Writes raw values with a header row; numbers keep 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Config(format!("{other:?}")),
        })?;
        let mut header: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        header.push(&self.target_name);
        w.write_record(&header)?;
        for row in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.features.len())
                .map(|i| match self.value(i, row) {
                    FeatureValue::Label(s) => s,
                    FeatureValue::Number(x) => crate::io::fmt_f64(x),
                })
                .collect();
            rec.push(match (&self.target, &self.target_spec) {
                (Target::Classes(v), TargetSpec::Classes { labels }) => labels[v[row]].clone(),
                (Target::Real(v), _) => crate::io::fmt_f64(v[row]),
                _ => unreachable!("target and spec agree"),
            });
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let x: f64 = cell
        .trim()
        .parse()
        .map_err(|_| Error::ingestion(Some(row), Some(column), format!("cannot parse `{}` as a number", cell.trim())))?;
    if !x.is_finite() {
        return Err(Error::ingestion(Some(row), Some(column), "non-finite number"));
    }
    Ok(x)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::schema::ColumnSchema;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    fn schema(cols: &[(&str, ColumnKind)], task: TaskKind) -> Schema {
        let mut sc = Schema::new(
            cols.iter()
                .map(|(n, k)| ColumnSchema { name: n.to_string(), kind: *k })
                .collect(),
            "y",
            task,
        );
        sc.split = [0.4, 0.3, 0.3];
        sc
    }

    #[test]
    fn categorical_vocabulary_is_built_from_file() {
        let sc = schema(&[("c", ColumnKind::Categorical)], TaskKind::Binary);
        let t = DatasetTable::from_records(
            &sc,
            &s(&["c", "y"]),
            vec![s(&["a", "0"]), s(&["b", "1"]), s(&["a", "1"])],
        )
        .unwrap();
        assert_eq!(t.features()[0].cardinality(), Some(2));
    }

    #[test]
    fn missing_cell_rejects_row() {
        let sc = schema(&[("x", ColumnKind::Continuous)], TaskKind::Binary);
        let mut rows: Vec<Vec<String>> = (0..10).map(|i| s(&[&i.to_string(), &(i % 2).to_string()])).collect();
        rows[4][0] = "".into();
        let t = DatasetTable::from_records(&sc, &s(&["x", "y"]), rows).unwrap();
        assert_eq!(t.rejected_rows(), 1);
        assert_eq!(t.n_rows(), 9);
    }

    #[test]
    fn unparseable_cell_reports_location() {
        let sc = schema(&[("x", ColumnKind::Continuous)], TaskKind::Binary);
        let rows = vec![s(&["1", "0"]), s(&["oops", "1"]), s(&["2", "1"])];
        match DatasetTable::from_records(&sc, &s(&["x", "y"]), rows) {
            Err(Error::Ingestion { row: Some(2), column: Some(c), .. }) => assert_eq!(c, "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_column_is_rejected() {
        let sc = schema(&[("x", ColumnKind::Continuous)], TaskKind::Binary);
        let err = DatasetTable::from_records(&sc, &s(&["x", "z", "y"]), vec![]).unwrap_err();
        assert!(matches!(err, Error::Ingestion { column: Some(c), .. } if c == "z"));
    }

    #[test]
    fn constant_continuous_column_is_rejected() {
        let sc = schema(&[("x", ColumnKind::Continuous)], TaskKind::Binary);
        let rows = (0..10).map(|i| s(&["3.5", &(i % 2).to_string()])).collect();
        assert!(matches!(
            DatasetTable::from_records(&sc, &s(&["x", "y"]), rows),
            Err(Error::Ingestion { .. })
        ));
    }

    #[test]
    fn numeric_labels_sort_by_value() {
        let v = sorted_vocabulary(["10", "2", "1"].iter().map(|x| x.to_string()).collect());
        assert_eq!(v, s(&["1", "2", "10"]));
    }

    #[test]
    fn training_split_is_standardized() {
        let sc = schema(&[("x", ColumnKind::Continuous)], TaskKind::Regression);
        let rows = (0..40)
            .map(|i| s(&[&format!("{}", (i as f64 * 1.7).sin() * 5.0 + 3.0), &i.to_string()]))
            .collect();
        let t = DatasetTable::from_records(&sc, &s(&["x", "y"]), rows).unwrap();
        let z: Vec<f64> = t.splits().train.iter().map(|&r| t.standardized(0, r)).collect();
        let (m, sd) = mean_std(z.iter().copied());
        assert!(m.abs() < 1e-12);
        assert!((sd - 1.0).abs() < 1e-12);
    }
}
