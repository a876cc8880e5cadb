//! Dataset representation, SFM column mapping, encoding, splits, and
//! resampling shared by all other modules.
//!
//! The standard fairness model binds dataset columns to four roles: a binary
//! protected attribute X, confounders Z, mediators W, and an outcome Y.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Prediction task attached to an SFM spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Regression,
    BinaryClassification,
}

/// Maps dataset columns to standard-fairness-model roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SfmSpec {
    /// Protected attribute column (X); must be binary.
    pub attribute: String,
    /// Label coded as group 0.
    pub x0: String,
    /// Label coded as group 1.
    pub x1: String,
    /// Confounder columns (Z); not causally influenced by X.
    #[serde(default)]
    pub confounders: Vec<String>,
    /// Mediator columns (W); possibly influenced by X.
    #[serde(default)]
    pub mediators: Vec<String>,
    /// Outcome column (Y).
    pub outcome: String,
    pub task: TaskKind,
}

impl SfmSpec {
    /// Structural checks that do not need the data: distinct names, disjoint
    /// role sets, distinct group labels.
    pub fn validate(&self) -> Result<()> {
        if self.x0 == self.x1 {
            return Err(Error::InvalidSpec(format!(
                "group labels must differ, both are `{}`",
                self.x0
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self.column_names() {
            if !seen.insert(name.clone()) {
                return Err(Error::InvalidSpec(format!(
                    "column `{name}` appears in more than one SFM role"
                )));
            }
        }
        Ok(())
    }

    /// All SFM columns in canonical order: attribute, Z, W, outcome.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![self.attribute.clone()];
        names.extend(self.confounders.iter().cloned());
        names.extend(self.mediators.iter().cloned());
        names.push(self.outcome.clone());
        names
    }

    pub fn load_json(path: &Path) -> Result<SfmSpec> {
        let text = std::fs::read_to_string(path)?;
        let spec: SfmSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// A single named column; numeric or categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn take_rows(&self, idx: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => {
                Column::Categorical(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    fn cell_string(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => format!("{}", v[row]),
            Column::Categorical(v) => v[row].clone(),
        }
    }
}

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    File { path: String },
    Synthetic { seed: u64 },
}

/// An ingested dataset holding the SFM columns, with no missing values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n: usize,
    /// (name, column) pairs in SFM canonical order.
    pub columns: Vec<(String, Column)>,
    pub provenance: Provenance,
    /// Rows dropped at ingestion because an SFM cell was missing.
    pub dropped_rows: usize,
}

impl Dataset {
    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
    }

    /// Group index (0 or 1) of every row, by attribute label.
    pub fn group_codes(&self, spec: &SfmSpec) -> Result<Vec<u8>> {
        let col = self
            .column(&spec.attribute)
            .ok_or_else(|| Error::MissingColumn(spec.attribute.clone()))?;
        let labels = match col {
            Column::Categorical(v) => v.clone(),
            Column::Numeric(v) => v.iter().map(|x| format!("{x}")).collect(),
        };
        labels
            .iter()
            .map(|l| {
                if *l == spec.x0 {
                    Ok(0)
                } else if *l == spec.x1 {
                    Ok(1)
                } else {
                    Err(Error::AttributeNotBinary {
                        expected_x0: spec.x0.clone(),
                        expected_x1: spec.x1.clone(),
                        found: vec![l.clone()],
                    })
                }
            })
            .collect()
    }

    /// New dataset with the given rows (indices may repeat).
    pub fn take_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            n: idx.len(),
            columns: self
                .columns
                .iter()
                .map(|(name, col)| (name.clone(), col.take_rows(idx)))
                .collect(),
            provenance: self.provenance.clone(),
            dropped_rows: 0,
        }
    }

    /// Write all columns as RFC-4180 CSV with a header row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        wtr.write_record(self.columns.iter().map(|(n, _)| n.as_str()))?;
        for row in 0..self.n {
            wtr.write_record(self.columns.iter().map(|(_, c)| c.cell_string(row)))?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Load a CSV file and bind it to an SFM spec.
///
/// Rows with a missing value in any SFM column are dropped and counted.
/// Non-SFM columns are ignored. A Z/W column is numeric when every retained
/// cell parses as a float, categorical otherwise; the outcome must be numeric.
pub fn load_csv(path: &Path, spec: &SfmSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let wanted = spec.column_names();
    let mut positions = Vec::with_capacity(wanted.len());
    for name in &wanted {
        let pos = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?;
        positions.push(pos);
    }

    let mut raw: Vec<Vec<String>> = vec![Vec::new(); wanted.len()];
    let mut dropped = 0usize;
    for record in rdr.records() {
        let record = record?;
        let cells: Vec<&str> = positions
            .iter()
            .map(|&p| record.get(p).unwrap_or(""))
            .collect();
        if cells.iter().any(|c| c.trim().is_empty()) {
            dropped += 1;
            continue;
        }
        for (col, cell) in raw.iter_mut().zip(&cells) {
            col.push(cell.to_string());
        }
    }
    let n = raw[0].len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    // Attribute stays categorical; check it carries exactly the two labels.
    let attr_values = &raw[0];
    let distinct: std::collections::BTreeSet<&String> = attr_values.iter().collect();
    let expected: std::collections::BTreeSet<&String> = [&spec.x0, &spec.x1].into_iter().collect();
    if distinct != expected {
        return Err(Error::AttributeNotBinary {
            expected_x0: spec.x0.clone(),
            expected_x1: spec.x1.clone(),
            found: distinct.into_iter().cloned().collect(),
        });
    }

    let mut columns = Vec::with_capacity(wanted.len());
    for (k, name) in wanted.iter().enumerate() {
        let values = &raw[k];
        let col = if k == 0 {
            Column::Categorical(values.clone())
        } else if *name == spec.outcome {
            Column::Numeric(parse_numeric(name, values)?)
        } else {
            match try_parse_numeric(values) {
                Some(nums) => Column::Numeric(nums),
                None => Column::Categorical(values.clone()),
            }
        };
        columns.push((name.clone(), col));
    }

    Ok(Dataset {
        n,
        columns,
        provenance: Provenance::File {
            path: path.display().to_string(),
        },
        dropped_rows: dropped,
    })
}

fn try_parse_numeric(values: &[String]) -> Option<Vec<f64>> {
    values
        .iter()
        .map(|v| v.trim().parse::<f64>().ok())
        .collect()
}

fn parse_numeric(name: &str, values: &[String]) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(row, v)| {
            v.trim().parse::<f64>().map_err(|_| Error::NonNumeric {
                column: name.to_string(),
                row,
                value: v.clone(),
            })
        })
        .collect()
}

/// Train/eval partition of the row indices `0..n`, stratified by group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
    pub fraction: f64,
    pub seed: u64,
}

impl SplitPlan {
    fn is_partition(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(self.eval.iter()) {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.iter().all(|&s| s)
    }
}

/// Minimum rows per attribute group in each fold.
pub const MIN_GROUP_FOLD: usize = 10;

/// Stratified train/eval split, deterministic per seed.
///
/// Each group keeps `round(fraction * n_g)` rows in the train fold, clamped
/// so both folds keep at least [`MIN_GROUP_FOLD`] rows of the group.
pub fn split(data: &Dataset, spec: &SfmSpec, fraction: f64, split_seed: u64) -> Result<SplitPlan> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let codes = data.group_codes(spec)?;
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(), Vec::new()];
    for (i, &g) in codes.iter().enumerate() {
        groups[g as usize].push(i);
    }
    for (g, idx) in groups.iter().enumerate() {
        if idx.len() < 2 * MIN_GROUP_FOLD {
            let label = if g == 0 { &spec.x0 } else { &spec.x1 };
            return Err(Error::GroupTooSmall {
                label: label.clone(),
                count: idx.len(),
            });
        }
    }

    let mut train = Vec::new();
    let mut eval = Vec::new();
    for (g, idx) in groups.iter().enumerate() {
        let mut shuffled = idx.clone();
        let mut rng = seed::rng_for(split_seed, g as u64);
        shuffled.shuffle(&mut rng);
        let n_g = shuffled.len();
        let want = (fraction * n_g as f64).round() as usize;
        let n_train = want.clamp(MIN_GROUP_FOLD, n_g - MIN_GROUP_FOLD);
        train.extend_from_slice(&shuffled[..n_train]);
        eval.extend_from_slice(&shuffled[n_train..]);
    }
    train.sort_unstable();
    eval.sort_unstable();

    let plan = SplitPlan {
        train,
        eval,
        fraction,
        seed: split_seed,
    };
    debug_assert!(plan.is_partition(data.n));
    Ok(plan)
}

/// Resample `n` rows with replacement, deterministic per seed.
pub fn bootstrap_resample(data: &Dataset, resample_seed: u64) -> Dataset {
    let mut rng = seed::rng_for(resample_seed, 0xb007);
    let idx: Vec<usize> = (0..data.n).map(|_| rng.random_range(0..data.n)).collect();
    data.take_rows(&idx)
}

/// How one encoded feature was produced from a source column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureStat {
    ZScore {
        column: String,
        mean: f64,
        scale: f64,
    },
    OneHot {
        column: String,
        category: String,
    },
}

/// Encoding statistics frozen from the training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EncodingStats {
    pub z_features: Vec<FeatureStat>,
    pub w_features: Vec<FeatureStat>,
    pub warnings: Vec<String>,
}

/// Row-major numeric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn take_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Numeric view of a dataset: X as 0/1, Z and W one-hot + z-scored, Y raw.
///
/// Statistics are frozen from the training fold of the split used to build
/// the view, so subsetting to either fold keeps the same transform.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedView {
    pub n: usize,
    pub x: Vec<f64>,
    pub z: Matrix,
    pub w: Matrix,
    pub y: Vec<f64>,
    pub stats: Arc<EncodingStats>,
}

impl EncodedView {
    pub fn subset(&self, idx: &[usize]) -> EncodedView {
        EncodedView {
            n: idx.len(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            z: self.z.take_rows(idx),
            w: self.w.take_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            stats: Arc::clone(&self.stats),
        }
    }

    /// Row indices belonging to group `x1 == true`.
    pub fn stratum(&self, x1: bool) -> Vec<usize> {
        let target = if x1 { 1.0 } else { 0.0 };
        (0..self.n).filter(|&i| self.x[i] == target).collect()
    }

    pub fn feature_dim(&self) -> usize {
        1 + self.z.cols + self.w.cols
    }

    /// Assemble the model input row `[x, z.., w..]`, optionally overriding x.
    pub fn input_row(&self, i: usize, x_override: Option<f64>, out: &mut Vec<f64>) {
        out.clear();
        out.push(x_override.unwrap_or(self.x[i]));
        out.extend_from_slice(self.z.row(i));
        out.extend_from_slice(self.w.row(i));
    }
}

/// z-score transform with a frozen mean and scale.
///
/// Re-freezing statistics on already-transformed data yields mean 0 and
/// scale 1, so applying the transform twice is idempotent.
pub fn zscore_transform(values: &[f64], mean: f64, scale: f64) -> Vec<f64> {
    values.iter().map(|v| (v - mean) / scale).collect()
}

/// Mean and standard deviation (population), with the zero-variance rule:
/// a constant column gets scale 1.
pub fn freeze_zscore_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Encode a dataset under an SFM spec with statistics frozen from the
/// training fold of `plan`.
pub fn encode(data: &Dataset, spec: &SfmSpec, plan: &SplitPlan) -> Result<EncodedView> {
    let codes = data.group_codes(spec)?;
    let x: Vec<f64> = codes.iter().map(|&c| c as f64).collect();

    let outcome = match data
        .column(&spec.outcome)
        .ok_or_else(|| Error::MissingColumn(spec.outcome.clone()))?
    {
        Column::Numeric(v) => v.clone(),
        Column::Categorical(_) => {
            return Err(Error::InvalidSpec(format!(
                "outcome column `{}` must be numeric",
                spec.outcome
            )))
        }
    };

    let train_set: std::collections::BTreeSet<usize> = plan.train.iter().copied().collect();
    let mut warnings = Vec::new();

    let mut encode_block = |names: &[String]| -> Result<(Matrix, Vec<FeatureStat>)> {
        let mut feats: Vec<Vec<f64>> = Vec::new();
        let mut stats = Vec::new();
        for name in names {
            let col = data
                .column(name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?;
            match col {
                Column::Numeric(values) => {
                    let train_vals: Vec<f64> = plan.train.iter().map(|&i| values[i]).collect();
                    let (mean, scale) = freeze_zscore_stats(&train_vals);
                    let raw_sd = {
                        let n = train_vals.len() as f64;
                        let m = train_vals.iter().sum::<f64>() / n;
                        (train_vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt()
                    };
                    if raw_sd == 0.0 {
                        warnings.push(format!(
                            "column `{name}`: zero variance in training fold; scale set to 1"
                        ));
                    }
                    feats.push(zscore_transform(values, mean, scale));
                    stats.push(FeatureStat::ZScore {
                        column: name.clone(),
                        mean,
                        scale,
                    });
                }
                Column::Categorical(values) => {
                    let mut cats: BTreeMap<&String, ()> = BTreeMap::new();
                    for &i in &plan.train {
                        cats.insert(&values[i], ());
                    }
                    let categories: Vec<String> = cats.keys().map(|s| (*s).clone()).collect();
                    let mut unseen = false;
                    for (row, v) in values.iter().enumerate() {
                        if !train_set.contains(&row) && !categories.contains(v) {
                            unseen = true;
                        }
                    }
                    if unseen {
                        warnings.push(format!(
                            "column `{name}`: unseen category in evaluation fold encoded as all zeros"
                        ));
                    }
                    for cat in &categories {
                        feats.push(
                            values
                                .iter()
                                .map(|v| if v == cat { 1.0 } else { 0.0 })
                                .collect(),
                        );
                        stats.push(FeatureStat::OneHot {
                            column: name.clone(),
                            category: cat.clone(),
                        });
                    }
                }
            }
        }
        let cols = feats.len();
        let mut m = Matrix::zeros(data.n, cols);
        for (j, f) in feats.iter().enumerate() {
            for (i, &v) in f.iter().enumerate() {
                m.data[i * cols + j] = v;
            }
        }
        Ok((m, stats))
    };

    let (z, z_features) = encode_block(&spec.confounders)?;
    let (w, w_features) = encode_block(&spec.mediators)?;

    Ok(EncodedView {
        n: data.n,
        x,
        z,
        w,
        y: outcome,
        stats: Arc::new(EncodingStats {
            z_features,
            w_features,
            warnings,
        }),
    })
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskKind::Regression => f.write_str("regression"),
            TaskKind::BinaryClassification => f.write_str("binary-classification"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn spec() -> SfmSpec {
        SfmSpec {
            attribute: "sex".into(),
            x0: "f".into(),
            x1: "m".into(),
            confounders: vec!["age".into()],
            mediators: vec!["edu".into()],
            outcome: "salary".into(),
            task: TaskKind::Regression,
        }
    }

    fn write_tmp(name: &str, content: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("fairpath-data-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn load_csv_parses_four_rows() {
        let path = write_tmp(
            "basic.csv",
            "sex,age,edu,salary\nf,30,hs,50\nm,40,uni,60\nf,25,uni,55\nm,35,hs,52\n",
        );
        let data = load_csv(&path, &spec()).unwrap();
        assert_eq!(data.n, 4);
        assert_eq!(data.dropped_rows, 0);
        assert_eq!(
            data.column("age"),
            Some(&Column::Numeric(vec![30.0, 40.0, 25.0, 35.0]))
        );
        assert_eq!(
            data.column("edu"),
            Some(&Column::Categorical(vec![
                "hs".into(),
                "uni".into(),
                "uni".into(),
                "hs".into()
            ]))
        );
    }

    #[test]
    fn load_csv_rejects_third_attribute_label() {
        let path = write_tmp(
            "third_label.csv",
            "sex,age,edu,salary\nf,30,hs,50\nm,40,uni,60\nx,25,uni,55\n",
        );
        let err = load_csv(&path, &spec()).unwrap_err();
        assert!(matches!(err, Error::AttributeNotBinary { .. }));
    }

    #[test]
    fn load_csv_drops_and_counts_missing_rows() {
        let mut content = String::from("sex,age,edu,salary\n");
        for i in 0..100 {
            let sex = if i % 2 == 0 { "f" } else { "m" };
            if i == 57 {
                content.push_str(&format!("{sex},{},,{}\n", 20 + i, 40 + i));
            } else {
                content.push_str(&format!("{sex},{},hs,{}\n", 20 + i, 40 + i));
            }
        }
        let path = write_tmp("missing.csv", &content);
        let data = load_csv(&path, &spec()).unwrap();
        assert_eq!(data.n, 99);
        assert_eq!(data.dropped_rows, 1);
    }

    #[test]
    fn load_csv_missing_column_and_empty_file() {
        let path = write_tmp("nocol.csv", "sex,age,salary\nf,30,50\n");
        assert!(matches!(
            load_csv(&path, &spec()).unwrap_err(),
            Error::MissingColumn(c) if c == "edu"
        ));
        let path = write_tmp("empty.csv", "sex,age,edu,salary\n");
        assert!(matches!(
            load_csv(&path, &spec()).unwrap_err(),
            Error::EmptyDataset
        ));
    }

    #[test]
    fn csv_round_trip_preserves_sfm_columns() {
        let path = write_tmp(
            "round.csv",
            "sex,age,edu,salary\nf,30.5,hs,50.25\nm,40,uni,60.125\nf,25,uni,55\nm,35,hs,52\n",
        );
        let data = load_csv(&path, &spec()).unwrap();
        let out = write_tmp("round_out.csv", "");
        data.write_csv(&out).unwrap();
        let reloaded = load_csv(&out, &spec()).unwrap();
        assert_eq!(data.columns, reloaded.columns);
    }

    fn balanced_dataset(n: usize) -> Dataset {
        let sex: Vec<String> = (0..n)
            .map(|i| if i % 2 == 0 { "f".into() } else { "m".into() })
            .collect();
        let age: Vec<f64> = (0..n).map(|i| 20.0 + (i % 30) as f64).collect();
        let edu: Vec<String> = (0..n)
            .map(|i| if i % 3 == 0 { "hs".into() } else { "uni".into() })
            .collect();
        let salary: Vec<f64> = (0..n).map(|i| 40.0 + (i % 17) as f64).collect();
        Dataset {
            n,
            columns: vec![
                ("sex".into(), Column::Categorical(sex)),
                ("age".into(), Column::Numeric(age)),
                ("edu".into(), Column::Categorical(edu)),
                ("salary".into(), Column::Numeric(salary)),
            ],
            provenance: Provenance::Synthetic { seed: 0 },
            dropped_rows: 0,
        }
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let data = balanced_dataset(100);
        let s = spec();
        let plan = split(&data, &s, 0.7, 1).unwrap();
        assert_eq!(plan.train.len(), 70);
        assert_eq!(plan.eval.len(), 30);
        let codes = data.group_codes(&s).unwrap();
        let count = |idx: &[usize], g: u8| idx.iter().filter(|&&i| codes[i] == g).count();
        assert_eq!(count(&plan.train, 0), 35);
        assert_eq!(count(&plan.train, 1), 35);
        assert_eq!(count(&plan.eval, 0), 15);
        assert_eq!(count(&plan.eval, 1), 15);
        assert_eq!(plan, split(&data, &s, 0.7, 1).unwrap());
        assert_ne!(plan, split(&data, &s, 0.7, 2).unwrap());
    }

    #[test]
    fn split_rejects_small_groups() {
        let data = balanced_dataset(25);
        assert!(matches!(
            split(&data, &spec(), 0.5, 1).unwrap_err(),
            Error::GroupTooSmall { .. }
        ));
    }

    #[test]
    fn bootstrap_is_deterministic_and_covers_single_row() {
        let data = balanced_dataset(40);
        let a = bootstrap_resample(&data, 9);
        let b = bootstrap_resample(&data, 9);
        assert_eq!(a, b);
        assert_ne!(a, bootstrap_resample(&data, 10));

        let single = data.take_rows(&[3]);
        let res = bootstrap_resample(&single, 5);
        assert_eq!(res.n, 1);
        assert_eq!(res.columns, single.columns);
    }

    #[test]
    fn bootstrap_distinct_fraction_near_one_minus_inv_e() {
        let data = balanced_dataset(1000);
        let res = bootstrap_resample(&data, 123);
        // Count distinct original rows by their (age, salary) signature, which
        // is unique per row modulo the 30*17=510 cycle; use the raw index trick
        // instead: resample indices directly.
        let mut rng = seed::rng_for(123, 0xb007);
        let idx: Vec<usize> = (0..data.n).map(|_| rng.random_range(0..data.n)).collect();
        let distinct: std::collections::BTreeSet<usize> = idx.iter().copied().collect();
        let frac = distinct.len() as f64 / 1000.0;
        assert!((frac - 0.632).abs() < 0.05, "distinct fraction {frac}");
        assert_eq!(res.n, 1000);
    }

    #[test]
    fn encode_zscores_and_one_hots() {
        // Train rows chosen so age has mean 10, sd 2 in the train fold.
        let data = Dataset {
            n: 44,
            columns: vec![
                (
                    "sex".into(),
                    Column::Categorical(
                        (0..44)
                            .map(|i| if i % 2 == 0 { "f".into() } else { "m".into() })
                            .collect(),
                    ),
                ),
                (
                    "age".into(),
                    Column::Numeric((0..44).map(|i| if i % 2 == 0 { 8.0 } else { 12.0 }).collect()),
                ),
                (
                    "edu".into(),
                    Column::Categorical(
                        (0..44)
                            .map(|i| ["a", "b", "c"][i % 3].to_string())
                            .collect(),
                    ),
                ),
                ("salary".into(), Column::Numeric(vec![14.0; 44])),
            ],
            provenance: Provenance::Synthetic { seed: 0 },
            dropped_rows: 0,
        };
        let s = spec();
        let plan = split(&data, &s, 0.5, 3).unwrap();
        let view = encode(&data, &s, &plan).unwrap();
        // Train fold is half 8s and half 12s only if stratification kept the
        // alternating pattern balanced; verify via frozen stats instead.
        match &view.stats.z_features[0] {
            FeatureStat::ZScore { mean, scale, .. } => {
                let value = (14.0 - mean) / scale;
                let direct = zscore_transform(&[14.0], *mean, *scale)[0];
                assert!((value - direct).abs() < 1e-15);
            }
            other => panic!("expected z-score feature, got {other:?}"),
        }
        // One-hot block: three categories, each row has exactly one 1.
        assert_eq!(view.w.cols, 3);
        for i in 0..view.n {
            let row = view.w.row(i);
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|&&v| v == 0.0).count(), 2);
        }
    }

    #[test]
    fn encode_constant_column_warns_and_zeroes() {
        let mut data = balanced_dataset(60);
        data.columns[1] = ("age".into(), Column::Numeric(vec![7.0; 60]));
        let s = spec();
        let plan = split(&data, &s, 0.5, 3).unwrap();
        let view = encode(&data, &s, &plan).unwrap();
        assert!(view.z.data.iter().all(|&v| v == 0.0));
        assert!(view
            .stats
            .warnings
            .iter()
            .any(|w| w.contains("zero variance")));
    }

    #[test]
    fn encode_unseen_category_warns_and_zeroes() {
        let mut data = balanced_dataset(60);
        // Plant a category that appears once; with seed sweep find a split
        // where it lands in eval. Simpler: force it by constructing the plan.
        if let ("edu", Column::Categorical(v)) = {
            let (n, c) = &mut data.columns[2];
            (n.as_str(), c)
        } {
            v[59] = "rare".into();
        }
        let s = spec();
        let train: Vec<usize> = (0..40).collect();
        let eval: Vec<usize> = (40..60).collect();
        let plan = SplitPlan {
            train,
            eval,
            fraction: 2.0 / 3.0,
            seed: 0,
        };
        let view = encode(&data, &s, &plan).unwrap();
        assert!(view
            .stats
            .warnings
            .iter()
            .any(|w| w.contains("unseen category")));
        let row = view.w.row(59);
        assert!(row.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encoding_is_deterministic() {
        let data = balanced_dataset(80);
        let s = spec();
        let plan = split(&data, &s, 0.7, 11).unwrap();
        let a = encode(&data, &s, &plan).unwrap();
        let b = encode(&data, &s, &plan).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.z, b.z);
        assert_eq!(a.w, b.w);
        assert_eq!(a.y, b.y);
    }

    #[test]
    fn zscore_idempotent_on_already_encoded_data() {
        let values = vec![3.0, -1.0, 4.0, 1.0, 5.0, 9.0, -2.0, 6.0];
        let (m, s) = freeze_zscore_stats(&values);
        let once = zscore_transform(&values, m, s);
        let (m2, s2) = freeze_zscore_stats(&once);
        let twice = zscore_transform(&once, m2, s2);
        for (a, b) in once.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn subset_preserves_rows() {
        let data = balanced_dataset(50);
        let s = spec();
        let plan = split(&data, &s, 0.6, 5).unwrap();
        let view = encode(&data, &s, &plan).unwrap();
        let sub = view.subset(&plan.eval);
        assert_eq!(sub.n, plan.eval.len());
        for (k, &i) in plan.eval.iter().enumerate() {
            assert_eq!(sub.x[k], view.x[i]);
            assert_eq!(sub.y[k], view.y[i]);
            assert_eq!(sub.z.row(k), view.z.row(i));
            assert_eq!(sub.w.row(k), view.w.row(i));
        }
    }
}
