//! CSV schemas and readers/writers.
//!
//! Every file is comma-separated UTF-8 with a header row and LF line endings.
//! Floats are written in shortest round-trip form, so `read(write(x)) == x`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use matchsim_core::{Dataset, MatchResult, Matrix};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub fn write_rows<R: Serialize>(path: &Path, rows: &[R]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    }
    let file = File::create(path).map_err(HarnessError::io(path))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    for row in rows {
        writer.serialize(row).map_err(HarnessError::csv(path))?;
    }
    writer
        .into_inner()
        .map_err(|e| HarnessError::io(path)(e.into_error()))?
        .flush()
        .map_err(HarnessError::io(path))
}

pub fn read_rows<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut reader = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    reader
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(HarnessError::csv(path))
}

/// Writes `y,w,x1..xp`.
pub fn write_dataset(path: &Path, data: &Dataset<f64>) -> Result<()> {
    let file = File::create(path).map_err(HarnessError::io(path))?;
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(file));
    let mut header = vec!["y".to_string(), "w".to_string()];
    header.extend((1..=data.p()).map(|j| format!("x{j}")));
    writer.write_record(&header).map_err(HarnessError::csv(path))?;
    for i in 0..data.n() {
        let mut record = vec![data.y()[i].to_string(), u8::from(data.w()[i]).to_string()];
        record.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        writer.write_record(&record).map_err(HarnessError::csv(path))?;
    }
    writer
        .into_inner()
        .map_err(|e| HarnessError::io(path)(e.into_error()))?
        .flush()
        .map_err(HarnessError::io(path))
}

/// Reads a `y,w,x1..xp` file, rejecting other layouts and non-binary `w`.
pub fn read_dataset(path: &Path) -> Result<Dataset<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    let header = reader.headers().map_err(HarnessError::csv(path))?.clone();
    let p = header.len().saturating_sub(2);
    let expected: Vec<String> = ["y".to_string(), "w".to_string()]
        .into_iter()
        .chain((1..=p).map(|j| format!("x{j}")))
        .collect();
    if p == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(HarnessError::Schema(format!(
            "{}: header must be y,w,x1..xp, got {}",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let (mut y, mut w, mut x) = (Vec::new(), Vec::new(), Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(HarnessError::csv(path))?;
        let row = line + 2;
        let num = |k: usize| -> Result<f64> {
            let field = record[k].trim();
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::Schema(format!("row {row}: {} = {field:?} is not a finite number", &header[k])))
        };
        y.push(num(0)?);
        w.push(match record[1].trim() {
            "0" => false,
            "1" => true,
            other => return Err(HarnessError::Schema(format!("row {row}: w = {other:?} is not 0 or 1"))),
        });
        for k in 2..record.len() {
            x.push(num(k)?);
        }
    }
    let n = y.len();
    let data_error = |e: matchsim_core::Error| HarnessError::Data(format!("{}: {e}", path.display()));
    Dataset::new(Matrix::from_row_major(n, p, x).map_err(data_error)?, w, y).map_err(data_error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRow {
    pub unit_index: usize,
    pub role: String,
    pub pair_id: Option<usize>,
    pub stratum: Option<usize>,
    pub weight: f64,
}

pub fn match_rows(matched: &MatchResult<f64>, w: &[bool]) -> Vec<MatchRow> {
    let pairs = matched.pair_ids();
    let strata = matched.stratum_ids();
    (0..matched.n())
        .map(|i| MatchRow {
            unit_index: i,
            role: matched.role(i, w).to_string(),
            pair_id: pairs[i],
            stratum: strata[i],
            weight: matched.weights[i],
        })
        .collect()
}

/// Per-unit weights and pairs of a match file, validated against `w`.
pub fn read_match(path: &Path, w: &[bool]) -> Result<(Vec<f64>, Vec<(usize, usize)>)> {
    let rows: Vec<MatchRow> = read_rows(path)?;
    if rows.len() != w.len() {
        return Err(HarnessError::Schema(format!(
            "{}: {} rows for {} units",
            path.display(),
            rows.len(),
            w.len()
        )));
    }
    let mut weights = vec![0.0; w.len()];
    let mut by_pair: std::collections::BTreeMap<usize, (Option<usize>, Option<usize>)> = Default::default();
    for (k, row) in rows.iter().enumerate() {
        if row.unit_index != k {
            return Err(HarnessError::Schema(format!("{}: unit_index out of order at row {}", path.display(), k + 2)));
        }
        let expected = match row.role.as_str() {
            "treated" => Some(true),
            "control" => Some(false),
            "pruned" => None,
            other => return Err(HarnessError::Schema(format!("unknown role {other:?}"))),
        };
        if expected.is_some_and(|t| t != w[k]) || !(row.weight >= 0.0) || (expected.is_none() && row.weight != 0.0) {
            return Err(HarnessError::Schema(format!("{}: inconsistent row for unit {k}", path.display())));
        }
        weights[k] = row.weight;
        if let Some(id) = row.pair_id {
            let slot = by_pair.entry(id).or_default();
            if w[k] {
                slot.0 = Some(k);
            } else {
                slot.1 = Some(k);
            }
        }
    }
    let pairs = by_pair
        .into_values()
        .map(|(t, c)| t.zip(c).ok_or_else(|| HarnessError::Schema(format!("{}: incomplete pair", path.display()))))
        .collect::<Result<_>>()?;
    Ok((weights, pairs))
}

/// One balance value; `covariate` is the 1-based index for per-covariate
/// metrics and empty for multivariate ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub stage: String,
    pub metric: String,
    pub covariate: Option<usize>,
    pub value: f64,
    pub replication: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub design: String,
    pub estimator: String,
    pub estimate: f64,
    pub matched_treated: usize,
    pub matched_control: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub pair: usize,
    pub n: usize,
    pub replication: usize,
    pub design: String,
    pub estimator: String,
    /// Empty when the replication failed.
    pub estimate: Option<f64>,
    pub treated: usize,
    pub matched_treated: usize,
    pub matched_control: usize,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceRow {
    pub pair: usize,
    pub n: usize,
    pub design: String,
    pub metric: String,
    pub covariate: Option<usize>,
    pub value: f64,
    pub replication: usize,
}

/// Table-1 columns followed by run bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    #[serde(rename = "Scenario")]
    pub scenario: String,
    #[serde(rename = "Proportion treated")]
    pub proportion_treated: f64,
    #[serde(rename = "Design")]
    pub design: String,
    #[serde(rename = "Model")]
    pub model: String,
    #[serde(rename = "Mean Estimate")]
    pub mean_estimate: f64,
    #[serde(rename = "Bias")]
    pub bias: f64,
    #[serde(rename = "SD")]
    pub sd: f64,
    #[serde(rename = "Root MSE")]
    pub rmse: f64,
    pub pair: usize,
    pub sine_distance: Option<f64>,
    pub n: usize,
    pub true_value: f64,
    pub true_value_se: f64,
    pub variance: f64,
    pub mse: f64,
    pub empirical_mse: f64,
    pub replications: usize,
    pub failures: usize,
    pub mean_matched_treated: f64,
    pub mean_matched_control: f64,
}

/// Per-cell balance summary: mean of I1 to I4, I5 across replications, and
/// mean matched sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub pair: usize,
    pub sine_distance: Option<f64>,
    pub n: usize,
    pub design: String,
    pub metric: String,
    pub value: f64,
}

/// One point of a plot-ready series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub panel: String,
    pub series: String,
    pub design: String,
    pub metric: String,
    pub n: usize,
    pub pair: Option<usize>,
    pub x: f64,
    pub y: f64,
    /// Average matched cohort size, where the panel annotates it.
    pub matched_size: Option<f64>,
}
