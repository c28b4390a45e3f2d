//! Matching, balance auditing and estimation on user-supplied datasets.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use matchsim_core::balance::balance_report;
use matchsim_core::cem::{cem_match, coarsen, CoarsenedData};
use matchsim_core::psm::psm;
use matchsim_core::terms::linear_terms;
use matchsim_core::{
    BalanceOptions, BalanceReport, CemOptions, CoarseningRule, CoarseningSpec, Dataset, DesignLabel, Error,
    MatchResult, Stratum,
};
use serde::{Deserialize, Serialize};

use crate::design::Estimator;
use crate::error::{HarnessError, Result};
use crate::io::{match_rows, read_dataset, read_match, read_rows, write_rows, BalanceRow, EstimateRow};

/// Coarsening requested with `--cem`.
#[derive(Debug, Clone, PartialEq)]
pub enum CemChoice {
    Auto,
    FixedK(usize),
    /// Long-format CSV `variable,cutpoint`; variables are 1-based and those
    /// without cutpoints use Sturges bins.
    Cutpoints(PathBuf),
}

impl std::str::FromStr for CemChoice {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(CemChoice::Auto),
            "g3" => Ok(CemChoice::FixedK(3)),
            other => other
                .strip_prefix('k')
                .and_then(|k| k.parse().ok())
                .filter(|&k: &usize| k >= 2)
                .map(CemChoice::FixedK)
                .ok_or_else(|| HarnessError::Config(format!("unknown coarsening {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOptions {
    /// Caliper multiplier when PSM is requested.
    pub psm: Option<f64>,
    pub cem: Option<CemChoice>,
    pub cem_options: CemOptions,
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutpointRow {
    pub variable: usize,
    pub cutpoint: f64,
}

/// Per-variable coarsening report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseningRow {
    pub variable: usize,
    pub rule: String,
    pub bin_count: usize,
    /// Space-separated edges.
    pub bin_edges: String,
}

pub fn read_cutpoints(path: &Path, p: usize) -> Result<CoarseningSpec<f64>> {
    let rows: Vec<CutpointRow> = read_rows(path)?;
    let mut by_var: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in rows {
        if row.variable == 0 || row.variable > p {
            return Err(HarnessError::Schema(format!(
                "{}: variable {} outside 1..={p}",
                path.display(),
                row.variable
            )));
        }
        by_var.entry(row.variable).or_default().push(row.cutpoint);
    }
    let rules = (1..=p)
        .map(|j| match by_var.remove(&j) {
            Some(mut c) => {
                c.sort_by(f64::total_cmp);
                CoarseningRule::Cutpoints(c)
            }
            None => CoarseningRule::AutoSturges,
        })
        .collect();
    Ok(CoarseningSpec { rules })
}

pub fn coarsening_rows(spec: &CoarseningSpec<f64>, coarsened: &CoarsenedData<f64>) -> Vec<CoarseningRow> {
    spec.rules
        .iter()
        .enumerate()
        .map(|(j, rule)| CoarseningRow {
            variable: j + 1,
            rule: match rule {
                CoarseningRule::AutoSturges => "auto".to_string(),
                CoarseningRule::FixedK(k) => format!("k{k}"),
                CoarseningRule::Cutpoints(_) => "cutpoints".to_string(),
            },
            bin_count: coarsened.bin_counts[j],
            bin_edges: coarsened.bin_edges[j].iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
        })
        .collect()
}

pub fn balance_rows(stage: &str, report: &BalanceReport<f64>) -> Vec<BalanceRow> {
    let row = |metric: &str, covariate: Option<usize>, value: f64| BalanceRow {
        stage: stage.to_string(),
        metric: metric.to_string(),
        covariate,
        value,
        replication: 0,
    };
    let mut rows: Vec<BalanceRow> = report.smd.iter().enumerate().map(|(j, &s)| row("SMD", Some(j + 1), s)).collect();
    if let Some(i1) = report.i1 {
        rows.push(row("I1", None, i1));
    }
    rows.push(row("I2", None, report.i2));
    rows.push(row("I3", None, report.i3));
    rows.push(row("I4", None, report.i4));
    rows
}

/// Pre-match balance followed by the balance of `matched`.
fn audit(data: &Dataset<f64>, matched: &MatchResult<f64>) -> Result<Vec<BalanceRow>> {
    let options = BalanceOptions::default();
    let mut rows = balance_rows("pre", &balance_report(data, &MatchResult::unmatched(data), &options)?);
    rows.extend(balance_rows("post", &balance_report(data, matched, &options)?));
    Ok(rows)
}

/// Runs the requested designs and writes `match_<design>.csv`,
/// `balance_<design>.csv` and `estimates_<design>.csv` (plus the coarsening
/// report for CEM) into `out_dir`.
pub fn match_user_data(csv_path: &Path, options: &MatchOptions, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if options.psm.is_none() && options.cem.is_none() {
        return Err(HarnessError::Config("request at least one of --psm and --cem".into()));
    }
    let data = read_dataset(csv_path)?;
    let mut designs: Vec<(String, MatchResult<f64>, Option<Vec<CoarseningRow>>)> = Vec::new();
    if let Some(mult) = options.psm {
        designs.push(("psm".into(), psm(&data, &linear_terms(data.p()), mult)?, None));
    }
    if let Some(choice) = &options.cem {
        let spec = match choice {
            CemChoice::Auto => CoarseningSpec::auto(data.p()),
            CemChoice::FixedK(k) => CoarseningSpec::uniform(CoarseningRule::FixedK(*k), data.p()),
            CemChoice::Cutpoints(path) => read_cutpoints(path, data.p())?,
        };
        let coarsened = coarsen(data.x(), &spec)?;
        let matched = cem_match(&data, &coarsened, options.cem_options)?;
        designs.push(("cem".into(), matched, Some(coarsening_rows(&spec, &coarsened))));
    }
    let mut written = Vec::new();
    for (name, matched, report) in &designs {
        if matched.is_empty() {
            return Err(HarnessError::Numerical(Error::EmptyMatch));
        }
        let mut out = |stem: &str| {
            let path = out_dir.join(format!("{stem}_{name}.csv"));
            written.push(path.clone());
            path
        };
        write_rows(&out("match"), &match_rows(matched, data.w()))?;
        write_rows(&out("balance"), &audit(&data, matched)?)?;
        let estimates = options
            .estimators
            .iter()
            .map(|e| {
                Ok(EstimateRow {
                    design: matched.design.to_string(),
                    estimator: e.to_string(),
                    estimate: e.evaluate(matched, &data)?,
                    matched_treated: matched.matched_treated,
                    matched_control: matched.matched_control,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        write_rows(&out("estimates"), &estimates)?;
        if let Some(report) = report {
            write_rows(&out("coarsening"), report)?;
        }
    }
    Ok(written)
}

/// Rebuilds a match from its CSV, restoring pairs and strata.
pub fn load_match(path: &Path, data: &Dataset<f64>) -> Result<MatchResult<f64>> {
    let (weights, pairs) = read_match(path, data.w())?;
    let rows: Vec<crate::io::MatchRow> = read_rows(path)?;
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for row in &rows {
        if let Some(s) = row.stratum {
            groups.entry(s).or_default().push(row.unit_index);
        }
    }
    let strata = (!groups.is_empty()).then(|| {
        groups
            .into_iter()
            .map(|(id, members)| {
                let treated = members.iter().filter(|&&i| data.w()[i]).count();
                Stratum {
                    key: vec![id as u32],
                    control: members.len() - treated,
                    treated,
                    members,
                }
            })
            .collect::<Vec<_>>()
    });
    let design = match (pairs.is_empty(), strata.is_some()) {
        (false, true) => DesignLabel::CemOneToOne,
        (false, false) => DesignLabel::Psm,
        (true, true) => DesignLabel::CemWeights,
        (true, false) => DesignLabel::Unmatched,
    };
    let matched = MatchResult::from_weights(design, data.w(), pairs, strata, weights);
    matched.check(data.w())?;
    Ok(matched)
}

/// Pre- and post-match balance of an existing match file.
pub fn audit_match(csv_path: &Path, match_path: &Path) -> Result<Vec<BalanceRow>> {
    let data = read_dataset(csv_path)?;
    let matched = load_match(match_path, &data)?;
    if matched.is_empty() {
        return Err(HarnessError::Numerical(Error::EmptyMatch));
    }
    audit(&data, &matched)
}
