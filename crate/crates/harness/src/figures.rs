//! Plot-ready long-format series built from a completed run directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::config::HarnessConfig;
use crate::error::{HarnessError, Result};
use crate::io::{read_rows, write_rows, AggregateRow, FigureRow, SummaryRow};
use crate::runner::{read_manifest, AGGREGATE_FILE, CONFIG_FILE, SUMMARY_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
    ImbalanceVsN,
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::ImbalanceVsN => "imbalance_vs_n",
        })
    }
}

impl FromStr for Figure {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "imbalance_vs_n" => Ok(Figure::ImbalanceVsN),
            other => Err(HarnessError::Config(format!("unknown figure {other:?}"))),
        }
    }
}

struct Run {
    config: HarnessConfig,
    aggregate: Vec<AggregateRow>,
    summary: Vec<SummaryRow>,
}

impl Run {
    fn load(dir: &Path) -> Result<Self> {
        read_manifest(dir)?;
        let need = |name: &'static str| {
            let path = dir.join(name);
            if path.is_file() {
                Ok(path)
            } else {
                Err(HarnessError::MissingRun(dir.to_path_buf(), name))
            }
        };
        let config = HarnessConfig::load(&need(CONFIG_FILE)?)?;
        let aggregate = read_rows(&need(AGGREGATE_FILE)?)?;
        let summary = read_rows(&need(SUMMARY_FILE)?)?;
        Ok(Run {
            config,
            aggregate,
            summary,
        })
    }

    /// Sample size used by the single-n panels.
    fn base_n(&self) -> usize {
        let sizes = self.config.sample_sizes();
        if sizes.contains(&self.config.n) {
            self.config.n
        } else {
            sizes[0]
        }
    }

    fn specification(&self) -> &'static str {
        if self.config.nonlinear_outcome {
            "misspecified"
        } else {
            "correct"
        }
    }

    /// One row per pair of `|bias|` for `(design, model)` at the base size.
    fn bias_points(&self, panel: &str, model: &str, designs: &[&str]) -> Vec<FigureRow> {
        let n = self.base_n();
        self.aggregate
            .iter()
            .filter(|r| r.n == n && r.model == model && designs.contains(&r.design.as_str()))
            .map(|r| FigureRow {
                panel: panel.to_string(),
                series: format!("{}:{}", r.design, r.model),
                design: r.design.clone(),
                metric: "abs_bias".into(),
                n,
                pair: Some(r.pair),
                x: r.sine_distance.unwrap_or(r.pair as f64),
                y: r.bias.abs(),
                matched_size: Some(r.mean_matched_treated + r.mean_matched_control),
            })
            .collect()
    }

    fn summary_points(&self, panel: &str, metric: &str) -> Vec<FigureRow> {
        let n = self.base_n();
        self.summary
            .iter()
            .filter(|r| r.n == n && r.metric == metric)
            .map(|r| FigureRow {
                panel: panel.to_string(),
                series: format!("{}:{}", r.design, metric),
                design: r.design.clone(),
                metric: metric.to_string(),
                n,
                pair: Some(r.pair),
                x: r.sine_distance.unwrap_or(r.pair as f64),
                y: r.value,
                matched_size: None,
            })
            .collect()
    }

    /// Per-design means over pairs of each metric, one point per n.
    fn by_n(&self, panel: &str, metrics: &[&str], designs: Option<&[&str]>) -> Vec<FigureRow> {
        let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
        let mut sizes: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
        for r in &self.summary {
            if designs.is_some_and(|d| !d.contains(&r.design.as_str())) {
                continue;
            }
            if metrics.contains(&r.metric.as_str()) {
                groups.entry((r.design.clone(), r.metric.clone(), r.n)).or_default().push(r.value);
            }
            if r.metric == "matched_total" {
                sizes.entry((r.design.clone(), r.n)).or_default().push(r.value);
            }
        }
        let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        groups
            .into_iter()
            .map(|((design, metric, n), values)| FigureRow {
                panel: panel.to_string(),
                series: format!("{design}:{metric}"),
                matched_size: sizes.get(&(design.clone(), n)).map(|s| avg(s)),
                design,
                metric,
                n,
                pair: None,
                x: n as f64,
                y: avg(&values),
            })
            .collect()
    }

    /// `|bias|`, variance and MSE of `model` per pair for the given designs.
    fn accuracy_points(&self, panels: [&str; 3], model: &str, designs: &[&str]) -> Vec<FigureRow> {
        let n = self.base_n();
        let mut rows = Vec::new();
        for (panel, metric) in panels.iter().zip(["bias", "variance", "mse"]) {
            for r in self
                .aggregate
                .iter()
                .filter(|r| r.n == n && r.model == model && designs.contains(&r.design.as_str()))
            {
                rows.push(FigureRow {
                    panel: panel.to_string(),
                    series: format!("{}:{metric}", r.design),
                    design: r.design.clone(),
                    metric: metric.to_string(),
                    n,
                    pair: Some(r.pair),
                    x: r.sine_distance.unwrap_or(r.pair as f64),
                    y: match metric {
                        "bias" => r.bias.abs(),
                        "variance" => r.variance,
                        _ => r.mse,
                    },
                    matched_size: Some(r.mean_matched_treated + r.mean_matched_control),
                });
            }
        }
        rows
    }
}

/// Writes the panels of `figure` into `run_dir/figures` and returns the paths.
pub fn emit_figure_data(run_dir: &Path, figure: Figure) -> Result<Vec<PathBuf>> {
    let run = Run::load(run_dir)?;
    let cems = ["CEM-Auto", "CEM-G3"];
    let all = ["PSM", "CEM-Auto", "CEM-G3"];
    let mut files: Vec<(String, Vec<FigureRow>)> = Vec::new();
    match figure {
        Figure::Fig1 => {
            files.push(("fig1a".into(), run.bias_points("A", "M(W)", &all)));
            files.push(("fig1b".into(), run.summary_points("B", "I5")));
            files.push(("fig1c".into(), run.summary_points("C", "matched_total")));
            files.push(("fig1d".into(), run.by_n("D", &["I2", "I5"], Some(&cems))));
        }
        Figure::Fig2 => {
            let (name, panel) = match run.specification() {
                "correct" => ("fig2a", "A"),
                _ => ("fig2b", "B"),
            };
            files.push((name.into(), run.bias_points(panel, "M(W,X)", &["PSM", "CEM-Auto"])));
            let mut unmatched = run.bias_points("C", "M(W)", &["Unmatched"]);
            unmatched.extend(run.bias_points("C", "M(W,X)", &["Unmatched"]));
            if !unmatched.is_empty() {
                files.push(("fig2c".into(), unmatched));
            }
        }
        Figure::Fig3 => {
            if run.specification() == "correct" {
                files.push(("fig3_auto".into(), run.accuracy_points(["A", "B", "C"], "M(W,X)", &["PSM", "CEM-Auto"])));
                files.push(("fig3_g3".into(), run.accuracy_points(["D", "E", "F"], "M(W,X)", &["PSM", "CEM-G3"])));
            } else {
                files.push((
                    "fig3_misspecified".into(),
                    run.accuracy_points(["G", "H", "I"], "M(W,X)", &["PSM", "CEM-G3"]),
                ));
            }
        }
        Figure::ImbalanceVsN => {
            files.push(("imbalance_vs_n".into(), run.by_n("imbalance_vs_n", &["I1", "I2", "I3", "I4", "I5"], None)));
        }
    }
    let dir = run_dir.join("figures");
    let mut written = Vec::new();
    for (name, rows) in files {
        let path = dir.join(format!("{name}.csv"));
        write_rows(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

