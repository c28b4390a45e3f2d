//! Replication loop: generate, match with each design, measure balance,
//! estimate, and aggregate per `(pair, n, design, estimator)` cell.

use std::path::{Path, PathBuf};
use std::time::Instant;

use matchsim_core::balance::{balance_report, i5_cross_replication};
use matchsim_core::datagen::{generate_dataset, true_patt_oracle, OracleEstimate, ScenarioConfig};
use matchsim_core::estimators::aggregate;
use matchsim_core::{BalanceOptions, Dataset};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::HarnessConfig;
use crate::design::{Design, Estimator};
use crate::error::{HarnessError, Result};
use crate::io::{write_rows, AggregateRow, ImbalanceRow, ReplicationRow, SummaryRow};

pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const IMBALANCE_FILE: &str = "imbalance.csv";
pub const SUMMARY_FILE: &str = "imbalance_summary.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    pub config_hash: String,
    pub seed: u64,
    pub replication_count: usize,
    pub coefficient_pairs: usize,
    pub sample_sizes: Vec<usize>,
    pub designs: Vec<String>,
    pub estimators: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub version: String,
}

/// Balance of one design in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceSnapshot {
    pub smd: Vec<f64>,
    pub i1: Option<f64>,
    pub i2: f64,
    pub i3: f64,
    pub i4: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub matched_treated: usize,
    pub matched_control: usize,
    /// One entry per requested estimator; `None` marks a failure.
    pub estimates: Vec<Option<f64>>,
    pub balance: Option<BalanceSnapshot>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOutcome {
    pub treated: usize,
    pub n: usize,
    pub designs: Vec<DesignOutcome>,
}

/// Results of one `(pair, n)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub pair: usize,
    pub sine_distance: Option<f64>,
    pub n: usize,
    pub truth: OracleEstimate,
    pub replications: Vec<ReplicationOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub designs: Vec<Design>,
    pub estimators: Vec<Estimator>,
    pub cells: Vec<Cell>,
}

/// Runs every replication of every cell on a pool of `workers` threads.
/// Output order follows `(pair, n, replication)`, independent of scheduling.
pub fn execute(config: &HarnessConfig, workers: usize) -> Result<RunOutput> {
    let designs = config.designs()?;
    let estimators = config.estimators()?;
    let cem_options = config.cem_options()?;
    let ps_terms = config.propensity_terms()?;
    let scenarios = config.base_scenarios()?;
    let sines: Vec<Option<f64>> = match config.pairs()? {
        Some(pairs) => pairs.iter().map(|p| Some(p.sine_distance)).collect(),
        None => vec![None],
    };
    let sizes = config.sample_sizes();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("worker pool: {e}")))?;

    pool.install(|| {
        let truths = scenarios
            .iter()
            .map(|s| true_patt_oracle(s, config.oracle_draws))
            .collect::<matchsim_core::Result<Vec<_>>>()?;
        let cells: Vec<(usize, usize)> = (0..scenarios.len())
            .flat_map(|k| sizes.iter().map(move |&n| (k, n)))
            .collect();
        let tasks: Vec<(usize, usize)> = (0..cells.len())
            .flat_map(|c| (0..config.replications).map(move |r| (c, r)))
            .collect();
        let outcomes: Vec<ReplicationOutcome> = tasks
            .par_iter()
            .map(|&(c, r)| {
                let (k, n) = cells[c];
                let mut scenario = scenarios[k].clone();
                scenario.n = n;
                run_replication(&scenario, r, &designs, &estimators, config, &ps_terms, cem_options)
            })
            .collect();
        let mut outcomes = outcomes.into_iter();
        let cells = cells
            .iter()
            .map(|&(k, n)| Cell {
                pair: k,
                sine_distance: sines[k],
                n,
                truth: truths[k],
                replications: outcomes.by_ref().take(config.replications).collect(),
            })
            .collect();
        Ok(RunOutput {
            designs,
            estimators,
            cells,
        })
    })
}

fn run_replication(
    scenario: &ScenarioConfig,
    replication: usize,
    designs: &[Design],
    estimators: &[Estimator],
    config: &HarnessConfig,
    ps_terms: &[matchsim_core::Term],
    cem_options: matchsim_core::CemOptions,
) -> ReplicationOutcome {
    let failed = |status: String| DesignOutcome {
        matched_treated: 0,
        matched_control: 0,
        estimates: vec![None; estimators.len()],
        balance: None,
        status,
    };
    let data: Dataset<f64> = match generate_dataset(scenario, replication) {
        Ok(d) => d,
        Err(e) => {
            return ReplicationOutcome {
                treated: 0,
                n: scenario.n,
                designs: designs.iter().map(|_| failed(e.to_string())).collect(),
            }
        }
    };
    let outcomes = designs
        .iter()
        .map(|design| match design.run(&data, ps_terms, config.caliper_multiplier, cem_options) {
            Err(e) => failed(e.to_string()),
            Ok(matched) => {
                let estimates: Vec<Option<f64>> =
                    estimators.iter().map(|e| e.evaluate(&matched, &data).ok()).collect();
                let balance = config
                    .balance
                    .then(|| balance_report(&data, &matched, &BalanceOptions::default()).ok())
                    .flatten()
                    .map(|b| BalanceSnapshot {
                        smd: b.smd,
                        i1: b.i1,
                        i2: b.i2,
                        i3: b.i3,
                        i4: b.i4,
                    });
                let status = if estimates.iter().all(Option::is_some) {
                    "ok".to_string()
                } else {
                    "estimator failure".to_string()
                };
                DesignOutcome {
                    matched_treated: matched.matched_treated,
                    matched_control: matched.matched_control,
                    estimates,
                    balance,
                    status,
                }
            }
        })
        .collect();
    ReplicationOutcome {
        treated: data.treated_count(),
        n: data.n(),
        designs: outcomes,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

impl Cell {
    /// Mean treated fraction over generated samples.
    pub fn proportion_treated(&self) -> f64 {
        mean(
            self.replications
                .iter()
                .filter(|r| r.treated > 0)
                .map(|r| r.treated as f64 / r.n as f64),
        )
    }

    pub fn estimates(&self, design: usize, estimator: usize) -> Vec<Option<f64>> {
        self.replications
            .iter()
            .map(|r| r.designs[design].estimates[estimator])
            .collect()
    }

    pub fn mean_matched(&self, design: usize) -> (f64, f64) {
        let ok = || self.replications.iter().map(|r| &r.designs[design]).filter(|d| d.matched_treated > 0);
        (
            mean(ok().map(|d| d.matched_treated as f64)),
            mean(ok().map(|d| d.matched_control as f64)),
        )
    }

    /// I5 of a design over the replications with a balance report.
    pub fn i5(&self, design: usize) -> Option<f64> {
        let smds: Vec<Vec<f64>> = self
            .replications
            .iter()
            .filter_map(|r| r.designs[design].balance.as_ref().map(|b| b.smd.clone()))
            .collect();
        i5_cross_replication(&smds).ok().map(|b| b.i5)
    }

    /// Mean of a single-replication metric over replications that report it.
    pub fn mean_balance(&self, design: usize, metric: impl Fn(&BalanceSnapshot) -> Option<f64>) -> Option<f64> {
        let values: Vec<f64> = self
            .replications
            .iter()
            .filter_map(|r| r.designs[design].balance.as_ref().and_then(&metric))
            .collect();
        (!values.is_empty()).then(|| mean(values.into_iter()))
    }
}

impl RunOutput {
    pub fn aggregate_rows(&self, scenario: &str) -> Vec<AggregateRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            let proportion = cell.proportion_treated();
            for (d, design) in self.designs.iter().enumerate() {
                let (mt, mc) = cell.mean_matched(d);
                for (e, estimator) in self.estimators.iter().enumerate() {
                    let estimates = cell.estimates(d, e);
                    let failures = estimates.iter().filter(|v| v.is_none()).count();
                    let mut row = AggregateRow {
                        scenario: scenario.to_string(),
                        proportion_treated: proportion,
                        design: design.to_string(),
                        model: estimator.to_string(),
                        mean_estimate: f64::NAN,
                        bias: f64::NAN,
                        sd: f64::NAN,
                        rmse: f64::NAN,
                        pair: cell.pair,
                        sine_distance: cell.sine_distance,
                        n: cell.n,
                        true_value: cell.truth.value,
                        true_value_se: cell.truth.standard_error,
                        variance: f64::NAN,
                        mse: f64::NAN,
                        empirical_mse: f64::NAN,
                        replications: estimates.len() - failures,
                        failures,
                        mean_matched_treated: mt,
                        mean_matched_control: mc,
                    };
                    if let Ok(m) = aggregate(&estimates, cell.truth.value) {
                        row.mean_estimate = m.mean_estimate;
                        row.bias = m.bias;
                        row.sd = m.sd;
                        row.rmse = m.rmse;
                        row.variance = m.variance();
                        row.mse = m.mse;
                        row.empirical_mse = m.empirical_mse;
                    }
                    rows.push(row);
                }
            }
        }
        rows
    }

    pub fn replication_rows(&self) -> Vec<ReplicationRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            for (r, rep) in cell.replications.iter().enumerate() {
                for (d, design) in self.designs.iter().enumerate() {
                    let outcome = &rep.designs[d];
                    for (e, estimator) in self.estimators.iter().enumerate() {
                        rows.push(ReplicationRow {
                            pair: cell.pair,
                            n: cell.n,
                            replication: r,
                            design: design.to_string(),
                            estimator: estimator.to_string(),
                            estimate: outcome.estimates[e],
                            treated: rep.treated,
                            matched_treated: outcome.matched_treated,
                            matched_control: outcome.matched_control,
                            status: outcome.status.clone(),
                        });
                    }
                }
            }
        }
        rows
    }

    pub fn imbalance_rows(&self) -> Vec<ImbalanceRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            for (r, rep) in cell.replications.iter().enumerate() {
                for (d, design) in self.designs.iter().enumerate() {
                    let Some(b) = &rep.designs[d].balance else { continue };
                    let mut push = |metric: &str, covariate: Option<usize>, value: f64| {
                        rows.push(ImbalanceRow {
                            pair: cell.pair,
                            n: cell.n,
                            design: design.to_string(),
                            metric: metric.to_string(),
                            covariate,
                            value,
                            replication: r,
                        })
                    };
                    for (j, &s) in b.smd.iter().enumerate() {
                        push("SMD", Some(j + 1), s);
                    }
                    if let Some(i1) = b.i1 {
                        push("I1", None, i1);
                    }
                    push("I2", None, b.i2);
                    push("I3", None, b.i3);
                    push("I4", None, b.i4);
                }
            }
        }
        rows
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            for (d, design) in self.designs.iter().enumerate() {
                let (mt, mc) = cell.mean_matched(d);
                let metrics = [
                    ("I1", cell.mean_balance(d, |b| b.i1)),
                    ("I2", cell.mean_balance(d, |b| Some(b.i2))),
                    ("I3", cell.mean_balance(d, |b| Some(b.i3))),
                    ("I4", cell.mean_balance(d, |b| Some(b.i4))),
                    ("I5", cell.i5(d)),
                    ("matched_treated", Some(mt)),
                    ("matched_control", Some(mc)),
                    ("matched_total", Some(mt + mc)),
                ];
                for (metric, value) in metrics {
                    let Some(value) = value else { continue };
                    rows.push(SummaryRow {
                        pair: cell.pair,
                        sine_distance: cell.sine_distance,
                        n: cell.n,
                        design: design.to_string(),
                        metric: metric.to_string(),
                        value,
                    });
                }
            }
        }
        rows
    }
}

/// Loads `config_path`, runs it and writes all outputs into `out_dir`.
pub fn run_scenario(config_path: &Path, out_dir: &Path, workers: usize, full: bool) -> Result<RunManifest> {
    let mut config = HarnessConfig::load(config_path)?;
    if full {
        config = config.into_full_scale();
    }
    run_config(&config, out_dir, workers)
}

pub fn run_config(config: &HarnessConfig, out_dir: &Path, workers: usize) -> Result<RunManifest> {
    let start = Instant::now();
    let output = execute(config, workers)?;
    std::fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let mut outputs = Vec::new();
    let mut emit = |name: &str| {
        let path = out_dir.join(name);
        outputs.push(path.clone());
        path
    };
    write_rows(&emit(REPLICATIONS_FILE), &output.replication_rows())?;
    write_rows(&emit(AGGREGATE_FILE), &output.aggregate_rows(&config.scenario))?;
    if config.balance {
        write_rows(&emit(IMBALANCE_FILE), &output.imbalance_rows())?;
        write_rows(&emit(SUMMARY_FILE), &output.summary_rows())?;
    }
    let config_path = emit(CONFIG_FILE);
    std::fs::write(&config_path, config.to_toml()).map_err(HarnessError::io(&config_path))?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    outputs.push(manifest_path.clone());
    let manifest = RunManifest {
        scenario: config.scenario.clone(),
        config_hash: config.hash(),
        seed: config.seed,
        replication_count: config.replications,
        coefficient_pairs: config.coefficient_pairs,
        sample_sizes: config.sample_sizes(),
        designs: output.designs.iter().map(ToString::to_string).collect(),
        estimators: output.estimators.iter().map(ToString::to_string).collect(),
        outputs,
        workers,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let text = toml::to_string(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, text).map_err(HarnessError::io(&manifest_path))?;
    Ok(manifest)
}

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|_| HarnessError::MissingRun(run_dir.to_path_buf(), MANIFEST_FILE))?;
    toml::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))
}
