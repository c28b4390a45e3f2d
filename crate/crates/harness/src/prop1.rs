//! Consistency check of subset-adjusted estimators after score matching.

use std::collections::BTreeSet;

use matchsim_core::estimators::{verify_proposition1, Prop1Design, Prop1Settings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::HarnessConfig;
use crate::error::{HarnessError, Result};

const SUBSET_SALT: u64 = 0x5eed_5b5e_7000_0001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Row {
    pub n: usize,
    /// Space-separated 1-based covariate indices; empty for `M(W)`.
    pub subset: String,
    pub truth: f64,
    pub truth_se: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub sd: f64,
    pub replications: usize,
    pub failures: usize,
    pub mean_pairs: f64,
}

/// The empty subset followed by `count - 1` distinct nonempty random subsets
/// of `0..p`, ordered as drawn.
pub fn random_subsets(p: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let available = 1usize.checked_shl(p as u32).unwrap_or(usize::MAX);
    let count = count.min(available);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SUBSET_SALT);
    let mut seen = BTreeSet::from([Vec::new()]);
    let mut out = vec![Vec::new()];
    while out.len() < count {
        let subset: Vec<usize> = (0..p).filter(|_| rng.random_bool(0.5)).collect();
        if seen.insert(subset.clone()) {
            out.push(subset);
        }
    }
    out
}

/// Runs the check at each sample size of the config (default `n` and `2n`).
pub fn run_prop1(config: &HarnessConfig) -> Result<Vec<Prop1Row>> {
    let scenario = config
        .base_scenarios()?
        .into_iter()
        .next()
        .ok_or_else(|| HarnessError::Config("no scenario".into()))?;
    let subsets = match &config.prop1_subsets {
        Some(s) => {
            if s.iter().flatten().any(|&j| j >= config.p) {
                return Err(HarnessError::Config("prop1_subsets index out of range".into()));
            }
            s.clone()
        }
        None => random_subsets(config.p, config.prop1_subset_count, config.seed),
    };
    let sizes = match &config.sample_sizes {
        Some(s) => s.clone(),
        None => vec![config.n, 2 * config.n],
    };
    let mut rows = Vec::new();
    for n in sizes {
        let settings = Prop1Settings {
            n,
            replications: config.replications,
            design: Prop1Design::Psm {
                caliper_multiplier: config.prop1_caliper,
            },
            oracle_draws: config.oracle_draws,
        };
        let report = verify_proposition1(&scenario, &subsets, &settings)?;
        for s in report.subsets {
            rows.push(Prop1Row {
                n,
                subset: s.subset.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" "),
                truth: report.truth.value,
                truth_se: report.truth.standard_error,
                mean_estimate: s.metrics.mean_estimate,
                bias: s.metrics.bias,
                bias_se: s.bias_se,
                sd: s.metrics.sd,
                replications: s.metrics.replication_count,
                failures: s.metrics.failure_count,
                mean_pairs: report.mean_pairs,
            });
        }
    }
    Ok(rows)
}
