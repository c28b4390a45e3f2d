//! Scenario configuration files.
//!
//! A config is a flat TOML document. Data-generating fields mirror
//! [`ScenarioConfig`]; the remaining keys control the replication loop.
//!
//! ```toml
//! scenario = "linear5"
//! p = 5
//! n = 5000
//! alpha0 = -0.9
//! covariate_scale = 0.5
//! beta1 = 6.0
//! replications = 500
//! seed = 20240611
//! coefficient_pairs = 50          # draw (alpha1, beta2) pairs instead of fixing them
//! designs = ["PSM", "CEM-Auto", "CEM-G3"]
//! estimators = ["M(W)", "M(W,X)"]
//! ```

use std::fs;
use std::path::Path;

use matchsim_core::cem::{CemMode, CemOptions, WeightTotals};
use matchsim_core::datagen::{generate_coefficient_pairs, CoefficientPair, ScenarioConfig};
use matchsim_core::terms::{linear_terms, quadratic_adjacent_terms, Term};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{Design, Estimator};
use crate::error::{HarnessError, Result};

/// Full-scale settings applied by `--full`.
pub const FULL_REPLICATIONS: usize = 2000;
pub const FULL_PAIRS: usize = 300;
pub const FULL_ORACLE_DRAWS: usize = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    #[serde(default = "defaults::scenario")]
    pub scenario: String,
    pub p: usize,
    pub n: usize,
    #[serde(default = "defaults::alpha0")]
    pub alpha0: f64,
    /// Required unless `coefficient_pairs > 0`.
    #[serde(default)]
    pub alpha1: Option<Vec<f64>>,
    #[serde(default)]
    pub beta0: f64,
    #[serde(default = "defaults::beta1")]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: Option<Vec<f64>>,
    #[serde(default)]
    pub theta: Vec<f64>,
    /// 0-based covariate indices interacting with treatment.
    #[serde(default)]
    pub interaction_subset: Vec<usize>,
    #[serde(default = "defaults::one")]
    pub covariate_scale: f64,
    #[serde(default)]
    pub nonlinear_treatment: bool,
    #[serde(default)]
    pub nonlinear_outcome: bool,
    #[serde(default = "defaults::quadratic_coef")]
    pub quadratic_coef: f64,
    #[serde(default = "defaults::interaction_coef")]
    pub interaction_coef: f64,
    #[serde(default = "defaults::one")]
    pub error_sd: f64,
    #[serde(default = "defaults::replications")]
    pub replications: usize,
    pub seed: u64,

    /// Number of generated `(alpha1, beta2)` pairs; 0 uses the fixed vectors.
    #[serde(default)]
    pub coefficient_pairs: usize,
    #[serde(default = "defaults::pair_k")]
    pub pair_k: f64,
    /// Sample sizes to sweep; defaults to `[n]`.
    #[serde(default)]
    pub sample_sizes: Option<Vec<usize>>,
    #[serde(default = "defaults::designs")]
    pub designs: Vec<String>,
    #[serde(default = "defaults::estimators")]
    pub estimators: Vec<String>,
    /// `weights` or `one_to_one`.
    #[serde(default = "defaults::cem_mode")]
    pub cem_mode: String,
    /// `retained` or `source`: totals used in the CEM control weights.
    #[serde(default = "defaults::cem_totals")]
    pub cem_totals: String,
    #[serde(default = "defaults::caliper")]
    pub caliper_multiplier: f64,
    /// `correct` (terms of the true treatment index) or `linear`.
    #[serde(default = "defaults::propensity_model")]
    pub propensity_model: String,
    #[serde(default = "defaults::oracle_draws")]
    pub oracle_draws: usize,
    /// Compute per-replication balance metrics.
    #[serde(default = "defaults::yes")]
    pub balance: bool,

    /// Covariate subsets for `prop1`; 0-based. Defaults to random subsets.
    #[serde(default)]
    pub prop1_subsets: Option<Vec<Vec<usize>>>,
    #[serde(default = "defaults::prop1_subset_count")]
    pub prop1_subset_count: usize,
    #[serde(default = "defaults::prop1_caliper")]
    pub prop1_caliper: f64,
}

mod defaults {
    pub fn scenario() -> String {
        "scenario".into()
    }
    pub fn alpha0() -> f64 {
        -0.9
    }
    pub fn beta1() -> f64 {
        6.0
    }
    pub fn one() -> f64 {
        1.0
    }
    pub fn quadratic_coef() -> f64 {
        0.5
    }
    pub fn interaction_coef() -> f64 {
        0.3
    }
    pub fn replications() -> usize {
        500
    }
    pub fn pair_k() -> f64 {
        1.2
    }
    pub fn designs() -> Vec<String> {
        vec!["PSM".into(), "CEM-Auto".into(), "CEM-G3".into()]
    }
    pub fn estimators() -> Vec<String> {
        vec!["M(W)".into(), "M(W,X)".into()]
    }
    pub fn cem_mode() -> String {
        "weights".into()
    }
    pub fn cem_totals() -> String {
        "retained".into()
    }
    pub fn caliper() -> f64 {
        0.2
    }
    pub fn propensity_model() -> String {
        "correct".into()
    }
    pub fn oracle_draws() -> usize {
        1_000_000
    }
    pub fn yes() -> bool {
        true
    }
    pub fn prop1_subset_count() -> usize {
        8
    }
    pub fn prop1_caliper() -> f64 {
        0.05
    }
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Applies full-scale replication, pair and oracle settings.
    pub fn into_full_scale(mut self) -> Self {
        self.replications = FULL_REPLICATIONS;
        if self.coefficient_pairs > 0 {
            self.coefficient_pairs = FULL_PAIRS;
        }
        self.oracle_draws = FULL_ORACLE_DRAWS;
        self
    }

    fn check(&self) -> Result<()> {
        self.designs()?;
        self.estimators()?;
        self.cem_options()?;
        self.propensity_terms()?;
        if self.coefficient_pairs == 0 && (self.alpha1.is_none() || self.beta2.is_none()) {
            return Err(HarnessError::Config(
                "alpha1 and beta2 are required when coefficient_pairs = 0".into(),
            ));
        }
        if self.replications < 2 {
            return Err(HarnessError::Config("replications must be at least 2".into()));
        }
        if self.sample_sizes.as_ref().is_some_and(|s| s.is_empty()) {
            return Err(HarnessError::Config("sample_sizes must not be empty".into()));
        }
        if !(self.caliper_multiplier > 0.0) || !(self.prop1_caliper > 0.0) {
            return Err(HarnessError::Config("caliper multipliers must be positive".into()));
        }
        for config in self.base_scenarios()? {
            config.validate()?;
        }
        Ok(())
    }

    pub fn designs(&self) -> Result<Vec<Design>> {
        self.designs.iter().map(|d| d.parse()).collect()
    }

    pub fn estimators(&self) -> Result<Vec<Estimator>> {
        self.estimators.iter().map(|e| e.parse()).collect()
    }

    pub fn cem_options(&self) -> Result<CemOptions> {
        let mode = match self.cem_mode.as_str() {
            "weights" => CemMode::Weights,
            "one_to_one" => CemMode::OneToOne,
            other => return Err(HarnessError::Config(format!("unknown cem_mode {other:?}"))),
        };
        let totals = match self.cem_totals.as_str() {
            "retained" => WeightTotals::Retained,
            "source" => WeightTotals::Source,
            other => return Err(HarnessError::Config(format!("unknown cem_totals {other:?}"))),
        };
        Ok(CemOptions { mode, totals })
    }

    /// Terms of the fitted propensity model.
    pub fn propensity_terms(&self) -> Result<Vec<Term>> {
        match self.propensity_model.as_str() {
            "correct" if self.nonlinear_treatment => Ok(quadratic_adjacent_terms(self.p)),
            "correct" | "linear" => Ok(linear_terms(self.p)),
            other => Err(HarnessError::Config(format!("unknown propensity_model {other:?}"))),
        }
    }

    pub fn sample_sizes(&self) -> Vec<usize> {
        self.sample_sizes.clone().unwrap_or_else(|| vec![self.n])
    }

    /// Coefficient pairs of the run, or `None` when the vectors are fixed.
    pub fn pairs(&self) -> Result<Option<Vec<CoefficientPair>>> {
        if self.coefficient_pairs == 0 {
            return Ok(None);
        }
        Ok(Some(generate_coefficient_pairs(
            self.p,
            self.coefficient_pairs,
            self.pair_k,
            self.seed,
        )?))
    }

    /// One scenario per coefficient pair (or the single fixed scenario), at
    /// the first sample size.
    pub fn base_scenarios(&self) -> Result<Vec<ScenarioConfig>> {
        let template = |alpha1: Vec<f64>, beta2: Vec<f64>| ScenarioConfig {
            p: self.p,
            n: self.n,
            alpha0: self.alpha0,
            alpha1,
            beta0: self.beta0,
            beta1: self.beta1,
            beta2,
            theta: self.theta.clone(),
            interaction_subset: self.interaction_subset.clone(),
            covariate_scale: self.covariate_scale,
            nonlinear_treatment: self.nonlinear_treatment,
            nonlinear_outcome: self.nonlinear_outcome,
            quadratic_coef: self.quadratic_coef,
            interaction_coef: self.interaction_coef,
            error_sd: self.error_sd,
            replications: self.replications,
            seed: self.seed,
        };
        Ok(match self.pairs()? {
            None => vec![template(
                self.alpha1.clone().unwrap_or_default(),
                self.beta2.clone().unwrap_or_default(),
            )],
            Some(pairs) => pairs
                .into_iter()
                .enumerate()
                .map(|(k, pair)| {
                    let mut c = template(pair.alpha1, pair.beta2);
                    c.seed = pair_seed(self.seed, k);
                    c
                })
                .collect(),
        })
    }
}

/// Seed of the `k`-th coefficient pair's scenario.
pub fn pair_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
p = 2
n = 200
alpha1 = [1.0, 0.0]
beta2 = [0.0, 1.2]
seed = 7
"#;

    #[test]
    fn defaults_fill_in() {
        let c = HarnessConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.alpha0, -0.9);
        assert_eq!(c.replications, 500);
        assert_eq!(c.designs().unwrap().len(), 3);
        assert_eq!(c.sample_sizes(), vec![200]);
        assert_eq!(c.base_scenarios().unwrap().len(), 1);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = HarnessConfig::from_toml(MINIMAL).unwrap();
        let b = HarnessConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let c = HarnessConfig::from_toml(&MINIMAL.replace("seed = 7", "seed = 8")).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(HarnessConfig::from_toml(&a.to_toml()).unwrap(), a);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(HarnessConfig::from_toml("p = 2\nn = 100\nseed = 1\n").is_err());
        assert!(HarnessConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(HarnessConfig::from_toml(&format!("{MINIMAL}designs = [\"XYZ\"]\n")).is_err());
        assert!(HarnessConfig::from_toml(&MINIMAL.replace("n = 200", "n = 5")).is_err());
        assert!(HarnessConfig::from_toml(&format!("{MINIMAL}cem_mode = \"nope\"\n")).is_err());
    }

    #[test]
    fn pairs_replace_fixed_vectors() {
        let c = HarnessConfig::from_toml("p = 5\nn = 100\nseed = 3\ncoefficient_pairs = 4\n").unwrap();
        let scenarios = c.base_scenarios().unwrap();
        assert_eq!(scenarios.len(), 4);
        assert_ne!(scenarios[0].seed, scenarios[1].seed);
        let full = c.into_full_scale();
        assert_eq!((full.replications, full.coefficient_pairs), (FULL_REPLICATIONS, FULL_PAIRS));
    }
}
