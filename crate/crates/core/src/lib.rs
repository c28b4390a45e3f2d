//! Matching engine for causal-effect simulation studies.
//!
//! Provides propensity-score matching (logit-scale greedy nearest neighbor
//! with a caliper), coarsened exact matching (weights or within-stratum 1:1),
//! the imbalance metrics I1 to I5, post-matching effect estimators, and the
//! data generators used to evaluate them by Monte Carlo.
//!
//! All kernels are generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! at the crate root name the double-precision instantiations used by the
//! simulation harness.

pub mod balance;
pub mod cem;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod matching;
pub mod numerics;
pub mod psm;
pub mod scalar;
pub mod terms;

pub use balance::{BalanceOptions, BalanceReport, CovarianceSource, CrossReplicationBalance};
pub use cem::{CemMode, CemOptions, CoarsenedData, CoarseningRule, CoarseningSpec, WeightTotals};
pub use datagen::{CoefficientPair, Dataset, OracleEstimate, ScenarioConfig};
pub use error::{Error, Result};
pub use estimators::{AggregateMetrics, EfficiencyInputs, EstimateRecord, ModelLabel, ModelSpec, X1MeanSource};
pub use linalg::Matrix;
pub use matching::{DesignLabel, MatchResult, Role, Stratum};
pub use numerics::{DesignMatrix, FitResult, LogisticOptions};
pub use psm::{MatchOrder, PropensityResult};
pub use scalar::Real;
pub use terms::Term;

pub type Matrix64 = Matrix<f64>;
pub type Dataset64 = Dataset<f64>;
pub type MatchResult64 = MatchResult<f64>;
pub type BalanceReport64 = BalanceReport<f64>;
pub type EstimateRecord64 = EstimateRecord<f64>;
pub type AggregateMetrics64 = AggregateMetrics<f64>;
pub type CoarseningSpec64 = CoarseningSpec<f64>;

pub type Matrix32 = Matrix<f32>;
pub type Dataset32 = Dataset<f32>;
pub type MatchResult32 = MatchResult<f32>;
