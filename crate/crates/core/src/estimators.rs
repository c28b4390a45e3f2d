//! Post-matching effect estimation, model-dependence diagnostics, the
//! PSM-versus-covariate-matching efficiency formula, and Monte-Carlo
//! aggregation of estimates.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cem::{cem, CemOptions, CoarseningSpec};
use crate::datagen::{generate_dataset, sine_distance, true_patt_oracle, Dataset, OracleEstimate, ScenarioConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::matching::MatchResult;
use crate::numerics::fit_wls;
use crate::psm::psm;
use crate::scalar::{mean, sample_variance, Real};
use crate::terms::{build_design, linear_terms, quadratic_adjacent_terms, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelLabel {
    /// Treatment indicator only.
    Unadjusted,
    /// Treatment plus linear terms of every covariate.
    Linear,
    /// Treatment, `W * X1`, `X1` and `X2`.
    Interaction,
    Custom(String),
}

impl fmt::Display for ModelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelLabel::Unadjusted => f.write_str("M(W)"),
            ModelLabel::Linear => f.write_str("M(W,X)"),
            ModelLabel::Interaction => f.write_str("M(W,W*X1,X1,X2)"),
            ModelLabel::Custom(name) => f.write_str(name),
        }
    }
}

/// Outcome model: intercept, treatment indicator, then `terms`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub label: ModelLabel,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    pub fn unadjusted() -> Self {
        Self {
            label: ModelLabel::Unadjusted,
            terms: Vec::new(),
        }
    }

    pub fn linear(p: usize) -> Self {
        Self {
            label: ModelLabel::Linear,
            terms: linear_terms(p),
        }
    }

    pub fn interaction() -> Self {
        Self {
            label: ModelLabel::Interaction,
            terms: vec![Term::TreatmentBy(0), Term::Linear(0), Term::Linear(1)],
        }
    }

    pub fn custom(name: impl Into<String>, terms: Vec<Term>) -> Self {
        Self {
            label: ModelLabel::Custom(name.into()),
            terms,
        }
    }

    /// `M(W, X_subset)` with linear terms of the listed covariates.
    pub fn subset(subset: &[usize]) -> Self {
        if subset.is_empty() {
            return Self::unadjusted();
        }
        let names: Vec<String> = subset.iter().map(|j| format!("X{}", j + 1)).collect();
        Self::custom(format!("M(W,{})", names.join(",")), subset.iter().map(|&j| Term::Linear(j)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord<T> {
    pub estimator: String,
    pub design: String,
    /// Coefficient of the treatment indicator.
    pub point_estimate: T,
    pub beta1_hat: T,
    /// Treatment-interaction coefficients, keyed by covariate index.
    pub theta_hat: Vec<(usize, T)>,
    pub replication_index: usize,
}

/// Weighted least squares of `y` on the model over the retained units.
pub fn estimate<T: Real>(
    matched: &MatchResult<T>,
    data: &Dataset<T>,
    model: &ModelSpec,
    replication_index: usize,
) -> Result<EstimateRecord<T>> {
    if matched.n() != data.n() {
        return Err(Error::DimensionMismatch("match result does not align with dataset".into()));
    }
    if matched.is_empty() {
        return Err(Error::EmptyMatch);
    }
    if let Some(t) = model.terms.iter().find(|t| t.max_covariate() >= data.p()) {
        return Err(Error::InvalidArgument(format!("term {t} references a missing covariate")));
    }
    let rows = matched.retained();
    let design = build_design(data.x(), &rows, Some(data.w()), &model.terms);
    let y: Vec<T> = rows.iter().map(|&i| data.y()[i]).collect();
    let weights: Vec<T> = rows.iter().map(|&i| matched.weights[i]).collect();
    let fit = fit_wls(&design, &y, &weights)?;
    let theta_hat = model
        .terms
        .iter()
        .enumerate()
        .filter_map(|(k, t)| match *t {
            Term::TreatmentBy(j) => Some((j, fit.coefficients[2 + k])),
            _ => None,
        })
        .collect();
    Ok(EstimateRecord {
        estimator: model.label.to_string(),
        design: matched.design.to_string(),
        point_estimate: fit.coefficients[1],
        beta1_hat: fit.coefficients[1],
        theta_hat,
        replication_index,
    })
}

/// Treated units whose covariate means enter the interaction-model PATT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum X1MeanSource {
    /// Treated units retained by the match.
    MatchedTreated,
    /// Every treated unit of the source sample.
    AllTreated,
}

/// `beta1_hat + theta_hat . mean(X_sub | treated)` with the mean taken over
/// the chosen treated units.
pub fn patt_from_interaction<T: Real>(
    record: &EstimateRecord<T>,
    source: X1MeanSource,
    data: &Dataset<T>,
    matched: &MatchResult<T>,
) -> Result<T> {
    let treated: Vec<usize> = match source {
        X1MeanSource::MatchedTreated => (0..data.n())
            .filter(|&i| data.w()[i] && matched.weights[i] > T::zero())
            .collect(),
        X1MeanSource::AllTreated => data.treated_indices(),
    };
    if treated.is_empty() {
        return Err(Error::NoTreatedUnits);
    }
    let mut tau = record.beta1_hat;
    for &(j, theta) in &record.theta_hat {
        let xs: Vec<T> = treated.iter().map(|&i| data.x()[(i, j)]).collect();
        tau += theta * mean(&xs);
    }
    Ok(tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CherryPick<T> {
    /// Sample variance of the estimates across models.
    pub variance: T,
    pub max_estimate: T,
}

pub fn cherry_pick_diagnostic<T: Real>(estimates: &[T]) -> Result<CherryPick<T>> {
    if estimates.len() < 2 {
        return Err(Error::TooFewModels {
            needed: 2,
            got: estimates.len(),
        });
    }
    Ok(CherryPick {
        variance: sample_variance(estimates),
        max_estimate: estimates.iter().copied().fold(T::neg_infinity(), T::max),
    })
}

/// Number of specifications produced by [`enumerate_models`].
pub const MODEL_ENUMERATION_LIMIT: usize = 512;

/// Candidate terms for the model sweep: per covariate linear, square and
/// cube; every pairwise product; every treatment interaction.
pub fn model_term_pool(p: usize) -> Vec<Term> {
    let mut pool = Vec::new();
    pool.extend((0..p).map(Term::Linear));
    pool.extend((0..p).map(Term::Square));
    pool.extend((0..p).map(Term::Cube));
    for a in 0..p {
        pool.extend((a + 1..p).map(|b| Term::Product(a, b)));
    }
    pool.extend((0..p).map(Term::TreatmentBy));
    pool
}

/// Every subset of [`model_term_pool`], ordered by bitmask (bit `k` selects
/// pool term `k`), truncated to [`MODEL_ENUMERATION_LIMIT`] models. Two
/// covariates give a 9-term pool and exactly 512 models.
pub fn enumerate_models(p: usize) -> Vec<ModelSpec> {
    let pool = model_term_pool(p);
    let available = if pool.len() >= 63 { u64::MAX } else { (1u64 << pool.len()) - 1 };
    let count = available.min(MODEL_ENUMERATION_LIMIT as u64 - 1) + 1;
    (0..count)
        .map(|mask| {
            let terms: Vec<Term> = pool
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &t)| t)
                .collect();
            let name = if terms.is_empty() {
                "M(W)".to_string()
            } else {
                let names: Vec<String> = terms.iter().map(Term::to_string).collect();
                format!("M(W,{})", names.join(","))
            };
            ModelSpec::custom(name, terms)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyInputs<T> {
    pub sigma_eps2: T,
    pub beta2: Vec<T>,
    pub alpha1: Vec<T>,
    /// Covariance of X among PSM-matched units.
    pub covariance_matched: Matrix<T>,
    pub n_psm_pairs: usize,
    pub m_cov_pairs: usize,
}

/// Efficiency of the PSM mean difference relative to exact covariate
/// matching, `s_eps^2 / (s_nu^2 + s_eps^2) * n / m` with
/// `s_nu^2 = sin^2(angle(alpha1, beta2)) beta2' S beta2`. Values below 1
/// favour covariate matching.
pub fn relative_efficiency<T: Real>(inputs: &EfficiencyInputs<T>) -> Result<T> {
    if inputs.m_cov_pairs == 0 {
        return Err(Error::InvalidArgument("m_cov_pairs must be at least 1".into()));
    }
    if !(inputs.sigma_eps2 > T::zero()) {
        return Err(Error::InvalidArgument("sigma_eps2 must be positive".into()));
    }
    let p = inputs.beta2.len();
    let s = &inputs.covariance_matched;
    if s.rows() != p || s.cols() != p {
        return Err(Error::DimensionMismatch(format!("covariance is {}x{}, beta2 has {p}", s.rows(), s.cols())));
    }
    let sin = sine_distance(&inputs.alpha1, &inputs.beta2)?;
    let sb = s.mul_vec(&inputs.beta2);
    let quad: T = inputs.beta2.iter().zip(&sb).map(|(&a, &b)| a * b).sum();
    let sigma_nu2 = sin * sin * quad;
    Ok(inputs.sigma_eps2 / (sigma_nu2 + inputs.sigma_eps2) * T::from_count(inputs.n_psm_pairs)
        / T::from_count(inputs.m_cov_pairs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics<T> {
    pub mean_estimate: T,
    pub bias: T,
    /// Sample SD across replications (denominator `K - 1`).
    pub sd: T,
    /// `bias^2 + sd^2`.
    pub mse: T,
    pub rmse: T,
    /// Mean squared error around the truth, `bias^2 + sd^2 (K - 1) / K`.
    pub empirical_mse: T,
    pub true_value: T,
    pub replication_count: usize,
    pub failure_count: usize,
}

impl<T: Real> AggregateMetrics<T> {
    /// Monte-Carlo standard error of the mean estimate.
    pub fn standard_error(&self) -> T {
        self.sd / T::from_count(self.replication_count).sqrt()
    }

    pub fn variance(&self) -> T {
        self.sd * self.sd
    }
}

/// Summarizes per-replication estimates; `None` entries are failures and
/// are counted, not imputed.
pub fn aggregate<T: Real>(estimates: &[Option<T>], true_value: T) -> Result<AggregateMetrics<T>> {
    let ok: Vec<T> = estimates.iter().flatten().copied().collect();
    if ok.len() < 2 {
        return Err(Error::TooFewRecords { needed: 2, got: ok.len() });
    }
    let k = T::from_count(ok.len());
    let mean_estimate = mean(&ok);
    let bias = mean_estimate - true_value;
    let var = sample_variance(&ok);
    let mse = bias * bias + var;
    Ok(AggregateMetrics {
        mean_estimate,
        bias,
        sd: var.sqrt(),
        mse,
        rmse: mse.sqrt(),
        empirical_mse: bias * bias + var * (k - T::one()) / k,
        true_value,
        replication_count: ok.len(),
        failure_count: estimates.len() - ok.len(),
    })
}

/// Matching design used when checking consistency of misspecified models.
#[derive(Debug, Clone, PartialEq)]
pub enum Prop1Design<T> {
    /// PSM on the correctly specified propensity model.
    Psm { caliper_multiplier: T },
    Cem { spec: CoarseningSpec<T>, options: CemOptions },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Settings<T> {
    pub n: usize,
    pub replications: usize,
    pub design: Prop1Design<T>,
    pub oracle_draws: usize,
}

impl<T: Real> Prop1Settings<T> {
    /// Tight-caliper PSM standing in for exact score matching.
    pub fn tight_psm(n: usize, replications: usize) -> Self {
        Self {
            n,
            replications,
            design: Prop1Design::Psm {
                caliper_multiplier: T::lit(0.05),
            },
            oracle_draws: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetResult<T> {
    pub subset: Vec<usize>,
    pub metrics: AggregateMetrics<T>,
    /// Standard error of the bias, combining replication and oracle noise.
    pub bias_se: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prop1Report<T> {
    pub truth: OracleEstimate,
    pub subsets: Vec<SubsetResult<T>>,
    pub mean_pairs: f64,
}

/// Fits `M(W, X_subset)` on matched samples for each covariate subset and
/// aggregates the treatment coefficient against the true PATT.
pub fn verify_proposition1<T: Real>(
    config: &ScenarioConfig,
    subsets: &[Vec<usize>],
    settings: &Prop1Settings<T>,
) -> Result<Prop1Report<T>> {
    let mut config = config.clone();
    config.n = settings.n;
    config.validate()?;
    let truth = true_patt_oracle(&config, settings.oracle_draws)?;
    let ps_terms = if config.nonlinear_treatment {
        quadratic_adjacent_terms(config.p)
    } else {
        linear_terms(config.p)
    };
    let models: Vec<ModelSpec> = subsets.iter().map(|s| ModelSpec::subset(s)).collect();
    let per_rep: Vec<(Vec<Option<T>>, usize)> = (0..settings.replications)
        .into_par_iter()
        .map(|r| {
            let matched = generate_dataset::<T>(&config, r).and_then(|data| {
                let m = match &settings.design {
                    Prop1Design::Psm { caliper_multiplier } => psm(&data, &ps_terms, *caliper_multiplier)?,
                    Prop1Design::Cem { spec, options } => cem(&data, spec, *options)?,
                };
                Ok((data, m))
            });
            match matched {
                Ok((data, m)) => (
                    models
                        .iter()
                        .map(|model| estimate(&m, &data, model, r).ok().map(|e| e.point_estimate))
                        .collect(),
                    m.matched_treated,
                ),
                Err(_) => (vec![None; models.len()], 0),
            }
        })
        .collect();
    let truth_t = T::lit(truth.value);
    let oracle_se = T::lit(truth.standard_error);
    let mut out = Vec::with_capacity(subsets.len());
    for (k, subset) in subsets.iter().enumerate() {
        let column: Vec<Option<T>> = per_rep.iter().map(|(e, _)| e[k]).collect();
        let metrics = aggregate(&column, truth_t)?;
        let se = metrics.standard_error();
        out.push(SubsetResult {
            subset: subset.clone(),
            metrics,
            bias_se: (se * se + oracle_se * oracle_se).sqrt(),
        });
    }
    let mean_pairs = per_rep.iter().map(|(_, m)| *m as f64).sum::<f64>() / settings.replications.max(1) as f64;
    Ok(Prop1Report {
        truth,
        subsets: out,
        mean_pairs,
    })
}

/// Covariance of X over the units of a match, for [`EfficiencyInputs`].
pub fn matched_covariance<T: Real>(data: &Dataset<T>, matched: &MatchResult<T>) -> Result<Matrix<T>> {
    let rows = matched.retained();
    crate::numerics::sample_covariance(&data.x().select_rows(&rows))
}
