//! Covariate balance: standardized mean differences and the imbalance
//! metrics I1 (paired Mahalanobis), I2 (between-group Mahalanobis), I3 (sum of
//! absolute mean differences), I4 (multivariate histogram L1 distance) and
//! I5 (signed SMDs averaged across replications).

use std::collections::HashMap;

use crate::cem::{coarsen, CoarseningSpec};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::matching::MatchResult;
use crate::numerics::{sample_covariance, weighted_covariance};
use crate::scalar::{mean, sample_variance, Real};

/// Signed SMD with the pooled denominator `sqrt((s1^2 + s0^2) / 2)`.
///
/// Two constant groups give 0 when their means agree and
/// [`Error::ZeroVariance`] otherwise.
pub fn smd<T: Real>(treated: &[T], control: &[T]) -> Result<T> {
    for g in [treated, control] {
        if g.len() < 2 {
            return Err(Error::TooFewUnits { needed: 2, got: g.len() });
        }
    }
    let diff = mean(treated) - mean(control);
    let pooled = (sample_variance(treated) + sample_variance(control)) / T::lit(2.0);
    ratio(diff, pooled)
}

fn ratio<T: Real>(diff: T, pooled_var: T) -> Result<T> {
    if pooled_var > T::zero() {
        Ok(diff / pooled_var.sqrt())
    } else if diff == T::zero() {
        Ok(T::zero())
    } else {
        Err(Error::ZeroVariance)
    }
}

/// Weighted mean and reliability-weighted variance of one group.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMoments<T> {
    pub mean: T,
    pub variance: T,
    pub count: usize,
}

/// Per-covariate moments of units in one treatment group with positive weight.
pub fn group_moments<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T], treated: bool) -> Vec<GroupMoments<T>> {
    let members: Vec<usize> = (0..x.rows())
        .filter(|&i| w[i] == treated && weights[i] > T::zero())
        .collect();
    let total: T = members.iter().map(|&i| weights[i]).sum();
    let sum_sq_norm: T = members.iter().map(|&i| (weights[i] / total) * (weights[i] / total)).sum();
    (0..x.cols())
        .map(|j| {
            if members.is_empty() {
                return GroupMoments {
                    mean: T::nan(),
                    variance: T::nan(),
                    count: 0,
                };
            }
            let m: T = members.iter().map(|&i| weights[i] / total * x[(i, j)]).sum();
            let ss: T = members
                .iter()
                .map(|&i| {
                    let d = x[(i, j)] - m;
                    weights[i] / total * d * d
                })
                .sum();
            let denom = T::one() - sum_sq_norm;
            let variance = if denom > T::zero() { ss / denom } else { T::nan() };
            GroupMoments {
                mean: m,
                variance,
                count: members.len(),
            }
        })
        .collect()
}

/// Per-covariate weighted SMDs; unit weights reproduce [`smd`].
pub fn weighted_smd<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T]) -> Result<Vec<T>> {
    let t = group_moments(x, w, weights, true);
    let c = group_moments(x, w, weights, false);
    t.iter()
        .zip(&c)
        .map(|(a, b)| {
            let fewest = a.count.min(b.count);
            if fewest < 2 {
                return Err(Error::TooFewUnits { needed: 2, got: fewest });
            }
            ratio(a.mean - b.mean, (a.variance + b.variance) / T::lit(2.0))
        })
        .collect()
}

/// Mean over pairs of the Mahalanobis distance between pair members.
pub fn i1_average_pairwise_mahalanobis<T: Real>(x: &Matrix<T>, pairs: &[(usize, usize)], covariance: &Matrix<T>) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::EmptyMatch);
    }
    let chol = Cholesky::new(covariance)?;
    let mut diff = vec![T::zero(); x.cols()];
    let total: T = pairs
        .iter()
        .map(|&(t, c)| {
            for (d, (&a, &b)) in diff.iter_mut().zip(x.row(t).iter().zip(x.row(c))) {
                *d = a - b;
            }
            chol.inverse_quadratic_form(&diff).sqrt()
        })
        .sum();
    Ok(total / T::from_count(pairs.len()))
}

fn mean_difference<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T]) -> Result<Vec<T>> {
    let t = group_moments(x, w, weights, true);
    let c = group_moments(x, w, weights, false);
    if t.first().is_some_and(|g| g.count == 0) || c.first().is_some_and(|g| g.count == 0) {
        return Err(Error::EmptyMatch);
    }
    Ok(t.iter().zip(&c).map(|(a, b)| a.mean - b.mean).collect())
}

/// Mahalanobis distance between the weighted group mean vectors.
pub fn i2_between_group_mahalanobis<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T], covariance: &Matrix<T>) -> Result<T> {
    let diff = mean_difference(x, w, weights)?;
    Ok(Cholesky::new(covariance)?.inverse_quadratic_form(&diff).sqrt())
}

/// Sum over covariates of the absolute weighted mean difference.
pub fn i3_absolute_mean_difference<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T]) -> Result<T> {
    Ok(mean_difference(x, w, weights)?.iter().map(|d| d.abs()).sum())
}

/// L1 distance between the weighted relative-frequency histograms of the
/// two groups over the cells of `bins` (built on all rows of `x`).
pub fn i4_l1_histogram<T: Real>(x: &Matrix<T>, w: &[bool], weights: &[T], bins: &CoarseningSpec<T>) -> Result<T> {
    let coarsened = coarsen(x, bins)?;
    let mut cells: HashMap<&[u32], (T, T)> = HashMap::new();
    let (mut total_t, mut total_c) = (T::zero(), T::zero());
    for i in 0..x.rows() {
        let wt = weights[i];
        if wt > T::zero() {
            let cell = cells.entry(coarsened.stratum_key(i)).or_insert((T::zero(), T::zero()));
            if w[i] {
                cell.0 += wt;
                total_t += wt;
            } else {
                cell.1 += wt;
                total_c += wt;
            }
        }
    }
    if total_t == T::zero() || total_c == T::zero() {
        return Err(Error::EmptyMatch);
    }
    let mut values: Vec<T> = cells.values().map(|&(f, g)| (f / total_t - g / total_c).abs()).collect();
    // Summation order fixed for reproducibility.
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(values.into_iter().sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossReplicationBalance<T> {
    /// Signed per-covariate SMD averaged over replications.
    pub mean_smd_per_covariate: Vec<T>,
    pub i5: T,
    pub replication_count: usize,
}

/// I5 from a `K x J` table of per-replication SMDs.
pub fn i5_cross_replication<T: Real>(per_replication_smds: &[Vec<T>]) -> Result<CrossReplicationBalance<T>> {
    let k = per_replication_smds.len();
    if k == 0 {
        return Err(Error::TooFewRecords { needed: 1, got: 0 });
    }
    let j = per_replication_smds[0].len();
    if per_replication_smds.iter().any(|r| r.len() != j) {
        return Err(Error::DimensionMismatch("SMD rows differ in length".into()));
    }
    let kf = T::from_count(k);
    let mean_smd_per_covariate: Vec<T> = (0..j)
        .map(|c| per_replication_smds.iter().map(|r| r[c]).sum::<T>() / kf)
        .collect();
    let i5 = mean_smd_per_covariate.iter().map(|v| v.abs()).sum();
    Ok(CrossReplicationBalance {
        mean_smd_per_covariate,
        i5,
        replication_count: k,
    })
}

/// Sample used to estimate the covariance in I1 and I2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceSource {
    /// All units before matching.
    #[default]
    FullSample,
    /// Retained units, weighted by their match weights.
    Matched,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOptions<T> {
    pub covariance: CovarianceSource,
    /// Cells for I4; Sturges bins on every covariate when `None`.
    pub histogram: Option<CoarseningSpec<T>>,
    pub compute_i1: bool,
}

impl<T> Default for BalanceOptions<T> {
    fn default() -> Self {
        Self {
            covariance: CovarianceSource::FullSample,
            histogram: None,
            compute_i1: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport<T> {
    pub smd: Vec<T>,
    /// Absent when the design yields no treated-control pairing.
    pub i1: Option<T>,
    pub i2: T,
    pub i3: T,
    pub i4: T,
    pub histogram: CoarseningSpec<T>,
    pub covariance_used: Matrix<T>,
}

/// All single-sample metrics for `data` under the match weights.
///
/// I1 uses the match pairs; for weighted strata without pairs each retained
/// treated unit is paired with its Mahalanobis-nearest control in the same
/// stratum. Designs with neither pairs nor strata report no I1.
pub fn balance_report<T: Real>(data: &Dataset<T>, matched: &MatchResult<T>, options: &BalanceOptions<T>) -> Result<BalanceReport<T>> {
    if matched.n() != data.n() {
        return Err(Error::DimensionMismatch("match result does not align with dataset".into()));
    }
    let (x, w, weights) = (data.x(), data.w(), &matched.weights);
    let covariance = match options.covariance {
        CovarianceSource::FullSample => sample_covariance(x)?,
        CovarianceSource::Matched => {
            let rows = matched.retained();
            weighted_covariance(&x.select_rows(&rows), &rows.iter().map(|&i| weights[i]).collect::<Vec<_>>())?
        }
    };
    let smd = weighted_smd(x, w, weights)?;
    let i2 = i2_between_group_mahalanobis(x, w, weights, &covariance)?;
    let i3 = i3_absolute_mean_difference(x, w, weights)?;
    let histogram = options.histogram.clone().unwrap_or_else(|| CoarseningSpec::auto(data.p()));
    let i4 = i4_l1_histogram(x, w, weights, &histogram)?;
    let i1 = if !options.compute_i1 {
        None
    } else if !matched.pairs.is_empty() {
        Some(i1_average_pairwise_mahalanobis(x, &matched.pairs, &covariance)?)
    } else if let Some(strata) = &matched.strata {
        let pairs = nearest_in_strata(x, w, strata, &covariance)?;
        Some(i1_average_pairwise_mahalanobis(x, &pairs, &covariance)?)
    } else {
        None
    };
    Ok(BalanceReport {
        smd,
        i1,
        i2,
        i3,
        i4,
        histogram,
        covariance_used: covariance,
    })
}

fn nearest_in_strata<T: Real>(
    x: &Matrix<T>,
    w: &[bool],
    strata: &[crate::matching::Stratum],
    covariance: &Matrix<T>,
) -> Result<Vec<(usize, usize)>> {
    let chol = Cholesky::new(covariance)?;
    // Whitened rows turn the Mahalanobis distance into a Euclidean one.
    let z: Vec<Vec<T>> = (0..x.rows()).map(|i| chol.forward(x.row(i))).collect();
    let mut pairs = Vec::new();
    for s in strata.iter().filter(|s| s.is_retained()) {
        let controls: Vec<usize> = s.members.iter().copied().filter(|&i| !w[i]).collect();
        for &t in s.members.iter().filter(|&&i| w[i]) {
            let mut best = (T::infinity(), usize::MAX);
            for &c in &controls {
                let q: T = z[t].iter().zip(&z[c]).map(|(&a, &b)| (a - b) * (a - b)).sum();
                if q < best.0 {
                    best = (q, c);
                }
            }
            pairs.push((t, best.1));
        }
    }
    Ok(pairs)
}
