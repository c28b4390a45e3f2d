//! Coarsened exact matching: binning, stratification, stratum weights and
//! within-stratum 1:1 matching.

use std::collections::BTreeMap;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::matching::{DesignLabel, MatchResult, Stratum};
use crate::scalar::{sample_variance, Real};

/// `ceil(log2(n)) + 1`, computed exactly on integers.
pub fn sturges_bin_count(n: usize) -> usize {
    assert!(n >= 1, "Sturges rule needs n >= 1");
    let ceil_log2 = (usize::BITS - (n - 1).leading_zeros()) as usize;
    ceil_log2 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoarseningRule<T> {
    /// Equal-width bins, count from Sturges' rule on the pooled sample size.
    AutoSturges,
    /// `k` equal-width bins over the observed range.
    FixedK(usize),
    /// Half-open intervals split at strictly increasing cutpoints.
    Cutpoints(Vec<T>),
}

impl<T: Real> CoarseningRule<T> {
    fn validate(&self) -> Result<()> {
        match self {
            CoarseningRule::AutoSturges => Ok(()),
            CoarseningRule::FixedK(k) if *k >= 2 => Ok(()),
            CoarseningRule::FixedK(k) => Err(Error::InvalidArgument(format!("FixedK needs k >= 2, got {k}"))),
            CoarseningRule::Cutpoints(c) => {
                if c.iter().any(|v| !v.is_finite()) || c.windows(2).any(|w| !(w[0] < w[1])) {
                    Err(Error::InvalidArgument("cutpoints must be finite and strictly increasing".into()))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// One rule per covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseningSpec<T> {
    pub rules: Vec<CoarseningRule<T>>,
}

impl<T: Real> CoarseningSpec<T> {
    pub fn uniform(rule: CoarseningRule<T>, p: usize) -> Self {
        Self { rules: vec![rule; p] }
    }

    pub fn auto(p: usize) -> Self {
        Self::uniform(CoarseningRule::AutoSturges, p)
    }

    /// Three equal-width groups per covariate.
    pub fn g3(p: usize) -> Self {
        Self::uniform(CoarseningRule::FixedK(3), p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarsenedData<T> {
    bins: Vec<u32>,
    n: usize,
    p: usize,
    /// Per-variable edges: the full equal-width grid, or the cutpoints.
    pub bin_edges: Vec<Vec<T>>,
    /// Per-variable number of bins.
    pub bin_counts: Vec<usize>,
}

impl<T: Real> CoarsenedData<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Coarsened tuple of unit `i`, which is also its stratum key.
    pub fn stratum_key(&self, i: usize) -> &[u32] {
        &self.bins[i * self.p..(i + 1) * self.p]
    }

    pub fn bin(&self, i: usize, j: usize) -> u32 {
        self.bins[i * self.p + j]
    }

    /// Groups units by stratum key (ascending key order, members ascending).
    pub fn strata(&self, w: &[bool]) -> Vec<Stratum> {
        let mut groups: BTreeMap<&[u32], Vec<usize>> = BTreeMap::new();
        for i in 0..self.n {
            groups.entry(self.stratum_key(i)).or_default().push(i);
        }
        groups
            .into_iter()
            .map(|(key, members)| {
                let treated = members.iter().filter(|&&i| w[i]).count();
                Stratum {
                    key: key.to_vec(),
                    control: members.len() - treated,
                    treated,
                    members,
                }
            })
            .collect()
    }
}

/// Bins every column of `x` according to `spec`.
pub fn coarsen<T: Real>(x: &Matrix<T>, spec: &CoarseningSpec<T>) -> Result<CoarsenedData<T>> {
    let (n, p) = (x.rows(), x.cols());
    if spec.rules.len() != p {
        return Err(Error::DimensionMismatch(format!("{} rules for {p} covariates", spec.rules.len())));
    }
    if n == 0 {
        return Err(Error::TooFewUnits { needed: 1, got: 0 });
    }
    let mut bins = vec![0u32; n * p];
    let mut bin_edges = Vec::with_capacity(p);
    let mut bin_counts = Vec::with_capacity(p);
    for (j, rule) in spec.rules.iter().enumerate() {
        rule.validate()?;
        let column = x.column(j);
        let (edges, count, interior): (Vec<T>, usize, Vec<T>) = match rule {
            CoarseningRule::Cutpoints(c) => (c.clone(), c.len() + 1, c.clone()),
            CoarseningRule::AutoSturges | CoarseningRule::FixedK(_) => {
                let k = match rule {
                    CoarseningRule::FixedK(k) => *k,
                    _ => sturges_bin_count(n),
                };
                let lo = column.iter().copied().fold(T::infinity(), T::min);
                let hi = column.iter().copied().fold(T::neg_infinity(), T::max);
                if hi > lo {
                    let width = (hi - lo) / T::from_count(k);
                    let mut edges: Vec<T> = (0..k).map(|e| lo + width * T::from_count(e)).collect();
                    edges.push(hi);
                    let interior = edges[1..k].to_vec();
                    (edges, k, interior)
                } else {
                    (vec![lo, hi], 1, Vec::new())
                }
            }
        };
        for (i, &v) in column.iter().enumerate() {
            bins[i * p + j] = interior.partition_point(|&e| e <= v) as u32;
        }
        bin_edges.push(edges);
        bin_counts.push(count);
    }
    Ok(CoarsenedData {
        bins,
        n,
        p,
        bin_edges,
        bin_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CemMode {
    /// Keep every unit of a retained stratum and reweight the controls.
    #[default]
    Weights,
    /// Greedy 1:1 nearest neighbor inside each stratum.
    OneToOne,
}

/// Which totals enter the control weight `(m_C / m_T) (m_T^s / m_C^s)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightTotals {
    /// Units in retained strata.
    #[default]
    Retained,
    /// All units of the source sample.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CemOptions {
    pub mode: CemMode,
    pub totals: WeightTotals,
}

/// Exact matching on coarsened strata. Strata lacking either group are
/// pruned; fails with [`Error::EmptyMatch`] if every stratum is pruned.
pub fn cem_match<T: Real>(data: &Dataset<T>, coarsened: &CoarsenedData<T>, options: CemOptions) -> Result<MatchResult<T>> {
    if coarsened.n() != data.n() || coarsened.p() != data.p() {
        return Err(Error::DimensionMismatch("coarsened data does not align with dataset".into()));
    }
    let w = data.w();
    let strata = coarsened.strata(w);
    let retained: Vec<&Stratum> = strata.iter().filter(|s| s.is_retained()).collect();
    if retained.is_empty() {
        return Err(Error::EmptyMatch);
    }
    let mut weights = vec![T::zero(); data.n()];
    let mut pairs = Vec::new();
    let design = match options.mode {
        CemMode::Weights => {
            let (m_t, m_c) = match options.totals {
                WeightTotals::Retained => (
                    retained.iter().map(|s| s.treated).sum::<usize>(),
                    retained.iter().map(|s| s.control).sum::<usize>(),
                ),
                WeightTotals::Source => (data.treated_count(), data.control_count()),
            };
            let ratio = T::from_count(m_c) / T::from_count(m_t);
            for s in &retained {
                let control_weight = ratio * T::from_count(s.treated) / T::from_count(s.control);
                for &i in &s.members {
                    weights[i] = if w[i] { T::one() } else { control_weight };
                }
            }
            DesignLabel::CemWeights
        }
        CemMode::OneToOne => {
            let scale: Vec<T> = (0..data.p())
                .map(|j| {
                    let sd = sample_variance(&data.x().column(j)).sqrt();
                    if sd > T::zero() {
                        T::one() / sd
                    } else {
                        T::one()
                    }
                })
                .collect();
            for s in &retained {
                match_within_stratum(data, s, &scale, &mut pairs);
            }
            for &(t, c) in &pairs {
                weights[t] = T::one();
                weights[c] = T::one();
            }
            DesignLabel::CemOneToOne
        }
    };
    Ok(MatchResult::from_weights(design, w, pairs, Some(strata), weights))
}

/// Treated units in index order each take the nearest unused control
/// (standardized Euclidean distance, ties to the lower index).
fn match_within_stratum<T: Real>(data: &Dataset<T>, stratum: &Stratum, scale: &[T], pairs: &mut Vec<(usize, usize)>) {
    let w = data.w();
    let x = data.x();
    let mut controls: Vec<usize> = stratum.members.iter().copied().filter(|&i| !w[i]).collect();
    for &t in stratum.members.iter().filter(|&&i| w[i]) {
        if controls.is_empty() {
            break;
        }
        let xt = x.row(t);
        let mut best = 0;
        let mut best_d = T::infinity();
        for (k, &c) in controls.iter().enumerate() {
            let d: T = x
                .row(c)
                .iter()
                .zip(xt)
                .zip(scale)
                .map(|((&a, &b), &s)| {
                    let z = (a - b) * s;
                    z * z
                })
                .sum();
            // Controls are scanned in ascending index order, so strict `<` keeps the lower index on ties.
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        pairs.push((t, controls.remove(best)));
    }
}

/// Coarsens with `spec` and matches in one step.
pub fn cem<T: Real>(data: &Dataset<T>, spec: &CoarseningSpec<T>, options: CemOptions) -> Result<MatchResult<T>> {
    let coarsened = coarsen(data.x(), spec)?;
    cem_match(data, &coarsened, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumImbalance<T> {
    pub key: Vec<u32>,
    pub treated: usize,
    pub control: usize,
    /// Treated-minus-control covariate means.
    pub delta: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WithinBinImbalance<T> {
    pub strata: Vec<StratumImbalance<T>>,
    /// Stratum deltas averaged with weights proportional to treated counts.
    pub pooled: Vec<T>,
}

impl<T: Real> WithinBinImbalance<T> {
    pub fn pooled_norm(&self) -> T {
        self.pooled.iter().map(|&d| d * d).sum::<T>().sqrt()
    }
}

/// Residual covariate gap between groups inside each retained stratum.
pub fn within_bin_imbalance<T: Real>(data: &Dataset<T>, coarsened: &CoarsenedData<T>) -> Result<WithinBinImbalance<T>> {
    if coarsened.n() != data.n() {
        return Err(Error::DimensionMismatch("coarsened data does not align with dataset".into()));
    }
    let p = data.p();
    let w = data.w();
    let mut out = Vec::new();
    let mut pooled = vec![T::zero(); p];
    let mut total_treated = 0;
    for s in coarsened.strata(w).into_iter().filter(Stratum::is_retained) {
        let mut sum_t = vec![T::zero(); p];
        let mut sum_c = vec![T::zero(); p];
        for &i in &s.members {
            let target = if w[i] { &mut sum_t } else { &mut sum_c };
            for (acc, &v) in target.iter_mut().zip(data.x().row(i)) {
                *acc += v;
            }
        }
        let (nt, nc) = (T::from_count(s.treated), T::from_count(s.control));
        let delta: Vec<T> = sum_t.iter().zip(&sum_c).map(|(&a, &b)| a / nt - b / nc).collect();
        for (acc, &d) in pooled.iter_mut().zip(&delta) {
            *acc += d * nt;
        }
        total_treated += s.treated;
        out.push(StratumImbalance {
            key: s.key,
            treated: s.treated,
            control: s.control,
            delta,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptyMatch);
    }
    let total = T::from_count(total_treated);
    for v in pooled.iter_mut() {
        *v /= total;
    }
    Ok(WithinBinImbalance { strata: out, pooled })
}
