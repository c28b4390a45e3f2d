//! Propensity-score estimation and greedy caliper matching on the logit scale.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matching::{DesignLabel, MatchResult};
use crate::numerics::{fit_logistic, FitResult, LogisticOptions};
use crate::scalar::{expit, sample_variance, Real};
use crate::terms::{build_design, Term};

/// Default caliper multiplier applied to the SD of the logit scores.
pub const DEFAULT_CALIPER_MULTIPLIER: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct PropensityResult<T> {
    pub scores: Vec<T>,
    pub logits: Vec<T>,
    pub model: FitResult<T>,
    pub terms: Vec<Term>,
}

/// Fits `logit P(W = 1 | X) = a0 + terms(X) . a` by maximum likelihood.
pub fn estimate_propensity<T: Real>(data: &Dataset<T>, terms: &[Term]) -> Result<PropensityResult<T>> {
    estimate_propensity_with(data, terms, &LogisticOptions::default())
}

pub fn estimate_propensity_with<T: Real>(
    data: &Dataset<T>,
    terms: &[Term],
    options: &LogisticOptions<T>,
) -> Result<PropensityResult<T>> {
    if let Some(t) = terms.iter().find(|t| t.involves_treatment() || t.max_covariate() >= data.p()) {
        return Err(Error::InvalidArgument(format!("term {t} cannot enter a propensity model")));
    }
    let rows: Vec<usize> = (0..data.n()).collect();
    let design = build_design(data.x(), &rows, None, terms);
    let model = fit_logistic(&design, data.w(), options)?;
    let logits = design.matrix().mul_vec(&model.coefficients);
    let scores = logits.iter().map(|&l| expit(l)).collect();
    Ok(PropensityResult {
        scores,
        logits,
        model,
        terms: terms.to_vec(),
    })
}

/// `multiplier` times the sample SD of `logits`.
pub fn caliper_width<T: Real>(logits: &[T], multiplier: T) -> Result<T> {
    if !(multiplier > T::zero()) || !multiplier.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "caliper multiplier must be positive, got {multiplier}"
        )));
    }
    if logits.len() < 2 {
        return Err(Error::TooFewUnits {
            needed: 2,
            got: logits.len(),
        });
    }
    Ok(multiplier * sample_variance(logits).sqrt())
}

/// Order in which treated units pick their controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchOrder {
    /// Highest logit first, ties by ascending index.
    #[default]
    DescendingLogit,
    /// Uniformly shuffled order from the given seed.
    Random(u64),
}

/// Greedy 1:1 nearest-neighbor matching without replacement. Each treated
/// unit takes the closest unused control on the logit scale if it lies
/// within `caliper`; equidistant controls resolve to the lower index.
pub fn psm_match<T: Real>(logits: &[T], w: &[bool], caliper: T, order: MatchOrder) -> Result<MatchResult<T>> {
    if logits.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logits for {} units",
            logits.len(),
            w.len()
        )));
    }
    if !(caliper >= T::zero()) {
        return Err(Error::InvalidArgument("caliper must be nonnegative".into()));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }

    let mut treated: Vec<usize> = (0..w.len()).filter(|&i| w[i]).collect();
    match order {
        MatchOrder::DescendingLogit => {
            treated.sort_by(|&a, &b| logits[b].partial_cmp(&logits[a]).unwrap().then(a.cmp(&b)));
        }
        MatchOrder::Random(seed) => treated.shuffle(&mut ChaCha8Rng::seed_from_u64(seed)),
    }

    let mut controls: Vec<(T, usize)> = (0..w.len()).filter(|&i| !w[i]).map(|i| (logits[i], i)).collect();
    controls.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut open: BTreeSet<usize> = (0..controls.len()).collect();

    let mut pairs = Vec::new();
    let mut weights = vec![T::zero(); w.len()];
    for t in treated {
        let target = logits[t];
        let upper = controls.partition_point(|c| c.0 <= target);
        // Nearest open control at or below the target, lowest index among equal logits.
        let below = open.range(..upper).next_back().map(|&pos| {
            let value = controls[pos].0;
            let first = controls.partition_point(|c| c.0 < value);
            *open.range(first..).next().expect("pos itself is open")
        });
        let above = open.range(upper..).next().copied();
        let pick = match (below, above) {
            (None, None) => break,
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (Some(b), Some(a)) => {
                let db = target - controls[b].0;
                let da = controls[a].0 - target;
                if db < da || (db == da && controls[b].1 < controls[a].1) {
                    b
                } else {
                    a
                }
            }
        };
        if (controls[pick].0 - target).abs() <= caliper {
            open.remove(&pick);
            let c = controls[pick].1;
            pairs.push((t, c));
            weights[t] = T::one();
            weights[c] = T::one();
        }
    }
    Ok(MatchResult::from_weights(DesignLabel::Psm, w, pairs, None, weights))
}

/// Estimates scores with `terms` and matches with the default caliper rule.
pub fn psm<T: Real>(data: &Dataset<T>, terms: &[Term], caliper_multiplier: T) -> Result<MatchResult<T>> {
    let ps = estimate_propensity(data, terms)?;
    let caliper = caliper_width(&ps.logits, caliper_multiplier)?;
    psm_match(&ps.logits, data.w(), caliper, MatchOrder::DescendingLogit)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn identical_logits_pair_everyone() {
        let m = psm_match(&[0.1, 0.1, 0.1, 0.1], &[true, true, false, false], 0.0, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(0, 2), (1, 3)]);
        assert_eq!(m.matched_treated, 2);
    }

    #[test]
    fn nearest_within_caliper() {
        let m = psm_match(&[0.0, 0.25, 0.31], &[true, false, false], 0.30, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        assert_eq!(m.weights, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn caliper_excludes_distant_control() {
        let m = psm_match(&[0.0, 0.5], &[true, false], 0.3, MatchOrder::default()).unwrap();
        assert!(m.pairs.is_empty());
        assert_eq!(m.weights, vec![0.0, 0.0]);
    }

    #[test]
    fn distance_ties_prefer_lower_control_index() {
        let m = psm_match(&[0.0, 0.5, -0.5], &[true, false, false], 1.0, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
        let m = psm_match(&[0.0, 0.5, 0.5, -0.4], &[true, false, false, false], 1.0, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(0, 3)]);
        let m = psm_match(&[0.0, -0.5, 0.5, -0.5], &[true, false, false, false], 1.0, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(0, 1)]);
    }

    #[test]
    fn highest_logit_treated_goes_first() {
        // Treated 1 (logit 1.0) claims the control at 0.9 before treated 0 can.
        let m = psm_match(&[0.8, 1.0, 0.9], &[true, true, false], 0.5, MatchOrder::default()).unwrap();
        assert_eq!(m.pairs, vec![(1, 2)]);
    }

    #[test]
    fn caliper_width_examples() {
        assert_eq!(caliper_width(&[0.4, 0.4, 0.4], 0.2).unwrap(), 0.0);
        // Two points 1.5 * sqrt(2) apart have SD 1.5.
        let l = [0.0, 1.5 * 2f64.sqrt()];
        assert!((caliper_width(&l, 0.2).unwrap() - 0.3).abs() < 1e-12);
        assert!(caliper_width(&l, 0.0).is_err());
        assert_eq!(caliper_width(&[1.0], 0.2), Err(Error::TooFewUnits { needed: 2, got: 1 }));
    }

    #[test]
    fn intercept_only_scores_equal_prevalence() {
        let x = Matrix::from_fn(10, 1, |i, _| i as f64);
        let w: Vec<bool> = (0..10).map(|i| i % 3 == 0).collect();
        let data = Dataset::new(x, w, vec![0.0; 10]).unwrap();
        let ps = estimate_propensity(&data, &[]).unwrap();
        for s in ps.scores {
            assert!((s - 0.4).abs() < 1e-8);
        }
    }
}
