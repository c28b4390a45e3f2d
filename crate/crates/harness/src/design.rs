//! Named matching designs and effect estimators used by the harness.

use std::fmt;
use std::str::FromStr;

use matchsim_core::cem::{cem, CemOptions, CoarseningRule, CoarseningSpec};
use matchsim_core::estimators::{estimate, patt_from_interaction, ModelSpec, X1MeanSource};
use matchsim_core::psm::psm;
use matchsim_core::terms::Term;
use matchsim_core::{Dataset, MatchResult, Real};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Design {
    Psm,
    CemAuto,
    /// CEM with `k` equal-width bins per covariate; `k = 3` is "G3".
    CemFixed(usize),
    Unmatched,
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Design::Psm => f.write_str("PSM"),
            Design::CemAuto => f.write_str("CEM-Auto"),
            Design::CemFixed(3) => f.write_str("CEM-G3"),
            Design::CemFixed(k) => write!(f, "CEM-K{k}"),
            Design::Unmatched => f.write_str("Unmatched"),
        }
    }
}

impl FromStr for Design {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PSM" => Ok(Design::Psm),
            "CEM-Auto" => Ok(Design::CemAuto),
            "CEM-G3" => Ok(Design::CemFixed(3)),
            "Unmatched" => Ok(Design::Unmatched),
            other => other
                .strip_prefix("CEM-K")
                .and_then(|k| k.parse().ok())
                .filter(|&k| k >= 2)
                .map(Design::CemFixed)
                .ok_or_else(|| HarnessError::Config(format!("unknown design {other:?}"))),
        }
    }
}

impl Design {
    pub fn coarsening<T: Real>(&self, p: usize) -> Option<CoarseningSpec<T>> {
        match *self {
            Design::CemAuto => Some(CoarseningSpec::auto(p)),
            Design::CemFixed(k) => Some(CoarseningSpec::uniform(CoarseningRule::FixedK(k), p)),
            _ => None,
        }
    }

    pub fn run<T: Real>(
        &self,
        data: &Dataset<T>,
        propensity_terms: &[Term],
        caliper_multiplier: T,
        cem_options: CemOptions,
    ) -> matchsim_core::Result<MatchResult<T>> {
        match self {
            Design::Psm => psm(data, propensity_terms, caliper_multiplier),
            Design::Unmatched => Ok(MatchResult::unmatched(data)),
            cem_design => cem(data, &cem_design.coarsening(data.p()).expect("CEM design"), cem_options),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    /// `M(W)`: weighted difference in means.
    Unadjusted,
    /// `M(W,X)`: treatment coefficient with linear covariate adjustment.
    Linear,
    /// Interaction model; X1 mean over matched treated units.
    Formula5,
    /// Interaction model; X1 mean over all treated units of the sample.
    Formula6,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimator::Unadjusted => "M(W)",
            Estimator::Linear => "M(W,X)",
            Estimator::Formula5 => "Formula(5)",
            Estimator::Formula6 => "Formula(6)",
        })
    }
}

impl FromStr for Estimator {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M(W)" => Ok(Estimator::Unadjusted),
            "M(W,X)" => Ok(Estimator::Linear),
            "Formula(5)" => Ok(Estimator::Formula5),
            "Formula(6)" => Ok(Estimator::Formula6),
            other => Err(HarnessError::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

impl Estimator {
    pub fn model(&self, p: usize) -> ModelSpec {
        match self {
            Estimator::Unadjusted => ModelSpec::unadjusted(),
            Estimator::Linear => ModelSpec::linear(p),
            Estimator::Formula5 | Estimator::Formula6 => ModelSpec::interaction(),
        }
    }

    pub fn evaluate<T: Real>(&self, matched: &MatchResult<T>, data: &Dataset<T>) -> matchsim_core::Result<T> {
        let record = estimate(matched, data, &self.model(data.p()), 0)?;
        match self {
            Estimator::Unadjusted | Estimator::Linear => Ok(record.point_estimate),
            Estimator::Formula5 => patt_from_interaction(&record, X1MeanSource::MatchedTreated, data, matched),
            Estimator::Formula6 => patt_from_interaction(&record, X1MeanSource::AllTreated, data, matched),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for d in [Design::Psm, Design::CemAuto, Design::CemFixed(3), Design::CemFixed(5), Design::Unmatched] {
            assert_eq!(d.to_string().parse::<Design>().unwrap(), d);
        }
        for e in [Estimator::Unadjusted, Estimator::Linear, Estimator::Formula5, Estimator::Formula6] {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("CEM-K1".parse::<Design>().is_err());
        assert!("OLS".parse::<Estimator>().is_err());
    }
}
