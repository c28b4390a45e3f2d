//! Common output of every matching design.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DesignLabel {
    Psm,
    CemWeights,
    CemOneToOne,
    /// The full sample with unit weights; the no-matching baseline.
    Unmatched,
}

impl fmt::Display for DesignLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DesignLabel::Psm => "PSM",
            DesignLabel::CemWeights => "CEM-weights",
            DesignLabel::CemOneToOne => "CEM-1to1",
            DesignLabel::Unmatched => "Unmatched",
        })
    }
}

impl FromStr for DesignLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PSM" => Ok(DesignLabel::Psm),
            "CEM-weights" => Ok(DesignLabel::CemWeights),
            "CEM-1to1" => Ok(DesignLabel::CemOneToOne),
            "Unmatched" => Ok(DesignLabel::Unmatched),
            other => Err(Error::InvalidArgument(format!("unknown design label {other:?}"))),
        }
    }
}

/// Units sharing one coarsened covariate tuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stratum {
    pub key: Vec<u32>,
    /// Member indices in ascending order.
    pub members: Vec<usize>,
    pub treated: usize,
    pub control: usize,
}

impl Stratum {
    pub fn is_retained(&self) -> bool {
        self.treated > 0 && self.control > 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Treated,
    Control,
    Pruned,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Treated => "treated",
            Role::Control => "control",
            Role::Pruned => "pruned",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult<T> {
    pub design: DesignLabel,
    /// `(treated_index, control_index)` pairs, in matching order.
    pub pairs: Vec<(usize, usize)>,
    /// Every stratum of the coarsened data, retained or not (CEM only).
    pub strata: Option<Vec<Stratum>>,
    /// Per-unit weight; 0 marks a pruned unit.
    pub weights: Vec<T>,
    /// Treated and control counts in the source data.
    pub m_treated: usize,
    pub m_control: usize,
    pub matched_treated: usize,
    pub matched_control: usize,
}

impl<T: Real> MatchResult<T> {
    /// Assembles a result from per-unit weights, deriving the matched counts.
    pub fn from_weights(
        design: DesignLabel,
        w: &[bool],
        pairs: Vec<(usize, usize)>,
        strata: Option<Vec<Stratum>>,
        weights: Vec<T>,
    ) -> Self {
        let m_treated = w.iter().filter(|&&b| b).count();
        let (mut matched_treated, mut matched_control) = (0, 0);
        for (&treated, &wt) in w.iter().zip(&weights) {
            if wt > T::zero() {
                if treated {
                    matched_treated += 1;
                } else {
                    matched_control += 1;
                }
            }
        }
        Self {
            design,
            pairs,
            strata,
            weights,
            m_treated,
            m_control: w.len() - m_treated,
            matched_treated,
            matched_control,
        }
    }

    /// Every unit retained with weight 1.
    pub fn unmatched(data: &Dataset<T>) -> Self {
        Self::from_weights(
            DesignLabel::Unmatched,
            data.w(),
            Vec::new(),
            None,
            vec![T::one(); data.n()],
        )
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matched_treated == 0 || self.matched_control == 0
    }

    /// Proportion of treated units among the matched units.
    pub fn treated_share(&self) -> T {
        let total = self.matched_treated + self.matched_control;
        if total == 0 {
            T::zero()
        } else {
            T::from_count(self.matched_treated) / T::from_count(total)
        }
    }

    /// Indices with positive weight, ascending.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.weights[i] > T::zero()).collect()
    }

    pub fn role(&self, i: usize, w: &[bool]) -> Role {
        if self.weights[i] > T::zero() {
            if w[i] {
                Role::Treated
            } else {
                Role::Control
            }
        } else {
            Role::Pruned
        }
    }

    /// Pair id per unit (`None` for units outside every pair).
    pub fn pair_ids(&self) -> Vec<Option<usize>> {
        let mut ids = vec![None; self.n()];
        for (k, &(t, c)) in self.pairs.iter().enumerate() {
            ids[t] = Some(k);
            ids[c] = Some(k);
        }
        ids
    }

    /// Stratum id per unit, indexing into `strata`.
    pub fn stratum_ids(&self) -> Vec<Option<usize>> {
        let mut ids = vec![None; self.n()];
        if let Some(strata) = &self.strata {
            for (s, stratum) in strata.iter().enumerate() {
                for &i in &stratum.members {
                    ids[i] = Some(s);
                }
            }
        }
        ids
    }

    /// Checks the structural invariants against the treatment vector.
    pub fn check(&self, w: &[bool]) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if w.len() != self.n() {
            return fail("weights and treatment differ in length");
        }
        if self.weights.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) {
            return fail("weights must be finite and nonnegative");
        }
        let mut seen = vec![false; self.n()];
        for &(t, c) in &self.pairs {
            if t >= self.n() || c >= self.n() || !w[t] || w[c] {
                return fail("pair must join a treated and a control unit");
            }
            if seen[t] || seen[c] {
                return fail("unit appears in more than one pair");
            }
            seen[t] = true;
            seen[c] = true;
        }
        if matches!(self.design, DesignLabel::Psm | DesignLabel::CemOneToOne) {
            if self.matched_treated != self.matched_control || self.matched_treated != self.pairs.len() {
                return fail("1:1 design must have equal matched counts");
            }
            for i in 0..self.n() {
                let expected = if seen[i] { T::one() } else { T::zero() };
                if self.weights[i] != expected {
                    return fail("1:1 design weights must be 1 on pairs and 0 elsewhere");
                }
            }
        }
        Ok(())
    }
}
