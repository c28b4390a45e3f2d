//! Simulation data: coefficient pairs with controlled sine distance,
//! covariates, logistic treatment assignment, outcomes with homogeneous or
//! heterogeneous effects, and the Monte-Carlo true-PATT oracle.
//!
//! Replication `r` of a scenario draws from ChaCha8 stream `r` of the scenario
//! seed, so replications are independent of execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{expit, Real};

/// Redraws allowed when a generated sample has constant treatment.
pub const MAX_REDRAWS: usize = 100;

const ORACLE_SALT: u64 = 0x6f72_6163_6c65_5f31;
const PAIR_SALT: u64 = 0x7061_6972_735f_7631;
const ORACLE_CHUNK: usize = 1 << 16;

/// Full description of a data-generating process.
///
/// Covariate indices (`interaction_subset`) are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub p: usize,
    pub n: usize,
    pub alpha0: f64,
    pub alpha1: Vec<f64>,
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub interaction_subset: Vec<usize>,
    pub covariate_scale: f64,
    #[serde(default)]
    pub nonlinear_treatment: bool,
    #[serde(default)]
    pub nonlinear_outcome: bool,
    /// Weight of the centered square terms in the nonlinear surrogate.
    #[serde(default = "default_quadratic_coef")]
    pub quadratic_coef: f64,
    /// Weight of the adjacent-pair product terms in the nonlinear surrogate.
    #[serde(default = "default_interaction_coef")]
    pub interaction_coef: f64,
    pub error_sd: f64,
    pub replications: usize,
    pub seed: u64,
}

fn default_quadratic_coef() -> f64 {
    0.5
}

fn default_interaction_coef() -> f64 {
    0.3
}

impl ScenarioConfig {
    /// Linear additive scenario with the given coefficient vectors, a
    /// homogeneous effect of 6, and `alpha0 = -0.9`.
    pub fn linear(alpha1: Vec<f64>, beta2: Vec<f64>, n: usize, seed: u64) -> Self {
        Self {
            p: alpha1.len(),
            n,
            alpha0: -0.9,
            alpha1,
            beta0: 0.0,
            beta1: 6.0,
            beta2,
            theta: Vec::new(),
            interaction_subset: Vec::new(),
            covariate_scale: 1.0,
            nonlinear_treatment: false,
            nonlinear_outcome: false,
            quadratic_coef: default_quadratic_coef(),
            interaction_coef: default_interaction_coef(),
            error_sd: 1.0,
            replications: 500,
            seed,
        }
    }

    pub fn from_pair(pair: &CoefficientPair, n: usize, seed: u64) -> Self {
        Self::linear(pair.alpha1.clone(), pair.beta2.clone(), n, seed)
    }

    pub fn is_heterogeneous(&self) -> bool {
        !self.theta.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.p == 0 {
            return bad("p must be at least 1".into());
        }
        if self.alpha1.len() != self.p || self.beta2.len() != self.p {
            return bad(format!(
                "alpha1 ({}) and beta2 ({}) must have length p = {}",
                self.alpha1.len(),
                self.beta2.len(),
                self.p
            ));
        }
        if self.theta.len() != self.interaction_subset.len() {
            return bad("theta and interaction_subset must have equal length".into());
        }
        if let Some(&j) = self.interaction_subset.iter().find(|&&j| j >= self.p) {
            return bad(format!("interaction index {j} out of range for p = {}", self.p));
        }
        if !(self.covariate_scale > 0.0) || !(self.error_sd > 0.0) {
            return bad("covariate_scale and error_sd must be positive".into());
        }
        if self.n < 10 {
            return bad(format!("n = {} is below the minimum of 10", self.n));
        }
        let finite = [self.alpha0, self.beta0, self.beta1, self.quadratic_coef, self.interaction_coef]
            .iter()
            .chain(&self.alpha1)
            .chain(&self.beta2)
            .chain(&self.theta)
            .all(|v| v.is_finite());
        if !finite {
            return bad("coefficients must be finite".into());
        }
        Ok(())
    }

    /// Treatment index `phi(x)` (excluding `alpha0`).
    pub fn treatment_index(&self, x: &[f64]) -> f64 {
        self.surrogate_index(&self.alpha1, x, self.nonlinear_treatment)
    }

    /// Outcome covariate function `g(x)`.
    pub fn outcome_index(&self, x: &[f64]) -> f64 {
        self.surrogate_index(&self.beta2, x, self.nonlinear_outcome)
    }

    /// Propensity `P(W = 1 | x)` implied by the scenario.
    pub fn propensity(&self, x: &[f64]) -> f64 {
        expit(self.alpha0 + self.treatment_index(x))
    }

    /// Individual effect `beta1 + x_sub . theta`.
    pub fn individual_effect(&self, x: &[f64]) -> f64 {
        self.beta1
            + self
                .interaction_subset
                .iter()
                .zip(&self.theta)
                .map(|(&j, &t)| x[j] * t)
                .sum::<f64>()
    }

    fn surrogate_index(&self, coefs: &[f64], x: &[f64], nonlinear: bool) -> f64 {
        let linear: f64 = coefs.iter().zip(x).map(|(c, v)| c * v).sum();
        if !nonlinear {
            return linear;
        }
        let s = self.covariate_scale;
        let var = s * s;
        let quad: f64 = coefs.iter().zip(x).map(|(c, v)| c * (v * v - var)).sum();
        let inter: f64 = (0..x.len().saturating_sub(1))
            .map(|j| coefs[j] * x[j] * x[j + 1])
            .sum();
        linear + (self.quadratic_coef * quad + self.interaction_coef * inter) / s
    }
}

/// Covariates, treatment and outcome for one simulated or user sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    x: Matrix<T>,
    w: Vec<bool>,
    y: Vec<T>,
    treated_count: usize,
}

impl<T: Real> Dataset<T> {
    pub fn new(x: Matrix<T>, w: Vec<bool>, y: Vec<T>) -> Result<Self> {
        if w.len() != x.rows() || y.len() != x.rows() {
            return Err(Error::DimensionMismatch(format!(
                "x has {} rows, w {} and y {}",
                x.rows(),
                w.len(),
                y.len()
            )));
        }
        if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let treated_count = w.iter().filter(|&&b| b).count();
        Ok(Self {
            x,
            w,
            y,
            treated_count,
        })
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn w(&self) -> &[bool] {
        &self.w
    }

    pub fn y(&self) -> &[T] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn treated_count(&self) -> usize {
        self.treated_count
    }

    pub fn control_count(&self) -> usize {
        self.n() - self.treated_count
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.w[i]).collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.w[i]).collect()
    }

    /// True iff both groups are present.
    pub fn is_usable(&self) -> bool {
        self.treated_count > 0 && self.treated_count < self.n()
    }
}

/// Sine of the angle between `u` and `v`, in `[0, 1]`.
pub fn sine_distance<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {}", u.len(), v.len())));
    }
    let uu: T = u.iter().map(|&a| a * a).sum();
    let vv: T = v.iter().map(|&a| a * a).sum();
    if uu == T::zero() || vv == T::zero() {
        return Err(Error::ZeroVector);
    }
    let uv: T = u.iter().zip(v).map(|(&a, &b)| a * b).sum();
    let cos2 = (uv * uv) / (uu * vv);
    Ok((T::one() - cos2).max(T::zero()).min(T::one()).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientPair {
    /// Unit-length treatment coefficients.
    pub alpha1: Vec<f64>,
    /// Outcome coefficients of length `k`.
    pub beta2: Vec<f64>,
    pub sine_distance: f64,
}

impl CoefficientPair {
    /// Normalizes both directions; `alpha1` gets length 1, `beta2` length `k`.
    pub fn from_directions(alpha_dir: &[f64], beta_dir: &[f64], k: f64) -> Result<Self> {
        let alpha1 = normalized(alpha_dir)?;
        let beta2: Vec<f64> = normalized(beta_dir)?.into_iter().map(|v| v * k).collect();
        let sine_distance = sine_distance(&alpha1, &beta2)?;
        Ok(Self {
            alpha1,
            beta2,
            sine_distance,
        })
    }
}

fn normalized(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|a| a / norm).collect())
}

fn random_direction<R: Rng>(rng: &mut R, p: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..p).map(|_| f64::from(rng.random_range(1u32..=9))).collect();
    let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt();
    raw.into_iter()
        .map(|a| if rng.random_bool(0.5) { -a / norm } else { a / norm })
        .collect()
}

/// Number of equal-width sine-distance bins used for stratified acceptance.
pub const SINE_BINS: usize = 10;

/// Draws `count` coefficient pairs whose sine distances are spread evenly
/// over `[0, 1]`: candidates are accepted only while their sine-distance
/// decile is below its quota of `ceil(count / 10)`.
pub fn generate_coefficient_pairs(
    p: usize,
    count: usize,
    k: f64,
    seed: u64,
) -> Result<Vec<CoefficientPair>> {
    if count == 0 || p < 2 {
        return Err(Error::InvalidArgument(format!(
            "need count >= 1 and p >= 2 (got count {count}, p {p})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ PAIR_SALT);
    let quota = count.div_ceil(SINE_BINS);
    let mut occupancy = [0usize; SINE_BINS];
    let mut pairs = Vec::with_capacity(count);
    let max_draws = 2_000 * count + 200_000;
    let mut draws = 0;
    while pairs.len() < count {
        if draws == max_draws {
            return Err(Error::Unsatisfiable {
                accepted: pairs.len(),
                requested: count,
                draws,
            });
        }
        draws += 1;
        let beta_dir = random_direction(&mut rng, p);
        let alpha_dir = random_direction(&mut rng, p);
        let pair = CoefficientPair::from_directions(&alpha_dir, &beta_dir, k)?;
        let bin = sine_bin(pair.sine_distance);
        if occupancy[bin] < quota {
            occupancy[bin] += 1;
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

pub fn sine_bin(s: f64) -> usize {
    ((s * SINE_BINS as f64).floor() as usize).min(SINE_BINS - 1)
}

fn replication_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw of replication `replication_index`; `attempt` selects a
/// perturbed substream used for redraws.
pub fn generate_dataset_attempt<T: Real>(
    config: &ScenarioConfig,
    replication_index: usize,
    attempt: usize,
) -> Result<Dataset<T>> {
    config.validate()?;
    let stream = replication_index as u64 | ((attempt as u64) << 40);
    let mut rng = replication_rng(config.seed, stream);
    let (n, p) = (config.n, config.p);
    let s = config.covariate_scale;
    let mut xs = Vec::with_capacity(n * p);
    let mut w = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for _ in 0..n {
        for v in row.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = s * z;
        }
        let treated = rng.random::<f64>() < config.propensity(&row);
        let eps: f64 = StandardNormal.sample(&mut rng);
        let mut outcome = config.beta0 + config.outcome_index(&row) + config.error_sd * eps;
        if treated {
            outcome += config.individual_effect(&row);
        }
        xs.extend(row.iter().map(|&v| T::lit(v)));
        w.push(treated);
        y.push(T::lit(outcome));
    }
    let data = Dataset::new(Matrix::from_row_major(n, p, xs)?, w, y)?;
    if !data.is_usable() {
        return Err(Error::DegenerateSample { attempts: 1 });
    }
    Ok(data)
}

/// Deterministic dataset for `(config.seed, replication_index)`. Samples with
/// constant treatment are redrawn up to [`MAX_REDRAWS`] times.
pub fn generate_dataset<T: Real>(config: &ScenarioConfig, replication_index: usize) -> Result<Dataset<T>> {
    for attempt in 0..=MAX_REDRAWS {
        match generate_dataset_attempt(config, replication_index, attempt) {
            Err(Error::DegenerateSample { .. }) => continue,
            other => return other,
        }
    }
    Err(Error::DegenerateSample {
        attempts: MAX_REDRAWS + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub treated_draws: usize,
}

/// Monte-Carlo PATT: simulate `draws` units from the scenario, assign
/// treatment, and average individual effects over the treated. Exact
/// (`beta1`, zero error) when the effect is homogeneous.
pub fn true_patt_oracle(config: &ScenarioConfig, draws: usize) -> Result<OracleEstimate> {
    config.validate()?;
    if !config.is_heterogeneous() {
        return Ok(OracleEstimate {
            value: config.beta1,
            standard_error: 0.0,
            treated_draws: 0,
        });
    }
    if draws < 100_000 {
        return Err(Error::InvalidArgument(format!("oracle needs >= 1e5 draws, got {draws}")));
    }
    let chunks = draws.div_ceil(ORACLE_CHUNK);
    let partial: Vec<(f64, f64, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = ORACLE_CHUNK.min(draws - c * ORACLE_CHUNK);
            let mut rng = replication_rng(config.seed ^ ORACLE_SALT, c as u64);
            let mut row = vec![0.0; config.p];
            let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
            for _ in 0..len {
                for v in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = config.covariate_scale * z;
                }
                if rng.random::<f64>() < config.propensity(&row) {
                    let tau = config.individual_effect(&row);
                    sum += tau;
                    sum_sq += tau * tau;
                    count += 1;
                }
            }
            (sum, sum_sq, count)
        })
        .collect();
    let (sum, sum_sq, count) = partial
        .iter()
        .fold((0.0, 0.0, 0usize), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    if count < 2 {
        return Err(Error::NoTreatedUnits);
    }
    let cf = count as f64;
    let mean = sum / cf;
    let var = (sum_sq - cf * mean * mean) / (cf - 1.0);
    Ok(OracleEstimate {
        value: mean,
        standard_error: (var.max(0.0) / cf).sqrt(),
        treated_draws: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(p: usize) -> ScenarioConfig {
        let unit = 1.0 / (p as f64).sqrt();
        ScenarioConfig::linear(vec![unit; p], vec![1.2 * unit; p], 200, 7)
    }

    #[test]
    fn sine_distance_examples() {
        assert!(sine_distance(&[1.0f64, 2.0], &[1.0, 2.0]).unwrap() < 1e-7);
        assert_eq!(sine_distance(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 1.0);
        let s = sine_distance(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((s - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert_eq!(sine_distance(&[0.0, 0.0], &[1.0, 1.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn equal_directions_have_zero_sine() {
        let pair = CoefficientPair::from_directions(&[3.0, 4.0], &[6.0, 8.0], 1.2).unwrap();
        assert!(pair.sine_distance < 1e-7);
        assert!((pair.beta2[0] - 0.72).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = base(3);
        assert!(c.validate().is_ok());
        c.beta2.pop();
        assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        let mut c = base(3);
        c.n = 5;
        assert!(c.validate().is_err());
        let mut c = base(3);
        c.theta = vec![1.0];
        assert!(c.validate().is_err());
        c.interaction_subset = vec![3];
        assert!(c.validate().is_err());
    }

    #[test]
    fn noiseless_homogeneous_effect_is_exact() {
        let mut c = base(2);
        c.alpha1 = vec![0.0, 0.0];
        c.beta2 = vec![0.0, 0.0];
        c.error_sd = 1e-300;
        c.beta0 = 1.5;
        let d: Dataset<f64> = generate_dataset(&c, 0).unwrap();
        for i in 0..d.n() {
            let expected = if d.w()[i] { 7.5 } else { 1.5 };
            assert_eq!(d.y()[i], expected);
        }
    }

    #[test]
    fn generation_is_deterministic_per_replication() {
        let c = base(4);
        let a: Dataset<f64> = generate_dataset(&c, 3).unwrap();
        let b: Dataset<f64> = generate_dataset(&c, 3).unwrap();
        let other: Dataset<f64> = generate_dataset(&c, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);
    }

    #[test]
    fn constant_treatment_exhausts_redraws() {
        let mut c = base(2);
        c.alpha0 = -60.0;
        c.n = 10;
        let r: Result<Dataset<f64>> = generate_dataset(&c, 0);
        assert_eq!(r, Err(Error::DegenerateSample { attempts: MAX_REDRAWS + 1 }));
    }

    #[test]
    fn nonlinear_surrogate_reduces_to_linear_when_off() {
        let mut c = base(3);
        let x = [0.3, -1.2, 2.0];
        let lin = c.treatment_index(&x);
        c.nonlinear_treatment = true;
        let s = c.covariate_scale;
        let a = &c.alpha1;
        let expected = lin
            + 0.5 * (a[0] * (0.09 - s * s) + a[1] * (1.44 - s * s) + a[2] * (4.0 - s * s)) / s
            + 0.3 * (a[0] * 0.3 * -1.2 + a[1] * -1.2 * 2.0) / s;
        assert!((c.treatment_index(&x) - expected).abs() < 1e-12);
        assert_eq!(c.outcome_index(&x), c.beta2.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>());
    }

    #[test]
    fn homogeneous_oracle_is_exact() {
        let c = base(2);
        let o = true_patt_oracle(&c, 0).unwrap();
        assert_eq!(o.value, 6.0);
        assert_eq!(o.standard_error, 0.0);
    }

    #[test]
    fn coefficient_pair_invariants() {
        let pairs = generate_coefficient_pairs(5, 40, 1.2, 11).unwrap();
        assert_eq!(pairs.len(), 40);
        for pair in &pairs {
            let na: f64 = pair.alpha1.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb: f64 = pair.beta2.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((na - 1.0).abs() < 1e-12 && (nb - 1.2).abs() < 1e-12);
            let s = sine_distance(&pair.alpha1, &pair.beta2).unwrap();
            assert!((s - pair.sine_distance).abs() < 1e-12);
        }
        assert!(generate_coefficient_pairs(1, 4, 1.2, 0).is_err());
    }
}
