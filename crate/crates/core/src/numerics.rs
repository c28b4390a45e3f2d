//! Regression kernels: ordinary and weighted least squares, binomial-logit
//! maximum likelihood by IRLS, and sample covariance.

use crate::error::{Error, Result};
use crate::linalg::{Matrix, PivotedQr};
use crate::scalar::{expit, softplus, Real};

/// A model matrix with one label per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    matrix: Matrix<T>,
    labels: Vec<String>,
}

impl<T: Real> DesignMatrix<T> {
    pub fn new(matrix: Matrix<T>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != matrix.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                matrix.cols()
            )));
        }
        Ok(Self { matrix, labels })
    }

    /// Unlabelled design; columns are named `c0, c1, ...`.
    pub fn unlabelled(matrix: Matrix<T>) -> Self {
        let labels = (0..matrix.cols()).map(|c| format!("c{c}")).collect();
        Self { matrix, labels }
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn columns(&self) -> usize {
        self.matrix.cols()
    }

    fn check_fit_shape(&self, response_len: usize) -> Result<()> {
        if response_len != self.rows() {
            return Err(Error::DimensionMismatch(format!(
                "response length {response_len} for {} rows",
                self.rows()
            )));
        }
        if self.rows() < self.columns() {
            return Err(Error::TooFewRows {
                needed: self.columns(),
                got: self.rows(),
            });
        }
        if !self.matrix.is_finite() {
            return Err(Error::NonFinite("design matrix"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    pub coefficients: Vec<T>,
    /// RSS/(rows - columns) for least squares; Pearson dispersion for logit.
    pub residual_variance: T,
    pub converged: bool,
    pub iterations: usize,
}

pub fn fit_ols<T: Real>(design: &DesignMatrix<T>, y: &[T]) -> Result<FitResult<T>> {
    design.check_fit_shape(y.len())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    let qr = PivotedQr::new(design.matrix());
    let coefficients = qr.solve(y)?;
    let fitted = design.matrix().mul_vec(&coefficients);
    let rss: T = y.iter().zip(&fitted).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let dof = design.rows() - design.columns();
    let residual_variance = if dof > 0 {
        rss / T::from_count(dof)
    } else {
        T::zero()
    };
    Ok(FitResult {
        coefficients,
        residual_variance,
        converged: true,
        iterations: 1,
    })
}

/// Weighted least squares. Rows with zero weight are ignored; negative or
/// non-finite weights are rejected.
pub fn fit_wls<T: Real>(design: &DesignMatrix<T>, y: &[T], weights: &[T]) -> Result<FitResult<T>> {
    if weights.len() != design.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} rows",
            weights.len(),
            design.rows()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
        return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
    }
    let keep: Vec<usize> = (0..design.rows()).filter(|&i| weights[i] > T::zero()).collect();
    let m = design.matrix();
    let cols = design.columns();
    let mut data = Vec::with_capacity(keep.len() * cols);
    let mut yw = Vec::with_capacity(keep.len());
    for &i in &keep {
        let s = weights[i].sqrt();
        data.extend(m.row(i).iter().map(|&v| v * s));
        yw.push(y[i] * s);
    }
    let scaled = DesignMatrix::new(
        Matrix::from_row_major(keep.len(), cols, data)?,
        design.labels().to_vec(),
    )?;
    let mut fit = fit_ols(&scaled, &yw)?;
    // weighted RSS scaled to the mean weight so uniform weights reproduce OLS
    let mean_w = keep.iter().map(|&i| weights[i]).sum::<T>() / T::from_count(keep.len());
    fit.residual_variance = fit.residual_variance / mean_w;
    Ok(fit)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions<T> {
    /// Bound on the largest absolute entry of the per-observation mean score.
    pub tol: T,
    pub max_iter: usize,
    /// Any coefficient beyond this magnitude is treated as separation.
    pub separation_bound: T,
}

impl<T: Real> Default for LogisticOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::default_tolerance(),
            max_iter: 50,
            separation_bound: T::lit(30.0),
        }
    }
}

/// Mean score `X'(w - mu) / n` of the logit log-likelihood.
pub fn logistic_score<T: Real>(design: &DesignMatrix<T>, w: &[bool], beta: &[T]) -> Vec<T> {
    let m = design.matrix();
    let n = T::from_count(m.rows());
    let mut g = vec![T::zero(); m.cols()];
    for i in 0..m.rows() {
        let row = m.row(i);
        let eta: T = row.iter().zip(beta).map(|(&a, &b)| a * b).sum();
        let r = indicator::<T>(w[i]) - expit(eta);
        for (gj, &xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    g.iter().map(|&v| v / n).collect()
}

fn log_likelihood<T: Real>(m: &Matrix<T>, w: &[bool], beta: &[T]) -> T {
    (0..m.rows())
        .map(|i| {
            let eta: T = m.row(i).iter().zip(beta).map(|(&a, &b)| a * b).sum();
            indicator::<T>(w[i]) * eta - softplus(eta)
        })
        .sum()
}

#[inline]
fn indicator<T: Real>(b: bool) -> T {
    if b {
        T::one()
    } else {
        T::zero()
    }
}

/// Binomial-logit maximum likelihood by Newton/IRLS with step halving.
///
/// `converged` is true iff the max absolute mean score is at most `tol`
/// within `max_iter` iterations.
pub fn fit_logistic<T: Real>(
    design: &DesignMatrix<T>,
    w: &[bool],
    options: &LogisticOptions<T>,
) -> Result<FitResult<T>> {
    design.check_fit_shape(w.len())?;
    let treated = w.iter().filter(|&&b| b).count();
    if treated == 0 || treated == w.len() {
        return Err(Error::NoVariation);
    }
    let m = design.matrix();
    let (n, p) = (m.rows(), m.cols());
    let nf = T::from_count(n);
    let mut beta = vec![T::zero(); p];
    let mut ll = log_likelihood(m, w, &beta);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        // score and Fisher information in one pass
        let mut g = vec![T::zero(); p];
        let mut h = Matrix::zeros(p, p);
        for i in 0..n {
            let row = m.row(i);
            let eta: T = row.iter().zip(&beta).map(|(&a, &b)| a * b).sum();
            let mu = expit(eta);
            let r = indicator::<T>(w[i]) - mu;
            let v = mu * (T::one() - mu);
            for a in 0..p {
                g[a] += r * row[a];
                let va = v * row[a];
                for b in 0..=a {
                    h[(a, b)] += va * row[b];
                }
            }
        }
        for a in 0..p {
            g[a] /= nf;
            for b in 0..=a {
                h[(a, b)] /= nf;
                h[(b, a)] = h[(a, b)];
            }
        }
        if g.iter().all(|v| v.abs() <= options.tol) {
            converged = true;
            break;
        }
        iterations += 1;
        let step = PivotedQr::new(&h).solve(&g).map_err(|e| match e {
            // a vanishing information matrix is what divergence looks like
            Error::RankDeficient { .. } if iterations > 1 => Error::Separation { iterations },
            other => other,
        })?;

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + t * s).collect();
            let trial_ll = log_likelihood(m, w, &trial);
            if trial_ll.is_finite() && trial_ll >= ll - T::epsilon() * ll.abs() {
                accepted = Some((trial, trial_ll));
                break;
            }
            t = t * T::lit(0.5);
        }
        let Some((next, next_ll)) = accepted else {
            break;
        };
        beta = next;
        ll = next_ll;
        if beta.iter().any(|b| b.abs() > options.separation_bound) {
            return Err(Error::Separation { iterations });
        }
    }
    if !converged {
        converged = logistic_score(design, w, &beta)
            .iter()
            .all(|v| v.abs() <= options.tol);
    }

    let pearson: T = (0..n)
        .map(|i| {
            let eta: T = m.row(i).iter().zip(&beta).map(|(&a, &b)| a * b).sum();
            let mu = expit(eta);
            let r = indicator::<T>(w[i]) - mu;
            r * r / (mu * (T::one() - mu)).max(T::min_positive_value())
        })
        .sum();
    let dof = n.saturating_sub(p).max(1);
    Ok(FitResult {
        coefficients: beta,
        residual_variance: pearson / T::from_count(dof),
        converged,
        iterations,
    })
}

/// Sample covariance of the columns of `x`, denominator `rows - 1`.
pub fn sample_covariance<T: Real>(x: &Matrix<T>) -> Result<Matrix<T>> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    let nf = T::from_count(n);
    let means: Vec<T> = (0..p)
        .map(|c| (0..n).map(|r| x[(r, c)]).sum::<T>() / nf)
        .collect();
    let mut cov = Matrix::zeros(p, p);
    for r in 0..n {
        let row = x.row(r);
        for a in 0..p {
            let da = row[a] - means[a];
            for b in 0..=a {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = T::from_count(n - 1);
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

/// Weighted covariance with reliability-weight normalization
/// `V1 - V2/V1`; zero-weight rows are ignored.
pub fn weighted_covariance<T: Real>(x: &Matrix<T>, weights: &[T]) -> Result<Matrix<T>> {
    let (n, p) = (x.rows(), x.cols());
    let v1: T = weights.iter().copied().sum();
    let v2: T = weights.iter().map(|&w| w * w).sum();
    let used = weights.iter().filter(|&&w| w > T::zero()).count();
    if used < 2 {
        return Err(Error::TooFewRows { needed: 2, got: used });
    }
    let means: Vec<T> = (0..p)
        .map(|c| (0..n).map(|r| weights[r] * x[(r, c)]).sum::<T>() / v1)
        .collect();
    let mut cov = Matrix::zeros(p, p);
    for r in 0..n {
        let wr = weights[r];
        if wr == T::zero() {
            continue;
        }
        let row = x.row(r);
        for a in 0..p {
            let da = wr * (row[a] - means[a]);
            for b in 0..=a {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = v1 - v2 / v1;
    for a in 0..p {
        for b in 0..=a {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::logit;

    fn design(rows: &[Vec<f64>]) -> DesignMatrix<f64> {
        DesignMatrix::unlabelled(Matrix::from_rows(rows).unwrap())
    }

    #[test]
    fn ols_constant_fit() {
        let d = design(&[vec![1.0], vec![1.0], vec![1.0]]);
        let fit = fit_ols(&d, &[3.0, 3.0, 3.0]).unwrap();
        assert!((fit.coefficients[0] - 3.0).abs() < 1e-14);
        assert!(fit.residual_variance < 1e-28);
    }

    #[test]
    fn ols_exact_line() {
        let d = design(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]]);
        let fit = fit_ols(&d, &[1.0, 3.0, 5.0]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_treatment_slope_is_group_mean_difference() {
        // treated mean 4, control mean 2
        let d = design(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let fit = fit_ols(&d, &[5.0, 3.0, 1.0, 3.0]).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_errors() {
        let d = design(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(fit_ols(&d, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient { .. })));
        assert!(matches!(fit_ols(&d, &[1.0, 2.0]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn wls_with_unit_weights_matches_ols() {
        let d = design(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let y = [0.1, 1.2, 1.9, 3.3];
        let a = fit_ols(&d, &y).unwrap();
        let b = fit_wls(&d, &y, &[1.0; 4]).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!((a.residual_variance - b.residual_variance).abs() < 1e-12);
    }

    #[test]
    fn wls_zero_weight_drops_row() {
        let d = design(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let fit = fit_wls(&d, &[1.0, 3.0, 5.0, 100.0], &[1.0, 2.0, 1.0, 0.0]).unwrap();
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_intercept_only_matches_closed_form() {
        let w: Vec<bool> = (0..100).map(|i| i < 30).collect();
        let d = design(&vec![vec![1.0]; 100]);
        let fit = fit_logistic(&d, &w, &LogisticOptions::default()).unwrap();
        assert!(fit.converged);
        // A mean score of 1e-8 bounds the error by 1e-8 / (0.3 * 0.7).
        assert!((fit.coefficients[0] - logit(0.3)).abs() < 5e-8);
        assert!((fit.coefficients[0] + 0.8473).abs() < 1e-4);
    }

    #[test]
    fn logistic_constant_treatment_is_no_variation() {
        let d = design(&vec![vec![1.0]; 5]);
        let err = fit_logistic(&d, &[true; 5], &LogisticOptions::default()).unwrap_err();
        assert_eq!(err, Error::NoVariation);
    }

    #[test]
    fn logistic_separating_covariate_is_detected() {
        let d = design(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let err = fit_logistic(&d, &[false, false, true, true], &LogisticOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::Separation { .. }), "{err:?}");
    }

    #[test]
    fn covariance_examples() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let c = sample_covariance(&x).unwrap();
        assert!(c.as_slice().iter().all(|&v| v == 0.0));
        let x = Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(sample_covariance(&x).unwrap()[(0, 0)], 2.0);
        let x = Matrix::from_rows(&[vec![0.0]]).unwrap();
        assert!(matches!(sample_covariance(&x), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn weighted_covariance_with_unit_weights_is_sample_covariance() {
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![4.0, 3.0]]).unwrap();
        let a = sample_covariance(&x).unwrap();
        let b = weighted_covariance(&x, &[1.0; 3]).unwrap();
        for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
            assert!(f64::abs(u - v) < 1e-12);
        }
    }
}
