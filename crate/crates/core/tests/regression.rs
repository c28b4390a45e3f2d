use matchsim_core::linalg::Matrix;
use matchsim_core::numerics::{fit_logistic, fit_ols, fit_wls, logistic_score, sample_covariance};
use matchsim_core::{DesignMatrix, LogisticOptions};
use proptest::prelude::*;

/// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
fn normal_equations(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut a = vec![vec![0.0; k + 1]; k];
    for ((row, &yi), &wi) in x.iter().zip(y).zip(w) {
        for r in 0..k {
            for c in 0..k {
                a[r][c] += wi * row[r] * row[c];
            }
            a[r][k] += wi * row[r] * yi;
        }
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|r| a[r][k] / a[r][r]).collect()
}

fn design(rows: &[Vec<f64>]) -> DesignMatrix<f64> {
    DesignMatrix::unlabelled(Matrix::from_rows(rows).unwrap())
}

fn with_intercept(raw: &[Vec<f64>]) -> Vec<Vec<f64>> {
    raw.iter().map(|r| std::iter::once(1.0).chain(r.iter().copied()).collect()).collect()
}

fn residualize(x: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    let b = normal_equations(x, v, &vec![1.0; v.len()]);
    x.iter()
        .zip(v)
        .map(|(row, vi)| vi - row.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

fn regression_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>)> {
    (2usize..5).prop_flat_map(|p| {
        (12usize..40).prop_flat_map(move |n| {
            (
                prop::collection::vec(prop::collection::vec(-3.0f64..3.0, p), n),
                prop::collection::vec(-5.0f64..5.0, n),
            )
        })
    })
}

#[test]
fn ols_reproduces_textbook_line() {
    // y = 1 + 2x exactly.
    let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64]).collect();
    let y: Vec<f64> = (0..5).map(|i| 1.0 + 2.0 * i as f64).collect();
    let fit = fit_ols(&design(&rows), &y).unwrap();
    assert!((fit.coefficients[0] - 1.0).abs() < 1e-12);
    assert!((fit.coefficients[1] - 2.0).abs() < 1e-12);
    assert!(fit.residual_variance.abs() < 1e-20);
}

#[test]
fn ols_residual_variance_of_known_fit() {
    // Mean-only model: residual variance is the sample variance.
    let y = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
    let fit = fit_ols(&design(&vec![vec![1.0]; 8]), &y).unwrap();
    assert!((fit.coefficients[0] - 5.0).abs() < 1e-12);
    assert!((fit.residual_variance - 32.0 / 7.0).abs() < 1e-12);
}

#[test]
fn logistic_matches_two_by_two_log_odds() {
    // x = 0: 3 of 10 treated; x = 1: 7 of 10 treated.
    let mut rows = Vec::new();
    let mut w = Vec::new();
    for (x, treated) in [(0.0, 3), (1.0, 7)] {
        for i in 0..10 {
            rows.push(vec![1.0, x]);
            w.push(i < treated);
        }
    }
    let fit = fit_logistic(&design(&rows), &w, &LogisticOptions::default()).unwrap();
    let lo0 = (3.0f64 / 7.0).ln();
    let lo1 = (7.0f64 / 3.0).ln();
    assert!(fit.converged);
    assert!((fit.coefficients[0] - lo0).abs() < 1e-6);
    assert!((fit.coefficients[1] - (lo1 - lo0)).abs() < 1e-6);
}

#[test]
fn logistic_rejects_constant_response() {
    let rows = vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]];
    assert!(fit_logistic(&design(&rows), &[true; 3], &LogisticOptions::default()).is_err());
}

proptest! {
    #[test]
    fn ols_agrees_with_normal_equations((raw, y) in regression_data()) {
        let x = with_intercept(&raw);
        let fit = fit_ols(&design(&x), &y).unwrap();
        let oracle = normal_equations(&x, &y, &vec![1.0; y.len()]);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn wls_with_integer_weights_equals_ols_on_replicated_rows(
        (raw, y) in regression_data(),
        seed_weights in prop::collection::vec(1u32..4, 40),
    ) {
        let x = with_intercept(&raw);
        let weights: Vec<f64> = (0..y.len()).map(|i| f64::from(seed_weights[i])).collect();
        let wls = fit_wls(&design(&x), &y, &weights).unwrap();
        let (mut xr, mut yr) = (Vec::new(), Vec::new());
        for ((row, &yi), &wi) in x.iter().zip(&y).zip(&weights) {
            for _ in 0..wi as usize {
                xr.push(row.clone());
                yr.push(yi);
            }
        }
        let ols = fit_ols(&design(&xr), &yr).unwrap();
        for (a, b) in wls.coefficients.iter().zip(&ols.coefficients) {
            prop_assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn frisch_waugh_lovell((raw, y) in regression_data()) {
        let x = with_intercept(&raw);
        let full = fit_ols(&design(&x), &y).unwrap();
        let last = x[0].len() - 1;
        let others: Vec<Vec<f64>> = x.iter().map(|r| r[..last].to_vec()).collect();
        let xk: Vec<f64> = x.iter().map(|r| r[last]).collect();
        let ry = residualize(&others, &y);
        let rx = residualize(&others, &xk);
        let partial = fit_ols(&design(&rx.iter().map(|&v| vec![v]).collect::<Vec<_>>()), &ry).unwrap();
        let b = full.coefficients[last];
        prop_assert!((partial.coefficients[0] - b).abs() < 1e-6 * (1.0 + b.abs()));
    }

    #[test]
    fn logistic_score_vanishes_at_the_fit(
        xs in prop::collection::vec(-2.0f64..2.0, 60..120),
        us in prop::collection::vec(0.0f64..1.0, 120),
    ) {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![1.0, x]).collect();
        // Treatment from a true logit 0.3 + 0.8 x.
        let w: Vec<bool> = xs.iter().zip(&us).map(|(&x, &u)| u < 1.0 / (1.0 + (-(0.3 + 0.8 * x)).exp())).collect();
        let treated = w.iter().filter(|&&b| b).count();
        prop_assume!(treated > 2 && treated + 2 < w.len());
        let d = design(&rows);
        let fit = fit_logistic(&d, &w, &LogisticOptions::default()).unwrap();
        prop_assume!(fit.coefficients.iter().all(|c| c.abs() < 20.0));
        for g in logistic_score(&d, &w, &fit.coefficients) {
            prop_assert!(g.abs() < 1e-8);
        }
    }

    #[test]
    fn sample_covariance_is_symmetric_psd(
        rows in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 3..30),
        dir in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let m = Matrix::from_rows(&rows).unwrap();
        let cov = sample_covariance(&m).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                prop_assert_eq!(cov[(a, b)], cov[(b, a)]);
            }
        }
        let cv = cov.mul_vec(&dir);
        let q: f64 = dir.iter().zip(&cv).map(|(a, b)| a * b).sum();
        // Quadratic form equals the sample variance of the projection.
        let proj: Vec<f64> = rows.iter().map(|r| r.iter().zip(&dir).map(|(a, b)| a * b).sum()).collect();
        let mean = proj.iter().sum::<f64>() / proj.len() as f64;
        let var = proj.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (proj.len() - 1) as f64;
        prop_assert!(q >= -1e-9);
        prop_assert!((q - var).abs() < 1e-8 * (1.0 + var));
    }
}
