use matchsim_core::balance::{i2_between_group_mahalanobis, i5_cross_replication, smd};
use matchsim_core::linalg::Matrix;
use matchsim_core::numerics::sample_covariance;
use proptest::prelude::*;

fn group() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 3..20)
}

fn spread(v: &[f64]) -> bool {
    v.iter().any(|&a| (a - v[0]).abs() > 1e-3)
}

proptest! {
    #[test]
    fn smd_is_location_scale_invariant(t in group(), c in group(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        prop_assume!(spread(&t) && spread(&c));
        let base = smd(&t, &c).unwrap();
        let tt: Vec<f64> = t.iter().map(|v| a * v + b).collect();
        let cc: Vec<f64> = c.iter().map(|v| a * v + b).collect();
        let moved = smd(&tt, &cc).unwrap();
        prop_assert!((base - moved).abs() < 1e-9 * (1.0 + base.abs()));
        let swapped = smd(&c, &t).unwrap();
        prop_assert!((base + swapped).abs() < 1e-12);
    }

    #[test]
    fn i5_bounded_by_mean_absolute_smd(table in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..30)) {
        let i5 = i5_cross_replication(&table).unwrap().i5;
        let mean_abs = table.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).sum::<f64>() / table.len() as f64;
        prop_assert!(i5 <= mean_abs + 1e-12);
        prop_assert!(i5 >= 0.0);
    }

    #[test]
    fn i2_is_affine_invariant(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 12..40),
        treat in prop::collection::vec(any::<bool>(), 40),
        m in prop::collection::vec(-2.0f64..2.0, 4),
        shift in prop::collection::vec(-5.0f64..5.0, 2),
    ) {
        let w: Vec<bool> = treat[..rows.len()].to_vec();
        let treated = w.iter().filter(|&&b| b).count();
        prop_assume!(treated >= 2 && treated + 2 <= w.len());
        let det = m[0] * m[3] - m[1] * m[2];
        prop_assume!(det.abs() > 0.2);
        let x = Matrix::from_rows(&rows).unwrap();
        let cov = sample_covariance(&x).unwrap();
        prop_assume!(cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)].powi(2) > 1e-3);
        let weights = vec![1.0; rows.len()];
        let base = i2_between_group_mahalanobis(&x, &w, &weights, &cov).unwrap();
        let moved_rows: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![m[0] * r[0] + m[1] * r[1] + shift[0], m[2] * r[0] + m[3] * r[1] + shift[1]])
            .collect();
        let y = Matrix::from_rows(&moved_rows).unwrap();
        let moved = i2_between_group_mahalanobis(&y, &w, &weights, &sample_covariance(&y).unwrap()).unwrap();
        prop_assert!((base - moved).abs() < 1e-6 * (1.0 + base));
    }
}

#[test]
fn i2_of_identical_group_means_is_zero() {
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]]).unwrap();
    let w = [true, true, false, false];
    let v = i2_between_group_mahalanobis(&x, &w, &[1.0; 4], &Matrix::identity(2)).unwrap();
    assert_eq!(v, 0.0);
}
