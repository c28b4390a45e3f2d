use matchsim_core::datagen::{
    generate_coefficient_pairs, generate_dataset, sine_bin, true_patt_oracle, ScenarioConfig, SINE_BINS,
};
use proptest::prelude::*;

fn heterogeneous(seed: u64) -> ScenarioConfig {
    let mut s = ScenarioConfig::linear(vec![1.2], vec![1.0], 1000, seed);
    s.covariate_scale = 1.0;
    s.beta1 = 1.5;
    s.theta = vec![-1.0];
    s.interaction_subset = vec![0];
    s
}

/// `E[e(X) tau(X)] / E[e(X)]` for scalar `X ~ N(0, 1)` by Simpson's rule.
fn patt_by_quadrature(alpha0: f64, alpha1: f64, beta1: f64, theta: f64) -> f64 {
    let (lo, hi, steps) = (-10.0f64, 10.0f64, 20_000usize);
    let h = (hi - lo) / steps as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..=steps {
        let x = lo + h * i as f64;
        let c = if i == 0 || i == steps { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let phi = (-0.5 * x * x).exp();
        let e = 1.0 / (1.0 + (-(alpha0 + alpha1 * x)).exp());
        num += c * phi * e * (beta1 + theta * x);
        den += c * phi * e;
    }
    num / den
}

#[test]
fn monte_carlo_patt_matches_quadrature() {
    let s = heterogeneous(7);
    let oracle = true_patt_oracle(&s, 2_000_000).unwrap();
    let exact = patt_by_quadrature(s.alpha0, 1.2, 1.5, -1.0);
    assert!(
        (oracle.value - exact).abs() < 4.0 * oracle.standard_error,
        "{} vs {exact} (se {})",
        oracle.value,
        oracle.standard_error
    );
    assert!(oracle.standard_error < 2e-3);
}

#[test]
fn sample_patt_tracks_population_patt() {
    // Importance route: the treated-sample mean effect averaged over datasets.
    let mut s = heterogeneous(11);
    s.n = 20_000;
    let exact = patt_by_quadrature(s.alpha0, 1.2, 1.5, -1.0);
    let means: Vec<f64> = (0..20)
        .map(|r| {
            let d = generate_dataset::<f64>(&s, r).unwrap();
            let t = d.treated_indices();
            t.iter().map(|&i| s.individual_effect(d.x().row(i))).sum::<f64>() / t.len() as f64
        })
        .collect();
    let mean = means.iter().sum::<f64>() / means.len() as f64;
    let sd = (means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / 19.0).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd / 20f64.sqrt() + 1e-3, "{mean} vs {exact}");
}

#[test]
fn homogeneous_oracle_is_exact() {
    let s = ScenarioConfig::linear(vec![1.0, 0.0], vec![0.0, 1.0], 100, 1);
    let o = true_patt_oracle(&s, 100_000).unwrap();
    assert_eq!(o.value, s.beta1);
    assert_eq!(o.standard_error, 0.0);
}

#[test]
fn coefficient_pairs_fill_every_sine_bin() {
    let pairs = generate_coefficient_pairs(5, 50, 1.2, 3).unwrap();
    let mut counts = [0usize; SINE_BINS];
    for p in &pairs {
        counts[sine_bin(p.sine_distance)] += 1;
        let na = p.alpha1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = p.beta2.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((na - 1.0).abs() < 1e-12 && (nb - 1.2).abs() < 1e-12);
        let cos = p.alpha1.iter().zip(&p.beta2).map(|(a, b)| a * b).sum::<f64>() / (na * nb);
        assert!((p.sine_distance - (1.0 - cos * cos).max(0.0).sqrt()).abs() < 1e-9);
    }
    assert_eq!(counts, [5; SINE_BINS]);
    assert_eq!(generate_coefficient_pairs(5, 50, 1.2, 3).unwrap(), pairs);
}

#[test]
fn datasets_are_reproducible_and_distinct_across_replications() {
    let s = ScenarioConfig::linear(vec![0.5, -0.5], vec![1.0, 1.0], 200, 99);
    let a = generate_dataset::<f64>(&s, 4).unwrap();
    let b = generate_dataset::<f64>(&s, 4).unwrap();
    let c = generate_dataset::<f64>(&s, 5).unwrap();
    assert_eq!(a.y(), b.y());
    assert_eq!(a.w(), b.w());
    assert_ne!(a.y(), c.y());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn prevalence_is_monotone_in_intercept(lo in -3.0f64..1.0, gap in 0.05f64..2.0, rep in 0usize..50) {
        let mut a = ScenarioConfig::linear(vec![0.8, -0.4], vec![1.0, 1.0], 400, 5);
        a.alpha0 = lo;
        let mut b = a.clone();
        b.alpha0 = lo + gap;
        let da = generate_dataset::<f64>(&a, rep).unwrap();
        let db = generate_dataset::<f64>(&b, rep).unwrap();
        prop_assert!(da.treated_count() <= db.treated_count());
        prop_assert_eq!(da.x(), db.x());
    }
}
