use std::collections::{BTreeMap, BTreeSet};

use matchsim_core::cem::{cem_match, coarsen};
use matchsim_core::linalg::Matrix;
use matchsim_core::psm::psm_match;
use matchsim_core::{CemMode, CemOptions, CoarseningRule, CoarseningSpec, Dataset, MatchOrder, WeightTotals};
use proptest::prelude::*;

fn logits_and_treatment() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (4usize..60).prop_flat_map(|n| (prop::collection::vec(-3.0f64..3.0, n), prop::collection::vec(any::<bool>(), n)))
}

fn dataset() -> impl Strategy<Value = Dataset<f64>> {
    (10usize..80)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_filter("both groups present", |(_, w)| w.iter().any(|&b| b) && w.iter().any(|&b| !b))
        .prop_map(|(rows, w)| {
            let n = rows.len();
            Dataset::new(Matrix::from_rows(&rows).unwrap(), w, vec![0.0; n]).unwrap()
        })
}

proptest! {
    #[test]
    fn psm_pairs_are_disjoint_within_caliper_and_maximal(
        (logits, w) in logits_and_treatment(),
        caliper in 0.0f64..1.5,
    ) {
        prop_assume!(w.iter().any(|&b| b));
        let m = psm_match(&logits, &w, caliper, MatchOrder::DescendingLogit).unwrap();
        let mut used = BTreeSet::new();
        for &(t, c) in &m.pairs {
            prop_assert!(w[t] && !w[c]);
            prop_assert!((logits[t] - logits[c]).abs() <= caliper);
            prop_assert!(used.insert(t) && used.insert(c));
        }
        for i in 0..w.len() {
            prop_assert_eq!(m.weights[i], if used.contains(&i) { 1.0 } else { 0.0 });
        }
        prop_assert_eq!(m.matched_treated, m.pairs.len());
        prop_assert_eq!(m.matched_control, m.pairs.len());
        // No leftover treated unit has a leftover control inside the caliper.
        for t in (0..w.len()).filter(|&i| w[i] && !used.contains(&i)) {
            for c in (0..w.len()).filter(|&i| !w[i] && !used.contains(&i)) {
                prop_assert!((logits[t] - logits[c]).abs() > caliper);
            }
        }
        m.check(&w).unwrap();
    }

    #[test]
    fn cem_weights_follow_stratum_ratios(data in dataset(), k in 2usize..5) {
        let spec = CoarseningSpec::uniform(CoarseningRule::FixedK(k), 2);
        let coarsened = coarsen(data.x(), &spec).unwrap();
        let options = CemOptions { mode: CemMode::Weights, totals: WeightTotals::Retained };
        let Ok(m) = cem_match(&data, &coarsened, options) else { return Ok(()) };
        let w = data.w();
        let mut cells: BTreeMap<Vec<u32>, (usize, usize)> = BTreeMap::new();
        for i in 0..data.n() {
            let e = cells.entry(coarsened.stratum_key(i).to_vec()).or_default();
            if w[i] { e.0 += 1 } else { e.1 += 1 }
        }
        let kept = |i: usize| {
            let (t, c) = cells[coarsened.stratum_key(i)];
            t > 0 && c > 0
        };
        let mt = (0..data.n()).filter(|&i| w[i] && kept(i)).count() as f64;
        let mc = (0..data.n()).filter(|&i| !w[i] && kept(i)).count() as f64;
        let mut control_total = 0.0;
        for i in 0..data.n() {
            let (st, sc) = cells[coarsened.stratum_key(i)];
            let expected = if !kept(i) {
                0.0
            } else if w[i] {
                1.0
            } else {
                (mc / mt) * (st as f64 / sc as f64)
            };
            prop_assert!((m.weights[i] - expected).abs() < 1e-12);
            if !w[i] {
                control_total += m.weights[i];
            }
        }
        prop_assert!((control_total - mc).abs() < 1e-9);
        prop_assert_eq!(m.matched_treated as f64, mt);
    }

    #[test]
    fn cem_one_to_one_pairs_share_strata(data in dataset(), k in 2usize..5) {
        let spec = CoarseningSpec::uniform(CoarseningRule::FixedK(k), 2);
        let coarsened = coarsen(data.x(), &spec).unwrap();
        let options = CemOptions { mode: CemMode::OneToOne, totals: WeightTotals::Retained };
        let Ok(m) = cem_match(&data, &coarsened, options) else { return Ok(()) };
        let w = data.w();
        let mut used = BTreeSet::new();
        let mut per_cell: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        for &(t, c) in &m.pairs {
            prop_assert!(w[t] && !w[c]);
            prop_assert_eq!(coarsened.stratum_key(t), coarsened.stratum_key(c));
            prop_assert!(used.insert(t) && used.insert(c));
            *per_cell.entry(coarsened.stratum_key(t).to_vec()).or_default() += 1;
        }
        let mut sizes: BTreeMap<Vec<u32>, (usize, usize)> = BTreeMap::new();
        for i in 0..data.n() {
            let e = sizes.entry(coarsened.stratum_key(i).to_vec()).or_default();
            if w[i] { e.0 += 1 } else { e.1 += 1 }
        }
        for (key, (t, c)) in sizes {
            prop_assert_eq!(per_cell.get(&key).copied().unwrap_or(0), t.min(c));
        }
    }
}
