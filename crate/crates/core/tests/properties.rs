use proptest::prelude::*;

use surrogate_core::dataset::{extract_fold, generate_synthetic, split_holdout, Standardizer, SyntheticSpec};
use surrogate_core::featsel::{correlation_map, select_features};
use surrogate_core::harness::rank_cases;
use surrogate_core::tuning::{mse, sample_candidates, ParamRange, ParamSpace};
use surrogate_core::model::ModelKind;
use surrogate_core::Matrix;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-1e3f64..1e3, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn shaped_pair() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1usize..20, 1usize..10).prop_flat_map(|(r, c)| (matrix(r, c), matrix(r, c)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mse_is_symmetric_and_nonnegative((a, b) in shaped_pair()) {
        let ab = mse(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, mse(&b, &a).unwrap());
        prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn standardized_columns_are_centered(x in (2usize..40, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))) {
        let s = Standardizer::fit(&x).unwrap();
        prop_assert!(s.std.iter().all(|&v| v > 0.0));
        let z = s.transform(&x).unwrap();
        for c in 0..z.cols() {
            let m = z.column(c).iter().sum::<f64>() / z.rows() as f64;
            prop_assert!(m.abs() <= 1e-9);
        }
    }

    #[test]
    fn correlations_are_bounded_and_selection_partitions(
        (x, y) in (3usize..30).prop_flat_map(|n| (matrix(n, 4), matrix(n, 3))),
        threshold in 0.0f64..0.3,
    ) {
        let names = |p: &str, k: usize| (0..k).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
        let c = correlation_map(&x, &y, names("x", 4), names("y", 3)).unwrap();
        prop_assert!(c.r.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        if let Ok(s) = select_features(&c, threshold) {
            let mut all: Vec<usize> = s.kept.iter().chain(&s.dropped).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, vec![0, 1, 2, 3]);
            prop_assert!(!s.kept.is_empty());
        }
    }

    #[test]
    fn case_ranking_respects_order(v in prop::collection::vec(0.0f64..10.0, 3..40)) {
        let (g, a, p) = rank_cases(&v).unwrap();
        prop_assert!(v.iter().all(|&x| v[g] <= x && x <= v[p]));
        prop_assert!(v[g] <= v[a] && v[a] <= v[p]);
    }

    #[test]
    fn folds_partition_training_rows(n in 10usize..120, seed in any::<u64>()) {
        let d = generate_synthetic(&SyntheticSpec { n_records: n, seed, ..SyntheticSpec::default() }).unwrap();
        let (train, test) = split_holdout(&d).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        for k in 0..5 {
            if let Ok((fit, val)) = extract_fold(&train, k) {
                prop_assert_eq!(fit.len() + val.len(), train.len());
                prop_assert!(val.row_ids.iter().all(|id| !fit.row_ids.contains(id)));
            }
        }
    }

    #[test]
    fn sampled_values_stay_in_range(seed in any::<u64>(), lo in 1i64..5, span in 0i64..6) {
        let space = ParamSpace::new(ModelKind::Forest)
            .with("n_estimators", ParamRange::IntRange { lo, hi: lo + span })
            .with("max_features", ParamRange::LogUniform { lo: 0.2, hi: 0.9 });
        for c in sample_candidates(&space, 10, seed).unwrap() {
            let n = c.assignments["n_estimators"].to_string().parse::<i64>().unwrap();
            prop_assert!((lo..=lo + span).contains(&n));
            let f = c.assignments["max_features"].to_string().parse::<f64>().unwrap();
            prop_assert!((0.2..=0.9).contains(&f));
        }
    }
}
