use coded_stream::gradcode::{
    coded_aggregate, encode_tasks, fractional_repetition_code, least_squares_combination,
    rowspan_contains_ones, validate_code,
};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn small_int_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
        prop::collection::vec(-2i32..=2, r * c)
            .prop_map(move |v| DMatrix::from_iterator(r, c, v.into_iter().map(f64::from)))
    })
}

proptest! {
    #[test]
    fn elimination_agrees_with_least_squares(m in small_int_matrix()) {
        let (_, residual) = least_squares_combination(&m).unwrap();
        prop_assert_eq!(rowspan_contains_ones(&m), residual <= 1e-9, "residual {}", residual);
    }

    #[test]
    fn replication_codes_decode(
        (k, omega, m, d) in prop_oneof![
            Just((2usize, 1.5f64, 3usize, 2usize)),
            Just((5, 1.2, 6, 2)),
            Just((4, 1.0, 8, 2)),
            Just((7, 1.29, 9, 3)),
            Just((3, 1.34, 4, 2)),
            Just((4, 1.25, 5, 2)),
        ],
        seed in 0u64..50,
    ) {
        let code = fractional_repetition_code(k, omega, m, d).unwrap();
        prop_assert!(validate_code(&code).unwrap().valid);
        let g: Vec<Vec<f64>> = (0..m).map(|j| vec![(seed as f64 + 1.0) * (j as f64 - 1.5), 1.0]).collect();
        let truth: Vec<f64> = (0..2).map(|i| g.iter().map(|x| x[i]).sum()).collect();
        let results = encode_tasks(&code, &g).unwrap();
        let subset: Vec<usize> = (0..code.tasks()).rev().take(code.k()).collect::<Vec<_>>().into_iter().rev().collect();
        let picked: Vec<Vec<f64>> = subset.iter().map(|&i| results[i].clone()).collect();
        let agg = coded_aggregate(&code, &subset, &picked).unwrap();
        for (a, t) in agg.iter().zip(&truth) {
            prop_assert!((a - t).abs() <= 1e-8 * (1.0 + t.abs()));
        }
    }
}
