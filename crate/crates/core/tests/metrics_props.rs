mod common;

use bian::metrics::{auroc, mean_std};
use common::pair_count_auroc;
use proptest::prelude::*;

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..200).prop_flat_map(|n| {
        (
            // A coarse grid makes ties common.
            prop::collection::vec((-20i32..20).prop_map(|k| k as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn equals_pair_counting((s, y) in scored()) {
        let has_both = y.iter().any(|&b| b) && y.iter().any(|&b| !b);
        match auroc(&s, &y) {
            Ok(a) => {
                prop_assert!(has_both);
                prop_assert_eq!(a, pair_count_auroc(&s, &y));
            }
            Err(_) => prop_assert!(!has_both),
        }
    }

    #[test]
    fn invariant_under_monotone_maps((s, y) in scored()) {
        prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
        let a = auroc(&s, &y).unwrap();
        let exp: Vec<f64> = s.iter().map(|x| x.exp()).collect();
        let affine: Vec<f64> = s.iter().map(|x| 3.0 * x - 7.0).collect();
        prop_assert_eq!(auroc(&exp, &y).unwrap(), a);
        prop_assert_eq!(auroc(&affine, &y).unwrap(), a);
        let flipped: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((auroc(&flipped, &y).unwrap() - (1.0 - a)).abs() < 1e-12);
    }
}

#[test]
fn small_cases() {
    assert_eq!(auroc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
    assert_eq!(auroc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
    assert_eq!(auroc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    assert_eq!(auroc(&[0.8, 0.8, 0.3], &[true, false, true]).unwrap(), 0.25);
    assert!(auroc(&[0.5, f64::NAN], &[false, true]).is_err());
    assert!(auroc(&[0.5], &[false, true]).is_err());
}

#[test]
fn sample_standard_deviation() {
    let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
    assert_eq!(m, 5.0);
    assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
}
