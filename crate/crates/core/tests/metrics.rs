use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use scene_core::eval::{confusion_and_accuracy, linear_fit, mean_average_precision, EvalReport};

fn case(c: usize) -> impl Strategy<Value = (Vec<Vec<f32>>, Vec<usize>)> {
    (1usize..60).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(0.0f32..=1.0, c), n),
            prop::collection::vec(0..c, n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn joint_permutation_changes_nothing((scores, truth) in case(5), seed in any::<u64>()) {
        let mut order: Vec<usize> = (0..truth.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let s2: Vec<_> = order.iter().map(|&i| scores[i].clone()).collect();
        let t2: Vec<_> = order.iter().map(|&i| truth[i]).collect();
        let (a, b) = (mean_average_precision(&scores, &truth, 5).unwrap(), mean_average_precision(&s2, &t2, 5).unwrap());
        prop_assert!((a.map - b.map).abs() < 1e-12);
        let (ca, aa) = confusion_and_accuracy(&scores, &truth, 5).unwrap();
        let (cb, ab) = confusion_and_accuracy(&s2, &t2, 5).unwrap();
        prop_assert_eq!(ca, cb);
        prop_assert_eq!(aa, ab);
    }

    #[test]
    fn increasing_transforms_keep_the_confusion_matrix((scores, truth) in case(4)) {
        let squashed: Vec<Vec<f32>> = scores.iter().map(|r| r.iter().map(|&v| (v * 3.0).exp() / 30.0).collect()).collect();
        prop_assert_eq!(confusion_and_accuracy(&scores, &truth, 4).unwrap(), confusion_and_accuracy(&squashed, &truth, 4).unwrap());
    }

    #[test]
    fn report_rows_count_each_true_label((scores, truth) in case(3)) {
        let labels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = EvalReport::compute(&scores, &truth, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.map));
        for (i, row) in r.confusion.iter().enumerate() {
            prop_assert_eq!(row.iter().sum::<u64>() as usize, truth.iter().filter(|&&t| t == i).count());
        }
        let trace: u64 = (0..3).map(|i| r.confusion[i][i]).sum();
        prop_assert_eq!(r.accuracy, trace as f64 / truth.len() as f64);
    }

    #[test]
    fn noiseless_lines_are_recovered(slope in -100.0f64..100.0, intercept in -100.0f64..100.0, n in 2usize..12) {
        let x: Vec<f64> = (0..n).map(|i| 1.0 + 2.5 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| slope * v + intercept).collect();
        let f = linear_fit(&x, &y).unwrap();
        prop_assert!((f.slope - slope).abs() <= 1e-9 * slope.abs().max(1.0));
        prop_assert!((f.intercept - intercept).abs() <= 1e-9 * intercept.abs().max(1.0) * 10.0);
    }
}
