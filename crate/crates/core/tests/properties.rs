mod common;

use common::*;
use mmbn_core::margin::mclr;
use mmbn_core::renorm::renormalize;
use mmbn_core::{Dataset, ParamVector};
use proptest::prelude::*;
use rand::Rng;

fn normalized_theta(r: &mut rand_chacha::ChaCha8Rng, net: &mmbn_core::Network) -> Vec<f64> {
    let mut theta = vec![0.0; net.dim()];
    for (start, len) in column_spans(net) {
        let raw: Vec<f64> = (0..len).map(|_| r.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for k in 0..len {
            theta[start + k] = raw[k] / total;
        }
    }
    theta
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn joint_probabilities_sum_to_one(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, n);
        let w = ParamVector::from_theta(&net, &normalized_theta(&mut r, &net)).unwrap();
        let arities: Vec<usize> = (0..net.num_nodes()).map(|j| net.arity(j)).collect();
        let total: f64 = assignments(&arities).iter().map(|v| net.log_prob(&w, v).unwrap().exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "{}", total);
    }

    #[test]
    fn prediction_is_the_enumerated_argmax(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, n);
        let w: Vec<f64> = (0..net.dim()).map(|_| r.gen_range(-4.0..0.0)).collect();
        let row: Vec<usize> = (0..net.num_nodes()).map(|j| r.gen_range(0..net.arity(j))).collect();
        let y = net.class_vars()[0];
        let scores: Vec<f64> = (0..net.arity(y))
            .map(|v| {
                let mut vals = row.clone();
                vals[y] = v;
                log_score(&net, &w, &vals)
            })
            .collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let expected = scores.iter().position(|&s| s == best).unwrap();
        prop_assert_eq!(net.predict_row(&params(w), &row).unwrap(), vec![expected]);
    }

    #[test]
    fn renormalization_is_idempotent(seed in any::<u64>(), n in 2usize..=7) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, n);
        let y = net.class_vars()[0];
        let once = renormalize(&net, &params(random_subnormalized(&mut r, &net)), y).unwrap();
        prop_assert!(once.is_normalized(&net));
        let twice = renormalize(&net, &once, y).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn renormalization_keeps_every_decision(seed in any::<u64>(), n in 2usize..=7) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, n);
        let y = net.class_vars()[0];
        let w = params(random_subnormalized(&mut r, &net));
        let out = renormalize(&net, &w, y).unwrap();
        let before = conditional_table(&net, w.as_slice(), y);
        let after = conditional_table(&net, out.as_slice(), y);
        prop_assert!(max_table_deviation(&before, &after) <= 1e-9);
        let arities: Vec<usize> = (0..net.num_nodes()).map(|j| net.arity(j)).collect();
        for (row, p) in assignments(&arities).iter().filter(|v| v[y] == 0).zip(&before) {
            // skip near-ties, where rounding may pick either label
            if (p[0] - p[1]).abs() > 1e-9 {
                prop_assert_eq!(net.predict_row(&w, row).unwrap(), net.predict_row(&out, row).unwrap());
            }
        }
    }

    #[test]
    fn positive_mclr_iff_training_set_is_classified(seed in any::<u64>(), t in 1usize..=6) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, 4);
        let data = random_dataset(&mut r, &net, t);
        let w = params(random_subnormalized(&mut r, &net));
        let m = mclr(&net, &w, &data).unwrap();
        let all_right = data.rows().iter().all(|row| {
            net.predict_row(&w, row).unwrap() == net.labels_of(row)
        });
        if m.abs() > 1e-12 {
            prop_assert_eq!(m > 0.0, all_right);
        }
    }

    #[test]
    fn dataset_csv_round_trip(seed in any::<u64>(), t in 0usize..=8) {
        let mut r = rng(seed);
        let net = random_prop2_network(&mut r, 5);
        let data = random_dataset(&mut r, &net, t);
        let back = Dataset::from_csv_str(&net, &data.to_csv_string()).unwrap();
        prop_assert_eq!(back.rows(), data.rows());
    }
}
