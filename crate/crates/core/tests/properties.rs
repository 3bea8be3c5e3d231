mod common;

use common::*;
use dpjoin::hierarchical::{partition_hierarchical, AttributeForest, DegreeConfiguration, rs_under_config};
use dpjoin::noise::{exp_mechanism, sample_tlap};
use dpjoin::pmw::mw_update;
use dpjoin::relational::io::{instance_to_json, parse_instance};
use dpjoin::relational::{count, join_materialize, neighbor};
use dpjoin::release::{bucket_index, partition_two_table};
use dpjoin::sensitivity::{local_sensitivity, residual_sensitivity};
use dpjoin::{PrivacyParams, RngStream};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tlap_stays_in_support(scale in 1e-6f64..50.0, tau in 1e-3f64..50.0, seed: u64) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        for _ in 0..64 {
            let x = sample_tlap(scale, tau, &mut rng);
            prop_assert!((0.0..=2.0 * tau).contains(&x));
        }
    }

    #[test]
    fn em_ignores_score_offsets(eighths in prop::collection::vec(-160i32..160, 1..12), shift in -100i32..100, eps in 0.01f64..5.0, seed: u64) {
        // Multiples of 1/8 plus integer shifts are exact, so s − max is bit-identical.
        let scores: Vec<f64> = eighths.iter().map(|&k| k as f64 / 8.0).collect();
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift as f64).collect();
        let a = exp_mechanism(&scores, eps, 1.0, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
        let b = exp_mechanism(&shifted, eps, 1.0, &mut ChaCha12Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(a, b);
        prop_assert!(a < scores.len());
    }

    #[test]
    fn mw_update_keeps_total(prev in prop::collection::vec(0.01f64..10.0, 1..40), seed: u64, m in -50.0f64..50.0, n_hat in 0.1f64..100.0) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let q: Vec<f64> = prev.iter().map(|_| rand::Rng::gen_range(&mut rng, -1.0..=1.0)).collect();
        let (next, _) = mw_update(&prev, &q, m, n_hat);
        let total: f64 = next.iter().sum();
        prop_assert!((total - n_hat).abs() <= 1e-9 * n_hat);
        prop_assert!(next.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn bucket_interval_contains_degree(deg in 1e-3f64..1e6, lambda in 1e-2f64..100.0) {
        let i = bucket_index(deg, lambda);
        prop_assert!(i >= 1);
        prop_assert!(deg <= lambda * 2f64.powi(i as i32) * (1.0 + 1e-12));
        if i > 1 {
            prop_assert!(deg > lambda * 2f64.powi(i as i32 - 1) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn join_count_matches_oracle(seed: u64) {
        let mut r = rng(seed);
        let q = random_query(&mut r, 3, 3);
        let inst = random_instance(&mut r, &q, 0.5, 3);
        prop_assert_eq!(count(&inst).unwrap(), oracle_count(&inst));
    }

    #[test]
    fn residual_dominates_local_and_is_smooth(seed: u64, beta in 0.05f64..2.0) {
        let mut r = rng(seed);
        let q = random_query(&mut r, 3, 3);
        let inst = random_instance(&mut r, &q, 0.5, 3);
        let nb = neighbor(&inst, seed ^ 0x5eed);
        let a = residual_sensitivity(&inst, beta).unwrap().residual;
        let b = residual_sensitivity(&nb, beta).unwrap().residual;
        prop_assert!(a >= local_sensitivity(&inst).unwrap() as f64);
        prop_assert!(b <= beta.exp() * a + 1e-9);
    }

    #[test]
    fn two_table_partition_is_a_tuple_partition(seed: u64, lambda in 0.2f64..4.0) {
        let mut r = rng(seed);
        let inst = random_two_table(&mut r, 6, 3);
        let part = partition_two_table(&inst, PrivacyParams::new(1.0, 0.01).unwrap(), lambda, &mut RngStream::new(seed, 0)).unwrap();
        for j in 0..2 {
            let mut merged = dpjoin::Relation::new();
            for p in &part.parts {
                for (t, &f) in p.instance.relation(j).support() {
                    prop_assert_eq!(merged.get(t), 0);
                    merged.add(t.clone(), f);
                }
            }
            // Tuples whose join value has zero degree on both sides cannot exist, so nothing is lost.
            prop_assert_eq!(&merged, inst.relation(j));
        }
    }

    #[test]
    fn hierarchical_partition_preserves_join(seed: u64, lambda in 0.3f64..3.0) {
        let mut r = rng(seed);
        let n = rand::Rng::gen_range(&mut r, 2..=5);
        let q = random_hierarchical_query(&mut r, n, 3);
        let inst = random_instance(&mut r, &q, 0.5, 3);
        let hp = partition_hierarchical(&inst, PrivacyParams::new(1.0, 0.01).unwrap(), lambda, &mut RngStream::new(seed, 1)).unwrap();
        let mut total = std::collections::BTreeMap::new();
        for p in &hp.parts {
            for (t, w) in join_materialize(&p.instance).unwrap().entries {
                prop_assert!(total.insert(t, w).is_none());
            }
        }
        prop_assert_eq!(total, join_materialize(&inst).unwrap().entries);
    }

    #[test]
    fn rs_under_config_monotone(seed: u64, beta in 0.1f64..1.5, lambda in 0.5f64..4.0) {
        let mut r = rng(seed);
        let n = rand::Rng::gen_range(&mut r, 2..=6);
        let q = random_hierarchical_query(&mut r, n, 2);
        let f = AttributeForest::new(&q).unwrap();
        let sigma = DegreeConfiguration((0..f.len()).map(|n| (n, rand::Rng::gen_range(&mut r, 1..=3))).collect());
        if let Ok(base) = rs_under_config(&q, &sigma, beta, lambda) {
            for node in 0..f.len() {
                let mut up = sigma.clone();
                *up.0.get_mut(&node).unwrap() += 1;
                prop_assert!(rs_under_config(&q, &up, beta, lambda).unwrap() >= base);
            }
        }
    }

    #[test]
    fn instance_json_round_trips(seed: u64) {
        let mut r = rng(seed);
        let q = random_query(&mut r, 3, 4);
        let inst = random_instance(&mut r, &q, 0.4, 5);
        prop_assert_eq!(parse_instance(&instance_to_json(&inst)).unwrap(), inst);
    }
}
