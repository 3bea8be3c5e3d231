mod common;

use std::collections::BTreeMap;

use common::*;
use dpjoin::experiment::{run_experiment, ExperimentSpec, Pipeline};
use dpjoin::hard::*;
use dpjoin::queries::random_sign_family;
use dpjoin::relational::{count, degrees, join_materialize};
use dpjoin::release::{bucket_index, partition_two_table};
use dpjoin::sensitivity::local_sensitivity;
use dpjoin::{Error, FixedNoise, PrivacyParams};

fn check_declared(g: &Generated) {
    assert_eq!(count(&g.instance).unwrap(), g.declared_count);
    assert_eq!(oracle_count(&g.instance), g.declared_count);
    if let Some(ls) = g.declared_ls {
        assert_eq!(local_sensitivity(&g.instance).unwrap(), ls);
    }
}

#[test]
fn lb2_nine_tuples_delta_three() {
    let g = GeneratorSpec::Lb2 { n: 9, delta: 3, domain: None }.generate().unwrap();
    assert_eq!(g.declared_count, 27);
    assert_eq!(g.declared_ls, Some(3));
    check_declared(&g);
}

#[test]
fn lb2_unit_delta_is_identity_lift() {
    let t = SingleTable::new(vec![2, 0, 3]).unwrap();
    let g = gen_two_table_lb(&t, 1).unwrap();
    assert_eq!(count(&g.instance).unwrap(), t.n());
    let q = [0.5, -1.0, 0.25];
    let lifted = dpjoin::queries::eval_instance(&lift_two_table(&g, &q).unwrap(), &g.instance).unwrap();
    assert_eq!(lifted, t.eval(&q));
}

#[test]
fn declared_statistics_match_for_every_generator() {
    let specs = [
        GeneratorSpec::Lb2 { n: 12, delta: 5, domain: Some(4) },
        GeneratorSpec::MultiLb { n: 6, delta: 4, relations: 3, domain: Some(3) },
        GeneratorSpec::MultiLb { n: 5, delta: 27, relations: 4, domain: None },
        GeneratorSpec::Staircase { sqrt_n: 7 },
        GeneratorSpec::Gap { k: 8 },
        GeneratorSpec::Gap { k: 64 },
        GeneratorSpec::Conforming { lambda: 1.0, buckets: vec![(1, 8), (3, 64)] },
        GeneratorSpec::Conforming { lambda: 2.5, buckets: vec![(2, 30)] },
    ];
    for s in specs {
        let g = s.generate().unwrap();
        check_declared(&g);
    }
}

#[test]
fn multi_lb_two_relations_has_two_table_shape() {
    let q = dpjoin::JoinQuery::from_names(&[("A", 1), ("B", 1)], &[&["A"], &["A", "B"]]).unwrap();
    let g = gen_multi_table_lb(&q, &SingleTable::spread(6, 3).unwrap(), 3).unwrap();
    assert_eq!(g.achieved_delta, Some(3));
    check_declared(&g);
}

#[test]
fn multi_lb_rounds_delta_down() {
    let g = gen_multi_table_lb(&star_query(3).unwrap(), &SingleTable::spread(4, 2).unwrap(), 10).unwrap();
    assert_eq!(g.achieved_delta, Some(9));
    assert_eq!(count(&g.instance).unwrap(), 36);
}

#[test]
fn staircase_arithmetic() {
    for s in 1..=8u32 {
        let g = gen_staircase(s).unwrap();
        let s = s as u64;
        assert_eq!(g.instance.input_size(), s * (s + 1));
        assert_eq!(count(&g.instance).unwrap(), (1..=s).map(|i| i * i).sum::<u64>());
    }
}

#[test]
fn staircase_zero_noise_partition_buckets() {
    let g = gen_staircase(4).unwrap();
    let p = PrivacyParams::new(1.0, 0.1).unwrap();
    let part = partition_two_table(&g.instance, p, 1.0, &mut FixedNoise::Zero).unwrap();
    let buckets: Vec<u32> = part.bucket_map.values().copied().collect();
    assert_eq!(buckets, [1, 1, 2, 2]);
    assert_eq!(part.parts.len(), 2);
}

#[test]
fn gap_degree_census_is_exact() {
    for k in [8u64, 64] {
        let g = gen_gap(k).unwrap();
        let p = k.trailing_zeros() / 3;
        let mut expected = Vec::new();
        for i in 0..=2 * p {
            expected.extend(std::iter::repeat_n(1u64 << i, ((k * k) >> (3 * i)) as usize));
        }
        for rel in 0..2 {
            let got: Vec<u64> = degrees(&g.instance, rel, &[1]).unwrap().into_values().collect();
            assert_eq!(got, expected, "k = {k}, relation {rel}");
        }
        assert_eq!(local_sensitivity(&g.instance).unwrap(), 1 << (2 * p));
    }
    assert!(matches!(gen_gap(16), Err(Error::NonPower { .. })));
    assert!(matches!(gen_gap(0), Err(Error::NonPower { .. })));
}

#[test]
fn gap_zero_noise_buckets_follow_degree_classes() {
    let g = gen_gap(64).unwrap();
    let lambda = 1.5;
    let p = PrivacyParams::new(1.0, 0.1).unwrap();
    let part = partition_two_table(&g.instance, p, lambda, &mut FixedNoise::Zero).unwrap();
    let mut want: BTreeMap<u32, u64> = BTreeMap::new();
    for i in 0..=4u32 {
        *want.entry(bucket_index(2f64.powi(i as i32), lambda)).or_default() += 4096 >> (3 * i);
    }
    let got: BTreeMap<u32, u64> = part
        .parts
        .iter()
        .map(|s| (s.bucket, degrees(&s.instance, 0, &[1]).unwrap().len() as u64))
        .collect();
    assert_eq!(got, want);
}

#[test]
fn conforming_census_under_zero_noise() {
    let g = gen_bucket_conforming(&[(1, 8), (3, 64)], 1.0).unwrap();
    let p = PrivacyParams::new(1.0, 0.1).unwrap();
    let part = partition_two_table(&g.instance, p, 1.0, &mut FixedNoise::Zero).unwrap();
    let mass: BTreeMap<u32, u64> = part
        .parts
        .iter()
        .map(|s| (s.bucket, join_materialize(&s.instance).unwrap().total))
        .collect();
    assert_eq!(mass, BTreeMap::from([(1, 8), (3, 64)]));
    let single = gen_bucket_conforming(&[(2, 12)], 1.0).unwrap();
    assert_eq!(single.declared_ls, Some(4));
    assert_eq!(count(&single.instance).unwrap(), 12);
}

#[test]
fn exact_pipeline_has_zero_error() {
    let inst = two_by_two();
    let fam = random_sign_family(inst.query(), 32, 1, true).unwrap();
    let spec = ExperimentSpec::new(Pipeline::Exact, PrivacyParams::new(1.0, 0.01).unwrap(), vec![1, 2, 3]);
    let t = run_experiment(&inst, &fam, &spec).unwrap();
    assert!(t.rows.iter().all(|r| r.max_error == 0.0));
}

#[test]
fn experiments_replay_and_stay_inside_envelope() {
    let inst = two_by_two();
    let fam = random_sign_family(inst.query(), 16, 9, true).unwrap();
    let mut spec = ExperimentSpec::new(Pipeline::TwoTable, PrivacyParams::new(2.0, 2f64.powi(-10)).unwrap(), (0..21).collect());
    let a = run_experiment(&inst, &fam, &spec).unwrap();
    spec.threads = Some(1);
    let b = run_experiment(&inst, &fam, &spec).unwrap();
    for (x, y) in a.rows.iter().zip(&b.rows) {
        let mut y = y.clone();
        y.wall_ms = x.wall_ms;
        assert_eq!(*x, y);
    }
    assert!(a.rows.iter().all(|r| r.ratio <= 10.0), "{:?}", a.summary);
}

#[test]
fn error_table_csv_header() {
    let inst = two_by_two();
    let fam = random_sign_family(inst.query(), 4, 2, false).unwrap();
    let spec = ExperimentSpec::new(Pipeline::MultiTable, PrivacyParams::new(1.0, 0.01).unwrap(), vec![5]);
    let t = run_experiment(&inst, &fam, &spec).unwrap();
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "seed,pipeline,epsilon,delta,count,delta_tilde,max_error,envelope,ratio,wall_ms"
    );
    assert_eq!(text.lines().count(), 2);
    let json: serde_json::Value = serde_json::from_str(&t.to_json().unwrap()).unwrap();
    assert_eq!(json["rows"][0]["pipeline"], "multi_table");
}
