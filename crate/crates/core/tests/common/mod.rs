#![allow(dead_code)]

use std::collections::BTreeMap;

use dpjoin::{Attribute, Instance, JoinQuery, Relation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `max_m` relations over up to four attributes with domains ≤ `max_dom`.
pub fn random_query<R: Rng>(rng: &mut R, max_m: usize, max_dom: u32) -> JoinQuery {
    let n_attrs = rng.gen_range(1..=4usize);
    let m = rng.gen_range(1..=max_m);
    let attrs: Vec<Attribute> = (0..n_attrs)
        .map(|i| Attribute::new(format!("X{i}"), rng.gen_range(1..=max_dom)))
        .collect();
    let mut edges: Vec<Vec<usize>> = (0..m)
        .map(|_| {
            let e: Vec<usize> = (0..n_attrs).filter(|_| rng.gen_bool(0.5)).collect();
            if e.is_empty() {
                vec![rng.gen_range(0..n_attrs)]
            } else {
                e
            }
        })
        .collect();
    for a in 0..n_attrs {
        if !edges.iter().any(|e| e.contains(&a)) {
            let r = rng.gen_range(0..m);
            edges[r].push(a);
            edges[r].sort_unstable();
        }
    }
    JoinQuery::new(attrs, edges).unwrap()
}

/// Each tuple of each relation's domain present with probability `p`, frequency 1..=max_freq.
pub fn random_instance<R: Rng>(rng: &mut R, query: &JoinQuery, p: f64, max_freq: u64) -> Instance {
    let relations = (0..query.arity())
        .map(|i| {
            let dom = query.relation_domain(i);
            let mut r = Relation::new();
            for t in all_tuples(&dom) {
                if rng.gen_bool(p) {
                    r.add(t, rng.gen_range(1..=max_freq));
                }
            }
            r
        })
        .collect();
    Instance::new(query.clone(), relations).unwrap()
}

pub fn all_tuples(dom: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &d in dom {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..d).map(move |v| {
                    let mut t = t.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
    }
    out
}

/// A two-relation chain A–B–C with random domains.
pub fn random_two_table<R: Rng>(rng: &mut R, max_dom: u32, max_freq: u64) -> Instance {
    let q = JoinQuery::from_names(
        &[
            ("A", rng.gen_range(1..=max_dom)),
            ("B", rng.gen_range(1..=max_dom)),
            ("C", rng.gen_range(1..=max_dom)),
        ],
        &[&["A", "B"], &["B", "C"]],
    )
    .unwrap();
    let p = rng.gen_range(0.2..0.9);
    random_instance(rng, &q, p, max_freq)
}

/// A random attribute forest; relations are the root-to-leaf paths plus some
/// root-to-internal paths.
pub fn random_hierarchical_query<R: Rng>(rng: &mut R, n_attrs: usize, max_dom: u32) -> JoinQuery {
    let parent: Vec<Option<usize>> = (0..n_attrs)
        .map(|i| if i == 0 || rng.gen_bool(0.15) { None } else { Some(rng.gen_range(0..i)) })
        .collect();
    let path = |mut n: usize| {
        let mut p = vec![n];
        while let Some(q) = parent[n] {
            p.push(q);
            n = q;
        }
        p.sort_unstable();
        p
    };
    let mut edges: Vec<Vec<usize>> = Vec::new();
    for n in 0..n_attrs {
        let leaf = !parent.contains(&Some(n));
        if leaf || rng.gen_bool(0.2) {
            let p = path(n);
            if !edges.contains(&p) {
                edges.push(p);
            }
        }
    }
    let attrs: Vec<Attribute> = (0..n_attrs)
        .map(|i| Attribute::new(format!("X{i}"), rng.gen_range(1..=max_dom)))
        .collect();
    JoinQuery::new(attrs, edges).unwrap()
}

/// Five-relation hierarchical query: x1={A,B,D}, x2={A,B,F}, x3={A,B,G,K}, x4={A,B,G,L}, x5={A,C}.
pub fn five_relation_query(dom: u32) -> JoinQuery {
    let names = ["A", "B", "C", "D", "F", "G", "K", "L"];
    let attrs: Vec<(&str, u32)> = names.iter().map(|&n| (n, dom)).collect();
    JoinQuery::from_names(
        &attrs,
        &[
            &["A", "B", "D"],
            &["A", "B", "F"],
            &["A", "B", "G", "K"],
            &["A", "B", "G", "L"],
            &["A", "C"],
        ],
    )
    .unwrap()
}

pub fn path3() -> JoinQuery {
    JoinQuery::from_names(
        &[("A", 2), ("B", 2), ("C", 2), ("D", 2)],
        &[&["A", "B"], &["B", "C"], &["C", "D"]],
    )
    .unwrap()
}

pub fn two_by_two() -> Instance {
    let q = JoinQuery::from_names(&[("A", 3), ("B", 2), ("C", 2)], &[&["A", "B"], &["B", "C"]]).unwrap();
    let r1 = Relation::from_tuples([(vec![1, 0], 1), (vec![2, 0], 1)]);
    let r2 = Relation::from_tuples([(vec![0, 0], 1), (vec![0, 1], 1)]);
    Instance::new(q, vec![r1, r2]).unwrap()
}

/// Nested loops over the listed relations' supports; yields full-width partial
/// assignments (None where unbound) with the product of frequencies.
pub fn nested_loop(instance: &Instance, rels: &[usize]) -> Vec<(Vec<Option<u32>>, u64)> {
    let q = instance.query();
    let mut acc: Vec<(Vec<Option<u32>>, u64)> = vec![(vec![None; q.attributes().len()], 1)];
    for &r in rels {
        let mut next = Vec::new();
        for (assign, w) in &acc {
            'tuples: for (t, &f) in instance.relation(r).support() {
                let mut a = assign.clone();
                for (&attr, &v) in q.edge(r).iter().zip(t) {
                    match a[attr] {
                        Some(x) if x != v => continue 'tuples,
                        _ => a[attr] = Some(v),
                    }
                }
                next.push((a, w * f));
            }
        }
        acc = next;
    }
    acc
}

pub fn oracle_join(instance: &Instance) -> BTreeMap<Vec<u32>, u64> {
    let all: Vec<usize> = (0..instance.query().arity()).collect();
    let mut out = BTreeMap::new();
    for (a, w) in nested_loop(instance, &all) {
        let t: Vec<u32> = a.into_iter().map(Option::unwrap).collect();
        *out.entry(t).or_insert(0) += w;
    }
    out
}

pub fn oracle_count(instance: &Instance) -> u64 {
    oracle_join(instance).values().sum()
}

/// max over ∂E-values of the semi-joined sub-join size; 1 for E = ∅.
pub fn oracle_boundary(instance: &Instance, rels: &[usize]) -> u64 {
    if rels.is_empty() {
        return 1;
    }
    let q = instance.query();
    let inside: Vec<usize> = rels.iter().flat_map(|&r| q.edge(r).to_vec()).collect();
    let outside: Vec<usize> = (0..q.arity())
        .filter(|r| !rels.contains(r))
        .flat_map(|r| q.edge(r).to_vec())
        .collect();
    let mut boundary: Vec<usize> = inside.into_iter().filter(|a| outside.contains(a)).collect();
    boundary.sort_unstable();
    boundary.dedup();
    let mut groups: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for (a, w) in nested_loop(instance, rels) {
        let key: Vec<u32> = boundary.iter().map(|&b| a[b].unwrap()).collect();
        *groups.entry(key).or_insert(0) += w;
    }
    groups.values().copied().max().unwrap_or(0)
}

/// Weights on multiples of 1/4 in [−1, 1] so that sums are exact in f64.
pub fn dyadic<R: Rng>(rng: &mut R) -> f64 {
    rng.gen_range(-4i32..=4) as f64 / 4.0
}

pub fn oracle_eval(instance: &Instance, weights: &[BTreeMap<Vec<u32>, f64>]) -> f64 {
    let q = instance.query();
    let all: Vec<usize> = (0..q.arity()).collect();
    nested_loop(instance, &all)
        .into_iter()
        .map(|(a, w)| {
            let t: Vec<u32> = a.into_iter().map(Option::unwrap).collect();
            let mut p = w as f64;
            for (i, edge) in q.edges().iter().enumerate() {
                let proj: Vec<u32> = edge.iter().map(|&x| t[x]).collect();
                p *= weights[i][&proj];
            }
            p
        })
        .sum()
}
