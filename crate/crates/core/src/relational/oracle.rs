//! Brute-force reference implementations. They enumerate the whole joined
//! domain and are only meant for tiny instances in tests.

use std::collections::BTreeMap;

use super::{DenseDomain, Instance};

fn project(full: &[u32], attrs: &[usize]) -> Vec<u32> {
    attrs.iter().map(|&a| full[a]).collect()
}

/// Join by nested loops over every cell of D.
pub fn join(instance: &Instance) -> BTreeMap<Vec<u32>, u64> {
    let q = instance.query();
    let dom = DenseDomain::new(q.domain_sizes());
    let mut out = BTreeMap::new();
    for cell in dom.cells() {
        let w: u64 = (0..q.arity())
            .map(|i| instance.relation(i).get(&project(&cell, q.edge(i))))
            .product();
        if w > 0 {
            out.insert(cell, w);
        }
    }
    out
}

pub fn count(instance: &Instance) -> u64 {
    join(instance).values().sum()
}

/// T_E by trying every assignment of the boundary attributes and summing
/// the matching sub-join cells.
pub fn boundary_query(instance: &Instance, rels: &[usize]) -> u64 {
    let q = instance.query();
    if rels.is_empty() {
        return 1;
    }
    let attrs = q.attrs_of(rels);
    let boundary = q.boundary(rels);
    let sizes = q.domain_sizes();
    let bdom = DenseDomain::new(boundary.iter().map(|&a| sizes[a]).collect());
    let inner: Vec<usize> = attrs.iter().copied().filter(|a| !boundary.contains(a)).collect();
    let idom = DenseDomain::new(inner.iter().map(|&a| sizes[a]).collect());
    let mut best = 0;
    for b in bdom.cells() {
        let mut total = 0u64;
        for c in idom.cells() {
            let mut full = vec![0u32; sizes.len()];
            for (&a, &v) in boundary.iter().zip(&b) {
                full[a] = v;
            }
            for (&a, &v) in inner.iter().zip(&c) {
                full[a] = v;
            }
            total += rels
                .iter()
                .map(|&i| instance.relation(i).get(&project(&full, q.edge(i))))
                .product::<u64>();
        }
        best = best.max(total);
    }
    best
}

/// The linear query value Σ_t ∏_i w_i(π_i t)·R_i(π_i t) over all of D.
pub fn eval<F: Fn(usize, &[u32]) -> f64>(instance: &Instance, weight: F) -> f64 {
    let q = instance.query();
    let dom = DenseDomain::new(q.domain_sizes());
    let mut total = 0.0;
    for cell in dom.cells() {
        let mut term = 1.0;
        for i in 0..q.arity() {
            let t = project(&cell, q.edge(i));
            term *= weight(i, &t) * instance.relation(i).get(&t) as f64;
            if term == 0.0 {
                break;
            }
        }
        total += term;
    }
    total
}
