//! Join schemas, frequency relations and the exact join statistics built on them.

mod domain;
pub mod io;
mod join;
pub mod oracle;

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use domain::{Cells, DenseDomain};
pub(crate) use join::{for_each_join, sub_join};

/// Default cap on any materialized support (join, sub-join or dense domain).
pub const DEFAULT_SUPPORT_CAP: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub domain_size: u32,
}

impl Attribute {
    pub fn new(name: impl Into<String>, domain_size: u32) -> Self {
        Attribute {
            name: name.into(),
            domain_size,
        }
    }
}

/// A join hypergraph: attributes with finite domains and one edge per relation.
///
/// Edges are stored as ascending attribute indices; relation tuples follow that order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinQuery {
    attributes: Vec<Attribute>,
    edges: Vec<Vec<usize>>,
}

impl JoinQuery {
    pub fn new(attributes: Vec<Attribute>, edges: Vec<Vec<usize>>) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::InvalidSchema("a join needs at least one relation".into()));
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.domain_size == 0 {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` has an empty domain",
                    a.name
                )));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidSchema(format!(
                    "attribute `{}` declared twice",
                    a.name
                )));
            }
        }
        let mut sorted = Vec::with_capacity(edges.len());
        for (i, mut edge) in edges.into_iter().enumerate() {
            if edge.is_empty() {
                return Err(Error::InvalidSchema(format!("relation {i} has no attributes")));
            }
            let len = edge.len();
            edge.sort_unstable();
            edge.dedup();
            if edge.len() != len {
                return Err(Error::InvalidSchema(format!(
                    "relation {i} repeats an attribute"
                )));
            }
            if let Some(&bad) = edge.iter().find(|&&a| a >= attributes.len()) {
                return Err(Error::InvalidSchema(format!(
                    "relation {i} names unknown attribute index {bad}"
                )));
            }
            sorted.push(edge);
        }
        if let Some(a) = (0..attributes.len()).find(|a| !sorted.iter().any(|e| e.contains(a))) {
            return Err(Error::InvalidSchema(format!(
                "attribute `{}` belongs to no relation",
                attributes[a].name
            )));
        }
        Ok(JoinQuery {
            attributes,
            edges: sorted,
        })
    }

    /// Builds a query from `(name, domain_size)` pairs and edges given by name.
    pub fn from_names(attributes: &[(&str, u32)], edges: &[&[&str]]) -> Result<Self> {
        let attrs: Vec<Attribute> = attributes
            .iter()
            .map(|&(n, d)| Attribute::new(n, d))
            .collect();
        let lookup = |name: &str| {
            attrs
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| Error::InvalidSchema(format!("unknown attribute `{name}`")))
        };
        let edges = edges
            .iter()
            .map(|e| e.iter().map(|n| lookup(n)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        JoinQuery::new(attrs, edges)
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn name(&self, attr: usize) -> &str {
        &self.attributes[attr].name
    }

    /// Number of relations `m`.
    pub fn arity(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    pub fn edge(&self, relation: usize) -> &[usize] {
        &self.edges[relation]
    }

    pub fn domain_sizes(&self) -> Vec<u32> {
        self.attributes.iter().map(|a| a.domain_size).collect()
    }

    /// |D|, the size of the full joined domain.
    pub fn domain_size(&self) -> u128 {
        DenseDomain::cell_count(&self.domain_sizes())
    }

    pub fn relation_domain(&self, relation: usize) -> Vec<u32> {
        self.edges[relation]
            .iter()
            .map(|&a| self.attributes[a].domain_size)
            .collect()
    }

    /// Relations containing attribute `attr`, ascending.
    pub fn atom(&self, attr: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&i| self.edges[i].contains(&attr))
            .collect()
    }

    /// Union of the attributes of `rels`, ascending.
    pub fn attrs_of(&self, rels: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.attributes.len()];
        for &r in rels {
            for &a in &self.edges[r] {
                seen[a] = true;
            }
        }
        (0..seen.len()).filter(|&a| seen[a]).collect()
    }

    /// Attributes belonging to some relation in `rels` and some relation outside it.
    pub fn boundary(&self, rels: &[usize]) -> Vec<usize> {
        let inside = self.attrs_of(rels);
        let outside: Vec<usize> = (0..self.edges.len()).filter(|r| !rels.contains(r)).collect();
        let out_attrs = self.attrs_of(&outside);
        inside
            .into_iter()
            .filter(|a| out_attrs.binary_search(a).is_ok())
            .collect()
    }

    /// Splits `rels` into groups connected through shared attributes.
    pub fn components(&self, rels: &[usize]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = rels.to_vec();
        left.sort_unstable();
        left.dedup();
        let mut out = Vec::new();
        while let Some(first) = left.first().copied() {
            let mut comp = vec![first];
            left.remove(0);
            let mut grew = true;
            while grew {
                grew = false;
                let mut i = 0;
                while i < left.len() {
                    let r = left[i];
                    let touches = comp
                        .iter()
                        .any(|&c| self.edges[c].iter().any(|a| self.edges[r].contains(a)));
                    if touches {
                        comp.push(left.remove(i));
                        grew = true;
                    } else {
                        i += 1;
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// A frequency function over a relation's tuples; only positive frequencies are stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Relation {
    support: BTreeMap<Vec<u32>, u64>,
}

impl Relation {
    pub fn new() -> Self {
        Relation::default()
    }

    pub fn from_tuples<I: IntoIterator<Item = (Vec<u32>, u64)>>(tuples: I) -> Self {
        let mut r = Relation::new();
        for (t, f) in tuples {
            r.add(t, f);
        }
        r
    }

    /// Adds `freq` to the frequency of `tuple`.
    pub fn add(&mut self, tuple: Vec<u32>, freq: u64) {
        if freq > 0 {
            *self.support.entry(tuple).or_insert(0) += freq;
        }
    }

    pub fn get(&self, tuple: &[u32]) -> u64 {
        self.support.get(tuple).copied().unwrap_or(0)
    }

    pub fn support(&self) -> &BTreeMap<Vec<u32>, u64> {
        &self.support
    }

    /// Number of distinct tuples.
    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Sum of frequencies.
    pub fn size(&self) -> u64 {
        self.support.values().sum()
    }

    fn decrement(&mut self, tuple: &[u32]) -> bool {
        match self.support.get_mut(tuple) {
            Some(f) if *f > 1 => {
                *f -= 1;
                true
            }
            Some(_) => {
                self.support.remove(tuple);
                true
            }
            None => false,
        }
    }
}

/// One relation per hyperedge of the query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    query: JoinQuery,
    relations: Vec<Relation>,
}

impl Instance {
    pub fn new(query: JoinQuery, relations: Vec<Relation>) -> Result<Self> {
        if relations.len() != query.arity() {
            return Err(Error::InvalidInstance(format!(
                "query has {} relations but {} were supplied",
                query.arity(),
                relations.len()
            )));
        }
        for (i, rel) in relations.iter().enumerate() {
            let dom = query.relation_domain(i);
            for tuple in rel.support.keys() {
                if tuple.len() != dom.len() {
                    return Err(Error::InvalidInstance(format!(
                        "relation {i}: tuple {tuple:?} has arity {} but the schema has {}",
                        tuple.len(),
                        dom.len()
                    )));
                }
                if tuple.iter().zip(&dom).any(|(&v, &d)| v >= d) {
                    return Err(Error::InvalidInstance(format!(
                        "relation {i}: tuple {tuple:?} is outside the domain {dom:?}"
                    )));
                }
            }
        }
        Ok(Instance { query, relations })
    }

    pub fn empty(query: JoinQuery) -> Self {
        let relations = vec![Relation::new(); query.arity()];
        Instance { query, relations }
    }

    pub fn query(&self) -> &JoinQuery {
        &self.query
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    pub fn relation(&self, i: usize) -> &Relation {
        &self.relations[i]
    }

    /// Input size n: total frequency over all relations.
    pub fn input_size(&self) -> u64 {
        self.relations.iter().map(Relation::size).sum()
    }

    /// Changes the frequency of `tuple` in relation `i` by `delta`, refusing to go below zero.
    pub fn adjust(&mut self, i: usize, tuple: &[u32], delta: i64) -> Result<()> {
        if i >= self.relations.len() {
            return Err(Error::InvalidInstance(format!("no relation {i}")));
        }
        let dom = self.query.relation_domain(i);
        if tuple.len() != dom.len() || tuple.iter().zip(&dom).any(|(&v, &d)| v >= d) {
            return Err(Error::InvalidInstance(format!(
                "tuple {tuple:?} does not fit relation {i}"
            )));
        }
        let rel = &mut self.relations[i];
        let current = rel.get(tuple) as i64;
        let next = current + delta;
        if next < 0 {
            return Err(Error::InvalidInstance(format!(
                "frequency of {tuple:?} in relation {i} would become {next}"
            )));
        }
        if next == 0 {
            rel.support.remove(tuple);
        } else {
            rel.support.insert(tuple.to_vec(), next as u64);
        }
        Ok(())
    }

    /// Replaces the relations while keeping the query; used by partitioners.
    pub(crate) fn with_relations(&self, relations: Vec<Relation>) -> Instance {
        debug_assert_eq!(relations.len(), self.relations.len());
        Instance {
            query: self.query.clone(),
            relations,
        }
    }
}

/// The materialized join: full tuples over every attribute, in attribute order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JoinTable {
    pub entries: BTreeMap<Vec<u32>, u64>,
    pub total: u64,
}

pub fn join_materialize(instance: &Instance) -> Result<JoinTable> {
    join_materialize_capped(instance, DEFAULT_SUPPORT_CAP)
}

pub fn join_materialize_capped(instance: &Instance, cap: usize) -> Result<JoinTable> {
    let all: Vec<usize> = (0..instance.query.arity()).collect();
    let sj = sub_join(instance, &all, cap)?;
    // Every attribute lies in some edge, so sub-join rows are already full tuples.
    debug_assert_eq!(sj.attrs.len(), instance.query.attributes().len());
    let mut total = 0u64;
    for (_, w) in &sj.rows {
        total = total.checked_add(*w).ok_or(Error::Overflow)?;
    }
    Ok(JoinTable {
        entries: sj.rows.into_iter().collect(),
        total,
    })
}

/// count(I), computed by streaming without materializing the join.
pub fn count(instance: &Instance) -> Result<u64> {
    let all: Vec<usize> = (0..instance.query.arity()).collect();
    join::sub_join_size(instance, &all)
}

/// Sum of frequencies of tuples of relation `relation` whose projection on `attrs` is `value`.
pub fn degree(instance: &Instance, relation: usize, attrs: &[usize], value: &[u32]) -> Result<u64> {
    let schema = instance.query.edge(relation);
    let pos = attrs
        .iter()
        .map(|a| {
            schema.iter().position(|s| s == a).ok_or_else(|| {
                let name = instance
                    .query
                    .attributes()
                    .get(*a)
                    .map(|x| x.name.clone())
                    .unwrap_or_else(|| format!("#{a}"));
                Error::AttributeNotInSchema(name)
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(instance.relations[relation]
        .support
        .iter()
        .filter(|(t, _)| pos.iter().zip(value).all(|(&p, &v)| t[p] == v))
        .map(|(_, &f)| f)
        .sum())
}

/// All degrees of relation `relation` grouped by its projection on `attrs`.
pub fn degrees(instance: &Instance, relation: usize, attrs: &[usize]) -> Result<BTreeMap<Vec<u32>, u64>> {
    let schema = instance.query.edge(relation);
    let pos = attrs
        .iter()
        .map(|a| {
            schema
                .iter()
                .position(|s| s == a)
                .ok_or_else(|| Error::AttributeNotInSchema(instance.query.name(*a).to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = BTreeMap::new();
    for (t, &f) in &instance.relations[relation].support {
        let key: Vec<u32> = pos.iter().map(|&p| t[p]).collect();
        *out.entry(key).or_insert(0) += f;
    }
    Ok(out)
}

/// T_E: the largest sub-join size of `rels` over any assignment of their boundary attributes.
///
/// T_∅ is 1. Disconnected `rels` factor into a product over components.
pub fn boundary_query(instance: &Instance, rels: &[usize]) -> Result<u64> {
    boundary_query_capped(instance, rels, DEFAULT_SUPPORT_CAP)
}

pub fn boundary_query_capped(instance: &Instance, rels: &[usize], cap: usize) -> Result<u64> {
    if let Some(&bad) = rels.iter().find(|&&r| r >= instance.query.arity()) {
        return Err(Error::InvalidParameter(format!("no relation {bad}")));
    }
    let boundary = instance.query.boundary(rels);
    let mut product = 1u64;
    for comp in instance.query.components(rels) {
        let group: Vec<usize> = instance
            .query
            .attrs_of(&comp)
            .into_iter()
            .filter(|a| boundary.contains(a))
            .collect();
        let best = grouped_max(instance, &comp, &group, cap)?;
        product = product.checked_mul(best).ok_or(Error::Overflow)?;
        if product == 0 {
            return Ok(0);
        }
    }
    Ok(product)
}

fn grouped_max(instance: &Instance, rels: &[usize], group: &[usize], cap: usize) -> Result<u64> {
    if group.is_empty() {
        return join::sub_join_size(instance, rels);
    }
    let mut sums: HashMap<Vec<u32>, u64> = HashMap::new();
    for_each_join(instance, rels, |assignment, w| {
        let key: Vec<u32> = group.iter().map(|&a| assignment[a]).collect();
        if !sums.contains_key(&key) && sums.len() >= cap {
            return Err(Error::SupportTooLarge {
                what: format!("boundary groups of relations {rels:?}"),
                cap,
            });
        }
        let s = sums.entry(key).or_insert(0);
        *s = s.checked_add(w).ok_or(Error::Overflow)?;
        Ok(())
    })?;
    Ok(sums.values().copied().max().unwrap_or(0))
}

/// A neighbouring instance: one relation, one tuple, frequency changed by exactly one.
pub fn neighbor(instance: &Instance, seed: u64) -> Instance {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = instance.clone();
    let nonempty: Vec<usize> = (0..out.relations.len())
        .filter(|&i| !out.relations[i].is_empty())
        .collect();
    let remove = !nonempty.is_empty() && rng.gen_bool(0.5);
    if remove {
        let i = nonempty[rng.gen_range(0..nonempty.len())];
        let rel = &mut out.relations[i];
        let k = rng.gen_range(0..rel.len());
        let tuple = rel.support.keys().nth(k).unwrap().clone();
        rel.decrement(&tuple);
    } else {
        let i = rng.gen_range(0..out.relations.len());
        let tuple: Vec<u32> = out
            .query
            .relation_domain(i)
            .into_iter()
            .map(|d| rng.gen_range(0..d))
            .collect();
        out.relations[i].add(tuple, 1);
    }
    out
}
