//! Factored linear queries and the families used as release workloads.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pmw::SyntheticDistribution;
use crate::relational::{for_each_join, DenseDomain, Instance, JoinQuery, JoinTable, DEFAULT_SUPPORT_CAP};

/// q = (q_1, …, q_m): one dense weight vector per relation, each weight in [−1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQuery {
    edges: Vec<Vec<usize>>,
    domains: Vec<DenseDomain>,
    weights: Vec<Vec<f64>>,
}

fn relation_domains(query: &JoinQuery) -> Result<Vec<DenseDomain>> {
    (0..query.arity())
        .map(|i| {
            let sizes = query.relation_domain(i);
            let cells = DenseDomain::cell_count(&sizes);
            if cells > DEFAULT_SUPPORT_CAP as u128 {
                return Err(Error::DomainTooLarge {
                    size: cells,
                    cap: DEFAULT_SUPPORT_CAP as u128,
                });
            }
            Ok(DenseDomain::new(sizes))
        })
        .collect()
}

impl LinearQuery {
    pub fn new(query: &JoinQuery, weights: Vec<Vec<f64>>) -> Result<Self> {
        let domains = relation_domains(query)?;
        if weights.len() != domains.len() {
            return Err(Error::InvalidParameter(format!(
                "query has {} factors but the join has {} relations",
                weights.len(),
                domains.len()
            )));
        }
        for (i, (w, d)) in weights.iter().zip(&domains).enumerate() {
            if w.len() != d.len() {
                return Err(Error::InvalidParameter(format!(
                    "factor {i} has {} weights for a domain of {} tuples",
                    w.len(),
                    d.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(x.abs() <= 1.0)) {
                return Err(Error::InvalidParameter(format!(
                    "factor {i} has weight {bad} outside [-1, 1]"
                )));
            }
        }
        Ok(LinearQuery {
            edges: query.edges().to_vec(),
            domains,
            weights,
        })
    }

    /// Builds each factor by evaluating `f(relation, tuple)` over its domain.
    pub fn from_fn<F: FnMut(usize, &[u32]) -> f64>(query: &JoinQuery, mut f: F) -> Result<Self> {
        let domains = relation_domains(query)?;
        let weights = domains
            .iter()
            .enumerate()
            .map(|(i, d)| d.cells().map(|t| f(i, &t)).collect())
            .collect();
        LinearQuery::new(query, weights)
    }

    pub fn arity(&self) -> usize {
        self.weights.len()
    }

    pub fn factor(&self, relation: usize) -> &[f64] {
        &self.weights[relation]
    }

    /// q_i(t) for a tuple over relation `relation`'s schema.
    pub fn weight(&self, relation: usize, tuple: &[u32]) -> f64 {
        self.weights[relation][self.domains[relation].encode(tuple)]
    }

    /// ∏_i q_i(π_i t) for a tuple over all attributes.
    pub fn weight_full(&self, full: &[u32]) -> f64 {
        let mut w = 1.0;
        for (i, edge) in self.edges.iter().enumerate() {
            let idx = edge
                .iter()
                .zip(self.domains[i].sizes())
                .fold(0usize, |acc, (&a, &s)| acc * s as usize + full[a] as usize);
            w *= self.weights[i][idx];
        }
        w
    }

    /// The same query with factor `relation` negated.
    pub fn negate_factor(&self, relation: usize) -> LinearQuery {
        let mut out = self.clone();
        for w in &mut out.weights[relation] {
            *w = -*w;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryFamily {
    pub queries: Vec<LinearQuery>,
    pub label: String,
}

impl QueryFamily {
    pub fn new(queries: Vec<LinearQuery>, label: impl Into<String>) -> Result<Self> {
        if queries.is_empty() {
            return Err(Error::DegenerateFamily);
        }
        Ok(QueryFamily {
            queries,
            label: label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

pub fn counting_query(query: &JoinQuery) -> Result<LinearQuery> {
    LinearQuery::from_fn(query, |_, _| 1.0)
}

/// `size` queries with independent uniform ±1 weights. With `with_counting`,
/// the first query is replaced by the counting query.
pub fn random_sign_family(
    query: &JoinQuery,
    size: usize,
    seed: u64,
    with_counting: bool,
) -> Result<QueryFamily> {
    if size == 0 {
        return Err(Error::DegenerateFamily);
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut queries = Vec::with_capacity(size);
    for j in 0..size {
        if j == 0 && with_counting {
            queries.push(counting_query(query)?);
            continue;
        }
        queries.push(LinearQuery::from_fn(query, |_, _| {
            if rng.gen::<bool>() {
                1.0
            } else {
                -1.0
            }
        })?);
    }
    QueryFamily::new(queries, format!("random_sign({size}, seed {seed})"))
}

/// Half-open range `[start, end)` of attribute values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    pub start: u32,
    pub end: u32,
}

impl Interval {
    pub fn new(start: u32, end: u32) -> Self {
        Interval { start, end }
    }

    pub fn contains(&self, v: u32) -> bool {
        self.start <= v && v < self.end
    }
}

/// One product-indicator query per combination of intervals, taking one interval
/// from each listed attribute; unlisted attributes are unconstrained.
pub fn interval_family(query: &JoinQuery, intervals: &[(usize, Vec<Interval>)]) -> Result<QueryFamily> {
    for (k, (attr, list)) in intervals.iter().enumerate() {
        if intervals[..k].iter().any(|(b, _)| b == attr) {
            return Err(Error::BadInterval(format!("attribute #{attr} listed twice")));
        }
        let Some(a) = query.attributes().get(*attr) else {
            return Err(Error::BadInterval(format!("no attribute #{attr}")));
        };
        if list.is_empty() {
            return Err(Error::BadInterval(format!("no intervals for `{}`", a.name)));
        }
        for iv in list {
            if iv.start > iv.end || iv.end > a.domain_size {
                return Err(Error::BadInterval(format!(
                    "[{}, {}) does not fit `{}` with domain size {}",
                    iv.start, iv.end, a.name, a.domain_size
                )));
            }
        }
    }
    let choice_sizes: Vec<u32> = intervals.iter().map(|(_, l)| l.len() as u32).collect();
    let combos = DenseDomain::new(choice_sizes);
    let mut queries = Vec::with_capacity(combos.len());
    for pick in combos.cells() {
        let mut bounds: Vec<Option<Interval>> = vec![None; query.attributes().len()];
        for ((attr, list), &p) in intervals.iter().zip(&pick) {
            bounds[*attr] = Some(list[p as usize]);
        }
        queries.push(LinearQuery::from_fn(query, |i, t| {
            let inside = query
                .edge(i)
                .iter()
                .zip(t)
                .all(|(&a, &v)| bounds[a].is_none_or(|iv| iv.contains(v)));
            if inside {
                1.0
            } else {
                0.0
            }
        })?);
    }
    QueryFamily::new(queries, format!("interval({} queries)", combos.len()))
}

/// Serializable description of a family; families are rebuilt from it, never stored densely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilySpec {
    Counting,
    RandomSign {
        size: usize,
        seed: u64,
        #[serde(default)]
        with_counting: bool,
    },
    Interval {
        /// Attribute name to a list of `[start, end)` pairs.
        intervals: BTreeMap<String, Vec<[u32; 2]>>,
    },
}

impl FamilySpec {
    pub fn build(&self, query: &JoinQuery) -> Result<QueryFamily> {
        match self {
            FamilySpec::Counting => QueryFamily::new(vec![counting_query(query)?], "counting"),
            FamilySpec::RandomSign {
                size,
                seed,
                with_counting,
            } => random_sign_family(query, *size, *seed, *with_counting),
            FamilySpec::Interval { intervals } => {
                let lists = intervals
                    .iter()
                    .map(|(name, list)| {
                        let a = query
                            .attribute_index(name)
                            .ok_or_else(|| Error::BadInterval(format!("unknown attribute `{name}`")))?;
                        Ok((a, list.iter().map(|&[s, e]| Interval::new(s, e)).collect()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                interval_family(query, &lists)
            }
        }
    }

    /// |Q| without building the family.
    pub fn size(&self) -> usize {
        match self {
            FamilySpec::Counting => 1,
            FamilySpec::RandomSign { size, .. } => *size,
            FamilySpec::Interval { intervals } => intervals.values().map(Vec::len).product(),
        }
    }
}

/// q(I), summed over the join by streaming.
pub fn eval_instance(q: &LinearQuery, instance: &Instance) -> Result<f64> {
    let all: Vec<usize> = (0..instance.query().arity()).collect();
    let mut total = 0.0;
    for_each_join(instance, &all, |t, w| {
        total += q.weight_full(t) * w as f64;
        Ok(())
    })?;
    Ok(total)
}

/// q(I) from a materialized join.
pub fn eval_join(q: &LinearQuery, join: &JoinTable) -> f64 {
    join.entries
        .iter()
        .map(|(t, &w)| q.weight_full(t) * w as f64)
        .sum()
}

/// q(F) = Σ_x F(x)·∏_i q_i(π_i x).
pub fn eval_synthetic(q: &LinearQuery, f: &SyntheticDistribution) -> f64 {
    f.cells()
        .zip(f.mass())
        .filter(|(_, &m)| m != 0.0)
        .map(|(t, &m)| m * q.weight_full(&t))
        .sum()
}

/// max_q |q(I) − q(F)| and the first query attaining it.
pub fn max_error(family: &QueryFamily, instance: &Instance, f: &SyntheticDistribution) -> Result<(f64, usize)> {
    let mut best = (f64::NEG_INFINITY, 0);
    for (j, q) in family.queries.iter().enumerate() {
        let e = (eval_instance(q, instance)? - eval_synthetic(q, f)).abs();
        if e > best.0 {
            best = (e, j);
        }
    }
    Ok(best)
}
