//! Instance generators for the lower-bound and gap constructions, and the
//! error-factor formulas used as acceptance envelopes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queries::LinearQuery;
use crate::relational::{Instance, JoinQuery, Relation, DEFAULT_SUPPORT_CAP};

/// A frequency vector T over a single attribute.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SingleTable {
    pub freq: Vec<u64>,
}

impl SingleTable {
    pub fn new(freq: Vec<u64>) -> Result<Self> {
        if freq.is_empty() {
            return Err(Error::InvalidParameter("single table needs a non-empty domain".into()));
        }
        Ok(SingleTable { freq })
    }

    /// n spread as evenly as possible over `domain` values, lower values first.
    pub fn spread(n: u64, domain: u32) -> Result<Self> {
        if domain == 0 {
            return Err(Error::InvalidParameter("domain must be positive".into()));
        }
        let d = domain as u64;
        SingleTable::new((0..d).map(|a| n / d + u64::from(a < n % d)).collect())
    }

    pub fn domain_size(&self) -> u32 {
        self.freq.len() as u32
    }

    pub fn n(&self) -> u64 {
        self.freq.iter().sum()
    }

    fn max(&self) -> u64 {
        self.freq.iter().copied().max().unwrap_or(0)
    }

    /// q(T) = Σ_a q(a)·T(a).
    pub fn eval(&self, q: &[f64]) -> f64 {
        q.iter().zip(&self.freq).map(|(w, &t)| w * t as f64).sum()
    }
}

/// A generated instance with the statistics its construction promises.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    /// |D| of the construction as written, before slicing to reachable values.
    pub nominal_domain_size: f64,
    pub declared_count: u64,
    pub declared_ls: Option<u64>,
    /// Δ′ when the requested Δ had to be rounded down.
    pub achieved_delta: Option<u64>,
    /// For the lower-bound generators: how many B-values each A-value owns.
    pub slice: Option<u64>,
}

fn check_support(what: &str, size: u128) -> Result<()> {
    if size > DEFAULT_SUPPORT_CAP as u128 {
        return Err(Error::SupportTooLarge {
            what: what.into(),
            cap: DEFAULT_SUPPORT_CAP,
        });
    }
    Ok(())
}

fn to_u32(v: u64, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::SupportTooLarge {
        what: what.into(),
        cap: u32::MAX as usize,
    })
}

fn require_n(t: &SingleTable) -> Result<()> {
    if t.n() == 0 {
        return Err(Error::InvalidParameter("single table must have n ≥ 1".into()));
    }
    Ok(())
}

/// R1(a, b) = 1 for the first T(a) values of a's slice of B; R2(b, c) = 1 everywhere.
///
/// B is instantiated as |D_T|·max T values (slice of a is a·maxT ..); the nominal
/// |D| uses dom(B) = |D_T|·n.
pub fn gen_two_table_lb(t: &SingleTable, delta: u64) -> Result<Generated> {
    require_n(t)?;
    if delta == 0 {
        return Err(Error::InfeasibleDelta("Δ must be at least 1".into()));
    }
    let d = t.domain_size() as u64;
    let slice = t.max();
    let dom_b = d.checked_mul(slice).ok_or(Error::Overflow)?;
    check_support("R2", dom_b as u128 * delta as u128)?;
    let query = JoinQuery::from_names(
        &[("A", t.domain_size()), ("B", to_u32(dom_b, "B")?), ("C", to_u32(delta, "C")?)],
        &[&["A", "B"], &["B", "C"]],
    )?;
    let r1 = Relation::from_tuples(t.freq.iter().enumerate().flat_map(|(a, &ta)| {
        (0..ta).map(move |j| (vec![a as u32, (a as u64 * slice + j) as u32], 1))
    }));
    let r2 = Relation::from_tuples(
        (0..dom_b as u32).flat_map(|b| (0..delta as u32).map(move |c| (vec![b, c], 1))),
    );
    let n = t.n();
    Ok(Generated {
        instance: Instance::new(query, vec![r1, r2])?,
        nominal_domain_size: d as f64 * (d as f64 * n as f64) * delta as f64,
        declared_count: n * delta,
        declared_ls: Some(delta),
        achieved_delta: None,
        slice: Some(slice),
    })
}

/// The lifted query q′ = (q∘π_A, 1, …, 1) for an lb2 instance.
pub fn lift_two_table(generated: &Generated, q: &[f64]) -> Result<LinearQuery> {
    LinearQuery::from_fn(generated.instance.query(), |rel, tuple| if rel == 0 { q[tuple[0] as usize] } else { 1.0 })
}

/// Largest r with r^k ≤ Δ.
fn integer_root(delta: u64, k: u32) -> u64 {
    if k == 0 {
        return 1;
    }
    let mut r = (delta as f64).powf(1.0 / k as f64).round() as u64 + 1;
    while r > 0 && r.checked_pow(k).is_none_or(|p| p > delta) {
        r -= 1;
    }
    r
}

/// Every attribute of the first relation carries the same code for (a, j),
/// j < T(a); every other attribute ranges over ⌊Δ^{1/k}⌋ values and the
/// other relations are all-ones.
pub fn gen_multi_table_lb(query: &JoinQuery, t: &SingleTable, delta: u64) -> Result<Generated> {
    require_n(t)?;
    let x1 = query.edge(0).to_vec();
    let others: Vec<usize> = (0..query.attributes().len()).filter(|a| !x1.contains(a)).collect();
    let k = others.len() as u32;
    let r = integer_root(delta, k);
    let achieved = r.pow(k);
    if achieved == 0 || k == 0 {
        return Err(Error::InfeasibleDelta(format!(
            "Δ = {delta} has no positive integer {k}-th root, or the first relation covers every attribute"
        )));
    }
    let slice = t.max();
    let code_dom = (t.domain_size() as u64).checked_mul(slice).ok_or(Error::Overflow)?;
    let code_dom32 = to_u32(code_dom, "first relation codes")?;
    let r32 = to_u32(r, "free attributes")?;
    let attrs: Vec<crate::relational::Attribute> = query
        .attributes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            crate::relational::Attribute::new(a.name.clone(), if x1.contains(&i) { code_dom32 } else { r32 })
        })
        .collect();
    let q = JoinQuery::new(attrs, query.edges().to_vec())?;
    let mut relations = Vec::with_capacity(q.arity());
    let width = x1.len();
    relations.push(Relation::from_tuples(t.freq.iter().enumerate().flat_map(|(a, &ta)| {
        (0..ta).map(move |j| (vec![(a as u64 * slice + j) as u32; width], 1))
    })));
    for i in 1..q.arity() {
        let dom = crate::relational::DenseDomain::new(q.relation_domain(i));
        check_support(&format!("relation {}", i + 1), dom.len() as u128)?;
        relations.push(Relation::from_tuples(dom.cells().map(|c| (c.to_vec(), 1))));
    }
    // The all-ones relations cap LS at Δ′ only when none of them can miss part of x₁.
    let star = query.edges()[1..].iter().all(|e| x1.iter().all(|a| e.contains(a)));
    let linked_pair = query.arity() == 2 && x1.iter().any(|a| query.edge(1).contains(a));
    let n = t.n();
    Ok(Generated {
        instance: Instance::new(q, relations)?,
        nominal_domain_size: (t.domain_size() as f64 * n as f64).powi(width as i32) * achieved as f64,
        declared_count: n * achieved,
        declared_ls: (star || linked_pair).then_some(achieved),
        achieved_delta: Some(achieved),
        slice: Some(slice),
    })
}

/// q′ = (q∘decode on the first relation, 1, …, 1) for a multi-table lb instance.
pub fn lift_multi_table(generated: &Generated, q: &[f64]) -> Result<LinearQuery> {
    let slice = generated.slice.unwrap_or(1).max(1);
    LinearQuery::from_fn(generated.instance.query(), |rel, tuple| {
        if rel == 0 {
            q[(tuple[0] as u64 / slice) as usize]
        } else {
            1.0
        }
    })
}

/// x₁ = {A}, x_i = {A, Y_{i−1}}: k = m − 1 free attributes.
pub fn star_query(m: usize) -> Result<JoinQuery> {
    if m < 2 {
        return Err(Error::InvalidParameter("a star needs at least two relations".into()));
    }
    let names: Vec<String> = std::iter::once("A".to_string())
        .chain((1..m).map(|i| format!("Y{i}")))
        .collect();
    let attrs: Vec<(&str, u32)> = names.iter().map(|n| (n.as_str(), 1)).collect();
    let edges: Vec<Vec<&str>> = std::iter::once(vec!["A"])
        .chain((1..m).map(|i| vec!["A", names[i].as_str()]))
        .collect();
    let edge_refs: Vec<&[&str]> = edges.iter().map(Vec::as_slice).collect();
    JoinQuery::from_names(&attrs, &edge_refs)
}

fn two_table_query(a: u32, b: u32, c: u32) -> Result<JoinQuery> {
    JoinQuery::from_names(&[("A", a), ("B", b), ("C", c)], &[&["A", "B"], &["B", "C"]])
}

/// Join value i−1 has i distinct partners on each side, for i = 1..=√n.
pub fn gen_staircase(sqrt_n: u32) -> Result<Generated> {
    if sqrt_n == 0 {
        return Err(Error::InvalidParameter("staircase needs √n ≥ 1".into()));
    }
    check_support("staircase", sqrt_n as u128 * sqrt_n as u128)?;
    let query = two_table_query(sqrt_n, sqrt_n, sqrt_n)?;
    let r1 = Relation::from_tuples((0..sqrt_n).flat_map(|b| (0..=b).map(move |a| (vec![a, b], 1))));
    let r2 = Relation::from_tuples((0..sqrt_n).flat_map(|b| (0..=b).map(move |c| (vec![b, c], 1))));
    let s = sqrt_n as u64;
    Ok(Generated {
        instance: Instance::new(query, vec![r1, r2])?,
        nominal_domain_size: (s * s * s) as f64,
        declared_count: s * (s + 1) * (2 * s + 1) / 6,
        declared_ls: Some(s),
        achieved_delta: None,
        slice: None,
    })
}

/// Degree classes i = 0..=(2/3)·log₂k, with k²/8^i join values of degree 2^i on
/// both sides. A and C are single-valued; degrees are carried by frequencies.
pub fn gen_gap(k: u64) -> Result<Generated> {
    if k == 0 || !k.is_power_of_two() || !k.trailing_zeros().is_multiple_of(3) {
        return Err(Error::NonPower { base: 8, value: k });
    }
    let p = k.trailing_zeros() / 3;
    let k2 = k.checked_mul(k).ok_or(Error::Overflow)?;
    let classes: Vec<(u64, u64)> = (0..=2 * p).map(|i| (k2 >> (3 * i), 1u64 << i)).collect();
    let values: u64 = classes.iter().map(|c| c.0).sum();
    check_support("gap", values as u128)?;
    let query = two_table_query(1, to_u32(values, "B")?, 1)?;
    let mut r1 = Relation::new();
    let mut r2 = Relation::new();
    let mut b = 0u32;
    for &(count, deg) in &classes {
        for _ in 0..count {
            r1.add(vec![0, b], deg);
            r2.add(vec![b, 0], deg);
            b += 1;
        }
    }
    Ok(Generated {
        instance: Instance::new(query, vec![r1, r2])?,
        nominal_domain_size: values as f64,
        declared_count: classes.iter().map(|&(c, d)| c * d * d).sum(),
        declared_ls: Some(1u64 << (2 * p)),
        achieved_delta: None,
        slice: None,
    })
}

/// Per bucket i, n_i join values each with one R1 partner and Δ_i R2 partners,
/// where Δ_i is the largest divisor of OUT^i inside bucket i and n_i = OUT^i/Δ_i.
/// Bucket 1 admits any Δ_1 ≤ 2λ.
pub fn gen_bucket_conforming(out: &[(u32, u64)], lambda: f64) -> Result<Generated> {
    if out.is_empty() || !(lambda > 0.0) {
        return Err(Error::InfeasibleVector("need a non-empty vector and λ > 0".into()));
    }
    let mut blocks = Vec::with_capacity(out.len());
    let mut seen = std::collections::BTreeSet::new();
    for &(i, total) in out {
        if i == 0 || total == 0 || !seen.insert(i) {
            return Err(Error::InfeasibleVector(format!("bad entry (bucket {i}, OUT {total})")));
        }
        let hi = lambda * 2f64.powi(i as i32);
        let lo = if i == 1 { 0.0 } else { lambda * 2f64.powi(i as i32 - 1) };
        let d = (1..=total.min(hi.floor() as u64))
            .rev()
            .find(|&d| total % d == 0 && d as f64 > lo)
            .ok_or_else(|| {
                Error::InfeasibleVector(format!("OUT {total} has no divisor in ({lo}, {hi}] for bucket {i}"))
            })?;
        blocks.push((total / d, d));
    }
    let values: u64 = blocks.iter().map(|b| b.0).sum();
    let max_d = blocks.iter().map(|b| b.1).max().unwrap();
    check_support("R2", values as u128 * max_d as u128)?;
    let query = two_table_query(to_u32(values, "A")?, to_u32(values, "B")?, to_u32(max_d, "C")?)?;
    let mut r1 = Relation::new();
    let mut r2 = Relation::new();
    let mut b = 0u32;
    for &(n_i, d) in &blocks {
        for _ in 0..n_i {
            r1.add(vec![b, b], 1);
            for c in 0..d as u32 {
                r2.add(vec![b, c], 1);
            }
            b += 1;
        }
    }
    let v = values as f64;
    Ok(Generated {
        instance: Instance::new(query, vec![r1, r2])?,
        nominal_domain_size: v * v * max_d as f64,
        declared_count: out.iter().map(|o| o.1).sum(),
        declared_ls: Some(max_d),
        achieved_delta: None,
        slice: None,
    })
}

/// Serializable description of any generator call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// T is n spread evenly over `domain` values (default n, so T ≡ 1).
    Lb2 { n: u64, delta: u64, domain: Option<u32> },
    /// Star query with `relations` relations.
    MultiLb { n: u64, delta: u64, relations: usize, domain: Option<u32> },
    Staircase { sqrt_n: u32 },
    Gap { k: u64 },
    Conforming { lambda: f64, buckets: Vec<(u32, u64)> },
}

impl GeneratorSpec {
    pub fn generate(&self) -> Result<Generated> {
        let table = |n: u64, domain: Option<u32>| {
            let d = domain.unwrap_or_else(|| n.min(u32::MAX as u64) as u32);
            SingleTable::spread(n, d)
        };
        match self {
            GeneratorSpec::Lb2 { n, delta, domain } => gen_two_table_lb(&table(*n, *domain)?, *delta),
            GeneratorSpec::MultiLb {
                n,
                delta,
                relations,
                domain,
            } => gen_multi_table_lb(&star_query(*relations)?, &table(*n, *domain)?, *delta),
            GeneratorSpec::Staircase { sqrt_n } => gen_staircase(*sqrt_n),
            GeneratorSpec::Gap { k } => gen_gap(*k),
            GeneratorSpec::Conforming { lambda, buckets } => gen_bucket_conforming(buckets, *lambda),
        }
    }
}

/// √((1/ε)·√log₂|D|).
pub fn f_lower(domain_size: f64, epsilon: f64) -> f64 {
    (domain_size.log2().sqrt() / epsilon).sqrt()
}

/// f_lower · √(log₂|Q| · log₂(1/δ)).
pub fn f_upper(domain_size: f64, family_size: f64, epsilon: f64, delta: f64) -> f64 {
    f_lower(domain_size, epsilon) * (family_size.log2() * (1.0 / delta).log2()).sqrt()
}

/// (√(count·(Δ+λ)) + (Δ+λ)·√λ) · f_upper.
pub fn error_envelope_two_table(count: f64, delta: f64, lambda: f64, f_upper: f64) -> f64 {
    ((count * (delta + lambda)).sqrt() + (delta + lambda) * lambda.sqrt()) * f_upper
}

/// Inputs to the envelope, as recorded next to an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundInputs {
    pub count: f64,
    pub delta_or_rs: f64,
    pub lambda: f64,
    pub domain_size: f64,
    pub family_size: f64,
    pub epsilon: f64,
    pub delta: f64,
}

impl ErrorBoundInputs {
    pub fn envelope(&self) -> f64 {
        let fu = f_upper(self.domain_size, self.family_size, self.epsilon, self.delta);
        error_envelope_two_table(self.count, self.delta_or_rs, self.lambda, fu)
    }
}
