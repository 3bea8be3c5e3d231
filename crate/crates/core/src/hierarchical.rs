//! Hierarchical joins: the attribute forest, degree functions, the bottom-up
//! degree partition, and sensitivity bounds driven by degree configurations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::noise::{tau, NoiseSource, PrivacyParams};
use crate::queries::QueryFamily;
use crate::relational::{degrees, sub_join, Instance, JoinQuery, Relation, DEFAULT_SUPPORT_CAP};
use crate::release::{bucket_index, release_multi_table, union_synthetic, ReleaseOptions, ReleaseReport};
use crate::sensitivity::{mask_to_set, residual_from_boundaries, MAX_RELATIONS};

/// Every pair of attributes has nested or disjoint atoms.
pub fn is_hierarchical(query: &JoinQuery) -> bool {
    let atoms: Vec<BTreeSet<usize>> = (0..query.attributes().len())
        .map(|a| query.atom(a).into_iter().collect())
        .collect();
    for (i, a) in atoms.iter().enumerate() {
        for b in &atoms[i + 1..] {
            if !(a.is_subset(b) || b.is_subset(a) || a.is_disjoint(b)) {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForestNode {
    /// Attributes sharing this node's atom, ascending.
    pub attrs: Vec<usize>,
    pub atom: Vec<usize>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
    pub name: String,
}

/// Attributes arranged so that every relation is a root-to-node path; attributes
/// with equal atoms share a node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeForest {
    nodes: Vec<ForestNode>,
}

impl AttributeForest {
    pub fn new(query: &JoinQuery) -> Result<Self> {
        if !is_hierarchical(query) {
            return Err(Error::NotHierarchical);
        }
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for a in 0..query.attributes().len() {
            groups.entry(query.atom(a)).or_default().push(a);
        }
        let mut nodes: Vec<ForestNode> = groups
            .into_iter()
            .map(|(atom, attrs)| ForestNode {
                name: attrs.iter().map(|&a| query.name(a)).collect::<Vec<_>>().join("+"),
                attrs,
                atom,
                parent: None,
                children: Vec::new(),
                depth: 0,
            })
            .collect();
        // Order by atom size descending so parents come first.
        nodes.sort_by(|a, b| b.atom.len().cmp(&a.atom.len()).then_with(|| a.name.cmp(&b.name)));
        for i in 0..nodes.len() {
            let mine: BTreeSet<usize> = nodes[i].atom.iter().copied().collect();
            let parent = (0..nodes.len())
                .filter(|&j| {
                    let theirs: BTreeSet<usize> = nodes[j].atom.iter().copied().collect();
                    theirs.len() > mine.len() && mine.is_subset(&theirs)
                })
                .min_by_key(|&j| nodes[j].atom.len());
            nodes[i].parent = parent;
        }
        for i in 0..nodes.len() {
            if let Some(p) = nodes[i].parent {
                nodes[p].children.push(i);
            }
        }
        for i in 0..nodes.len() {
            // Parents precede children in this order.
            nodes[i].depth = nodes[i].parent.map_or(0, |p| nodes[p].depth + 1);
        }
        let forest = AttributeForest { nodes };
        for (r, edge) in query.edges().iter().enumerate() {
            let deepest = (0..forest.nodes.len())
                .filter(|&n| forest.nodes[n].atom.contains(&r))
                .max_by_key(|&n| forest.nodes[n].depth)
                .expect("every relation has an attribute");
            let mut path = forest.ancestors(deepest);
            path.extend(&forest.nodes[deepest].attrs);
            path.sort_unstable();
            if path != *edge {
                return Err(Error::NotHierarchical);
            }
        }
        Ok(forest)
    }

    pub fn nodes(&self) -> &[ForestNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &ForestNode {
        &self.nodes[i]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].parent.is_none()).collect()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Attributes of all strict ancestors of `node`, ascending.
    pub fn ancestors(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.nodes[node].parent;
        while let Some(p) = cur {
            out.extend(&self.nodes[p].attrs);
            cur = self.nodes[p].parent;
        }
        out.sort_unstable();
        out
    }

    /// The node with atom `atom` whose ancestors are exactly `attrs`, if any.
    pub fn node_for(&self, atom: &[usize], attrs: &[usize]) -> Option<usize> {
        (0..self.nodes.len()).find(|&n| self.nodes[n].atom == atom && self.ancestors(n) == attrs)
    }

    /// Deepest nodes first, ties broken by name; children always precede parents.
    pub fn visit_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| {
            self.nodes[b]
                .depth
                .cmp(&self.nodes[a].depth)
                .then_with(|| self.nodes[a].name.cmp(&self.nodes[b].name))
        });
        order
    }

    /// Indented text rendering, one node per line.
    pub fn render(&self) -> String {
        fn go(f: &AttributeForest, n: usize, indent: usize, out: &mut String) {
            let node = &f.nodes[n];
            let atom: Vec<String> = node.atom.iter().map(|r| (r + 1).to_string()).collect();
            let _ = writeln!(out, "{}{} {{{}}}", "  ".repeat(indent), node.name, atom.join(","));
            let mut kids = node.children.clone();
            kids.sort_by(|&a, &b| f.nodes[a].name.cmp(&f.nodes[b].name));
            for c in kids {
                go(f, c, indent + 1, out);
            }
        }
        let mut out = String::new();
        let mut roots = self.roots();
        roots.sort_by(|&a, &b| self.nodes[a].name.cmp(&self.nodes[b].name));
        for r in roots {
            go(self, r, 0, &mut out);
        }
        out
    }
}

fn intersection_of_edges(query: &JoinQuery, rels: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = query.edge(rels[0]).to_vec();
    for &r in &rels[1..] {
        out.retain(|a| query.edge(r).contains(a));
    }
    out
}

/// deg_{E,y} for every y-value with positive degree.
///
/// A single relation sums frequencies; several relations count distinct
/// projections of their sub-join onto the attributes they all share.
pub fn hdegrees(instance: &Instance, rels: &[usize], y: &[usize]) -> Result<BTreeMap<Vec<u32>, u64>> {
    let query = instance.query();
    if rels.is_empty() {
        return Err(Error::InvalidParameter("degree needs at least one relation".into()));
    }
    let wedge = intersection_of_edges(query, rels);
    if let Some(&a) = y.iter().find(|a| !wedge.contains(a)) {
        return Err(Error::AttributeNotInSchema(query.name(a).to_string()));
    }
    if let [r] = rels {
        return degrees(instance, *r, y);
    }
    let sj = sub_join(instance, rels, DEFAULT_SUPPORT_CAP)?;
    let wedge_pos: Vec<usize> = wedge
        .iter()
        .map(|a| sj.attrs.iter().position(|b| b == a).unwrap())
        .collect();
    let y_in_wedge: Vec<usize> = y.iter().map(|a| wedge.iter().position(|b| b == a).unwrap()).collect();
    let distinct: BTreeSet<Vec<u32>> = sj
        .rows
        .iter()
        .map(|(row, _)| wedge_pos.iter().map(|&p| row[p]).collect())
        .collect();
    let mut out = BTreeMap::new();
    for w in distinct {
        let key: Vec<u32> = y_in_wedge.iter().map(|&p| w[p]).collect();
        *out.entry(key).or_insert(0) += 1;
    }
    Ok(out)
}

pub fn hdegree(instance: &Instance, rels: &[usize], y: &[usize], value: &[u32]) -> Result<u64> {
    Ok(hdegrees(instance, rels, y)?.get(value).copied().unwrap_or(0))
}

/// mdeg_E(y): the largest degree, 0 when nothing joins.
pub fn max_degree(instance: &Instance, rels: &[usize], y: &[usize]) -> Result<u64> {
    Ok(hdegrees(instance, rels, y)?.values().copied().max().unwrap_or(0))
}

/// Bucket per forest node.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct DegreeConfiguration(pub BTreeMap<usize, u32>);

impl DegreeConfiguration {
    pub fn get(&self, node: usize) -> Option<u32> {
        self.0.get(&node).copied()
    }

    /// Sorted (node name, bucket) pairs.
    pub fn named(&self, forest: &AttributeForest) -> Vec<(String, u32)> {
        let mut v: Vec<(String, u32)> = self
            .0
            .iter()
            .map(|(&n, &b)| (forest.node(n).name.clone(), b))
            .collect();
        v.sort();
        v
    }

    /// FNV-1a over the (node, bucket) pairs; stable across runs and platforms.
    pub fn stable_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (&n, &b) in &self.0 {
            for byte in (n as u64).to_le_bytes().into_iter().chain((b as u64).to_le_bytes()) {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// One output of a decomposition step.
#[derive(Debug, Clone)]
pub struct Decomposed {
    pub instance: Instance,
    pub bucket: u32,
    /// The y-values placed in this bucket with their noisy degrees.
    pub noisy: Vec<(Vec<u32>, f64)>,
}

/// Splits the relations in atom(x) by the noisy-degree bucket of their
/// ancestor values; other relations are copied into every part.
pub fn decompose<N: NoiseSource>(
    instance: &Instance,
    forest: &AttributeForest,
    node: usize,
    params: PrivacyParams,
    lambda: f64,
    noise: &mut N,
) -> Result<Vec<Decomposed>> {
    let query = instance.query();
    let e = forest.node(node).atom.clone();
    let y = forest.ancestors(node);
    let degs = hdegrees(instance, &e, &y)?;
    let t = tau(params.epsilon, params.delta, 1.0);
    let mut bucket_of: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    let mut by_bucket: BTreeMap<u32, Vec<(Vec<u32>, f64)>> = BTreeMap::new();
    for (value, d) in degs {
        let noisy = d as f64 + noise.tlap(1.0 / params.epsilon, t);
        let b = bucket_index(noisy, lambda);
        bucket_of.insert(value.clone(), b);
        by_bucket.entry(b).or_default().push((value, noisy));
    }
    let mut out = Vec::with_capacity(by_bucket.len());
    for (bucket, noisy) in by_bucket {
        let relations = (0..query.arity())
            .map(|j| {
                if !e.contains(&j) {
                    return instance.relation(j).clone();
                }
                let pos: Vec<usize> = y
                    .iter()
                    .map(|a| query.edge(j).iter().position(|b| b == a).unwrap())
                    .collect();
                Relation::from_tuples(
                    instance
                        .relation(j)
                        .support()
                        .iter()
                        .filter(|(tup, _)| {
                            let key: Vec<u32> = pos.iter().map(|&p| tup[p]).collect();
                            bucket_of.get(&key) == Some(&bucket)
                        })
                        .map(|(tup, &f)| (tup.clone(), f)),
                )
            })
            .collect();
        out.push(Decomposed {
            instance: instance.with_relations(relations),
            bucket,
            noisy,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct HierarchicalPart {
    pub instance: Instance,
    pub config: DegreeConfiguration,
    /// Per node, the y-values assigned to this part's bucket and their noisy degrees.
    pub noisy: BTreeMap<usize, Vec<(Vec<u32>, f64)>>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalPartition {
    pub forest: AttributeForest,
    pub parts: Vec<HierarchicalPart>,
    pub max_multiplicity: u64,
}

/// Largest number of parts in which any single input tuple appears.
pub fn max_multiplicity(instance: &Instance, parts: &[Instance]) -> u64 {
    let mut best = 0;
    for i in 0..instance.query().arity() {
        for t in instance.relation(i).support().keys() {
            let c = parts.iter().filter(|p| p.relation(i).get(t) > 0).count() as u64;
            best = best.max(c);
        }
    }
    best
}

/// The multiplicity bound ℓ^c with ℓ = ⌈log₂(n/λ + 1)⌉ and c = Σ_x |atom(x)|.
pub fn multiplicity_bound(instance: &Instance, lambda: f64) -> f64 {
    let q = instance.query();
    let l = (instance.input_size() as f64 / lambda + 1.0).log2().ceil();
    let c: usize = (0..q.attributes().len()).map(|a| q.atom(a).len()).sum();
    l.powi(c as i32)
}

/// Decomposes bottom-up over the forest, every current part at every node.
pub fn partition_hierarchical<N: NoiseSource>(
    instance: &Instance,
    params: PrivacyParams,
    lambda: f64,
    noise: &mut N,
) -> Result<HierarchicalPartition> {
    let forest = AttributeForest::new(instance.query())?;
    let mut parts = vec![HierarchicalPart {
        instance: instance.clone(),
        config: DegreeConfiguration::default(),
        noisy: BTreeMap::new(),
    }];
    for node in forest.visit_order() {
        let mut next = Vec::new();
        for part in parts {
            for d in decompose(&part.instance, &forest, node, params, lambda, noise)? {
                let mut config = part.config.clone();
                config.0.insert(node, d.bucket);
                let mut noisy = part.noisy.clone();
                noisy.insert(node, d.noisy);
                next.push(HierarchicalPart {
                    instance: d.instance,
                    config,
                    noisy,
                });
            }
        }
        parts = next;
    }
    let instances: Vec<Instance> = parts.iter().map(|p| p.instance.clone()).collect();
    let max_multiplicity = max_multiplicity(instance, &instances);
    Ok(HierarchicalPartition {
        forest,
        parts,
        max_multiplicity,
    })
}

/// One factor mdeg_E(y) of a degree bound.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct BoundTerm {
    pub relations: Vec<usize>,
    pub attrs: Vec<usize>,
    /// The forest node with atom `relations` and ancestors `attrs`, when one exists.
    pub node: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicBound {
    pub terms: Vec<BoundTerm>,
}

impl SymbolicBound {
    /// ∏ mdeg over the terms, evaluated on `instance`; 1 for no terms.
    pub fn evaluate(&self, instance: &Instance) -> Result<u64> {
        let mut p = 1u64;
        for t in &self.terms {
            p = p
                .checked_mul(max_degree(instance, &t.relations, &t.attrs)?)
                .ok_or(Error::Overflow)?;
        }
        Ok(p)
    }

    pub fn describe(&self, query: &JoinQuery) -> Vec<String> {
        self.terms
            .iter()
            .map(|t| {
                let rels: String = t.relations.iter().map(|r| (r + 1).to_string()).collect();
                let attrs: String = t.attrs.iter().map(|&a| query.name(a)).collect::<Vec<_>>().join("");
                format!("mdeg_{rels}({attrs})")
            })
            .collect()
    }
}

fn residual_components(query: &JoinQuery, rels: &[usize], y: &[usize]) -> Vec<Vec<usize>> {
    let rest: Vec<Vec<usize>> = rels
        .iter()
        .map(|&r| query.edge(r).iter().copied().filter(|a| !y.contains(a)).collect())
        .collect();
    let mut comp: Vec<usize> = (0..rels.len()).collect();
    fn find(c: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while c[r] != r {
            r = c[r];
        }
        c[i] = r;
        r
    }
    for i in 0..rels.len() {
        for j in i + 1..rels.len() {
            if rest[i].iter().any(|a| rest[j].contains(a)) {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..rels.len() {
        let root = find(&mut comp, i);
        groups.entry(root).or_default().push(rels[i]);
    }
    groups.into_values().collect()
}

fn bound_terms(query: &JoinQuery, rels: &[usize], y: &[usize], out: &mut Vec<(Vec<usize>, Vec<usize>)>) -> Result<()> {
    if rels.len() == 1 {
        out.push((rels.to_vec(), y.to_vec()));
        return Ok(());
    }
    let comps = residual_components(query, rels, y);
    if comps.len() > 1 {
        for c in comps {
            let cover = query.attrs_of(&c);
            let y_c: Vec<usize> = y.iter().copied().filter(|a| cover.contains(a)).collect();
            bound_terms(query, &c, &y_c, out)?;
        }
        return Ok(());
    }
    let wedge = intersection_of_edges(query, rels);
    if !(y.iter().all(|a| wedge.contains(a)) && y.len() < wedge.len()) {
        return Err(Error::NotHierarchical);
    }
    out.push((rels.to_vec(), y.to_vec()));
    bound_terms(query, rels, &wedge, out)
}

/// Upper bound of T_E as a product of maximum degrees, starting from y = ∂E.
pub fn symbolic_t_bound(query: &JoinQuery, rels: &[usize]) -> Result<SymbolicBound> {
    let forest = AttributeForest::new(query)?;
    symbolic_t_bound_in(query, &forest, rels)
}

fn symbolic_t_bound_in(query: &JoinQuery, forest: &AttributeForest, rels: &[usize]) -> Result<SymbolicBound> {
    let mut rels = rels.to_vec();
    rels.sort_unstable();
    rels.dedup();
    if rels.is_empty() {
        return Ok(SymbolicBound { terms: Vec::new() });
    }
    let mut raw = Vec::new();
    bound_terms(query, &rels, &query.boundary(&rels), &mut raw)?;
    let terms = raw
        .into_iter()
        .map(|(relations, attrs)| BoundTerm {
            node: forest.node_for(&relations, &attrs),
            relations,
            attrs,
        })
        .collect();
    Ok(SymbolicBound { terms })
}

/// RS with every T_E replaced by ∏ λ·2^{σ(node)} over its bound terms.
pub fn rs_under_config(query: &JoinQuery, sigma: &DegreeConfiguration, beta: f64, lambda: f64) -> Result<f64> {
    let forest = AttributeForest::new(query)?;
    let m = query.arity();
    if m > MAX_RELATIONS {
        return Err(Error::InvalidParameter(format!("{m} relations exceed {MAX_RELATIONS}")));
    }
    let mut t = vec![1.0; 1 << m];
    for (mask, slot) in t.iter_mut().enumerate().skip(1) {
        let bound = symbolic_t_bound_in(query, &forest, &mask_to_set(mask))?;
        let mut v = 1.0;
        for term in &bound.terms {
            let node = term.node.ok_or_else(|| {
                Error::ConfigDomainMismatch(format!(
                    "term {} has no matching attribute node",
                    bound.describe(query).join("·")
                ))
            })?;
            let b = sigma.get(node).ok_or_else(|| {
                Error::ConfigDomainMismatch(format!("no bucket for node `{}`", forest.node(node).name))
            })?;
            v *= lambda * 2f64.powi(b as i32);
        }
        *slot = v;
    }
    Ok(residual_from_boundaries(m, &t, beta).0)
}

impl Serialize for DegreeConfiguration {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

/// Hierarchical partition at (ε/2, δ/2), then a residual-sensitivity release per part.
///
/// The ledger reports measured composition: (ε/2)·max_i|x_i| for the partition
/// plus (ε/2)·M for the releases, M the measured per-tuple multiplicity.
pub fn release_uniformized_hierarchical<N: NoiseSource>(
    instance: &Instance,
    family: &QueryFamily,
    params: PrivacyParams,
    options: &ReleaseOptions,
    noise: &mut N,
) -> Result<ReleaseReport> {
    let half = params.halved();
    let lambda = params.lambda();
    let partition = partition_hierarchical(instance, half, lambda, noise)?;
    let mut subs = Vec::with_capacity(partition.parts.len());
    for part in &partition.parts {
        let mut sub_noise = noise.fork(part.config.stable_hash());
        let mut r = release_multi_table(&part.instance, family, half, options, &mut sub_noise)?;
        let label: Vec<String> = part
            .config
            .named(&partition.forest)
            .into_iter()
            .map(|(n, b)| format!("{n}={b}"))
            .collect();
        r.label = Some(label.join(","));
        subs.push(r);
    }
    let synthetic = union_synthetic(instance, &subs, options.dense_cap)?;
    let width = instance.query().edges().iter().map(Vec::len).max().unwrap_or(0) as f64;
    let mult = partition.max_multiplicity as f64;
    Ok(ReleaseReport {
        pipeline: "unif_hierarchical".into(),
        epsilon: params.epsilon,
        delta: params.delta,
        epsilon_spent: half.epsilon * width + half.epsilon * mult,
        delta_spent: half.delta * width + half.delta * mult,
        delta_tilde_used: subs.iter().map(|s| s.delta_tilde_used).fold(0.0, f64::max),
        sensitivity: subs.iter().map(|s| s.sensitivity).fold(0.0, f64::max),
        beta: subs.first().and_then(|s| s.beta),
        lambda: Some(lambda),
        n_hat: subs.iter().map(|s| s.n_hat).sum(),
        iterations: subs.iter().map(|s| s.iterations).sum(),
        epsilon_prime: subs.iter().map(|s| s.epsilon_prime).fold(f64::INFINITY, f64::min),
        clipped: subs.iter().map(|s| s.clipped).sum(),
        label: None,
        max_multiplicity: Some(partition.max_multiplicity),
        sub_reports: subs,
        synthetic: Some(synthetic),
    })
}
