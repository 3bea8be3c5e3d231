//! Private multiplicative weights over the dense joined domain.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{tau, NoiseSource, PrivacyParams};
use crate::queries::{eval_join, LinearQuery, QueryFamily};
use crate::relational::{Cells, DenseDomain, JoinQuery, JoinTable, DEFAULT_SUPPORT_CAP};

/// Exponents of the multiplicative update are clipped to this magnitude.
pub const EXPONENT_CLIP: f64 = 50.0;

/// Non-negative mass over every cell of the joined domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDistribution {
    query: JoinQuery,
    domain: DenseDomain,
    mass: Vec<f64>,
}

fn dense_domain(query: &JoinQuery, cap: usize) -> Result<DenseDomain> {
    let size = query.domain_size();
    if size > cap as u128 {
        return Err(Error::DomainTooLarge {
            size,
            cap: cap as u128,
        });
    }
    Ok(DenseDomain::new(query.domain_sizes()))
}

impl SyntheticDistribution {
    pub fn zeros(query: &JoinQuery, cap: usize) -> Result<Self> {
        let domain = dense_domain(query, cap)?;
        Ok(SyntheticDistribution {
            query: query.clone(),
            mass: vec![0.0; domain.len()],
            domain,
        })
    }

    pub fn uniform(query: &JoinQuery, total: f64, cap: usize) -> Result<Self> {
        let mut f = SyntheticDistribution::zeros(query, cap)?;
        let per_cell = total / f.mass.len() as f64;
        f.mass.fill(per_cell);
        Ok(f)
    }

    /// The exact join as a distribution.
    pub fn from_join(query: &JoinQuery, join: &JoinTable, cap: usize) -> Result<Self> {
        let mut f = SyntheticDistribution::zeros(query, cap)?;
        for (t, &w) in &join.entries {
            let idx = f.domain.encode(t);
            f.mass[idx] = w as f64;
        }
        Ok(f)
    }

    pub fn query(&self) -> &JoinQuery {
        &self.query
    }

    pub fn domain(&self) -> &DenseDomain {
        &self.domain
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn mass_mut(&mut self) -> &mut [f64] {
        &mut self.mass
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn get(&self, tuple: &[u32]) -> f64 {
        self.mass[self.domain.encode(tuple)]
    }

    pub fn cells(&self) -> Cells<'_> {
        self.domain.cells()
    }

    /// Pointwise sum, used to union releases of sub-instances.
    pub fn add_assign(&mut self, other: &SyntheticDistribution) -> Result<()> {
        if other.domain != self.domain {
            return Err(Error::InvalidParameter(
                "cannot add distributions over different domains".into(),
            ));
        }
        for (a, b) in self.mass.iter_mut().zip(&other.mass) {
            *a += b;
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &SyntheticDistribution, b: f64) -> Result<Self> {
        if other.domain != self.domain {
            return Err(Error::InvalidParameter(
                "cannot combine distributions over different domains".into(),
            ));
        }
        let mut out = self.clone();
        for (x, y) in out.mass.iter_mut().zip(&other.mass) {
            *x = a * *x + b * y;
        }
        Ok(out)
    }

    /// CSV with a header of attribute names plus `mass`; cells with mass below
    /// `threshold` are left out (zero cells always are).
    pub fn write_csv<W: Write>(&self, out: W, threshold: f64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = self.query.attributes().iter().map(|a| a.name.clone()).collect();
        header.push("mass".into());
        w.write_record(&header)?;
        for (cell, &m) in self.domain.cells().zip(&self.mass) {
            if m == 0.0 || m < threshold {
                continue;
            }
            let mut row: Vec<String> = cell.iter().map(u32::to_string).collect();
            row.push(format!("{m:?}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-cell tuple indices into each relation's domain, for fast query evaluation.
struct CellIndex {
    per_relation: Vec<Vec<u32>>,
}

impl CellIndex {
    fn new(query: &JoinQuery, domain: &DenseDomain) -> Self {
        let rel_domains: Vec<DenseDomain> = (0..query.arity())
            .map(|i| DenseDomain::new(query.relation_domain(i)))
            .collect();
        let mut per_relation = vec![Vec::with_capacity(domain.len()); query.arity()];
        for cell in domain.cells() {
            for (i, edge) in query.edges().iter().enumerate() {
                let t: Vec<u32> = edge.iter().map(|&a| cell[a]).collect();
                per_relation[i].push(rel_domains[i].encode(&t) as u32);
            }
        }
        CellIndex { per_relation }
    }

    fn weights(&self, q: &LinearQuery) -> Vec<f64> {
        let mut out = vec![1.0; self.per_relation.first().map_or(1, Vec::len)];
        for (i, idx) in self.per_relation.iter().enumerate() {
            let factor = q.factor(i);
            for (w, &j) in out.iter_mut().zip(idx) {
                *w *= factor[j as usize];
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Iterations {
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PmwConfig {
    pub params: PrivacyParams,
    pub delta_tilde: f64,
    pub iterations: Iterations,
    pub dense_cap: usize,
}

impl PmwConfig {
    pub fn new(params: PrivacyParams, delta_tilde: f64) -> Self {
        PmwConfig {
            params,
            delta_tilde,
            iterations: Iterations::Auto,
            dense_cap: DEFAULT_SUPPORT_CAP,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PmwOutcome {
    pub synthetic: SyntheticDistribution,
    pub n_hat: f64,
    pub n_hat_noise: f64,
    pub iterations: u64,
    pub epsilon_prime: f64,
    pub selected: Vec<usize>,
    pub noisy_answers: Vec<f64>,
    /// Cells whose update exponent hit the clip, summed over iterations.
    pub clipped: u64,
}

/// k = n̂·ε·√log|D| / (Δ̃·log|Q|·√log(1/δ)), base-2 logs, rounded and clamped to [1, 4|Q|].
pub fn default_iterations(
    n_hat: f64,
    epsilon: f64,
    delta: f64,
    domain_size: f64,
    family_size: usize,
    delta_tilde: f64,
) -> u64 {
    let upper = 4 * family_size.max(1) as u64;
    let k = n_hat * epsilon * domain_size.log2().sqrt()
        / (delta_tilde * (family_size as f64).log2() * (1.0 / delta).log2().sqrt());
    if k.is_nan() {
        return 1;
    }
    (k.round().max(1.0).min(upper as f64)) as u64
}

/// One multiplicative-weights step: F(x)·exp(q(x)·(m − q(F))/(2n̂)), rescaled to total n̂.
/// Returns the next iterate and the number of clipped exponents.
pub fn mw_update(prev: &[f64], qx: &[f64], m: f64, n_hat: f64) -> (Vec<f64>, u64) {
    if n_hat <= 0.0 {
        return (vec![0.0; prev.len()], 0);
    }
    let diff = m - dot(prev, qx);
    let mut clipped = 0;
    let mut next: Vec<f64> = prev
        .iter()
        .zip(qx)
        .map(|(&f, &q)| {
            let mut e = q * diff / (2.0 * n_hat);
            if e.abs() > EXPONENT_CLIP {
                clipped += 1;
                e = e.clamp(-EXPONENT_CLIP, EXPONENT_CLIP);
            }
            f * e.exp()
        })
        .collect();
    let sum: f64 = next.iter().sum();
    if sum > 0.0 {
        let scale = n_hat / sum;
        next.iter_mut().for_each(|x| *x *= scale);
    }
    (next, clipped)
}

/// Runs PMW on the joined domain of `query`, answering `family`.
pub fn pmw<N: NoiseSource>(
    query: &JoinQuery,
    join: &JoinTable,
    family: &QueryFamily,
    config: &PmwConfig,
    noise: &mut N,
) -> Result<PmwOutcome> {
    if family.is_empty() {
        return Err(Error::DegenerateFamily);
    }
    let dt = config.delta_tilde;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("sensitivity bound must be positive, got {dt}")));
    }
    if let Iterations::Fixed(0) = config.iterations {
        return Err(Error::InvalidParameter("iteration count must be at least 1".into()));
    }
    let PrivacyParams { epsilon, delta } = config.params;
    let domain = dense_domain(query, config.dense_cap)?;
    let index = CellIndex::new(query, &domain);
    let truth: Vec<f64> = family.queries.iter().map(|q| eval_join(q, join)).collect();

    let n_hat_noise = noise.tlap(2.0 * dt / epsilon, tau(epsilon / 2.0, delta / 2.0, dt));
    let n_hat = join.total as f64 + n_hat_noise;
    let k = match config.iterations {
        Iterations::Fixed(k) => k,
        Iterations::Auto => default_iterations(n_hat, epsilon, delta, domain.len() as f64, family.len(), dt),
    };
    let epsilon_prime = epsilon / (16.0 * (k as f64 * (1.0 / delta).ln()).sqrt());

    let cells = domain.len();
    let mut current = vec![n_hat / cells as f64; cells];
    let mut average = vec![0.0; cells];
    let mut selected = Vec::with_capacity(k as usize);
    let mut noisy_answers = Vec::with_capacity(k as usize);
    let mut clipped = 0;
    // Joined-domain weights are rebuilt per iteration unless they fit in memory.
    let cached: Option<Vec<Vec<f64>>> = (family.len().saturating_mul(cells) <= 1 << 24)
        .then(|| family.queries.iter().map(|q| index.weights(q)).collect());
    let weights_of = |j: usize| -> std::borrow::Cow<'_, [f64]> {
        match &cached {
            Some(c) => std::borrow::Cow::Borrowed(c[j].as_slice()),
            None => std::borrow::Cow::Owned(index.weights(&family.queries[j])),
        }
    };

    for _ in 0..k {
        let scores: Vec<f64> = (0..family.len())
            .map(|j| (dot(&current, &weights_of(j)) - truth[j]).abs() / dt)
            .collect();
        let j = noise.select(&scores, epsilon_prime, 1.0)?;
        let m = truth[j] + noise.laplace(dt / epsilon_prime);
        let (next, c) = mw_update(&current, &weights_of(j), m, n_hat);
        clipped += c;
        current = next;
        for (a, x) in average.iter_mut().zip(&current) {
            *a += x;
        }
        selected.push(j);
        noisy_answers.push(m);
    }
    average.iter_mut().for_each(|a| *a /= k as f64);

    Ok(PmwOutcome {
        synthetic: SyntheticDistribution {
            query: query.clone(),
            domain,
            mass: average,
        },
        n_hat,
        n_hat_noise,
        iterations: k,
        epsilon_prime,
        selected,
        noisy_answers,
        clipped,
    })
}
