//! Release pipelines: join-as-one with local or residual sensitivity, and the
//! degree-uniformized two-table pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{tau, NoiseSource, PrivacyParams};
use crate::pmw::{pmw, Iterations, PmwConfig, SyntheticDistribution};
use crate::queries::QueryFamily;
use crate::relational::{degrees, join_materialize, Instance, Relation, DEFAULT_SUPPORT_CAP};
use crate::sensitivity::{local_sensitivity, residual_sensitivity};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseOptions {
    pub iterations: Iterations,
    pub dense_cap: usize,
}

impl Default for ReleaseOptions {
    fn default() -> Self {
        ReleaseOptions {
            iterations: Iterations::Auto,
            dense_cap: DEFAULT_SUPPORT_CAP,
        }
    }
}

/// What a release spent and how it was calibrated. The synthetic data itself is
/// not serialized with the report.
#[derive(Debug, Clone, Serialize)]
pub struct ReleaseReport {
    pub pipeline: String,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_spent: f64,
    pub delta_spent: f64,
    /// Largest Δ̃ handed to PMW (over sub-releases for partitioned pipelines).
    pub delta_tilde_used: f64,
    /// The exact sensitivity Δ̃ was built from: LS or RS^β.
    pub sensitivity: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub n_hat: f64,
    pub iterations: u64,
    pub epsilon_prime: f64,
    pub clipped: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_multiplicity: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sub_reports: Vec<ReleaseReport>,
    #[serde(skip)]
    pub synthetic: Option<SyntheticDistribution>,
}

impl ReleaseReport {
    pub fn synthetic(&self) -> &SyntheticDistribution {
        self.synthetic.as_ref().expect("report carries its synthetic distribution")
    }
}

fn require_two(instance: &Instance) -> Result<()> {
    let m = instance.query().arity();
    if m != 2 {
        return Err(Error::WrongArity {
            expected: "2".into(),
            found: m,
        });
    }
    Ok(())
}

fn run_pmw<N: NoiseSource>(
    instance: &Instance,
    family: &QueryFamily,
    params: PrivacyParams,
    delta_tilde: f64,
    options: &ReleaseOptions,
    noise: &mut N,
) -> Result<crate::pmw::PmwOutcome> {
    let join = join_materialize(instance)?;
    let config = PmwConfig {
        params,
        delta_tilde,
        iterations: options.iterations,
        dense_cap: options.dense_cap,
    };
    pmw(instance.query(), &join, family, &config, noise)
}

/// Δ̃ = LS + TLap, then PMW at half budget.
pub fn release_two_table<N: NoiseSource>(
    instance: &Instance,
    family: &QueryFamily,
    params: PrivacyParams,
    options: &ReleaseOptions,
    noise: &mut N,
) -> Result<ReleaseReport> {
    require_two(instance)?;
    let half = params.halved();
    let ls = local_sensitivity(instance)? as f64;
    let delta_tilde = ls + noise.tlap(2.0 / params.epsilon, tau(half.epsilon, half.delta, 1.0));
    let out = run_pmw(instance, family, half, delta_tilde, options, noise)?;
    Ok(ReleaseReport {
        pipeline: "two_table".into(),
        epsilon: params.epsilon,
        delta: params.delta,
        epsilon_spent: params.epsilon,
        delta_spent: params.delta,
        delta_tilde_used: delta_tilde,
        sensitivity: ls,
        beta: None,
        lambda: None,
        n_hat: out.n_hat,
        iterations: out.iterations,
        epsilon_prime: out.epsilon_prime,
        clipped: out.clipped,
        label: None,
        max_multiplicity: None,
        sub_reports: Vec::new(),
        synthetic: Some(out.synthetic),
    })
}

/// β = 1/λ, Δ̃ = RS^β·e^{TLap}, then PMW at half budget.
pub fn release_multi_table<N: NoiseSource>(
    instance: &Instance,
    family: &QueryFamily,
    params: PrivacyParams,
    options: &ReleaseOptions,
    noise: &mut N,
) -> Result<ReleaseReport> {
    let half = params.halved();
    let lambda = params.lambda();
    let beta = 1.0 / lambda;
    let rs = residual_sensitivity(instance, beta)?.residual;
    let shift = noise.tlap(2.0 * beta / params.epsilon, tau(half.epsilon, half.delta, beta));
    let delta_tilde = rs * shift.exp();
    let out = run_pmw(instance, family, half, delta_tilde, options, noise)?;
    Ok(ReleaseReport {
        pipeline: "multi_table".into(),
        epsilon: params.epsilon,
        delta: params.delta,
        epsilon_spent: params.epsilon,
        delta_spent: params.delta,
        delta_tilde_used: delta_tilde,
        sensitivity: rs,
        beta: Some(beta),
        lambda: Some(lambda),
        n_hat: out.n_hat,
        iterations: out.iterations,
        epsilon_prime: out.epsilon_prime,
        clipped: out.clipped,
        label: None,
        max_multiplicity: None,
        sub_reports: Vec::new(),
        synthetic: Some(out.synthetic),
    })
}

/// max{1, ⌈log₂(deg̃/λ)⌉}; bucket i covers (λ·2^{i−1}, λ·2^i]. Non-positive degrees land in 1.
pub fn bucket_index(noisy_degree: f64, lambda: f64) -> u32 {
    if !(noisy_degree > 0.0) {
        return 1;
    }
    let i = (noisy_degree / lambda).log2().ceil();
    if i <= 1.0 {
        1
    } else {
        i as u32
    }
}

#[derive(Debug, Clone)]
pub struct SubInstance {
    pub instance: Instance,
    pub bucket: u32,
}

#[derive(Debug, Clone)]
pub struct PartitionResult {
    /// Non-empty buckets in ascending order.
    pub parts: Vec<SubInstance>,
    /// Join value of the shared attribute to its bucket.
    pub bucket_map: BTreeMap<u32, u32>,
    pub noisy_degrees: BTreeMap<u32, f64>,
    /// Largest number of sub-instances any input tuple appears in.
    pub max_multiplicity: u64,
}

/// Splits a two-relation instance by noisy degree buckets of the shared attribute.
pub fn partition_two_table<N: NoiseSource>(
    instance: &Instance,
    params: PrivacyParams,
    lambda: f64,
    noise: &mut N,
) -> Result<PartitionResult> {
    require_two(instance)?;
    let q = instance.query();
    let shared: Vec<usize> = q.edge(0).iter().copied().filter(|a| q.edge(1).contains(a)).collect();
    let [b] = shared[..] else {
        return Err(Error::SchemaNotTwoTableChain);
    };
    let d1 = degrees(instance, 0, &[b])?;
    let d2 = degrees(instance, 1, &[b])?;
    let mut values: Vec<u32> = d1.keys().chain(d2.keys()).map(|k| k[0]).collect();
    values.sort_unstable();
    values.dedup();

    let t = tau(params.epsilon, params.delta, 1.0);
    let mut bucket_map = BTreeMap::new();
    let mut noisy_degrees = BTreeMap::new();
    for v in values {
        let deg = d1.get(&vec![v]).copied().unwrap_or(0).max(d2.get(&vec![v]).copied().unwrap_or(0));
        let noisy = deg as f64 + noise.tlap(1.0 / params.epsilon, t);
        noisy_degrees.insert(v, noisy);
        bucket_map.insert(v, bucket_index(noisy, lambda));
    }

    let mut buckets: Vec<u32> = bucket_map.values().copied().collect();
    buckets.sort_unstable();
    buckets.dedup();
    let parts = buckets
        .into_iter()
        .map(|bucket| {
            let relations = (0..2)
                .map(|i| {
                    let pos = q.edge(i).iter().position(|&a| a == b).unwrap();
                    Relation::from_tuples(
                        instance
                            .relation(i)
                            .support()
                            .iter()
                            .filter(|(t, _)| bucket_map[&t[pos]] == bucket)
                            .map(|(t, &f)| (t.clone(), f)),
                    )
                })
                .collect();
            SubInstance {
                instance: instance.with_relations(relations),
                bucket,
            }
        })
        .collect();
    Ok(PartitionResult {
        parts,
        bucket_map,
        noisy_degrees,
        max_multiplicity: 1,
    })
}

/// Sums the synthetic outputs of sub-releases over the shared joined domain.
pub(crate) fn union_synthetic(
    instance: &Instance,
    subs: &[ReleaseReport],
    dense_cap: usize,
) -> Result<SyntheticDistribution> {
    let mut total = SyntheticDistribution::zeros(instance.query(), dense_cap)?;
    for s in subs {
        total.add_assign(s.synthetic())?;
    }
    Ok(total)
}

/// Partition at (ε/2, δ/2), then a residual-sensitivity release at (ε/2, δ/2) per bucket.
pub fn release_uniformized_two_table<N: NoiseSource>(
    instance: &Instance,
    family: &QueryFamily,
    params: PrivacyParams,
    options: &ReleaseOptions,
    noise: &mut N,
) -> Result<ReleaseReport> {
    let half = params.halved();
    let lambda = params.lambda();
    let partition = partition_two_table(instance, half, lambda, noise)?;
    let mut subs = Vec::with_capacity(partition.parts.len());
    for part in &partition.parts {
        let mut sub_noise = noise.fork(part.bucket as u64);
        let mut r = release_multi_table(&part.instance, family, half, options, &mut sub_noise)?;
        r.label = Some(format!("bucket {}", part.bucket));
        subs.push(r);
    }
    let synthetic = union_synthetic(instance, &subs, options.dense_cap)?;
    Ok(ReleaseReport {
        pipeline: "unif_two_table".into(),
        epsilon: params.epsilon,
        delta: params.delta,
        // Parallel composition over disjoint buckets, basic composition with the partition step.
        epsilon_spent: half.epsilon + half.epsilon,
        delta_spent: half.delta + half.delta,
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{FixedNoise, RngStream};
    use crate::queries::random_sign_family;
    use crate::relational::{join_materialize, JoinQuery};

    fn chain(r1: &[(u32, u32, u64)], r2: &[(u32, u32, u64)], dom: u32) -> Instance {
        let q = JoinQuery::from_names(&[("A", dom), ("B", dom), ("C", dom)], &[&["A", "B"], &["B", "C"]])
            .unwrap();
        let a = Relation::from_tuples(r1.iter().map(|&(x, y, f)| (vec![x, y], f)));
        let b = Relation::from_tuples(r2.iter().map(|&(x, y, f)| (vec![x, y], f)));
        Instance::new(q, vec![a, b]).unwrap()
    }

    #[test]
    fn bucket_edges() {
        assert_eq!(bucket_index(7.0, 2.0), 2);
        assert_eq!(bucket_index(2.0, 2.0), 1);
        assert_eq!(bucket_index(0.5, 2.0), 1);
        assert_eq!(bucket_index(0.0, 2.0), 1);
        assert_eq!(bucket_index(-3.0, 2.0), 1);
        for i in 1..20 {
            let lambda = 3.7;
            assert_eq!(bucket_index(lambda * 2f64.powi(i), lambda), i as u32);
            assert_eq!(bucket_index(lambda * 2f64.powi(i) * 1.0001, lambda), i as u32 + 1);
        }
    }

    #[test]
    fn two_table_shift_hook() {
        let inst = chain(&[(1, 0, 1), (2, 0, 1)], &[(0, 0, 1), (0, 1, 1)], 3);
        let fam = random_sign_family(inst.query(), 4, 1, false).unwrap();
        let p = PrivacyParams::new(1.0, 2f64.powi(-10)).unwrap();
        let r = release_two_table(&inst, &fam, p, &ReleaseOptions::default(), &mut FixedNoise::Shift).unwrap();
        assert_eq!(r.delta_tilde_used, 2.0 + tau(0.5, 2f64.powi(-11), 1.0));
        let m = release_multi_table(&inst, &fam, p, &ReleaseOptions::default(), &mut FixedNoise::Shift)
            .unwrap();
        let beta = 1.0 / p.lambda();
        assert_eq!(m.beta, Some(beta));
        assert_eq!(m.delta_tilde_used, m.sensitivity * tau(0.5, 2f64.powi(-11), beta).exp());
        assert!(m.sensitivity >= 2.0);
    }

    #[test]
    fn two_table_noise_within_support() {
        let inst = chain(&[(1, 0, 1), (2, 0, 1)], &[(0, 0, 1), (0, 1, 1)], 3);
        let fam = random_sign_family(inst.query(), 4, 1, false).unwrap();
        let p = PrivacyParams::new(1.0, 2f64.powi(-10)).unwrap();
        let hi = 2.0 + 2.0 * tau(0.5, 2f64.powi(-11), 1.0);
        for seed in 0..20 {
            let r = release_two_table(&inst, &fam, p, &ReleaseOptions::default(), &mut RngStream::new(seed, 0))
                .unwrap();
            assert!((2.0..=hi).contains(&r.delta_tilde_used));
        }
    }

    #[test]
    fn arity_is_checked() {
        let q = JoinQuery::from_names(&[("A", 2)], &[&["A"]]).unwrap();
        let inst = Instance::empty(q);
        let fam = random_sign_family(inst.query(), 2, 1, false).unwrap();
        let p = PrivacyParams::new(1.0, 0.1).unwrap();
        assert!(matches!(
            release_two_table(&inst, &fam, p, &ReleaseOptions::default(), &mut FixedNoise::Shift),
            Err(Error::WrongArity { .. })
        ));
        let q = JoinQuery::from_names(&[("A", 2), ("B", 2)], &[&["A", "B"], &["A", "B"]]).unwrap();
        assert!(matches!(
            partition_two_table(&Instance::empty(q), p, 1.0, &mut FixedNoise::Zero),
            Err(Error::SchemaNotTwoTableChain)
        ));
    }

    #[test]
    fn equal_degrees_make_one_part() {
        let inst = chain(&[(0, 0, 2), (1, 1, 2)], &[(0, 0, 1), (1, 1, 1)], 3);
        let p = PrivacyParams::new(1.0, 0.1).unwrap();
        let part = partition_two_table(&inst, p, 1.0, &mut FixedNoise::Zero).unwrap();
        assert_eq!(part.parts.len(), 1);
        assert_eq!(part.parts[0].instance, inst);
    }

    #[test]
    fn partition_preserves_the_join() {
        let inst = chain(
            &[(0, 0, 1), (1, 1, 3), (2, 1, 2), (0, 2, 9)],
            &[(0, 0, 1), (1, 2, 1), (2, 2, 1), (3, 3, 4)],
            4,
        );
        let p = PrivacyParams::new(1.0, 0.1).unwrap();
        let part = partition_two_table(&inst, p, 1.0, &mut RngStream::new(5, 0)).unwrap();
        let whole = join_materialize(&inst).unwrap();
        let mut union = BTreeMap::new();
        for s in &part.parts {
            for (t, w) in join_materialize(&s.instance).unwrap().entries {
                assert!(union.insert(t, w).is_none());
            }
        }
        assert_eq!(union, whole.entries);
    }
}
