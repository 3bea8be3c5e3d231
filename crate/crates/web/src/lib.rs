//! Browser bindings for the static demo in `www/`. Every export takes and
//! returns JSON strings; the `*_json` functions hold the logic so they can be
//! tested natively.

use dpjoin::hard::GeneratorSpec;
use dpjoin::noise::{sample_tlap, tau};
use dpjoin::relational::io::{instance_to_json, parse_instance};
use dpjoin::relational::{count, degrees, join_materialize};
use dpjoin::release::partition_two_table;
use dpjoin::sensitivity::{local_sensitivity, residual_sensitivity};
use dpjoin::{PrivacyParams, RngStream};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_SAMPLES: usize = 1_000_000;
const MAX_STEPS: usize = 1_000;

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

#[derive(Debug, Serialize)]
pub struct Histogram {
    pub tau: f64,
    pub scale: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub bins: Vec<Bin>,
}

/// Samples TLap with scale Δ/ε and shift τ(ε, δ, Δ), binned over [0, 2τ].
pub fn tlap_histogram_json(
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<String, String> {
    PrivacyParams::new(epsilon, delta).map_err(|e| e.to_string())?;
    if !(sensitivity > 0.0 && sensitivity.is_finite()) {
        return Err(format!("sensitivity must be positive, got {sensitivity}"));
    }
    if samples == 0 || samples > MAX_SAMPLES || bins == 0 || bins > MAX_STEPS {
        return Err(format!("need 1..={MAX_SAMPLES} samples and 1..={MAX_STEPS} bins"));
    }
    let t = tau(epsilon, delta, sensitivity);
    let scale = sensitivity / epsilon;
    let width = 2.0 * t / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut stream = RngStream::new(seed, 0);
    let (mut min, mut max, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for _ in 0..samples {
        let x = sample_tlap(scale, t, stream.rng());
        counts[((x / width) as usize).min(bins - 1)] += 1;
        min = min.min(x);
        max = max.max(x);
        sum += x;
    }
    to_json(&Histogram {
        tau: t,
        scale,
        min,
        max,
        mean: sum / samples as f64,
        bins: counts
            .into_iter()
            .enumerate()
            .map(|(i, count)| Bin {
                lo: i as f64 * width,
                hi: (i + 1) as f64 * width,
                count,
            })
            .collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub rs: f64,
    pub k_star: u64,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub relations: usize,
    pub n: u64,
    pub count: u64,
    pub ls: u64,
    pub points: Vec<CurvePoint>,
}

/// RS^β over `steps` geometrically spaced β in [beta_min, beta_max].
pub fn residual_curve_json(instance: &str, beta_min: f64, beta_max: f64, steps: usize) -> Result<String, String> {
    let inst = parse_instance(instance).map_err(|e| e.to_string())?;
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max.is_finite()) {
        return Err(format!("need 0 < beta_min <= beta_max, got {beta_min}, {beta_max}"));
    }
    if steps == 0 || steps > MAX_STEPS {
        return Err(format!("need 1..={MAX_STEPS} steps"));
    }
    let ratio = if steps > 1 {
        (beta_max / beta_min).powf(1.0 / (steps - 1) as f64)
    } else {
        1.0
    };
    let points = (0..steps)
        .map(|i| {
            let beta = beta_min * ratio.powi(i as i32);
            let r = residual_sensitivity(&inst, beta).map_err(|e| e.to_string())?;
            Ok(CurvePoint {
                beta,
                rs: r.residual,
                k_star: r.k_star,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let err = |e: dpjoin::Error| e.to_string();
    to_json(&Curve {
        relations: inst.query().arity(),
        n: inst.input_size(),
        count: count(&inst).map_err(err)?,
        ls: local_sensitivity(&inst).map_err(err)?,
        points,
    })
}

#[derive(Debug, Serialize)]
pub struct BucketRow {
    pub bucket: u32,
    /// Noisy degrees in this bucket fall in (lo, hi].
    pub lo: f64,
    pub hi: f64,
    pub values: usize,
    pub true_degrees: Vec<u64>,
    pub join_size: u64,
}

#[derive(Debug, Serialize)]
pub struct Census {
    pub lambda: f64,
    pub max_multiplicity: u64,
    pub buckets: Vec<BucketRow>,
}

/// The noisy-degree partition a uniformized two-table release would use:
/// noise at (ε/2, δ/2), bucket edges from λ(ε, δ).
pub fn partition_census_json(instance: &str, epsilon: f64, delta: f64, seed: u64) -> Result<String, String> {
    let err = |e: dpjoin::Error| e.to_string();
    let inst = parse_instance(instance).map_err(err)?;
    let p = PrivacyParams::new(epsilon, delta).map_err(err)?;
    let lambda = p.lambda();
    let part = partition_two_table(&inst, p.halved(), lambda, &mut RngStream::new(seed, 0)).map_err(err)?;
    let b = shared(&inst);
    let d1 = degrees(&inst, 0, &b).map_err(err)?;
    let d2 = degrees(&inst, 1, &b).map_err(err)?;
    let deg = |v: u32| {
        let key = vec![v];
        d1.get(&key).copied().unwrap_or(0).max(d2.get(&key).copied().unwrap_or(0))
    };
    let buckets = part
        .parts
        .iter()
        .map(|s| {
            let mut true_degrees: Vec<u64> = part
                .bucket_map
                .iter()
                .filter(|(_, &b)| b == s.bucket)
                .map(|(&v, _)| deg(v))
                .collect();
            true_degrees.sort_unstable();
            true_degrees.dedup();
            Ok(BucketRow {
                bucket: s.bucket,
                lo: if s.bucket == 1 { 0.0 } else { lambda * 2f64.powi(s.bucket as i32 - 1) },
                hi: lambda * 2f64.powi(s.bucket as i32),
                values: part.bucket_map.values().filter(|&&b| b == s.bucket).count(),
                true_degrees,
                join_size: join_materialize(&s.instance).map_err(err)?.total,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&Census {
        lambda,
        max_multiplicity: part.max_multiplicity,
        buckets,
    })
}

fn shared(inst: &dpjoin::Instance) -> Vec<usize> {
    let q = inst.query();
    q.edge(0).iter().copied().filter(|a| q.edge(1).contains(a)).collect()
}

/// Instance JSON for a generator spec such as `{"gen": "gap", "k": 64}`.
pub fn generate_instance_json(spec: &str) -> Result<String, String> {
    let spec: GeneratorSpec = serde_json::from_str(spec).map_err(|e| e.to_string())?;
    let g = spec.generate().map_err(|e| e.to_string())?;
    Ok(instance_to_json(&g.instance))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn tlap_histogram(
    epsilon: f64,
    delta: f64,
    sensitivity: f64,
    samples: usize,
    bins: usize,
    seed: u64,
) -> Result<String, JsValue> {
    js(tlap_histogram_json(epsilon, delta, sensitivity, samples, bins, seed))
}

#[wasm_bindgen]
pub fn residual_curve(instance: &str, beta_min: f64, beta_max: f64, steps: usize) -> Result<String, JsValue> {
    js(residual_curve_json(instance, beta_min, beta_max, steps))
}

#[wasm_bindgen]
pub fn partition_census(instance: &str, epsilon: f64, delta: f64, seed: u64) -> Result<String, JsValue> {
    js(partition_census_json(instance, epsilon, delta, seed))
}

#[wasm_bindgen]
pub fn generate_instance(spec: &str) -> Result<String, JsValue> {
    js(generate_instance_json(spec))
}
