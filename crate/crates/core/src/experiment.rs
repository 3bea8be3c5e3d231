//! Seeded error experiments over the release pipelines.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hard::{error_envelope_two_table, f_upper};
use crate::hierarchical::release_uniformized_hierarchical;
use crate::noise::{PrivacyParams, RngStream};
use crate::pmw::SyntheticDistribution;
use crate::queries::{max_error, QueryFamily};
use crate::relational::{count, join_materialize, Instance};
use crate::release::{
    release_multi_table, release_two_table, release_uniformized_two_table, ReleaseOptions, ReleaseReport,
};
use crate::sensitivity::local_sensitivity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    TwoTable,
    MultiTable,
    UnifTwoTable,
    UnifHierarchical,
    /// Releases the true join; a zero-error reference for harness tests.
    #[serde(skip)]
    Exact,
}

impl Pipeline {
    pub const ALL: [Pipeline; 4] = [
        Pipeline::TwoTable,
        Pipeline::MultiTable,
        Pipeline::UnifTwoTable,
        Pipeline::UnifHierarchical,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::TwoTable => "two_table",
            Pipeline::MultiTable => "multi_table",
            Pipeline::UnifTwoTable => "unif_two_table",
            Pipeline::UnifHierarchical => "unif_hierarchical",
            Pipeline::Exact => "exact",
        }
    }

    pub fn release(
        &self,
        instance: &Instance,
        family: &QueryFamily,
        params: PrivacyParams,
        options: &ReleaseOptions,
        seed: u64,
    ) -> Result<ReleaseReport> {
        let mut noise = RngStream::new(seed, 0);
        match self {
            Pipeline::TwoTable => release_two_table(instance, family, params, options, &mut noise),
            Pipeline::MultiTable => release_multi_table(instance, family, params, options, &mut noise),
            Pipeline::UnifTwoTable => release_uniformized_two_table(instance, family, params, options, &mut noise),
            Pipeline::UnifHierarchical => {
                release_uniformized_hierarchical(instance, family, params, options, &mut noise)
            }
            Pipeline::Exact => exact_release(instance, params, options),
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown pipeline `{s}`")))
    }
}

fn exact_release(instance: &Instance, params: PrivacyParams, options: &ReleaseOptions) -> Result<ReleaseReport> {
    let join = join_materialize(instance)?;
    let synthetic = SyntheticDistribution::from_join(instance.query(), &join, options.dense_cap)?;
    Ok(ReleaseReport {
        pipeline: "exact".into(),
        epsilon: params.epsilon,
        delta: params.delta,
        epsilon_spent: f64::INFINITY,
        delta_spent: 1.0,
        delta_tilde_used: 0.0,
        sensitivity: 0.0,
        beta: None,
        lambda: None,
        n_hat: join.total as f64,
        iterations: 0,
        epsilon_prime: 0.0,
        clipped: 0,
        label: None,
        max_multiplicity: None,
        sub_reports: Vec::new(),
        synthetic: Some(synthetic),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub pipeline: Pipeline,
    pub params: PrivacyParams,
    pub seeds: Vec<u64>,
    pub options: ReleaseOptions,
    /// |D| for the envelope; the instantiated joined domain when absent.
    pub nominal_domain_size: Option<f64>,
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    pub fn new(pipeline: Pipeline, params: PrivacyParams, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            pipeline,
            params,
            seeds,
            options: ReleaseOptions::default(),
            nominal_domain_size: None,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub seed: u64,
    pub pipeline: String,
    pub epsilon: f64,
    pub delta: f64,
    pub count: u64,
    pub delta_tilde: f64,
    pub max_error: f64,
    pub envelope: f64,
    pub ratio: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub runs: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub median_ratio: f64,
    pub envelope: f64,
    pub epsilon_spent: f64,
    pub delta_spent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub summary: ErrorSummary,
}

/// Linear interpolation between order statistics.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

impl ErrorTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.max_error).collect()
    }
}

struct SeedOutcome {
    row: ErrorRow,
    spent: (f64, f64),
}

/// One release per seed, seeds spread over threads; rows come back in seed order.
pub fn run_experiment(instance: &Instance, family: &QueryFamily, spec: &ExperimentSpec) -> Result<ErrorTable> {
    if spec.seeds.is_empty() {
        return Err(Error::InvalidParameter("experiment needs at least one seed".into()));
    }
    let n_join = count(instance)?;
    let ls = local_sensitivity(instance)? as f64;
    let lambda = spec.params.lambda();
    let domain = spec
        .nominal_domain_size
        .unwrap_or_else(|| instance.query().domain_size() as f64);
    let fu = f_upper(domain, family.len() as f64, spec.params.epsilon, spec.params.delta);
    let envelope = error_envelope_two_table(n_join as f64, ls, lambda, fu);

    let run_one = |seed: u64| -> Result<SeedOutcome> {
        let start = Instant::now();
        let report = spec.pipeline.release(instance, family, spec.params, &spec.options, seed)?;
        let (err, _) = max_error(family, instance, report.synthetic())?;
        Ok(SeedOutcome {
            row: ErrorRow {
                seed,
                pipeline: spec.pipeline.to_string(),
                epsilon: spec.params.epsilon,
                delta: spec.params.delta,
                count: n_join,
                delta_tilde: report.delta_tilde_used,
                max_error: err,
                envelope,
                ratio: err / envelope,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            },
            spent: (report.epsilon_spent, report.delta_spent),
        })
    };

    let threads = spec
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, spec.seeds.len());
    let chunk = spec.seeds.len().div_ceil(threads);
    let outcomes: Vec<SeedOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = spec
            .seeds
            .chunks(chunk)
            .map(|seeds| s.spawn(|| seeds.iter().map(|&seed| run_one(seed)).collect::<Result<Vec<_>>>()))
            .collect();
        let mut all = Vec::with_capacity(spec.seeds.len());
        for h in handles {
            all.extend(h.join().expect("experiment worker panicked")?);
        }
        Ok::<_, Error>(all)
    })?;

    let errors: Vec<f64> = outcomes.iter().map(|o| o.row.max_error).collect();
    let ratios: Vec<f64> = outcomes.iter().map(|o| o.row.ratio).collect();
    let spent = outcomes[0].spent;
    let summary = ErrorSummary {
        runs: outcomes.len(),
        min: quantile(&errors, 0.0),
        q25: quantile(&errors, 0.25),
        median: quantile(&errors, 0.5),
        q75: quantile(&errors, 0.75),
        max: quantile(&errors, 1.0),
        median_ratio: quantile(&ratios, 0.5),
        envelope,
        epsilon_spent: spent.0,
        delta_spent: spent.1,
    };
    Ok(ErrorTable {
        rows: outcomes.into_iter().map(|o| o.row).collect(),
        summary,
    })
}
