use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dpjoin::hard::GeneratorSpec;
use dpjoin::pmw::Iterations;
use dpjoin::queries::FamilySpec;
use dpjoin::relational::count;
use dpjoin::relational::io::{parse_instance, write_instance};
use dpjoin::release::ReleaseOptions;
use dpjoin::sensitivity::{local_sensitivity, residual_sensitivity};
use dpjoin::{is_hierarchical, run_experiment, AttributeForest, ExperimentSpec, Instance, Pipeline, PrivacyParams};
use serde::{Deserialize, Serialize};

const CONFIG_ENV: &str = "DPJOIN_CONFIG";

#[derive(Parser)]
#[command(name = "dpjoin", version, about = "Private synthetic data for linear queries over joins")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a hard instance and write it with a manifest of its statistics.
    Generate(GenerateArgs),
    /// Run one pipeline and write synthetic data, report and error table.
    Release(RunArgs),
    /// Print statistics of an instance file.
    Verify(VerifyArgs),
    /// Run several pipelines over many seeds and write error tables.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Lb2,
    MultiLb,
    Staircase,
    Gap,
    Conforming,
}

#[derive(Args, Default)]
struct GenFlags {
    #[arg(long = "gen", value_enum)]
    gen: Option<GenKind>,
    #[arg(long)]
    n: Option<u64>,
    #[arg(long)]
    delta: Option<u64>,
    /// Number of distinct values T is spread over (lb2, multi-lb).
    #[arg(long)]
    domain: Option<u32>,
    #[arg(long, default_value_t = 3)]
    relations: usize,
    #[arg(long)]
    sqrt_n: Option<u32>,
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Bucket target as `index:join_size`, repeatable (conforming).
    #[arg(long = "bucket", value_parser = parse_bucket)]
    buckets: Vec<(u32, u64)>,
}

fn parse_bucket(s: &str) -> Result<(u32, u64), String> {
    let (i, n) = s.split_once(':').ok_or("expected index:join_size")?;
    Ok((
        i.trim().parse().map_err(|e| format!("{e}"))?,
        n.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

impl GenFlags {
    fn spec(&self) -> Result<Option<GeneratorSpec>> {
        let Some(kind) = self.gen else { return Ok(None) };
        let need = |v: Option<u64>, flag: &str| v.ok_or_else(|| anyhow!("--gen needs --{flag}"));
        Ok(Some(match kind {
            GenKind::Lb2 => GeneratorSpec::Lb2 {
                n: need(self.n, "n")?,
                delta: need(self.delta, "delta")?,
                domain: self.domain,
            },
            GenKind::MultiLb => GeneratorSpec::MultiLb {
                n: need(self.n, "n")?,
                delta: need(self.delta, "delta")?,
                relations: self.relations,
                domain: self.domain,
            },
            GenKind::Staircase => GeneratorSpec::Staircase {
                sqrt_n: self.sqrt_n.ok_or_else(|| anyhow!("--gen staircase needs --sqrt-n"))?,
            },
            GenKind::Gap => GeneratorSpec::Gap { k: need(self.k, "k")? },
            GenKind::Conforming => GeneratorSpec::Conforming {
                lambda: self.lambda.ok_or_else(|| anyhow!("--gen conforming needs --lambda"))?,
                buckets: self.buckets.clone(),
            },
        }))
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    gen: GenFlags,
    /// Instance file to write.
    #[arg(long, short)]
    out: PathBuf,
    /// Manifest path; defaults to `<out stem>.manifest.json` next to the instance.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Compare against a manifest written by `generate`; exit 1 on mismatch.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Print the statistics as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON RunConfig supplying defaults; falls back to $DPJOIN_CONFIG.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pipeline: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "privacy-delta")]
    privacy_delta: Option<f64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    gen: GenFlags,
    /// Size of a random-sign family.
    #[arg(long)]
    family_size: Option<usize>,
    #[arg(long)]
    family_seed: Option<u64>,
    /// Add the counting query to the random-sign family.
    #[arg(long)]
    with_counting: bool,
    /// JSON FamilySpec, overriding the random-sign flags.
    #[arg(long)]
    family: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    dense_cap: Option<usize>,
    /// Drop synthetic cells below this mass from the CSV.
    #[arg(long)]
    sparse_threshold: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Pipelines to compare; defaults to the configured one.
    #[arg(long, value_delimiter = ',')]
    pipelines: Vec<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InputSpec {
    Instance(PathBuf),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Caps {
    dense_cap: usize,
    sparse_threshold: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            dense_cap: ReleaseOptions::default().dense_cap,
            sparse_threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    pipeline: Pipeline,
    epsilon: f64,
    delta: f64,
    iterations: Option<u64>,
    seeds: Vec<u64>,
    input: Option<InputSpec>,
    family: FamilySpec,
    output: PathBuf,
    caps: Caps,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            pipeline: Pipeline::TwoTable,
            epsilon: 1.0,
            delta: 1e-6,
            iterations: None,
            seeds: vec![0],
            input: None,
            family: FamilySpec::RandomSign {
                size: 64,
                seed: 0,
                with_counting: true,
            },
            output: PathBuf::from("dpjoin-out"),
            caps: Caps::default(),
        }
    }
}

impl RunConfig {
    fn load(args: &RunArgs) -> Result<RunConfig> {
        let path = args.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let mut c = match path {
            Some(p) => {
                let text = fs::read_to_string(&p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &args.pipeline {
            c.pipeline = p.parse()?;
        }
        if let Some(e) = args.epsilon {
            c.epsilon = e;
        }
        if let Some(d) = args.privacy_delta {
            c.delta = d;
        }
        if args.iterations.is_some() {
            c.iterations = args.iterations;
        }
        if let Some(s) = &args.seeds {
            c.seeds = s.clone();
        }
        match (&args.instance, args.gen.spec()?) {
            (Some(_), Some(_)) => bail!("give either --instance or --gen, not both"),
            (Some(p), None) => c.input = Some(InputSpec::Instance(p.clone())),
            (None, Some(g)) => c.input = Some(InputSpec::Generator(g)),
            (None, None) => {}
        }
        if let Some(f) = &args.family {
            c.family = serde_json::from_str(f).context("parsing --family")?;
        } else if args.family_size.is_some() || args.family_seed.is_some() || args.with_counting {
            let (size, seed) = match c.family {
                FamilySpec::RandomSign { size, seed, .. } => (size, seed),
                _ => (64, 0),
            };
            c.family = FamilySpec::RandomSign {
                size: args.family_size.unwrap_or(size),
                seed: args.family_seed.unwrap_or(seed),
                with_counting: args.with_counting,
            };
        }
        if let Some(o) = &args.out {
            c.output = o.clone();
        }
        if let Some(cap) = args.dense_cap {
            c.caps.dense_cap = cap;
        }
        if let Some(t) = args.sparse_threshold {
            c.caps.sparse_threshold = t;
        }
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        self.params()?;
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.input.is_none() {
            bail!("no input: pass --instance or --gen");
        }
        if self.family.size() == 0 {
            return Err(dpjoin::Error::DegenerateFamily.into());
        }
        if self.iterations == Some(0) {
            bail!("--iterations must be positive");
        }
        if self.caps.dense_cap == 0 {
            bail!("--dense-cap must be positive");
        }
        Ok(())
    }

    fn params(&self) -> Result<PrivacyParams> {
        Ok(PrivacyParams::new(self.epsilon, self.delta)?)
    }

    fn options(&self) -> ReleaseOptions {
        ReleaseOptions {
            iterations: self.iterations.map_or(Iterations::Auto, Iterations::Fixed),
            dense_cap: self.caps.dense_cap,
        }
    }

    fn instance(&self) -> Result<(Instance, Option<f64>)> {
        match self.input.as_ref().expect("validated") {
            InputSpec::Instance(p) => Ok((read_instance_file(p)?, None)),
            InputSpec::Generator(g) => {
                let g = g.generate()?;
                Ok((g.instance, Some(g.nominal_domain_size)))
            }
        }
    }
}

fn read_instance_file(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stats {
    n: u64,
    count: u64,
    ls: u64,
    beta: f64,
    rs: f64,
}

impl Stats {
    fn compute(instance: &Instance, beta: f64) -> Result<Stats> {
        Ok(Stats {
            n: instance.input_size(),
            count: count(instance)?,
            ls: local_sensitivity(instance)?,
            beta,
            rs: residual_sensitivity(instance, beta)?.residual,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    generator: GeneratorSpec,
    #[serde(flatten)]
    stats: Stats,
    nominal_domain_size: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    achieved_delta: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    slice: Option<u64>,
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let spec = args.gen.spec()?.ok_or_else(|| anyhow!("generate needs --gen"))?;
    let g = spec.generate()?;
    let stats = Stats::compute(&g.instance, args.beta)?;
    if stats.count != g.declared_count || g.declared_ls.is_some_and(|ls| ls != stats.ls) {
        bail!("generated instance does not match its declared statistics");
    }
    let manifest = Manifest {
        generator: spec,
        stats,
        nominal_domain_size: g.nominal_domain_size,
        achieved_delta: g.achieved_delta,
        slice: g.slice,
    };
    write_instance(&g.instance, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let manifest_path = args.manifest.unwrap_or_else(|| {
        let stem = args.out.file_stem().unwrap_or_default().to_string_lossy();
        args.out.with_file_name(format!("{stem}.manifest.json"))
    });
    write_json(&manifest_path, &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

#[derive(Serialize)]
struct Diagnostics {
    #[serde(flatten)]
    stats: Stats,
    hierarchical: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    forest: Option<String>,
}

fn cmd_verify(args: VerifyArgs) -> Result<()> {
    let instance = read_instance_file(&args.instance)?;
    let stats = Stats::compute(&instance, args.beta)?;
    let hierarchical = is_hierarchical(instance.query());
    let forest = if hierarchical {
        Some(AttributeForest::new(instance.query())?.render())
    } else {
        None
    };
    let diag = Diagnostics {
        stats,
        hierarchical,
        forest,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&diag)?);
    } else {
        let s = &diag.stats;
        println!("relations: {}", instance.query().arity());
        println!("n: {}", s.n);
        println!("count: {}", s.count);
        println!("ls: {}", s.ls);
        println!("rs(beta={}): {}", s.beta, s.rs);
        println!("hierarchical: {}", if hierarchical { "yes" } else { "no" });
        if let Some(f) = &diag.forest {
            print!("{f}");
        }
    }
    if let Some(p) = args.manifest {
        let text = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
        let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
        if m.stats != diag.stats {
            bail!("manifest mismatch: expected {:?}, found {:?}", m.stats, diag.stats);
        }
        eprintln!("manifest: ok");
    }
    Ok(())
}

fn experiment_spec(config: &RunConfig, pipeline: Pipeline, nominal: Option<f64>) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::new(pipeline, config.params()?, config.seeds.clone());
    spec.options = config.options();
    spec.nominal_domain_size = nominal;
    Ok(spec)
}

fn cmd_release(args: RunArgs) -> Result<()> {
    let config = RunConfig::load(&args)?;
    let (instance, nominal) = config.instance()?;
    let family = config.family.build(instance.query())?;
    fs::create_dir_all(&config.output).with_context(|| format!("creating {}", config.output.display()))?;
    write_json(&config.output.join("config.json"), &config)?;

    let report = config
        .pipeline
        .release(&instance, &family, config.params()?, &config.options(), config.seeds[0])?;
    let csv_path = config.output.join("synthetic.csv");
    let file = fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    report
        .synthetic()
        .write_csv(std::io::BufWriter::new(file), config.caps.sparse_threshold)?;
    write_json(&config.output.join("report.json"), &report)?;

    let mut table = run_experiment(&instance, &family, &experiment_spec(&config, config.pipeline, nominal)?)?;
    // Release outputs are byte-reproducible; timings belong to `bench`.
    for row in &mut table.rows {
        row.wall_ms = 0.0;
    }
    let err_path = config.output.join("errors.csv");
    table.write_csv(fs::File::create(&err_path).with_context(|| format!("writing {}", err_path.display()))?)?;

    println!(
        "{}: epsilon_spent={} delta_spent={} delta_tilde={} median_error={} -> {}",
        report.pipeline,
        report.epsilon_spent,
        report.delta_spent,
        report.delta_tilde_used,
        table.summary.median,
        config.output.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary {
    pipeline: String,
    #[serde(flatten)]
    summary: dpjoin::experiment::ErrorSummary,
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let config = RunConfig::load(&args.run)?;
    let pipelines = if args.pipelines.is_empty() {
        vec![config.pipeline]
    } else {
        args.pipelines.iter().map(|p| p.parse()).collect::<Result<Vec<Pipeline>, _>>()?
    };
    let (instance, nominal) = config.instance()?;
    let family = config.family.build(instance.query())?;
    fs::create_dir_all(&config.output).with_context(|| format!("creating {}", config.output.display()))?;
    write_json(&config.output.join("config.json"), &config)?;

    let mut summaries = Vec::new();
    println!("{:<18} {:>5} {:>12} {:>12} {:>12} {:>10}", "pipeline", "runs", "median", "q75", "envelope", "ratio");
    for p in pipelines {
        let mut spec = experiment_spec(&config, p, nominal)?;
        spec.threads = args.threads;
        let table = run_experiment(&instance, &family, &spec)?;
        let path = config.output.join(format!("errors_{p}.csv"));
        table.write_csv(fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?)?;
        let s = &table.summary;
        println!(
            "{:<18} {:>5} {:>12.4} {:>12.4} {:>12.4} {:>10.4}",
            p.as_str(), s.runs, s.median, s.q75, s.envelope, s.median_ratio
        );
        summaries.push(BenchSummary {
            pipeline: p.to_string(),
            summary: table.summary,
        });
    }
    write_json(&config.output.join("summary.json"), &summaries)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use dpjoin::Error as E;
    for cause in err.chain() {
        if cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Json(_) | E::Csv(_) | E::InvalidSchema(_) | E::InvalidInstance(_) => 2,
                E::SupportTooLarge { .. } | E::DomainTooLarge { .. } => 3,
                E::WrongArity { .. } | E::SchemaNotTwoTableChain => 4,
                E::NotHierarchical => 5,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Release(a) => cmd_release(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
