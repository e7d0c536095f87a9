use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fairknn::dataset::{export, ingest, DatasetFormat};
use fairknn::exec::init_thread_pool_from_env;
use fairknn::experiment::{
    answer_query, read_jsonl, run_experiment, summary_table, verify_report, write_outputs, ExperimentConfig, QueryRow,
    QUERIES_FILE, REPORT_FILE,
};
use fairknn::generate::{gen_3dm, gen_queries, gen_synthetic, SyntheticConfig};
use fairknn::index::FairIndex;
use fairknn::select::Status;
use fairknn::{Dataset, DistanceKind, Exec, FairnessSpec, Query};

#[derive(Parser)]
#[command(name = "fairknn", version, about = "Fair k-nearest-neighbor search under exact attribute count constraints")]
struct Cli {
    /// Run everything on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index a dataset and write the index file.
    Build(BuildArgs),
    /// Answer one query against a dataset and its index.
    Query(QueryArgs),
    /// Run a full experiment from a config file.
    Bench(BenchArgs),
    /// Generate datasets and query workloads.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Re-check a bench report against its dataset.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DatasetArgs {
    /// Dataset file (.csv or packed binary).
    #[arg(long)]
    dataset: PathBuf,
    /// Distance for csv input (binary files carry their own).
    #[arg(long, default_value = "euclidean")]
    distance: DistanceKind,
}

impl DatasetArgs {
    fn load(&self) -> Result<Dataset> {
        let format = DatasetFormat::from_path(&self.dataset);
        ingest(&self.dataset, format, self.distance).with_context(|| format!("reading {}", self.dataset.display()))
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Experiment config supplying the lsh_* keys and seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    index: PathBuf,
    /// Comma-separated query vector.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    vector: Option<Vec<f64>>,
    /// Constraint `attribute=value:count,value:count`; repeat per attribute.
    #[arg(long = "constraint")]
    constraints: Vec<String>,
    /// JSON file holding a query (`vector` and `spec`) or just a spec.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    force_ilp: bool,
    #[arg(long, default_value_t = 1.0)]
    quota_boost: f64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    config: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum GenCommand {
    /// Two-cluster synthetic dataset.
    Synthetic(SyntheticArgs),
    /// 3-dimensional-matching instance with its all-ones spec.
    #[command(name = "3dm")]
    ThreeDm(ThreeDmArgs),
    /// Feasible query workload for a dataset.
    Queries(QueriesArgs),
}

#[derive(Args)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 10_050)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 50)]
    tight_size: usize,
    #[arg(long, default_value_t = 1.0)]
    tight_radius: f64,
    #[arg(long, default_value_t = 100.0)]
    far_offset: f64,
    /// Comma-separated attribute domain sizes.
    #[arg(long, value_delimiter = ',', default_value = "2,2,2")]
    domains: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    correlation: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; `.csv` for text, anything else for packed binary.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ThreeDmArgs {
    #[arg(long)]
    k_elements: usize,
    #[arg(long, default_value_t = 0)]
    extra_triples: usize,
    #[arg(long)]
    planted: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the all-ones spec as JSON.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Args)]
struct QueriesArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Report directory written by `bench`.
    #[arg(long)]
    report: PathBuf,
}

fn exec(cli: &Cli) -> Exec {
    if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn build(args: &BuildArgs, exec: Exec) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = load_config(args.config.as_deref())?;
    let index = FairIndex::build(&ds, &cfg.lsh_params(), exec)?;
    index.save(&args.out)?;
    println!(
        "indexed {} records in {} partitions ({} table entries)",
        ds.len(),
        index.registry().len(),
        index.total_entries()
    );
    let clamped = index.clamped_partitions();
    if clamped > 0 {
        println!(
            "{clamped} partitions had their table count clamped to ell_max = {}",
            cfg.lsh_ell_max
        );
    }
    Ok(())
}

/// Parses `attribute=value:count,value:count` against the schema.
fn parse_constraint(text: &str, ds: &Dataset) -> Result<(usize, BTreeMap<u32, usize>)> {
    let (attr, values) = text
        .split_once('=')
        .ok_or_else(|| anyhow!("constraint {text:?} must look like attr=value:count,..."))?;
    let schema = ds.schema();
    let j = schema
        .attr_index(attr.trim())
        .ok_or_else(|| anyhow!("unknown attribute {attr:?}"))?;
    let mut counts = BTreeMap::new();
    for item in values.split(',') {
        let (v, c) = item
            .rsplit_once(':')
            .ok_or_else(|| anyhow!("constraint item {item:?} must look like value:count"))?;
        let v = schema
            .value_index(j, v.trim())
            .ok_or_else(|| anyhow!("unknown value {v:?} for attribute {attr:?}"))?;
        let c: usize = c.trim().parse().with_context(|| format!("bad count in {item:?}"))?;
        *counts.entry(v).or_default() += c;
    }
    Ok((j, counts))
}

fn read_query(args: &QueryArgs, ds: &Dataset) -> Result<Query> {
    let mut from_file = None;
    let mut spec = None;
    if let Some(path) = &args.spec {
        let text = fs::read_to_string(path)?;
        match serde_json::from_str::<Query>(&text) {
            Ok(q) => from_file = Some(q),
            Err(_) => spec = Some(serde_json::from_str::<FairnessSpec>(&text).context("parsing spec file")?),
        }
    }
    if !args.constraints.is_empty() {
        let parsed = args
            .constraints
            .iter()
            .map(|c| parse_constraint(c, ds))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let k = parsed.values().next().map_or(0, |c| c.values().sum());
        spec = Some(FairnessSpec::new(k, parsed)?);
    }
    let vector = args.vector.clone().or_else(|| from_file.as_ref().map(|q| q.vector.clone()));
    let spec = spec.or_else(|| from_file.map(|q| q.spec));
    match (vector, spec) {
        (Some(vector), Some(spec)) => Ok(Query::new(vector, spec)),
        (None, _) => bail!("no query vector; pass --vector or a query file"),
        (_, None) => bail!("no constraints; pass --constraint or --spec"),
    }
}

fn query(args: &QueryArgs, exec: Exec) -> Result<bool> {
    let ds = args.data.load()?;
    let index = FairIndex::load(&args.index).with_context(|| format!("reading index {}", args.index.display()))?;
    index.check_dataset(&ds)?;
    let q = read_query(args, &ds)?;
    let retrieval = fairknn::retrieval::RetrievalOptions {
        quota_boost: args.quota_boost,
    };
    let opts = fairknn::select::SelectOptions {
        force_ilp: args.force_ilp,
        ..Default::default()
    };
    let a = answer_query(&q, &index, &ds, &retrieval, &opts, exec)?;
    println!("spec: {}", q.spec.display(ds.schema()));
    println!(
        "retrieved {} candidates from {} partitions ({} scanned of {})",
        a.retrieval.candidates.len(),
        a.retrieval.partitions.len(),
        a.retrieval.scanned,
        a.retrieval.relevant_size
    );
    println!("solver: {:?}", a.result.solver);
    match &a.result.status {
        Status::Feasible { selected, cost } => {
            println!("status: feasible, cost {cost:.6}");
            for id in selected {
                let rec = ds.get(*id).expect("selected id");
                let d = a.retrieval.candidates.iter().find(|c| c.id == *id).map_or(f64::NAN, |c| c.dist);
                let attrs: Vec<&str> = rec
                    .attrs
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| ds.schema().attributes()[j].values[v as usize].as_str())
                    .collect();
                println!("  {id}\t{d:.6}\t{}", attrs.join(","));
            }
            Ok(true)
        }
        Status::Infeasible => {
            println!("status: infeasible (the retrieved candidates cannot meet the counts)");
            Ok(false)
        }
        Status::ResourceExhausted => {
            println!("status: resource exhausted (node budget reached before optimality was proven)");
            Ok(false)
        }
    }
}

fn bench(args: &BenchArgs, exec: Exec) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = load_config(Some(&args.config))?;
    let out = run_experiment(&ds, &cfg, exec)?;
    write_outputs(&args.out, &out)?;
    print!("{}", summary_table(&out));
    Ok(())
}

fn write_dataset(ds: &Dataset, out: &Path) -> Result<()> {
    export(ds, out, DatasetFormat::from_path(out))?;
    println!("wrote {} records to {}", ds.len(), out.display());
    Ok(())
}

fn gen(cmd: &GenCommand) -> Result<()> {
    match cmd {
        GenCommand::Synthetic(a) => {
            let ds = gen_synthetic(&SyntheticConfig {
                n_total: a.n,
                dim: a.dim,
                tight_size: a.tight_size,
                tight_radius: a.tight_radius,
                far_offset: a.far_offset,
                domain_sizes: a.domains.clone(),
                correlation: a.correlation,
                seed: a.seed,
            })?;
            write_dataset(&ds, &a.out)
        }
        GenCommand::ThreeDm(a) => {
            let (ds, spec) = gen_3dm(a.k_elements, a.extra_triples, a.planted, a.seed)?;
            write_dataset(&ds, &a.out)?;
            if let Some(p) = &a.spec_out {
                fs::write(p, serde_json::to_string(&spec)?)?;
            }
            Ok(())
        }
        GenCommand::Queries(a) => {
            let ds = a.data.load()?;
            let cfg = load_config(Some(&a.config))?;
            let queries = gen_queries(&ds, &cfg.query_gen(ds.dim()))?;
            let mut text = String::new();
            for q in &queries {
                text.push_str(&serde_json::to_string(q)?);
                text.push('\n');
            }
            fs::write(&a.out, text)?;
            println!("wrote {} queries to {}", queries.len(), a.out.display());
            Ok(())
        }
    }
}

fn verify(args: &VerifyArgs) -> Result<bool> {
    let ds = args.data.load()?;
    let queries: Vec<Query> = read_jsonl(&args.report.join(QUERIES_FILE))?;
    let rows: Vec<QueryRow> = read_jsonl(&args.report.join(REPORT_FILE))?;
    let issues = verify_report(&ds, &queries, &rows)?;
    let checked = rows.iter().filter(|r| r.success).count();
    for i in &issues {
        println!("query {} {}: {}", i.query, i.method.name(), i.message);
    }
    println!("checked {checked} successful selections in {} rows: {} problems", rows.len(), issues.len());
    Ok(issues.is_empty())
}

fn run(cli: &Cli) -> Result<bool> {
    let exec = exec(cli);
    match &cli.command {
        Command::Build(a) => build(a, exec).map(|_| true),
        Command::Query(a) => query(a, exec),
        Command::Bench(a) => bench(a, exec).map(|_| true),
        Command::Gen(g) => gen(g).map(|_| true),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_thread_pool_from_env();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
