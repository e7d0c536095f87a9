//! Benchmark harness: runs a query workload through the pipeline, the
//! brute-force ground truth and the baselines, and writes the reports.
//!
//! Output files in the report directory:
//! - `queries.jsonl`: one generated query per line.
//! - `report.jsonl`: one [`QueryRow`] per query and method, in query order
//!   then method order. Contains no timings, so equal runs give equal bytes.
//! - `timings.jsonl`: one [`TimingRow`] per query and method.
//! - `summary.txt`: per-method aggregates as a text table.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::baselines::{jir_retrieve, sair_retrieve, SairIndex};
use crate::dataset::Dataset;
use crate::distance::distance;
use crate::error::{FairKnnError, Result};
use crate::exec::Exec;
use crate::generate::{gen_queries, QueryGenConfig};
use crate::index::FairIndex;
use crate::lsh::{LshParams, TableSizing, DEFAULT_ELL_MAX};
use crate::retrieval::{brute_force, near_neighbor, RetrievalOptions, RetrievalReport};
use crate::select::{check_selection, select, SelectOptions, SelectionProblem, SelectionResult, Solver, Status};
use crate::types::{Query, RecordId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Fairknn,
    BruteForce,
    Sair,
    Jir,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Fairknn => "fairknn",
            Method::BruteForce => "brute_force",
            Method::Sair => "sair",
            Method::Jir => "jir",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Sair,
    Jir,
}

/// Experiment knobs; read from a flat TOML file whose keys are these fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub k: usize,
    /// Attribute indices constrained by every query.
    pub constrained: Vec<usize>,
    pub queries: usize,
    /// Expected norm of the perturbation added to each query's base point.
    pub query_noise: f64,
    /// Base queries at the origin instead of at random records.
    pub queries_near_origin: bool,
    pub witness_pool: Option<usize>,
    pub distinct_specs: bool,
    pub lsh_r: f64,
    pub lsh_c: f64,
    pub lsh_w: f64,
    pub lsh_delta: f64,
    pub lsh_max_near: usize,
    /// Derive `mu` and `ell` per partition instead of using the fixed values.
    pub lsh_auto: bool,
    pub lsh_mu: usize,
    pub lsh_ell: usize,
    pub lsh_ell_max: usize,
    pub seed: u64,
    pub force_ilp: bool,
    pub node_budget: u64,
    pub quota_boost: f64,
    pub baselines: Vec<Baseline>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let lsh = LshParams::default();
        let sel = SelectOptions::default();
        Self {
            k: 10,
            constrained: vec![0, 1, 2],
            queries: 100,
            query_noise: 0.25,
            queries_near_origin: false,
            witness_pool: None,
            distinct_specs: true,
            lsh_r: lsh.r,
            lsh_c: lsh.c,
            lsh_w: lsh.w,
            lsh_delta: lsh.delta,
            lsh_max_near: lsh.max_near,
            lsh_auto: false,
            lsh_mu: 2,
            lsh_ell: 16,
            lsh_ell_max: DEFAULT_ELL_MAX,
            seed: 0,
            force_ilp: false,
            node_budget: sel.node_budget,
            quota_boost: 1.0,
            baselines: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| FairKnnError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.queries == 0 {
            return Err(FairKnnError::Config("k and queries must be at least 1".into()));
        }
        if self.constrained.is_empty() {
            return Err(FairKnnError::Config("at least one attribute must be constrained".into()));
        }
        if !(self.quota_boost >= 1.0 && self.quota_boost.is_finite()) {
            return Err(FairKnnError::Config("quota_boost must be at least 1".into()));
        }
        self.lsh_params().validate()
    }

    pub fn lsh_params(&self) -> LshParams {
        LshParams {
            r: self.lsh_r,
            c: self.lsh_c,
            w: self.lsh_w,
            delta: self.lsh_delta,
            max_near: self.lsh_max_near,
            sizing: if self.lsh_auto {
                TableSizing::Derived
            } else {
                TableSizing::Fixed {
                    mu: self.lsh_mu,
                    ell: self.lsh_ell,
                }
            },
            ell_max: self.lsh_ell_max,
            seed: self.seed,
        }
    }

    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            force_ilp: self.force_ilp,
            node_budget: self.node_budget,
        }
    }

    pub fn retrieval_options(&self) -> RetrievalOptions {
        RetrievalOptions {
            quota_boost: self.quota_boost,
        }
    }

    pub fn query_gen(&self, dim: usize) -> QueryGenConfig {
        QueryGenConfig {
            num_queries: self.queries,
            k: self.k,
            constrained: self.constrained.clone(),
            noise: self.query_noise,
            center: self.queries_near_origin.then(|| vec![0.0; dim]),
            witness_pool: self.witness_pool,
            distinct_specs: self.distinct_specs,
            max_attempts: self.queries.saturating_mul(200).max(1000),
            seed: self.seed.wrapping_add(1),
        }
    }

    /// Methods in report order.
    pub fn methods(&self) -> Vec<Method> {
        let mut m = vec![Method::Fairknn, Method::BruteForce];
        if self.baselines.contains(&Baseline::Sair) {
            m.push(Method::Sair);
        }
        if self.baselines.contains(&Baseline::Jir) {
            m.push(Method::Jir);
        }
        m
    }
}

/// One method's outcome on one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query: usize,
    pub method: Method,
    pub status: String,
    pub success: bool,
    pub solver: Solver,
    pub selected: Vec<RecordId>,
    pub cost: Option<f64>,
    pub gt_cost: Option<f64>,
    pub daf: Option<f64>,
    pub recall: Option<f64>,
    pub candidates: usize,
    pub scanned: usize,
    pub relevant: usize,
    pub scanned_fraction: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub query: usize,
    pub method: Method,
    pub search_us: f64,
    pub post_us: f64,
    pub total_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub queries: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Queries whose ground truth is feasible.
    pub gt_feasible: usize,
    pub mean_daf: Option<f64>,
    pub max_daf: Option<f64>,
    pub mean_recall: Option<f64>,
    pub mean_scanned_fraction: f64,
    pub mean_search_us: f64,
    pub mean_post_us: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildStats {
    pub index_ms: f64,
    pub sair_ms: Option<f64>,
    pub partitions: usize,
    pub clamped_partitions: usize,
    pub index_entries: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub queries: Vec<Query>,
    pub rows: Vec<QueryRow>,
    pub timings: Vec<TimingRow>,
    pub summaries: Vec<MethodSummary>,
    pub build: BuildStats,
}

fn micros(d: Duration) -> f64 {
    d.as_secs_f64() * 1e6
}

fn status_name(r: &SelectionResult) -> &'static str {
    match r.status {
        Status::Feasible { .. } => "feasible",
        Status::Infeasible => "infeasible",
        Status::ResourceExhausted => "resource_exhausted",
    }
}

/// Retrieval plus selection for one query, timed separately.
pub struct Answer {
    pub retrieval: RetrievalReport,
    pub result: SelectionResult,
    pub search: Duration,
    pub post: Duration,
}

/// Runs the main pipeline on one query.
pub fn answer_query(
    query: &Query,
    index: &FairIndex,
    ds: &Dataset,
    retrieval: &RetrievalOptions,
    select_opts: &SelectOptions,
    exec: Exec,
) -> Result<Answer> {
    finish(Instant::now(), query, select_opts, near_neighbor(query, index, ds, retrieval, exec)?)
}

fn finish(start: Instant, query: &Query, opts: &SelectOptions, retrieval: RetrievalReport) -> Result<Answer> {
    let search = start.elapsed();
    let t = Instant::now();
    let result = select(&SelectionProblem::new(&retrieval.candidates, &query.spec), opts)?;
    Ok(Answer {
        retrieval,
        result,
        search,
        post: t.elapsed(),
    })
}

struct Context<'a> {
    ds: &'a Dataset,
    index: &'a FairIndex,
    sair: Option<&'a SairIndex>,
    marginals: Vec<Vec<f64>>,
    cfg: &'a ExperimentConfig,
}

impl Context<'_> {
    fn run(&self, method: Method, query: &Query) -> Result<Answer> {
        let start = Instant::now();
        let retrieval = match method {
            Method::Fairknn => near_neighbor(query, self.index, self.ds, &self.cfg.retrieval_options(), Exec::Sequential)?,
            Method::BruteForce => brute_force(query, self.index.registry(), self.index.layout(), self.ds, Exec::Sequential)?,
            Method::Sair => sair_retrieve(query, self.sair.expect("sair index built"), self.index, self.ds)?,
            Method::Jir => jir_retrieve(query, self.index, self.ds, &self.marginals, Exec::Sequential)?,
        };
        let opts = match method {
            // ground truth always uses the exact solver for its attribute count
            Method::BruteForce => SelectOptions {
                force_ilp: false,
                ..self.cfg.select_options()
            },
            _ => self.cfg.select_options(),
        };
        finish(start, query, &opts, retrieval)
    }

    fn rows_for(&self, qi: usize, query: &Query) -> Result<Vec<(QueryRow, TimingRow)>> {
        let methods = self.cfg.methods();
        let mut answers = Vec::with_capacity(methods.len());
        for &m in &methods {
            answers.push((m, self.run(m, query)?));
        }
        let gt = &answers[1].1.result;
        let gt_cost = gt.cost();
        let gt_set: Option<HashSet<RecordId>> = gt.selected().map(|s| s.iter().copied().collect());
        let mut out = Vec::with_capacity(answers.len());
        for (method, a) in &answers {
            let verification = crate::select::verify(&a.result, &SelectionProblem::new(&a.retrieval.candidates, &query.spec));
            let success = a.result.is_feasible() && verification.ok();
            let selected = a.result.selected().map(<[_]>::to_vec).unwrap_or_default();
            let daf = match (success, a.result.cost(), gt_cost) {
                (true, Some(c), Some(g)) => Some(if g > 0.0 {
                    c / g
                } else if c == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }),
                _ => None,
            };
            let recall = gt_set.as_ref().map(|g| {
                if !success || query.spec.k() == 0 {
                    0.0
                } else {
                    selected.iter().filter(|id| g.contains(id)).count() as f64 / query.spec.k() as f64
                }
            });
            let r = &a.retrieval;
            out.push((
                QueryRow {
                    query: qi,
                    method: *method,
                    status: status_name(&a.result).into(),
                    success,
                    solver: a.result.solver,
                    selected,
                    cost: a.result.cost(),
                    gt_cost,
                    daf,
                    recall,
                    candidates: r.candidates.len(),
                    scanned: r.scanned,
                    relevant: r.relevant_size,
                    scanned_fraction: r.scanned_fraction(),
                    violations: verification.violations.len(),
                },
                TimingRow {
                    query: qi,
                    method: *method,
                    search_us: micros(a.search),
                    post_us: micros(a.post),
                    total_us: micros(a.search + a.post),
                },
            ));
        }
        Ok(out)
    }
}

/// Builds the indexes, generates the workload and runs every method.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig, exec: Exec) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let queries = gen_queries(ds, &cfg.query_gen(ds.dim()))?;
    run_workload(ds, cfg, queries, exec)
}

/// Like [`run_experiment`] with a given workload.
pub fn run_workload(ds: &Dataset, cfg: &ExperimentConfig, queries: Vec<Query>, exec: Exec) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let params = cfg.lsh_params();
    let t = Instant::now();
    let index = FairIndex::build(ds, &params, exec)?;
    let mut build = BuildStats {
        index_ms: t.elapsed().as_secs_f64() * 1e3,
        partitions: index.registry().len(),
        clamped_partitions: index.clamped_partitions(),
        index_entries: index.total_entries(),
        sair_ms: None,
    };
    let sair = if cfg.baselines.contains(&Baseline::Sair) {
        let t = Instant::now();
        let s = SairIndex::build(ds, &params, exec)?;
        build.sair_ms = Some(t.elapsed().as_secs_f64() * 1e3);
        Some(s)
    } else {
        None
    };
    let ctx = Context {
        ds,
        index: &index,
        sair: sair.as_ref(),
        marginals: ds.marginals(),
        cfg,
    };
    let per_query = exec.map_range(queries.len(), |qi| ctx.rows_for(qi, &queries[qi]));
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for q in per_query {
        for (r, t) in q? {
            rows.push(r);
            timings.push(t);
        }
    }
    let summaries = summarize(&cfg.methods(), &rows, &timings);
    Ok(ExperimentOutput {
        queries,
        rows,
        timings,
        summaries,
        build,
    })
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

pub fn summarize(methods: &[Method], rows: &[QueryRow], timings: &[TimingRow]) -> Vec<MethodSummary> {
    methods
        .iter()
        .map(|&m| {
            let rs: Vec<&QueryRow> = rows.iter().filter(|r| r.method == m).collect();
            let ts: Vec<&TimingRow> = timings.iter().filter(|t| t.method == m).collect();
            let successes = rs.iter().filter(|r| r.success).count();
            MethodSummary {
                method: m,
                queries: rs.len(),
                successes,
                success_rate: if rs.is_empty() { 0.0 } else { successes as f64 / rs.len() as f64 },
                gt_feasible: rs.iter().filter(|r| r.gt_cost.is_some()).count(),
                mean_daf: mean(rs.iter().filter_map(|r| r.daf)),
                max_daf: rs.iter().filter_map(|r| r.daf).reduce(f64::max),
                mean_recall: mean(rs.iter().filter_map(|r| r.recall)),
                mean_scanned_fraction: mean(rs.iter().map(|r| r.scanned_fraction)).unwrap_or(0.0),
                mean_search_us: mean(ts.iter().map(|t| t.search_us)).unwrap_or(0.0),
                mean_post_us: mean(ts.iter().map(|t| t.post_us)).unwrap_or(0.0),
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

pub fn summary_table(out: &ExperimentOutput) -> String {
    let mut s = String::new();
    let b = &out.build;
    let _ = writeln!(
        s,
        "index: {} partitions, {} entries, {} clamped, built in {:.1} ms",
        b.partitions, b.index_entries, b.clamped_partitions, b.index_ms
    );
    if let Some(ms) = b.sair_ms {
        let _ = writeln!(s, "sair index built in {ms:.1} ms");
    }
    let _ = writeln!(
        s,
        "{:<12} {:>7} {:>8} {:>9} {:>9} {:>9} {:>9} {:>12} {:>12}",
        "method", "queries", "success", "mean_daf", "max_daf", "recall", "scanned", "search_us", "post_us"
    );
    for m in &out.summaries {
        let _ = writeln!(
            s,
            "{:<12} {:>7} {:>8.4} {:>9} {:>9} {:>9} {:>9.4} {:>12.1} {:>12.1}",
            m.method.name(),
            m.queries,
            m.success_rate,
            opt(m.mean_daf),
            opt(m.max_daf),
            opt(m.mean_recall),
            m.mean_scanned_fraction,
            m.mean_search_us,
            m.mean_post_us
        );
    }
    s
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| FairKnnError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub const REPORT_FILE: &str = "report.jsonl";
pub const QUERIES_FILE: &str = "queries.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";

pub fn write_outputs(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_jsonl(&dir.join(QUERIES_FILE), &out.queries)?;
    write_jsonl(&dir.join(REPORT_FILE), &out.rows)?;
    write_jsonl(&dir.join(TIMINGS_FILE), &out.timings)?;
    fs::write(dir.join(SUMMARY_FILE), summary_table(out))?;
    Ok(())
}

/// A problem found when re-checking a report against its dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportIssue {
    pub query: usize,
    pub method: Method,
    pub message: String,
}

/// Re-checks every successful row: counts against the query's spec and the
/// reported cost against distances recomputed from the dataset.
pub fn verify_report(ds: &Dataset, queries: &[Query], rows: &[QueryRow]) -> Result<Vec<ReportIssue>> {
    let mut issues = Vec::new();
    for row in rows {
        let issue = |message: String| ReportIssue {
            query: row.query,
            method: row.method,
            message,
        };
        let Some(query) = queries.get(row.query) else {
            issues.push(issue(format!("query {} not in the query file", row.query)));
            continue;
        };
        if row.violations > 0 {
            issues.push(issue(format!("{} violations recorded at run time", row.violations)));
        }
        if !row.success {
            continue;
        }
        let dists: Vec<(RecordId, f64)> = row
            .selected
            .iter()
            .filter_map(|&id| ds.get(id).map(|r| (id, r)))
            .map(|(id, r)| Ok((id, distance(&r.embedding, &query.vector, ds.distance())?)))
            .collect::<Result<_>>()?;
        let v = check_selection(&row.selected, row.cost, &query.spec, |id| {
            let d = dists.iter().find(|x| x.0 == id)?.1;
            Some((d, ds.get(id)?.attrs.as_slice()))
        });
        issues.extend(v.violations.iter().map(|x| issue(x.describe(ds.schema()))));
    }
    Ok(issues)
}
