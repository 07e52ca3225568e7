//! Executes a resolved grid and writes traces, metadata, summary and plots.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::grid::{resolve_grid, DatasetConstants, ExperimentGrid, ResolvedRun};
use super::plot::{read_trace_subopt, render_svg, Series};
use crate::analysis::{load_or_solve_reference, ReferenceSolution, DEFAULT_SOLVER_MAX_ITER};
use crate::engine::{run, RunStatus, RunTrace};
use crate::error::{Error, Result};
use crate::objective::{gradient_variance_at, FiniteSum, Objective};

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    pub output_dir: PathBuf,
    /// Worker threads; 0 lets rayon decide.
    pub jobs: usize,
    /// Replaces the grid's seed axis.
    pub seed_override: Option<u64>,
    pub iterations_override: Option<usize>,
    /// Keep only runs whose slug contains this substring.
    pub filter: Option<String>,
    /// Directory that relative dataset paths resolve against.
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub slug: String,
    pub dataset: String,
    pub method: String,
    pub attack: String,
    pub aggregator: String,
    pub batch_size: usize,
    pub gamma: f64,
    pub seed: u64,
    pub status: String,
    pub final_k: Option<usize>,
    pub final_subopt: f64,
    pub final_dist2: f64,
    pub honest_oracle_calls: u64,
}

impl SummaryRow {
    pub fn is_error(&self) -> bool {
        self.status.starts_with("error")
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub runs: Vec<ResolvedRun>,
    pub summary: Vec<SummaryRow>,
    pub output_dir: PathBuf,
}

impl ExperimentOutcome {
    pub fn error_count(&self) -> usize {
        self.summary.iter().filter(|r| r.is_error()).count()
    }
}

#[derive(Serialize)]
struct RunMeta<'a> {
    slug: &'a str,
    dataset: DatasetMeta<'a>,
    constants: &'a DatasetConstants,
    config: &'a crate::engine::RunConfig,
    batch_expr: &'a str,
    stepsize_expr: &'a str,
    reference: Option<ReferenceMeta>,
    status: &'a str,
    final_record: Option<crate::engine::TraceRecord>,
    honest_oracle_calls: u64,
    byzantine_oracle_calls: u64,
    diagnostic_calls: u64,
    reference_switches: u64,
    elapsed_s: f64,
    version: &'static str,
}

#[derive(Serialize)]
struct DatasetMeta<'a> {
    name: &'a str,
    content_hash: String,
    m: usize,
    dim: usize,
    feature_preprocessing: &'static str,
    /// `(1/m) Σ_j ‖∇f_j(x) − ∇f(x)‖²` at the start point and at `x*`.
    gradient_variance_x0: f64,
    gradient_variance_x_star: f64,
}

#[derive(Serialize)]
struct ReferenceMeta {
    f_star: f64,
    grad_norm: f64,
    solver_tol: f64,
    iterations: usize,
}

/// Builds the objective for a dataset spec with the grid's ℓ2 rule.
pub fn build_objective(grid: &ExperimentGrid, index: usize, base_dir: &Path) -> Result<(Objective, DatasetConstants)> {
    let ds = grid.datasets[index].load(base_dir)?;
    let unregularized = Objective::new(ds.clone(), 0.0)?;
    let l0 = unregularized.smoothness();
    let env = super::expr::Env::new()
        .with("L0", l0)
        .with("m", ds.len() as f64)
        .with("d", ds.dim() as f64);
    let l2 = grid.l2.eval(&env, "l2")?;
    if !(l2 > 0.0) {
        return Err(Error::config("l2", format!("must be positive, got {l2}")));
    }
    let obj = Objective::new(ds, l2)?;
    let constants = DatasetConstants {
        name: obj.dataset().name().to_owned(),
        m: obj.num_components(),
        dim: obj.dim(),
        lipschitz: obj.smoothness(),
        mu: obj.strong_convexity(),
        l2,
        l0,
    };
    Ok((obj, constants))
}

fn status_text(status: RunStatus) -> String {
    match status {
        RunStatus::Completed => "completed".to_owned(),
        RunStatus::Diverged { round } => format!("diverged@{round}"),
    }
}

fn write_run(
    dir: &Path,
    run_spec: &ResolvedRun,
    obj: &Objective,
    constants: &DatasetConstants,
    reference: &ReferenceSolution,
    trace: &RunTrace,
    include_timing: bool,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let trace_path = dir.join("trace.csv");
    let file = File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?;
    let mut w = BufWriter::new(file);
    trace
        .write_csv(&mut w, include_timing)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&trace_path, e))?;
    let status = status_text(trace.status);
    let meta = RunMeta {
        slug: &run_spec.slug,
        dataset: DatasetMeta {
            name: &constants.name,
            content_hash: obj.dataset().content_hash(),
            m: constants.m,
            dim: constants.dim,
            feature_preprocessing: "none",
            gradient_variance_x0: gradient_variance_at(obj, &vec![0.0; obj.dim()])?,
            gradient_variance_x_star: gradient_variance_at(obj, &reference.x_star)?,
        },
        constants,
        config: &run_spec.config,
        batch_expr: &run_spec.batch_expr,
        stepsize_expr: &run_spec.stepsize_expr,
        reference: Some(ReferenceMeta {
            f_star: reference.f_star,
            grad_norm: reference.grad_norm,
            solver_tol: reference.solver_tol,
            iterations: reference.iterations,
        }),
        status: &status,
        final_record: Some(*trace.last()),
        honest_oracle_calls: trace.honest_oracle_calls,
        byzantine_oracle_calls: trace.byzantine_oracle_calls,
        diagnostic_calls: trace.diagnostic_calls,
        reference_switches: trace.reference_switches,
        elapsed_s: trace.elapsed_s,
        version: env!("CARGO_PKG_VERSION"),
    };
    let meta_path = dir.join("meta.json");
    std::fs::write(&meta_path, serde_json::to_vec_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

fn summary_row(r: &ResolvedRun, status: String, trace: Option<&RunTrace>) -> SummaryRow {
    let last = trace.map(|t| *t.last());
    SummaryRow {
        slug: r.slug.clone(),
        dataset: r.dataset_name.clone(),
        method: r.config.method.label().to_owned(),
        attack: r.config.attack.label(),
        aggregator: r.config.aggregator.label(),
        batch_size: r.config.batch_size,
        gamma: r.config.gamma,
        seed: r.config.master_seed,
        status,
        final_k: last.map(|l| l.k),
        final_subopt: last.map_or(f64::NAN, |l| l.subopt),
        final_dist2: last.map_or(f64::NAN, |l| l.dist2),
        honest_oracle_calls: trace.map_or(0, |t| t.honest_oracle_calls),
    }
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from(
        "slug,dataset,method,attack,aggregator,batch_size,gamma,seed,status,final_k,final_subopt,final_dist2,honest_oracle_calls\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:e},{},{},{},{:e},{:e},{}\n",
            r.slug,
            r.dataset.replace(',', ";"),
            r.method,
            r.attack,
            r.aggregator,
            r.batch_size,
            r.gamma,
            r.seed,
            r.status.replace([',', '\n'], ";"),
            r.final_k.map_or(String::new(), |k| k.to_string()),
            r.final_subopt,
            r.final_dist2,
            r.honest_oracle_calls
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// One SVG per (dataset, attack), overlaying every run of that cell.
fn write_plots(dir: &Path, runs: &[ResolvedRun]) -> Result<Vec<PathBuf>> {
    let mut cells: BTreeMap<(String, String), Vec<&ResolvedRun>> = BTreeMap::new();
    for r in runs {
        cells
            .entry((r.dataset_name.clone(), r.config.attack.label()))
            .or_default()
            .push(r);
    }
    let plots_dir = dir.join("plots");
    let mut written = Vec::new();
    for ((dataset, attack), members) in cells {
        let mut series = Vec::new();
        for r in members {
            let path = dir.join(&r.slug).join("trace.csv");
            if !path.exists() {
                continue;
            }
            series.push(Series {
                label: format!(
                    "{} {} b={} g={} s={}",
                    r.config.method.label(),
                    r.config.aggregator.label(),
                    r.config.batch_size,
                    r.stepsize_expr,
                    r.config.master_seed
                ),
                points: read_trace_subopt(&path)?,
            });
        }
        std::fs::create_dir_all(&plots_dir).map_err(|e| Error::io(&plots_dir, e))?;
        let name: String = format!("{dataset}_{attack}.svg")
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_') {
                    c
                } else {
                    '-'
                }
            })
            .collect();
        let path = plots_dir.join(name);
        std::fs::write(&path, render_svg(&format!("{dataset} / {attack}"), &series))
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every configuration of `grid`. Individual run failures are recorded
/// in the summary; only setup problems (unreadable data, bad grid) are errors.
pub fn run_experiment(grid: &ExperimentGrid, opts: &ExperimentOptions) -> Result<ExperimentOutcome> {
    let mut grid = grid.clone();
    if let Some(seed) = opts.seed_override {
        grid.seeds = vec![seed];
    }
    if let Some(k) = opts.iterations_override {
        grid.iterations = k;
    }
    grid.validate()?;
    let out_dir = opts.output_dir.clone();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let built: Vec<(Objective, DatasetConstants)> = (0..grid.datasets.len())
        .map(|i| build_objective(&grid, i, &opts.base_dir))
        .collect::<Result<_>>()?;
    let constants: Vec<DatasetConstants> = built.iter().map(|(_, c)| c.clone()).collect();
    let mut runs = resolve_grid(&grid, &constants)?;
    if let Some(f) = &opts.filter {
        runs.retain(|r| r.slug.contains(f.as_str()));
    }

    let cache_dir = out_dir.join("refcache");
    let references: Vec<std::result::Result<ReferenceSolution, String>> = built
        .iter()
        .enumerate()
        .map(|(i, (obj, _))| {
            if !runs.iter().any(|r| r.dataset == i) {
                return Err("unused".to_owned());
            }
            load_or_solve_reference(&cache_dir, obj, grid.reference_tol, DEFAULT_SOLVER_MAX_ITER)
                .map_err(|e| e.to_string())
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let summary: Vec<SummaryRow> = pool.install(|| {
        runs.par_iter()
            .map(|r| {
                let (obj, constants) = &built[r.dataset];
                let reference = match &references[r.dataset] {
                    Ok(rf) => rf,
                    Err(msg) => return summary_row(r, format!("error: reference solution: {msg}"), None),
                };
                let x0 = vec![0.0; obj.dim()];
                match run(&r.config, obj, &x0, Some(reference)) {
                    Ok(trace) => {
                        let dir = out_dir.join(&r.slug);
                        match write_run(&dir, r, obj, constants, reference, &trace, grid.record_timing) {
                            Ok(()) => summary_row(r, status_text(trace.status), Some(&trace)),
                            Err(e) => summary_row(r, format!("error: {e}"), Some(&trace)),
                        }
                    }
                    Err(e) => summary_row(r, format!("error: {e}"), None),
                }
            })
            .collect()
    });

    write_summary(&out_dir.join("summary.csv"), &summary)?;
    write_plots(&out_dir, &runs)?;
    Ok(ExperimentOutcome {
        runs,
        summary,
        output_dir: out_dir,
    })
}
