//! Experiment grids: the TOML file format and its expansion into runs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::expr::{self, Env};
use crate::aggregation::{default_bucket_size, AggregatorSpec, BaseRule};
use crate::analysis::{LyapunovVariant, DEFAULT_SOLVER_TOL};
use crate::attacks::AttackSpec;
use crate::data_io::{self, synthetic, Dataset, ParseOptions};
use crate::engine::{Method, RunConfig};
use crate::error::{Error, Result};

/// A literal number or an expression string such as `"0.01m"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOrExpr {
    Num(f64),
    Expr(String),
}

impl NumOrExpr {
    pub fn eval(&self, env: &Env, field: &str) -> Result<f64> {
        match self {
            NumOrExpr::Num(v) => Ok(*v),
            NumOrExpr::Expr(s) => expr::eval(s, env, field),
        }
    }

    pub fn text(&self) -> String {
        match self {
            NumOrExpr::Num(v) => v.to_string(),
            NumOrExpr::Expr(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    MushroomsLike,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// LIBSVM file, relative paths resolve against the grid file's directory.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticKind>,
    /// Row count for synthetic data.
    #[serde(default)]
    pub rows: Option<usize>,
    /// Feature dimension: required for `gaussian`, an override for files.
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
    #[serde(default)]
    pub positive_label: Option<f64>,
    #[serde(default)]
    pub name: Option<String>,
}

impl DatasetSpec {
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        let ds = match (&self.path, self.synthetic) {
            (Some(_), Some(_)) => return Err(Error::config("datasets", "set either `path` or `synthetic`, not both")),
            (None, None) => return Err(Error::config("datasets", "each dataset needs `path` or `synthetic`")),
            (Some(path), None) => {
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base_dir.join(path)
                };
                let opts = ParseOptions {
                    dim: self.dim,
                    positive_label: self.positive_label,
                    name: None,
                };
                data_io::load_libsvm(&path, &opts)?
            }
            (None, Some(SyntheticKind::MushroomsLike)) => {
                synthetic::mushrooms_like(self.rows.unwrap_or(synthetic::MUSHROOMS_ROWS), self.seed)?
            }
            (None, Some(SyntheticKind::Gaussian)) => {
                let rows = self
                    .rows
                    .ok_or_else(|| Error::config("datasets", "gaussian data needs `rows`"))?;
                let dim = self
                    .dim
                    .ok_or_else(|| Error::config("datasets", "gaussian data needs `dim`"))?;
                synthetic::gaussian(rows, dim, self.seed)?
            }
        };
        let ds = match self.subsample {
            Some(count) => data_io::subsample(&ds, count, self.subsample_seed)?,
            None => ds,
        };
        Ok(match &self.name {
            Some(name) => ds.with_name(name.clone()),
            None => ds,
        })
    }
}

fn default_eval_every() -> usize {
    100
}
fn default_workers() -> usize {
    16
}
fn default_byzantine() -> usize {
    3
}
fn default_saga_aggregator() -> String {
    "gm".to_owned()
}
fn default_p() -> NumOrExpr {
    NumOrExpr::Expr("b/m".to_owned())
}
fn default_l2() -> NumOrExpr {
    NumOrExpr::Expr("L0/1000".to_owned())
}
fn default_ref_tol() -> f64 {
    DEFAULT_SOLVER_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub datasets: Vec<DatasetSpec>,
    pub methods: Vec<Method>,
    /// `none`, `bf`, `lf`, `alie`, `alie:<z>`, `ipm`, `ipm:<eps>`.
    pub attacks: Vec<String>,
    /// `<rule>[+auto|+b<s>]` with rule one of `mean`, `gm`, `cm`, `krum`.
    pub aggregators: Vec<String>,
    pub batch_sizes: Vec<NumOrExpr>,
    pub stepsizes: Vec<NumOrExpr>,
    pub seeds: Vec<u64>,
    /// Iteration budget K.
    pub iterations: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Number of Byzantine workers; they take the highest worker ids.
    #[serde(default = "default_byzantine")]
    pub byzantine: usize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Reference-switch probability, may use `b` and `m`.
    #[serde(default = "default_p")]
    pub switch_probability: NumOrExpr,
    /// ℓ2 weight; `L0` is the smoothness constant of the unregularized loss.
    #[serde(default = "default_l2")]
    pub l2: NumOrExpr,
    /// Aggregator for Byrd-SAGA runs, or `"axis"` to sweep `aggregators`.
    #[serde(default = "default_saga_aggregator")]
    pub byrd_saga_aggregator: String,
    #[serde(default)]
    pub lyapunov: LyapunovVariant,
    /// Adds wall time to trace.csv, which makes it non-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "default_ref_tol")]
    pub reference_tol: f64,
}

impl ExperimentGrid {
    pub fn from_toml(text: &str) -> Result<Self> {
        let grid: ExperimentGrid = toml::from_str(text).map_err(|e| Error::config("grid", e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let axes = [
            ("datasets", self.datasets.len()),
            ("methods", self.methods.len()),
            ("attacks", self.attacks.len()),
            ("aggregators", self.aggregators.len()),
            ("batch_sizes", self.batch_sizes.len()),
            ("stepsizes", self.stepsizes.len()),
            ("seeds", self.seeds.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::config(name, "axis must not be empty"));
            }
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if self.byzantine >= self.workers {
            return Err(Error::config("byzantine", "at least one worker must be honest"));
        }
        for a in &self.attacks {
            parse_attack(a)?;
        }
        for a in &self.aggregators {
            parse_aggregator(a, self.byzantine, self.workers)?;
        }
        if self.byrd_saga_aggregator != "axis" {
            parse_aggregator(&self.byrd_saga_aggregator, self.byzantine, self.workers)?;
        }
        if !(self.reference_tol > 0.0) {
            return Err(Error::config("reference_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn byzantine_ids(&self) -> Vec<usize> {
        (self.workers - self.byzantine..self.workers).collect()
    }
}

pub fn parse_attack(text: &str) -> Result<AttackSpec> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let param = |default: f64| -> Result<f64> {
        arg.map_or(Ok(default), |a| {
            a.parse()
                .map_err(|_| Error::config("attacks", format!("bad parameter in `{text}`")))
        })
    };
    let spec = match name.to_ascii_lowercase().as_str() {
        "none" if arg.is_none() => AttackSpec::None,
        "bf" | "bit-flip" if arg.is_none() => AttackSpec::BitFlip,
        "lf" | "label-flip" if arg.is_none() => AttackSpec::LabelFlip,
        "alie" => AttackSpec::Alie {
            z: param(crate::attacks::DEFAULT_ALIE_Z)?,
        },
        "ipm" => AttackSpec::Ipm {
            eps: param(crate::attacks::DEFAULT_IPM_EPS)?,
        },
        _ => return Err(Error::config("attacks", format!("unknown attack `{text}`"))),
    };
    spec.validate().map_err(|e| Error::config("attacks", e.to_string()))?;
    Ok(spec)
}

/// Parses `<rule>[+auto|+bucketing|+b<s>]`. Krum assumes `byzantine` bad inputs.
pub fn parse_aggregator(text: &str, byzantine: usize, workers: usize) -> Result<AggregatorSpec> {
    let bad = || Error::config("aggregators", format!("cannot parse aggregator `{text}`"));
    let (base, suffix) = match text.split_once('+') {
        Some((b, s)) => (b.trim(), Some(s.trim())),
        None => (text.trim(), None),
    };
    let base = match base.to_ascii_lowercase().as_str() {
        "mean" => BaseRule::Mean,
        "gm" | "geometric-median" => BaseRule::GeometricMedian,
        "cm" | "coordinate-median" => BaseRule::CoordinateMedian,
        "krum" => BaseRule::Krum,
        _ => return Err(bad()),
    };
    let spec = match suffix {
        None => AggregatorSpec::plain(base),
        Some("auto" | "bucketing") => AggregatorSpec::bucketed(base, default_bucket_size(base, byzantine, workers)),
        Some(s) => {
            let size: usize = s.strip_prefix('b').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            if size == 0 {
                return Err(bad());
            }
            AggregatorSpec::bucketed(base, size)
        }
    };
    Ok(if base == BaseRule::Krum {
        spec.with_krum_byzantine_count(byzantine)
    } else {
        spec
    })
}

/// Per-dataset values that grid expressions may refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConstants {
    pub name: String,
    pub m: usize,
    pub dim: usize,
    #[serde(rename = "L")]
    pub lipschitz: f64,
    pub mu: f64,
    pub l2: f64,
    /// Smoothness of the unregularized loss.
    #[serde(rename = "L0")]
    pub l0: f64,
}

impl DatasetConstants {
    pub fn env(&self, workers: usize, byzantine: usize) -> Env {
        Env::new()
            .with("L", self.lipschitz)
            .with("L0", self.l0)
            .with("mu", self.mu)
            .with("l2", self.l2)
            .with("m", self.m as f64)
            .with("d", self.dim as f64)
            .with("n", workers as f64)
            .with("B", byzantine as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedRun {
    pub dataset: usize,
    pub dataset_name: String,
    pub config: RunConfig,
    pub batch_expr: String,
    pub stepsize_expr: String,
    pub slug: String,
}

/// Ceiling that ignores representation noise, so `0.01·1000` gives 10.
pub fn ceil_batch(v: f64) -> usize {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.abs().max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

fn sanitize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        let c = if c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+' | '_') {
            c
        } else {
            '-'
        };
        if c == '-' && (out.is_empty() || out.ends_with(['-', '_'])) {
            continue;
        }
        if c == '_' && out.ends_with('-') {
            out.pop();
        }
        out.push(c);
    }
    out
}

/// Directory name for a run: readable fields plus a hash of the full config.
pub fn config_slug(dataset_name: &str, config: &RunConfig) -> String {
    let json = serde_json::to_string(&(dataset_name, config)).expect("run config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let hash: String = digest.iter().take(4).map(|b| format!("{b:02x}")).collect();
    sanitize(&format!(
        "{}_{}_{}_{}_b{}_g{:.4e}_s{}_{}",
        dataset_name,
        config.method.label(),
        config.attack.label(),
        config.aggregator.label(),
        config.batch_size,
        config.gamma,
        config.master_seed,
        hash
    ))
}

/// Cartesian product in axis order: dataset, method, attack, aggregator,
/// batch size, stepsize, seed. Byrd-SAGA runs use `byrd_saga_aggregator`
/// instead of the aggregator axis unless it is `"axis"`.
pub fn resolve_grid(grid: &ExperimentGrid, constants: &[DatasetConstants]) -> Result<Vec<ResolvedRun>> {
    if constants.len() != grid.datasets.len() {
        return Err(Error::invalid("one set of constants is needed per dataset"));
    }
    let attacks: Vec<AttackSpec> = grid.attacks.iter().map(|a| parse_attack(a)).collect::<Result<_>>()?;
    let aggregators: Vec<AggregatorSpec> = grid
        .aggregators
        .iter()
        .map(|a| parse_aggregator(a, grid.byzantine, grid.workers))
        .collect::<Result<_>>()?;
    let saga_aggregators = if grid.byrd_saga_aggregator == "axis" {
        aggregators.clone()
    } else {
        vec![parse_aggregator(
            &grid.byrd_saga_aggregator,
            grid.byzantine,
            grid.workers,
        )?]
    };

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (di, c) in constants.iter().enumerate() {
        let env = c.env(grid.workers, grid.byzantine);
        for &method in &grid.methods {
            let aggs = match method {
                Method::BrLsvrg => &aggregators,
                Method::ByrdSaga => &saga_aggregators,
            };
            for &attack in &attacks {
                for agg in aggs {
                    for b_spec in &grid.batch_sizes {
                        let raw = b_spec.eval(&env, "batch_sizes")?;
                        if !(raw > 0.0) {
                            return Err(Error::config(
                                "batch_sizes",
                                format!("`{}` resolves to {raw}", b_spec.text()),
                            ));
                        }
                        let b = ceil_batch(raw);
                        let p_env = env.clone().with("b", b as f64);
                        let p = grid.switch_probability.eval(&p_env, "switch_probability")?;
                        for s_spec in &grid.stepsizes {
                            let gamma = s_spec.eval(&p_env, "stepsizes")?;
                            for &seed in &grid.seeds {
                                let config = RunConfig {
                                    method,
                                    gamma,
                                    batch_size: b,
                                    p,
                                    workers: grid.workers,
                                    byzantine_ids: grid.byzantine_ids(),
                                    aggregator: agg.clone(),
                                    attack,
                                    iterations: grid.iterations,
                                    master_seed: seed,
                                    eval_every: grid.eval_every,
                                    lyapunov: grid.lyapunov,
                                };
                                let slug = config_slug(&c.name, &config);
                                if !seen.insert(slug.clone()) {
                                    return Err(Error::config(
                                        "grid",
                                        format!("two grid points resolve to the same run `{slug}`"),
                                    ));
                                }
                                out.push(ResolvedRun {
                                    dataset: di,
                                    dataset_name: c.name.clone(),
                                    config,
                                    batch_expr: b_spec.text(),
                                    stepsize_expr: s_spec.text(),
                                    slug,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
