//! Server-side aggregation rules and the bucketing wrapper.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseRule {
    Mean,
    #[serde(alias = "gm")]
    GeometricMedian,
    #[serde(alias = "cm")]
    CoordinateMedian,
    Krum,
}

impl BaseRule {
    pub fn short_name(self) -> &'static str {
        match self {
            BaseRule::Mean => "mean",
            BaseRule::GeometricMedian => "gm",
            BaseRule::CoordinateMedian => "cm",
            BaseRule::Krum => "krum",
        }
    }

    /// Largest Byzantine fraction the bucketed rule is known to tolerate.
    pub fn delta_max(self) -> f64 {
        match self {
            BaseRule::Krum => 0.25,
            _ => 0.5,
        }
    }
}

/// Weiszfeld stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeiszfeldParams {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for WeiszfeldParams {
    fn default() -> Self {
        WeiszfeldParams {
            tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Distances below this are clamped when forming Weiszfeld weights.
pub const WEISZFELD_ANCHOR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucketing {
    pub bucket_size: usize,
}

/// Base rule plus optional bucketing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorSpec {
    pub base: BaseRule,
    #[serde(default)]
    pub bucketing: Option<Bucketing>,
    /// Number of inputs Krum assumes may be Byzantine.
    #[serde(default)]
    pub krum_byzantine_count: usize,
    #[serde(default)]
    pub weiszfeld: WeiszfeldParams,
}

impl AggregatorSpec {
    pub fn plain(base: BaseRule) -> Self {
        AggregatorSpec {
            base,
            bucketing: None,
            krum_byzantine_count: 0,
            weiszfeld: WeiszfeldParams::default(),
        }
    }

    pub fn bucketed(base: BaseRule, bucket_size: usize) -> Self {
        AggregatorSpec {
            bucketing: Some(Bucketing { bucket_size }),
            ..Self::plain(base)
        }
    }

    pub fn with_krum_byzantine_count(mut self, count: usize) -> Self {
        self.krum_byzantine_count = count;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.bucketing {
            if b.bucket_size == 0 {
                return Err(Error::invalid("bucket size must be at least 1"));
            }
        }
        if !(self.weiszfeld.tol >= 0.0) || self.weiszfeld.max_iter == 0 {
            return Err(Error::invalid("Weiszfeld needs tol >= 0 and max_iter >= 1"));
        }
        Ok(())
    }

    /// Short human-readable label, e.g. `gm+b2`.
    pub fn label(&self) -> String {
        match self.bucketing {
            Some(b) => format!("{}+b{}", self.base.short_name(), b.bucket_size),
            None => self.base.short_name().to_owned(),
        }
    }
}

/// Bucket size `⌊δ_max/δ⌋`, floored at 1 and capped at `n`.
pub fn default_bucket_size(base: BaseRule, byzantine: usize, n: usize) -> usize {
    if byzantine == 0 {
        return n.max(1);
    }
    let delta = byzantine as f64 / n as f64;
    ((base.delta_max() / delta).floor() as usize).clamp(1, n.max(1))
}

fn check_inputs<V: AsRef<[f64]>>(vectors: &[V]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty list of vectors"))?;
    let d = first.as_ref().len();
    if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.as_ref().len() != d) {
        return Err(Error::invalid(format!(
            "vector {i} has dimension {} but vector 0 has {d}",
            v.as_ref().len()
        )));
    }
    Ok(d)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mean<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let d = check_inputs(vectors)?;
    let mut out = vec![0.0; d];
    for v in vectors {
        out.iter_mut().zip(v.as_ref()).for_each(|(o, x)| *o += x);
    }
    let inv = 1.0 / vectors.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GeometricMedian {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `Σ‖x_t − x_i‖` at every iterate, starting from the mean.
    pub objective_history: Vec<f64>,
}

/// Weiszfeld iteration started at the mean. Distances are clamped at
/// [`WEISZFELD_ANCHOR_EPS`] so an iterate landing on an input stays finite.
pub fn geometric_median<V: AsRef<[f64]>>(vectors: &[V], params: WeiszfeldParams) -> Result<GeometricMedian> {
    let d = check_inputs(vectors)?;
    let mut x = mean(vectors)?;
    let mut next = vec![0.0; d];
    let mut history = Vec::new();
    let mut weights = vec![0.0; vectors.len()];

    for it in 0..params.max_iter {
        let mut objective = 0.0;
        let mut total = 0.0;
        for (w, v) in weights.iter_mut().zip(vectors) {
            let dist = dist2(&x, v.as_ref()).sqrt();
            objective += dist;
            *w = 1.0 / dist.max(WEISZFELD_ANCHOR_EPS);
            total += *w;
        }
        history.push(objective);

        next.iter_mut().for_each(|e| *e = 0.0);
        for (w, v) in weights.iter().zip(vectors) {
            let c = w / total;
            next.iter_mut().zip(v.as_ref()).for_each(|(e, vi)| *e += c * vi);
        }
        let step = dist2(&next, &x).sqrt();
        std::mem::swap(&mut x, &mut next);
        if step <= params.tol {
            history.push(vectors.iter().map(|v| dist2(&x, v.as_ref()).sqrt()).sum());
            return Ok(GeometricMedian {
                point: x,
                iterations: it + 1,
                converged: true,
                objective_history: history,
            });
        }
    }
    history.push(vectors.iter().map(|v| dist2(&x, v.as_ref()).sqrt()).sum());
    Ok(GeometricMedian {
        point: x,
        iterations: params.max_iter,
        converged: false,
        objective_history: history,
    })
}

/// Per-coordinate median; even counts take the midpoint of the two central values.
pub fn coordinate_median<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Vec<f64>> {
    let d = check_inputs(vectors)?;
    let n = vectors.len();
    let mut column = vec![0.0; n];
    let mut out = Vec::with_capacity(d);
    for k in 0..d {
        column.iter_mut().zip(vectors).for_each(|(c, v)| *c = v.as_ref()[k]);
        column.sort_unstable_by(f64::total_cmp);
        out.push(if n % 2 == 1 {
            column[n / 2]
        } else {
            0.5 * (column[n / 2 - 1] + column[n / 2])
        });
    }
    Ok(out)
}

/// Krum scores: for each input, the sum of squared distances to its
/// `n − byzantine − 2` nearest other inputs.
pub fn krum_scores<V: AsRef<[f64]>>(vectors: &[V], byzantine: usize) -> Result<Vec<f64>> {
    check_inputs(vectors)?;
    let n = vectors.len();
    if n < byzantine + 3 {
        return Err(Error::invalid(format!(
            "Krum needs n >= B + 3, got n = {n}, B = {byzantine}"
        )));
    }
    let keep = n - byzantine - 2;
    let mut pair = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dd = dist2(vectors[i].as_ref(), vectors[j].as_ref());
            pair[i * n + j] = dd;
            pair[j * n + i] = dd;
        }
    }
    let mut row = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| pair[i * n + j]));
            row.select_nth_unstable_by(keep - 1, f64::total_cmp);
            row[..keep].iter().sum()
        })
        .collect())
}

/// Index of the Krum winner; ties go to the lowest index.
pub fn krum_select<V: AsRef<[f64]>>(vectors: &[V], byzantine: usize) -> Result<usize> {
    let scores = krum_scores(vectors, byzantine)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn krum<V: AsRef<[f64]>>(vectors: &[V], byzantine: usize) -> Result<Vec<f64>> {
    let i = krum_select(vectors, byzantine)?;
    Ok(vectors[i].as_ref().to_vec())
}

fn apply_base<V: AsRef<[f64]>>(spec: &AggregatorSpec, vectors: &[V]) -> Result<Vec<f64>> {
    match spec.base {
        BaseRule::Mean => mean(vectors),
        BaseRule::GeometricMedian => Ok(geometric_median(vectors, spec.weiszfeld)?.point),
        BaseRule::CoordinateMedian => coordinate_median(vectors),
        BaseRule::Krum => krum(vectors, spec.krum_byzantine_count),
    }
}

/// Bucket means after a seeded uniform permutation. The last bucket is
/// averaged over however many inputs it actually holds.
pub fn bucket_means<V: AsRef<[f64]>>(vectors: &[V], bucket_size: usize, round_seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = check_inputs(vectors)?;
    if bucket_size == 0 {
        return Err(Error::invalid("bucket size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(round_seed));
    Ok(order
        .chunks(bucket_size)
        .map(|chunk| {
            let mut y = vec![0.0; d];
            for &i in chunk {
                y.iter_mut().zip(vectors[i].as_ref()).for_each(|(a, b)| *a += b);
            }
            let inv = 1.0 / chunk.len() as f64;
            y.iter_mut().for_each(|a| *a *= inv);
            y
        })
        .collect())
}

/// Bucketing followed by the base rule. Requires `spec.bucketing`.
pub fn bucketing_aggregate<V: AsRef<[f64]>>(spec: &AggregatorSpec, vectors: &[V], round_seed: u64) -> Result<Vec<f64>> {
    let bucketing = spec
        .bucketing
        .ok_or_else(|| Error::invalid("aggregator spec has no bucketing configured"))?;
    let buckets = bucket_means(vectors, bucketing.bucket_size, round_seed)?;
    apply_base(spec, &buckets)
}

/// Dispatches to the configured rule, bucketing first when configured.
pub fn aggregate<V: AsRef<[f64]>>(spec: &AggregatorSpec, vectors: &[V], round_seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    if spec.bucketing.is_some() {
        bucketing_aggregate(spec, vectors, round_seed)
    } else {
        apply_base(spec, vectors)
    }
}

/// Measured quantities behind the `(δ, c)`-robustness bound for one draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessAudit {
    /// `1/(G(G−1)) Σ_{i,l∈G} ‖x_i − x_l‖²`
    pub measured_sigma2: f64,
    /// `‖x̂ − x̄‖²`
    pub measured_err2: f64,
    /// `err2 / (δ·sigma2)`, when both factors are positive.
    pub implied_c: Option<f64>,
}

/// Aggregates `all` and compares the result with the mean of the inputs
/// listed in `honest`. Pure measurement: nothing is thresholded.
pub fn audit_robustness<V: AsRef<[f64]>>(
    spec: &AggregatorSpec,
    all: &[V],
    honest: &[usize],
    delta: f64,
    round_seed: u64,
) -> Result<RobustnessAudit> {
    if honest.len() < 2 {
        return Err(Error::invalid("robustness audit needs at least 2 honest vectors"));
    }
    if let Some(&bad) = honest.iter().find(|&&i| i >= all.len()) {
        return Err(Error::invalid(format!("honest index {bad} out of range")));
    }
    let honest_vecs: Vec<&[f64]> = honest.iter().map(|&i| all[i].as_ref()).collect();
    let g = honest_vecs.len() as f64;
    let mut pair_sum = 0.0;
    for (a, u) in honest_vecs.iter().enumerate() {
        for v in &honest_vecs[a + 1..] {
            pair_sum += 2.0 * dist2(u, v);
        }
    }
    let measured_sigma2 = pair_sum / (g * (g - 1.0));
    let xbar = mean(&honest_vecs)?;
    let xhat = aggregate(spec, all, round_seed)?;
    let measured_err2 = dist2(&xhat, &xbar);
    let implied_c = (delta > 0.0 && measured_sigma2 > 0.0).then(|| measured_err2 / (delta * measured_sigma2));
    Ok(RobustnessAudit {
        measured_sigma2,
        measured_err2,
        implied_c,
    })
}

/// Setup of the synthetic robustness audit: honest draws from `N(0, I_dim)`
/// followed by Byzantine inputs that all equal `byzantine_value · 𝟙`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSetup {
    pub honest: usize,
    pub byzantine: usize,
    pub dim: usize,
    pub byzantine_value: f64,
}

impl Default for AuditSetup {
    fn default() -> Self {
        AuditSetup {
            honest: 13,
            byzantine: 3,
            dim: 10,
            byzantine_value: 1e6,
        }
    }
}

/// Averages of [`RobustnessAudit`] over many seeded draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub aggregator: String,
    pub trials: usize,
    /// Mean of `‖x̂ − x̄‖² / (δ σ̂²)` over trials.
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub mean_err2: f64,
    pub mean_sigma2: f64,
}

/// Runs the audit for seeds `0..trials`; seed `t` drives both the honest draw
/// and the bucketing permutation of trial `t`.
pub fn audit_sweep(spec: &AggregatorSpec, setup: AuditSetup, trials: usize) -> Result<AuditSummary> {
    use rand_distr::{Distribution, StandardNormal};
    if trials == 0 {
        return Err(Error::invalid("audit needs at least one trial"));
    }
    let n = setup.honest + setup.byzantine;
    let delta = setup.byzantine as f64 / n as f64;
    let honest_idx: Vec<usize> = (0..setup.honest).collect();
    let (mut sum_ratio, mut max_ratio, mut sum_err, mut sum_sigma) = (0.0, 0.0f64, 0.0, 0.0);
    for t in 0..trials as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let mut all: Vec<Vec<f64>> = (0..setup.honest)
            .map(|_| (0..setup.dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        all.extend((0..setup.byzantine).map(|_| vec![setup.byzantine_value; setup.dim]));
        let audit = audit_robustness(spec, &all, &honest_idx, delta, t)?;
        let ratio = audit.implied_c.unwrap_or(f64::NAN);
        sum_ratio += ratio;
        max_ratio = max_ratio.max(ratio);
        sum_err += audit.measured_err2;
        sum_sigma += audit.measured_sigma2;
    }
    let k = trials as f64;
    Ok(AuditSummary {
        aggregator: spec.label(),
        trials,
        mean_ratio: sum_ratio / k,
        max_ratio,
        mean_err2: sum_err / k,
        mean_sigma2: sum_sigma / k,
    })
}
