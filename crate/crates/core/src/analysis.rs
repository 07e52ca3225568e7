//! Reference solutions, convergence diagnostics and the complexity calculator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{FiniteSum, Objective, OracleCounter};

/// A high-accuracy minimizer used to measure suboptimality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub x_star: Vec<f64>,
    pub f_star: f64,
    pub grad_norm: f64,
    pub solver_tol: f64,
    pub iterations: usize,
}

pub const DEFAULT_SOLVER_TOL: f64 = 1e-12;
pub const DEFAULT_SOLVER_MAX_ITER: usize = 200_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full-gradient descent with step `1/L`, Nesterov momentum for strongly
/// convex objectives and gradient-based momentum restarts, started at 0.
/// Stops once `‖∇f‖ ≤ tol`.
pub fn solve_reference<O: FiniteSum + ?Sized>(obj: &O, tol: f64, max_iter: usize) -> Result<ReferenceSolution> {
    let mu = obj.strong_convexity();
    let l = obj.smoothness();
    if !(mu > 0.0) {
        return Err(Error::invalid(
            "reference solver needs a strongly convex objective (mu > 0)",
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("solver tolerance must be positive"));
    }
    let d = obj.dim();
    let step = 1.0 / l;
    let sq = (mu / l).sqrt();
    let beta = (1.0 - sq) / (1.0 + sq);

    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut x_new = vec![0.0; d];
    let mut best = (f64::INFINITY, y.clone());

    for it in 0..max_iter {
        obj.full_grad_into(&y, &mut g);
        let gn = dot(&g, &g).sqrt();
        if gn < best.0 {
            best = (gn, y.clone());
        }
        if gn <= tol {
            let f_star = obj.loss(&y)?;
            return Ok(ReferenceSolution {
                x_star: y,
                f_star,
                grad_norm: gn,
                solver_tol: tol,
                iterations: it,
            });
        }
        for k in 0..d {
            x_new[k] = y[k] - step * g[k];
        }
        let uphill: f64 = g
            .iter()
            .zip(x_new.iter().zip(&x))
            .map(|(gk, (a, b))| gk * (a - b))
            .sum();
        if uphill > 0.0 {
            y.copy_from_slice(&x_new);
        } else {
            for k in 0..d {
                y[k] = x_new[k] + beta * (x_new[k] - x[k]);
            }
        }
        std::mem::swap(&mut x, &mut x_new);
    }
    Err(Error::SolverNotConverged {
        iterations: max_iter,
        grad_norm: best.0,
        tol,
        best: best.1,
    })
}

/// Cache file name for a reference solution of `obj` at `tol`.
pub fn reference_cache_key(obj: &Objective, tol: f64) -> String {
    format!("{}-l2_{:e}-tol_{:e}.json", obj.dataset().content_hash(), obj.l2(), tol).replace(['+', '/'], "_")
}

/// Loads the cached reference solution for `obj`, or solves and stores it.
/// Writes go to a temporary file that is renamed into place.
pub fn load_or_solve_reference(
    cache_dir: &Path,
    obj: &Objective,
    tol: f64,
    max_iter: usize,
) -> Result<ReferenceSolution> {
    let path: PathBuf = cache_dir.join(reference_cache_key(obj, tol));
    if let Ok(bytes) = std::fs::read(&path) {
        if let Ok(sol) = serde_json::from_slice::<ReferenceSolution>(&bytes) {
            if sol.x_star.len() == obj.dim() {
                return Ok(sol);
            }
        }
        log::warn!("ignoring unreadable reference cache entry {}", path.display());
    }
    let sol = solve_reference(obj, tol, max_iter)?;
    std::fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;
    let tmp = tempfile_in(cache_dir)?;
    std::fs::write(&tmp, serde_json::to_vec(&sol)?).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(sol)
}

fn tempfile_in(dir: &Path) -> Result<PathBuf> {
    use std::sync::atomic::{AtomicU64, Ordering};
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let n = COUNTER.fetch_add(1, Ordering::Relaxed);
    Ok(dir.join(format!(".tmp-{}-{n}", std::process::id())))
}

/// Which Lyapunov coefficient to use in front of `γ²σ_k²/p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovVariant {
    /// Coefficient 8 (bounded-variance analysis).
    #[default]
    Thm1,
    /// Coefficient 72 (analysis without the variance bound).
    Thm2,
}

impl LyapunovVariant {
    pub fn coefficient(self) -> f64 {
        match self {
            LyapunovVariant::Thm1 => 8.0,
            LyapunovVariant::Thm2 => 72.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovValue {
    pub psi: f64,
    pub sigma_k2: f64,
}

/// `σ_k² = 1/(Gm) Σ_i Σ_j ‖∇f_j(w_i) − ∇f_j(x*)‖²` over the honest
/// reference points. Every evaluation is charged to `diagnostics`.
pub fn reference_spread<O, W>(obj: &O, references: &[W], x_star: &[f64], diagnostics: &mut OracleCounter) -> f64
where
    O: FiniteSum + ?Sized,
    W: AsRef<[f64]>,
{
    let m = obj.num_components();
    if references.is_empty() {
        return 0.0;
    }
    let total: f64 = references
        .iter()
        .map(|w| {
            (0..m)
                .map(|j| obj.component_grad_diff_norm2(j, w.as_ref(), x_star))
                .sum::<f64>()
        })
        .sum();
    diagnostics.charge(2 * (references.len() * m) as u64);
    total / (references.len() * m) as f64
}

/// `Ψ_k = ‖x − x*‖² + (coef·γ²/p)·σ_k²`.
#[allow(clippy::too_many_arguments)]
pub fn lyapunov<O, W>(
    obj: &O,
    x: &[f64],
    references: &[W],
    gamma: f64,
    p: f64,
    x_star: &[f64],
    variant: LyapunovVariant,
    diagnostics: &mut OracleCounter,
) -> LyapunovValue
where
    O: FiniteSum + ?Sized,
    W: AsRef<[f64]>,
{
    let sigma_k2 = reference_spread(obj, references, x_star, diagnostics);
    let dist2: f64 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
    LyapunovValue {
        psi: dist2 + variant.coefficient() * gamma * gamma / p * sigma_k2,
        sigma_k2,
    }
}

/// Radius term of the bounded-variance convergence bound:
/// `γ·32cδσ²/(bμ) + 32cδσ²/(bμ²)`.
pub fn neighborhood_size(gamma: f64, b: f64, mu: f64, c: f64, delta: f64, sigma2: f64) -> f64 {
    let core = 32.0 * c * delta * sigma2 / b;
    gamma * core / mu + core / (mu * mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComplexityMethod {
    BrLsvrg,
    ByrdSaga,
    ByzVrMarina,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    #[serde(rename = "L")]
    pub l: f64,
    pub mu: f64,
    pub m: f64,
    pub n: f64,
    pub b: f64,
    pub c: f64,
    pub delta: f64,
    pub eps: f64,
}

/// Iteration and oracle-call bounds with every absolute constant set to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub method: ComplexityMethod,
    pub iterations_bound: f64,
    pub oracle_bound: f64,
    pub inputs: ComplexityInputs,
    /// For BR-LSVRG: `max{1, 144cδL/μ, √(cδm)}`, the batch the bound assumes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommended_batch: Option<f64>,
    pub note: String,
}

pub fn complexity_bounds(method: ComplexityMethod, inputs: ComplexityInputs) -> Result<ComplexityReport> {
    let ComplexityInputs {
        l,
        mu,
        m,
        n,
        b,
        c,
        delta,
        eps,
    } = inputs;
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::Domain(format!("delta must lie in [0, 1/2), got {delta}")));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    for (name, v) in [("L", l), ("mu", mu), ("m", m), ("n", n), ("b", b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!("c must be non-negative, got {c}")));
    }

    let log_term = (1.0 / eps).ln();
    let kappa = l / mu;
    let cd = c * delta;
    let (iterations, oracle, recommended) = match method {
        ComplexityMethod::BrLsvrg => (
            (kappa + m / b) * log_term,
            (kappa + l * l * cd.sqrt() / (mu * mu) + l * (cd * m).sqrt() / mu + m) * log_term,
            Some(1f64.max(144.0 * cd * kappa).max((cd * m).sqrt())),
        ),
        ComplexityMethod::ByrdSaga => {
            let base = m * m * l * l / ((1.0 - 2.0 * delta) * mu * mu);
            (base / (b * b) * log_term, base / b * log_term, None)
        }
        ComplexityMethod::ByzVrMarina => (
            (kappa + l * m.sqrt() / (mu * b * n.sqrt()) + l * m * cd.sqrt() / (mu * b.powf(1.5)) + m / b) * log_term,
            (b * kappa + l * m.sqrt() / (mu * n.sqrt()) + l * m * cd.sqrt() / (mu * b.sqrt()) + m) * log_term,
            None,
        ),
    };
    Ok(ComplexityReport {
        method,
        iterations_bound: iterations,
        oracle_bound: oracle,
        inputs,
        recommended_batch: recommended,
        note: "up to absolute constants".to_owned(),
    })
}
