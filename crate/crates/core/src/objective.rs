//! ℓ2-regularized logistic regression as a finite sum `f = (1/m) Σ f_j`.
//!
//! Everything downstream (estimators, reference solver, diagnostics) is
//! written against the [`FiniteSum`] trait so small closed-form problems can
//! stand in for the logistic objective in tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::Dataset;
use crate::error::{Error, Result};

/// Per-component oracle access to a finite-sum objective.
///
/// Implementors provide the raw, unchecked primitives; the provided methods
/// add dimension checks and the dense conveniences.
pub trait FiniteSum {
    /// Number of summands `m`.
    fn num_components(&self) -> usize;

    fn dim(&self) -> usize;

    /// `f_j(x)`; `x.len() == dim()` is the caller's responsibility.
    fn component_loss_raw(&self, j: usize, x: &[f64]) -> f64;

    /// `out += scale * ∇f_j(x)`.
    fn add_component_grad(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// Smoothness constant `L_j` of the j-th summand.
    fn component_smoothness(&self, j: usize) -> f64;

    /// Smoothness constant `L` of the average.
    fn smoothness(&self) -> f64;

    /// Strong-convexity constant `μ` of the average.
    fn strong_convexity(&self) -> f64;

    /// `out += scale * (∇f_j(x) − ∇f_j(y))`. Adds exactly zero when `x == y`.
    fn add_component_grad_diff(&self, j: usize, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let mut gx = vec![0.0; self.dim()];
        let mut gy = vec![0.0; self.dim()];
        self.add_component_grad(j, x, 1.0, &mut gx);
        self.add_component_grad(j, y, 1.0, &mut gy);
        for ((o, a), b) in out.iter_mut().zip(&gx).zip(&gy) {
            *o += scale * (a - b);
        }
    }

    /// `‖∇f_j(x) − ∇f_j(y)‖²`. Overridden where a cheaper exact form exists.
    fn component_grad_diff_norm2(&self, j: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut diff = vec![0.0; self.dim()];
        self.add_component_grad(j, x, 1.0, &mut diff);
        self.add_component_grad(j, y, -1.0, &mut diff);
        diff.iter().map(|v| v * v).sum()
    }

    /// The same problem with every label negated, when that makes sense.
    fn label_flipped(&self) -> Option<Self>
    where
        Self: Sized,
    {
        None
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "vector has length {} but the objective has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.num_components() {
            return Err(Error::invalid(format!(
                "component index {j} out of range for m = {}",
                self.num_components()
            )));
        }
        Ok(())
    }

    fn component_loss(&self, j: usize, x: &[f64]) -> Result<f64> {
        self.check_index(j)?;
        self.check_dim(x)?;
        Ok(self.component_loss_raw(j, x))
    }

    fn component_grad(&self, j: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(j)?;
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dim()];
        self.add_component_grad(j, x, 1.0, &mut g);
        Ok(g)
    }

    /// `f(x)`.
    fn loss(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let m = self.num_components();
        Ok((0..m).map(|j| self.component_loss_raw(j, x)).sum::<f64>() / m as f64)
    }

    /// `f(x) − f(y)`. Implementations may evaluate the difference directly
    /// to avoid cancellation when `x` and `y` are close.
    fn loss_gap(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        Ok(self.loss(x)? - self.loss(y)?)
    }

    /// `∇f(x) = (1/m) Σ_j ∇f_j(x)`.
    fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dim()];
        self.full_grad_into(x, &mut g);
        Ok(g)
    }

    /// Unchecked full gradient written into `out`.
    fn full_grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let m = self.num_components();
        for j in 0..m {
            self.add_component_grad(j, x, 1.0, out);
        }
        let inv = 1.0 / m as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }
}

/// Count of component-gradient evaluations. A full gradient costs `m`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounter {
    calls: u64,
}

impl OracleCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, component_calls: u64) {
        self.calls += component_calls;
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

/// `ln(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-t})` without overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Power-iteration settings for `λ_max(AᵀA)`.
#[derive(Debug, Clone, Copy)]
pub struct PowerIteration {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            rel_tol: 1e-6,
            max_iter: 10_000,
            seed: 0x5eed_cafe,
        }
    }
}

/// Largest eigenvalue of `AᵀA` for the dataset's feature matrix, by power
/// iteration on `v ↦ Aᵀ(Av)` with a Rayleigh-quotient stopping rule.
pub fn gram_lambda_max(ds: &Dataset, params: PowerIteration) -> Result<f64> {
    let d = ds.dim();
    if d == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..1.5)).collect();
    normalize(&mut v);

    let mut next = vec![0.0; d];
    let mut lambda = 0.0;
    for _ in 0..params.max_iter {
        next.iter_mut().for_each(|e| *e = 0.0);
        // Rayleigh quotient vᵀAᵀAv = ‖Av‖² with ‖v‖ = 1.
        let mut quotient = 0.0;
        for row in ds.rows() {
            let t = row.dot(&v);
            quotient += t * t;
            row.axpy(t, &mut next);
        }
        let norm = norm2(&next).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let converged = (quotient - lambda).abs() <= params.rel_tol * quotient;
        lambda = quotient;
        next.iter_mut().for_each(|e| *e /= norm);
        std::mem::swap(&mut v, &mut next);
        if converged {
            return Ok(lambda);
        }
    }
    // Residual ‖AᵀAv − λv‖ / λ of the final iterate.
    let mut mv = vec![0.0; d];
    for row in ds.rows() {
        row.axpy(row.dot(&v), &mut mv);
    }
    let residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - lambda * b).powi(2))
        .sum::<f64>()
        .sqrt()
        / lambda;
    Err(Error::Numerical {
        message: format!(
            "power iteration did not reach relative tolerance {:e} in {} iterations",
            params.rel_tol, params.max_iter
        ),
        residual,
    })
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn normalize(v: &mut [f64]) {
    let n = norm2(v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Smoothness and strong-convexity constants of a logistic objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub lipschitz: f64,
    pub component_lipschitz: Vec<f64>,
    pub mu: f64,
}

/// `f_j(x) = ln(1 + exp(−y_j⟨a_j, x⟩)) + (ℓ2/2)‖x‖²`.
#[derive(Debug, Clone)]
pub struct Objective {
    dataset: Dataset,
    l2: f64,
    lambda_max: f64,
    lipschitz: f64,
    component_lipschitz: Vec<f64>,
    row_norm2: Vec<f64>,
}

impl Objective {
    /// Objective with an explicit regularization coefficient.
    pub fn new(dataset: Dataset, l2: f64) -> Result<Self> {
        Self::with_power_iteration(dataset, l2, PowerIteration::default())
    }

    pub fn with_power_iteration(dataset: Dataset, l2: f64, params: PowerIteration) -> Result<Self> {
        if !(l2 >= 0.0 && l2.is_finite()) {
            return Err(Error::invalid(format!("l2 must be finite and >= 0, got {l2}")));
        }
        let lambda_max = gram_lambda_max(&dataset, params)?;
        Ok(Self::assemble(dataset, l2, lambda_max))
    }

    /// Objective with `ℓ2 = L₀/1000`, where `L₀` is the smoothness constant of
    /// the unregularized loss. The resulting `L` is `L₀ + ℓ2`.
    pub fn with_default_l2(dataset: Dataset) -> Result<Self> {
        let lambda_max = gram_lambda_max(&dataset, PowerIteration::default())?;
        let l0 = lambda_max / (4.0 * dataset.len() as f64);
        Ok(Self::assemble(dataset, l0 / 1000.0, lambda_max))
    }

    fn assemble(dataset: Dataset, l2: f64, lambda_max: f64) -> Self {
        let row_norm2: Vec<f64> = dataset.rows().iter().map(|r| r.norm2()).collect();
        let component_lipschitz = row_norm2.iter().map(|n| l2 + n / 4.0).collect();
        let lipschitz = l2 + lambda_max / (4.0 * dataset.len() as f64);
        Objective {
            dataset,
            l2,
            lambda_max,
            lipschitz,
            component_lipschitz,
            row_norm2,
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn l2(&self) -> f64 {
        self.l2
    }

    /// `λ_max(AᵀA)` as found by power iteration.
    pub fn gram_lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn smoothness_constants(&self) -> SmoothnessConstants {
        SmoothnessConstants {
            lipschitz: self.lipschitz,
            component_lipschitz: self.component_lipschitz.clone(),
            mu: self.l2,
        }
    }

    /// `σ(−y_j⟨a_j, x⟩)`, the weight of `−y_j a_j` in `∇f_j(x)`.
    #[inline]
    fn residual_weight(&self, j: usize, x: &[f64]) -> f64 {
        let y = self.dataset.label(j);
        sigmoid(-y * self.dataset.row(j).dot(x))
    }
}

impl FiniteSum for Objective {
    fn num_components(&self) -> usize {
        self.dataset.len()
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn component_loss_raw(&self, j: usize, x: &[f64]) -> f64 {
        let margin = self.dataset.label(j) * self.dataset.row(j).dot(x);
        softplus(-margin) + 0.5 * self.l2 * norm2(x)
    }

    #[inline]
    fn add_component_grad(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let y = self.dataset.label(j);
        let s = self.residual_weight(j, x);
        self.dataset.row(j).axpy(-scale * y * s, out);
        if self.l2 != 0.0 {
            let c = scale * self.l2;
            out.iter_mut().zip(x).for_each(|(o, xi)| *o += c * xi);
        }
    }

    #[inline]
    fn add_component_grad_diff(&self, j: usize, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        let label = self.dataset.label(j);
        let c = -label * (self.residual_weight(j, x) - self.residual_weight(j, y));
        self.dataset.row(j).axpy(scale * c, out);
        if self.l2 != 0.0 {
            let k = scale * self.l2;
            for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                *o += k * (a - b);
            }
        }
    }

    fn component_smoothness(&self, j: usize) -> f64 {
        self.component_lipschitz[j]
    }

    fn smoothness(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.l2
    }

    /// With `c = −y(s(x) − s(y))` the difference is `c·a_j + ℓ2(x − y)`, so
    /// the squared norm needs only one dense pass over `x − y`.
    fn component_grad_diff_norm2(&self, j: usize, x: &[f64], y: &[f64]) -> f64 {
        let label = self.dataset.label(j);
        let row = self.dataset.row(j);
        let c = -label * (self.residual_weight(j, x) - self.residual_weight(j, y));
        if self.l2 == 0.0 {
            return c * c * self.row_norm2[j];
        }
        let mut delta_norm2 = 0.0;
        let mut row_dot_delta = 0.0;
        for (xi, yi) in x.iter().zip(y) {
            delta_norm2 += (xi - yi) * (xi - yi);
        }
        for (&i, &v) in row.indices().iter().zip(row.values()) {
            row_dot_delta += v * (x[i as usize] - y[i as usize]);
        }
        (c * c * self.row_norm2[j] + 2.0 * c * self.l2 * row_dot_delta + self.l2 * self.l2 * delta_norm2).max(0.0)
    }

    /// Per summand, `softplus(t) − softplus(t*) = log1p(σ(t*)·expm1(t − t*))`
    /// with `t − t*` taken from the difference vector `x − y`.
    fn loss_gap(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_dim(y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        let m = self.num_components();
        let mut total = 0.0;
        for j in 0..m {
            let row = self.dataset.row(j);
            let yj = self.dataset.label(j);
            let t_ref = -yj * row.dot(y);
            let dt = -yj * row.dot(&diff);
            total += (sigmoid(t_ref) * dt.exp_m1()).ln_1p();
        }
        let ridge: f64 = diff.iter().zip(x.iter().zip(y)).map(|(d, (a, b))| d * (a + b)).sum();
        Ok(total / m as f64 + 0.5 * self.l2 * ridge)
    }

    fn label_flipped(&self) -> Option<Self> {
        Some(Objective {
            dataset: self.dataset.with_flipped_labels(),
            ..self.clone()
        })
    }
}

/// `f_j(x) = (c_j/2)‖x − t_j‖²`, a closed-form finite sum for tests and
/// sanity checks.
#[derive(Debug, Clone)]
pub struct QuadraticSum {
    curvatures: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl QuadraticSum {
    pub fn new(curvatures: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if curvatures.is_empty() || curvatures.len() != centers.len() {
            return Err(Error::invalid("need one curvature per center and at least one summand"));
        }
        let d = centers[0].len();
        if centers.iter().any(|c| c.len() != d) {
            return Err(Error::invalid("all centers must share a dimension"));
        }
        if curvatures.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::invalid("curvatures must be non-negative"));
        }
        Ok(QuadraticSum { curvatures, centers })
    }

    /// One-dimensional summands.
    pub fn scalar(curvatures: &[f64], centers: &[f64]) -> Result<Self> {
        Self::new(curvatures.to_vec(), centers.iter().map(|&c| vec![c]).collect())
    }
}

impl FiniteSum for QuadraticSum {
    fn num_components(&self) -> usize {
        self.curvatures.len()
    }

    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn component_loss_raw(&self, j: usize, x: &[f64]) -> f64 {
        let d2: f64 = x.iter().zip(&self.centers[j]).map(|(a, b)| (a - b) * (a - b)).sum();
        0.5 * self.curvatures[j] * d2
    }

    fn add_component_grad(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let c = scale * self.curvatures[j];
        for ((o, a), t) in out.iter_mut().zip(x).zip(&self.centers[j]) {
            *o += c * (a - t);
        }
    }

    fn component_smoothness(&self, j: usize) -> f64 {
        self.curvatures[j]
    }

    fn smoothness(&self) -> f64 {
        self.curvatures.iter().sum::<f64>() / self.curvatures.len() as f64
    }

    fn strong_convexity(&self) -> f64 {
        self.smoothness()
    }
}

/// Outcome of [`check_assumption1`]. Slacks are `rhs − lhs` of each
/// inequality, so negative values are violations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub trials: usize,
    pub convexity_min_slack: f64,
    pub smoothness_min_slack: f64,
    pub strong_convexity_min_slack: f64,
    pub convexity_violations: usize,
    pub smoothness_violations: usize,
    pub strong_convexity_violations: usize,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.convexity_violations == 0 && self.smoothness_violations == 0 && self.strong_convexity_violations == 0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Samples random `(x, y, j)` triples and checks per-component convexity,
/// per-component `L_j`-smoothness, and `μ`-strong convexity of the average.
///
/// Points are drawn uniformly from `[-scale, scale]^d`.
pub fn check_assumption1<O: FiniteSum + ?Sized>(
    obj: &O,
    trials: usize,
    seed: u64,
    scale: f64,
) -> Result<AssumptionReport> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    let d = obj.dim();
    let m = obj.num_components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = AssumptionReport {
        trials,
        convexity_min_slack: f64::INFINITY,
        smoothness_min_slack: f64::INFINITY,
        strong_convexity_min_slack: f64::INFINITY,
        convexity_violations: 0,
        smoothness_violations: 0,
        strong_convexity_violations: 0,
    };
    let mu = obj.strong_convexity();

    for _ in 0..trials {
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..=scale)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.random_range(-scale..=scale)).collect();
        let j = rng.random_range(0..m);
        let diff: Vec<f64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        let dist = norm2(&diff).sqrt();

        let gx = obj.component_grad(j, &x)?;
        let gy = obj.component_grad(j, &y)?;
        let fx = obj.component_loss_raw(j, &x);
        let fy = obj.component_loss_raw(j, &y);

        let convex = fy - (fx + dot(&gx, &diff)) + 1e-9;
        report.convexity_min_slack = report.convexity_min_slack.min(convex);
        report.convexity_violations += usize::from(convex < 0.0);

        let gdiff = gx.iter().zip(&gy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let smooth = obj.component_smoothness(j) * dist * (1.0 + 1e-9) - gdiff;
        report.smoothness_min_slack = report.smoothness_min_slack.min(smooth);
        report.smoothness_violations += usize::from(smooth < 0.0);

        let full_gx = obj.full_grad(&x)?;
        let strong = obj.loss(&y)? - (obj.loss(&x)? + dot(&full_gx, &diff) + 0.5 * mu * dist * dist) + 1e-9;
        report.strong_convexity_min_slack = report.strong_convexity_min_slack.min(strong);
        report.strong_convexity_violations += usize::from(strong < 0.0);
    }
    Ok(report)
}

/// Empirical `E_j ‖∇f_j(x) − ∇f(x)‖²` at a point.
pub fn gradient_variance_at<O: FiniteSum + ?Sized>(obj: &O, x: &[f64]) -> Result<f64> {
    let full = obj.full_grad(x)?;
    let m = obj.num_components();
    let mut total = 0.0;
    let mut g = vec![0.0; obj.dim()];
    for j in 0..m {
        g.copy_from_slice(&full);
        obj.add_component_grad(j, x, -1.0, &mut g);
        total += norm2(&g);
    }
    Ok(total / m as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_io::{parse_libsvm, synthetic, ParseOptions, SparseRow};

    fn ds(text: &str) -> Dataset {
        parse_libsvm(text, &ParseOptions::default()).unwrap()
    }

    #[test]
    fn loss_gap_matches_naive_difference() {
        let obj = Objective::new(synthetic::gaussian(40, 5, 3).unwrap(), 0.05).unwrap();
        let x = [0.3, -0.2, 0.1, 0.0, 0.7];
        let y = [-0.1, 0.4, 0.2, 0.5, -0.3];
        let naive = obj.loss(&x).unwrap() - obj.loss(&y).unwrap();
        assert!((obj.loss_gap(&x, &y).unwrap() - naive).abs() < 1e-14);
        assert_eq!(obj.loss_gap(&x, &x).unwrap(), 0.0);
        // a tiny step along the gradient is resolved far below f's rounding
        let g = obj.full_grad(&y).unwrap();
        let h = 1e-9;
        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - h * b).collect();
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let gap = obj.loss_gap(&z, &y).unwrap();
        assert!((gap + h * g2).abs() < 1e-6 * h * g2, "{gap} vs {}", -h * g2);
    }

    #[test]
    fn loss_at_zero_is_ln2() {
        let obj = Objective::new(synthetic::gaussian(5, 3, 2).unwrap(), 0.3).unwrap();
        for j in 0..5 {
            assert_eq!(obj.component_loss(j, &[0.0; 3]).unwrap(), std::f64::consts::LN_2);
        }
    }

    #[test]
    fn loss_decays_to_zero_with_margin() {
        let obj = Objective::new(ds("+1 1:1"), 0.0).unwrap();
        let mut prev = f64::INFINITY;
        for t in [0.0, 1.0, 10.0, 100.0, 800.0] {
            let v = obj.component_loss(0, &[t]).unwrap();
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-300);
        // Large negative margins must not overflow.
        assert_eq!(obj.component_loss(0, &[-800.0]).unwrap(), 800.0);
    }

    #[test]
    fn grad_at_zero_without_l2() {
        let data = synthetic::gaussian(4, 3, 5).unwrap();
        let obj = Objective::new(data.clone(), 0.0).unwrap();
        for j in 0..4 {
            let g = obj.component_grad(j, &[0.0; 3]).unwrap();
            let expect = data.row(j).to_dense(3);
            for (gi, ai) in g.iter().zip(expect) {
                assert_eq!(*gi, -data.label(j) * ai / 2.0);
            }
        }
    }

    #[test]
    fn zero_row_grad_is_l2_x() {
        let data = Dataset::new(vec![SparseRow::new(vec![], vec![]).unwrap()], vec![1.0], 3, "zero").unwrap();
        let obj = Objective::new(data, 0.25).unwrap();
        let x = [1.0, -2.0, 4.0];
        assert_eq!(obj.component_grad(0, &x).unwrap(), vec![0.25, -0.5, 1.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let obj = Objective::new(ds("+1 1:1 2:1"), 0.0).unwrap();
        assert!(obj.component_loss(0, &[0.0]).is_err());
        assert!(obj.component_grad(0, &[0.0; 3]).is_err());
        assert!(obj.full_grad(&[0.0]).is_err());
        assert!(obj.component_grad(1, &[0.0; 2]).is_err());
    }

    #[test]
    fn full_grad_of_single_row() {
        let obj = Objective::new(ds("-1 1:0.5 2:2"), 0.1).unwrap();
        let x = [0.3, -0.7];
        assert_eq!(obj.full_grad(&x).unwrap(), obj.component_grad(0, &x).unwrap());
    }

    #[test]
    fn full_grad_matches_naive_mean() {
        let obj = Objective::new(synthetic::gaussian(30, 4, 9).unwrap(), 0.05).unwrap();
        let x = [0.1, 0.2, -0.3, 0.4];
        let fast = obj.full_grad(&x).unwrap();
        let mut naive = [0.0; 4];
        for j in 0..30 {
            let g = obj.component_grad(j, &x).unwrap();
            for k in 0..4 {
                naive[k] += g[k] / 30.0;
            }
        }
        for k in 0..4 {
            assert!((fast[k] - naive[k]).abs() <= 1e-12);
        }
    }

    #[test]
    fn rank_one_constants() {
        let obj = Objective::new(ds("+1 1:2"), 0.0).unwrap();
        let mut d2 = ds("+1 1:2");
        d2 = Dataset::new(d2.rows().to_vec(), d2.labels().to_vec(), 2, "r1").unwrap();
        let obj2 = Objective::new(d2, 0.0).unwrap();
        for o in [&obj, &obj2] {
            assert!((o.gram_lambda_max() - 4.0).abs() < 1e-9);
            let c = o.smoothness_constants();
            assert!((c.lipschitz - 1.0).abs() < 1e-9);
            assert_eq!(c.component_lipschitz, vec![1.0]);
            assert_eq!(c.mu, 0.0);
        }
    }

    #[test]
    fn identity_constants() {
        let m = 7;
        let text: String = (1..=m).map(|i| format!("+1 {i}:1\n")).collect();
        let obj = Objective::new(ds(&text), 0.0).unwrap();
        assert!((obj.smoothness() - 0.25 / m as f64).abs() < 1e-12);
    }

    #[test]
    fn default_l2_is_one_thousandth() {
        let data = synthetic::gaussian(40, 5, 3).unwrap();
        let plain = Objective::new(data.clone(), 0.0).unwrap();
        let obj = Objective::with_default_l2(data).unwrap();
        assert!((obj.l2() - plain.smoothness() / 1000.0).abs() <= 1e-15);
        assert!((obj.smoothness() - plain.smoothness() * 1.001).abs() <= 1e-12);
        assert_eq!(obj.strong_convexity(), obj.l2());
        assert!(obj.smoothness() >= obj.strong_convexity());
    }

    #[test]
    fn diff_norm_shortcut_matches_dense() {
        let obj = Objective::new(synthetic::gaussian(10, 4, 4).unwrap(), 0.2).unwrap();
        let x = [0.5, -1.0, 0.25, 2.0];
        let y = [-0.5, 0.3, 0.0, 1.0];
        for j in 0..10 {
            let mut diff = obj.component_grad(j, &x).unwrap();
            let gy = obj.component_grad(j, &y).unwrap();
            diff.iter_mut().zip(gy).for_each(|(a, b)| *a -= b);
            let dense: f64 = diff.iter().map(|v| v * v).sum();
            let fast = obj.component_grad_diff_norm2(j, &x, &y);
            assert!((dense - fast).abs() <= 1e-12 * dense.max(1.0));
        }
        assert_eq!(obj.component_grad_diff_norm2(3, &x, &x), 0.0);
    }

    #[test]
    fn assumption_check_passes_for_logistic() {
        let obj = Objective::with_default_l2(synthetic::gaussian(25, 4, 8).unwrap()).unwrap();
        let report = check_assumption1(&obj, 200, 1, 3.0).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(check_assumption1(&obj, 0, 1, 1.0).is_err());
    }

    struct Inflated(Objective);

    impl FiniteSum for Inflated {
        fn num_components(&self) -> usize {
            self.0.num_components()
        }
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn component_loss_raw(&self, j: usize, x: &[f64]) -> f64 {
            self.0.component_loss_raw(j, x)
        }
        fn add_component_grad(&self, j: usize, x: &[f64], scale: f64, out: &mut [f64]) {
            self.0.add_component_grad(j, x, 1.5 * scale, out)
        }
        fn component_smoothness(&self, j: usize) -> f64 {
            self.0.component_smoothness(j)
        }
        fn smoothness(&self) -> f64 {
            self.0.smoothness()
        }
        fn strong_convexity(&self) -> f64 {
            self.0.strong_convexity()
        }
    }

    #[test]
    fn assumption_check_flags_corrupted_gradient() {
        // Large ℓ2 makes the quadratic term dominate, so a 1.5x gradient
        // breaks the L_j bound on every pair.
        let obj = Objective::new(synthetic::gaussian(25, 4, 8).unwrap(), 5.0).unwrap();
        let report = check_assumption1(&Inflated(obj), 50, 2, 1.0).unwrap();
        assert!(report.smoothness_violations > 0);
        assert!(report.smoothness_min_slack < 0.0);
    }
}
