use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::objective::{FiniteSum, OracleCounter};

/// Loopless-SVRG state: a reference point and the full gradient there.
#[derive(Debug, Clone)]
pub struct LsvrgState {
    reference: Vec<f64>,
    full_grad_at_reference: Vec<f64>,
    /// The reference moved and its full gradient has not been recomputed yet.
    stale: bool,
}

/// SAGA state: the last gradient seen for every summand and their mean.
#[derive(Debug, Clone)]
pub struct SagaState {
    dim: usize,
    table: Vec<f64>,
    mean: Vec<f64>,
    updates_since_resync: usize,
}

impl SagaState {
    fn entry(&self, j: usize) -> &[f64] {
        &self.table[j * self.dim..(j + 1) * self.dim]
    }

    /// Recomputes the running mean from the table.
    fn resync(&mut self) {
        let m = self.table.len() / self.dim;
        self.mean.iter_mut().for_each(|v| *v = 0.0);
        for row in self.table.chunks_exact(self.dim) {
            self.mean.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        let inv = 1.0 / m as f64;
        self.mean.iter_mut().for_each(|v| *v *= inv);
        self.updates_since_resync = 0;
    }

    /// Largest coordinate gap between the running mean and the exact table mean.
    pub fn mean_drift(&self) -> f64 {
        let mut exact = self.clone();
        exact.resync();
        exact
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub enum EstimatorState {
    Lsvrg(LsvrgState),
    Saga(SagaState),
}

/// One worker's private state: estimator memory, RNG stream and oracle counter.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub id: usize,
    pub is_byzantine: bool,
    rng: ChaCha8Rng,
    counter: OracleCounter,
    estimator: EstimatorState,
}

impl WorkerState {
    /// LSVRG worker with `w = x0`; computing `∇f(x0)` costs `m`.
    pub fn lsvrg<O: FiniteSum + ?Sized>(id: usize, is_byzantine: bool, obj: &O, x0: &[f64], seed: u64) -> Self {
        let mut counter = OracleCounter::new();
        let mut full = vec![0.0; obj.dim()];
        obj.full_grad_into(x0, &mut full);
        counter.charge(obj.num_components() as u64);
        WorkerState {
            id,
            is_byzantine,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter,
            estimator: EstimatorState::Lsvrg(LsvrgState {
                reference: x0.to_vec(),
                full_grad_at_reference: full,
                stale: false,
            }),
        }
    }

    /// SAGA worker with every table entry set to `∇f_j(x0)`; costs `m`.
    pub fn saga<O: FiniteSum + ?Sized>(id: usize, is_byzantine: bool, obj: &O, x0: &[f64], seed: u64) -> Self {
        let m = obj.num_components();
        let d = obj.dim();
        let mut table = vec![0.0; m * d];
        for (j, row) in table.chunks_exact_mut(d).enumerate() {
            obj.add_component_grad(j, x0, 1.0, row);
        }
        let mut state = SagaState {
            dim: d,
            table,
            mean: vec![0.0; d],
            updates_since_resync: 0,
        };
        state.resync();
        let mut counter = OracleCounter::new();
        counter.charge(m as u64);
        WorkerState {
            id,
            is_byzantine,
            rng: ChaCha8Rng::seed_from_u64(seed),
            counter,
            estimator: EstimatorState::Saga(state),
        }
    }

    pub fn oracle_calls(&self) -> u64 {
        self.counter.calls()
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    /// Current LSVRG reference point, if this is an LSVRG worker.
    pub fn reference_point(&self) -> Option<&[f64]> {
        match &self.estimator {
            EstimatorState::Lsvrg(s) => Some(&s.reference),
            EstimatorState::Saga(_) => None,
        }
    }

    /// Stored SAGA gradient for summand `j`, if this is a SAGA worker.
    pub fn saga_entry(&self, j: usize) -> Option<&[f64]> {
        match &self.estimator {
            EstimatorState::Saga(s) => Some(s.entry(j)),
            EstimatorState::Lsvrg(_) => None,
        }
    }

    pub fn saga_mean_drift(&self) -> Option<f64> {
        match &self.estimator {
            EstimatorState::Saga(s) => Some(s.mean_drift()),
            EstimatorState::Lsvrg(_) => None,
        }
    }

    /// `b` indices drawn i.i.d. uniformly from `[0, m)` on this worker's stream.
    pub fn sample_batch(&mut self, m: usize, b: usize) -> Vec<usize> {
        (0..b).map(|_| self.rng.random_range(0..m)).collect()
    }

    /// Draws a batch and evaluates the worker's estimator at `x`.
    pub fn estimate<O: FiniteSum + ?Sized>(&mut self, obj: &O, x: &[f64], b: usize) -> Vec<f64> {
        let batch = self.sample_batch(obj.num_components(), b);
        self.estimate_with_batch(obj, x, &batch)
    }

    /// The estimator at `x` for a given batch.
    ///
    /// LSVRG: `(1/b) Σ_t (∇f_j(x) − ∇f_j(w)) + ∇f(w)`, charged `2b` (plus
    /// `m` if the reference full gradient must be refreshed first).
    /// SAGA: `(1/b) Σ_t (∇f_j(x) − α_j) + ᾱ`, charged `b`, after which the
    /// sampled table entries are overwritten in draw order.
    pub fn estimate_with_batch<O: FiniteSum + ?Sized>(&mut self, obj: &O, x: &[f64], batch: &[usize]) -> Vec<f64> {
        let d = obj.dim();
        let inv_b = 1.0 / batch.len() as f64;
        match &mut self.estimator {
            EstimatorState::Lsvrg(state) => {
                if state.stale {
                    obj.full_grad_into(&state.reference, &mut state.full_grad_at_reference);
                    self.counter.charge(obj.num_components() as u64);
                    state.stale = false;
                }
                let mut g = vec![0.0; d];
                for &j in batch {
                    obj.add_component_grad_diff(j, x, &state.reference, 1.0, &mut g);
                }
                for (gk, fk) in g.iter_mut().zip(&state.full_grad_at_reference) {
                    *gk = *gk * inv_b + fk;
                }
                self.counter.charge(2 * batch.len() as u64);
                g
            }
            EstimatorState::Saga(state) => {
                let m = obj.num_components();
                let fresh: Vec<Vec<f64>> = batch
                    .iter()
                    .map(|&j| {
                        let mut gj = vec![0.0; d];
                        obj.add_component_grad(j, x, 1.0, &mut gj);
                        gj
                    })
                    .collect();
                let mut g = vec![0.0; d];
                for (&j, gj) in batch.iter().zip(&fresh) {
                    let old = state.entry(j);
                    for k in 0..d {
                        g[k] += gj[k] - old[k];
                    }
                }
                for (gk, ak) in g.iter_mut().zip(&state.mean) {
                    *gk = *gk * inv_b + ak;
                }
                let inv_m = 1.0 / m as f64;
                for (&j, gj) in batch.iter().zip(&fresh) {
                    let row = &mut state.table[j * d..(j + 1) * d];
                    for ((mk, rk), gk) in state.mean.iter_mut().zip(row.iter()).zip(gj) {
                        *mk += (gk - rk) * inv_m;
                    }
                    row.copy_from_slice(gj);
                    state.updates_since_resync += 1;
                }
                if state.updates_since_resync >= m {
                    state.resync();
                }
                self.counter.charge(batch.len() as u64);
                g
            }
        }
    }

    /// With probability `p` moves the LSVRG reference point to `x`; the full
    /// gradient there is recomputed (and charged) at the next estimate.
    /// Always returns `false` for SAGA workers and draws no randomness.
    pub fn maybe_switch_reference(&mut self, x: &[f64], p: f64) -> bool {
        let EstimatorState::Lsvrg(state) = &mut self.estimator else {
            return false;
        };
        let switch = self.rng.random::<f64>() < p;
        if switch {
            state.reference.copy_from_slice(x);
            state.stale = true;
        }
        switch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::QuadraticSum;

    fn toy() -> QuadraticSum {
        // f_1 = x², f_2 = (x − 1)²
        QuadraticSum::scalar(&[2.0, 2.0], &[0.0, 1.0]).unwrap()
    }

    #[test]
    fn lsvrg_hand_value() {
        let obj = toy();
        let mut w = WorkerState::lsvrg(0, false, &obj, &[1.0], 1);
        let g = w.estimate_with_batch(&obj, &[0.0], &[0]);
        assert_eq!(g, vec![-1.0]);
        assert_eq!(w.oracle_calls(), 2 + 2);
    }

    #[test]
    fn lsvrg_at_reference_is_full_gradient() {
        let obj = QuadraticSum::new(
            vec![1.0, 3.0, 0.5],
            vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![4.0, -3.0]],
        )
        .unwrap();
        let x = [0.3, -0.9];
        let mut w = WorkerState::lsvrg(0, false, &obj, &x, 9);
        let full = obj.full_grad(&x).unwrap();
        for _ in 0..5 {
            assert_eq!(w.estimate(&obj, &x, 4), full);
        }
    }

    #[test]
    fn switch_refreshes_lazily() {
        let obj = toy();
        let mut w = WorkerState::lsvrg(0, false, &obj, &[1.0], 3);
        assert_eq!(w.oracle_calls(), 2);
        assert!(w.maybe_switch_reference(&[0.25], 1.0));
        assert_eq!(w.reference_point(), Some(&[0.25][..]));
        assert_eq!(w.oracle_calls(), 2);
        let g = w.estimate_with_batch(&obj, &[0.25], &[1]);
        assert_eq!(w.oracle_calls(), 2 + 2 + 2);
        assert_eq!(g, obj.full_grad(&[0.25]).unwrap());
    }

    #[test]
    fn saga_hand_value() {
        let obj = toy();
        let mut w = WorkerState::saga(0, false, &obj, &[1.0], 1);
        let g = w.estimate_with_batch(&obj, &[0.0], &[0]);
        assert_eq!(g, vec![-1.0]);
        assert_eq!(w.saga_entry(0), Some(&[0.0][..]));
        assert_eq!(w.oracle_calls(), 2 + 1);
        assert!(!w.maybe_switch_reference(&[0.0], 1.0));
    }

    #[test]
    fn saga_with_fresh_table_is_full_gradient() {
        let obj = toy();
        let x = [0.7];
        let mut w = WorkerState::saga(0, false, &obj, &x, 1);
        assert_eq!(w.estimate(&obj, &x, 3), obj.full_grad(&x).unwrap());
    }

    #[test]
    fn saga_duplicate_indices_and_drift() {
        let obj = QuadraticSum::scalar(&[1.0, 2.0, 3.0, 4.0], &[0.0, 1.0, -1.0, 2.0]).unwrap();
        let mut w = WorkerState::saga(0, false, &obj, &[0.0], 5);
        w.estimate_with_batch(&obj, &[1.0], &[2, 2]);
        assert_eq!(w.saga_entry(2), Some(&[3.0 * (1.0 + 1.0)][..]));
        let mut x = 1.0;
        for _ in 0..500 {
            x *= 0.99;
            w.estimate(&obj, &[x], 3);
            assert!(w.saga_mean_drift().unwrap() <= 1e-9);
        }
    }
}
