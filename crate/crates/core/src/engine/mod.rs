//! Round-based parameter-server simulation of BR-LSVRG and Byrd-SAGA.
//!
//! Each round is a strict barrier: every computing worker evaluates its
//! estimator at the broadcast iterate (in worker-id order), the attack is
//! applied to the collected honest vectors, and the server aggregates and
//! steps. All randomness comes from streams derived from `master_seed`, so a
//! configuration always reproduces the same trace.

mod seeds;
mod worker;

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use seeds::{bucket_seed, derive_seed, worker_seed};
pub use worker::{EstimatorState, LsvrgState, SagaState, WorkerState};

use crate::aggregation::{aggregate, AggregatorSpec, BaseRule};
use crate::analysis::{reference_spread, LyapunovVariant, ReferenceSolution};
use crate::attacks::{self, AttackSpec};
use crate::error::{Error, Result};
use crate::objective::{FiniteSum, OracleCounter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BrLsvrg,
    ByrdSaga,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::BrLsvrg => "br-lsvrg",
            Method::ByrdSaga => "byrd-saga",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    pub gamma: f64,
    pub batch_size: usize,
    /// Reference-switch probability (BR-LSVRG only).
    pub p: f64,
    pub workers: usize,
    pub byzantine_ids: Vec<usize>,
    pub aggregator: AggregatorSpec,
    pub attack: AttackSpec,
    pub iterations: usize,
    pub master_seed: u64,
    pub eval_every: usize,
    #[serde(default)]
    pub lyapunov: LyapunovVariant,
}

impl RunConfig {
    pub fn honest_count(&self) -> usize {
        self.workers - self.byzantine_ids.len()
    }

    pub fn is_byzantine(&self, id: usize) -> bool {
        self.byzantine_ids.contains(&id)
    }

    /// Checks every field against the problem size `m`.
    pub fn validate(&self, m: usize) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if self.batch_size == 0 || self.batch_size > m {
            return Err(Error::config(
                "batch_size",
                format!("must lie in [1, {m}], got {}", self.batch_size),
            ));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::config("p", format!("must lie in (0, 1], got {}", self.p)));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "need at least one worker"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        let mut ids = self.byzantine_ids.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.byzantine_ids.len() {
            return Err(Error::config("byzantine_ids", "contains duplicates"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.workers) {
            return Err(Error::config(
                "byzantine_ids",
                format!("id {bad} is not below the worker count {}", self.workers),
            ));
        }
        if self.honest_count() == 0 {
            return Err(Error::config("byzantine_ids", "at least one worker must be honest"));
        }
        if 2 * self.byzantine_ids.len() >= self.workers {
            log::warn!(
                "{} of {} workers are Byzantine; robustness needs a Byzantine fraction below 1/2",
                self.byzantine_ids.len(),
                self.workers
            );
        }
        self.aggregator
            .validate()
            .map_err(|e| Error::config("aggregator", e.to_string()))?;
        if self.aggregator.base == BaseRule::Krum {
            let inputs = match self.aggregator.bucketing {
                Some(b) => self.workers.div_ceil(b.bucket_size),
                None => self.workers,
            };
            if inputs < self.aggregator.krum_byzantine_count + 3 {
                return Err(Error::config(
                    "aggregator",
                    format!(
                        "Krum over {inputs} inputs cannot exclude {} Byzantine inputs (needs n >= B + 3)",
                        self.aggregator.krum_byzantine_count
                    ),
                ));
            }
        }
        self.attack
            .validate()
            .map_err(|e| Error::config("attack", e.to_string()))?;
        Ok(())
    }
}

/// Step-size cap of the two convergence regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepsizeRegime {
    /// `min{1/(12L), p/μ}`
    Thm1,
    /// `min{1/(144L), p/μ}`
    Thm2,
}

pub fn stepsize_cap(lipschitz: f64, mu: f64, p: f64, regime: StepsizeRegime) -> f64 {
    let smooth_cap = match regime {
        StepsizeRegime::Thm1 => 1.0 / (12.0 * lipschitz),
        StepsizeRegime::Thm2 => 1.0 / (144.0 * lipschitz),
    };
    let switch_cap = if mu > 0.0 { p / mu } else { f64::INFINITY };
    smooth_cap.min(switch_cap)
}

pub fn theoretical_stepsize<O: FiniteSum + ?Sized>(obj: &O, p: f64, regime: StepsizeRegime) -> f64 {
    stepsize_cap(obj.smoothness(), obj.strong_convexity(), p, regime)
}

/// One evaluation point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub subopt: f64,
    pub dist2: f64,
    pub sigma_k2: f64,
    pub psi_k: f64,
    /// Cumulative component-gradient evaluations over honest workers.
    pub oracle_calls: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// The iterate became NaN or infinite after this many rounds.
    Diverged {
        round: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub final_x: Vec<f64>,
    pub honest_oracle_calls: u64,
    pub byzantine_oracle_calls: u64,
    /// Evaluations spent on σ_k² diagnostics, kept out of the method's count.
    pub diagnostic_calls: u64,
    /// Reference switches made by honest workers.
    pub reference_switches: u64,
    pub elapsed_s: f64,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace always holds the initial record")
    }

    /// Writes the trace as CSV. Wall time is only included when asked for,
    /// which keeps the default output byte-for-byte reproducible.
    pub fn write_csv<W: Write>(&self, mut out: W, include_timing: bool) -> std::io::Result<()> {
        write!(out, "k,subopt,dist2,sigma_k2,psi_k,oracle_calls")?;
        if include_timing {
            write!(out, ",elapsed_s")?;
        }
        writeln!(out)?;
        for r in &self.records {
            write!(
                out,
                "{},{:e},{:e},{:e},{:e},{}",
                r.k, r.subopt, r.dist2, r.sigma_k2, r.psi_k, r.oracle_calls
            )?;
            if include_timing {
                write!(out, ",{:.6}", r.elapsed_s)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

struct Slot {
    state: Option<WorkerState>,
    flipped: bool,
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Executes `config.iterations` rounds from `x0`.
///
/// Without a reference solution the suboptimality, distance and Lyapunov
/// columns are NaN. A non-finite iterate stops the run early with
/// [`RunStatus::Diverged`]; configuration problems are reported before round 0.
pub fn run<O: FiniteSum>(
    config: &RunConfig,
    obj: &O,
    x0: &[f64],
    reference: Option<&ReferenceSolution>,
) -> Result<RunTrace> {
    let m = obj.num_components();
    config.validate(m)?;
    obj.check_dim(x0)?;
    if let Some(r) = reference {
        obj.check_dim(&r.x_star)?;
    }
    let flipped = match config.attack {
        AttackSpec::LabelFlip => Some(
            obj.label_flipped()
                .ok_or_else(|| Error::config("attack", "label flipping is not defined for this objective"))?,
        ),
        _ => None,
    };

    let start = Instant::now();
    let mut slots: Vec<Slot> = (0..config.workers)
        .map(|id| {
            let byz = config.is_byzantine(id);
            if byz && !config.attack.needs_worker_state() {
                return Slot {
                    state: None,
                    flipped: false,
                };
            }
            let use_flipped = byz && config.attack == AttackSpec::LabelFlip;
            let seed = worker_seed(config.master_seed, id);
            let state = match (config.method, use_flipped) {
                (Method::BrLsvrg, false) => WorkerState::lsvrg(id, byz, obj, x0, seed),
                (Method::BrLsvrg, true) => WorkerState::lsvrg(id, byz, flipped.as_ref().unwrap(), x0, seed),
                (Method::ByrdSaga, false) => WorkerState::saga(id, byz, obj, x0, seed),
                (Method::ByrdSaga, true) => WorkerState::saga(id, byz, flipped.as_ref().unwrap(), x0, seed),
            };
            Slot {
                state: Some(state),
                flipped: use_flipped,
            }
        })
        .collect();

    let mut diagnostics = OracleCounter::new();
    let mut x = x0.to_vec();
    let mut records = Vec::new();
    let mut switches = 0u64;
    let mut status = RunStatus::Completed;

    records.push(evaluate(0, &x, obj, config, &slots, reference, &mut diagnostics, start));

    let mut sent: Vec<Vec<f64>> = vec![Vec::new(); config.workers];
    for k in 0..config.iterations {
        for (id, slot) in slots.iter_mut().enumerate() {
            let Some(state) = slot.state.as_mut() else {
                continue;
            };
            let g = if slot.flipped {
                state.estimate(flipped.as_ref().unwrap(), &x, config.batch_size)
            } else {
                state.estimate(obj, &x, config.batch_size)
            };
            if state.maybe_switch_reference(&x, config.p) && !state.is_byzantine {
                switches += 1;
            }
            sent[id] = if state.is_byzantine && config.attack == AttackSpec::BitFlip {
                attacks::bit_flip(&g)
            } else {
                g
            };
        }

        let forged = match config.attack {
            AttackSpec::Alie { z } | AttackSpec::Ipm { eps: z } => {
                let honest: Vec<&[f64]> = (0..config.workers)
                    .filter(|&i| !config.is_byzantine(i))
                    .map(|i| sent[i].as_slice())
                    .collect();
                Some(match config.attack {
                    AttackSpec::Alie { .. } => attacks::alie(&honest, z)?,
                    _ => attacks::ipm(&honest, z)?,
                })
            }
            _ => None,
        };
        if let Some(v) = forged {
            for &id in &config.byzantine_ids {
                sent[id].clone_from(&v);
            }
        }

        let step = aggregate(&config.aggregator, &sent, bucket_seed(config.master_seed, k))?;
        for (xi, gi) in x.iter_mut().zip(&step) {
            *xi -= config.gamma * gi;
        }

        let done = k + 1;
        if !all_finite(&x) {
            status = RunStatus::Diverged { round: done };
            records.push(evaluate(
                done,
                &x,
                obj,
                config,
                &slots,
                reference,
                &mut diagnostics,
                start,
            ));
            break;
        }
        if done % config.eval_every == 0 || done == config.iterations {
            records.push(evaluate(
                done,
                &x,
                obj,
                config,
                &slots,
                reference,
                &mut diagnostics,
                start,
            ));
        }
    }

    let (honest_calls, byz_calls) = oracle_totals(&slots);
    Ok(RunTrace {
        records,
        status,
        final_x: x,
        honest_oracle_calls: honest_calls,
        byzantine_oracle_calls: byz_calls,
        diagnostic_calls: diagnostics.calls(),
        reference_switches: switches,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}

fn oracle_totals(slots: &[Slot]) -> (u64, u64) {
    slots.iter().filter_map(|s| s.state.as_ref()).fold((0, 0), |(h, b), w| {
        if w.is_byzantine {
            (h, b + w.oracle_calls())
        } else {
            (h + w.oracle_calls(), b)
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn evaluate<O: FiniteSum>(
    k: usize,
    x: &[f64],
    obj: &O,
    config: &RunConfig,
    slots: &[Slot],
    reference: Option<&ReferenceSolution>,
    diagnostics: &mut OracleCounter,
    start: Instant,
) -> TraceRecord {
    let (honest_calls, _) = oracle_totals(slots);
    let mut rec = TraceRecord {
        k,
        subopt: f64::NAN,
        dist2: f64::NAN,
        sigma_k2: f64::NAN,
        psi_k: f64::NAN,
        oracle_calls: honest_calls,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    let Some(reference) = reference else {
        return rec;
    };
    let x_star = &reference.x_star;
    if all_finite(x) {
        rec.subopt = obj.loss_gap(x, x_star).unwrap_or(f64::NAN);
    }
    rec.dist2 = x.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();

    let honest: Vec<&WorkerState> = slots
        .iter()
        .filter_map(|s| s.state.as_ref())
        .filter(|w| !w.is_byzantine)
        .collect();
    rec.sigma_k2 = match config.method {
        Method::BrLsvrg => {
            let refs: Vec<&[f64]> = honest.iter().filter_map(|w| w.reference_point()).collect();
            reference_spread(obj, &refs, x_star, diagnostics)
        }
        Method::ByrdSaga => saga_table_spread(obj, &honest, x_star, diagnostics),
    };
    rec.psi_k = rec.dist2 + config.lyapunov.coefficient() * config.gamma * config.gamma / config.p * rec.sigma_k2;
    rec
}

/// SAGA analogue of σ_k²: mean of `‖α_{i,j} − ∇f_j(x*)‖²` over honest tables.
fn saga_table_spread<O: FiniteSum>(
    obj: &O,
    honest: &[&WorkerState],
    x_star: &[f64],
    diagnostics: &mut OracleCounter,
) -> f64 {
    let m = obj.num_components();
    let d = obj.dim();
    let mut at_star = vec![0.0; d];
    let mut total = 0.0;
    for j in 0..m {
        at_star.iter_mut().for_each(|v| *v = 0.0);
        obj.add_component_grad(j, x_star, 1.0, &mut at_star);
        for w in honest {
            if let Some(entry) = w.saga_entry(j) {
                total += entry.iter().zip(&at_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            }
        }
    }
    diagnostics.charge(m as u64);
    if honest.is_empty() {
        0.0
    } else {
        total / (honest.len() * m) as f64
    }
}
