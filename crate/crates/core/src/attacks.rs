//! Byzantine worker behaviours.
//!
//! ALIE and IPM are evaluated after every honest vector of the round has been
//! collected, so the attacker sees exactly what the honest workers send.

use serde::{Deserialize, Serialize};

use crate::engine::WorkerState;
use crate::error::{Error, Result};
use crate::objective::FiniteSum;

pub const DEFAULT_ALIE_Z: f64 = 1.06;
pub const DEFAULT_IPM_EPS: f64 = 0.1;

fn default_z() -> f64 {
    DEFAULT_ALIE_Z
}

fn default_eps() -> f64 {
    DEFAULT_IPM_EPS
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackSpec {
    /// Byzantine workers follow the protocol.
    None,
    #[serde(alias = "bf")]
    BitFlip,
    #[serde(alias = "lf")]
    LabelFlip,
    Alie {
        #[serde(default = "default_z")]
        z: f64,
    },
    Ipm {
        #[serde(default = "default_eps")]
        eps: f64,
    },
}

impl AttackSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackSpec::Alie { z } if !(z > 0.0 && z.is_finite()) => {
                Err(Error::invalid(format!("ALIE needs z > 0, got {z}")))
            }
            AttackSpec::Ipm { eps } if !(eps > 0.0 && eps.is_finite()) => {
                Err(Error::invalid(format!("IPM needs eps > 0, got {eps}")))
            }
            _ => Ok(()),
        }
    }

    /// Whether Byzantine workers run their own estimator under this attack.
    pub fn needs_worker_state(&self) -> bool {
        matches!(self, AttackSpec::None | AttackSpec::BitFlip | AttackSpec::LabelFlip)
    }

    pub fn label(&self) -> String {
        match self {
            AttackSpec::None => "none".to_owned(),
            AttackSpec::BitFlip => "bf".to_owned(),
            AttackSpec::LabelFlip => "lf".to_owned(),
            AttackSpec::Alie { z } => format!("alie{z}"),
            AttackSpec::Ipm { eps } => format!("ipm{eps}"),
        }
    }
}

/// Sends the negated honest-looking estimate.
pub fn bit_flip(gradient: &[f64]) -> Vec<f64> {
    gradient.iter().map(|g| -g).collect()
}

/// The worker's estimator evaluated on the label-negated problem with an
/// explicit batch. `flipped` must be the label-flipped objective; the
/// worker's cached reference gradient is then the flipped one as well.
pub fn label_flip<O: FiniteSum>(worker: &mut WorkerState, flipped: &O, x: &[f64], batch: &[usize]) -> Vec<f64> {
    worker.estimate_with_batch(flipped, x, batch)
}

fn honest_dim<V: AsRef<[f64]>>(honest: &[V]) -> Result<usize> {
    let d = honest
        .first()
        .ok_or_else(|| Error::invalid("attack needs at least one honest gradient"))?
        .as_ref()
        .len();
    if honest.iter().any(|v| v.as_ref().len() != d) {
        return Err(Error::invalid("honest gradients differ in dimension"));
    }
    Ok(d)
}

/// `μ − z·σ` per coordinate, with the population standard deviation.
pub fn alie<V: AsRef<[f64]>>(honest: &[V], z: f64) -> Result<Vec<f64>> {
    let d = honest_dim(honest)?;
    let g = honest.len() as f64;
    let mut mean = vec![0.0; d];
    for v in honest {
        mean.iter_mut().zip(v.as_ref()).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= g);
    let mut var = vec![0.0; d];
    for v in honest {
        var.iter_mut()
            .zip(v.as_ref().iter().zip(&mean))
            .for_each(|(s, (x, m))| *s += (x - m) * (x - m));
    }
    Ok(mean.iter().zip(&var).map(|(m, s)| m - z * (s / g).sqrt()).collect())
}

/// `−ε · mean(honest)`.
pub fn ipm<V: AsRef<[f64]>>(honest: &[V], eps: f64) -> Result<Vec<f64>> {
    let d = honest_dim(honest)?;
    let mut out = vec![0.0; d];
    for v in honest {
        out.iter_mut().zip(v.as_ref()).for_each(|(o, x)| *o += x);
    }
    let scale = -eps / honest.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}
