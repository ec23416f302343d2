//! Exact Bayesian filtering over a finite hidden state.
//!
//! An episode starts by correcting the prior `D` against the first
//! observation, then alternates act, predict, observe, correct. Timesteps are
//! episode-relative and advance on each prediction.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GenerativeModel, TransitionModel};
use crate::prob::Dist;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub dist: Dist,
    pub timestep: usize,
}

impl Belief {
    pub fn new(dist: Dist) -> Self {
        Self { dist, timestep: 0 }
    }

    pub fn at(dist: Dist, timestep: usize) -> Self {
        Self { dist, timestep }
    }
}

/// `out[s'] = sum_s P(s' | s, a) q[s]`.
pub fn predict(q: &Belief, action: usize, b: &TransitionModel) -> Result<Belief> {
    if action >= b.num_actions() {
        return Err(Error::ActionOutOfRange {
            action,
            num_actions: b.num_actions(),
        });
    }
    Ok(Belief {
        dist: propagate(&q.dist, b.table(action)),
        timestep: q.timestep + 1,
    })
}

/// Multiplies a column-stochastic table into a distribution.
pub(crate) fn propagate(q: &Dist, table: &Array2<f64>) -> Dist {
    let out = table.dot(&ArrayView1::from(q.weights()));
    // Column-stochastic tables preserve mass up to rounding; renormalize the
    // drift so long rollouts stay on the simplex.
    let total = out.sum();
    Dist::from_normalized(out.iter().map(|x| x / total).collect())
}

/// `out[s] ∝ P(o | s) q[s]`.
pub fn correct(q: &Belief, observation: usize, likelihood: &Array2<f64>) -> Result<Belief> {
    correct_with_evidence(q, observation, likelihood).map(|(b, _)| b)
}

/// Corrected belief together with the evidence `P(o) = sum_s P(o | s) q[s]`.
pub fn correct_with_evidence(q: &Belief, observation: usize, likelihood: &Array2<f64>) -> Result<(Belief, f64)> {
    if observation >= likelihood.nrows() {
        return Err(Error::ObservationOutOfRange {
            observation,
            num_obs: likelihood.nrows(),
        });
    }
    let row = likelihood.row(observation);
    let joint: Vec<f64> = row.iter().zip(q.dist.iter()).map(|(l, p)| l * p).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence <= 0.0 {
        return Err(Error::ImpossibleObservation {
            observation,
            step: q.timestep,
        });
    }
    let dist = Dist::from_normalized(joint.into_iter().map(|x| x / evidence).collect());
    Ok((
        Belief {
            dist,
            timestep: q.timestep,
        },
        evidence,
    ))
}

/// Runs a whole history through the filter: `observations[0]` corrects `D`,
/// then each `actions[i]` is predicted and `observations[i + 1]` corrected.
pub fn filter(prior: &Dist, actions: &[usize], observations: &[usize], m: &GenerativeModel) -> Result<Belief> {
    if observations.len() != actions.len() + 1 {
        return Err(Error::HistoryMismatch {
            actions: actions.len(),
            observations: observations.len(),
        });
    }
    let mut q = correct(&Belief::new(prior.clone()), observations[0], m.a.table(None))?;
    for (&a, &o) in actions.iter().zip(&observations[1..]) {
        q = predict(&q, a, &m.b)?;
        q = correct(&q, o, m.a.table(Some(a)))?;
    }
    Ok(q)
}
