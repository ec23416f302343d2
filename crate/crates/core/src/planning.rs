//! Policy enumeration, hypothetical rollouts and expected free energy.
//!
//! A policy is a fixed-length action sequence. Hypothetical beliefs along a
//! policy are produced by prediction alone: imagined observations are never
//! folded back into the rollout, they only enter through the expected
//! information gain of each step. Every per-step score is averaged over the
//! horizon.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{correct, predict, propagate, Belief};
use crate::model::{GenerativeModel, PreferenceMode};
use crate::prob::{expected_log, kl, sample_index, softmax_neg, Dist};

/// Precision at or above which selection becomes a deterministic argmin.
pub const GREEDY_PRECISION: f64 = 1e6;

/// Relative tolerance under which two scores count as tied.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    pub actions: Vec<usize>,
}

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self { actions }
    }

    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    pub fn first(&self) -> usize {
        self.actions[0]
    }
}

/// Which decomposition of the expected free energy scores a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EfeForm {
    /// `-info_gain - E_{P(o)}[ln P^c(o)]`, preferences over observations.
    Observation,
    /// `KL(Q(s) || P^c(s)) + E_Q[H[P(o|s)]]`, preferences over states.
    RiskAmbiguity,
    /// `-info_gain - E_Q[ln P^c(s)]`: the information gain of the
    /// observation form with the pragmatic value taken as the cross-entropy
    /// of the hypothetical state belief against state preferences. Unlike
    /// risk plus ambiguity it rewards queries that split the belief even
    /// when the sensor is noiseless.
    EpistemicState,
}

impl EfeForm {
    pub fn for_mode(mode: PreferenceMode) -> Self {
        match mode {
            PreferenceMode::Observations => EfeForm::Observation,
            PreferenceMode::States => EfeForm::RiskAmbiguity,
        }
    }

    pub fn preference_mode(self) -> PreferenceMode {
        match self {
            EfeForm::Observation => PreferenceMode::Observations,
            EfeForm::RiskAmbiguity | EfeForm::EpistemicState => PreferenceMode::States,
        }
    }

    fn name(self) -> &'static str {
        match self {
            EfeForm::Observation => "observation",
            EfeForm::RiskAmbiguity => "risk-ambiguity",
            EfeForm::EpistemicState => "epistemic-state",
        }
    }

    fn check(self, m: &GenerativeModel) -> Result<()> {
        if m.c.mode == self.preference_mode() {
            Ok(())
        } else {
            Err(Error::ModeMismatch {
                form: self.name(),
                expected: self.preference_mode().as_str(),
            })
        }
    }
}

/// Per-step terms of one policy's expected free energy.
///
/// `info_gain` and `pragmatic_value` are filled for the observation and
/// epistemic-state forms; `risk` and `ambiguity` for the risk-ambiguity form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfeBreakdown {
    pub form: EfeForm,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info_gain: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pragmatic_value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub risk: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambiguity: Vec<f64>,
    pub efe: f64,
}

impl EfeBreakdown {
    fn empty(form: EfeForm, horizon: usize) -> Self {
        let cap = |used: bool| Vec::with_capacity(if used { horizon } else { 0 });
        let epistemic = form != EfeForm::RiskAmbiguity;
        Self {
            form,
            info_gain: cap(epistemic),
            pragmatic_value: cap(epistemic),
            risk: cap(!epistemic),
            ambiguity: cap(!epistemic),
            efe: 0.0,
        }
    }

    fn push(&mut self, step: StepTerms) {
        match step {
            StepTerms::Epistemic { info_gain, pragmatic } => {
                self.info_gain.push(info_gain);
                self.pragmatic_value.push(pragmatic);
            }
            StepTerms::RiskAmbiguity { risk, ambiguity } => {
                self.risk.push(risk);
                self.ambiguity.push(ambiguity);
            }
        }
    }

    fn pop(&mut self) {
        if self.form == EfeForm::RiskAmbiguity {
            self.risk.pop();
            self.ambiguity.pop();
        } else {
            self.info_gain.pop();
            self.pragmatic_value.pop();
        }
    }

    pub fn horizon(&self) -> usize {
        self.info_gain.len().max(self.risk.len())
    }

    /// Score of step `k` before averaging.
    pub fn step_score(&self, k: usize) -> f64 {
        if self.form == EfeForm::RiskAmbiguity {
            self.risk[k] + self.ambiguity[k]
        } else {
            -self.info_gain[k] - self.pragmatic_value[k]
        }
    }

    fn finish(mut self) -> Self {
        let t = self.horizon();
        self.efe = (0..t).map(|k| self.step_score(k)).sum::<f64>() / t as f64;
        self
    }

    pub fn total_info_gain(&self) -> f64 {
        self.info_gain.iter().sum()
    }

    pub fn total_pragmatic_value(&self) -> f64 {
        self.pragmatic_value.iter().sum()
    }
}

#[derive(Clone, Copy, Debug)]
enum StepTerms {
    Epistemic { info_gain: f64, pragmatic: f64 },
    RiskAmbiguity { risk: f64, ambiguity: f64 },
}

/// Scored policies and the distribution over them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySet {
    pub policies: Vec<Policy>,
    pub efes: Vec<f64>,
    pub breakdowns: Vec<EfeBreakdown>,
    pub dist: Dist,
    /// Index of the policy that was selected.
    pub chosen: usize,
}

impl PolicySet {
    pub fn chosen_policy(&self) -> &Policy {
        &self.policies[self.chosen]
    }

    pub fn chosen_breakdown(&self) -> &EfeBreakdown {
        &self.breakdowns[self.chosen]
    }

    /// For every distinct first action, the lowest-EFE policy starting with
    /// it (lowest index on ties), in action order.
    pub fn best_per_first_action(&self) -> Vec<(usize, usize)> {
        let mut best: Vec<(usize, usize)> = Vec::new();
        for (i, p) in self.policies.iter().enumerate() {
            let a = p.first();
            match best.iter_mut().find(|(act, _)| *act == a) {
                Some(entry) if self.efes[i] < self.efes[entry.1] => entry.1 = i,
                Some(_) => {}
                None => best.push((a, i)),
            }
        }
        best.sort_by_key(|&(a, _)| a);
        best
    }

    /// Probability of each first action under the policy distribution.
    pub fn action_marginal(&self, num_actions: usize) -> Dist {
        let mut w = vec![0.0; num_actions];
        for (p, &pr) in self.policies.iter().zip(self.dist.iter()) {
            w[p.first()] += pr;
        }
        Dist::new(w).expect("policy distribution has mass")
    }
}

/// Planning parameters shared by every agent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub horizon: usize,
    /// Softmax precision over negative EFE. Values at or above
    /// [`GREEDY_PRECISION`] select the argmin directly.
    pub precision: f64,
    pub policy_budget: usize,
    /// Overrides the form implied by the model's preference mode.
    pub form: Option<EfeForm>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            horizon: 1,
            precision: 1.0,
            policy_budget: 10_000,
            form: None,
        }
    }
}

impl PlanConfig {
    pub fn greedy(horizon: usize) -> Self {
        Self {
            horizon,
            precision: GREEDY_PRECISION,
            ..Self::default()
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.precision >= GREEDY_PRECISION
    }

    pub fn form_for(&self, m: &GenerativeModel) -> EfeForm {
        self.form.unwrap_or_else(|| EfeForm::for_mode(m.c.mode))
    }
}

fn policy_count(num_actions: usize, horizon: usize, budget: usize) -> Result<usize> {
    if horizon == 0 {
        return Err(Error::ZeroHorizon);
    }
    let count = (num_actions as u128).checked_pow(horizon as u32).unwrap_or(u128::MAX);
    if count > budget as u128 {
        return Err(Error::BudgetExceeded { count, budget });
    }
    Ok(count as usize)
}

/// All `num_actions^horizon` action sequences in lexicographic order.
pub fn enumerate_policies(num_actions: usize, horizon: usize, budget: usize) -> Result<Vec<Policy>> {
    let count = policy_count(num_actions, horizon, budget)?;
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; horizon];
    for _ in 0..count {
        out.push(Policy::new(current.clone()));
        // odometer increment, last position fastest
        for pos in (0..horizon).rev() {
            current[pos] += 1;
            if current[pos] < num_actions {
                break;
            }
            current[pos] = 0;
        }
    }
    Ok(out)
}

/// Hypothetical beliefs `q_1..q_T` along `policy`, prediction only.
pub fn rollout_beliefs(q: &Belief, policy: &Policy, m: &GenerativeModel) -> Result<Vec<Belief>> {
    let mut out = Vec::with_capacity(policy.horizon());
    let mut cur = q.clone();
    for &a in &policy.actions {
        cur = predict(&cur, a, &m.b)?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// `sum_o P(o) KL(Q(s|o) || Q(s))` with `P(o) = sum_s P(o|s) Q(s)`.
pub fn expected_information_gain(q: &Belief, likelihood: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for o in 0..likelihood.nrows() {
        let p_o: f64 = likelihood.row(o).iter().zip(q.dist.iter()).map(|(l, p)| l * p).sum();
        if p_o <= 0.0 {
            continue;
        }
        let post = correct(q, o, likelihood).expect("evidence checked positive");
        total += p_o * kl(&post.dist, &q.dist).expect("same length");
    }
    total
}

/// Predicted observation distribution `P(o) = sum_s P(o|s) Q(s)`.
pub fn predicted_observations(q: &Belief, likelihood: &Array2<f64>) -> Dist {
    propagate(&q.dist, likelihood)
}

/// `E_{P(o)}[ln P^c(o)]`.
pub fn pragmatic_value_obs(q: &Belief, likelihood: &Array2<f64>, pref: &Dist) -> f64 {
    expected_log(&predicted_observations(q, likelihood), pref).expect("preference length checked")
}

/// `sum_s Q(s) H[P(o|s)]`: expected conditional entropy of the observation.
pub fn ambiguity(q: &Belief, likelihood: &Array2<f64>) -> f64 {
    q.dist
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(s, &p)| p * column_entropy(likelihood, s))
        .sum()
}

fn column_entropy(t: &Array2<f64>, col: usize) -> f64 {
    -t.column(col)
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Terms for one hypothetical belief `q` reached by `action` at absolute
/// time `q.timestep`.
fn step_terms(q: &Belief, action: usize, m: &GenerativeModel, form: EfeForm) -> StepTerms {
    let likelihood = m.a.table(Some(action));
    let pref = m.c.at(q.timestep);
    match form {
        EfeForm::Observation => StepTerms::Epistemic {
            info_gain: expected_information_gain(q, likelihood),
            pragmatic: pragmatic_value_obs(q, likelihood, pref),
        },
        EfeForm::EpistemicState => StepTerms::Epistemic {
            info_gain: expected_information_gain(q, likelihood),
            pragmatic: expected_log(&q.dist, pref).expect("preference length checked"),
        },
        EfeForm::RiskAmbiguity => StepTerms::RiskAmbiguity {
            risk: kl(&q.dist, pref).expect("preference length checked"),
            ambiguity: ambiguity(q, likelihood),
        },
    }
}

/// Scores one policy with the given form. The hypothetical belief after the
/// `k`-th action is scored against the preference for its own absolute
/// timestep, `t0 + k + 1`.
pub fn efe(q: &Belief, policy: &Policy, m: &GenerativeModel, t0: usize, form: EfeForm) -> Result<EfeBreakdown> {
    form.check(m)?;
    if policy.horizon() == 0 {
        return Err(Error::ZeroHorizon);
    }
    let start = Belief::at(q.dist.clone(), t0);
    let mut out = EfeBreakdown::empty(form, policy.horizon());
    for (qk, &a) in rollout_beliefs(&start, policy, m)?.iter().zip(&policy.actions) {
        out.push(step_terms(qk, a, m, form));
    }
    Ok(out.finish())
}

pub fn efe_observation_form(q: &Belief, policy: &Policy, m: &GenerativeModel, t0: usize) -> Result<EfeBreakdown> {
    efe(q, policy, m, t0, EfeForm::Observation)
}

pub fn efe_state_form(q: &Belief, policy: &Policy, m: &GenerativeModel, t0: usize) -> Result<EfeBreakdown> {
    efe(q, policy, m, t0, EfeForm::RiskAmbiguity)
}

/// Scores every policy of length `horizon` by walking the policy tree
/// depth-first, so shared prefixes are predicted and scored once. Output is
/// in lexicographic policy order and equal to calling [`efe`] per policy.
pub fn score_all_policies(
    q: &Belief,
    m: &GenerativeModel,
    horizon: usize,
    budget: usize,
    form: EfeForm,
) -> Result<(Vec<Policy>, Vec<EfeBreakdown>)> {
    form.check(m)?;
    let count = policy_count(m.num_actions, horizon, budget)?;
    let mut policies = Vec::with_capacity(count);
    let mut breakdowns = Vec::with_capacity(count);
    let mut prefix = Vec::with_capacity(horizon);
    let mut partial = EfeBreakdown::empty(form, horizon);
    walk(
        q,
        m,
        horizon,
        form,
        &mut prefix,
        &mut partial,
        &mut policies,
        &mut breakdowns,
    )?;
    Ok((policies, breakdowns))
}

#[allow(clippy::too_many_arguments)]
fn walk(
    q: &Belief,
    m: &GenerativeModel,
    horizon: usize,
    form: EfeForm,
    prefix: &mut Vec<usize>,
    partial: &mut EfeBreakdown,
    policies: &mut Vec<Policy>,
    breakdowns: &mut Vec<EfeBreakdown>,
) -> Result<()> {
    for a in 0..m.num_actions {
        let next = predict(q, a, &m.b)?;
        prefix.push(a);
        partial.push(step_terms(&next, a, m, form));
        if prefix.len() == horizon {
            policies.push(Policy::new(prefix.clone()));
            breakdowns.push(partial.clone().finish());
        } else {
            walk(&next, m, horizon, form, prefix, partial, policies, breakdowns)?;
        }
        partial.pop();
        prefix.pop();
    }
    Ok(())
}

/// Softmax over negative EFE.
pub fn policy_distribution(efes: &[f64], precision: f64) -> Result<Dist> {
    softmax_neg(efes, precision)
}

/// Lowest index whose score is within [`TIE_TOL`] of the minimum.
pub fn argmin_with_ties(scores: &[f64]) -> usize {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOL * min.abs().max(1.0);
    scores.iter().position(|&s| s - min <= tol).expect("non-empty scores")
}

/// Scores all policies, picks one and returns its first action.
///
/// Below [`GREEDY_PRECISION`] a policy is sampled from the softmax (one draw
/// from `rng`); at or above it the lowest-EFE policy is taken, ties to the
/// lowest policy index, and `rng` is left untouched.
pub fn select_action<R: Rng + ?Sized>(
    q: &Belief,
    m: &GenerativeModel,
    cfg: &PlanConfig,
    rng: &mut R,
) -> Result<(usize, PolicySet)> {
    let form = cfg.form_for(m);
    let (policies, breakdowns) = score_all_policies(q, m, cfg.horizon, cfg.policy_budget, form)?;
    let efes: Vec<f64> = breakdowns.iter().map(|b| b.efe).collect();
    let (chosen, dist) = if cfg.is_greedy() {
        let chosen = argmin_with_ties(&efes);
        let dist = if cfg.precision.is_finite() {
            policy_distribution(&efes, cfg.precision)?
        } else {
            Dist::delta(efes.len(), chosen)
        };
        (chosen, dist)
    } else {
        let dist = policy_distribution(&efes, cfg.precision)?;
        (sample_index(&dist, rng), dist)
    };
    let action = policies[chosen].first();
    Ok((
        action,
        PolicySet {
            policies,
            efes,
            breakdowns,
            dist,
            chosen,
        },
    ))
}
