//! The closed perception-action loop: observe, correct, plan, act, predict.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{correct_with_evidence, predict, Belief};
use crate::model::GenerativeModel;
use crate::planning::{select_action, EfeForm, PlanConfig, Policy, PolicySet};
use crate::prob::{seeded_rng, Dist, SimRng};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub plan: PlanConfig,
    pub seed: u64,
    /// Keep the full per-policy EFE table in every trace step.
    pub diagnostic: bool,
    /// Record wall-clock planning time per step. Off by default so traces
    /// are reproducible byte for byte.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyScore {
    pub policy: Policy,
    pub efe: f64,
    pub prob: f64,
}

/// One completed observe-act cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub prior: Dist,
    pub action: usize,
    pub obs: usize,
    pub posterior: Dist,
    /// `-ln P(obs)` under the prior.
    pub surprise: f64,
    pub policy: Policy,
    pub efe_chosen: f64,
    pub form: EfeForm,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub info_gain: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pragmatic: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub risk: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ambiguity: Vec<f64>,
    /// Entropy of the policy distribution the action was drawn from.
    pub policy_entropy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efe_table: Option<Vec<PolicyScore>>,
    pub ms: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub max_steps_reached: bool,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn cumulative_surprise(&self) -> f64 {
        self.steps.iter().map(|s| s.surprise).sum()
    }

    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }

    pub fn observations(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.obs).collect()
    }

    /// One JSON object per line, one line per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&serde_json::to_string(s).expect("trace step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> std::result::Result<Vec<TraceStep>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }
}

/// What the environment returns after an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Feedback {
    Observation(usize),
    Terminal,
}

pub trait Environment {
    /// Starts an episode and returns the opening observation.
    fn reset(&mut self) -> usize;
    fn act(&mut self, action: usize) -> Feedback;
}

pub struct Agent {
    model: GenerativeModel,
    cfg: AgentConfig,
    belief: Belief,
    rng: SimRng,
    last_action: Option<usize>,
    step: usize,
    trace: EpisodeTrace,
}

impl Agent {
    pub fn new(model: GenerativeModel, cfg: AgentConfig) -> Result<Self> {
        if cfg.plan.horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        if cfg.plan.policy_budget < model.num_actions {
            return Err(Error::InvalidConfig(format!(
                "policy budget {} is below the number of actions {}",
                cfg.plan.policy_budget, model.num_actions
            )));
        }
        Ok(Self {
            belief: Belief::new(model.d.clone()),
            rng: seeded_rng(cfg.seed),
            model,
            cfg,
            last_action: None,
            step: 0,
            trace: EpisodeTrace::default(),
        })
    }

    pub fn model(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn config(&self) -> &AgentConfig {
        &self.cfg
    }

    /// Current belief: the prediction awaiting the next observation.
    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn trace(&self) -> &EpisodeTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> EpisodeTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn last_action(&self) -> Option<usize> {
        self.last_action
    }

    /// Back to the prior `D` with an empty trace. The generator keeps its
    /// position unless `new_seed` is given.
    pub fn reset(&mut self, new_seed: Option<u64>) {
        self.belief = Belief::new(self.model.d.clone());
        self.last_action = None;
        self.step = 0;
        self.trace = EpisodeTrace::default();
        if let Some(seed) = new_seed {
            self.cfg.seed = seed;
            self.rng = seeded_rng(seed);
        }
    }

    /// Corrects the belief with `observation`, plans, predicts through the
    /// chosen action and returns it.
    pub fn step(&mut self, observation: usize) -> Result<usize> {
        self.step_detailed(observation).map(|(a, _)| a)
    }

    /// Like [`Agent::step`], also returning the scored policy set.
    pub fn step_detailed(&mut self, observation: usize) -> Result<(usize, PolicySet)> {
        let started = self.cfg.timing.then(Instant::now);
        let likelihood = self.model.a.table(self.last_action);
        let prior = self.belief.clone();
        let (posterior, evidence) = correct_with_evidence(&prior, observation, likelihood).map_err(|e| match e {
            Error::ImpossibleObservation { observation, .. } => Error::ImpossibleObservation {
                observation,
                step: self.step,
            },
            other => other,
        })?;
        let (action, set) = select_action(&posterior, &self.model, &self.cfg.plan, &mut self.rng)?;
        self.belief = predict(&posterior, action, &self.model.b)?;
        self.last_action = Some(action);

        let chosen = set.chosen_breakdown().clone();
        let efe_table = self.cfg.diagnostic.then(|| {
            set.policies
                .iter()
                .zip(&set.efes)
                .zip(set.dist.iter())
                .map(|((p, &efe), &prob)| PolicyScore {
                    policy: p.clone(),
                    efe,
                    prob,
                })
                .collect()
        });
        self.trace.steps.push(TraceStep {
            t: self.step,
            prior: prior.dist,
            action,
            obs: observation,
            posterior: posterior.dist,
            surprise: -evidence.ln(),
            policy: set.chosen_policy().clone(),
            efe_chosen: chosen.efe,
            form: chosen.form,
            info_gain: chosen.info_gain,
            pragmatic: chosen.pragmatic_value,
            risk: chosen.risk,
            ambiguity: chosen.ambiguity,
            policy_entropy: crate::prob::entropy(&set.dist),
            efe_table,
            ms: started.map_or(0.0, |t| t.elapsed().as_secs_f64() * 1e3),
        });
        self.step += 1;
        Ok((action, set))
    }
}

/// Resets `agent` (keeping its generator position) and runs it against
/// `env` until the environment terminates or `max_steps` actions were taken.
pub fn run_episode<E: Environment + ?Sized>(agent: &mut Agent, env: &mut E, max_steps: usize) -> Result<EpisodeTrace> {
    agent.reset(None);
    if max_steps == 0 {
        return Ok(EpisodeTrace {
            steps: Vec::new(),
            max_steps_reached: true,
        });
    }
    let mut obs = env.reset();
    loop {
        let action = agent.step(obs)?;
        match env.act(action) {
            Feedback::Terminal => break,
            Feedback::Observation(o) => obs = o,
        }
        if agent.steps_taken() >= max_steps {
            agent.trace.max_steps_reached = true;
            break;
        }
    }
    Ok(agent.take_trace())
}
