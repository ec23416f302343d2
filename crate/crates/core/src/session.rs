//! Live number-entry sessions driven by a human's answers.
//!
//! A [`SessionStore`] owns independent sessions. Each session wraps the same
//! agent and model as the offline number-entry episode; the human's bit
//! optionally passes through a simulated noisy channel before the agent sees
//! it. Every session keeps an ordered event log that is a pure function of
//! its configuration and the answers received, so a client can rebuild its
//! view by replaying the log. Whether the channel flipped an answer is only
//! written to the log once the agent has committed.
//!
//! Time is passed in explicitly so expiry can be tested without sleeping.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{Agent, AgentConfig, EpisodeTrace};
use crate::error::Error;
use crate::number_entry::{
    build_model, plan_config, EntryAction, EntryLayout, NumberEntryConfig, OBS_ABOVE, OBS_BELOW, OBS_COMMITTED,
};
use crate::planning::{PolicySet, GREEDY_PRECISION};
use crate::prob::{entropy, stream_rng, Dist, SimRng};

/// Must match the channel stream of the offline environment so that a session
/// fed truthful answers replays an offline episode exactly.
const CHANNEL_STREAM: u64 = 1;

/// Overrides accepted when creating a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SessionConfig {
    pub n: usize,
    /// Probability of flipping each of the human's answers.
    pub epsilon: f64,
    pub epsilon_grid: Vec<f64>,
    pub preference_strength: f64,
    pub wrong_mass: f64,
    pub horizon: usize,
    pub precision: f64,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            n: 16,
            epsilon: 0.0,
            epsilon_grid: vec![0.0],
            preference_strength: 0.95,
            wrong_mass: 0.0,
            horizon: 1,
            precision: GREEDY_PRECISION,
            seed: 0,
        }
    }
}

impl SessionConfig {
    pub fn entry_config(&self) -> NumberEntryConfig {
        NumberEntryConfig {
            n: self.n,
            epsilon_true: self.epsilon,
            epsilon_grid: self.epsilon_grid.clone(),
            preference_strength: self.preference_strength,
            wrong_mass: self.wrong_mass,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// A response arrived and the agent is working on it.
    AwaitingResponse,
    /// A query is outstanding.
    Querying,
    Committed,
    Aborted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefSnapshot {
    /// Posterior over the numbers `0..N`.
    pub dist: Vec<f64>,
    pub entropy: f64,
}

/// Best policy starting with `action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfeEntry {
    pub action: EntryAction,
    pub value: f64,
    pub info_gain: f64,
    pub pragmatic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Created {
        config: SessionConfig,
    },
    Query {
        cutpoint: usize,
    },
    /// The bit as sent by the human, 1 for above.
    Response {
        bit: u8,
    },
    Belief(BeliefSnapshot),
    Efe {
        entries: Vec<EfeEntry>,
    },
    Commit {
        n: usize,
    },
    /// One per response, in order, after the commit.
    Flipped {
        flipped: bool,
    },
    Aborted {
        reason: String,
    },
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session is {0:?}")]
    WrongPhase(Phase),
    #[error("session expired")]
    Gone,
    #[error("session limit of {0} reached")]
    Capacity(usize),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Engine(#[from] Error),
}

impl SessionError {
    /// Stable machine-readable code for wire errors.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "unknown_session",
            SessionError::WrongPhase(_) => "wrong_phase",
            SessionError::Gone => "gone",
            SessionError::Capacity(_) => "capacity",
            SessionError::InvalidConfig(_) => "invalid_config",
            SessionError::Engine(_) => "engine",
        }
    }
}

/// What the agent did after an answer (or at creation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Next {
    Query { cutpoint: usize },
    Commit { n: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub next: Next,
    pub belief: BeliefSnapshot,
    pub efe: Vec<EfeEntry>,
}

pub struct Session {
    config: SessionConfig,
    layout: EntryLayout,
    agent: Agent,
    channel: SimRng,
    phase: Phase,
    flips: Vec<bool>,
    events: Vec<Event>,
    last_activity: Instant,
}

impl Session {
    /// Builds the agent and lets it pick the opening query.
    pub fn new(config: SessionConfig, now: Instant) -> Result<(Self, StepReport), SessionError> {
        let entry = config.entry_config();
        let model = build_model(&entry).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let agent = Agent::new(
            model,
            AgentConfig {
                plan: plan_config(config.horizon, config.precision),
                seed: config.seed,
                ..AgentConfig::default()
            },
        )
        .map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        let mut s = Self {
            layout: entry.layout(),
            channel: stream_rng(config.seed, CHANNEL_STREAM),
            config: config.clone(),
            agent,
            phase: Phase::AwaitingResponse,
            flips: Vec::new(),
            events: vec![Event::Created { config }],
            last_activity: now,
        };
        let report = s.advance(OBS_COMMITTED)?;
        Ok((s, report))
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn trace(&self) -> &EpisodeTrace {
        self.agent.trace()
    }

    /// Feeds the human's bit (1 = above) to the agent.
    pub fn respond(&mut self, bit: u8, now: Instant) -> Result<StepReport, SessionError> {
        if self.phase != Phase::Querying {
            return Err(SessionError::WrongPhase(self.phase));
        }
        if bit > 1 {
            return Err(SessionError::InvalidConfig(format!("bit must be 0 or 1, got {bit}")));
        }
        self.last_activity = now;
        self.phase = Phase::AwaitingResponse;
        // one draw per answer, as the offline channel does
        let u: f64 = self.channel.random();
        let flipped = u < self.config.epsilon;
        self.flips.push(flipped);
        self.events.push(Event::Response { bit });
        let heard = if (bit == 1) != flipped { OBS_ABOVE } else { OBS_BELOW };
        self.advance(heard)
    }

    fn advance(&mut self, obs: usize) -> Result<StepReport, SessionError> {
        let (action, set) = match self.agent.step_detailed(obs) {
            Ok(x) => x,
            Err(e) => {
                self.abort_with(format!("engine error: {e}"));
                return Err(e.into());
            }
        };
        let posterior = &self.agent.trace().steps.last().expect("just stepped").posterior;
        let belief = self.snapshot(posterior);
        let efe = self.efe_entries(&set);
        self.events.push(Event::Belief(belief.clone()));
        self.events.push(Event::Efe { entries: efe.clone() });
        let next = match self.layout.action(action) {
            EntryAction::Ask(cutpoint) => {
                self.phase = Phase::Querying;
                self.events.push(Event::Query { cutpoint });
                Next::Query { cutpoint }
            }
            EntryAction::Commit(n) => {
                self.phase = Phase::Committed;
                self.events.push(Event::Commit { n });
                for &flipped in &self.flips {
                    self.events.push(Event::Flipped { flipped });
                }
                Next::Commit { n }
            }
        };
        Ok(StepReport { next, belief, efe })
    }

    fn snapshot(&self, posterior: &Dist) -> BeliefSnapshot {
        let dist = self
            .layout
            .target_marginal(posterior)
            .unwrap_or_else(|| Dist::uniform(self.layout.n));
        BeliefSnapshot {
            entropy: entropy(&dist),
            dist: dist.into_weights(),
        }
    }

    fn efe_entries(&self, set: &PolicySet) -> Vec<EfeEntry> {
        set.best_per_first_action()
            .into_iter()
            .map(|(a, i)| {
                let b = &set.breakdowns[i];
                EfeEntry {
                    action: self.layout.action(a),
                    value: b.efe,
                    info_gain: b.total_info_gain(),
                    pragmatic: b.total_pragmatic_value(),
                }
            })
            .collect()
    }

    fn abort_with(&mut self, reason: String) {
        self.phase = Phase::Aborted;
        self.events.push(Event::Aborted { reason });
    }

    /// Ends a live session.
    pub fn abort(&mut self, reason: &str) -> Result<(), SessionError> {
        match self.phase {
            Phase::Querying | Phase::AwaitingResponse => {
                self.abort_with(reason.to_string());
                Ok(())
            }
            other => Err(SessionError::WrongPhase(other)),
        }
    }
}

/// Reconstructs the agent's observation sequence from a completed log:
/// the opening observation, then each answer as the agent heard it.
pub fn observations_from_events(events: &[Event]) -> Vec<usize> {
    let bits: Vec<u8> = events
        .iter()
        .filter_map(|e| match e {
            Event::Response { bit } => Some(*bit),
            _ => None,
        })
        .collect();
    let flips: Vec<bool> = events
        .iter()
        .filter_map(|e| match e {
            Event::Flipped { flipped } => Some(*flipped),
            _ => None,
        })
        .collect();
    let mut obs = vec![OBS_COMMITTED];
    for (i, &bit) in bits.iter().enumerate() {
        let flipped = flips.get(i).copied().unwrap_or(false);
        obs.push(if (bit == 1) != flipped { OBS_ABOVE } else { OBS_BELOW });
    }
    obs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreConfig {
    /// Idle time after which a live session is aborted.
    pub ttl_secs: u64,
    pub max_sessions: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            ttl_secs: 600,
            max_sessions: 256,
        }
    }
}

/// In-memory sessions keyed by opaque id.
pub struct SessionStore {
    cfg: StoreConfig,
    sessions: HashMap<String, Session>,
}

impl SessionStore {
    pub fn new(cfg: StoreConfig) -> Self {
        Self {
            cfg,
            sessions: HashMap::new(),
        }
    }

    fn ttl(&self) -> Duration {
        Duration::from_secs(self.cfg.ttl_secs)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Aborts sessions idle past the TTL and forgets those idle past twice
    /// the TTL, so an expired id answers `Gone` for a while before becoming
    /// unknown.
    pub fn sweep(&mut self, now: Instant) {
        let ttl = self.ttl();
        for s in self.sessions.values_mut() {
            let idle = now.saturating_duration_since(s.last_activity);
            if idle > ttl && matches!(s.phase, Phase::Querying | Phase::AwaitingResponse) {
                s.abort_with("expired".into());
            }
        }
        self.sessions
            .retain(|_, s| now.saturating_duration_since(s.last_activity) <= 2 * ttl);
    }

    pub fn create(&mut self, config: SessionConfig, now: Instant) -> Result<(String, StepReport), SessionError> {
        self.sweep(now);
        if self.sessions.len() >= self.cfg.max_sessions {
            return Err(SessionError::Capacity(self.cfg.max_sessions));
        }
        let (session, report) = Session::new(config, now)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.sessions.insert(id.clone(), session);
        Ok((id, report))
    }

    fn live(&mut self, id: &str, now: Instant) -> Result<&mut Session, SessionError> {
        self.sweep(now);
        let s = self
            .sessions
            .get_mut(id)
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))?;
        if matches!(s.events.last(), Some(Event::Aborted { reason }) if reason == "expired") {
            return Err(SessionError::Gone);
        }
        Ok(s)
    }

    pub fn respond(&mut self, id: &str, bit: u8, now: Instant) -> Result<StepReport, SessionError> {
        self.live(id, now)?.respond(bit, now)
    }

    pub fn abort(&mut self, id: &str, reason: &str, now: Instant) -> Result<(), SessionError> {
        self.live(id, now)?.abort(reason)
    }

    pub fn events(&mut self, id: &str, now: Instant) -> Result<Vec<Event>, SessionError> {
        self.sweep(now);
        self.sessions
            .get(id)
            .map(|s| s.events.clone())
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn get(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }
}
