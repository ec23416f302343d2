//! Two agents acting on one shared ring position.
//!
//! The user holds a hidden goal `g` and the system must work it out from the
//! user's moves. Each round the user moves, then the system moves; a move is
//! left, right or stay on a ring of size `M`.
//!
//! * The user observes `z` exactly, prefers positions close to `g`, and treats
//!   the system's move as a uniform disturbance.
//! * The system's state is `(z, g, m)` with `m` the user's last move. It
//!   observes `(z, m)` and models the user as the user models itself: the
//!   next move follows the user's softmax policy at `partner_precision`.
//!
//! Moves are indexed `left = 0`, `right = 1`, `stay = 2`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig};
use crate::error::{Error, Result};
use crate::inference::Belief;
use crate::model::{GenerativeModel, ObservationModel, PreferenceMode, PreferenceSchedule, TransitionModel};
use crate::planning::{policy_distribution, score_all_policies, EfeForm, PlanConfig};
use crate::prob::{normalize, stream_rng, Dist, SimRng};

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const STAY: usize = 2;
pub const NUM_MOVES: usize = 3;

const START_STREAM: u64 = 3;
const USER_STREAM: u64 = 4;
const SYSTEM_STREAM: u64 = 5;
const RANDOM_STREAM: u64 = 6;

fn shift(z: usize, mv: usize, m: usize) -> usize {
    match mv {
        LEFT => (z + m - 1) % m,
        RIGHT => (z + 1) % m,
        _ => z,
    }
}

fn unshift(z: usize, mv: usize, m: usize) -> usize {
    match mv {
        LEFT => shift(z, RIGHT, m),
        RIGHT => shift(z, LEFT, m),
        _ => z,
    }
}

/// Shortest distance on the ring.
pub fn ring_distance(a: usize, b: usize, m: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(m - d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// Active inference agent with a model of the user.
    Aif,
    /// Uniformly random moves.
    Random,
    /// Never moves.
    Stay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DyadConfig {
    /// Ring size.
    pub m: usize,
    /// User goal; drawn from the seed when absent.
    pub goal: Option<usize>,
    /// Starting position; drawn from the seed when absent.
    pub start: Option<usize>,
    /// Rounds (one user move and one system move each).
    pub max_steps: usize,
    pub seed: u64,
    pub user_plan: PlanConfig,
    pub system_plan: PlanConfig,
    pub system: SystemKind,
    /// Precision the system attributes to the user.
    pub partner_precision: f64,
    /// Log-preference drop per unit of ring distance from the goal.
    pub goal_sharpness: f64,
    /// The system prefers `z = g + misalignment`; 0 means aligned.
    pub misalignment: usize,
}

impl Default for DyadConfig {
    fn default() -> Self {
        Self {
            m: 9,
            goal: None,
            start: None,
            max_steps: 20,
            seed: 0,
            user_plan: PlanConfig {
                form: Some(EfeForm::RiskAmbiguity),
                ..PlanConfig::greedy(1)
            },
            system_plan: PlanConfig {
                form: Some(EfeForm::RiskAmbiguity),
                ..PlanConfig::greedy(1)
            },
            system: SystemKind::Aif,
            partner_precision: 4.0,
            goal_sharpness: 3.0,
            misalignment: 0,
        }
    }
}

impl DyadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.m < 3 {
            return bad(format!("ring size must be at least 3, got {}", self.m));
        }
        if let Some(g) = self.goal.filter(|&g| g >= self.m) {
            return bad(format!("goal {g} outside ring of size {}", self.m));
        }
        if let Some(z) = self.start.filter(|&z| z >= self.m) {
            return bad(format!("start {z} outside ring of size {}", self.m));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if !(self.partner_precision.is_finite() && self.partner_precision > 0.0) {
            return bad(format!(
                "partner_precision must be finite and positive, got {}",
                self.partner_precision
            ));
        }
        if !(self.goal_sharpness.is_finite() && self.goal_sharpness > 0.0) {
            return bad(format!(
                "goal_sharpness must be finite and positive, got {}",
                self.goal_sharpness
            ));
        }
        Ok(())
    }

    /// `(start, goal)`, filling unset values from the seed.
    pub fn resolve_start_goal(&self) -> (usize, usize) {
        let mut rng = stream_rng(self.seed, START_STREAM);
        let z: usize = rng.random_range(0..self.m);
        let g: usize = rng.random_range(0..self.m);
        (self.start.unwrap_or(z), self.goal.unwrap_or(g))
    }

    pub fn aligned(&self) -> bool {
        self.misalignment.is_multiple_of(self.m)
    }

    fn goal_preference(&self, z: usize, target: usize) -> f64 {
        (-self.goal_sharpness * ring_distance(z, target, self.m) as f64).exp()
    }
}

/// The user's model for a given goal: `A` identity over `z`, own move then
/// uniform disturbance in `B`, preferences decaying with distance to `goal`.
pub fn build_user_model(cfg: &DyadConfig, goal: usize) -> Result<GenerativeModel> {
    cfg.validate()?;
    let m = cfg.m;
    let b = (0..NUM_MOVES)
        .map(|mv| {
            let mut t = Array2::zeros((m, m));
            for z in 0..m {
                let moved = shift(z, mv, m);
                for d in 0..NUM_MOVES {
                    t[[shift(moved, d, m), z]] += 1.0 / 3.0;
                }
            }
            t
        })
        .collect();
    let pref = normalize((0..m).map(|z| cfg.goal_preference(z, goal)).collect())?;
    GenerativeModel::new(
        ObservationModel::new(Array2::eye(m)),
        TransitionModel::new(b),
        PreferenceSchedule::stationary(PreferenceMode::States, pref),
        Dist::uniform(m),
    )
}

pub fn build_user_agent(cfg: &DyadConfig, goal: usize) -> Result<Agent> {
    let seed = stream_rng(cfg.seed, USER_STREAM).random();
    Agent::new(
        build_user_model(cfg, goal)?,
        AgentConfig {
            plan: cfg.user_plan.clone(),
            seed,
            ..AgentConfig::default()
        },
    )
}

/// `P(move | z, g)` as the system believes it: the first-action marginal of
/// the user's policy softmax at `partner_precision`. Indexed `[z][g][move]`.
pub fn user_move_likelihood(cfg: &DyadConfig) -> Result<Vec<Vec<[f64; NUM_MOVES]>>> {
    let m = cfg.m;
    let mut out = vec![vec![[0.0; NUM_MOVES]; m]; m];
    for g in 0..m {
        let model = build_user_model(cfg, g)?;
        let form = cfg.user_plan.form_for(&model);
        for (z, row) in out.iter_mut().enumerate() {
            let q = Belief::new(Dist::delta(m, z));
            let (policies, breakdowns) =
                score_all_policies(&q, &model, cfg.user_plan.horizon, cfg.user_plan.policy_budget, form)?;
            let efes: Vec<f64> = breakdowns.iter().map(|b| b.efe).collect();
            let dist = policy_distribution(&efes, cfg.partner_precision)?;
            for (p, &pr) in policies.iter().zip(dist.iter()) {
                row[g][p.first()] += pr;
            }
        }
    }
    Ok(out)
}

/// Index arithmetic for the system's joint state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SystemLayout {
    pub m: usize,
}

impl SystemLayout {
    pub fn state(&self, z: usize, g: usize, mv: usize) -> usize {
        (z * self.m + g) * NUM_MOVES + mv
    }

    pub fn obs(&self, z: usize, mv: usize) -> usize {
        z * NUM_MOVES + mv
    }

    pub fn num_states(&self) -> usize {
        self.m * self.m * NUM_MOVES
    }

    /// Marginal over the user's goal.
    pub fn goal_marginal(&self, belief: &Dist) -> Dist {
        let mut w = vec![0.0; self.m];
        for z in 0..self.m {
            for (g, wg) in w.iter_mut().enumerate() {
                for mv in 0..NUM_MOVES {
                    *wg += belief[self.state(z, g, mv)];
                }
            }
        }
        Dist::new(w).expect("belief has mass")
    }
}

pub fn build_system_model(cfg: &DyadConfig) -> Result<GenerativeModel> {
    cfg.validate()?;
    let m = cfg.m;
    let lay = SystemLayout { m };
    let ns = lay.num_states();
    let lik = user_move_likelihood(cfg)?;

    let mut a = Array2::zeros((m * NUM_MOVES, ns));
    let mut c = vec![0.0; ns];
    let mut d = vec![0.0; ns];
    for z in 0..m {
        for g in 0..m {
            for mv in 0..NUM_MOVES {
                let s = lay.state(z, g, mv);
                a[[lay.obs(z, mv), s]] = 1.0;
                c[s] = cfg.goal_preference(z, (g + cfg.misalignment) % m);
                // the user has made one move from an unknown start
                let before = unshift(z, mv, m);
                d[s] = lik[before][g][mv];
            }
        }
    }
    let b = (0..NUM_MOVES)
        .map(|act| {
            let mut t = Array2::zeros((ns, ns));
            for z in 0..m {
                let moved = shift(z, act, m);
                for g in 0..m {
                    for reply in 0..NUM_MOVES {
                        let to = lay.state(shift(moved, reply, m), g, reply);
                        let p = lik[moved][g][reply];
                        for prev in 0..NUM_MOVES {
                            t[[to, lay.state(z, g, prev)]] += p;
                        }
                    }
                }
            }
            t
        })
        .collect();
    GenerativeModel::new(
        ObservationModel::new(a),
        TransitionModel::new(b),
        PreferenceSchedule::stationary(PreferenceMode::States, normalize(c)?),
        normalize(d)?,
    )
}

pub fn build_system_agent(cfg: &DyadConfig) -> Result<Agent> {
    let seed = stream_rng(cfg.seed, SYSTEM_STREAM).random();
    Agent::new(
        build_system_model(cfg)?,
        AgentConfig {
            plan: cfg.system_plan.clone(),
            seed,
            ..AgentConfig::default()
        },
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    System,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadStep {
    pub round: usize,
    pub side: Side,
    pub z_before: usize,
    pub action: usize,
    pub z_after: usize,
    /// User: posterior over `z`. System: posterior over the goal.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief: Option<Dist>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub surprise: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DyadTrace {
    pub steps: Vec<DyadStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadSummary {
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    pub g: usize,
    pub aligned: bool,
    /// First round after which `z = g` (0 if it starts there, `max_steps + 1`
    /// if never).
    pub steps_to_goal: usize,
    /// Fraction of the last quarter of rounds ending with `z = g`.
    pub frac_goal_q4: f64,
    pub surprise_user: f64,
    /// Absent for the stub systems.
    pub surprise_system: Option<f64>,
}

enum SystemSide {
    Aif(Box<Agent>),
    Random(Box<SimRng>),
    Stay,
}

impl SystemSide {
    fn act(&mut self, lay: SystemLayout, z: usize, user_move: usize) -> Result<(usize, Option<Dist>, Option<f64>)> {
        match self {
            SystemSide::Aif(agent) => {
                let a = agent.step(lay.obs(z, user_move))?;
                let last = agent.trace().steps.last().expect("just stepped");
                Ok((a, Some(lay.goal_marginal(&last.posterior)), Some(last.surprise)))
            }
            SystemSide::Random(rng) => Ok((rng.random_range(0..NUM_MOVES), None, None)),
            SystemSide::Stay => Ok((STAY, None, None)),
        }
    }
}

/// Plays `cfg.max_steps` rounds and summarizes them.
pub fn run_dyad(cfg: &DyadConfig) -> Result<(DyadTrace, DyadSummary)> {
    cfg.validate()?;
    let (start, goal) = cfg.resolve_start_goal();
    let lay = SystemLayout { m: cfg.m };
    let mut user = build_user_agent(cfg, goal)?;
    let mut system = match cfg.system {
        SystemKind::Aif => SystemSide::Aif(Box::new(build_system_agent(cfg)?)),
        SystemKind::Random => SystemSide::Random(Box::new(stream_rng(cfg.seed, RANDOM_STREAM))),
        SystemKind::Stay => SystemSide::Stay,
    };

    let mut trace = DyadTrace::default();
    let mut z = start;
    let mut reached = (z == goal).then_some(0);
    let mut at_goal = Vec::with_capacity(cfg.max_steps);
    for round in 1..=cfg.max_steps {
        let mv = user.step(z)?;
        let last = user.trace().steps.last().expect("just stepped");
        let (belief, surprise) = (last.posterior.clone(), last.surprise);
        let next = shift(z, mv, cfg.m);
        trace.steps.push(DyadStep {
            round,
            side: Side::User,
            z_before: z,
            action: mv,
            z_after: next,
            belief: Some(belief),
            surprise: Some(surprise),
        });
        z = next;
        if z == goal {
            reached.get_or_insert(round);
        }

        let (act, belief, surprise) = system.act(lay, z, mv)?;
        let next = shift(z, act, cfg.m);
        trace.steps.push(DyadStep {
            round,
            side: Side::System,
            z_before: z,
            action: act,
            z_after: next,
            belief,
            surprise,
        });
        z = next;
        if z == goal {
            reached.get_or_insert(round);
        }
        at_goal.push(z == goal);
    }

    let quarter = cfg.max_steps.div_ceil(4);
    let tail = &at_goal[cfg.max_steps - quarter..];
    let mean_surprise = |side: Side| -> Option<f64> {
        let s: Vec<f64> = trace
            .steps
            .iter()
            .filter(|st| st.side == side)
            .filter_map(|st| st.surprise)
            .collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    };
    let summary = DyadSummary {
        seed: cfg.seed,
        m: cfg.m,
        g: goal,
        aligned: cfg.aligned(),
        steps_to_goal: reached.unwrap_or(cfg.max_steps + 1),
        frac_goal_q4: tail.iter().filter(|&&b| b).count() as f64 / quarter as f64,
        surprise_user: mean_surprise(Side::User).unwrap_or(0.0),
        surprise_system: mean_surprise(Side::System),
    };
    Ok((trace, summary))
}
