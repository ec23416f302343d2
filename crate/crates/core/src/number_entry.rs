//! Number entry over a corrupted binary channel.
//!
//! The agent shows a cutpoint `c` and the user answers whether their number
//! is above (`n >= c`) or below it; the answer is flipped with probability
//! `epsilon_true`. The agent reasons jointly over the target and a grid of
//! channel noise levels, and ends the episode with an explicit commit.
//!
//! Layout of the generative model:
//!
//! * states: live `(n, e)` at index `n * grid_len + e`, then `DONE_CORRECT`,
//!   then `DONE_WRONG`;
//! * actions: `ask(c)` for `c = 1..N-1` at index `c - 1`, then `commit(n)`
//!   at index `N - 1 + n`;
//! * observations: below, above, committed.
//!
//! Asking leaves the state untouched; committing moves every live state to
//! one of the two absorbing DONE states. The observation tables depend on the
//! action just taken. The opening observation of an episode is `committed`,
//! which every state emits with probability one before any cutpoint has been
//! shown, so it carries no information.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, Agent, AgentConfig, Environment, EpisodeTrace, Feedback};
use crate::error::{Error, Result};
use crate::model::{GenerativeModel, ObservationModel, PreferenceMode, PreferenceSchedule, TransitionModel};
use crate::planning::{EfeForm, PlanConfig, TIE_TOL};
use crate::prob::{normalize, stream_rng, Dist, SimRng};

pub const OBS_BELOW: usize = 0;
pub const OBS_ABOVE: usize = 1;
pub const OBS_COMMITTED: usize = 2;

const ENV_STREAM: u64 = 1;
const TARGET_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumberEntryConfig {
    /// Count of selectable numbers, `0..n`.
    pub n: usize,
    /// Bit-flip probability of the simulated channel.
    pub epsilon_true: f64,
    /// Noise levels the agent reasons over, ascending and distinct.
    pub epsilon_grid: Vec<f64>,
    /// Preference mass on committing to the right number.
    pub preference_strength: f64,
    /// Preference mass on committing to a wrong number (floored if zero).
    pub wrong_mass: f64,
    pub seed: u64,
}

impl Default for NumberEntryConfig {
    fn default() -> Self {
        Self {
            n: 16,
            epsilon_true: 0.2,
            epsilon_grid: vec![0.0, 0.1, 0.2, 0.3],
            preference_strength: 0.95,
            wrong_mass: 0.0,
            seed: 0,
        }
    }
}

impl NumberEntryConfig {
    /// Noiseless channel that the agent knows to be noiseless.
    pub fn noiseless(n: usize) -> Self {
        Self {
            n,
            epsilon_true: 0.0,
            epsilon_grid: vec![0.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.epsilon_grid.is_empty() {
            return Err(Error::GridEmpty);
        }
        let in_range = |e: f64| (0.0..0.5).contains(&e);
        if !in_range(self.epsilon_true) {
            return bad(format!("epsilon_true {} outside [0, 0.5)", self.epsilon_true));
        }
        if let Some(e) = self.epsilon_grid.iter().find(|&&e| !in_range(e)) {
            return bad(format!("grid value {e} outside [0, 0.5)"));
        }
        if self.epsilon_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("epsilon grid must be strictly ascending".into());
        }
        if !(self.preference_strength > 0.0 && self.wrong_mass >= 0.0)
            || self.preference_strength + self.wrong_mass >= 1.0
        {
            return bad(format!(
                "need preference_strength > 0, wrong_mass >= 0 and their sum < 1 (got {} and {})",
                self.preference_strength, self.wrong_mass
            ));
        }
        Ok(())
    }

    fn grid_len(&self) -> usize {
        self.epsilon_grid.len()
    }

    pub fn layout(&self) -> EntryLayout {
        EntryLayout {
            n: self.n,
            grid_len: self.epsilon_grid.len(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum EntryAction {
    Ask(usize),
    Commit(usize),
}

/// Index arithmetic for the number-entry model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntryLayout {
    pub n: usize,
    pub grid_len: usize,
}

impl EntryLayout {
    pub fn num_live(&self) -> usize {
        self.n * self.grid_len
    }

    pub fn num_states(&self) -> usize {
        self.num_live() + 2
    }

    pub fn num_actions(&self) -> usize {
        2 * self.n - 1
    }

    pub fn live(&self, target: usize, eps_index: usize) -> usize {
        target * self.grid_len + eps_index
    }

    pub fn done_correct(&self) -> usize {
        self.num_live()
    }

    pub fn done_wrong(&self) -> usize {
        self.num_live() + 1
    }

    pub fn action(&self, index: usize) -> EntryAction {
        if index < self.n - 1 {
            EntryAction::Ask(index + 1)
        } else {
            EntryAction::Commit(index - (self.n - 1))
        }
    }

    pub fn index(&self, action: EntryAction) -> usize {
        match action {
            EntryAction::Ask(c) => c - 1,
            EntryAction::Commit(n) => self.n - 1 + n,
        }
    }

    /// Marginal over targets of the live part of `belief`, renormalized.
    /// Returns `None` when no mass is on live states.
    pub fn target_marginal(&self, belief: &Dist) -> Option<Dist> {
        let w: Vec<f64> = (0..self.n)
            .map(|t| (0..self.grid_len).map(|e| belief[self.live(t, e)]).sum())
            .collect();
        normalize(w).ok()
    }

    /// Marginal over the noise grid of the live part of `belief`.
    pub fn epsilon_marginal(&self, belief: &Dist) -> Option<Dist> {
        let w: Vec<f64> = (0..self.grid_len)
            .map(|e| (0..self.n).map(|t| belief[self.live(t, e)]).sum())
            .collect();
        normalize(w).ok()
    }
}

/// Probability that the channel reports "above" for `target` at cutpoint `c`.
pub fn p_above(target: usize, cutpoint: usize, epsilon: f64) -> f64 {
    if target >= cutpoint {
        1.0 - epsilon
    } else {
        epsilon
    }
}

/// Builds the generative model; agents planning on it should use
/// [`EfeForm::EpistemicState`] (see [`plan_config`]).
pub fn build_model(cfg: &NumberEntryConfig) -> Result<GenerativeModel> {
    cfg.validate()?;
    let lay = cfg.layout();
    let (ns, live) = (lay.num_states(), lay.num_live());

    let mut opening = Array2::zeros((3, ns));
    opening.row_mut(OBS_COMMITTED).fill(1.0);

    let mut a_tables = Vec::with_capacity(lay.num_actions());
    let mut b_tables = Vec::with_capacity(lay.num_actions());
    for index in 0..lay.num_actions() {
        let mut a = Array2::zeros((3, ns));
        let mut b = Array2::zeros((ns, ns));
        match lay.action(index) {
            EntryAction::Ask(c) => {
                for t in 0..cfg.n {
                    for (e, &eps) in cfg.epsilon_grid.iter().enumerate() {
                        let s = lay.live(t, e);
                        let up = p_above(t, c, eps);
                        a[[OBS_ABOVE, s]] = up;
                        a[[OBS_BELOW, s]] = 1.0 - up;
                    }
                }
                for s in 0..ns {
                    b[[s, s]] = 1.0;
                }
            }
            EntryAction::Commit(guess) => {
                for t in 0..cfg.n {
                    let dest = if t == guess {
                        lay.done_correct()
                    } else {
                        lay.done_wrong()
                    };
                    for e in 0..cfg.grid_len() {
                        b[[dest, lay.live(t, e)]] = 1.0;
                    }
                }
                for s in live..ns {
                    b[[s, s]] = 1.0;
                }
                a.slice_mut(ndarray::s![OBS_COMMITTED, ..live]).fill(1.0);
            }
        }
        a.slice_mut(ndarray::s![OBS_COMMITTED, live..]).fill(1.0);
        a_tables.push(a);
        b_tables.push(b);
    }

    let live_mass = (1.0 - cfg.preference_strength - cfg.wrong_mass) / live as f64;
    let mut pref = vec![live_mass; ns];
    pref[lay.done_correct()] = cfg.preference_strength;
    pref[lay.done_wrong()] = cfg.wrong_mass;
    let mut d = vec![1.0 / live as f64; ns];
    d[lay.done_correct()] = 0.0;
    d[lay.done_wrong()] = 0.0;

    GenerativeModel::new(
        ObservationModel::with_action_tables(opening, a_tables),
        TransitionModel::new(b_tables),
        PreferenceSchedule::stationary(PreferenceMode::States, normalize(pref)?),
        normalize(d)?,
    )
}

/// Planning configuration for number entry: the epistemic state form, so that
/// cutpoints are scored by how much they split the belief.
pub fn plan_config(horizon: usize, precision: f64) -> PlanConfig {
    PlanConfig {
        horizon,
        precision,
        policy_budget: 10_000,
        form: Some(EfeForm::EpistemicState),
    }
}

/// Simulated user: truthful answer, flipped with probability `epsilon_true`.
pub fn respond<R: Rng + ?Sized>(cfg: &NumberEntryConfig, target: usize, cutpoint: usize, rng: &mut R) -> usize {
    debug_assert!(cutpoint >= 1 && cutpoint < cfg.n);
    let truthful = if target >= cutpoint { OBS_ABOVE } else { OBS_BELOW };
    let flip: f64 = rng.random();
    if flip < cfg.epsilon_true {
        1 - truthful
    } else {
        truthful
    }
}

fn binary_entropy(p: f64) -> f64 {
    let h = |x: f64| if x > 0.0 { -x * x.ln() } else { 0.0 };
    h(p) + h(1.0 - p)
}

/// Exhaustive scan of all cutpoints for the one with the largest mutual
/// information between target and (noisy) answer, `H(answer) - H_b(eps)`.
/// Ties go to the lowest cutpoint.
pub fn oracle_optimal_cutpoint(belief: &Dist, epsilon: f64) -> (usize, f64) {
    let n = belief.len();
    let gains: Vec<f64> = (1..n)
        .map(|c| {
            let up: f64 = (0..n).map(|t| belief[t] * p_above(t, c, epsilon)).sum();
            (binary_entropy(up) - binary_entropy(epsilon)).max(0.0)
        })
        .collect();
    let best = gains.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * best.abs().max(1.0);
    let i = gains
        .iter()
        .position(|&g| best - g <= tol)
        .expect("at least one cutpoint");
    (i + 1, gains[i])
}

/// Lower bound on the posterior probability of the committed number under
/// greedy selection: committing beats the best question only once the
/// probability `p` of the leading target satisfies
/// `p a + (1 - p) w <= l - gain` with `a`, `w`, `l` the negative log
/// preferences of DONE_CORRECT, DONE_WRONG and any live state, and `gain >= 0`.
pub fn commit_threshold(model: &GenerativeModel, layout: &EntryLayout) -> f64 {
    let c = model.c.at(0).floored();
    let a = -c[layout.done_correct()].ln();
    let w = -c[layout.done_wrong()].ln();
    let l = -c[layout.live(0, 0)].ln();
    (1.0 - (l - a) / (w - a)).clamp(0.0, 1.0)
}

/// Which number the user has in mind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Fixed(usize),
    Random,
}

pub struct NumberEntryEnv {
    cfg: NumberEntryConfig,
    layout: EntryLayout,
    target: usize,
    rng: SimRng,
    queries: usize,
    committed: Option<usize>,
}

impl NumberEntryEnv {
    pub fn new(cfg: &NumberEntryConfig, target: Target) -> Self {
        let target = match target {
            Target::Fixed(t) => t,
            Target::Random => stream_rng(cfg.seed, TARGET_STREAM).random_range(0..cfg.n),
        };
        Self {
            layout: cfg.layout(),
            cfg: cfg.clone(),
            target,
            rng: stream_rng(cfg.seed, ENV_STREAM),
            queries: 0,
            committed: None,
        }
    }

    pub fn target(&self) -> usize {
        self.target
    }
}

impl Environment for NumberEntryEnv {
    fn reset(&mut self) -> usize {
        self.queries = 0;
        self.committed = None;
        OBS_COMMITTED
    }

    fn act(&mut self, action: usize) -> Feedback {
        match self.layout.action(action) {
            EntryAction::Ask(c) => {
                self.queries += 1;
                Feedback::Observation(respond(&self.cfg, self.target, c, &mut self.rng))
            }
            EntryAction::Commit(n) => {
                self.committed = Some(n);
                Feedback::Terminal
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryOutcome {
    pub seed: u64,
    pub target: usize,
    pub committed: Option<usize>,
    pub correct: bool,
    pub queries: usize,
    pub cum_surprise: f64,
    pub ms: f64,
    pub trace: EpisodeTrace,
}

/// One seeded episode. The target (when random) and the channel flips are
/// drawn from separate streams of `cfg.seed`; the agent is seeded with
/// `cfg.seed` itself.
pub fn run_entry_episode(
    cfg: &NumberEntryConfig,
    model: &GenerativeModel,
    plan: &PlanConfig,
    target: Target,
    max_steps: usize,
    diagnostic: bool,
    timing: bool,
) -> Result<EntryOutcome> {
    let started = std::time::Instant::now();
    let mut agent = Agent::new(
        model.clone(),
        AgentConfig {
            plan: plan.clone(),
            seed: cfg.seed,
            diagnostic,
            timing,
        },
    )?;
    let mut env = NumberEntryEnv::new(cfg, target);
    let trace = run_episode(&mut agent, &mut env, max_steps)?;
    Ok(EntryOutcome {
        seed: cfg.seed,
        target: env.target,
        committed: env.committed,
        correct: env.committed == Some(env.target),
        queries: env.queries,
        cum_surprise: trace.cumulative_surprise(),
        ms: if timing {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
        trace,
    })
}

/// Non-adaptive baseline: bisection where each level's question is repeated
/// a fixed number of times and decided by majority (ties go to the first
/// answer of the level), `budget` questions spread as evenly as possible over
/// the levels, earlier levels first. Returns the committed number.
pub fn binary_search_baseline<R: Rng + ?Sized>(
    cfg: &NumberEntryConfig,
    target: usize,
    budget: usize,
    rng: &mut R,
) -> usize {
    let levels = (cfg.n as f64).log2().ceil() as usize;
    let budget = budget.max(levels);
    let (mut lo, mut hi) = (0usize, cfg.n);
    let mut level = 0;
    while hi - lo > 1 {
        let repeats = budget / levels + usize::from(level < budget % levels);
        let c = lo + (hi - lo) / 2;
        let answers: Vec<usize> = (0..repeats).map(|_| respond(cfg, target, c, rng)).collect();
        let above = answers.iter().filter(|&&o| o == OBS_ABOVE).count();
        let says_above = match (2 * above).cmp(&repeats) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => answers[0] == OBS_ABOVE,
        };
        if says_above {
            lo = c;
        } else {
            hi = c;
        }
        level += 1;
    }
    lo
}
