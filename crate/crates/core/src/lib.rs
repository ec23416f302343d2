//! Exact discrete-state active inference.
//!
//! The engine keeps a categorical belief over hidden states, corrects it with
//! Bayes' rule, scores fixed-horizon action sequences by their expected free
//! energy and samples actions from a softmax over those scores. On top of the
//! engine sit two interaction scenarios (number entry over a noisy binary
//! channel, and a two-agent goal relay), a live session state machine, and a
//! grow-shrink Markov blanket detector.

// Index loops mirror the table algebra; negated comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod batch;
pub mod blanket;
pub mod dyad;
pub mod error;
pub mod inference;
pub mod model;
pub mod number_entry;
pub mod planning;
pub mod prob;
pub mod session;
pub mod stats;
pub mod synth;

pub use agent::{run_episode, Agent, AgentConfig, Environment, EpisodeTrace, Feedback, TraceStep};
pub use batch::{emit_results, run_batch, BatchOutput, RunConfig, Scenario, Seeds};
pub use blanket::{empirical_cmi, grow_shrink, permutation_threshold, BlanketConfig, BlanketResult, SampleTable};
pub use dyad::{run_dyad, DyadConfig, DyadSummary, DyadTrace, SystemKind};
pub use error::{Error, Result};
pub use inference::{correct, filter, predict, Belief};
pub use model::{
    preference_at, validate_generative_model, GenerativeModel, ObservationModel, PreferenceMode, PreferenceSchedule,
    TransitionModel, Violation,
};
pub use number_entry::{build_model, run_entry_episode, EntryOutcome, NumberEntryConfig, Target};
pub use planning::{
    efe_observation_form, efe_state_form, enumerate_policies, expected_information_gain, policy_distribution,
    rollout_beliefs, select_action, EfeBreakdown, EfeForm, PlanConfig, Policy, PolicySet,
};
pub use prob::{entropy, expected_log, kl, normalize, sample_index, softmax_neg, Dist, SimRng};
pub use session::{Event, Phase, SessionConfig, SessionError, SessionStore, StepReport, StoreConfig};
