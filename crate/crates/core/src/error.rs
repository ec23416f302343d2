use thiserror::Error;

use crate::model::Violation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("all weights are zero; nothing to normalize")]
    AllZero,
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("non-finite score {value} at index {index}")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("precision must be positive, got {0}")]
    InvalidPrecision(f64),
    #[error("action {action} out of range (model has {num_actions})")]
    ActionOutOfRange { action: usize, num_actions: usize },
    #[error("observation {observation} out of range (model has {num_obs})")]
    ObservationOutOfRange { observation: usize, num_obs: usize },
    #[error("observation {observation} has zero probability under the current belief (step {step})")]
    ImpossibleObservation { observation: usize, step: usize },
    #[error("{count} policies exceed the budget of {budget}")]
    BudgetExceeded { count: u128, budget: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("history length mismatch: {actions} actions for {observations} observations")]
    HistoryMismatch { actions: usize, observations: usize },
    #[error("expected free energy form {form} needs preferences over {expected}")]
    ModeMismatch { form: &'static str, expected: &'static str },
    #[error("epsilon grid is empty")]
    GridEmpty,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("invalid sample table: {0}")]
    InvalidTable(String),
    #[error("invalid generative model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),
    #[error("model file: {0}")]
    ModelFormat(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
