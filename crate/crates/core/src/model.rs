//! Generative model containers: observation model `A`, per-action transition
//! model `B`, preference schedule `C` and initial prior `D`.
//!
//! Matrix layout is fixed throughout the crate: `entry[row = outcome][col =
//! condition]`. So `A[o][s] = P(o | s)` and `B[a][s'][s] = P(s' | s, a)`, and
//! every *column* of every table is a distribution.

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{Dist, SUM_TOL};

/// `P(o | s)`, either one table for every step or one table per action.
///
/// With per-action tables, the table for action `a` gives the law of the
/// observation emitted by the state reached *after* taking `a`. The shared
/// table is then only used for the opening observation of an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationModel {
    shared: Array2<f64>,
    by_action: Vec<Array2<f64>>,
}

impl ObservationModel {
    pub fn new(table: Array2<f64>) -> Self {
        Self {
            shared: table,
            by_action: Vec::new(),
        }
    }

    pub fn with_action_tables(opening: Array2<f64>, by_action: Vec<Array2<f64>>) -> Self {
        Self {
            shared: opening,
            by_action,
        }
    }

    /// Table governing the observation that follows `after_action`, or the
    /// opening observation when `None`.
    pub fn table(&self, after_action: Option<usize>) -> &Array2<f64> {
        match after_action {
            Some(a) if !self.by_action.is_empty() => &self.by_action[a],
            _ => &self.shared,
        }
    }

    pub fn is_action_dependent(&self) -> bool {
        !self.by_action.is_empty()
    }

    pub fn shared(&self) -> &Array2<f64> {
        &self.shared
    }

    pub fn action_tables(&self) -> &[Array2<f64>] {
        &self.by_action
    }

    pub fn num_obs(&self) -> usize {
        self.shared.nrows()
    }
}

/// `P(s' | s, a)`, one `|S| x |S|` table per action.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionModel {
    tables: Vec<Array2<f64>>,
}

impl TransitionModel {
    pub fn new(tables: Vec<Array2<f64>>) -> Self {
        Self { tables }
    }

    pub fn table(&self, action: usize) -> &Array2<f64> {
        &self.tables[action]
    }

    pub fn tables(&self) -> &[Array2<f64>] {
        &self.tables
    }

    pub fn num_actions(&self) -> usize {
        self.tables.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreferenceMode {
    /// `P^c(o)`: scored through predicted observations.
    Observations,
    /// `P^c(s)`: scored directly on hypothetical state beliefs.
    States,
}

impl PreferenceMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PreferenceMode::Observations => "observations",
            PreferenceMode::States => "states",
        }
    }
}

/// Preferences indexed by absolute episode timestep. A single entry is
/// stationary; past the last entry the last one holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSchedule {
    pub mode: PreferenceMode,
    pub entries: Vec<Dist>,
}

impl PreferenceSchedule {
    pub fn stationary(mode: PreferenceMode, pref: Dist) -> Self {
        Self {
            mode,
            entries: vec![pref],
        }
    }

    pub fn scheduled(mode: PreferenceMode, entries: Vec<Dist>) -> Self {
        assert!(!entries.is_empty(), "preference schedule needs an entry");
        Self { mode, entries }
    }

    pub fn at(&self, t: usize) -> &Dist {
        &self.entries[t.min(self.entries.len() - 1)]
    }
}

pub fn preference_at(c: &PreferenceSchedule, t: usize) -> &Dist {
    c.at(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerativeModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    pub a: ObservationModel,
    pub b: TransitionModel,
    pub c: PreferenceSchedule,
    pub d: Dist,
}

impl GenerativeModel {
    /// Builds a model, rejecting it if [`validate_generative_model`] reports
    /// anything.
    pub fn new(a: ObservationModel, b: TransitionModel, c: PreferenceSchedule, d: Dist) -> Result<Self> {
        let m = Self {
            num_states: d.len(),
            num_actions: b.num_actions(),
            num_obs: a.num_obs(),
            a,
            b,
            c,
            d,
        };
        let violations = validate_generative_model(&m);
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s).map_err(|e| Error::ModelFormat(e.to_string()))?;
        file.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ModelFile::from_model(self)).expect("model serialization cannot fail")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    NegativeEntry {
        table: String,
        row: usize,
        col: usize,
        value: f64,
    },
    /// Column `state` of the observation table for `action` (`None` = shared
    /// table) does not sum to one.
    ObservationColumn {
        action: Option<usize>,
        state: usize,
        sum: f64,
    },
    TransitionColumn {
        action: usize,
        state: usize,
        sum: f64,
    },
    EmptyModel,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Dimension { what, expected, found } => write!(f, "{what}: expected {expected}, found {found}"),
            Violation::NegativeEntry { table, row, col, value } => {
                write!(f, "{table}[{row}][{col}] = {value} is negative")
            }
            Violation::ObservationColumn { action, state, sum } => match action {
                Some(a) => write!(f, "A (after action {a}) column {state} sums to {sum}"),
                None => write!(f, "A column {state} sums to {sum}"),
            },
            Violation::TransitionColumn { action, state, sum } => {
                write!(f, "B[{action}] column {state} sums to {sum}")
            }
            Violation::EmptyModel => write!(f, "model has an empty dimension"),
        }
    }
}

/// Lists every dimension and column-stochasticity violation. Empty means valid.
pub fn validate_generative_model(m: &GenerativeModel) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.num_states == 0 || m.num_actions == 0 || m.num_obs == 0 {
        out.push(Violation::EmptyModel);
        return out;
    }
    let mut dim = |what: String, expected: usize, found: usize| {
        if expected != found {
            out.push(Violation::Dimension { what, expected, found });
            false
        } else {
            true
        }
    };

    let a_shape_ok =
        dim("A rows".into(), m.num_obs, m.a.shared.nrows()) & dim("A columns".into(), m.num_states, m.a.shared.ncols());
    let mut a_tables_ok = Vec::new();
    if m.a.is_action_dependent() {
        dim("A per-action tables".into(), m.num_actions, m.a.by_action.len());
        for (i, t) in m.a.by_action.iter().enumerate() {
            let ok = dim(format!("A (after action {i}) rows"), m.num_obs, t.nrows())
                & dim(format!("A (after action {i}) columns"), m.num_states, t.ncols());
            a_tables_ok.push(ok);
        }
    }
    dim("B tables".into(), m.num_actions, m.b.tables.len());
    let b_ok: Vec<bool> =
        m.b.tables
            .iter()
            .enumerate()
            .map(|(i, t)| {
                dim(format!("B[{i}] rows"), m.num_states, t.nrows())
                    & dim(format!("B[{i}] columns"), m.num_states, t.ncols())
            })
            .collect();
    let pref_len = match m.c.mode {
        PreferenceMode::Observations => m.num_obs,
        PreferenceMode::States => m.num_states,
    };
    if m.c.entries.is_empty() {
        dim("C entries".into(), 1, 0);
    }
    for (i, e) in m.c.entries.iter().enumerate() {
        dim(format!("C[{i}] length ({} mode)", m.c.mode.as_str()), pref_len, e.len());
    }
    dim("D length".into(), m.num_states, m.d.len());

    if a_shape_ok {
        check_columns(&m.a.shared, "A", &mut out, |state, sum| Violation::ObservationColumn {
            action: None,
            state,
            sum,
        });
    }
    for (i, (t, ok)) in m.a.by_action.iter().zip(a_tables_ok).enumerate() {
        if ok {
            check_columns(t, &format!("A(after {i})"), &mut out, |state, sum| {
                Violation::ObservationColumn {
                    action: Some(i),
                    state,
                    sum,
                }
            });
        }
    }
    for (i, (t, ok)) in m.b.tables.iter().zip(b_ok).enumerate() {
        if ok {
            check_columns(t, &format!("B[{i}]"), &mut out, |state, sum| {
                Violation::TransitionColumn { action: i, state, sum }
            });
        }
    }
    out
}

fn check_columns(
    t: &Array2<f64>,
    name: &str,
    out: &mut Vec<Violation>,
    column_violation: impl Fn(usize, f64) -> Violation,
) {
    for ((row, col), &value) in t.indexed_iter() {
        if !(value >= 0.0) {
            out.push(Violation::NegativeEntry {
                table: name.to_string(),
                row,
                col,
                value,
            });
        }
    }
    for (state, column) in t.columns().into_iter().enumerate() {
        let sum = column.sum();
        if !((sum - 1.0).abs() <= SUM_TOL) {
            out.push(column_violation(state, sum));
        }
    }
}

/// On-disk form of a [`GenerativeModel`]. Matrices are nested row lists in
/// the crate's `[outcome][condition]` layout.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_obs: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "A_by_action", default, skip_serializing_if = "Vec::is_empty")]
    pub a_by_action: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: PreferenceSchedule,
    #[serde(rename = "D")]
    pub d: Dist,
}

impl ModelFile {
    pub fn into_model(self) -> Result<GenerativeModel> {
        let a = ObservationModel::with_action_tables(
            to_array(&self.a, "A")?,
            self.a_by_action
                .iter()
                .enumerate()
                .map(|(i, t)| to_array(t, &format!("A_by_action[{i}]")))
                .collect::<Result<_>>()?,
        );
        let b = TransitionModel::new(
            self.b
                .iter()
                .enumerate()
                .map(|(i, t)| to_array(t, &format!("B[{i}]")))
                .collect::<Result<_>>()?,
        );
        let m = GenerativeModel {
            num_states: self.num_states,
            num_actions: self.num_actions,
            num_obs: self.num_obs,
            a,
            b,
            c: self.c,
            d: self.d,
        };
        let violations = validate_generative_model(&m);
        if violations.is_empty() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(violations))
        }
    }

    pub fn from_model(m: &GenerativeModel) -> Self {
        Self {
            num_states: m.num_states,
            num_actions: m.num_actions,
            num_obs: m.num_obs,
            a: from_array(m.a.shared()),
            a_by_action: m.a.action_tables().iter().map(from_array).collect(),
            b: m.b.tables().iter().map(from_array).collect(),
            c: m.c.clone(),
            d: m.d.clone(),
        }
    }
}

fn to_array(rows: &[Vec<f64>], name: &str) -> Result<Array2<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::ModelFormat(format!(
            "{name} is ragged: row {i} has {} entries, row 0 has {ncols}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::ModelFormat(format!("{name}: {e}")))
}

fn from_array(t: &Array2<f64>) -> Vec<Vec<f64>> {
    t.rows().into_iter().map(|r| r.to_vec()).collect()
}
