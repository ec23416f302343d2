//! Seeded batch runs of every scenario, with CSV/JSONL emission.
//!
//! Episodes run in parallel across seeds but are collected in seed-list
//! order, and no wall-clock value is written unless `timing` is set, so a
//! batch's files are a pure function of its configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode, Agent, AgentConfig, Environment, Feedback};
use crate::blanket::{grow_shrink, BinaryDag, BlanketConfig, SampleTable};
use crate::dyad::{run_dyad, DyadConfig, DyadSummary, SystemKind};
use crate::error::{Error, Result};
use crate::model::GenerativeModel;
use crate::number_entry::{build_model, run_entry_episode, NumberEntryConfig, Target};
use crate::planning::{EfeForm, PlanConfig, GREEDY_PRECISION};
use crate::prob::{stream_rng, SimRng};
use crate::stats::median;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    NumberEntry,
    Dyad,
    Blanket,
    CustomModel,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NumberEntry => "number_entry",
            Scenario::Dyad => "dyad",
            Scenario::Blanket => "blanket",
            Scenario::CustomModel => "custom_model",
        }
    }
}

/// Either a count `n` (seeds `0..n`) or an explicit list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }

    /// `"10"` is a count, `"1,5,9"` a list.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.contains(',') {
            s.split(',')
                .filter(|p| !p.trim().is_empty())
                .map(|p| p.trim().parse::<u64>().map_err(|e| format!("seed {p:?}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Seeds::List)
        } else {
            s.parse::<u64>()
                .map(Seeds::Count)
                .map_err(|e| format!("seeds {s:?}: {e}"))
        }
    }
}

/// One batch. Keys not used by the chosen scenario are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub seeds: Seeds,
    pub out: Option<PathBuf>,
    /// Write per-episode JSONL traces.
    pub diagnostic: bool,
    /// Record wall-clock times (breaks byte-identical reruns).
    pub timing: bool,
    /// Worker threads; 0 picks the machine default.
    pub threads: usize,
    /// Actions per episode (number entry, custom model) or rounds (dyad).
    pub max_steps: Option<usize>,

    pub horizon: usize,
    pub precision: f64,
    pub policy_budget: usize,
    pub form: Option<EfeForm>,

    #[serde(rename = "N")]
    pub n: usize,
    pub eps_true: f64,
    pub eps_grid: Vec<f64>,
    pub preference_strength: f64,
    pub wrong_mass: f64,
    /// Fixed number to enter; drawn per seed when absent.
    pub target: Option<usize>,

    #[serde(rename = "M")]
    pub m: usize,
    pub goal: Option<usize>,
    pub start: Option<usize>,
    pub system: SystemKind,
    pub user_precision: f64,
    pub partner_precision: f64,
    pub goal_sharpness: f64,
    pub misalignment: usize,

    /// CSV of discrete samples; without it each seed samples `rows` rows of
    /// the built-in `A -> B -> C <- D` network.
    pub data: Option<PathBuf>,
    pub variable: Option<String>,
    pub alpha: f64,
    pub num_permutations: usize,
    pub rows: usize,
    /// Split each table into consecutive windows of this many rows and find
    /// a blanket per window, to see whether the boundary moves over time.
    pub window: Option<usize>,

    /// Generative model file for `custom_model`.
    pub model: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let ne = NumberEntryConfig::default();
        let dy = DyadConfig::default();
        let bl = BlanketConfig::default();
        Self {
            scenario: Scenario::NumberEntry,
            seeds: Seeds::Count(1),
            out: None,
            diagnostic: false,
            timing: false,
            threads: 0,
            max_steps: None,
            horizon: 1,
            precision: GREEDY_PRECISION,
            policy_budget: 10_000,
            form: None,
            n: ne.n,
            eps_true: ne.epsilon_true,
            eps_grid: ne.epsilon_grid,
            preference_strength: ne.preference_strength,
            wrong_mass: ne.wrong_mass,
            target: None,
            m: dy.m,
            goal: None,
            start: None,
            system: dy.system,
            user_precision: GREEDY_PRECISION,
            partner_precision: dy.partner_precision,
            goal_sharpness: dy.goal_sharpness,
            misalignment: 0,
            data: None,
            variable: None,
            alpha: bl.alpha,
            num_permutations: bl.num_permutations,
            rows: 100_000,
            window: None,
            model: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Checks everything that can be checked without running an episode.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.seeds.resolve().is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.horizon == 0 {
            return Err(Error::ZeroHorizon);
        }
        if !(self.precision > 0.0) {
            return Err(Error::InvalidPrecision(self.precision));
        }
        for (key, path) in [("data", &self.data), ("model", &self.model)] {
            if let Some(p) = path.as_ref().filter(|p| !p.exists()) {
                return bad(format!("{key} file {} does not exist", p.display()));
            }
        }
        match self.scenario {
            Scenario::NumberEntry => {
                self.number_entry_config(0).validate()?;
                if let Some(t) = self.target.filter(|&t| t >= self.n) {
                    return bad(format!("target {t} outside 0..{}", self.n));
                }
            }
            Scenario::Dyad => self.dyad_config(0).validate()?,
            Scenario::Blanket => {
                if !(self.alpha > 0.0 && self.alpha < 1.0) || self.num_permutations < 100 {
                    return bad("need 0 < alpha < 1 and num_permutations >= 100".into());
                }
                if self.data.is_none() && self.rows == 0 {
                    return bad("rows must be positive".into());
                }
                if self.window == Some(0) {
                    return bad("window must be positive".into());
                }
            }
            Scenario::CustomModel => {
                if self.model.is_none() {
                    return bad("custom_model needs a model file".into());
                }
            }
        }
        Ok(())
    }

    fn plan(&self, form: EfeForm) -> PlanConfig {
        PlanConfig {
            horizon: self.horizon,
            precision: self.precision,
            policy_budget: self.policy_budget,
            form: Some(self.form.unwrap_or(form)),
        }
    }

    pub fn number_entry_config(&self, seed: u64) -> NumberEntryConfig {
        NumberEntryConfig {
            n: self.n,
            epsilon_true: self.eps_true,
            epsilon_grid: self.eps_grid.clone(),
            preference_strength: self.preference_strength,
            wrong_mass: self.wrong_mass,
            seed,
        }
    }

    pub fn dyad_config(&self, seed: u64) -> DyadConfig {
        let defaults = DyadConfig::default();
        DyadConfig {
            m: self.m,
            goal: self.goal,
            start: self.start,
            max_steps: self.max_steps.unwrap_or(defaults.max_steps),
            seed,
            user_plan: PlanConfig {
                precision: self.user_precision,
                ..defaults.user_plan
            },
            system_plan: self.plan(EfeForm::RiskAmbiguity),
            system: self.system,
            partner_precision: self.partner_precision,
            goal_sharpness: self.goal_sharpness,
            misalignment: self.misalignment,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct NumberEntryRow {
    pub seed: u64,
    pub N: usize,
    pub eps_true: f64,
    pub queries: usize,
    pub committed: Option<usize>,
    pub correct: bool,
    pub cum_surprise: f64,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlanketRow {
    pub seed: u64,
    /// 0 unless the data is split into windows.
    pub window: usize,
    pub target: String,
    /// Members joined by `;`.
    pub blanket: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomRow {
    pub seed: u64,
    pub steps: usize,
    pub cum_surprise: f64,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub seed: u64,
    pub error: String,
}

/// Everything a batch produces, with file contents held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutput {
    pub scenario: Scenario,
    /// Aggregate CSV, one row per successful episode in seed-list order.
    pub csv: String,
    /// Further files (relative path, contents): traces and per-seed JSON.
    pub files: Vec<(String, String)>,
    pub failures: Vec<EpisodeFailure>,
    pub summary: BTreeMap<String, f64>,
}

impl BatchOutput {
    pub fn csv_name(&self) -> String {
        format!("{}.csv", self.scenario.as_str())
    }
}

fn par_map<T, F>(seeds: &[u64], threads: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if threads == 0 {
        return Ok(seeds.par_iter().map(|&s| f(s)).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| seeds.par_iter().map(|&s| f(s)).collect()))
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Parses CSV written by a batch back into rows.
pub fn read_csv<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::InvalidTable(e.to_string()))
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("serializable") + "\n")
        .collect()
}

/// Runs one episode per seed.
pub fn run_batch(cfg: &RunConfig) -> Result<BatchOutput> {
    cfg.validate()?;
    let seeds = cfg.seeds.resolve();
    match cfg.scenario {
        Scenario::NumberEntry => number_entry_batch(cfg, &seeds),
        Scenario::Dyad => dyad_batch(cfg, &seeds),
        Scenario::Blanket => blanket_batch(cfg, &seeds),
        Scenario::CustomModel => custom_batch(cfg, &seeds),
    }
}

fn split<T>(seeds: &[u64], results: Vec<Result<T>>) -> (Vec<T>, Vec<EpisodeFailure>) {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(v) => ok.push(v),
            Err(e) => failures.push(EpisodeFailure {
                seed,
                error: e.to_string(),
            }),
        }
    }
    (ok, failures)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn number_entry_batch(cfg: &RunConfig, seeds: &[u64]) -> Result<BatchOutput> {
    let model = build_model(&cfg.number_entry_config(0))?;
    let plan = cfg.plan(EfeForm::EpistemicState);
    let target = cfg.target.map_or(Target::Random, Target::Fixed);
    let max_steps = cfg.max_steps.unwrap_or(100);
    let results = par_map(seeds, cfg.threads, |seed| {
        run_entry_episode(
            &cfg.number_entry_config(seed),
            &model,
            &plan,
            target,
            max_steps,
            cfg.diagnostic,
            cfg.timing,
        )
    })?;
    let (episodes, failures) = split(seeds, results);
    let rows: Vec<NumberEntryRow> = episodes
        .iter()
        .map(|e| NumberEntryRow {
            seed: e.seed,
            N: cfg.n,
            eps_true: cfg.eps_true,
            queries: e.queries,
            committed: e.committed,
            correct: e.correct,
            cum_surprise: e.cum_surprise,
            ms: e.ms,
        })
        .collect();
    let files = if cfg.diagnostic {
        episodes
            .iter()
            .map(|e| (format!("traces/number_entry_seed{}.jsonl", e.seed), e.trace.to_jsonl()))
            .collect()
    } else {
        Vec::new()
    };
    let summary = BTreeMap::from([
        ("episodes".into(), rows.len() as f64),
        (
            "accuracy".into(),
            mean(rows.iter().map(|r| f64::from(u8::from(r.correct)))),
        ),
        ("mean_queries".into(), mean(rows.iter().map(|r| r.queries as f64))),
        (
            "commit_rate".into(),
            mean(rows.iter().map(|r| f64::from(u8::from(r.committed.is_some())))),
        ),
    ]);
    Ok(BatchOutput {
        scenario: Scenario::NumberEntry,
        csv: to_csv(&rows)?,
        files,
        failures,
        summary,
    })
}

fn dyad_batch(cfg: &RunConfig, seeds: &[u64]) -> Result<BatchOutput> {
    let results = par_map(seeds, cfg.threads, |seed| run_dyad(&cfg.dyad_config(seed)))?;
    let (episodes, failures) = split(seeds, results);
    let rows: Vec<DyadSummary> = episodes.iter().map(|(_, s)| s.clone()).collect();
    let files = if cfg.diagnostic {
        episodes
            .iter()
            .map(|(t, s)| (format!("traces/dyad_seed{}.jsonl", s.seed), jsonl(&t.steps)))
            .collect()
    } else {
        Vec::new()
    };
    let steps: Vec<f64> = rows.iter().map(|r| r.steps_to_goal as f64).collect();
    let summary = BTreeMap::from([
        ("episodes".into(), rows.len() as f64),
        ("median_steps_to_goal".into(), median(&steps).unwrap_or(f64::NAN)),
        ("mean_frac_goal_q4".into(), mean(rows.iter().map(|r| r.frac_goal_q4))),
    ]);
    Ok(BatchOutput {
        scenario: Scenario::Dyad,
        csv: to_csv(&rows)?,
        files,
        failures,
        summary,
    })
}

fn blanket_batch(cfg: &RunConfig, seeds: &[u64]) -> Result<BatchOutput> {
    let shared = cfg.data.as_ref().map(SampleTable::from_csv_path).transpose()?;
    let variable = cfg.variable.clone().unwrap_or_else(|| "B".into());
    let bcfg = BlanketConfig {
        alpha: cfg.alpha,
        num_permutations: cfg.num_permutations,
    };
    let dag = BinaryDag::collider_example();
    let results = par_map(seeds, cfg.threads, |seed| {
        let sampled;
        let table = match &shared {
            Some(t) => t,
            None => {
                sampled = dag.sample(cfg.rows, &mut stream_rng(seed, 0));
                &sampled
            }
        };
        let n = table.num_rows();
        let size = cfg.window.unwrap_or(n).max(1);
        // one test stream per seed, consumed window by window
        let mut rng = stream_rng(seed, 1);
        (0..n.div_ceil(size).max(1))
            .map(|w| {
                let part = table.slice_rows(w * size..((w + 1) * size).min(n));
                grow_shrink(&part, &variable, &bcfg, &mut rng).map(|r| (seed, w, r))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let (results, failures) = split(seeds, results);
    let results: Vec<_> = results.into_iter().flatten().collect();
    let rows: Vec<BlanketRow> = results
        .iter()
        .map(|(seed, w, r)| BlanketRow {
            seed: *seed,
            window: *w,
            target: r.target.clone(),
            blanket: r.blanket.join(";"),
        })
        .collect();
    let files = results
        .iter()
        .map(|(seed, w, r)| {
            let name = match cfg.window {
                None => format!("blanket_seed{seed}.json"),
                Some(_) => format!("blanket_seed{seed}_window{w}.json"),
            };
            (name, serde_json::to_string_pretty(r).expect("serializable") + "\n")
        })
        .collect();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r.blanket.as_str()).or_default() += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    let summary = BTreeMap::from([
        ("episodes".into(), rows.len() as f64),
        ("modal_blanket_fraction".into(), modal as f64 / rows.len().max(1) as f64),
    ]);
    Ok(BatchOutput {
        scenario: Scenario::Blanket,
        csv: to_csv(&rows)?,
        files,
        failures,
        summary,
    })
}

/// Generative process that samples from the agent's own model.
pub struct SampledProcess<'a> {
    model: &'a GenerativeModel,
    rng: SimRng,
    state: usize,
}

impl<'a> SampledProcess<'a> {
    pub fn new(model: &'a GenerativeModel, seed: u64) -> Self {
        Self {
            model,
            rng: stream_rng(seed, 1),
            state: 0,
        }
    }
}

fn sample_column<R: Rng + ?Sized>(table: &ndarray::Array2<f64>, col: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let last = table.nrows() - 1;
    for (i, &p) in table.column(col).iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    last
}

impl Environment for SampledProcess<'_> {
    fn reset(&mut self) -> usize {
        self.state = crate::prob::sample_index(&self.model.d, &mut self.rng);
        sample_column(self.model.a.table(None), self.state, &mut self.rng)
    }

    fn act(&mut self, action: usize) -> Feedback {
        self.state = sample_column(self.model.b.table(action), self.state, &mut self.rng);
        Feedback::Observation(sample_column(
            self.model.a.table(Some(action)),
            self.state,
            &mut self.rng,
        ))
    }
}

fn custom_batch(cfg: &RunConfig, seeds: &[u64]) -> Result<BatchOutput> {
    let path = cfg.model.as_ref().expect("validated");
    let model = GenerativeModel::load(path)?;
    let plan = cfg.plan(EfeForm::for_mode(model.c.mode));
    let max_steps = cfg.max_steps.unwrap_or(20);
    let results = par_map(seeds, cfg.threads, |seed| {
        let started = std::time::Instant::now();
        let mut agent = Agent::new(
            model.clone(),
            AgentConfig {
                plan: plan.clone(),
                seed,
                diagnostic: cfg.diagnostic,
                timing: cfg.timing,
            },
        )?;
        let trace = run_episode(&mut agent, &mut SampledProcess::new(&model, seed), max_steps)?;
        let ms = if cfg.timing {
            started.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        Ok((seed, trace, ms))
    })?;
    let (episodes, failures) = split(seeds, results);
    let rows: Vec<CustomRow> = episodes
        .iter()
        .map(|(seed, t, ms)| CustomRow {
            seed: *seed,
            steps: t.len(),
            cum_surprise: t.cumulative_surprise(),
            ms: *ms,
        })
        .collect();
    let files = if cfg.diagnostic {
        episodes
            .iter()
            .map(|(seed, t, _)| (format!("traces/custom_model_seed{seed}.jsonl"), t.to_jsonl()))
            .collect()
    } else {
        Vec::new()
    };
    let summary = BTreeMap::from([
        ("episodes".into(), rows.len() as f64),
        ("mean_cum_surprise".into(), mean(rows.iter().map(|r| r.cum_surprise))),
    ]);
    Ok(BatchOutput {
        scenario: Scenario::CustomModel,
        csv: to_csv(&rows)?,
        files,
        failures,
        summary,
    })
}

/// Writes the aggregate CSV, extra files, `summary.json` and (when any
/// episode failed) `failures.csv` under `dir`. Returns the paths written.
pub fn emit_results(out: &BatchOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |path: &Path, e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut written = Vec::new();
    let mut write = |rel: &str, contents: &str| -> Result<()> {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| io(&path, e))?;
        written.push(path);
        Ok(())
    };
    write(&out.csv_name(), &out.csv)?;
    for (rel, contents) in &out.files {
        write(rel, contents)?;
    }
    let summary = serde_json::to_string_pretty(&out.summary).expect("serializable") + "\n";
    write("summary.json", &summary)?;
    if !out.failures.is_empty() {
        write("failures.csv", &to_csv(&out.failures)?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::EpisodeTrace;

    fn ne(seeds: Seeds) -> RunConfig {
        RunConfig {
            seeds,
            eps_true: 0.0,
            eps_grid: vec![0.0],
            ..RunConfig::default()
        }
    }

    #[test]
    fn minimal_config_defaults() {
        let cfg = RunConfig::from_json_str(r#"{"scenario": "number_entry", "seeds": 10}"#).unwrap();
        assert_eq!(cfg.n, 16);
        assert_eq!(cfg.seeds.resolve().len(), 10);
        cfg.validate().unwrap();
        let err = RunConfig::from_json_str(r#"{"scenario": "number_entry", "horizn": 2}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field `horizn`"));
    }

    #[test]
    fn seeds_parsing() {
        assert_eq!(Seeds::parse("3"), Ok(Seeds::Count(3)));
        assert_eq!(Seeds::parse("4, 9,1"), Ok(Seeds::List(vec![4, 9, 1])));
        assert!(Seeds::parse("x").is_err());
        let empty = RunConfig {
            seeds: Seeds::List(vec![]),
            ..RunConfig::default()
        };
        assert!(matches!(empty.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_batch_rows() {
        let out = run_batch(&ne(Seeds::Count(10))).unwrap();
        let rows: Vec<NumberEntryRow> = read_csv(&out.csv).unwrap();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.correct && r.queries == 4 && r.ms == 0.0));
        assert_eq!(out.csv.lines().count(), 11);
        assert!(out
            .csv
            .starts_with("seed,N,eps_true,queries,committed,correct,cum_surprise,ms\n"));
        assert!(out.files.is_empty());
        assert_eq!(out.summary["accuracy"], 1.0);
    }

    #[test]
    fn diagnostic_traces_round_trip() {
        let cfg = RunConfig {
            diagnostic: true,
            ..ne(Seeds::List(vec![3, 1, 2]))
        };
        let out = run_batch(&cfg).unwrap();
        assert_eq!(out.csv.lines().count(), 4);
        assert_eq!(out.files.len(), 3);
        assert_eq!(out.files[0].0, "traces/number_entry_seed3.jsonl");
        for (_, text) in &out.files {
            let steps = EpisodeTrace::from_jsonl(text).unwrap();
            let again = EpisodeTrace {
                steps,
                max_steps_reached: false,
            }
            .to_jsonl();
            assert_eq!(&again, text);
            assert!(text.lines().next().unwrap().contains("efe_table"));
        }
    }

    #[test]
    fn other_scenarios_emit_their_schemas() {
        let dyad = RunConfig {
            scenario: Scenario::Dyad,
            seeds: Seeds::Count(3),
            ..RunConfig::default()
        };
        let out = run_batch(&dyad).unwrap();
        assert!(out
            .csv
            .starts_with("seed,M,g,aligned,steps_to_goal,frac_goal_q4,surprise_user,surprise_system\n"));
        let rows: Vec<DyadSummary> = read_csv(&out.csv).unwrap();
        assert_eq!(rows.len(), 3);

        let blanket = RunConfig {
            scenario: Scenario::Blanket,
            seeds: Seeds::Count(2),
            rows: 20_000,
            ..RunConfig::default()
        };
        let out = run_batch(&blanket).unwrap();
        let rows: Vec<BlanketRow> = read_csv(&out.csv).unwrap();
        assert!(rows.iter().all(|r| r.blanket == "A;C;D"), "{rows:?}");
        let json: crate::blanket::BlanketResult = serde_json::from_str(&out.files[0].1).unwrap();
        assert_eq!(json.target, "B");

        let windowed = RunConfig {
            seeds: Seeds::Count(1),
            window: Some(8_000),
            ..blanket
        };
        let out = run_batch(&windowed).unwrap();
        let rows: Vec<BlanketRow> = read_csv(&out.csv).unwrap();
        assert_eq!(rows.iter().map(|r| r.window).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(out.files[2].0, "blanket_seed0_window2.json");
    }

    #[test]
    fn parallelism_does_not_change_output() {
        let cfg = RunConfig {
            diagnostic: true,
            eps_true: 0.2,
            ..ne(Seeds::Count(12))
        };
        let one = run_batch(&RunConfig {
            threads: 1,
            ..cfg.clone()
        })
        .unwrap();
        let four = run_batch(&RunConfig { threads: 4, ..cfg }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn emit_writes_files() {
        let dir = std::env::temp_dir().join(format!("aif-batch-test-{}", std::process::id()));
        let out = run_batch(&RunConfig {
            diagnostic: true,
            ..ne(Seeds::Count(2))
        })
        .unwrap();
        let paths = emit_results(&out, &dir).unwrap();
        assert_eq!(paths.len(), 4);
        assert_eq!(std::fs::read_to_string(dir.join("number_entry.csv")).unwrap(), out.csv);
        assert!(dir.join("traces/number_entry_seed1.jsonl").exists());
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
