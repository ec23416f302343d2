//! Command-line surface and dispatch.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use aif_core::{emit_results, run_batch, BatchOutput, RunConfig, Scenario, Seeds};
use aif_core::{GenerativeModel, StoreConfig};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_config, ConfigError, Override};
use crate::server::{self, ServeOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "aif", version, about = "Discrete-state active inference simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Number-entry episodes (or a custom model when `model` is set).
    Simulate(RunArgs),
    /// User/system goal-relay episodes.
    Dyad(RunArgs),
    /// Markov blanket detection on sampled or supplied data.
    Blanket(RunArgs),
    /// Serve live number-entry sessions over HTTP and WebSocket.
    Serve(ServeArgs),
    /// Check a generative model file and list every violation.
    ValidateModel { file: PathBuf },
}

/// Flags shared by the batch subcommands. Anything without a dedicated flag
/// can be set with `--set key=value` using the config file's key names.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed count `n` (seeds 0..n) or comma-separated list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory for CSV, summary and traces.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-episode JSONL traces.
    #[arg(long)]
    pub diagnostic: bool,
    /// Record wall-clock time per episode.
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub precision: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Number of candidate values (number entry).
    #[arg(long = "N")]
    pub n: Option<usize>,
    /// Channel flip probability (number entry).
    #[arg(long)]
    pub eps_true: Option<f64>,
    /// Ring size (dyad).
    #[arg(long = "M")]
    pub m: Option<usize>,
    /// `aif`, `random` or `stay` (dyad).
    #[arg(long)]
    pub system: Option<String>,
    /// CSV of samples (blanket).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Target column (blanket).
    #[arg(long)]
    pub variable: Option<String>,
    /// Generative model file; makes `simulate` run it against itself.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl RunArgs {
    /// Overrides in a fixed order: dedicated flags first, then `--set`.
    pub fn overrides(&self) -> Result<Vec<Override>, ConfigError> {
        let mut out = Vec::new();
        let mut push = |flag: &str, key: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.push(Override::new(flag, key, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| json!(p));
        if let Some(s) = &self.seeds {
            let seeds = Seeds::parse(s).map_err(|msg| ConfigError::Flag {
                flag: "seeds".into(),
                msg,
            })?;
            push("seeds", "seeds", Some(json!(seeds)));
        }
        push("out", "out", path(&self.out));
        push("diagnostic", "diagnostic", self.diagnostic.then_some(json!(true)));
        push("timing", "timing", self.timing.then_some(json!(true)));
        push("threads", "threads", self.threads.map(|v| json!(v)));
        push("horizon", "horizon", self.horizon.map(|v| json!(v)));
        push("precision", "precision", self.precision.map(|v| json!(v)));
        push("max-steps", "max_steps", self.max_steps.map(|v| json!(v)));
        push("N", "N", self.n.map(|v| json!(v)));
        push("eps-true", "eps_true", self.eps_true.map(|v| json!(v)));
        push("M", "M", self.m.map(|v| json!(v)));
        push("system", "system", self.system.as_ref().map(|v| json!(v)));
        push("data", "data", path(&self.data));
        push("variable", "variable", self.variable.as_ref().map(|v| json!(v)));
        push("model", "model", path(&self.model));
        for s in &self.set {
            out.push(Override::from_assignment(s)?);
        }
        Ok(out)
    }

    /// The merged config for `scenario`. The subcommand decides the
    /// scenario, except that `simulate` with a model file runs that model.
    pub fn resolve(&self, scenario: Scenario) -> Result<RunConfig, ConfigError> {
        let mut overrides = self.overrides()?;
        let probe = parse_config(self.config.as_deref(), &overrides)?;
        let scenario = match scenario {
            Scenario::NumberEntry if probe.model.is_some() => Scenario::CustomModel,
            s => s,
        };
        overrides.push(Override::new("scenario", "scenario", json!(scenario)));
        parse_config(self.config.as_deref(), &overrides)
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    /// Idle seconds before a session is aborted.
    #[arg(long, default_value_t = StoreConfig::default().ttl_secs)]
    pub ttl_secs: u64,
    #[arg(long, default_value_t = StoreConfig::default().max_sessions)]
    pub max_sessions: usize,
    /// Directory of browser client assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Simulate(args) => batch(&args, Scenario::NumberEntry),
        Command::Dyad(args) => batch(&args, Scenario::Dyad),
        Command::Blanket(args) => batch(&args, Scenario::Blanket),
        Command::ValidateModel { file } => validate_model(&file),
        Command::Serve(args) => serve(args),
    }
}

fn batch(args: &RunArgs, scenario: Scenario) -> i32 {
    let cfg = match args.resolve(scenario) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let out = match run_batch(&cfg) {
        Ok(out) => out,
        Err(e @ aif_core::Error::Io { .. }) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    report(&cfg, &out)
}

fn report(cfg: &RunConfig, out: &BatchOutput) -> i32 {
    let summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    match &cfg.out {
        Some(dir) => match emit_results(out, dir) {
            Ok(paths) => {
                println!("{summary}");
                eprintln!("wrote {} files to {}", paths.len(), dir.display());
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_RUNTIME;
            }
        },
        None => {
            print!("{}", out.csv);
            eprintln!("{summary}");
        }
    }
    for f in &out.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    if out.failures.is_empty() {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    }
}

fn validate_model(file: &Path) -> i32 {
    let text = match std::fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", file.display());
            return EXIT_CONFIG;
        }
    };
    match GenerativeModel::from_json_str(&text) {
        Ok(m) => {
            println!(
                "ok: {} states, {} actions, {} observations",
                m.num_states, m.num_actions, m.num_obs
            );
            EXIT_OK
        }
        Err(aif_core::Error::InvalidModel(violations)) => {
            for v in &violations {
                println!("{v}");
            }
            eprintln!("{} violation(s) in {}", violations.len(), file.display());
            EXIT_CONFIG
        }
        Err(e) => {
            eprintln!("{}: {e}", file.display());
            EXIT_CONFIG
        }
    }
}

fn serve(args: ServeArgs) -> i32 {
    let opts = ServeOptions {
        store: StoreConfig {
            ttl_secs: args.ttl_secs,
            max_sessions: args.max_sessions,
        },
        static_dir: args.static_dir,
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    rt.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(args.addr).await {
            Ok(l) => l,
            Err(e) => {
                eprintln!("cannot bind {}: {e}", args.addr);
                return EXIT_RUNTIME;
            }
        };
        eprintln!("listening on http://{}", args.addr);
        match server::serve(listener, opts).await {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_RUNTIME
            }
        }
    })
}
