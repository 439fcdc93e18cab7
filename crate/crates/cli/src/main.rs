//! Command-line entry points: `train`, `eval`, `verify`, `sweep`.
//!
//! Configuration resolution, lowest to highest precedence:
//! built-in defaults < `--config` TOML file < `RTRRL_*` environment
//! variables < dotted command-line overrides.
//!
//! Overrides mirror the config tree with dotted paths:
//!
//! ```text
//! rtrrl train --env memory_chain --env.length 4 --seed 0
//! rtrrl train --alg.mode rflo --alg.feedback fa --hp.gamma 0.95
//! ```
//!
//! Environment variables use `__` for dots: `RTRRL_HP__GAMMA=0.95`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use rtrrl::agent::{self, params_from_snapshot, params_to_snapshot};
use rtrrl::config::TrainConfig;
use rtrrl::envs::parse_env_string;
use rtrrl::io::metrics::{FileSink, MetricRecord, MetricSink};
use rtrrl::verify::{run_all, VerifyOptions};

#[derive(Parser)]
#[command(name = "rtrrl", version, about = "Online recurrent reinforcement learning")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train an agent and write metrics plus parameter snapshots.
    Train {
        /// TOML config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: runs/<run_id>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stamp wall-clock time into metric records (breaks byte-level
        /// reproducibility of the logs).
        #[arg(long)]
        timing: bool,
        /// Dotted config overrides: --hp.gamma 0.95 --env memory_chain ...
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Load a snapshot and run a frozen-parameter evaluation.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        /// Dotted overrides applied to the embedded config (e.g.
        /// --run.eval_steps 1000 --run.seed 7).
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Run the property suite (gradient equivalences, TD convergence,
    /// loop fidelity, deterministic replay).
    Verify {
        /// Smaller instances, finishes in seconds.
        #[arg(long)]
        quick: bool,
        /// Test hook: corrupt the named property so it must fail.
        #[arg(long)]
        inject_fault: Option<String>,
    },
    /// Train several seeds in parallel and report the median best reward.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of seeds (0..n).
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Train { config, out, timing, overrides } => cmd_train(config, out, timing, &overrides),
        Cmd::Eval { snapshot, overrides } => cmd_eval(&snapshot, &overrides),
        Cmd::Verify { quick, inject_fault } => return cmd_verify(quick, inject_fault),
        Cmd::Sweep { config, seeds, out, overrides } => cmd_sweep(config, seeds, out, &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = match e.downcast_ref::<rtrrl::Error>() {
                Some(rtrrl::Error::Config(_)) | Some(rtrrl::Error::Protocol(_)) => 2,
                Some(rtrrl::Error::NumericFault { .. }) => 3,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

/// Parse a raw override value into the most specific TOML type.
fn toml_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        toml::Value::Boolean(b)
    } else if let Ok(i) = raw.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = raw.parse::<f64>() {
        toml::Value::Float(f)
    } else {
        toml::Value::String(raw.to_string())
    }
}

fn set_path(tree: &mut toml::Value, path: &[&str], value: toml::Value) -> Result<()> {
    let mut node = tree;
    for key in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("config path {} is not a table", key))?;
        node = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| anyhow!("config path {} is not a table", path.join(".")))?;
    table.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

/// `--env name{k=v,...}` replaces the whole env table.
fn set_env_spec(tree: &mut toml::Value, spec: &str) -> Result<()> {
    let (name, params) = parse_env_string(spec)?;
    let mut table = toml::map::Map::new();
    table.insert("name".into(), toml::Value::String(name));
    for (k, v) in params {
        let tv = match v {
            rtrrl::envs::ParamValue::Bool(b) => toml::Value::Boolean(b),
            rtrrl::envs::ParamValue::Int(i) => toml::Value::Integer(i),
            rtrrl::envs::ParamValue::Float(f) => toml::Value::Float(f),
            rtrrl::envs::ParamValue::Str(s) => toml::Value::String(s),
        };
        table.insert(k, tv);
    }
    set_path(tree, &["env"], toml::Value::Table(table))
}

fn apply_override_token(tree: &mut toml::Value, key: &str, value: &str) -> Result<()> {
    match key {
        "env" => set_env_spec(tree, value),
        "seed" => set_path(tree, &["run", "seed"], toml_scalar(value)),
        other => {
            let path: Vec<&str> = other.split('.').collect();
            if path.iter().any(|p| p.is_empty()) {
                bail!("malformed override key: {other}");
            }
            set_path(tree, &path, toml_scalar(value))
        }
    }
}

fn merge_tables(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge_tables(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// defaults < file < environment < flags.
fn resolve_config(config_file: Option<&Path>, overrides: &[String]) -> Result<TrainConfig> {
    let mut tree = toml::Value::try_from(TrainConfig::default())?;

    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let file_tree: toml::Value =
            text.parse().with_context(|| format!("parsing {}", path.display()))?;
        merge_tables(&mut tree, file_tree);
    }

    let mut env_pairs: Vec<(String, String)> = std::env::vars()
        .filter_map(|(k, v)| {
            k.strip_prefix("RTRRL_").map(|rest| (rest.to_lowercase().replace("__", "."), v))
        })
        .collect();
    env_pairs.sort();
    for (key, value) in env_pairs {
        apply_override_token(&mut tree, &key, &value)
            .with_context(|| format!("environment override RTRRL_{key}"))?;
    }

    let mut it = overrides.iter().peekable();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .ok_or_else(|| rtrrl::Error::config(format!("expected --key, got {tok}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| rtrrl::Error::config(format!("missing value for --{key}")))?;
                (key.to_string(), v.clone())
            }
        };
        apply_override_token(&mut tree, &key, &value)
            .with_context(|| format!("flag override --{key}"))?;
    }

    let cfg: TrainConfig = tree
        .try_into()
        .map_err(|e| rtrrl::Error::config(format!("invalid configuration: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Sink adapter that stamps elapsed seconds into each record.
struct TimingSink {
    inner: FileSink,
    start: Instant,
}

impl MetricSink for TimingSink {
    fn config_header(&mut self, config_json: &str) -> rtrrl::Result<()> {
        self.inner.config_header(config_json)
    }
    fn record(&mut self, r: &MetricRecord) -> rtrrl::Result<()> {
        let mut r = r.clone();
        r.wall_time = Some(self.start.elapsed().as_secs_f64());
        self.inner.record(&r)
    }
    fn flush(&mut self) -> rtrrl::Result<()> {
        self.inner.flush()
    }
}

fn cmd_train(
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    timing: bool,
    overrides: &[String],
) -> Result<()> {
    let cfg = resolve_config(config.as_deref(), overrides)?;
    let run_id = cfg.run_id();
    let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    std::fs::create_dir_all(&out_dir)?;

    let file_sink = FileSink::create(&out_dir, "metrics")?;
    let mut sink: Box<dyn MetricSink> = if timing {
        Box::new(TimingSink { inner: file_sink, start: Instant::now() })
    } else {
        Box::new(file_sink)
    };

    let res = agent::train(&cfg, sink.as_mut())?;

    params_to_snapshot(&cfg, &res.params, res.obs_norm.as_ref())
        .save(&out_dir.join("final.snapshot"))?;
    params_to_snapshot(&cfg, &res.best_params, res.obs_norm.as_ref())
        .save(&out_dir.join("best.snapshot"))?;

    println!(
        "run {run_id}: best eval reward {:.4} (epoch {}), final eval {:.4}, {} steps, {} episodes",
        res.best_eval, res.best_epoch, res.final_eval, res.steps, res.episodes
    );
    println!("metrics and snapshots in {}", out_dir.display());
    Ok(())
}

fn cmd_eval(snapshot: &Path, overrides: &[String]) -> Result<()> {
    let snap = rtrrl::io::snapshot::Snapshot::load(snapshot)?;
    let (embedded_cfg, params, obs_norm) = params_from_snapshot(&snap)?;

    // re-resolve with the embedded config as the base layer
    let mut tree = toml::Value::try_from(&embedded_cfg)?;
    let mut it = overrides.iter().peekable();
    while let Some(tok) = it.next() {
        let key = tok
            .strip_prefix("--")
            .ok_or_else(|| rtrrl::Error::config(format!("expected --key, got {tok}")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| rtrrl::Error::config(format!("missing value for --{key}")))?;
                (key.to_string(), v.clone())
            }
        };
        apply_override_token(&mut tree, &key, &value)?;
    }
    let cfg: TrainConfig =
        tree.try_into().map_err(|e| rtrrl::Error::config(format!("invalid config: {e}")))?;
    cfg.validate()?;

    let report = agent::evaluate(&cfg, &params, obs_norm.as_ref())?;
    println!(
        "mean episodic reward {:.4} over {} episodes ({} steps)",
        report.mean_episode_reward, report.episodes, cfg.run.eval_steps
    );
    if let Some(p) = &report.mean_action_probs {
        let formatted: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
        println!("mean action distribution: [{}]", formatted.join(", "));
    }
    Ok(())
}

fn cmd_verify(quick: bool, inject_fault: Option<String>) -> ExitCode {
    let opts = VerifyOptions { quick, inject_fault };
    let results = run_all(&opts);
    let mut all_pass = true;
    for r in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", r.name, r.detail);
        all_pass &= r.pass;
    }
    if all_pass {
        println!("all {} properties passed", results.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

fn cmd_sweep(
    config: Option<PathBuf>,
    seeds: u64,
    out: Option<PathBuf>,
    overrides: &[String],
) -> Result<()> {
    if seeds == 0 {
        bail!("sweep needs at least one seed");
    }
    let cfg = resolve_config(config.as_deref(), overrides)?;
    let out_dir = out.unwrap_or_else(|| PathBuf::from("runs").join(format!("sweep-{}", cfg.run_id())));
    std::fs::create_dir_all(&out_dir)?;

    let seed_list: Vec<u64> = (0..seeds).collect();
    let out_ref = &out_dir;
    let results = agent::sweep(&cfg, &seed_list, |seed| {
        let dir = out_ref.join(format!("seed{seed}"));
        Ok(Box::new(FileSink::create(&dir, "metrics")?))
    })?;

    let mut best: Vec<(u64, f64)> = results.iter().map(|(s, r)| (*s, r.best_eval)).collect();
    for (seed, res) in &results {
        let dir = out_dir.join(format!("seed{seed}"));
        let mut cfg_s = cfg.clone();
        cfg_s.run.seed = *seed;
        params_to_snapshot(&cfg_s, &res.best_params, res.obs_norm.as_ref())
            .save(&dir.join("best.snapshot"))?;
        println!("seed {seed}: best eval {:.4} ({} steps)", res.best_eval, res.steps);
    }
    best.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let median = best[best.len() / 2].1;
    println!("median best eval over {} seeds: {median:.4}", best.len());
    println!("results in {}", out_dir.display());
    Ok(())
}
