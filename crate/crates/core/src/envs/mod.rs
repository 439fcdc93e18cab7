//! Deterministic-seeded POMDP benchmark environments with a uniform
//! reset/step protocol, plus a string-keyed registry used by the CLI.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod bandit;
mod cartpole;
mod deep_sea;
mod memory_chain;
mod repeat_previous;
mod umbrella;

pub use bandit::BernoulliBandit;
pub use cartpole::{CartPole, ObsMask};
pub use deep_sea::DeepSea;
pub use memory_chain::MemoryChain;
pub use repeat_previous::RepeatPrevious;
pub use umbrella::UmbrellaChain;

/// One environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Static description of an environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub obs_dim: usize,
    pub action_space: ActionSpace,
    pub max_episode_steps: usize,
    /// Per-step |reward| bound the environment promises to respect.
    pub reward_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous { dim: usize, low: f64, high: f64 },
}

impl ActionSpace {
    pub fn n_discrete(&self) -> Option<usize> {
        match self {
            ActionSpace::Discrete(n) => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl Action {
    pub fn discrete(&self) -> usize {
        match self {
            Action::Discrete(a) => *a,
            _ => panic!("expected a discrete action"),
        }
    }
}

/// The reset/step protocol. `reset` must precede the first `step`; stepping a
/// terminated episode without a reset is rejected.
pub trait Environment: Send {
    fn spec(&self) -> EnvSpec;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<EnvStep>;
}

/// Shared protocol bookkeeping for the concrete environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Phase {
    NeedsReset,
    Running,
}

pub(crate) fn check_running(phase: Phase) -> Result<()> {
    match phase {
        Phase::Running => Ok(()),
        Phase::NeedsReset => Err(Error::Protocol(
            "step called before reset (or after a terminal transition)".into(),
        )),
    }
}

/// A typed environment parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Bool(b) => write!(f, "{b}"),
            ParamValue::Int(i) => write!(f, "{i}"),
            ParamValue::Float(x) => write!(f, "{x}"),
            ParamValue::Str(s) => write!(f, "{s}"),
        }
    }
}

pub type EnvParams = BTreeMap<String, ParamValue>;

fn get_usize(params: &EnvParams, key: &str, default: usize) -> Result<usize> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Int(i)) if *i >= 0 => Ok(*i as usize),
        Some(ParamValue::Float(x)) if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
        Some(v) => Err(Error::config(format!("env param {key}={v} is not a non-negative integer"))),
    }
}

fn get_f64(params: &EnvParams, key: &str, default: f64) -> Result<f64> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Float(x)) => Ok(*x),
        Some(ParamValue::Int(i)) => Ok(*i as f64),
        Some(v) => Err(Error::config(format!("env param {key}={v} is not a number"))),
    }
}

fn get_str<'a>(params: &'a EnvParams, key: &str, default: &'a str) -> Result<&'a str> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Str(s)) => Ok(s),
        Some(v) => Err(Error::config(format!("env param {key}={v} is not a string"))),
    }
}

fn reject_unknown(params: &EnvParams, known: &[&str]) -> Result<()> {
    for k in params.keys() {
        if !known.contains(&k.as_str()) {
            return Err(Error::config(format!("unknown env param: {k}")));
        }
    }
    Ok(())
}

/// Construct a registered environment by name.
pub fn make_env(name: &str, params: &EnvParams, seed: u64) -> Result<Box<dyn Environment>> {
    match name {
        "memory_chain" => {
            reject_unknown(params, &["length"])?;
            let length = get_usize(params, "length", 4)?;
            Ok(Box::new(MemoryChain::new(length, seed)?))
        }
        "deep_sea" => {
            reject_unknown(params, &["size"])?;
            let size = get_usize(params, "size", 4)?;
            Ok(Box::new(DeepSea::new(size, seed)?))
        }
        "cartpole" => {
            reject_unknown(params, &["mask", "noise_std"])?;
            let mask = match get_str(params, "mask", "vel")? {
                "vel" => ObsMask::Velocities,
                "pos" => ObsMask::Positions,
                "full" => ObsMask::Full,
                other => {
                    return Err(Error::config(format!(
                        "cartpole mask must be vel|pos|full, got {other}"
                    )))
                }
            };
            let noise_std = get_f64(params, "noise_std", 0.0)?;
            Ok(Box::new(CartPole::new(mask, noise_std, seed)))
        }
        "bernoulli_bandit" => {
            reject_unknown(params, &["episode_len"])?;
            let episode_len = get_usize(params, "episode_len", 100)?;
            Ok(Box::new(BernoulliBandit::new(episode_len, seed)?))
        }
        "umbrella_chain" => {
            reject_unknown(params, &["chain_len", "n_distractors"])?;
            let chain_len = get_usize(params, "chain_len", 10)?;
            let n_distractors = get_usize(params, "n_distractors", 3)?;
            Ok(Box::new(UmbrellaChain::new(chain_len, n_distractors, seed)?))
        }
        "repeat_previous" => {
            reject_unknown(params, &["k", "n_symbols", "episode_len"])?;
            let k = get_usize(params, "k", 1)?;
            let n_symbols = get_usize(params, "n_symbols", 4)?;
            let episode_len = get_usize(params, "episode_len", 52)?;
            Ok(Box::new(RepeatPrevious::new(k, n_symbols, episode_len, seed)?))
        }
        other => Err(Error::config(format!("unknown environment: {other}"))),
    }
}

pub const REGISTERED_ENVS: &[&str] = &[
    "memory_chain",
    "deep_sea",
    "cartpole",
    "bernoulli_bandit",
    "umbrella_chain",
    "repeat_previous",
];

/// Parse `"name{key=value, key=value}"` into name and parameter map.
pub fn parse_env_string(s: &str) -> Result<(String, EnvParams)> {
    let s = s.trim();
    let (name, rest) = match s.find('{') {
        None => (s, ""),
        Some(open) => {
            if !s.ends_with('}') {
                return Err(Error::config(format!("unbalanced braces in env spec: {s}")));
            }
            (&s[..open], &s[open + 1..s.len() - 1])
        }
    };
    if name.is_empty() {
        return Err(Error::config("empty environment name"));
    }
    let mut params = EnvParams::new();
    for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::config(format!("expected key=value in env spec: {pair}")))?;
        params.insert(k.trim().to_string(), parse_param_value(v.trim()));
    }
    Ok((name.to_string(), params))
}

/// Best-effort typed parse: bool, then int, then float, else string.
pub fn parse_param_value(v: &str) -> ParamValue {
    if let Ok(b) = v.parse::<bool>() {
        ParamValue::Bool(b)
    } else if let Ok(i) = v.parse::<i64>() {
        ParamValue::Int(i)
    } else if let Ok(x) = v.parse::<f64>() {
        ParamValue::Float(x)
    } else {
        ParamValue::Str(v.to_string())
    }
}

/// Auto-reset wrapper: the training loop sees a continuing stream. Terminal
/// transitions carry `terminal = true` and the returned observation is
/// already the next episode's reset observation.
pub struct AutoReset {
    inner: Box<dyn Environment>,
}

impl AutoReset {
    pub fn new(inner: Box<dyn Environment>) -> Self {
        AutoReset { inner }
    }

    pub fn spec(&self) -> EnvSpec {
        self.inner.spec()
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.inner.reset()
    }

    pub fn step(&mut self, action: &Action) -> Result<EnvStep> {
        let mut step = self.inner.step(action)?;
        if step.terminal {
            step.obs = self.inner.reset();
        }
        Ok(step)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_env_strings() {
        let (name, params) = parse_env_string("memory_chain{length=16}").unwrap();
        assert_eq!(name, "memory_chain");
        assert_eq!(params.get("length"), Some(&ParamValue::Int(16)));

        let (name, params) = parse_env_string("cartpole{mask=vel, noise_std=0.1}").unwrap();
        assert_eq!(name, "cartpole");
        assert_eq!(params.get("mask"), Some(&ParamValue::Str("vel".into())));
        assert_eq!(params.get("noise_std"), Some(&ParamValue::Float(0.1)));

        let (name, params) = parse_env_string("deep_sea").unwrap();
        assert_eq!(name, "deep_sea");
        assert!(params.is_empty());

        assert!(parse_env_string("deep_sea{size=4").is_err());
        assert!(parse_env_string("").is_err());
    }

    #[test]
    fn unknown_env_and_params_are_config_errors() {
        assert!(make_env("no_such_env", &EnvParams::new(), 0).is_err());
        let mut p = EnvParams::new();
        p.insert("bogus".into(), ParamValue::Int(1));
        assert!(make_env("memory_chain", &p, 0).is_err());
    }

    #[test]
    fn auto_reset_replaces_terminal_observation() {
        let mut env = AutoReset::new(make_env("memory_chain", &EnvParams::new(), 3).unwrap());
        let first = env.reset();
        let mut steps = 0;
        loop {
            let s = env.step(&Action::Discrete(0)).unwrap();
            steps += 1;
            if s.terminal {
                // reset observation exposes a context bit and zero time
                assert_eq!(s.obs.len(), first.len());
                assert!(s.obs[0].abs() == 1.0);
                assert_eq!(s.obs[1], 0.0);
                break;
            }
            assert!(steps < 100);
        }
        // and the stream continues without an explicit reset
        assert!(env.step(&Action::Discrete(0)).is_ok());
    }
}
