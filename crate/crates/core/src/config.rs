//! Run configuration. Defaults follow the reference hyperparameter set:
//! 32 neurons, gamma 0.99, per-head learning rates 1e-4, actor trace scale
//! 1.0, entropy rate 1e-5, eligibility decays 0.9, dt 1.0, patience 20,
//! 50M-step budget, Adam, gradient-norm clip 1.0, batch size 1.

use serde::{Deserialize, Serialize};

use crate::ac::{FeedbackMode, OptimizerKind};
use crate::envs::EnvParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Ctrnn,
    Lru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    Rtrl,
    Rflo,
    DiagRtrl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub name: String,
    #[serde(flatten)]
    pub params: EnvParams,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig { name: "memory_chain".into(), params: EnvParams::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgConfig {
    pub cell: CellKind,
    pub mode: GradMode,
    pub feedback: FeedbackMode,
    /// Train the CT-RNN time constants through the tau trace.
    pub train_tau: bool,
    /// Zero hidden state, Jacobian trace and eligibility traces at episode
    /// boundaries.
    pub reset_hidden: bool,
}

impl Default for AlgConfig {
    fn default() -> Self {
        AlgConfig {
            cell: CellKind::Ctrnn,
            mode: GradMode::Rflo,
            feedback: FeedbackMode::Fa,
            train_tau: true,
            reset_hidden: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    /// Number of neurons.
    pub n: usize,
    pub gamma: f64,
    pub alpha_a: f64,
    pub alpha_c: f64,
    pub alpha_r: f64,
    /// Actor trace scale inside the recurrent eligibility trace.
    pub eta_a: f64,
    /// Entropy rate.
    pub eta_h: f64,
    pub lambda_a: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
    /// Euler step; substeps per environment step are k = 1/dt.
    pub dt: f64,
    /// Epochs without improvement before stopping.
    pub patience: u64,
    pub max_steps: u64,
    pub optimizer: OptimizerKind,
    /// Per-block gradient-norm clip; 0 disables.
    pub clip: f64,
    pub normalize_obs: bool,
    pub action_epsilon: f64,
    /// Recurrent parameters are applied every this many steps (gradients
    /// accumulate in between).
    pub update_period: u64,
    /// Exponential per-step decay rate for the recurrent learning rate:
    /// alpha_r(t) = alpha_r * exp(-lr_decay * t). 0 disables.
    pub lr_decay: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            n: 32,
            gamma: 0.99,
            alpha_a: 1e-4,
            alpha_c: 1e-4,
            alpha_r: 1e-4,
            eta_a: 1.0,
            eta_h: 1e-5,
            lambda_a: 0.9,
            lambda_c: 0.9,
            lambda_r: 0.9,
            dt: 1.0,
            patience: 20,
            max_steps: 50_000_000,
            optimizer: OptimizerKind::Adam,
            clip: 1.0,
            normalize_obs: false,
            action_epsilon: 0.0,
            update_period: 1,
            lr_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// One epoch = this many environment steps followed by an evaluation.
    pub epoch_steps: u64,
    /// Environment steps per evaluation.
    pub eval_steps: u64,
    /// Emit a per-step metric record every this many steps; 0 disables.
    pub log_every: u64,
    /// Stop once the best evaluation reaches this reward.
    pub stop_at_reward: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            epoch_steps: 100_000,
            eval_steps: 10_000,
            log_every: 0,
            stop_at_reward: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub alg: AlgConfig,
    pub hp: HyperParams,
    pub run: RunConfig,
}

impl TrainConfig {
    /// Substeps per environment step implied by dt.
    pub fn k(&self) -> usize {
        (1.0 / self.hp.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let hp = &self.hp;
        if hp.n == 0 {
            return Err(Error::config("n must be positive"));
        }
        if !(0.0..1.0).contains(&hp.gamma) {
            return Err(Error::config("gamma must be in [0, 1)"));
        }
        for (name, l) in [("lambda_a", hp.lambda_a), ("lambda_c", hp.lambda_c), ("lambda_r", hp.lambda_r)]
        {
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::config(format!("{name} must be in [0, 1]")));
            }
        }
        if !(hp.dt > 0.0 && hp.dt <= 1.0) {
            return Err(Error::config("dt must be in (0, 1]"));
        }
        let k = 1.0 / hp.dt;
        if (k - k.round()).abs() > 1e-9 || (hp.dt * k.round() - 1.0).abs() > 1e-12 {
            return Err(Error::config("dt must be the reciprocal of an integer"));
        }
        if hp.update_period == 0 {
            return Err(Error::config("update_period must be >= 1"));
        }
        if hp.max_steps == 0 || self.run.epoch_steps == 0 || self.run.eval_steps == 0 {
            return Err(Error::config("max_steps, epoch_steps and eval_steps must be positive"));
        }
        if !(0.0..=1.0).contains(&hp.action_epsilon) {
            return Err(Error::config("action_epsilon must be in [0, 1]"));
        }
        match (self.alg.cell, self.alg.mode) {
            (CellKind::Ctrnn, GradMode::Rtrl) | (CellKind::Ctrnn, GradMode::Rflo) => {}
            (CellKind::Lru, GradMode::DiagRtrl) => {}
            (cell, mode) => {
                return Err(Error::config(format!(
                    "gradient mode {mode:?} does not apply to cell {cell:?}"
                )))
            }
        }
        Ok(())
    }

    /// Deterministic identifier derived from the full configuration
    /// (FNV-1a over the canonical JSON encoding), so reruns of the same
    /// config produce byte-identical logs.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut hash: u64 = 0xcbf29ce484222325;
        for b in json.as_bytes() {
            hash ^= u64::from(*b);
            hash = hash.wrapping_mul(0x100000001b3);
        }
        format!("{hash:016x}")
    }
}
