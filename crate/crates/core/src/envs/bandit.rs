//! Two-armed Bernoulli bandit with per-episode arm quality. Arm 0 pays with
//! probability p and arm 1 with probability 1 - p, where p is drawn fresh
//! each episode from {0.1, 0.9}. The observation is [previous reward,
//! t/episode_len]; identifying the good arm requires integrating reward
//! history, which is what the recurrent agent is for.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::{Error, Result};

pub struct BernoulliBandit {
    episode_len: usize,
    rng: ChaCha8Rng,
    p_arm0: f64,
    t: usize,
    prev_reward: f64,
    phase: Phase,
}

impl BernoulliBandit {
    pub fn new(episode_len: usize, seed: u64) -> Result<Self> {
        if episode_len < 1 {
            return Err(Error::config("bernoulli_bandit: episode_len must be >= 1"));
        }
        Ok(BernoulliBandit {
            episode_len,
            rng: ChaCha8Rng::seed_from_u64(seed),
            p_arm0: 0.5,
            t: 0,
            prev_reward: 0.0,
            phase: Phase::NeedsReset,
        })
    }

    /// The arm with success probability 0.9 this episode (for oracle tests).
    pub fn good_arm(&self) -> usize {
        if self.p_arm0 > 0.5 {
            0
        } else {
            1
        }
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.prev_reward, self.t as f64 / self.episode_len as f64]
    }
}

impl Environment for BernoulliBandit {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 2,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: self.episode_len,
            reward_bound: 1.0,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.p_arm0 = if self.rng.gen::<bool>() { 0.9 } else { 0.1 };
        self.t = 0;
        self.prev_reward = 0.0;
        self.phase = Phase::Running;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        let p = match action.discrete() {
            0 => self.p_arm0,
            1 => 1.0 - self.p_arm0,
            a => return Err(Error::config(format!("bandit: invalid arm {a}"))),
        };
        let reward = if self.rng.gen::<f64>() < p { 1.0 } else { 0.0 };
        self.t += 1;
        self.prev_reward = reward;
        let terminal = self.t == self.episode_len;
        if terminal {
            self.phase = Phase::NeedsReset;
        }
        Ok(EnvStep { obs: self.obs(), reward, terminal })
    }
}
