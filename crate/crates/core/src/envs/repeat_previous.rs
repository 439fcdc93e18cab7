//! Echo-with-lag task. Each step shows a random one-hot symbol; the action is
//! scored against the symbol from `k` steps ago. Rewards are scaled so a
//! perfect episode totals +1 and an always-wrong one totals -1; the first `k`
//! steps are unscored.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::{Error, Result};

pub struct RepeatPrevious {
    k: usize,
    n_symbols: usize,
    episode_len: usize,
    rng: ChaCha8Rng,
    symbols: Vec<usize>,
    t: usize,
    phase: Phase,
}

impl RepeatPrevious {
    pub fn new(k: usize, n_symbols: usize, episode_len: usize, seed: u64) -> Result<Self> {
        if n_symbols < 2 {
            return Err(Error::config("repeat_previous: n_symbols must be >= 2"));
        }
        if episode_len <= k {
            return Err(Error::config("repeat_previous: episode_len must exceed the lag k"));
        }
        Ok(RepeatPrevious {
            k,
            n_symbols,
            episode_len,
            rng: ChaCha8Rng::seed_from_u64(seed),
            symbols: Vec::new(),
            t: 0,
            phase: Phase::NeedsReset,
        })
    }

    fn scored_steps(&self) -> usize {
        self.episode_len - self.k
    }

    fn draw_obs(&mut self) -> Vec<f64> {
        let s = self.rng.gen_range(0..self.n_symbols);
        self.symbols.push(s);
        let mut o = vec![0.0; self.n_symbols];
        o[s] = 1.0;
        o
    }
}

impl Environment for RepeatPrevious {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: self.n_symbols,
            action_space: ActionSpace::Discrete(self.n_symbols),
            max_episode_steps: self.episode_len,
            reward_bound: 1.0 / self.scored_steps() as f64,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.symbols.clear();
        self.t = 0;
        self.phase = Phase::Running;
        self.draw_obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        let a = action.discrete();
        let unit = 1.0 / self.scored_steps() as f64;
        let reward = if self.t >= self.k {
            if a == self.symbols[self.t - self.k] {
                unit
            } else {
                -unit
            }
        } else {
            0.0
        };
        self.t += 1;
        let terminal = self.t == self.episode_len;
        if terminal {
            self.phase = Phase::NeedsReset;
        }
        let obs = if terminal { vec![0.0; self.n_symbols] } else { self.draw_obs() };
        Ok(EnvStep { obs, reward, terminal })
    }
}
