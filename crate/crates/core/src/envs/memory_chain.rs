//! Remember one bit for a fixed number of steps, then answer a query.
//!
//! Observation channels: `[context bit, t/length, query flag]`. The context
//! bit (+-1) is visible only at t = 0. At t = length the query flag turns on
//! and the next action is scored: +1 for recalling the bit, -1 otherwise.
//! The episode ends right after the query.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::{Error, Result};

pub struct MemoryChain {
    length: usize,
    rng: ChaCha8Rng,
    bit: f64,
    t: usize,
    phase: Phase,
}

impl MemoryChain {
    pub fn new(length: usize, seed: u64) -> Result<Self> {
        if length < 1 {
            return Err(Error::config("memory_chain: length must be >= 1"));
        }
        Ok(MemoryChain {
            length,
            rng: ChaCha8Rng::seed_from_u64(seed),
            bit: 0.0,
            t: 0,
            phase: Phase::NeedsReset,
        })
    }

    fn obs(&self) -> Vec<f64> {
        let context = if self.t == 0 { self.bit } else { 0.0 };
        let query = if self.t == self.length { 1.0 } else { 0.0 };
        vec![context, self.t as f64 / self.length as f64, query]
    }
}

impl Environment for MemoryChain {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 3,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: self.length + 1,
            reward_bound: 1.0,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.bit = if self.rng.gen::<bool>() { 1.0 } else { -1.0 };
        self.t = 0;
        self.phase = Phase::Running;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        let a = action.discrete();
        if self.t == self.length {
            // query step: score the answer
            let guess = if a == 1 { 1.0 } else { -1.0 };
            let reward = if guess == self.bit { 1.0 } else { -1.0 };
            self.phase = Phase::NeedsReset;
            return Ok(EnvStep { obs: vec![0.0, 1.0, 0.0], reward, terminal: true });
        }
        self.t += 1;
        Ok(EnvStep { obs: self.obs(), reward: 0.0, terminal: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_episode(env: &mut MemoryChain, answer: impl Fn(f64) -> usize) -> f64 {
        let obs = env.reset();
        let bit = obs[0];
        let mut total = 0.0;
        loop {
            let s = env.step(&Action::Discrete(answer(bit))).unwrap();
            total += s.reward;
            if s.terminal {
                return total;
            }
        }
    }

    #[test]
    fn replaying_the_bit_scores_one() {
        let mut env = MemoryChain::new(4, 0).unwrap();
        for _ in 0..20 {
            let r = run_episode(&mut env, |bit| if bit > 0.0 { 1 } else { 0 });
            assert_eq!(r, 1.0);
        }
    }

    #[test]
    fn negating_the_bit_scores_minus_one() {
        let mut env = MemoryChain::new(4, 0).unwrap();
        for _ in 0..20 {
            let r = run_episode(&mut env, |bit| if bit > 0.0 { 0 } else { 1 });
            assert_eq!(r, -1.0);
        }
    }

    #[test]
    fn random_agent_has_zero_expected_reward() {
        // the outcome is a fair +-1 coin; 10^4 episodes put a 4-sigma
        // confidence band of 0.04 around the mean
        let mut env = MemoryChain::new(4, 7).unwrap();
        let mut policy_rng = ChaCha8Rng::seed_from_u64(99);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            env.reset();
            loop {
                let a = if policy_rng.gen::<bool>() { 1 } else { 0 };
                let s = env.step(&Action::Discrete(a)).unwrap();
                total += s.reward;
                if s.terminal {
                    break;
                }
            }
        }
        assert!((total / n as f64).abs() < 0.04);
    }

    #[test]
    fn episode_runs_length_plus_one_steps() {
        let mut env = MemoryChain::new(4, 1).unwrap();
        env.reset();
        let mut n = 0;
        loop {
            let s = env.step(&Action::Discrete(0)).unwrap();
            n += 1;
            if s.terminal {
                break;
            }
            // query flag only at t == length
            assert_eq!(s.obs[2], if n == 4 { 1.0 } else { 0.0 });
            assert_eq!(s.obs[0], 0.0, "context hidden after t = 0");
        }
        assert_eq!(n, 5);
    }

    #[test]
    fn step_after_terminal_is_rejected() {
        let mut env = MemoryChain::new(1, 0).unwrap();
        env.reset();
        loop {
            if env.step(&Action::Discrete(0)).unwrap().terminal {
                break;
            }
        }
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn step_before_reset_is_rejected() {
        let mut env = MemoryChain::new(1, 0).unwrap();
        assert!(env.step(&Action::Discrete(0)).is_err());
    }
}
