//! N x N exploration grid. The agent descends one row per step; one action
//! moves right at a small cost, the other moves left for free, and which
//! physical action means "right" is flipped per column by a fixed seeded
//! mask. Only the bottom-right cell pays out.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::{Error, Result};

pub struct DeepSea {
    size: usize,
    /// Per-column action flip, sampled once per instance.
    flips: Vec<bool>,
    row: usize,
    col: usize,
    phase: Phase,
}

impl DeepSea {
    pub fn new(size: usize, seed: u64) -> Result<Self> {
        if size < 2 {
            return Err(Error::config("deep_sea: size must be >= 2"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flips = (0..size).map(|_| rng.gen::<bool>()).collect();
        Ok(DeepSea { size, flips, row: 0, col: 0, phase: Phase::NeedsReset })
    }

    /// The physical action that moves right from `col` (tests and scripted
    /// policies need it to undo the flip mask).
    pub fn right_action(&self, col: usize) -> usize {
        if self.flips[col] {
            0
        } else {
            1
        }
    }

    fn obs(&self) -> Vec<f64> {
        let mut o = vec![0.0; 2 * self.size];
        o[self.row.min(self.size - 1)] = 1.0;
        o[self.size + self.col] = 1.0;
        o
    }
}

impl Environment for DeepSea {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 2 * self.size,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: self.size,
            reward_bound: 1.0,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.row = 0;
        self.col = 0;
        self.phase = Phase::Running;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        let a = action.discrete();
        let move_right = (a == 1) != self.flips[self.col];
        let mut reward = 0.0;
        if move_right {
            reward -= 0.01 / self.size as f64;
            self.col = (self.col + 1).min(self.size - 1);
        } else {
            self.col = self.col.saturating_sub(1);
        }
        self.row += 1;
        let terminal = self.row == self.size;
        if terminal {
            if self.col == self.size - 1 {
                reward += 1.0;
            }
            self.phase = Phase::NeedsReset;
        }
        Ok(EnvStep { obs: self.obs(), reward, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rollout(env: &mut DeepSea, mut policy: impl FnMut(&DeepSea, usize) -> usize) -> f64 {
        env.reset();
        let mut total = 0.0;
        let mut col = 0usize;
        loop {
            let a = policy(env, col);
            let before = env.col;
            let s = env.step(&Action::Discrete(a)).unwrap();
            let _ = before;
            col = env.col;
            total += s.reward;
            if s.terminal {
                return total;
            }
        }
    }

    #[test]
    fn always_right_returns_099() {
        let mut env = DeepSea::new(4, 11).unwrap();
        let r = rollout(&mut env, |e, col| e.right_action(col));
        assert!((r - 0.99).abs() < 1e-12);
    }

    #[test]
    fn always_left_returns_zero() {
        let mut env = DeepSea::new(4, 11).unwrap();
        let r = rollout(&mut env, |e, col| 1 - e.right_action(col));
        assert_eq!(r, 0.0);
    }

    /// Expected random-policy return by exhaustive enumeration over all 2^N
    /// physical action strings, checked against a Monte-Carlo estimate.
    #[test]
    fn random_policy_matches_enumeration_oracle() {
        let size = 6usize;
        let mut env = DeepSea::new(size, 5).unwrap();

        let mut exact = 0.0;
        let strings = 1usize << size;
        for bits in 0..strings {
            env.reset();
            let mut total = 0.0;
            for t in 0..size {
                let a = (bits >> t) & 1;
                let s = env.step(&Action::Discrete(a)).unwrap();
                total += s.reward;
                if s.terminal {
                    break;
                }
            }
            exact += total;
        }
        exact /= strings as f64;

        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let episodes = 20_000;
        let mut mc = 0.0;
        for _ in 0..episodes {
            env.reset();
            loop {
                let a = usize::from(rng.gen::<bool>());
                let s = env.step(&Action::Discrete(a)).unwrap();
                mc += s.reward;
                if s.terminal {
                    break;
                }
            }
        }
        mc /= episodes as f64;
        assert!((mc - exact).abs() < 0.01, "mc {mc} vs exact {exact}");
    }

    #[test]
    fn episode_is_exactly_size_steps_and_observation_is_one_hot() {
        let mut env = DeepSea::new(5, 2).unwrap();
        let obs = env.reset();
        assert_eq!(obs.iter().filter(|&&v| v == 1.0).count(), 2);
        let mut n = 0;
        loop {
            let s = env.step(&Action::Discrete(0)).unwrap();
            n += 1;
            assert_eq!(s.obs.len(), 10);
            assert_eq!(s.obs.iter().filter(|&&v| v == 1.0).count(), 2);
            if s.terminal {
                break;
            }
        }
        assert_eq!(n, 5);
        assert!(env.step(&Action::Discrete(0)).is_err());
    }

    #[test]
    fn flips_are_fixed_across_episodes() {
        let env1 = DeepSea::new(8, 42).unwrap();
        let env2 = DeepSea::new(8, 42).unwrap();
        assert_eq!(env1.flips, env2.flips);
    }
}
