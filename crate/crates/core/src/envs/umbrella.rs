//! Credit assignment through distractor noise. The first action decides
//! whether to pick up the umbrella; every later action is ignored. All
//! intermediate steps pay random +-1 distractor rewards, and the final step
//! pays +1 if the umbrella choice matched the (visible) need flag, -1
//! otherwise. Observation: [need, have, time_to_live, distractor bits].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::{Error, Result};

pub struct UmbrellaChain {
    chain_len: usize,
    n_distractors: usize,
    rng: ChaCha8Rng,
    need: f64,
    have: f64,
    t: usize,
    phase: Phase,
}

impl UmbrellaChain {
    pub fn new(chain_len: usize, n_distractors: usize, seed: u64) -> Result<Self> {
        if chain_len < 1 {
            return Err(Error::config("umbrella_chain: chain_len must be >= 1"));
        }
        Ok(UmbrellaChain {
            chain_len,
            n_distractors,
            rng: ChaCha8Rng::seed_from_u64(seed),
            need: 0.0,
            have: 0.0,
            t: 0,
            phase: Phase::NeedsReset,
        })
    }

    fn obs(&mut self) -> Vec<f64> {
        let mut o = Vec::with_capacity(3 + self.n_distractors);
        o.push(self.need);
        o.push(self.have);
        o.push(1.0 - self.t as f64 / self.chain_len as f64);
        for _ in 0..self.n_distractors {
            o.push(if self.rng.gen::<bool>() { 1.0 } else { 0.0 });
        }
        o
    }
}

impl Environment for UmbrellaChain {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: 3 + self.n_distractors,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: self.chain_len,
            reward_bound: 1.0,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        self.need = if self.rng.gen::<bool>() { 1.0 } else { 0.0 };
        self.have = 0.0;
        self.t = 0;
        self.phase = Phase::Running;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        if self.t == 0 {
            self.have = action.discrete() as f64;
        }
        self.t += 1;
        let terminal = self.t == self.chain_len;
        let reward = if terminal {
            self.phase = Phase::NeedsReset;
            if self.have == self.need {
                1.0
            } else {
                -1.0
            }
        } else if self.rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        };
        Ok(EnvStep { obs: self.obs(), reward, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn terminal_reward(env: &mut UmbrellaChain, first_action: usize) -> f64 {
        env.reset();
        let mut a = first_action;
        loop {
            let s = env.step(&Action::Discrete(a)).unwrap();
            a = 0;
            if s.terminal {
                return s.reward;
            }
        }
    }

    #[test]
    fn correct_initial_decision_pays_one() {
        let mut env = UmbrellaChain::new(6, 3, 1).unwrap();
        for _ in 0..10 {
            let need = env.reset()[0] as usize;
            let mut a = need;
            let last = loop {
                let s = env.step(&Action::Discrete(a)).unwrap();
                a = 1 - need; // later actions must not matter
                if s.terminal {
                    break s.reward;
                }
            };
            assert_eq!(last, 1.0);
        }
        let _ = terminal_reward(&mut env, 0);
    }

    #[test]
    fn wrong_initial_decision_pays_minus_one() {
        let mut env = UmbrellaChain::new(6, 3, 2).unwrap();
        for _ in 0..10 {
            let need = env.reset()[0] as usize;
            let last = loop {
                let s = env.step(&Action::Discrete(1 - need)).unwrap();
                if s.terminal {
                    break s.reward;
                }
            };
            assert_eq!(last, -1.0);
        }
    }

    #[test]
    fn random_agent_terminal_reward_averages_to_zero() {
        let mut env = UmbrellaChain::new(5, 2, 3).unwrap();
        let mut prng = ChaCha8Rng::seed_from_u64(77);
        let mut total = 0.0;
        let n = 10_000;
        for _ in 0..n {
            env.reset();
            loop {
                let a = usize::from(prng.gen::<bool>());
                let s = env.step(&Action::Discrete(a)).unwrap();
                if s.terminal {
                    total += s.reward;
                    break;
                }
            }
        }
        assert!((total / n as f64).abs() < 0.04);
    }

    #[test]
    fn intermediate_rewards_are_plus_minus_one() {
        let mut env = UmbrellaChain::new(10, 0, 4).unwrap();
        env.reset();
        for _ in 0..9 {
            let s = env.step(&Action::Discrete(0)).unwrap();
            assert!(s.reward == 1.0 || s.reward == -1.0);
            assert!(!s.terminal);
        }
        let s = env.step(&Action::Discrete(0)).unwrap();
        assert!(s.terminal);
    }
}
