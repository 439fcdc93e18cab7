//! Classic cart-pole balancing with observation masks that hide either the
//! velocities or the positions, turning the MDP into a POMDP. Dynamics,
//! thresholds and reward follow the standard control formulation: gravity
//! 9.8, cart mass 1.0, pole mass 0.1, half-length 0.5, force +-10, Euler
//! integration at dt = 0.02, termination at |x| > 2.4 or |theta| > 12 deg,
//! reward 1 per step, 500-step cap.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_running, Action, ActionSpace, EnvSpec, EnvStep, Environment, Phase};
use crate::error::Result;

const GRAVITY: f64 = 9.8;
const MASS_CART: f64 = 1.0;
const MASS_POLE: f64 = 0.1;
const TOTAL_MASS: f64 = MASS_CART + MASS_POLE;
const HALF_LENGTH: f64 = 0.5;
const POLE_MASS_LENGTH: f64 = MASS_POLE * HALF_LENGTH;
const FORCE_MAG: f64 = 10.0;
const DT: f64 = 0.02;
const X_THRESHOLD: f64 = 2.4;
const THETA_THRESHOLD: f64 = 12.0 * std::f64::consts::PI / 180.0;
const MAX_STEPS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsMask {
    /// Only (x_dot, theta_dot).
    Velocities,
    /// Only (x, theta).
    Positions,
    /// The full 4-dimensional state (not partially observable).
    Full,
}

pub struct CartPole {
    mask: ObsMask,
    noise_std: f64,
    rng: ChaCha8Rng,
    /// (x, x_dot, theta, theta_dot)
    state: [f64; 4],
    steps: usize,
    phase: Phase,
}

impl CartPole {
    pub fn new(mask: ObsMask, noise_std: f64, seed: u64) -> Self {
        CartPole {
            mask,
            noise_std,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: [0.0; 4],
            steps: 0,
            phase: Phase::NeedsReset,
        }
    }

    /// One forward-Euler update of the standard dynamics.
    pub fn euler_update(state: &[f64; 4], force: f64) -> [f64; 4] {
        let [x, x_dot, theta, theta_dot] = *state;
        let cos = theta.cos();
        let sin = theta.sin();
        let temp = (force + POLE_MASS_LENGTH * theta_dot * theta_dot * sin) / TOTAL_MASS;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / TOTAL_MASS));
        let x_acc = temp - POLE_MASS_LENGTH * theta_acc * cos / TOTAL_MASS;
        [
            x + DT * x_dot,
            x_dot + DT * x_acc,
            theta + DT * theta_dot,
            theta_dot + DT * theta_acc,
        ]
    }

    /// Unmasked state, for scripted test policies.
    pub fn full_state(&self) -> [f64; 4] {
        self.state
    }

    fn obs(&mut self) -> Vec<f64> {
        let [x, x_dot, theta, theta_dot] = self.state;
        let mut o = match self.mask {
            ObsMask::Velocities => vec![x_dot, theta_dot],
            ObsMask::Positions => vec![x, theta],
            ObsMask::Full => vec![x, x_dot, theta, theta_dot],
        };
        if self.noise_std > 0.0 {
            for v in o.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *v += self.noise_std * z;
            }
        }
        o
    }
}

impl Environment for CartPole {
    fn spec(&self) -> EnvSpec {
        EnvSpec {
            obs_dim: match self.mask {
                ObsMask::Full => 4,
                _ => 2,
            },
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: MAX_STEPS,
            reward_bound: 1.0,
        }
    }

    fn reset(&mut self) -> Vec<f64> {
        for v in self.state.iter_mut() {
            *v = self.rng.gen_range(-0.05..0.05);
        }
        self.steps = 0;
        self.phase = Phase::Running;
        self.obs()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep> {
        check_running(self.phase)?;
        let force = if action.discrete() == 1 { FORCE_MAG } else { -FORCE_MAG };
        self.state = Self::euler_update(&self.state, force);
        self.steps += 1;
        let fell = self.state[0].abs() > X_THRESHOLD || self.state[2].abs() > THETA_THRESHOLD;
        let terminal = fell || self.steps >= MAX_STEPS;
        if terminal {
            self.phase = Phase::NeedsReset;
        }
        Ok(EnvStep { obs: self.obs(), reward: 1.0, terminal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_step_matches_hand_computed_euler_update() {
        // scalar physics oracle on a fixed state, force +10
        let s: [f64; 4] = [0.01, -0.02, 0.03, 0.04];
        let force = 10.0;
        let cos = s[2].cos();
        let sin = s[2].sin();
        let temp = (force + 0.05 * s[3] * s[3] * sin) / 1.1;
        let theta_acc = (9.8 * sin - cos * temp) / (0.5 * (4.0 / 3.0 - 0.1 * cos * cos / 1.1));
        let x_acc = temp - 0.05 * theta_acc * cos / 1.1;
        let expect = [
            s[0] + 0.02 * s[1],
            s[1] + 0.02 * x_acc,
            s[2] + 0.02 * s[3],
            s[3] + 0.02 * theta_acc,
        ];
        let got = CartPole::euler_update(&s, force);
        for i in 0..4 {
            assert!((got[i] - expect[i]).abs() < 1e-15, "component {i}");
        }
    }

    #[test]
    fn alternating_policy_falls_quickly() {
        // near-zero net force: the pole diverges within a few dozen steps
        // (mean ~36 over seeds), far from the 500-step cap
        let mut sum = 0.0;
        let seeds = 30;
        for seed in 0..seeds {
            let mut env = CartPole::new(ObsMask::Velocities, 0.0, seed);
            env.reset();
            let mut total = 0.0;
            let mut a = 0usize;
            loop {
                let s = env.step(&Action::Discrete(a)).unwrap();
                a = 1 - a;
                total += s.reward;
                if s.terminal {
                    break;
                }
            }
            assert!(total < 150.0, "seed {seed}: survived {total} steps");
            sum += total;
        }
        let mean = sum / seeds as f64;
        assert!(mean < 50.0, "mean survival {mean}");
    }

    #[test]
    fn scripted_stabilizing_policy_reaches_the_cap() {
        // a hand PD controller on the full state balances for 500 steps
        for seed in 0..5 {
            let mut env = CartPole::new(ObsMask::Full, 0.0, seed);
            env.reset();
            let mut total = 0.0;
            loop {
                let [x, x_dot, theta, theta_dot] = env.full_state();
                let u = 0.5 * x + 1.0 * x_dot + 10.0 * theta + 2.0 * theta_dot;
                let a = usize::from(u > 0.0);
                let s = env.step(&Action::Discrete(a)).unwrap();
                total += s.reward;
                if s.terminal {
                    break;
                }
            }
            assert_eq!(total, 500.0, "seed {seed}");
        }
    }

    #[test]
    fn masks_expose_the_right_components() {
        let mut env = CartPole::new(ObsMask::Positions, 0.0, 3);
        let obs = env.reset();
        let s = env.full_state();
        assert_eq!(obs, vec![s[0], s[2]]);
        let mut env = CartPole::new(ObsMask::Velocities, 0.0, 3);
        let obs = env.reset();
        let s = env.full_state();
        assert_eq!(obs, vec![s[1], s[3]]);
    }

    #[test]
    fn noisy_variant_perturbs_observations_deterministically() {
        let mut a = CartPole::new(ObsMask::Velocities, 0.1, 9);
        let mut b = CartPole::new(ObsMask::Velocities, 0.1, 9);
        let oa = a.reset();
        let ob = b.reset();
        assert_eq!(oa, ob);
        assert_ne!(oa, {
            let mut c = CartPole::new(ObsMask::Velocities, 0.0, 9);
            c.reset()
        });
    }
}
