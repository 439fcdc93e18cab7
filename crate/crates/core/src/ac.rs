//! Linear actor and critic heads on the shared feature vector, TD-error,
//! eligibility traces, entropy regularization, and error routing back into
//! the recurrent core (exact weight transport or feedback alignment).

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{dot, l2_norm, log_sum_exp, softmax, Mat};

/// How the policy head parameterizes actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// `n` discrete actions, softmax over logits.
    Categorical,
    /// Diagonal Gaussian; the mean is linear in the features, the log-std is
    /// a free learned vector.
    Gaussian,
}

/// Actor/critic parameters plus the fixed feedback matrices.
/// `b_a` and `b_c` never change after initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub kind: PolicyKind,
    /// Actor weights: `[n_actions x N]` (categorical) or `[action_dim x N]`
    /// (gaussian mean head).
    pub theta_a: Mat,
    /// Learned state-independent log-std for the gaussian head.
    pub log_std: Vec<f64>,
    /// Critic weights `[N]`.
    pub theta_c: Vec<f64>,
    /// Fixed actor feedback `[N x dist_param_dim]`.
    pub b_a: Mat,
    /// Fixed critic feedback `[N]`.
    pub b_c: Vec<f64>,
}

impl HeadParams {
    /// Heads start at zero (uniform policy, zero value); feedback matrices are
    /// random and then frozen.
    pub fn init(kind: PolicyKind, n_features: usize, action_dim: usize, rng: &mut impl Rng) -> Self {
        let head_rows = action_dim;
        let dist_dim = match kind {
            PolicyKind::Categorical => action_dim,
            PolicyKind::Gaussian => 2 * action_dim,
        };
        let dist = Normal::new(0.0, 1.0 / (n_features as f64).sqrt()).unwrap();
        let mut b_a = Mat::zeros(n_features, dist_dim);
        for v in b_a.data.iter_mut() {
            *v = dist.sample(rng);
        }
        // the critic feedback direction is deliberately an order of magnitude
        // weaker than the actor one: it is a fixed vector injected at every
        // step, and at unit scale its drift drowns the action-dependent
        // signal in the recurrent eligibility trace
        let dist_c = Normal::new(0.0, 0.1 / (n_features as f64).sqrt()).unwrap();
        let b_c: Vec<f64> = (0..n_features).map(|_| dist_c.sample(rng)).collect();
        HeadParams {
            kind,
            theta_a: Mat::zeros(head_rows, n_features),
            log_std: if kind == PolicyKind::Gaussian { vec![0.0; action_dim] } else { vec![] },
            theta_c: vec![0.0; n_features],
            b_a,
            b_c,
        }
    }

    pub fn n_features(&self) -> usize {
        self.theta_a.cols
    }

    pub fn action_dim(&self) -> usize {
        self.theta_a.rows
    }

    pub fn dist_param_dim(&self) -> usize {
        match self.kind {
            PolicyKind::Categorical => self.action_dim(),
            PolicyKind::Gaussian => 2 * self.action_dim(),
        }
    }
}

/// Parameterized action distribution at one step.
#[derive(Debug, Clone)]
pub enum ActionDistribution {
    Categorical { logits: Vec<f64>, probs: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

/// A sampled action together with what the gradients need.
#[derive(Debug, Clone)]
pub enum SampledAction {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Actor head forward pass.
pub fn policy_forward(heads: &HeadParams, feat: &[f64]) -> ActionDistribution {
    let pre = heads.theta_a.matvec(feat);
    match heads.kind {
        PolicyKind::Categorical => {
            let probs = softmax(&pre);
            ActionDistribution::Categorical { logits: pre, probs }
        }
        PolicyKind::Gaussian => {
            ActionDistribution::Gaussian { mean: pre, log_std: heads.log_std.clone() }
        }
    }
}

/// Critic head forward pass.
pub fn value_forward(theta_c: &[f64], feat: &[f64]) -> f64 {
    dot(theta_c, feat)
}

/// One-step TD error; terminal transitions do not bootstrap.
pub fn td_error(reward: f64, gamma: f64, v: f64, v_next: f64, terminal: bool) -> f64 {
    reward + gamma * v_next * if terminal { 0.0 } else { 1.0 } - v
}

/// Sample an action; `epsilon > 0` mixes in uniform exploration for
/// categorical policies.
pub fn sample_action(dist: &ActionDistribution, epsilon: f64, rng: &mut impl Rng) -> SampledAction {
    match dist {
        ActionDistribution::Categorical { probs, .. } => {
            if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
                return SampledAction::Discrete(rng.gen_range(0..probs.len()));
            }
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return SampledAction::Discrete(i);
                }
            }
            SampledAction::Discrete(probs.len() - 1)
        }
        ActionDistribution::Gaussian { mean, log_std } => {
            let a = mean
                .iter()
                .zip(log_std)
                .map(|(&m, &ls)| {
                    let zn: f64 = StandardNormal.sample(rng);
                    m + ls.exp() * zn
                })
                .collect();
            SampledAction::Continuous(a)
        }
    }
}

/// The greedy action used during evaluation: argmax for categorical, mean for
/// gaussian.
pub fn mode_action(dist: &ActionDistribution) -> SampledAction {
    match dist {
        ActionDistribution::Categorical { probs, .. } => {
            let mut best = 0;
            for i in 1..probs.len() {
                if probs[i] > probs[best] {
                    best = i;
                }
            }
            SampledAction::Discrete(best)
        }
        ActionDistribution::Gaussian { mean, .. } => SampledAction::Continuous(mean.clone()),
    }
}

/// Log probability of an action under the distribution.
pub fn log_prob(dist: &ActionDistribution, action: &SampledAction) -> f64 {
    match (dist, action) {
        (ActionDistribution::Categorical { logits, .. }, SampledAction::Discrete(a)) => {
            logits[*a] - log_sum_exp(logits)
        }
        (ActionDistribution::Gaussian { mean, log_std }, SampledAction::Continuous(a)) => {
            let mut lp = 0.0;
            for i in 0..mean.len() {
                let std = log_std[i].exp();
                let zscore = (a[i] - mean[i]) / std;
                lp += -0.5 * zscore * zscore - log_std[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            lp
        }
        _ => panic!("action kind does not match distribution"),
    }
}

/// Gradient of `log pi[a]` with respect to the distribution parameters
/// (logits, or [mean; log_std] stacked).
pub fn dist_param_grad(dist: &ActionDistribution, action: &SampledAction) -> Vec<f64> {
    match (dist, action) {
        (ActionDistribution::Categorical { probs, .. }, SampledAction::Discrete(a)) => {
            let mut g: Vec<f64> = probs.iter().map(|&p| -p).collect();
            g[*a] += 1.0;
            g
        }
        (ActionDistribution::Gaussian { mean, log_std }, SampledAction::Continuous(a)) => {
            let d = mean.len();
            let mut g = vec![0.0; 2 * d];
            for i in 0..d {
                let var = (2.0 * log_std[i]).exp();
                let diff = a[i] - mean[i];
                g[i] = diff / var;
                g[d + i] = diff * diff / var - 1.0;
            }
            g
        }
        _ => panic!("action kind does not match distribution"),
    }
}

/// Entropy and its gradient with respect to the distribution parameters.
pub fn entropy_and_grad(dist: &ActionDistribution) -> (f64, Vec<f64>) {
    match dist {
        ActionDistribution::Categorical { probs, .. } => {
            let h: f64 = -probs
                .iter()
                .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
                .sum::<f64>();
            let grad = probs.iter().map(|&p| -p * (safe_ln(p) + h)).collect();
            (h, grad)
        }
        ActionDistribution::Gaussian { log_std, .. } => {
            let half_ln_2pie = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
            let h: f64 = log_std.iter().map(|&ls| ls + half_ln_2pie).sum();
            let d = log_std.len();
            let mut grad = vec![0.0; 2 * d];
            for g in grad[d..].iter_mut() {
                *g = 1.0;
            }
            (h, grad)
        }
    }
}

#[inline]
fn safe_ln(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        0.0
    }
}

/// Feedback route: exact weight transport or fixed random matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    Fa,
    Exact,
}

/// Compute the critic and actor error directions at the feature vector:
/// `g_c` replaces `grad_h v` and `g_a` replaces `grad_h log pi[a]`.
pub fn route_feedback(
    mode: FeedbackMode,
    heads: &HeadParams,
    dist_grad: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    match mode {
        FeedbackMode::Fa => {
            let g_c = heads.b_c.clone();
            let g_a = heads.b_a.matvec(dist_grad);
            (g_c, g_a)
        }
        FeedbackMode::Exact => {
            let g_c = heads.theta_c.clone();
            // only the state-dependent rows (logits / mean) reach the features
            let g_a = heads.theta_a.matvec_t(&dist_grad[..heads.action_dim()]);
            (g_c, g_a)
        }
    }
}

/// Route an arbitrary distribution-parameter error (e.g. the entropy
/// gradient) back to the features along the same pathway as the actor error.
pub fn route_dist_error(mode: FeedbackMode, heads: &HeadParams, dist_err: &[f64]) -> Vec<f64> {
    match mode {
        FeedbackMode::Fa => heads.b_a.matvec(dist_err),
        FeedbackMode::Exact => heads.theta_a.matvec_t(&dist_err[..heads.action_dim()]),
    }
}

/// Eligibility traces for the head parameters. The recurrent-core trace has
/// cell-dependent shape and lives with the agent.
#[derive(Debug, Clone)]
pub struct HeadTraces {
    pub e_a: Mat,
    pub e_log_std: Vec<f64>,
    pub e_c: Vec<f64>,
}

impl HeadTraces {
    pub fn zeros(heads: &HeadParams) -> Self {
        HeadTraces {
            e_a: Mat::zeros(heads.theta_a.rows, heads.theta_a.cols),
            e_log_std: vec![0.0; heads.log_std.len()],
            e_c: vec![0.0; heads.theta_c.len()],
        }
    }

    pub fn reset(&mut self) {
        self.e_a.fill(0.0);
        self.e_log_std.iter_mut().for_each(|v| *v = 0.0);
        self.e_c.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `e_c <- gamma lambda_c e_c + feat` and
    /// `e_a <- gamma lambda_a e_a + grad_{theta_a} log pi[a]`.
    pub fn accumulate(
        &mut self,
        feat: &[f64],
        dist_grad: &[f64],
        decay_a: f64,
        decay_c: f64,
        n_actions: usize,
    ) {
        for i in 0..self.e_c.len() {
            self.e_c[i] = decay_c * self.e_c[i] + feat[i];
        }
        for r in 0..self.e_a.rows {
            let g = dist_grad[r];
            let row = self.e_a.row_mut(r);
            for c in 0..row.len() {
                row[c] = decay_a * row[c] + g * feat[c];
            }
        }
        for (i, e) in self.e_log_std.iter_mut().enumerate() {
            *e = decay_a * *e + dist_grad[n_actions + i];
        }
    }
}

/// Optimizer choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Per-block optimizer state. Complex blocks are updated through their
/// real/imaginary lanes, so every block reduces to a flat `f64` slice.
#[derive(Debug, Clone)]
pub struct BlockOpt {
    pub kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl BlockOpt {
    pub fn new(kind: OptimizerKind, len: usize) -> Self {
        BlockOpt {
            kind,
            m: if kind == OptimizerKind::Adam { vec![0.0; len] } else { Vec::new() },
            v: if kind == OptimizerKind::Adam { vec![0.0; len] } else { Vec::new() },
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Descend `params` along `grad` (callers negate ascent directions).
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(params.len(), grad.len());
        match self.kind {
            OptimizerKind::Sgd => {
                for i in 0..params.len() {
                    params[i] -= lr * grad[i];
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - self.beta1.powi(self.t as i32);
                let bc2 = 1.0 - self.beta2.powi(self.t as i32);
                for i in 0..params.len() {
                    self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
                    self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / bc1;
                    let v_hat = self.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
                }
            }
        }
    }

    /// Update a complex block through its real/imaginary lanes. The block's
    /// state length must be `2 * params.len()`.
    pub fn step_complex(
        &mut self,
        params: &mut [num_complex::Complex64],
        grad: &[num_complex::Complex64],
        lr: f64,
    ) {
        assert_eq!(params.len(), grad.len());
        let mut flat_p = Vec::with_capacity(2 * params.len());
        let mut flat_g = Vec::with_capacity(2 * grad.len());
        for (p, g) in params.iter().zip(grad) {
            flat_p.push(p.re);
            flat_p.push(p.im);
            flat_g.push(g.re);
            flat_g.push(g.im);
        }
        self.step(&mut flat_p, &flat_g, lr);
        for (i, p) in params.iter_mut().enumerate() {
            *p = num_complex::Complex64::new(flat_p[2 * i], flat_p[2 * i + 1]);
        }
    }
}

/// Scale `grad` down to `max_norm` (L2) when it exceeds it; `max_norm <= 0`
/// disables clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Complex-block variant: the norm runs over both real and imaginary lanes.
pub fn clip_grad_norm_complex(grad: &mut [num_complex::Complex64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.norm_sqr()).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::rel_err;
    use crate::oracles::{fd_scalar_grad, AdamScalarRef, Mrp};
    use crate::rng::{substream, Stream};

    fn heads(seed: u64, n: usize, actions: usize) -> HeadParams {
        let mut rng = substream(seed, Stream::Test);
        HeadParams::init(PolicyKind::Categorical, n, actions, &mut rng)
    }

    #[test]
    fn zero_actor_is_uniform() {
        let h = heads(0, 4, 3);
        let dist = policy_forward(&h, &[0.2, -0.4, 1.0, 0.3]);
        match dist {
            ActionDistribution::Categorical { probs, .. } => {
                for p in probs {
                    assert!((p - 1.0 / 3.0).abs() < 1e-15);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn softmax_arithmetic_example() {
        let mut h = heads(0, 1, 2);
        *h.theta_a.at_mut(0, 0) = 3.0_f64.ln();
        *h.theta_a.at_mut(1, 0) = 0.0;
        let dist = policy_forward(&h, &[1.0]);
        match dist {
            ActionDistribution::Categorical { probs, .. } => {
                assert!((probs[0] - 0.75).abs() < 1e-12);
                assert!((probs[1] - 0.25).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn seeded_probs_match_naive_softmax_oracle() {
        let mut rng = substream(1, Stream::Test);
        let mut h = heads(1, 5, 4);
        for v in h.theta_a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let feat: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dist = policy_forward(&h, &feat);
        let logits = h.theta_a.matvec(&feat);
        let exps: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
        let s: f64 = exps.iter().sum();
        match dist {
            ActionDistribution::Categorical { probs, .. } => {
                for (p, e) in probs.iter().zip(&exps) {
                    assert!((p - e / s).abs() < 1e-12);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn value_forward_cases() {
        assert_eq!(value_forward(&[0.0, 0.0], &[1.0, 2.0]), 0.0);
        assert_eq!(value_forward(&[1.0, 0.0], &[0.3, 9.0]), 0.3);
        let mut rng = substream(2, Stream::Test);
        let th: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut acc = 0.0;
        for i in 0..6 {
            acc += th[i] * f[i];
        }
        assert!((value_forward(&th, &f) - acc).abs() < 1e-15);
    }

    #[test]
    fn td_error_cases() {
        assert_eq!(td_error(1.0, 0.99, 0.0, 0.0, false), 1.0);
        assert!((td_error(0.0, 0.99, 0.5, 0.5, false) + 0.005).abs() < 1e-15);
        assert_eq!(td_error(2.0, 0.99, 1.5, 123.0, true), 0.5);
    }

    #[test]
    fn trace_accumulation_matches_geometric_sum_oracle() {
        let h = heads(3, 3, 2);
        let mut tr = HeadTraces::zeros(&h);
        let mut rng = substream(3, Stream::Test);
        let decay = 0.5;
        let mut feats = Vec::new();
        let mut grads = Vec::new();
        for _ in 0..3 {
            let f: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            tr.accumulate(&f, &g, decay, decay, 2);
            feats.push(f);
            grads.push(g);
        }
        let t = feats.len();
        for c in 0..3 {
            let mut expect = 0.0;
            for s in 0..t {
                expect += decay.powi((t - 1 - s) as i32) * feats[s][c];
            }
            assert!((tr.e_c[c] - expect).abs() < 1e-13);
            for r in 0..2 {
                let mut ea = 0.0;
                for s in 0..t {
                    ea += decay.powi((t - 1 - s) as i32) * grads[s][r] * feats[s][c];
                }
                assert!((tr.e_a.at(r, c) - ea).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn zero_decay_traces_equal_instantaneous_gradients() {
        let h = heads(4, 2, 2);
        let mut tr = HeadTraces::zeros(&h);
        let f = vec![0.7, -0.2];
        let g = vec![0.5, -0.5];
        tr.accumulate(&f, &g, 0.9, 0.9, 2);
        tr.accumulate(&f, &g, 0.0, 0.0, 2);
        assert_eq!(tr.e_c, f);
        for r in 0..2 {
            for c in 0..2 {
                assert!((tr.e_a.at(r, c) - g[r] * f[c]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn trace_accumulation_is_linear_in_gradients() {
        let h = heads(5, 3, 2);
        let f1 = vec![0.1, 0.2, -0.4];
        let f2 = vec![-0.6, 0.9, 0.3];
        let g1 = vec![0.5, -0.1];
        let g2 = vec![0.2, 0.8];
        let fsum: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let gsum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();

        // critic trace: additive in the feature input
        let mut ta = HeadTraces::zeros(&h);
        ta.accumulate(&f1, &g1, 0.0, 0.0, 2);
        let mut tb = HeadTraces::zeros(&h);
        tb.accumulate(&f2, &g1, 0.0, 0.0, 2);
        let mut tc = HeadTraces::zeros(&h);
        tc.accumulate(&fsum, &g1, 0.0, 0.0, 2);
        for i in 0..3 {
            assert!((tc.e_c[i] - ta.e_c[i] - tb.e_c[i]).abs() < 1e-15);
        }
        // actor trace: additive in the distribution gradient
        let mut tg1 = HeadTraces::zeros(&h);
        tg1.accumulate(&f1, &g1, 0.0, 0.0, 2);
        let mut tg2 = HeadTraces::zeros(&h);
        tg2.accumulate(&f1, &g2, 0.0, 0.0, 2);
        let mut tgs = HeadTraces::zeros(&h);
        tgs.accumulate(&f1, &gsum, 0.0, 0.0, 2);
        for r in 0..2 {
            for c in 0..3 {
                assert!(
                    (tgs.e_a.at(r, c) - tg1.e_a.at(r, c) - tg2.e_a.at(r, c)).abs() < 1e-15
                );
            }
        }
    }

    #[test]
    fn exact_feedback_is_softmax_log_likelihood_identity() {
        let mut rng = substream(6, Stream::Test);
        let mut h = heads(6, 4, 3);
        for v in h.theta_a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let feat: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dist = policy_forward(&h, &feat);
        let a = SampledAction::Discrete(1);
        let dg = dist_param_grad(&dist, &a);
        let (_, g_a) = route_feedback(FeedbackMode::Exact, &h, &dg);
        // theta_a^T (onehot - pi)
        match &dist {
            ActionDistribution::Categorical { probs, .. } => {
                for c in 0..4 {
                    let mut expect = 0.0;
                    for r in 0..3 {
                        let oh = if r == 1 { 1.0 } else { 0.0 };
                        expect += h.theta_a.at(r, c) * (oh - probs[r]);
                    }
                    assert!((g_a[c] - expect).abs() < 1e-14);
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn fa_with_transposed_copy_matches_exact_at_step_zero() {
        let mut rng = substream(7, Stream::Test);
        let mut h = heads(7, 3, 2);
        for v in h.theta_a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        // construct B_A = theta_A^T and B_C = theta_C
        for r in 0..2 {
            for c in 0..3 {
                *h.b_a.at_mut(c, r) = h.theta_a.at(r, c);
            }
        }
        h.theta_c = vec![0.3, -0.8, 0.1];
        h.b_c = h.theta_c.clone();
        let feat = vec![0.5, 0.1, -0.7];
        let dist = policy_forward(&h, &feat);
        let dg = dist_param_grad(&dist, &SampledAction::Discrete(0));
        let (gc_fa, ga_fa) = route_feedback(FeedbackMode::Fa, &h, &dg);
        let (gc_ex, ga_ex) = route_feedback(FeedbackMode::Exact, &h, &dg);
        assert_eq!(gc_fa, gc_ex);
        for i in 0..3 {
            assert!((ga_fa[i] - ga_ex[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_actor_feedback_matches_fd_of_log_prob() {
        let mut rng = substream(8, Stream::Test);
        let mut h = heads(8, 4, 3);
        for v in h.theta_a.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        h.theta_c = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let feat: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = SampledAction::Discrete(2);
        let dist = policy_forward(&h, &feat);
        let dg = dist_param_grad(&dist, &a);
        let (g_c, g_a) = route_feedback(FeedbackMode::Exact, &h, &dg);

        let fd_a = fd_scalar_grad(
            |f| log_prob(&policy_forward(&h, f), &a),
            &feat,
            1e-6,
        );
        assert!(rel_err(&g_a, &fd_a) < 1e-5);

        let fd_c = fd_scalar_grad(|f| value_forward(&h.theta_c, f), &feat, 1e-6);
        assert!(rel_err(&g_c, &fd_c) < 1e-7);
    }

    #[test]
    fn entropy_at_uniform_is_max_with_zero_grad() {
        let dist = ActionDistribution::Categorical {
            logits: vec![0.0; 4],
            probs: vec![0.25; 4],
        };
        let (h, g) = entropy_and_grad(&dist);
        assert!((h - 4.0_f64.ln()).abs() < 1e-15);
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn entropy_vanishes_in_deterministic_limit() {
        let logits = vec![40.0, 0.0];
        let probs = softmax(&logits);
        let (h, _) = entropy_and_grad(&ActionDistribution::Categorical { logits, probs });
        assert!(h < 1e-12);
    }

    #[test]
    fn entropy_grad_matches_fd() {
        let mut rng = substream(9, Stream::Test);
        let logits: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let probs = softmax(&logits);
        let (_, g) = entropy_and_grad(&ActionDistribution::Categorical {
            logits: logits.clone(),
            probs,
        });
        let fd = fd_scalar_grad(
            |l| {
                let p = softmax(l);
                -p.iter().map(|&x| if x > 0.0 { x * x.ln() } else { 0.0 }).sum::<f64>()
            },
            &logits,
            1e-6,
        );
        assert!(rel_err(&g, &fd) < 1e-6);
    }

    #[test]
    fn gaussian_log_prob_grads_match_fd() {
        let mean = vec![0.3, -0.7];
        let log_std = vec![-0.2, 0.4];
        let a = SampledAction::Continuous(vec![0.5, -1.0]);
        let dist = ActionDistribution::Gaussian { mean: mean.clone(), log_std: log_std.clone() };
        let g = dist_param_grad(&dist, &a);
        let packed: Vec<f64> = mean.iter().chain(log_std.iter()).copied().collect();
        let fd = fd_scalar_grad(
            |p| {
                let d = ActionDistribution::Gaussian {
                    mean: p[..2].to_vec(),
                    log_std: p[2..].to_vec(),
                };
                log_prob(&d, &a)
            },
            &packed,
            1e-6,
        );
        assert!(rel_err(&g, &fd) < 1e-6);
        let (h, hg) = entropy_and_grad(&dist);
        let expect_h: f64 = log_std
            .iter()
            .map(|ls| ls + 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln())
            .sum();
        assert!((h - expect_h).abs() < 1e-12);
        assert_eq!(&hg[2..], &[1.0, 1.0]);
    }

    #[test]
    fn adam_matches_scalar_reference_recurrence() {
        let mut rng = substream(10, Stream::Test);
        let mut params = vec![0.5, -1.0, 2.0];
        let mut opt = BlockOpt::new(OptimizerKind::Adam, 3);
        let mut refs: Vec<AdamScalarRef> = (0..3).map(|_| AdamScalarRef::new()).collect();
        let mut ref_params = params.clone();
        for _ in 0..200 {
            let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            opt.step(&mut params, &g, 1e-3);
            for i in 0..3 {
                ref_params[i] -= refs[i].step(g[i], 1e-3);
            }
        }
        for i in 0..3 {
            assert!((params[i] - ref_params[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn sgd_step_is_plain_axpy() {
        let mut p = vec![1.0, 2.0];
        let mut opt = BlockOpt::new(OptimizerKind::Sgd, 2);
        opt.step(&mut p, &[-0.5, 0.25], 0.1);
        assert!((p[0] - 1.05).abs() < 1e-15);
        assert!((p[1] - 1.975).abs() < 1e-15);
    }

    #[test]
    fn clip_rescales_only_above_threshold() {
        let mut g = vec![3.0, 4.0];
        clip_grad_norm(&mut g, 10.0);
        assert_eq!(g, vec![3.0, 4.0]);
        clip_grad_norm(&mut g, 1.0);
        assert!((l2_norm(&g) - 1.0).abs() < 1e-12);
        let mut g2 = vec![3.0, 4.0];
        clip_grad_norm(&mut g2, 0.0); // disabled
        assert_eq!(g2, vec![3.0, 4.0]);
    }

    /// TD(0) with one-hot features on a 2-state Markov reward process
    /// converges to the analytic fixed point.
    #[test]
    fn td_zero_converges_on_two_state_mrp() {
        let mrp = Mrp {
            p: Mat::from_rows(vec![vec![0.9, 0.1], vec![0.2, 0.8]]),
            rbar: vec![0.05, 0.04],
        };
        let gamma = 0.9;
        let v_star = mrp.solve(gamma).unwrap();
        let mut theta = vec![0.0; 2];
        let mut rng = substream(11, Stream::Test);
        let mut s = 0usize;
        let alpha = 1e-2;
        for _ in 0..100_000 {
            let s_next = mrp.sample_next(s, rng.gen());
            let r = mrp.rbar[s];
            let delta = td_error(r, gamma, theta[s], theta[s_next], false);
            theta[s] += alpha * delta;
            s = s_next;
        }
        for i in 0..2 {
            assert!(
                (theta[i] - v_star[i]).abs() < 1e-2,
                "state {i}: {} vs {}",
                theta[i],
                v_star[i]
            );
        }
    }

    /// Policy-gradient sign property on a deterministic 2-armed bandit:
    /// the probability of the rewarded arm rises monotonically (in median
    /// over seeds) and ends close to 1.
    #[test]
    fn bandit_policy_probability_increases() {
        let n_seeds = 7;
        let checkpoints = [0usize, 2_500, 5_000, 7_500, 10_000];
        let mut probs_at: Vec<Vec<f64>> = vec![Vec::new(); checkpoints.len()];
        for seed in 0..n_seeds {
            let mut rng = substream(100 + seed, Stream::Test);
            let mut h = HeadParams::init(PolicyKind::Categorical, 1, 2, &mut rng);
            let feat = vec![1.0];
            let (alpha_a, alpha_c) = (0.05, 0.1);
            let mut cp = 0;
            for step in 0..=10_000usize {
                if cp < checkpoints.len() && step == checkpoints[cp] {
                    match policy_forward(&h, &feat) {
                        ActionDistribution::Categorical { probs, .. } => {
                            probs_at[cp].push(probs[0])
                        }
                        _ => unreachable!(),
                    }
                    cp += 1;
                }
                if step == 10_000 {
                    break;
                }
                let dist = policy_forward(&h, &feat);
                let a = sample_action(&dist, 0.0, &mut rng);
                let arm = match a {
                    SampledAction::Discrete(i) => i,
                    _ => unreachable!(),
                };
                let r = if arm == 0 { 1.0 } else { 0.0 };
                let v = value_forward(&h.theta_c, &feat);
                let delta = td_error(r, 0.99, v, 0.0, true);
                let dg = dist_param_grad(&dist, &a);
                // one-step episodes: traces are the instantaneous gradients
                for rr in 0..2 {
                    *h.theta_a.at_mut(rr, 0) += alpha_a * delta * dg[rr] * feat[0];
                }
                h.theta_c[0] += alpha_c * delta * feat[0];
            }
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let meds: Vec<f64> = probs_at.iter_mut().map(median).collect();
        for w in meds.windows(2) {
            assert!(w[1] >= w[0] - 0.02, "median prob dropped: {meds:?}");
        }
        assert!(*meds.last().unwrap() > 0.95, "final median {meds:?}");
    }
}
