//! The online training loop.
//!
//! One step of the loop, in order: sample an action from the policy at the
//! current features, step the environment, accumulate eligibility traces
//! (heads from their local gradients, recurrent core from the Jacobian trace
//! contracted against the routed feedback), advance the RNN and its trace on
//! the new input, compute the TD error from the pre-update critic, apply all
//! updates, then shift (v, h, J). The recurrent trace used for credit at step
//! t is always the one aligned with the state that produced the action.
//!
//! The network input is the Meta-RL concatenation [observation, previous
//! action, previous reward]; at an episode start the action slot and reward
//! are zero. Episode boundaries zero the hidden state, the Jacobian trace and
//! every eligibility trace (optimizer state survives).

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::ac::{
    clip_grad_norm, dist_param_grad, entropy_and_grad, mode_action, policy_forward,
    route_dist_error, route_feedback, sample_action, td_error, value_forward, BlockOpt,
    HeadParams, HeadTraces, OptimizerKind, PolicyKind, SampledAction,
};
use crate::cells::{ctrnn_step, lru_output, lru_step, CtrnnParams, LruParams};
use crate::config::{CellKind, GradMode, TrainConfig};
use crate::envs::{make_env, Action, ActionSpace, AutoReset, EnvSpec};
use crate::error::{Error, Result};
use crate::grad::{
    lru_apply, lru_rtrl_step, rflo_apply, rflo_step, rtrl_apply, rtrl_step, CtrnnRfloTrace,
    CtrnnRtrlTrace, LruTrace,
};
use crate::io::metrics::{MetricRecord, MetricSink};
use crate::io::snapshot::{Snapshot, Tensor};
use crate::math::{CMat, Mat};
use crate::rng::{substream, Stream};

/// All trainable tensors of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub cell: CellParams,
    pub heads: HeadParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Ctrnn(CtrnnParams),
    Lru(LruParams),
}

impl CellParams {
    pub fn input_dim(&self) -> usize {
        match self {
            CellParams::Ctrnn(p) => p.input_dim,
            CellParams::Lru(p) => p.input_dim(),
        }
    }
}

/// Gradient-shaped container over the recurrent parameter blocks; doubles as
/// the recurrent eligibility trace e_R and as the pending-update accumulator.
/// CT-RNN time constants are accumulated in rho space (the unconstrained
/// parameter actually trained).
#[derive(Debug, Clone)]
pub enum CellAccum {
    Ctrnn { w: Mat, rho: Vec<f64> },
    Lru { lambda: Vec<Complex64>, b: CMat, c: CMat, d: Mat },
}

impl CellAccum {
    pub fn zeros_like(params: &CellParams) -> Self {
        match params {
            CellParams::Ctrnn(p) => {
                CellAccum::Ctrnn { w: Mat::zeros(p.n(), p.z()), rho: vec![0.0; p.n()] }
            }
            CellParams::Lru(p) => CellAccum::Lru {
                lambda: vec![Complex64::new(0.0, 0.0); p.n()],
                b: CMat::zeros(p.n(), p.input_dim()),
                c: CMat::zeros(p.output_dim(), p.n()),
                d: Mat::zeros(p.output_dim(), p.input_dim()),
            },
        }
    }

    pub fn reset(&mut self) {
        match self {
            CellAccum::Ctrnn { w, rho } => {
                w.fill(0.0);
                rho.iter_mut().for_each(|v| *v = 0.0);
            }
            CellAccum::Lru { lambda, b, c, d } => {
                lambda.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                b.data.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                c.data.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                d.fill(0.0);
            }
        }
    }

    /// self = decay * self + scale * other
    pub fn decay_axpy(&mut self, decay: f64, scale: f64, other: &CellAccum) {
        match (self, other) {
            (CellAccum::Ctrnn { w, rho }, CellAccum::Ctrnn { w: ow, rho: orho }) => {
                for (a, &b) in w.data.iter_mut().zip(&ow.data) {
                    *a = decay * *a + scale * b;
                }
                for (a, &b) in rho.iter_mut().zip(orho) {
                    *a = decay * *a + scale * b;
                }
            }
            (
                CellAccum::Lru { lambda, b, c, d },
                CellAccum::Lru { lambda: ol, b: ob, c: oc, d: od },
            ) => {
                for (a, &x) in lambda.iter_mut().zip(ol) {
                    *a = decay * *a + scale * x;
                }
                for (a, &x) in b.data.iter_mut().zip(&ob.data) {
                    *a = decay * *a + scale * x;
                }
                for (a, &x) in c.data.iter_mut().zip(&oc.data) {
                    *a = decay * *a + scale * x;
                }
                for (a, &x) in d.data.iter_mut().zip(&od.data) {
                    *a = decay * *a + scale * x;
                }
            }
            _ => panic!("mismatched cell accumulator kinds"),
        }
    }

    /// self += scale * other
    pub fn axpy(&mut self, scale: f64, other: &CellAccum) {
        self.decay_axpy(1.0, scale, other);
    }

    fn sq_norm(&self) -> f64 {
        match self {
            CellAccum::Ctrnn { w, rho } => {
                w.data.iter().map(|v| v * v).sum::<f64>() + rho.iter().map(|v| v * v).sum::<f64>()
            }
            CellAccum::Lru { lambda, b, c, d } => {
                lambda.iter().map(|v| v.norm_sqr()).sum::<f64>()
                    + b.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
                    + c.data.iter().map(|v| v.norm_sqr()).sum::<f64>()
                    + d.data.iter().map(|v| v * v).sum::<f64>()
            }
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }
}

/// Running observation standardization (Welford).
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNorm {
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub count: f64,
}

impl ObsNorm {
    pub fn new(dim: usize) -> Self {
        ObsNorm { mean: vec![0.0; dim], m2: vec![0.0; dim], count: 0.0 }
    }

    pub fn update(&mut self, obs: &[f64]) {
        self.count += 1.0;
        for i in 0..obs.len() {
            let d = obs[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (obs[i] - self.mean[i]);
        }
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        if self.count < 2.0 {
            return obs.to_vec();
        }
        obs.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.mean[i]) / (self.m2[i] / self.count + 1e-8).sqrt())
            .collect()
    }
}

/// Hidden state plus Jacobian trace of whichever backbone is configured.
pub enum Backbone {
    Ctrnn { h: Vec<f64>, trace: CtrnnTraceKind },
    Lru { h: Vec<Complex64>, trace: LruTrace, last_x: Vec<f64> },
}

pub enum CtrnnTraceKind {
    Rtrl(CtrnnRtrlTrace),
    Rflo(CtrnnRfloTrace),
}

impl Backbone {
    fn new(cfg: &TrainConfig, params: &CellParams) -> Self {
        match params {
            CellParams::Ctrnn(p) => Backbone::Ctrnn {
                h: vec![0.0; p.n()],
                trace: match cfg.alg.mode {
                    GradMode::Rtrl => CtrnnTraceKind::Rtrl(CtrnnRtrlTrace::zeros(p)),
                    GradMode::Rflo => CtrnnTraceKind::Rflo(CtrnnRfloTrace::zeros(p)),
                    GradMode::DiagRtrl => unreachable!("validated"),
                },
            },
            CellParams::Lru(p) => Backbone::Lru {
                h: vec![Complex64::new(0.0, 0.0); p.n()],
                trace: LruTrace::zeros(p),
                last_x: vec![0.0; p.input_dim()],
            },
        }
    }

    fn reset(&mut self) {
        match self {
            Backbone::Ctrnn { h, trace } => {
                h.iter_mut().for_each(|v| *v = 0.0);
                match trace {
                    CtrnnTraceKind::Rtrl(t) => t.reset(),
                    CtrnnTraceKind::Rflo(t) => t.reset(),
                }
            }
            Backbone::Lru { h, trace, last_x } => {
                h.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                trace.reset();
                last_x.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Advance state and trace on input `x`.
    fn step(&mut self, params: &CellParams, x: &[f64]) -> Result<()> {
        match (self, params) {
            (Backbone::Ctrnn { h, trace }, CellParams::Ctrnn(p)) => {
                let next = match trace {
                    CtrnnTraceKind::Rtrl(t) => rtrl_step(p, h, x, t)?,
                    CtrnnTraceKind::Rflo(t) => rflo_step(p, h, x, t)?,
                };
                *h = next;
                Ok(())
            }
            (Backbone::Lru { h, trace, last_x }, CellParams::Lru(p)) => {
                let next = lru_rtrl_step(p, h, x, trace)?;
                *h = next;
                *last_x = x.to_vec();
                Ok(())
            }
            _ => Err(Error::config("backbone does not match cell parameters")),
        }
    }

    /// Advance state only (evaluation path).
    fn step_no_trace(&mut self, params: &CellParams, x: &[f64]) -> Result<()> {
        match (self, params) {
            (Backbone::Ctrnn { h, .. }, CellParams::Ctrnn(p)) => {
                let (next, _) = ctrnn_step(p, h, x)?;
                *h = next;
                Ok(())
            }
            (Backbone::Lru { h, last_x, .. }, CellParams::Lru(p)) => {
                *h = lru_step(p, h, x)?;
                *last_x = x.to_vec();
                Ok(())
            }
            _ => Err(Error::config("backbone does not match cell parameters")),
        }
    }

    /// The real feature vector the heads read: h for the CT-RNN, the readout
    /// y = Re[C h] + D x for the LRU.
    fn features(&self, params: &CellParams) -> Vec<f64> {
        match (self, params) {
            (Backbone::Ctrnn { h, .. }, _) => h.clone(),
            (Backbone::Lru { h, last_x, .. }, CellParams::Lru(p)) => lru_output(p, h, last_x),
            _ => unreachable!(),
        }
    }

    /// Contract the Jacobian trace against an error at the features,
    /// producing gradients over every recurrent parameter block. For the LRU
    /// the feature error is pulled back through the readout (eps_h = C^H e),
    /// and C and D get their exact local gradients.
    fn contract(&self, params: &CellParams, eps_feat: &[f64], train_tau: bool) -> CellAccum {
        match (self, params) {
            (Backbone::Ctrnn { trace, .. }, CellParams::Ctrnn(p)) => {
                let (w, d_tau) = match trace {
                    CtrnnTraceKind::Rtrl(t) => rtrl_apply(t, eps_feat),
                    CtrnnTraceKind::Rflo(t) => rflo_apply(t, eps_feat),
                };
                let rho = if train_tau {
                    let chain = p.dtau_drho();
                    d_tau.iter().zip(&chain).map(|(g, c)| g * c).collect()
                } else {
                    vec![0.0; p.n()]
                };
                CellAccum::Ctrnn { w, rho }
            }
            (Backbone::Lru { h, trace, last_x }, CellParams::Lru(p)) => {
                let eps_h = p.c_out.matvec_conj_t(eps_feat);
                let (lambda, b) = lru_apply(trace, &eps_h);
                let mut c = CMat::zeros(p.output_dim(), p.n());
                let mut d = Mat::zeros(p.output_dim(), p.input_dim());
                for o in 0..p.output_dim() {
                    let e = eps_feat[o];
                    if e == 0.0 {
                        continue;
                    }
                    for i in 0..p.n() {
                        *c.at_mut(o, i) = e * h[i].conj();
                    }
                    for j in 0..p.input_dim() {
                        *d.at_mut(o, j) = e * last_x[j];
                    }
                }
                CellAccum::Lru { lambda, b, c, d }
            }
            _ => unreachable!(),
        }
    }
}

/// Per-block optimizer state for the recurrent core.
enum CellOpts {
    Ctrnn { w: BlockOpt, rho: BlockOpt },
    Lru { lambda: BlockOpt, b: BlockOpt, c: BlockOpt, d: BlockOpt },
}

impl CellOpts {
    fn new(kind: OptimizerKind, params: &CellParams) -> Self {
        match params {
            CellParams::Ctrnn(p) => CellOpts::Ctrnn {
                w: BlockOpt::new(kind, p.n() * p.z()),
                rho: BlockOpt::new(kind, p.n()),
            },
            CellParams::Lru(p) => CellOpts::Lru {
                lambda: BlockOpt::new(kind, 2 * p.n()),
                b: BlockOpt::new(kind, 2 * p.n() * p.input_dim()),
                c: BlockOpt::new(kind, 2 * p.output_dim() * p.n()),
                d: BlockOpt::new(kind, p.output_dim() * p.input_dim()),
            },
        }
    }
}

/// What one training transition produced.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: u64,
    pub reward: f64,
    pub terminal: bool,
    pub delta: f64,
    pub entropy: f64,
    /// The action taken this step.
    pub action: SampledAction,
    /// Total return of the episode that ended at this step.
    pub episode_return: Option<f64>,
    pub grad_norm_actor: f64,
    pub grad_norm_critic: f64,
    pub grad_norm_rnn: f64,
}

/// Online actor-critic agent over a recurrent backbone.
pub struct Agent {
    pub cfg: TrainConfig,
    pub params: NetworkParams,
    pub backbone: Backbone,
    pub head_traces: HeadTraces,
    pub e_r: CellAccum,
    pending_r: CellAccum,
    pub v_prev: f64,
    pub step_count: u64,
    pub episode_count: u64,
    episode_return: f64,
    prev_action: Option<SampledAction>,
    prev_reward: f64,
    opt_theta_a: BlockOpt,
    opt_log_std: BlockOpt,
    opt_theta_c: BlockOpt,
    cell_opts: CellOpts,
    policy_rng: ChaCha8Rng,
    pub obs_norm: Option<ObsNorm>,
    action_space: ActionSpace,
    started: bool,
}

/// Width of the action slot in the Meta-RL input.
pub fn action_encoding_dim(space: &ActionSpace) -> usize {
    match space {
        ActionSpace::Discrete(n) => *n,
        ActionSpace::Continuous { dim, .. } => *dim,
    }
}

/// Meta-RL input: [observation, previous action (one-hot or raw), previous
/// reward]. `None` action means "episode start": all-zero slot and reward 0.
pub fn meta_input(
    obs: &[f64],
    prev_action: Option<&SampledAction>,
    prev_reward: f64,
    space: &ActionSpace,
) -> Vec<f64> {
    let enc = action_encoding_dim(space);
    let mut x = Vec::with_capacity(obs.len() + enc + 1);
    x.extend_from_slice(obs);
    let start = x.len();
    x.resize(start + enc, 0.0);
    match prev_action {
        None => {}
        Some(SampledAction::Discrete(a)) => x[start + a] = 1.0,
        Some(SampledAction::Continuous(v)) => {
            let space_action = squash_continuous(v, space);
            x[start..start + enc].copy_from_slice(&space_action);
        }
    }
    x.push(if prev_action.is_some() { prev_reward } else { 0.0 });
    x
}

fn squash_continuous(raw: &[f64], space: &ActionSpace) -> Vec<f64> {
    match space {
        ActionSpace::Continuous { low, high, .. } => raw
            .iter()
            .map(|&v| low + (v.tanh() + 1.0) / 2.0 * (high - low))
            .collect(),
        _ => panic!("continuous action in a discrete space"),
    }
}

/// Convert a sampled head action into the environment action (tanh squash and
/// rescale for continuous spaces).
pub fn to_env_action(a: &SampledAction, space: &ActionSpace) -> Action {
    match a {
        SampledAction::Discrete(i) => Action::Discrete(*i),
        SampledAction::Continuous(v) => Action::Continuous(squash_continuous(v, space)),
    }
}

/// Derive a child seed for a named substream of the run seed.
pub fn stream_seed(seed: u64, stream: Stream) -> u64 {
    substream(seed, stream).gen()
}

/// Seeded parameter initialization sized for the given environment.
pub fn init_params(cfg: &TrainConfig, spec: &EnvSpec) -> Result<NetworkParams> {
    let mut rng = substream(cfg.run.seed, Stream::Init);
    let enc = action_encoding_dim(&spec.action_space);
    let input_dim = spec.obs_dim + enc + 1;
    let n = cfg.hp.n;
    let cell = match cfg.alg.cell {
        CellKind::Ctrnn => {
            CellParams::Ctrnn(CtrnnParams::init(n, input_dim, cfg.k(), (1.5, 12.0), &mut rng)?)
        }
        CellKind::Lru => CellParams::Lru(LruParams::init(n, input_dim, n, &mut rng)?),
    };
    let (kind, action_dim) = match &spec.action_space {
        ActionSpace::Discrete(a) => (PolicyKind::Categorical, *a),
        ActionSpace::Continuous { dim, .. } => (PolicyKind::Gaussian, *dim),
    };
    let heads = HeadParams::init(kind, n, action_dim, &mut rng);
    Ok(NetworkParams { cell, heads })
}

/// Build the (auto-resetting) training environment for a config.
pub fn make_train_env(cfg: &TrainConfig) -> Result<AutoReset> {
    let seed = stream_seed(cfg.run.seed, Stream::Env);
    Ok(AutoReset::new(make_env(&cfg.env.name, &cfg.env.params, seed)?))
}

impl Agent {
    pub fn new(cfg: TrainConfig, spec: &EnvSpec, params: NetworkParams) -> Result<Self> {
        cfg.validate()?;
        let opt = cfg.hp.optimizer;
        let heads = &params.heads;
        let obs_norm = if cfg.hp.normalize_obs { Some(ObsNorm::new(spec.obs_dim)) } else { None };
        Ok(Agent {
            backbone: Backbone::new(&cfg, &params.cell),
            head_traces: HeadTraces::zeros(heads),
            e_r: CellAccum::zeros_like(&params.cell),
            pending_r: CellAccum::zeros_like(&params.cell),
            v_prev: 0.0,
            step_count: 0,
            episode_count: 0,
            episode_return: 0.0,
            prev_action: None,
            prev_reward: 0.0,
            opt_theta_a: BlockOpt::new(opt, heads.theta_a.data.len()),
            opt_log_std: BlockOpt::new(opt, heads.log_std.len()),
            opt_theta_c: BlockOpt::new(opt, heads.theta_c.len()),
            cell_opts: CellOpts::new(opt, &params.cell),
            policy_rng: substream(cfg.run.seed, Stream::Policy),
            obs_norm,
            action_space: spec.action_space.clone(),
            cfg,
            params,
            started: false,
        })
    }

    /// Reset the environment and prime state: one forward pass on
    /// [o, 0, 0] from zero hidden state and zero trace, then v = v(h).
    pub fn begin(&mut self, env: &mut AutoReset) -> Result<()> {
        let obs = env.reset();
        self.prime_from_obs(&obs)?;
        self.started = true;
        Ok(())
    }

    fn prime_from_obs(&mut self, obs: &[f64]) -> Result<()> {
        if let Some(norm) = self.obs_norm.as_mut() {
            norm.update(obs);
        }
        let obs = self.normalized(obs);
        self.backbone.reset();
        self.prev_action = None;
        self.prev_reward = 0.0;
        let x = meta_input(&obs, None, 0.0, &self.action_space);
        self.backbone
            .step(&self.params.cell, &x)
            .map_err(|e| self.with_step_context(e, "initial forward pass"))?;
        let feat = self.backbone.features(&self.params.cell);
        self.v_prev = value_forward(&self.params.heads.theta_c, &feat);
        Ok(())
    }

    fn normalized(&self, obs: &[f64]) -> Vec<f64> {
        match &self.obs_norm {
            Some(n) => n.normalize(obs),
            None => obs.to_vec(),
        }
    }

    fn with_step_context(&self, e: Error, context: &str) -> Error {
        match e {
            Error::NumericFault { context: c, .. } => Error::NumericFault {
                step: self.step_count,
                context: format!("{context}: {c}"),
            },
            other => other,
        }
    }

    /// Zero hidden state, Jacobian trace and eligibility traces, then prime
    /// from the reset observation. Optimizer state is preserved.
    pub fn episode_boundary(&mut self, reset_obs: &[f64]) -> Result<()> {
        self.head_traces.reset();
        self.e_r.reset();
        self.prime_from_obs(reset_obs)
    }

    /// Run one environment transition with learning. `env` must already be
    /// primed via [`Agent::begin`].
    pub fn step(&mut self, env: &mut AutoReset) -> Result<StepReport> {
        assert!(self.started, "call begin() before step()");
        self.step_count += 1;
        let hp = self.cfg.hp.clone();
        let gl_a = hp.gamma * hp.lambda_a;
        let gl_c = hp.gamma * hp.lambda_c;
        let gl_r = hp.gamma * hp.lambda_r;

        // --- act from the current state
        let feat = self.backbone.features(&self.params.cell);
        let dist = policy_forward(&self.params.heads, &feat);
        let action = sample_action(&dist, hp.action_epsilon, &mut self.policy_rng);
        let env_action = to_env_action(&action, &self.action_space);
        let step = env.step(&env_action)?;
        if let Some(norm) = self.obs_norm.as_mut() {
            norm.update(&step.obs);
        }

        // --- eligibility traces at the pre-step state
        let dg = dist_param_grad(&dist, &action);
        let n_head_rows = self.params.heads.action_dim();
        self.head_traces.accumulate(&feat, &dg, gl_a, gl_c, n_head_rows);
        let (g_c, g_a) = route_feedback(self.cfg.alg.feedback, &self.params.heads, &dg);
        let mut eps_feat = g_c;
        for (e, a) in eps_feat.iter_mut().zip(&g_a) {
            *e += hp.eta_a * a;
        }
        let inst = self.backbone.contract(&self.params.cell, &eps_feat, self.cfg.alg.train_tau);
        self.e_r.decay_axpy(gl_r, 1.0, &inst);

        let (entropy, ent_grad) = entropy_and_grad(&dist);
        let g_hr = if hp.eta_h != 0.0 {
            let ent_feat_err = route_dist_error(self.cfg.alg.feedback, &self.params.heads, &ent_grad);
            Some(self.backbone.contract(&self.params.cell, &ent_feat_err, self.cfg.alg.train_tau))
        } else {
            None
        };

        // --- advance the RNN on the new input; v' from the pre-update critic
        let v = self.v_prev;
        let v_next = if step.terminal {
            0.0
        } else {
            let obs = self.normalized(&step.obs);
            let x = meta_input(&obs, Some(&action), step.reward, &self.action_space);
            self.backbone
                .step(&self.params.cell, &x)
                .map_err(|e| self.with_step_context(e, "rnn step"))?;
            let feat_next = self.backbone.features(&self.params.cell);
            value_forward(&self.params.heads.theta_c, &feat_next)
        };
        let delta = td_error(step.reward, hp.gamma, v, v_next, step.terminal);
        if !delta.is_finite() {
            return Err(Error::NumericFault { step: self.step_count, context: "td error".into() });
        }

        // --- parameter updates
        let ent_for_heads = if hp.eta_h != 0.0 { Some(ent_grad.as_slice()) } else { None };
        let (gn_a, gn_c, gn_r) =
            self.apply_updates(delta, &feat, ent_for_heads, g_hr.as_ref())?;

        // --- bookkeeping and episode boundary
        self.episode_return += step.reward;
        let action_taken = action.clone();
        self.prev_action = Some(action);
        self.prev_reward = step.reward;
        let mut episode_return = None;
        if step.terminal {
            self.episode_count += 1;
            episode_return = Some(self.episode_return);
            self.episode_return = 0.0;
            if self.cfg.alg.reset_hidden {
                self.episode_boundary(&step.obs)?;
            } else {
                // keep hidden state; still restart the Meta-RL input and traces
                self.head_traces.reset();
                self.e_r.reset();
                self.prev_action = None;
                self.prev_reward = 0.0;
                let obs = self.normalized(&step.obs);
                let x = meta_input(&obs, None, 0.0, &self.action_space);
                self.backbone
                    .step(&self.params.cell, &x)
                    .map_err(|e| self.with_step_context(e, "rnn step"))?;
                let feat0 = self.backbone.features(&self.params.cell);
                self.v_prev = value_forward(&self.params.heads.theta_c, &feat0);
            }
        } else {
            self.v_prev = v_next;
        }

        Ok(StepReport {
            step: self.step_count,
            reward: step.reward,
            terminal: step.terminal,
            delta,
            entropy,
            action: action_taken,
            episode_return,
            grad_norm_actor: gn_a,
            grad_norm_critic: gn_c,
            grad_norm_rnn: gn_r,
        })
    }

    /// Ascent step on every block: parameter += lr * (delta * trace +
    /// entropy term), realized as a descent on the negated gradient with
    /// per-block norm clipping. Returns pre-clip gradient norms
    /// (actor, critic, rnn).
    fn apply_updates(
        &mut self,
        delta: f64,
        feat: &[f64],
        ent_grad: Option<&[f64]>,
        g_hr: Option<&CellAccum>,
    ) -> Result<(f64, f64, f64)> {
        let hp = &self.cfg.hp;
        let clip = hp.clip;
        let eta_h = hp.eta_h;

        // actor
        let heads = &mut self.params.heads;
        let rows = heads.theta_a.rows;
        let cols = heads.theta_a.cols;
        let mut grad_a = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let mut g = delta * self.head_traces.e_a.at(r, c);
                if let Some(eg) = ent_grad {
                    g += eta_h * eg[r] * feat[c];
                }
                grad_a[r * cols + c] = -g;
            }
        }
        let mut grad_ls = vec![0.0; heads.log_std.len()];
        for i in 0..grad_ls.len() {
            let mut g = delta * self.head_traces.e_log_std[i];
            if let Some(eg) = ent_grad {
                g += eta_h * eg[rows + i];
            }
            grad_ls[i] = -g;
        }
        let norm_a_sq;
        {
            let na = clip_grad_norm(&mut grad_a, clip);
            let nls = clip_grad_norm(&mut grad_ls, clip);
            if !na.is_finite() || !nls.is_finite() {
                return Err(Error::NumericFault {
                    step: self.step_count,
                    context: "actor gradient".into(),
                });
            }
            norm_a_sq = na * na + nls * nls;
            self.opt_theta_a.step(&mut heads.theta_a.data, &grad_a, hp.alpha_a);
            if !grad_ls.is_empty() {
                self.opt_log_std.step(&mut heads.log_std, &grad_ls, hp.alpha_a);
            }
        }

        // critic
        let mut grad_c: Vec<f64> = self.head_traces.e_c.iter().map(|e| -(delta * e)).collect();
        let nc = clip_grad_norm(&mut grad_c, clip);
        if !nc.is_finite() {
            return Err(Error::NumericFault {
                step: self.step_count,
                context: "critic gradient".into(),
            });
        }
        self.opt_theta_c.step(&mut heads.theta_c, &grad_c, hp.alpha_c);

        // recurrent core: accumulate, apply every update_period steps
        self.pending_r.axpy(delta, &self.e_r);
        if let Some(g) = g_hr {
            self.pending_r.axpy(eta_h, g);
        }
        let mut gn_r = self.pending_r.l2_norm();
        if !gn_r.is_finite() {
            return Err(Error::NumericFault {
                step: self.step_count,
                context: "rnn gradient".into(),
            });
        }
        if self.step_count % hp.update_period == 0 {
            let alpha_r = if hp.lr_decay > 0.0 {
                hp.alpha_r * (-hp.lr_decay * self.step_count as f64).exp()
            } else {
                hp.alpha_r
            };
            self.apply_cell_update(alpha_r, clip)?;
            self.pending_r.reset();
        } else {
            gn_r = 0.0; // reported on the step that applies
        }

        Ok((norm_a_sq.sqrt(), nc, gn_r))
    }

    fn apply_cell_update(&mut self, alpha_r: f64, clip: f64) -> Result<()> {
        match (&mut self.params.cell, &self.pending_r, &mut self.cell_opts) {
            (
                CellParams::Ctrnn(p),
                CellAccum::Ctrnn { w, rho },
                CellOpts::Ctrnn { w: ow, rho: orho },
            ) => {
                let mut gw: Vec<f64> = w.data.iter().map(|v| -v).collect();
                clip_grad_norm(&mut gw, clip);
                ow.step(&mut p.w.data, &gw, alpha_r);
                if self.cfg.alg.train_tau {
                    let mut gr: Vec<f64> = rho.iter().map(|v| -v).collect();
                    clip_grad_norm(&mut gr, clip);
                    orho.step(&mut p.rho, &gr, alpha_r);
                }
            }
            (
                CellParams::Lru(p),
                CellAccum::Lru { lambda, b, c, d },
                CellOpts::Lru { lambda: ol, b: ob, c: oc, d: od },
            ) => {
                let neg = |v: &[Complex64]| -> Vec<Complex64> { v.iter().map(|x| -x).collect() };
                let mut gl = neg(lambda);
                crate::ac::clip_grad_norm_complex(&mut gl, clip);
                ol.step_complex(&mut p.lambda, &gl, alpha_r);
                let mut gb = neg(&b.data);
                crate::ac::clip_grad_norm_complex(&mut gb, clip);
                ob.step_complex(&mut p.b_in.data, &gb, alpha_r);
                let mut gc = neg(&c.data);
                crate::ac::clip_grad_norm_complex(&mut gc, clip);
                oc.step_complex(&mut p.c_out.data, &gc, alpha_r);
                let mut gd: Vec<f64> = d.data.iter().map(|v| -v).collect();
                clip_grad_norm(&mut gd, clip);
                od.step(&mut p.d_skip.data, &gd, alpha_r);
            }
            _ => unreachable!("accumulator matches cell kind by construction"),
        }
        Ok(())
    }
}

/// What a frozen-parameter evaluation produced.
#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Mean total reward over completed episodes (the running episode if
    /// none completed).
    pub mean_episode_reward: f64,
    pub episodes: u64,
    /// Mean policy probabilities over all evaluation steps (categorical
    /// policies only).
    pub mean_action_probs: Option<Vec<f64>>,
}

/// Frozen-parameter evaluation: greedy action selection (argmax / mean),
/// hidden state carried within episodes and reset at boundaries, mean
/// per-episode reward over `eval_steps` environment steps.
pub fn evaluate_in(
    cfg: &TrainConfig,
    params: &NetworkParams,
    obs_norm: Option<&ObsNorm>,
    env: &mut AutoReset,
    eval_steps: u64,
) -> Result<EvalReport> {
    let spec = env.spec();
    let mut backbone = Backbone::new(cfg, &params.cell);
    let norm = |o: &[f64]| -> Vec<f64> {
        match obs_norm {
            Some(n) => n.normalize(o),
            None => o.to_vec(),
        }
    };
    let obs = env.reset();
    backbone.step_no_trace(&params.cell, &meta_input(&norm(&obs), None, 0.0, &spec.action_space))?;
    let mut completed: Vec<f64> = Vec::new();
    let mut current = 0.0;
    let mut prob_sum: Option<Vec<f64>> = None;
    for step_i in 0..eval_steps {
        let feat = backbone.features(&params.cell);
        let dist = policy_forward(&params.heads, &feat);
        if let crate::ac::ActionDistribution::Categorical { probs, .. } = &dist {
            let acc = prob_sum.get_or_insert_with(|| vec![0.0; probs.len()]);
            for (a, p) in acc.iter_mut().zip(probs) {
                *a += p;
            }
        }
        let _ = step_i;
        let action = mode_action(&dist);
        let step = env.step(&to_env_action(&action, &spec.action_space))?;
        current += step.reward;
        if step.terminal {
            completed.push(current);
            current = 0.0;
            backbone.reset();
            backbone.step_no_trace(
                &params.cell,
                &meta_input(&norm(&step.obs), None, 0.0, &spec.action_space),
            )?;
        } else {
            backbone.step_no_trace(
                &params.cell,
                &meta_input(&norm(&step.obs), Some(&action), step.reward, &spec.action_space),
            )?;
        }
    }
    let mean_episode_reward = if completed.is_empty() {
        current
    } else {
        completed.iter().sum::<f64>() / completed.len() as f64
    };
    Ok(EvalReport {
        mean_episode_reward,
        episodes: completed.len() as u64,
        mean_action_probs: prob_sum.map(|acc| {
            acc.into_iter().map(|v| v / eval_steps as f64).collect()
        }),
    })
}

/// Evaluate on a freshly seeded environment from the run's evaluation
/// substream.
pub fn evaluate(
    cfg: &TrainConfig,
    params: &NetworkParams,
    obs_norm: Option<&ObsNorm>,
) -> Result<EvalReport> {
    let seed = stream_seed(cfg.run.seed, Stream::EvalEnv);
    let mut env = AutoReset::new(make_env(&cfg.env.name, &cfg.env.params, seed)?);
    evaluate_in(cfg, params, obs_norm, &mut env, cfg.run.eval_steps)
}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub run_id: String,
    pub best_eval: f64,
    pub final_eval: f64,
    pub steps: u64,
    pub episodes: u64,
    pub epochs: u64,
    pub best_epoch: u64,
    pub params: NetworkParams,
    pub best_params: NetworkParams,
    pub obs_norm: Option<ObsNorm>,
}

/// Run one full training: epochs of `epoch_steps` transitions, each followed
/// by an evaluation; stops at `max_steps`, on `stop_at_reward`, or after
/// `patience` epochs without improvement.
pub fn train(cfg: &TrainConfig, sink: &mut dyn MetricSink) -> Result<TrainResult> {
    cfg.validate()?;
    let run_id = cfg.run_id();
    sink.config_header(&serde_json::to_string(cfg).expect("config serializes"))?;

    let mut env = make_train_env(cfg)?;
    let spec = env.spec();
    let params = init_params(cfg, &spec)?;
    let mut agent = Agent::new(cfg.clone(), &spec, params)?;
    agent.begin(&mut env)?;

    let mut best_eval = f64::NEG_INFINITY;
    let mut best_epoch = 0u64;
    let mut best_params = agent.params.clone();
    let mut epoch = 0u64;
    let mut last_eval = f64::NEG_INFINITY;
    let mut evals = 0u64;

    // per-epoch aggregates
    let mut ep_return_sum = 0.0;
    let mut ep_return_count = 0u64;
    let mut delta_abs_sum = 0.0;
    let mut entropy_sum = 0.0;
    let mut gn = (0.0, 0.0, 0.0);
    let mut agg_steps = 0u64;

    for step in 1..=cfg.hp.max_steps {
        let rep = agent.step(&mut env)?;
        delta_abs_sum += rep.delta.abs();
        entropy_sum += rep.entropy;
        gn.0 += rep.grad_norm_actor;
        gn.1 += rep.grad_norm_critic;
        gn.2 += rep.grad_norm_rnn;
        agg_steps += 1;
        if let Some(r) = rep.episode_return {
            ep_return_sum += r;
            ep_return_count += 1;
        }
        if cfg.run.log_every > 0 && step % cfg.run.log_every == 0 {
            sink.record(&MetricRecord {
                run_id: run_id.clone(),
                step,
                episode: agent.episode_count,
                episodic_reward: rep.episode_return,
                eval_reward: None,
                delta_mean_abs: rep.delta.abs(),
                entropy: rep.entropy,
                grad_norm_actor: rep.grad_norm_actor,
                grad_norm_critic: rep.grad_norm_critic,
                grad_norm_rnn: rep.grad_norm_rnn,
                wall_time: None,
            })?;
        }
        if step % cfg.run.epoch_steps == 0 {
            epoch += 1;
            let eval = evaluate(cfg, &agent.params, agent.obs_norm.as_ref())?.mean_episode_reward;
            evals += 1;
            last_eval = eval;
            let div = agg_steps.max(1) as f64;
            sink.record(&MetricRecord {
                run_id: run_id.clone(),
                step,
                episode: agent.episode_count,
                episodic_reward: if ep_return_count > 0 {
                    Some(ep_return_sum / ep_return_count as f64)
                } else {
                    None
                },
                eval_reward: Some(eval),
                delta_mean_abs: delta_abs_sum / div,
                entropy: entropy_sum / div,
                grad_norm_actor: gn.0 / div,
                grad_norm_critic: gn.1 / div,
                grad_norm_rnn: gn.2 / div,
                wall_time: None,
            })?;
            ep_return_sum = 0.0;
            ep_return_count = 0;
            delta_abs_sum = 0.0;
            entropy_sum = 0.0;
            gn = (0.0, 0.0, 0.0);
            agg_steps = 0;

            if eval > best_eval {
                best_eval = eval;
                best_epoch = epoch;
                best_params = agent.params.clone();
            }
            if let Some(target) = cfg.run.stop_at_reward {
                if best_eval >= target {
                    break;
                }
            }
            if epoch - best_epoch >= cfg.hp.patience {
                break;
            }
        }
    }

    if evals == 0 {
        let eval = evaluate(cfg, &agent.params, agent.obs_norm.as_ref())?.mean_episode_reward;
        last_eval = eval;
        sink.record(&MetricRecord {
            run_id: run_id.clone(),
            step: agent.step_count,
            episode: agent.episode_count,
            episodic_reward: None,
            eval_reward: Some(eval),
            delta_mean_abs: 0.0,
            entropy: 0.0,
            grad_norm_actor: 0.0,
            grad_norm_critic: 0.0,
            grad_norm_rnn: 0.0,
            wall_time: None,
        })?;
        if eval > best_eval {
            best_eval = eval;
            best_params = agent.params.clone();
        }
    }
    sink.flush()?;

    Ok(TrainResult {
        run_id,
        best_eval,
        final_eval: last_eval,
        steps: agent.step_count,
        episodes: agent.episode_count,
        epochs: epoch,
        best_epoch,
        params: agent.params,
        best_params,
        obs_norm: agent.obs_norm,
    })
}

/// Independent seed sweep; runs execute in parallel threads and share nothing
/// but the read-only base config.
pub fn sweep<F>(base: &TrainConfig, seeds: &[u64], make_sink: F) -> Result<Vec<(u64, TrainResult)>>
where
    F: Fn(u64) -> Result<Box<dyn MetricSink>> + Sync,
{
    let results = std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.run.seed = seed;
            let make_sink = &make_sink;
            handles.push(scope.spawn(move || -> Result<(u64, TrainResult)> {
                let mut sink = make_sink(seed)?;
                let res = train(&cfg, sink.as_mut())?;
                Ok((seed, res))
            }));
        }
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(results)
}

/// Median of the best evaluation rewards of a sweep.
pub fn median_best(results: &[(u64, TrainResult)]) -> f64 {
    let mut vals: Vec<f64> = results.iter().map(|(_, r)| r.best_eval).collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals[vals.len() / 2]
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SnapshotMeta {
    config: TrainConfig,
    policy_kind: PolicyKind,
    action_dim: usize,
}

/// Pack parameters (and the observation normalizer, when present) into the
/// versioned snapshot container.
pub fn params_to_snapshot(
    cfg: &TrainConfig,
    params: &NetworkParams,
    obs_norm: Option<&ObsNorm>,
) -> Snapshot {
    let meta = SnapshotMeta {
        config: cfg.clone(),
        policy_kind: params.heads.kind,
        action_dim: params.heads.action_dim(),
    };
    let mut snap = Snapshot::new(serde_json::to_string(&meta).expect("meta serializes"));
    match &params.cell {
        CellParams::Ctrnn(p) => {
            snap.insert("ctrnn.w", Tensor::F64 { dims: vec![p.w.rows, p.w.cols], data: p.w.data.clone() });
            snap.insert("ctrnn.rho", Tensor::f64_1d(p.rho.clone()));
        }
        CellParams::Lru(p) => {
            snap.insert("lru.lambda", Tensor::C128 { dims: vec![p.n()], data: p.lambda.clone() });
            snap.insert(
                "lru.b_in",
                Tensor::C128 { dims: vec![p.b_in.rows, p.b_in.cols], data: p.b_in.data.clone() },
            );
            snap.insert(
                "lru.c_out",
                Tensor::C128 { dims: vec![p.c_out.rows, p.c_out.cols], data: p.c_out.data.clone() },
            );
            snap.insert(
                "lru.d_skip",
                Tensor::F64 { dims: vec![p.d_skip.rows, p.d_skip.cols], data: p.d_skip.data.clone() },
            );
        }
    }
    let h = &params.heads;
    snap.insert(
        "heads.theta_a",
        Tensor::F64 { dims: vec![h.theta_a.rows, h.theta_a.cols], data: h.theta_a.data.clone() },
    );
    snap.insert("heads.log_std", Tensor::f64_1d(h.log_std.clone()));
    snap.insert("heads.theta_c", Tensor::f64_1d(h.theta_c.clone()));
    snap.insert("heads.b_a", Tensor::F64 { dims: vec![h.b_a.rows, h.b_a.cols], data: h.b_a.data.clone() });
    snap.insert("heads.b_c", Tensor::f64_1d(h.b_c.clone()));
    if let Some(n) = obs_norm {
        snap.insert("obs_norm.mean", Tensor::f64_1d(n.mean.clone()));
        snap.insert("obs_norm.m2", Tensor::f64_1d(n.m2.clone()));
        snap.insert("obs_norm.count", Tensor::f64_1d(vec![n.count]));
    }
    snap
}

/// Rebuild config, parameters and normalizer from a snapshot.
pub fn params_from_snapshot(
    snap: &Snapshot,
) -> Result<(TrainConfig, NetworkParams, Option<ObsNorm>)> {
    let meta: SnapshotMeta = serde_json::from_str(&snap.meta)
        .map_err(|e| Error::Snapshot(format!("bad metadata: {e}")))?;
    let cfg = meta.config;
    let cell = match cfg.alg.cell {
        CellKind::Ctrnn => {
            let (dims, data) = snap.f64_tensor("ctrnn.w")?;
            if dims.len() != 2 {
                return Err(Error::Snapshot("ctrnn.w must be 2-D".into()));
            }
            let (n, z) = (dims[0], dims[1]);
            let (_, rho) = snap.f64_tensor("ctrnn.rho")?;
            if rho.len() != n || z < n + 2 {
                return Err(Error::Snapshot("inconsistent ctrnn tensor shapes".into()));
            }
            let p = CtrnnParams {
                w: Mat { rows: n, cols: z, data: data.to_vec() },
                rho: rho.to_vec(),
                dt: cfg.hp.dt,
                k: cfg.k(),
                input_dim: z - n - 1,
            };
            p.validate()?;
            CellParams::Ctrnn(p)
        }
        CellKind::Lru => {
            let (_, lambda) = snap.c128_tensor("lru.lambda")?;
            let (bd, bdata) = snap.c128_tensor("lru.b_in")?;
            let (cd, cdata) = snap.c128_tensor("lru.c_out")?;
            let (dd, ddata) = snap.f64_tensor("lru.d_skip")?;
            if bd.len() != 2 || cd.len() != 2 || dd.len() != 2 {
                return Err(Error::Snapshot("lru tensors must be 2-D".into()));
            }
            let p = LruParams {
                lambda: lambda.to_vec(),
                b_in: CMat { rows: bd[0], cols: bd[1], data: bdata.to_vec() },
                c_out: CMat { rows: cd[0], cols: cd[1], data: cdata.to_vec() },
                d_skip: Mat { rows: dd[0], cols: dd[1], data: ddata.to_vec() },
            };
            p.validate()?;
            CellParams::Lru(p)
        }
    };
    let (ad, adata) = snap.f64_tensor("heads.theta_a")?;
    let (_, log_std) = snap.f64_tensor("heads.log_std")?;
    let (_, theta_c) = snap.f64_tensor("heads.theta_c")?;
    let (bad, badata) = snap.f64_tensor("heads.b_a")?;
    let (_, b_c) = snap.f64_tensor("heads.b_c")?;
    if ad.len() != 2 || bad.len() != 2 {
        return Err(Error::Snapshot("head tensors must be 2-D".into()));
    }
    let heads = HeadParams {
        kind: meta.policy_kind,
        theta_a: Mat { rows: ad[0], cols: ad[1], data: adata.to_vec() },
        log_std: log_std.to_vec(),
        theta_c: theta_c.to_vec(),
        b_a: Mat { rows: bad[0], cols: bad[1], data: badata.to_vec() },
        b_c: b_c.to_vec(),
    };
    let obs_norm = if snap.tensors.contains_key("obs_norm.mean") {
        let (_, mean) = snap.f64_tensor("obs_norm.mean")?;
        let (_, m2) = snap.f64_tensor("obs_norm.m2")?;
        let (_, count) = snap.f64_tensor("obs_norm.count")?;
        Some(ObsNorm { mean: mean.to_vec(), m2: m2.to_vec(), count: count[0] })
    } else {
        None
    };
    Ok((cfg, NetworkParams { cell, heads }, obs_norm))
}
