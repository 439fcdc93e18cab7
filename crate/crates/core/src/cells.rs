//! Recurrent cell forward dynamics.
//!
//! Two backbones: a continuous-time RNN (leaky-integrator rate model,
//! forward-Euler discretized) and a linear recurrent unit (diagonal complex
//! linear recurrence with a real readout). Both expose the per-step state
//! update plus the intermediate quantities the gradient engines need.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{all_finite, all_finite_c, inv_softplus, sigmoid, softplus, CMat, Mat};

/// CT-RNN parameters. The state update is
/// `h' = h + (dt/tau) * (-h + tanh(W xi))` with `xi = [x; h; 1]`,
/// applied `k` times per environment step (`dt * k = 1`).
///
/// The time constant is stored as an unconstrained `rho` with
/// `tau = 1 + softplus(rho)`, so `tau >= 1` survives any gradient update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtrnnParams {
    /// Combined weights over input, recurrence and bias: `[N x Z]`, `Z = I + N + 1`.
    pub w: Mat,
    /// Unconstrained time-constant parameter, `tau = 1 + softplus(rho)`.
    pub rho: Vec<f64>,
    /// Euler substep size.
    pub dt: f64,
    /// Substeps per environment step.
    pub k: usize,
    /// Input width I.
    pub input_dim: usize,
}

impl CtrnnParams {
    pub fn n(&self) -> usize {
        self.w.rows
    }

    pub fn z(&self) -> usize {
        self.w.cols
    }

    pub fn tau(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| 1.0 + softplus(r)).collect()
    }

    /// d tau / d rho, used to chain gradients onto the stored parameter.
    pub fn dtau_drho(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| sigmoid(r)).collect()
    }

    pub fn set_tau(&mut self, tau: &[f64]) {
        assert_eq!(tau.len(), self.rho.len());
        self.rho = tau.iter().map(|&t| inv_softplus(t - 1.0)).collect();
    }

    /// Fan-in scaled uniform init; bias column zero; tau uniform in [tau_lo, tau_hi].
    pub fn init(
        n: usize,
        input_dim: usize,
        k: usize,
        tau_range: (f64, f64),
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::config("ctrnn: n and k must be positive"));
        }
        let z = input_dim + n + 1;
        let bound = (3.0 / z as f64).sqrt();
        let mut w = Mat::zeros(n, z);
        for i in 0..n {
            for j in 0..z - 1 {
                *w.at_mut(i, j) = rng.gen_range(-bound..bound);
            }
            // bias column stays zero
        }
        let rho: Vec<f64> = (0..n)
            .map(|_| {
                let tau = rng.gen_range(tau_range.0..tau_range.1);
                inv_softplus(tau - 1.0)
            })
            .collect();
        let p = CtrnnParams { w, rho, dt: 1.0 / k as f64, k, input_dim };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.w.cols != self.input_dim + n + 1 {
            return Err(Error::config(format!(
                "ctrnn: W has {} columns, expected I + N + 1 = {}",
                self.w.cols,
                self.input_dim + n + 1
            )));
        }
        if self.rho.len() != n {
            return Err(Error::config("ctrnn: tau length != N"));
        }
        if (self.dt * self.k as f64 - 1.0).abs() > 1e-12 {
            return Err(Error::config("ctrnn: dt * k must equal 1"));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(Error::config("ctrnn: dt must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Quantities of the final Euler substep, consumed by the gradient engines.
#[derive(Debug, Clone)]
pub struct StepTrace {
    /// Concatenated `[x; h; 1]` that fed the weight matrix.
    pub xi: Vec<f64>,
    /// Pre-activations `W xi`.
    pub preact: Vec<f64>,
    /// `tanh'(W xi) = 1 - tanh^2`.
    pub act_deriv: Vec<f64>,
}

pub(crate) fn build_xi(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut xi = Vec::with_capacity(x.len() + h.len() + 1);
    xi.extend_from_slice(x);
    xi.extend_from_slice(h);
    xi.push(1.0);
    xi
}

/// One Euler substep. Returns the new state and the substep quantities.
pub(crate) fn ctrnn_substep(
    params: &CtrnnParams,
    tau: &[f64],
    h: &[f64],
    x: &[f64],
) -> (Vec<f64>, StepTrace) {
    let xi = build_xi(x, h);
    let preact = params.w.matvec(&xi);
    let mut act_deriv = vec![0.0; preact.len()];
    let mut h_next = vec![0.0; h.len()];
    for i in 0..h.len() {
        let phi = preact[i].tanh();
        act_deriv[i] = 1.0 - phi * phi;
        h_next[i] = h[i] + params.dt / tau[i] * (-h[i] + phi);
    }
    (h_next, StepTrace { xi, preact, act_deriv })
}

/// Advance the CT-RNN one environment step (k Euler substeps).
/// The returned `StepTrace` holds the final substep's quantities.
pub fn ctrnn_step(params: &CtrnnParams, h: &[f64], x: &[f64]) -> Result<(Vec<f64>, StepTrace)> {
    if h.len() != params.n() || x.len() != params.input_dim {
        return Err(Error::config(format!(
            "ctrnn_step: got |h| = {}, |x| = {}, expected {}, {}",
            h.len(),
            x.len(),
            params.n(),
            params.input_dim
        )));
    }
    let tau = params.tau();
    let mut state = h.to_vec();
    let mut trace = None;
    for _ in 0..params.k {
        let (next, t) = ctrnn_substep(params, &tau, &state, x);
        state = next;
        trace = Some(t);
    }
    if !all_finite(&state) {
        return Err(Error::NumericFault { step: 0, context: "ctrnn hidden state".into() });
    }
    Ok((state, trace.expect("k >= 1")))
}

/// LRU parameters: `h' = lambda .* h + B x`, `y = Re[C h] + D x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LruParams {
    /// Diagonal recurrent transition, `|lambda| < 1` at init.
    pub lambda: Vec<Complex64>,
    /// Input projection `[N x I]`.
    pub b_in: CMat,
    /// Readout `[O x N]`.
    pub c_out: CMat,
    /// Real input skip `[O x I]`.
    pub d_skip: Mat,
}

impl LruParams {
    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b_in.cols
    }

    pub fn output_dim(&self) -> usize {
        self.c_out.rows
    }

    /// Stable-ring init: lambda uniform over the annulus with modulus in
    /// [0.5, 0.99] and phase in [0, pi/8]; B rows scaled by sqrt(1 - |lambda|^2)
    /// so the state stays O(|x|) from the start.
    pub fn init(n: usize, input_dim: usize, output_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("lru: n must be positive"));
        }
        let (r_min, r_max) = (0.5_f64, 0.99_f64);
        let mut lambda = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen();
            let r = (u * (r_max * r_max - r_min * r_min) + r_min * r_min).sqrt();
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::PI / 8.0);
            lambda.push(Complex64::from_polar(r, phase));
        }
        let nb = Normal::new(0.0, (0.5 / input_dim as f64).sqrt()).unwrap();
        let mut b_in = CMat::zeros(n, input_dim);
        for i in 0..n {
            let gain = (1.0 - lambda[i].norm_sqr()).sqrt();
            for j in 0..input_dim {
                *b_in.at_mut(i, j) =
                    Complex64::new(nb.sample(rng), nb.sample(rng)) * gain;
            }
        }
        let nc = Normal::new(0.0, (0.5 / n as f64).sqrt()).unwrap();
        let mut c_out = CMat::zeros(output_dim, n);
        for v in c_out.data.iter_mut() {
            *v = Complex64::new(nc.sample(rng), nc.sample(rng));
        }
        let nd = Normal::new(0.0, (1.0 / input_dim as f64).sqrt()).unwrap();
        let mut d_skip = Mat::zeros(output_dim, input_dim);
        for v in d_skip.data.iter_mut() {
            *v = nd.sample(rng);
        }
        Ok(LruParams { lambda, b_in, c_out, d_skip })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.b_in.rows != n || self.c_out.cols != n {
            return Err(Error::config("lru: B/C shapes inconsistent with lambda"));
        }
        if self.d_skip.rows != self.c_out.rows || self.d_skip.cols != self.b_in.cols {
            return Err(Error::config("lru: D shape inconsistent"));
        }
        if !all_finite_c(&self.lambda) {
            return Err(Error::config("lru: non-finite lambda"));
        }
        Ok(())
    }
}

/// Advance the diagonal linear recurrence one step.
pub fn lru_step(params: &LruParams, h: &[Complex64], x: &[f64]) -> Result<Vec<Complex64>> {
    if h.len() != params.n() || x.len() != params.input_dim() {
        return Err(Error::config("lru_step: dimension mismatch"));
    }
    let bx = params.b_in.matvec_real(x);
    let mut out = vec![Complex64::new(0.0, 0.0); h.len()];
    for i in 0..h.len() {
        out[i] = params.lambda[i] * h[i] + bx[i];
    }
    if !all_finite_c(&out) {
        return Err(Error::NumericFault { step: 0, context: "lru hidden state".into() });
    }
    Ok(out)
}

/// Real readout `y = Re[C h] + D x`.
pub fn lru_output(params: &LruParams, h: &[Complex64], x: &[f64]) -> Vec<f64> {
    assert_eq!(h.len(), params.n());
    assert_eq!(x.len(), params.input_dim());
    let mut y = params.d_skip.matvec(x);
    for o in 0..params.c_out.rows {
        let mut acc = 0.0;
        for i in 0..params.c_out.cols {
            let c = params.c_out.at(o, i);
            acc += c.re * h[i].re - c.im * h[i].im;
        }
        y[o] += acc;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn params_with_tau(n: usize, input_dim: usize, k: usize, tau: &[f64], seed: u64) -> CtrnnParams {
        let mut rng = substream(seed, Stream::Test);
        let mut p = CtrnnParams::init(n, input_dim, k, (1.2, 2.0), &mut rng).unwrap();
        p.set_tau(tau);
        p
    }

    #[test]
    fn zero_weights_unit_tau_gives_zero_fixed_point() {
        let mut p = params_with_tau(3, 2, 1, &[1.0, 1.0, 1.0], 0);
        p.w.fill(0.0);
        let (h, _) = ctrnn_step(&p, &[0.3, -0.8, 2.0], &[0.1, 0.2]).unwrap();
        assert_eq!(h, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn pure_leak_halves_state_at_tau_two() {
        let mut p = params_with_tau(2, 1, 1, &[2.0, 2.0], 0);
        p.w.fill(0.0);
        let (h, _) = ctrnn_step(&p, &[1.0, -1.0], &[0.0]).unwrap();
        assert!((h[0] - 0.5).abs() < 1e-12);
        assert!((h[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn seeded_step_matches_scalar_loop_oracle() {
        // Independent scalar-loop evaluation of the update equation.
        let p = params_with_tau(2, 1, 1, &[1.5, 3.0], 42);
        let h = vec![0.0, 0.0];
        let x = vec![0.7];
        let (got, trace) = ctrnn_step(&p, &h, &x).unwrap();

        let tau = p.tau();
        for i in 0..2 {
            let mut a = 0.0;
            // xi = [x, h, 1]
            a += p.w.at(i, 0) * x[0];
            a += p.w.at(i, 1) * h[0];
            a += p.w.at(i, 2) * h[1];
            a += p.w.at(i, 3) * 1.0;
            let expect = h[i] + (1.0 / tau[i]) * (-h[i] + a.tanh());
            assert!((got[i] - expect).abs() < 1e-14);
        }
        assert_eq!(trace.xi[trace.xi.len() - 1], 1.0, "bias slot");
    }

    #[test]
    fn unit_tau_step_is_exactly_phi_of_w_xi() {
        let p = params_with_tau(4, 2, 1, &[1.0; 4], 9);
        let h = vec![0.2, -0.4, 0.9, 0.0];
        let x = vec![0.3, -1.1];
        let (got, trace) = ctrnn_step(&p, &h, &x).unwrap();
        for i in 0..4 {
            assert_eq!(got[i], trace.preact[i].tanh());
        }
    }

    #[test]
    fn dyadic_substep_refinement_converges_monotonically() {
        for seed in 0..3u64 {
            let mut prev_gap = f64::INFINITY;
            let h_at = |k: usize| {
                let p = params_with_tau(3, 2, k, &[1.3, 2.0, 4.0], seed);
                let (h, _) = ctrnn_step(&p, &[0.1, -0.2, 0.3], &[0.5, -0.9]).unwrap();
                h
            };
            let mut k = 1usize;
            while k <= 64 {
                let a = h_at(k);
                let b = h_at(2 * k);
                let gap: f64 = a
                    .iter()
                    .zip(&b)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(gap < prev_gap, "refinement gap grew at k={k}: {gap} >= {prev_gap}");
                prev_gap = gap;
                k *= 2;
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = params_with_tau(2, 1, 1, &[1.5, 1.5], 0);
        assert!(matches!(
            ctrnn_step(&p, &[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::Config(_))
        ));
    }

    fn lru(seed: u64, n: usize, i: usize, o: usize) -> LruParams {
        let mut rng = substream(seed, Stream::Test);
        LruParams::init(n, i, o, &mut rng).unwrap()
    }

    #[test]
    fn zero_lambda_is_memoryless() {
        let mut p = lru(1, 3, 2, 2);
        p.lambda = vec![Complex64::new(0.0, 0.0); 3];
        let h = vec![Complex64::new(1.0, 2.0); 3];
        let x = vec![0.5, -0.25];
        let got = lru_step(&p, &h, &x).unwrap();
        let bx = p.b_in.matvec_real(&x);
        assert_eq!(got, bx);
    }

    #[test]
    fn zero_input_is_pure_decay() {
        let mut p = lru(2, 2, 1, 1);
        p.lambda = vec![Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.0)];
        let h = vec![Complex64::new(1.0, -2.0), Complex64::new(-0.4, 0.8)];
        let got = lru_step(&p, &h, &[0.0]).unwrap();
        for i in 0..2 {
            assert!((got[i] - h[i] * 0.5).norm() < 1e-15);
        }
    }

    #[test]
    fn five_steps_match_closed_form_sum() {
        // h_T = sum_t lambda^(T-1-t) B x_t from h_0 = 0.
        let p = lru(3, 4, 2, 3);
        let xs: Vec<Vec<f64>> = vec![
            vec![0.3, -0.7],
            vec![1.1, 0.2],
            vec![-0.5, 0.9],
            vec![0.0, 0.4],
            vec![0.8, -0.1],
        ];
        let mut h = vec![Complex64::new(0.0, 0.0); 4];
        for x in &xs {
            h = lru_step(&p, &h, x).unwrap();
        }
        let t_total = xs.len();
        for i in 0..4 {
            let mut expect = Complex64::new(0.0, 0.0);
            for (t, x) in xs.iter().enumerate() {
                let mut bx = Complex64::new(0.0, 0.0);
                for j in 0..2 {
                    bx += p.b_in.at(i, j) * x[j];
                }
                expect += p.lambda[i].powu((t_total - 1 - t) as u32) * bx;
            }
            assert!((h[i] - expect).norm() < 1e-12, "neuron {i}");
        }
    }

    #[test]
    fn lru_step_is_linear() {
        let p = lru(4, 3, 2, 2);
        let mut rng = substream(11, Stream::Test);
        for _ in 0..20 {
            let h1: Vec<Complex64> =
                (0..3).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let h2: Vec<Complex64> =
                (0..3).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let x1: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x2: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let hsum: Vec<Complex64> = h1.iter().zip(&h2).map(|(a, b)| a + b).collect();
            let xsum: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a + b).collect();
            let lhs = lru_step(&p, &hsum, &xsum).unwrap();
            let r1 = lru_step(&p, &h1, &x1).unwrap();
            let r2 = lru_step(&p, &h2, &x2).unwrap();
            for i in 0..3 {
                assert!((lhs[i] - (r1[i] + r2[i])).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bounded_state_over_long_rollouts() {
        let p = lru(5, 8, 3, 4);
        let mut rng = substream(13, Stream::Test);
        let mut h = vec![Complex64::new(0.0, 0.0); 8];
        let max_abs_lambda = p.lambda.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let mut max_bx: f64 = 0.0;
        for _ in 0..10_000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bx = p.b_in.matvec_real(&x);
            max_bx = max_bx.max(bx.iter().map(|v| v.norm()).fold(0.0, f64::max));
            h = lru_step(&p, &h, &x).unwrap();
            let bound = max_bx / (1.0 - max_abs_lambda);
            assert!(h.iter().all(|v| v.norm() <= bound + 1e-9));
        }
    }

    #[test]
    fn output_skip_identity_passes_input_through() {
        let mut p = lru(6, 3, 3, 3);
        p.c_out = CMat::zeros(3, 3);
        p.d_skip = Mat::from_rows(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let h = vec![Complex64::new(0.0, 0.0); 3];
        let x = vec![0.4, -0.6, 2.5];
        assert_eq!(lru_output(&p, &h, &x), x);
    }

    #[test]
    fn imaginary_readout_of_real_state_is_zero() {
        let mut p = lru(7, 2, 1, 2);
        for v in p.c_out.data.iter_mut() {
            *v = Complex64::new(0.0, v.im.max(0.1));
        }
        p.d_skip.fill(0.0);
        let h = vec![Complex64::new(0.7, 0.0), Complex64::new(-0.3, 0.0)];
        let y = lru_output(&p, &h, &[0.0]);
        assert!(y.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn output_matches_elementwise_complex_oracle() {
        let p = lru(8, 3, 2, 4);
        let mut rng = substream(21, Stream::Test);
        let h: Vec<Complex64> =
            (0..3).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = lru_output(&p, &h, &x);
        for o in 0..4 {
            let mut ch = Complex64::new(0.0, 0.0);
            for i in 0..3 {
                ch += p.c_out.at(o, i) * h[i];
            }
            let mut dx = 0.0;
            for j in 0..2 {
                dx += p.d_skip.at(o, j) * x[j];
            }
            assert!((y[o] - (ch.re + dx)).abs() < 1e-13);
        }
    }
}
