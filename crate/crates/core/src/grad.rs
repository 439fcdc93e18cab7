//! Forward-mode online gradient engines.
//!
//! Each engine advances the hidden state together with a Jacobian trace
//! `J ~= dh/dtheta` for the recurrent parameter blocks:
//!
//! * [`rtrl_step`] — exact trace for the CT-RNN, `J' = (I + grad_h f) J + Jbar`
//!   applied once per Euler substep. Dense, O(N^3 Z) per step.
//! * [`rflo_step`] — the local approximation that keeps only the block-diagonal
//!   immediate term: `J'[i,k] = (1 - dt/tau_i) J[i,k] + (dt/tau_i) phi'_i xi_k`,
//!   plus the time-constant trace
//!   `Jtau'[i] = (1 - dt/tau_i) Jtau[i] + (dt/tau_i^2)(h_i - phi_i)`.
//! * [`lru_rtrl_step`] — exact per-neuron traces for the diagonal linear
//!   recurrence, O(N I) per step.
//!
//! Contracting a trace against an error vector delivered at the hidden state
//! ([`apply_feedback`]) yields parameter-shaped gradients. For complex
//! parameters the result packs `dL/dRe + i dL/dIm` (the convention under which
//! finite differences on the (Re, Im) pairs agree).

use num_complex::Complex64;

use crate::cells::{ctrnn_substep, CtrnnParams, LruParams};
use crate::error::{Error, Result};
use crate::math::{all_finite, all_finite_c, CMat, Mat};

/// Dense exact RTRL trace for the CT-RNN.
#[derive(Debug, Clone)]
pub struct CtrnnRtrlTrace {
    n: usize,
    z: usize,
    /// `j_w[(i * n + j) * z + k] = dh_i / dW_jk`
    pub j_w: Vec<f64>,
    /// `j_tau[i * n + j] = dh_i / dtau_j`
    pub j_tau: Vec<f64>,
    scratch_w: Vec<f64>,
    scratch_tau: Vec<f64>,
    /// Multiply-accumulate count, for the complexity assertions.
    pub ops: u64,
}

impl CtrnnRtrlTrace {
    pub fn zeros(params: &CtrnnParams) -> Self {
        let (n, z) = (params.n(), params.z());
        CtrnnRtrlTrace {
            n,
            z,
            j_w: vec![0.0; n * n * z],
            j_tau: vec![0.0; n * n],
            scratch_w: vec![0.0; n * n * z],
            scratch_tau: vec![0.0; n * n],
            ops: 0,
        }
    }

    #[inline]
    pub fn w_at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.j_w[(i * self.n + j) * self.z + k]
    }

    #[inline]
    pub fn tau_at(&self, i: usize, j: usize) -> f64 {
        self.j_tau[i * self.n + j]
    }

    pub fn reset(&mut self) {
        self.j_w.iter_mut().for_each(|v| *v = 0.0);
        self.j_tau.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Block-diagonal RFLO trace: `j_w[i, k] = dh_i / dW_ik`, `j_tau[i] = dh_i / dtau_i`.
#[derive(Debug, Clone)]
pub struct CtrnnRfloTrace {
    pub j_w: Mat,
    pub j_tau: Vec<f64>,
    pub ops: u64,
}

impl CtrnnRfloTrace {
    pub fn zeros(params: &CtrnnParams) -> Self {
        CtrnnRfloTrace {
            j_w: Mat::zeros(params.n(), params.z()),
            j_tau: vec![0.0; params.n()],
            ops: 0,
        }
    }

    pub fn reset(&mut self) {
        self.j_w.fill(0.0);
        self.j_tau.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Exact diagonal-RTRL trace for the LRU: `s_lambda[i] = dh_i/dlambda_i`,
/// `s_b[i, j] = dh_i/dB_ij` (complex derivatives; the recurrence is
/// holomorphic in both).
#[derive(Debug, Clone)]
pub struct LruTrace {
    pub s_lambda: Vec<Complex64>,
    pub s_b: CMat,
    pub ops: u64,
}

impl LruTrace {
    pub fn zeros(params: &LruParams) -> Self {
        LruTrace {
            s_lambda: vec![Complex64::new(0.0, 0.0); params.n()],
            s_b: CMat::zeros(params.n(), params.input_dim()),
            ops: 0,
        }
    }

    pub fn reset(&mut self) {
        self.s_lambda.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.s_b.data.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    }
}

/// Error signal delivered at the hidden state.
#[derive(Debug, Clone)]
pub enum FeedbackError {
    /// CT-RNN: real vector of length N.
    Real(Vec<f64>),
    /// LRU: `dL/dRe(h) + i dL/dIm(h)` per neuron.
    Complex(Vec<Complex64>),
}

/// Parameter-shaped gradients produced by contracting a trace.
#[derive(Debug, Clone)]
pub enum CellGrads {
    Ctrnn { d_w: Mat, d_tau: Vec<f64> },
    Lru { d_lambda: Vec<Complex64>, d_b: CMat },
}

/// A trace of either engine family.
#[derive(Debug, Clone)]
pub enum JacobianTrace {
    CtrnnRtrl(CtrnnRtrlTrace),
    CtrnnRflo(CtrnnRfloTrace),
    LruDiag(LruTrace),
}

/// Advance state and exact RTRL trace one environment step (k substeps).
pub fn rtrl_step(
    params: &CtrnnParams,
    h: &[f64],
    x: &[f64],
    trace: &mut CtrnnRtrlTrace,
) -> Result<Vec<f64>> {
    let n = params.n();
    let z = params.z();
    if trace.n != n || trace.z != z {
        return Err(Error::config("rtrl_step: trace shape does not match params"));
    }
    let tau = params.tau();
    let dt = params.dt;
    let mut state = h.to_vec();
    for _ in 0..params.k {
        let (next, st) = ctrnn_substep(params, &tau, &state, x);
        // Row i of the new trace:
        //   J'[i] = (1 - dt/tau_i) J[i] + (dt/tau_i) phi'_i sum_m Wrec[i,m] J[m] + immediate
        for i in 0..n {
            let leak = 1.0 - dt / tau[i];
            let gain = dt / tau[i] * st.act_deriv[i];
            {
                let (src, dst) = (&trace.j_w, &mut trace.scratch_w);
                let row = &mut dst[i * n * z..(i + 1) * n * z];
                let base = &src[i * n * z..(i + 1) * n * z];
                for (o, &v) in row.iter_mut().zip(base) {
                    *o = leak * v;
                }
                for m in 0..n {
                    let wim = gain * params.w.at(i, params.input_dim + m);
                    if wim != 0.0 {
                        let other = &src[m * n * z..(m + 1) * n * z];
                        for (o, &v) in row.iter_mut().zip(other) {
                            *o += wim * v;
                        }
                    }
                }
            }
            {
                let (src, dst) = (&trace.j_tau, &mut trace.scratch_tau);
                let row = &mut dst[i * n..(i + 1) * n];
                let base = &src[i * n..(i + 1) * n];
                for (o, &v) in row.iter_mut().zip(base) {
                    *o = leak * v;
                }
                for m in 0..n {
                    let wim = gain * params.w.at(i, params.input_dim + m);
                    if wim != 0.0 {
                        let other = &src[m * n..(m + 1) * n];
                        for (o, &v) in row.iter_mut().zip(other) {
                            *o += wim * v;
                        }
                    }
                }
            }
            // immediate partials land on the diagonal block
            for k in 0..z {
                trace.scratch_w[(i * n + i) * z + k] += gain * st.xi[k];
            }
            let phi = st.preact[i].tanh();
            trace.scratch_tau[i * n + i] += dt / (tau[i] * tau[i]) * (state[i] - phi);
        }
        trace.ops += (n as u64) * (n as u64) * ((n as u64) * (z as u64 + 1) + z as u64 + 1);
        std::mem::swap(&mut trace.j_w, &mut trace.scratch_w);
        std::mem::swap(&mut trace.j_tau, &mut trace.scratch_tau);
        state = next;
    }
    if !all_finite(&state) || !all_finite(&trace.j_w) || !all_finite(&trace.j_tau) {
        return Err(Error::NumericFault { step: 0, context: "rtrl trace".into() });
    }
    Ok(state)
}

/// Advance state and block-diagonal RFLO trace one environment step.
pub fn rflo_step(
    params: &CtrnnParams,
    h: &[f64],
    x: &[f64],
    trace: &mut CtrnnRfloTrace,
) -> Result<Vec<f64>> {
    let n = params.n();
    let z = params.z();
    if trace.j_w.rows != n || trace.j_w.cols != z {
        return Err(Error::config("rflo_step: trace shape does not match params"));
    }
    let tau = params.tau();
    let dt = params.dt;
    let mut state = h.to_vec();
    for _ in 0..params.k {
        let (next, st) = ctrnn_substep(params, &tau, &state, x);
        for i in 0..n {
            let leak = 1.0 - dt / tau[i];
            let gain = dt / tau[i] * st.act_deriv[i];
            let row = trace.j_w.row_mut(i);
            for k in 0..z {
                row[k] = leak * row[k] + gain * st.xi[k];
            }
            let phi = st.preact[i].tanh();
            trace.j_tau[i] = leak * trace.j_tau[i] + dt / (tau[i] * tau[i]) * (state[i] - phi);
        }
        trace.ops += (n as u64) * (z as u64 + 1);
        state = next;
    }
    if !all_finite(&state) || !all_finite(&trace.j_w.data) || !all_finite(&trace.j_tau) {
        return Err(Error::NumericFault { step: 0, context: "rflo trace".into() });
    }
    Ok(state)
}

/// Advance state and exact diagonal traces for the LRU.
pub fn lru_rtrl_step(
    params: &LruParams,
    h: &[Complex64],
    x: &[f64],
    trace: &mut LruTrace,
) -> Result<Vec<Complex64>> {
    let n = params.n();
    let i_dim = params.input_dim();
    if trace.s_lambda.len() != n || trace.s_b.rows != n || trace.s_b.cols != i_dim {
        return Err(Error::config("lru_rtrl_step: trace shape does not match params"));
    }
    if h.len() != n || x.len() != i_dim {
        return Err(Error::config("lru_rtrl_step: dimension mismatch"));
    }
    for i in 0..n {
        let lam = params.lambda[i];
        trace.s_lambda[i] = lam * trace.s_lambda[i] + h[i];
        for j in 0..i_dim {
            let s = trace.s_b.at(i, j);
            *trace.s_b.at_mut(i, j) = lam * s + x[j];
        }
    }
    trace.ops += (n as u64) * (i_dim as u64 + 1);
    let next = crate::cells::lru_step(params, h, x)?;
    if !all_finite_c(&trace.s_lambda) || !all_finite_c(&trace.s_b.data) {
        return Err(Error::NumericFault { step: 0, context: "lru trace".into() });
    }
    Ok(next)
}

/// Contract an exact CT-RNN trace against a hidden-state error.
pub fn rtrl_apply(trace: &CtrnnRtrlTrace, eps: &[f64]) -> (Mat, Vec<f64>) {
    let (n, z) = (trace.n, trace.z);
    assert_eq!(eps.len(), n);
    let mut d_w = Mat::zeros(n, z);
    let mut d_tau = vec![0.0; n];
    for i in 0..n {
        let e = eps[i];
        if e == 0.0 {
            continue;
        }
        for j in 0..n {
            let base = (i * n + j) * z;
            let row = d_w.row_mut(j);
            for k in 0..z {
                row[k] += e * trace.j_w[base + k];
            }
            d_tau[j] += e * trace.j_tau[i * n + j];
        }
    }
    (d_w, d_tau)
}

/// Contract a block-diagonal RFLO trace against a hidden-state error.
pub fn rflo_apply(trace: &CtrnnRfloTrace, eps: &[f64]) -> (Mat, Vec<f64>) {
    let n = trace.j_w.rows;
    assert_eq!(eps.len(), n);
    let mut d_w = Mat::zeros(n, trace.j_w.cols);
    let mut d_tau = vec![0.0; n];
    for i in 0..n {
        let e = eps[i];
        let src = trace.j_w.row(i);
        let dst = d_w.row_mut(i);
        for k in 0..src.len() {
            dst[k] = e * src[k];
        }
        d_tau[i] = e * trace.j_tau[i];
    }
    (d_w, d_tau)
}

/// Contract LRU traces against a complex hidden-state error
/// (`eps[i] = dL/dRe(h_i) + i dL/dIm(h_i)`). Returns packed real gradients.
pub fn lru_apply(trace: &LruTrace, eps: &[Complex64]) -> (Vec<Complex64>, CMat) {
    let n = trace.s_lambda.len();
    assert_eq!(eps.len(), n);
    let mut d_lambda = vec![Complex64::new(0.0, 0.0); n];
    let mut d_b = CMat::zeros(n, trace.s_b.cols);
    for i in 0..n {
        d_lambda[i] = eps[i] * trace.s_lambda[i].conj();
        for j in 0..trace.s_b.cols {
            *d_b.at_mut(i, j) = eps[i] * trace.s_b.at(i, j).conj();
        }
    }
    (d_lambda, d_b)
}

/// Trace-against-error contraction, dispatching on trace kind.
pub fn apply_feedback(trace: &JacobianTrace, eps: &FeedbackError) -> Result<CellGrads> {
    match (trace, eps) {
        (JacobianTrace::CtrnnRtrl(t), FeedbackError::Real(e)) => {
            let (d_w, d_tau) = rtrl_apply(t, e);
            Ok(CellGrads::Ctrnn { d_w, d_tau })
        }
        (JacobianTrace::CtrnnRflo(t), FeedbackError::Real(e)) => {
            let (d_w, d_tau) = rflo_apply(t, e);
            Ok(CellGrads::Ctrnn { d_w, d_tau })
        }
        (JacobianTrace::LruDiag(t), FeedbackError::Complex(e)) => {
            let (d_lambda, d_b) = lru_apply(t, e);
            Ok(CellGrads::Lru { d_lambda, d_b })
        }
        _ => Err(Error::config("apply_feedback: trace and error kinds do not match")),
    }
}
