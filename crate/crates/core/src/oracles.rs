//! Independent reference implementations used by tests and the `verify`
//! suite: central finite differences, fully unrolled reverse-accumulation
//! gradients for short horizons, an analytic Markov-reward-process value
//! solver, and a scalar Adam recurrence.
//!
//! Nothing here shares code with the online gradient engines it is used to
//! check; the forward rollouts below are re-derived with plain scalar loops.

use num_complex::Complex64;

use crate::cells::CtrnnParams;
use crate::error::{Error, Result};
use crate::math::Mat;

/// Central finite differences of a scalar function, one parameter at a time.
pub fn fd_scalar_grad(f: impl Fn(&[f64]) -> f64, x0: &[f64], eps: f64) -> Vec<f64> {
    assert!(eps > 0.0);
    let mut g = vec![0.0; x0.len()];
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let fp = f(&x);
        x[i] = x0[i] - eps;
        let fm = f(&x);
        x[i] = x0[i];
        g[i] = (fp - fm) / (2.0 * eps);
    }
    g
}

/// Central finite differences of a vector function: result[p] = d out / d x0[p].
pub fn fd_jacobian(f: impl Fn(&[f64]) -> Vec<f64>, x0: &[f64], eps: f64) -> Vec<Vec<f64>> {
    assert!(eps > 0.0);
    let mut rows = Vec::with_capacity(x0.len());
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let fp = f(&x);
        x[i] = x0[i] - eps;
        let fm = f(&x);
        x[i] = x0[i];
        rows.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect());
    }
    rows
}

/// Same for a complex-valued function perturbed along one real direction.
pub fn fd_jacobian_complex(
    f: impl Fn(&[f64]) -> Vec<Complex64>,
    x0: &[f64],
    eps: f64,
) -> Vec<Vec<Complex64>> {
    let mut rows = Vec::with_capacity(x0.len());
    let mut x = x0.to_vec();
    for i in 0..x0.len() {
        x[i] = x0[i] + eps;
        let fp = f(&x);
        x[i] = x0[i] - eps;
        let fm = f(&x);
        x[i] = x0[i];
        rows.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * eps)).collect());
    }
    rows
}

/// Gradients of the linear functional `eps . h_T` of a CT-RNN rollout,
/// computed by reverse accumulation through an explicitly stored unroll.
/// The forward pass is re-derived here with scalar loops so the oracle stays
/// independent of the production cell code.
pub fn ctrnn_unrolled_grad(
    params: &CtrnnParams,
    h0: &[f64],
    inputs: &[Vec<f64>],
    eps: &[f64],
) -> (Mat, Vec<f64>) {
    let n = params.n();
    let z = params.z();
    let input_dim = params.input_dim;
    let tau = params.tau();
    let dt = params.dt;
    assert!(inputs.len() <= 64, "unrolled oracle is for short horizons");
    assert_eq!(h0.len(), n);
    assert_eq!(eps.len(), n);

    struct Substep {
        h_pre: Vec<f64>,
        xi: Vec<f64>,
        phi: Vec<f64>,
        phi_prime: Vec<f64>,
    }

    let mut tape: Vec<Substep> = Vec::with_capacity(inputs.len() * params.k);
    let mut h = h0.to_vec();
    for x in inputs {
        assert_eq!(x.len(), input_dim);
        for _ in 0..params.k {
            let mut xi = Vec::with_capacity(z);
            xi.extend_from_slice(x);
            xi.extend_from_slice(&h);
            xi.push(1.0);
            let mut phi = vec![0.0; n];
            let mut phi_prime = vec![0.0; n];
            let mut h_next = vec![0.0; n];
            for i in 0..n {
                let mut a = 0.0;
                for (jj, &v) in xi.iter().enumerate() {
                    a += params.w.at(i, jj) * v;
                }
                let p = a.tanh();
                phi[i] = p;
                phi_prime[i] = 1.0 - p * p;
                h_next[i] = h[i] + dt / tau[i] * (-h[i] + p);
            }
            tape.push(Substep { h_pre: h.clone(), xi, phi, phi_prime });
            h = h_next;
        }
    }

    let mut d_w = Mat::zeros(n, z);
    let mut d_tau = vec![0.0; n];
    let mut gbar = eps.to_vec();
    for step in tape.iter().rev() {
        for i in 0..n {
            let l = dt / tau[i];
            let coeff = gbar[i] * l * step.phi_prime[i];
            for k in 0..z {
                *d_w.at_mut(i, k) += coeff * step.xi[k];
            }
            d_tau[i] += gbar[i] * dt / (tau[i] * tau[i]) * (step.h_pre[i] - step.phi[i]);
        }
        let mut gprev = vec![0.0; n];
        for m in 0..n {
            gprev[m] = gbar[m] * (1.0 - dt / tau[m]);
        }
        for i in 0..n {
            let coeff = gbar[i] * (dt / tau[i]) * step.phi_prime[i];
            for m in 0..n {
                gprev[m] += coeff * params.w.at(i, input_dim + m);
            }
        }
        gbar = gprev;
    }
    (d_w, d_tau)
}

/// Solve `v = rbar + gamma P v` directly (Gaussian elimination with partial
/// pivoting on `I - gamma P`).
pub fn mrp_value_solver(p: &Mat, rbar: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = p.rows;
    if p.cols != n || rbar.len() != n {
        return Err(Error::config("mrp solver: shape mismatch"));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::config("mrp solver: gamma must be in [0, 1)"));
    }
    for i in 0..n {
        let row_sum: f64 = p.row(i).iter().sum();
        if (row_sum - 1.0).abs() > 1e-9 || p.row(i).iter().any(|&v| v < -1e-12) {
            return Err(Error::config("mrp solver: P must be row-stochastic"));
        }
    }
    // a = I - gamma P, augmented with rbar
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = if i == j { 1.0 } else { 0.0 } - gamma * p.at(i, j);
        }
        a[i][n] = rbar[i];
    }
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            return Err(Error::config("mrp solver: singular system"));
        }
        a.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut v = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = a[i][n];
        for j in i + 1..n {
            acc -= a[i][j] * v[j];
        }
        v[i] = acc / a[i][i];
    }
    Ok(v)
}

/// A small Markov reward process: transition matrix plus per-state expected
/// reward, used as the substrate for the TD(lambda) convergence checks.
#[derive(Debug, Clone)]
pub struct Mrp {
    pub p: Mat,
    pub rbar: Vec<f64>,
}

impl Mrp {
    pub fn n_states(&self) -> usize {
        self.p.rows
    }

    /// Sample the successor of `s` from one uniform draw.
    pub fn sample_next(&self, s: usize, u: f64) -> usize {
        let row = self.p.row(s);
        let mut acc = 0.0;
        for (j, &pj) in row.iter().enumerate() {
            acc += pj;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    }

    pub fn solve(&self, gamma: f64) -> Result<Vec<f64>> {
        mrp_value_solver(&self.p, &self.rbar, gamma)
    }
}

/// One scalar lane of the Adam recurrence with bias correction, written
/// plainly so the optimizer can be checked against it coordinate by
/// coordinate.
#[derive(Debug, Clone)]
pub struct AdamScalarRef {
    m: f64,
    v: f64,
    t: u32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamScalarRef {
    pub fn new() -> Self {
        AdamScalarRef { m: 0.0, v: 0.0, t: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Returns the (negative) parameter increment for gradient `g`, i.e. the
    /// amount a minimizer subtracts.
    pub fn step(&mut self, g: f64, lr: f64) -> f64 {
        self.t += 1;
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g;
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g;
        let m_hat = self.m / (1.0 - self.beta1.powi(self.t as i32));
        let v_hat = self.v / (1.0 - self.beta2.powi(self.t as i32));
        lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

impl Default for AdamScalarRef {
    fn default() -> Self {
        Self::new()
    }
}
