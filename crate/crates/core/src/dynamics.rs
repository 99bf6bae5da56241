//! Discrete-time neuron, synaptic-trace and refractory dynamics for one layer.
//!
//! Per step `n`:
//!
//! ```text
//! U[n]   = W P[n] - delta R[n],      S[n] = [U[n] > 0]
//! P[n+1] = alpha P[n] + Q[n]
//! Q[n+1] = beta Q[n] + S_in[n]
//! R[n+1] = gamma R[n] + S[n]
//! ```
//!
//! `P` and `Q` are indexed by input channel and shared by every neuron of the
//! layer; `R`, `U`, `S` are indexed by neuron.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;

/// Largest decay constant produced by [`LayerParams::randomized`].
pub const MAX_DECAY: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// Membrane-trace decay, one per input channel.
    pub alpha: Vec<f64>,
    /// Synaptic-trace decay, one per input channel.
    pub beta: Vec<f64>,
    /// Refractory decay, one per neuron.
    pub gamma: Vec<f64>,
    /// Refractory reset strength.
    pub delta: f64,
    /// When set, `P[n]` is the previous step's input spikes and `Q`, `R` are unused.
    #[serde(default)]
    pub binary: bool,
}

impl LayerParams {
    pub fn uniform(n_in: usize, n_out: usize, alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        let p = LayerParams {
            alpha: vec![alpha; n_in],
            beta: vec![beta; n_in],
            gamma: vec![gamma; n_out],
            delta,
            binary: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Decays drawn uniformly within `±spread` (relative) of the nominal values,
    /// clipped to `[0, MAX_DECAY]`.
    #[allow(clippy::too_many_arguments)]
    pub fn randomized<R: Rng + ?Sized>(
        n_in: usize,
        n_out: usize,
        alpha: f64,
        beta: f64,
        gamma: f64,
        delta: f64,
        spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&spread) {
            return Err(Error::InvalidParam(format!("decay spread must be in [0,1), got {spread}")));
        }
        let mut draw = |nominal: f64| {
            let f = if spread > 0.0 { rng.random_range(-spread..=spread) } else { 0.0 };
            (nominal * (1.0 + f)).clamp(0.0, MAX_DECAY)
        };
        let alpha_v = (0..n_in).map(|_| draw(alpha)).collect();
        let beta_v = (0..n_in).map(|_| draw(beta)).collect();
        let gamma_v = (0..n_out).map(|_| draw(gamma)).collect();
        let p = LayerParams {
            alpha: alpha_v,
            beta: beta_v,
            gamma: gamma_v,
            delta,
            binary: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn n_in(&self) -> usize {
        self.alpha.len()
    }

    pub fn n_out(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_len("beta", self.alpha.len(), self.beta.len())?;
        let in_range = |v: &f64| (0.0..1.0).contains(v);
        if !self.alpha.iter().chain(&self.beta).chain(&self.gamma).all(in_range) {
            return Err(Error::InvalidParam("decay constants must lie in [0, 1)".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::InvalidParam(format!("delta must be >= 0, got {}", self.delta)));
        }
        Ok(())
    }

    /// Converts the layer into a plain binary threshold unit: `alpha = 0`,
    /// `delta = 0`, and `P[n]` replaced by the previous input spikes.
    pub fn binary_network_mode(&self) -> LayerParams {
        LayerParams {
            alpha: vec![0.0; self.alpha.len()],
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            delta: 0.0,
            binary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerState {
    pub u: Vec<f64>,
    pub s: Vec<bool>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl LayerState {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        LayerState {
            u: vec![0.0; n_out],
            s: vec![false; n_out],
            p: vec![0.0; n_in],
            q: vec![0.0; n_in],
            r: vec![0.0; n_out],
        }
    }

    pub fn for_params(params: &LayerParams) -> Self {
        Self::zeros(params.n_in(), params.n_out())
    }

    pub fn reset(&mut self) {
        self.u.fill(0.0);
        self.s.fill(false);
        self.p.fill(0.0);
        self.q.fill(0.0);
        self.r.fill(0.0);
    }

    fn check(&self, params: &LayerParams) -> Result<()> {
        check_len("trace P", params.n_in(), self.p.len())?;
        check_len("trace Q", params.n_in(), self.q.len())?;
        check_len("refractory R", params.n_out(), self.r.len())?;
        check_len("membrane U", params.n_out(), self.u.len())?;
        check_len("spikes S", params.n_out(), self.s.len())
    }

    /// Advances `P`, `Q` and `R` by one step. `U` and `S` are left untouched;
    /// `R` integrates the spikes currently held in `S`.
    pub fn step_traces(&mut self, in_spikes: &[bool], params: &LayerParams) -> Result<()> {
        self.check(params)?;
        check_len("input spikes", params.n_in(), in_spikes.len())?;
        if params.binary {
            for (p, &x) in self.p.iter_mut().zip(in_spikes) {
                *p = f64::from(u8::from(x));
            }
            return Ok(());
        }
        for j in 0..self.p.len() {
            let q = self.q[j];
            self.p[j] = params.alpha[j] * self.p[j] + q;
            self.q[j] = params.beta[j] * q + f64::from(u8::from(in_spikes[j]));
        }
        for (i, r) in self.r.iter_mut().enumerate() {
            *r = params.gamma[i] * *r + f64::from(u8::from(self.s[i]));
        }
        Ok(())
    }

    /// Sets `U = drive - delta R` and `S = [U > 0]`, where `drive = W P` was
    /// computed elsewhere (dense weights or a crossbar read).
    pub fn fire(&mut self, drive: &[f64], params: &LayerParams) -> Result<()> {
        self.check(params)?;
        check_len("membrane drive", params.n_out(), drive.len())?;
        let delta = if params.binary { 0.0 } else { params.delta };
        for i in 0..self.u.len() {
            let u = drive[i] - delta * self.r[i];
            self.u[i] = u;
            self.s[i] = u > 0.0;
        }
        Ok(())
    }

    /// `U = W P - delta R`, `S = [U > 0]` for a dense `n_out x n_in` weight matrix.
    pub fn membrane_and_fire(&mut self, weights: &Matrix, params: &LayerParams) -> Result<()> {
        check_len("weight rows", params.n_out(), weights.rows())?;
        check_len("weight cols", params.n_in(), weights.cols())?;
        let drive = weights.matvec(&self.p)?;
        self.fire(&drive, params)
    }
}

/// Upper bound on `P` for binary inputs and the given decays.
pub fn trace_bound(alpha: f64, beta: f64) -> f64 {
    1.0 / ((1.0 - alpha) * (1.0 - beta))
}
