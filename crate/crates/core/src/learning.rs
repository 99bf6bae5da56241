//! Three-factor surrogate-gradient updates.
//!
//! The weight gradient factors into a local error `err_i`, the surrogate
//! derivative `B(U_i)` (a box on `(u_minus, u_plus)`) and the presynaptic trace
//! `P_j`. The continuous rule applies `-eta err_i P_j` wherever the box is open;
//! the error-triggered rule thresholds `err` at `theta` into bipolar events and
//! applies `-sign theta P_j` only at those events.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Smallest threshold the controller will settle on.
pub const THETA_MIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateWindow {
    pub u_minus: f64,
    pub u_plus: f64,
}

impl Default for SurrogateWindow {
    fn default() -> Self {
        SurrogateWindow {
            u_minus: -0.5,
            u_plus: 0.5,
        }
    }
}

impl SurrogateWindow {
    pub fn new(u_minus: f64, u_plus: f64) -> Result<Self> {
        let w = SurrogateWindow { u_minus, u_plus };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_minus < 0.0 && 0.0 < self.u_plus) {
            return Err(Error::InvalidParam(format!(
                "surrogate window ({}, {}) must contain 0",
                self.u_minus, self.u_plus
            )));
        }
        Ok(())
    }

    /// `B(u)`: open strictly inside the window.
    #[inline]
    pub fn contains(&self, u: f64) -> bool {
        self.u_minus < u && u < self.u_plus
    }
}

pub fn surrogate_box(u: &[f64], window: &SurrogateWindow) -> Vec<bool> {
    u.iter().map(|&x| window.contains(x)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEvent {
    pub neuron: usize,
    pub sign: Sign,
    pub step: u64,
    /// `|err| - theta`, the part of the error above threshold.
    pub residual: f64,
}

/// How an error event scales the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventCoding {
    /// One unit event per neuron and step, `|dW| = theta P`.
    #[default]
    Unit,
    /// The event carries its residual, `|dW| = theta (|err| - theta) P`.
    Residual,
}

/// One `(row, col, dW)` entry of a sparse weight update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseUpdate {
    pub row: usize,
    pub col: usize,
    pub delta: f64,
}

/// `E_i = sign(err_i) [|err_i| - theta]^+`, with one event per neuron whose
/// error magnitude exceeds `theta`.
pub fn encode_error(err: &[f64], theta: f64, step: u64) -> (Vec<f64>, Vec<ErrorEvent>) {
    debug_assert!(theta > 0.0);
    let mut residuals = Vec::with_capacity(err.len());
    let mut events = Vec::new();
    for (i, &e) in err.iter().enumerate() {
        let over = e.abs() - theta;
        if over > 0.0 {
            let sign = Sign::of(e);
            residuals.push(sign.as_f64() * over);
            events.push(ErrorEvent {
                neuron: i,
                sign,
                step,
                residual: over,
            });
        } else {
            residuals.push(0.0);
        }
    }
    (residuals, events)
}

/// Unit-event update: `dW_ij = -sign_i theta P_j` for each event whose neuron
/// has its surrogate window open, over all channels with `P_j > 0`.
pub fn error_triggered_update(
    events: &[ErrorEvent],
    p: &[f64],
    u: &[f64],
    window: &SurrogateWindow,
    theta: f64,
) -> Result<Vec<SparseUpdate>> {
    error_triggered_update_with(events, p, u, window, theta, EventCoding::Unit)
}

pub fn error_triggered_update_with(
    events: &[ErrorEvent],
    p: &[f64],
    u: &[f64],
    window: &SurrogateWindow,
    theta: f64,
    coding: EventCoding,
) -> Result<Vec<SparseUpdate>> {
    let mut out = Vec::new();
    for ev in events {
        let &ui = u.get(ev.neuron).ok_or(Error::Dimension {
            what: "event neuron index",
            expected: u.len(),
            actual: ev.neuron,
        })?;
        if !window.contains(ui) {
            continue;
        }
        let scale = match coding {
            EventCoding::Unit => -ev.sign.as_f64() * theta,
            EventCoding::Residual => -ev.sign.as_f64() * theta * ev.residual,
        };
        push_row(&mut out, ev.neuron, p, scale);
    }
    Ok(out)
}

/// `dW_ij = -eta err_i P_j` wherever `B(U_i) = 1` and `P_j > 0`.
pub fn continuous_update(
    err: &[f64],
    p: &[f64],
    u: &[f64],
    window: &SurrogateWindow,
    eta: f64,
) -> Result<Vec<SparseUpdate>> {
    check_len("membrane U", err.len(), u.len())?;
    let mut out = Vec::new();
    for (i, (&e, &ui)) in err.iter().zip(u).enumerate() {
        if e == 0.0 || !window.contains(ui) {
            continue;
        }
        push_row(&mut out, i, p, -eta * e);
    }
    Ok(out)
}

fn push_row(out: &mut Vec<SparseUpdate>, row: usize, p: &[f64], scale: f64) {
    for (col, &pj) in p.iter().enumerate() {
        if pj > 0.0 {
            out.push(SparseUpdate {
                row,
                col,
                delta: scale * pj,
            });
        }
    }
}

/// Proportional controller holding the mean error-event rate near a target by
/// moving the stop-learning threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaController {
    pub theta: f64,
    /// Events per neuron per second.
    pub target_rate: f64,
    /// Threshold change per Hz of rate error, per step.
    pub gain: f64,
    pub rate_estimate: f64,
    /// Averaging time constant of the rate estimator, in seconds.
    pub rate_tau: f64,
    pub theta_min: f64,
}

impl ThetaController {
    pub fn new(theta: f64, target_rate: f64, gain: f64, rate_tau: f64) -> Result<Self> {
        if !(theta > 0.0) || !(target_rate >= 0.0) || !(gain >= 0.0) || !(rate_tau > 0.0) {
            return Err(Error::InvalidParam(format!(
                "controller needs theta > 0, target_rate >= 0, gain >= 0, rate_tau > 0 \
                 (got {theta}, {target_rate}, {gain}, {rate_tau})"
            )));
        }
        Ok(ThetaController {
            theta,
            target_rate,
            gain,
            rate_estimate: target_rate,
            rate_tau,
            theta_min: THETA_MIN,
        })
    }

    /// Folds one step's event count into the rate estimate and moves theta.
    pub fn step(&mut self, events_this_step: usize, n_neurons: usize, dt_seconds: f64) {
        debug_assert!(n_neurons > 0 && dt_seconds > 0.0);
        let measured = events_this_step as f64 / (n_neurons as f64 * dt_seconds);
        let a = 1.0 - (-dt_seconds / self.rate_tau).exp();
        self.rate_estimate += a * (measured - self.rate_estimate);
        self.theta = (self.theta + self.gain * (self.rate_estimate - self.target_rate)).max(self.theta_min);
    }
}

/// Functional form of [`ThetaController::step`].
pub fn controller_step(ctl: &ThetaController, events_this_step: usize, n_neurons: usize, dt_seconds: f64) -> ThetaController {
    let mut next = ctl.clone();
    next.step(events_this_step, n_neurons, dt_seconds);
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w() -> SurrogateWindow {
        SurrogateWindow::new(-0.5, 0.5).unwrap()
    }

    #[test]
    fn box_examples() {
        assert_eq!(surrogate_box(&[0.0], &w()), vec![true]);
        assert_eq!(surrogate_box(&[-0.5], &w()), vec![false]);
        assert_eq!(surrogate_box(&[0.5], &w()), vec![false]);
        assert_eq!(surrogate_box(&[-1.0, 0.2, 3.0], &w()), vec![false, true, false]);
    }

    #[test]
    fn window_must_straddle_zero() {
        assert!(SurrogateWindow::new(0.1, 0.5).is_err());
        assert!(SurrogateWindow::new(0.5, -0.5).is_err());
    }

    #[test]
    fn encode_examples() {
        let (e, ev) = encode_error(&[0.5], 0.2, 3);
        assert!((e[0] - 0.3).abs() < 1e-15);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].neuron, ev[0].sign, ev[0].step), (0, Sign::Plus, 3));

        let (e, ev) = encode_error(&[-0.1], 0.2, 0);
        assert_eq!(e, vec![0.0]);
        assert!(ev.is_empty());

        let (_, ev) = encode_error(&[-0.9, 0.05, 0.21], 0.2, 0);
        let got: Vec<_> = ev.iter().map(|e| (e.neuron, e.sign)).collect();
        assert_eq!(got, vec![(0, Sign::Minus), (2, Sign::Plus)]);
    }

    #[test]
    fn triggered_update_examples() {
        let (_, ev) = encode_error(&[0.5], 0.1, 0);
        let up = error_triggered_update(&ev, &[0.4], &[0.0], &w(), 0.1).unwrap();
        assert_eq!(up.len(), 1);
        assert_eq!((up[0].row, up[0].col), (0, 0));
        assert!((up[0].delta + 0.04).abs() < 1e-15);

        assert!(error_triggered_update(&ev, &[0.4], &[0.7], &w(), 0.1).unwrap().is_empty());
        assert!(error_triggered_update(&[], &[0.4, 1.0], &[0.0], &w(), 0.1).unwrap().is_empty());
    }

    #[test]
    fn triggered_update_skips_silent_channels() {
        let (_, ev) = encode_error(&[-1.0, 0.0], 0.1, 0);
        let up = error_triggered_update(&ev, &[0.0, 2.0, 0.0], &[0.1, 0.1], &w(), 0.1).unwrap();
        assert_eq!(up, vec![SparseUpdate { row: 0, col: 1, delta: 0.2 }]);
    }

    #[test]
    fn residual_coding_scales_by_excess() {
        let (_, ev) = encode_error(&[0.5], 0.1, 0);
        let up = error_triggered_update_with(&ev, &[2.0], &[0.0], &w(), 0.1, EventCoding::Residual).unwrap();
        assert!((up[0].delta + 0.1 * 0.4 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn event_index_out_of_range() {
        let ev = [ErrorEvent { neuron: 3, sign: Sign::Plus, step: 0, residual: 0.0 }];
        assert!(error_triggered_update(&ev, &[1.0], &[0.0], &w(), 0.1).is_err());
    }

    #[test]
    fn continuous_examples() {
        let up = continuous_update(&[1.0], &[0.5], &[0.0], &w(), 0.1).unwrap();
        assert!((up[0].delta + 0.05).abs() < 1e-15);
        let up = continuous_update(&[1.0, -2.0], &[0.5, 1.0], &[0.9, -3.0], &w(), 0.1).unwrap();
        assert!(up.is_empty());
    }

    #[test]
    fn controller_holds_at_target() {
        let ctl = ThetaController::new(0.3, 10.0, 1e-3, 0.05).unwrap();
        // 1 event over 100 neurons in 1 ms is exactly 10 Hz.
        let next = controller_step(&ctl, 1, 100, 1e-3);
        assert_eq!(next.theta, ctl.theta);
    }

    #[test]
    fn controller_raises_theta_on_excess_rate() {
        let ctl = ThetaController::new(0.3, 10.0, 1e-3, 0.05).unwrap();
        let next = controller_step(&ctl, 5, 100, 1e-3);
        assert!(next.rate_estimate > ctl.target_rate);
        assert!(next.theta > ctl.theta);
    }

    #[test]
    fn controller_floor() {
        let mut ctl = ThetaController::new(1e-3, 50.0, 1.0, 0.05).unwrap();
        for _ in 0..10 {
            ctl.step(0, 10, 1e-3);
        }
        assert_eq!(ctl.theta, THETA_MIN);
    }

    #[test]
    fn controller_rejects_bad_config() {
        assert!(ThetaController::new(0.0, 10.0, 1e-3, 0.05).is_err());
        assert!(ThetaController::new(0.1, -1.0, 1e-3, 0.05).is_err());
    }
}
