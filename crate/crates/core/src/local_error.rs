//! Layer-local classifier heads trained through feedback alignment.
//!
//! Each layer owns a fixed random classifier `J` (`C x n_out`) scoring its
//! spikes against one-hot labels with `L = 1/2 |J S - y|^2`. The error is sent
//! back through `H = J^T o omega` with `omega ~ N(1, 1/2)` instead of `J^T`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Matrix;
use crate::rng;

/// Variance of the feedback perturbation.
pub const OMEGA_VARIANCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalErrorHead {
    j: Matrix,
    h: Matrix,
    omega: Matrix,
    pub omega_seed: u64,
}

impl LocalErrorHead {
    pub fn init(seed: u64, n_classes: usize, n_out: usize) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::InvalidParam(format!("need at least 2 classes, got {n_classes}")));
        }
        if n_out == 0 {
            return Err(Error::InvalidParam("head needs at least one neuron".into()));
        }
        let mut r = rng::from_seed(seed);
        let scale = 1.0 / (n_out as f64).sqrt();
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let j = Matrix::from_fn(n_classes, n_out, |_, _| scale * std_normal.sample(&mut r));
        let omega_dist = Normal::new(1.0, OMEGA_VARIANCE.sqrt()).expect("omega normal");
        let omega = Matrix::from_fn(n_out, n_classes, |_, _| omega_dist.sample(&mut r));
        Self::assemble(j, omega, seed)
    }

    /// Builds a head from an explicit classifier and feedback perturbation
    /// (`omega` is `n_out x C`).
    pub fn from_parts(j: Matrix, omega: Matrix) -> Result<Self> {
        Self::assemble(j, omega, 0)
    }

    /// Head whose feedback is exactly `J^T`, i.e. plain gradient descent.
    pub fn exact_feedback(j: Matrix) -> Result<Self> {
        let omega = Matrix::filled(j.cols(), j.rows(), 1.0);
        Self::assemble(j, omega, 0)
    }

    fn assemble(j: Matrix, omega: Matrix, omega_seed: u64) -> Result<Self> {
        j.validate()?;
        omega.validate()?;
        check_len("omega rows", j.cols(), omega.rows())?;
        check_len("omega cols", j.rows(), omega.cols())?;
        let h = Matrix::from_fn(j.cols(), j.rows(), |i, k| j.get(k, i) * omega.get(i, k));
        Ok(LocalErrorHead { j, h, omega, omega_seed })
    }

    /// Re-derives `H` after deserialization and checks shapes.
    pub fn validate(&self) -> Result<()> {
        let rebuilt = Self::assemble(self.j.clone(), self.omega.clone(), self.omega_seed)?;
        if rebuilt.h != self.h {
            return Err(Error::Checkpoint("feedback matrix does not match J o omega".into()));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.j.rows()
    }

    pub fn n_out(&self) -> usize {
        self.j.cols()
    }

    pub fn classifier(&self) -> &Matrix {
        &self.j
    }

    pub fn feedback(&self) -> &Matrix {
        &self.h
    }

    pub fn omega(&self) -> &Matrix {
        &self.omega
    }

    /// `J S`: the head's class scores for one step of spikes.
    pub fn scores(&self, s: &[bool]) -> Result<Vec<f64>> {
        check_len("spikes S", self.n_out(), s.len())?;
        let mut out = vec![0.0; self.n_classes()];
        for (k, o) in out.iter_mut().enumerate() {
            let row = self.j.row(k);
            *o = s.iter().zip(row).filter(|(&si, _)| si).map(|(_, &w)| w).sum();
        }
        Ok(out)
    }

    /// `e = J S - y`.
    pub fn output_error(&self, s: &[bool], y: &[f64]) -> Result<Vec<f64>> {
        check_len("target y", self.n_classes(), y.len())?;
        let mut e = self.scores(s)?;
        for (ek, yk) in e.iter_mut().zip(y) {
            *ek -= yk;
        }
        Ok(e)
    }

    /// `1/2 |J S - y|^2`.
    pub fn local_loss(&self, s: &[bool], y: &[f64]) -> Result<f64> {
        let e = self.output_error(s, y)?;
        Ok(0.5 * e.iter().map(|x| x * x).sum::<f64>())
    }

    /// `H e`, the per-neuron error delivered back to the layer.
    pub fn feedback_error(&self, e: &[f64]) -> Result<Vec<f64>> {
        self.h.matvec(e)
    }

    /// `H (J S - y)`.
    pub fn local_error(&self, s: &[bool], y: &[f64]) -> Result<Vec<f64>> {
        let e = self.output_error(s, y)?;
        self.feedback_error(&e)
    }
}

pub fn one_hot(label: usize, n_classes: usize) -> Vec<f64> {
    let mut y = vec![0.0; n_classes];
    y[label] = 1.0;
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = LocalErrorHead::init(11, 4, 20).unwrap();
        let b = LocalErrorHead::init(11, 4, 20).unwrap();
        let c = LocalErrorHead::init(12, 4, 20).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.classifier(), c.classifier());
    }

    #[test]
    fn single_class_rejected() {
        assert!(LocalErrorHead::init(0, 1, 10).is_err());
        assert!(LocalErrorHead::init(0, 3, 0).is_err());
    }

    #[test]
    fn feedback_is_jt_times_omega() {
        let head = LocalErrorHead::init(5, 3, 7).unwrap();
        for i in 0..7 {
            for k in 0..3 {
                let ratio = head.feedback().get(i, k) / head.classifier().get(k, i);
                assert!((ratio - head.omega().get(i, k)).abs() < 1e-12);
            }
        }
        head.validate().unwrap();
    }

    #[test]
    fn loss_examples() {
        let head = LocalErrorHead::init(1, 3, 5).unwrap();
        let y = one_hot(2, 3);
        assert!((head.local_loss(&[false; 5], &y).unwrap() - 0.5).abs() < 1e-15);

        let j = Matrix::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let head = LocalErrorHead::exact_feedback(j).unwrap();
        assert_eq!(head.local_loss(&[true, false], &one_hot(0, 2)).unwrap(), 0.0);
        assert_eq!(head.local_error(&[true, false], &one_hot(0, 2)).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn loss_matches_scalar_loop() {
        let head = LocalErrorHead::init(9, 4, 6).unwrap();
        let s = [true, false, true, true, false, true];
        let y = one_hot(1, 4);
        let mut oracle = 0.0;
        for k in 0..4 {
            let mut acc = 0.0;
            for i in 0..6 {
                if s[i] {
                    acc += head.classifier().get(k, i);
                }
            }
            oracle += (acc - y[k]) * (acc - y[k]);
        }
        assert!((head.local_loss(&s, &y).unwrap() - 0.5 * oracle).abs() < 1e-12);
    }

    #[test]
    fn exact_feedback_is_loss_gradient() {
        // d/dS_i of 1/2 |J S - y|^2 = (J^T e)_i, checked by treating S as real.
        let head = LocalErrorHead::init(2, 3, 4).unwrap();
        let exact = LocalErrorHead::exact_feedback(head.classifier().clone()).unwrap();
        let s = [true, false, true, false];
        let y = one_hot(0, 3);
        let err = exact.local_error(&s, &y).unwrap();
        let sf: Vec<f64> = s.iter().map(|&b| f64::from(u8::from(b))).collect();
        let loss = |x: &[f64]| {
            let jx = exact.classifier().matvec(x).unwrap();
            0.5 * jx.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        for i in 0..4 {
            let h = 1e-6;
            let mut plus = sf.clone();
            plus[i] += h;
            let mut minus = sf.clone();
            minus[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((fd - err[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_errors() {
        let head = LocalErrorHead::init(1, 3, 5).unwrap();
        assert!(head.local_loss(&[false; 4], &one_hot(0, 3)).is_err());
        assert!(head.local_error(&[false; 5], &[0.0; 2]).is_err());
    }
}
