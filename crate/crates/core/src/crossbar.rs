//! Simulated memristive crossbar in the unbalanced realization: one device per
//! weight, read against a shared reference conductance at mid-range, so
//! `W = G - G_ref`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::learning::SparseUpdate;
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateModel {
    /// `G += dW`, clipped to the conductance range.
    #[default]
    Linear,
    /// Update efficacy shrinks linearly towards the bound being approached.
    SoftBound,
}

/// Device programming knobs beyond the update model. Both are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProgrammingOptions {
    /// Quantize each requested change to multiples of `range / levels`.
    pub quantize_levels: Option<u32>,
    /// Multiplicative lognormal write noise, `dG *= exp(sigma z)`.
    pub write_noise_sigma: Option<f64>,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossbarArray {
    g: Matrix,
    g_min: f64,
    g_max: f64,
    g_ref: f64,
    write_counts: Matrix<u64>,
    total_writes: u64,
    pub update_model: UpdateModel,
    pub options: ProgrammingOptions,
    program_calls: u64,
    #[serde(skip)]
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    acc: Vec<f64>,
    seen: Vec<bool>,
    touched: Vec<usize>,
}

// Scratch buffers carry no state between calls.
impl PartialEq for Scratch {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

/// Write accounting, either cumulative or for one `program` call.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WriteStats {
    pub total_writes: u64,
    pub max_device_writes: u64,
    /// `(writes, number of devices with that many writes)`, ascending.
    pub histogram: Vec<(u64, usize)>,
}

impl CrossbarArray {
    pub fn new(n_out: usize, n_in: usize, g_min: f64, g_max: f64) -> Result<Self> {
        Self::with_conductances(Matrix::filled(n_out, n_in, 0.5 * (g_min + g_max)), g_min, g_max)
    }

    pub fn with_conductances(g: Matrix, g_min: f64, g_max: f64) -> Result<Self> {
        if !(g_min < g_max) || !g_min.is_finite() || !g_max.is_finite() {
            return Err(Error::InvalidParam(format!("conductance range [{g_min}, {g_max}] is empty")));
        }
        g.validate()?;
        if g.as_slice().iter().any(|&v| !(g_min..=g_max).contains(&v)) {
            return Err(Error::InvalidParam("initial conductance outside range".into()));
        }
        let (rows, cols) = (g.rows(), g.cols());
        Ok(CrossbarArray {
            g,
            g_min,
            g_max,
            g_ref: 0.5 * (g_min + g_max),
            write_counts: Matrix::zeros(rows, cols),
            total_writes: 0,
            update_model: UpdateModel::Linear,
            options: ProgrammingOptions::default(),
            program_calls: 0,
            scratch: Scratch::default(),
        })
    }

    /// Conductances uniform in `G_ref +- spread (G_max - G_min)`.
    pub fn random<R: Rng + ?Sized>(
        n_out: usize,
        n_in: usize,
        g_min: f64,
        g_max: f64,
        spread: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(0.0..=0.5).contains(&spread) {
            return Err(Error::InvalidParam(format!("init spread must be in [0, 0.5], got {spread}")));
        }
        let g_ref = 0.5 * (g_min + g_max);
        let half = spread * (g_max - g_min);
        let g = Matrix::from_fn(n_out, n_in, |_, _| {
            if half > 0.0 {
                rng.random_range(g_ref - half..=g_ref + half)
            } else {
                g_ref
            }
        });
        Self::with_conductances(g, g_min, g_max)
    }

    pub fn n_out(&self) -> usize {
        self.g.rows()
    }

    pub fn n_in(&self) -> usize {
        self.g.cols()
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn g_ref(&self) -> f64 {
        self.g_ref
    }

    pub fn conductances(&self) -> &Matrix {
        &self.g
    }

    pub fn write_counts(&self) -> &Matrix<u64> {
        &self.write_counts
    }

    pub fn total_writes(&self) -> u64 {
        self.total_writes
    }

    pub fn effective_weight(&self) -> Matrix {
        let g_ref = self.g_ref;
        self.g.map(|g| g - g_ref)
    }

    /// `U_i = sum_j (G_ij - G_ref) P_j`.
    pub fn vmm(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_len("crossbar input", self.n_in(), p.len())?;
        let g_ref = self.g_ref;
        Ok((0..self.n_out())
            .map(|i| {
                self.g
                    .row(i)
                    .iter()
                    .zip(p)
                    .fold(0.0, |acc, (&g, &pj)| acc + (g - g_ref) * pj)
            })
            .collect())
    }

    /// Applies a batch of requested weight changes. Entries addressing the same
    /// device are summed, in list order, and programmed as one write.
    pub fn program(&mut self, updates: &[SparseUpdate]) -> Result<WriteStats> {
        let (rows, cols) = (self.n_out(), self.n_in());
        for u in updates {
            if u.row >= rows || u.col >= cols {
                return Err(Error::InvalidParam(format!(
                    "update ({}, {}) outside {rows}x{cols} crossbar",
                    u.row, u.col
                )));
            }
        }
        if updates.is_empty() {
            return Ok(WriteStats::default());
        }

        let mut scratch = std::mem::take(&mut self.scratch);
        if scratch.acc.len() != rows * cols {
            scratch.acc = vec![0.0; rows * cols];
            scratch.seen = vec![false; rows * cols];
        }
        scratch.touched.clear();
        for u in updates {
            let k = u.row * cols + u.col;
            if std::mem::replace(&mut scratch.seen[k], true) {
                scratch.acc[k] += u.delta;
            } else {
                scratch.touched.push(k);
                scratch.acc[k] = u.delta;
            }
        }

        let mut noise = self
            .options
            .write_noise_sigma
            .map(|s| (s, rng::rng(self.options.noise_seed, rng::Stream::Noise, self.program_calls)));
        self.program_calls += 1;

        let range = self.g_max - self.g_min;
        let mut call_counts: BTreeMap<u64, usize> = BTreeMap::new();
        let mut max_device = 0;
        for &k in &scratch.touched {
            let mut dw = scratch.acc[k];
            if let Some(levels) = self.options.quantize_levels.filter(|&l| l > 0) {
                let step = range / f64::from(levels);
                dw = (dw / step).round() * step;
            }
            if let Some((sigma, r)) = noise.as_mut() {
                let z: f64 = StandardNormal.sample(r);
                dw *= (*sigma * z).exp();
            }
            scratch.seen[k] = false;
            let (i, j) = (k / cols, k % cols);
            let g = self.g.get(i, j);
            let dg = match self.update_model {
                UpdateModel::Linear => dw,
                UpdateModel::SoftBound if dw > 0.0 => dw * (self.g_max - g) / range,
                UpdateModel::SoftBound => dw * (g - self.g_min) / range,
            };
            self.g.set(i, j, (g + dg).clamp(self.g_min, self.g_max));
            let c = self.write_counts.get_mut(i, j);
            *c += 1;
            max_device = max_device.max(*c);
        }
        let n = scratch.touched.len();
        self.total_writes += n as u64;
        call_counts.insert(1, n);
        self.scratch = scratch;
        Ok(WriteStats {
            total_writes: n as u64,
            max_device_writes: max_device,
            histogram: call_counts.into_iter().collect(),
        })
    }

    /// Cumulative write accounting since construction.
    pub fn write_stats(&self) -> WriteStats {
        let mut hist: BTreeMap<u64, usize> = BTreeMap::new();
        for &c in self.write_counts.as_slice() {
            *hist.entry(c).or_default() += 1;
        }
        WriteStats {
            total_writes: self.total_writes,
            max_device_writes: self.write_counts.as_slice().iter().copied().max().unwrap_or(0),
            histogram: hist.into_iter().collect(),
        }
    }

    /// Checks invariants after deserialization.
    pub fn validate(&self) -> Result<()> {
        self.g.validate()?;
        self.write_counts.validate()?;
        check_len("write counter rows", self.g.rows(), self.write_counts.rows())?;
        check_len("write counter cols", self.g.cols(), self.write_counts.cols())?;
        if (self.g_ref - 0.5 * (self.g_min + self.g_max)).abs() > 1e-12 {
            return Err(Error::Checkpoint("reference conductance is not mid-range".into()));
        }
        if self.g.as_slice().iter().any(|&v| !(self.g_min..=self.g_max).contains(&v)) {
            return Err(Error::Checkpoint("conductance outside range".into()));
        }
        let sum: u64 = self.write_counts.as_slice().iter().sum();
        if sum != self.total_writes {
            return Err(Error::Checkpoint(format!(
                "write counters sum to {sum} but total is {}",
                self.total_writes
            )));
        }
        Ok(())
    }
}
