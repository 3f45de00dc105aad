//! Gaussian RBF networks approximating the unknown per-loop aggregate, their
//! leaky adaptive law, and the first-order filters that feed the last network
//! input.
//!
//! Network `i` (0-based) takes `z̄ = (x_1, .., x_{i+1}, s_i)` where `s_i` is
//! the filtered `x_{i+2}` (or the filtered control input for the last loop).
//! Weights are not owned by the network; they live in the closed-loop state
//! vector and are passed in as slices.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RbfNetwork {
    /// Row-major, `nodes x input_dim`.
    centers: Vec<f64>,
    input_dim: usize,
    width: f64,
    lambda: f64,
    eta: f64,
    k_eps: f64,
}

impl RbfNetwork {
    pub fn new(
        centers: Vec<Vec<f64>>,
        width: f64,
        lambda: f64,
        eta: f64,
        k_eps: f64,
    ) -> Result<Self> {
        let Some(first) = centers.first() else {
            return Err(Error::InvalidConfig(
                "an RBF network needs at least one node".into(),
            ));
        };
        let input_dim = first.len();
        if input_dim == 0 {
            return Err(Error::InvalidConfig("RBF centers must be non-empty".into()));
        }
        if let Some(bad) = centers.iter().find(|c| c.len() != input_dim) {
            return Err(Error::DimensionMismatch {
                expected: input_dim,
                got: bad.len(),
            });
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "RBF width must be positive, got {width}"
            )));
        }
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if !(k_eps.is_finite() && k_eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "k_eps must be positive, got {k_eps}"
            )));
        }
        Ok(Self {
            centers: centers.into_iter().flatten().collect(),
            input_dim,
            width,
            lambda,
            eta,
            k_eps,
        })
    }

    pub fn nodes(&self) -> usize {
        self.centers.len() / self.input_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn k_eps(&self) -> f64 {
        self.k_eps
    }

    pub fn center(&self, k: usize) -> &[f64] {
        &self.centers[k * self.input_dim..(k + 1) * self.input_dim]
    }

    /// Computable bound on `‖φ‖`: every component lies in `(0, 1]`.
    pub fn basis_norm_bound(&self) -> f64 {
        (self.nodes() as f64).sqrt()
    }

    /// `φ_k = exp(-‖z̄ - c_k‖² / b)`, written into `phi`.
    pub fn basis_into(&self, zbar: &[f64], phi: &mut [f64]) -> Result<()> {
        if zbar.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: zbar.len(),
            });
        }
        if phi.len() != self.nodes() {
            return Err(Error::DimensionMismatch {
                expected: self.nodes(),
                got: phi.len(),
            });
        }
        for (p, c) in phi
            .iter_mut()
            .zip(self.centers.chunks_exact(self.input_dim))
        {
            let d2: f64 = c
                .iter()
                .zip(zbar)
                .map(|(ci, zi)| (zi - ci) * (zi - ci))
                .sum();
            *p = (-d2 / self.width).exp();
        }
        Ok(())
    }

    pub fn basis(&self, zbar: &[f64]) -> Result<Vec<f64>> {
        let mut phi = vec![0.0; self.nodes()];
        self.basis_into(zbar, &mut phi)?;
        Ok(phi)
    }

    /// `Ŵᵀφ`.
    pub fn output(&self, weights: &[f64], phi: &[f64]) -> f64 {
        weights.iter().zip(phi).map(|(w, p)| w * p).sum()
    }

    /// `dŴ/dt = λ(φ - (k_ε² + η)Ŵ)`, written into `out`.
    pub fn weight_derivative_into(&self, weights: &[f64], phi: &[f64], out: &mut [f64]) {
        let leak = self.k_eps * self.k_eps + self.eta;
        for ((o, w), p) in out.iter_mut().zip(weights).zip(phi) {
            *o = self.lambda * (p - leak * w);
        }
    }

    pub fn weight_derivative(&self, weights: &[f64], phi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; weights.len()];
        self.weight_derivative_into(weights, phi, &mut out);
        out
    }
}

/// First-order lag `τ ds/dt = raw - s` used to break the algebraic loop
/// between a network input and the signal it helps compute.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InputFilter {
    tau: f64,
}

impl InputFilter {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_finite() && tau > 0.0 {
            Ok(Self { tau })
        } else {
            Err(Error::InvalidConfig(format!(
                "filter time constant must be positive, got {tau}"
            )))
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn derivative(&self, state: f64, raw: f64) -> f64 {
        (raw - state) / self.tau
    }
}

/// Draws `nodes` centers uniformly from the box `bounds` (one `(lo, hi)` per
/// input dimension). Collapsed intervals (`lo == hi`) are allowed.
pub fn init_centers(nodes: usize, bounds: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    if nodes == 0 {
        return Err(Error::InvalidConfig(
            "an RBF network needs at least one node".into(),
        ));
    }
    if bounds.is_empty() {
        return Err(Error::DegenerateBox("box has no dimensions".into()));
    }
    for (k, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::DegenerateBox(format!("dimension {k}: [{lo}, {hi}]")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..nodes)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| {
                    if lo == hi {
                        lo
                    } else {
                        rng.random_range(lo..hi)
                    }
                })
                .collect()
        })
        .collect())
}
