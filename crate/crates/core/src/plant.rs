//! The true pure-feedback system
//!
//! ```text
//! dx_i/dt = f_i(x_1..x_i, x_{i+1}) + beta_i x_{i+1} + d_i(x_1..x_i, t),   x_{n+1} = u
//! ```
//!
//! Only the integrator reads a [`PlantModel`]. The controller receives the
//! coefficients `beta_i` and nothing else.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

/// `f_i(x̄_i, x_{i+1})`: the prefix `x_1..x_i` and the next state (or `u`).
pub type CouplingFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// `d_i(x̄_i, t)`.
pub type DisturbanceFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Names accepted by [`PlantModel::from_registry`].
pub const REGISTERED_PLANTS: &[&str] = &["benchmark3", "integrator-chain"];

#[derive(Clone)]
pub struct PlantModel {
    name: String,
    beta: Vec<f64>,
    f: Vec<CouplingFn>,
    d: Vec<DisturbanceFn>,
}

impl fmt::Debug for PlantModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlantModel")
            .field("name", &self.name)
            .field("beta", &self.beta)
            .finish_non_exhaustive()
    }
}

impl PlantModel {
    pub fn new(
        name: impl Into<String>,
        beta: Vec<f64>,
        f: Vec<CouplingFn>,
        d: Vec<DisturbanceFn>,
    ) -> Result<Self> {
        let n = beta.len();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "plant order must be at least 1".into(),
            ));
        }
        if f.len() != n || d.len() != n {
            return Err(Error::InvalidConfig(format!(
                "plant of order {n} needs {n} coupling and disturbance functions, got {} and {}",
                f.len(),
                d.len()
            )));
        }
        if let Some(i) = beta.iter().position(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "control coefficient beta_{} must be finite and nonzero",
                i + 1
            )));
        }
        Ok(Self {
            name: name.into(),
            beta,
            f,
            d,
        })
    }

    /// Pure integrator chain: `f ≡ 0`, `d ≡ 0`, `beta ≡ 1`.
    pub fn integrator_chain(n: usize) -> Result<Self> {
        let zero: CouplingFn = Arc::new(|_, _| 0.0);
        Self::new(
            "integrator-chain",
            vec![1.0; n],
            vec![zero.clone(); n],
            vec![zero; n],
        )
    }

    /// Third-order benchmark with non-affine couplings and state-dependent
    /// disturbances. The input gain `0.9 + 0.05 exp(-x1^2)` is split into
    /// `beta_3 = 0.9` and a residual folded into `f_3`.
    pub fn benchmark3() -> Self {
        let f: Vec<CouplingFn> = vec![
            Arc::new(|x, _| 0.05 * x[0].cos()),
            Arc::new(|x, x3| {
                (1.0 - 2f64.powf(x[0] * x[1])) / (1.0 + 2f64.powf(x[0] * x[0])) + 0.1 * x3.tanh()
            }),
            Arc::new(|x, u| {
                0.2 * 3f64.powf(-x[1] * x[1] * x[2].powi(4))
                    + 0.05 * (-x[0] * x[0]).exp() * u
                    + 0.2 * u.cos()
            }),
        ];
        let d: Vec<DisturbanceFn> = vec![
            Arc::new(|x, _| 0.2 * (PI * x[0]).sin()),
            Arc::new(|x, _| 0.2 * (PI * x[0] * x[1]).sin()),
            Arc::new(|x, _| 0.2 * x[1] * x[1] * (PI * x[2]).sin()),
        ];
        Self::new("benchmark3", vec![1.0, 1.0, 0.9], f, d).expect("benchmark plant is well formed")
    }

    /// Looks up a built-in plant. `order` is required for the integrator
    /// chain and must be 3 (or absent) for the benchmark.
    pub fn from_registry(name: &str, order: Option<usize>) -> Result<Self> {
        match name {
            "benchmark3" => match order {
                None | Some(3) => Ok(Self::benchmark3()),
                Some(n) => Err(Error::InvalidConfig(format!(
                    "plant `benchmark3` has order 3, not {n}"
                ))),
            },
            "integrator-chain" => {
                let n = order.ok_or_else(|| {
                    Error::InvalidConfig("plant `integrator-chain` needs an order".into())
                })?;
                Self::integrator_chain(n)
            }
            other => Err(Error::InvalidConfig(format!(
                "unknown plant `{other}` (known: {})",
                REGISTERED_PLANTS.join(", ")
            ))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// Writes `dx/dt` into `out`. `u` is passed explicitly; it is never
    /// appended to the state.
    pub fn derivative_into(&self, x: &[f64], u: f64, t: f64, out: &mut [f64]) -> Result<()> {
        let n = self.order();
        if x.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.len(),
            });
        }
        for i in 0..n {
            let prefix = &x[..=i];
            let next = if i + 1 < n { x[i + 1] } else { u };
            let v = (self.f[i])(prefix, next) + self.beta[i] * next + (self.d[i])(prefix, t);
            if !v.is_finite() {
                return Err(Error::PlantDiverged { index: i + 1 });
            }
            out[i] = v;
        }
        Ok(())
    }
}

pub fn plant_derivative(model: &PlantModel, x: &[f64], u: f64, t: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; model.order()];
    model.derivative_into(x, u, t, &mut out)?;
    Ok(out)
}
