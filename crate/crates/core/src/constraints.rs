//! State constraints `|x_i| < Psi_i(x̄_i, t)` and the error constraints
//! `psi_i = Psi_i - A_{i-1}` derived from them.
//!
//! Loop indices are 0-based in this API: loop `i` constrains `x_{i+1}`, its
//! error constraint subtracts `bounds[i]` and its virtual input is bounded by
//! `bounds[i + 1]`.

use std::fmt;
use std::sync::Arc;

use crate::expr::StateExpr;
use crate::{Error, Result};

/// `Psi_i(x̄_i, t)` or its explicit time partial. Receives the prefix
/// `x_1..x_i`.
pub type ConstraintFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Central-difference step for time partials without an analytic form.
pub const TIME_PARTIAL_STEP: f64 = 1e-6;

pub const BUILTIN_CONSTRAINTS: &[&str] = &["benchmark-psi1", "benchmark-psi2", "benchmark-psi3"];

#[derive(Clone)]
pub struct StateConstraint {
    label: String,
    psi: ConstraintFn,
    dpsi_dt: Option<ConstraintFn>,
}

impl fmt::Debug for StateConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateConstraint")
            .field("label", &self.label)
            .field("analytic_partial", &self.dpsi_dt.is_some())
            .finish()
    }
}

impl StateConstraint {
    pub fn new(label: impl Into<String>, psi: ConstraintFn, dpsi_dt: Option<ConstraintFn>) -> Self {
        Self {
            label: label.into(),
            psi,
            dpsi_dt,
        }
    }

    /// Time-independent bound `Psi ≡ c`.
    pub fn constant(c: f64) -> Self {
        Self::new(
            format!("constant {c}"),
            Arc::new(move |_, _| c),
            Some(Arc::new(|_, _| 0.0)),
        )
    }

    /// Built-in benchmark constraints, all with analytic time partials.
    pub fn builtin(name: &str) -> Result<Self> {
        let decay: ConstraintFn = Arc::new(|_, t| -3.0 * (-3.0 * t).exp());
        let psi: ConstraintFn = match name {
            "benchmark-psi1" => Arc::new(|x, t| (-0.2 * x[0]).exp() + (-3.0 * t).exp()),
            "benchmark-psi2" => {
                Arc::new(|x, t| (-0.2 * x[1]).exp() + (-3.0 * t).exp() + 2.0 * (0.5 * x[0]).cos())
            }
            "benchmark-psi3" => Arc::new(|x, t| (-3.0 * t).exp() + 2.0 * (0.5 * x[0]).cos()),
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown constraint `{other}` (known: {})",
                    BUILTIN_CONSTRAINTS.join(", ")
                )))
            }
        };
        Ok(Self::new(name, psi, Some(decay)))
    }

    /// Constraint for 0-based loop `index` given as expressions in
    /// `x1..x{index+1}` and `t`.
    pub fn from_expr(psi: &str, dpsi_dt: Option<&str>, index: usize) -> Result<Self> {
        let dim = index + 1;
        let psi_expr = StateExpr::parse(psi, dim)?;
        let partial = dpsi_dt
            .map(|src| StateExpr::parse(src, dim))
            .transpose()?
            .map(|e| -> ConstraintFn { Arc::new(move |x, t| e.eval(x, t)) });
        let label = psi_expr.source().to_owned();
        Ok(Self::new(
            label,
            Arc::new(move |x, t| psi_expr.eval(x, t)),
            partial,
        ))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_analytic_partial(&self) -> bool {
        self.dpsi_dt.is_some()
    }
}

/// Outcome of [`ConstraintSpec::check_svic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvicCheck {
    pub satisfied: bool,
    /// `Psi_i - |x_i|`; positive iff satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct ConstraintSpec {
    states: Vec<StateConstraint>,
    bounds: Vec<f64>,
}

impl ConstraintSpec {
    /// `bounds` holds `A_0..A_n`: `A_0` bounds the reference, `A_i` the
    /// virtual input of loop `i`. `A_n` is unused by the controller.
    pub fn new(states: Vec<StateConstraint>, bounds: Vec<f64>) -> Result<Self> {
        let n = states.len();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "at least one state constraint is required".into(),
            ));
        }
        if bounds.len() != n + 1 {
            return Err(Error::InvalidConfig(format!(
                "{n} state constraints need {} bounds A_0..A_{n}, got {}",
                n + 1,
                bounds.len()
            )));
        }
        if let Some(k) = bounds.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "bound A_{k} must be positive, got {}",
                bounds[k]
            )));
        }
        Ok(Self { states, bounds })
    }

    /// The three benchmark constraints with `A = (1, 2, 2, 2)`.
    pub fn benchmark3() -> Self {
        let states = BUILTIN_CONSTRAINTS
            .iter()
            .map(|n| StateConstraint::builtin(n).expect("builtin exists"))
            .collect();
        Self::new(states, vec![1.0, 2.0, 2.0, 2.0]).expect("benchmark constraints are valid")
    }

    pub fn order(&self) -> usize {
        self.states.len()
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    /// `A_k`.
    pub fn bound(&self, k: usize) -> f64 {
        self.bounds[k]
    }

    pub fn state(&self, i: usize) -> &StateConstraint {
        &self.states[i]
    }

    /// `Psi_i(x̄_i, t)`; `x` may be the full state.
    pub fn svic(&self, i: usize, x: &[f64], t: f64) -> f64 {
        (self.states[i].psi)(&x[..=i], t)
    }

    pub fn evic_value(&self, i: usize, x: &[f64], t: f64) -> Result<f64> {
        let value = self.svic(i, x, t) - self.bounds[i];
        if value > 0.0 {
            Ok(value)
        } else {
            Err(Error::EvicNonPositive {
                index: i + 1,
                t,
                value,
            })
        }
    }

    /// `∂psi_i/∂t` with `x̄_i` held fixed. Falls back to a central difference
    /// when no analytic partial was supplied.
    pub fn evic_time_partial(&self, i: usize, x: &[f64], t: f64) -> Result<f64> {
        let state = &self.states[i];
        let prefix = &x[..=i];
        let value = match &state.dpsi_dt {
            Some(partial) => partial(prefix, t),
            None => {
                let h = TIME_PARTIAL_STEP;
                ((state.psi)(prefix, t + h) - (state.psi)(prefix, t - h)) / (2.0 * h)
            }
        };
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::ConstraintPartialDiverged { index: i + 1, t })
        }
    }

    pub fn check_svic(&self, i: usize, x: &[f64], t: f64) -> SvicCheck {
        let margin = self.svic(i, x, t) - x[i].abs();
        SvicCheck {
            satisfied: margin > 0.0,
            margin,
        }
    }
}
