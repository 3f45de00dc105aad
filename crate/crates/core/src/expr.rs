//! Closed-form scalar expressions over `x1..xn` and `t`.
//!
//! Parsing is delegated to `meval`; evaluation goes through a small context
//! provider so compiled expressions stay `Send + Sync`.

use std::fmt;

use meval::{ContextProvider, FuncEvalError};

use crate::{Error, Result};

/// A parsed expression in the state variables `x1..x{dim}` and time `t`.
#[derive(Clone)]
pub struct StateExpr {
    source: String,
    expr: meval::Expr,
    dim: usize,
}

impl fmt::Debug for StateExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateExpr")
            .field("source", &self.source)
            .field("dim", &self.dim)
            .finish()
    }
}

struct Vars<'a> {
    x: &'a [f64],
    t: f64,
}

impl ContextProvider for Vars<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => Some(self.t),
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => {
                let k: usize = name.strip_prefix('x')?.parse().ok()?;
                if k >= 1 {
                    self.x.get(k - 1).copied()
                } else {
                    None
                }
            }
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> Result<f64, FuncEvalError> {
        let unary = |f: fn(f64) -> f64| match args {
            [a] => Ok(f(*a)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        match name {
            "exp" => unary(f64::exp),
            "ln" => unary(f64::ln),
            "sqrt" => unary(f64::sqrt),
            "abs" => unary(f64::abs),
            "sin" => unary(f64::sin),
            "cos" => unary(f64::cos),
            "tan" => unary(f64::tan),
            "asin" => unary(f64::asin),
            "acos" => unary(f64::acos),
            "atan" => unary(f64::atan),
            "sinh" => unary(f64::sinh),
            "cosh" => unary(f64::cosh),
            "tanh" => unary(f64::tanh),
            "floor" => unary(f64::floor),
            "ceil" => unary(f64::ceil),
            "signum" => unary(f64::signum),
            "atan2" => match args {
                [y, x] => Ok(y.atan2(*x)),
                _ => Err(FuncEvalError::NumberArgs(2)),
            },
            "min" | "max" => {
                if args.is_empty() {
                    return Err(FuncEvalError::TooFewArguments);
                }
                let pick = if name == "min" { f64::min } else { f64::max };
                Ok(args[1..].iter().fold(args[0], |acc, &v| pick(acc, v)))
            }
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

impl StateExpr {
    /// Parses `source`, allowing variables `x1..x{dim}` and `t`.
    ///
    /// The expression is trial-evaluated at the origin so unknown names are
    /// reported here rather than mid-run.
    pub fn parse(source: &str, dim: usize) -> Result<Self> {
        let expr: meval::Expr = source
            .parse()
            .map_err(|e| Error::Expression(format!("`{source}`: {e}")))?;
        let parsed = Self {
            source: source.to_owned(),
            expr,
            dim,
        };
        let zeros = vec![0.0; dim];
        parsed
            .expr
            .eval_with_context(Vars { x: &zeros, t: 0.0 })
            .map_err(|e| Error::Expression(format!("`{source}`: {e}")))?;
        Ok(parsed)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at state prefix `x` (at least `dim` entries) and time `t`.
    /// Evaluation failures surface as NaN and are caught by the callers'
    /// finiteness checks.
    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        let x = &x[..self.dim.min(x.len())];
        self.expr
            .eval_with_context(Vars { x, t })
            .unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_state_and_time() {
        let e = StateExpr::parse("exp(-0.2*x1) + exp(-3*t) + 2*cos(0.5*x1)", 1).unwrap();
        assert!((e.eval(&[0.0], 0.0) - 4.0).abs() < 1e-15);
        let e = StateExpr::parse("x2^2 + max(x1, t, 0.5)", 2).unwrap();
        assert_eq!(e.eval(&[1.0, 3.0], 2.0), 11.0);
    }

    #[test]
    fn rejects_out_of_range_variables() {
        assert!(StateExpr::parse("x3 + 1", 2).is_err());
        assert!(StateExpr::parse("x0", 2).is_err());
        assert!(StateExpr::parse("foo(x1)", 1).is_err());
        assert!(StateExpr::parse("1 +", 1).is_err());
    }
}
