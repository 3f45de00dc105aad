//! Desired output trajectories `y_d(t)`.

use std::f64::consts::PI;

use crate::expr::StateExpr;
use crate::Result;

#[derive(Debug, Clone)]
pub enum Reference {
    /// `0.5 cos(pi t) + 0.5 sin(0.5 pi t)`.
    Benchmark,
    Constant(f64),
    /// `amplitude * sin(2 pi frequency t)`.
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// Expression in `t`.
    Expr(StateExpr),
}

impl Reference {
    pub fn from_expr(source: &str) -> Result<Self> {
        Ok(Self::Expr(StateExpr::parse(source, 0)?))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Self::Benchmark => 0.5 * (PI * t).cos() + 0.5 * (0.5 * PI * t).sin(),
            Self::Constant(c) => *c,
            Self::Sine {
                amplitude,
                frequency,
            } => amplitude * (2.0 * PI * frequency * t).sin(),
            Self::Expr(e) => e.eval(&[], t),
        }
    }

    /// `max |y_d|` over `points` evenly spaced samples of `[0, horizon]`.
    pub fn sup_on_grid(&self, horizon: f64, points: usize) -> f64 {
        if points < 2 || horizon <= 0.0 {
            return self.value(0.0).abs();
        }
        let step = horizon / (points - 1) as f64;
        (0..points)
            .map(|k| self.value(k as f64 * step).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_values() {
        let r = Reference::Benchmark;
        assert!((r.value(0.0) - 0.5).abs() < 1e-15);
        assert!((r.value(3.0) + 1.0).abs() < 1e-12);
        let sup = r.sup_on_grid(20.0, 10_000);
        assert!(sup > 0.5 && sup <= 1.0);
    }

    #[test]
    fn expression_reference() {
        let r = Reference::from_expr("0.5*cos(pi*t) + 0.5*sin(0.5*pi*t)").unwrap();
        for k in 0..50 {
            let t = k as f64 * 0.37;
            assert!((r.value(t) - Reference::Benchmark.value(t)).abs() < 1e-14);
        }
        assert!(Reference::from_expr("x1").is_err());
    }
}
