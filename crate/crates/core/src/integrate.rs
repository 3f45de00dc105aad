//! Classical fixed-step fourth-order Runge-Kutta.

use crate::{Error, Result};

/// Scratch buffers for repeated [`Rk4::step`] calls on one state size.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `y` in place from `t` to `t + dt`. On error `y` is untouched.
    pub fn step<F>(&mut self, mut f: F, y: &mut [f64], t: f64, dt: f64) -> Result<()>
    where
        F: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
    {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {dt}"
            )));
        }
        let half = 0.5 * dt;
        f(y, t, &mut self.k1)?;
        for ((s, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k1) {
            *s = y + half * k;
        }
        f(&self.tmp, t + half, &mut self.k2)?;
        for ((s, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k2) {
            *s = y + half * k;
        }
        f(&self.tmp, t + half, &mut self.k3)?;
        for ((s, y), k) in self.tmp.iter_mut().zip(y.iter()).zip(&self.k3) {
            *s = y + dt * k;
        }
        f(&self.tmp, t + dt, &mut self.k4)?;
        let sixth = dt / 6.0;
        for (i, y) in y.iter_mut().enumerate() {
            *y += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        Ok(())
    }
}

/// One RK4 step of `dy/dt = f(y, t)`, returning the new state.
pub fn rk4_step<F>(f: F, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64], f64, &mut [f64]) -> Result<()>,
{
    let mut out = y.to_vec();
    Rk4::new(y.len()).step(f, &mut out, t, dt)?;
    Ok(out)
}
