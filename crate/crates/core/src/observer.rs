//! Barrier-based observer for the lumped uncertainty of each loop.
//!
//! The uncertainty `ε_i` collects the disturbance terms, the network
//! approximation error and `-Q_i dϑ_{i-1}/dt`. It is estimated through the
//! auxiliary variable `δ_i = ε_i - k_ε L_i`:
//!
//! ```text
//! ε̂_i      = δ̂_i + k_ε L_i
//! dδ̂_i/dt  = -k_ε (Ŵᵀφ + β_i x_{i+1} - Q_i (z_i/ψ_i) ∂ψ_i/∂t + ε̂_i)
//! ```

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverState {
    pub delta_hat: f64,
    pub k_eps: f64,
}

impl ObserverState {
    pub fn new(delta_hat: f64, k_eps: f64) -> Result<Self> {
        if !(k_eps.is_finite() && k_eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "k_eps must be positive, got {k_eps}"
            )));
        }
        if !delta_hat.is_finite() {
            return Err(Error::InvalidConfig("observer state must be finite".into()));
        }
        Ok(Self { delta_hat, k_eps })
    }

    pub fn epsilon_hat(&self, barrier_value: f64) -> f64 {
        epsilon_hat(self.delta_hat, self.k_eps, barrier_value)
    }
}

/// Smallest gain for which the observer error is damped in the Lyapunov
/// argument, using `‖φ‖² ≤ nodes`.
pub fn min_damped_gain(nodes: usize) -> f64 {
    1.0 + nodes as f64 / 2.0
}

pub fn epsilon_hat(delta_hat: f64, k_eps: f64, barrier_value: f64) -> f64 {
    delta_hat + k_eps * barrier_value
}

/// `dδ̂/dt`. For the last loop `beta_x_next` is `β_n u`.
pub fn observer_derivative(
    k_eps: f64,
    nn_out: f64,
    beta_x_next: f64,
    barrier_drift: f64,
    eps_hat: f64,
) -> f64 {
    -k_eps * (nn_out + beta_x_next - barrier_drift + eps_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn estimate_cases() {
        assert_eq!(epsilon_hat(0.0, 6.0, 0.0), 0.0);
        assert!((epsilon_hat(1.0, 6.0, 0.5) - 4.0).abs() < 1e-15);
        let o = ObserverState::new(-0.3, 6.0).unwrap();
        let (l, dl) = (0.21, 0.05);
        assert!((o.epsilon_hat(l + dl) - o.epsilon_hat(l) - 6.0 * dl).abs() < 1e-14);
        assert!(ObserverState::new(0.0, 0.0).is_err());
    }

    #[test]
    fn derivative_cases() {
        assert_eq!(observer_derivative(6.0, 0.0, 0.0, 0.0, 0.0), 0.0);
        assert!((observer_derivative(6.0, 1.0, 2.0, 0.5, 0.0) + 15.0).abs() < 1e-14);
        let a = observer_derivative(6.0, 0.3, -1.2, 0.7, 2.2);
        let b = observer_derivative(6.0, -0.3, 1.2, -0.7, -2.2);
        assert_eq!(a, -b);
    }

    #[test]
    fn error_dynamics_are_consistent() {
        // δ = ε - k L with dL/dt = W*ᵀφ + βx - drift + ε gives
        // dδ/dt - dδ̂/dt = dε/dt - k(-W̃ᵀφ + ε̃), W̃ = Ŵ - W*, ε̃ = ε - ε̂.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..1000 {
            let k = rng.random_range(0.5..10.0);
            let nodes = 8;
            let phi: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.0..1.0)).collect();
            let w_star: Vec<f64> = (0..nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
            let w_hat: Vec<f64> = (0..nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
            let dot = |a: &[f64]| a.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>();
            let (bx, drift) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let eps = rng.random_range(-3.0..3.0);
            let eps_dot = rng.random_range(-3.0..3.0);
            let eps_err = rng.random_range(-1.0..1.0);
            let eps_hat = eps - eps_err;

            let delta_dot = eps_dot - k * (dot(&w_star) + bx - drift + eps);
            let delta_hat_dot = observer_derivative(k, dot(&w_hat), bx, drift, eps_hat);
            let w_err: Vec<f64> = w_hat.iter().zip(&w_star).map(|(a, b)| a - b).collect();
            let expected = eps_dot - k * (-dot(&w_err) + eps_err);
            assert!(
                (delta_dot - delta_hat_dot - expected).abs() < 1e-9,
                "{} vs {expected}",
                delta_dot - delta_hat_dot
            );
        }
    }

    #[test]
    fn damping_threshold() {
        assert_eq!(min_damped_gain(30), 16.0);
    }
}
