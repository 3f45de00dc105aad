//! The backstepping cascade.
//!
//! For loops `i = 1..n`:
//!
//! ```text
//! z_i  = x_i - ϑ_{i-1}                      (ϑ_0 = y_d)
//! L_i  = ½ ln(ψ_i² / (ψ_i² - z_i²)),   Q_i = z_i / (ψ_i² - z_i²)
//! α_i  = k_i Q_i z_i + Ŵ_iᵀφ_i + ε̂_i + k_ε⁴/8 + c_i - Q_i (z_i/ψ_i) ∂ψ_i/∂t
//! ϑ_i  = sat_{A_i}(N(ζ_i) α_i + v⁽²⁾_i)     for i < n
//! u    = N(ζ_n) α_n                         (not saturated)
//! ```
//!
//! with `c_i = 3/4` for `i < n`, `c_n = 1/2`, `N(ζ) = ζ² cos ζ` and `v⁽²⁾`
//! the root-interpolation compensation of [`lemma2_v2`].

use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use crate::approximator::RbfNetwork;
use crate::constraints::ConstraintSpec;
use crate::{Error, Result};

/// `|v₁|` below which the compensation term is switched off.
pub const LEMMA2_V1_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierTerm {
    pub z: f64,
    pub psi: f64,
    /// `L = ½ ln(ψ²/(ψ² - z²))`.
    pub value: f64,
    /// `Q = z/(ψ² - z²)`.
    pub gradient: f64,
}

/// Why a barrier could not be formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierFault {
    Violated,
    NonPositivePsi,
}

impl BarrierFault {
    /// Attaches the 1-based loop index and time.
    pub fn at(self, index: usize, t: f64, z: f64, psi: f64) -> Error {
        match self {
            Self::Violated => Error::BarrierViolated { index, t, z, psi },
            Self::NonPositivePsi => Error::EvicNonPositive {
                index,
                t,
                value: psi,
            },
        }
    }
}

pub fn barrier(z: f64, psi: f64) -> Result<BarrierTerm, BarrierFault> {
    if !(psi > 0.0) {
        return Err(BarrierFault::NonPositivePsi);
    }
    if !(z.abs() < psi) {
        return Err(BarrierFault::Violated);
    }
    let r = z / psi;
    let gap = (psi - z) * (psi + z);
    Ok(BarrierTerm {
        z,
        psi,
        value: -0.5 * (-r * r).ln_1p(),
        gradient: z / gap,
    })
}

pub fn nussbaum(zeta: f64) -> f64 {
    zeta * zeta * zeta.cos()
}

/// `ϑ = (2A/π) atan(πv/(2A))`, strictly inside `(-A, A)`.
///
/// For very large `|v|` the rounded product can land on `±A`; the result is
/// then moved to the nearest double inside the open interval.
pub fn saturate(v: f64, bound: f64) -> f64 {
    let theta = bound * FRAC_2_PI * (v / (bound * FRAC_2_PI)).atan();
    if theta.abs() >= bound {
        bound.next_down().copysign(theta)
    } else {
        theta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma2Params {
    bound: f64,
    mu_bar: f64,
    rho: f64,
}

impl Lemma2Params {
    pub fn new(bound: f64, mu_bar: f64, rho: f64) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "saturation bound must be positive, got {bound}"
            )));
        }
        if !(mu_bar > 0.0 && mu_bar < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "mu_bar must lie in (0, 1), got {mu_bar}"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "rho must lie in (0, 1), got {rho}"
            )));
        }
        Ok(Self { bound, mu_bar, rho })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn mu_bar(&self) -> f64 {
        self.mu_bar
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `p = π μ̄ / (2A)`.
    pub fn p(&self) -> f64 {
        FRAC_PI_2 * self.mu_bar / self.bound
    }

    /// `(σ⁽¹⁾, σ⁽²⁾)`, or `None` where they are undefined (guarded `v₁` or
    /// negative discriminant). `v₁ + σ` are the roots of
    /// `p² v₁ v² - v + v₁ = 0`.
    pub fn roots(&self, v1: f64) -> Option<(f64, f64)> {
        let p2 = self.p() * self.p();
        let disc = 1.0 - 4.0 * p2 * v1 * v1;
        if v1.abs() < LEMMA2_V1_GUARD || disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        let base = 1.0 - 2.0 * p2 * v1 * v1;
        let denom = 2.0 * p2 * v1;
        Some(((base - root) / denom, (base + root) / denom))
    }
}

/// `v⁽²⁾ = h(σ⁽¹⁾ + ρ(σ⁽²⁾ - σ⁽¹⁾))`, or 0 outside the region where the roots
/// are real and `|v₁| ≥ 1e-6`.
pub fn lemma2_v2(params: &Lemma2Params, h: f64, v1: f64) -> f64 {
    match params.roots(v1) {
        Some((s1, s2)) => h * (s1 + params.rho * (s2 - s1)),
        None => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoopPosition {
    Intermediate,
    Last,
}

impl LoopPosition {
    pub fn of(index: usize, order: usize) -> Self {
        if index + 1 == order {
            Self::Last
        } else {
            Self::Intermediate
        }
    }

    fn constant(self) -> f64 {
        match self {
            Self::Intermediate => 0.75,
            Self::Last => 0.5,
        }
    }
}

/// Intermediate control `α_i`; also the Nussbaum argument rate `dζ_i/dt`.
pub fn alpha(
    position: LoopPosition,
    barrier: &BarrierTerm,
    nn_out: f64,
    eps_hat: f64,
    gain: f64,
    k_eps: f64,
    dpsi_dt: f64,
) -> f64 {
    let q = barrier.gradient;
    gain * q * barrier.z + nn_out + eps_hat + k_eps.powi(4) / 8.0 + position.constant()
        - q * (barrier.z / barrier.psi) * dpsi_dt
}

/// Gains and known coefficients shared by all loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    pub gains: Vec<f64>,
    pub k_eps: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu_bar: f64,
    pub rho: f64,
}

impl ControllerParams {
    pub fn order(&self) -> usize {
        self.gains.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.order();
        if n == 0 {
            return Err(Error::InvalidConfig(
                "controller needs at least one loop".into(),
            ));
        }
        for (name, v) in [("k_eps", &self.k_eps), ("beta", &self.beta)] {
            if v.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "{name} has {} entries, expected {n}",
                    v.len()
                )));
            }
        }
        if let Some(i) = self.gains.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "gain k_{} must be positive",
                i + 1
            )));
        }
        if let Some(i) = self.k_eps.iter().position(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "k_eps_{} must be positive",
                i + 1
            )));
        }
        if let Some(i) = self.beta.iter().position(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta_{} must be finite and nonzero",
                i + 1
            )));
        }
        Lemma2Params::new(1.0, self.mu_bar, self.rho)?;
        Ok(())
    }
}

/// Controller-side state at one instant, borrowed from the flattened
/// closed-loop vector.
#[derive(Debug, Clone, Copy)]
pub struct CascadeInput<'a> {
    pub x: &'a [f64],
    pub t: f64,
    pub reference: f64,
    pub zeta: &'a [f64],
    /// `n` consecutive weight vectors.
    pub weights: &'a [f64],
    pub delta_hat: &'a [f64],
    pub filtered: &'a [f64],
}

/// Every intermediate quantity of one loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTerms {
    pub z: f64,
    pub psi: f64,
    pub svic: f64,
    pub barrier: BarrierTerm,
    pub dpsi_dt: f64,
    /// `Q (z/ψ) ∂ψ/∂t`.
    pub drift: f64,
    pub phi: Vec<f64>,
    pub nn_out: f64,
    pub eps_hat: f64,
    pub alpha: f64,
    /// `N(ζ) α`; equals `u` for the last loop.
    pub v1: f64,
    pub v2: f64,
    /// `ϑ_i`, absent for the last loop.
    pub theta: Option<f64>,
    /// `β_i x_{i+1}`, or `β_n u` for the last loop.
    pub beta_x_next: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    pub loops: Vec<LoopTerms>,
    pub u: f64,
}

/// One algebraic pass of the controller. Reads only the plant state, the
/// reference and the controller's own states.
pub fn cascade(
    params: &ControllerParams,
    constraints: &ConstraintSpec,
    networks: &[RbfNetwork],
    input: CascadeInput<'_>,
) -> Result<CascadeOutput> {
    let n = params.order();
    let CascadeInput {
        x,
        t,
        reference,
        zeta,
        weights,
        delta_hat,
        filtered,
    } = input;

    let mut loops = Vec::with_capacity(n);
    let mut prev_theta = reference;
    let mut weight_offset = 0;
    let mut zbar = Vec::with_capacity(n + 1);
    let mut u = 0.0;

    for i in 0..n {
        let net = &networks[i];
        let position = LoopPosition::of(i, n);
        let z = x[i] - prev_theta;
        let svic = constraints.svic(i, x, t);
        let psi = svic - constraints.bound(i);
        let barrier = barrier(z, psi).map_err(|fault| fault.at(i + 1, t, z, psi))?;
        let dpsi_dt = constraints.evic_time_partial(i, x, t)?;
        let drift = barrier.gradient * (z / psi) * dpsi_dt;

        zbar.clear();
        zbar.extend_from_slice(&x[..=i]);
        zbar.push(filtered[i]);
        let nodes = net.nodes();
        let mut phi = vec![0.0; nodes];
        net.basis_into(&zbar, &mut phi)?;
        let w = &weights[weight_offset..weight_offset + nodes];
        weight_offset += nodes;
        let nn_out = net.output(w, &phi);

        let k_eps = params.k_eps[i];
        let eps_hat = crate::observer::epsilon_hat(delta_hat[i], k_eps, barrier.value);
        let alpha = alpha(
            position,
            &barrier,
            nn_out,
            eps_hat,
            params.gains[i],
            k_eps,
            dpsi_dt,
        );
        let v1 = nussbaum(zeta[i]) * alpha;

        let (v2, theta, beta_x_next) = match position {
            LoopPosition::Intermediate => {
                let lemma = Lemma2Params::new(constraints.bound(i + 1), params.mu_bar, params.rho)?;
                let v2 = lemma2_v2(&lemma, params.beta[i], v1);
                let theta = saturate(v1 + v2, lemma.bound());
                prev_theta = theta;
                (v2, Some(theta), params.beta[i] * x[i + 1])
            }
            LoopPosition::Last => {
                u = v1;
                (0.0, None, params.beta[i] * v1)
            }
        };

        loops.push(LoopTerms {
            z,
            psi,
            svic,
            barrier,
            dpsi_dt,
            drift,
            phi,
            nn_out,
            eps_hat,
            alpha,
            v1,
            v2,
            theta,
            beta_x_next,
        });
    }

    Ok(CascadeOutput { loops, u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approximator::init_centers;
    use crate::constraints::StateConstraint;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn barrier_cases() {
        let b = barrier(0.0, 1.0).unwrap();
        assert_eq!((b.value, b.gradient), (0.0, 0.0));
        let b = barrier(1.0, 2.0).unwrap();
        assert!((b.value - 0.5 * (4.0f64 / 3.0).ln()).abs() < 1e-15);
        assert!((b.value - 0.143841).abs() < 1e-6);
        assert!((b.gradient - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(barrier(2.0, 2.0), Err(BarrierFault::Violated));
        assert_eq!(barrier(-2.5, 2.0), Err(BarrierFault::Violated));
        assert_eq!(barrier(0.0, 0.0), Err(BarrierFault::NonPositivePsi));
        assert_eq!(barrier(0.0, f64::NAN), Err(BarrierFault::NonPositivePsi));
    }

    #[test]
    fn log_barrier_below_quadratic_bound() {
        let (z, psi) = (1.0f64, 2.0f64);
        let lhs = (psi * psi / (psi * psi - z * z)).ln();
        assert!((lhs - 0.28768).abs() < 1e-5);
        assert!(lhs < z * z / (psi * psi - z * z));
    }

    #[test]
    fn nussbaum_values() {
        assert_eq!(nussbaum(0.0), 0.0);
        assert!((nussbaum(PI) + PI * PI).abs() < 1e-12);
        assert!((nussbaum(2.0 * PI) - 4.0 * PI * PI).abs() < 1e-12);
        assert!((nussbaum(PI) + 9.8696).abs() < 1e-4);
        assert!((nussbaum(2.0 * PI) - 39.478).abs() < 1e-3);
    }

    #[test]
    fn saturation_values() {
        assert_eq!(saturate(0.0, 1.7), 0.0);
        assert!((saturate(2.0 / PI, 1.0) - 0.5).abs() < 1e-15);
        for a in [0.1, 1.0, 2.0, 7.5] {
            for v in [1e9, 1e30, f64::MAX, f64::INFINITY] {
                let s = saturate(v, a);
                assert!(s > 0.999 * a && s < a, "sat({v}, {a}) = {s}");
                assert_eq!(saturate(-v, a), -s);
            }
        }
    }

    #[test]
    fn compensation_at_double_root() {
        // A = π/4, μ̄ = 0.5 → p = 1; v₁ = 0.5 zeroes the discriminant.
        let lemma = Lemma2Params::new(PI / 4.0, 0.5, 0.5).unwrap();
        assert!((lemma.p() - 1.0).abs() < 1e-15);
        let (s1, s2) = lemma.roots(0.5).unwrap();
        assert!((s1 - 0.5).abs() < 1e-12 && (s2 - 0.5).abs() < 1e-12);
        assert!((lemma2_v2(&lemma, 2.0, 0.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn compensation_guards() {
        let lemma = Lemma2Params::new(1.0, 0.5, 0.5).unwrap();
        assert_eq!(lemma2_v2(&lemma, 1.5, 0.0), 0.0);
        assert_eq!(lemma2_v2(&lemma, 1.5, 5e-7), 0.0);
        // 2p|v₁| > 1.
        let v1 = 1.0 / lemma.p();
        assert_eq!(lemma2_v2(&lemma, 1.5, v1), 0.0);
        assert!(Lemma2Params::new(1.0, 1.0, 0.5).is_err());
        assert!(Lemma2Params::new(1.0, 0.5, 0.0).is_err());
        assert!(Lemma2Params::new(-1.0, 0.5, 0.5).is_err());
    }

    #[test]
    fn roots_solve_the_quadratic() {
        let lemma = Lemma2Params::new(2.0, 0.3, 0.5).unwrap();
        let p2 = lemma.p().powi(2);
        for k in 1..100 {
            let v1 = (k as f64 / 100.0 - 0.5) * 0.99 / lemma.p();
            if let Some((s1, s2)) = lemma.roots(v1) {
                for r in [v1 + s1, v1 + s2] {
                    assert!((p2 * v1 * r * r - r + v1).abs() < 1e-9 * (1.0 + r * r));
                }
            }
        }
    }

    #[test]
    fn alpha_constants() {
        let zero = barrier(0.0, 1.0).unwrap();
        assert!(
            (alpha(LoopPosition::Intermediate, &zero, 0.0, 0.0, 7.0, 6.0, 0.0) - 162.75).abs()
                < 1e-12
        );
        assert!((alpha(LoopPosition::Last, &zero, 0.0, 0.0, 7.0, 6.0, 0.0) - 162.5).abs() < 1e-12);
        let a = alpha(
            LoopPosition::Intermediate,
            &zero,
            1.5,
            -0.25,
            99.0,
            6.0,
            -42.0,
        );
        assert!((a - (1.5 - 0.25 + 162.75)).abs() < 1e-12);
        let b = barrier(0.4, 1.0).unwrap();
        let full = alpha(LoopPosition::Last, &b, 0.0, 0.0, 3.0, 1.0, 2.0);
        let expect = 3.0 * b.gradient * 0.4 + 0.125 + 0.5 - b.gradient * 0.4 * 2.0;
        assert!((full - expect).abs() < 1e-14);
    }

    fn unit_setup(n: usize) -> (ControllerParams, ConstraintSpec, Vec<RbfNetwork>) {
        let params = ControllerParams {
            gains: vec![7.0; n],
            k_eps: vec![6.0; n],
            beta: vec![1.0; n],
            mu_bar: 0.5,
            rho: 0.5,
        };
        let spec = ConstraintSpec::new(
            (0..n).map(|_| StateConstraint::constant(3.0)).collect(),
            vec![1.0; n + 1],
        )
        .unwrap();
        let nets = (0..n)
            .map(|i| {
                let c = init_centers(5, &vec![(-3.0, 3.0); i + 2], 42 + i as u64).unwrap();
                RbfNetwork::new(c, 2.0, 10.0, 0.1, 6.0).unwrap()
            })
            .collect();
        (params, spec, nets)
    }

    #[test]
    fn first_order_cascade_has_no_virtual_inputs() {
        let (params, spec, nets) = unit_setup(1);
        let weights = vec![0.1; 5];
        let out = cascade(
            &params,
            &spec,
            &nets,
            CascadeInput {
                x: &[0.4],
                t: 0.0,
                reference: 0.1,
                zeta: &[1.3],
                weights: &weights,
                delta_hat: &[0.2],
                filtered: &[0.0],
            },
        )
        .unwrap();
        let l = &out.loops[0];
        assert!((l.z - 0.3).abs() < 1e-15);
        assert!(l.theta.is_none());
        assert_eq!(l.v2, 0.0);
        assert_eq!(out.u, nussbaum(1.3) * l.alpha);
    }

    #[test]
    fn zero_nussbaum_argument_gives_zero_input() {
        let (params, spec, nets) = unit_setup(3);
        let weights = vec![0.3; 15];
        let out = cascade(
            &params,
            &spec,
            &nets,
            CascadeInput {
                x: &[0.2, -0.1, 0.4],
                t: 0.5,
                reference: 0.0,
                zeta: &[0.0, 0.0, 0.0],
                weights: &weights,
                delta_hat: &[0.0; 3],
                filtered: &[0.0; 3],
            },
        )
        .unwrap();
        assert_eq!(out.u, 0.0);
        assert!(out.loops[2].alpha.abs() > 0.0);
        assert_eq!(out.loops[0].theta, Some(0.0));
    }

    #[test]
    fn barrier_violation_carries_loop_and_time() {
        let (params, spec, nets) = unit_setup(2);
        let weights = vec![0.0; 10];
        let err = cascade(
            &params,
            &spec,
            &nets,
            CascadeInput {
                x: &[0.0, 2.5],
                t: 1.25,
                reference: 0.0,
                zeta: &[0.0, 0.0],
                weights: &weights,
                delta_hat: &[0.0; 2],
                filtered: &[0.0; 2],
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::BarrierViolated { index: 2, t, .. } if t == 1.25));
    }

    proptest! {
        #[test]
        fn barrier_positivity(psi in 1e-3f64..10.0, frac in -0.999f64..0.999) {
            let z = frac * psi;
            let b = barrier(z, psi).unwrap();
            prop_assert!(b.value >= 0.0);
            prop_assert_eq!(b.value == 0.0, z == 0.0);
            prop_assert!(b.gradient * z >= 0.0);
        }

        #[test]
        fn saturation_is_odd_monotone_and_bounded(v in -1e6f64..1e6, dv in 0.0f64..10.0, a in 0.01f64..10.0) {
            let s = saturate(v, a);
            prop_assert!(s.abs() < a);
            prop_assert_eq!(saturate(-v, a), -s);
            prop_assert!(saturate(v + dv, a) >= s);
        }
    }
}
