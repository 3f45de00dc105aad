//! Sampled numerical checks of the controller's building blocks.
//!
//! Each check draws from a fixed seed and reports pass/fail with the worst
//! case it saw. The Lemma 2 checks take the root construction as a
//! parameter so a broken variant can be plugged in.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approximator::{init_centers, RbfNetwork};
use crate::control_law::{barrier, saturate, Lemma2Params, LEMMA2_V1_GUARD};
use crate::integrate::rk4_step;
use crate::observer::observer_derivative;

pub const PROPERTY_SEED: u64 = 0x5eed_1e33;
pub const PROPERTY_SAMPLES: usize = 10_000;
/// Slack allowed in `h ϑ ≤ h v₁`.
pub const LEMMA2_TOLERANCE: f64 = 1e-9;
/// Relative residual allowed for the Lemma 2 roots. The `σ⁽¹⁾` formula
/// cancels catastrophically for small `p v₁`.
pub const ROOT_RESIDUAL_TOLERANCE: f64 = 1e-6;

/// Root construction `(σ⁽¹⁾, σ⁽²⁾)` for a given `v₁`.
pub type RootsFn = fn(&Lemma2Params, f64) -> Option<(f64, f64)>;

pub fn standard_roots(params: &Lemma2Params, v1: f64) -> Option<(f64, f64)> {
    params.roots(v1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub failures: usize,
    pub detail: String,
}

impl PropertyCheck {
    fn tally(name: &'static str, samples: usize, failures: usize, detail: String) -> Self {
        Self {
            name,
            passed: failures == 0,
            samples,
            failures,
            detail,
        }
    }
}

struct LemmaSample {
    params: Lemma2Params,
    h: f64,
    v1: f64,
}

fn lemma2_samples(rng: &mut ChaCha8Rng, count: usize) -> Vec<LemmaSample> {
    (0..count)
        .map(|_| {
            let bound = rng.random_range(0.2..4.0);
            let mu_bar = rng.random_range(0.01..0.99);
            let rho = rng.random_range(0.01..0.99);
            let params = Lemma2Params::new(bound, mu_bar, rho).expect("sampled in range");
            let edge = 0.5 / params.p();
            let mut v1: f64 = rng.random_range(-edge..edge);
            if v1.abs() < LEMMA2_V1_GUARD {
                v1 = LEMMA2_V1_GUARD.copysign(v1);
            }
            LemmaSample {
                params,
                h: rng.random_range(-2.0..2.0),
                v1,
            }
        })
        .collect()
}

/// `h · sat(v₁ + v⁽²⁾) ≤ h · v₁` on admissible samples.
pub fn lemma2_conclusion(roots: RootsFn) -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED);
    let samples = lemma2_samples(&mut rng, PROPERTY_SAMPLES);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for s in &samples {
        let v2 = match roots(&s.params, s.v1) {
            Some((s1, s2)) => s.h * (s1 + s.params.rho() * (s2 - s1)),
            None => 0.0,
        };
        let theta = saturate(s.v1 + v2, s.params.bound());
        let excess = s.h * theta - s.h * s.v1;
        if !(excess <= LEMMA2_TOLERANCE) {
            failures += 1;
            worst = worst.max(excess);
        }
    }
    PropertyCheck::tally(
        "lemma2_conclusion",
        samples.len(),
        failures,
        format!("max excess of h*theta over h*v1: {worst:.3e}"),
    )
}

/// `v₁ + σ⁽¹⁾` and `v₁ + σ⁽²⁾` solve `p² v₁ v² - v + v₁ = 0`, with
/// `σ⁽¹⁾ ≤ σ⁽²⁾` for `v₁ > 0`.
pub fn lemma2_roots(roots: RootsFn) -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 1);
    let samples = lemma2_samples(&mut rng, PROPERTY_SAMPLES);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let mut missing = 0;
    for s in &samples {
        let Some((s1, s2)) = roots(&s.params, s.v1) else {
            missing += 1;
            continue;
        };
        let p2 = s.params.p().powi(2);
        let bad_order = s.v1 > 0.0 && s1 > s2;
        let mut sample_fails = bad_order;
        for sigma in [s1, s2] {
            let v = s.v1 + sigma;
            let residual = p2 * s.v1 * v * v - v + s.v1;
            let scale = (p2 * s.v1 * v * v).abs() + v.abs() + s.v1.abs();
            let rel = residual.abs() / scale;
            worst = worst.max(rel);
            if !(rel < ROOT_RESIDUAL_TOLERANCE) {
                sample_fails = true;
            }
        }
        if sample_fails {
            failures += 1;
        }
    }
    failures += missing;
    PropertyCheck::tally(
        "lemma2_roots",
        samples.len(),
        failures,
        format!("max relative residual {worst:.3e}, undefined roots {missing}"),
    )
}

/// `ln(ψ²/(ψ²-z²)) ≤ z²/(ψ²-z²)` for `|z| < ψ`, equal only at `z = 0`.
pub fn lemma3() -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 2);
    let mut failures = 0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..PROPERTY_SAMPLES {
        let psi: f64 = rng.random_range(0.01..10.0);
        let z = psi * rng.random_range(-1.0..1.0);
        let sides = |z: f64| {
            let d = psi * psi - z * z;
            let lhs = (psi * psi / d).ln();
            let rhs = z * z / d;
            (lhs, rhs)
        };
        let (lhs, rhs) = sides(z);
        // Both sides are z²/ψ² to leading order; strictness is only
        // resolvable in floating point away from z = 0.
        let strict = (z / psi).powi(2) > 1e-6;
        let ok = if strict {
            lhs < rhs
        } else {
            lhs <= rhs * (1.0 + 1e-12)
        };
        if !ok {
            failures += 1;
        }
        if strict {
            min_gap = min_gap.min(rhs - lhs);
        }
    }
    let at_zero = barrier(0.0, 2.0).is_ok_and(|b| 2.0 * b.value == 0.0 && b.gradient * b.z == 0.0);
    if !at_zero {
        failures += 1;
    }
    PropertyCheck::tally(
        "lemma3",
        PROPERTY_SAMPLES + 1,
        failures,
        format!("smallest gap away from z = 0: {min_gap:.3e}"),
    )
}

/// `L ≥ 0`, `L = 0` only at `z = 0`, and `Q z ≥ 0` inside the barrier.
pub fn barrier_positivity() -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 3);
    let mut failures = 0;
    for k in 0..PROPERTY_SAMPLES {
        let psi: f64 = rng.random_range(0.01..10.0);
        let z = if k == 0 {
            0.0
        } else {
            psi * rng.random_range(-0.999..0.999)
        };
        match barrier(z, psi) {
            Ok(b) => {
                let zero_iff = (b.value == 0.0) == (z == 0.0) || (z / psi).abs() < 1e-8;
                if !(b.value >= 0.0 && b.gradient * z >= 0.0 && zero_iff) {
                    failures += 1;
                }
            }
            Err(_) => failures += 1,
        }
    }
    PropertyCheck::tally(
        "barrier_positivity",
        PROPERTY_SAMPLES,
        failures,
        String::new(),
    )
}

/// `|sat(v)| < A` strictly, odd, monotone, sign-preserving.
pub fn saturation() -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 4);
    let mut failures = 0;
    let mut closest = f64::INFINITY;
    for _ in 0..PROPERTY_SAMPLES {
        let bound = rng.random_range(0.1..10.0);
        let v = rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-3.0..12.0));
        let w = v + rng.random_range(0.0..1.0) * v.abs().max(1e-3);
        let (sv, sw) = (saturate(v, bound), saturate(w, bound));
        closest = closest.min(bound - sv.abs());
        let ok = sv.abs() < bound
            && saturate(-v, bound) == -sv
            && sw >= sv
            && (v == 0.0 || sv.signum() == v.signum());
        if !ok {
            failures += 1;
        }
    }
    for bound in [0.1, 1.0, 2.0, 7.5] {
        if !(saturate(1e300, bound) < bound && saturate(-1e300, bound) > -bound) {
            failures += 1;
        }
    }
    PropertyCheck::tally(
        "saturation",
        PROPERTY_SAMPLES + 4,
        failures,
        format!("smallest margin A - |sat(v)|: {closest:.3e}"),
    )
}

/// Global error of RK4 on `ds/dt = -s` over `[0, 1]` for each step size.
pub fn rk4_errors(steps: &[f64]) -> Vec<f64> {
    steps
        .iter()
        .map(|&dt| {
            let n = (1.0 / dt).round() as usize;
            let mut s = vec![1.0];
            for k in 0..n {
                s = rk4_step(
                    |y: &[f64], _, out: &mut [f64]| {
                        out[0] = -y[0];
                        Ok(())
                    },
                    &s,
                    k as f64 * dt,
                    dt,
                )
                .expect("linear decay is well-posed");
            }
            (s[0] - (-1.0f64).exp()).abs()
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

pub fn rk4_order() -> PropertyCheck {
    let steps = [1e-2, 5e-3, 2.5e-3];
    let errors = rk4_errors(&steps);
    let slope = log_log_slope(&steps, &errors);
    PropertyCheck::tally(
        "rk4_order",
        steps.len(),
        usize::from(!((slope - 4.0).abs() <= 0.2)),
        format!("slope {slope:.4}"),
    )
}

/// The observer's error dynamics reduce to `dε/dt - k(-W̃ᵀφ + ε̃)`.
pub fn observer_consistency() -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 5);
    let mut failures = 0;
    let mut worst = 0.0f64;
    let nodes = 8;
    for _ in 0..PROPERTY_SAMPLES {
        let k = rng.random_range(0.5..20.0);
        let phi: Vec<f64> = (0..nodes).map(|_| rng.random_range(0.0..1.0)).collect();
        let w_star: Vec<f64> = (0..nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let w_hat: Vec<f64> = (0..nodes).map(|_| rng.random_range(-2.0..2.0)).collect();
        let dot = |a: &[f64]| a.iter().zip(&phi).map(|(x, y)| x * y).sum::<f64>();
        let bx = rng.random_range(-3.0..3.0);
        let drift = rng.random_range(-3.0..3.0);
        let eps = rng.random_range(-3.0..3.0);
        let eps_dot = rng.random_range(-3.0..3.0);
        let eps_hat = eps - rng.random_range(-1.0..1.0);

        let delta_dot = eps_dot - k * (dot(&w_star) + bx - drift + eps);
        let delta_hat_dot = observer_derivative(k, dot(&w_hat), bx, drift, eps_hat);
        let w_err: Vec<f64> = w_hat.iter().zip(&w_star).map(|(a, b)| a - b).collect();
        let expected = eps_dot - k * (-dot(&w_err) + (eps - eps_hat));
        let err = (delta_dot - delta_hat_dot - expected).abs();
        worst = worst.max(err);
        if !(err < 1e-9) {
            failures += 1;
        }
    }
    PropertyCheck::tally(
        "observer_consistency",
        PROPERTY_SAMPLES,
        failures,
        format!("max mismatch {worst:.3e}"),
    )
}

/// `‖φ(z)‖ ≤ √l` at random inputs, including inputs far from the centers.
pub fn basis_bound() -> PropertyCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(PROPERTY_SEED ^ 6);
    let nodes = 30;
    let mut failures = 0;
    let mut largest = 0.0f64;
    for dim in 2..=4 {
        let centers = init_centers(nodes, &vec![(-3.0, 3.0); dim], PROPERTY_SEED + dim as u64)
            .expect("valid box");
        let net = RbfNetwork::new(centers, 2.0, 10.0, 0.1, 6.0).expect("valid network");
        let mut phi = vec![0.0; nodes];
        for _ in 0..PROPERTY_SAMPLES / 3 {
            let z: Vec<f64> = (0..dim).map(|_| rng.random_range(-6.0..6.0)).collect();
            net.basis_into(&z, &mut phi).expect("matching dimension");
            let norm = phi.iter().map(|p| p * p).sum::<f64>().sqrt();
            largest = largest.max(norm);
            if !(norm <= net.basis_norm_bound()) || phi.iter().any(|p| !(*p > 0.0 && *p <= 1.0)) {
                failures += 1;
            }
        }
    }
    PropertyCheck::tally(
        "basis_bound",
        3 * (PROPERTY_SAMPLES / 3),
        failures,
        format!(
            "largest norm {largest:.4} vs bound {:.4}",
            (nodes as f64).sqrt()
        ),
    )
}

/// The full suite in a fixed order.
pub fn run_all(roots: RootsFn) -> Vec<PropertyCheck> {
    vec![
        lemma2_conclusion(roots),
        lemma2_roots(roots),
        lemma3(),
        barrier_positivity(),
        saturation(),
        rk4_order(),
        observer_consistency(),
        basis_bound(),
    ]
}
