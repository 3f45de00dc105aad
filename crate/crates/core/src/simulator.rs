//! Closed-loop simulation.
//!
//! The augmented state is flattened as
//! `[x (n) | ζ (n) | Ŵ_1..Ŵ_n (n·l) | δ̂ (n) | s (n)]` where `s` are the
//! network-input filter states, and integrated with fixed-step RK4. After
//! every accepted step the run checks `|z_i| < ψ_i`, `|x_i| < Ψ_i`,
//! `|ϑ_i| < A_i`, finiteness and the signal ceiling, and stops at the first
//! failure. Nothing is clamped.

use serde::Serialize;

use crate::approximator::{init_centers, InputFilter, RbfNetwork};
use crate::constraints::ConstraintSpec;
use crate::control_law::{cascade, CascadeInput, CascadeOutput, ControllerParams};
use crate::integrate::Rk4;
use crate::observer::{min_damped_gain, observer_derivative};
use crate::plant::PlantModel;
use crate::reference::Reference;
use crate::{Error, Result};

/// Grid used to check `sup |y_d| ≤ A_0` before a run.
pub const REFERENCE_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct NnConfig {
    pub nodes: usize,
    pub width: f64,
    /// Per-dimension interval the centers are drawn from.
    pub center_box: (f64, f64),
    pub seed: u64,
    pub lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub filter_tau: f64,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Magnitude above which a signal counts as unbounded.
    pub signal_ceiling: f64,
    /// Keep every `record_every`-th accepted step (step 0 always kept).
    pub record_every: usize,
    /// Also keep the full flattened state for recorded steps.
    pub record_states: bool,
    pub plant: PlantModel,
    pub constraints: ConstraintSpec,
    pub reference: Reference,
    pub gains: Vec<f64>,
    pub k_eps: Vec<f64>,
    pub mu_bar: f64,
    pub rho: f64,
    pub nn: NnConfig,
    pub x0: Vec<f64>,
    pub zeta0: Vec<f64>,
}

impl SimConfig {
    /// The third-order benchmark with its published gains and initial values.
    /// Values the benchmark leaves open (η, centers, widths, filter constant,
    /// ρ, μ̄, step size) take the library defaults.
    pub fn benchmark3() -> Self {
        Self {
            dt: 1e-4,
            t_final: 20.0,
            signal_ceiling: 1e6,
            record_every: 1,
            record_states: false,
            plant: PlantModel::benchmark3(),
            constraints: ConstraintSpec::benchmark3(),
            reference: Reference::Benchmark,
            gains: vec![7.0; 3],
            k_eps: vec![6.0; 3],
            mu_bar: 0.5,
            rho: 0.5,
            nn: NnConfig {
                nodes: 30,
                width: 2.0,
                center_box: (-3.0, 3.0),
                seed: 42,
                lambda: vec![10.0; 3],
                eta: vec![0.1; 3],
                filter_tau: 0.01,
            },
            x0: vec![0.5, -0.3, 0.0],
            zeta0: vec![0.0, 0.0, 0.2],
        }
    }

    pub fn order(&self) -> usize {
        self.plant.order()
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Offsets into the flattened closed-loop state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub order: usize,
    pub nodes: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.order * (3 + self.nodes) + self.order
    }

    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.order
    }

    pub fn zeta(&self) -> std::ops::Range<usize> {
        self.order..2 * self.order
    }

    pub fn weights(&self) -> std::ops::Range<usize> {
        let start = 2 * self.order;
        start..start + self.order * self.nodes
    }

    pub fn weights_of(&self, i: usize) -> std::ops::Range<usize> {
        let start = 2 * self.order + i * self.nodes;
        start..start + self.nodes
    }

    pub fn delta_hat(&self) -> std::ops::Range<usize> {
        let start = self.weights().end;
        start..start + self.order
    }

    pub fn filtered(&self) -> std::ops::Range<usize> {
        let start = self.delta_hat().end;
        start..start + self.order
    }
}

/// Flattened closed-loop state with typed views.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub layout: StateLayout,
    pub data: Vec<f64>,
}

impl ClosedLoopState {
    pub fn x(&self) -> &[f64] {
        &self.data[self.layout.x()]
    }

    pub fn zeta(&self) -> &[f64] {
        &self.data[self.layout.zeta()]
    }

    pub fn weights(&self, i: usize) -> &[f64] {
        &self.data[self.layout.weights_of(i)]
    }

    pub fn delta_hat(&self) -> &[f64] {
        &self.data[self.layout.delta_hat()]
    }

    pub fn filtered(&self) -> &[f64] {
        &self.data[self.layout.filtered()]
    }
}

/// Logged diagnostics at one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: f64,
    pub reference: f64,
    pub z: Vec<f64>,
    /// Virtual inputs `ϑ_1..ϑ_{n-1}`.
    pub theta: Vec<f64>,
    pub psi: Vec<f64>,
    pub svic: Vec<f64>,
    pub eps_hat: Vec<f64>,
    pub zeta: Vec<f64>,
    pub w_norm: Vec<f64>,
    pub barrier: Vec<f64>,
    pub alpha: Vec<f64>,
    pub delta_hat: Vec<f64>,
}

impl Sample {
    /// `Ψ_i - |x_i|`.
    pub fn svic_margins(&self) -> Vec<f64> {
        self.x
            .iter()
            .zip(&self.svic)
            .map(|(x, s)| s - x.abs())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub horizon: f64,
    pub dt: f64,
    /// `A_1..A_{n-1}`, the bounds the virtual inputs must stay under.
    pub theta_bounds: Vec<f64>,
    pub samples: Vec<Sample>,
    /// Flattened states of the recorded steps, when requested.
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    BarrierViolated,
    EvicNonPositive,
    SvicViolated,
    SaturationViolated,
    NonFinite,
    CeilingExceeded,
}

impl FailureKind {
    /// Constraint failures, as opposed to divergence.
    pub fn is_violation(self) -> bool {
        matches!(
            self,
            Self::BarrierViolated
                | Self::EvicNonPositive
                | Self::SvicViolated
                | Self::SaturationViolated
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub kind: FailureKind,
    /// Time of the accepted step or RK4 stage where the failure surfaced.
    pub t: f64,
    /// 1-based loop or state index, when one applies.
    pub index: Option<usize>,
    /// Remaining margin (`ψ - |z|`, `Ψ - |x|`, `A - |ϑ|`, or ceiling minus
    /// magnitude); non-positive at failure.
    pub margin: Option<f64>,
    pub message: String,
}

impl Failure {
    fn from_error(err: &Error, t_fallback: f64) -> Self {
        let message = err.to_string();
        match *err {
            Error::BarrierViolated { index, t, z, psi } => Self {
                kind: FailureKind::BarrierViolated,
                t,
                index: Some(index),
                margin: Some(psi - z.abs()),
                message,
            },
            Error::EvicNonPositive { index, t, value } => Self {
                kind: FailureKind::EvicNonPositive,
                t,
                index: Some(index),
                margin: Some(value),
                message,
            },
            Error::PlantDiverged { index } => Self {
                kind: FailureKind::NonFinite,
                t: t_fallback,
                index: Some(index),
                margin: None,
                message,
            },
            Error::ConstraintPartialDiverged { index, t } => Self {
                kind: FailureKind::NonFinite,
                t,
                index: Some(index),
                margin: None,
                message,
            },
            Error::NonFiniteDerivative { t } => Self {
                kind: FailureKind::NonFinite,
                t,
                index: None,
                margin: None,
                message,
            },
            _ => Self {
                kind: FailureKind::NonFinite,
                t: t_fallback,
                index: None,
                margin: None,
                message,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub failure: Option<Failure>,
    /// Accepted integration steps.
    pub steps_taken: usize,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Summary of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `max_{i,t} |x_i| / Ψ_i`.
    pub max_constraint_ratio: f64,
    /// `max_{i,t} |ϑ_i| / A_i`; 0 without virtual inputs.
    pub max_theta_ratio: f64,
    /// RMS of `z_1` over the last quarter of the horizon; `None` when no
    /// sample falls in that window.
    pub rms_z1_tail: Option<f64>,
    pub sup_u: f64,
    pub sup_w_norm: f64,
    pub sup_zeta: f64,
    pub sup_eps_hat: f64,
    pub samples: usize,
}

/// A reason the initial data cannot be simulated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: &'static str,
    pub index: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.check, self.message)
    }
}

/// Assembled controller and plant for one configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    params: ControllerParams,
    networks: Vec<RbfNetwork>,
    filter: InputFilter,
    layout: StateLayout,
    warnings: Vec<String>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        let n = config.order();
        let check_len = |name: &str, len: usize| {
            if len == n {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!(
                    "{name} has {len} entries, expected {n}"
                )))
            }
        };
        check_len("constraints", config.constraints.order())?;
        check_len("gains", config.gains.len())?;
        check_len("k_eps", config.k_eps.len())?;
        check_len("lambda", config.nn.lambda.len())?;
        check_len("eta", config.nn.eta.len())?;
        check_len("x0", config.x0.len())?;
        check_len("zeta0", config.zeta0.len())?;
        if !(config.dt.is_finite() && config.dt > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dt must be positive, got {}",
                config.dt
            )));
        }
        if !(config.t_final.is_finite() && config.t_final >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_final must be non-negative, got {}",
                config.t_final
            )));
        }
        if !(config.signal_ceiling > 0.0) {
            return Err(Error::InvalidConfig(
                "signal ceiling must be positive".into(),
            ));
        }
        if config.record_every == 0 {
            return Err(Error::InvalidConfig(
                "record_every must be at least 1".into(),
            ));
        }
        if config
            .x0
            .iter()
            .chain(&config.zeta0)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidConfig("initial values must be finite".into()));
        }

        let params = ControllerParams {
            gains: config.gains.clone(),
            k_eps: config.k_eps.clone(),
            beta: config.plant.beta().to_vec(),
            mu_bar: config.mu_bar,
            rho: config.rho,
        };
        params.validate()?;

        let (lo, hi) = config.nn.center_box;
        let networks = (0..n)
            .map(|i| {
                let centers = init_centers(
                    config.nn.nodes,
                    &vec![(lo, hi); i + 2],
                    config.nn.seed.wrapping_add(i as u64),
                )?;
                RbfNetwork::new(
                    centers,
                    config.nn.width,
                    config.nn.lambda[i],
                    config.nn.eta[i],
                    config.k_eps[i],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let filter = InputFilter::new(config.nn.filter_tau)?;

        let threshold = min_damped_gain(config.nn.nodes);
        let warnings: Vec<String> = config
            .k_eps
            .iter()
            .enumerate()
            .filter(|(_, k)| **k <= threshold)
            .map(|(i, k)| {
                format!(
                    "k_eps_{} = {k} does not exceed 1 + l/2 = {threshold}; observer damping is not guaranteed",
                    i + 1
                )
            })
            .collect();

        let layout = StateLayout {
            order: n,
            nodes: config.nn.nodes,
        };
        Ok(Self {
            config,
            params,
            networks,
            filter,
            layout,
            warnings,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn layout(&self) -> StateLayout {
        self.layout
    }

    pub fn networks(&self) -> &[RbfNetwork] {
        &self.networks
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Initial augmented state: `Ŵ = 0`, `δ̂ = 0`, filters at their raw
    /// signals. With zero weights `u(0)` does not depend on the last filter,
    /// so that filter can be seeded with it.
    pub fn initial_state(&self) -> Result<ClosedLoopState> {
        let n = self.layout.order;
        let mut data = vec![0.0; self.layout.dim()];
        data[self.layout.x()].copy_from_slice(&self.config.x0);
        data[self.layout.zeta()].copy_from_slice(&self.config.zeta0);
        {
            let filt = &mut data[self.layout.filtered()];
            filt[..n - 1].copy_from_slice(&self.config.x0[1..]);
        }
        let out = self.cascade_at(&data, 0.0)?;
        data[self.layout.filtered()][n - 1] = out.u;
        Ok(ClosedLoopState {
            layout: self.layout,
            data,
        })
    }

    /// Runs the controller cascade on a flattened state.
    pub fn cascade_at(&self, state: &[f64], t: f64) -> Result<CascadeOutput> {
        let l = &self.layout;
        cascade(
            &self.params,
            &self.config.constraints,
            &self.networks,
            CascadeInput {
                x: &state[l.x()],
                t,
                reference: self.config.reference.value(t),
                zeta: &state[l.zeta()],
                weights: &state[l.weights()],
                delta_hat: &state[l.delta_hat()],
                filtered: &state[l.filtered()],
            },
        )
    }

    /// Time derivative of the flattened closed-loop state.
    pub fn derivative_into(&self, state: &[f64], t: f64, out: &mut [f64]) -> Result<()> {
        let c = self.cascade_at(state, t)?;
        self.assemble_derivative(state, t, &c, out)
    }

    fn assemble_derivative(
        &self,
        state: &[f64],
        t: f64,
        c: &CascadeOutput,
        out: &mut [f64],
    ) -> Result<()> {
        let l = &self.layout;
        let n = l.order;
        self.config
            .plant
            .derivative_into(&state[l.x()], c.u, t, &mut out[l.x()])?;
        for (i, terms) in c.loops.iter().enumerate() {
            out[l.zeta().start + i] = terms.alpha;
            let w = l.weights_of(i);
            self.networks[i].weight_derivative_into(&state[w.clone()], &terms.phi, &mut out[w]);
            out[l.delta_hat().start + i] = observer_derivative(
                self.params.k_eps[i],
                terms.nn_out,
                terms.beta_x_next,
                terms.drift,
                terms.eps_hat,
            );
            let raw = if i + 1 < n { state[i + 1] } else { c.u };
            out[l.filtered().start + i] =
                self.filter.derivative(state[l.filtered().start + i], raw);
        }
        if out.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFiniteDerivative { t })
        }
    }

    pub fn closed_loop_derivative(&self, state: &ClosedLoopState, t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.layout.dim()];
        self.derivative_into(&state.data, t, &mut out)?;
        Ok(out)
    }

    /// One RK4 step of the closed loop.
    pub fn rk4_step(&self, state: &ClosedLoopState, t: f64, dt: f64) -> Result<ClosedLoopState> {
        let data = crate::integrate::rk4_step(
            |y: &[f64], t, out: &mut [f64]| self.derivative_into(y, t, out),
            &state.data,
            t,
            dt,
        )?;
        Ok(ClosedLoopState {
            layout: self.layout,
            data,
        })
    }

    fn sample(&self, state: &[f64], t: f64, c: &CascadeOutput) -> Sample {
        let l = &self.layout;
        let n = l.order;
        Sample {
            t,
            x: state[l.x()].to_vec(),
            u: c.u,
            reference: self.config.reference.value(t),
            z: c.loops.iter().map(|t| t.z).collect(),
            theta: c.loops.iter().filter_map(|t| t.theta).collect(),
            psi: c.loops.iter().map(|t| t.psi).collect(),
            svic: c.loops.iter().map(|t| t.svic).collect(),
            eps_hat: c.loops.iter().map(|t| t.eps_hat).collect(),
            zeta: state[l.zeta()].to_vec(),
            w_norm: (0..n)
                .map(|i| {
                    state[l.weights_of(i)]
                        .iter()
                        .map(|w| w * w)
                        .sum::<f64>()
                        .sqrt()
                })
                .collect(),
            barrier: c.loops.iter().map(|t| t.barrier.value).collect(),
            alpha: c.loops.iter().map(|t| t.alpha).collect(),
            delta_hat: state[l.delta_hat()].to_vec(),
        }
    }

    /// Post-step invariants other than the barrier (already enforced by the
    /// cascade).
    fn check_sample(&self, s: &Sample) -> Option<Failure> {
        let ceiling = self.config.signal_ceiling;
        for (i, margin) in s.svic_margins().into_iter().enumerate() {
            if !(margin > 0.0) {
                return Some(Failure {
                    kind: FailureKind::SvicViolated,
                    t: s.t,
                    index: Some(i + 1),
                    margin: Some(margin),
                    message: format!(
                        "|x_{}| = {} reaches Psi = {}",
                        i + 1,
                        s.x[i].abs(),
                        s.svic[i]
                    ),
                });
            }
        }
        for (i, theta) in s.theta.iter().enumerate() {
            let bound = self.config.constraints.bound(i + 1);
            if !(theta.abs() < bound) {
                return Some(Failure {
                    kind: FailureKind::SaturationViolated,
                    t: s.t,
                    index: Some(i + 1),
                    margin: Some(bound - theta.abs()),
                    message: format!("|theta_{}| = {} reaches A = {bound}", i + 1, theta.abs()),
                });
            }
        }
        let u = [s.u];
        let signals: [(&str, &[f64]); 6] = [
            ("x", &s.x),
            ("zeta", &s.zeta),
            ("w_norm", &s.w_norm),
            ("delta_hat", &s.delta_hat),
            ("eps_hat", &s.eps_hat),
            ("u", &u),
        ];
        for (name, values) in signals {
            for (i, v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Some(Failure {
                        kind: FailureKind::NonFinite,
                        t: s.t,
                        index: Some(i + 1),
                        margin: None,
                        message: format!("{name}_{} is not finite", i + 1),
                    });
                }
                if v.abs() >= ceiling {
                    return Some(Failure {
                        kind: FailureKind::CeilingExceeded,
                        t: s.t,
                        index: Some(i + 1),
                        margin: Some(ceiling - v.abs()),
                        message: format!(
                            "|{name}_{}| = {} exceeds ceiling {ceiling}",
                            i + 1,
                            v.abs()
                        ),
                    });
                }
            }
        }
        None
    }

    /// Integrates to `t_final`, stopping at the first invariant failure.
    pub fn run(&self) -> Result<RunResult> {
        let violations = self.validate();
        if !violations.is_empty() {
            let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidConfig(list.join("; ")));
        }

        for w in &self.warnings {
            log::warn!("{w}");
        }
        let cfg = &self.config;
        let steps = cfg.steps();
        let mut trajectory = Trajectory {
            horizon: cfg.t_final,
            dt: cfg.dt,
            theta_bounds: cfg.constraints.bounds()[1..cfg.order()].to_vec(),
            samples: Vec::with_capacity(steps / cfg.record_every + 2),
            states: Vec::new(),
        };
        let mut state = self.initial_state()?.data;
        let c0 = self.cascade_at(&state, 0.0)?;
        let s0 = self.sample(&state, 0.0, &c0);
        if let Some(failure) = self.check_sample(&s0) {
            trajectory.samples.push(s0);
            return Ok(RunResult {
                trajectory,
                failure: Some(failure),
                steps_taken: 0,
            });
        }
        trajectory.samples.push(s0);
        if cfg.record_states {
            trajectory.states.push(state.clone());
        }

        let mut rk4 = Rk4::new(state.len());
        let mut failure = None;
        let mut taken = 0;
        for step in 0..steps {
            let t = step as f64 * cfg.dt;
            if let Err(e) = rk4.step(
                |y, t, out| self.derivative_into(y, t, out),
                &mut state,
                t,
                cfg.dt,
            ) {
                failure = Some(Failure::from_error(&e, t));
                break;
            }
            taken = step + 1;
            let t_next = taken as f64 * cfg.dt;
            let c = match self.cascade_at(&state, t_next) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(Failure::from_error(&e, t_next));
                    break;
                }
            };
            let s = self.sample(&state, t_next, &c);
            if let Some(f) = self.check_sample(&s) {
                trajectory.samples.push(s);
                failure = Some(f);
                break;
            }
            if taken % cfg.record_every == 0 {
                trajectory.samples.push(s);
                if cfg.record_states {
                    trajectory.states.push(state.clone());
                }
            }
        }
        Ok(RunResult {
            trajectory,
            failure,
            steps_taken: taken,
        })
    }

    /// Checks the initial data without integrating.
    pub fn validate(&self) -> Vec<Violation> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for (i, b) in cfg.plant.beta().iter().enumerate() {
            if *b == 0.0 {
                out.push(Violation {
                    check: "beta-nonzero",
                    index: Some(i + 1),
                    message: format!("beta_{} is zero", i + 1),
                });
            }
        }
        let a0 = cfg.constraints.bound(0);
        let sup = cfg
            .reference
            .sup_on_grid(cfg.t_final, REFERENCE_GRID_POINTS);
        if !(sup <= a0) {
            out.push(Violation {
                check: "reference-bound",
                index: None,
                message: format!(
                    "sup |y_d| = {sup} exceeds A_0 = {a0} on [0, {}]",
                    cfg.t_final
                ),
            });
        }
        for i in 0..cfg.order() {
            if let Err(e) = cfg.constraints.evic_value(i, &cfg.x0, 0.0) {
                out.push(Violation {
                    check: "evic-positive",
                    index: Some(i + 1),
                    message: e.to_string(),
                });
            }
            let svic = cfg.constraints.check_svic(i, &cfg.x0, 0.0);
            if !svic.satisfied {
                out.push(Violation {
                    check: "svic",
                    index: Some(i + 1),
                    message: format!(
                        "|x_{}(0)| violates its constraint (margin {})",
                        i + 1,
                        svic.margin
                    ),
                });
            }
        }
        if out.iter().any(|v| v.check == "evic-positive") {
            return out;
        }
        // The error bounds need the cascade: z_i(0) depends on ϑ_{i-1}(0).
        let mut data = vec![0.0; self.layout.dim()];
        data[self.layout.x()].copy_from_slice(&cfg.x0);
        data[self.layout.zeta()].copy_from_slice(&cfg.zeta0);
        let n = cfg.order();
        data[self.layout.filtered()][..n - 1].copy_from_slice(&cfg.x0[1..]);
        if let Err(e) = self.cascade_at(&data, 0.0) {
            let index = match e {
                Error::BarrierViolated { index, .. } | Error::EvicNonPositive { index, .. } => {
                    Some(index)
                }
                _ => None,
            };
            out.push(Violation {
                check: "initial-error",
                index,
                message: e.to_string(),
            });
        }
        out
    }
}

pub fn validate_initial(config: &SimConfig) -> Vec<Violation> {
    match Simulator::new(config.clone()) {
        Ok(sim) => sim.validate(),
        Err(e) => vec![Violation {
            check: "config",
            index: None,
            message: e.to_string(),
        }],
    }
}

pub fn run(config: SimConfig) -> Result<RunResult> {
    Simulator::new(config)?.run()
}

pub fn summarize(traj: &Trajectory) -> Result<Metrics> {
    if traj.samples.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let sup = |f: &dyn Fn(&Sample) -> f64| traj.samples.iter().map(f).fold(0.0, f64::max);
    let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tail_start = 0.75 * traj.horizon;
    let tail: Vec<f64> = traj
        .samples
        .iter()
        .filter(|s| s.t >= tail_start - 1e-12 * traj.horizon.max(1.0))
        .map(|s| s.z[0])
        .collect();
    let rms_z1_tail = if tail.is_empty() {
        None
    } else {
        Some((tail.iter().map(|z| z * z).sum::<f64>() / tail.len() as f64).sqrt())
    };
    Ok(Metrics {
        max_constraint_ratio: sup(&|s| {
            s.x.iter()
                .zip(&s.svic)
                .map(|(x, p)| x.abs() / p)
                .fold(0.0, f64::max)
        }),
        max_theta_ratio: sup(&|s| {
            s.theta
                .iter()
                .zip(&traj.theta_bounds)
                .map(|(v, a)| v.abs() / a)
                .fold(0.0, f64::max)
        }),
        rms_z1_tail,
        sup_u: sup(&|s| s.u.abs()),
        sup_w_norm: sup(&|s| max_abs(&s.w_norm)),
        sup_zeta: sup(&|s| max_abs(&s.zeta)),
        sup_eps_hat: sup(&|s| max_abs(&s.eps_hat)),
        samples: traj.samples.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::StateConstraint;

    fn chain_config(n: usize) -> SimConfig {
        SimConfig {
            dt: 1e-3,
            t_final: 0.01,
            signal_ceiling: 1e6,
            record_every: 1,
            record_states: false,
            plant: PlantModel::integrator_chain(n).unwrap(),
            constraints: ConstraintSpec::new(
                (0..n).map(|_| StateConstraint::constant(3.0)).collect(),
                vec![1.0; n + 1],
            )
            .unwrap(),
            reference: Reference::Constant(0.0),
            gains: vec![7.0; n],
            k_eps: vec![6.0; n],
            mu_bar: 0.5,
            rho: 0.5,
            nn: NnConfig {
                nodes: 6,
                width: 2.0,
                center_box: (-3.0, 3.0),
                seed: 1,
                lambda: vec![10.0; n],
                eta: vec![0.1; n],
                filter_tau: 0.01,
            },
            x0: vec![0.0; n],
            zeta0: vec![0.0; n],
        }
    }

    #[test]
    fn layout_dimension() {
        let l = StateLayout {
            order: 3,
            nodes: 30,
        };
        assert_eq!(l.dim(), 3 * 33 + 3);
        assert_eq!(l.filtered().end, l.dim());
        assert_eq!(l.weights_of(2).end, l.weights().end);
    }

    #[test]
    fn zero_state_derivative() {
        let sim = Simulator::new(chain_config(3)).unwrap();
        let s = sim.initial_state().unwrap();
        let d = sim.closed_loop_derivative(&s, 0.0).unwrap();
        let l = sim.layout();
        assert!(d[l.x()].iter().all(|v| *v == 0.0));
        assert_eq!(&d[l.zeta()], &[162.75, 162.75, 162.5]);
        for i in 0..3 {
            let phi = sim.networks()[i].basis(&vec![0.0; i + 2]).unwrap();
            for (a, p) in d[l.weights_of(i)].iter().zip(&phi) {
                assert!((a - 10.0 * p).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_horizon_keeps_initial_snapshot() {
        let mut cfg = chain_config(2);
        cfg.t_final = 0.0;
        let r = run(cfg).unwrap();
        assert!(r.is_ok());
        assert_eq!(r.trajectory.samples.len(), 1);
        assert_eq!(r.trajectory.samples[0].t, 0.0);
    }

    #[test]
    fn infeasible_start_rejected() {
        let mut cfg = chain_config(1);
        cfg.x0 = vec![2.5];
        let v = validate_initial(&cfg);
        assert!(v
            .iter()
            .any(|v| v.check == "initial-error" && v.index == Some(1)));
        assert!(matches!(run(cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn reference_bound_checked_on_grid() {
        let mut cfg = SimConfig::benchmark3();
        assert!(validate_initial(&cfg).is_empty());
        cfg.constraints = ConstraintSpec::new(
            (0..3).map(|i| cfg.constraints.state(i).clone()).collect(),
            vec![0.5, 2.0, 2.0, 2.0],
        )
        .unwrap();
        assert!(validate_initial(&cfg)
            .iter()
            .any(|v| v.check == "reference-bound"));

        let mut cfg = chain_config(1);
        cfg.reference = Reference::Constant(0.0);
        assert!(!validate_initial(&cfg)
            .iter()
            .any(|v| v.check == "reference-bound"));
    }

    #[test]
    fn summarize_empty_and_zero() {
        assert_eq!(
            summarize(&Trajectory::default()),
            Err(Error::EmptyTrajectory)
        );
        let mut cfg = chain_config(1);
        cfg.t_final = 0.0;
        let r = run(cfg).unwrap();
        let m = summarize(&r.trajectory).unwrap();
        assert_eq!(m.max_constraint_ratio, 0.0);
        assert_eq!(m.rms_z1_tail, Some(0.0));
    }

    #[test]
    fn benchmark_warns_about_observer_gain() {
        let sim = Simulator::new(SimConfig::benchmark3()).unwrap();
        assert_eq!(sim.warnings().len(), 3);
    }
}
