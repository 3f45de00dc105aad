//! Adaptive backstepping control of pure-feedback systems under pure state
//! constraints.
//!
//! The controller combines barrier Lyapunov functions built on error-variable
//! constraints, one radial-basis network per backstepping loop, a
//! barrier-based disturbance observer and Nussbaum gains. Everything needed to
//! simulate the closed loop lives here:
//!
//! * [`plant`]: the true system, only ever read by the integrator.
//! * [`constraints`]: state constraints and the error constraints derived
//!   from them.
//! * [`approximator`]: Gaussian RBF networks, their adaptive law and the
//!   input filters.
//! * [`observer`]: the lumped-uncertainty observer.
//! * [`control_law`]: barrier terms, Nussbaum gain, saturation, the
//!   saturation compensation term and the full cascade.
//! * [`simulator`]: the augmented closed-loop ODE, RK4 integration, run-time
//!   invariant checks and metrics.
//! * [`properties`]: the fast numeric property suite.

// `!(a < b)` is used on purpose so that NaN falls into the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximator;
pub mod constraints;
pub mod control_law;
mod error;
pub mod expr;
pub mod integrate;
pub mod observer;
pub mod plant;
pub mod properties;
pub mod reference;
pub mod simulator;

pub use approximator::{init_centers, InputFilter, RbfNetwork};
pub use constraints::{ConstraintSpec, StateConstraint, SvicCheck};
pub use control_law::{
    alpha, barrier, cascade, lemma2_v2, nussbaum, saturate, BarrierTerm, CascadeOutput,
    ControllerParams, Lemma2Params, LoopPosition, LoopTerms,
};
pub use error::{Error, Result};
pub use integrate::rk4_step;
pub use observer::{epsilon_hat, observer_derivative, ObserverState};
pub use plant::{plant_derivative, PlantModel};
pub use reference::Reference;
pub use simulator::{
    run, summarize, validate_initial, ClosedLoopState, Failure, FailureKind, Metrics, NnConfig,
    RunResult, Sample, SimConfig, Simulator, StateLayout, Trajectory, Violation,
};
