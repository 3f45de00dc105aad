use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the controller and simulator.
///
/// Loop and state indices are 1-based, matching the usual `x_1..x_n`
/// numbering.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("plant evaluation diverged at state index {index}")]
    PlantDiverged { index: usize },

    #[error("EVIC non-positive in loop {index} at t={t}: psi={value}")]
    EvicNonPositive { index: usize, t: f64, value: f64 },

    #[error("constraint partial diverged in loop {index} at t={t}")]
    ConstraintPartialDiverged { index: usize, t: f64 },

    #[error("barrier violated in loop {index} at t={t}: z={z} outside (-psi, psi) with psi={psi}")]
    BarrierViolated {
        index: usize,
        t: f64,
        z: f64,
        psi: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate center box: {0}")]
    DegenerateBox(String),

    #[error("non-finite derivative at t={t}")]
    NonFiniteDerivative { t: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("empty trajectory")]
    EmptyTrajectory,
}
