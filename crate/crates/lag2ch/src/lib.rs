//! Semi-discrete solver for the two-component Camassa-Holm system in
//! Lagrangian coordinates.
//!
//! The velocity field is tracked along particle paths `y(t, xi)` on a uniform
//! label grid. Evaluating the nonlocal forcing requires inverting a discrete
//! Sturm-Liouville operator whose coefficient is the cell stretch `D+y`; the
//! [`greens`] module constructs its four fundamental kernels by transfer-matrix
//! shooting, and [`dynamics`] assembles the closed system of ODEs that
//! propagates the state together with (or instead of) the kernels. The scheme
//! conserves a discrete energy and momentum and survives cell collapse
//! (`D+y = 0`), which is what happens at peakon-antipeakon collisions.

pub mod dynamics;
pub mod eulerian;
pub mod greens;
pub mod grid;
pub mod initdata;
pub mod reference;
pub mod scenario;
pub mod timeint;

use thiserror::Error;

/// Largest kernel dimension the dense representation will allocate.
pub const MAX_KERNEL_N: usize = 2048;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("negative coefficient at index {0}")]
    NegativeCoefficient(usize),
    #[error("degenerate Wronskian")]
    DegenerateWronskian,
    #[error("division at degenerate cell {0}")]
    DegenerateCell(usize),
    #[error("singular oracle system: {0}")]
    SingularSystem(String),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("invalid initial data: {0}")]
    InvalidInit(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("step-halving exhausted at t = {t}: min D+y = {min_dy}")]
    StepHalvingExhausted { t: f64, min_dy: f64 },
    #[error("non-finite state at t = {0}")]
    NonFiniteState(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
