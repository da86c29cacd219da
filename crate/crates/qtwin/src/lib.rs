//! Data-driven characterization and optimal control of a simulated
//! singlet-triplet qubit.
//!
//! The crate implements the full pipeline:
//!
//! 1. [`qsim`] — ground-truth device simulation: exchange models, transfer
//!    kernels, Monte Carlo noise, unitary propagation, fidelity utilities.
//! 2. [`probe`] — probe-pulse sampling strategies and dataset generation.
//! 3. [`surrogate`] — a differentiable sequence network trained to predict
//!    measurement outcomes from pulses, with reverse-mode gradients for both
//!    parameters and inputs.
//! 4. [`gsc`] — gate-set-calibration syndrome sequences and the loss built
//!    from them.
//! 5. [`optimize`] — batched gradient-descent pulse optimization of a
//!    {X_π/2, Y_π/2} gate set through the frozen surrogate, with final
//!    scoring against the ground-truth simulator.

pub mod error;
pub mod gsc;
pub mod optimize;
pub mod probe;
pub mod qsim;
pub mod rng;
pub mod surrogate;

pub use error::{Error, Result};
pub use qsim::{ControlPulse, MeasurementStats, QubitConfig};
