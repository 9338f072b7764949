//! Desk-scale electromagnetic-transient (EMT) circuit simulation.
//!
//! The crate follows the classic EMT tool pipeline:
//!
//! 1. [`netlist`] parses a SPICE-flavoured text description of the circuit
//!    into a validated [`netlist::Circuit`].
//! 2. [`mna`] maps circuit quantities onto solution-vector slots and
//!    accumulates per-element stamps into the sparse system `Y·X = J`,
//!    keeping linear and Newton-iteration-dependent stamps separate.
//! 3. [`companion`] supplies trapezoidal difference-equation models for
//!    inductors, capacitors and coupled coils, so every time-derivative
//!    element becomes a conductance plus a history source.
//! 4. [`dqframe`] and [`induction_motor`] couple the abc network to the
//!    five-variable dq induction-motor model, linearized per Newton
//!    iteration.
//! 5. [`engine`] runs DC initialization, Newton-Raphson, sparse LU solves
//!    and the LTE-controlled adaptive time loop, producing [`engine::Waveforms`].
//!
//! The [`sparse`] module holds the triplet/CSC matrix plumbing and the LU
//! factorization used by the engine.

pub mod companion;
pub mod dqframe;
pub mod engine;
pub mod induction_motor;
pub mod mna;
pub mod netlist;
pub mod sparse;

pub use engine::{run_transient, SolverConfig, Waveforms};
pub use netlist::{parse_netlist, validate, Circuit};
