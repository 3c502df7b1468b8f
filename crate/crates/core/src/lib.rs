//! Suture adiabatic pulses (SAPn): HSH pulse profiles, two-level transfer
//! dynamics, suture-point analytics, detuning sweeps and pulse optimization.
//!
//! All angular frequencies are in rad/µs and times in µs (ħ = 1).

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod optimizer;
pub mod pulse;
pub mod quadrature;
pub mod suture;

pub use dynamics::{
    evolve, evolve_compact_sap2, transfer_fidelity, transfer_probability, CompactSap2,
    ConstantDrive, Drive, Evolution, LinearSweep, Method, QubitState, RotatingFrameHamiltonian,
    SolverOptions,
};
pub use error::{AnalysisError, PulseError, SolverError};
pub use pulse::{build_sap, HshParams, PhasePolicy, SapPulse, SapTemplate};
