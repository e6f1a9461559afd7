//! Toolkit for AC optimal power flow test cases.
//!
//! Loads power grid cases in the MATPOWER text format, builds per-unit
//! network and sparse admittance models, solves AC power flow and a local
//! AC-OPF (losses minimization), computes trivial DC-OPF lower bounds, and
//! converts the OPF into a standard sparse QCQP with exporters for the
//! QCQP itself and its Shor semidefinite relaxation (SDPA sparse format).
//!
//! Core numeric types are generic over the scalar via [`scalar::Real`];
//! the iterative solvers (Newton-Raphson power flow, interior point OPF)
//! are implemented for `f64`.

pub mod acopf;
pub mod dcopf;
pub mod error;
pub mod ipm;
pub mod matpower;
pub mod network;
pub mod powerflow;
pub mod qcqp;
pub mod report;
pub mod scalar;
pub mod sdpa;
pub mod sparse;
pub mod stats;

pub use error::Error;
pub use matpower::{parse_case, write_case, CaseData};
pub use network::{build_admittance, build_network, AdmittanceModel, Network};
pub use qcqp::{build_qcqp, QcqpProblem, Representation};
pub use stats::{compute_stats, CaseStats};

/// Concrete aliases for the common double-precision pipeline.
pub type CaseDataF64 = matpower::CaseData<f64>;
pub type NetworkF64 = network::Network<f64>;
pub type AdmittanceModelF64 = network::AdmittanceModel<f64>;
pub type CaseStatsF64 = stats::CaseStats<f64>;
pub type QcqpProblemF64 = qcqp::QcqpProblem<f64>;
