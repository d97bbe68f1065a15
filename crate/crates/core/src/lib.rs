//! Packet-level discrete-event simulator of a lossless CLOS fabric.
//!
//! Three congestion-control stacks can be compared on the same topology and
//! traffic: PFC alone, DCQCN, and a revised DCQCN whose congestion points
//! mark by output occupancy and advertise a fair share.
//!
//! The rate-control laws are generic over [`scalar::Scalar`]; the simulator
//! itself runs on `f64`. Aliases for the common instantiations live here.

pub mod engine;
pub mod error;
pub mod fabric;
pub mod host;
pub mod metrics;
pub mod scalar;
pub mod scenario;
pub mod sim;
pub mod topology;

use num_rational::BigRational;

pub use engine::{Engine, RunBound, SimTime};
pub use error::SimError;
pub use metrics::{Completion, RunReport, Series};
pub use scenario::{Mechanism, ScenarioConfig};
pub use sim::{run_scenario, simulate, sweep, ExitStatus, Override};
pub use topology::Topology;

pub type RpStateF64 = host::RpState<f64>;
pub type RpStateF32 = host::RpState<f32>;
pub type ExactRpState = host::RpState<BigRational>;
pub type DcqcnParamsF64 = host::DcqcnParams<f64>;
pub type ExactDcqcnParams = host::DcqcnParams<BigRational>;
pub type ErpStateF64 = host::ErpState<f64>;
pub type ExactErpState = host::ErpState<BigRational>;
pub type ErpParamsF64 = host::ErpParams<f64>;
pub type ExactErpParams = host::ErpParams<BigRational>;
