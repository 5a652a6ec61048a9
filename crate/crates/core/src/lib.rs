//! Energy-minimizing UAV trajectory, hover schedule and RIS reflection design
//! for SWIPT with an active (or passive) reconfigurable intelligent surface.

pub mod channel;
pub mod config;
pub mod conic;
pub mod energy;
pub mod optimizer;
pub mod error;
pub mod montecarlo;
pub mod sca_phase;
pub mod sca_trajectory;
pub mod scenario;
pub mod trace;

pub use error::{Error, Result};
pub use scenario::{FlightPlan, Point, ReflectionPlan, RisMode, Scenario};
