//! Twelve-region climate-economy model posed as a dynamic game, with
//! cooperative and noncooperative solution concepts.

pub mod calibration;
pub mod cooperative;
pub mod error;
pub mod model;
pub mod noncooperative;
pub mod report;
pub mod solver;

pub use calibration::{build_default_scenario, validate_scenario, Scenario};
pub use error::{Result, RiceError};
pub use model::{simulate, ControlBounds, ControlProfile, RegionControl, RiceModel, RiceState, Trajectory};
pub use solver::SolveOptions;
