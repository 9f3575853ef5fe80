//! Event-triggered Newton and gradient extremum seeking for static quadratic
//! maps: probing signals, estimators, the static trigger, closed-loop
//! simulation and averaging analysis.

pub mod analysis;
pub mod control;
pub mod error;
pub mod estimators;
mod hybrid;
pub mod linalg;
pub mod plant;
pub mod report;
pub mod signals;
pub mod sim;
pub mod trigger;

pub use control::{ControlSample, ControllerGains, Scheme};
pub use error::{Error, Result};
pub use hybrid::StepInfo;
pub use plant::{Extremum, ExtremumKind, QuadraticMap, StaticMap};
pub use report::{analyze, run_comparison, Report, ScenarioReport, ScenarioResult};
pub use signals::{DitherDesign, Multiplier};
pub use sim::{run, simulate, LoopState, Outcome, Record, RunOutput, RunSummary, Scenario, Trajectory};
pub use trigger::{EventLog, TriggerConfig, TriggerState};
