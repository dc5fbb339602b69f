//! Deterministic discrete-event simulator for RPL networks under
//! battery-draining attacks.

use std::fmt;

pub mod attack;
pub mod battery;
pub mod energy;
pub mod kernel;
pub mod metrics;
pub mod radio;
pub mod rpl;
pub mod scenario;
pub mod sim;
pub mod time;

/// Node identifier. The DODAG root is conventionally node 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u16);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub use scenario::{load_scenario, ScenarioConfig};
pub use sim::{run, RunOptions, RunOutput};
pub use time::{SimDuration, SimTime};
