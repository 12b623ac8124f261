//! Discrete-event simulation of non-clairvoyant coflow scheduling on a
//! non-blocking (big-switch) datacenter fabric.
//!
//! The crate is organized bottom-up:
//!
//! - [`trace`]: coflow/flow domain types, the benchmark trace format and the
//!   derived-trace generators.
//! - [`engine`]: the event loop that advances time, applies rate plans and
//!   records an [`EventLog`].
//! - [`sched`]: the scheduler interface, the sampling (pilot-flow) scheduler
//!   and the Aalo, Aalo-Oracle, SEBF, FIFO and FAIR baselines.
//! - [`metrics`]: CCTs, speedups, learning overhead and estimation error.
//! - [`bound`]: the analytic sampling-gap bound and its Monte-Carlo check.

pub mod bound;
pub mod engine;
mod error;
pub mod metrics;
pub mod sched;
pub mod trace;

pub use engine::{run_simulation, run_simulation_observed, EventLog, Fabric, RatePlan, SimConfig};
pub use error::{Error, Result};
pub use sched::{InterCoflowPolicy, PilotPolicy, SchedulerKind, SchedulerParams};
pub use trace::{CoflowSpec, FlowSpec, Trace, MB};
