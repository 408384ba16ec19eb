//! Event-triggered sensor filtering and a deterministic mist/fog/cloud
//! network simulator.
//!
//! - [`filter`]: sliding-average dead-band filter run on each sensor.
//! - [`metrics`]: zero-order-hold reconstruction, reduction and error figures.
//! - [`topology`]: sensor/gateway/cloud device tree and its validation.
//! - [`sim`]: discrete-event loop, network and energy accounting.
//! - [`sources`]: seeded normal generators and CSV replay.
//! - [`config`]: TOML scenario files.
//! - [`report`]: scenario runner and byte-stable report output.

pub mod config;
pub mod filter;
pub mod metrics;
pub mod report;
pub mod sim;
pub mod sources;
pub mod topology;

pub use config::{load_config, load_scenario, Overrides, Scenario, ScenarioConfig};
pub use filter::{classify, compute_thresholds, sliding_average, FilterConfig, FilterState, Sample, TransmitDecision};
pub use metrics::{error_report, reconstruct_zoh, reduction_stats, ErrorReport, TransmissionLog};
pub use report::{emit_report, run_filter, run_simulate, ScenarioReport};
pub use sim::{compare, run, EnergyConfig, EnergyModel, Mode, RunMetrics, RunParams, SourceStream};
pub use topology::{Device, DeviceKind, Link, Topology};
