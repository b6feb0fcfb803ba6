//! Trace replay under one of six translation designs, with statistics and
//! energy accounting.

pub mod config;
pub mod energy;
pub mod report;
pub mod sim;
pub mod sweep;

pub use config::{Design, DesignConfig, EnergyParams, Latencies};
pub use energy::{compute_energy, EnergyReport, StructureCounts};
pub use report::{reports_to_csv, LatencyStats, SimReport};
pub use sim::{apply_design, run_trace, Fill, Insertions, Outcome, ServedBy, Simulator};
pub use sweep::sweep;
