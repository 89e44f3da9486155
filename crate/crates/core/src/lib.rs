//! Transformation networks and the artificial economy built on them.
//!
//! - [`network`]: directed simple graphs over resources, canonical
//!   configuration numbering, density, cycle counting and DAG detection.
//! - [`economy`]: the agent-based market with one rule per agent and a fixed
//!   price, producing a per-step GDP ledger.
//! - [`sweep`]: deterministic, parallel sweeps over every configuration and
//!   the per-edge-count statistics built from them.
//! - [`output`]: the CSV artifacts.
//! - [`cli`]: the `xformnet` command line.

pub mod cli;
pub mod economy;
pub mod network;
pub mod output;
pub mod sweep;

pub use economy::{init_economy, run, EconomyParams, EconomyState, EndowmentPolicy, RunResult};
pub use network::{
    config_to_network, network_to_config, ConfigId, ConfigSpace, Directedness, ResourceId,
    TransformationNetwork, TransformationRule,
};
pub use sweep::{aggregate, derive_seed, execute_sweep, run_sweep, GroupStats, RunRecord, SweepPlan};
