//! Scenario configuration, the end-to-end pipeline, sweeps and plot data.

pub mod config;
pub mod instances;
pub mod plot;
pub mod scenario;
pub mod sweep;

pub use config::{RsuProcess, ScenarioConfig};
pub use plot::{emit_plot_data, run_recipe, Figure, PlotTable};
pub use scenario::{run_scenario, ScenarioOutcome};
pub use sweep::{run_sweep, ResultRow, Sample, SweepParam, SweepSpec};
