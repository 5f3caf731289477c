//! Run configuration, scenario presets and file output.

mod config;
mod output;

pub use config::{
    parse_config, read_config, CustomSpec, LoadSite, Preset, RunConfig, ScenarioSpec, TrackingSpec,
    BRIDGE_ALPHAS, BRIDGE_CORRELATED_VOLUME, BRIDGE_KERNEL_VOLUME, BRIDGE_LOAD_A, BRIDGE_LOAD_B,
    DEFAULT_ITERATIONS, DEFAULT_PENALTY, HORIZONTAL_AMPLITUDE, KERNEL_LENGTH, KERNEL_RANK_CAP,
    VERTICAL_AMPLITUDE,
};
pub use output::{
    factors_csv, history_csv, read_history, trace_csv, vtk_string, write_factors, write_history,
    write_text, write_vtk, HISTORY_HEADER,
};
