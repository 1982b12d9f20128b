//! Scenario runner: presets, figure-style runs, parameter sweeps and file output.

mod io;
mod presets;
mod scenario;
mod selftest;
mod sweep;

use thiserror::Error;

pub use io::{format_number, write_csv, write_json, CsvTable, OUT_DIR_ENV};
pub use presets::{presets_report, ModulationTableRow, TableIRow, TABLE_I, TABLE_III};
pub use scenario::{
    compare_models, load_scenario, run_many, run_scenario, simulate, validate_modulation, write_comparison, write_result,
    Initial, ModelKind, ModulationComparison, ModulationConfig, Output, PresetSpec, Scenario, ScenarioResult, Summary,
};
pub use selftest::{selftest, CheckResult};
pub use sweep::{isolation_curve, sweep_isolation, symmetric_axis, write_sweep, Quantity, SweepGrid, SweepResult, SweepRoute};

use crate::effective::EffectiveError;
use crate::model::ModelError;
use crate::modulation::ModulationError;
use crate::observables::ObservableError;
use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario '{name}': {reason}")]
    Scenario { name: String, reason: String },
    #[error("config: {0}")]
    Config(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("scenario '{name}': {source}")]
    Solver { name: String, source: SolverError },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Effective(#[from] EffectiveError),
    #[error(transparent)]
    Modulation(#[from] ModulationError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
