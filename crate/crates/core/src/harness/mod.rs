//! Seeded Monte Carlo experiments: config ingestion, trials, CSV export and plots.

mod experiment;
mod plot;
mod sweep;
mod trial;

pub use experiment::{
    Algorithm, CONFIG_REFERENCE, ExperimentSection, ExperimentSpec, GridSection, JcleSection, PsoSection, SweepAxis,
};
pub use plot::{emit_plot, render, PlotFiles, METRICS};
pub use sweep::{
    median, read_results, read_summary, rmse, run_sweep, run_trials, summarize, SummaryRow, SweepReport,
};
pub use trial::{prepare_trial, run_trial, run_trial_traced, trial_seed, TrialRecord, TrialSetup};
