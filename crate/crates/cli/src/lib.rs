//! Study harness behind the `ernm` command-line tool: run configuration,
//! study runners and their CSV/TOML outputs.

pub mod config;
pub mod studies;

pub use config::{ContactTraceSettings, ExperimentKind, ModelConfig, NetworkSource, RunConfig};
pub use studies::{
    generate_population, run_contact_trace_study, run_fit_single, run_latent_class, run_mcar_study,
    run_simulate, LatentClassResult, Population, Simulation, StudyResult, StudyRow, SummaryRow,
};
