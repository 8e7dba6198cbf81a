//! Config-driven experiments: build the population, attack, measure, and
//! write the report files.

mod config;
mod run;

pub use config::{AttackOverride, DatasetSpec, ExperimentConfig, MemberSpec, MetricSpec, PopulationSpec, TrainingSpec};
pub use run::{emit_report, prepare_population, run_experiment, run_on_population, Member, Population, Role};
