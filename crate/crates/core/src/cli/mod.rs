//! Experiment runner behind the `driftwise` binary.

mod config;
mod run;
mod verify;

pub use config::{
    DriftConfig, DriftKindConfig, Experiment, FeatureRef, InitName, ModelConfig, ProfileName, RunConfig, SamplerName,
    StreamConfig, TheoryConfig,
};
pub use run::{
    build_model, build_stream, derive_seed, lasting_top_changes, quantile, run, run_prequential, swap_reaction,
    RunOutcome, StepRecord, SwapReaction,
};
pub use verify::{verify, Check};
