//! The pinned desk-scale benchmark: a synthetic stand-in for the
//! medication/mortality data, shared by the CLI defaults and the
//! acceptance suite.

use crate::data::{generate_synthetic, SiloSet, SplitSpec, SyntheticSpec};
use crate::error::Result;
use crate::model::ModelConfig;
use crate::optim::TrainHyper;
use crate::orchestrator::{HaltingConfig, Mode, Redistribute, RunConfig};

pub const SAMPLES: usize = 4000;
pub const FEATURES: usize = 100;
pub const PREVALENCE: f64 = 0.305;
pub const FEATURE_DENSITY: f64 = 0.3;
pub const SIGNAL_FEATURES: usize = 30;
pub const OWNERS: usize = 8;
pub const GAMMA: f64 = 0.1;
pub const DATA_SEED: u64 = 2024;

pub fn synthetic_spec() -> SyntheticSpec {
    SyntheticSpec {
        n_samples: SAMPLES,
        n_features: FEATURES,
        prevalence: PREVALENCE,
        feature_density: FEATURE_DENSITY,
        signal_features: SIGNAL_FEATURES,
    }
}

pub const LOCAL_EPOCHS: usize = 8;

/// Training settings used on the benchmark. Each owner holds an eighth of
/// the training rows, so eight local epochs per cycle give every regime the
/// same number of sample visits per cycle as one centralized epoch.
pub fn hyper() -> TrainHyper {
    TrainHyper {
        local_epochs: LOCAL_EPOCHS,
        ..TrainHyper::default()
    }
}

pub fn run_config(mode: Mode, master_seed: u64) -> Result<RunConfig> {
    Ok(RunConfig {
        mode,
        n_owners: OWNERS,
        gamma: GAMMA,
        model: ModelConfig::neural_net(FEATURES)?,
        hyper: hyper(),
        halting: HaltingConfig::default(),
        master_seed,
        redistribute: Redistribute::Hybridized,
    })
}

/// Generates the benchmark data and deals it to `OWNERS` silos.
pub fn silos(data_seed: u64) -> Result<SiloSet> {
    let data = generate_synthetic(&synthetic_spec(), data_seed)?;
    SiloSet::build(&data, &SplitSpec::default(), OWNERS, data_seed)
}
