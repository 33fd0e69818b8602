//! Merges the optional JSON config file, command-line flags and the
//! `FEARH_SEED` environment variable into one set of run settings.
//!
//! Precedence, highest first: flags, config file, `FEARH_SEED` (seed only),
//! built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;

use fearh_core::benchmark;
use fearh_core::data::{generate_synthetic, load_dataset, Dataset, SyntheticSpec};
use fearh_core::model::ModelConfig;
use fearh_core::optim::TrainHyper;
use fearh_core::orchestrator::{HaltingConfig, Mode, Redistribute, RunConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Nn,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeChoice {
    Centralized,
    Fedavg,
    Fearh,
}

impl From<ModeChoice> for Mode {
    fn from(m: ModeChoice) -> Self {
        match m {
            ModeChoice::Centralized => Mode::Centralized,
            ModeChoice::Fedavg => Mode::Fedavg,
            ModeChoice::Fearh => Mode::Fearh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RedistributeChoice {
    Hybridized,
    Federated,
}

/// Flat JSON config file. Every key is optional; unknown keys are errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mode: Option<ModeChoice>,
    pub model: Option<ModelChoice>,
    pub gamma: Option<f64>,
    pub owners: Option<usize>,
    pub threads: Option<usize>,
    pub redistribute: Option<RedistributeChoice>,

    pub data: Option<PathBuf>,
    pub synthetic: Option<bool>,
    pub samples: Option<usize>,
    pub features: Option<usize>,
    pub prevalence: Option<f64>,
    pub density: Option<f64>,
    pub signal_features: Option<usize>,

    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub schedule_decay: Option<f64>,
    pub batch_size: Option<usize>,
    pub local_epochs: Option<usize>,
    pub min_delta: Option<f64>,
    pub patience: Option<usize>,
    pub max_cycles: Option<usize>,

    pub gammas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub repeats: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flags shared by every experiment subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Flat JSON config file; flags override its values.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Master seed (falls back to FEARH_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed for data generation, splitting and partitioning (defaults to --seed).
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeChoice>,
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Hybrid exchange rate in [0, 1].
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub owners: Option<usize>,
    /// Worker threads for owner training; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// What FeARH owners continue from after each cycle.
    #[arg(long, value_enum)]
    pub redistribute: Option<RedistributeChoice>,

    /// CSV dataset (features..., label).
    #[arg(long, value_name = "PATH", conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Use the synthetic generator (benchmark defaults unless overridden).
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub prevalence: Option<f64>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub signal_features: Option<usize>,

    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub local_epochs: Option<usize>,
    #[arg(long)]
    pub min_delta: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_cycles: Option<usize>,
}

impl CommonArgs {
    fn synthetic_flags(&self) -> bool {
        self.synthetic
            || self.samples.is_some()
            || self.features.is_some()
            || self.prevalence.is_some()
            || self.density.is_some()
            || self.signal_features.is_some()
    }
}

impl FileConfig {
    fn synthetic_keys(&self) -> bool {
        self.synthetic == Some(true)
            || self.samples.is_some()
            || self.features.is_some()
            || self.prevalence.is_some()
            || self.density.is_some()
            || self.signal_features.is_some()
    }
}

#[derive(Debug, Clone)]
pub enum DataSource {
    Csv(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub data_seed: u64,
    pub out: PathBuf,
    pub mode: Mode,
    pub model: ModelChoice,
    pub gamma: f64,
    pub gamma_given: bool,
    pub owners: usize,
    pub threads: Option<usize>,
    pub redistribute: Redistribute,
    pub source: DataSource,
    pub hyper: TrainHyper,
    pub halting: HaltingConfig,
    pub gammas: Option<Vec<f64>>,
    pub seeds: Option<Vec<u64>>,
    pub repeats: Option<usize>,
}

fn env_seed() -> Result<Option<u64>, CliError> {
    match std::env::var("FEARH_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::usage(format!("FEARH_SEED is not an integer: `{v}`"))),
        Err(_) => Ok(None),
    }
}

impl Settings {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };

        let seed = match args.seed.or(file.seed) {
            Some(s) => s,
            None => env_seed()?.unwrap_or(0),
        };

        let source = if args.data.is_some() || args.synthetic_flags() {
            source_from(args.data.clone(), args.synthetic_flags(), &file, args)?
        } else {
            if file.data.is_some() && file.synthetic_keys() {
                return Err(CliError::usage(
                    "config specifies both `data` and synthetic generator keys",
                ));
            }
            source_from(file.data.clone(), file.synthetic_keys(), &file, args)?
        };

        let defaults = TrainHyper::default();
        let hyper = TrainHyper {
            learning_rate: args.learning_rate.or(file.learning_rate).unwrap_or(defaults.learning_rate),
            beta1: file.beta1.unwrap_or(defaults.beta1),
            beta2: file.beta2.unwrap_or(defaults.beta2),
            epsilon: file.epsilon.unwrap_or(defaults.epsilon),
            schedule_decay: file.schedule_decay.unwrap_or(defaults.schedule_decay),
            batch_size: args.batch_size.or(file.batch_size).unwrap_or(defaults.batch_size),
            local_epochs: args.local_epochs.or(file.local_epochs).unwrap_or(defaults.local_epochs),
        };
        let halting_defaults = HaltingConfig::default();
        let halting = HaltingConfig {
            min_delta: args.min_delta.or(file.min_delta).unwrap_or(halting_defaults.min_delta),
            patience: args.patience.or(file.patience).unwrap_or(halting_defaults.patience),
            max_cycles: args.max_cycles.or(file.max_cycles).unwrap_or(halting_defaults.max_cycles),
        };
        let gamma = args.gamma.or(file.gamma);
        let owners = args.owners.or(file.owners).unwrap_or(benchmark::OWNERS);
        if owners == 0 {
            return Err(CliError::usage("--owners must be at least 1"));
        }
        let redistribute = match args.redistribute.or(file.redistribute) {
            Some(RedistributeChoice::Federated) => Redistribute::Federated,
            _ => Redistribute::Hybridized,
        };

        Ok(Settings {
            seed,
            data_seed: args.data_seed.or(file.data_seed).unwrap_or(seed),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            mode: args.mode.or(file.mode).unwrap_or(ModeChoice::Fearh).into(),
            model: args.model.or(file.model).unwrap_or(ModelChoice::Nn),
            gamma: gamma.unwrap_or(benchmark::GAMMA),
            gamma_given: gamma.is_some(),
            owners,
            threads: args.threads.or(file.threads),
            redistribute,
            source,
            hyper,
            halting,
            gammas: file.gammas,
            seeds: file.seeds,
            repeats: file.repeats,
        })
    }

    pub fn load_data(&self) -> Result<Dataset, CliError> {
        match &self.source {
            DataSource::Csv(path) => Ok(load_dataset(path)?),
            DataSource::Synthetic(spec) => Ok(generate_synthetic(spec, self.data_seed)?),
        }
    }

    pub fn run_config(&self, mode: Mode, input_dim: usize) -> Result<RunConfig, CliError> {
        let model = match self.model {
            ModelChoice::Nn => ModelConfig::neural_net(input_dim)?,
            ModelChoice::Logistic => ModelConfig::logistic(input_dim)?,
        };
        let config = RunConfig {
            mode,
            n_owners: self.owners,
            gamma: self.gamma,
            model,
            hyper: self.hyper,
            halting: self.halting,
            master_seed: self.seed,
            redistribute: self.redistribute,
        };
        config.validate()?;
        Ok(config)
    }
}

fn source_from(
    path: Option<PathBuf>,
    synthetic: bool,
    file: &FileConfig,
    args: &CommonArgs,
) -> Result<DataSource, CliError> {
    match (path, synthetic) {
        (Some(_), true) => Err(CliError::usage(
            "specify either a CSV data file or the synthetic generator, not both",
        )),
        (Some(p), false) => Ok(DataSource::Csv(p)),
        (None, true) => {
            let base = benchmark::synthetic_spec();
            let n_features = args.features.or(file.features).unwrap_or(base.n_features);
            let spec = SyntheticSpec {
                n_samples: args.samples.or(file.samples).unwrap_or(base.n_samples),
                n_features,
                prevalence: args.prevalence.or(file.prevalence).unwrap_or(base.prevalence),
                feature_density: args.density.or(file.density).unwrap_or(base.feature_density),
                signal_features: args
                    .signal_features
                    .or(file.signal_features)
                    .unwrap_or(base.signal_features.min(n_features)),
            };
            spec.validate()?;
            Ok(DataSource::Synthetic(spec))
        }
        (None, false) => Err(CliError::usage(
            "no data source: pass --data PATH or --synthetic (or set one in --config)",
        )),
    }
}
