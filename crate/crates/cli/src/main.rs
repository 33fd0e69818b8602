//! `fearh`: run federated learning experiments with anonymous random
//! hybridization from the command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
//! metric error.

mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use fearh_core::data::{generate_synthetic, SiloSet, SplitSpec, SyntheticSpec};
use fearh_core::orchestrator::{cycle_stats, run, sweep_gamma, Mode, StopReason};

use output::{fixed, RunMeta};
use settings::{CommonArgs, ModelChoice, Settings};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<fearh_core::Error> for CliError {
    fn from(e: fearh_core::Error) -> Self {
        use fearh_core::Error;
        match e {
            Error::Input(_) | Error::Config(_) | Error::Parse(_) => CliError::Usage(e.to_string()),
            Error::Numeric(_) | Error::UndefinedMetric(_) => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fearh", version, about = "Federated learning with anonymous random hybridization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic binary dataset as CSV.
    GenData(GenDataArgs),
    /// Run one training regime; writes result.json and cycles.csv.
    Run(RunArgs),
    /// Run all three regimes on identical data and seed; writes compare.csv.
    Compare(RunArgs),
    /// FeARH over a grid of exchange rates and seeds; writes sweep.csv.
    Sweep(SweepArgs),
    /// Cycle counts over repeated runs; writes stats.csv.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[arg(long, default_value_t = fearh_core::benchmark::SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = fearh_core::benchmark::FEATURES)]
    features: usize,
    #[arg(long, default_value_t = fearh_core::benchmark::PREVALENCE)]
    prevalence: f64,
    #[arg(long, default_value_t = fearh_core::benchmark::FEATURE_DENSITY)]
    density: f64,
    /// Defaults to min(30, features).
    #[arg(long)]
    signal_features: Option<usize>,
    /// Falls back to FEARH_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "data.csv")]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated exchange rates [default: 0.1,0.2,0.3,0.4,0.5]
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Comma-separated seeds [default: three seeds starting at --seed]
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of runs, seeded master_seed + run_index [default: 50]
    #[arg(long)]
    repeats: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData(args) => cmd_gen_data(args),
        Command::Run(args) => with_settings(&args.common, cmd_run),
        Command::Compare(args) => with_settings(&args.common, cmd_compare),
        Command::Sweep(args) => {
            let gammas = args.gammas.clone();
            let seeds = args.seeds.clone();
            with_settings(&args.common, |s| cmd_sweep(s, gammas, seeds))
        }
        Command::Stats(args) => {
            let repeats = args.repeats;
            with_settings(&args.common, |s| cmd_stats(s, repeats))
        }
    }
}

/// Resolves settings and runs `f` inside a pool of the requested size.
fn with_settings(
    common: &CommonArgs,
    f: impl FnOnce(&Settings) -> Result<(), CliError> + Send,
) -> Result<(), CliError> {
    let settings = Settings::resolve(common)?;
    match settings.threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::runtime(format!("cannot start thread pool: {e}")))?
            .install(|| f(&settings)),
        None => f(&settings),
    }
}

fn cmd_gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let seed = match args.seed {
        Some(s) => s,
        None => match std::env::var("FEARH_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| CliError::usage(format!("FEARH_SEED is not an integer: `{v}`")))?,
            Err(_) => 0,
        },
    };
    let spec = SyntheticSpec {
        n_samples: args.samples,
        n_features: args.features,
        prevalence: args.prevalence,
        feature_density: args.density,
        signal_features: args
            .signal_features
            .unwrap_or(fearh_core::benchmark::SIGNAL_FEATURES.min(args.features)),
    };
    let data = generate_synthetic(&spec, seed)?;
    let file = std::fs::File::create(&args.output)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", args.output.display())))?;
    data.write_csv(file)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", args.output.display())))?;
    println!(
        "wrote {} rows x {} features ({} positive) to {}",
        data.len(),
        data.n_features(),
        data.positives(),
        args.output.display()
    );
    Ok(())
}

fn build_silos(s: &Settings) -> Result<SiloSet, CliError> {
    let data = s.load_data()?;
    info!("loaded {} rows x {} features", data.len(), data.n_features());
    Ok(SiloSet::build(&data, &SplitSpec::default(), s.owners, s.data_seed)?)
}

fn model_name(m: ModelChoice) -> &'static str {
    match m {
        ModelChoice::Nn => "nn",
        ModelChoice::Logistic => "logistic",
    }
}

fn cmd_run(s: &Settings) -> Result<(), CliError> {
    if s.mode == Mode::Centralized && s.gamma_given {
        eprintln!("warning: gamma is ignored in centralized mode");
    }
    let silos = build_silos(s)?;
    let config = s.run_config(s.mode, silos.n_features())?;
    let result = run(&config, &silos)?;
    let meta = RunMeta {
        n_owners: s.owners,
        gamma: (s.mode != Mode::Centralized).then_some(s.gamma),
        model: model_name(s.model),
        layer_sizes: config.model.layer_sizes(),
    };
    output::write_file(&s.out, "result.json", &output::result_json(&result, &meta)?)?;
    output::write_file(&s.out, "cycles.csv", &output::cycles_csv(&result))?;
    println!(
        "{}: test AUCROC {} AUCPR {} after {} cycles (best cycle {}, stopped by {})",
        result.mode,
        fixed(result.test_auroc_mean),
        fixed(result.test_aupr_mean),
        result.cycles_completed,
        result.best_cycle,
        match result.stop_reason {
            StopReason::Halting => "halting rule",
            StopReason::MaxCycles => "max_cycles",
        }
    );
    Ok(())
}

fn cmd_compare(s: &Settings) -> Result<(), CliError> {
    let silos = build_silos(s)?;
    let mut rows = Vec::new();
    for mode in [Mode::Centralized, Mode::Fedavg, Mode::Fearh] {
        let config = s.run_config(mode, silos.n_features())?;
        let r = run(&config, &silos)?;
        rows.push((mode.name(), r.test_auroc_mean, r.test_aupr_mean));
    }
    let table = output::compare_csv(&rows);
    output::write_file(&s.out, "compare.csv", &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_sweep(s: &Settings, gammas: Option<Vec<f64>>, seeds: Option<Vec<u64>>) -> Result<(), CliError> {
    let gammas = gammas
        .or_else(|| s.gammas.clone())
        .unwrap_or_else(|| vec![0.1, 0.2, 0.3, 0.4, 0.5]);
    let seeds = seeds
        .or_else(|| s.seeds.clone())
        .unwrap_or_else(|| (0..3).map(|k| s.seed.wrapping_add(k)).collect());
    if gammas.is_empty() || seeds.is_empty() {
        return Err(CliError::usage("sweep needs at least one gamma and one seed"));
    }
    let silos = build_silos(s)?;
    let config = s.run_config(Mode::Fearh, silos.n_features())?;
    let rows = sweep_gamma(&config, &gammas, &seeds, &silos)?;
    let path = output::write_file(&s.out, "sweep.csv", &output::sweep_csv(&rows))?;
    for &g in &gammas {
        let v: Vec<f64> = rows.iter().filter(|r| r.gamma == g).map(|r| r.test_auroc).collect();
        println!("gamma {}: mean test AUCROC {}", fixed(g), fixed(v.iter().sum::<f64>() / v.len() as f64));
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_stats(s: &Settings, repeats: Option<usize>) -> Result<(), CliError> {
    let repeats = repeats.or(s.repeats).unwrap_or(50);
    if repeats == 0 {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let silos = build_silos(s)?;
    let config = s.run_config(s.mode, silos.n_features())?;
    let stats = cycle_stats(&config, repeats, &silos)?;
    output::write_file(&s.out, "stats.csv", &output::stats_csv(&stats))?;
    let halted = stats
        .per_run
        .iter()
        .filter(|r| r.stop_reason == StopReason::Halting)
        .count();
    println!(
        "mean_cycles {} std_cycles {} halted {halted}/{repeats}",
        fixed(stats.mean_cycles),
        fixed(stats.std_cycles)
    );
    Ok(())
}
