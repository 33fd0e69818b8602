//! End-to-end training regimes: hybrid cycles (FeARH), plain federated
//! averaging and centralized training, all stopped by the same validation
//! monitor.
//!
//! Randomness is keyed by `(master_seed, cycle, purpose, owner)`, so owner
//! trainings within a cycle can run on any number of threads. Hybridization
//! and averaging only start once every owner has finished.

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{concat, Dataset, SiloSet};
use crate::error::{Error, Result};
use crate::metrics::{aupr, auroc, mean_over_silos, ScoredLabels};
use crate::model::{init_network, ModelConfig, Network, ParameterVector};
use crate::optim::{train_local, TrainHyper};
use crate::protocol::{federated_average, hybridize_round, HybridConfig, OwnerWeights, RoundPlan};
use crate::rng::{Purpose, StreamId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Centralized,
    /// Original federated learning: local training then averaging, no hybridization.
    Fedavg,
    Fearh,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Centralized => "centralized",
            Mode::Fedavg => "fedavg",
            Mode::Fearh => "fearh",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centralized" => Ok(Mode::Centralized),
            "fedavg" | "original_federated" => Ok(Mode::Fedavg),
            "fearh" => Ok(Mode::Fearh),
            other => Err(Error::config(format!("unknown mode `{other}`"))),
        }
    }
}

/// What owners start the next hybrid cycle from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Redistribute {
    /// Each owner continues from its hybridized vector `m_i`.
    #[default]
    Hybridized,
    /// Every owner restarts from `M_fed` (ablation).
    Federated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HaltingConfig {
    pub min_delta: f64,
    pub patience: usize,
    pub max_cycles: usize,
}

impl Default for HaltingConfig {
    fn default() -> Self {
        Self {
            min_delta: 1e-4,
            patience: 3,
            max_cycles: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub n_owners: usize,
    /// Ignored in centralized mode.
    pub gamma: f64,
    pub model: ModelConfig,
    pub hyper: TrainHyper,
    pub halting: HaltingConfig,
    pub master_seed: u64,
    pub redistribute: Redistribute,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_owners == 0 {
            return Err(Error::config("at least one data owner is required"));
        }
        HybridConfig::new(self.gamma)?;
        self.hyper.validate()?;
        let h = &self.halting;
        if !(h.min_delta > 0.0 && h.min_delta.is_finite()) {
            return Err(Error::config("min_delta must be positive"));
        }
        if h.patience == 0 {
            return Err(Error::config("patience must be at least 1"));
        }
        if h.max_cycles == 0 {
            return Err(Error::config("max_cycles must be at least 1"));
        }
        Ok(())
    }

    fn check_silos(&self, silos: &SiloSet) -> Result<()> {
        let n = self.n_owners;
        if silos.train.len() != n || silos.test.len() != n || silos.valid.len() != n {
            return Err(Error::config(format!(
                "config has {n} owners but silos are {}/{}/{} (train/test/valid)",
                silos.train.len(),
                silos.test.len(),
                silos.valid.len()
            )));
        }
        check_dim(&self.model, silos.train.iter().chain(&silos.test).chain(&silos.valid))
    }
}

fn check_dim<'a>(model: &ModelConfig, sets: impl IntoIterator<Item = &'a Dataset>) -> Result<()> {
    for d in sets {
        if d.n_features() != model.input_dim() {
            return Err(Error::config(format!(
                "data has {} features, model expects {}",
                d.n_features(),
                model.input_dim()
            )));
        }
    }
    Ok(())
}

/// Best-so-far early stopping.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HaltingMonitor {
    pub best_score: Option<f64>,
    pub consecutive_failures: usize,
    pub best_cycle: Option<usize>,
}

impl HaltingMonitor {
    /// Records `score` for `cycle`. A score improves when it beats the best
    /// so far by at least `min_delta`. Returns `(improved, stop)`.
    pub fn observe(&mut self, cycle: usize, score: f64, min_delta: f64, patience: usize) -> (bool, bool) {
        let improved = match self.best_score {
            None => true,
            Some(best) => score >= best + min_delta,
        };
        if improved {
            self.best_score = Some(score);
            self.best_cycle = Some(cycle);
            self.consecutive_failures = 0;
        } else {
            self.consecutive_failures += 1;
        }
        (improved, self.consecutive_failures >= patience)
    }
}

/// Value form of [`HaltingMonitor::observe`]. The cycle index recorded for
/// an improvement is the number of scores seen so far, counting this one.
pub fn halting_update(
    monitor: &HaltingMonitor,
    cycle: usize,
    new_score: f64,
    min_delta: f64,
    patience: usize,
) -> (HaltingMonitor, bool) {
    let mut next = monitor.clone();
    let (_, stop) = next.observe(cycle, new_score, min_delta, patience);
    (next, stop)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: usize,
    pub mean_validation_auroc: f64,
    /// Full-shard loss of each owner's model right after local training.
    pub per_owner_train_loss: Vec<f64>,
    /// Validation silos left out of the mean because AUCROC was undefined.
    pub excluded_silos: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Halting,
    MaxCycles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiloMetrics {
    pub silo: usize,
    pub auroc: Option<f64>,
    pub aupr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub mode: Mode,
    pub master_seed: u64,
    pub cycles_completed: usize,
    pub best_cycle: usize,
    pub stop_reason: StopReason,
    pub cycle_records: Vec<CycleRecord>,
    /// Federated model of the best validation cycle.
    pub final_params: ParameterVector,
    pub test_auroc_mean: f64,
    pub test_aupr_mean: f64,
    pub per_silo_test_metrics: Vec<SiloMetrics>,
}

/// Scores every example of `data` with `net`.
pub fn score_dataset(net: &Network, data: &Dataset) -> Result<ScoredLabels> {
    let scores = data.rows().map(|r| net.forward(r)).collect::<Result<Vec<_>>>()?;
    ScoredLabels::new(scores, data.labels().to_vec())
}

fn full_loss(net: &Network, data: &Dataset) -> Result<f64> {
    let rows: Vec<&[u8]> = data.rows().collect();
    net.batch_loss(&rows, data.labels())
}

fn defined(result: Result<f64>) -> Result<Option<f64>> {
    match result {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>, what: &str) -> Result<(f64, usize)> {
    let mut kept = Vec::new();
    let mut excluded = 0;
    for v in values {
        match v {
            Some(v) => kept.push(v),
            None => excluded += 1,
        }
    }
    if kept.is_empty() {
        return Err(Error::UndefinedMetric(format!("{what} is undefined on every silo")));
    }
    if excluded > 0 {
        debug!("{what}: excluded {excluded} single-class silo(s) from the mean");
    }
    Ok((mean_over_silos(&kept)?, excluded))
}

/// Mean validation AUCROC over silos where it is defined, with the number excluded.
pub fn validation_score(net: &Network, silos: &[Dataset]) -> Result<(f64, usize)> {
    let per_silo = silos
        .iter()
        .map(|s| defined(auroc(&score_dataset(net, s)?)))
        .collect::<Result<Vec<_>>>()?;
    mean_defined(per_silo.into_iter(), "validation AUCROC")
}

/// Per-silo test metrics and their means over the silos where each is defined.
pub fn test_metrics(net: &Network, silos: &[Dataset]) -> Result<(Vec<SiloMetrics>, f64, f64)> {
    let per_silo = silos
        .iter()
        .enumerate()
        .map(|(silo, s)| {
            let scored = score_dataset(net, s)?;
            Ok(SiloMetrics {
                silo,
                auroc: defined(auroc(&scored))?,
                aupr: defined(aupr(&scored))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (roc, _) = mean_defined(per_silo.iter().map(|m| m.auroc), "test AUCROC")?;
    let (pr, _) = mean_defined(per_silo.iter().map(|m| m.aupr), "test AUCPR")?;
    Ok((per_silo, roc, pr))
}

/// Outcome of one federated cycle.
#[derive(Debug, Clone)]
pub struct CycleOutcome {
    pub cycle: usize,
    /// Owner models right after local training.
    pub trained: Vec<ParameterVector>,
    /// Vectors the analyzer receives: hybridized in FeARH, `trained` otherwise.
    pub shared: Vec<ParameterVector>,
    pub plan: Option<RoundPlan>,
    pub federated: ParameterVector,
    pub train_loss: Vec<f64>,
}

/// Owner state of a federated run, advanced one cycle at a time.
#[derive(Debug, Clone)]
pub struct Federation<'a> {
    config: &'a RunConfig,
    silos: &'a SiloSet,
    weights: OwnerWeights,
    owners: Vec<Network>,
    cycle: usize,
}

impl<'a> Federation<'a> {
    /// Every owner starts from the same initial network.
    pub fn new(config: &'a RunConfig, silos: &'a SiloSet) -> Result<Self> {
        config.validate()?;
        if config.mode == Mode::Centralized {
            return Err(Error::config("centralized mode has no federation"));
        }
        config.check_silos(silos)?;
        let sizes: Vec<usize> = silos.train.iter().map(Dataset::len).collect();
        let init = initial_network(config);
        Ok(Self {
            config,
            silos,
            weights: OwnerWeights::from_sizes(&sizes)?,
            owners: vec![init; config.n_owners],
            cycle: 0,
        })
    }

    pub fn weights(&self) -> &OwnerWeights {
        &self.weights
    }

    /// Models the owners will train from in the next cycle.
    pub fn owner_models(&self) -> &[Network] {
        &self.owners
    }

    pub fn cycles_run(&self) -> usize {
        self.cycle
    }

    pub fn step(&mut self) -> Result<CycleOutcome> {
        self.cycle += 1;
        let cycle = self.cycle;
        let cfg = self.config;

        let trained: Vec<(Network, f64)> = self
            .owners
            .par_iter()
            .enumerate()
            .map(|(i, net)| {
                let stream = StreamId::new(cfg.master_seed, cycle as u64, Purpose::Train, i as u64);
                let out = train_local(net, &self.silos.train[i], &cfg.hyper, stream)?;
                let loss = full_loss(&out, &self.silos.train[i])?;
                Ok((out, loss))
            })
            .collect::<Result<_>>()?;
        let (nets, train_loss): (Vec<Network>, Vec<f64>) = trained.into_iter().unzip();
        let trained: Vec<ParameterVector> = nets.into_iter().map(Network::into_params).collect();

        let (shared, plan) = match cfg.mode {
            Mode::Fearh => {
                let mut rng = StreamId::new(cfg.master_seed, cycle as u64, Purpose::Pairing, 0).rng();
                let (shared, plan) = hybridize_round(&trained, HybridConfig::new(cfg.gamma)?, &mut rng)?;
                (shared, Some(plan))
            }
            _ => (trained.clone(), None),
        };
        let federated = federated_average(&shared, &self.weights)?;

        let next: Vec<ParameterVector> = match (cfg.mode, cfg.redistribute) {
            (Mode::Fearh, Redistribute::Hybridized) => shared.clone(),
            _ => vec![federated.clone(); shared.len()],
        };
        self.owners = next
            .into_iter()
            .map(|p| self.owners[0].with_params(p))
            .collect::<Result<_>>()?;

        Ok(CycleOutcome {
            cycle,
            trained,
            shared,
            plan,
            federated,
            train_loss,
        })
    }
}

fn initial_network(config: &RunConfig) -> Network {
    init_network(&config.model, StreamId::root(config.master_seed, Purpose::Init).seed())
}

struct Tracker {
    monitor: HaltingMonitor,
    records: Vec<CycleRecord>,
    best: Option<Network>,
}

impl Tracker {
    fn new() -> Self {
        Self {
            monitor: HaltingMonitor::default(),
            records: Vec::new(),
            best: None,
        }
    }

    /// Returns true when the run should stop.
    fn record(
        &mut self,
        config: &RunConfig,
        cycle: usize,
        model: Network,
        valid: &[Dataset],
        train_loss: Vec<f64>,
    ) -> Result<bool> {
        let (score, excluded) = validation_score(&model, valid)?;
        let h = &config.halting;
        let (improved, stop) = self.monitor.observe(cycle, score, h.min_delta, h.patience);
        debug!("{} cycle {cycle}: validation AUCROC {score:.6}", config.mode);
        if improved {
            self.best = Some(model);
        }
        self.records.push(CycleRecord {
            cycle_index: cycle,
            mean_validation_auroc: score,
            per_owner_train_loss: train_loss,
            excluded_silos: excluded,
        });
        Ok(stop)
    }

    fn finish(self, config: &RunConfig, stopped: bool, test: &[Dataset]) -> Result<RunResult> {
        let excluded: usize = self.records.iter().map(|r| r.excluded_silos).sum();
        if excluded > 0 {
            warn!(
                "{}: {excluded} single-class validation silo evaluation(s) excluded across {} cycles",
                config.mode,
                self.records.len()
            );
        }
        let best = self.best.expect("at least one cycle ran");
        let (per_silo, roc, pr) = test_metrics(&best, test)?;
        Ok(RunResult {
            mode: config.mode,
            master_seed: config.master_seed,
            cycles_completed: self.records.len(),
            best_cycle: self.monitor.best_cycle.unwrap_or(1),
            stop_reason: if stopped {
                StopReason::Halting
            } else {
                StopReason::MaxCycles
            },
            cycle_records: self.records,
            final_params: best.into_params(),
            test_auroc_mean: roc,
            test_aupr_mean: pr,
            per_silo_test_metrics: per_silo,
        })
    }
}

fn run_federated(config: &RunConfig, silos: &SiloSet) -> Result<RunResult> {
    let mut fed = Federation::new(config, silos)?;
    let mut tracker = Tracker::new();
    let mut stopped = false;
    while fed.cycles_run() < config.halting.max_cycles {
        let out = fed.step()?;
        let model = fed.owners[0].with_params(out.federated)?;
        if tracker.record(config, out.cycle, model, &silos.valid, out.train_loss)? {
            stopped = true;
            break;
        }
    }
    tracker.finish(config, stopped, &silos.test)
}

/// Hybrid cycles: local training, pairwise hybridization at rate `gamma`,
/// weighted averaging, validation of the average; owners continue from
/// their hybridized vectors.
pub fn run_fearh(config: &RunConfig, silos: &SiloSet) -> Result<RunResult> {
    if config.mode != Mode::Fearh {
        return Err(Error::config(format!("run_fearh called with mode {}", config.mode)));
    }
    run_federated(config, silos)
}

/// Global cycles of local training and averaging; every owner restarts
/// from the average.
pub fn run_original_federated(config: &RunConfig, silos: &SiloSet) -> Result<RunResult> {
    if config.mode != Mode::Fedavg {
        return Err(Error::config(format!(
            "run_original_federated called with mode {}",
            config.mode
        )));
    }
    run_federated(config, silos)
}

/// One network on pooled data, one epoch per cycle, same halting rule.
pub fn run_centralized(
    config: &RunConfig,
    train: &Dataset,
    valid: &Dataset,
    test: &Dataset,
) -> Result<RunResult> {
    if config.mode != Mode::Centralized {
        return Err(Error::config(format!("run_centralized called with mode {}", config.mode)));
    }
    config.validate()?;
    check_dim(&config.model, [train, valid, test])?;
    let mut net = initial_network(config);
    let hyper = TrainHyper {
        local_epochs: 1,
        ..config.hyper
    };
    let mut tracker = Tracker::new();
    let mut stopped = false;
    for cycle in 1..=config.halting.max_cycles {
        let stream = StreamId::new(config.master_seed, cycle as u64, Purpose::Train, 0);
        net = train_local(&net, train, &hyper, stream)?;
        let loss = full_loss(&net, train)?;
        if tracker.record(config, cycle, net.clone(), std::slice::from_ref(valid), vec![loss])? {
            stopped = true;
            break;
        }
    }
    tracker.finish(config, stopped, std::slice::from_ref(test))
}

/// Dispatches on `config.mode`. Centralized runs pool each stage's silos.
pub fn run(config: &RunConfig, silos: &SiloSet) -> Result<RunResult> {
    match config.mode {
        Mode::Fearh => run_fearh(config, silos),
        Mode::Fedavg => run_original_federated(config, silos),
        Mode::Centralized => run_centralized(
            config,
            &concat(&silos.train)?,
            &concat(&silos.valid)?,
            &concat(&silos.test)?,
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub seed: u64,
    pub test_auroc: f64,
    pub test_aupr: f64,
}

/// One FeARH run per `(gamma, seed)`, gamma-major.
pub fn sweep_gamma(
    config: &RunConfig,
    gammas: &[f64],
    seeds: &[u64],
    silos: &SiloSet,
) -> Result<Vec<SweepRow>> {
    if gammas.is_empty() || seeds.is_empty() {
        return Err(Error::input("sweep needs at least one gamma and one seed"));
    }
    let grid: Vec<(f64, u64)> = gammas
        .iter()
        .flat_map(|&g| seeds.iter().map(move |&s| (g, s)))
        .collect();
    grid.par_iter()
        .map(|&(gamma, seed)| {
            let cfg = RunConfig {
                mode: Mode::Fearh,
                gamma,
                master_seed: seed,
                ..config.clone()
            };
            let r = run_fearh(&cfg, silos)?;
            Ok(SweepRow {
                gamma,
                seed,
                test_auroc: r.test_auroc_mean,
                test_aupr: r.test_aupr_mean,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRun {
    pub run_index: usize,
    pub seed: u64,
    pub cycles: usize,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleStats {
    pub mean_cycles: f64,
    /// Population standard deviation.
    pub std_cycles: f64,
    pub per_run: Vec<CycleRun>,
}

/// Repeats `config` with seeds `master_seed + run_index` and summarizes cycle counts.
pub fn cycle_stats(config: &RunConfig, repeats: usize, silos: &SiloSet) -> Result<CycleStats> {
    if repeats == 0 {
        return Err(Error::input("repeats must be at least 1"));
    }
    let per_run = (0..repeats)
        .into_par_iter()
        .map(|k| {
            let cfg = RunConfig {
                master_seed: config.master_seed.wrapping_add(k as u64),
                ..config.clone()
            };
            let r = run(&cfg, silos)?;
            Ok(CycleRun {
                run_index: k,
                seed: cfg.master_seed,
                cycles: r.cycles_completed,
                stop_reason: r.stop_reason,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_run.len() as f64;
    let mean = per_run.iter().map(|r| r.cycles as f64).sum::<f64>() / n;
    let var = per_run
        .iter()
        .map(|r| (r.cycles as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(CycleStats {
        mean_cycles: mean,
        std_cycles: var.sqrt(),
        per_run,
    })
}
