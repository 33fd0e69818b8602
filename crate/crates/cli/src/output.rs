//! Result files. Every float is written with six decimal places.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

use fearh_core::orchestrator::{CycleStats, RunResult, StopReason, SweepRow};

use crate::CliError;

pub fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

/// A float serialized as a JSON number with exactly six decimals.
struct Fixed(f64);

impl Serialize for Fixed {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        RawValue::from_string(fixed(self.0))
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

#[derive(Serialize)]
struct SiloOut {
    silo: usize,
    auroc: Option<Fixed>,
    aupr: Option<Fixed>,
}

#[derive(Serialize)]
struct CycleOut {
    cycle_index: usize,
    mean_validation_auroc: Fixed,
    per_owner_train_loss: Vec<Fixed>,
    excluded_silos: usize,
}

#[derive(Serialize)]
struct ResultOut<'a> {
    mode: &'a str,
    master_seed: u64,
    n_owners: usize,
    gamma: Option<Fixed>,
    model: &'a str,
    layer_sizes: &'a [usize],
    cycles_completed: usize,
    best_cycle: usize,
    stop_reason: StopReason,
    test_auroc_mean: Fixed,
    test_aupr_mean: Fixed,
    per_silo_test_metrics: Vec<SiloOut>,
    cycle_records: Vec<CycleOut>,
    final_params: Vec<Fixed>,
}

/// Run metadata that is not part of [`RunResult`].
pub struct RunMeta<'a> {
    pub n_owners: usize,
    pub gamma: Option<f64>,
    pub model: &'a str,
    pub layer_sizes: &'a [usize],
}

pub fn result_json(result: &RunResult, meta: &RunMeta) -> Result<String, CliError> {
    let out = ResultOut {
        mode: result.mode.name(),
        master_seed: result.master_seed,
        n_owners: meta.n_owners,
        gamma: meta.gamma.map(Fixed),
        model: meta.model,
        layer_sizes: meta.layer_sizes,
        cycles_completed: result.cycles_completed,
        best_cycle: result.best_cycle,
        stop_reason: result.stop_reason,
        test_auroc_mean: Fixed(result.test_auroc_mean),
        test_aupr_mean: Fixed(result.test_aupr_mean),
        per_silo_test_metrics: result
            .per_silo_test_metrics
            .iter()
            .map(|m| SiloOut {
                silo: m.silo,
                auroc: m.auroc.map(Fixed),
                aupr: m.aupr.map(Fixed),
            })
            .collect(),
        cycle_records: result
            .cycle_records
            .iter()
            .map(|c| CycleOut {
                cycle_index: c.cycle_index,
                mean_validation_auroc: Fixed(c.mean_validation_auroc),
                per_owner_train_loss: c.per_owner_train_loss.iter().copied().map(Fixed).collect(),
                excluded_silos: c.excluded_silos,
            })
            .collect(),
        final_params: result.final_params.as_slice().iter().copied().map(Fixed).collect(),
    };
    let mut text = serde_json::to_string_pretty(&out)
        .map_err(|e| CliError::runtime(format!("cannot serialize result: {e}")))?;
    text.push('\n');
    Ok(text)
}

pub fn cycles_csv(result: &RunResult) -> String {
    let mut s = String::from("cycle_index,mean_validation_auroc\n");
    for c in &result.cycle_records {
        s.push_str(&format!("{},{}\n", c.cycle_index, fixed(c.mean_validation_auroc)));
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("gamma,seed,auroc,aupr\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fixed(r.gamma),
            r.seed,
            fixed(r.test_auroc),
            fixed(r.test_aupr)
        ));
    }
    s
}

pub fn stats_csv(stats: &CycleStats) -> String {
    let mut s = String::from("run_index,cycles\n");
    for r in &stats.per_run {
        s.push_str(&format!("{},{}\n", r.run_index, r.cycles));
    }
    s
}

pub fn compare_csv(rows: &[(&str, f64, f64)]) -> String {
    let mut s = String::from("method,auroc,aupr\n");
    for (method, roc, pr) in rows {
        s.push_str(&format!("{method},{},{}\n", fixed(*roc), fixed(*pr)));
    }
    s
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::File::create(&path)
        .and_then(|mut f| f.write_all(contents.as_bytes()))
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}
