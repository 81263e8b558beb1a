//! Privacy/utility sweeps: for every (ε, trial) pair, split the data, run the
//! full simulation with the held-out rows as classification queries, and
//! record accuracy and transport cost.

mod cli;
mod report;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::classifier::accuracy;
use crate::data::{load_csv, DataError, OwnerDataset, Schema};
use crate::dp::Epsilon;
use crate::seed::{derive_seed, rng_for, stream};
use crate::sim::{
    simulate, EventLog, LabelProtection, LinkModel, Query, QuerySchedule, ScenarioConfig, SimError,
};

pub use cli::{parse_cli, parse_epsilon_list, Cli};
pub use report::{emit_report, format_report, write_event_logs, REPORT_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub dataset: PathBuf,
    pub owners: usize,
    pub fog_nodes: usize,
    pub epsilons: Vec<Epsilon>,
    pub trials: usize,
    pub base_seed: u64,
    pub split_fraction: f64,
    pub label_protection: LabelProtection,
    pub owner_fog_link: LinkModel,
    pub fog_cloud_link: LinkModel,
    pub query_schedule: QuerySchedule,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
    pub verbose_log: bool,
    /// Run trials on the rayon pool; the report is identical either way.
    pub parallel: bool,
}

impl SweepConfig {
    pub fn new(dataset: impl Into<PathBuf>, epsilons: Vec<Epsilon>, trials: usize) -> Self {
        Self {
            dataset: dataset.into(),
            owners: 3,
            fog_nodes: 2,
            epsilons,
            trials,
            base_seed: 42,
            split_fraction: 0.7,
            label_protection: LabelProtection::Off,
            owner_fog_link: LinkModel::default_access(),
            fog_cloud_link: LinkModel::default_backhaul(),
            query_schedule: QuerySchedule::AfterTraining,
            out: PathBuf::from("report.csv"),
            log: None,
            verbose_log: false,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epsilons.is_empty() {
            return Err(HarnessError::Config("at least one epsilon is required".into()));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.owners == 0 || self.fog_nodes == 0 {
            return Err(HarnessError::Config(
                "owner and fog node counts must be at least 1".into(),
            ));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(HarnessError::Config(format!(
                "split fraction {} is outside (0, 1)",
                self.split_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub bytes_owner_to_fog: u64,
    pub bytes_fog_to_cloud: u64,
    pub sim_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbortedRow {
    pub epsilon: Epsilon,
    pub trial: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct TradeoffReport {
    /// Sorted by (ε, trial).
    pub rows: Vec<TradeoffRow>,
    pub aborted: Vec<AbortedRow>,
    /// Event log per completed row, same order as `rows`; filled only when
    /// the sweep asks for a log file.
    pub logs: Vec<EventLog>,
}

impl TradeoffReport {
    /// Mean accuracy per ε, in ε order.
    pub fn mean_accuracy(&self) -> Vec<(Epsilon, f64)> {
        let mut out: Vec<(Epsilon, f64, usize)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((e, sum, n)) if *e == r.epsilon => {
                    *sum += r.accuracy;
                    *n += 1;
                }
                _ => out.push((r.epsilon, r.accuracy, 1)),
            }
        }
        out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
    }
}

/// Held-out rows of every owner plus the data each owner uploads.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub train: Vec<OwnerDataset>,
    pub queries: Vec<Query>,
    pub truth: Vec<String>,
}

/// Stratified row split of one owner's data. Within each class the rows are
/// shuffled and `round(fraction · count)` of them (at least one, and at most
/// `count − 1` when the class has two or more rows) go to training. Both
/// halves keep the original row order.
pub fn split_owner(
    owner: &OwnerDataset,
    fraction: f64,
    seed: u64,
) -> (OwnerDataset, OwnerDataset) {
    let mut rng = rng_for(seed, &[stream::SPLIT, owner.owner().0 as u64]);
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (r, l) in owner.labels().iter().enumerate() {
        by_class.entry(l.as_str()).or_default().push(r);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for rows in by_class.values_mut() {
        rows.shuffle(&mut rng);
        let n = rows.len();
        let mut k = (fraction * n as f64).round() as usize;
        k = k.max(1);
        if n >= 2 {
            k = k.min(n - 1);
        }
        train.extend_from_slice(&rows[..k]);
        test.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (owner.select_rows(&train), owner.select_rows(&test))
}

/// Splits every owner and turns the held-out rows into queries, ordered by
/// owner then row.
pub fn prepare_trial(owners: &[OwnerDataset], fraction: f64, split_seed: u64) -> TrialData {
    let mut train = Vec::with_capacity(owners.len());
    let mut queries = Vec::new();
    let mut truth = Vec::new();
    for owner in owners {
        let (tr, te) = split_owner(owner, fraction, split_seed);
        for (row, label) in te.features().iter_rows().zip(te.labels()) {
            queries.push(Query {
                owner: owner.owner(),
                features: row.to_vec(),
            });
            truth.push(label.clone());
        }
        train.push(tr);
    }
    TrialData {
        train,
        queries,
        truth,
    }
}

/// Seed of row (ε index, trial).
pub fn row_seed(base_seed: u64, epsilon_index: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[stream::TRIAL, epsilon_index as u64, trial as u64])
}

/// Seed of the train/test split of `trial`, shared by every ε so that budgets
/// are compared on identical splits.
pub fn split_seed(base_seed: u64, trial: usize) -> u64 {
    derive_seed(base_seed, &[stream::SPLIT, trial as u64])
}

struct Loaded {
    schema: Arc<Schema>,
    owners: Vec<OwnerDataset>,
}

fn load(config: &SweepConfig) -> Result<Loaded, HarnessError> {
    let schema = Arc::new(Schema::infer_from_csv(&config.dataset)?);
    let pooled = load_csv(&config.dataset, &schema)?;
    let owners = pooled.distribute(config.owners)?;
    if let Some(empty) = owners.iter().find(|o| o.is_empty()) {
        return Err(HarnessError::Config(format!(
            "{} receives no rows; the dataset has only {} rows",
            empty.owner(),
            pooled.len()
        )));
    }
    Ok(Loaded { schema, owners })
}

fn run_row(
    config: &SweepConfig,
    loaded: &Loaded,
    epsilon: Epsilon,
    trial: usize,
    seed: u64,
) -> Result<(TradeoffRow, EventLog), SimError> {
    let data = prepare_trial(
        &loaded.owners,
        config.split_fraction,
        split_seed(config.base_seed, trial),
    );
    let scenario = ScenarioConfig {
        schema: Arc::clone(&loaded.schema),
        owners: data.train,
        fog_nodes: config.fog_nodes,
        epsilon_total: epsilon,
        label_protection: config.label_protection,
        split_fraction: config.split_fraction,
        seed,
        owner_fog_link: config.owner_fog_link,
        fog_cloud_link: config.fog_cloud_link,
        query_schedule: config.query_schedule,
    };
    let outcome = simulate(&scenario, &data.queries)?;
    let predicted: Vec<&str> = outcome
        .results
        .iter()
        .map(|r| r.predicted_label.as_str())
        .collect();
    let acc = accuracy(&predicted, &data.truth)?;
    Ok((
        TradeoffRow {
            epsilon,
            trial,
            seed,
            accuracy: acc,
            bytes_owner_to_fog: outcome.stats.bytes_owner_to_fog,
            bytes_fog_to_cloud: outcome.stats.bytes_fog_to_cloud,
            sim_time_s: outcome.stats.makespan_s,
        },
        outcome.log,
    ))
}

/// Runs every (ε, trial) row. A failing row is logged and recorded in
/// `aborted`; the sweep carries on.
pub fn run_sweep(config: &SweepConfig) -> Result<TradeoffReport, HarnessError> {
    config.validate()?;
    let loaded = load(config)?;
    let keep_logs = config.log.is_some();
    let jobs: Vec<(usize, usize)> = (0..config.epsilons.len())
        .flat_map(|e| (0..config.trials).map(move |t| (e, t)))
        .collect();
    let run = |&(ei, trial): &(usize, usize)| {
        let seed = row_seed(config.base_seed, ei, trial);
        let epsilon = config.epsilons[ei];
        let result = run_row(config, &loaded, epsilon, trial, seed);
        (ei, trial, seed, epsilon, result)
    };
    let mut outcomes: Vec<_> = if config.parallel {
        jobs.par_iter().map(run).collect()
    } else {
        jobs.iter().map(run).collect()
    };
    outcomes.sort_by(|a, b| {
        a.3.value()
            .total_cmp(&b.3.value())
            .then(a.0.cmp(&b.0))
            .then(a.1.cmp(&b.1))
    });

    let mut report = TradeoffReport::default();
    for (_, trial, seed, epsilon, result) in outcomes {
        match result {
            Ok((row, log)) => {
                report.rows.push(row);
                if keep_logs {
                    report.logs.push(log);
                }
            }
            Err(e) => {
                log::warn!("row epsilon={epsilon} trial={trial} aborted: {e}");
                report.aborted.push(AbortedRow {
                    epsilon,
                    trial,
                    seed,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(report)
}
