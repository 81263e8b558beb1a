//! Deterministic message-passing simulation of the owner, fog and cloud
//! tiers.
//!
//! Owners perturb and split their data locally, fog nodes store and forward
//! column shards, and the cloud trains once every expected shard has arrived.
//! Classification queries follow the same route: perturbed at the owner,
//! split by column across the fog nodes, answered by the cloud through each
//! fog that carried a part.

mod audit;
mod engine;
mod event_log;
mod message;
mod node;

use std::sync::Arc;

use thiserror::Error;

use crate::classifier::ClassifierError;
use crate::data::{DataError, OwnerDataset, OwnerId, Schema};
use crate::dp::{split_budget, split_budget_with_label, DpError, Epsilon, PrivacyBudget};

pub use audit::{audit_fog_exposure, ExposureAudit};
pub use engine::{simulate, transfer_time, Query, SimOutcome, TransportStats};
pub use event_log::{EventLog, IncidentRecord, LogEntry, LogRecord};
pub use message::{
    ClassifyReply, Message, MessageKind, NodeId, Outbound, Payload, QueryPart, ShardPayload,
    HEADER_BYTES, CELL_BYTES,
};
pub use node::{
    owner_prepare_query, owner_prepare_upload, CloudNode, FogNode, Incident, IncidentKind,
    OwnerNode, Reaction,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("topology violation: {src} may not send to {dst}")]
    Topology { src: NodeId, dst: NodeId },
    #[error("simulation did not quiesce; undelivered messages {0:?}")]
    NonQuiescent(Vec<u64>),
    #[error("classification requests {0:?} never received a response")]
    Unanswered(Vec<u64>),
}

/// Point-to-point link: fixed propagation latency plus serialization at the
/// given bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    latency_s: f64,
    bandwidth_bps: f64,
}

impl LinkModel {
    pub fn new(latency_s: f64, bandwidth_bps: f64) -> Result<Self, SimError> {
        if !(latency_s >= 0.0 && latency_s.is_finite()) {
            return Err(SimError::Config(format!("latency {latency_s} s is invalid")));
        }
        if !(bandwidth_bps > 0.0 && bandwidth_bps.is_finite()) {
            return Err(SimError::Config(format!(
                "bandwidth {bandwidth_bps} B/s must be positive"
            )));
        }
        Ok(Self {
            latency_s,
            bandwidth_bps,
        })
    }

    pub fn latency_s(&self) -> f64 {
        self.latency_s
    }

    pub fn bandwidth_bps(&self) -> f64 {
        self.bandwidth_bps
    }

    /// 5 ms, 10 Mbit/s.
    pub fn default_access() -> Self {
        Self {
            latency_s: 0.005,
            bandwidth_bps: 1.25e6,
        }
    }

    /// 20 ms, 100 Mbit/s.
    pub fn default_backhaul() -> Self {
        Self {
            latency_s: 0.020,
            bandwidth_bps: 12.5e6,
        }
    }
}

/// Whether labels are protected with randomized response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelProtection {
    #[default]
    Off,
    RandomizedResponse,
}

/// When owners release their classification queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QuerySchedule {
    /// After the upload phase has fully quiesced.
    #[default]
    AfterTraining,
    /// At time zero, right behind the uploads; the cloud queues them.
    Concurrent,
}

/// One scenario: who holds what, how many fog nodes, how much budget.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub schema: Arc<Schema>,
    /// Data each owner uploads; owner ids must be exactly `1..=n`.
    pub owners: Vec<OwnerDataset>,
    pub fog_nodes: usize,
    pub epsilon_total: Epsilon,
    pub label_protection: LabelProtection,
    pub split_fraction: f64,
    pub seed: u64,
    pub owner_fog_link: LinkModel,
    pub fog_cloud_link: LinkModel,
    pub query_schedule: QuerySchedule,
}

impl ScenarioConfig {
    /// Scenario with default links, 70/30 split and no label protection.
    pub fn new(
        schema: Arc<Schema>,
        owners: Vec<OwnerDataset>,
        fog_nodes: usize,
        epsilon_total: Epsilon,
        seed: u64,
    ) -> Self {
        Self {
            schema,
            owners,
            fog_nodes,
            epsilon_total,
            label_protection: LabelProtection::Off,
            split_fraction: 0.7,
            seed,
            owner_fog_link: LinkModel::default_access(),
            fog_cloud_link: LinkModel::default_backhaul(),
            query_schedule: QuerySchedule::AfterTraining,
        }
    }

    pub fn owner_count(&self) -> usize {
        self.owners.len()
    }

    pub fn feature_count(&self) -> usize {
        self.schema.width()
    }

    /// Fog nodes that hold at least one column.
    pub fn active_fog_count(&self) -> usize {
        self.fog_nodes.min(self.feature_count())
    }

    pub fn budget(&self) -> Result<PrivacyBudget, SimError> {
        let m = self.feature_count();
        Ok(match self.label_protection {
            LabelProtection::Off => split_budget(self.epsilon_total, m)?,
            LabelProtection::RandomizedResponse => {
                split_budget_with_label(self.epsilon_total, m)?
            }
        })
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.owners.is_empty() {
            return Err(SimError::Config("at least one owner is required".into()));
        }
        if self.fog_nodes == 0 {
            return Err(SimError::Config("at least one fog node is required".into()));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(SimError::Config(format!(
                "split fraction {} is outside (0, 1)",
                self.split_fraction
            )));
        }
        if !self.schema.supports_classification() {
            return Err(SimError::Config(
                "classification needs at least two class labels".into(),
            ));
        }
        for (i, o) in self.owners.iter().enumerate() {
            if o.owner() != OwnerId(i as u32 + 1) {
                return Err(SimError::Config(format!(
                    "owner at position {} has id {}, expected DO{}",
                    i,
                    o.owner(),
                    i + 1
                )));
            }
            if **o.schema() != *self.schema {
                return Err(SimError::Config(format!(
                    "{} does not match the scenario schema",
                    o.owner()
                )));
            }
        }
        Ok(())
    }
}
