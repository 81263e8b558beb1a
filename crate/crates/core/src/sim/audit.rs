use std::collections::{BTreeMap, BTreeSet};

use super::event_log::EventLog;
use super::message::{NodeId, Payload, ShardPayload};
use super::ScenarioConfig;
use crate::data::{FogId, Matrix, OwnerId};

/// What each fog node could see over a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureAudit {
    /// Zero-based feature columns observed by each fog node (every node is
    /// present, possibly with an empty set).
    pub columns_by_fog: BTreeMap<FogId, BTreeSet<usize>>,
    /// `⌈m / s⌉`.
    pub column_bound: usize,
    /// Logged feature cells compared against the owners' clipped data.
    pub cells_compared: usize,
    /// Of those, how many were bit-identical to the pre-noise value.
    pub pre_noise_matches: usize,
    /// Ids of logged messages that link an owner and the cloud directly.
    pub topology_violations: Vec<u64>,
    pub finite_budget: bool,
}

impl ExposureAudit {
    pub fn within_bound(&self) -> bool {
        self.columns_by_fog
            .values()
            .all(|c| c.len() <= self.column_bound)
    }

    /// Exposure bound holds, topology is respected and, under a finite
    /// budget, no logged cell equals its pre-noise value.
    pub fn is_clean(&self) -> bool {
        self.within_bound()
            && self.topology_violations.is_empty()
            && (!self.finite_budget || self.pre_noise_matches == 0)
    }
}

/// Collects the feature columns each fog node handled, checks topology, and
/// compares every logged feature cell with the owner-side ground truth.
pub fn audit_fog_exposure(log: &EventLog, config: &ScenarioConfig) -> ExposureAudit {
    let m = config.feature_count();
    let s = config.fog_nodes.max(1);
    let mut columns_by_fog: BTreeMap<FogId, BTreeSet<usize>> = (1..=s as u32)
        .map(|j| (FogId(j), BTreeSet::new()))
        .collect();
    let truth: BTreeMap<OwnerId, Matrix> = config
        .owners
        .iter()
        .map(|o| (o.owner(), o.clipped_features()))
        .collect();
    let mut audit = ExposureAudit {
        columns_by_fog: BTreeMap::new(),
        column_bound: m.div_ceil(s),
        cells_compared: 0,
        pre_noise_matches: 0,
        topology_violations: Vec::new(),
        finite_budget: !config.epsilon_total.is_infinite(),
    };

    for record in log.records() {
        let msg = &record.message;
        if !msg.src.may_send(msg.dst) {
            audit.topology_violations.push(msg.msg_id);
        }
        let fog = match (msg.src, msg.dst) {
            (NodeId::Fog(f), _) | (_, NodeId::Fog(f)) => Some(f),
            _ => None,
        };
        let columns: &[usize] = match &msg.payload {
            Payload::Shard(ShardPayload::Features(shard)) => {
                for (r, key) in shard.row_keys().iter().enumerate() {
                    let Some(original) = truth.get(&key.owner) else {
                        continue;
                    };
                    if key.row >= original.rows() {
                        continue;
                    }
                    for (ci, &col) in shard.columns().iter().enumerate() {
                        audit.cells_compared += 1;
                        if shard.values().get(r, ci).to_bits() == original.get(key.row, col).to_bits() {
                            audit.pre_noise_matches += 1;
                        }
                    }
                }
                shard.columns()
            }
            Payload::Query(part) => &part.columns,
            _ => &[],
        };
        if let Some(f) = fog {
            columns_by_fog.entry(f).or_default().extend(columns);
        }
    }
    audit.columns_by_fog = columns_by_fog;
    audit
}
