use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use rand_chacha::ChaCha8Rng;

use super::event_log::EventLog;
use super::message::{Message, NodeId, Outbound};
use super::node::{owner_prepare_query, owner_prepare_upload, CloudNode, FogNode, OwnerNode};
use super::{LinkModel, QuerySchedule, ScenarioConfig, SimError};
use crate::classifier::ClassificationResult;
use crate::data::{FogId, OwnerId};
use crate::seed::{derive_seed, rng_for, stream};

/// Upper bound on delivered messages; a healthy scenario needs a few per row.
const MAX_EVENTS: usize = 50_000_000;

/// Latency plus serialization time of one message on an idle link.
pub fn transfer_time(size_bytes: u64, link: &LinkModel) -> f64 {
    link.latency_s() + size_bytes as f64 / link.bandwidth_bps()
}

/// A classification request issued by an owner, in raw (pre-noise) form.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub owner: OwnerId,
    pub features: Vec<f64>,
}

/// Bytes and link time per tier boundary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransportStats {
    pub bytes_owner_to_fog: u64,
    pub bytes_fog_to_owner: u64,
    pub bytes_fog_to_cloud: u64,
    pub bytes_cloud_to_fog: u64,
    pub messages: u64,
    /// Summed per-message transfer time on owner↔fog links.
    pub owner_fog_link_s: f64,
    /// Summed per-message transfer time on fog↔cloud links.
    pub fog_cloud_link_s: f64,
    /// Delivery time of the last message.
    pub makespan_s: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub log: EventLog,
    /// One result per query, in query order; request ids are 1-based query
    /// positions.
    pub results: Vec<ClassificationResult>,
    pub stats: TransportStats,
    pub fit_count: usize,
}

struct Scheduled {
    at: f64,
    msg: Message,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        self.at
            .total_cmp(&other.at)
            .then(self.msg.msg_id.cmp(&other.msg.msg_id))
    }
}

struct Engine<'a> {
    config: &'a ScenarioConfig,
    now: f64,
    next_id: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    link_free_at: HashMap<(NodeId, NodeId), f64>,
    log: EventLog,
    stats: TransportStats,
    owners: BTreeMap<OwnerId, OwnerNode>,
    fogs: Vec<FogNode>,
    cloud: CloudNode,
    delivered: usize,
}

impl<'a> Engine<'a> {
    fn new(config: &'a ScenarioConfig) -> Self {
        Self {
            config,
            now: 0.0,
            next_id: 1,
            queue: BinaryHeap::new(),
            link_free_at: HashMap::new(),
            log: EventLog::default(),
            stats: TransportStats::default(),
            owners: config
                .owners
                .iter()
                .map(|o| (o.owner(), OwnerNode::new(o.owner())))
                .collect(),
            fogs: (1..=config.fog_nodes as u32)
                .map(|j| FogNode::new(FogId(j)))
                .collect(),
            cloud: CloudNode::from_config(config),
            delivered: 0,
        }
    }

    /// Each directed link serializes messages one after another, then adds
    /// its latency, so delivery order on a link equals send order.
    fn send(&mut self, out: Outbound) -> Result<(), SimError> {
        if !out.src.may_send(out.dst) {
            return Err(SimError::Topology {
                src: out.src,
                dst: out.dst,
            });
        }
        let msg = Message::stamp(self.next_id, out);
        self.next_id += 1;
        let link = match (msg.src, msg.dst) {
            (NodeId::Owner(_), _) | (_, NodeId::Owner(_)) => self.config.owner_fog_link,
            _ => self.config.fog_cloud_link,
        };
        let free = self.link_free_at.entry((msg.src, msg.dst)).or_insert(0.0);
        let start = self.now.max(*free);
        let done = start + msg.size_bytes as f64 / link.bandwidth_bps();
        *free = done;
        let at = done + link.latency_s();

        let s = &mut self.stats;
        s.messages += 1;
        let t = transfer_time(msg.size_bytes, &link);
        match (msg.src, msg.dst) {
            (NodeId::Owner(_), _) => {
                s.bytes_owner_to_fog += msg.size_bytes;
                s.owner_fog_link_s += t;
            }
            (_, NodeId::Owner(_)) => {
                s.bytes_fog_to_owner += msg.size_bytes;
                s.owner_fog_link_s += t;
            }
            (_, NodeId::Cloud) => {
                s.bytes_fog_to_cloud += msg.size_bytes;
                s.fog_cloud_link_s += t;
            }
            _ => {
                s.bytes_cloud_to_fog += msg.size_bytes;
                s.fog_cloud_link_s += t;
            }
        }
        s.makespan_s = s.makespan_s.max(at);
        self.log.push_message(self.now, at, msg.clone());
        self.queue.push(Reverse(Scheduled { at, msg }));
        Ok(())
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(Reverse(next)) = self.queue.pop() {
            self.delivered += 1;
            if self.delivered > MAX_EVENTS {
                let mut pending: Vec<u64> = self.queue.iter().map(|s| s.0.msg.msg_id).collect();
                pending.push(next.msg.msg_id);
                pending.sort_unstable();
                return Err(SimError::NonQuiescent(pending));
            }
            self.now = next.at;
            let msg = next.msg;
            let reaction = match msg.dst {
                NodeId::Owner(o) => match self.owners.get_mut(&o) {
                    Some(node) => node.handle(&msg),
                    None => return Err(SimError::Config(format!("message {} to unknown {o}", msg.msg_id))),
                },
                NodeId::Fog(f) => match self.fogs.get_mut(f.0 as usize - 1) {
                    Some(node) => node.handle(&msg),
                    None => return Err(SimError::Config(format!("message {} to unknown {f}", msg.msg_id))),
                },
                NodeId::Cloud => self.cloud.handle(&msg),
            };
            for incident in reaction.incidents {
                log::warn!("t={:.6}s {:?} at {}: {}", self.now, incident.kind, incident.node, incident.detail);
                self.log.push_incident(self.now, incident);
            }
            for out in reaction.outbound {
                self.send(out)?;
            }
        }
        Ok(())
    }
}

/// Runs one scenario end to end: every owner uploads, the cloud trains, and
/// each query travels owner → fog → cloud → fog → owner.
pub fn simulate(config: &ScenarioConfig, queries: &[Query]) -> Result<SimOutcome, SimError> {
    config.validate()?;
    let m = config.feature_count();
    for (i, q) in queries.iter().enumerate() {
        if q.owner.0 == 0 || q.owner.0 as usize > config.owner_count() {
            return Err(SimError::Config(format!("query {} from unknown {}", i + 1, q.owner)));
        }
        if q.features.len() != m {
            return Err(SimError::Config(format!(
                "query {} has {} values, schema has {m}",
                i + 1,
                q.features.len()
            )));
        }
    }
    let budget = config.budget()?;
    let mut engine = Engine::new(config);

    for owner in &config.owners {
        let seed = derive_seed(config.seed, &[stream::FEATURE_NOISE, owner.owner().0 as u64]);
        for out in owner_prepare_upload(owner, config, seed)? {
            engine.send(out)?;
        }
    }

    let mut query_rngs: BTreeMap<OwnerId, ChaCha8Rng> = config
        .owners
        .iter()
        .map(|o| (o.owner(), rng_for(config.seed, &[stream::QUERY_NOISE, o.owner().0 as u64])))
        .collect();
    let mut issue_queries = |engine: &mut Engine| -> Result<(), SimError> {
        for (i, q) in queries.iter().enumerate() {
            let rng = query_rngs.get_mut(&q.owner).expect("validated owner");
            let parts = owner_prepare_query(
                q.owner,
                i as u64 + 1,
                &q.features,
                &config.schema,
                &budget,
                config.fog_nodes,
                rng,
            )?;
            for out in parts {
                engine.send(out)?;
            }
        }
        Ok(())
    };

    match config.query_schedule {
        QuerySchedule::Concurrent => {
            issue_queries(&mut engine)?;
            engine.run()?;
        }
        QuerySchedule::AfterTraining => {
            engine.run()?;
            issue_queries(&mut engine)?;
            engine.run()?;
        }
    }

    let mut results = Vec::with_capacity(queries.len());
    let mut missing = Vec::new();
    for (i, q) in queries.iter().enumerate() {
        let id = i as u64 + 1;
        match engine.owners[&q.owner].results().get(&id) {
            Some(r) => results.push(r.clone()),
            None => missing.push(id),
        }
    }
    if !missing.is_empty() {
        return Err(SimError::Unanswered(missing));
    }
    Ok(SimOutcome {
        fit_count: engine.cloud.fit_count(),
        log: engine.log,
        results,
        stats: engine.stats,
    })
}
