use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::message::{
    ClassifyReply, Message, MessageKind, NodeId, Outbound, Payload, QueryPart, ShardPayload,
};
use super::{ScenarioConfig, SimError};
use crate::classifier::{ClassificationResult, GaussianNb};
use crate::data::{
    columns_for_fog, reassemble, union_owners, vertical_partition, FogId, LabelShard, OwnerDataset,
    OwnerId, Schema, Shard, LABEL_FOG,
};
use crate::dp::{laplace_inverse_cdf, open_unit, perturb_dataset, PrivacyBudget};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IncidentKind {
    ProtocolViolation,
    AssemblyError,
    DuplicateShard,
    TrainingFailed,
}

/// Something a node refused or could not do. Recorded, never fatal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incident {
    pub kind: IncidentKind,
    pub node: NodeId,
    pub msg_id: Option<u64>,
    pub detail: String,
}

impl Incident {
    fn new(kind: IncidentKind, node: NodeId, msg: &Message, detail: impl Into<String>) -> Self {
        Self {
            kind,
            node,
            msg_id: Some(msg.msg_id),
            detail: detail.into(),
        }
    }
}

/// What a node does in response to one delivered message.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Reaction {
    pub outbound: Vec<Outbound>,
    pub incidents: Vec<Incident>,
}

impl Reaction {
    fn send(out: Vec<Outbound>) -> Self {
        Self {
            outbound: out,
            incidents: Vec::new(),
        }
    }

    fn incident(i: Incident) -> Self {
        Self {
            outbound: Vec::new(),
            incidents: vec![i],
        }
    }
}

/// Perturbs the owner's data locally, splits it by column and addresses one
/// `UPLOAD_SHARD` per nonempty shard plus the `LABEL_SHARD` to fog node 1.
/// Raw values never enter a message.
pub fn owner_prepare_upload(
    owner: &OwnerDataset,
    config: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<Outbound>, SimError> {
    if **owner.schema() != *config.schema {
        return Err(SimError::Config(format!(
            "{} does not match the scenario schema",
            owner.owner()
        )));
    }
    let budget = config.budget()?;
    let (noisy, _noise) = perturb_dataset(owner, &budget, config.schema.bounds(), seed)?;
    let partition = vertical_partition(&noisy, config.fog_nodes)?;
    let src = NodeId::Owner(owner.owner());
    let mut out: Vec<Outbound> = partition
        .feature_shards
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(|s| {
            Outbound::new(
                src,
                NodeId::Fog(s.fog()),
                MessageKind::UploadShard,
                Payload::Shard(ShardPayload::Features(s)),
            )
        })
        .collect();
    out.push(Outbound::new(
        src,
        NodeId::Fog(partition.labels.fog()),
        MessageKind::LabelShard,
        Payload::Shard(ShardPayload::Labels(partition.labels)),
    ));
    Ok(out)
}

/// Clips and perturbs a query vector with the owner's per-feature budget,
/// then splits it across the fog nodes the same way as the training data.
/// One variate is drawn per coordinate.
pub fn owner_prepare_query<R: Rng + ?Sized>(
    owner: OwnerId,
    request_id: u64,
    x: &[f64],
    schema: &Schema,
    budget: &PrivacyBudget,
    fog_nodes: usize,
    rng: &mut R,
) -> Result<Vec<Outbound>, SimError> {
    let m = schema.width();
    if x.len() != m {
        return Err(SimError::Config(format!(
            "query {request_id} has {} values, schema has {m}",
            x.len()
        )));
    }
    let mut noisy = Vec::with_capacity(m);
    for ((&v, b), eps) in x.iter().zip(schema.bounds()).zip(budget.per_feature()) {
        let u = open_unit(rng);
        let clipped = b.clip(v);
        noisy.push(if eps.is_infinite() || b.delta() == 0.0 {
            clipped
        } else {
            clipped + laplace_inverse_cdf(u, b.delta() / eps.value())?
        });
    }
    let src = NodeId::Owner(owner);
    Ok((1..=fog_nodes as u32)
        .map(FogId)
        .filter_map(|fog| {
            let columns = columns_for_fog(fog, m, fog_nodes);
            if columns.is_empty() {
                return None;
            }
            let values = columns.iter().map(|&c| noisy[c]).collect();
            Some(Outbound::new(
                src,
                NodeId::Fog(fog),
                MessageKind::ClassifyRequest,
                Payload::Query(QueryPart {
                    request_id,
                    owner,
                    columns,
                    values,
                }),
            ))
        })
        .collect())
}

/// Owner-side receiver of classification results.
#[derive(Debug, Clone)]
pub struct OwnerNode {
    id: OwnerId,
    results: BTreeMap<u64, ClassificationResult>,
    copies: BTreeMap<u64, usize>,
}

impl OwnerNode {
    pub fn new(id: OwnerId) -> Self {
        Self {
            id,
            results: BTreeMap::new(),
            copies: BTreeMap::new(),
        }
    }

    pub fn results(&self) -> &BTreeMap<u64, ClassificationResult> {
        &self.results
    }

    /// Number of reply copies received per request.
    pub fn copies(&self) -> &BTreeMap<u64, usize> {
        &self.copies
    }

    pub fn handle(&mut self, msg: &Message) -> Reaction {
        let me = NodeId::Owner(self.id);
        let reply = match (&msg.kind, &msg.src, &msg.payload) {
            (MessageKind::ResponseForward, NodeId::Fog(_), Payload::Reply(r)) if r.owner == self.id => r,
            _ => {
                return Reaction::incident(Incident::new(
                    IncidentKind::ProtocolViolation,
                    me,
                    msg,
                    format!("owner cannot accept {} from {}", msg.kind, msg.src),
                ))
            }
        };
        *self.copies.entry(reply.request_id).or_default() += 1;
        let result = ClassificationResult {
            request_id: reply.request_id,
            predicted_label: reply.predicted_label.clone(),
            class_log_scores: reply.class_log_scores.iter().cloned().collect(),
        };
        match self.results.get(&reply.request_id) {
            None => {
                self.results.insert(reply.request_id, result);
                Reaction::default()
            }
            Some(prev) if *prev == result => Reaction::default(),
            Some(_) => Reaction::incident(Incident::new(
                IncidentKind::ProtocolViolation,
                me,
                msg,
                format!("conflicting replies for request {}", reply.request_id),
            )),
        }
    }
}

/// Store-and-forward fog node.
#[derive(Debug, Clone)]
pub struct FogNode {
    id: FogId,
    stored: Vec<ShardPayload>,
    routes: BTreeMap<u64, OwnerId>,
    trained: bool,
}

impl FogNode {
    pub fn new(id: FogId) -> Self {
        Self {
            id,
            stored: Vec::new(),
            routes: BTreeMap::new(),
            trained: false,
        }
    }

    pub fn id(&self) -> FogId {
        self.id
    }

    pub fn stored(&self) -> &[ShardPayload] {
        &self.stored
    }

    pub fn pending_routes(&self) -> &BTreeMap<u64, OwnerId> {
        &self.routes
    }

    pub fn cloud_trained(&self) -> bool {
        self.trained
    }

    /// Shards are stored and forwarded on receipt; queries are forwarded with
    /// the owner's return address; replies go back to that owner.
    pub fn handle(&mut self, msg: &Message) -> Reaction {
        let me = NodeId::Fog(self.id);
        let violation = |detail: String| {
            Reaction::incident(Incident::new(IncidentKind::ProtocolViolation, me, msg, detail))
        };
        if msg.dst != me {
            return violation(format!("message addressed to {}", msg.dst));
        }
        if !msg.is_well_formed() {
            return violation(format!("malformed {} payload", msg.kind));
        }
        match (msg.kind, msg.src) {
            (MessageKind::UploadShard | MessageKind::LabelShard, NodeId::Owner(owner)) => {
                let Payload::Shard(shard) = &msg.payload else {
                    unreachable!("checked by is_well_formed")
                };
                if shard.owners() != BTreeSet::from([owner]) {
                    return violation(format!("shard rows do not belong to sender {owner}"));
                }
                self.stored.push(shard.clone());
                Reaction::send(vec![Outbound::new(
                    me,
                    NodeId::Cloud,
                    MessageKind::ForwardShard,
                    msg.payload.clone(),
                )])
            }
            (MessageKind::ClassifyRequest, NodeId::Owner(owner)) => {
                let Payload::Query(q) = &msg.payload else {
                    unreachable!("checked by is_well_formed")
                };
                if q.owner != owner {
                    return violation(format!("return address {} differs from sender {owner}", q.owner));
                }
                if self.routes.insert(q.request_id, owner).is_some() {
                    return violation(format!("request {} already in flight", q.request_id));
                }
                Reaction::send(vec![Outbound::new(
                    me,
                    NodeId::Cloud,
                    MessageKind::ClassifyForward,
                    msg.payload.clone(),
                )])
            }
            (MessageKind::ClassifyResponse, NodeId::Cloud) => {
                let Payload::Reply(r) = &msg.payload else {
                    unreachable!("checked by is_well_formed")
                };
                match self.routes.get(&r.request_id) {
                    Some(&owner) if owner == r.owner => {
                        self.routes.remove(&r.request_id);
                        Reaction::send(vec![Outbound::new(
                            me,
                            NodeId::Owner(owner),
                            MessageKind::ResponseForward,
                            msg.payload.clone(),
                        )])
                    }
                    _ => violation(format!("no route for request {}", r.request_id)),
                }
            }
            (MessageKind::TrainComplete, NodeId::Cloud) => {
                self.trained = true;
                Reaction::default()
            }
            (kind, src) => violation(format!("{kind} from {src} is not addressable to a fog node")),
        }
    }
}

/// The semi-honest cloud: collects shards, trains once, answers queries.
#[derive(Debug, Clone)]
pub struct CloudNode {
    schema: Arc<Schema>,
    owners: BTreeSet<OwnerId>,
    fog_nodes: usize,
    features: BTreeMap<OwnerId, BTreeMap<FogId, Shard>>,
    labels: BTreeMap<OwnerId, LabelShard>,
    model: Option<GaussianNb>,
    fit_count: usize,
    training_failed: bool,
    parts: BTreeMap<u64, BTreeMap<FogId, QueryPart>>,
    queued: BTreeSet<u64>,
    answered: BTreeSet<u64>,
}

impl CloudNode {
    pub fn new(schema: Arc<Schema>, owners: BTreeSet<OwnerId>, fog_nodes: usize) -> Self {
        Self {
            schema,
            owners,
            fog_nodes,
            features: BTreeMap::new(),
            labels: BTreeMap::new(),
            model: None,
            fit_count: 0,
            training_failed: false,
            parts: BTreeMap::new(),
            queued: BTreeSet::new(),
            answered: BTreeSet::new(),
        }
    }

    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self::new(
            Arc::clone(&config.schema),
            config.owners.iter().map(|o| o.owner()).collect(),
            config.fog_nodes,
        )
    }

    pub fn model(&self) -> Option<&GaussianNb> {
        self.model.as_ref()
    }

    pub fn fit_count(&self) -> usize {
        self.fit_count
    }

    /// Complete queries waiting for the model.
    pub fn queued(&self) -> &BTreeSet<u64> {
        &self.queued
    }

    pub fn answered(&self) -> &BTreeSet<u64> {
        &self.answered
    }

    fn active_fogs(&self) -> impl Iterator<Item = FogId> {
        let active = self.fog_nodes.min(self.schema.width());
        (1..=active as u32).map(FogId)
    }

    fn expected_columns(&self, fog: FogId) -> Vec<usize> {
        columns_for_fog(fog, self.schema.width(), self.fog_nodes)
    }

    pub fn handle(&mut self, msg: &Message) -> Reaction {
        let me = NodeId::Cloud;
        let incident = |kind, detail: String| Reaction::incident(Incident::new(kind, me, msg, detail));
        if msg.dst != me || !msg.is_well_formed() {
            return incident(
                IncidentKind::ProtocolViolation,
                format!("cannot accept {} addressed to {}", msg.kind, msg.dst),
            );
        }
        let NodeId::Fog(fog) = msg.src else {
            return incident(
                IncidentKind::ProtocolViolation,
                format!("{} may not reach the cloud directly", msg.src),
            );
        };
        match (msg.kind, &msg.payload) {
            (MessageKind::ForwardShard, Payload::Shard(shard)) => self.accept_shard(msg, fog, shard),
            (MessageKind::ClassifyForward, Payload::Query(part)) => self.accept_query(msg, fog, part),
            (kind, _) => incident(
                IncidentKind::ProtocolViolation,
                format!("{kind} is not addressable to the cloud"),
            ),
        }
    }

    fn accept_shard(&mut self, msg: &Message, fog: FogId, shard: &ShardPayload) -> Reaction {
        let me = NodeId::Cloud;
        let incident = |kind, detail: String| Reaction::incident(Incident::new(kind, me, msg, detail));
        if self.model.is_some() || self.training_failed {
            return incident(
                IncidentKind::DuplicateShard,
                "training already ran; shard ignored".into(),
            );
        }
        let owners = shard.owners();
        let owner = match owners.iter().next() {
            Some(&o) if owners.len() == 1 && self.owners.contains(&o) => o,
            _ => {
                return incident(
                    IncidentKind::AssemblyError,
                    format!("shard rows belong to unexpected owners {owners:?}"),
                )
            }
        };
        match shard {
            ShardPayload::Features(s) => {
                if s.fog() != fog || s.columns() != self.expected_columns(fog).as_slice() {
                    return incident(
                        IncidentKind::AssemblyError,
                        format!("columns {:?} do not belong on {fog}", s.columns()),
                    );
                }
                let slot = self.features.entry(owner).or_default();
                if slot.contains_key(&fog) {
                    return incident(
                        IncidentKind::DuplicateShard,
                        format!("duplicate shard for {owner} columns {:?}", s.columns()),
                    );
                }
                slot.insert(fog, s.clone());
            }
            ShardPayload::Labels(l) => {
                if fog != LABEL_FOG || l.fog() != LABEL_FOG {
                    return incident(
                        IncidentKind::AssemblyError,
                        format!("label shard arrived via {fog}"),
                    );
                }
                if self.labels.contains_key(&owner) {
                    return incident(
                        IncidentKind::DuplicateShard,
                        format!("duplicate label shard for {owner}"),
                    );
                }
                self.labels.insert(owner, l.clone());
            }
        }
        if self.collection_complete() {
            self.train(msg)
        } else {
            Reaction::default()
        }
    }

    fn collection_complete(&self) -> bool {
        let active: Vec<FogId> = self.active_fogs().collect();
        self.owners.iter().all(|o| {
            self.labels.contains_key(o)
                && self
                    .features
                    .get(o)
                    .is_some_and(|by_fog| active.iter().all(|f| by_fog.contains_key(f)))
        })
    }

    fn train(&mut self, msg: &Message) -> Reaction {
        let me = NodeId::Cloud;
        let mut per_owner = Vec::with_capacity(self.owners.len());
        for owner in &self.owners {
            let shards: Vec<Shard> = self.features[owner].values().cloned().collect();
            match reassemble(&shards, &self.labels[owner], &self.schema) {
                Ok(d) => per_owner.push(d),
                Err(e) => return self.fail_training(msg, format!("{owner}: {e}")),
            }
        }
        let pooled = match union_owners(&per_owner) {
            Ok(p) => p,
            Err(e) => return self.fail_training(msg, e.to_string()),
        };
        match GaussianNb::fit(pooled.features(), pooled.labels(), None) {
            Ok(model) => {
                self.model = Some(model);
                self.fit_count += 1;
            }
            Err(e) => return self.fail_training(msg, e.to_string()),
        }
        let mut out: Vec<Outbound> = (1..=self.fog_nodes as u32)
            .map(|j| {
                Outbound::new(
                    me,
                    NodeId::Fog(FogId(j)),
                    MessageKind::TrainComplete,
                    Payload::TrainComplete,
                )
            })
            .collect();
        let mut incidents = Vec::new();
        for id in std::mem::take(&mut self.queued) {
            match self.answer(id) {
                Ok(replies) => out.extend(replies),
                Err(detail) => incidents.push(Incident::new(
                    IncidentKind::ProtocolViolation,
                    me,
                    msg,
                    detail,
                )),
            }
        }
        Reaction {
            outbound: out,
            incidents,
        }
    }

    fn fail_training(&mut self, msg: &Message, detail: String) -> Reaction {
        self.training_failed = true;
        Reaction::incident(Incident::new(
            IncidentKind::TrainingFailed,
            NodeId::Cloud,
            msg,
            detail,
        ))
    }

    fn accept_query(&mut self, msg: &Message, fog: FogId, part: &QueryPart) -> Reaction {
        let me = NodeId::Cloud;
        let incident = |kind, detail: String| Reaction::incident(Incident::new(kind, me, msg, detail));
        if !self.owners.contains(&part.owner) {
            return incident(
                IncidentKind::ProtocolViolation,
                format!("query from unknown {}", part.owner),
            );
        }
        if self.answered.contains(&part.request_id) {
            return incident(
                IncidentKind::ProtocolViolation,
                format!("request {} already answered", part.request_id),
            );
        }
        if part.columns != self.expected_columns(fog) || part.values.len() != part.columns.len() {
            return incident(
                IncidentKind::AssemblyError,
                format!("query columns {:?} do not belong on {fog}", part.columns),
            );
        }
        let active: Vec<FogId> = self.active_fogs().collect();
        let parts = self.parts.entry(part.request_id).or_default();
        if let Some(existing) = parts.values().next() {
            if existing.owner != part.owner {
                return incident(
                    IncidentKind::ProtocolViolation,
                    format!("request {} claimed by two owners", part.request_id),
                );
            }
        }
        if parts.insert(fog, part.clone()).is_some() {
            return incident(
                IncidentKind::DuplicateShard,
                format!("duplicate part of request {} via {fog}", part.request_id),
            );
        }
        let complete = active.iter().all(|f| parts.contains_key(f));
        if !complete {
            return Reaction::default();
        }
        if self.model.is_none() {
            self.queued.insert(part.request_id);
            return Reaction::default();
        }
        match self.answer(part.request_id) {
            Ok(out) => Reaction::send(out),
            Err(detail) => incident(IncidentKind::ProtocolViolation, detail),
        }
    }

    /// Predicts on a fully assembled query and replies through every fog node
    /// that carried one of its parts.
    fn answer(&mut self, request_id: u64) -> Result<Vec<Outbound>, String> {
        let model = self.model.as_ref().ok_or("model not trained")?;
        let parts = self
            .parts
            .remove(&request_id)
            .ok_or_else(|| format!("request {request_id} has no parts"))?;
        let mut x = vec![0.0; self.schema.width()];
        for part in parts.values() {
            for (&c, &v) in part.columns.iter().zip(&part.values) {
                x[c] = v;
            }
        }
        let prediction = model.predict(&x).map_err(|e| e.to_string())?;
        self.answered.insert(request_id);
        let owner = parts.values().next().map(|p| p.owner).expect("nonempty");
        let reply = ClassifyReply {
            request_id,
            owner,
            predicted_label: prediction.label,
            class_log_scores: prediction.log_scores,
        };
        Ok(parts
            .keys()
            .map(|&fog| {
                Outbound::new(
                    NodeId::Cloud,
                    NodeId::Fog(fog),
                    MessageKind::ClassifyResponse,
                    Payload::Reply(reply.clone()),
                )
            })
            .collect())
    }
}
