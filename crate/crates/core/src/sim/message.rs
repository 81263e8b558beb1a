use std::fmt;

use serde::{Serialize, Serializer};

use crate::data::{FogId, LabelShard, OwnerId, Shard};

/// Fixed per-message overhead.
pub const HEADER_BYTES: u64 = 64;
/// Cost of one numeric cell.
pub const CELL_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Owner(OwnerId),
    Fog(FogId),
    Cloud,
}

impl NodeId {
    /// Owners talk only to fog nodes; fog nodes talk to owners and the cloud.
    pub fn may_send(self, dst: NodeId) -> bool {
        matches!(
            (self, dst),
            (NodeId::Owner(_), NodeId::Fog(_))
                | (NodeId::Fog(_), NodeId::Owner(_))
                | (NodeId::Fog(_), NodeId::Cloud)
                | (NodeId::Cloud, NodeId::Fog(_))
        )
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Owner(o) => o.fmt(f),
            NodeId::Fog(j) => j.fmt(f),
            NodeId::Cloud => f.write_str("CSP"),
        }
    }
}

impl Serialize for NodeId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    UploadShard,
    LabelShard,
    ForwardShard,
    TrainComplete,
    ClassifyRequest,
    ClassifyForward,
    ClassifyResponse,
    ResponseForward,
}

impl MessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MessageKind::UploadShard => "UPLOAD_SHARD",
            MessageKind::LabelShard => "LABEL_SHARD",
            MessageKind::ForwardShard => "FORWARD_SHARD",
            MessageKind::TrainComplete => "TRAIN_COMPLETE",
            MessageKind::ClassifyRequest => "CLASSIFY_REQUEST",
            MessageKind::ClassifyForward => "CLASSIFY_FORWARD",
            MessageKind::ClassifyResponse => "CLASSIFY_RESPONSE",
            MessageKind::ResponseForward => "RESPONSE_FORWARD",
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShardPayload {
    Features(Shard),
    Labels(LabelShard),
}

impl ShardPayload {
    pub fn owners(&self) -> std::collections::BTreeSet<OwnerId> {
        match self {
            ShardPayload::Features(s) => s.owners(),
            ShardPayload::Labels(l) => l.owners(),
        }
    }
}

/// The columns of one perturbed query vector that travel through one fog
/// node. `owner` is the return address.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryPart {
    pub request_id: u64,
    pub owner: OwnerId,
    pub columns: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifyReply {
    pub request_id: u64,
    pub owner: OwnerId,
    pub predicted_label: String,
    pub class_log_scores: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Shard(ShardPayload),
    TrainComplete,
    Query(QueryPart),
    Reply(ClassifyReply),
}

impl Payload {
    pub fn numeric_cells(&self) -> u64 {
        let cells = match self {
            Payload::Shard(ShardPayload::Features(s)) => s.values().rows() * s.values().cols(),
            Payload::Shard(ShardPayload::Labels(l)) => {
                l.labels().len() + l.budgets().values().map(|b| b.cell_count()).sum::<usize>()
            }
            Payload::TrainComplete => 0,
            Payload::Query(q) => q.values.len(),
            Payload::Reply(r) => 1 + r.class_log_scores.len(),
        };
        cells as u64
    }

    fn fits(&self, kind: MessageKind) -> bool {
        use MessageKind::*;
        match self {
            Payload::Shard(ShardPayload::Features(_)) => matches!(kind, UploadShard | ForwardShard),
            Payload::Shard(ShardPayload::Labels(_)) => matches!(kind, LabelShard | ForwardShard),
            Payload::TrainComplete => kind == TrainComplete,
            Payload::Query(_) => matches!(kind, ClassifyRequest | ClassifyForward),
            Payload::Reply(_) => matches!(kind, ClassifyResponse | ResponseForward),
        }
    }
}

/// A message a node wants to send; the engine stamps id, size and time.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
    pub payload: Payload,
}

impl Outbound {
    pub fn new(src: NodeId, dst: NodeId, kind: MessageKind, payload: Payload) -> Self {
        debug_assert!(payload.fits(kind), "{kind} cannot carry {payload:?}");
        Self {
            src,
            dst,
            kind,
            payload,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Message {
    pub msg_id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: MessageKind,
    pub payload: Payload,
    pub size_bytes: u64,
}

impl Message {
    pub fn stamp(msg_id: u64, out: Outbound) -> Self {
        let size_bytes = HEADER_BYTES + CELL_BYTES * out.payload.numeric_cells();
        Self {
            msg_id,
            src: out.src,
            dst: out.dst,
            kind: out.kind,
            payload: out.payload,
            size_bytes,
        }
    }

    /// Whether `payload` is a legal body for `kind`.
    pub fn is_well_formed(&self) -> bool {
        self.payload.fits(self.kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topology() {
        let o = NodeId::Owner(OwnerId(1));
        let f = NodeId::Fog(FogId(2));
        assert!(o.may_send(f) && f.may_send(o) && f.may_send(NodeId::Cloud));
        assert!(NodeId::Cloud.may_send(f));
        assert!(!o.may_send(NodeId::Cloud) && !NodeId::Cloud.may_send(o));
        assert!(!o.may_send(NodeId::Owner(OwnerId(2))));
        assert!(!f.may_send(NodeId::Fog(FogId(1))));
        assert_eq!(NodeId::Cloud.to_string(), "CSP");
        assert_eq!(o.to_string(), "DO1");
        assert_eq!(f.to_string(), "FN2");
    }

    #[test]
    fn size_accounting() {
        let q = Payload::Query(QueryPart {
            request_id: 1,
            owner: OwnerId(1),
            columns: vec![0, 2],
            values: vec![0.1, 0.2],
        });
        let m = Message::stamp(
            7,
            Outbound::new(
                NodeId::Owner(OwnerId(1)),
                NodeId::Fog(FogId(1)),
                MessageKind::ClassifyRequest,
                q,
            ),
        );
        assert_eq!(m.size_bytes, 64 + 16);
        let t = Message::stamp(
            8,
            Outbound::new(
                NodeId::Cloud,
                NodeId::Fog(FogId(1)),
                MessageKind::TrainComplete,
                Payload::TrainComplete,
            ),
        );
        assert_eq!(t.size_bytes, 64);
    }
}
