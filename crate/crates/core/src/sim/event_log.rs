use std::io::{self, Write};

use serde::Serialize;

use super::message::{Message, MessageKind, NodeId, Payload};
use super::node::{Incident, IncidentKind};

/// A message, stamped with the time it was sent and the time it arrived.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub sim_time_s: f64,
    pub delivered_s: f64,
    pub message: Message,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidentRecord {
    pub sim_time_s: f64,
    pub incident: Incident,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LogEntry {
    Message(LogRecord),
    Incident(IncidentRecord),
}

/// Audit trail of one simulation, in the order things happened. Message
/// records are taken at send time, so times are nondecreasing and message
/// ids strictly increasing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    entries: Vec<LogEntry>,
}

#[derive(Serialize)]
struct MessageLine<'a> {
    sim_time_s: f64,
    msg_id: u64,
    src: NodeId,
    dst: NodeId,
    kind: MessageKind,
    size_bytes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    payload: Option<&'a Payload>,
}

#[derive(Serialize)]
struct IncidentLine<'a> {
    sim_time_s: f64,
    incident: IncidentKind,
    node: NodeId,
    #[serde(skip_serializing_if = "Option::is_none")]
    msg_id: Option<u64>,
    detail: &'a str,
}

impl EventLog {
    pub fn push_message(&mut self, sim_time_s: f64, delivered_s: f64, message: Message) {
        self.entries.push(LogEntry::Message(LogRecord {
            sim_time_s,
            delivered_s,
            message,
        }));
    }

    pub fn push_incident(&mut self, sim_time_s: f64, incident: Incident) {
        self.entries
            .push(LogEntry::Incident(IncidentRecord { sim_time_s, incident }));
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn records(&self) -> impl Iterator<Item = &LogRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Message(r) => Some(r),
            LogEntry::Incident(_) => None,
        })
    }

    pub fn incidents(&self) -> impl Iterator<Item = &IncidentRecord> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Incident(i) => Some(i),
            LogEntry::Message(_) => None,
        })
    }

    pub fn kinds(&self) -> Vec<MessageKind> {
        self.records().map(|r| r.message.kind).collect()
    }

    /// One JSON object per line. Message payloads are written only when
    /// `verbose` is set.
    pub fn write_jsonl<W: Write>(&self, out: &mut W, verbose: bool) -> io::Result<()> {
        for entry in &self.entries {
            match entry {
                LogEntry::Message(r) => {
                    let m = &r.message;
                    serde_json::to_writer(
                        &mut *out,
                        &MessageLine {
                            sim_time_s: r.sim_time_s,
                            msg_id: m.msg_id,
                            src: m.src,
                            dst: m.dst,
                            kind: m.kind,
                            size_bytes: m.size_bytes,
                            payload: verbose.then_some(&m.payload),
                        },
                    )?;
                }
                LogEntry::Incident(i) => {
                    serde_json::to_writer(
                        &mut *out,
                        &IncidentLine {
                            sim_time_s: i.sim_time_s,
                            incident: i.incident.kind,
                            node: i.incident.node,
                            msg_id: i.incident.msg_id,
                            detail: &i.incident.detail,
                        },
                    )?;
                }
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
